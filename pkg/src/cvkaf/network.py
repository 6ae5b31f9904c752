"""Network assembly, output layer, losses, and the regularized objective.

A complex network is a chain of affine layers with a shared hidden
activation descriptor; the final affine emits raw complex logits which a
softmax over squared magnitudes turns into class probabilities. The real
baseline is a conventional MLP fed the concatenated real and imaginary
parts of the input.

Both network classes expose the same training surface: ``parameters()``
returning an ordered name->array dict (arrays mutated in place by the
optimizer), ``loss_and_grads`` for one objective evaluation with full
cogradients, and ``predict_proba``. Forward caches are tied to a parameter
version counter so a backward pass against a mutated network fails loudly
instead of silently using stale intermediates.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from . import activations as act
from . import container
from .cnum import backward_affine, complex_affine, hermitian_norm_sq
from .errors import (
    CacheError,
    DimensionError,
    NumericError,
    ParameterError,
    StateError,
)
from .kernels import Dictionary, build_dictionary

__all__ = [
    "NetworkConfig",
    "TrainObjective",
    "ComplexNetwork",
    "RealBaselineNetwork",
    "complex_softmax",
    "squared_loss",
    "cross_entropy",
    "build_model",
    "save_model",
    "load_model",
    "MODEL_VARIANTS",
]

_MODEL_MAGIC = b"CVKM"
_MODEL_VERSION = 1

_P_FLOOR = 1e-12  # probability clamp inside the cross-entropy


def complex_softmax(h) -> np.ndarray:
    """Class probabilities proportional to ``exp(|h_n|^2)``.

    The squared magnitudes are shifted by their maximum before
    exponentiation; the shift cancels in the normalization, so the output
    is invariant to it (and to any per-component phase rotation of ``h``).
    """
    h = np.asarray(h, dtype=np.complex128)
    s = h.real**2 + h.imag**2
    return softmax_from_squared_magnitudes(s)


def softmax_from_squared_magnitudes(s) -> np.ndarray:
    s = np.asarray(s, dtype=np.float64)
    e = np.exp(s - s.max(axis=-1, keepdims=True))
    return e / e.sum(axis=-1, keepdims=True)


def squared_loss(y, y_hat) -> float:
    """Hermitian quadratic loss ``(y - y_hat)^H (y - y_hat)``."""
    y = np.asarray(y, dtype=np.complex128)
    y_hat = np.asarray(y_hat, dtype=np.complex128)
    if y.shape != y_hat.shape:
        raise DimensionError(f"length mismatch: {y.shape} vs {y_hat.shape}")
    r = y - y_hat
    return float(np.sum(r.real**2 + r.imag**2))


def cross_entropy(p, label: int) -> float:
    """Negative log probability of the true class, clamped below 1e-12."""
    p = np.asarray(p, dtype=np.float64)
    if abs(float(p.sum()) - 1.0) > 1e-9:
        raise ParameterError(f"probabilities sum to {p.sum():.12f}, not 1")
    if not 0 <= int(label) < p.shape[-1]:
        raise IndexError(f"label {label} out of range for {p.shape[-1]} classes")
    return float(-np.log(max(float(p[int(label)]), _P_FLOOR)))


@dataclass(frozen=True)
class TrainObjective:
    """Loss choice plus the weight of the parameter-norm regularizer."""

    loss: str = "cross_entropy"  # or "squared_error"
    reg_weight: float = 0.0

    def __post_init__(self):
        if self.loss not in ("cross_entropy", "squared_error"):
            raise ParameterError(f"unknown loss {self.loss!r}")
        if self.reg_weight < 0:
            raise ParameterError("regularization weight must be nonnegative")


@dataclass(frozen=True)
class NetworkConfig:
    input_dim: int
    hidden_widths: tuple[int, ...] = (100, 100, 100)
    class_count: int = 10
    activation: str = "kaf_independent"
    seed: int = 0
    alpha_init: str = "identity"
    ridge: float = 1e-4

    def __post_init__(self):
        if self.input_dim < 1 or self.class_count < 1:
            raise ParameterError("input_dim and class_count must be positive")
        if any(w < 1 for w in self.hidden_widths):
            raise ParameterError(f"hidden widths must be positive, got {self.hidden_widths}")


class ComplexNetwork:
    """Feedforward complex network with a shared hidden activation."""

    def __init__(self, config: NetworkConfig, dictionary: Optional[Dictionary] = None):
        self.config = config
        self.activation = act.ACTIVATION_VARIANTS[config.activation]()
        needs_dict = not isinstance(
            self.activation, (act.SplitActivation, act.PhaseAmplitudeActivation)
        )
        if needs_dict and dictionary is None:
            dictionary = build_dictionary(8, (-2.0, 2.0))
        self.dictionary = dictionary
        self._version = 0
        rng = np.random.default_rng(config.seed)
        widths = [config.input_dim, *config.hidden_widths, config.class_count]
        self._params: dict[str, np.ndarray] = {}
        self.n_layers = len(widths) - 1
        for i in range(self.n_layers):
            fan_in, fan_out = widths[i], widths[i + 1]
            s = np.sqrt(1.0 / (2.0 * fan_in))
            w = rng.normal(0.0, s, (fan_out, fan_in)) + 1j * rng.normal(0.0, s, (fan_out, fan_in))
            self._params[f"layer{i}.W"] = w.astype(np.complex128)
            self._params[f"layer{i}.b"] = np.zeros(fan_out, dtype=np.complex128)
            if i < self.n_layers - 1:  # hidden layer: activation parameters
                for pname, arr in self.activation.init_params(
                    fan_out, self.dictionary, rng,
                    alpha_init=config.alpha_init, ridge=config.ridge,
                ).items():
                    self._params[f"layer{i}.{pname}"] = arr

    # -- parameter plumbing -------------------------------------------------

    def parameters(self) -> dict[str, np.ndarray]:
        """Live (mutable) name->array view of every trainable parameter."""
        return self._params

    @property
    def version(self) -> int:
        return self._version

    def bump_version(self) -> None:
        """Invalidate outstanding forward caches after in-place updates."""
        self._version += 1

    def set_parameters(self, values: dict[str, np.ndarray]) -> None:
        if set(values) != set(self._params):
            raise ParameterError("parameter name sets differ")
        for name, arr in values.items():
            if arr.shape != self._params[name].shape:
                raise DimensionError(f"shape mismatch for {name}")
            self._params[name][...] = arr
        self.bump_version()

    def snapshot(self) -> dict[str, np.ndarray]:
        return {name: arr.copy() for name, arr in self._params.items()}

    # -- forward / backward -------------------------------------------------

    def forward(self, x: np.ndarray) -> tuple[np.ndarray, dict]:
        """Map inputs to raw complex logits; cache every intermediate."""
        x = np.asarray(x, dtype=np.complex128)
        squeeze = x.ndim == 1
        if squeeze:
            x = x[None, :]
        if x.shape[1] != self.config.input_dim:
            raise DimensionError(
                f"input has {x.shape[1]} features, expected {self.config.input_dim}"
            )
        layers = []
        h = x
        for i in range(self.n_layers):
            w = self._params[f"layer{i}.W"]
            b = self._params[f"layer{i}.b"]
            pre = complex_affine(w, h, b)
            entry = {"x": h, "pre": pre}
            if i < self.n_layers - 1:
                act_params = self._layer_act_params(i)
                out, acache = self.activation.forward(pre, act_params, self.dictionary)
                entry["act_cache"] = acache
                h = out
            else:
                h = pre
            layers.append(entry)
        cache = {"version": self._version, "layers": layers}
        logits = h[0] if squeeze else h
        return logits, cache

    def backward(self, cograd_logits: np.ndarray, cache: dict) -> dict[str, np.ndarray]:
        """Cogradients of a real objective for every trainable parameter."""
        if cache.get("version") != self._version:
            raise StateError("forward cache is stale: parameters changed since forward()")
        g = np.asarray(cograd_logits, dtype=np.complex128)
        if g.ndim == 1:
            g = g[None, :]
        grads: dict[str, np.ndarray] = {}
        for i in reversed(range(self.n_layers)):
            entry = cache["layers"][i]
            if i < self.n_layers - 1:
                act_params = self._layer_act_params(i)
                g, act_grads = self.activation.backward(
                    g, entry["act_cache"], act_params, self.dictionary
                )
                for pname, garr in act_grads.items():
                    grads[f"layer{i}.{pname}"] = garr
            w = self._params[f"layer{i}.W"]
            g_w, g_x, g_b = backward_affine(g, w, entry["x"])
            grads[f"layer{i}.W"] = g_w
            grads[f"layer{i}.b"] = g_b
            g = g_x
        return grads

    def _layer_act_params(self, i: int) -> dict[str, np.ndarray]:
        prefix = f"layer{i}."
        skip = (prefix + "W", prefix + "b")
        return {
            name[len(prefix):]: arr
            for name, arr in self._params.items()
            if name.startswith(prefix) and name not in skip
        }

    # -- objectives ----------------------------------------------------------

    def predict_proba(self, x: np.ndarray) -> np.ndarray:
        logits, _ = self.forward(x)
        return complex_softmax(logits)

    def predict(self, x: np.ndarray) -> np.ndarray:
        return np.argmax(self.predict_proba(x), axis=-1)

    def objective(self, x: np.ndarray, labels, objective: TrainObjective) -> float:
        """Mean data loss over the batch plus the weighted parameter norm."""
        logits, _ = self.forward(np.atleast_2d(np.asarray(x, dtype=np.complex128)))
        value = self._data_loss(logits, labels, objective)[0] + self._reg_value(objective)
        self._check_finite(value)
        return value

    def loss_and_grads(
        self, x: np.ndarray, labels, objective: TrainObjective
    ) -> tuple[float, dict[str, np.ndarray]]:
        x = np.atleast_2d(np.asarray(x, dtype=np.complex128))
        logits, cache = self.forward(x)
        data_loss, g_logits = self._data_loss(logits, labels, objective)
        value = data_loss + self._reg_value(objective)
        self._check_finite(value)
        grads = self.backward(g_logits, cache)
        c = objective.reg_weight
        if c > 0:
            for name, arr in self._params.items():
                grads[name] = grads[name] + 2.0 * c * arr
        return value, grads

    def _data_loss(self, logits, labels, objective: TrainObjective):
        n = logits.shape[0]
        if objective.loss == "cross_entropy":
            labels = np.asarray(labels, dtype=np.intp)
            if np.any(labels < 0) or np.any(labels >= self.config.class_count):
                raise IndexError("label out of range")
            p = complex_softmax(logits)
            picked = np.clip(p[np.arange(n), labels], _P_FLOOR, None)
            loss = float(-np.log(picked).mean())
            onehot = np.zeros_like(p)
            onehot[np.arange(n), labels] = 1.0
            g_logits = 2.0 * (p - onehot) * logits / n
            return loss, g_logits
        # squared error against one-hot complex targets
        y = np.zeros_like(logits)
        y[np.arange(n), np.asarray(labels, dtype=np.intp)] = 1.0
        r = logits - y
        loss = float(np.sum(r.real**2 + r.imag**2) / n)
        return loss, 2.0 * r / n

    def _reg_value(self, objective: TrainObjective) -> float:
        c = objective.reg_weight
        if c == 0:
            return 0.0
        return c * sum(hermitian_norm_sq(arr) for arr in self._params.values())

    def _check_finite(self, value: float) -> None:
        if np.isfinite(value):
            return
        bad = [
            name for name, arr in self._params.items()
            if not np.all(np.isfinite(arr.view(np.float64) if np.iscomplexobj(arr) else arr))
        ]
        raise NumericError(
            f"objective is {value!r}; parameters with non-finite entries: {bad or 'none'}"
        )


class RealBaselineNetwork:
    """Conventional real MLP fed [Re(x); Im(x)], ReLU hiddens, softmax output."""

    def __init__(self, config: NetworkConfig):
        self.config = config
        self._version = 0
        rng = np.random.default_rng(config.seed)
        widths = [2 * config.input_dim, *config.hidden_widths, config.class_count]
        self._params: dict[str, np.ndarray] = {}
        self.n_layers = len(widths) - 1
        for i in range(self.n_layers):
            fan_in, fan_out = widths[i], widths[i + 1]
            s = np.sqrt(2.0 / fan_in)
            self._params[f"layer{i}.W"] = rng.normal(0.0, s, (fan_out, fan_in))
            self._params[f"layer{i}.b"] = np.zeros(fan_out)

    parameters = ComplexNetwork.parameters
    snapshot = ComplexNetwork.snapshot
    set_parameters = ComplexNetwork.set_parameters
    bump_version = ComplexNetwork.bump_version
    version = ComplexNetwork.version

    @staticmethod
    def split_input(x: np.ndarray) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=np.complex128))
        return np.hstack([x.real, x.imag])

    def forward(self, x: np.ndarray) -> tuple[np.ndarray, dict]:
        h = self.split_input(x)
        pres = []
        acts = [h]
        for i in range(self.n_layers):
            z = h @ self._params[f"layer{i}.W"].T + self._params[f"layer{i}.b"]
            pres.append(z)
            h = np.maximum(z, 0.0) if i < self.n_layers - 1 else z
            acts.append(h)
        return h, {"version": self._version, "pres": pres, "acts": acts}

    def predict_proba(self, x: np.ndarray) -> np.ndarray:
        logits, _ = self.forward(x)
        e = np.exp(logits - logits.max(axis=-1, keepdims=True))
        return e / e.sum(axis=-1, keepdims=True)

    def predict(self, x: np.ndarray) -> np.ndarray:
        return np.argmax(self.predict_proba(x), axis=-1)

    def objective(self, x, labels, objective: TrainObjective) -> float:
        p = self.predict_proba(x)
        n = p.shape[0]
        labels = np.asarray(labels, dtype=np.intp)
        loss = float(-np.log(np.clip(p[np.arange(n), labels], _P_FLOOR, None)).mean())
        c = objective.reg_weight
        if c > 0:
            loss += c * sum(float(np.sum(a**2)) for a in self._params.values())
        return loss

    def loss_and_grads(self, x, labels, objective: TrainObjective):
        logits, cache = self.forward(x)
        if cache["version"] != self._version:
            raise StateError("stale cache")
        n = logits.shape[0]
        labels = np.asarray(labels, dtype=np.intp)
        e = np.exp(logits - logits.max(axis=-1, keepdims=True))
        p = e / e.sum(axis=-1, keepdims=True)
        loss = float(-np.log(np.clip(p[np.arange(n), labels], _P_FLOOR, None)).mean())
        delta = p.copy()
        delta[np.arange(n), labels] -= 1.0
        delta /= n
        grads: dict[str, np.ndarray] = {}
        g = delta
        for i in reversed(range(self.n_layers)):
            a_prev = cache["acts"][i]
            grads[f"layer{i}.W"] = g.T @ a_prev
            grads[f"layer{i}.b"] = g.sum(axis=0)
            if i > 0:
                g = (g @ self._params[f"layer{i}.W"]) * (cache["pres"][i - 1] > 0)
        c = objective.reg_weight
        if c > 0:
            loss += c * sum(float(np.sum(a**2)) for a in self._params.values())
            for name, arr in self._params.items():
                grads[name] = grads[name] + 2.0 * c * arr
        if not np.isfinite(loss):
            raise NumericError(f"objective is {loss!r}")
        return loss, grads


MODEL_VARIANTS = ("real_nn", "kaf_independent", "wlkaf_case1", "wlkaf_case2")


def build_model(
    variant: str,
    input_dim: int,
    class_count: int,
    seed: int,
    hidden_widths: tuple[int, ...] = (100, 100, 100),
    dictionary: Optional[Dictionary] = None,
    alpha_init: str = "identity",
):
    """Construct one of the benchmark model variants."""
    if variant == "real_nn":
        cfg = NetworkConfig(input_dim, tuple(hidden_widths), class_count,
                            activation="split_identity", seed=seed)
        return RealBaselineNetwork(cfg)
    if variant not in act.ACTIVATION_VARIANTS:
        raise ParameterError(f"unknown model variant {variant!r}; "
                             f"choose from {('real_nn', *act.ACTIVATION_VARIANTS)}")
    cfg = NetworkConfig(input_dim, tuple(hidden_widths), class_count,
                        activation=variant, seed=seed, alpha_init=alpha_init)
    return ComplexNetwork(cfg, dictionary)


def save_model(path, model) -> None:
    """Write a model to the versioned binary container (timestamp-free)."""
    if isinstance(model, RealBaselineNetwork):
        meta = {"kind": "real_baseline"}
        dictionary = None
    else:
        meta = {"kind": "complex", "activation": model.activation.spec_dict()}
        dictionary = model.dictionary
    cfg = model.config
    meta["config"] = {
        "input_dim": cfg.input_dim,
        "hidden_widths": list(cfg.hidden_widths),
        "class_count": cfg.class_count,
        "activation": cfg.activation,
        "seed": cfg.seed,
        "alpha_init": cfg.alpha_init,
        "ridge": cfg.ridge,
    }
    if dictionary is not None:
        meta["dictionary"] = {
            "points_per_axis": dictionary.points_per_axis,
            "axis_range": list(dictionary.axis_range),
        }
    container.write_container(path, _MODEL_MAGIC, _MODEL_VERSION, meta, model.parameters())


def load_model(path):
    """Reconstruct a model saved by :func:`save_model`, bit-exact."""
    meta, arrays = container.read_container(path, _MODEL_MAGIC, _MODEL_VERSION)
    c = meta["config"]
    cfg = NetworkConfig(
        input_dim=c["input_dim"],
        hidden_widths=tuple(c["hidden_widths"]),
        class_count=c["class_count"],
        activation=c["activation"],
        seed=c["seed"],
        alpha_init=c["alpha_init"],
        ridge=c["ridge"],
    )
    if meta["kind"] == "real_baseline":
        model = RealBaselineNetwork(cfg)
    elif meta["kind"] == "complex":
        dmeta = meta.get("dictionary")
        dictionary = (
            build_dictionary(dmeta["points_per_axis"], tuple(dmeta["axis_range"]))
            if dmeta else None
        )
        model = ComplexNetwork(cfg, dictionary)
    else:
        raise CacheError(f"unknown model kind {meta.get('kind')!r}")
    model.set_parameters(arrays)
    return model
