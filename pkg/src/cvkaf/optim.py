"""Adagrad over complex parameters, mini-batch training, and C grid search.

Each complex parameter is treated as two real components with independent
squared-gradient accumulators; the per-component update is

    w -= lr * g / (sqrt(acc) + eps)

which keeps the effective step bounded by ``lr`` once a nonzero gradient
has been accumulated. Training samples mini-batches without replacement
from a seeded generator, evaluates validation accuracy on a fixed cadence,
and returns the parameters of the best-validation checkpoint (early
stopping on strict improvement).
"""

from __future__ import annotations

import csv
import time
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import NumericError, ParameterError
from .network import TrainObjective

__all__ = [
    "Adagrad",
    "TrainConfig",
    "TraceRecord",
    "TrainTrace",
    "train",
    "evaluate",
    "grid_search_c",
    "GridSearchResult",
    "write_trace_csv",
    "read_trace_csv",
]

TRACE_COLUMNS = ("iteration", "train_loss", "val_accuracy", "elapsed_seconds")


class Adagrad:
    """Component-wise Adagrad over a name->array parameter dict."""

    def __init__(self, params: dict[str, np.ndarray], lr: float = 0.01, epsilon: float = 1e-8):
        if lr <= 0 or epsilon <= 0:
            raise ParameterError("learning rate and epsilon must be positive")
        self.lr = lr
        self.epsilon = epsilon
        self.acc: dict[str, np.ndarray] = {}
        for name, arr in params.items():
            if np.iscomplexobj(arr):
                self.acc[name] = np.zeros(arr.shape + (2,), dtype=np.float64)
            else:
                self.acc[name] = np.zeros(arr.shape, dtype=np.float64)

    def step(self, params: dict[str, np.ndarray], grads: dict[str, np.ndarray]) -> None:
        """Accumulate squared gradients and update parameters in place.

        A non-finite gradient aborts the step before any state is touched.
        """
        for name, g in grads.items():
            finite = np.all(np.isfinite(g.view(np.float64))) if np.iscomplexobj(g) \
                else np.all(np.isfinite(g))
            if not finite:
                raise NumericError(f"non-finite gradient for {name!r}; step aborted")
        for name, arr in params.items():
            g = grads[name]
            acc = self.acc[name]
            if np.iscomplexobj(arr):
                acc[..., 0] += g.real**2
                acc[..., 1] += g.imag**2
                arr -= self.lr * (
                    g.real / (np.sqrt(acc[..., 0]) + self.epsilon)
                    + 1j * (g.imag / (np.sqrt(acc[..., 1]) + self.epsilon))
                )
            else:
                acc += g**2
                arr -= self.lr * g / (np.sqrt(acc) + self.epsilon)


@dataclass(frozen=True)
class TrainConfig:
    batch_size: int = 40
    patience: int = 1000
    eval_every: int = 50
    max_iterations: int = 20000
    lr: float = 0.01
    epsilon: float = 1e-8
    c_grid: tuple[float, ...] = (0.0, 1e-5, 1e-4, 1e-3)
    seed: int = 0

    def __post_init__(self):
        if self.batch_size < 1 or self.eval_every < 1 or self.max_iterations < 1:
            raise ParameterError("batch_size, eval_every and max_iterations must be positive")
        if self.patience < 0:
            raise ParameterError("patience must be nonnegative")
        if any(c < 0 for c in self.c_grid):
            raise ParameterError("regularization grid entries must be nonnegative")


@dataclass(frozen=True)
class TraceRecord:
    iteration: int
    train_loss: float
    val_accuracy: float
    elapsed_seconds: float


@dataclass
class TrainTrace:
    records: list[TraceRecord] = field(default_factory=list)
    best_iteration: int = 0
    best_val_accuracy: float = float("nan")
    total_iterations: int = 0
    stop_reason: str = ""
    eval_every: int = 0


def evaluate(model, x: np.ndarray, labels: np.ndarray, chunk: int = 1024) -> float:
    """Fraction of samples whose argmax class probability hits the label.

    Ties resolve to the lowest class index (argmax semantics).
    """
    labels = np.asarray(labels)
    if labels.shape[0] == 0:
        raise ParameterError("cannot evaluate an empty split")
    hits = 0
    for lo in range(0, labels.shape[0], chunk):
        pred = model.predict(x[lo:lo + chunk])
        hits += int(np.sum(pred == labels[lo:lo + chunk]))
    return hits / labels.shape[0]


def train(
    model,
    train_xy: tuple[np.ndarray, np.ndarray],
    val_xy: tuple[np.ndarray, np.ndarray],
    config: TrainConfig,
    objective: TrainObjective,
    val_metric: Optional[Callable] = None,
) -> TrainTrace:
    """Mini-batch Adagrad with early stopping on validation accuracy.

    The model is left holding the parameters of the best-validation
    checkpoint, not the last iterate. ``val_metric(model, x, y)`` defaults
    to :func:`evaluate`; tests may inject a synthetic metric.
    """
    x_train, y_train = train_xy
    x_val, y_val = val_xy
    n = x_train.shape[0]
    if n == 0 or x_val.shape[0] == 0:
        raise ParameterError("train and validation splits must be nonempty")
    if config.batch_size > n:
        raise ParameterError(f"batch_size {config.batch_size} exceeds training set size {n}")
    metric = val_metric or evaluate
    rng = np.random.default_rng(config.seed)
    params = model.parameters()
    opt = Adagrad(params, lr=config.lr, epsilon=config.epsilon)
    trace = TrainTrace(eval_every=config.eval_every)
    best = model.snapshot()
    best_acc = metric(model, x_val, y_val)
    best_it = 0
    t0 = time.perf_counter()
    stop_reason = "max_iterations"
    it = 0
    for it in range(1, config.max_iterations + 1):
        idx = rng.choice(n, size=config.batch_size, replace=False)
        loss, grads = model.loss_and_grads(x_train[idx], y_train[idx], objective)
        opt.step(params, grads)
        model.bump_version()
        if it % config.eval_every == 0:
            acc = metric(model, x_val, y_val)
            trace.records.append(
                TraceRecord(it, loss, acc, time.perf_counter() - t0)
            )
            if acc > best_acc:
                best_acc, best_it = acc, it
                best = model.snapshot()
            if it - best_it >= config.patience:
                stop_reason = "patience"
                break
    trace.best_iteration = best_it
    trace.best_val_accuracy = best_acc
    trace.total_iterations = it
    trace.stop_reason = stop_reason
    model.set_parameters(best)
    return trace


@dataclass
class GridSearchResult:
    best_c: float
    val_accuracies: dict[float, float]
    best_trace: TrainTrace
    traces: dict[float, TrainTrace]


def grid_search_c(
    model_factory: Callable[[], object],
    train_xy,
    val_xy,
    config: TrainConfig,
    loss: str = "cross_entropy",
) -> tuple[object, GridSearchResult]:
    """Train one model per regularization weight; keep the best checkpoint.

    Ties in validation accuracy go to the smaller C. The winning model is
    returned as-trained (no retraining), ready for test evaluation.
    """
    if not config.c_grid:
        raise ParameterError("c_grid must be nonempty")
    accs: dict[float, TrainTrace] = {}
    best_model, best_c, best_acc, best_trace = None, None, -1.0, None
    for c in sorted(config.c_grid):
        model = model_factory()
        trace = train(model, train_xy, val_xy, config, TrainObjective(loss, c))
        accs[c] = trace
        if trace.best_val_accuracy > best_acc:
            best_model, best_c, best_acc, best_trace = model, c, trace.best_val_accuracy, trace
    result = GridSearchResult(
        best_c=best_c,
        val_accuracies={c: t.best_val_accuracy for c, t in accs.items()},
        best_trace=best_trace,
        traces=accs,
    )
    return best_model, result


def write_trace_csv(trace: TrainTrace, path) -> None:
    """Write the mandated four-column CSV.

    All columns except elapsed_seconds are deterministic under a fixed
    seed; elapsed_seconds is wall-clock and is the one timestamp-like field
    determinism comparisons are expected to mask.
    """
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(TRACE_COLUMNS)
        for r in trace.records:
            writer.writerow([r.iteration, repr(float(r.train_loss)),
                             repr(float(r.val_accuracy)), f"{r.elapsed_seconds:.6f}"])


def read_trace_csv(path) -> TrainTrace:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or tuple(header) != TRACE_COLUMNS:
            raise ParameterError(f"{path} is not a trace CSV (header {header})")
        records = [
            TraceRecord(int(row[0]), float(row[1]), float(row[2]), float(row[3]))
            for row in reader
        ]
    trace = TrainTrace(records=records)
    if records:
        best = max(range(len(records)), key=lambda i: (records[i].val_accuracy, -i))
        trace.best_iteration = records[best].iteration
        trace.best_val_accuracy = records[best].val_accuracy
        trace.total_iterations = records[-1].iteration
        iters = [r.iteration for r in records]
        steps = {b - a for a, b in zip(iters, iters[1:])}
        trace.eval_every = steps.pop() if len(steps) == 1 else (iters[0] if iters else 0)
    return trace
