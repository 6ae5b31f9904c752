"""Finite-difference verification harness for full networks.

Builds a tiny randomly configured network per activation variant, compares
every analytic parameter cogradient against central differences of the
regularized objective, and reports the worst normalized error per
parameter group. The normalized error is |analytic - numeric| divided by
max(|numeric|, 1e-3), so the pass threshold of 1e-5 relative also admits
absolute errors up to 1e-8 where the true gradient vanishes.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .cnum import finite_diff_cogradient
from .kernels import build_dictionary
from .network import ComplexNetwork, NetworkConfig, TrainObjective

__all__ = ["GRADCHECK_VARIANTS", "GradcheckReport", "gradcheck_variant"]

GRADCHECK_VARIANTS = (
    "split_tanh",
    "phase_amplitude",
    "kaf_independent",
    "kaf_real_gaussian",
    "wlkaf_case1",
    "wlkaf_case2",
)

DEFAULT_TOLERANCE = 1e-5
_ABS_FLOOR = 1e-3  # denominator floor: 1e-8 absolute at the 1e-5 threshold


@dataclass
class GradcheckReport:
    variant: str
    seed: int
    worst_by_group: dict[str, float] = field(default_factory=dict)
    tolerance: float = DEFAULT_TOLERANCE

    @property
    def worst(self) -> float:
        return max(self.worst_by_group.values())

    @property
    def passed(self) -> bool:
        return self.worst <= self.tolerance

    def lines(self) -> list[str]:
        status = "PASS" if self.passed else "FAIL"
        out = [f"[{status}] {self.variant} seed={self.seed} worst={self.worst:.3e}"]
        for group, err in sorted(self.worst_by_group.items()):
            mark = "" if err <= self.tolerance else "  <-- exceeds tolerance"
            out.append(f"    {group:<18} {err:.3e}{mark}")
        return out


def gradcheck_variant(
    variant: str,
    seed: int,
    input_dim: int = 3,
    widths: tuple[int, ...] = (4, 4),
    classes: int = 2,
    dict_points: int = 4,
    batch: int = 3,
    reg_weight: float = 1e-3,
    eps: float = 1e-6,
    tolerance: float = DEFAULT_TOLERANCE,
) -> GradcheckReport:
    """Compare analytic and numeric cogradients on a tiny random network."""
    dictionary = build_dictionary(dict_points, (-2.0, 2.0))
    cfg = NetworkConfig(
        input_dim=input_dim,
        hidden_widths=tuple(widths),
        class_count=classes,
        activation=variant,
        seed=seed,
        alpha_init="random",
    )
    model = ComplexNetwork(cfg, dictionary)
    rng = np.random.default_rng(seed + 1)
    x = rng.normal(size=(batch, input_dim)) + 1j * rng.normal(size=(batch, input_dim))
    y = rng.integers(0, classes, size=batch)
    objective = TrainObjective("cross_entropy", reg_weight)

    _, grads = model.loss_and_grads(x, y, objective)
    report = GradcheckReport(variant=variant, seed=seed, tolerance=tolerance)
    for name, arr in model.parameters().items():
        original = arr.copy()

        def f(values, _arr=arr):
            _arr[...] = values
            return model.objective(x, y, objective)

        numeric = finite_diff_cogradient(f, original, eps=eps)
        arr[...] = original
        err = float(np.max(
            np.abs(grads[name] - numeric) / np.maximum(np.abs(numeric), _ABS_FLOOR)
        ))
        group = name.split(".", 1)[1]
        report.worst_by_group[group] = max(report.worst_by_group.get(group, 0.0), err)
    return report
