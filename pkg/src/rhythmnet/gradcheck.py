"""Finite-difference verification harness for hand-derived gradients.

A layer under test is any callable ``fn(params, x) -> (y, backward)`` where
``backward(output_grad) -> LayerGrads``. The harness projects the output onto
a fixed random direction to get a scalar loss, compares the analytic gradient
of that loss against central differences computed in float64, and reports the
worst relative error per parameter. It reports, it never throws.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import rng as streams

REL_FLOOR = 1e-8


@dataclass
class GradCheckReport:
    """Per-parameter max relative error; 'input' keys the input gradient."""

    per_param: dict[str, float] = field(default_factory=dict)

    @property
    def max_rel_err(self) -> float:
        return max(self.per_param.values()) if self.per_param else 0.0

    def __str__(self) -> str:
        lines = [f"  {name:30s} {err:.3e}" for name, err in self.per_param.items()]
        return "gradient check (max rel err {:.3e})\n{}".format(
            self.max_rel_err, "\n".join(lines))


def _rel_err(analytic: np.ndarray, numeric: np.ndarray) -> float:
    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), REL_FLOOR)
    return float(np.max(np.abs(analytic - numeric) / denom))


def grad_check(fn: Callable, params: dict[str, np.ndarray], x: np.ndarray,
               eps: float = 1e-3, seed: int = 0) -> GradCheckReport:
    """Compare fn's analytic gradients against central differences.

    Shapes should stay small (a few thousand scalars): the numeric side runs
    two forward passes per scalar.
    """
    params64 = {k: v.astype(np.float64) for k, v in params.items()}
    x64 = x.astype(np.float64)
    y, backward = fn(params64, x64)
    proj = streams.derive(seed, "gradcheck-projection").standard_normal(y.shape)

    def loss_at(p, xv) -> float:
        out, _ = fn(p, xv)
        return float((out * proj).sum())

    grads = backward(proj)

    report = GradCheckReport()

    def check(name: str, array: np.ndarray, analytic: np.ndarray, rebuild):
        numeric = np.empty_like(array)
        flat = array.reshape(-1)
        num_flat = numeric.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + eps
            up = loss_at(*rebuild())
            flat[i] = orig - eps
            down = loss_at(*rebuild())
            flat[i] = orig
            num_flat[i] = (up - down) / (2 * eps)
        report.per_param[name] = _rel_err(analytic, numeric)

    check("input", x64, grads.input_grad, lambda: (params64, x64))
    for name, arr in params64.items():
        if name in grads.param_grads:
            check(name, arr, grads.param_grads[name], lambda: (params64, x64))
    return report
