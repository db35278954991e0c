"""Norm registry, inequality margins, rate fits, convergence-order estimates.

Every inequality check in the package reports a *margin* = RHS - LHS, so
margin >= 0 means the inequality holds.  Judgment (pass/fail) is applied
separately through :func:`passes` with one global slack policy, keeping the
measurement and the thresholds in one place.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .grid import (
    ScalarField,
    VectorField,
    face_norm,
    grad_inner,
    mean,
    scalar_grad_inner,
    scalar_norm,
)
from .linsolve import htilde_solver

__all__ = [
    "DiagnosticsRecord",
    "OrderEstimate",
    "SLACK_ABS",
    "SLACK_REL",
    "passes",
    "norms",
    "htilde_norm",
    "fit_decay_rate",
    "convergence_order",
]

SLACK_ABS = 1e-8
SLACK_REL = 1e-6


def passes(margin: float, scale: float = 1.0) -> bool:
    """Single global slack policy: margin >= -(abs slack + rel slack * scale)."""
    return margin >= -(SLACK_ABS + SLACK_REL * abs(scale))


@dataclass(frozen=True)
class DiagnosticsRecord:
    """One named measurement bundle.

    ``metrics`` maps metric names to finite scalars; margins follow the
    convention margin >= 0 iff the inequality holds.  ``provenance`` names
    the producing check.
    """

    time: float
    metrics: dict = field(default_factory=dict)
    provenance: str = ""

    def __post_init__(self):
        clean = {}
        for k, v in self.metrics.items():
            fv = float(v)
            if not math.isfinite(fv):
                raise ValueError(f"diagnostics metric {k!r} is not finite: {v!r}")
            clean[str(k)] = fv
        object.__setattr__(self, "metrics", clean)

    def __getitem__(self, key: str) -> float:
        return self.metrics[key]


def htilde_norm(g: ScalarField) -> float:
    """Dual-space norm sqrt(<g, (I - Lap_N)^{-1} g>) of the mean-adjusted part.

    This is the package's fixed discrete realization of the dual of H^1; any
    spectrally equivalent choice would do for trend measurement, and this one
    is documented precisely so results are reproducible.
    """
    vals = g.values - g.values.mean()
    x = htilde_solver(g.grid)(vals.ravel())
    q = float(np.dot(vals.ravel(), x)) * g.grid.h ** 2
    return math.sqrt(max(q, 0.0))


def norms(f, time: float = 0.0) -> DiagnosticsRecord:
    """L2, H1-seminorm, and (for scalars) dual-norm measurements."""
    if isinstance(f, ScalarField):
        l2 = scalar_norm(f)
        h1 = math.sqrt(max(scalar_grad_inner(f, f, "neumann"), 0.0))
        metrics = {
            "l2": l2,
            "h1_semi": h1,
            "h1": math.sqrt(l2 * l2 + h1 * h1),
            "mean": mean(f),
            "htilde_minus1": htilde_norm(f),
        }
    elif isinstance(f, VectorField):
        l2 = face_norm(f)
        h1 = math.sqrt(max(grad_inner(f, f), 0.0))
        metrics = {"l2": l2, "h1_semi": h1, "h1": math.sqrt(l2 * l2 + h1 * h1)}
    else:
        raise TypeError(f"norms: unsupported field type {type(f).__name__}")
    return DiagnosticsRecord(time=time, metrics=metrics, provenance="norms")


def fit_decay_rate(times, values) -> float:
    """Least-squares slope of log(values) against times.

    Requires at least 10 samples with positive values and non-degenerate
    times; the fitted slope of an exact exponential is recovered to
    round-off.
    """
    t = np.asarray(times, dtype=np.float64).ravel()
    y = np.asarray(values, dtype=np.float64).ravel()
    if t.size != y.size:
        raise ValueError("fit_decay_rate: times and values differ in length")
    if t.size < 10:
        raise ValueError(f"fit_decay_rate: need at least 10 samples, got {t.size}")
    if not (np.isfinite(t).all() and np.isfinite(y).all()):
        raise ValueError("fit_decay_rate: non-finite samples")
    if np.any(y <= 0.0):
        raise ValueError("fit_decay_rate: values must be positive")
    if np.ptp(t) == 0.0:
        raise ValueError("fit_decay_rate: degenerate time series")
    slope = np.polyfit(t, np.log(y), 1)[0]
    return float(slope)


@dataclass(frozen=True)
class OrderEstimate:
    """Convergence order from an error triple at resolutions n, 2n, 4n."""

    order_coarse: float   # log2(e1/e2)
    order_fine: float     # log2(e2/e3)
    mean: float
    monotone: bool

    def __float__(self) -> float:
        return self.mean


def convergence_order(e1: float, e2: float, e3: float) -> OrderEstimate:
    """Observed orders from errors at successive halvings of h (or dt)."""
    for e in (e1, e2, e3):
        if not (math.isfinite(e) and e > 0.0):
            raise ValueError(f"convergence_order: errors must be positive, got {(e1, e2, e3)}")
    o12 = math.log2(e1 / e2)
    o23 = math.log2(e2 / e3)
    return OrderEstimate(o12, o23, 0.5 * (o12 + o23), monotone=(e1 > e2 > e3))
