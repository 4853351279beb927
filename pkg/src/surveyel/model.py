"""Estimating functions: the moment conditions that define a parameter.

An :class:`EstimatingFunction` bundles a vectorized moment function
``psi(theta, y, a) -> (n, r)`` with its analytic Jacobian
``dpsi(theta, y, a) -> (n, r, p)`` and a box domain for ``theta``.
The parameter is the value solving ``sum_i w_i psi(theta, y_i, a_i) = 0``
for suitable weights; ``r == p`` is the just-identified case used by the
built-ins, ``r > p`` is allowed for user-supplied functions.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Tuple

import numpy as np

from .errors import ValidationError

Array = np.ndarray


@dataclass(frozen=True)
class EstimatingFunction:
    """A vectorized estimating function with analytic Jacobian.

    Parameters
    ----------
    p : int
        Dimension of the parameter ``theta``.
    r : int
        Number of moment conditions per observation; must satisfy ``r >= p``.
    psi : callable
        ``psi(theta, y, a)`` returning an ``(n, r)`` array.
    dpsi : callable
        ``dpsi(theta, y, a)`` returning an ``(n, r, p)`` array of
        derivatives with respect to ``theta``.
    domain : (lower, upper)
        Open box constraint for ``theta`` as a pair of length-``p`` arrays.
    name : str
        Short identifier used in reports.
    """

    p: int
    r: int
    psi: Callable[[Array, Array, Array | None], Array]
    dpsi: Callable[[Array, Array, Array | None], Array]
    domain: Tuple[Array, Array]
    name: str = field(default="custom")

    def __post_init__(self):
        if self.p < 1:
            raise ValidationError("estimating function needs p >= 1")
        if self.r < self.p:
            raise ValidationError(
                f"under-identified estimating function: r={self.r} < p={self.p}"
            )
        lo, hi = self.domain
        if np.shape(lo) != (self.p,) or np.shape(hi) != (self.p,):
            raise ValidationError("domain bounds must each have shape (p,)")

    def in_domain(self, theta: Array) -> bool:
        """True when ``theta`` lies strictly inside the domain box."""
        theta = np.atleast_1d(theta)
        lo, hi = self.domain
        return bool(np.all(theta > lo) and np.all(theta < hi))


def _as_theta(theta) -> Array:
    return np.atleast_1d(np.asarray(theta, dtype=float))


def proportion_model() -> EstimatingFunction:
    """Moment condition for a population proportion: psi = y - theta.

    ``y`` is a 0/1 indicator; the domain is the open interval (0, 1).
    """

    def psi(theta, y, a):
        th = _as_theta(theta)
        return (np.asarray(y, dtype=float) - th[0])[:, None]

    def dpsi(theta, y, a):
        return np.full((len(y), 1, 1), -1.0)

    return EstimatingFunction(
        p=1, r=1, psi=psi, dpsi=dpsi,
        domain=(np.array([0.0]), np.array([1.0])),
        name="proportion",
    )


def mean_model() -> EstimatingFunction:
    """Moment condition for a population mean: psi = y - theta, unbounded."""

    def psi(theta, y, a):
        th = _as_theta(theta)
        return (np.asarray(y, dtype=float) - th[0])[:, None]

    def dpsi(theta, y, a):
        return np.full((len(y), 1, 1), -1.0)

    return EstimatingFunction(
        p=1, r=1, psi=psi, dpsi=dpsi,
        domain=(np.array([-np.inf]), np.array([np.inf])),
        name="mean",
    )


def linear_score_model(p_a: int) -> EstimatingFunction:
    """Least-squares score for a linear regression of y on a.

    psi_i = a_i (y_i - a_i' theta), an ``(n, p_a)`` array.
    """

    def psi(theta, y, a):
        th = _as_theta(theta)
        a = np.asarray(a, dtype=float)
        resid = np.asarray(y, dtype=float) - a @ th
        return a * resid[:, None]

    def dpsi(theta, y, a):
        a = np.asarray(a, dtype=float)
        # d psi_i / d theta = -a_i a_i'
        return -a[:, :, None] * a[:, None, :]

    return EstimatingFunction(
        p=p_a, r=p_a, psi=psi, dpsi=dpsi,
        domain=(np.full(p_a, -np.inf), np.full(p_a, np.inf)),
        name="linear",
    )


def logistic_score_model(p_a: int) -> EstimatingFunction:
    """Logistic-regression score: psi_i = a_i (y_i - expit(a_i' theta))."""

    def _expit(x):
        out = np.empty_like(x)
        pos = x >= 0
        out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
        ex = np.exp(x[~pos])
        out[~pos] = ex / (1.0 + ex)
        return out

    def psi(theta, y, a):
        th = _as_theta(theta)
        a = np.asarray(a, dtype=float)
        mu = _expit(a @ th)
        return a * (np.asarray(y, dtype=float) - mu)[:, None]

    def dpsi(theta, y, a):
        th = _as_theta(theta)
        a = np.asarray(a, dtype=float)
        mu = _expit(a @ th)
        v = mu * (1.0 - mu)
        return -(v[:, None, None]) * a[:, :, None] * a[:, None, :]

    return EstimatingFunction(
        p=p_a, r=p_a, psi=psi, dpsi=dpsi,
        domain=(np.full(p_a, -np.inf), np.full(p_a, np.inf)),
        name="logistic",
    )


def check_jacobian(fn: EstimatingFunction, theta, y, a=None) -> float:
    """Worst relative disagreement between ``dpsi`` and central differences.

    Uses step ``h_j = 1e-6 * (1 + |theta_j|)`` per coordinate and normalizes
    by ``max(|fd|, 1)`` elementwise. Values at or below 1e-6 indicate a
    correct analytic Jacobian.
    """
    theta = _as_theta(theta)
    analytic = fn.dpsi(theta, y, a)
    base = fn.psi(theta, y, a)
    n, r = base.shape
    fd = np.empty((n, r, fn.p))
    for j in range(fn.p):
        h = 1e-6 * (1.0 + abs(theta[j]))
        tp = theta.copy()
        tm = theta.copy()
        tp[j] += h
        tm[j] -= h
        fd[:, :, j] = (fn.psi(tp, y, a) - fn.psi(tm, y, a)) / (2.0 * h)
    scale = np.maximum(np.abs(fd), 1.0)
    return float(np.max(np.abs(analytic - fd) / scale))


BUILTIN_MODELS = {
    "proportion": proportion_model,
    "mean": mean_model,
    "linear": linear_score_model,
    "logistic": logistic_score_model,
}


def make_model(name: str, p_a: int = 1) -> EstimatingFunction:
    """Construct a built-in model by name; regression models need ``p_a``."""
    if name not in BUILTIN_MODELS:
        raise ValidationError(f"unknown model '{name}'; choose from {sorted(BUILTIN_MODELS)}")
    if name in ("linear", "logistic"):
        return BUILTIN_MODELS[name](p_a)
    return BUILTIN_MODELS[name]()
