"""Visibility: the sample-side stand-in for each unit's chance of being seen.

The estimator only needs visibilities up to scale, so both constructors
rescale to mean 1. ``passthrough_visibility`` uses the design's inclusion
probabilities directly. ``smoothed_visibility`` exploits the identity that
the population-conditional mean of pi given observables equals the inverse
of the sample-conditional mean of 1/pi: it regresses 1/pi on a basis of the
observed variables and inverts the fit.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .errors import ValidationError
from .population import SampleDraw

Array = np.ndarray


@dataclass(frozen=True)
class VisibilityModel:
    """Fitted smoothing model: basis coefficients for 1/pi and the clamp floor."""

    alpha: Array
    floor: float


@dataclass(frozen=True)
class Visibilities:
    """Per-observation visibilities, rescaled to mean 1."""

    nu: Array
    kind: str
    model: VisibilityModel | None = None
    clamped: int = 0

    def __post_init__(self):
        nu = np.asarray(self.nu, dtype=float)
        object.__setattr__(self, "nu", nu)
        if np.any(nu <= 0) or not np.all(np.isfinite(nu)):
            raise ValidationError("visibilities must be positive and finite")


def intercept(V: Array) -> Array:
    """Constant basis column (use as the first element of a basis list)."""
    return np.ones(len(V))


def passthrough_visibility(draw: SampleDraw) -> Visibilities:
    """Use the design inclusion probabilities as visibilities (mean-1 scaled)."""
    pi = draw.pi
    return Visibilities(nu=pi / pi.mean(), kind="passthrough")


def smoothed_visibility(draw: SampleDraw, v_obs, basis) -> Visibilities:
    """Estimate visibilities by smoothing 1/pi over observed variables.

    Parameters
    ----------
    draw : SampleDraw
        The realized sample with its inclusion probabilities.
    v_obs : (n, m) array
        Observed variables the visibility may depend on, one row per
        sampled unit (same order as ``draw.indices``).
    basis : sequence of callables
        Each maps ``v_obs`` to one design column of length n; include
        :func:`intercept` explicitly if wanted.

    Fitted values below ``1e-8 * median(1/pi)`` are clamped to that floor;
    if more than 10% of observations clamp, a warning reports the count.
    """
    pi = draw.pi
    n = pi.size
    v_obs = np.asarray(v_obs, dtype=float)
    if v_obs.ndim == 1:
        v_obs = v_obs[:, None]
    if v_obs.shape[0] != n:
        raise ValidationError("v_obs must have one row per sampled unit")
    if not basis:
        raise ValidationError("basis must contain at least one column builder")

    X = np.column_stack([np.asarray(f(v_obs), dtype=float) for f in basis])
    if X.shape != (n, len(basis)):
        raise ValidationError("every basis column must have length n")
    if np.linalg.matrix_rank(X) < X.shape[1]:
        raise ValidationError("rank-deficient smoothing basis; drop redundant columns")

    inv_pi = 1.0 / pi
    alpha, *_ = np.linalg.lstsq(X, inv_pi, rcond=None)
    fitted = X @ alpha

    floor = 1e-8 * float(np.median(inv_pi))
    clamped = int(np.sum(fitted < floor))
    if clamped:
        fitted = np.maximum(fitted, floor)
        if clamped > 0.1 * n:
            warnings.warn(
                f"smoothed visibility clamped {clamped} of {n} fitted values at the "
                "floor; the basis may be badly specified",
                UserWarning,
                stacklevel=2,
            )
    nu = 1.0 / fitted
    nu = nu / nu.mean()
    return Visibilities(
        nu=nu, kind="smooth",
        model=VisibilityModel(alpha=np.asarray(alpha), floor=floor),
        clamped=clamped,
    )


def as_visibilities(value, n: int) -> Array:
    """Coerce a Visibilities object or raw positive array to a mean-1 array."""
    if isinstance(value, Visibilities):
        nu = value.nu
    else:
        nu = np.asarray(value, dtype=float)
        if np.any(nu <= 0) or not np.all(np.isfinite(nu)):
            raise ValidationError("visibilities must be positive and finite")
        nu = nu / nu.mean()
    if nu.shape != (n,):
        raise ValidationError(f"expected {n} visibilities, got shape {nu.shape}")
    return nu
