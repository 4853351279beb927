"""Variance estimators and classical design-based point estimators.

Covers four families:

- the sandwich covariance of the constrained empirical-likelihood
  estimator, built from the fitted weights;
- the covariance of the moment multiplier (degenerate at zero for
  just-identified models);
- Horvitz-Thompson and Hajek means with the Hartley-Rao (first-order)
  and Yates-Grundy-Sen (second-order) variance estimators;
- a finite-population-correction rescaling for predicting the census
  parameter rather than the superpopulation one.

Mean-scale convention: the classical estimators are defined at the
total level and divided by ``denom**2`` — pass ``denom = N`` for the
Horvitz-Thompson mean and ``denom = sum(1/pi)`` for Hajek-type ratios
(with residuals as values).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import SingularModelError, ValidationError
from .model import EstimatingFunction
from .population import SampleData

Array = np.ndarray

_METHODS = (
    "ce_sandwich",
    "proportion_closed",
    "hartley_rao",
    "ygs",
    "prediction_fpc",
)


@dataclass(frozen=True)
class VarianceEstimate:
    """A variance (matrix or scalar) tagged with its method and validity.

    ``valid=False`` marks estimates that are undefined for the given
    design information (e.g. a negative Yates-Grundy-Sen value or a
    pair with zero joint inclusion probability); such values are
    reported as NA downstream instead of being used.
    """

    value: object
    method: str
    valid: bool = True

    def __post_init__(self):
        if self.method not in _METHODS:
            raise ValidationError(f"unknown variance method '{self.method}'")
        if self.method == "ygs" and self.valid:
            if float(np.asarray(self.value)) < 0.0:
                raise ValidationError(
                    "a negative pairwise variance estimate must carry valid=False"
                )


def _fitted_matrices(solution, data: SampleData, model: EstimatingFunction):
    """Weighted moment and Jacobian aggregates at the fitted parameter."""
    w = solution.weights
    psi = model.psi(solution.theta_hat, data.y, data.a)
    dpsi = model.dpsi(solution.theta_hat, data.y, data.a)
    G = np.einsum("i,irp->rp", w, dpsi)
    wpsi = psi * w[:, None]
    G_star = wpsi.T @ wpsi
    return psi, G, G_star


def sandwich_vce(solution, data: SampleData, model: EstimatingFunction) -> VarianceEstimate:
    """Sandwich covariance of the fitted parameter.

    With ``G = sum_i w_i dpsi_i`` and ``G* = sum_i w_i^2 psi_i psi_i'``,
    returns ``(G' G*^{-1} G)^{-1}`` as a ``(p, p)`` matrix.  When the
    residual moments vanish identically (a perfect fit) the covariance
    is exactly the zero matrix.

    Raises
    ------
    SingularModelError
        If ``G*`` is singular with nonzero residuals, or ``G`` is rank
        deficient.
    """
    psi, G, G_star = _fitted_matrices(solution, data, model)
    p = model.p
    if not np.any(psi):
        return VarianceEstimate(value=np.zeros((p, p)), method="ce_sandwich")
    try:
        middle = G.T @ np.linalg.solve(G_star, G)
    except np.linalg.LinAlgError:
        raise SingularModelError(
            "singular weighted second-moment matrix in the sandwich covariance"
        )
    try:
        V = np.linalg.inv(middle)
    except np.linalg.LinAlgError:
        raise SingularModelError(
            "rank-deficient weighted Jacobian in the sandwich covariance"
        )
    V = 0.5 * (V + V.T)
    return VarianceEstimate(value=V, method="ce_sandwich")


def kappa_covariance(solution, data: SampleData, model: EstimatingFunction) -> Array:
    """Covariance of the moment multiplier at the fitted solution.

    Returns ``G*^{-1} (I - G V G' G*^{-1})`` with ``V`` the sandwich
    covariance; exactly zero (to rounding) when ``r == p`` because the
    multiplier is then degenerate at 0.
    """
    psi, G, G_star = _fitted_matrices(solution, data, model)
    r = model.r
    if not np.any(psi):
        return np.zeros((r, r))
    try:
        G_star_inv = np.linalg.inv(G_star)
    except np.linalg.LinAlgError:
        raise SingularModelError(
            "singular weighted second-moment matrix in the multiplier covariance"
        )
    V = np.asarray(sandwich_vce(solution, data, model).value)
    out = G_star_inv @ (np.eye(r) - G @ V @ G.T @ G_star_inv)
    return 0.5 * (out + out.T)


# ------------------------------------------------------- classical estimators


def _check_pi(values, pi):
    values = np.asarray(values, dtype=float)
    pi = np.asarray(pi, dtype=float)
    if values.shape != pi.shape or values.ndim != 1:
        raise ValidationError("values and pi must be 1-d arrays of equal length")
    if np.any(pi <= 0.0):
        raise ValidationError("inclusion probabilities must be positive")
    return values, pi


def ht_mean(values, pi, N: int) -> float:
    """Horvitz-Thompson mean: ``sum(values/pi) / N``.

    Design-unbiased for the population mean but not range-respecting:
    for an indicator it can exceed 1.
    """
    values, pi = _check_pi(values, pi)
    if N < 1:
        raise ValidationError("population size must be positive")
    return float((values / pi).sum() / N)


def hajek_mean(values, pi) -> float:
    """Hajek (ratio) mean: ``sum(values/pi) / sum(1/pi)``; range-respecting."""
    values, pi = _check_pi(values, pi)
    inv = 1.0 / pi
    return float((values * inv).sum() / inv.sum())


def hartley_rao_var(values, pi, denom: float) -> VarianceEstimate:
    """Hartley-Rao variance of a mean-scale estimator.

    First-order approximation for a fixed-size unequal-probability
    design, at the total level

        v = n/(n-1) * sum_i (1 - (n-1)/n * pi_i) (values_i/pi_i - T/n)^2

    with ``T = sum(values/pi)``, divided by ``denom**2``.  Under equal
    probabilities this reduces to the without-replacement SRS formula up
    to the factor (N-n+1)/(N-n).
    """
    values, pi = _check_pi(values, pi)
    n = values.size
    if n < 2:
        raise ValidationError("variance estimation needs at least two units")
    if denom <= 0:
        raise ValidationError("denominator must be positive")
    t = values / pi
    total = t.sum()
    v = (n / (n - 1.0)) * float(
        ((1.0 - (n - 1.0) / n * pi) * (t - total / n) ** 2).sum()
    )
    return VarianceEstimate(value=v / denom**2, method="hartley_rao")


def ygs_var(values, pi, joint_pi, denom: float) -> VarianceEstimate:
    """Yates-Grundy-Sen variance of a mean-scale estimator.

    Uses pairwise inclusion probabilities:

        v = sum_{i<j} (pi_i pi_j - pi_ij)/pi_ij * (values_i/pi_i - values_j/pi_j)^2

    divided by ``denom**2``.  Returns ``valid=False`` (to be reported as
    NA) when any sampled pair has ``pi_ij == 0`` or when the estimate
    comes out negative, both of which happen under lattice-type
    systematic designs.
    """
    values, pi = _check_pi(values, pi)
    n = values.size
    if joint_pi is None:
        raise ValidationError(
            "pairwise variance needs joint inclusion probabilities; exact "
            "matrices come with the draw where available, otherwise use "
            "estimate_joint_pi_mc"
        )
    joint = np.asarray(joint_pi, dtype=float)
    if joint.shape != (n, n):
        raise ValidationError("joint_pi must be n x n for the sampled units")
    if denom <= 0:
        raise ValidationError("denominator must be positive")
    iu, ju = np.triu_indices(n, k=1)
    pij = joint[iu, ju]
    if np.any(pij <= 0.0):
        return VarianceEstimate(value=np.nan, method="ygs", valid=False)
    t = values / pi
    terms = (pi[iu] * pi[ju] - pij) / pij * (t[iu] - t[ju]) ** 2
    v = float(terms.sum()) / denom**2
    if v < 0.0:
        return VarianceEstimate(value=v, method="ygs", valid=False)
    return VarianceEstimate(value=v, method="ygs")


def prediction_variance(vce: VarianceEstimate, n: int, N: int) -> VarianceEstimate:
    """Finite-population-correction rescaling: ``(1 - n/N) * value``.

    Appropriate when the target is the census parameter of the realized
    population rather than the superpopulation value.  A rough
    correction: it ignores the dependence between the sample estimate
    and the out-of-sample units.
    """
    if n < 1 or N < 1 or n > N:
        raise ValidationError("need 1 <= n <= N for the finite-population factor")
    factor = 1.0 - n / N
    value = np.asarray(vce.value, dtype=float) * factor
    if value.ndim == 0:
        value = float(value)
    return VarianceEstimate(value=value, method="prediction_fpc", valid=vce.valid)
