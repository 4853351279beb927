"""Conditional empirical-likelihood estimation for size-biased samples.

The estimator maximizes, over weight vectors ``w`` on the simplex that
satisfy the moment constraint ``sum_i w_i psi_theta(y_i, a_i) = 0``, the
objective

    L(w) = n log n + sum_i log(nu_i w_i) - n log(sum_i nu_i w_i),

where ``nu_i > 0`` is the visibility of unit i: how over-represented the
unit is in the sample relative to the population.  ``L`` is invariant to
the scale of both ``w`` and ``nu``, and ``L <= 0`` with equality exactly
when ``w_i`` is proportional to ``1/nu_i`` (the AM-GM inequality applied
to ``nu_i w_i``).

For fixed ``theta`` the inner maximum has the closed form
``w_i ∝ 1/(nu_i + kappa' psi_i)`` where the multiplier ``kappa`` solves

    sum_i psi_i / (nu_i + kappa' psi_i) = 0,

the stationarity condition of the strictly concave function
``h(kappa) = sum_i log(nu_i + kappa' psi_i)``.  Substituting back gives
the profiled objective ``sum_i log nu_i - sum_i log(nu_i + kappa' psi_i)``.

Estimation runs on one of two paths:

``ipw_score``
    Solve ``sum_i psi_theta(y_i, a_i) / nu_i = 0`` directly.  Whenever
    this inverse-visibility score equation has a solution, that solution
    is exactly the constrained maximizer, with ``kappa = 0``, weights
    proportional to ``1/nu_i`` and objective 0.

``el_profile``
    Maximize the profiled objective over ``theta`` with a damped Newton
    iteration on its gradient.  Needed for over-identified models
    (``r > p``), where the score equation generally has no root, and as
    an independent cross-check of the score path.

Visibilities are rescaled internally to mean one (the objective does not
identify their scale), so reported multipliers and the estimated
visibility factor refer to that normalization.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linprog

from .errors import (
    ConvergenceError,
    FeasibilityError,
    SingularModelError,
    SolverError,
    ValidationError,
)
from .model import EstimatingFunction
from .population import SampleData
from .visibility import Visibilities, as_visibilities

Array = np.ndarray

_PATHS = ("ipw_score", "el_profile")
_PATH_ALIASES = {
    "auto": "auto",
    "ipw_score": "ipw_score",
    "score": "ipw_score",
    "el_profile": "el_profile",
    "profile": "el_profile",
}


@dataclass(frozen=True)
class ELSolution:
    """A fitted conditional empirical-likelihood solution.

    Attributes
    ----------
    theta_hat : (p,) array
        Estimated parameter.
    kappa_hat : (r,) array
        Multiplier of the moment constraint at the optimum (zero on the
        score path).
    weights : (n,) array
        Maximizing weights on the simplex.
    upsilon_hat : float
        Estimated visibility factor ``sum_i nu_i w_i`` under the mean-one
        normalization of ``nu``.
    loglik : float
        Maximized objective; always <= 0, equal to 0 exactly when the
        weights are proportional to ``1/nu``.
    iterations : dict
        Counts ``{"outer": ..., "inner": ...}`` of parameter steps and
        cumulative multiplier-solve steps.
    converged : bool
        Whether the reporting path met its tolerance.
    path : str
        ``"ipw_score"`` or ``"el_profile"``.
    boundary : bool
        True when the estimate sits on the closure of the parameter
        domain (e.g. a proportion fit to all-ones data).
    """

    theta_hat: Array
    kappa_hat: Array
    weights: Array
    upsilon_hat: float
    loglik: float
    iterations: dict
    converged: bool
    path: str
    boundary: bool = False

    def __post_init__(self):
        object.__setattr__(self, "theta_hat", np.atleast_1d(np.asarray(self.theta_hat, dtype=float)))
        object.__setattr__(self, "kappa_hat", np.atleast_1d(np.asarray(self.kappa_hat, dtype=float)))
        object.__setattr__(self, "weights", np.asarray(self.weights, dtype=float))
        w = self.weights
        if w.ndim != 1 or np.any(w <= 0) or abs(float(w.sum()) - 1.0) > 1e-8:
            raise ValidationError("weights must be positive and sum to one")
        if self.upsilon_hat <= 0:
            raise ValidationError("visibility factor must be positive")
        if self.loglik > 1e-10:
            raise ValidationError("objective value cannot be positive")
        if self.path not in _PATHS:
            raise ValidationError(f"path must be one of {_PATHS}")


def _nu_vector(nu, n: int) -> Array:
    if nu is None:
        return np.ones(n)
    return as_visibilities(nu, n)


def ce_loglik(weights, nu) -> float:
    """Objective value at explicit weights (no inner optimization).

    Scale-invariant in both arguments; the maximum over the simplex
    without moment constraints is 0, at weights proportional to ``1/nu``.
    """
    w = np.asarray(weights, dtype=float)
    n = w.size
    nu_arr = _nu_vector(nu, n)
    return float(n * np.log(n) + np.log(nu_arr * w).sum() - n * np.log(nu_arr @ w))


def ce_distribution(nu) -> Array:
    """Maximizing weights in the unconstrained case: ``w_i ∝ 1/nu_i``.

    These are the point masses of the estimated population distribution
    over the sampled values.
    """
    if isinstance(nu, Visibilities):
        nu_arr = nu.nu
    else:
        nu_arr = np.asarray(nu, dtype=float)
        if np.any(nu_arr <= 0) or not np.all(np.isfinite(nu_arr)):
            raise ValidationError("visibilities must be positive and finite")
    inv = 1.0 / nu_arr
    return inv / inv.sum()


def _separating_direction(psi: Array):
    """A direction u with ``psi @ u >= t > 0`` for all rows, if one exists.

    Such a direction certifies that 0 lies outside the convex hull of the
    rows, i.e. the multiplier equation is infeasible.  Returns None when
    no strictly separating direction is found.
    """
    n, r = psi.shape
    c = np.zeros(r + 1)
    c[-1] = -1.0  # maximize t
    A_ub = np.hstack([-psi, np.ones((n, 1))])  # psi @ u >= t
    b_ub = np.zeros(n)
    bounds = [(-1.0, 1.0)] * r + [(None, None)]
    res = linprog(c, A_ub=A_ub, b_ub=b_ub, bounds=bounds, method="highs")
    if res.status == 0 and res.x is not None and res.x[-1] > 1e-12:
        u = res.x[:r]
        norm = np.linalg.norm(u)
        if norm > 0:
            return u / norm
    return None


def _as_psi_matrix(psi_vals) -> Array:
    psi = np.asarray(psi_vals, dtype=float)
    if psi.ndim == 1:
        psi = psi[:, None]
    if psi.ndim != 2:
        raise ValidationError("psi values must form an (n, r) matrix")
    return psi


def solve_kappa(psi_vals, nu, tol: float = 1e-10, max_iter: int = 200):
    """Solve the multiplier equation at fixed moment values.

    Finds ``kappa`` with ``sum_i psi_i / (nu_i + kappa' psi_i) = 0`` and
    all denominators positive, by damped Newton ascent on the concave
    function ``h(kappa) = sum_i log(nu_i + kappa' psi_i)``.

    Parameters
    ----------
    psi_vals : (n, r) array
        Moment values at the working parameter.
    nu : array or Visibilities
        Positive visibilities; rescaled to mean one internally.
    tol : float
        Convergence threshold on the euclidean norm of the equation.
    max_iter : int
        Newton iteration budget.

    Returns
    -------
    (kappa, weights)
        The multiplier and the inner-optimal simplex weights
        ``w_i ∝ 1/(nu_i + kappa' psi_i)``.

    Raises
    ------
    FeasibilityError
        If 0 is not interior to the convex hull of the moment values
        (carries a certifying ``direction``).
    ConvergenceError
        If the iteration budget is exhausted.
    """
    psi = _as_psi_matrix(psi_vals)
    n, r = psi.shape
    nu_arr = _nu_vector(nu, n)

    # quick necessary check: a single-signed coordinate is a certificate
    for j in range(r):
        col = psi[:, j]
        if col.min() >= 0.0 or col.max() <= 0.0:
            if not np.any(col):  # identically zero coordinate contributes nothing
                continue
            direction = np.zeros(r)
            direction[j] = 1.0 if col.min() >= 0.0 else -1.0
            raise FeasibilityError(
                "multiplier equation infeasible: moment coordinate "
                f"{j} never changes sign",
                direction=direction,
            )

    kappa = np.zeros(r)
    d = nu_arr.copy()
    eps = 1e-12 * float(nu_arr.mean())
    g = (psi / d[:, None]).sum(axis=0)
    it = 0
    while it < max_iter:
        if np.linalg.norm(g) <= tol:
            inv_d = 1.0 / d
            return kappa, inv_d / inv_d.sum()
        q = psi / d[:, None]
        H = q.T @ q  # minus the hessian of h; positive definite when psi spans
        try:
            step = np.linalg.solve(H, g)
        except np.linalg.LinAlgError:
            step = np.linalg.lstsq(H, g, rcond=None)[0]
        h0 = float(np.log(d).sum())
        slope = float(g @ step)
        # noise floor: near the optimum the objective improvement drops
        # below float resolution; only the barrier check matters then
        floor = 1e-12 * (1.0 + abs(h0))
        t = 1.0
        for _ in range(60):
            knew = kappa + t * step
            dnew = nu_arr + psi @ knew
            if dnew.min() > eps:
                hnew = float(np.log(dnew).sum())
                if hnew >= h0 + 1e-4 * t * slope - floor:
                    break
            t *= 0.5
        else:
            direction = _separating_direction(psi) if r > 1 else None
            if direction is not None:
                raise FeasibilityError(
                    "multiplier equation infeasible: zero lies outside the "
                    "convex hull of the moment values",
                    direction=direction,
                )
            raise ConvergenceError(
                "multiplier solve stalled (line search collapsed; "
                f"residual {np.linalg.norm(g):.3e})"
            )
        kappa, d = knew, dnew
        g = (psi / d[:, None]).sum(axis=0)
        it += 1
    raise ConvergenceError(
        f"multiplier solve: no convergence in {max_iter} iterations "
        f"(residual {np.linalg.norm(g):.3e})"
    )


def _inner_state(model: EstimatingFunction, theta: Array, data: SampleData, nu_arr: Array):
    """Multiplier, denominators and profiled objective at one theta."""
    psi = model.psi(theta, data.y, data.a)
    kappa, w = solve_kappa(psi, nu_arr)
    d = nu_arr + psi @ kappa
    ll = min(0.0, float(np.log(nu_arr).sum() - np.log(d).sum()))
    return psi, kappa, w, d, ll


def profile_loglik(theta, model: EstimatingFunction, data: SampleData, nu) -> float:
    """Profiled objective at ``theta``: the inner maximum over weights.

    Equals ``sum_i log nu_i - sum_i log(nu_i + kappa' psi_i)`` with
    ``kappa`` from :func:`solve_kappa`; always <= 0.

    Raises
    ------
    FeasibilityError
        When no weight vector can satisfy the moment constraint at this
        ``theta``.
    """
    theta = np.atleast_1d(np.asarray(theta, dtype=float))
    nu_arr = _nu_vector(nu, data.n)
    _, _, _, _, ll = _inner_state(model, theta, data, nu_arr)
    return ll


def _hajek_point(y: Array, nu_arr: Array) -> float:
    inv = 1.0 / nu_arr
    return float((y * inv).sum() / inv.sum())


def _default_init(model: EstimatingFunction, data: SampleData, nu_arr: Array) -> Array:
    """Visibility-weighted starting point for the outer iterations."""
    if data.a is not None and model.p == data.a.shape[1]:
        # weighted least squares on the auxiliaries
        sw = np.sqrt(1.0 / nu_arr)
        beta, *_ = np.linalg.lstsq(data.a * sw[:, None], data.y * sw, rcond=None)
        return beta
    if model.p == 1:
        return np.array([_hajek_point(data.y, nu_arr)])
    lo, hi = model.domain
    mid = np.where(np.isfinite(lo) & np.isfinite(hi), 0.5 * (lo + hi), 0.0)
    return mid.astype(float)


def solve_ipw_score(model: EstimatingFunction, data: SampleData, nu,
                    init=None, tol_factor: float = 1e-10, max_iter: int = 100) -> Array:
    """Solve the inverse-visibility score equation ``sum_i psi/nu_i = 0``.

    Damped Newton with step halving; requires a square system
    (``r == p``).  The residual at return satisfies
    ``norm <= tol_factor * n``.

    Raises
    ------
    ValidationError
        If the model is over-identified (``r > p``).
    SingularModelError
        If the weighted Jacobian becomes singular.
    ConvergenceError
        If the iteration or line-search budget is exhausted.
    """
    if model.r != model.p:
        raise ValidationError(
            "inverse-visibility score path needs a square system; "
            f"got r={model.r}, p={model.p}"
        )
    nu_arr = _nu_vector(nu, data.n)
    inv = 1.0 / nu_arr
    th = np.atleast_1d(np.asarray(init, dtype=float)) if init is not None \
        else _default_init(model, data, nu_arr)
    tol = tol_factor * data.n

    g = model.psi(th, data.y, data.a).T @ inv
    for _ in range(max_iter):
        gnorm = np.linalg.norm(g)
        if gnorm <= tol:
            return th.copy()
        J = np.einsum("irp,i->rp", model.dpsi(th, data.y, data.a), inv)
        try:
            step = -np.linalg.solve(J, g)
        except np.linalg.LinAlgError:
            raise SingularModelError(
                "singular visibility-weighted Jacobian in the score solve"
            )
        t = 1.0
        for _ in range(60):
            thn = th + t * step
            gn = model.psi(thn, data.y, data.a).T @ inv
            if np.linalg.norm(gn) <= (1.0 - 1e-4 * t) * gnorm:
                break
            t *= 0.5
        else:
            raise ConvergenceError(
                f"score solve stalled (residual {gnorm:.3e})"
            )
        th, g = thn, gn
    raise ConvergenceError(
        f"score solve: no convergence in {max_iter} iterations "
        f"(residual {np.linalg.norm(g):.3e})"
    )


def _profile_gradient(model, theta, data, nu_arr):
    """Gradient of the profiled objective plus the inner state.

    The derivative of the profiled objective reduces to
    ``-sum_i dpsi_i' kappa / d_i`` because the explicit dependence of
    ``kappa`` on ``theta`` multiplies the multiplier equation, which is
    zero at the inner optimum.
    """
    psi, kappa, w, d, ll = _inner_state(model, theta, data, nu_arr)
    dpsi = model.dpsi(theta, data.y, data.a)
    grad = -np.einsum("irp,r,i->p", dpsi, kappa, 1.0 / d)
    return grad, ll, kappa, w, d


def _profile_newton(model: EstimatingFunction, data: SampleData, nu_arr: Array,
                    init: Array, tol_factor: float = 1e-10, max_iter: int = 100):
    """Damped Newton ascent of the profiled objective from one start."""
    th = np.atleast_1d(np.asarray(init, dtype=float)).copy()
    p = model.p
    tol = tol_factor * data.n
    inner = 0

    grad, ll, kappa, w, d = _profile_gradient(model, th, data, nu_arr)
    outer = 0
    while outer < max_iter:
        if np.linalg.norm(grad, ord=np.inf) <= tol:
            return th, kappa, w, ll, outer, inner

        # finite-difference jacobian of the gradient (hessian of the
        # profiled objective); feasibility failures shrink the step
        J = np.empty((p, p))
        for j in range(p):
            h = 1e-6 * (1.0 + abs(th[j]))
            col = None
            for _ in range(8):
                tp, tm = th.copy(), th.copy()
                tp[j] += h
                tm[j] -= h
                try:
                    gp = _profile_gradient(model, tp, data, nu_arr)[0]
                    gm = _profile_gradient(model, tm, data, nu_arr)[0]
                    col = (gp - gm) / (2.0 * h)
                    break
                except FeasibilityError:
                    h *= 0.125
            if col is None:
                raise FeasibilityError(
                    "profiled objective not differentiable here: the "
                    "feasible region ends within rounding of theta"
                )
            J[:, j] = col
            inner += 4  # bookkeeping: two inner solves per difference

        try:
            step = -np.linalg.solve(J, grad)
        except np.linalg.LinAlgError:
            step = grad.copy()
        if float(grad @ step) <= 0.0:
            step = grad.copy()  # fall back to steepest ascent

        accepted = False
        t = 1.0
        for _ in range(60):
            thn = th + t * step
            try:
                gn, lln, kn, wn, dn = _profile_gradient(model, thn, data, nu_arr)
            except (FeasibilityError, ConvergenceError):
                t *= 0.5
                continue
            inner += 1
            if lln >= ll + 1e-4 * t * float(grad @ step) or \
                    np.linalg.norm(gn) < 0.9 * np.linalg.norm(grad):
                th, grad, ll, kappa, w, d = thn, gn, lln, kn, wn, dn
                accepted = True
                break
            t *= 0.5
        if not accepted:
            raise ConvergenceError(
                "profile ascent stalled (gradient "
                f"{np.linalg.norm(grad):.3e})"
            )
        outer += 1
    raise ConvergenceError(
        f"profile ascent: no convergence in {max_iter} iterations "
        f"(gradient {np.linalg.norm(grad):.3e})"
    )


def _spread_starts(model: EstimatingFunction, init: Array, n_starts: int) -> list:
    """Deterministic multi-start points in a box around the initializer."""
    starts = [init]
    if n_starts <= 1:
        return starts
    lo, hi = model.domain
    rng = np.random.default_rng(20240817)
    for _ in range(n_starts - 1):
        u = rng.uniform(-1.0, 1.0, model.p)
        spread = np.where(
            np.isfinite(lo) & np.isfinite(hi),
            0.25 * (hi - lo),
            0.5 * (1.0 + np.abs(init)),
        )
        cand = init + u * spread
        margin = np.where(np.isfinite(hi - lo), 0.02 * (hi - lo), 0.0)
        lo_clip = np.where(np.isfinite(lo), lo + margin, -np.inf)
        hi_clip = np.where(np.isfinite(hi), hi - margin, np.inf)
        starts.append(np.clip(cand, lo_clip, hi_clip))
    return starts


def _boundary_hit(model: EstimatingFunction, theta: Array) -> bool:
    lo, hi = model.domain
    at_lo = np.isfinite(lo) & (theta <= lo + 1e-9)
    at_hi = np.isfinite(hi) & (theta >= hi - 1e-9)
    return bool(np.any(at_lo | at_hi))


def maximize_ce(model: EstimatingFunction, data: SampleData, nu=None,
                init=None, path: str = "auto", n_starts: int = 5) -> ELSolution:
    """Fit the constrained maximum of the conditional objective.

    Parameters
    ----------
    model : EstimatingFunction
        Moment conditions defining the parameter.
    data : SampleData
        Observed responses and auxiliaries of the sampled units.
    nu : array or Visibilities, optional
        Positive visibilities; defaults to all-equal (no size bias).
    init : array, optional
        Starting parameter; defaults to a visibility-weighted moment fit.
    path : {"auto", "ipw_score", "el_profile"}
        ``"auto"`` first tries the inverse-visibility score equation,
        whose solution is exact whenever it exists, and falls back to the
        profiled ascent otherwise.  ``"score"`` and ``"profile"`` are
        accepted aliases.
    n_starts : int
        Number of deterministic starts for the profiled ascent; the best
        objective wins.

    Raises
    ------
    SolverError
        If every requested path fails; the message aggregates the
        diagnostics of each attempt.
    """
    try:
        path = _PATH_ALIASES[path]
    except KeyError:
        raise ValidationError(
            f"unknown path '{path}'; choose from {sorted(set(_PATH_ALIASES))}"
        )
    nu_arr = _nu_vector(nu, data.n)

    score_error: Exception | None = None
    if path in ("auto", "ipw_score") and model.r == model.p:
        try:
            th = solve_ipw_score(model, data, nu_arr, init=init)
        except SolverError as exc:  # noqa: PERF203 - single attempt
            score_error = exc
            if path == "ipw_score":
                raise
        else:
            w = ce_distribution(nu_arr)
            return ELSolution(
                theta_hat=th,
                kappa_hat=np.zeros(model.r),
                weights=w,
                upsilon_hat=float(nu_arr @ w),
                loglik=0.0,
                iterations={"outer": 1, "inner": 0},
                converged=True,
                path="ipw_score",
                boundary=_boundary_hit(model, th),
            )
    elif path == "ipw_score":
        raise ValidationError(
            "the score path needs a square system; use path='el_profile' "
            f"for r={model.r} > p={model.p}"
        )

    init_arr = np.atleast_1d(np.asarray(init, dtype=float)) if init is not None \
        else _default_init(model, data, nu_arr)
    best = None
    profile_error: Exception | None = None
    for start in _spread_starts(model, init_arr, n_starts):
        try:
            th, kappa, w, ll, outer, inner = _profile_newton(model, data, nu_arr, start)
        except SolverError as exc:
            profile_error = exc
            continue
        if best is None or ll > best[3]:
            best = (th, kappa, w, ll, outer, inner)
    if best is not None:
        th, kappa, w, ll, outer, inner = best
        return ELSolution(
            theta_hat=th,
            kappa_hat=kappa,
            weights=w,
            upsilon_hat=float(nu_arr @ w),
            loglik=ll,
            iterations={"outer": outer, "inner": inner},
            converged=True,
            path="el_profile",
            boundary=_boundary_hit(model, th),
        )

    if score_error is not None:
        raise SolverError(
            f"score path failed ({score_error}); profile path failed "
            f"({profile_error})"
        )
    raise profile_error if profile_error is not None else SolverError(
        "profile path produced no feasible start"
    )
