"""Monte Carlo study harness: repeated sampling, estimation, coverage.

Runs R independent replications of (draw a sample, compute passthrough
visibilities, estimate, attach standard errors), then aggregates into a
report with one cell per (scheme, estimator): the mean estimate, the
observed root-mean-squared error against the census truth, and per
variance method the mean standard error, the Gaussian confidence
interval coverage, and the count of NA replicates.

The "observed" variance method is the benchmark construction: the
study-wide RMSE is used as the standard error of every replicate's
interval, so its coverage measures only the shape of the sampling
distribution.

Replicate r of scheme s draws its generator from the seed sequence
``[seed, s, r]``, making results independent of execution order and
identical between serial and threaded runs.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.special import ndtri

from .design import SchemeSpec, draw_scheme, pps_first_order, tille_joint_pi_approx
from .el import maximize_ce
from .errors import SolverError, ValidationError
from .model import EstimatingFunction
from .population import Population, census_solution, sample_data
from .variance import (
    hajek_mean,
    hartley_rao_var,
    ht_mean,
    sandwich_vce,
    ygs_var,
)
from .visibility import passthrough_visibility

Array = np.ndarray

ESTIMATORS = ("ce", "ht", "hajek")
VARIANCE_METHODS = ("ce_sandwich", "observed", "hartley_rao", "ygs")
# pairs that make sense: the sandwich applies to the likelihood fit only
_APPLICABLE = {
    "ce": ("ce_sandwich", "observed", "hartley_rao", "ygs"),
    "ht": ("observed", "hartley_rao", "ygs"),
    "hajek": ("observed", "hartley_rao", "ygs"),
}


@dataclass(frozen=True)
class MCStudyConfig:
    """Configuration of one study: designs, size, replication, methods."""

    schemes: tuple
    n: int
    reps: int
    nominal: float = 0.95
    estimators: tuple = ESTIMATORS
    variance_methods: tuple = VARIANCE_METHODS
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "schemes", tuple(self.schemes))
        object.__setattr__(self, "estimators", tuple(self.estimators))
        object.__setattr__(self, "variance_methods", tuple(self.variance_methods))
        if not self.schemes:
            raise ValidationError("study needs at least one scheme")
        for spec in self.schemes:
            if not isinstance(spec, SchemeSpec):
                raise ValidationError("schemes must be SchemeSpec instances")
            if spec.n != self.n:
                raise ValidationError(
                    f"scheme '{spec.kind}' has n={spec.n}, study has n={self.n}"
                )
        if self.reps < 1:
            raise ValidationError("reps must be at least 1")
        if not 0.0 < self.nominal < 1.0:
            raise ValidationError("nominal level must lie in (0, 1)")
        bad = set(self.estimators) - set(ESTIMATORS)
        if bad or not self.estimators:
            raise ValidationError(f"estimators must be a subset of {ESTIMATORS}")
        badv = set(self.variance_methods) - set(VARIANCE_METHODS)
        if badv or not self.variance_methods:
            raise ValidationError(
                f"variance methods must be a subset of {VARIANCE_METHODS}"
            )


@dataclass(frozen=True)
class VarianceCell:
    """Aggregates for one variance method within one estimator cell."""

    method: str
    mean_se: float
    coverage: float
    na_count: int
    na: bool


@dataclass(frozen=True)
class EstimatorCell:
    """Aggregates for one (scheme, estimator) pair."""

    estimator: str
    mean_estimate: float
    observed_rmse: float
    n_failed: int
    estimates: Array
    variance: dict
    hist_edges: Array
    hist_counts: Array


@dataclass(frozen=True)
class MCReport:
    """Study output: census truth plus one cell per scheme and estimator."""

    truth: float
    nominal: float
    reps: int
    n: int
    seed: int
    cells: dict = field(default_factory=dict)

    def to_dict(self, include_raw: bool = False) -> dict:
        """Plain-python (JSON-ready) form; non-finite floats become None."""

        def clean(x):
            if isinstance(x, float):
                return x if np.isfinite(x) else None
            return x

        out = {
            "truth": self.truth,
            "nominal": self.nominal,
            "reps": self.reps,
            "n": self.n,
            "seed": self.seed,
            "cells": {},
        }
        for scheme, per_est in self.cells.items():
            out["cells"][scheme] = {}
            for name, cell in per_est.items():
                c = {
                    "mean_estimate": clean(cell.mean_estimate),
                    "observed_rmse": clean(cell.observed_rmse),
                    "n_failed": cell.n_failed,
                    "variance": {
                        m: {
                            "mean_se": clean(v.mean_se),
                            "coverage": clean(v.coverage),
                            "na_count": v.na_count,
                            "na": v.na,
                        }
                        for m, v in cell.variance.items()
                    },
                    "hist_edges": [float(e) for e in cell.hist_edges],
                    "hist_counts": [int(k) for k in cell.hist_counts],
                }
                if include_raw:
                    c["estimates"] = [clean(float(e)) for e in cell.estimates]
                out["cells"][scheme][name] = c
        return out


def coverage(estimates, ses, truth: float, level: float = 0.95) -> float:
    """Fraction of replicates whose Gaussian interval contains the truth.

    Entries with non-finite standard errors are excluded; returns NaN
    when nothing remains.
    """
    est = np.asarray(estimates, dtype=float)
    se = np.asarray(ses, dtype=float)
    if est.shape != se.shape:
        raise ValidationError("estimates and ses must have equal length")
    if not 0.0 < level < 1.0:
        raise ValidationError("level must lie in (0, 1)")
    ok = np.isfinite(se) & np.isfinite(est)
    if not np.any(ok):
        return float("nan")
    z = ndtri(0.5 + level / 2.0)
    return float(np.mean(np.abs(est[ok] - truth) <= z * se[ok]))


def _replicate(model, pop, target, spec, cfg, scheme_idx, rep):
    """One replication: draw, estimate, per-method standard errors.

    Returns {estimator: (value, {method: se})}; a failed estimator maps
    to (nan, all-nan).  Standard errors that are undefined for the draw
    (e.g. a negative pairwise estimate) come back as NaN.
    """
    rng = np.random.default_rng([cfg.seed, scheme_idx, rep])
    draw = draw_scheme(target, spec, rng)
    data = sample_data(pop, draw)
    nu = passthrough_visibility(draw)
    inv_sum = float((1.0 / draw.pi).sum())
    joint = draw.joint_pi
    if joint is None and spec.kind == "tille":
        joint = tille_joint_pi_approx(target.pi, draw.indices)

    wanted = [m for m in cfg.variance_methods if m != "observed"]
    out = {}
    for name in cfg.estimators:
        ses = {m: float("nan") for m in wanted if m in _APPLICABLE[name]}
        try:
            if name == "ce":
                sol = maximize_ce(model, data, nu=nu)
                value = float(sol.theta_hat[0])
            elif name == "ht":
                value = ht_mean(data.y, draw.pi, pop.N)
            else:
                value = hajek_mean(data.y, draw.pi)
        except SolverError:
            out[name] = (float("nan"), ses)
            continue

        resid = data.y - value
        for m in list(ses):
            try:
                if m == "ce_sandwich":
                    v = sandwich_vce(sol, data, model)
                    ses[m] = float(np.sqrt(max(np.asarray(v.value).reshape(())[()], 0.0)))
                elif m == "hartley_rao":
                    vals, denom = (data.y, pop.N) if name == "ht" else (resid, inv_sum)
                    est = hartley_rao_var(vals, draw.pi, denom=denom)
                    ses[m] = float(np.sqrt(est.value))
                elif m == "ygs":
                    vals, denom = (data.y, pop.N) if name == "ht" else (resid, inv_sum)
                    if joint is None:
                        raise ValidationError("no pairwise probabilities")
                    est = ygs_var(vals, draw.pi, joint, denom=denom)
                    if est.valid:
                        ses[m] = float(np.sqrt(est.value))
            except (SolverError, ValidationError):
                pass  # stays NaN, aggregated as NA
        out[name] = (value, ses)
    return out


def _aggregate(name, values, ses_by_method, truth, nominal, methods):
    reps = len(values)
    est = np.asarray(values, dtype=float)
    ok = np.isfinite(est)
    n_failed = int(reps - ok.sum())
    valid = est[ok]
    if valid.size:
        mean_est = float(valid.mean())
        rmse = float(np.sqrt(np.mean((valid - truth) ** 2)))
        counts, edges = np.histogram(valid, bins=50)
    else:
        mean_est, rmse = float("nan"), float("nan")
        edges = np.linspace(0.0, 1.0, 51)
        counts = np.zeros(50, dtype=int)

    variance = {}
    for m in methods:
        if m not in _APPLICABLE[name]:
            continue
        if m == "observed":
            cov = coverage(valid, np.full(valid.size, rmse), truth, nominal) \
                if valid.size else float("nan")
            variance[m] = VarianceCell(
                method=m, mean_se=rmse, coverage=cov, na_count=0, na=False
            )
            continue
        se = np.asarray(ses_by_method[m], dtype=float)
        se_ok = ok & np.isfinite(se)
        na_count = int(ok.sum() - se_ok.sum())
        mean_se = float(se[se_ok].mean()) if np.any(se_ok) else float("nan")
        cov = coverage(est[se_ok], se[se_ok], truth, nominal) \
            if np.any(se_ok) else float("nan")
        variance[m] = VarianceCell(
            method=m,
            mean_se=mean_se,
            coverage=cov,
            na_count=na_count,
            na=bool(na_count > 0.5 * max(int(ok.sum()), 1)),
        )
    return EstimatorCell(
        estimator=name,
        mean_estimate=mean_est,
        observed_rmse=rmse,
        n_failed=n_failed,
        estimates=est,
        variance=variance,
        hist_edges=edges,
        hist_counts=counts,
    )


def run_study(cfg: MCStudyConfig, pop: Population, model: EstimatingFunction,
              n_jobs: int = 1) -> MCReport:
    """Run the full study and aggregate a report.

    A replicate where an estimator raises a solver error is excluded
    from that estimator's aggregates and counted in ``n_failed``; the
    study itself never aborts.  Results are a pure function of
    ``(cfg, pop, model)`` regardless of ``n_jobs``.
    """
    if model.p != 1:
        raise ValidationError("the study harness reports scalar parameters only")
    truth = float(census_solution(model, pop)[0])

    cells: dict = {}
    for s_idx, spec in enumerate(cfg.schemes):
        target = pps_first_order(pop.c, spec.n)

        def one(rep, _spec=spec, _idx=s_idx):
            return _replicate(model, pop, target, _spec, cfg, _idx, rep)

        if n_jobs > 1:
            with ThreadPoolExecutor(max_workers=n_jobs) as pool:
                rows = list(pool.map(one, range(cfg.reps)))
        else:
            rows = [one(rep) for rep in range(cfg.reps)]

        key = spec.kind if spec.kind not in cells else f"{spec.kind}#{s_idx}"
        cells[key] = {}
        for name in cfg.estimators:
            values = [row[name][0] for row in rows]
            ses_by_method = {
                m: [row[name][1].get(m, float("nan")) for row in rows]
                for m in cfg.variance_methods if m != "observed"
            }
            cells[key][name] = _aggregate(
                name, values, ses_by_method, truth, cfg.nominal,
                cfg.variance_methods,
            )

    return MCReport(
        truth=truth, nominal=cfg.nominal, reps=cfg.reps, n=cfg.n,
        seed=cfg.seed, cells=cells,
    )
