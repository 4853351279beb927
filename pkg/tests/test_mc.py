"""Tests for the Monte Carlo study harness.

Oracles: binomial bands around the nominal level for coverage on
synthetic Gaussian draws; a degenerate census configuration where every
aggregate is known exactly; recomputation of reported aggregates from
the raw per-replicate estimates.
"""

import numpy as np
import pytest

from surveyel.design import SchemeSpec
from surveyel.errors import ConvergenceError, ValidationError
from surveyel.mc import MCStudyConfig, coverage, run_study
from surveyel.model import EstimatingFunction, linear_score_model, proportion_model
from surveyel.population import Population, synth_population


# ------------------------------------------------------------------ coverage


def test_coverage_extremes():
    est = np.array([0.3, 0.9, 0.1])
    assert coverage(est, np.full(3, 1e9), truth=0.5, level=0.95) == 1.0
    assert coverage(est, np.zeros(3), truth=0.5, level=0.95) == 0.0
    # zero se but exactly-right estimate counts as covered
    assert coverage(np.array([0.5]), np.array([0.0]), truth=0.5, level=0.95) == 1.0


def test_coverage_gaussian_binomial_band():
    rng = np.random.default_rng(77)
    R = 10_000
    truth, se = 1.3, 0.2
    est = rng.normal(truth, se, R)
    cov = coverage(est, np.full(R, se), truth, level=0.95)
    band = 3.0 * np.sqrt(0.95 * 0.05 / R)
    assert abs(cov - 0.95) <= band


def test_coverage_excludes_na_entries():
    est = np.array([0.5, 0.5, 99.0, 0.5])
    ses = np.array([1.0, np.nan, np.nan, 1.0])
    assert coverage(est, ses, truth=0.5, level=0.95) == 1.0
    assert np.isnan(coverage(est, np.full(4, np.nan), truth=0.5, level=0.95))


# ------------------------------------------------------------- configuration


def test_config_validation():
    scheme = SchemeSpec(kind="tille", n=5)
    with pytest.raises(ValidationError):
        MCStudyConfig(schemes=(scheme,), n=5, reps=0)
    with pytest.raises(ValidationError):
        MCStudyConfig(schemes=(scheme,), n=5, reps=10, nominal=1.2)
    with pytest.raises(ValidationError):
        MCStudyConfig(schemes=(scheme,), n=5, reps=10, estimators=("bogus",))
    with pytest.raises(ValidationError):
        MCStudyConfig(schemes=(scheme,), n=5, reps=10, variance_methods=("magic",))
    with pytest.raises(ValidationError):
        MCStudyConfig(schemes=(), n=5, reps=10)


def test_run_study_needs_scalar_parameter():
    pop = synth_population(30, 0.4, ("lognormal", 1.0, 0.5), -0.3, seed=3)
    pop = Population(y=pop.y, c=pop.c, a=np.column_stack([np.ones(30), pop.y]))
    cfg = MCStudyConfig(schemes=(SchemeSpec(kind="tille", n=5),), n=5, reps=3)
    with pytest.raises(ValidationError):
        run_study(cfg, pop, linear_score_model(2))


# ------------------------------------------------------------------- census


def test_census_study_is_degenerate():
    rng = np.random.default_rng(5)
    y = (rng.random(12) < 0.5).astype(float)
    y[0], y[1] = 1.0, 0.0
    pop = Population(y=y, c=rng.lognormal(0.0, 0.5, 12))
    cfg = MCStudyConfig(
        schemes=(SchemeSpec(kind="tille", n=12),),
        n=12,
        reps=5,
        estimators=("ce", "ht"),
        variance_methods=("observed",),
        seed=11,
    )
    report = run_study(cfg, pop, proportion_model())
    truth = y.mean()
    assert abs(report.truth - truth) < 1e-12
    for est in ("ce", "ht"):
        cell = report.cells["tille"][est]
        assert abs(cell.mean_estimate - truth) < 1e-12
        assert cell.observed_rmse == 0.0
        assert cell.variance["observed"].coverage == 1.0
        assert cell.n_failed == 0


# ------------------------------------------------ determinism and parallelism


def _study_fixture():
    pop = synth_population(40, 0.4, ("lognormal", 1.0, 0.8), -0.5, seed=21)
    cfg = MCStudyConfig(
        schemes=(SchemeSpec(kind="tille", n=8), SchemeSpec(kind="systematic", n=8)),
        n=8,
        reps=40,
        estimators=("ce", "ht", "hajek"),
        variance_methods=("ce_sandwich", "observed", "hartley_rao", "ygs"),
        seed=303,
    )
    return pop, cfg


def _assert_reports_identical(a, b):
    da, db = a.to_dict(include_raw=True), b.to_dict(include_raw=True)

    def walk(x, y):
        assert type(x) is type(y)
        if isinstance(x, dict):
            assert x.keys() == y.keys()
            for k in x:
                walk(x[k], y[k])
        elif isinstance(x, list):
            assert len(x) == len(y)
            for u, v in zip(x, y):
                walk(u, v)
        elif isinstance(x, float) and np.isnan(x):
            assert np.isnan(y)
        else:
            assert x == y

    walk(da, db)


def test_rerun_is_bitwise_identical():
    pop, cfg = _study_fixture()
    r1 = run_study(cfg, pop, proportion_model())
    r2 = run_study(cfg, pop, proportion_model())
    _assert_reports_identical(r1, r2)


def test_parallel_equals_serial():
    pop, cfg = _study_fixture()
    r1 = run_study(cfg, pop, proportion_model(), n_jobs=1)
    r4 = run_study(cfg, pop, proportion_model(), n_jobs=4)
    _assert_reports_identical(r1, r4)


# ------------------------------------------------------------ failure handling


def _flaky_model(threshold):
    base = proportion_model()

    def psi(theta, y, a):
        if y.mean() > threshold:
            raise ConvergenceError("flaky instance")
        return base.psi(theta, y, a)

    return EstimatingFunction(
        p=1, r=1, psi=psi, dpsi=base.dpsi, domain=base.domain, name="flaky"
    )


def test_failed_replicates_excluded_with_count():
    pop = synth_population(40, 0.5, ("lognormal", 1.0, 0.6), -0.3, seed=9)
    threshold = 0.6  # some samples exceed this mean, some do not
    cfg = MCStudyConfig(
        schemes=(SchemeSpec(kind="tille", n=8),),
        n=8,
        reps=60,
        estimators=("ce", "ht"),
        variance_methods=("observed",),
        seed=17,
    )
    report = run_study(cfg, pop, _flaky_model(threshold))
    ce = report.cells["tille"]["ce"]
    ht = report.cells["tille"]["ht"]
    assert 0 < ce.n_failed < 60
    assert ht.n_failed == 0
    assert np.isfinite(ce.mean_estimate)
    # failed replicates appear as NaN in the raw estimates
    assert int(np.isnan(ce.estimates).sum()) == ce.n_failed


# ------------------------------------------------------------- NA propagation


def test_ygs_na_majority_under_systematic():
    pop = synth_population(20, 0.4, ("lognormal", 1.0, 1.5), -0.6, seed=31)
    cfg = MCStudyConfig(
        schemes=(SchemeSpec(kind="systematic", n=5),),
        n=5,
        reps=150,
        estimators=("ht",),
        variance_methods=("ygs", "observed"),
        seed=7,
    )
    report = run_study(cfg, pop, proportion_model())
    cell = report.cells["systematic"]["ht"]
    ygs = cell.variance["ygs"]
    assert ygs.na
    assert ygs.na_count > 75
    assert "ce" not in report.cells["systematic"]


# ------------------------------------------------- aggregates and histograms


def test_observed_se_semantics_and_histogram():
    pop, cfg = _study_fixture()
    report = run_study(cfg, pop, proportion_model())
    from scipy.special import ndtri

    z = ndtri(0.5 + cfg.nominal / 2.0)
    for scheme in report.cells:
        for name, cell in report.cells[scheme].items():
            est = cell.estimates[np.isfinite(cell.estimates)]
            rmse = float(np.sqrt(np.mean((est - report.truth) ** 2)))
            assert abs(cell.observed_rmse - rmse) < 1e-15
            obs = cell.variance["observed"]
            assert abs(obs.mean_se - rmse) < 1e-15
            cov = float(np.mean(np.abs(est - report.truth) <= z * rmse))
            assert abs(obs.coverage - cov) < 1e-15
            assert len(cell.hist_edges) == 51
            assert len(cell.hist_counts) == 50
            assert int(np.sum(cell.hist_counts)) == len(est)


def test_srs_equivalent_ce_coverage_band():
    rng = np.random.default_rng(2024)
    N, n, reps = 150, 30, 2000
    y = (rng.random(N) < 0.45).astype(float)
    pop = Population(y=y, c=np.ones(N))  # equal sizes: SRS without replacement
    cfg = MCStudyConfig(
        schemes=(SchemeSpec(kind="tille", n=n),),
        n=n,
        reps=reps,
        estimators=("ce",),
        variance_methods=("ce_sandwich", "observed"),
        seed=88,
    )
    report = run_study(cfg, pop, proportion_model())
    cell = report.cells["tille"]["ce"]
    assert np.all(cell.estimates[np.isfinite(cell.estimates)] >= 0.0)
    assert np.all(cell.estimates[np.isfinite(cell.estimates)] <= 1.0)
    assert 0.92 <= cell.variance["ce_sandwich"].coverage <= 0.975
    assert 0.92 <= cell.variance["observed"].coverage <= 0.975


def test_report_round_trips_to_dict():
    pop, cfg = _study_fixture()
    report = run_study(cfg, pop, proportion_model())
    d = report.to_dict()
    assert d["truth"] == report.truth
    assert d["reps"] == 40
    cell = d["cells"]["tille"]["ce"]
    assert "estimates" not in cell
    assert set(cell["variance"]) == {"ce_sandwich", "observed", "hartley_rao", "ygs"}
    raw = report.to_dict(include_raw=True)
    assert len(raw["cells"]["tille"]["ce"]["estimates"]) == 40
    import json

    json.dumps(d)  # must be JSON-serializable as-is
