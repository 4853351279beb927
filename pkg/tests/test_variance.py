"""Tests for variance estimators and classical point estimators.

Oracles:
- hand arithmetic on a 4-point fixture (sandwich value 152/2401);
- the closed-form proportion variance, recomputed from scratch;
- the i.i.d. sandwich at equal visibilities;
- exact SRS algebra for the Hartley-Rao reduction;
- exhaustive enumeration of all 15 SRSWOR samples at N=6, n=2 for the
  Yates-Grundy-Sen estimator (per-sample identity and unbiasedness);
- a Monte Carlo comparison of mean(HR estimate) vs the empirical
  variance of the HT estimator over 10k unequal-probability draws.
"""

import itertools

import numpy as np
import pytest

from surveyel.design import (
    SchemeSpec,
    draw_scheme,
    pps_first_order,
    systematic_joint_pi,
)
from surveyel.el import maximize_ce
from surveyel.errors import SingularModelError, ValidationError
from surveyel.model import (
    EstimatingFunction,
    linear_score_model,
    mean_model,
    proportion_model,
)
from surveyel.population import SampleData, synth_population
from surveyel.variance import (
    VarianceEstimate,
    hajek_mean,
    hartley_rao_var,
    ht_mean,
    kappa_covariance,
    prediction_variance,
    sandwich_vce,
    ygs_var,
)


def _proportion_solution(y, pi):
    return maximize_ce(proportion_model(), SampleData(y=y), nu=pi)


# --------------------------------------------------------------- sandwich_vce


def test_sandwich_hand_worked_example():
    y = np.array([1.0, 0.0, 0.0, 1.0])
    pi = np.array([0.4, 0.2, 0.2, 0.2])
    sol = _proportion_solution(y, pi)
    assert abs(sol.theta_hat[0] - 0.428571) < 5e-7
    est = sandwich_vce(sol, SampleData(y=y), proportion_model())
    assert est.method == "ce_sandwich"
    assert est.valid
    v = float(np.asarray(est.value).reshape(()))
    assert abs(v - 152.0 / 2401.0) < 1e-15
    assert abs(v - 0.063307) < 5e-7


def test_sandwich_equals_closed_form_proportion():
    rng = np.random.default_rng(17)
    model = proportion_model()
    for _ in range(20):
        n = int(rng.integers(5, 31))
        y = (rng.random(n) < 0.5).astype(float)
        y[0], y[1] = 1.0, 0.0
        pi = rng.uniform(0.05, 0.9, n)
        sol = _proportion_solution(y, pi)
        est = sandwich_vce(sol, SampleData(y=y), model)
        p_hat = (y / pi).sum() / (1.0 / pi).sum()
        closed = float(((y - p_hat) ** 2 / pi**2).sum() / (1.0 / pi).sum() ** 2)
        assert abs(float(np.asarray(est.value).reshape(())) - closed) <= 1e-12


def test_sandwich_iid_reduction_mean_model():
    rng = np.random.default_rng(4)
    y = rng.normal(2.0, 1.3, 37)
    n = len(y)
    sol = maximize_ce(mean_model(), SampleData(y=y), nu=np.ones(n))
    est = sandwich_vce(sol, SampleData(y=y), mean_model())
    direct = ((y - y.mean()) ** 2).sum() / n**2
    assert abs(float(np.asarray(est.value).reshape(())) - direct) < 1e-14


def test_sandwich_zero_matrix_on_perfect_fit():
    rng = np.random.default_rng(6)
    A = np.column_stack([np.ones(12), rng.normal(size=12)])
    beta = np.array([0.7, -1.1])
    y = A @ beta  # no noise: residuals vanish at the solution
    model = linear_score_model(2)
    sol = maximize_ce(model, SampleData(y=y, a=A), nu=np.ones(12))
    assert np.allclose(sol.theta_hat, beta, atol=1e-9)
    est = sandwich_vce(sol, SampleData(y=y, a=A), model)
    assert est.valid
    assert np.allclose(np.asarray(est.value), 0.0)
    assert np.asarray(est.value).shape == (2, 2)


def test_sandwich_symmetric_psd_linear_model():
    rng = np.random.default_rng(23)
    n = 60
    A = np.column_stack([np.ones(n), rng.normal(size=n)])
    y = A @ np.array([1.0, 0.5]) + rng.normal(0, 0.4, n)
    model = linear_score_model(2)
    nu = rng.lognormal(0.0, 0.4, n)
    sol = maximize_ce(model, SampleData(y=y, a=A), nu=nu)
    est = sandwich_vce(sol, SampleData(y=y, a=A), model)
    V = np.asarray(est.value)
    assert V.shape == (2, 2)
    assert np.allclose(V, V.T, atol=1e-14)
    assert np.all(np.linalg.eigvalsh(V) >= -1e-14)


def test_sandwich_singular_error_on_collinear_auxiliaries():
    rng = np.random.default_rng(31)
    n = 20
    x = rng.normal(size=n)
    A = np.column_stack([x, x])  # rank 1
    y = x + rng.normal(0, 0.1, n)
    model = linear_score_model(2)
    # solving would already fail; construct the state by hand instead
    from surveyel.el import ELSolution

    sol = ELSolution(
        theta_hat=np.array([0.5, 0.5]),
        kappa_hat=np.zeros(2),
        weights=np.full(n, 1.0 / n),
        upsilon_hat=1.0,
        loglik=0.0,
        iterations={"outer": 1, "inner": 0},
        converged=True,
        path="ipw_score",
    )
    with pytest.raises(SingularModelError):
        sandwich_vce(sol, SampleData(y=y, a=A), model)


# ----------------------------------------------------------- kappa_covariance


def _over_identified_model(known_var=1.0):
    def psi(theta, y, a):
        th = np.atleast_1d(theta)
        return np.column_stack([y - th[0], y**2 - known_var - th[0] ** 2])

    def dpsi(theta, y, a):
        th = np.atleast_1d(theta)
        out = np.empty((len(y), 2, 1))
        out[:, 0, 0] = -1.0
        out[:, 1, 0] = -2.0 * th[0]
        return out

    return EstimatingFunction(
        p=1, r=2, psi=psi, dpsi=dpsi,
        domain=(np.array([-np.inf]), np.array([np.inf])),
        name="mean-known-variance",
    )


def test_kappa_covariance_zero_when_just_identified():
    y = np.array([1.0, 0.0, 0.0, 1.0])
    pi = np.array([0.4, 0.2, 0.2, 0.2])
    sol = _proportion_solution(y, pi)
    vk = kappa_covariance(sol, SampleData(y=y), proportion_model())
    assert np.allclose(vk, 0.0, atol=1e-10)


def test_kappa_covariance_matches_direct_arithmetic():
    model = _over_identified_model()
    rng = np.random.default_rng(12)
    y = rng.normal(0.2, 1.1, 30)
    data = SampleData(y=y)
    sol = maximize_ce(model, data, nu=np.ones(30), path="el_profile")
    vk = kappa_covariance(sol, data, model)

    # direct evaluation from scratch
    w = sol.weights
    psi = model.psi(sol.theta_hat, y, None)
    dpsi = model.dpsi(sol.theta_hat, y, None)
    G = np.einsum("i,irp->rp", w, dpsi)
    Gs = (psi * w[:, None]).T @ (psi * w[:, None])
    V = np.linalg.inv(G.T @ np.linalg.solve(Gs, G))
    expected = np.linalg.solve(Gs, np.eye(2) - G @ V @ G.T @ np.linalg.inv(Gs))
    assert np.allclose(vk, expected, atol=1e-10)
    assert np.allclose(vk, vk.T, atol=1e-10)


# ------------------------------------------------------------- point estimates


def test_ht_and_hajek_hand_values():
    y = np.array([1.0, 0.0, 0.0, 1.0])
    pi = np.array([0.4, 0.2, 0.2, 0.2])
    assert abs(ht_mean(y, pi, N=10) - 0.75) < 1e-14
    assert abs(hajek_mean(y, pi) - 3.0 / 7.0) < 1e-14


def test_ht_hajek_reduce_to_sample_mean_under_srs():
    y = np.array([3.0, 5.0, 1.0, 7.0])
    pi = np.full(4, 4.0 / 10.0)
    assert abs(ht_mean(y, pi, N=10) - y.mean()) < 1e-12
    assert abs(hajek_mean(y, pi) - y.mean()) < 1e-12


# -------------------------------------------------------------- hartley_rao


def test_hartley_rao_srs_reduction_exact_algebra():
    rng = np.random.default_rng(3)
    N, n = 100, 10
    y = rng.normal(10.0, 2.0, n)
    pi = np.full(n, n / N)
    est = hartley_rao_var(y, pi, denom=N)
    assert est.method == "hartley_rao"
    s2 = y.var(ddof=1)
    # the reduction is exact algebra: factor (1 - (n-1)/N) instead of (1 - n/N)
    expected = (1.0 - (n - 1) / N) * s2 / n
    assert abs(est.value - expected) < 1e-14
    srs = (1.0 - n / N) * s2 / n
    assert abs(est.value / srs - 1.0) < 0.02


def test_hartley_rao_zero_for_constant_ratios():
    pi = np.array([0.1, 0.2, 0.4])
    y = 5.0 * pi  # y_i / pi_i constant
    est = hartley_rao_var(y, pi, denom=10.0)
    assert est.valid
    assert abs(est.value) < 1e-20


def test_hartley_rao_needs_two_units():
    with pytest.raises(ValidationError):
        hartley_rao_var(np.array([1.0]), np.array([0.5]), denom=10.0)


def test_hartley_rao_tracks_mc_variance_and_ht_unbiased():
    pop = synth_population(200, 0.35, ("lognormal", 2.0, 0.7), -0.4, seed=99)
    n = 10
    target = pps_first_order(pop.c, n)
    spec = SchemeSpec(kind="tille", n=n)
    rng = np.random.default_rng(512)
    reps = 10_000
    ht_vals = np.empty(reps)
    hr_vals = np.empty(reps)
    for r in range(reps):
        draw = draw_scheme(target, spec, rng)
        ys = pop.y[draw.indices]
        ht_vals[r] = ht_mean(ys, draw.pi, N=pop.N)
        hr_vals[r] = hartley_rao_var(ys, draw.pi, denom=pop.N).value
    # design unbiasedness of the HT mean (3 sigma MC band)
    se_mc = ht_vals.std(ddof=1) / np.sqrt(reps)
    assert abs(ht_vals.mean() - pop.y.mean()) < 3.0 * se_mc
    # first-order approximation tracks the empirical variance
    assert abs(hr_vals.mean() / ht_vals.var(ddof=1) - 1.0) < 0.15


# ----------------------------------------------------------------------- ygs


def test_ygs_zero_under_poisson_products():
    pi = np.array([0.3, 0.5, 0.7])
    joint = np.outer(pi, pi)
    np.fill_diagonal(joint, pi)
    est = ygs_var(np.array([1.0, 4.0, 2.0]), pi, joint, denom=10.0)
    assert est.valid
    assert abs(est.value) < 1e-18


def test_ygs_exhaustive_srswor_enumeration():
    # N=6, n=2 SRSWOR: pi = 1/3, pi_ij = 1/15
    y_pop = np.array([2.0, 5.0, 1.0, 7.0, 4.0, 3.0])
    N, n = 6, 2
    pi_val = n / N
    pij_val = n * (n - 1) / (N * (N - 1))
    joint = np.array([[pi_val, pij_val], [pij_val, pi_val]])
    pi = np.full(2, pi_val)

    vals = []
    for i, j in itertools.combinations(range(N), 2):
        ys = y_pop[[i, j]]
        est = ygs_var(ys, pi, joint, denom=N)
        assert est.valid
        # per-sample identity with the textbook SRS estimate of the mean
        s2 = ys.var(ddof=1)
        textbook = (1.0 - n / N) * s2 / n
        assert abs(est.value - textbook) < 1e-12
        vals.append(est.value)
    # exact design-unbiasedness over all 15 equally likely samples
    S2 = y_pop.var(ddof=1)
    true_var = (1.0 - n / N) * S2 / n
    assert abs(np.mean(vals) - true_var) < 1e-12


def test_ygs_na_on_structural_zero_pair():
    pi = np.array([0.9, 0.5, 0.4, 0.2])
    # units 1 and 2 can never appear together under the lattice design
    joint = systematic_joint_pi(pi, np.array([1, 2]))
    est = ygs_var(np.array([1.0, 0.0]), pi[[1, 2]], joint, denom=4.0)
    assert not est.valid


def test_ygs_na_on_negative_estimate():
    pi = np.array([0.9, 0.5, 0.4, 0.2])
    joint = systematic_joint_pi(pi, np.array([0, 2]))
    # pi_02 = 0.4 > pi_0 * pi_2 = 0.36, so the single pair term is negative
    est = ygs_var(np.array([1.0, 0.0]), pi[[0, 2]], joint, denom=4.0)
    assert not est.valid
    # never negative with valid=True, by construction
    with pytest.raises(ValidationError):
        VarianceEstimate(value=-0.5, method="ygs", valid=True)


def test_ygs_requires_joint():
    with pytest.raises(ValidationError) as ei:
        ygs_var(np.array([1.0, 0.0]), np.array([0.5, 0.5]), None, denom=4.0)
    assert "joint" in str(ei.value).lower()


# ----------------------------------------------------------------- prediction


def test_prediction_fpc_scaling():
    base = VarianceEstimate(value=0.02, method="ce_sandwich", valid=True)
    est = prediction_variance(base, n=40, N=4600)
    assert est.method == "prediction_fpc"
    assert abs(est.value - 0.02 * (1.0 - 40.0 / 4600.0)) < 1e-18
    assert abs(est.value / 0.02 - 0.99130) < 1e-4
    census = prediction_variance(base, n=100, N=100)
    assert census.value == 0.0
    with pytest.raises(ValidationError):
        prediction_variance(base, n=0, N=100)


def test_variance_estimate_validation():
    with pytest.raises(ValidationError):
        VarianceEstimate(value=0.1, method="not-a-method", valid=True)
