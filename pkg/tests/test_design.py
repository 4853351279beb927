"""Unequal-probability sampling schemes and their inclusion probabilities.

Oracles used here:
- hand-worked capping ladders for PPS first-order probabilities;
- exhaustive enumeration of the Midzuno scheme (first unit by share, rest
  SRSWOR) for first- and second-order probabilities;
- hand-worked mod-1 arc intersections for systematic joint probabilities;
- exhaustive path enumeration over the Tille elimination table;
- binomial 3-sigma Monte Carlo bands with pinned seeds.
"""

import itertools

import numpy as np
import pytest

from surveyel.design import (
    PpsTarget,
    SchemeSpec,
    draw_midzuno,
    draw_poisson,
    draw_scheme,
    draw_systematic,
    draw_tille,
    estimate_joint_pi_mc,
    midzuno_first_order,
    pps_first_order,
    systematic_joint_pi,
    tille_joint_pi_approx,
    _tille_ladder,
)
from surveyel.errors import ValidationError

REPS = 20_000


def empirical_pi(target, spec, draw_fn, reps, seed):
    rng = np.random.default_rng(seed)
    counts = np.zeros(target.N)
    for _ in range(reps):
        s = draw_fn(target, spec, rng=rng)
        counts[s.indices] += 1
    return counts / reps


def assert_within_bands(emp, truth, reps, sigmas=3.0):
    se = np.sqrt(np.maximum(truth * (1 - truth), 1e-12) / reps)
    assert np.all(np.abs(emp - truth) <= sigmas * se + 1e-12), (
        f"max dev {np.max(np.abs(emp - truth) / np.maximum(se, 1e-300)):.2f} sigma"
    )


# ------------------------------------------------------------ first-order pps


def test_pps_equal_sizes():
    t = pps_first_order(np.ones(4), 2)
    np.testing.assert_allclose(t.pi, 0.5)
    np.testing.assert_allclose(t.p, 0.25)
    assert abs(t.p.sum() - 1.0) <= 1e-12
    assert abs(t.pi.sum() - t.n) <= 1e-9


def test_pps_capping_single():
    t = pps_first_order(np.array([10.0, 1, 1, 1, 1, 1]), 3)
    np.testing.assert_allclose(t.pi, [1.0, 0.4, 0.4, 0.4, 0.4, 0.4], atol=1e-15)


def test_pps_capping_cascade():
    t = pps_first_order(np.array([100.0, 10.0, 1.0, 1.0]), 3)
    np.testing.assert_allclose(t.pi, [1.0, 1.0, 0.5, 0.5], atol=1e-15)


def test_pps_validation():
    with pytest.raises(ValidationError):
        pps_first_order(np.array([1.0, 2.0]), 3)
    with pytest.raises(ValidationError):
        pps_first_order(np.array([1.0, -2.0, 3.0]), 2)
    t = pps_first_order(np.array([3.0, 2.0, 1.0]), 3)
    np.testing.assert_allclose(t.pi, 1.0)


def test_scheme_spec_validation():
    with pytest.raises(ValidationError):
        SchemeSpec("bogus", 5)
    with pytest.raises(ValidationError):
        SchemeSpec("tille", 0)
    with pytest.raises(ValidationError):
        SchemeSpec("tille", 5, frame_order="shuffled")


# ------------------------------------------------------------ systematic


def hand_case_systematic():
    # pi = (0.9, 0.5, 0.4, 0.2), n = 2; hand-worked arc intersections
    pi = np.array([0.9, 0.5, 0.4, 0.2])
    target = PpsTarget(p=pi / pi.sum(), pi=pi, n=2)
    truth = {
        (0, 1): 0.4, (0, 2): 0.4, (0, 3): 0.1,
        (1, 2): 0.0, (1, 3): 0.1, (2, 3): 0.0,
    }
    return target, truth


def test_systematic_joint_matches_hand_arcs():
    target, truth = hand_case_systematic()
    jp = systematic_joint_pi(target.pi, np.arange(4))
    for (i, j), v in truth.items():
        assert abs(jp[i, j] - v) <= 1e-12
        assert abs(jp[j, i] - v) <= 1e-12
    np.testing.assert_allclose(np.diag(jp), target.pi, atol=1e-12)
    # fixed-size identity: sum_j!=i pi_ij = (n-1) pi_i
    off = jp.copy()
    np.fill_diagonal(off, 0.0)
    np.testing.assert_allclose(off.sum(axis=1), (target.n - 1) * target.pi, atol=1e-12)


def test_systematic_draw_fixed_size_and_structural_zero():
    target, truth = hand_case_systematic()
    spec = SchemeSpec("systematic", 2)
    rng = np.random.default_rng(101)
    counts = np.zeros(4)
    for _ in range(REPS):
        s = draw_systematic(target, spec, rng=rng)
        assert s.n == 2
        counts[s.indices] += 1
        pair = tuple(sorted(s.indices))
        assert pair not in [(1, 2), (2, 3)]  # structural zeros never drawn
    assert_within_bands(counts / REPS, target.pi, REPS)


def test_systematic_draw_attaches_exact_joint():
    target, truth = hand_case_systematic()
    s = draw_systematic(target, SchemeSpec("systematic", 2, seed=7))
    i, j = sorted(s.indices)
    assert abs(s.joint_pi[0, 1] - truth[(i, j)]) <= 1e-12


def test_systematic_randomized_order_keeps_first_order():
    c = np.exp(np.random.default_rng(3).normal(size=12))
    target = pps_first_order(c, 4)
    spec = SchemeSpec("systematic", 4, frame_order="randomized")
    emp = empirical_pi(target, spec, draw_systematic, REPS, seed=11)
    assert_within_bands(emp, target.pi, REPS)


def test_systematic_certainty_units_always_included():
    t = pps_first_order(np.array([10.0, 1, 1, 1, 1, 1]), 3)
    rng = np.random.default_rng(5)
    for _ in range(200):
        s = draw_systematic(t, SchemeSpec("systematic", 3), rng=rng)
        assert 0 in s.indices and s.n == 3


# ------------------------------------------------------------ midzuno


def midzuno_enumeration(p, n):
    """Exhaustive first/second-order probabilities for the Midzuno scheme."""
    N = len(p)
    first = np.zeros(N)
    joint = np.zeros((N, N))
    for f in range(N):
        others = [u for u in range(N) if u != f]
        for rest in itertools.combinations(others, n - 1):
            prob = p[f] / len(list(itertools.combinations(others, n - 1)))
            sample = set((f,) + rest)
            for i in sample:
                first[i] += prob
                for j in sample:
                    if j > i:
                        joint[i, j] += prob
                        joint[j, i] += prob
    return first, joint


def test_midzuno_closed_forms_match_enumeration_exactly():
    p = np.array([0.4, 0.3, 0.1, 0.1, 0.1])
    n, N = 2, 5
    first_ref, joint_ref = midzuno_enumeration(p, n)

    pi = midzuno_first_order(p, n)
    np.testing.assert_allclose(pi, first_ref, atol=1e-12)
    assert abs(pi[0] - 0.55) <= 1e-12  # 0.4 * 3/4 + 1/4

    target = PpsTarget(p=p, pi=pps_first_order(p, n).pi, n=n)
    s = draw_midzuno(target, SchemeSpec("midzuno", n, seed=3))
    i, j = s.indices
    assert abs(s.joint_pi[0, 1] - joint_ref[i, j]) <= 1e-12
    np.testing.assert_allclose(s.pi, pi[s.indices], atol=1e-12)


def test_midzuno_empirical_matches_induced_pi():
    c = np.exp(np.random.default_rng(8).normal(size=10))
    target = pps_first_order(c, 3)
    spec = SchemeSpec("midzuno", 3)
    emp = empirical_pi(target, spec, draw_midzuno, REPS, seed=21)
    induced = midzuno_first_order(target.p, 3)
    assert_within_bands(emp, induced, REPS)
    # the scheme reports its induced pi, not the raw pps target
    assert np.max(np.abs(induced - target.pi)) > 1e-3


def test_midzuno_n_equals_N():
    p = np.array([0.7, 0.2, 0.1])
    np.testing.assert_allclose(midzuno_first_order(p, 3), 1.0, atol=1e-15)


# ------------------------------------------------------------ tille


def test_tille_ladder_probabilities_sum_to_one():
    c = np.exp(np.random.default_rng(17).normal(size=30) * 1.5)
    ladder = _tille_ladder(c, 6)
    for step in ladder.steps:
        total = step.boundary_v.sum() + step.n_common * step.common_v
        assert abs(total - 1.0) <= 1e-9
        assert np.all(step.boundary_v >= -1e-12) and step.common_v >= -1e-12


def enumerate_tille(c, n):
    """Exact inclusion probabilities by exhaustive elimination-path walk."""
    c = np.asarray(c, dtype=float)
    ladder = _tille_ladder(c, n)
    N = len(c)
    prob_in = np.zeros(N)

    def walk(step_idx, alive, prob):
        if step_idx == len(ladder.steps):
            for u in alive:
                prob_in[u] += prob
            return
        step = ladder.steps[step_idx]
        branches = []
        for u, v in zip(ladder.order[step.boundary_slice], step.boundary_v):
            branches.append((int(u), float(v)))
        for u in alive:
            if u in ladder.common_members(step_idx):
                branches.append((int(u), float(step.common_v)))
        total = 0.0
        for u, v in branches:
            if v <= 0:
                continue
            total += v
            walk(step_idx + 1, alive - {u}, prob * v)
        assert abs(total - 1.0) <= 1e-9

    walk(0, set(range(N)), 1.0)
    return prob_in


def test_tille_exact_by_path_enumeration():
    for c, n in [([2.0, 1.0, 1.0], 1), ([5.0, 3.0, 2.0, 1.0], 2), ([8.0, 4.0, 2.0, 1.0, 1.0], 2)]:
        target = pps_first_order(np.array(c), n)
        prob = enumerate_tille(np.array(c), n)
        np.testing.assert_allclose(prob, target.pi, atol=1e-10)


def test_tille_equal_sizes_reduces_to_srswor():
    # exactly equal sizes leave the top ladder level uncapped under
    # floating-point classification; the drawn frequencies must still be n/N
    target = pps_first_order(np.ones(6), 3)
    spec = SchemeSpec(kind="tille", n=3)
    rng = np.random.default_rng(5)
    reps = 40_000
    counts = np.zeros(6)
    for _ in range(reps):
        d = draw_scheme(target, spec, rng)
        assert d.n == 3
        counts[d.indices] += 1
    emp = counts / reps
    band = 4.0 * np.sqrt(0.5 * 0.5 / reps)
    assert np.all(np.abs(emp - 0.5) < band)


def test_tille_one_elimination_step_case():
    # n = N - 1: one step, elimination probabilities are exactly 1 - pi_i
    c = np.array([4.0, 3.0, 2.0, 1.0])
    target = pps_first_order(c, 3)
    rng = np.random.default_rng(33)
    excl = np.zeros(4)
    for _ in range(REPS):
        s = draw_tille(target, SchemeSpec("tille", 3), rng=rng)
        assert s.n == 3
        out = set(range(4)) - set(s.indices.tolist())
        excl[out.pop()] += 1
    assert_within_bands(excl / REPS, 1.0 - target.pi, REPS)


def test_tille_empirical_first_order():
    c = np.exp(np.random.default_rng(2).normal(size=20) * 1.2)
    target = pps_first_order(c, 5)
    spec = SchemeSpec("tille", 5)
    emp = empirical_pi(target, spec, draw_tille, REPS, seed=44)
    assert_within_bands(emp, target.pi, REPS)


def test_tille_certainty_units():
    t = pps_first_order(np.array([10.0, 1, 1, 1, 1, 1]), 3)
    rng = np.random.default_rng(5)
    for _ in range(200):
        s = draw_tille(t, SchemeSpec("tille", 3), rng=rng)
        assert 0 in s.indices and s.n == 3


def test_tille_joint_approx_close_to_mc():
    c = np.exp(np.random.default_rng(14).normal(size=20) * 1.2)
    target = pps_first_order(c, 5)
    reps = 40_000
    jp_mc = estimate_joint_pi_mc(target, SchemeSpec("tille", 5), reps=reps, seed=4)
    approx = tille_joint_pi_approx(target.pi, np.arange(20))
    # compare only cells the MC run can resolve (expected count >= 50)
    mask = ~np.eye(20, dtype=bool) & (approx * reps >= 50)
    assert mask.sum() > 200
    rel = np.abs(approx[mask] - jp_mc[mask]) / jp_mc[mask]
    assert np.median(rel) <= 0.10
    assert np.mean(rel) <= 0.15


# ------------------------------------------------------------ poisson


def test_poisson_joint_is_product_and_size_varies():
    c = np.exp(np.random.default_rng(6).normal(size=15))
    target = pps_first_order(c, 4)
    spec = SchemeSpec("poisson", 4)
    rng = np.random.default_rng(9)
    sizes = []
    counts = np.zeros(15)
    for _ in range(REPS):
        s = draw_poisson(target, spec, rng=rng)
        sizes.append(s.n)
        counts[s.indices] += 1
        if s.n >= 2:
            assert abs(s.joint_pi[0, 1] - s.pi[0] * s.pi[1]) <= 1e-12
    assert len(set(sizes)) > 1  # random size
    assert_within_bands(counts / REPS, target.pi, REPS)


def test_poisson_empty_sample_redrawn_with_counter():
    # 50 equal units at n=1 -> pi = 0.02 each, empty draws are common
    target = pps_first_order(np.ones(50), 1)
    rng = np.random.default_rng(12)
    redraws = 0
    for _ in range(300):
        s = draw_poisson(target, SchemeSpec("poisson", 1), rng=rng)
        assert s.n >= 1
        redraws += s.meta["redraws"]
    assert redraws > 0


# ------------------------------------------------------------ MC joint


def test_estimate_joint_pi_mc_deterministic_and_consistent():
    c = np.array([5.0, 4.0, 3.0, 2.0, 1.0, 1.0])
    target = pps_first_order(c, 3)
    spec = SchemeSpec("midzuno", 3)
    jp1 = estimate_joint_pi_mc(target, spec, reps=30_000, seed=123)
    jp2 = estimate_joint_pi_mc(target, spec, reps=30_000, seed=123)
    np.testing.assert_array_equal(jp1, jp2)

    # fixed-size designs satisfy sum_{j != i} pi_ij = (n-1) pi_i exactly
    # for the *empirical* matrix (counting identity)
    off = jp1.copy()
    np.fill_diagonal(off, 0.0)
    np.testing.assert_allclose(off.sum(axis=1), 2.0 * np.diag(jp1), atol=1e-12)

    # and it should agree with the Midzuno closed form within 3 sigma
    induced = midzuno_first_order(target.p, 3)
    pij = np.empty((6, 6))
    for i in range(6):
        for j in range(6):
            if i == j:
                pij[i, j] = induced[i]
            else:
                pij[i, j] = (
                    (target.p[i] + target.p[j]) * 2 / 5
                    + (1 - target.p[i] - target.p[j]) * 2 * 1 / (5 * 4)
                )
    se = np.sqrt(pij * (1 - pij) / 30_000)
    assert np.all(np.abs(jp1 - pij) <= 3.5 * se + 1e-12)


def test_estimate_joint_pi_mc_all_schemes_run():
    c = np.array([4.0, 3.0, 2.0, 1.0, 1.0])
    target = pps_first_order(c, 2)
    for kind in ["tille", "midzuno", "systematic", "poisson"]:
        jp = estimate_joint_pi_mc(target, SchemeSpec(kind, 2), reps=2000, seed=1)
        assert jp.shape == (5, 5)
        assert np.all(jp >= 0) and np.all(jp <= 1)
