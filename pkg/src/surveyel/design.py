"""Unequal-probability sampling designs over a finite frame.

Provides probability-proportional-to-size (PPS) first-order targets with
iterative capping, and four without-replacement schemes:

- ``systematic``: cumulative-probability systematic sampling (fixed size),
  with exact pairwise probabilities from mod-1 arc intersections;
- ``midzuno``: first unit drawn by size share, the rest by simple random
  sampling; first- and second-order probabilities in closed form;
- ``tille``: the elimination scheme — one unit is removed per step with
  probabilities that keep the survivors' inclusion probabilities on the
  capped-PPS ladder, so realized first-order probabilities equal the target;
- ``poisson``: independent Bernoulli draws (random size), empty samples are
  redrawn and counted.

Pairwise probabilities for the Tille scheme have no cheap closed form; use
:func:`estimate_joint_pi_mc` at validation scale or
:func:`tille_joint_pi_approx` (the classical high-entropy approximation)
at study scale.
"""

from __future__ import annotations

import bisect
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .errors import ConvergenceError, ValidationError
from .population import SampleDraw

Array = np.ndarray

SCHEME_KINDS = ("tille", "midzuno", "systematic", "poisson")
FRAME_ORDERS = ("as-given", "randomized")


@dataclass(frozen=True)
class PpsTarget:
    """Size shares and capped first-order inclusion probabilities.

    Invariants: ``p`` sums to 1 (1e-12), ``pi`` sums to ``n`` (1e-9) and
    lies in (0, 1].
    """

    p: Array
    pi: Array
    n: int

    def __post_init__(self):
        p = np.asarray(self.p, dtype=float)
        pi = np.asarray(self.pi, dtype=float)
        object.__setattr__(self, "p", p)
        object.__setattr__(self, "pi", pi)
        if p.shape != pi.shape or p.ndim != 1:
            raise ValidationError("p and pi must be 1-d arrays of equal length")
        if np.any(p < 0) or abs(p.sum() - 1.0) > 1e-12:
            raise ValidationError("shares p must be non-negative and sum to 1")
        if np.any(pi <= 0) or np.any(pi > 1.0 + 1e-12):
            raise ValidationError("inclusion probabilities must lie in (0, 1]")
        if abs(pi.sum() - self.n) > 1e-9:
            raise ValidationError(
                f"inclusion probabilities sum to {pi.sum():.12g}, expected n={self.n}"
            )

    @property
    def N(self) -> int:
        return self.p.size


@dataclass(frozen=True)
class SchemeSpec:
    """Which scheme to run, at what size, in what frame order."""

    kind: str
    n: int
    frame_order: str = "as-given"
    seed: int | None = None

    def __post_init__(self):
        if self.kind not in SCHEME_KINDS:
            raise ValidationError(f"unknown scheme '{self.kind}'; choose from {SCHEME_KINDS}")
        if self.n < 1:
            raise ValidationError("sample size n must be at least 1")
        if self.frame_order not in FRAME_ORDERS:
            raise ValidationError(f"frame_order must be one of {FRAME_ORDERS}")


def pps_first_order(c, n: int) -> PpsTarget:
    """Capped PPS inclusion probabilities: pi_i = min(1, n c_i / sum c).

    Units whose uncapped probability reaches 1 are fixed at 1 and the
    remaining sample size is redistributed over the rest, repeatedly, until
    no new unit caps. The result satisfies ``sum(pi) == n``.
    """
    c = np.asarray(c, dtype=float)
    if c.ndim != 1 or c.size == 0:
        raise ValidationError("sizes must be a non-empty 1-d array")
    if np.any(~np.isfinite(c)) or np.any(c <= 0):
        raise ValidationError("sizes must be positive and finite")
    N = c.size
    if not 1 <= n <= N:
        raise ValidationError(f"need 1 <= n <= N={N}, got n={n}")

    pi = np.ones(N)
    capped = np.zeros(N, dtype=bool)
    while True:
        free = ~capped
        n_free = n - int(capped.sum())
        total = c[free].sum()
        pi[free] = n_free * c[free] / total
        newly = free & (pi >= 1.0)
        if not newly.any():
            break
        capped |= newly
        pi[capped] = 1.0
    if np.any(pi[~capped] <= 0):
        raise ValidationError(
            "size skew leaves some units with zero inclusion probability; "
            "reduce n or trim extreme sizes"
        )
    return PpsTarget(p=c / c.sum(), pi=pi, n=n)


def _rng_for(spec: SchemeSpec, rng):
    return np.random.default_rng(spec.seed) if rng is None else rng


# --------------------------------------------------------------- systematic


def _arc_overlap(start1, len1, start2, len2):
    """Measure of the intersection of two arcs [s, s+l) on the unit circle."""
    d = (start2 - start1) % 1.0

    def seg(dd):
        return np.maximum(0.0, np.minimum(len1, dd + len2) - np.maximum(0.0, dd))

    return seg(d) + seg(d - 1.0)


def systematic_joint_pi(pi, indices) -> Array:
    """Exact pairwise inclusion probabilities for cumulative systematic sampling.

    ``pi`` is the full probability vector in the frame order actually used;
    ``indices`` selects the units for which the (k x k) matrix is returned.
    Unit i occupies the arc [C_{i-1}, C_i) mod 1 of the unit circle, where C
    is the cumulative sum of ``pi``; a pair is co-sampled exactly when the
    systematic start falls in the intersection of the two arcs.
    """
    pi = np.asarray(pi, dtype=float)
    idx = np.asarray(indices, dtype=np.int64)
    cum = np.cumsum(pi)
    starts = (cum - pi) % 1.0
    s = starts[idx]
    l = pi[idx]
    jp = _arc_overlap(s[:, None], l[:, None], s[None, :], l[None, :])
    jp[np.diag_indices_from(jp)] = l
    return jp


def draw_systematic(target: PpsTarget, spec: SchemeSpec, rng=None) -> SampleDraw:
    """One cumulative systematic sample of fixed size ``target.n``."""
    rng = _rng_for(spec, rng)
    N = target.N
    if spec.frame_order == "randomized":
        order = rng.permutation(N)
    else:
        order = np.arange(N)
    pi_ord = target.pi[order]
    cum = np.concatenate([[0.0], np.cumsum(pi_ord)])
    u = rng.random()
    points = u + np.arange(target.n)
    pos = np.searchsorted(cum, points, side="right") - 1
    pos = np.clip(pos, 0, N - 1)
    jp_ord = systematic_joint_pi(pi_ord, pos)
    indices = order[pos]
    sorter = np.argsort(indices)
    return SampleDraw(
        indices=indices[sorter],
        pi=pi_ord[pos][sorter],
        joint_pi=jp_ord[np.ix_(sorter, sorter)],
        scheme="systematic",
        meta={"frame_order": spec.frame_order},
    )


# ------------------------------------------------------------------ midzuno


def midzuno_first_order(p, n: int) -> Array:
    """Inclusion probabilities induced by the Midzuno scheme.

    pi_i = p_i (N - n) / (N - 1) + (n - 1) / (N - 1); these — not the raw
    PPS target — are the probabilities of the scheme actually run.
    """
    p = np.asarray(p, dtype=float)
    N = p.size
    if not 1 <= n <= N:
        raise ValidationError(f"need 1 <= n <= N={N}, got n={n}")
    if N == 1:
        return np.ones(1)
    return p * (N - n) / (N - 1) + (n - 1) / (N - 1)


def midzuno_joint_pi(p, n: int, indices) -> Array:
    """Closed-form pairwise probabilities for the Midzuno scheme (k x k)."""
    p = np.asarray(p, dtype=float)
    N = p.size
    idx = np.asarray(indices, dtype=np.int64)
    sub = p[idx]
    k = idx.size
    if n < 2:
        jp = np.zeros((k, k))
    elif N == 2:
        jp = np.ones((k, k))
    else:
        pair_sum = sub[:, None] + sub[None, :]
        jp = pair_sum * (n - 1) / (N - 1) + (1.0 - pair_sum) * (
            (n - 1) * (n - 2) / ((N - 1) * (N - 2))
        )
    first = midzuno_first_order(p, n)[idx]
    jp[np.diag_indices_from(jp)] = first
    return jp


def draw_midzuno(target: PpsTarget, spec: SchemeSpec, rng=None) -> SampleDraw:
    """One Midzuno sample: first unit by share p, remainder by SRSWOR."""
    rng = _rng_for(spec, rng)
    N = target.N
    n = target.n
    cum = np.cumsum(target.p)
    first = int(np.searchsorted(cum, rng.random() * cum[-1], side="right"))
    first = min(first, N - 1)
    if n > 1:
        rest_pool = np.delete(np.arange(N), first)
        rest = rng.choice(rest_pool, size=n - 1, replace=False)
        indices = np.sort(np.concatenate([[first], rest]))
    else:
        indices = np.array([first])
    return SampleDraw(
        indices=indices,
        pi=midzuno_first_order(target.p, n)[indices],
        joint_pi=midzuno_joint_pi(target.p, n, indices),
        scheme="midzuno",
    )


# -------------------------------------------------------------------- tille


@dataclass(frozen=True)
class _TilleStep:
    """One elimination step, going from k+1 survivors down to k.

    Units are referenced through positions in the size-sorted order.
    Survivors capped at level k are never eliminated; 'boundary' units
    (capped at k+1 but not at k, sorted positions [m_low, m_high)) carry
    individual elimination probabilities; every other survivor shares the
    common probability ``common_v``.
    """

    m_low: int
    m_high: int
    boundary_v: Array
    boundary_cum: list
    common_v: float
    n_common: int

    @property
    def boundary_slice(self) -> slice:
        return slice(self.m_low, self.m_high)


@dataclass(frozen=True)
class _TilleLadder:
    order: Array           # original indices sorted by decreasing size
    steps: list            # steps for k = N-1 down to n
    n: int

    def common_members(self, step_idx: int) -> frozenset:
        """Units eligible for the common elimination probability at a step."""
        return frozenset(int(x) for x in self.order[self.steps[step_idx].m_high:])


@lru_cache(maxsize=32)
def _tille_ladder_cached(c_bytes: bytes, N: int, n: int) -> _TilleLadder:
    c = np.frombuffer(c_bytes, dtype=float)
    order = np.argsort(-c, kind="stable")
    cs = c[order]
    # tail[m] = sum of sizes of all units except the m largest
    tail = np.concatenate([np.cumsum(cs[::-1])[::-1], [0.0]])

    # m_of[k - n] = number of units capped at ladder level k, for k = n..N;
    # a unit is capped when its uncapped PPS probability would reach 1
    m_of = np.empty(N - n + 1, dtype=np.int64)
    m = 0
    for k in range(n, N + 1):
        while m < N and (k - m) * cs[m] >= tail[m] - 1e-15 * tail[m]:
            m += 1
        m_of[k - n] = m

    steps = []
    for k in range(N - 1, n - 1, -1):
        m_low = int(m_of[k - n])
        m_high = int(m_of[k + 1 - n])
        k_low, k_high = k - m_low, k + 1 - m_high
        rate_low = k_low / tail[m_low] if tail[m_low] > 0 else 0.0
        rate_high = k_high / tail[m_high] if tail[m_high] > 0 else 0.0
        boundary_v = 1.0 - rate_low * cs[m_low:m_high]
        common_v = 1.0 - rate_low / rate_high if rate_high > 0 else 0.0
        n_common = (k + 1) - m_high
        total = boundary_v.sum() + n_common * common_v
        if abs(total - 1.0) > 1e-9 or np.any(boundary_v < -1e-12) or common_v < -1e-12:
            raise ValidationError(
                "elimination probabilities are inconsistent (extreme size skew); "
                "cap the sizes or reduce n"
            )
        boundary_v = np.clip(boundary_v, 0.0, None)
        steps.append(
            _TilleStep(
                m_low=m_low,
                m_high=m_high,
                boundary_v=boundary_v,
                boundary_cum=list(np.cumsum(boundary_v)),
                common_v=max(common_v, 0.0),
                n_common=n_common,
            )
        )
    return _TilleLadder(order=order, steps=steps, n=n)


def _tille_ladder(c, n: int) -> _TilleLadder:
    c = np.ascontiguousarray(np.asarray(c, dtype=float))
    return _tille_ladder_cached(c.tobytes(), c.size, n)


def draw_tille(target: PpsTarget, spec: SchemeSpec, rng=None) -> SampleDraw:
    """One elimination-scheme sample of fixed size ``target.n``.

    Realized first-order inclusion probabilities equal ``target.pi`` exactly;
    no pairwise probabilities are attached (see
    :func:`estimate_joint_pi_mc` / :func:`tille_joint_pi_approx`).
    """
    rng = _rng_for(spec, rng)
    ladder = _tille_ladder(target.p, target.n)
    order = ladder.order
    N = target.N
    eliminated = np.zeros(N, dtype=bool)
    # the shared-probability pool starts as every unit below the first
    # step's cap boundary (usually empty, but not when rounding leaves
    # the top ladder level uncapped, e.g. exactly equal sizes)
    first_m_high = ladder.steps[0].m_high if ladder.steps else N
    alive_common = [int(x) for x in order[first_m_high:]]
    us = rng.random(len(ladder.steps))
    for step, u in zip(ladder.steps, us):
        boundary = order[step.m_low:step.m_high]
        cumv = step.boundary_cum
        b_total = cumv[-1] if cumv else 0.0
        if cumv and u < b_total:
            hit = bisect.bisect_right(cumv, u)
            hit = min(hit, len(boundary) - 1)
            eliminated[boundary[hit]] = True
            for b, unit in enumerate(boundary):
                if b != hit:
                    alive_common.append(int(unit))
        else:
            j = int((u - b_total) / step.common_v) if step.common_v > 0 else 0
            j = min(j, len(alive_common) - 1)
            eliminated[alive_common[j]] = True
            alive_common[j] = alive_common[-1]
            alive_common.pop()
            alive_common.extend(int(x) for x in boundary)
    indices = np.flatnonzero(~eliminated)
    if indices.size != target.n:
        raise ConvergenceError("elimination scheme produced a wrong sample size")
    return SampleDraw(indices=indices, pi=target.pi[indices], scheme="tille")


def tille_joint_pi_approx(pi_full, indices) -> Array:
    """High-entropy approximation to fixed-size pairwise probabilities.

    pi_ij ~= pi_i pi_j [1 - (1 - pi_i)(1 - pi_j) / d],  d = sum_k pi_k (1 - pi_k),
    accurate for large-entropy fixed-size designs such as the elimination
    scheme; validated against Monte Carlo at small N in the test suite.
    """
    pi_full = np.asarray(pi_full, dtype=float)
    idx = np.asarray(indices, dtype=np.int64)
    d = np.sum(pi_full * (1.0 - pi_full))
    if d <= 0:
        if np.all(pi_full >= 1.0 - 1e-12):
            # census: every unit is a certainty, so every pair is included
            sub = pi_full[idx]
            return np.outer(sub, sub)
        raise ValidationError("approximation undefined: all probabilities are 0 or 1")
    sub = pi_full[idx]
    one = 1.0 - sub
    jp = sub[:, None] * sub[None, :] * (1.0 - one[:, None] * one[None, :] / d)
    jp[np.diag_indices_from(jp)] = sub
    return jp


# ------------------------------------------------------------------ poisson


def draw_poisson(target: PpsTarget, spec: SchemeSpec, rng=None,
                 max_redraws: int = 10_000) -> SampleDraw:
    """One Poisson sample: independent Bernoulli(pi_i) indicators.

    The realized size is random; an empty draw is rejected and redrawn, and
    the number of redraws is reported in ``meta['redraws']``.
    """
    rng = _rng_for(spec, rng)
    redraws = 0
    while True:
        keep = rng.random(target.N) < target.pi
        if keep.any():
            break
        redraws += 1
        if redraws > max_redraws:
            raise ConvergenceError("poisson sampling kept drawing empty samples")
    indices = np.flatnonzero(keep)
    sub = target.pi[indices]
    jp = sub[:, None] * sub[None, :]
    jp[np.diag_indices_from(jp)] = sub
    return SampleDraw(
        indices=indices, pi=sub, joint_pi=jp, scheme="poisson",
        meta={"redraws": redraws},
    )


# ------------------------------------------------------------- Monte Carlo


_DRAWERS = {
    "tille": draw_tille,
    "midzuno": draw_midzuno,
    "systematic": draw_systematic,
    "poisson": draw_poisson,
}


def draw_scheme(target: PpsTarget, spec: SchemeSpec, rng=None) -> SampleDraw:
    """Dispatch a single draw to the scheme named in ``spec.kind``."""
    return _DRAWERS[spec.kind](target, spec, rng=rng)


def scheme_first_order(target: PpsTarget, kind: str) -> Array:
    """First-order inclusion probabilities the named scheme actually attains.

    The elimination, systematic, and Poisson schemes reproduce the capped
    size-proportional target exactly; the share-then-SRSWOR scheme attains
    only a blend of the share vector with equal-probability sampling.
    """
    if kind not in _DRAWERS:
        raise ValidationError(f"unknown scheme '{kind}'; choose from {SCHEME_KINDS}")
    if kind == "midzuno":
        return midzuno_first_order(target.p, target.n)
    return target.pi


def estimate_joint_pi_mc(target: PpsTarget, spec: SchemeSpec, reps: int,
                         seed=None) -> Array:
    """Monte Carlo estimate of the full N x N pairwise-inclusion matrix.

    Entry (i, j) is the fraction of ``reps`` independent draws containing
    both i and j; the diagonal estimates first-order probabilities.
    Deterministic for a fixed seed.
    """
    if reps < 1:
        raise ValidationError("reps must be at least 1")
    rng = np.random.default_rng(seed if seed is not None else spec.seed)
    draw = _DRAWERS[spec.kind]
    counts = np.zeros((target.N, target.N))
    for _ in range(reps):
        idx = draw(target, spec, rng=rng).indices
        counts[np.ix_(idx, idx)] += 1.0
    return counts / reps
