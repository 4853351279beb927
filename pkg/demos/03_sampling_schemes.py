"""Four unequal-probability sampling schemes and what they really deliver.

Given target inclusion probabilities proportional to size, the four
schemes differ in how faithfully they attain them and in what pairwise
(joint) probabilities they induce:

* tille      -- sequential elimination; attains the target exactly.
* midzuno    -- one size-biased pick, the rest simple random; attains
                only a blend of the target with equal probabilities.
* systematic -- a single uniform start swept around the cumulated
                sizes; exact first-order, but many pairs can never
                co-occur (their joint probability is zero).
* poisson    -- independent coin flips; exact first-order, random
                sample size, independent pairs.

Every draw carries the probabilities of the scheme *as run*, so the
estimators downstream are never fed a target the scheme missed.
"""

import numpy as np

from surveyel import (
    SchemeSpec,
    draw_scheme,
    estimate_joint_pi_mc,
    midzuno_joint_pi,
    pps_first_order,
    scheme_first_order,
    tille_joint_pi_approx,
)

sizes = np.arange(1.0, 21.0) ** 2  # 20 units, heavily skewed
n = 5
target = pps_first_order(sizes, n)
print("capped size-proportional target pi (first 6 units):",
      np.array2string(target.pi[:6], precision=4))

reps = 20_000
rng = np.random.default_rng(0)
print(f"\nempirical inclusion frequencies over {reps:,} draws "
      f"(largest unit, smallest unit):")
for kind in ("tille", "midzuno", "systematic", "poisson"):
    spec = SchemeSpec(kind=kind, n=n)
    attained = scheme_first_order(target, kind)
    counts = np.zeros(target.N)
    sizes_drawn = []
    for _ in range(reps):
        d = draw_scheme(target, spec, rng)
        counts[d.indices] += 1
        sizes_drawn.append(d.n)
    emp = counts / reps
    dev = np.max(np.abs(emp - attained))
    print(f"  {kind:11s} attained=({attained[-1]:.4f}, {attained[0]:.4f}) "
          f"empirical=({emp[-1]:.4f}, {emp[0]:.4f}) "
          f"max|dev|={dev:.4f}  n in [{min(sizes_drawn)}, {max(sizes_drawn)}]")

print("\nnote the midzuno row: its attained probabilities are flatter than "
      "the target\n(small units get a floor of (n-1)/(N-1)); the draw "
      "reports the attained values.")

# --- pairwise probabilities ------------------------------------------------
print("\npairwise (joint) inclusion probabilities for the two largest units:")
mc = estimate_joint_pi_mc(target, SchemeSpec(kind="midzuno", n=n), 40_000, seed=3)
exact = midzuno_joint_pi(target.p, n, np.array([18, 19]))
print(f"  midzuno    closed form   {exact[0, 1]:.5f}  "
      f"Monte Carlo {mc[18, 19]:.5f}")

mc = estimate_joint_pi_mc(target, SchemeSpec(kind="tille", n=n), 40_000, seed=3)
approx = tille_joint_pi_approx(target.pi, np.array([18, 19]))
print(f"  tille      approximation {approx[0, 1]:.5f}  "
      f"Monte Carlo {mc[18, 19]:.5f}")

d = draw_scheme(target, SchemeSpec(kind="systematic", n=n, seed=5))
jp = d.joint_pi
iu = np.triu_indices_from(jp, k=1)
ratios = jp[iu] / (d.pi[:, None] * d.pi[None, :])[iu]
print(f"  systematic draw carries exact pairwise values; for the sampled "
      f"pairs\n    pi_ij / (pi_i pi_j) ranges "
      f"{ratios.min():.2f}..{ratios.max():.2f}")
print("    (co-sampled pairs cluster above the independence product, which "
      "drives the\n     Yates-Grundy-Sen variance negative -- reported as NA "
      "under systematic sampling)")
