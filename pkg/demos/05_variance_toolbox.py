"""Four ways to put an uncertainty on a design-weighted estimate.

On a single size-proportional sample we compute:

* the sandwich covariance of the likelihood fit (model-based, needs
  only the fitted weights and moments);
* the Hartley-Rao approximation (design-based, first-order
  probabilities only);
* the Yates-Grundy-Sen estimator (design-based, needs pairwise
  probabilities, only defined for fixed-size designs and can go
  negative);
* a finite-population-correction rescaling of the sandwich, for when
  the target is this population's census value rather than the
  superpopulation parameter.

We also show the multiplier covariance collapsing to zero in the
just-identified case -- the multiplier is then pinned at the origin and
carries no extra uncertainty.
"""

import numpy as np

from surveyel import (
    SchemeSpec,
    draw_scheme,
    hartley_rao_var,
    kappa_covariance,
    make_model,
    maximize_ce,
    passthrough_visibility,
    pps_first_order,
    prediction_variance,
    sample_data,
    sandwich_vce,
    synth_population,
    tille_joint_pi_approx,
    ygs_var,
)

pop = synth_population(2000, 0.4, ("lognormal", 9.0, 1.1), -0.3, seed=2)
target = pps_first_order(pop.c, n=60)
draw = draw_scheme(target, SchemeSpec(kind="tille", n=60, seed=11))
data = sample_data(pop, draw)
model = make_model("proportion")

fit = maximize_ce(model, data, passthrough_visibility(draw))
theta = float(fit.theta_hat[0])
print(f"census truth {pop.y.mean():.4f}, point estimate {theta:.4f} "
      f"from n={draw.n} of N={pop.N}")

sandwich = sandwich_vce(fit, data, model)
se_sandwich = float(np.sqrt(np.asarray(sandwich.value).reshape(())))

resid = data.y - theta
inv_sum = float((1.0 / draw.pi).sum())
hr = hartley_rao_var(resid, draw.pi, denom=inv_sum)
joint = tille_joint_pi_approx(target.pi, draw.indices)
ygs = ygs_var(resid, draw.pi, joint, denom=inv_sum)
fpc = prediction_variance(sandwich, n=draw.n, N=pop.N)

print("\nstandard errors for the estimated proportion:")
print(f"  sandwich (model)                : {se_sandwich:.4f}")
print(f"  Hartley-Rao (design, 1st order) : {np.sqrt(hr.value):.4f}")
print(f"  Yates-Grundy-Sen (design, pairs): "
      + (f"{np.sqrt(ygs.value):.4f}" if ygs.valid else "NA (negative)"))
se_fpc = float(np.sqrt(np.asarray(fpc.value).reshape(())))
print(f"  sandwich with fpc (census target): {se_fpc:.4f} "
      f"(factor 1 - n/N = {1 - draw.n / pop.N:.3f})")

kc = kappa_covariance(fit, data, model)
print(f"\nmultiplier covariance, just-identified case: "
      f"max|entry| = {np.max(np.abs(kc)):.2e} (degenerate at zero)")
