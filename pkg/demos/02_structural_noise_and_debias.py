"""Structural noise shrinks eigenvalues; Monte Carlo puts them back.

RDCs are usually fit against a template structure that differs from
the true conformation.  Modeling that mismatch as Gaussian noise on
the backbone torsions, the fitted tensor's eigenvalues are biased
toward zero -- an errors-in-variables attenuation, invisible in any
single fit.

The residual RMS of the fit grows with the torsion noise level, which
gives an estimator sigma_hat of the noise magnitude.  With sigma in
hand, the bias can be measured on simulated copies of the fit and
subtracted: simulate n_sim conformations around the template with
fresh noise of the same magnitude, refit each against the same data,
and form

    lambda_tilde = 2 * Lambda(fit) - <Lambda(simulated fits)>.

The simulated fits carry the template's bias plus one more helping of
it, so the difference cancels the bias to leading order.
"""

import numpy as np

from saupefit import debias, estimators, experiments, geometry, noise, tensor

sequence, torsions = experiments.synthetic_ubiquitin()
seq = sequence[0:8]
frag = geometry.TorsionSet(torsions.angles[0:7])
A, _, _ = estimators.design_from_torsions(seq, frag.phi, frag.psi)

S_true = experiments.demo_saupe()
lam_true = tensor.eig_sorted(S_true).values
d = A @ tensor.from_tensor(S_true)

# --- attenuation: mean fitted eigenvalues vs noise level --------------
print("eigenvalue attenuation (200 draws per noise level):")
print(f"  truth: {np.round(lam_true * 1e3, 3)} x 1e-3")
for sigma_deg in (5.0, 10.0, 20.0):
    rng = noise.stream_rng(1, int(sigma_deg))
    lams = []
    for _ in range(200):
        noisy = noise.perturb_torsions(frag, np.deg2rad(sigma_deg), rng)
        _, fit = debias.template_fit(noisy, seq, d=d)
        lams.append(fit.eigenvalues)
    mean = np.mean(lams, axis=0)
    print(f"  sigma = {sigma_deg:4.1f} deg: normalized mean "
          f"{np.round(mean / lam_true, 3)}")

# --- estimating the noise level from the residual ---------------------
sigma_deg = 8.0
rng = noise.stream_rng(2)
template = noise.perturb_torsions(frag, np.deg2rad(sigma_deg), rng)
design, fit = debias.template_fit(template, seq, d=d)
sens = noise.sensitivity(template, seq)
sigma_hat = np.rad2deg(noise.estimate_sigma(fit, sens, design))
print(f"\nresidual RMS = {fit.rms:.2e} -> "
      f"sigma_hat = {sigma_hat:.1f} deg (true {sigma_deg:.1f} deg)")

# --- debiasing one noisy template --------------------------------------
result = debias.mc_debias(template, seq, geometry.BOND_KINDS, d,
                          np.deg2rad(sigma_deg), n_sim=2000,
                          rng=noise.stream_rng(3))
print("\nper-eigenvalue debiasing at sigma = 8 deg:")
print(f"  OLS:      {np.round(result.lambda_ols * 1e3, 3)} x 1e-3")
print(f"  debiased: {np.round(result.lambda_tilde * 1e3, 3)} x 1e-3")
print(f"  truth:    {np.round(lam_true * 1e3, 3)} x 1e-3")

# A single template is still one noisy draw; the debiased eigenvalues
# have roughly twice the variance of the raw ones.  The gain is in the
# mean: averaged over templates, lambda_tilde centers on the truth
# while the raw eigenvalues stay shrunk.  Run the packaged study to
# see the distributions:
#
#   saupefit experiment debias-hist --out results/
