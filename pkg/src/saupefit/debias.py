"""Eigenvalue bias estimation and removal.

Monte Carlo (SIMEX-style) debiasing of OLS Saupe eigenvalues under
structural torsion noise, the multi-k SIMEX extrapolation, and the
analytic second-order perturbation correction for additive coupling
noise.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from . import estimators, geometry, noise, tensor

SKIP_LIMIT = 0.01   # tolerated fraction of rank-deficient simulated draws
GAP_MIN = 1e-6      # smallest eigenvalue gap for perturbation denominators


class DebiasError(RuntimeError):
    """Raised when debiasing cannot proceed."""


@dataclass(frozen=True)
class DebiasResult:
    """Monte Carlo debiasing summary.

    lambda_tilde = 2 * lambda_ols - lambda_sim_mean entrywise; every
    triple is traceless.
    """

    lambda_ols: np.ndarray       # eigenvalues of the template OLS fit
    lambda_sim_mean: np.ndarray  # mean eigenvalues over simulated fits
    bias_hat: np.ndarray         # lambda_sim_mean - lambda_ols
    lambda_tilde: np.ndarray     # debiased eigenvalues
    n_sim: int
    sigma_used: float            # torsion noise magnitude used (radians)
    n_skipped: int = 0


def template_fit(template: geometry.TorsionSet, sequence,
                 kinds=geometry.BOND_KINDS, d=None, rows=None):
    """OLS fit of the template conformation; returns (design, fit).

    ``rows`` optionally selects a subset of the canonical bond ordering
    (for partially measured fragments); d must align with it.
    """
    A, out_kinds, idx = estimators.design_from_torsions(
        tuple(sequence), template.phi, template.psi, kinds)
    if rows is not None:
        rows = np.asarray(rows, dtype=int)
        A = A[rows]
        out_kinds = tuple(out_kinds[i] for i in rows)
        idx = idx[rows]
    design = estimators.DesignMatrix(A, out_kinds, idx)
    return design, estimators.ols_fit(design, np.asarray(d, dtype=float))


def simulated_eigenvalue_mean(template, sequence, kinds, d, sigma, n_sim,
                              rng, skip_limit=SKIP_LIMIT, rows=None):
    """Mean OLS eigenvalues over n_sim noise-perturbed conformations.

    Rank-deficient simulated designs are skipped; more than
    ``skip_limit`` of them is an error.  The reduction runs in draw
    order, so results are independent of any parallel scheduling.
    """
    k = len(template)
    offsets = sigma * rng.standard_normal((n_sim, k, 2))
    phi = template.phi + offsets[:, :, 0]
    psi = template.psi + offsets[:, :, 1]
    A, _, _ = estimators.design_from_torsions(tuple(sequence), phi, psi, kinds)
    if rows is not None:
        A = A[:, np.asarray(rows, dtype=int), :]
    sv = np.linalg.svd(A, compute_uv=False)
    good = sv[:, -1] > estimators.RANK_RTOL * sv[:, 0]
    n_skipped = int(n_sim - np.count_nonzero(good))
    if n_skipped > skip_limit * n_sim:
        raise DebiasError(
            f"{n_skipped}/{n_sim} simulated designs were rank deficient")
    A = A[good]
    ata = np.einsum("nmi,nmj->nij", A, A)
    atd = np.einsum("nmi,m->ni", A, np.asarray(d, dtype=float))
    s = np.linalg.solve(ata, atd[..., None])[..., 0]
    lam = np.linalg.eigvalsh(tensor.to_tensor(s))
    return lam.mean(axis=0), n_skipped


def mc_debias(template: geometry.TorsionSet, sequence, kinds, d,
              sigma: float | None, n_sim: int,
              rng: np.random.Generator, rows=None) -> DebiasResult:
    """Monte Carlo eigenvalue debiasing.

    Fits the template by OLS, simulates n_sim conformations with
    torsion noise of magnitude sigma around the template, and returns
    lambda_tilde = 2 * Lambda(OLS) - <Lambda(simulated OLS)>.  When
    sigma is None it is estimated from the template residual.
    """
    if n_sim < 1:
        raise ValueError("n_sim must be at least 1")
    design, fit = template_fit(template, sequence, kinds, d, rows)
    if sigma is None:
        sens = noise.sensitivity(template, sequence, kinds)
        if rows is not None:
            sel = np.asarray(rows, dtype=int)
            sens = noise.SensitivityTensor(sens.g_phi[:, sel, :],
                                           sens.g_psi[:, sel, :])
        sigma = noise.estimate_sigma(fit, sens, design)
    if sigma < 0:
        raise ValueError("sigma must be non-negative")
    child = rng.spawn(1)[0]
    sim_mean, n_skipped = simulated_eigenvalue_mean(
        template, sequence, kinds, d, sigma, n_sim, child, rows=rows)
    lam = fit.eigenvalues
    bias = sim_mean - lam
    return DebiasResult(lam, sim_mean, bias, lam - bias, n_sim, float(sigma),
                        n_skipped)


def simex_extrapolate(template, sequence, kinds, d, sigma, k_grid,
                      n_sim: int, rng: np.random.Generator,
                      rows=None) -> np.ndarray:
    """SIMEX eigenvalue extrapolation to noise multiplier k = -1.

    Simulates torsion noise of magnitude k * sigma for each k in
    k_grid, fits a quadratic in k per eigenvalue through the exact
    k = 0 point, and evaluates it at k = -1.  Fewer than two distinct
    k fall back to the linear (single-k) scheme.
    """
    k_grid = [float(k) for k in k_grid]
    if not k_grid or any(k <= 0 for k in k_grid):
        raise ValueError("k_grid must be nonempty with positive entries")
    _, fit = template_fit(template, sequence, kinds, d, rows=rows)
    lam0 = fit.eigenvalues
    children = rng.spawn(len(k_grid))
    means = np.array([
        simulated_eigenvalue_mean(template, sequence, kinds, d, k * sigma,
                                  n_sim, child, rows=rows)[0]
        for k, child in zip(k_grid, children)])
    ks = np.asarray(k_grid)
    if len(set(k_grid)) < 2:
        warnings.warn("simex_extrapolate: fewer than 2 distinct k values; "
                      "falling back to linear extrapolation", RuntimeWarning)
        slope = (means - lam0) / ks[:, None]
        return lam0 - slope.mean(axis=0)
    # least squares for (b, c) in lam(k) = lam0 + b k + c k^2
    basis = np.stack([ks, ks ** 2], axis=1)
    coef, *_ = np.linalg.lstsq(basis, means - lam0, rcond=None)
    return lam0 - coef[0] + coef[1]


def additive_bias_predict(S_ref, design, sigma_add: float,
                          gap_min: float = GAP_MIN) -> np.ndarray:
    """Second-order eigenvalue bias under additive coupling noise.

    bias_j = sigma_add^2 * sum_{k != j}
        L*(u_k u_j^T)^T (A^T A)^{-1} L*(u_k u_j^T) / (lambda_j - lambda_k)
    with (lambda, u) from the reference tensor.  Requires all
    eigenvalue gaps above gap_min.
    """
    A = design.A if isinstance(design, estimators.DesignMatrix) else np.asarray(design, float)
    if sigma_add < 0:
        raise ValueError("sigma_add must be non-negative")
    eig = tensor.eig_sorted(S_ref)
    lam, u = eig.values, eig.vectors
    gaps = np.abs(lam[:, None] - lam[None, :]) + np.eye(3)
    if np.min(gaps) < gap_min:
        raise DebiasError(
            f"eigenvalue gap below {gap_min:g}: perturbation correction "
            "would amplify noise")
    cov = sigma_add ** 2 * np.linalg.inv(A.T @ A)
    bias = np.zeros(3)
    for j in range(3):
        for k in range(3):
            if k == j:
                continue
            w = tensor.adjoint_L(np.outer(u[:, k], u[:, j]))
            bias[j] += (w @ cov @ w) / (lam[j] - lam[k])
    return bias


def additive_debias(fit: estimators.FitResult, design,
                    sigma_add: float, gap_min: float = GAP_MIN) -> np.ndarray:
    """Eigenvalues corrected for additive-noise bias, re-centered to
    sum to zero (the per-eigenvalue correction can break tracelessness
    at higher order)."""
    bias = additive_bias_predict(fit.S_hat, design, sigma_add, gap_min)
    corrected = fit.eigenvalues - bias
    return corrected - corrected.mean()


def bound_additive_bias(design, gap: float, sigma_add: float) -> float:
    """Upper bound 3 Tr((A^T A)^{-1}) sigma_add^2 / gap on the largest
    eigenvalue's additive-noise bias."""
    if gap <= 0:
        raise ValueError("gap must be positive")
    A = design.A if isinstance(design, estimators.DesignMatrix) else np.asarray(design, float)
    return float(3.0 * np.trace(np.linalg.inv(A.T @ A)) * sigma_add ** 2 / gap)
