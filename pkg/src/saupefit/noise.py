"""Noise models and noise-magnitude estimators.

Gaussian torsion-angle noise (structural noise), additive coupling
noise, design-matrix sensitivities to the torsions, and the residual
RMS based estimators of the structural noise level sigma and of the
additive noise level sigma_add.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import estimators, geometry

FD_STEP = 1e-5  # central finite-difference step on torsions (rad)


class NoiseError(RuntimeError):
    """Raised when a noise-magnitude estimate is undefined."""


@dataclass(frozen=True)
class NoiseSpec:
    """Noise magnitudes plus the RNG addressing that makes runs repeatable."""

    sigma_torsion: float = 0.0  # radians
    sigma_add: float = 0.0      # normalized coupling units
    seed: int = 0
    stream_id: int = 0

    def __post_init__(self):
        if self.sigma_torsion < 0 or self.sigma_add < 0:
            raise ValueError("noise magnitudes must be non-negative")

    def rng(self, *substream) -> np.random.Generator:
        return stream_rng(self.seed, self.stream_id, *substream)


def stream_rng(seed, *stream) -> np.random.Generator:
    """Independent, order-insensitive RNG stream for (seed, *stream).

    Streams with different addresses are statistically independent, so
    parallel Monte Carlo draws can be assigned stream ids instead of
    relying on execution order.
    """
    return np.random.default_rng([int(seed), *(int(s) for s in stream)])


def perturb_torsions(torsions: geometry.TorsionSet, sigma: float,
                     rng: np.random.Generator) -> geometry.TorsionSet:
    """Add i.i.d. Gaussian offsets of standard deviation sigma to every
    stored phi and psi."""
    if sigma < 0:
        raise ValueError("sigma must be non-negative")
    if sigma == 0:
        return torsions
    offset = sigma * rng.standard_normal(torsions.angles.shape)
    return geometry.TorsionSet(torsions.angles + offset)


def add_coupling_noise(d, sigma_add: float, rng: np.random.Generator) -> np.ndarray:
    """Additive white Gaussian noise on the normalized couplings."""
    if sigma_add < 0:
        raise ValueError("sigma_add must be non-negative")
    d = np.asarray(d, dtype=float)
    if sigma_add == 0:
        return d.copy()
    return d + sigma_add * rng.standard_normal(d.shape)


@dataclass(frozen=True)
class SensitivityTensor:
    """Partials of the design matrix w.r.t. each torsion coordinate.

    g_phi[k] and g_psi[k] are M x 5 matrices dA/dphi_k and dA/dpsi_k
    evaluated at the template torsions.
    """

    g_phi: np.ndarray  # (K, M, 5)
    g_psi: np.ndarray  # (K, M, 5)

    def __post_init__(self):
        if self.g_phi.shape != self.g_psi.shape:
            raise ValueError("phi/psi sensitivity shape mismatch")
        if not (np.all(np.isfinite(self.g_phi)) and np.all(np.isfinite(self.g_psi))):
            raise ValueError("non-finite sensitivities")


def sensitivity(template: geometry.TorsionSet, sequence,
                kinds=geometry.BOND_KINDS, step: float = FD_STEP
                ) -> SensitivityTensor:
    """Central finite differences of the design matrix over all torsions.

    A single batched evaluation covers the 4K displaced conformations.
    """
    k = len(template)
    phi0, psi0 = template.phi, template.psi
    eye = step * np.eye(k)
    phi = np.concatenate([
        phi0 + eye, phi0 - eye,
        np.broadcast_to(phi0, (2 * k, k))], axis=0)
    psi = np.concatenate([
        np.broadcast_to(psi0, (2 * k, k)),
        psi0 + eye, psi0 - eye], axis=0)
    A, _, _ = estimators.design_from_torsions(tuple(sequence), phi, psi, kinds)
    g_phi = (A[:k] - A[k:2 * k]) / (2.0 * step)
    g_psi = (A[2 * k:3 * k] - A[3 * k:]) / (2.0 * step)
    return SensitivityTensor(g_phi, g_psi)


def residual_projector(A) -> np.ndarray:
    """Orthogonal projector onto the complement of the column space of A."""
    A = A.A if isinstance(A, estimators.DesignMatrix) else np.asarray(A, float)
    q, _ = np.linalg.qr(A)
    return np.eye(A.shape[0]) - q @ q.T


def expected_quadratic(sens: SensitivityTensor, A, s_hat) -> float:
    """Second moment q = s^T <F^T P F> s of the residual expansion.

    <F^T P F> is the expectation over unit-variance torsion noise,
    computed in closed form as the sum over torsion coordinates of
    G^T P G.
    """
    P = residual_projector(A)
    w_phi = sens.g_phi @ s_hat  # (K, M)
    w_psi = sens.g_psi @ s_hat
    q = float(np.einsum("km,mn,kn->", w_phi, P, w_phi)
              + np.einsum("km,mn,kn->", w_psi, P, w_psi))
    return q


def estimate_sigma(fit: estimators.FitResult, sens: SensitivityTensor,
                   design) -> float:
    """Structural noise magnitude from the residual RMS (radians).

    sigma_hat = RMS(r) * sqrt(M / q) with q = s^T <F^T P F> s, using the
    fitted s_hat as surrogate for the true s and the template design
    for the projector P.
    """
    A = design.A if isinstance(design, estimators.DesignMatrix) else np.asarray(design, float)
    m = A.shape[0]
    q = expected_quadratic(sens, A, fit.s_hat)
    if q <= 1e-30:
        raise NoiseError("degenerate sensitivity: residual carries no "
                         "information about torsion noise")
    return float(fit.rms * np.sqrt(m / q))


def estimate_sigma_add(fit: estimators.FitResult) -> float:
    """Additive noise magnitude: sqrt(M / (M - 5)) * RMS(r).

    The square is the standard unbiased residual-variance estimator.
    """
    m = len(fit.residual)
    if m <= 5:
        raise NoiseError("sigma_add estimation needs more than 5 couplings")
    return float(np.sqrt(m / (m - 5.0)) * fit.rms)
