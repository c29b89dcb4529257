"""Multi-fragment eigenvalue estimation (MFR-style averaging).

Fragment enumeration over a structure, eigenvalue averaging across
fragments with optional residual-RMS thresholding, the fractional
error metric, and the random Saupe tensor sampler used by the
synthetic studies.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import debias as debias_mod
from . import estimators, geometry, tensor


class EnsembleError(RuntimeError):
    """Raised for empty selections or undefined metrics."""


@dataclass(frozen=True)
class FragmentEstimate:
    """Per-fragment fit (and optional debiasing) results."""

    fragment_id: int
    start: int  # 0-based first residue index
    stop: int   # exclusive
    fit: estimators.FitResult
    debias: debias_mod.DebiasResult | None = None

    @property
    def rms(self) -> float:
        return self.fit.rms


@dataclass(frozen=True)
class EnsembleSummary:
    """Entrywise-averaged eigenvalue triples over selected fragments."""

    lambda_ave_ols: np.ndarray
    lambda_ave_tilde: np.ndarray | None
    n_fragments: int
    selection: str


def enumerate_fragments(structure: geometry.BackboneStructure,
                        window_planes: int = 7,
                        residue_limit: int | None = None):
    """All contiguous windows of the given peptide-plane count.

    A window of P planes spans P + 1 residues.  ``residue_limit``
    restricts enumeration to the first residues of the chain.
    Returns a list of (start, stop) 0-based residue ranges.
    """
    if window_planes < 1:
        raise ValueError("window_planes must be at least 1")
    r = structure.n_residues
    if residue_limit is not None:
        if residue_limit > r:
            raise EnsembleError(
                f"residue_limit {residue_limit} exceeds chain length {r}")
        r = residue_limit
    width = window_planes + 1
    if width > r:
        raise EnsembleError(
            f"window of {window_planes} planes needs {width} residues, "
            f"chain has {r}")
    return [(start, start + width) for start in range(r - width + 1)]


def average_eigenvalues(estimates, use_tilde: bool = True,
                        rms_threshold: float | None = None,
                        above: bool = True) -> EnsembleSummary:
    """Entrywise mean of fragment eigenvalue triples.

    With a threshold, only fragments whose residual RMS is strictly
    above (or below, per ``above``) the cutoff are averaged.
    """
    estimates = list(estimates)
    if rms_threshold is None:
        selected = estimates
        rule = "all fragments"
    else:
        if above:
            selected = [e for e in estimates if e.rms > rms_threshold]
        else:
            selected = [e for e in estimates if e.rms < rms_threshold]
        rule = (f"rms {'>' if above else '<'} {rms_threshold:g}")
    if not selected:
        raise EnsembleError(f"no fragments selected ({rule})")
    ols = np.mean([e.fit.eigenvalues for e in selected], axis=0)
    tilde = None
    if use_tilde:
        missing = [e.fragment_id for e in selected if e.debias is None]
        if missing:
            raise EnsembleError(
                f"fragments without debias results: {missing}")
        tilde = np.mean([e.debias.lambda_tilde for e in selected], axis=0)
    return EnsembleSummary(ols, tilde, len(selected), rule)


def fractional_error(lambda_est, lambda_true) -> float:
    """|| est - true ||_F / || true ||_F over eigenvalue triples."""
    est = np.asarray(lambda_est, dtype=float)
    true = np.asarray(lambda_true, dtype=float)
    denom = np.linalg.norm(true)
    if denom == 0:
        raise EnsembleError("fractional error undefined for zero truth")
    return float(np.linalg.norm(est - true) / denom)


def random_saupe(rng: np.random.Generator) -> np.ndarray:
    """Random Saupe tensor at physiological scale.

    Two eigenvalues uniform on [-1e-3, 0] and [0, 1e-3], the third
    fixed by tracelessness; the eigenframe is the orthogonal polar
    factor of a standard Gaussian 3x3 matrix (Haar up to sign).
    """
    la = rng.uniform(-1e-3, 0.0)
    lb = rng.uniform(0.0, 1e-3)
    lam = np.array([la, lb, -la - lb])
    g = rng.standard_normal((3, 3))
    u, _, vt = np.linalg.svd(g)
    q = u @ vt  # orthogonal polar factor of g
    return (q * lam) @ q.T
