"""Saupe tensor algebra.

The 5-vector parametrization s = (S_yy, S_zz, S_xy, S_xz, S_yz) of a
symmetric traceless 3x3 tensor, the linear map to_tensor (L) and its
adjoint adjoint_L (L*), ascending-order eigendecomposition, forward RDC
prediction, and the derived magnitude/rhombicity parameters.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

SYM_TOL = 1e-12
TRACE_TOL = 1e-12


class TensorError(ValueError):
    """Raised for inputs violating Saupe tensor invariants."""


def check_saupe(S, sym_tol=SYM_TOL, trace_tol=TRACE_TOL) -> np.ndarray:
    """Validate a Saupe tensor (symmetric, traceless 3x3) and return it."""
    S = np.asarray(S, dtype=float)
    if S.shape != (3, 3):
        raise TensorError(f"expected 3x3 matrix, got {S.shape}")
    if not np.all(np.isfinite(S)):
        raise TensorError("non-finite entries")
    asym = np.max(np.abs(S - S.T))
    if asym > sym_tol:
        raise TensorError(f"matrix not symmetric (asymmetry {asym:.2e})")
    tr = abs(np.trace(S))
    if tr > trace_tol:
        raise TensorError(f"matrix not traceless (trace {tr:.2e})")
    return S


def to_tensor(s) -> np.ndarray:
    """Map a 5-vector to the symmetric traceless tensor it parametrizes.

    Batched over leading axes: input (..., 5) gives output (..., 3, 3).
    """
    s = np.asarray(s, dtype=float)
    if s.shape[-1] != 5:
        raise TensorError(f"expected length-5 vector, got shape {s.shape}")
    if not np.all(np.isfinite(s)):
        raise TensorError("non-finite entries")
    out = np.zeros(s.shape[:-1] + (3, 3))
    out[..., 0, 0] = -s[..., 0] - s[..., 1]
    out[..., 1, 1] = s[..., 0]
    out[..., 2, 2] = s[..., 1]
    out[..., 0, 1] = out[..., 1, 0] = s[..., 2]
    out[..., 0, 2] = out[..., 2, 0] = s[..., 3]
    out[..., 1, 2] = out[..., 2, 1] = s[..., 4]
    return out


def from_tensor(S) -> np.ndarray:
    """Inverse of to_tensor: (S_yy, S_zz, S_xy, S_xz, S_yz)."""
    S = check_saupe(S, sym_tol=1e-9, trace_tol=1e-9)
    return np.array([S[1, 1], S[2, 2], S[0, 1], S[0, 2], S[1, 2]])


def adjoint_L(X) -> np.ndarray:
    """Adjoint of to_tensor: Tr(X^T to_tensor(y)) = adjoint_L(X)^T y.

    Accepts any (not necessarily symmetric) 3x3 matrix; batched over
    leading axes.
    """
    X = np.asarray(X, dtype=float)
    if X.shape[-2:] != (3, 3):
        raise TensorError(f"expected 3x3 matrix, got {X.shape}")
    return np.stack([
        -X[..., 0, 0] + X[..., 1, 1],
        -X[..., 0, 0] + X[..., 2, 2],
        X[..., 0, 1] + X[..., 1, 0],
        X[..., 0, 2] + X[..., 2, 0],
        X[..., 1, 2] + X[..., 2, 1],
    ], axis=-1)


@dataclass(frozen=True)
class EigenSystem:
    """Eigenvalues in ascending order with matching eigenvector columns."""

    values: np.ndarray   # (3,), lambda_x <= lambda_y <= lambda_z
    vectors: np.ndarray  # (3, 3), column j pairs with values[j]

    def __post_init__(self):
        object.__setattr__(self, "values", np.asarray(self.values, dtype=float))
        object.__setattr__(self, "vectors", np.asarray(self.vectors, dtype=float))


def eig_sorted(S) -> EigenSystem:
    """Eigendecomposition of a symmetric 3x3 matrix, ascending order.

    Eigenvector signs are fixed so the first component of largest
    magnitude is positive, for reproducible output; degenerate spectra
    return an arbitrary valid orthonormal basis.
    """
    S = np.asarray(S, dtype=float)
    if S.shape != (3, 3) or np.max(np.abs(S - S.T)) > 1e-10:
        raise TensorError("eig_sorted requires a symmetric 3x3 matrix")
    vals, vecs = np.linalg.eigh(S)
    for j in range(3):
        lead = np.argmax(np.abs(vecs[:, j]))
        if vecs[lead, j] < 0:
            vecs[:, j] = -vecs[:, j]
    return EigenSystem(vals, vecs)


def predict_rdc(S, bonds) -> np.ndarray:
    """Normalized couplings d_i = v_i^T S v_i for each bond vector."""
    S = check_saupe(S, sym_tol=1e-9, trace_tol=1e-9)
    v = bonds.v if hasattr(bonds, "v") else np.asarray(bonds, dtype=float)
    return np.einsum("...i,ij,...j->...", v, S, v)


def field_tensor(S) -> np.ndarray:
    """Field tensor B = (2S + I)/3; unit trace by construction."""
    S = check_saupe(S, sym_tol=1e-9, trace_tol=1e-9)
    return (2.0 * S + np.eye(3)) / 3.0


def saupe_from_field(B) -> np.ndarray:
    """Inverse map S = (3B - I)/2."""
    B = np.asarray(B, dtype=float)
    return (3.0 * B - np.eye(3)) / 2.0


def magnitude_rhombicity(values) -> tuple[float, float]:
    """Alignment magnitude Da and rhombicity R from an eigenvalue triple.

    Standard NMR convention: reorder by descending absolute value as
    (l_zz, l_yy, l_xx), then Da = l_zz / 2 and R = (l_xx - l_yy) / l_zz.
    Convention-dependent; the triple must sum to zero.
    """
    lam = np.asarray(values, dtype=float)
    if lam.shape != (3,):
        raise TensorError("expected 3 eigenvalues")
    if abs(lam.sum()) > 1e-9 * max(1.0, np.max(np.abs(lam))):
        raise TensorError("eigenvalues must sum to zero")
    order = np.argsort(-np.abs(lam))
    lzz, lyy, lxx = lam[order]
    if lzz == 0.0:
        raise TensorError("all-zero tensor has no magnitude/rhombicity")
    return lzz / 2.0, (lxx - lyy) / lzz
