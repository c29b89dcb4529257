"""Design matrix construction and Saupe tensor fitting.

Ordinary least squares via the rank-revealing SVD route, and a
PSD-constrained fit over the spectrahedron (physical field tensors)
solved by projected gradient with a fixed 1/L step.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import geometry, tensor

RANK_RTOL = 1e-10


class FitError(RuntimeError):
    """Raised when a fit cannot be computed (rank deficiency, M < 5)."""


def design_row(v) -> np.ndarray:
    """Design matrix row for one unit bond vector.

    (v_y^2 - v_x^2, v_z^2 - v_x^2, 2 v_x v_y, 2 v_x v_z, 2 v_y v_z);
    batched over leading axes.
    """
    v = np.asarray(v, dtype=float)
    norms = np.linalg.norm(v, axis=-1)
    if np.any(np.abs(norms - 1.0) > 1e-9):
        raise ValueError("design_row requires unit vectors")
    x, y, z = v[..., 0], v[..., 1], v[..., 2]
    return np.stack(
        [y * y - x * x, z * z - x * x, 2 * x * y, 2 * x * z, 2 * y * z],
        axis=-1)


@dataclass(frozen=True)
class DesignMatrix:
    """M x 5 design matrix with per-row bond provenance."""

    A: np.ndarray
    kinds: tuple[str, ...] = ()
    residue_index: np.ndarray = field(default_factory=lambda: np.array([], int))

    def __post_init__(self):
        A = np.asarray(self.A, dtype=float)
        if A.ndim != 2 or A.shape[1] != 5:
            raise ValueError(f"design matrix must be (M, 5), got {A.shape}")
        object.__setattr__(self, "A", A)

    @property
    def M(self) -> int:
        return self.A.shape[0]


def build_design(bonds: geometry.BondVectorSet) -> DesignMatrix:
    """Assemble the design matrix from a bond vector set."""
    if len(bonds) == 0:
        raise ValueError("empty bond set")
    return DesignMatrix(design_row(bonds.v), bonds.kinds, bonds.residue_index)


def design_from_torsions(sequence, phi, psi, kinds=geometry.BOND_KINDS):
    """Design matrices straight from torsions, batched.

    phi/psi: (..., K) arrays for a chain of K+1 residues; returns
    (A of shape (..., M, 5), kinds, residue indices).  This is the fast
    path the Monte Carlo loops use.
    """
    n, ca, c = geometry.chain_coords(phi, psi)
    r = len(sequence)
    if n.shape[-2] != r:
        raise geometry.GeometryError("torsion count does not match sequence")
    h = np.full(n.shape, np.nan)
    if geometry.NH in set(kinds):
        for j in range(1, r):
            if sequence[j] != "PRO":
                h[..., j, :] = geometry.amide_h(
                    c[..., j - 1, :], n[..., j, :], ca[..., j, :])
    v, out_kinds, idx = geometry.bond_unit_vectors(sequence, n, ca, c, h, kinds)
    return design_row(v), out_kinds, idx


@dataclass(frozen=True)
class FitResult:
    """Saupe tensor fit: 5-vector, tensor, residual and eigensystem."""

    s_hat: np.ndarray
    S_hat: np.ndarray
    residual: np.ndarray
    rms: float
    eigen: tensor.EigenSystem
    converged: bool = True
    n_iter: int = 0
    objective_trace: np.ndarray | None = None

    @property
    def eigenvalues(self) -> np.ndarray:
        return self.eigen.values


def _check_solvable(A):
    if A.shape[0] < 5:
        raise FitError(f"need at least 5 couplings, got {A.shape[0]}")
    sv = np.linalg.svd(A, compute_uv=False)
    if sv[-1] <= RANK_RTOL * sv[0]:
        raise FitError(
            f"design matrix is rank deficient (sigma_min/sigma_max = "
            f"{sv[-1] / sv[0]:.2e})")


def _finish(A, d, s_hat, **extra) -> FitResult:
    r = d - A @ s_hat
    S_hat = tensor.to_tensor(s_hat)
    return FitResult(s_hat, S_hat, r, float(np.linalg.norm(r) / np.sqrt(len(d))),
                     tensor.eig_sorted(S_hat), **extra)


def ols_fit(design: DesignMatrix | np.ndarray, d) -> FitResult:
    """Ordinary least squares Saupe tensor fit (SVD route)."""
    A = design.A if isinstance(design, DesignMatrix) else np.asarray(design, float)
    d = np.asarray(d, dtype=float)
    if d.shape != (A.shape[0],):
        raise ValueError("coupling vector length does not match design matrix")
    _check_solvable(A)
    u, sv, vt = np.linalg.svd(A, full_matrices=False)
    s_hat = vt.T @ ((u.T @ d) / sv)
    return _finish(A, d, s_hat)


def _simplex_project(y) -> np.ndarray:
    """Euclidean projection of a vector onto the probability simplex."""
    y = np.asarray(y, dtype=float)
    u = np.sort(y)[::-1]
    css = np.cumsum(u)
    rho = np.nonzero(u + (1.0 - css) / np.arange(1, len(y) + 1) > 0)[0][-1]
    theta = (css[rho] - 1.0) / (rho + 1.0)
    return np.maximum(y - theta, 0.0)


def project_spectrahedron(B) -> np.ndarray:
    """Frobenius-nearest PSD matrix with unit trace.

    Eigendecompose and project the eigenvalue triple onto the
    probability simplex.
    """
    B = np.asarray(B, dtype=float)
    if B.shape != (3, 3) or np.max(np.abs(B - B.T)) > 1e-9:
        raise ValueError("project_spectrahedron requires a symmetric 3x3 matrix")
    vals, vecs = np.linalg.eigh(B)
    return (vecs * _simplex_project(vals)) @ vecs.T


# Orthonormal basis of symmetric 3x3 matrices (Frobenius inner product).
_SYM_BASIS = []
for _i in range(3):
    _E = np.zeros((3, 3))
    _E[_i, _i] = 1.0
    _SYM_BASIS.append(_E)
for _i, _j in ((0, 1), (0, 2), (1, 2)):
    _E = np.zeros((3, 3))
    _E[_i, _j] = _E[_j, _i] = 1.0 / np.sqrt(2.0)
    _SYM_BASIS.append(_E)
_SYM_BASIS = np.array(_SYM_BASIS)


def _svec_of_B(B):
    """Linear part of the B -> s map (s of S = (3B - I)/2)."""
    return 1.5 * np.array([B[1, 1], B[2, 2], B[0, 1], B[0, 2], B[1, 2]])


def constrained_fit(design: DesignMatrix | np.ndarray, d,
                    tol: float = 1e-10, max_iter: int = 50_000) -> FitResult:
    """Least squares over the physical set S = {(3B - I)/2 : B PSD, Tr B = 1}.

    Projected gradient on the field tensor B with fixed step 1/L,
    warm-started from the projected OLS solution; stops when the
    projected-gradient norm drops below tol.  On non-convergence the
    best iterate is returned with ``converged=False``.
    """
    A = design.A if isinstance(design, DesignMatrix) else np.asarray(design, float)
    d = np.asarray(d, dtype=float)
    ols = ols_fit(A, d)

    B = project_spectrahedron(tensor.field_tensor(ols.S_hat))
    # Lipschitz constant of the gradient of ||d - A s(B)||^2 over the
    # symmetric-matrix geometry.
    K = np.stack([A @ _svec_of_B(E) for E in _SYM_BASIS], axis=1)
    lip = 2.0 * np.linalg.norm(K, 2) ** 2

    def objective_and_grad(B):
        r = d - A @ (_svec_of_B(B) - np.array([0.5, 0.5, 0.0, 0.0, 0.0]))
        g = -2.0 * (A.T @ r)
        G = np.zeros((3, 3))
        G[1, 1] = 1.5 * g[0]
        G[2, 2] = 1.5 * g[1]
        G[0, 1] = G[1, 0] = 0.75 * g[2]
        G[0, 2] = G[2, 0] = 0.75 * g[3]
        G[1, 2] = G[2, 1] = 0.75 * g[4]
        return float(r @ r), G

    trace = []
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        f, G = objective_and_grad(B)
        trace.append(f)
        B_next = project_spectrahedron(B - G / lip)
        pg_norm = lip * np.linalg.norm(B_next - B)
        if pg_norm < tol:
            converged = True
            break
        B = B_next
    if not converged:
        import warnings
        warnings.warn(
            f"constrained_fit: projected gradient did not reach tol={tol:g} "
            f"in {max_iter} iterations", RuntimeWarning)

    S = tensor.saupe_from_field(B)
    s_hat = tensor.from_tensor(S - np.trace(S) / 3.0 * np.eye(3))
    return _finish(A, d, s_hat, converged=converged, n_iter=it,
                   objective_trace=np.array(trace))
