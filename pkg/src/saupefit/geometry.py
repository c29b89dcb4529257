"""Idealized protein backbone geometry.

Builds backbone coordinates from (phi, psi) torsion angles with fixed
bond lengths/angles and omega = 180 deg, extracts torsions back from
coordinates, and produces the unit bond vectors (N-H, C-CA, C-N) that
feed the RDC design matrix.

Torsion convention: for a chain of R residues the torsion set holds
R - 1 pairs; pair i couples phi of residue i+1 with psi of residue i
(0-based), i.e. the two rotatable dihedrals flanking peptide plane i.
This covers every dihedral the chain defines (residue 0 has no phi,
the last residue no psi).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

# Idealized construction constants (Angstrom / radians, Engh-Huber style).
BOND_N_CA = 1.458
BOND_CA_C = 1.525
BOND_C_N = 1.329
BOND_N_H = 1.01
ANGLE_N_CA_C = np.deg2rad(111.2)
ANGLE_CA_C_N = np.deg2rad(116.2)
ANGLE_C_N_CA = np.deg2rad(121.7)
OMEGA = np.pi

NH = "N-H"
CCA = "C-CA"
CN = "C-N"
BOND_KINDS = (NH, CCA, CN)

_AA3 = {
    "A": "ALA", "R": "ARG", "N": "ASN", "D": "ASP", "C": "CYS",
    "Q": "GLN", "E": "GLU", "G": "GLY", "H": "HIS", "I": "ILE",
    "L": "LEU", "K": "LYS", "M": "MET", "F": "PHE", "P": "PRO",
    "S": "SER", "T": "THR", "W": "TRP", "Y": "TYR", "V": "VAL",
}


class GeometryError(ValueError):
    """Raised for malformed structures or torsion inputs."""


def seq1_to_3(seq: str) -> tuple[str, ...]:
    """Expand a 1-letter amino acid string to 3-letter codes."""
    try:
        return tuple(_AA3[c] for c in seq.upper())
    except KeyError as e:
        raise GeometryError(f"unknown residue letter {e.args[0]!r}") from None


def wrap_angle(a):
    """Wrap angles (radians) to (-pi, pi]."""
    r = np.remainder(np.asarray(a, dtype=float), 2.0 * np.pi)
    return np.where(r > np.pi, r - 2.0 * np.pi, r)


@dataclass(frozen=True)
class TorsionSet:
    """Ordered (phi, psi) pairs in radians, wrapped to (-pi, pi]."""

    angles: np.ndarray  # (K, 2); column 0 = phi, column 1 = psi

    def __post_init__(self):
        a = np.asarray(self.angles, dtype=float)
        if a.ndim != 2 or a.shape[1] != 2 or a.shape[0] < 1:
            raise GeometryError(f"torsion array must be (K>=1, 2), got {a.shape}")
        if not np.all(np.isfinite(a)):
            raise GeometryError("non-finite torsion angle")
        object.__setattr__(self, "angles", wrap_angle(a))
        self.angles.flags.writeable = False

    @classmethod
    def from_pairs(cls, pairs) -> "TorsionSet":
        return cls(np.asarray(pairs, dtype=float))

    @property
    def phi(self) -> np.ndarray:
        return self.angles[:, 0]

    @property
    def psi(self) -> np.ndarray:
        return self.angles[:, 1]

    def __len__(self) -> int:
        return self.angles.shape[0]


@dataclass(frozen=True)
class BackboneStructure:
    """Backbone N/CA/C (+ amide H) coordinates in Angstrom.

    ``h`` rows are NaN where the hydrogen is absent (first residue,
    prolines, or structures read without hydrogens).  ``residue_ids``
    carries the original numbering of parsed files; synthetic builds
    number from 1.
    """

    sequence: tuple[str, ...]
    n: np.ndarray   # (R, 3)
    ca: np.ndarray  # (R, 3)
    c: np.ndarray   # (R, 3)
    h: np.ndarray   # (R, 3), NaN rows where absent
    residue_ids: tuple[int, ...]

    def __post_init__(self):
        r = len(self.sequence)
        for name in ("n", "ca", "c", "h"):
            arr = np.asarray(getattr(self, name), dtype=float)
            if arr.shape != (r, 3):
                raise GeometryError(f"{name} coordinates must be ({r}, 3)")
            object.__setattr__(self, name, arr)
            arr.flags.writeable = False
        if len(self.residue_ids) != r:
            raise GeometryError("residue_ids length mismatch")

    @property
    def n_residues(self) -> int:
        return len(self.sequence)

    @property
    def has_h(self) -> np.ndarray:
        return np.all(np.isfinite(self.h), axis=1)

    def fragment(self, start: int, stop: int) -> "BackboneStructure":
        """Contiguous residue window [start, stop) as a new structure."""
        if not (0 <= start < stop <= self.n_residues):
            raise GeometryError(f"bad fragment range [{start}, {stop})")
        return BackboneStructure(
            self.sequence[start:stop],
            self.n[start:stop], self.ca[start:stop],
            self.c[start:stop], self.h[start:stop],
            self.residue_ids[start:stop],
        )

    def transformed(self, rotation=None, translation=None) -> "BackboneStructure":
        """Apply a rigid motion (rotation then translation)."""
        rot = np.eye(3) if rotation is None else np.asarray(rotation, dtype=float)
        t = np.zeros(3) if translation is None else np.asarray(translation, dtype=float)
        return BackboneStructure(
            self.sequence,
            self.n @ rot.T + t, self.ca @ rot.T + t,
            self.c @ rot.T + t, self.h @ rot.T + t,
            self.residue_ids,
        )


@dataclass(frozen=True)
class BondVectorSet:
    """Unit bond vectors with (kind, residue) provenance.

    ``residue_index`` is the 0-based index of the residue owning the
    heavy atom the bond is named after (N for N-H, C for C-CA and C-N).
    """

    kinds: tuple[str, ...]
    residue_index: np.ndarray  # (M,) int
    v: np.ndarray              # (M, 3) unit vectors

    def __post_init__(self):
        v = np.asarray(self.v, dtype=float)
        if v.ndim != 2 or v.shape[1] != 3 or v.shape[0] != len(self.kinds):
            raise GeometryError("bond vector array shape mismatch")
        norms = np.linalg.norm(v, axis=1)
        if not np.all(np.abs(norms - 1.0) <= 1e-12):
            raise GeometryError("bond vectors must be unit length")
        object.__setattr__(self, "v", v)
        object.__setattr__(
            self, "residue_index", np.asarray(self.residue_index, dtype=int))
        v.flags.writeable = False

    def __len__(self) -> int:
        return len(self.kinds)


def _unit(x, where="vector"):
    n = np.linalg.norm(x, axis=-1, keepdims=True)
    if np.any(n < 1e-9):
        raise GeometryError(f"degenerate zero-length {where}")
    return x / n


def _cross(x, y):
    # hand-rolled cross product; np.cross carries too much axis-handling
    # overhead for the tight chain-building loop
    out = np.empty(np.broadcast_shapes(x.shape, y.shape), dtype=float)
    out[..., 0] = x[..., 1] * y[..., 2] - x[..., 2] * y[..., 1]
    out[..., 1] = x[..., 2] * y[..., 0] - x[..., 0] * y[..., 2]
    out[..., 2] = x[..., 0] * y[..., 1] - x[..., 1] * y[..., 0]
    return out


def _extend(a, b, c, length, angle, torsion):
    """Place the atom d with bond c-d, angle b-c-d and dihedral a-b-c-d.

    Natural-extension reference frame; broadcasts over leading axes.
    ``torsion`` has shape matching the leading axes of a/b/c (or scalar).
    """
    bc = _unit(c - b, "bond")
    nrm = _unit(_cross(b - a, bc), "plane normal")
    m = _cross(nrm, bc)
    t = np.asarray(torsion, dtype=float)[..., None]
    d = (-length * np.cos(angle)) * bc \
        - (length * np.sin(angle) * np.cos(t)) * m \
        - (length * np.sin(angle) * np.sin(t)) * nrm
    return c + d


def chain_coords(phi, psi):
    """Backbone N/CA/C coordinates from torsions, batched.

    phi, psi: (..., K) arrays (see module docstring for the pairing);
    returns (n, ca, c) each of shape (..., K + 1, 3).
    """
    phi = np.asarray(phi, dtype=float)
    psi = np.asarray(psi, dtype=float)
    if phi.shape != psi.shape:
        raise GeometryError("phi/psi shape mismatch")
    lead = phi.shape[:-1]
    k = phi.shape[-1]
    n = [np.broadcast_to(np.zeros(3), lead + (3,))]
    ca = [np.broadcast_to(np.array([BOND_N_CA, 0.0, 0.0]), lead + (3,))]
    c0 = ca[0] + BOND_CA_C * np.array(
        [-np.cos(ANGLE_N_CA_C), np.sin(ANGLE_N_CA_C), 0.0])
    c = [c0]
    for i in range(k):
        ni = _extend(n[i], ca[i], c[i], BOND_C_N, ANGLE_CA_C_N, psi[..., i])
        cai = _extend(ca[i], c[i], ni, BOND_N_CA, ANGLE_C_N_CA, OMEGA)
        ci = _extend(c[i], ni, cai, BOND_CA_C, ANGLE_N_CA_C, phi[..., i])
        n.append(ni)
        ca.append(cai)
        c.append(ci)
    stack = lambda xs: np.stack(xs, axis=-2)
    return stack(n), stack(ca), stack(c)


def amide_h(c_prev, n, ca):
    """Amide H position: in the C(prev)-N-CA plane on the external
    bisector of the C-N-CA angle, at the idealized N-H length."""
    u1 = _unit(c_prev - n, "C-N bond")
    u2 = _unit(ca - n, "N-CA bond")
    return n - BOND_N_H * _unit(u1 + u2, "bisector")


def build_backbone(sequence, torsions: TorsionSet) -> BackboneStructure:
    """Construct an idealized backbone from torsion angles.

    ``sequence`` is a list of 3-letter residue codes of length
    len(torsions) + 1.  Deterministic: identical inputs give
    bit-identical coordinates.  Amide H is placed for every residue
    but the first, except prolines.
    """
    sequence = tuple(sequence)
    if len(sequence) != len(torsions) + 1:
        raise GeometryError(
            f"sequence length {len(sequence)} does not match "
            f"{len(torsions)} torsion pairs + 1")
    n, ca, c = chain_coords(torsions.phi, torsions.psi)
    r = len(sequence)
    h = np.full((r, 3), np.nan)
    for j in range(1, r):
        if sequence[j] != "PRO":
            h[j] = amide_h(c[j - 1], n[j], ca[j])
    return BackboneStructure(sequence, n, ca, c, h, tuple(range(1, r + 1)))


def dihedral(p0, p1, p2, p3):
    """Signed dihedral angle p0-p1-p2-p3 in (-pi, pi], batched."""
    b0 = np.asarray(p1) - p0
    b1 = np.asarray(p2) - p1
    b2 = np.asarray(p3) - p2
    b1u = _unit(b1, "dihedral axis")
    v = b0 - np.sum(b0 * b1u, axis=-1, keepdims=True) * b1u
    w = b2 - np.sum(b2 * b1u, axis=-1, keepdims=True) * b1u
    if np.any(np.linalg.norm(v, axis=-1) < 1e-9) or \
       np.any(np.linalg.norm(w, axis=-1) < 1e-9):
        raise GeometryError("collinear atoms: dihedral undefined")
    x = np.sum(v * w, axis=-1)
    y = np.sum(np.cross(b1u, v) * w, axis=-1)
    return wrap_angle(np.arctan2(y, x))


def extract_torsions(structure: BackboneStructure) -> TorsionSet:
    """Recover the (phi, psi) torsion pairs from backbone coordinates."""
    r = structure.n_residues
    if r < 2:
        raise GeometryError("need at least 2 residues to extract torsions")
    for name in ("n", "ca", "c"):
        if not np.all(np.isfinite(getattr(structure, name))):
            raise GeometryError(f"missing backbone atom coordinates ({name})")
    n, ca, c = structure.n, structure.ca, structure.c
    psi = dihedral(n[:-1], ca[:-1], c[:-1], n[1:])
    phi = dihedral(c[:-1], n[1:], ca[1:], c[1:])
    return TorsionSet(np.stack([phi, psi], axis=1))


def bond_frame_atoms(sequence):
    """Plan the canonical bond ordering for a sequence.

    Returns a list of (kind, residue_index) in the order bond_vectors
    and the batched kernels emit them: per peptide plane p the entries
    N-H (residue p+1, absent for proline), C-CA (residue p), C-N
    (residue p).  The kind filter is applied by the callers.
    """
    plan = []
    for p in range(len(sequence) - 1):
        if sequence[p + 1] != "PRO":
            plan.append((NH, p + 1))
        plan.append((CCA, p))
        plan.append((CN, p))
    return plan


def bond_unit_vectors(sequence, n, ca, c, h, kinds):
    """Batched unit bond vectors for stacked coordinate arrays.

    n/ca/c/h have shape (..., R, 3); returns (vectors of shape
    (..., M, 3), kinds tuple, residue index array).
    """
    kinds = set(kinds)
    unknown = kinds - set(BOND_KINDS)
    if unknown:
        raise GeometryError(f"unknown bond kinds: {sorted(unknown)}")
    vecs, out_kinds, out_idx = [], [], []
    for kind, res in bond_frame_atoms(sequence):
        if kind not in kinds:
            continue
        if kind == NH:
            diff = h[..., res, :] - n[..., res, :]
            if not np.all(np.isfinite(diff)):
                raise GeometryError(
                    f"residue {res + 1}: amide H missing; place hydrogens first")
        elif kind == CCA:
            diff = ca[..., res, :] - c[..., res, :]
        else:
            diff = n[..., res + 1, :] - c[..., res, :]
        vecs.append(_unit(diff, f"{kind} bond"))
        out_kinds.append(kind)
        out_idx.append(res)
    if not vecs:
        raise GeometryError("no bonds selected")
    return np.stack(vecs, axis=-2), tuple(out_kinds), np.array(out_idx, dtype=int)


def bond_vectors(structure: BackboneStructure, kinds=BOND_KINDS) -> BondVectorSet:
    """Unit bond vectors of the requested kinds, one per peptide plane.

    Proline N-H entries are omitted.
    """
    v, out_kinds, idx = bond_unit_vectors(
        structure.sequence, structure.n, structure.ca, structure.c,
        structure.h, kinds)
    return BondVectorSet(out_kinds, idx, v)


def add_amide_hydrogens(structure: BackboneStructure) -> BackboneStructure:
    """Fill missing amide hydrogens at idealized positions.

    Existing H coordinates are kept; prolines and the first residue
    stay without H.
    """
    h = structure.h.copy()
    for j in range(1, structure.n_residues):
        if structure.sequence[j] == "PRO" or np.all(np.isfinite(h[j])):
            continue
        h[j] = amide_h(structure.c[j - 1], structure.n[j], structure.ca[j])
    return BackboneStructure(structure.sequence, structure.n, structure.ca,
                             structure.c, h, structure.residue_ids)


def validate_backbone(structure: BackboneStructure, tol=0.2):
    """Check bonded distances against construction constants (+-tol
    fractional) and that no two backbone atoms coincide."""
    n, ca, c = structure.n, structure.ca, structure.c
    checks = [
        (np.linalg.norm(ca - n, axis=1), BOND_N_CA, "N-CA"),
        (np.linalg.norm(c - ca, axis=1), BOND_CA_C, "CA-C"),
        (np.linalg.norm(n[1:] - c[:-1], axis=1), BOND_C_N, "C-N"),
    ]
    for dist, ref, label in checks:
        bad = np.nonzero(np.abs(dist - ref) > tol * ref)[0]
        if bad.size:
            raise GeometryError(
                f"{label} distance out of range at residue index {bad[0]}: "
                f"{dist[bad[0]]:.3f} A vs {ref:.3f} A")
    atoms = np.concatenate([n, ca, c], axis=0)
    d2 = np.sum((atoms[:, None, :] - atoms[None, :, :]) ** 2, axis=-1)
    np.fill_diagonal(d2, np.inf)
    if np.min(d2) < 1e-6:
        raise GeometryError("coincident backbone atoms")
