"""File ingestion and serialization.

Fixed-column PDB backbone parsing (ATOM records only, first model,
first chain, highest-occupancy altloc), a strict delimited RDC table
reader with Hz-to-normalized conversion, and a minimal PDB writer for
synthetic structures.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field

import numpy as np

from . import geometry


class ParseError(ValueError):
    """Raised for malformed or inconsistent input files."""


@dataclass(frozen=True)
class DmaxEntry:
    """Static coupling scale for one bond kind.

    ``gamma_product`` is the product of the two gyromagnetic ratios in
    1e14 rad^2 T^-2 s^-2; ``dmax_hz`` is the authoritative value used
    for normalization.
    """

    gamma_product: float
    bond_length: float  # Angstrom
    dmax_hz: float

    def __post_init__(self):
        if self.dmax_hz == 0:
            raise ValueError("D_max must be nonzero")


@dataclass(frozen=True)
class DmaxTable:
    """Per-bond-kind static coupling scales, overridable in config."""

    entries: dict

    def __getitem__(self, kind: str) -> DmaxEntry:
        try:
            return self.entries[kind]
        except KeyError:
            raise ParseError(f"no D_max entry for bond kind {kind!r}") from None

    def __contains__(self, kind):
        return kind in self.entries


# N-H scale ~23 kHz; C-CA and C-N use the conventional normalization
# ratios (0.198 and 0.120 of the N-H scale).  All overridable.
DEFAULT_DMAX = DmaxTable({
    geometry.NH: DmaxEntry(gamma_product=-7.32, bond_length=1.01,
                           dmax_hz=23_000.0),
    geometry.CCA: DmaxEntry(gamma_product=4.57, bond_length=1.525,
                            dmax_hz=0.198 * 23_000.0),
    geometry.CN: DmaxEntry(gamma_product=-1.83, bond_length=1.329,
                           dmax_hz=0.120 * 23_000.0),
})


@dataclass(frozen=True)
class RdcRecord:
    """One measured coupling; exactly one of value_hz / value_normalized."""

    residue_index: int
    bond_kind: str
    value_hz: float | None = None
    value_normalized: float | None = None
    uncertainty_hz: float | None = None

    def __post_init__(self):
        if (self.value_hz is None) == (self.value_normalized is None):
            raise ParseError("exactly one of value_hz / value_normalized "
                             "must be given")
        if self.bond_kind not in geometry.BOND_KINDS:
            raise ParseError(f"unknown bond kind {self.bond_kind!r}")


@dataclass(frozen=True)
class RdcDataset:
    """Normalized couplings with bond identifiers."""

    records: tuple
    d: np.ndarray  # (M,) normalized couplings, row-aligned with records

    def __len__(self):
        return len(self.records)

    def keys(self):
        return [(r.residue_index, r.bond_kind) for r in self.records]


def parse_pdb_backbone(text: str, max_residues: int | None = None
                       ) -> geometry.BackboneStructure:
    """Parse backbone N/CA/C (+H) atoms from PDB ATOM records.

    First model, first chain, highest-occupancy altloc.  Every residue
    must carry a complete N/CA/C backbone; offenders are reported by
    residue number.
    """
    wanted = {"N": "n", "CA": "ca", "C": "c", "H": "h", "HN": "h"}
    residues: dict = {}   # (resseq, icode) -> {slot: (occupancy, xyz), 'name': str}
    order: list = []
    chain = None
    for lineno, line in enumerate(text.splitlines(), start=1):
        rec = line[:6].strip()
        if rec == "ENDMDL":
            break
        if rec != "ATOM":
            continue
        try:
            name = line[12:16].strip()
            altloc = line[16]
            resname = line[17:20].strip()
            chain_id = line[21]
            resseq = int(line[22:26])
            icode = line[26]
            xyz = np.array([float(line[30:38]), float(line[38:46]),
                            float(line[46:54])])
            occ_text = line[54:60].strip()
            occ = float(occ_text) if occ_text else 1.0
        except (ValueError, IndexError) as exc:
            raise ParseError(f"malformed ATOM record at line {lineno}: "
                             f"{exc}") from None
        if chain is None:
            chain = chain_id
        if chain_id != chain:
            continue
        slot = wanted.get(name)
        if slot is None:
            continue
        key = (resseq, icode)
        if key not in residues:
            residues[key] = {"name": resname}
            order.append(key)
        prev = residues[key].get(slot)
        if prev is None or (altloc != " " and occ > prev[0]):
            residues[key][slot] = (occ, xyz)

    if not order:
        raise ParseError("no backbone ATOM records found")
    if max_residues is not None:
        order = order[:max_residues]

    incomplete = [str(key[0]) for key in order
                  if any(s not in residues[key] for s in ("n", "ca", "c"))]
    if incomplete:
        raise ParseError("incomplete backbone (missing N/CA/C) at residue "
                         + ", ".join(incomplete))

    r = len(order)
    coords = {s: np.full((r, 3), np.nan) for s in ("n", "ca", "c", "h")}
    names, ids = [], []
    for i, key in enumerate(order):
        res = residues[key]
        names.append(res["name"])
        ids.append(key[0])
        for slot in ("n", "ca", "c", "h"):
            if slot in res:
                coords[slot][i] = res[slot][1]
    structure = geometry.BackboneStructure(
        tuple(names), coords["n"], coords["ca"], coords["c"], coords["h"],
        tuple(ids))
    geometry.validate_backbone(structure)
    return structure


def write_pdb_backbone(structure: geometry.BackboneStructure) -> str:
    """Serialize a backbone structure as minimal PDB ATOM records."""
    lines = []
    serial = 1
    for i in range(structure.n_residues):
        resname = structure.sequence[i]
        resseq = structure.residue_ids[i]
        atoms = [("N", structure.n[i]), ("CA", structure.ca[i]),
                 ("C", structure.c[i])]
        if np.all(np.isfinite(structure.h[i])):
            atoms.append(("H", structure.h[i]))
        for name, xyz in atoms:
            lines.append(
                f"ATOM  {serial:5d} {name:^4s} {resname:>3s} A{resseq:4d}    "
                f"{xyz[0]:8.3f}{xyz[1]:8.3f}{xyz[2]:8.3f}{1.0:6.2f}{0.0:6.2f}"
                f"{'':10s}{name[0]:>2s}")
            serial += 1
    lines.append("END")
    return "\n".join(lines) + "\n"


_BOND_ALIASES = {
    "N-H": geometry.NH, "NH": geometry.NH, "H-N": geometry.NH,
    "C-CA": geometry.CCA, "CCA": geometry.CCA, "CA-C": geometry.CCA,
    "C-N": geometry.CN, "CN": geometry.CN, "N-C": geometry.CN,
}


def parse_rdc_table(text: str, dmax: DmaxTable = DEFAULT_DMAX,
                    sequence=None, default_units: str = "hz") -> RdcDataset:
    """Read a delimited RDC table into normalized couplings.

    Expected header: residue, bond, value, optional uncertainty,
    optional units ("hz" or "normalized" per row; otherwise
    ``default_units`` applies).  Comma or tab delimited.  Duplicate
    (residue, bond) rows, unknown bond kinds and proline N-H rows
    (when a sequence keyed by residue number is supplied) are errors.
    """
    sample = text[:1024]
    delimiter = "\t" if sample.count("\t") > sample.count(",") else ","
    reader = csv.DictReader(io.StringIO(text), delimiter=delimiter)
    if reader.fieldnames is None:
        raise ParseError("empty RDC table")
    cols = {name.strip().lower(): name for name in reader.fieldnames}
    for required in ("residue", "bond", "value"):
        if required not in cols:
            raise ParseError(f"RDC table missing column {required!r}")

    records, values, seen = [], [], set()
    for rowno, row in enumerate(reader, start=2):
        try:
            residue = int(row[cols["residue"]])
            value = float(row[cols["value"]])
        except (TypeError, ValueError):
            raise ParseError(f"row {rowno}: malformed residue/value") from None
        bond_raw = (row[cols["bond"]] or "").strip().upper()
        kind = _BOND_ALIASES.get(bond_raw)
        if kind is None:
            raise ParseError(f"row {rowno}: unknown bond kind {bond_raw!r}")
        key = (residue, kind)
        if key in seen:
            raise ParseError(f"row {rowno}: duplicate entry for residue "
                             f"{residue} bond {kind}")
        seen.add(key)
        if sequence is not None and kind == geometry.NH:
            name = sequence.get(residue) if hasattr(sequence, "get") else None
            if name == "PRO":
                raise ParseError(f"row {rowno}: proline residue {residue} "
                                 "has no N-H bond")
        units = default_units
        if "units" in cols and (row[cols["units"]] or "").strip():
            units = row[cols["units"]].strip().lower()
        uncertainty = None
        if "uncertainty" in cols and (row[cols["uncertainty"]] or "").strip():
            uncertainty = float(row[cols["uncertainty"]])
        if units == "hz":
            rec = RdcRecord(residue, kind, value_hz=value,
                            uncertainty_hz=uncertainty)
            values.append(value / dmax[kind].dmax_hz)
        elif units == "normalized":
            rec = RdcRecord(residue, kind, value_normalized=value,
                            uncertainty_hz=uncertainty)
            values.append(value)
        else:
            raise ParseError(f"row {rowno}: unknown units {units!r}")
        records.append(rec)
    if not records:
        raise ParseError("RDC table has no data rows")
    return RdcDataset(tuple(records), np.array(values))


def match_rdc_to_bonds(dataset: RdcDataset, bonds: geometry.BondVectorSet,
                       residue_ids) -> tuple[geometry.BondVectorSet, np.ndarray]:
    """Align RDC rows with bond vectors by (residue number, bond kind).

    Returns the matched bond subset (in dataset order) and the
    corresponding normalized coupling vector.  Couplings without a
    matching bond are errors; bonds without couplings are dropped.
    """
    index = {}
    for i in range(len(bonds)):
        key = (residue_ids[bonds.residue_index[i]], bonds.kinds[i])
        index[key] = i
    rows, d = [], []
    for rec, value in zip(dataset.records, dataset.d):
        key = (rec.residue_index, rec.bond_kind)
        if key not in index:
            raise ParseError(f"no bond in structure for residue "
                             f"{rec.residue_index} {rec.bond_kind}")
        rows.append(index[key])
        d.append(value)
    rows = np.array(rows, dtype=int)
    matched = geometry.BondVectorSet(
        tuple(bonds.kinds[i] for i in rows), bonds.residue_index[rows],
        bonds.v[rows])
    return matched, np.array(d)
