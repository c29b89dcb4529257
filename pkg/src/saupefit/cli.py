"""Command line interface.

Subcommands: fit (OLS or PSD-constrained Saupe fit), sigma (noise
magnitude report), debias (Monte Carlo eigenvalue debiasing), mfr
(fragment sweep with averaging) and experiment (CSV study runners).
JSON goes to stdout; exit codes: 0 success, 2 input error, 3 numerical
failure.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import (debias as debias_mod, ensemble, estimators, experiments,
               fileio, geometry, noise, tensor)

EXIT_INPUT = 2
EXIT_NUMERICAL = 3

_INPUT_ERRORS = (fileio.ParseError, geometry.GeometryError, ValueError,
                 OSError)
_NUMERICAL_ERRORS = (estimators.FitError, noise.NoiseError,
                     debias_mod.DebiasError, ensemble.EnsembleError,
                     tensor.TensorError, np.linalg.LinAlgError)


def _parse_range(text):
    try:
        a, b = text.split(":")
        start, stop = int(a), int(b)
    except ValueError:
        raise fileio.ParseError(f"bad --range {text!r}; expected START:STOP")
    if start < 1 or stop <= start - 1:
        raise fileio.ParseError(f"bad --range {text!r}")
    return start - 1, stop


def _load_problem(args):
    """Parse PDB + RDC inputs into a matched (bonds, design, d) triple."""
    structure = fileio.parse_pdb_backbone(Path(args.pdb).read_text())
    if args.range:
        start, stop = _parse_range(args.range)
        structure = structure.fragment(start, min(stop, structure.n_residues))
    structure = geometry.add_amide_hydrogens(structure)
    dataset = fileio.parse_rdc_table(Path(args.rdc).read_text(),
                                     default_units=args.rdc_units)
    bonds = geometry.bond_vectors(structure)
    if args.range:
        # keep only couplings whose bond lies inside the selected range
        have = {(structure.residue_ids[bonds.residue_index[i]],
                 bonds.kinds[i]) for i in range(len(bonds))}
        keep = [i for i, key in enumerate(dataset.keys()) if key in have]
        if not keep:
            raise fileio.ParseError("no RDC rows fall inside --range")
        dataset = fileio.RdcDataset(
            tuple(dataset.records[i] for i in keep), dataset.d[keep])
    matched, d = fileio.match_rdc_to_bonds(dataset, bonds,
                                           structure.residue_ids)
    return structure, matched, estimators.build_design(matched), d


def _fit_payload(fit: estimators.FitResult):
    da, rhombicity = (None, None)
    try:
        da, rhombicity = tensor.magnitude_rhombicity(fit.eigenvalues)
    except tensor.TensorError:
        pass
    return {
        "s_hat": fit.s_hat.tolist(),
        "saupe_tensor": fit.S_hat.tolist(),
        "eigenvalues": fit.eigenvalues.tolist(),
        "eigenvectors": fit.eigen.vectors.tolist(),
        "rms": fit.rms,
        "magnitude_da": da,
        "rhombicity": rhombicity,
    }


def _emit(payload, json_out=None):
    text = json.dumps(payload, indent=2) + "\n"
    if json_out:
        Path(json_out).write_text(text)
    else:
        sys.stdout.write(text)


def cmd_fit(args):
    _, _, design, d = _load_problem(args)
    if args.constrained:
        fit = estimators.constrained_fit(design, d)
    else:
        fit = estimators.ols_fit(design, d)
    payload = {"command": "fit", "constrained": bool(args.constrained),
               "n_couplings": design.M}
    payload.update(_fit_payload(fit))
    if args.constrained:
        payload["converged"] = fit.converged
        payload["iterations"] = fit.n_iter
    _emit(payload, args.json_out)


def cmd_sigma(args):
    structure, _, design, d = _load_problem(args)
    fit = estimators.ols_fit(design, d)
    template = geometry.extract_torsions(structure)
    sens = noise.sensitivity(template, structure.sequence)
    keep = _canonical_rows(structure, design)
    sens = noise.SensitivityTensor(sens.g_phi[:, keep, :],
                                   sens.g_psi[:, keep, :])
    payload = {
        "command": "sigma",
        "n_couplings": design.M,
        "rms": fit.rms,
        "sigma_torsion_deg": float(np.rad2deg(
            noise.estimate_sigma(fit, sens, design))),
        "sigma_add": noise.estimate_sigma_add(fit),
    }
    _emit(payload, args.json_out)


def _canonical_rows(structure, design):
    """Indices of the design's bonds within the canonical bond ordering."""
    plan = [(kind, res) for kind, res in
            geometry.bond_frame_atoms(structure.sequence)]
    index = {key: i for i, key in enumerate(plan)}
    return np.array([index[(kind, res)] for kind, res
                     in zip(design.kinds, design.residue_index)], dtype=int)


def cmd_debias(args):
    structure, _, design, d = _load_problem(args)
    template = geometry.extract_torsions(structure)
    rows = _canonical_rows(structure, design)
    sigma = None if args.auto_sigma else np.deg2rad(args.sigma)
    rng = noise.stream_rng(args.seed)
    payload = {"command": "debias", "n_sim": args.nsim, "seed": args.seed}
    if args.simex_grid:
        grid = [float(k) for k in args.simex_grid.split(",")]
        if sigma is None:
            _, fit = debias_mod.template_fit(
                template, structure.sequence, d=d, rows=rows)
            sens = noise.sensitivity(template, structure.sequence)
            sens = noise.SensitivityTensor(sens.g_phi[:, rows, :],
                                           sens.g_psi[:, rows, :])
            sigma = noise.estimate_sigma(fit, sens, design)
        lam = debias_mod.simex_extrapolate(
            template, structure.sequence, geometry.BOND_KINDS, d, sigma,
            grid, args.nsim, rng, rows=rows)
        payload.update({
            "sigma_deg": float(np.rad2deg(sigma)),
            "simex_grid": grid,
            "eigenvalues_simex": lam.tolist(),
        })
    else:
        result = debias_mod.mc_debias(
            template, structure.sequence, geometry.BOND_KINDS, d, sigma,
            args.nsim, rng, rows=rows)
        payload.update({
            "sigma_deg": float(np.rad2deg(result.sigma_used)),
            "eigenvalues_ols": result.lambda_ols.tolist(),
            "eigenvalues_sim_mean": result.lambda_sim_mean.tolist(),
            "bias_hat": result.bias_hat.tolist(),
            "eigenvalues_debiased": result.lambda_tilde.tolist(),
            "n_skipped": result.n_skipped,
        })
    _emit(payload, args.json_out)


def cmd_mfr(args):
    structure = fileio.parse_pdb_backbone(Path(args.pdb).read_text(),
                                          args.residue_limit)
    structure = geometry.add_amide_hydrogens(structure)
    dataset = fileio.parse_rdc_table(Path(args.rdc).read_text(),
                                     default_units=args.rdc_units)
    by_key = dict(zip(dataset.keys(), dataset.d))
    torsions = geometry.extract_torsions(structure)
    windows = ensemble.enumerate_fragments(structure, args.window,
                                           args.residue_limit)
    rng = noise.stream_rng(args.seed)
    estimates, skipped = [], []
    for fid, (start, stop) in enumerate(windows):
        seq = structure.sequence[start:stop]
        template = geometry.TorsionSet(torsions.angles[start:stop - 1])
        plan = geometry.bond_frame_atoms(seq)
        keep = [i for i, (kind, res) in enumerate(plan)
                if (structure.residue_ids[start + res], kind) in by_key]
        if len(keep) < 6:
            skipped.append(fid)
            continue
        d = np.array([by_key[(structure.residue_ids[start + plan[i][1]],
                              plan[i][0])] for i in keep])
        try:
            _, fit = debias_mod.template_fit(template, seq, d=d, rows=keep)
            sigma = None if args.sigma is None else np.deg2rad(args.sigma)
            result = debias_mod.mc_debias(template, seq, geometry.BOND_KINDS,
                                          d, sigma, args.nsim, rng, rows=keep)
        except _NUMERICAL_ERRORS:
            skipped.append(fid)
            continue
        estimates.append(ensemble.FragmentEstimate(fid, start, stop, fit,
                                                   result))
    summary = ensemble.average_eigenvalues(
        estimates, rms_threshold=args.threshold, above=args.above)
    payload = {
        "command": "mfr",
        "window_planes": args.window,
        "n_fragments": len(windows),
        "n_fitted": len(estimates),
        "n_selected": summary.n_fragments,
        "selection": summary.selection,
        "skipped_fragments": skipped,
        "eigenvalues_ave_ols": summary.lambda_ave_ols.tolist(),
        "eigenvalues_ave_debiased": summary.lambda_ave_tilde.tolist(),
    }
    _emit(payload, args.json_out)


def cmd_experiment(args):
    config = {}
    if args.config:
        config = json.loads(Path(args.config).read_text())
    paths = experiments.run_experiment(args.name, config, args.out)
    _emit({"command": "experiment", "name": args.name,
           "outputs": [str(p) for p in paths]})


def build_parser():
    parser = argparse.ArgumentParser(
        prog="saupefit",
        description="Saupe tensor estimation and eigenvalue debiasing "
                    "from RDC data")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_io(p):
        p.add_argument("--rdc", required=True, help="RDC table (CSV/TSV)")
        p.add_argument("--pdb", required=True, help="PDB file")
        p.add_argument("--range", default=None,
                       help="1-based residue range START:STOP (inclusive "
                            "of START, exclusive of STOP+1 semantics: "
                            "e.g. 1:8 keeps the first 8 residues)")
        p.add_argument("--rdc-units", default="hz",
                       choices=("hz", "normalized"))
        p.add_argument("--json-out", default=None)

    p_fit = sub.add_parser("fit", help="fit the Saupe tensor")
    add_io(p_fit)
    p_fit.add_argument("--constrained", action="store_true",
                       help="PSD-constrained fit over physical tensors")
    p_fit.set_defaults(func=cmd_fit)

    p_sigma = sub.add_parser("sigma", help="noise magnitude report")
    add_io(p_sigma)
    p_sigma.set_defaults(func=cmd_sigma)

    p_deb = sub.add_parser("debias", help="Monte Carlo eigenvalue debiasing")
    add_io(p_deb)
    group = p_deb.add_mutually_exclusive_group(required=True)
    group.add_argument("--sigma", type=float, default=None,
                       help="torsion noise magnitude in degrees")
    group.add_argument("--auto-sigma", action="store_true",
                       help="estimate sigma from the residual RMS")
    p_deb.add_argument("--nsim", type=int, default=1000)
    p_deb.add_argument("--seed", type=int, default=0)
    p_deb.add_argument("--simex-grid", default=None,
                       help="comma-separated k multipliers for SIMEX "
                            "extrapolation")
    p_deb.set_defaults(func=cmd_debias)

    p_mfr = sub.add_parser("mfr", help="multi-fragment averaging sweep")
    add_io(p_mfr)
    p_mfr.add_argument("--window", type=int, default=7,
                       help="peptide planes per fragment")
    p_mfr.add_argument("--threshold", type=float, default=None,
                       help="residual RMS cutoff for averaging")
    thr = p_mfr.add_mutually_exclusive_group()
    thr.add_argument("--above", dest="above", action="store_true",
                     default=True)
    thr.add_argument("--below", dest="above", action="store_false")
    p_mfr.add_argument("--sigma", type=float, default=None,
                       help="torsion noise in degrees (default: per-fragment "
                            "estimate)")
    p_mfr.add_argument("--nsim", type=int, default=500)
    p_mfr.add_argument("--seed", type=int, default=0)
    p_mfr.add_argument("--residue-limit", type=int, default=None)
    p_mfr.set_defaults(func=cmd_mfr)

    p_exp = sub.add_parser("experiment", help="run a named study to CSV")
    p_exp.add_argument("name", choices=sorted(experiments.RUNNERS))
    p_exp.add_argument("--config", default=None, help="JSON config file")
    p_exp.add_argument("--out", default=".", help="output directory")
    p_exp.set_defaults(func=cmd_experiment)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        args.func(args)
    except _NUMERICAL_ERRORS as exc:
        print(f"saupefit: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except _INPUT_ERRORS as exc:
        print(f"saupefit: input error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    return 0


if __name__ == "__main__":
    sys.exit(main())
