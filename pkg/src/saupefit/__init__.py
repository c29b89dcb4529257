"""Saupe tensor estimation from RDCs with Monte Carlo eigenvalue debiasing."""

from .geometry import (
    BOND_KINDS, CCA, CN, NH, BackboneStructure, BondVectorSet, GeometryError,
    TorsionSet, add_amide_hydrogens, bond_vectors, build_backbone,
    extract_torsions, seq1_to_3,
)
from .tensor import (
    EigenSystem, TensorError, adjoint_L, eig_sorted, field_tensor,
    from_tensor, magnitude_rhombicity, predict_rdc, to_tensor,
)
from .estimators import (
    DesignMatrix, FitError, FitResult, build_design, constrained_fit,
    design_row, ols_fit, project_spectrahedron,
)
from .noise import (
    NoiseError, NoiseSpec, SensitivityTensor, add_coupling_noise,
    estimate_sigma, estimate_sigma_add, perturb_torsions, sensitivity,
    stream_rng,
)
from .debias import (
    DebiasError, DebiasResult, additive_bias_predict, additive_debias,
    bound_additive_bias, mc_debias, simex_extrapolate,
)
from .ensemble import (
    EnsembleError, EnsembleSummary, FragmentEstimate, average_eigenvalues,
    enumerate_fragments, fractional_error, random_saupe,
)
from .fileio import (
    DEFAULT_DMAX, DmaxEntry, DmaxTable, ParseError, RdcDataset, RdcRecord,
    match_rdc_to_bonds, parse_pdb_backbone, parse_rdc_table,
    write_pdb_backbone,
)
from .experiments import run_experiment

__version__ = "0.1.0"
