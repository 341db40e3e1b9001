"""Movable-antenna ISAC beamforming: models, solvers, and experiment drivers."""

from .scene import (
    ArrayLayout,
    SceneConfig,
    SnrReport,
    channel,
    comm_snr,
    mrt_beamformer,
    response_matrix,
    sensing_snr,
    snr_report,
    steering,
)
from .conic import ConicProgram, ConicSolution, derealify, realify
from .combiner import MvdrResult, mvdr_combiner, mvdr_snr_closedform, sherman_morrison_expand
from .beamformer import (
    PsiOperators,
    build_psi_operators,
    extract_rank1,
    gamma_r_from_psi,
    max_sensing_snr,
    psi_values,
    solve_W_direct,
    solve_W_sca,
)
from .positions import (
    AuxiliaryVariables,
    SlackTriple,
    SurrogateCoefficients,
    TrustRegion,
    build_surrogate,
    linearize_min_distance,
    optimize_positions,
)
from .bcd import BcdOptions, BcdResult, init_layout, run_bcd
from .baselines import (
    solve_fpa,
    solve_gradient_positions,
    solve_zf,
)
from .experiments import (
    ExperimentSpec,
    ResultTable,
    audit_constraints,
    inspect_scene,
    run_experiment,
)
from .errors import (
    DegenerateDirectionError,
    ExtractionFailureError,
    InvalidAnchorError,
    InvalidParameterError,
    MaisacError,
    ProgramBuildError,
)

__all__ = [name for name in dir() if not name.startswith("_")]
