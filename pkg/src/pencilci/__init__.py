"""Smooth eigendecompositions of SPD matrix pencils along parameter paths,
sign-signature detection of eigenvalue coalescences over 2-D domains, and
random-ensemble coalescence censuses with power-law fits."""

__version__ = "0.1.0"

from .census import (
    CensusReport,
    ExperimentSpec,
    PowerLawFit,
    cell_seed,
    fit_power_law,
    run_census,
    summarize_exponents,
    write_report,
)
from .continuation import (
    EigenPoint,
    StepDecision,
    StepRecord,
    TOLDIST,
    TOLSTEP,
    TraceResult,
    init_decomposition,
    predict,
    secant_guard,
    sign_correct,
    step_control,
    trace,
    trace_loop,
    veering_traverse,
    write_trace_csv,
)
from .detect import (
    BoxResult,
    CIEstimate,
    GridSpec,
    SweepResult,
    decode_signature,
    refine_box,
    signature_from_counts,
    sweep_grid,
    write_ci_csv,
    write_sweep_summary,
)
from .errors import (
    AmbiguousSign,
    BandwidthOutOfRange,
    DegenerateStart,
    DispersionOutOfRange,
    GapTooSmall,
    LoopUnresolvable,
    NonPositiveCount,
    NotPositiveDefinite,
    OddSignCount,
    PencilError,
    RefinementInconsistent,
    SeriesDiverged,
    SpectrumOverlap,
    StepUnderflow,
    TripleDegeneracy,
)
from .linalg import (
    CholeskyFactor,
    EigenPair,
    cholesky,
    coalescence_residual,
    eig2x2_pencil,
    gen_eig_ordered,
    matrix_bandwidth,
    spd_sqrt,
    spd_sqrt_series,
    sqrt_derivative,
    symmetrize,
)
from .pencil import (
    AnalyticCIPencil,
    BoxPerimeter,
    CirclePath,
    EmbeddedPencil,
    FunctionPath,
    ParametricPencil,
    Path,
    SegmentPath,
    SGPlusPencil,
    SGPlusRealization,
    analytic_ci_pencil,
    box_perimeter,
    circle,
    dispersion_bound,
    embed_2x2,
    load_pencil,
    pencil_from_descriptor,
    save_pencil,
    segment,
    sgplus_generate,
    sgplus_pencil,
)

__all__ = [name for name in dir() if not name.startswith("_")]
