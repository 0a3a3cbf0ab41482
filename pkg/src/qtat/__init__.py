"""Reconstruction of hyperbolic initial conditions from lateral boundary data.

The pipeline: an explicit wave solve generates boundary measurements; a
Gaussian-kernel time transform maps them to diffusion data; an exterior
diffusion solve recovers the normal flux; homogenization and a regularized
space-time least-squares minimization reconstruct the initial condition.
Diagnostics measure the exponential-weight estimates behind the method's
stability theory, and the experiment harness reproduces the logarithmic and
Hölder convergence trends at desk scale.
"""

__version__ = "0.1.0"

from .errors import (
    ConfigError,
    InvalidData,
    InvalidGeometry,
    InvalidInitialCondition,
    InvalidOperator,
    PipelineError,
    QtatError,
    SolverFailure,
    UnderResolved,
    UnstableConfiguration,
)
from .grid import (
    Field,
    GeometrySpec,
    Grid,
    MeasurementKind,
    ScaleRecord,
    SpaceTimeField,
    build_grid,
    domain_mask,
    normalize_geometry,
)
from .operators import (
    EllipticOperator,
    EllipticityReport,
    apply,
    apply_principal,
    pseudoconvexity_indicator,
    validate_ellipticity,
)
from .wave import (
    BoundaryTrace,
    FaceTrace,
    GrowthBound,
    WaveRun,
    estimate_growth_bound,
    extract_trace_ip1,
    extract_trace_ip2,
    solve_wave,
)
from .transform import (
    SignalTransformer,
    TailBound,
    TransformPlan,
    check_derivative_identity,
    default_t_targets,
    transform_signal,
    transform_trace,
)
from .parabolic import NoiseSpec, add_noise, recover_neumann, solve_parabolic
from .qrm import (
    QrmProblem,
    QrmSolution,
    ReconstructConfig,
    assemble_and_minimize,
    extract_initial,
    homogenize,
    reconstruct,
)
from .carleman import (
    CarlemanParams,
    DomainLabel,
    domain_membership,
    measure_carleman_constant,
    weight_values,
)
from .experiments import (
    StabilityReport,
    SweepConfig,
    run_ip1_stability,
    run_ip2_stability,
    run_qrm_convergence,
    run_sweep,
)
