"""Critical-dissipation transport on the unit sphere: solver and diagnostics."""

from .harmonics import (
    BasisIndex,
    GridField,
    GridTooSmallError,
    InvalidIndexError,
    SphereGrid,
    SpectralField,
    evaluate_harmonic,
    integrate,
    laplace_eigenvalue,
    make_grid,
    sht_forward,
    sht_inverse,
    synthesize_at_points,
)
from .operators import (
    NonZeroMeanError,
    VectorGridField,
    advection,
    cordoba_check,
    divergence,
    fractional_laplacian,
    gradient,
    h_half_seminorm_sq,
    inverse_lambda,
    perp_gradient,
    velocity_from_theta,
)
from .extension import (
    ExtensionField,
    InsufficientPointsError,
    KernelSlice,
    TruncationInsufficientError,
    dirichlet_energy,
    extend,
    extension_field,
    harmonicity_residual,
    heat_kernel,
    kernel_sup_scaling,
    l2_kernel_norm,
)
from .solver import (
    EnergyLedger,
    NonFiniteStateError,
    SimConfig,
    SimState,
    Trajectory,
    energy_inequality_check,
    initial_state,
    linf_decay_check,
    rhs,
    run,
    step,
)
from .degiorgi import (
    CadenceError,
    CutoffField,
    DeGiorgiSets,
    EmptyBallError,
    EnergySequence,
    LocalGeometry,
    NothingToFitError,
    OscillationProfile,
    RotationFrame,
    TruncationLadder,
    ZeroDenominatorError,
    comoving_frame,
    degiorgi_sets,
    drift_hypothesis_check,
    geodesic_ball_measure,
    global_energy_sequence,
    isoperimetric_check,
    ladder_geometry,
    local_energy_residual,
    oscillation,
    oscillation_profile,
    recurrence_fit,
    smooth_bump,
    truncate,
)
from .barriers import (
    BarrierSolution,
    CylinderProblem,
    InvalidGeometryError,
    NonConvergenceError,
    b1_scale_sweep,
    b2_bound_check,
    flat_delta,
    solve_axisymmetric,
    solve_barrier,
)

__version__ = "0.1.0"
