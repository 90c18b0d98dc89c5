"""fbmlab: a numerical laboratory for singular SDEs driven by fractional
Brownian motion.

Core pieces: exact-covariance fBm sampling with Gaussian conditioning and
branching; drift fields in L^q_t C^alpha_x with regime classification and
heat-kernel mollification; deterministic sewing / p-variation / Young
equations; singular-SDE solvers with flows, Jacobians and noise derivatives;
Monte-Carlo exponent estimators; McKean-Vlasov particle systems; pathwise
transport and continuity solvers; and a config-driven experiment CLI.
"""

from .fbm import (
    ConditionalLaw,
    FbmPath,
    branch_futures,
    conditional_law,
    conditional_variance,
    covariance_factor,
    covariance_matrix,
    estimate_lnd_constant,
    fbm_covariance,
    sample_fbm,
    scaling_moment_check,
)
from .fields import (
    ControlFn,
    DriftField,
    RegimeReport,
    classify_regime,
    control_from_profile,
    heat_smooth,
    holder_seminorm_estimate,
    make_field,
    mollify_sequence,
)
from .fitting import ScalingFit, fit_loglog
from .grids import DiscretePath, TimeGrid
from .mkv import (
    EmpiricalMeasurePath,
    MkvProblem,
    solve_mkv_particles,
    solve_mkv_picard,
    sliced_wasserstein,
    wasserstein1_1d,
)
from .sde import (
    AveragedField,
    FlowGrid,
    MollifiedFamily,
    SdeProblem,
    SolutionPath,
    averaged_field,
    compute_flow,
    malliavin_directional,
    solve_distributional,
    solve_euler,
    solve_euler_lattice,
)
from .transport import (
    DensityPath,
    ScalarFieldPath,
    duality_check,
    solve_continuity,
    solve_continuity_backward,
    solve_transport,
)
from .young import (
    Germ,
    PVarResult,
    SewingDiagnostics,
    germ_from_functions,
    germ_from_paths,
    p_variation,
    reverse_linear_flow,
    sew,
    solve_affine_young,
    solve_nonlinear_yde,
    young_integral,
)

__version__ = "0.1.0"
