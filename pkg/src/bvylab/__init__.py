"""bvylab: asymptotic nonlocal Sobolev functionals on metric measure spaces.

The package estimates lambda^p (m x m)(E) for the superlevel pair sets
E = {(x,y): |u(x)-u(y)| >= lambda d(x,y)^(N/p+1)} over a catalogue of
windowed metric measure spaces, extracts limits and decay rates, and checks
two-sided bounds, exponent optimality and tangent-space asymptotics against
independently computed reference quantities.
"""

from .spaces import (
    BanachBox,
    Box,
    CapabilityError,
    EuclideanBox,
    FatCantor,
    Heisenberg1,
    MassValue,
    PointSet,
    Space,
    SpaceError,
    SpaceMismatchError,
    WeightedEuclidean,
    space_from_json,
    space_to_json,
)
from .functions import (
    ConeFunction,
    HeisCoordinate,
    LinearFunction,
    ProductSine,
    SmoothBump,
    TestFunction,
    centered_support,
    function_from_json,
    function_to_json,
    scaled,
)
from .lipschitz import LipConfig, LipLadder, blowup_convergence, global_lip, lip_ladder, pointwise_lipschitz
from .estimator import (
    BVYConfig,
    BoundSandwich,
    GradNorms,
    K_norm,
    LimitFit,
    LocalizationError,
    MCEstimate,
    RescaledCurve,
    bound_check,
    grad_norm,
    k_const,
    k_const_mc,
    limit_fit,
    localization_radius,
    pair_in_E,
    pair_measure_direct,
    pair_measure_localized,
    rescaled_curve,
    shell_integral,
)
from .diagnostics import (
    DensityReport,
    DoublingReport,
    VolumeLowerReport,
    check_volume_lower,
    default_radius_ladder,
    estimate_beta,
    estimate_density_bounds,
)

__version__ = "0.1.0"
