"""Core-radius regularized nonlocal perimeters, curvatures, and flows."""

from .errors import NumericalGuardError
from .kernels import (
    Anisotropy,
    Dislocation,
    Isotropic,
    KernelParams,
    Tabulated,
    alpha_const,
    beta_scale,
    eval_aniso_kernel,
    eval_kernel,
    field_T,
    lambda_tail,
    lambda_total,
    phi_density,
    sigma_scale,
    sphere_area,
    unit_ball_volume,
)
from .shapes import (
    Annulus,
    Ball,
    BoundarySample,
    Difference,
    Ellipse,
    GridSet,
    GridSpec,
    HalfSpace,
    Rectangle,
    Shape,
    Translate,
    Union,
    UnsupportedShapeError,
    boundary_samples,
    classical_mean_curvature,
    exact_area,
    exact_perimeter,
    grid_for_shape,
    load_gridset,
    rasterize,
    save_gridset,
)
from .perimeter import (
    PerimeterResult,
    SweepResult,
    brute_force_perimeter,
    decompose_FG,
    far_field_bound,
    joint_sweep,
    nonlocal_perimeter,
    perimeter_sweep,
    scaled_perimeter,
    shape_energy,
)
from .curvature import (
    AxiomReport,
    CurvatureQuad,
    CurvatureQuery,
    axiom_suite,
    classical_aniso_curvature,
    first_variation_check,
    gridset_complement_curvature,
    nonlocal_curvature,
    scaled_curvature,
)
from .flow import (
    FlowConfig,
    LevelSetField,
    Trajectory,
    flow_step,
    init_levelset,
    mcf_extinction_time,
    mcf_reference,
    redistance,
    run_flow,
    zero_contour,
)
from .dislocation import (
    DislocationParams,
    as_anisotropy,
    dislocation_K1,
    dislocation_flow_preset,
    dislocation_g,
    dislocation_phi_closed,
    hausdorff_distance,
    track_front,
)

__version__ = "0.1.0"
