"""Conservative surgery of area-preserving torus maps."""
from .gridmap import (
    GridMap,
    MapError,
    PeriodicSampler,
    cat_map,
    disk_rotation,
    identity_map,
    linear_map,
    shear_map,
    standard_map,
    translation_map,
)
from .surgery import (
    Annulus,
    DensityField,
    conservative_paste_map,
    holder_convexity,
    linearize_at_point,
    moser_correct,
    periodic_identity_surgery,
    point_det,
)
from .symplectic import (
    GeneratingFunction2D,
    blend_generating_functions,
    standard_generating_function,
    symplectic_blend_2d,
    twist_map,
)
