"""Conservative pasting of vector fields and maps on periodic grids."""
from .grid import (
    GridSpec,
    NormReport,
    ScalarGrid,
    SpecMismatchError,
    VectorGrid,
    c1_distance,
    curl_of_stream,
    c1_norm,
    divergence,
    gradient,
    holder_norm,
    inner,
    jacobian,
    laplacian,
)
from .regions import (
    Ball,
    BumpProfile,
    MaskRegion,
    PartitionPair,
    RegionError,
    RegionNest,
    Slab,
    build_partition,
    build_region_nest,
    bump_profile,
)
from .solver import (
    DivergenceProblem,
    SolveReport,
    SolverError,
    check_compatibility,
    leray_project,
    solve_divergence,
)
from .vector_paste import (
    PastingReport,
    PastingRequest,
    blend,
    mollify_divfree,
    mollify_scalar,
    paste_c1,
    paste_support_controlled,
    smooth_field,
)

__version__ = "0.1.0"
