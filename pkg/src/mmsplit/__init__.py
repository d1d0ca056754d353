"""Finite metric measure spaces: optimal transport, curvature-dimension checks,
discrete Sobolev calculus and the splitting of a space along a line."""

__version__ = "0.1.0"

from .calculus import (
    bakry_emery_check,
    carre_du_champ,
    dirichlet_form,
    heat_flow,
    heat_kernel,
    hilbert_defect,
    laplacian_comparison_check,
    laplacian_measure,
    neighbor_graph,
    slope_field,
)
from .curvature import cd_convexity_check, density_bound_check, entropy, product_density_check
from .estimators import HeatSmoother, SplittingDecomposer
from .space import (
    MetricMeasureSpace,
    bishop_gromov_profile,
    cone,
    cylinder,
    discrete_geodesic,
    euclidean_grid,
    generate_space,
    normed_plane,
    product,
    validate_space,
)
from .splitting import (
    busemann_field,
    default_line,
    gradient_flow_map,
    lattice_line,
    make_line,
    product_line,
    pythagoras_check,
    quotient_split,
)
from .transport import (
    Coupling,
    Potential,
    ProbMeasure,
    c_concavity_check,
    c_transform,
    displacement_interpolation,
    duality_gap,
    w2_solve,
)
from .validation import InvalidSpaceError, NotFittedError

__all__ = [name for name in dir() if not name.startswith("_")]
