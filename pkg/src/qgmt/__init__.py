"""Computational toolkit for Q-valued functions, integer chains and normal reparametrizations."""

from .polynomial import Polynomial
from .qpoints import (
    AmbiguityError,
    QPoint,
    batch_distances,
    brute_force_distance,
    center_of_mass,
    cost_matrix,
    diameter,
    distance,
    multiplicity,
    norm,
    optimal_matching,
    union,
)
from .qfields import (
    AmbiguousBranch,
    DecompositionError,
    NotSeparated,
    SampledQField,
    SheetSelection,
    cluster_values,
    decompose,
    finite_difference_gradient,
    lipschitz_estimate,
    select_sheets,
)
from .chains import (
    PLQField,
    RefinementError,
    SimplicialChain,
    SimplicialComplex,
    affine_homotopy_fill,
    boundary,
    check_boundary_commutation,
    flat_pushforward_stability,
    graph_chain,
    grid_complex,
    homotopy_mass_bound,
    mass,
    pushforward,
    qpushforward,
    simplicial_flat_norm,
)
from .multisection import (
    InvariantViolation,
    Multisection,
    check_coherence,
    check_cone,
    from_qfield,
    lipschitz_from_cone,
    to_qfield,
)
from .reparam import (
    GraphSurface,
    NormalField,
    SheetField,
    SmallnessViolation,
    SolverError,
    ThicknessViolation,
    build_normal_field,
    check_smallness,
    normal_frame,
    solve_fiber,
    verify_estimates,
    verify_graph_identity,
)

__version__ = "0.1.0"
