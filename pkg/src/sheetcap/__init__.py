"""Brownian sheet simulation, discrete Bessel-Riesz capacities and desk-scale
checks of the capacity bounds on hitting probabilities."""

__version__ = "0.1.0"

from .capacity import (  # noqa: E402
    CapacityResult,
    DiscreteMeasure,
    KernelSpec,
    brute_force_energy_min,
    capacity_limit_check,
    capacity_of_mesh,
    energy,
    kernel_matrix,
    kernel_value,
    minimize_energy,
)
from .constants import (  # noqa: E402
    ConstantSet,
    ProblemParams,
    compute_constants,
    compute_lemma_constants,
    compute_theorem_constants,
    cross_check_relations,
)
from .domain import (  # noqa: E402
    CompactMesh,
    SpacePoint,
    TimePoint,
    build_rect_mesh,
    build_segment_mesh,
    mesh_from_atoms,
    partial_order,
    restrict_mesh,
    sup_dist_time,
    sup_norm_time,
)
from .fieldsim import (  # noqa: E402
    SheetSample,
    increment_variance_ord1,
    sample_additive_bm,
    sample_decomposition_ord1,
    sample_decomposition_ord2,
    sample_exact,
    sample_grid_chentsov,
    sheet_covariance,
)
from .montecarlo import (  # noqa: E402
    HitQuery,
    MCEstimate,
    estimate_hit_probability,
    estimate_image_measure,
    estimate_mean_occupation,
    estimate_second_moment,
    occupation_integral,
    paley_zygmund_check,
)
from .rng import SeedSpec  # noqa: E402
