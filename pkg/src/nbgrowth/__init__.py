"""Random graphs with prescribed non-backtracking growth rate, and free subgroups of that growth."""

from .config_sampler import (
    MultiGraph,
    SamplingError,
    explore_neighborhood,
    is_simple,
    sample_matching,
    sample_simple,
    tangle_free_check,
)
from .degree_model import (
    DegreeDistribution,
    DegreeSequence,
    DistributionError,
    derived_constants,
    erdos_gallai_check,
    offspring_distribution,
    realize_sequence,
    solve_two_point,
)
from .nb_spectral import (
    ConvergenceError,
    NBOperator,
    build_nb_operator,
    edge_vectors,
    growth_rate_estimate,
    ihara_bass_oracle,
    power_iterate,
    prop51_diagnostics,
)
from .stallings import (
    LabeledGraph,
    SubgroupBasis,
    complete_to_regular,
    fold_words,
    label_immersion,
    restrict_labels,
    subgroup_basis,
    subgroup_growth_certificate,
    two_factorize,
    verify_immersion,
)
from .ugw_sim import (
    martingale_residuals,
    q_convergence_study,
    simulate_Q,
    simulate_Z,
    tail_bound_check,
)

__version__ = "0.1.0"
