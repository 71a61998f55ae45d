"""tlim: recover self-, pair- and higher-order interactions among
discrete variables directly from samples.

The toolkit simulates datasets from known Hamiltonians (2-d lattice pair
and plaquette models, linear trait models), estimates model-independent
additive and multiplicative n-point interactions with Markov-blanket
conditioning, screens conditioning sets with stratified chi-squared
tests, and attaches empirical bootstrap errors.  An exact enumerator of
small systems serves as the ground-truth oracle throughout.
"""

__version__ = "0.1.0"

from .errors import (
    AllReplicatesFailed,
    DegenerateMean,
    EstimationError,
    InsufficientSupport,
    NoUsableStrata,
    ParseError,
    ZeroCell,
)
from .store import (
    Assignment,
    SampleMatrix,
    VariableMeta,
    conditional_mean,
    count_assignment,
    from_spins,
    from_states,
    load_csv,
)
from .estimators import (
    InteractionEstimate,
    TargetSpec,
    additive_interaction,
    additive_interaction_categorical,
    ate,
    coupling_from_interaction,
    multiplicative_interaction,
    multiplicative_via_expectations,
)
from .uncertainty import (
    BootstrapResult,
    bin_report,
    bootstrap,
    bootstrap_multiplicative,
)
from .independence import (
    IndependenceTest,
    ScreenResult,
    blanket_screen,
    chi_squared_pair,
)
from .simulators import (
    ExactDistribution,
    HamiltonianConfig,
    TraitConfig,
    empirical_distribution,
    enumerate_distribution,
    exact_interaction,
    ising_metropolis,
    plaquette_metropolis,
    regression3_trait_config,
    simulate_trait,
    ukbb_trait_config,
)
from .rbm import (
    RbmParams,
    rbm_npoint_log_interaction,
    rbm_pair_coupling,
    visible_log_marginal,
)
from . import lattice

__all__ = [
    "Assignment",
    "AllReplicatesFailed",
    "BootstrapResult",
    "DegenerateMean",
    "EstimationError",
    "ExactDistribution",
    "HamiltonianConfig",
    "IndependenceTest",
    "InsufficientSupport",
    "InteractionEstimate",
    "NoUsableStrata",
    "ParseError",
    "RbmParams",
    "SampleMatrix",
    "ScreenResult",
    "TargetSpec",
    "TraitConfig",
    "VariableMeta",
    "ZeroCell",
    "additive_interaction",
    "additive_interaction_categorical",
    "ate",
    "bin_report",
    "blanket_screen",
    "bootstrap",
    "bootstrap_multiplicative",
    "chi_squared_pair",
    "conditional_mean",
    "coupling_from_interaction",
    "count_assignment",
    "empirical_distribution",
    "enumerate_distribution",
    "exact_interaction",
    "from_spins",
    "from_states",
    "ising_metropolis",
    "lattice",
    "load_csv",
    "multiplicative_interaction",
    "multiplicative_via_expectations",
    "plaquette_metropolis",
    "rbm_npoint_log_interaction",
    "rbm_pair_coupling",
    "regression3_trait_config",
    "simulate_trait",
    "ukbb_trait_config",
    "visible_log_marginal",
]
