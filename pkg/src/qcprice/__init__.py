"""Dynamic pricing simulator for perishable SKUs sold under basket-level MNL demand."""

from .adp import AdpPolicy, ValueWeights, adp_greedy_policy, fit_weights, train_adp, value_estimate
from .arrivals import (
    ArrivalRateProfile,
    OrderLog,
    estimate_rate_profile,
    poisson_pmf,
    rate_at,
    sample_arrival_count,
)
from .catalog import (
    CatalogError,
    EpisodeConfig,
    InventoryState,
    Sku,
    SkuCatalog,
    availability_set,
    validate_catalog,
)
from .choice import (
    basket_probabilities,
    basket_utility,
    enumerate_baskets,
    expected_demand,
    expected_item_demand,
)
from .policies import (
    ExplorationPolicy,
    FixedPricePolicy,
    GuardrailPolicy,
    MyopicPolicy,
    PolicyDecision,
    apply_inertia,
    guardrail_policy,
    myopic_policy,
    solve_price_for_targets,
    target_demand,
)
from .simulator import EpisodeResult, EpochRecord, evaluate_policy, run_episode, simulate_epoch, terminal_salvage

__version__ = "0.1.0"
