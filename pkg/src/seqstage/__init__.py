"""Variable-stage-size multistage samplers and sequential hypothesis tests."""

from .numeric import NEG_INF, DomainError
from .models import (
    HypothesisPair,
    ModelKind,
    ReplaySource,
    SimulateSource,
    bernoulli_pair,
    normal_mean_pair,
)
from .sampler import (
    BudgetExceededError,
    CrossingResult,
    Family,
    SamplerSpec,
    run_to_crossing,
)
from .testing import (
    CostSpec,
    TestFamily,
    TestSpec,
    TrialRecord,
    design_test,
    integrated_risk,
    m_star,
    predicted_risk,
    run_trial,
    second_order_risk,
)
from .oracle import OracleResult, exact_characteristics, wald_bound_check
from .harness import RiskReport, kstar_search, simulate, table1

__version__ = "0.1.0"

__all__ = [
    "NEG_INF",
    "DomainError",
    "HypothesisPair",
    "ModelKind",
    "ReplaySource",
    "SimulateSource",
    "bernoulli_pair",
    "normal_mean_pair",
    "BudgetExceededError",
    "CrossingResult",
    "Family",
    "SamplerSpec",
    "run_to_crossing",
    "CostSpec",
    "TestFamily",
    "TestSpec",
    "TrialRecord",
    "design_test",
    "integrated_risk",
    "m_star",
    "predicted_risk",
    "run_trial",
    "second_order_risk",
    "OracleResult",
    "exact_characteristics",
    "wald_bound_check",
    "RiskReport",
    "kstar_search",
    "simulate",
    "table1",
    "__version__",
]
