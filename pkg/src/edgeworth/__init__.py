"""Stochastic non-tatonnement trade simulation for pure-exchange economies.

The package is organized around five layers:

- :mod:`edgeworth.prefs`: closed-form Cobb-Douglas / CES demand systems and
  the sharpness/attractiveness predicates.
- :mod:`edgeworth.geometry`: the demand and flattening coordinate changes,
  canonical manifolds, Pareto-set parameterization, contract curve, and the
  2x2 Walras equilibrium.
- :mod:`edgeworth.trade`: linear trade paths, speed polytopes,
  trade-compatible price sets, and extreme-rate box sets.
- :mod:`edgeworth.engine`: the Monte Carlo process over priced barter steps,
  with reproducible per-run random streams.
- :mod:`edgeworth.verify`: randomized numeric falsification suites backing
  the ``edgeworth verify`` command.
"""

from .engine import (
    ArctanNormal,
    OutcomeDistribution,
    PriorSpec,
    SimConfig,
    Tabulated,
    Terminal,
    Trajectory,
    UniformArc,
    example3_process,
    run_monte_carlo,
    run_trajectory,
)
from .errors import (
    ConvergenceError,
    DomainDegeneracyError,
    EdgeworthError,
    LPError,
    SamplingError,
    ScenarioError,
    SpecificationError,
    UnreachableUtilityError,
)
from .geometry import FlatPoint, ManifoldKind, ManifoldSample, ParetoPoint
from .prefs import Family, MultiplicativeCobbDouglas, UtilitySpec
from .trade import Allocation, BoxSet, Economy, Household, SpeedPrior, SpeedVector

__version__ = "0.1.0"

__all__ = [
    "Allocation",
    "ArctanNormal",
    "BoxSet",
    "ConvergenceError",
    "DomainDegeneracyError",
    "Economy",
    "EdgeworthError",
    "Family",
    "FlatPoint",
    "Household",
    "LPError",
    "ManifoldKind",
    "ManifoldSample",
    "MultiplicativeCobbDouglas",
    "OutcomeDistribution",
    "ParetoPoint",
    "PriorSpec",
    "SamplingError",
    "ScenarioError",
    "SimConfig",
    "SpecificationError",
    "SpeedPrior",
    "SpeedVector",
    "Tabulated",
    "Terminal",
    "Trajectory",
    "UniformArc",
    "UnreachableUtilityError",
    "UtilitySpec",
    "example3_process",
    "run_monte_carlo",
    "run_trajectory",
]
