"""Optimal consumption, life insurance and investment for a wage earner with an uncertain lifetime."""

from .errors import (
    AccuracyError,
    DomainError,
    NumericalError,
    OracleFailure,
    PathError,
    SchemaError,
    SingularMarketError,
    WageEarnerError,
)
from .market import MarketModel
from .mortality import GompertzMakeham, PiecewiseConstant
from .numerics import Curve, Interpolation
from .scenario_io import figure1_scenario, load_scenario, scenario_from_dict
from .simulate import (
    ClosedFormPolicy,
    EvaluationMode,
    SimulationConfig,
    compare_strategies,
    estimate_expected_utility,
    simulate_path,
)
from .solver import (
    ControlAction,
    ExponentialIncome,
    HazardLoading,
    Preferences,
    Scenario,
    Variant,
    optimal_control,
    solve,
    value_function,
)
from .verify import verify_grid

__version__ = "0.1.0"
