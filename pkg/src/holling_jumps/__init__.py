"""Imprecise stochastic Holling II one-predator two-prey model with jumps."""

__version__ = "0.1.0"

from .intervals import Interval, PositiveInterval, realize  # noqa: E402
from .model import (  # noqa: E402
    BCoefficients,
    CrispModel,
    ImpreciseModel,
    JumpMeasure,
    StateVector,
    b_coefficients,
    drift,
    log_drift,
    realize_model,
)
from .engine import (  # noqa: E402
    ComparisonSpec,
    SimulationConfig,
    Trajectory,
    run_comparison_ensemble,
    run_ensemble,
    simulate_comparison,
    simulate_path,
)
from .asymptotics import RegimeKind, RegimeVerdict, classify_regime, verify_regime  # noqa: E402
