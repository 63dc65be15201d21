"""Byzantine-robust binary decision fusion: generators, fusion rules, a numpy MLP and a bench harness."""
from .core import (
    CapacityError,
    ChannelParams,
    ConfigError,
    FixedK,
    FusionDecision,
    HonestyVector,
    IIDPrior,
    IndependentAlpha,
    LabeledSample,
    MarkovPrior,
    MaxEntropyBounded,
    ReportMatrix,
    ScenarioConfig,
    StateVector,
    Synchronized,
    UnconstrainedMaxEntropy,
    Unsynchronized,
)
from .metrics import MetricsReport, evaluate

__version__ = "0.1.0"

__all__ = [
    "CapacityError", "ChannelParams", "ConfigError", "FixedK", "FusionDecision", "HonestyVector", "IIDPrior",
    "IndependentAlpha", "LabeledSample", "MarkovPrior", "MaxEntropyBounded", "ReportMatrix", "ScenarioConfig",
    "StateVector", "Synchronized", "UnconstrainedMaxEntropy", "Unsynchronized", "MetricsReport", "evaluate",
]
