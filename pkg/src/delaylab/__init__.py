"""Delay-aware optimizer lab.

Simulates the gradient staleness of asynchronous pipeline training on small
analytic landscapes and studies basis-rotated Adam variants against it.
Deterministic end to end: every artifact is a pure function of its config.
"""

from .eigenbasis import EstimationConfig
from .harness import (
    RunConfig,
    RunRecord,
    misalignment_trace,
    run_experiment,
    run_grid_sweep,
    slowdown_ratio,
    spiral_slowdown_sweep,
)
from .landscapes import KroneckerQuadraticSpec, MlpSpec, QuadraticSpec, SpiralSpec
from .optim import AdamHyper
from .staleness import StalenessConfig

__version__ = "0.1.0"

__all__ = [
    "AdamHyper",
    "EstimationConfig",
    "KroneckerQuadraticSpec",
    "MlpSpec",
    "QuadraticSpec",
    "RunConfig",
    "RunRecord",
    "SpiralSpec",
    "StalenessConfig",
    "misalignment_trace",
    "run_experiment",
    "run_grid_sweep",
    "slowdown_ratio",
    "spiral_slowdown_sweep",
    "__version__",
]
