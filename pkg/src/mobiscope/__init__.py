"""Human mobility profiling from GPS traces: POIs, DCD/OD features, k-means archetypes."""

from .config import PipelineConfig, load_config
from .errors import MobiscopeError, StageError
from .pipeline import run_all, run_pipeline
from .synth import SynthSpec, generate

__version__ = "0.1.0"

__all__ = [
    "MobiscopeError",
    "PipelineConfig",
    "StageError",
    "SynthSpec",
    "generate",
    "load_config",
    "run_all",
    "run_pipeline",
]
