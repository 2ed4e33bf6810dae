from .experiments import reproduce
from .geometry import ShapeVector
from .graph import FormationTopology, Graph
from .models import ExperimentConfig, load_config
from .scale import build_artifacts
from .simulation import SimConfig, integrate

__all__ = [
    "ExperimentConfig",
    "FormationTopology",
    "Graph",
    "ShapeVector",
    "SimConfig",
    "build_artifacts",
    "integrate",
    "load_config",
    "reproduce",
]
