"""Information-relay analysis of small recurrent networks on synthetic tasks."""
from . import ablation, experiment, infotheory, latent, recnet, taskgen, temporal

__all__ = ["ablation", "experiment", "infotheory", "latent", "recnet", "taskgen", "temporal"]
__version__ = "0.1.0"
