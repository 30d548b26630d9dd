"""Next-POI recommendation on heterogeneous check-in hypergraphs with
entropy-adaptive meta-learning."""

__version__ = "0.1.0"

from .estimator import NextPoiRecommender
from .records import CheckinRecord, Trajectory, Vocab
from .dataset_io import Dataset, load_dataset, save_dataset
from .synthetic import SynthConfig, generate_synthetic
from .metalearn import MetaConfig, adaptive_rate, behavior_entropy
from .evaluate import AblationSpec, ndcg_at_k, recall_at_k, run_experiment, sweep

__all__ = [
    "__version__",
    "NextPoiRecommender",
    "CheckinRecord",
    "Trajectory",
    "Vocab",
    "Dataset",
    "load_dataset",
    "save_dataset",
    "SynthConfig",
    "generate_synthetic",
    "MetaConfig",
    "adaptive_rate",
    "behavior_entropy",
    "AblationSpec",
    "recall_at_k",
    "ndcg_at_k",
    "run_experiment",
    "sweep",
]
