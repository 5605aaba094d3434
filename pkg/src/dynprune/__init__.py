"""Dynamic coreset selection for self-supervised training on redundant data."""

__version__ = "0.1.0"

from .rng import SeededRng
from .embeddings import EmbeddingMatrix, load_embeddings, save_embeddings, random_subset
from .kmeans import kmeanspp_init, lloyd, assign_nearest, kmeans
from .hierarchy import ClusterModel, hkmeans, final_level
from .selection import Selection
from .pruner import PruneConfig, quota_allocate, sample_within_cluster, prune
from .curriculum import CurriculumConfig, epochs_for_budget, run_ssl_ord
from .toyssl import EncoderParams, ToyTrainer, augment, ntxent_loss, train_epoch, embed
from .synthgen import SynthConfig, zipf_proportions, generate
from .evaluation import knn_predict, probe, balance_metrics

__all__ = [
    "SeededRng",
    "EmbeddingMatrix",
    "load_embeddings",
    "save_embeddings",
    "random_subset",
    "kmeanspp_init",
    "lloyd",
    "assign_nearest",
    "kmeans",
    "ClusterModel",
    "hkmeans",
    "final_level",
    "Selection",
    "PruneConfig",
    "quota_allocate",
    "sample_within_cluster",
    "prune",
    "CurriculumConfig",
    "epochs_for_budget",
    "run_ssl_ord",
    "EncoderParams",
    "ToyTrainer",
    "augment",
    "ntxent_loss",
    "train_epoch",
    "embed",
    "SynthConfig",
    "zipf_proportions",
    "generate",
    "knn_predict",
    "probe",
    "balance_metrics",
]
