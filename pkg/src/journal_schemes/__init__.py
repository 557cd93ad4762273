"""Journal classification schemes from citation data, and their evaluation."""
from .clustering import KmeansConfig, SchemeLabeling, kmeans, scheme_sizes
from .pipeline import PipelineConfig, run_pipeline
from .sgns import EmbeddingMatrix, SgnsConfig, train_sgns
from .topics import LdaConfig, fit_lda
from .walks import WalkConfig, generate_citation_trails, node2vec_walks

__version__ = "0.1.0"

__all__ = [
    "EmbeddingMatrix", "KmeansConfig", "LdaConfig", "PipelineConfig", "SchemeLabeling", "SgnsConfig",
    "WalkConfig", "fit_lda", "generate_citation_trails", "kmeans", "node2vec_walks", "run_pipeline",
    "scheme_sizes", "train_sgns",
]
