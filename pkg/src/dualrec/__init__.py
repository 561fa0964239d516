"""Query-adaptive dual-pathway semantic retrieval engine.

Short queries match pooled headline embeddings, long queries match pooled
full-content embeddings; both pathways serve PCA-reduced vectors from
exact or HNSW cosine indexes.
"""

from .corpus import (
    Article,
    PipelineConfig,
    PreprocessReport,
    RawRecord,
    StopList,
    clean_text,
    compose_content,
    filter_records,
    preprocess,
    remove_stopwords,
    repair_encoding,
)
from .embed import (
    ChunkPlan,
    EmbedderSpec,
    PooledEmbedding,
    TokenEmbeddingMatrix,
    embed_matrix,
    embed_text,
    plan_chunks,
    pool,
    read_exchange,
    synthetic_embedder,
    write_exchange,
)
from .evaluate import (
    ComparisonReport,
    MetricReport,
    Qrels,
    RetrievalRun,
    compare_reducers,
    jaccard_at_k,
    overlap_at_k,
    precision_at_k,
    sweep_dimensions,
)
from .index import HnswParams, SearchHit, VectorCollection, search_topk
from .reduce import PcaModel, explained_variance_ratio, load_model, pca_fit, pca_transform, save_model
from .router import (
    EngineConfig,
    EngineTemplate,
    PathwayConfig,
    Query,
    Recommendation,
    build_engine,
    load_engine,
    recommend,
    route,
    save_engine,
)

__version__ = "0.1.0"

__all__ = [
    "Article",
    "ChunkPlan",
    "ComparisonReport",
    "EmbedderSpec",
    "EngineConfig",
    "EngineTemplate",
    "HnswParams",
    "MetricReport",
    "PathwayConfig",
    "PcaModel",
    "PipelineConfig",
    "PooledEmbedding",
    "PreprocessReport",
    "Qrels",
    "Query",
    "RawRecord",
    "Recommendation",
    "RetrievalRun",
    "SearchHit",
    "StopList",
    "TokenEmbeddingMatrix",
    "VectorCollection",
    "build_engine",
    "clean_text",
    "compare_reducers",
    "compose_content",
    "embed_matrix",
    "embed_text",
    "explained_variance_ratio",
    "filter_records",
    "jaccard_at_k",
    "load_engine",
    "load_model",
    "overlap_at_k",
    "pca_fit",
    "pca_transform",
    "plan_chunks",
    "pool",
    "precision_at_k",
    "preprocess",
    "read_exchange",
    "recommend",
    "remove_stopwords",
    "repair_encoding",
    "route",
    "save_engine",
    "save_model",
    "search_topk",
    "sweep_dimensions",
    "synthetic_embedder",
    "write_exchange",
]
