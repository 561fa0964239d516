"""Query routing and the dual-pathway recommendation engine.

Short queries (by character length) search pooled headline embeddings;
long queries search pooled full-content embeddings; both pathways carry
enough metadata to return complete articles in one lookup.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from . import embed as embed_mod
from .corpus import Article, clean_text
from .embed import EmbedderSpec, embed_matrix, make_embedder
from .errors import DualrecError, EngineBuildError, ProviderError
from .index import HnswParams, VectorCollection
from .reduce import PcaModel, load_model, pca_fit, pca_transform, save_model

DEFAULT_THETA = 150
DEFAULT_K = 15

MANIFEST_NAME = "engine.json"
MANIFEST_VERSION = 1


@dataclass
class PathwayConfig:
    """One retrieval pipeline: pooling strategy, reducer, and collection."""

    name: str
    pooling: str
    d_prime: int
    pca_model: PcaModel | None = None
    collection: VectorCollection | None = None


@dataclass
class EngineConfig:
    """A loaded engine: routing threshold plus the two pathways."""

    short_path: PathwayConfig
    long_path: PathwayConfig
    theta: int = DEFAULT_THETA
    default_k: int = DEFAULT_K
    embedder_spec: EmbedderSpec = field(default_factory=EmbedderSpec)
    clean_queries: bool = True
    embedder: object = None

    def __post_init__(self):
        if self.theta < 1:
            raise ValueError(f"theta must be >= 1, got {self.theta}")
        for path in (self.short_path, self.long_path):
            if path.collection is not None and path.collection.dim != path.d_prime:
                raise DualrecError(
                    f"pathway {path.name!r} declares d'={path.d_prime} "
                    f"but its collection has dim {path.collection.dim}"
                )
            if path.pca_model is not None and path.pca_model.d_prime != path.d_prime:
                raise DualrecError(f"pathway {path.name!r} reducer dimension mismatch")

    def get_embedder(self):
        if self.embedder is None:
            self.embedder = make_embedder(self.embedder_spec)
        return self.embedder


@dataclass(frozen=True)
class Query:
    """A trimmed query and its character length, the routing signal."""

    text: str
    char_len: int

    @classmethod
    def make(cls, text: str) -> "Query":
        trimmed = text.strip()
        if not trimmed:
            raise ValueError("query is empty")
        return cls(text=trimmed, char_len=len(trimmed))


def query_kind(q: Query, theta: int) -> str:
    return "short" if q.char_len < theta else "long"


@dataclass(frozen=True)
class Recommendation:
    article_id: int
    headline: str
    category: str
    full_content: str
    score: float
    rank: int
    pathway_used: str


def route(q: Query, cfg: EngineConfig) -> PathwayConfig:
    """Pick the pathway from character length alone: short iff len < theta."""
    if not q.text.strip():
        raise ValueError("query is empty")
    return cfg.short_path if q.char_len < cfg.theta else cfg.long_path


def _prepare_query_text(q: Query, cfg: EngineConfig) -> str:
    text = clean_text(q.text) if cfg.clean_queries else q.text
    if not text.strip():
        raise ValueError("query is empty after cleaning")
    return text


def recommend(
    q: Query | str,
    k: int | None = None,
    cfg: EngineConfig | None = None,
    exclude_id: int | None = None,
) -> list[Recommendation]:
    """Embed, reduce, and search a query on its routed pathway.

    Returns up to k recommendations with full article content populated
    from collection metadata. `exclude_id` suppresses one article, which
    serves the related-articles use case where the query is the article
    currently being viewed.
    """
    if cfg is None:
        raise ValueError("engine config is required")
    if isinstance(q, str):
        q = Query.make(q)
    k = cfg.default_k if k is None else k
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    pathway = route(q, cfg)
    if pathway.pca_model is None or pathway.collection is None:
        raise DualrecError(f"pathway {pathway.name!r} is not fully loaded")

    text = _prepare_query_text(q, cfg)
    vector = cfg.get_embedder().embed_text(text, pathway.pooling)
    reduced = pca_transform(pathway.pca_model, vector)

    fetch = k + 1 if exclude_id is not None else k
    hits = pathway.collection.search_topk(reduced, min(fetch, len(pathway.collection)))
    recs = []
    for hit in hits:
        if exclude_id is not None and hit.article_id == exclude_id:
            continue
        meta = pathway.collection.metadata[hit.article_id]
        recs.append(
            Recommendation(
                article_id=hit.article_id,
                headline=meta["headline"],
                category=meta["category"],
                full_content=meta["content"],
                score=hit.score,
                rank=len(recs) + 1,
                pathway_used=pathway.name,
            )
        )
        if len(recs) == k:
            break
    return recs


@dataclass(frozen=True)
class EngineTemplate:
    """Build-time knobs for an engine, defaulting to the shipped profile."""

    theta: int = DEFAULT_THETA
    default_k: int = DEFAULT_K
    short_pooling: str = "cls"
    short_dim: int = 64
    long_pooling: str = "mean"
    long_dim: int = 128
    index_kind: str = "hnsw"
    hnsw_params: HnswParams = field(default_factory=HnswParams)
    embedder_spec: EmbedderSpec = field(default_factory=EmbedderSpec)
    clean_queries: bool = True
    # Optional cap on PCA training rows for memory-bounded runs (0 = all).
    pca_sample: int = 0


def _corpus_matrix(articles, embedder, field_name: str, pooling: str, stage: str) -> np.ndarray:
    rows = []
    for art in articles:
        text = art.headline if field_name == "headline" else art.content
        text_id = (
            embed_mod.headline_exchange_id(art.id)
            if field_name == "headline"
            else embed_mod.content_exchange_id(art.id)
        )
        try:
            matrix = embedder.matrix_for_id(text_id, text)
            rows.append(embed_matrix(matrix, pooling))
        except (ProviderError, ValueError) as exc:
            raise EngineBuildError(stage, f"article {art.id}: {exc}") from exc
    return np.stack(rows)


def _fit_pathway_pca(matrix: np.ndarray, d_prime: int, sample: int, stage: str) -> PcaModel:
    train = matrix
    if sample and matrix.shape[0] > sample:
        picks = np.random.Generator(np.random.PCG64(0)).choice(matrix.shape[0], size=sample, replace=False)
        train = matrix[np.sort(picks)]
    try:
        return pca_fit(train, d_prime)
    except (ValueError, DualrecError) as exc:
        raise EngineBuildError(stage, str(exc)) from exc


def build_engine(articles: Sequence[Article], template: EngineTemplate = EngineTemplate()) -> EngineConfig:
    """Offline build: embed both fields, fit one reducer per pathway, and
    index two collections with reciprocal metadata."""
    if not articles:
        raise EngineBuildError("ingest", "no articles to build from")
    ids = [a.id for a in articles]
    if len(set(ids)) != len(ids):
        raise EngineBuildError("ingest", "duplicate article ids")

    embedder = make_embedder(template.embedder_spec)
    headline_vecs = _corpus_matrix(articles, embedder, "headline", template.short_pooling, "embed-headlines")
    content_vecs = _corpus_matrix(articles, embedder, "content", template.long_pooling, "embed-contents")

    pca_short = _fit_pathway_pca(headline_vecs, template.short_dim, template.pca_sample, "fit-pca-headline")
    pca_long = _fit_pathway_pca(content_vecs, template.long_dim, template.pca_sample, "fit-pca-content")

    metadata = {
        a.id: {"headline": a.headline, "content": a.content, "category": a.category} for a in articles
    }
    try:
        short_col = VectorCollection.build(
            "headline",
            pca_transform(pca_short, headline_vecs),
            ids,
            metadata,
            index_kind=template.index_kind,
            params=template.hnsw_params,
        )
        long_col = VectorCollection.build(
            "content",
            pca_transform(pca_long, content_vecs),
            ids,
            metadata,
            index_kind=template.index_kind,
            params=template.hnsw_params,
        )
    except (ValueError, DualrecError) as exc:
        raise EngineBuildError("build-collections", str(exc)) from exc

    return EngineConfig(
        short_path=PathwayConfig("headline", template.short_pooling, template.short_dim, pca_short, short_col),
        long_path=PathwayConfig("content", template.long_pooling, template.long_dim, pca_long, long_col),
        theta=template.theta,
        default_k=template.default_k,
        embedder_spec=template.embedder_spec,
        clean_queries=template.clean_queries,
        embedder=embedder,
    )


def save_engine(cfg: EngineConfig, out_dir: str | Path) -> Path:
    """Persist models, collections, and a manifest; returns manifest path."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    manifest: dict = {
        "version": MANIFEST_VERSION,
        "theta": cfg.theta,
        "default_k": cfg.default_k,
        "clean_queries": cfg.clean_queries,
        "embedder": cfg.embedder_spec.to_dict(),
        "pathways": {},
    }
    for pathway in (cfg.short_path, cfg.long_path):
        model_file = f"pca_{pathway.name}.ulpc"
        col_file = f"{pathway.name}.ulvc"
        save_model(pathway.pca_model, out / model_file)
        pathway.collection.persist(out / col_file)
        manifest["pathways"][pathway.name] = {
            "pooling": pathway.pooling,
            "d_prime": pathway.d_prime,
            "pca_model": model_file,
            "collection": col_file,
        }
    manifest_path = out / MANIFEST_NAME
    manifest_path.write_text(json.dumps(manifest, indent=2, ensure_ascii=False), encoding="utf-8")
    return manifest_path


def load_engine(manifest_path: str | Path) -> EngineConfig:
    manifest_path = Path(manifest_path)
    if manifest_path.is_dir():
        manifest_path = manifest_path / MANIFEST_NAME
    data = json.loads(manifest_path.read_text(encoding="utf-8"))
    if data.get("version") != MANIFEST_VERSION:
        raise DualrecError(f"unsupported manifest version: {data.get('version')}")
    base = manifest_path.parent
    pathways = {}
    for name in ("headline", "content"):
        entry = data["pathways"][name]
        pathways[name] = PathwayConfig(
            name=name,
            pooling=entry["pooling"],
            d_prime=entry["d_prime"],
            pca_model=load_model(base / entry["pca_model"]),
            collection=VectorCollection.open(base / entry["collection"]),
        )
    spec = EmbedderSpec.from_dict(data["embedder"])
    return EngineConfig(
        short_path=pathways["headline"],
        long_path=pathways["content"],
        theta=data["theta"],
        default_k=data["default_k"],
        embedder_spec=spec,
        clean_queries=data.get("clean_queries", True),
        embedder=make_embedder(spec, base_dir=base),
    )
