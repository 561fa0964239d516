"""Persisted vector collections with exact and HNSW cosine search.

Vectors are stored unit-normalized so cosine similarity reduces to a dot
product. Exact search is the correctness oracle; the HNSW index is the
production path. Collections are immutable once built.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .binio import BlockReader, BlockWriter
from .errors import DimensionMismatchError, DualrecError, FormatError, NonFiniteValueError
from .hnsw import HnswGraph

COLLECTION_MAGIC = b"ULVC"
COLLECTION_VERSION = 1

INDEX_KINDS = ("exact", "hnsw")

_SCORE_BLOCK_ROWS = 8192


@dataclass(frozen=True)
class SearchHit:
    article_id: int
    score: float
    rank: int


@dataclass(frozen=True)
class HnswParams:
    """Graph parameters; ef_search None means max(4k, 64) at query time."""

    m: int = 16
    ef_construction: int = 200
    ef_search: int | None = None
    seed: int = 0

    def __post_init__(self):
        if self.m < 2:
            raise ValueError(f"m must be >= 2, got {self.m}")
        if self.ef_search is not None and self.ef_search < 1:
            raise ValueError(f"ef_search must be >= 1, got {self.ef_search}")

    def effective_ef(self, k: int) -> int:
        ef = self.ef_search if self.ef_search is not None else max(4 * k, 64)
        return max(ef, k)


def _normalize_rows(vectors: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(vectors.astype(np.float64), axis=1)
    if np.any(norms < 1e-12):
        raise ValueError("zero vector cannot be normalized for cosine search")
    return (vectors.astype(np.float64) / norms[:, np.newaxis]).astype(np.float32)


class VectorCollection:
    """A named, immutable set of unit vectors with per-article metadata."""

    def __init__(
        self,
        name: str,
        vectors: np.ndarray,
        ids: np.ndarray,
        metadata: dict[int, dict],
        index_kind: str,
        params: HnswParams,
        graph: HnswGraph | None,
    ):
        self.name = name
        self.vectors = vectors
        self.ids = ids
        self.metadata = metadata
        self.index_kind = index_kind
        self.params = params
        self._graph = graph
        self._id_to_row = {int(a): i for i, a in enumerate(ids)}

    @property
    def dim(self) -> int:
        return self.vectors.shape[1]

    def __len__(self) -> int:
        return self.vectors.shape[0]

    @classmethod
    def build(
        cls,
        name: str,
        vectors: np.ndarray,
        ids,
        metadata: dict[int, dict],
        index_kind: str = "exact",
        params: HnswParams | None = None,
    ) -> "VectorCollection":
        """Normalize, validate, and index a vector set."""
        if index_kind not in INDEX_KINDS:
            raise ValueError(f"unknown index kind: {index_kind!r}")
        vectors = np.asarray(vectors)
        if vectors.ndim != 2 or vectors.shape[0] < 1:
            raise ValueError(f"vectors must be a non-empty 2-D matrix, got shape {vectors.shape}")
        if not np.isfinite(vectors).all():
            raise NonFiniteValueError("vectors contain non-finite values")
        ids = np.asarray(ids, dtype=np.int64)
        if ids.shape[0] != vectors.shape[0]:
            raise DimensionMismatchError(f"{ids.shape[0]} ids for {vectors.shape[0]} vectors")
        if len(set(ids.tolist())) != len(ids):
            raise ValueError("duplicate ids in collection")
        missing = [int(a) for a in ids if int(a) not in metadata]
        if missing:
            raise ValueError(f"metadata missing for ids: {missing[:5]}")
        params = params or HnswParams()
        normalized = _normalize_rows(vectors)
        graph = None
        if index_kind == "hnsw":
            graph = HnswGraph(
                dim=normalized.shape[1],
                m=params.m,
                ef_construction=params.ef_construction,
                seed=params.seed,
            )
            graph.build(normalized)
        return cls(name, normalized, ids, dict(metadata), index_kind, params, graph)

    # -- search ------------------------------------------------------------

    def _normalize_query(self, q: np.ndarray) -> np.ndarray:
        q = np.asarray(q, dtype=np.float64).reshape(-1)
        if q.shape[0] != self.dim:
            raise DimensionMismatchError(f"query width {q.shape[0]}, collection dim {self.dim}")
        if not np.isfinite(q).all():
            raise NonFiniteValueError("query contains non-finite values")
        norm = np.linalg.norm(q)
        if norm < 1e-12:
            raise ValueError("zero query vector")
        return q / norm

    def _score_rows(self, rows: np.ndarray, q64: np.ndarray) -> np.ndarray:
        """Cosine scores in float64 so near-ties order reproducibly.

        Elementwise multiply plus per-row sum, not a BLAS matmul: the
        reduction then depends only on row content, so bit-identical
        vectors always score bit-identically and the id tie rule applies.
        """
        out = np.empty(rows.shape[0], dtype=np.float64)
        for start in range(0, rows.shape[0], _SCORE_BLOCK_ROWS):
            block = rows[start : start + _SCORE_BLOCK_ROWS].astype(np.float64)
            out[start : start + block.shape[0]] = (block * q64).sum(axis=1)
        return np.clip(out, -1.0, 1.0)

    def search_topk(self, q: np.ndarray, k: int) -> list[SearchHit]:
        """Top-k hits by cosine, ties broken by ascending article id."""
        if k < 1:
            raise ValueError(f"k must be >= 1, got {k}")
        if len(self) == 0:
            raise DualrecError("collection is empty")
        q64 = self._normalize_query(q)
        if self.index_kind == "exact":
            scores = self._score_rows(self.vectors, q64)
            order = np.lexsort((self.ids, -scores))[:k]
        else:
            ef = self.params.effective_ef(k)
            rows = np.array(self._graph.search(q64.astype(np.float32), ef), dtype=np.int64)
            scores_sub = self._score_rows(self.vectors[rows], q64)
            sub_order = np.lexsort((self.ids[rows], -scores_sub))[:k]
            full_scores = np.empty(len(self), dtype=np.float64)
            full_scores[rows] = scores_sub
            order = rows[sub_order]
            scores = full_scores
        return [
            SearchHit(article_id=int(self.ids[row]), score=float(scores[row]), rank=rank)
            for rank, row in enumerate(order, start=1)
        ]

    # -- persistence -------------------------------------------------------

    def persist(self, path: str | Path) -> None:
        with open(path, "wb") as fh:
            writer = BlockWriter(fh)
            writer.magic(COLLECTION_MAGIC)
            writer.u32(COLLECTION_VERSION)
            writer.text(self.name)
            writer.u32(self.dim)
            writer.u64(len(self))
            writer.u8(INDEX_KINDS.index(self.index_kind))
            writer.u32(self.params.m)
            writer.u32(self.params.ef_construction)
            writer.i32(-1 if self.params.ef_search is None else self.params.ef_search)
            writer.u64(self.params.seed)
            writer.array(self.vectors, "float32")
            writer.array(self.ids, "int64")
            meta_lines = "".join(
                json.dumps({"id": int(a), **self.metadata[int(a)]}, ensure_ascii=False) + "\n"
                for a in self.ids
            ).encode("utf-8")
            writer.u64(len(meta_lines))
            writer.write(meta_lines)
            if self.index_kind == "hnsw":
                blocks = self._graph.to_blocks()
                writer.u64(blocks["entry_point"])
                writer.i32(blocks["max_level"])
                writer.u64(len(blocks["counts"]))
                writer.u64(len(blocks["flat"]))
                writer.array(blocks["levels"], "uint32")
                writer.array(blocks["counts"], "uint32")
                writer.array(blocks["flat"], "uint32")
            writer.finish()

    @classmethod
    def open(cls, path: str | Path) -> "VectorCollection":
        with open(path, "rb") as fh:
            reader = BlockReader(fh)
            reader.expect_magic(COLLECTION_MAGIC)
            reader.expect_version(COLLECTION_VERSION)
            name = reader.text()
            dim = reader.u32()
            n = reader.u64()
            kind_code = reader.u8()
            if kind_code >= len(INDEX_KINDS):
                raise FormatError(f"invalid index kind code {kind_code}")
            index_kind = INDEX_KINDS[kind_code]
            ef_search = None
            m = reader.u32()
            ef_construction = reader.u32()
            raw_ef = reader.i32()
            if raw_ef >= 0:
                ef_search = raw_ef
            seed = reader.u64()
            params = HnswParams(m=m, ef_construction=ef_construction, ef_search=ef_search, seed=seed)
            vectors = reader.array(n * dim, "float32").reshape(n, dim)
            ids = reader.array(n, "int64")
            meta_len = reader.u64()
            metadata: dict[int, dict] = {}
            for line in reader.take(meta_len).decode("utf-8").splitlines():
                row = json.loads(line)
                metadata[int(row.pop("id"))] = row
            graph = None
            if index_kind == "hnsw":
                entry_point = reader.u64()
                max_level = reader.i32()
                n_counts = reader.u64()
                n_flat = reader.u64()
                blocks = {
                    "entry_point": entry_point,
                    "max_level": max_level,
                    "levels": reader.array(n, "uint32"),
                    "counts": reader.array(n_counts, "uint32"),
                    "flat": reader.array(n_flat, "uint32"),
                }
                graph = HnswGraph.from_blocks(blocks, vectors, m=m, ef_construction=ef_construction, seed=seed)
            reader.verify_checksum()
        return cls(name, vectors, ids, metadata, index_kind, params, graph)


def build(name, vectors, ids, metadata, index_kind="exact", params=None) -> VectorCollection:
    return VectorCollection.build(name, vectors, ids, metadata, index_kind, params)


def search_topk(collection: VectorCollection, q: np.ndarray, k: int) -> list[SearchHit]:
    return collection.search_topk(q, k)
