"""Pooled 768-dimensional text embeddings from pluggable token providers.

Token-embedding matrices come either from a deterministic synthetic
provider (desk-scale testing) or from exchange files exported by an
external model runner. Pooling (mean/max/cls), token-space chunking with
overlap, and chunk averaging all live here.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path
from typing import BinaryIO, Iterable, Iterator

import numpy as np

from .binio import BlockReader, BlockWriter
from .errors import DimensionMismatchError, NonFiniteValueError, ProviderError

MODEL_DIM = 768
L_MAX_TOKENS = 512
CHUNK_OVERLAP = 50

POOLING_STRATEGIES = ("mean", "max", "cls")

EXCHANGE_MAGIC = b"ULTE"
EXCHANGE_VERSION = 1


@dataclass(frozen=True)
class TokenEmbeddingMatrix:
    """Per-text model output: one row per token, optionally a leading
    classification row."""

    values: np.ndarray
    has_cls: bool = False

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float32)
        if values.ndim != 2 or values.shape[0] < 1:
            raise ValueError(f"token matrix must be 2-D with at least one row, got shape {values.shape}")
        if not np.isfinite(values).all():
            raise NonFiniteValueError("token matrix contains non-finite values")
        object.__setattr__(self, "values", values)

    @property
    def rows(self) -> int:
        return self.values.shape[0]

    @property
    def width(self) -> int:
        return self.values.shape[1]

    @property
    def token_count(self) -> int:
        """Number of token rows, excluding the classification row."""
        return self.rows - 1 if self.has_cls else self.rows


@dataclass(frozen=True)
class ChunkPlan:
    """Ordered token windows covering [0, T) with a fixed overlap."""

    l_max: int
    overlap: int
    windows: tuple[tuple[int, int], ...]


@dataclass(frozen=True)
class PooledEmbedding:
    vector: np.ndarray
    strategy: str
    source_kind: str = "query"


@dataclass(frozen=True)
class EmbedderSpec:
    """Declares which token-embedding provider backs an engine."""

    provider: str = "synthetic"
    model_name: str = ""
    dim: int = MODEL_DIM
    seed: int = 0
    # Exchange-file paths, used when provider == "exchange_file".
    headline_exchange: str = ""
    content_exchange: str = ""
    query_exchange: str = ""

    def to_dict(self) -> dict:
        return dict(self.__dict__)

    @classmethod
    def from_dict(cls, data: dict) -> "EmbedderSpec":
        return cls(**data)


def plan_chunks(token_count: int, l_max: int = L_MAX_TOKENS, overlap: int = CHUNK_OVERLAP) -> ChunkPlan:
    """Plan overlapping token windows with stride l_max - overlap.

    A trailing window is emitted only when it covers at least one token
    beyond the previous window.
    """
    if token_count < 1:
        raise ValueError(f"token_count must be >= 1, got {token_count}")
    if not 0 <= overlap < l_max:
        raise ValueError(f"overlap must satisfy 0 <= overlap < l_max, got overlap={overlap} l_max={l_max}")
    stride = l_max - overlap
    windows: list[tuple[int, int]] = []
    start = 0
    while True:
        end = min(start + l_max, token_count)
        if windows and end <= windows[-1][1]:
            break
        windows.append((start, end))
        if end == token_count:
            break
        start += stride
    return ChunkPlan(l_max=l_max, overlap=overlap, windows=tuple(windows))


def pool(tokens: TokenEmbeddingMatrix, strategy: str) -> np.ndarray:
    """Aggregate a token matrix into one vector.

    mean: column-wise arithmetic mean over all rows (64-bit accumulation);
    max: column-wise maximum; cls: copy of row 0 (requires has_cls).
    """
    if strategy == "mean":
        return tokens.values.astype(np.float64).mean(axis=0).astype(np.float32)
    if strategy == "max":
        return tokens.values.max(axis=0)
    if strategy == "cls":
        if not tokens.has_cls:
            raise ValueError("cls pooling requires a matrix with a classification row")
        return tokens.values[0].copy()
    raise ValueError(f"unknown pooling strategy: {strategy!r}")


def _chunk_matrices(matrix: TokenEmbeddingMatrix, plan: ChunkPlan) -> Iterator[TokenEmbeddingMatrix]:
    offset = 1 if matrix.has_cls else 0
    for start, end in plan.windows:
        rows = matrix.values[offset + start : offset + end]
        if matrix.has_cls:
            rows = np.vstack([matrix.values[:1], rows])
        yield TokenEmbeddingMatrix(values=rows, has_cls=matrix.has_cls)


def embed_matrix(
    matrix: TokenEmbeddingMatrix,
    strategy: str,
    l_max: int = L_MAX_TOKENS,
    overlap: int = CHUNK_OVERLAP,
) -> np.ndarray:
    """Pool a token matrix, chunk-averaging when it exceeds the window size.

    Texts within the window pool directly; longer ones are split into
    overlapping windows, each pooled independently, and the unweighted mean
    of the chunk poolings is returned. The classification row, when present,
    is carried into every chunk.
    """
    if matrix.token_count <= l_max:
        return pool(matrix, strategy)
    plan = plan_chunks(matrix.token_count, l_max=l_max, overlap=overlap)
    acc = np.zeros(matrix.width, dtype=np.float64)
    for chunk in _chunk_matrices(matrix, plan):
        acc += pool(chunk, strategy).astype(np.float64)
    return (acc / len(plan.windows)).astype(np.float32)


# --------------------------------------------------------------------------
# Synthetic provider


def _hash_seed(*parts: str) -> int:
    digest = hashlib.blake2b("\x1f".join(parts).encode("utf-8"), digest_size=8).digest()
    return int.from_bytes(digest, "little")


@lru_cache(maxsize=262144)
def _token_vector(token: str, seed: int, dim: int) -> np.ndarray:
    rng = np.random.Generator(np.random.PCG64(_hash_seed("tok", str(seed), token)))
    vec = rng.standard_normal(dim)
    vec /= np.linalg.norm(vec)
    out = vec.astype(np.float32)
    out.setflags(write=False)
    return out


def synthetic_embedder(text: str, seed: int, dim: int = MODEL_DIM) -> TokenEmbeddingMatrix:
    """Deterministic hash-derived token matrix for desk-scale tests.

    Tokens are whitespace words; each token row is a unit-norm vector
    derived from (token, seed) alone, so shared tokens produce identical
    rows across texts. Row 0 is a synthetic classification row: the
    normalized token mean nudged by a small text-specific offset. Empty
    text yields a single classification-only row.
    """
    tokens = text.split()
    offset_rng = np.random.Generator(np.random.PCG64(_hash_seed("cls", str(seed), text)))
    offset = offset_rng.standard_normal(dim)
    offset /= np.linalg.norm(offset)
    if not tokens:
        cls_row = offset.astype(np.float32)
        return TokenEmbeddingMatrix(values=cls_row[np.newaxis, :], has_cls=True)
    rows = np.stack([_token_vector(t, seed, dim) for t in tokens])
    mean = rows.astype(np.float64).mean(axis=0)
    mean /= np.linalg.norm(mean)
    cls_row = mean + 0.05 * offset
    cls_row /= np.linalg.norm(cls_row)
    values = np.vstack([cls_row.astype(np.float32)[np.newaxis, :], rows])
    return TokenEmbeddingMatrix(values=values, has_cls=True)


# --------------------------------------------------------------------------
# Exchange file format


def write_exchange(
    path: str | Path,
    entries: Iterable[tuple[str, TokenEmbeddingMatrix]],
    dim: int = MODEL_DIM,
) -> int:
    """Write (text_id, matrix) entries to an exchange file; returns the count.

    The entry count lives in the header, so entries are buffered first.
    """
    buffered = list(entries)
    with open(path, "wb") as fh:
        writer = BlockWriter(fh)
        writer.magic(EXCHANGE_MAGIC)
        writer.u32(EXCHANGE_VERSION)
        writer.u32(dim)
        writer.u64(len(buffered))
        for text_id, matrix in buffered:
            if matrix.width != dim:
                raise DimensionMismatchError(f"entry {text_id!r} has width {matrix.width}, expected {dim}")
            writer.text(text_id)
            writer.u32(matrix.rows)
            writer.u8(1 if matrix.has_cls else 0)
            writer.array(matrix.values, "float32")
        writer.finish()
    return len(buffered)


def _read_exchange_header(reader: BlockReader, dim: int) -> int:
    reader.expect_magic(EXCHANGE_MAGIC)
    reader.expect_version(EXCHANGE_VERSION)
    file_dim = reader.u32()
    if file_dim != dim:
        raise DimensionMismatchError(f"exchange file dim {file_dim}, expected {dim}")
    return reader.u64()


def _read_exchange_entry(reader: BlockReader, dim: int) -> tuple[str, TokenEmbeddingMatrix]:
    text_id = reader.text()
    rows = reader.u32()
    has_cls = reader.u8()
    values = reader.array(rows * dim, "float32").reshape(rows, dim)
    if not np.isfinite(values).all():
        raise NonFiniteValueError(f"entry {text_id!r} contains non-finite values")
    return text_id, TokenEmbeddingMatrix(values=values, has_cls=bool(has_cls))


def read_exchange(path: str | Path, dim: int = MODEL_DIM) -> Iterator[tuple[str, TokenEmbeddingMatrix]]:
    """Stream (text_id, matrix) entries from an exchange file in file order."""
    with open(path, "rb") as fh:
        reader = BlockReader(fh)
        count = _read_exchange_header(reader, dim)
        for _ in range(count):
            yield _read_exchange_entry(reader, dim)
        reader.verify_checksum()


class ExchangeReader:
    """Random access over an exchange file via an id -> offset index."""

    def __init__(self, path: str | Path, dim: int = MODEL_DIM):
        self.path = Path(path)
        self.dim = dim
        self._offsets: dict[str, int] = {}
        self._fh: BinaryIO | None = None
        self._build_index()

    def _build_index(self) -> None:
        with open(self.path, "rb") as fh:
            reader = BlockReader(fh)
            count = _read_exchange_header(reader, self.dim)
            for _ in range(count):
                offset = fh.tell()
                text_id, _ = _read_exchange_entry(reader, self.dim)
                if text_id in self._offsets:
                    raise ProviderError(f"duplicate text_id in exchange file: {text_id!r}")
                self._offsets[text_id] = offset
            reader.verify_checksum()

    def ids(self) -> list[str]:
        return list(self._offsets)

    def __contains__(self, text_id: str) -> bool:
        return text_id in self._offsets

    def __len__(self) -> int:
        return len(self._offsets)

    def get(self, text_id: str) -> TokenEmbeddingMatrix:
        if text_id not in self._offsets:
            raise ProviderError(f"missing exchange entry: {text_id!r}")
        if self._fh is None:
            self._fh = open(self.path, "rb")
        self._fh.seek(self._offsets[text_id])
        _, matrix = _read_exchange_entry(BlockReader(self._fh), self.dim)
        return matrix

    def close(self) -> None:
        if self._fh is not None:
            self._fh.close()
            self._fh = None


# --------------------------------------------------------------------------
# Embedder front-ends


def query_exchange_id(text: str) -> str:
    """Stable id under which a query's token matrix is filed in an exchange."""
    return "q:" + hashlib.sha256(text.encode("utf-8")).hexdigest()


def headline_exchange_id(article_id: int) -> str:
    return f"h:{article_id}"


def content_exchange_id(article_id: int) -> str:
    return f"c:{article_id}"


class SyntheticEmbedder:
    """Text embedder backed by the synthetic token provider."""

    def __init__(self, seed: int = 0, dim: int = MODEL_DIM):
        self.seed = seed
        self.dim = dim

    def matrix(self, text: str) -> TokenEmbeddingMatrix:
        if not text.strip():
            raise ProviderError("cannot embed empty text")
        return synthetic_embedder(text, self.seed, self.dim)

    def embed_text(self, text: str, strategy: str) -> np.ndarray:
        return embed_matrix(self.matrix(text), strategy)

    def matrix_for_id(self, text_id: str, text: str) -> TokenEmbeddingMatrix:
        return self.matrix(text)


class ExchangeEmbedder:
    """Text embedder backed by pre-exported exchange files.

    Corpus texts are looked up by their article-field ids; ad-hoc query
    texts resolve through the query exchange via `query_exchange_id`.
    """

    def __init__(
        self,
        headline_exchange: str | Path = "",
        content_exchange: str | Path = "",
        query_exchange: str | Path = "",
        dim: int = MODEL_DIM,
    ):
        self.dim = dim
        self._readers: dict[str, ExchangeReader] = {}
        for name, path in (
            ("headline", headline_exchange),
            ("content", content_exchange),
            ("query", query_exchange),
        ):
            if path:
                self._readers[name] = ExchangeReader(path, dim=dim)

    def _lookup(self, text_id: str) -> TokenEmbeddingMatrix:
        for reader in self._readers.values():
            if text_id in reader:
                return reader.get(text_id)
        raise ProviderError(f"missing exchange entry: {text_id!r}")

    def matrix_for_id(self, text_id: str, text: str = "") -> TokenEmbeddingMatrix:
        return self._lookup(text_id)

    def embed_text(self, text: str, strategy: str) -> np.ndarray:
        return embed_matrix(self._lookup(query_exchange_id(text)), strategy)

    def embed_id(self, text_id: str, strategy: str) -> np.ndarray:
        return embed_matrix(self._lookup(text_id), strategy)

    def close(self) -> None:
        for reader in self._readers.values():
            reader.close()


def make_embedder(spec: EmbedderSpec, base_dir: str | Path = "."):
    """Instantiate the embedder a spec describes."""
    if spec.provider == "synthetic":
        return SyntheticEmbedder(seed=spec.seed, dim=spec.dim)
    if spec.provider == "exchange_file":
        base = Path(base_dir)

        def _resolve(p: str) -> str:
            if not p:
                return ""
            path = Path(p)
            return str(path if path.is_absolute() else base / path)

        return ExchangeEmbedder(
            headline_exchange=_resolve(spec.headline_exchange),
            content_exchange=_resolve(spec.content_exchange),
            query_exchange=_resolve(spec.query_exchange),
            dim=spec.dim,
        )
    raise ValueError(f"unknown provider: {spec.provider!r}")


def embed_text(text: str, spec: EmbedderSpec, strategy: str, source_kind: str = "query") -> PooledEmbedding:
    """Embed one text under the given provider spec and pooling strategy."""
    embedder = make_embedder(spec)
    vector = embedder.embed_text(text, strategy)
    return PooledEmbedding(vector=vector, strategy=strategy, source_kind=source_kind)
