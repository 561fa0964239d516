"""Export token-embedding exchange files from a pre-trained transformer.

One entry per input id: the final-layer hidden states of the text,
classification token as row 0, truncated to the model's maximum sequence
length. The binary output format is the retrieval engine's exchange
format; this module carries its own writer so the two packages meet only
at the file.
"""

from __future__ import annotations

import hashlib
import json
import struct
import zlib
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Protocol, Sequence

import numpy as np

EXCHANGE_MAGIC = b"ULTE"
EXCHANGE_VERSION = 1

DEFAULT_MODEL = "urduhack/roberta-urdu-small"
DEFAULT_MAX_LEN = 512
DEFAULT_DIM = 768


class ExporterError(Exception):
    pass


class ModelLoadError(ExporterError):
    pass


class InputFormatError(ExporterError):
    pass


@dataclass
class ExportJob:
    """One export run: input texts to one exchange file."""

    input_path: str
    output_path: str
    model_name: str = DEFAULT_MODEL
    max_len: int = DEFAULT_MAX_LEN
    batch_size: int = 16
    dim: int = DEFAULT_DIM
    input_format: str = "tsv"  # tsv | articles
    article_field: str = "content"  # with input_format=articles
    hash_ids: bool = False  # replace ids with the query-exchange convention
    skip_bad_lines: bool = False
    issues: list[str] = field(default_factory=list)


class EmbeddingBackend(Protocol):
    dim: int

    def encode(self, texts: Sequence[str]) -> list[np.ndarray]:
        """Token-embedding matrix per text: rows x dim float32, row 0 the
        classification token, row count capped at the sequence limit."""
        ...


class TransformersBackend:
    """Final-layer hidden states from a HuggingFace encoder, CPU eval mode."""

    def __init__(self, model_name: str = DEFAULT_MODEL, max_len: int = DEFAULT_MAX_LEN):
        try:
            import torch
            from transformers import AutoModel, AutoTokenizer
        except ImportError as exc:
            raise ModelLoadError(f"transformers/torch unavailable: {exc}") from exc
        try:
            self.tokenizer = AutoTokenizer.from_pretrained(model_name)
            self.model = AutoModel.from_pretrained(model_name)
        except Exception as exc:
            raise ModelLoadError(f"cannot load model {model_name!r}: {exc}") from exc
        self.model.eval()
        self._torch = torch
        self.max_len = max_len
        self.dim = int(self.model.config.hidden_size)

    def encode(self, texts: Sequence[str]) -> list[np.ndarray]:
        torch = self._torch
        encoded = self.tokenizer(
            list(texts),
            padding=True,
            truncation=True,
            max_length=self.max_len,
            return_tensors="pt",
        )
        with torch.no_grad():
            output = self.model(**encoded)
        hidden = output.last_hidden_state.to(torch.float32).numpy()
        mask = encoded["attention_mask"].numpy().astype(bool)
        return [hidden[i][mask[i]] for i in range(len(texts))]


class StubBackend:
    """Deterministic hash-derived embeddings; a model-free dry-run backend.

    Mirrors the transformer's shape contract: whitespace tokens, a leading
    classification row, truncation at the sequence limit.
    """

    def __init__(self, max_len: int = DEFAULT_MAX_LEN, dim: int = DEFAULT_DIM):
        self.max_len = max_len
        self.dim = dim

    def _row(self, key: str) -> np.ndarray:
        digest = hashlib.blake2b(key.encode("utf-8"), digest_size=8).digest()
        rng = np.random.Generator(np.random.PCG64(int.from_bytes(digest, "little")))
        row = rng.standard_normal(self.dim)
        return (row / np.linalg.norm(row)).astype(np.float32)

    def encode(self, texts: Sequence[str]) -> list[np.ndarray]:
        out = []
        for text in texts:
            tokens = text.split()[: self.max_len - 1]
            rows = [self._row("cls\x1f" + text)]
            rows.extend(self._row("tok\x1f" + tok) for tok in tokens)
            out.append(np.stack(rows))
        return out


def query_hash_id(text: str) -> str:
    """Id convention under which the engine looks up ad-hoc query texts."""
    return "q:" + hashlib.sha256(text.encode("utf-8")).hexdigest()


def read_input_lines(job: ExportJob) -> list[tuple[str, str]]:
    """Parse the input file into (id, text) pairs.

    tsv: `id<TAB>text` per line. articles: the engine's articles JSON-lines,
    ids derived as h:<id> or c:<id> from the selected field. Undecodable or
    malformed lines are reported per line and either skipped or fatal.
    """
    raw = Path(job.input_path).read_bytes()
    pairs: list[tuple[str, str]] = []
    for lineno, line_bytes in enumerate(raw.split(b"\n"), start=1):
        if not line_bytes.strip():
            continue
        try:
            line = line_bytes.decode("utf-8")
        except UnicodeDecodeError as exc:
            message = f"line {lineno}: {exc}"
            if not job.skip_bad_lines:
                raise InputFormatError(message) from exc
            job.issues.append(message)
            continue
        try:
            if job.input_format == "tsv":
                text_id, text = line.split("\t", 1)
            elif job.input_format == "articles":
                row = json.loads(line)
                prefix = "h" if job.article_field == "headline" else "c"
                text_id = f"{prefix}:{row['id']}"
                text = row[job.article_field]
            else:
                raise ExporterError(f"unknown input format: {job.input_format!r}")
            if job.hash_ids:
                text_id = query_hash_id(text)
            pairs.append((text_id, text))
        except (ValueError, KeyError) as exc:
            message = f"line {lineno}: {exc}"
            if not job.skip_bad_lines:
                raise InputFormatError(message) from exc
            job.issues.append(message)
    seen = set()
    for text_id, _ in pairs:
        if text_id in seen:
            raise InputFormatError(f"duplicate text id {text_id!r}")
        seen.add(text_id)
    return pairs


def write_exchange_file(path: str | Path, entries: Iterable[tuple[str, np.ndarray]], dim: int) -> int:
    """Write entries (id, rows x dim float32, row 0 = classification) to the
    exchange format; returns the entry count."""
    buffered = list(entries)
    crc = 0

    def chunk(data: bytes) -> bytes:
        nonlocal crc
        crc = zlib.crc32(data, crc)
        return data

    with open(path, "wb") as fh:
        fh.write(chunk(EXCHANGE_MAGIC))
        fh.write(chunk(struct.pack("<I", EXCHANGE_VERSION)))
        fh.write(chunk(struct.pack("<I", dim)))
        fh.write(chunk(struct.pack("<Q", len(buffered))))
        for text_id, matrix in buffered:
            matrix = np.ascontiguousarray(matrix, dtype="<f4")
            if matrix.ndim != 2 or matrix.shape[1] != dim:
                raise ExporterError(f"entry {text_id!r} has shape {matrix.shape}, expected (*, {dim})")
            if not np.isfinite(matrix).all():
                raise ExporterError(f"entry {text_id!r} contains non-finite values")
            id_bytes = text_id.encode("utf-8")
            fh.write(chunk(struct.pack("<I", len(id_bytes))))
            fh.write(chunk(id_bytes))
            fh.write(chunk(struct.pack("<I", matrix.shape[0])))
            fh.write(chunk(struct.pack("<B", 1)))  # classification row present
            fh.write(chunk(matrix.tobytes()))
        fh.write(struct.pack("<I", crc))
    return len(buffered)


def _encode_with_backoff(backend: EmbeddingBackend, texts: list[str], batch_size: int) -> list[np.ndarray]:
    """Encode in batches, halving the batch size on out-of-memory errors."""
    matrices: list[np.ndarray] = []
    i = 0
    batch = max(1, batch_size)
    while i < len(texts):
        chunk = texts[i : i + batch]
        try:
            matrices.extend(backend.encode(chunk))
            i += len(chunk)
        except MemoryError:
            if batch == 1:
                raise
            batch = max(1, batch // 2)
        except RuntimeError as exc:
            if "out of memory" in str(exc).lower() and batch > 1:
                batch = max(1, batch // 2)
            else:
                raise
    return matrices


def export(job: ExportJob, backend: EmbeddingBackend | None = None) -> int:
    """Run one export job; returns the number of entries written."""
    if backend is None:
        backend = TransformersBackend(job.model_name, job.max_len)
    if getattr(backend, "dim", job.dim) != job.dim:
        raise ExporterError(f"backend width {backend.dim} does not match job dim {job.dim}")
    pairs = read_input_lines(job)
    matrices = _encode_with_backoff(backend, [text for _, text in pairs], job.batch_size)
    entries = []
    for (text_id, _), matrix in zip(pairs, matrices):
        if matrix.shape[0] > job.max_len:
            raise ExporterError(f"entry {text_id!r} has {matrix.shape[0]} rows, above max_len {job.max_len}")
        entries.append((text_id, matrix))
    return write_exchange_file(job.output_path, entries, job.dim)
