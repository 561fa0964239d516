"""PCA dimensionality reduction: fit, transform, persist.

The reducer maps pooled embeddings to a lower-dimensional space via the
top principal axes of the training matrix, computed by singular value
decomposition of the centered data for numerical stability.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .binio import BlockReader, BlockWriter
from .errors import DimensionMismatchError, NonFiniteValueError

MODEL_MAGIC = b"ULPC"
MODEL_VERSION = 1

_COMPLETION_SEED = 0x5EED


@dataclass(frozen=True)
class PcaModel:
    """A fitted reducer: training centroid plus orthonormal principal axes.

    Component rows are ordered by descending eigenvalue and sign-fixed so
    the largest-magnitude entry of each row is non-negative.
    """

    mean: np.ndarray
    components: np.ndarray
    eigenvalues: np.ndarray
    d_prime: int
    input_dim: int
    trained_on: int
    total_variance: float


def _apply_sign_convention(components: np.ndarray) -> np.ndarray:
    out = components.copy()
    for row in out:
        pivot = np.argmax(np.abs(row))
        if row[pivot] < 0:
            row *= -1.0
    return out


def _orthonormal_completion(existing: np.ndarray, needed: int, dim: int) -> np.ndarray:
    """Extend an orthonormal row set with `needed` further orthonormal rows.

    Uses a fixed-seed generator so fits stay bit-reproducible.
    """
    rng = np.random.Generator(np.random.PCG64(_COMPLETION_SEED))
    rows = []
    basis = existing
    while len(rows) < needed:
        cand = rng.standard_normal(dim)
        cand -= basis.T @ (basis @ cand)
        if rows:
            stacked = np.stack(rows)
            cand -= stacked.T @ (stacked @ cand)
        norm = np.linalg.norm(cand)
        if norm > 1e-8:
            rows.append(cand / norm)
    return np.stack(rows)


def pca_fit(data: np.ndarray, d_prime: int) -> PcaModel:
    """Fit a PCA model with d_prime components on an N x D matrix.

    When d_prime exceeds the data rank (including d_prime > N - 1), the
    component set is padded with a deterministic orthonormal completion
    carrying eigenvalue zero.
    """
    data = np.asarray(data, dtype=np.float64)
    if data.ndim != 2:
        raise ValueError(f"training data must be 2-D, got shape {data.shape}")
    n, dim = data.shape
    if d_prime < 1:
        raise ValueError(f"d_prime must be >= 1, got {d_prime}")
    if d_prime > dim:
        raise DimensionMismatchError(f"d_prime {d_prime} exceeds input dimension {dim}")
    if n < 2:
        raise ValueError(f"need at least 2 training vectors, got {n}")
    if not np.isfinite(data).all():
        raise NonFiniteValueError("training data contains non-finite values")

    mean = data.mean(axis=0)
    centered = data - mean
    _, singular, vt = np.linalg.svd(centered, full_matrices=False)
    variances = (singular**2) / (n - 1)
    total_variance = float(centered.var(axis=0, ddof=1).sum())

    keep = min(d_prime, vt.shape[0])
    components = vt[:keep]
    eigenvalues = variances[:keep]
    if keep < d_prime:
        extra = _orthonormal_completion(components, d_prime - keep, dim)
        components = np.vstack([components, extra])
        eigenvalues = np.concatenate([eigenvalues, np.zeros(d_prime - keep)])

    components = _apply_sign_convention(components)
    return PcaModel(
        mean=mean,
        components=components,
        eigenvalues=np.maximum(eigenvalues, 0.0),
        d_prime=d_prime,
        input_dim=dim,
        trained_on=n,
        total_variance=total_variance,
    )


def pca_transform(model: PcaModel, vectors: np.ndarray) -> np.ndarray:
    """Project one vector or a stack of vectors into the reduced space."""
    arr = np.asarray(vectors, dtype=np.float64)
    if arr.shape[-1] != model.input_dim:
        raise DimensionMismatchError(f"vector width {arr.shape[-1]}, model expects {model.input_dim}")
    return (arr - model.mean) @ model.components.T


def explained_variance_ratio(model: PcaModel) -> np.ndarray:
    """Per-component share of total training variance."""
    if model.total_variance <= 0.0:
        raise ValueError("total training variance is zero")
    return model.eigenvalues / model.total_variance


def save_model(model: PcaModel, path: str | Path) -> None:
    with open(path, "wb") as fh:
        writer = BlockWriter(fh)
        writer.magic(MODEL_MAGIC)
        writer.u32(MODEL_VERSION)
        writer.u32(model.d_prime)
        writer.u32(model.input_dim)
        writer.u64(model.trained_on)
        writer.array(model.mean, "float64")
        writer.array(model.eigenvalues, "float64")
        writer.f64(model.total_variance)
        writer.array(model.components, "float64")
        writer.finish()


def load_model(path: str | Path) -> PcaModel:
    with open(path, "rb") as fh:
        reader = BlockReader(fh)
        reader.expect_magic(MODEL_MAGIC)
        reader.expect_version(MODEL_VERSION)
        d_prime = reader.u32()
        input_dim = reader.u32()
        trained_on = reader.u64()
        mean = reader.array(input_dim, "float64")
        eigenvalues = reader.array(d_prime, "float64")
        total_variance = reader.f64()
        components = reader.array(d_prime * input_dim, "float64").reshape(d_prime, input_dim)
        reader.verify_checksum()
    return PcaModel(
        mean=mean,
        components=components,
        eigenvalues=eigenvalues,
        d_prime=d_prime,
        input_dim=input_dim,
        trained_on=trained_on,
        total_variance=total_variance,
    )
