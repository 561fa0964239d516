"""Retrieval evaluation: Precision@k, overlap scores, Jaccard@k, and the
reducer-fidelity and dimension-sweep harnesses.

Unjudged documents count as irrelevant. Mean precision over a query set
with a shared depth k is computed as total true positives over N*k, the
equal-k form of averaging per-query precisions.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Mapping, Sequence

import numpy as np

from .errors import DualrecError
from .index import VectorCollection
from .reduce import pca_fit, pca_transform

logger = logging.getLogger(__name__)

Reducer = Callable[[np.ndarray], np.ndarray]


def _coerce_id(raw: str):
    raw = raw.strip()
    try:
        return int(raw)
    except ValueError:
        return raw


@dataclass
class Qrels:
    """Binary relevance judgments keyed by (query_id, article_id)."""

    judgments: dict[tuple, int] = field(default_factory=dict)

    def __post_init__(self):
        for key, value in self.judgments.items():
            if value not in (0, 1):
                raise ValueError(f"relevance must be 0 or 1, got {value} for {key}")

    @classmethod
    def from_tsv(cls, path: str | Path) -> "Qrels":
        """Read `query_id <TAB> article_id <TAB> relevance` lines."""
        judgments = {}
        with open(path, encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, start=1):
                line = line.strip()
                if not line or line.startswith("#"):
                    continue
                parts = line.split("\t")
                if len(parts) != 3:
                    raise DualrecError(f"{path}:{lineno}: expected 3 tab-separated fields")
                judgments[(_coerce_id(parts[0]), _coerce_id(parts[1]))] = int(parts[2])
        return cls(judgments)

    def query_ids(self) -> set:
        return {qid for qid, _ in self.judgments}

    def is_relevant(self, query_id, article_id) -> bool:
        return self.judgments.get((query_id, article_id), 0) == 1


@dataclass
class RetrievalRun:
    """Ranked article ids per query, as produced by one system."""

    rankings: dict[object, list]
    k: int
    label: str = ""

    def __post_init__(self):
        for qid, ids in self.rankings.items():
            if len(set(ids)) != len(ids):
                raise ValueError(f"duplicate article ids in ranking for query {qid!r}")

    @classmethod
    def from_jsonl(cls, path: str | Path, k: int = 0, label: str = "") -> "RetrievalRun":
        rankings = {}
        with open(path, encoding="utf-8") as fh:
            for line in fh:
                if not line.strip():
                    continue
                row = json.loads(line)
                rankings[_coerce_id(str(row["query_id"]))] = [
                    _coerce_id(str(a)) for a in row["ranked_ids"]
                ]
        if not k:
            k = max((len(v) for v in rankings.values()), default=0)
        return cls(rankings, k=k, label=label)

    def to_jsonl(self, path: str | Path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            for qid, ids in self.rankings.items():
                fh.write(json.dumps({"query_id": qid, "ranked_ids": ids}, ensure_ascii=False) + "\n")


@dataclass(frozen=True)
class QueryPrecision:
    query_id: object
    tp: int
    fp: int
    precision: float


@dataclass
class MetricReport:
    """Per-query and mean precision at a fixed depth."""

    k: int
    per_query: list[QueryPrecision]
    mean_precision: float
    n_queries: int
    tp_total: int
    fp_total: int
    padded_queries: list = field(default_factory=list)
    unjudged_queries: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "k": self.k,
            "n_queries": self.n_queries,
            "mean_precision": self.mean_precision,
            "tp_total": self.tp_total,
            "fp_total": self.fp_total,
            "padded_queries": self.padded_queries,
            "unjudged_queries": self.unjudged_queries,
            "per_query": [qp.__dict__ for qp in self.per_query],
        }


def precision_at_k(run: RetrievalRun, qrels: Qrels, k: int) -> MetricReport:
    """Precision@k per query plus the mean over the query set.

    Rankings shorter than k are padded as irrelevant (the denominator
    stays k) and reported. Queries absent from the qrels entirely are
    scored zero with a warning.
    """
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    judged_queries = qrels.query_ids()
    per_query = []
    padded = []
    unjudged = []
    tp_total = 0
    for qid, ids in run.rankings.items():
        if qid not in judged_queries:
            unjudged.append(qid)
            logger.warning("query %r has no qrels entries; treating all hits as irrelevant", qid)
        if len(ids) < k:
            padded.append(qid)
        tp = sum(1 for aid in ids[:k] if qrels.is_relevant(qid, aid))
        per_query.append(QueryPrecision(query_id=qid, tp=tp, fp=k - tp, precision=tp / k))
        tp_total += tp
    n = len(per_query)
    mean = tp_total / (n * k) if n else 0.0
    return MetricReport(
        k=k,
        per_query=per_query,
        mean_precision=mean,
        n_queries=n,
        tp_total=tp_total,
        fp_total=n * k - tp_total,
        padded_queries=padded,
        unjudged_queries=unjudged,
    )


def overlap_at_k(run_a: RetrievalRun, run_b: RetrievalRun, k: int) -> dict:
    """Per-query size of the intersection of the two top-k sets."""
    if set(run_a.rankings) != set(run_b.rankings):
        raise DualrecError("runs cover different query sets")
    out = {}
    for qid in run_a.rankings:
        a = run_a.rankings[qid][:k]
        b = run_b.rankings[qid][:k]
        if len(a) < k or len(b) < k:
            raise DualrecError(f"query {qid!r} has fewer than k={k} results")
        out[qid] = len(set(a) & set(b))
    return out


def jaccard_at_k(overlap: int, k: int) -> float:
    """Set similarity of two depth-k lists from their overlap count."""
    if not 0 <= overlap <= k:
        raise ValueError(f"overlap must be in [0, {k}], got {overlap}")
    return overlap / (2 * k - overlap)


@dataclass
class ComparisonReport:
    """Fidelity of one reduced space against full-dimensional ground truth."""

    label: str
    k: int
    per_query: dict  # qid -> {"overlap": int, "overlap_pct": float, "jaccard": float}
    mean_overlap: float
    mean_overlap_pct: float
    mean_jaccard: float

    def to_rows(self) -> list[list]:
        """Per-query rows plus a trailing mean row."""
        rows = [
            [qid, stats["overlap_pct"], stats["overlap"], stats["jaccard"]]
            for qid, stats in self.per_query.items()
        ]
        rows.append(["mean", self.mean_overlap_pct, self.mean_overlap, self.mean_jaccard])
        return rows

    def to_csv(self, path: str | Path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("query,overlap_pct,overlap_count,jaccard\n")
            for row in self.to_rows():
                fh.write(f"{row[0]},{row[1]:.1f},{row[2]},{row[3]:.3f}\n")

    def to_dict(self) -> dict:
        return {
            "label": self.label,
            "k": self.k,
            "mean_overlap": self.mean_overlap,
            "mean_overlap_pct": self.mean_overlap_pct,
            "mean_jaccard": self.mean_jaccard,
            "per_query": self.per_query,
        }


def _comparison_report(label: str, k: int, overlaps: dict) -> ComparisonReport:
    per_query = {
        qid: {
            "overlap": ov,
            "overlap_pct": ov * 100.0 / k,
            "jaccard": jaccard_at_k(ov, k),
        }
        for qid, ov in overlaps.items()
    }
    n = len(per_query)
    mean_overlap = sum(ov for ov in overlaps.values()) / n if n else 0.0
    mean_jaccard = sum(s["jaccard"] for s in per_query.values()) / n if n else 0.0
    return ComparisonReport(
        label=label,
        k=k,
        per_query=per_query,
        mean_overlap=mean_overlap,
        mean_overlap_pct=mean_overlap * 100.0 / k,
        mean_jaccard=mean_jaccard,
    )


def compare_reducers(
    ground_truth: VectorCollection,
    candidates: Mapping[str, tuple[Reducer, VectorCollection]],
    queries: Mapping[object, np.ndarray],
    k: int,
) -> dict[str, ComparisonReport]:
    """Score reduced collections by top-k overlap with full-dim ground truth.

    Queries are full-dimensional vectors; each candidate pairs a reducer
    (applied to the query) with the collection built from vectors reduced
    the same way. All collections must index the same article ids.
    """
    if ground_truth.index_kind != "exact":
        raise DualrecError("ground-truth collection must use the exact index")
    gt_ids = set(ground_truth.ids.tolist())
    for label, (_, col) in candidates.items():
        if set(col.ids.tolist()) != gt_ids:
            raise DualrecError(f"candidate {label!r} indexes a different id set than ground truth")

    truth_lists = {
        qid: [hit.article_id for hit in ground_truth.search_topk(vec, k)] for qid, vec in queries.items()
    }
    reports = {}
    for label, (reducer, col) in candidates.items():
        overlaps = {}
        for qid, vec in queries.items():
            hits = col.search_topk(reducer(np.asarray(vec)), k)
            overlaps[qid] = len(set(truth_lists[qid]) & {h.article_id for h in hits})
        reports[label] = _comparison_report(label, k, overlaps)
    return reports


def slice_queries(
    texts: Sequence[str],
    lengths: Sequence[int],
    n_per_length: int,
    seed: int = 0,
) -> dict[int, list[str]]:
    """Sample fixed-length character slices from source texts.

    Texts shorter than a requested length are skipped for that length;
    slices start at seeded random offsets.
    """
    rng = np.random.Generator(np.random.PCG64(seed))
    out: dict[int, list[str]] = {}
    for length in lengths:
        eligible = [t for t in texts if len(t) >= length]
        if not eligible:
            raise DualrecError(f"no source text long enough for {length}-char queries")
        picks = rng.integers(0, len(eligible), size=n_per_length)
        slices = []
        for idx in picks:
            text = eligible[int(idx)]
            start = int(rng.integers(0, len(text) - length + 1))
            slices.append(text[start : start + length])
        out[length] = slices
    return out


def sweep_dimensions(
    base_vectors: np.ndarray,
    ids: Sequence[int],
    dims: Sequence[int],
    query_sets: Mapping[object, np.ndarray],
    k: int,
) -> dict[tuple[int, object], float]:
    """Grid of mean overlap percentage: PCA dimension x query-set label.

    Ground truth is exact search over the unreduced vectors; each cell
    averages top-k overlap over the labelled query set's vectors.
    """
    base_vectors = np.asarray(base_vectors)
    full_dim = base_vectors.shape[1]
    if any(d > full_dim for d in dims):
        raise ValueError(f"requested dimension exceeds {full_dim}")
    metadata = {int(i): {} for i in ids}
    truth = VectorCollection.build("ground-truth", base_vectors, ids, metadata, index_kind="exact")
    grid: dict[tuple[int, object], float] = {}
    for dim in dims:
        model = pca_fit(base_vectors, dim)
        reduced = VectorCollection.build(
            f"pca-{dim}", pca_transform(model, base_vectors), ids, metadata, index_kind="exact"
        )
        for label, queries in query_sets.items():
            queries = np.atleast_2d(np.asarray(queries))
            overlaps = []
            for vec in queries:
                gt = {h.article_id for h in truth.search_topk(vec, k)}
                got = {h.article_id for h in reduced.search_topk(pca_transform(model, vec), k)}
                overlaps.append(len(gt & got))
            grid[(dim, label)] = 100.0 * float(np.mean(overlaps)) / k
    return grid
