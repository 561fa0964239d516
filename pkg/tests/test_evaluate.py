"""Metric formulas against hand counts, harness sanity, and file formats."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dualrec.errors import DualrecError
from dualrec.evaluate import (
    Qrels,
    RetrievalRun,
    compare_reducers,
    jaccard_at_k,
    overlap_at_k,
    precision_at_k,
    slice_queries,
    sweep_dimensions,
)
from dualrec.index import VectorCollection
from dualrec.reduce import pca_fit, pca_transform


def _qrels_from_sets(relevant: dict) -> Qrels:
    judgments = {}
    for qid, ids in relevant.items():
        for aid in ids:
            judgments[(qid, aid)] = 1
    return Qrels(judgments)


def _meta(ids):
    return {int(i): {} for i in ids}


# -- precision_at_k ------------------------------------------------------------


def test_precision_single_query_9_of_10():
    run = RetrievalRun({"q1": list(range(10))}, k=10)
    qrels = _qrels_from_sets({"q1": set(range(9))})
    report = precision_at_k(run, qrels, 10)
    assert report.per_query[0].precision == 0.9
    assert report.per_query[0].tp == 9
    assert report.per_query[0].fp == 1


def test_precision_all_relevant_is_one():
    run = RetrievalRun({"q": list(range(5))}, k=5)
    report = precision_at_k(run, _qrels_from_sets({"q": set(range(5))}), 5)
    assert report.mean_precision == 1.0


def test_precision_long_query_table_reproduction():
    # Per-query true-positive counts 9,10,4,6,8 at k=10.
    tps = [9, 10, 4, 6, 8]
    rankings = {}
    relevant = {}
    for i, tp in enumerate(tps):
        qid = f"q{i + 1}"
        rankings[qid] = [i * 100 + j for j in range(10)]
        relevant[qid] = {i * 100 + j for j in range(tp)}
    report = precision_at_k(RetrievalRun(rankings, k=10), _qrels_from_sets(relevant), 10)
    assert [qp.precision for qp in report.per_query] == [0.9, 1.0, 0.4, 0.6, 0.8]
    assert report.mean_precision == 0.74


def test_precision_matches_bruteforce_recount():
    rng = np.random.Generator(np.random.PCG64(0))
    for _ in range(20):
        n_q = int(rng.integers(1, 8))
        k = int(rng.integers(1, 12))
        rankings = {}
        judgments = {}
        for qi in range(n_q):
            ids = rng.permutation(50)[: k + int(rng.integers(0, 5))].tolist()
            rankings[qi] = ids
            for aid in range(50):
                judgments[(qi, aid)] = int(rng.random() < 0.3)
        run = RetrievalRun(rankings, k=k)
        qrels = Qrels(judgments)
        report = precision_at_k(run, qrels, k)
        # brute-force recount
        precisions = []
        for qi in range(n_q):
            hits = sum(judgments.get((qi, aid), 0) for aid in rankings[qi][:k])
            precisions.append(hits / k)
            got = next(qp for qp in report.per_query if qp.query_id == qi)
            assert got.precision == hits / k
        assert abs(report.mean_precision - sum(precisions) / n_q) < 1e-12


def test_precision_short_list_padded_as_irrelevant():
    run = RetrievalRun({"q": [1, 2]}, k=5)
    report = precision_at_k(run, _qrels_from_sets({"q": {1, 2}}), 5)
    assert report.per_query[0].precision == 2 / 5
    assert report.padded_queries == ["q"]


def test_precision_unjudged_query_warns_and_scores_zero():
    run = RetrievalRun({"known": [1], "mystery": [2]}, k=1)
    report = precision_at_k(run, _qrels_from_sets({"known": {1}}), 1)
    assert report.unjudged_queries == ["mystery"]
    by_qid = {qp.query_id: qp.precision for qp in report.per_query}
    assert by_qid["mystery"] == 0.0
    assert by_qid["known"] == 1.0


def test_precision_mean_permutation_invariant():
    rng = np.random.Generator(np.random.PCG64(1))
    rankings = {f"q{i}": rng.permutation(30)[:5].tolist() for i in range(6)}
    qrels = Qrels({(f"q{i}", a): int(rng.random() < 0.4) for i in range(6) for a in range(30)})
    fwd = precision_at_k(RetrievalRun(rankings, k=5), qrels, 5)
    rev = precision_at_k(RetrievalRun(dict(reversed(list(rankings.items()))), k=5), qrels, 5)
    assert fwd.mean_precision == rev.mean_precision


def test_run_rejects_duplicate_ids():
    with pytest.raises(ValueError):
        RetrievalRun({"q": [1, 1, 2]}, k=3)


# -- overlap and jaccard ----------------------------------------------------------


def test_overlap_identical_lists():
    run = RetrievalRun({"q": list(range(50))}, k=50)
    assert overlap_at_k(run, run, 50) == {"q": 50}


def test_overlap_disjoint_lists():
    a = RetrievalRun({"q": list(range(10))}, k=10)
    b = RetrievalRun({"q": list(range(100, 110))}, k=10)
    assert overlap_at_k(a, b, 10) == {"q": 0}


def test_overlap_43_of_50_is_86_percent():
    a = RetrievalRun({"q": list(range(50))}, k=50)
    b = RetrievalRun({"q": list(range(43)) + list(range(900, 907))}, k=50)
    overlaps = overlap_at_k(a, b, 50)
    assert overlaps == {"q": 43}
    assert overlaps["q"] * 100.0 / 50 == 86.0


def test_overlap_mismatched_query_sets_error():
    a = RetrievalRun({"q1": list(range(5))}, k=5)
    b = RetrievalRun({"q2": list(range(5))}, k=5)
    with pytest.raises(DualrecError):
        overlap_at_k(a, b, 5)


def test_jaccard_reference_values():
    assert abs(jaccard_at_k(43, 50) - 0.754) < 0.0005
    assert jaccard_at_k(50, 50) == 1.0
    assert jaccard_at_k(25, 50) == 25 / 75


def test_jaccard_overlap_bounds():
    with pytest.raises(ValueError):
        jaccard_at_k(51, 50)
    with pytest.raises(ValueError):
        jaccard_at_k(-1, 50)


def test_jaccard_strictly_increasing_in_overlap():
    values = [jaccard_at_k(o, 50) for o in range(51)]
    assert all(b > a for a, b in zip(values, values[1:]))


@given(st.integers(min_value=1, max_value=40), st.data())
@settings(max_examples=100, deadline=None)
def test_jaccard_formula_matches_set_form(k, data):
    # Two equal-size sets: overlap/(2k - overlap) must equal |A&B|/|A|B|.
    universe = list(range(200))
    a = set(data.draw(st.permutations(universe))[:k])
    b = set(data.draw(st.permutations(universe))[:k])
    overlap = len(a & b)
    assert jaccard_at_k(overlap, k) == pytest.approx(len(a & b) / len(a | b), abs=1e-12)


# -- compare_reducers ----------------------------------------------------------------


@pytest.fixture(scope="module")
def reducer_fixture():
    rng = np.random.Generator(np.random.PCG64(2))
    base = rng.standard_normal((400, 32))
    ids = np.arange(400)
    truth = VectorCollection.build("truth", base, ids, _meta(ids), "exact")
    queries = {f"q{i}": rng.standard_normal(32) for i in range(13)}
    return base, ids, truth, queries


def test_compare_identity_reducer_perfect(reducer_fixture):
    base, ids, truth, queries = reducer_fixture
    identity = VectorCollection.build("copy", base, ids, _meta(ids), "exact")
    reports = compare_reducers(truth, {"identity": (lambda v: v, identity)}, queries, k=20)
    report = reports["identity"]
    assert report.mean_jaccard == 1.0
    assert all(s["overlap"] == 20 for s in report.per_query.values())


def test_compare_report_shape_matches_query_count(reducer_fixture):
    base, ids, truth, queries = reducer_fixture
    model = pca_fit(base, 8)
    reduced = VectorCollection.build("pca8", pca_transform(model, base), ids, _meta(ids), "exact")
    reports = compare_reducers(truth, {"pca8": (lambda v: pca_transform(model, v), reduced)}, queries, k=20)
    rows = reports["pca8"].to_rows()
    assert len(rows) == 13 + 1
    assert rows[-1][0] == "mean"


def test_compare_pca_beats_random_projection(reducer_fixture):
    base, ids, truth, queries = reducer_fixture
    d = 8
    model = pca_fit(base, d)
    pca_col = VectorCollection.build("pca", pca_transform(model, base), ids, _meta(ids), "exact")
    rng = np.random.Generator(np.random.PCG64(3))
    q_mat, _ = np.linalg.qr(rng.standard_normal((32, d)))
    proj = q_mat.T

    def random_reduce(v):
        return (np.asarray(v) - model.mean) @ proj.T

    rand_col = VectorCollection.build("rand", random_reduce(base), ids, _meta(ids), "exact")
    reports = compare_reducers(
        truth,
        {
            "pca": (lambda v: pca_transform(model, v), pca_col),
            "random": (random_reduce, rand_col),
        },
        queries,
        k=20,
    )
    assert reports["pca"].mean_overlap > reports["random"].mean_overlap
    assert reports["pca"].mean_jaccard > reports["random"].mean_jaccard


def test_compare_id_mismatch_rejected(reducer_fixture):
    base, ids, truth, queries = reducer_fixture
    other = VectorCollection.build("other", base[:100], ids[:100], _meta(ids[:100]), "exact")
    with pytest.raises(DualrecError):
        compare_reducers(truth, {"bad": (lambda v: v, other)}, queries, k=5)


def test_comparison_report_csv_layout(tmp_path, reducer_fixture):
    base, ids, truth, queries = reducer_fixture
    identity = VectorCollection.build("copy", base, ids, _meta(ids), "exact")
    report = compare_reducers(truth, {"identity": (lambda v: v, identity)}, queries, k=10)["identity"]
    path = tmp_path / "table.csv"
    report.to_csv(path)
    lines = path.read_text().strip().splitlines()
    assert lines[0] == "query,overlap_pct,overlap_count,jaccard"
    assert len(lines) == 1 + 13 + 1


# -- sweep_dimensions -----------------------------------------------------------------


def test_sweep_full_rank_reduction_is_lossless():
    # Zero-mean fixture of exact rank 6: reducing to 6 dims preserves all
    # cosine rankings, so self-queries overlap 100%.
    rng = np.random.Generator(np.random.PCG64(4))
    basis, _ = np.linalg.qr(rng.standard_normal((24, 6)))
    half = rng.standard_normal((40, 6)) @ basis.T
    data = np.vstack([half, -half])
    ids = np.arange(80)
    queries = {"self": data[:25]}
    grid = sweep_dimensions(data, ids, [6], queries, k=10)
    assert grid[(6, "self")] == 100.0


def test_sweep_grid_shape():
    rng = np.random.Generator(np.random.PCG64(5))
    data = rng.standard_normal((60, 16))
    ids = np.arange(60)
    query_sets = {length: rng.standard_normal((4, 16)) for length in (150, 200, 250, 300, 350)}
    grid = sweep_dimensions(data, ids, [4, 8, 12], query_sets, k=5)
    assert len(grid) == 15
    assert set(grid) == {(d, l) for d in (4, 8, 12) for l in (150, 200, 250, 300, 350)}
    assert all(0.0 <= v <= 100.0 for v in grid.values())


def test_sweep_rejects_oversized_dim():
    data = np.random.default_rng(0).standard_normal((30, 8))
    with pytest.raises(ValueError):
        sweep_dimensions(data, np.arange(30), [9], {"q": data[:2]}, k=3)


def test_slice_queries_lengths_and_determinism():
    texts = ["ا" * 400, "ب" * 250, "پ" * 180]
    a = slice_queries(texts, [150, 200], 5, seed=9)
    b = slice_queries(texts, [150, 200], 5, seed=9)
    assert a == b
    assert all(len(q) == 150 for q in a[150])
    assert all(len(q) == 200 for q in a[200])
    with pytest.raises(DualrecError):
        slice_queries(texts, [500], 2, seed=9)


# -- file formats ---------------------------------------------------------------------


def test_qrels_tsv_roundtrip(tmp_path):
    path = tmp_path / "qrels.tsv"
    path.write_text("# comment\nq1\t10\t1\nq1\t11\t0\nq2\t10\t1\n", encoding="utf-8")
    qrels = Qrels.from_tsv(path)
    assert qrels.is_relevant("q1", 10)
    assert not qrels.is_relevant("q1", 11)
    assert not qrels.is_relevant("q1", 999)
    assert qrels.query_ids() == {"q1", "q2"}


def test_qrels_bad_line_rejected(tmp_path):
    path = tmp_path / "qrels.tsv"
    path.write_text("q1 10 1\n", encoding="utf-8")
    with pytest.raises(DualrecError):
        Qrels.from_tsv(path)


def test_qrels_nonbinary_rejected():
    with pytest.raises(ValueError):
        Qrels({("q", 1): 2})


def test_run_jsonl_roundtrip(tmp_path):
    run = RetrievalRun({"q1": [3, 1, 2], "q2": [9, 8]}, k=3, label="sys")
    path = tmp_path / "run.jsonl"
    run.to_jsonl(path)
    back = RetrievalRun.from_jsonl(path, k=3)
    assert back.rankings == run.rankings
