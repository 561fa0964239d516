"""Exporter unit tests, stub-backend based; the engine's reader is the
validation oracle for the wire format."""

import json

import numpy as np
import pytest

from dualrec.embed import query_exchange_id, read_exchange

from ulte_exporter import (
    ExporterError,
    ExportJob,
    InputFormatError,
    StubBackend,
    export,
    query_hash_id,
    read_input_lines,
    write_exchange_file,
)


def _write_tsv(path, rows):
    path.write_text("".join(f"{tid}\t{text}\n" for tid, text in rows), encoding="utf-8")


def _job(tmp_path, **kw):
    defaults = dict(input_path=str(tmp_path / "in.tsv"), output_path=str(tmp_path / "out.ulte"))
    defaults.update(kw)
    return ExportJob(**defaults)


def test_export_validates_under_engine_reader(tmp_path):
    rows = [
        ("a", "تازہ خبر شہر میں"),
        ("b", "کھیل " * 700),  # tokenizes past the window, must truncate
        ("c", "ایک"),
    ]
    _write_tsv(tmp_path / "in.tsv", rows)
    job = _job(tmp_path)
    count = export(job, backend=StubBackend())
    assert count == 3
    entries = list(read_exchange(job.output_path, dim=768))
    assert [tid for tid, _ in entries] == ["a", "b", "c"]
    for _, matrix in entries:
        assert matrix.width == 768
        assert matrix.rows <= 512
        assert matrix.has_cls
    assert entries[1][1].rows == 512


def test_export_byte_identical_across_runs(tmp_path):
    rows = [(f"id{i}", f"خبر نمبر {'الف ' * (i + 1)}") for i in range(6)]
    _write_tsv(tmp_path / "in.tsv", rows)
    job1 = _job(tmp_path, output_path=str(tmp_path / "one.ulte"))
    job2 = _job(tmp_path, output_path=str(tmp_path / "two.ulte"))
    export(job1, backend=StubBackend())
    export(job2, backend=StubBackend())
    assert (tmp_path / "one.ulte").read_bytes() == (tmp_path / "two.ulte").read_bytes()


def test_export_empty_input_yields_valid_empty_file(tmp_path):
    (tmp_path / "in.tsv").write_text("", encoding="utf-8")
    job = _job(tmp_path)
    assert export(job, backend=StubBackend()) == 0
    assert list(read_exchange(job.output_path, dim=768)) == []


def test_articles_format_derives_engine_ids(tmp_path):
    rows = [
        {"id": 3, "headline": "سرخی پہلی", "content": "مواد پہلا یہاں", "category": "خبر"},
        {"id": 9, "headline": "سرخی دوسری", "content": "مواد دوسرا یہاں", "category": "خبر"},
    ]
    (tmp_path / "in.tsv").write_text(
        "".join(json.dumps(r, ensure_ascii=False) + "\n" for r in rows), encoding="utf-8"
    )
    job = _job(tmp_path, input_format="articles", article_field="headline")
    export(job, backend=StubBackend())
    ids = [tid for tid, _ in read_exchange(job.output_path, dim=768)]
    assert ids == ["h:3", "h:9"]
    job2 = _job(tmp_path, input_format="articles", article_field="content",
                output_path=str(tmp_path / "c.ulte"))
    export(job2, backend=StubBackend())
    assert [tid for tid, _ in read_exchange(job2.output_path, dim=768)] == ["c:3", "c:9"]


def test_hash_ids_match_engine_query_convention(tmp_path):
    text = "عوام کے لیے تازہ ترین"
    _write_tsv(tmp_path / "in.tsv", [("whatever", text)])
    job = _job(tmp_path, hash_ids=True)
    export(job, backend=StubBackend())
    [(tid, _)] = list(read_exchange(job.output_path, dim=768))
    assert tid == query_hash_id(text) == query_exchange_id(text)


def test_duplicate_ids_rejected(tmp_path):
    _write_tsv(tmp_path / "in.tsv", [("x", "الف"), ("x", "بے")])
    with pytest.raises(InputFormatError, match="duplicate"):
        export(_job(tmp_path), backend=StubBackend())


def test_malformed_line_fatal_or_skipped(tmp_path):
    (tmp_path / "in.tsv").write_text("good\tالف\nno-tab-here\n", encoding="utf-8")
    with pytest.raises(InputFormatError, match="line 2"):
        export(_job(tmp_path), backend=StubBackend())
    job = _job(tmp_path, skip_bad_lines=True)
    assert export(job, backend=StubBackend()) == 1
    assert len(job.issues) == 1


def test_undecodable_line_reported_with_lineno(tmp_path):
    data = "ok\tالف\n".encode("utf-8") + b"bad\t\xff\xfe\n"
    (tmp_path / "in.tsv").write_bytes(data)
    job = _job(tmp_path, skip_bad_lines=True)
    assert export(job, backend=StubBackend()) == 1
    assert "line 2" in job.issues[0]


class _FlakyBackend(StubBackend):
    """Raises out-of-memory for batches above a threshold."""

    def __init__(self, max_batch):
        super().__init__()
        self.max_batch = max_batch
        self.calls = []

    def encode(self, texts):
        self.calls.append(len(texts))
        if len(texts) > self.max_batch:
            raise MemoryError("synthetic OOM")
        return super().encode(texts)


def test_oom_backoff_halves_batches(tmp_path):
    rows = [(f"id{i}", "خبر " * 3) for i in range(16)]
    _write_tsv(tmp_path / "in.tsv", rows)
    backend = _FlakyBackend(max_batch=4)
    job = _job(tmp_path, batch_size=16)
    assert export(job, backend=backend) == 16
    assert max(c for c in backend.calls if c <= 4) <= 4
    assert list(read_exchange(job.output_path, dim=768))


def test_backend_width_mismatch_rejected(tmp_path):
    _write_tsv(tmp_path / "in.tsv", [("a", "الف")])
    job = _job(tmp_path, dim=768)
    with pytest.raises(ExporterError, match="width"):
        export(job, backend=StubBackend(dim=384))


def test_writer_rejects_nonfinite(tmp_path):
    bad = np.full((2, 768), np.nan, dtype=np.float32)
    with pytest.raises(ExporterError, match="non-finite"):
        write_exchange_file(tmp_path / "x.ulte", [("a", bad)], dim=768)


def test_read_input_lines_tsv_text_may_contain_tabs(tmp_path):
    _write_tsv(tmp_path / "in.tsv", [("a", "الف\tبے")])
    pairs = read_input_lines(_job(tmp_path))
    assert pairs == [("a", "الف\tبے")]
