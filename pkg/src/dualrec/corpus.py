"""Corpus ingestion and the five-stage preprocessing pipeline.

Raw news records go through encoding repair, composite-content creation,
text cleaning, stop-word removal, and invalid-record filtering, producing
clean articles plus a statistics report.
"""

from __future__ import annotations

import csv
import io
import json
import unicodedata
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

from .errors import DualrecError

# Unicode ranges covering Urdu/Arabic script, inclusive.
URDU_RANGES = (
    (0x0600, 0x06FF),
    (0x0750, 0x077F),
    (0xFB50, 0xFDFF),
    (0xFE70, 0xFEFF),
)

# Default joiner between headline and body: space-padded Urdu full stop.
DEFAULT_DELIMITER = " ۔ "

MIN_CONTENT_CHARS = 15

_TAG_RE = re.compile(r"<[^<>]*>")
_WS_RE = re.compile(r"\s+")


@dataclass(frozen=True)
class RawRecord:
    """One row of raw input; may be arbitrarily dirty."""

    headline: str
    news_text: str
    category: str
    source: str = ""
    extra_metadata: dict[str, str] = field(default_factory=dict)


@dataclass(frozen=True)
class Article:
    """A clean corpus item: the unit of recommendation."""

    id: int
    headline: str
    content: str
    category: str
    char_len_headline: int
    char_len_content: int

    @classmethod
    def make(cls, article_id: int, headline: str, content: str, category: str) -> "Article":
        return cls(
            id=article_id,
            headline=headline,
            content=content,
            category=category,
            char_len_headline=len(headline),
            char_len_content=len(content),
        )


@dataclass(frozen=True)
class ArticleCandidate:
    """A record after cleaning, before validity filtering."""

    headline: str
    content: str
    category: str
    source: str = ""


class StopList:
    """A set of stop-word tokens loaded from a data file."""

    def __init__(self, entries: Iterable[str]):
        entries = list(entries)
        for entry in entries:
            if not entry or any(ch.isspace() for ch in entry):
                raise ValueError(f"invalid stop-word entry: {entry!r}")
        self._entries = frozenset(entries)

    @classmethod
    def from_file(cls, path: str | Path) -> "StopList":
        """Load one token per line; blank lines and `#` comments are skipped."""
        entries = []
        with open(path, encoding="utf-8") as fh:
            for line in fh:
                token = line.strip()
                if not token or token.startswith("#"):
                    continue
                entries.append(token)
        return cls(entries)

    @classmethod
    def default(cls) -> "StopList":
        """The bundled 127-entry Urdu stop-word list."""
        return cls.from_file(Path(__file__).parent / "data" / "stopwords_ur.txt")

    def __contains__(self, token: str) -> bool:
        return token in self._entries

    def __len__(self) -> int:
        return len(self._entries)

    def __iter__(self):
        return iter(sorted(self._entries))


@dataclass
class PreprocessReport:
    """Quantitative effects of preprocessing, one value per statistic."""

    records_in: int = 0
    records_out: int = 0
    duplicates_removed: int = 0
    nulls_removed: int = 0
    short_removed: int = 0
    words_total: int = 0
    stopwords_removed: int = 0
    removal_rate: float = 0.0
    avg_article_len: float = 0.0
    avg_headline_len: float = 0.0
    categories: int = 0
    sources: int = 0

    def validate(self) -> None:
        if self.records_out != self.records_in - self.duplicates_removed - self.nulls_removed - self.short_removed:
            raise DualrecError("report counts are inconsistent")
        if not 0.0 <= self.removal_rate <= 1.0:
            raise DualrecError(f"removal_rate out of range: {self.removal_rate}")

    def to_dict(self) -> dict:
        return dict(self.__dict__)


@dataclass(frozen=True)
class PipelineConfig:
    """Knobs for the preprocessing pipeline."""

    delimiter: str = DEFAULT_DELIMITER
    min_content_chars: int = MIN_CONTENT_CHARS
    # Whether stop-word removal also applies to the headline field.
    stopwords_on_headlines: bool = True


def urdu_fraction(text: str) -> float:
    """Fraction of codepoints that fall in the Urdu/Arabic Unicode ranges."""
    if not text:
        return 0.0
    hits = sum(1 for ch in text if any(lo <= ord(ch) <= hi for lo, hi in URDU_RANGES))
    return hits / len(text)


def repair_encoding(raw: str) -> str:
    """Best-effort repair of UTF-8 text previously misread as Latin-1.

    The Latin-1 byte image of the input is reinterpreted as UTF-8; the
    repaired string is returned only when that decodes cleanly and strictly
    increases the Urdu-range codepoint fraction. Anything else passes
    through unchanged, so the function is idempotent.
    """
    try:
        candidate = raw.encode("latin-1").decode("utf-8")
    except (UnicodeEncodeError, UnicodeDecodeError):
        return raw
    if urdu_fraction(candidate) > urdu_fraction(raw):
        return candidate
    return raw


def compose_content(headline: str, body: str, delimiter: str = DEFAULT_DELIMITER) -> str:
    """Join headline and body into the composite content field."""
    if not headline.strip():
        raise ValueError("headline is empty after cleaning")
    if not body:
        return headline
    return f"{headline}{delimiter}{body}"


def _is_forbidden(ch: str) -> bool:
    # Latin letters, ASCII digits, all punctuation and symbols (covers
    # generic and Urdu-specific marks plus emoji), and non-whitespace
    # control/format codepoints. Urdu letters, combining diacritics and
    # extended digits survive.
    if "a" <= ch <= "z" or "A" <= ch <= "Z" or "0" <= ch <= "9":
        return True
    cat = unicodedata.category(ch)
    if cat[0] in ("P", "S"):
        return True
    if cat[0] == "C" and not ch.isspace():
        return True
    return False


def clean_text(raw: str) -> str:
    """Normalize raw text: strip HTML tags and forbidden character classes,
    then collapse whitespace runs and trim."""
    text = _TAG_RE.sub(" ", raw)
    text = "".join(ch for ch in text if not _is_forbidden(ch))
    return _WS_RE.sub(" ", text).strip()


def remove_stopwords(text: str, stops: StopList) -> tuple[str, int]:
    """Drop whitespace tokens present in the stop list, preserving order.

    Returns the filtered text and the number of tokens removed.
    """
    tokens = text.split()
    kept = [t for t in tokens if t not in stops]
    return " ".join(kept), len(tokens) - len(kept)


def filter_records(
    candidates: Sequence[ArticleCandidate],
    min_chars: int = MIN_CONTENT_CHARS,
) -> tuple[list[Article], PreprocessReport]:
    """Drop null, short, and duplicate records; assign ids to survivors.

    Order of checks per record: null/empty fields, length threshold, exact
    duplicate of previously kept content. The first occurrence of duplicated
    content wins. Word-level statistics are left at zero for the caller to
    fill in.
    """
    report = PreprocessReport(records_in=len(candidates))
    articles: list[Article] = []
    seen_content: set[str] = set()
    next_id = 0
    for cand in candidates:
        if not cand.content.strip() or not cand.category.strip() or not cand.headline.strip():
            report.nulls_removed += 1
            continue
        if len(cand.content) < min_chars:
            report.short_removed += 1
            continue
        if cand.content in seen_content:
            report.duplicates_removed += 1
            continue
        seen_content.add(cand.content)
        articles.append(Article.make(next_id, cand.headline, cand.content, cand.category))
        next_id += 1

    report.records_out = len(articles)
    if articles:
        report.avg_article_len = sum(a.char_len_content for a in articles) / len(articles)
        report.avg_headline_len = sum(a.char_len_headline for a in articles) / len(articles)
    report.categories = len({a.category for a in articles})
    report.sources = len({c.source for c in candidates if c.source})
    report.validate()
    return articles, report


def preprocess(
    records: Iterable[RawRecord],
    stops: StopList,
    config: PipelineConfig = PipelineConfig(),
) -> tuple[list[Article], PreprocessReport]:
    """Run the full five-stage pipeline over raw records.

    Deterministic for a fixed input sequence and stop list; output article
    ids are assigned in input order.
    """
    candidates: list[ArticleCandidate] = []
    words_total = 0
    stopwords_removed = 0
    for rec in records:
        headline = clean_text(repair_encoding(rec.headline))
        body = clean_text(repair_encoding(rec.news_text))
        category = repair_encoding(rec.category).strip()
        source = repair_encoding(rec.source).strip() if rec.source else ""

        words_total += len(headline.split()) + len(body.split())
        if config.stopwords_on_headlines:
            headline, removed = remove_stopwords(headline, stops)
            stopwords_removed += removed
        body, removed = remove_stopwords(body, stops)
        stopwords_removed += removed

        if headline:
            content = compose_content(headline, body, config.delimiter)
        else:
            content = ""
        candidates.append(ArticleCandidate(headline, content, category, source))

    articles, report = filter_records(candidates, min_chars=config.min_content_chars)
    report.words_total = words_total
    report.stopwords_removed = stopwords_removed
    report.removal_rate = stopwords_removed / words_total if words_total else 0.0
    report.validate()
    return articles, report


# Default column names for raw inputs; remappable via `column_map`.
DEFAULT_COLUMNS = {
    "headline": "headline",
    "news_text": "news_text",
    "category": "category",
    "source": "source",
}

_CORE_FIELDS = ("headline", "news_text", "category", "source")


def _record_from_row(row: dict, columns: dict[str, str]) -> RawRecord:
    resolved = {key: (row.get(col) or "") for key, col in columns.items()}
    extra = {
        k: (v if v is not None else "")
        for k, v in row.items()
        if k not in set(columns.values())
    }
    return RawRecord(
        headline=str(resolved["headline"]),
        news_text=str(resolved["news_text"]),
        category=str(resolved["category"]),
        source=str(resolved["source"]),
        extra_metadata={str(k): str(v) for k, v in extra.items()},
    )


def load_raw_records(
    path: str | Path,
    fmt: str = "auto",
    encoding: str = "utf-8",
    column_map: dict[str, str] | None = None,
    skip_bad_rows: bool = False,
) -> tuple[list[RawRecord], list[str]]:
    """Read raw records from a CSV or JSON-lines file.

    Returns the records plus a list of per-line issue messages. With
    `skip_bad_rows` unset, the first malformed row raises.
    """
    path = Path(path)
    if fmt == "auto":
        fmt = "jsonl" if path.suffix.lower() in (".jsonl", ".ndjson", ".json") else "csv"
    columns = dict(DEFAULT_COLUMNS)
    if column_map:
        unknown = set(column_map) - set(_CORE_FIELDS)
        if unknown:
            raise ValueError(f"unknown column-map fields: {sorted(unknown)}")
        columns.update(column_map)

    records: list[RawRecord] = []
    issues: list[str] = []
    text = path.read_bytes().decode(encoding, errors="replace")
    if fmt == "csv":
        reader = csv.DictReader(io.StringIO(text))
        required = {columns["headline"], columns["news_text"], columns["category"]}
        missing = required - set(reader.fieldnames or [])
        if missing:
            raise DualrecError(f"input missing required columns: {sorted(missing)}")
        for lineno, row in enumerate(reader, start=2):
            records.append(_record_from_row(row, columns))
    elif fmt == "jsonl":
        for lineno, line in enumerate(text.splitlines(), start=1):
            if not line.strip():
                continue
            try:
                row = json.loads(line)
                if not isinstance(row, dict):
                    raise ValueError("row is not an object")
            except ValueError as exc:
                msg = f"line {lineno}: {exc}"
                if not skip_bad_rows:
                    raise DualrecError(f"malformed input row at {msg}") from exc
                issues.append(msg)
                continue
            records.append(_record_from_row(row, columns))
    else:
        raise ValueError(f"unknown input format: {fmt}")
    return records, issues


def write_articles_jsonl(articles: Iterable[Article], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for art in articles:
            fh.write(json.dumps(art.__dict__, ensure_ascii=False) + "\n")


def load_articles_jsonl(path: str | Path) -> list[Article]:
    """Load articles, recomputing and checking the stored length fields."""
    articles = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            row = json.loads(line)
            art = Article.make(int(row["id"]), row["headline"], row["content"], row["category"])
            for key in ("char_len_headline", "char_len_content"):
                if key in row and row[key] != getattr(art, key):
                    raise DualrecError(f"line {lineno}: stored {key} disagrees with recomputed length")
            articles.append(art)
    ids = [a.id for a in articles]
    if len(set(ids)) != len(ids):
        raise DualrecError("duplicate article ids in file")
    return articles
