"""Shared fixtures: synthetic Urdu-script corpora with category structure."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import pytest

from dualrec.corpus import Article

# Letters from the Urdu alphabet; tokens built from these survive text
# cleaning unchanged.
URDU_LETTERS = "ابپتٹثجچحخدڈذرڑزژسشصضطظعغفقکگلمنںوہھءیے"


def make_token(rng: np.random.Generator, min_len: int = 4, max_len: int = 7) -> str:
    length = int(rng.integers(min_len, max_len + 1))
    return "".join(URDU_LETTERS[int(i)] for i in rng.integers(0, len(URDU_LETTERS), size=length))


@dataclass
class CategoryCorpus:
    """Synthetic articles whose token pools cluster by category."""

    articles: list[Article]
    categories: list[str]
    headline_pools: dict[str, list[str]]
    content_pools: dict[str, list[str]]
    seed: int

    def category_of(self, article_id: int) -> str:
        return self.articles[article_id].category

    def sample_query(self, rng: np.random.Generator, category: str, n_tokens: int, pool: str = "headline") -> str:
        pools = self.headline_pools if pool == "headline" else self.content_pools
        tokens = [pools[category][int(i)] for i in rng.integers(0, len(pools[category]), size=n_tokens)]
        return " ".join(tokens)


def build_category_corpus(
    n_articles: int,
    n_categories: int = 5,
    seed: int = 0,
    headline_pool_size: int = 6,
    content_pool_size: int = 20,
    headline_tokens: int = 10,
    content_tokens: int = 80,
) -> CategoryCorpus:
    """Articles drawn from small per-category token pools.

    Small pools make same-category embeddings correlate strongly under the
    synthetic hash embedder while disjoint pools keep categories apart.
    Each content carries one unique token so content embeddings never
    collide across articles.
    """
    rng = np.random.Generator(np.random.PCG64(seed))
    categories = [f"cat{i}" for i in range(n_categories)]
    headline_pools = {}
    content_pools = {}
    used: set[str] = set()

    def fresh_token() -> str:
        while True:
            tok = make_token(rng)
            if tok not in used:
                used.add(tok)
                return tok

    for cat in categories:
        headline_pools[cat] = [fresh_token() for _ in range(headline_pool_size)]
        content_pools[cat] = [fresh_token() for _ in range(content_pool_size)]

    articles = []
    for i in range(n_articles):
        cat = categories[i % n_categories]
        h_pool = headline_pools[cat]
        c_pool = content_pools[cat]
        headline = " ".join(h_pool[int(j)] for j in rng.integers(0, len(h_pool), size=headline_tokens))
        body = [c_pool[int(j)] for j in rng.integers(0, len(c_pool), size=content_tokens)]
        body.append(fresh_token())  # unique marker keeps contents distinct
        content = " ".join(body)
        articles.append(Article.make(i, headline, content, cat))
    return CategoryCorpus(articles, categories, headline_pools, content_pools, seed)


@pytest.fixture(scope="session")
def small_corpus() -> CategoryCorpus:
    return build_category_corpus(n_articles=100, n_categories=4, seed=11)


def pytest_runtest_logreport(report):
    if report.when == "call" and "test_acceptance" in report.nodeid:
        name = report.nodeid.split("::")[-1]
        print(f"\nACCEPTANCE {name}: {'PASS' if report.passed else 'FAIL'}")
