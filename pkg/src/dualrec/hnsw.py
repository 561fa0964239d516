"""Hierarchical navigable small world graph for approximate nearest
neighbors over unit vectors (cosine distance = 1 - dot).

Incremental construction with diversity-aware neighbor selection; layer 0
holds every vector, higher layers thin out geometrically. Vectors live in
one contiguous float32 matrix owned by the caller; the graph stores only
integer adjacency, which keeps persistence simple and bit-exact.
"""

from __future__ import annotations

import heapq
import math

import numpy as np


class HnswGraph:
    """Graph index over a fixed matrix of unit-normalized vectors."""

    def __init__(self, dim: int, m: int = 16, ef_construction: int = 200, seed: int = 0):
        if m < 2:
            raise ValueError(f"m must be >= 2, got {m}")
        self.dim = dim
        self.m = m
        # Layer 0 carries 4x the degree of upper layers: isotropic
        # high-dimensional data needs the extra fan-out to keep recall
        # high at moderate search beams.
        self.m0 = 4 * m
        self.ef_construction = ef_construction
        self.seed = seed
        self._ml = 1.0 / math.log(m)
        self._rng = np.random.Generator(np.random.PCG64(seed))
        self.vectors: np.ndarray | None = None
        # adjacency[node][layer] -> list of neighbor ids; len = node level + 1
        self.adjacency: list[list[list[int]]] = []
        self.entry_point = -1
        self.max_level = -1
        self._visited: np.ndarray | None = None
        self._epoch = 0

    # -- construction ------------------------------------------------------

    def build(self, vectors: np.ndarray) -> None:
        """Insert all rows of a unit-normalized float32 matrix."""
        if self.vectors is not None:
            raise RuntimeError("graph already built")
        vectors = np.ascontiguousarray(vectors, dtype=np.float32)
        self.vectors = vectors
        n = vectors.shape[0]
        self._visited = np.zeros(n, dtype=np.int64)
        for i in range(n):
            self._insert(i)

    def _draw_level(self) -> int:
        u = self._rng.uniform(0.0, 1.0)
        # uniform() never returns 1.0; guard the log(0) corner anyway
        u = max(u, 1e-300)
        return int(-math.log(u) * self._ml)

    def _insert(self, node: int) -> None:
        level = self._draw_level()
        self.adjacency.append([[] for _ in range(level + 1)])
        if self.entry_point < 0:
            self.entry_point = node
            self.max_level = level
            return

        q = self.vectors[node]
        eps = [self.entry_point]
        for layer in range(self.max_level, level, -1):
            eps = [nid for _, nid in self._search_layer(q, eps, layer, 1)]

        for layer in range(min(level, self.max_level), -1, -1):
            candidates = self._search_layer(q, eps, layer, self.ef_construction)
            cap = self.m0 if layer == 0 else self.m
            neighbors = self._select_neighbors(q, candidates, cap)
            self.adjacency[node][layer] = list(neighbors)
            for nb in neighbors:
                links = self.adjacency[nb][layer]
                links.append(node)
                if len(links) > cap:
                    self._shrink(nb, layer, cap)
            eps = [nid for _, nid in candidates]

        if level > self.max_level:
            self.entry_point = node
            self.max_level = level

    def _shrink(self, node: int, layer: int, cap: int) -> None:
        links = self.adjacency[node][layer]
        base = self.vectors[node]
        dists = 1.0 - self.vectors[links] @ base
        order = np.argsort(dists, kind="stable")
        candidates = [(float(dists[i]), links[i]) for i in order]
        self.adjacency[node][layer] = self._select_neighbors(base, candidates, cap)

    def _select_neighbors(self, q: np.ndarray, candidates: list[tuple[float, int]], m: int) -> list[int]:
        """Diversity-aware selection: keep a candidate only if it is closer
        to the query than to any already-selected neighbor. Dropping the
        crowded candidates outright (no backfill) keeps long-range edges
        that make greedy routing work at small search depths."""
        if len(candidates) <= m:
            return [nid for _, nid in candidates]
        selected: list[int] = []
        sel_vecs = np.empty((m, self.dim), dtype=np.float32)
        for dist, nid in candidates:
            if len(selected) >= m:
                break
            if not selected:
                sel_vecs[0] = self.vectors[nid]
                selected.append(nid)
                continue
            k = len(selected)
            dist_to_selected = 1.0 - sel_vecs[:k] @ self.vectors[nid]
            if dist < dist_to_selected.min():
                sel_vecs[k] = self.vectors[nid]
                selected.append(nid)
        return selected

    # -- search ------------------------------------------------------------

    def _search_layer(
        self, q: np.ndarray, entry_points: list[int], layer: int, ef: int
    ) -> list[tuple[float, int]]:
        """Best-first search on one layer; returns (dist, id) ascending."""
        self._epoch += 1
        epoch = self._epoch
        visited = self._visited
        vectors = self.vectors
        adjacency = self.adjacency

        eps = [nid for nid in entry_points if visited[nid] != epoch]
        visited[eps] = epoch
        dists = 1.0 - vectors[eps] @ q
        candidates = list(zip(dists.tolist(), eps))
        heapq.heapify(candidates)
        best = [(-d, nid) for d, nid in candidates]
        heapq.heapify(best)

        while candidates:
            dist, node = heapq.heappop(candidates)
            if dist > -best[0][0] and len(best) >= ef:
                break
            fresh = [nb for nb in adjacency[node][layer] if visited[nb] != epoch]
            if not fresh:
                continue
            visited[fresh] = epoch
            fresh_dists = 1.0 - vectors[fresh] @ q
            bound = -best[0][0]
            full = len(best) >= ef
            for nb, d in zip(fresh, fresh_dists.tolist()):
                if not full or d < bound:
                    heapq.heappush(candidates, (d, nb))
                    heapq.heappush(best, (-d, nb))
                    if len(best) > ef:
                        heapq.heappop(best)
                    bound = -best[0][0]
                    full = len(best) >= ef
        out = [(-d, nid) for d, nid in best]
        out.sort()
        return out

    def search(self, q: np.ndarray, ef: int) -> list[int]:
        """Approximate nearest ids for a unit query, closest first."""
        if self.entry_point < 0:
            return []
        q = np.ascontiguousarray(q, dtype=np.float32)
        eps = [self.entry_point]
        for layer in range(self.max_level, 0, -1):
            eps = [nid for _, nid in self._search_layer(q, eps, layer, 1)]
        return [nid for _, nid in self._search_layer(q, eps, 0, ef)]

    # -- persistence -------------------------------------------------------

    def to_blocks(self) -> dict:
        """Flatten graph structure into arrays for serialization."""
        levels = np.array([len(layers) - 1 for layers in self.adjacency], dtype=np.uint32)
        flat: list[int] = []
        counts: list[int] = []
        for layers in self.adjacency:
            for links in layers:
                counts.append(len(links))
                flat.extend(links)
        return {
            "entry_point": self.entry_point,
            "max_level": self.max_level,
            "levels": levels,
            "counts": np.array(counts, dtype=np.uint32),
            "flat": np.array(flat, dtype=np.uint32),
        }

    @classmethod
    def from_blocks(
        cls,
        blocks: dict,
        vectors: np.ndarray,
        m: int,
        ef_construction: int,
        seed: int,
    ) -> "HnswGraph":
        graph = cls(dim=vectors.shape[1], m=m, ef_construction=ef_construction, seed=seed)
        graph.vectors = np.ascontiguousarray(vectors, dtype=np.float32)
        graph.entry_point = int(blocks["entry_point"])
        graph.max_level = int(blocks["max_level"])
        counts = blocks["counts"]
        flat = blocks["flat"]
        pos = 0
        ci = 0
        for level in blocks["levels"]:
            layers = []
            for _ in range(int(level) + 1):
                count = int(counts[ci])
                ci += 1
                layers.append([int(x) for x in flat[pos : pos + count]])
                pos += count
            graph.adjacency.append(layers)
        graph._visited = np.zeros(len(graph.adjacency), dtype=np.int64)
        return graph
