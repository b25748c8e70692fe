"""Store adapter conformance suite.

Runs the reference-store behavioral assertions against any object exposing
the standard store interface, with a recall floor instead of exactness so
approximate remote engines can pass.
"""

from __future__ import annotations

import numpy as np

from ragbench.errors import DuplicateId, UnknownFileId


def _brute_force_top_k(items: list[tuple[str, np.ndarray]], query: np.ndarray, k: int,
                       metric: str) -> list[str]:
    q = np.asarray(query, dtype=np.float64)
    if metric == "cosine":
        q = q / (np.linalg.norm(q) or 1.0)
    scored = []
    for cid, vec in items:
        v = np.asarray(vec, dtype=np.float64)
        if metric == "cosine":
            v = v / (np.linalg.norm(v) or 1.0)
            score = float(v @ q)
        else:
            score = -float(np.linalg.norm(v - q))
        scored.append((-score, cid))
    scored.sort()
    return [cid for _, cid in scored[:k]]


def run_store_conformance(store, dim: int, n: int = 200, n_queries: int = 20,
                          k: int = 10, recall_floor: float = 0.8, seed: int = 1234) -> dict:
    """Exercise insert/search/delete/build/stats against a seeded dataset.

    Raises AssertionError on the first contract violation; returns a summary
    of measured recalls on success.
    """
    rng = np.random.default_rng(seed)
    items = [(f"conf{i:05d}", rng.normal(size=dim)) for i in range(n)]
    for cid, vec in items:
        store.insert(cid, vec)

    try:
        store.insert(items[0][0], items[0][1])
        raise AssertionError("duplicate insert must raise DuplicateId")
    except DuplicateId:
        pass

    try:
        store.search(items[0][1], 0)
        raise AssertionError("search with k=0 must be rejected")
    except ValueError:
        pass

    store.build_index()

    metric = getattr(store, "metric", "cosine")
    recalls = []
    for _ in range(n_queries):
        q = rng.normal(size=dim)
        expected = set(_brute_force_top_k(items, q, k, metric))
        got = store.search(q, k)
        got_ids = [cid for cid, _ in got]
        assert len(got_ids) == len(set(got_ids)), "duplicate ids in search results"
        assert set(got_ids) <= {cid for cid, _ in items}, "search returned unknown ids"
        scores = [score for _, score in got]
        assert scores == sorted(scores, reverse=True), "results not sorted by descending score"
        recalls.append(len(set(got_ids) & expected) / k)
    mean_recall = sum(recalls) / len(recalls)
    assert mean_recall >= recall_floor, f"recall {mean_recall:.3f} below floor {recall_floor}"

    # deletion: the deleted id must disappear from its own nearest search
    victim_id, victim_vec = items[0]
    store.delete(victim_id)
    got_ids = [cid for cid, _ in store.search(victim_vec, k)]
    assert victim_id not in got_ids, "deleted id still retrievable"

    try:
        store.delete("conf-never-existed")
        raise AssertionError("delete of unknown id must raise UnknownFileId")
    except UnknownFileId:
        pass

    stats = store.stats()
    assert int(stats.get("count", -1)) == n - 1, f"stats count {stats.get('count')} != {n - 1}"
    return {"mean_recall": mean_recall, "min_recall": min(recalls), "count": n - 1}
