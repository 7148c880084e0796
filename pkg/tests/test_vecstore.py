"""Cosine retrieval against a brute-force oracle, plus store IO."""

import numpy as np
import pytest

from bondsent import vecstore


def oracle_top_k(query, keys, vectors, k):
    """Independent exhaustive scan: descending similarity, insertion-order
    tie-break, implemented without the store's code paths."""
    query = np.asarray(query, dtype=np.float64)
    sims = []
    for key, vec in zip(keys, vectors):
        vec = np.asarray(vec, dtype=np.float64)
        sims.append(
            (key, float(np.dot(query, vec) / (np.linalg.norm(query) * np.linalg.norm(vec))))
        )
    ranked = sorted(enumerate(sims), key=lambda e: (-e[1][1], e[0]))
    return [(key, sim) for _, (key, sim) in ranked[: min(k, len(sims))]]


def test_cosine_known_values():
    assert vecstore.cosine([1, 0], [0, 1]) == pytest.approx(0.0)
    assert vecstore.cosine([1, 1], [1, 1]) == pytest.approx(1.0)
    assert vecstore.cosine([1, 0], [-2, 0]) == pytest.approx(-1.0)
    assert vecstore.cosine([3, 4], [4, 3]) == pytest.approx(24 / 25)


def test_cosine_rejects_zero_and_mismatch():
    with pytest.raises(ValueError, match="zero vector"):
        vecstore.cosine([0, 0], [1, 0])
    with pytest.raises(ValueError, match="mismatch"):
        vecstore.cosine([1, 0], [1, 0, 0])


def test_top_k_matches_oracle_on_random_stores():
    rng = np.random.default_rng(99)
    keys = [f"TOP{i:03d}" for i in range(100)]
    vectors = rng.normal(size=(100, 16))
    store = vecstore.EmbeddingStore(keys, vectors)
    for _ in range(50):
        query = rng.normal(size=16)
        k = int(rng.integers(1, 12))
        got = store.top_k(query, k)
        want = oracle_top_k(query, keys, vectors, k)
        assert [m.key for m in got] == [w[0] for w in want]
        np.testing.assert_allclose(
            [m.similarity for m in got], [w[1] for w in want], atol=1e-12
        )


def test_top_k_tie_break_is_store_order():
    # two copies of the same direction at different norms: identical cosine
    store = vecstore.EmbeddingStore(
        ["late", "early", "other"],
        np.array([[2.0, 0.0], [1.0, 0.0], [0.0, 1.0]]),
    )
    got = store.top_k([1.0, 0.0], 2)
    assert [m.key for m in got] == ["late", "early"]
    assert got[0].similarity == got[1].similarity == pytest.approx(1.0)


def test_top_k_k_larger_than_store():
    store = vecstore.EmbeddingStore(["a", "b"], np.eye(2))
    assert len(store.top_k([1.0, 1.0], 10)) == 2


def test_top_k_input_validation():
    store = vecstore.EmbeddingStore(["a"], [[1.0, 0.0]])
    with pytest.raises(ValueError, match="k must be"):
        store.top_k([1.0, 0.0], 0)
    with pytest.raises(ValueError, match="dim"):
        store.top_k([1.0, 0.0, 0.0], 1)
    with pytest.raises(ValueError, match="zero query"):
        store.top_k([0.0, 0.0], 1)


def test_store_rejects_duplicates_and_zero_rows():
    with pytest.raises(ValueError, match="duplicate"):
        vecstore.EmbeddingStore(["a", "a"], np.eye(2))
    with pytest.raises(vecstore.SchemaError, match="zero vector"):
        vecstore.EmbeddingStore(["a", "b"], [[1.0, 0.0], [0.0, 0.0]])


def test_store_vector_returns_copy():
    store = vecstore.EmbeddingStore(["a"], [[1.0, 2.0]])
    v = store.vector("a")
    v[0] = 99.0
    np.testing.assert_array_equal(store.vector("a"), [1.0, 2.0])


def test_jsonl_round_trip(tmp_path):
    rng = np.random.default_rng(5)
    keys = [f"k{i}" for i in range(7)]
    vectors = rng.normal(size=(7, 4))
    path = tmp_path / "store.jsonl"
    vecstore.save_store(path, keys, vectors)
    loaded = vecstore.load_store(path)
    assert loaded.keys == keys
    np.testing.assert_allclose(loaded.vector("k3"), vectors[3], atol=1e-15)


@pytest.mark.parametrize("content,complaint", [
    ("", "missing dim"),
    ('{"key": "a", "vector": [1.0]}\n', "first line must declare dim"),
    ('{"dim": 2}\n{"key": "a", "vector": [1.0]}\n', "length"),
    ('{"dim": 2}\n{"vector": [1.0, 2.0]}\n', "missing key"),
    ('{"dim": 0}\n', "dim must be"),
])
def test_load_store_rejects_malformed(tmp_path, content, complaint):
    path = tmp_path / "store.jsonl"
    path.write_text(content, encoding="utf-8")
    with pytest.raises(vecstore.SchemaError, match=complaint):
        vecstore.load_store(path)
