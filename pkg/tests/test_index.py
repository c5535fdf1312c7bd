import math
import struct

import numpy as np
import pytest

from commreid.exceptions import CorruptIndex, DimensionMismatch, DuplicateUser, EmptyIndex
from commreid.index import RetrievalIndex, build_index, crc64, query_topk

from conftest import unit_rows
from oracles import naive_topk


def test_crc64_check_value():
    assert crc64(b"123456789") == 0x995DC9BBDF1939FA


def test_exact_example():
    X = np.array([[1, 0], [0, 1], [0.6, 0.8]])
    idx = build_index(X, ["a", "b", "c"])
    res = query_topk(idx, np.array([1.0, 1.0]), 2)
    assert res.user_ids == ["c", "a"]
    np.testing.assert_allclose(res.scores, [1.4, 1.0], atol=1e-6)
    assert query_topk(idx, np.array([0.0, 1.0]), 5).user_ids == ["b", "c", "a"]


def test_ties_break_by_user_id():
    X = np.array([[1.0, 0.0]] * 3)
    idx = build_index(X, ["u3", "u1", "u2"])
    assert query_topk(idx, np.array([1.0, 0.0]), 3).user_ids == ["u1", "u2", "u3"]


def test_exact_matches_naive_scorer(rng):
    for trial in range(50):
        n, k = int(rng.integers(1, 80)), int(rng.integers(1, 9))
        X = unit_rows(rng, n, k)
        ids = [f"id{int(v)}" for v in rng.permutation(10_000)[:n]]
        idx = build_index(X, ids)
        w = rng.standard_normal(k)
        k_out = int(rng.integers(1, n + 3))
        ref_ids, ref_scores = naive_topk(idx.vectors_, ids, w, k_out)
        res = idx.query(w, k_out)
        assert res.user_ids == ref_ids
        np.testing.assert_allclose(res.scores, ref_scores, rtol=0, atol=1e-12)


def test_single_table_without_bits_equals_exact(rng):
    X = unit_rows(rng, 200, 6)
    idx = build_index(X, None, (1, 0, 0))
    w = rng.standard_normal(6)
    assert idx.query(w, 20, "approx") == idx.query(w, 20, "exact")


def test_approx_is_subset_rerank(rng):
    X = unit_rows(rng, 500, 4)
    idx = build_index(X, None, (4, 6, 3))
    w = rng.standard_normal(4)
    cand = idx.candidates(w)
    res = idx.query(w, 10, "approx")
    positions = {u: i for i, u in enumerate(idx.user_ids_)}
    assert all(positions[u] in set(cand.tolist()) for u in res.user_ids)
    sub_ids = [idx.user_ids_[i] for i in cand]
    assert res.user_ids == naive_topk(idx.vectors_[cand], sub_ids, w, 10)[0]


def test_vector_always_collides_with_itself(rng):
    X = unit_rows(rng, 100, 8)
    idx = build_index(X, None, (3, 10, 1))
    for i in range(100):
        assert i in idx.candidates(X[i])


def test_save_load_bitwise(tmp_path, rng):
    X = unit_rows(rng, 64, 5)
    idx = build_index(X, [f"ü{i}" for i in range(64)], (5, 7, 42))
    idx.save(tmp_path / "a.idx")
    back = RetrievalIndex.load(tmp_path / "a.idx")
    back.save(tmp_path / "b.idx")
    assert (tmp_path / "a.idx").read_bytes() == (tmp_path / "b.idx").read_bytes()
    for _ in range(10):
        w = rng.standard_normal(5)
        for mode in ("exact", "approx"):
            assert idx.query(w, 7, mode) == back.query(w, 7, mode)


def test_corrupt_files(tmp_path, rng):
    idx = build_index(unit_rows(rng, 10, 3), None, (2, 3, 0))
    path = tmp_path / "x.idx"
    idx.save(path)
    data = path.read_bytes()
    for bad in (data[: len(data) // 2], data[:10], data[:-1]):
        path.write_bytes(bad)
        with pytest.raises(CorruptIndex):
            RetrievalIndex.load(path)
    flipped = bytearray(data)
    flipped[40] ^= 1
    path.write_bytes(bytes(flipped))
    with pytest.raises(CorruptIndex, match="checksum"):
        RetrievalIndex.load(path)
    body = bytearray(data[:-8])
    struct.pack_into("<I", body, 4, 2)
    path.write_bytes(bytes(body) + struct.pack("<Q", crc64(bytes(body))))
    with pytest.raises(CorruptIndex, match="file version 2, reader supports 1"):
        RetrievalIndex.load(path)


def test_input_errors(rng):
    with pytest.raises(EmptyIndex):
        build_index(np.empty((0, 3)))
    with pytest.raises(DuplicateUser):
        build_index(unit_rows(rng, 2, 3), ["a", "a"])
    with pytest.raises(ValueError):
        build_index(np.array([[2.0, 0.0]]))
    idx = build_index(unit_rows(rng, 3, 3))
    with pytest.raises(DimensionMismatch):
        idx.query(np.ones(4))
    with pytest.raises(ValueError):
        idx.query(np.ones(3), mode="approx")


def theoretical_recall(X, w, T, B, k_out):
    """Expected recall@k from the per-pair collision probability."""
    q = w / np.linalg.norm(w)
    scores = X @ w
    top = np.argsort(-scores, kind="stable")[:k_out]
    cos = np.clip(X[top] @ q, -1, 1)
    p_table = (1 - np.arccos(cos) / math.pi) ** B
    return float(np.mean(1 - (1 - p_table) ** T))


@pytest.mark.parametrize("k", [8, 32])
def test_recall_agrees_with_collision_theory(k):
    rng = np.random.default_rng(k)
    X = unit_rows(rng, 5000, k)
    measured, predicted = [], []
    for seed in range(10):
        idx = build_index(X, None, (32, 12, seed))
        for _ in range(10):
            w = rng.standard_normal(k)
            exact = set(idx.query(w, 10).user_ids)
            approx = set(idx.query(w, 10, "approx").user_ids)
            measured.append(len(exact & approx) / 10)
            predicted.append(theoretical_recall(idx.vectors_.astype(np.float64), w, 32, 12, 10))
    assert abs(np.mean(measured) - np.mean(predicted)) < 0.06


def test_estimator_params():
    est = RetrievalIndex(n_tables=4, n_bits=3, random_state=9)
    assert est.get_params() == {"n_bits": 3, "n_tables": 4, "random_state": 9}
