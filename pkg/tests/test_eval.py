import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from commreid.eval import (
    CommunitySpec,
    EmbeddingTable,
    fold_auc,
    held_out_rank,
    leave_one_out,
    mrr_stats,
)
from commreid.exceptions import EmptyInput, MemberMissing

from conftest import unit_rows
from oracles import naive_leave_one_out


def test_fold_auc_examples():
    assert fold_auc(0.9, [0.1, 0.2, 0.3]) == 1.0
    assert fold_auc(0.0, [0.1, 0.2, 0.3]) == 0.0
    assert fold_auc(0.2, [0.1, 0.2, 0.3]) == 0.5
    with pytest.raises(EmptyInput):
        fold_auc(0.1, [])


def test_mrr_examples():
    assert mrr_stats([1, 1, 1]) == (1.0, 1.0)
    mrr, inv = mrr_stats([1, 2, 4])
    assert abs(mrr - 7 / 12) < 1e-12 and abs(inv - 12 / 7) < 1e-12
    assert abs(inv - 1.7143) < 1e-4
    assert mrr_stats([10]) == (0.1, 10.0)
    with pytest.raises(EmptyInput):
        mrr_stats([])


@given(st.lists(st.integers(1, 1000), min_size=1, max_size=50))
def test_inv_mrr_at_least_one(ranks):
    mrr, inv = mrr_stats(ranks)
    assert 0 < mrr <= 1 and inv >= 1 - 1e-12
    assert abs(mrr * inv - 1) < 1e-12


def test_rank_formula():
    assert held_out_rank(0.5, "m", [0.9, 0.5, 0.5, 0.1], ["a", "b", "z", "c"]) == 3
    assert held_out_rank(1.0, "m", [0.0], ["a"]) == 1


def _world(rng, n_members=6, n_neg=40, n_test=50, k=5):
    ids = [f"m{i}" for i in range(n_members)] + [f"n{i:02d}" for i in range(n_neg)] + [f"t{i:02d}" for i in range(n_test)]
    X = unit_rows(rng, len(ids), k)
    X[:n_members] += 0.8 * np.eye(k)[0]
    X /= np.linalg.norm(X, axis=1, keepdims=True)
    table = EmbeddingTable(ids, X)
    spec = CommunitySpec("c", ids[:n_members])
    return table, spec, ids[n_members:n_members + n_neg], ids[n_members + n_neg:]


def test_one_fold_per_member(rng):
    table, spec, neg, test = _world(rng)
    report = leave_one_out(spec, table, neg, test)
    assert [f.held_out for f in report.folds] == spec.member_ids
    assert all(1 <= f.rank <= len(test) + 1 for f in report.folds)


def test_held_out_member_never_trains(rng, monkeypatch):
    table, spec, neg, test = _world(rng)
    import commreid.eval as ev

    seen = []
    real = ev.CommunityClassifier.fit

    def spy(self, X, y):
        seen.append({tuple(np.round(r, 12)) for r in X[y == 1]})
        return real(self, X, y)

    monkeypatch.setattr(ev.CommunityClassifier, "fit", spy)
    leave_one_out(spec, table, neg, test)
    for member, positives in zip(spec.member_ids, seen):
        assert tuple(np.round(table.rows([member])[0], 12)) not in positives
        assert len(positives) == len(spec.member_ids) - 1


def test_matches_naive_protocol(rng):
    for _ in range(3):
        table, spec, neg, test = _world(rng, n_members=int(rng.integers(2, 7)))
        report = leave_one_out(spec, table, neg, test, lam=0.5)
        vectors = {u: table.X[table.index[u]] for u in table.user_ids}
        ranks, aucs, inv, auc = naive_leave_one_out(spec.member_ids, vectors, neg, test, 0.5)
        assert [f.rank for f in report.folds] == ranks
        assert abs(report.inv_mrr - inv) < 1e-9
        assert abs(report.mean_auc - auc) < 1e-9


def test_random_embeddings_score_chance():
    aucs = []
    for seed in range(20):
        rng = np.random.default_rng(seed)
        ids = [f"u{i:03d}" for i in range(206)]
        table = EmbeddingTable(ids, unit_rows(rng, 206, 8))
        spec = CommunitySpec("r", ids[:6])
        aucs.append(leave_one_out(spec, table, ids[6:106], ids[106:]).mean_auc)
    assert abs(np.mean(aucs) - 0.5) < 0.05


def test_pool_validation(rng):
    table, spec, neg, test = _world(rng)
    with pytest.raises(ValueError):
        leave_one_out(spec, table, neg + [spec.member_ids[0]], test)
    with pytest.raises(MemberMissing):
        leave_one_out(CommunitySpec("x", ["m0", "ghost"]), table, neg, test)
    with pytest.raises(ValueError):
        CommunitySpec("x", ["only"])


def test_spec_round_trip(tmp_path):
    spec = CommunitySpec("éq", ["a", "b"])
    spec.save(tmp_path / "s.json")
    assert CommunitySpec.load(tmp_path / "s.json") == spec
