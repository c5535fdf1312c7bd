"""Leave-one-out community evaluation: 1/MRR and single-positive AUC."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field

import numpy as np

from .classifier import CommunityClassifier
from .exceptions import EmptyInput, MemberMissing


@dataclass
class CommunitySpec:
    name: str
    member_ids: list

    def __post_init__(self):
        self.member_ids = [str(m) for m in self.member_ids]
        if len(self.member_ids) < 2:
            raise ValueError(f"community {self.name!r} needs at least 2 members")
        if len(set(self.member_ids)) != len(self.member_ids):
            raise ValueError(f"community {self.name!r} lists a member twice")

    @classmethod
    def load(cls, path) -> "CommunitySpec":
        with open(path, encoding="utf-8") as fh:
            d = json.load(fh)
        return cls(d["name"], d["members"])

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump({"name": self.name, "members": self.member_ids}, fh, ensure_ascii=False)
            fh.write("\n")


@dataclass
class Fold:
    held_out: str
    rank: int
    fold_auc: float


@dataclass
class EvalReport:
    community: str
    folds: list = field(default_factory=list)
    mrr: float = 0.0
    inv_mrr: float = 0.0
    mean_auc: float = 0.0

    def to_dict(self) -> dict:
        return asdict(self)


class EmbeddingTable:
    """User id -> unit vector lookup backed by one matrix."""

    def __init__(self, user_ids, X):
        self.user_ids = [str(u) for u in user_ids]
        self.X = np.asarray(X, dtype=np.float64)
        self.index = {u: i for i, u in enumerate(self.user_ids)}
        if len(self.index) != len(self.user_ids):
            raise ValueError("duplicate user id in embedding table")

    def __contains__(self, user_id):
        return user_id in self.index

    def rows(self, user_ids) -> np.ndarray:
        try:
            return self.X[[self.index[u] for u in user_ids]]
        except KeyError as exc:
            raise MemberMissing(exc.args[0]) from None


def fold_auc(pos_score: float, neg_scores) -> float:
    """Fraction of negatives scored below the positive, ties counting half."""
    neg = np.asarray(neg_scores, dtype=np.float64)
    if neg.size == 0:
        raise EmptyInput("fold_auc needs at least one negative score")
    below = np.count_nonzero(neg < pos_score)
    ties = np.count_nonzero(neg == pos_score)
    return (below + 0.5 * ties) / neg.size


def mrr_stats(ranks):
    """``(mean(1/rank), 1/mean(1/rank))``.

    >>> mrr_stats([1, 2, 4])
    (0.5833333333333334, 1.7142857142857142)
    """
    ranks = list(ranks)
    if not ranks:
        raise EmptyInput("mrr_stats needs at least one rank")
    if any(r < 1 for r in ranks):
        raise ValueError("ranks start at 1")
    mrr = sum(1.0 / r for r in ranks) / len(ranks)
    return mrr, 1.0 / mrr


def held_out_rank(pos_score, pos_id, pool_scores, pool_ids) -> int:
    """1 + pool users scored strictly higher + tied users with a smaller id."""
    pool_scores = np.asarray(pool_scores, dtype=np.float64)
    higher = int(np.count_nonzero(pool_scores > pos_score))
    tied = np.flatnonzero(pool_scores == pos_score)
    return 1 + higher + sum(1 for i in tied if pool_ids[i] < pos_id)


def leave_one_out(community: CommunitySpec, table: EmbeddingTable, neg_train_ids, test_ids, lam=1.0) -> EvalReport:
    """Train one classifier per held-out member and rank it against the test pool.

    Each fold trains on the other ``N - 1`` members against every user in
    ``neg_train_ids``, then ranks the held-out member among ``test_ids`` by
    ``w.u``. Members must not appear in either pool.
    """
    members = community.member_ids
    member_set = set(members)
    neg_train_ids = list(neg_train_ids)
    test_ids = list(test_ids)
    overlap = member_set.intersection(neg_train_ids) | member_set.intersection(test_ids)
    if overlap:
        raise ValueError(f"community members found in evaluation pools: {sorted(overlap)[:5]}")
    if not test_ids:
        raise EmptyInput("empty test pool")
    pos = table.rows(members)
    neg = table.rows(neg_train_ids)
    pool = table.rows(test_ids)

    folds = []
    for i, held_out in enumerate(members):
        keep = np.arange(len(members)) != i
        X = np.vstack([pos[keep], neg])
        y = np.concatenate([np.ones(keep.sum()), np.zeros(len(neg))])
        clf = CommunityClassifier(lam=lam).fit(X, y)
        pool_scores = clf.rank_scores(pool)
        s = float(clf.rank_scores(pos[i:i + 1])[0])
        folds.append(Fold(held_out, held_out_rank(s, held_out, pool_scores, test_ids), fold_auc(s, pool_scores)))

    mrr, inv = mrr_stats([f.rank for f in folds])
    return EvalReport(
        community.name,
        folds,
        mrr,
        inv,
        float(np.mean([f.fold_auc for f in folds])),
    )
