import itertools

import numpy as np
import pytest
from scipy.cluster.hierarchy import fcluster, linkage
from scipy.spatial.distance import squareform

from commreid.analysis import (
    cluster_words,
    community_similarity,
    cosine_distances,
    embedding_drift,
    top_tweets,
    write_drift_tsv,
)
from commreid.classifier import CommunityClassifier
from commreid.corpus import UserDocument
from commreid.embedding import EmbeddingMatrix, SparseWeights, embed
from commreid.exceptions import InvalidClusterCount, MatrixMismatch, ZeroEmbedding
from commreid.vocab import Vocabulary

from conftest import unit_rows
from oracles import naive_average_linkage


def test_drift_order_and_ties(tmp_path):
    init = EmbeddingMatrix(np.zeros((4, 2)), vocab_hash=1)
    final = EmbeddingMatrix([[3, 4], [0, 1], [0, -5], [1, 0]], vocab_hash=1)
    out = embedding_drift(final, init, 3, ["d", "c", "b", "a"])
    assert [(e.token, e.distance) for e in out] == [("b", 5.0), ("d", 5.0), ("a", 1.0)]
    write_drift_tsv(out, tmp_path / "d.tsv")
    assert (tmp_path / "d.tsv").read_text().splitlines()[0] == "b\t5.0"


def test_drift_mismatch():
    a = EmbeddingMatrix(np.zeros((3, 2)), vocab_hash=1)
    with pytest.raises(MatrixMismatch):
        embedding_drift(a, EmbeddingMatrix(np.zeros((3, 3)), vocab_hash=1), 2, "abc")
    with pytest.raises(MatrixMismatch):
        embedding_drift(a, EmbeddingMatrix(np.zeros((3, 2)), vocab_hash=2), 2, "abc")


def _two_groups(rng, sizes=(5, 6), spread=0.05):
    k = 4
    centers = np.eye(k)[:2]
    rows = np.vstack([c + spread * rng.standard_normal((n, k)) for c, n in zip(centers, sizes)])
    perm = rng.permutation(len(rows))
    labels = np.repeat([0, 1], sizes)[perm]
    return rows[perm], labels


def _partition(clusters):
    return sorted(tuple(sorted(int(t) for t in c.members)) for c in clusters)


def test_planted_partition_is_best_two_split(rng):
    for _ in range(5):
        rows, labels = _two_groups(rng)
        n = len(rows)
        D = cosine_distances(rows)
        # exhaustive: the 2-partition minimizing the larger within-cluster diameter
        best = None
        for mask in range(1, 2 ** (n - 1)):
            a = [i for i in range(n) if mask >> i & 1]
            b = [i for i in range(n) if not mask >> i & 1]
            cost = max(D[np.ix_(a, a)].max(), D[np.ix_(b, b)].max())
            if best is None or cost < best[0]:
                best = (cost, sorted([tuple(a), tuple(b)]))
        planted = sorted(tuple(np.flatnonzero(labels == g).tolist()) for g in (0, 1))
        assert best[1] == planted
        assert _partition(cluster_words(rows, 2)) == planted


def test_matches_naive_average_linkage(rng):
    for _ in range(10):
        n = int(rng.integers(3, 12))
        rows = rng.standard_normal((n, 3))
        history = naive_average_linkage(cosine_distances(rows).tolist())
        for m, expected in enumerate(history):
            got = _partition(cluster_words(rows, n - m - 1))
            assert got == expected


def test_agrees_with_scipy_average_linkage(rng):
    rows = rng.standard_normal((30, 5))
    D = cosine_distances(rows)
    Z = linkage(squareform(D, checks=False), method="average")
    for n_clusters in (2, 5, 9):
        labels = fcluster(Z, n_clusters, criterion="maxclust")
        ref = sorted(tuple(np.flatnonzero(labels == c).tolist()) for c in np.unique(labels))
        assert _partition(cluster_words(rows, n_clusters)) == ref


def test_singletons_and_medoid(rng):
    rows = unit_rows(rng, 6, 3)
    toks = list("abcdef")
    clusters = cluster_words(rows, 6, toks)
    assert [c.members for c in clusters] == [(t,) for t in toks]
    assert [c.medoid for c in clusters] == toks
    one = cluster_words(np.array([[1, 0], [1, 0.1], [1, -0.1]]), 1, ["x", "y", "z"])
    assert one[0].medoid == "x"
    assert cluster_words(rows, 2, toks) == cluster_words(rows, 2, toks)
    with pytest.raises(InvalidClusterCount):
        cluster_words(rows, 7)


def test_duplicate_community_is_nearest():
    X = np.array([[1.0, 0, 0], [0.8, 0.6, 0]])
    out = community_similarity([("a", X), ("b", X.copy()), ("c", np.array([[0, 0, 1.0]]))])
    assert out["nearest"]["a"]["community"] == "b" and out["nearest"]["b"]["community"] == "a"
    assert abs(out["distances"][0][1]) < 1e-15


def test_single_member_centroid():
    u = np.array([[0.6, 0.8]])
    out = community_similarity([("a", u), ("b", np.array([[1.0, 0.0]]))])
    assert out["distances"][0][1] == pytest.approx(1 - 0.6, abs=1e-15)
    assert community_similarity([("solo", u)])["nearest"]["solo"] is None


def test_shared_topic_communities_are_mutually_nearest(rng):
    k = 16
    topic_a, topic_b = unit_rows(rng, 2, k)

    def members(topic, n):
        X = 0.5 * unit_rows(rng, n, k) + topic
        return X / np.linalg.norm(X, axis=1, keepdims=True)

    comms = [("s1", members(topic_a, 8)), ("s2", members(topic_a, 10)), ("o", members(topic_b, 9))]
    out = community_similarity(comms)
    D = np.array(out["distances"])
    assert D[0, 1] < D[0, 2] and D[0, 1] < D[1, 2]
    assert out["nearest"]["s1"]["community"] == "s2" and out["nearest"]["s2"]["community"] == "s1"


def test_zero_centroid():
    with pytest.raises(ZeroEmbedding):
        community_similarity([("a", np.array([[1.0, 0], [-1.0, 0]]))])


@pytest.fixture
def tweet_setup():
    vocab = Vocabulary(["good", "bad", "meh"], [3, 2, 1], (), 6)
    E = EmbeddingMatrix([[1.0, 0.0], [-1.0, 0.0], [0.0, 1.0]])
    clf = CommunityClassifier.from_dict({"k": 2, "lambda": 1.0, "b": 5.0, "w": [2.0, 0.5]})
    return vocab, E, clf


def test_top_tweets_order_and_oov(tweet_setup):
    vocab, E, clf = tweet_setup
    doc = UserDocument("u", ("bad bad", "good", "zzz qqq", "meh", "good meh"))
    out = top_tweets(clf, doc, vocab, E, 10)
    assert [p for p, _ in out] == ["good", "good meh", "meh", "bad bad"]
    assert out[0][1] == 2.0
    assert len(top_tweets(clf, doc, vocab, E, 2)) == 2


def test_top_tweets_single_post(tweet_setup):
    vocab, E, clf = tweet_setup
    out = top_tweets(clf, UserDocument("u", ("good meh",)), vocab, E)
    u = embed(SparseWeights(np.array([0, 2]), np.log(np.array([2.0, 2.0]))), E).vector
    assert out == [("good meh", pytest.approx(float(clf.coef_ @ u), abs=1e-15))]
