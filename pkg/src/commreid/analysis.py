"""Post-hoc analyses of a trained model."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .embedding import EmbeddingMatrix, SparseWeights, embed, weights_from_ids
from .exceptions import InvalidClusterCount, MatrixMismatch, ZeroEmbedding

LINKAGES = ("average", "single", "complete")


@dataclass(frozen=True)
class DriftEntry:
    token: str
    distance: float


@dataclass(frozen=True)
class WordCluster:
    members: tuple
    medoid: str


def embedding_drift(E_final: EmbeddingMatrix, E_init: EmbeddingMatrix, top_n: int, tokens) -> list[DriftEntry]:
    """Tokens whose rows moved farthest (Euclidean) from initialization.

    Sorted by descending distance, ties by token.
    """
    if E_final.shape != E_init.shape:
        raise MatrixMismatch(f"shapes differ: {E_final.shape} vs {E_init.shape}")
    if E_final.vocab_hash != E_init.vocab_hash:
        raise MatrixMismatch("matrices are bound to different vocabularies")
    tokens = list(tokens)
    if len(tokens) != len(E_final):
        raise MatrixMismatch(f"{len(tokens)} tokens for {len(E_final)} rows")
    dist = np.linalg.norm(E_final.rows - E_init.rows, axis=1)
    order = sorted(range(len(tokens)), key=lambda i: (-dist[i], tokens[i]))
    return [DriftEntry(tokens[i], float(dist[i])) for i in order[:max(top_n, 0)]]


def write_drift_tsv(entries, path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for e in entries:
            fh.write(f"{e.token}\t{e.distance!r}\n")


def cosine_distances(rows) -> np.ndarray:
    rows = np.asarray(rows, dtype=np.float64)
    norms = np.linalg.norm(rows, axis=1)
    if np.any(norms < 1e-12):
        raise ZeroEmbedding("cosine distance undefined for a zero row")
    unit = rows / norms[:, None]
    return np.clip(1.0 - unit @ unit.T, 0.0, 2.0)


def cluster_words(rows, n_clusters: int, tokens=None, linkage="average") -> list[WordCluster]:
    """Agglomerative clustering of word vectors under cosine distance.

    Merges the closest pair of clusters until ``n_clusters`` remain; equal
    distances resolve to the pair with the smallest indices. Clusters are
    returned ordered by their lowest member index, members in input order.
    The medoid minimizes the summed distance to the other members.
    """
    if linkage not in LINKAGES:
        raise ValueError(f"linkage must be one of {LINKAGES}")
    rows = np.asarray(rows, dtype=np.float64)
    n = rows.shape[0]
    tokens = [str(i) for i in range(n)] if tokens is None else list(tokens)
    if len(tokens) != n:
        raise ValueError(f"{len(tokens)} tokens for {n} rows")
    if not 1 <= n_clusters <= n:
        raise InvalidClusterCount(f"n_clusters={n_clusters} with {n} tokens")
    base = cosine_distances(rows)
    D = base.copy()
    np.fill_diagonal(D, np.inf)
    members = [[i] for i in range(n)]
    alive = np.ones(n, dtype=bool)
    for _ in range(n - n_clusters):
        flat = int(np.argmin(D))
        i, j = divmod(flat, n)
        if i > j:
            i, j = j, i
        ni, nj = len(members[i]), len(members[j])
        if linkage == "average":
            merged = (ni * D[i] + nj * D[j]) / (ni + nj)
        elif linkage == "single":
            merged = np.minimum(D[i], D[j])
        else:
            merged = np.maximum(D[i], D[j])
        merged[~alive] = np.inf
        merged[[i, j]] = np.inf
        D[i, :] = merged
        D[:, i] = merged
        D[j, :] = np.inf
        D[:, j] = np.inf
        alive[j] = False
        members[i].extend(members[j])
        members[j] = []

    clusters = []
    for i in np.flatnonzero(alive):
        idx = sorted(members[i])
        within = base[np.ix_(idx, idx)].sum(axis=1)
        medoid = idx[int(np.argmin(within))]
        clusters.append(WordCluster(tuple(tokens[m] for m in idx), tokens[medoid]))
    return clusters


def community_similarity(communities):
    """Cosine distances between re-normalized community centroids.

    ``communities`` is a sequence of ``(name, member_vectors)``. Returns a
    dict with ``names``, the symmetric ``distances`` table and, per
    community, its ``nearest`` other community (None when alone).
    """
    names, centroids = [], []
    for name, X in communities:
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        if X.shape[0] == 0:
            raise ValueError(f"community {name!r} has no members")
        c = X.mean(axis=0)
        norm = np.linalg.norm(c)
        if not norm >= 1e-12:
            raise ZeroEmbedding(f"centroid of {name!r} has zero norm")
        names.append(name)
        centroids.append(c / norm)
    C = np.vstack(centroids)
    dist = 1.0 - C @ C.T
    dist = (dist + dist.T) / 2.0
    np.fill_diagonal(dist, 0.0)
    nearest = {}
    for i, name in enumerate(names):
        others = [j for j in range(len(names)) if j != i]
        if not others:
            nearest[name] = None
            continue
        j = min(others, key=lambda j: (dist[i, j], j))
        nearest[name] = {"community": names[j], "distance": float(dist[i, j])}
    return {"names": names, "distances": dist.tolist(), "nearest": nearest}


def top_tweets(clf, doc, vocab, E: EmbeddingMatrix, k_out: int = 10):
    """Posts of ``doc`` ranked by the classifier score of their own embedding.

    Posts without in-vocabulary tokens are skipped. Returns
    ``[(post_text, score), ...]`` in descending score order.
    """
    scored = []
    for pos, post in enumerate(doc.posts):
        w = weights_from_ids([vocab.encode_text(post)])
        try:
            u = embed(w, E)
        except ZeroEmbedding:
            continue
        scored.append((-float(clf.coef_ @ u.vector), pos, post))
    scored.sort()
    return [(post, -neg) for neg, _, post in scored[:max(k_out, 0)]]
