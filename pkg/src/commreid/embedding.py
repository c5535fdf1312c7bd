"""Bag-of-words user embeddings: ``u = normalize(w @ E)``."""

from __future__ import annotations

import struct
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .exceptions import CorruptFile, DimensionMismatch, ZeroEmbedding

ZERO_NORM = 1e-12

_MAGIC = b"UEMB"
_VERSION = 1
_HEADER = struct.Struct("<4sIQIQ")


@dataclass(frozen=True)
class SparseWeights:
    """Log-scaled counts over strictly increasing token ids."""

    ids: np.ndarray
    weights: np.ndarray
    owner: str = ""

    def __len__(self):
        return len(self.ids)

    def scaled(self, alpha: float) -> "SparseWeights":
        return SparseWeights(self.ids, self.weights * alpha, self.owner)


def weights_from_ids(id_arrays: Iterable[np.ndarray], base=None, owner="") -> SparseWeights:
    """Count ids across all given posts and log-scale the counts."""
    arrays = [np.asarray(a, dtype=np.int64) for a in id_arrays]
    flat = np.concatenate(arrays) if arrays else np.empty(0, dtype=np.int64)
    ids, counts = np.unique(flat, return_counts=True)
    w = np.log1p(counts.astype(np.float64))
    if base is not None:
        w = w / np.log(base)
    return SparseWeights(ids, w, owner)


def bag_of_words(token_lists: Iterable[Sequence[str]], vocab, base=None, owner="") -> SparseWeights:
    """Log-scaled word counts ``log(c + 1)`` over every supplied post.

    ``token_lists`` must already carry the vocabulary's bigram joins.
    Out-of-vocabulary tokens are dropped. ``base`` selects the logarithm
    (natural by default); it only rescales the weights.
    """
    return weights_from_ids((vocab.encode(t) for t in token_lists), base, owner)


@dataclass(frozen=True)
class UserEmbedding:
    vector: np.ndarray
    user_id: str = ""


def project(w: SparseWeights, rows: np.ndarray) -> np.ndarray:
    """Unnormalized projection ``w @ E`` restricted to the nonzero ids."""
    return w.weights @ rows[w.ids]


def normalize(s: np.ndarray) -> np.ndarray:
    norm = np.linalg.norm(s)
    if not norm >= ZERO_NORM:
        raise ZeroEmbedding(f"projection norm {norm:.3g} below {ZERO_NORM}")
    return s / norm


def embed(w: SparseWeights, E) -> UserEmbedding:
    """Unit-normalized projection of the weights through ``E``."""
    rows = E.rows if isinstance(E, EmbeddingMatrix) else np.asarray(E, dtype=np.float64)
    if len(w) == 0:
        raise ZeroEmbedding(f"empty bag of words for {w.owner or 'user'}")
    if w.ids[-1] >= rows.shape[0] or w.ids[0] < 0:
        raise DimensionMismatch("token id outside the embedding matrix")
    return UserEmbedding(normalize(project(w, rows)), w.owner)


class EmbeddingMatrix:
    """``|V| x k`` word embedding table bound to a vocabulary fingerprint."""

    def __init__(self, rows, vocab_hash: int = 0):
        rows = np.array(rows, dtype=np.float64)
        if rows.ndim != 2:
            raise DimensionMismatch("embedding matrix must be 2-D")
        if not np.all(np.isfinite(rows)):
            raise ValueError("embedding matrix has non-finite entries")
        self.rows = rows
        self.vocab_hash = int(vocab_hash)

    @property
    def shape(self):
        return self.rows.shape

    @property
    def k(self) -> int:
        return self.rows.shape[1]

    def __len__(self):
        return self.rows.shape[0]

    def copy(self) -> "EmbeddingMatrix":
        return EmbeddingMatrix(self.rows.copy(), self.vocab_hash)

    @classmethod
    def random(cls, n_rows: int, k: int, rng, vocab_hash: int = 0) -> "EmbeddingMatrix":
        """I.i.d. N(0, 1/k) entries."""
        rng = np.random.default_rng(rng)
        return cls(rng.standard_normal((n_rows, k)) / np.sqrt(k), vocab_hash)

    def save(self, path) -> None:
        n, k = self.rows.shape
        with open(path, "wb") as fh:
            fh.write(_HEADER.pack(_MAGIC, _VERSION, n, k, self.vocab_hash))
            fh.write(self.rows.astype("<f4").tobytes())

    @classmethod
    def load(cls, path) -> "EmbeddingMatrix":
        with open(path, "rb") as fh:
            data = fh.read()
        if len(data) < _HEADER.size:
            raise CorruptFile(f"{path}: truncated header")
        magic, version, n, k, vocab_hash = _HEADER.unpack_from(data)
        if magic != _MAGIC:
            raise CorruptFile(f"{path}: bad magic {magic!r}")
        if version != _VERSION:
            raise CorruptFile(f"{path}: version {version}, expected {_VERSION}")
        expected = _HEADER.size + 4 * n * k
        if len(data) != expected:
            raise CorruptFile(f"{path}: {len(data)} bytes, expected {expected}")
        rows = np.frombuffer(data, dtype="<f4", offset=_HEADER.size).reshape(n, k)
        return cls(rows.astype(np.float64), vocab_hash)


def embed_users(docs, vocab, E: EmbeddingMatrix, max_posts=None):
    """Embed many users at once.

    Returns ``(user_ids, X, skipped)`` where ``X`` stacks the unit vectors
    and ``skipped`` lists users whose bag of words projects to zero. When
    ``max_posts`` is set only the first ``max_posts`` posts are used (posts
    are stored most recent first).
    """
    ids, vectors, skipped = [], [], []
    for doc in docs:
        posts = doc.posts if max_posts is None else doc.posts[:max_posts]
        w = weights_from_ids((vocab.encode_text(p) for p in posts), owner=doc.user_id)
        try:
            u = embed(w, E)
        except ZeroEmbedding:
            skipped.append(doc.user_id)
            continue
        ids.append(doc.user_id)
        vectors.append(u.vector)
    X = np.vstack(vectors) if vectors else np.empty((0, E.k))
    return ids, X, skipped
