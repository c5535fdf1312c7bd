"""Person re-identification training of the word embedding matrix.

Two bags of posts from the same user should embed closer together than a
bag from a different user. Training minimizes the triplet hinge

    cost(a, p, n) = max(0, 1 + d(a, p) - d(a, n)),   d(x, y) = 1 - x.y

over randomly sampled triplets with plain mini-batch SGD on ``E``.
"""

from __future__ import annotations

import logging
import math
import time
from dataclasses import asdict, dataclass, field

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from .corpus import Corpus
from .embedding import (
    EmbeddingMatrix,
    SparseWeights,
    UserEmbedding,
    embed,
    embed_users,
    weights_from_ids,
    ZERO_NORM,
)
from .exceptions import (
    InitMismatch,
    InsufficientCorpus,
    MalformedLine,
    TrainingDiverged,
    ZeroEmbedding,
)
from .vocab import Vocabulary, build_vocabulary

log = logging.getLogger(__name__)

MARGIN = 1.0
MIN_POSTS = 4


def _vec(u):
    return u.vector if isinstance(u, UserEmbedding) else np.asarray(u, dtype=np.float64)


def cosine_distance(u, v) -> float:
    """``1 - u.v`` for unit vectors; lies in [0, 2]."""
    return 1.0 - float(_vec(u) @ _vec(v))


def triplet_cost(a, p, n) -> float:
    return max(0.0, MARGIN + cosine_distance(a, p) - cosine_distance(a, n))


@dataclass(frozen=True)
class Triplet:
    anchor: SparseWeights
    positive: SparseWeights
    negative: SparseWeights
    anchor_user: str = ""
    negative_user: str = ""
    anchor_posts: np.ndarray | None = None
    positive_posts: np.ndarray | None = None
    negative_posts: np.ndarray | None = None

    @property
    def members(self):
        return self.anchor, self.positive, self.negative


@dataclass
class SparseGradient:
    """Gradient rows of ``E``; ``rows`` strictly increasing."""

    rows: np.ndarray
    values: np.ndarray
    cost: float = 0.0

    def to_dense(self, shape) -> np.ndarray:
        out = np.zeros(shape)
        out[self.rows] = self.values
        return out


def _forward(w: SparseWeights, rows: np.ndarray):
    if len(w) == 0:
        raise ZeroEmbedding(f"empty bag of words for {w.owner or 'triplet member'}")
    s = w.weights @ rows[w.ids]
    norm = np.linalg.norm(s)
    if not norm >= ZERO_NORM:
        raise ZeroEmbedding(f"projection norm {norm:.3g} below {ZERO_NORM}")
    return s, norm, s / norm


def triplet_projection_grads(triplet: Triplet, E):
    """Cost plus, per member, ``(s, dcost/ds)`` for the projection ``s = w @ E``.

    The gradient with respect to ``s`` is ``(I - u u^T) g / |s|`` where ``g``
    is the gradient with respect to the unit vector ``u``. Inactive hinges
    (cost <= 0) yield zero gradients.
    """
    rows = E.rows if isinstance(E, EmbeddingMatrix) else E
    (sa, na, ua), (sp, np_, up), (sn, nn, un) = (_forward(m, rows) for m in triplet.members)
    cost = MARGIN - ua @ up + ua @ un
    if cost <= 0.0:
        zero = np.zeros_like(sa)
        return 0.0, [(sa, zero), (sp, zero), (sn, zero.copy())]
    out = []
    for s, norm, u, g in ((sa, na, ua, un - up), (sp, np_, up, -ua), (sn, nn, un, ua)):
        out.append((s, (g - u * (u @ g)) / norm))
    return float(cost), out


def triplet_gradient(triplet: Triplet, E) -> SparseGradient:
    """Exact (sub)gradient of the triplet cost with respect to ``E``.

    Only rows of tokens present in the triplet are returned; the hinge's
    flat region (including the kink at zero) gives an empty gradient.
    """
    rows_E = E.rows if isinstance(E, EmbeddingMatrix) else E
    k = rows_E.shape[1]
    cost, terms = triplet_projection_grads(triplet, rows_E)
    if cost <= 0.0:
        return SparseGradient(np.empty(0, dtype=np.int64), np.empty((0, k)), 0.0)
    ids = np.concatenate([m.ids for m in triplet.members])
    vals = np.concatenate(
        [m.weights[:, None] * g[None, :] for m, (_, g) in zip(triplet.members, terms)]
    )
    rows, inverse = np.unique(ids, return_inverse=True)
    acc = np.zeros((len(rows), k))
    np.add.at(acc, inverse, vals)
    return SparseGradient(rows, acc, cost)


class TripletSampler:
    """Draws (anchor, positive, negative) post bags from encoded users.

    Users with fewer than four posts are never sampled. Anchor and positive
    bags hold ``min(S, T // 2)`` disjoint posts of a user with ``T`` posts;
    the negative bag holds ``min(S, T2)`` posts of a different user.
    """

    def __init__(self, user_ids, encoded_posts, sample_size: int = 50):
        if sample_size < 1:
            raise ValueError("sample_size must be >= 1")
        self.sample_size = sample_size
        self.user_ids = []
        self.posts = []
        for uid, posts in zip(user_ids, encoded_posts):
            if len(posts) >= MIN_POSTS:
                self.user_ids.append(uid)
                self.posts.append(list(posts))
        if len(self.user_ids) < 2:
            raise InsufficientCorpus(
                f"need at least 2 users with >= {MIN_POSTS} posts, "
                f"found {len(self.user_ids)}"
            )

    @classmethod
    def from_corpus(cls, corpus, vocab: Vocabulary, sample_size: int = 50):
        docs = list(corpus)
        return cls(
            [d.user_id for d in docs],
            [vocab.encode_document(d) for d in docs],
            sample_size,
        )

    def __len__(self):
        return len(self.user_ids)

    def _bag(self, user: int, picks) -> SparseWeights:
        posts = self.posts[user]
        return weights_from_ids((posts[i] for i in picks), owner=self.user_ids[user])

    def sample(self, rng) -> Triplet:
        n = len(self.user_ids)
        p1 = int(rng.integers(n))
        p2 = int(rng.integers(n - 1))
        if p2 >= p1:
            p2 += 1
        T1, T2 = len(self.posts[p1]), len(self.posts[p2])
        m = min(self.sample_size, T1 // 2)
        first = rng.choice(T1, size=2 * m, replace=False)
        neg = rng.choice(T2, size=min(self.sample_size, T2), replace=False)
        a_idx, p_idx = first[:m], first[m:]
        return Triplet(
            self._bag(p1, a_idx),
            self._bag(p1, p_idx),
            self._bag(p2, neg),
            self.user_ids[p1],
            self.user_ids[p2],
            a_idx,
            p_idx,
            neg,
        )


def sample_triplet(corpus, S: int, rng, vocab: Vocabulary) -> Triplet:
    """Sample one triplet; see :class:`TripletSampler` for repeated draws."""
    return TripletSampler.from_corpus(corpus, vocab, S).sample(np.random.default_rng(rng))


@dataclass
class TrainConfig:
    dim: int = 128
    sample_size: int = 50
    steps: int = 200_000
    batch_size: int = 32
    learning_rate: float = 0.05
    seed: int = 0
    init: str = "random"
    epoch_size: int = 10_000

    def __post_init__(self):
        if self.sample_size < 1:
            raise ValueError("sample_size must be >= 1")
        if self.learning_rate < 0:
            raise ValueError("learning_rate must be >= 0")
        if self.batch_size < 1 or self.epoch_size < 1 or self.dim < 1:
            raise ValueError("batch_size, epoch_size and dim must be >= 1")
        if self.steps < 0:
            raise ValueError("steps must be >= 0")


@dataclass
class TrainingReport:
    epoch_costs: list = field(default_factory=list)
    active_fractions: list = field(default_factory=list)
    skipped_triplets: int = 0
    wall_time: float = 0.0

    @property
    def n_epochs(self) -> int:
        return len(self.epoch_costs)

    def to_dict(self, include_time=True) -> dict:
        d = asdict(self)
        if not include_time:
            d.pop("wall_time")
        return d


def load_pretrained(path, vocab: Vocabulary, k: int, rng) -> EmbeddingMatrix:
    """Initialize ``E`` from a word2vec-style text file.

    Rows of tokens found in both the file and ``vocab`` are copied; every
    other row keeps its N(0, 1/k) random draw. File tokens missing from the
    vocabulary are ignored.
    """
    E = EmbeddingMatrix.random(len(vocab), k, rng, vocab.fingerprint())
    with open(path, encoding="utf-8") as fh:
        header = fh.readline().split()
        if len(header) != 2:
            raise MalformedLine(1, "header must be '<row_count> <dim>'", path)
        try:
            n_rows, dim = int(header[0]), int(header[1])
        except ValueError:
            raise MalformedLine(1, "header must hold two integers", path) from None
        if dim != k:
            raise InitMismatch(f"pretrained vectors have dimension {dim}, expected {k}")
        seen = 0
        for lineno, line in enumerate(fh, start=2):
            parts = line.rstrip("\n").split(" ")
            if not line.strip():
                continue
            if len(parts) != dim + 1:
                raise MalformedLine(lineno, f"expected {dim} values", path)
            seen += 1
            idx = vocab.index.get(parts[0])
            if idx is None:
                continue
            try:
                E.rows[idx] = [float(x) for x in parts[1:]]
            except ValueError:
                raise MalformedLine(lineno, "non-numeric vector entry", path) from None
    if seen != n_rows:
        raise MalformedLine(1, f"header announces {n_rows} rows, found {seen}", path)
    if not np.all(np.isfinite(E.rows)):
        raise InitMismatch("pretrained vectors contain non-finite values")
    return E


def _streams(seed):
    """Independent generators for initialization and triplet sampling."""
    init_seq, sample_seq = np.random.SeedSequence(seed).spawn(2)
    return np.random.default_rng(init_seq), np.random.default_rng(sample_seq)


def initial_matrix(cfg: TrainConfig, vocab: Vocabulary, rng=None) -> EmbeddingMatrix:
    """Starting ``E`` for ``cfg``; ``rng`` defaults to the seed's init stream."""
    if rng is None:
        rng = _streams(cfg.seed)[0]
    if cfg.init == "random":
        return EmbeddingMatrix.random(len(vocab), cfg.dim, rng, vocab.fingerprint())
    return load_pretrained(cfg.init, vocab, cfg.dim, rng)


def train_reid(corpus, cfg: TrainConfig, vocab: Vocabulary, init: EmbeddingMatrix | None = None):
    """Fit ``E`` on the ``embed-train`` users of ``corpus``.

    Returns ``(E, report)``. ``init`` overrides ``cfg.init`` when given (it
    is copied, not modified). Deterministic for a fixed ``cfg.seed``.
    Triplets containing an all-OOV bag are skipped and counted in the
    report; they still consume a step.
    """
    if isinstance(corpus, Corpus):
        docs = [d for d in corpus if d.split == "embed-train"]
    else:
        docs = list(corpus)
    init_rng, rng = _streams(cfg.seed)
    E = initial_matrix(cfg, vocab, init_rng) if init is None else init.copy()
    if E.shape != (len(vocab), cfg.dim):
        raise InitMismatch(f"initial matrix has shape {E.shape}, expected {(len(vocab), cfg.dim)}")
    sampler = TripletSampler.from_corpus(docs, vocab, cfg.sample_size)
    rows = E.rows

    n_epochs = math.ceil(cfg.steps / cfg.epoch_size)
    cost_sum = np.zeros(n_epochs)
    active = np.zeros(n_epochs)
    valid = np.zeros(n_epochs)
    report = TrainingReport()
    start = time.perf_counter()
    done = 0
    while done < cfg.steps:
        b = min(cfg.batch_size, cfg.steps - done)
        grads = []
        for j in range(b):
            epoch = (done + j) // cfg.epoch_size
            try:
                g = triplet_gradient(sampler.sample(rng), rows)
            except ZeroEmbedding:
                report.skipped_triplets += 1
                continue
            valid[epoch] += 1
            cost_sum[epoch] += g.cost
            if g.cost > 0.0:
                active[epoch] += 1
                grads.append(g)
        if grads and cfg.learning_rate > 0:
            step = cfg.learning_rate / b
            for g in grads:
                rows[g.rows] -= step * g.values
        prev_epoch = done // cfg.epoch_size
        done += b
        if done // cfg.epoch_size != prev_epoch or done == cfg.steps:
            if not np.all(np.isfinite(rows)):
                raise TrainingDiverged(f"non-finite entries in E after {done} triplets")
            e = prev_epoch
            log.info(
                "epoch %d: mean cost %.4f, active %.3f",
                e, cost_sum[e] / max(valid[e], 1), active[e] / max(valid[e], 1),
            )
    with np.errstate(invalid="ignore", divide="ignore"):
        report.epoch_costs = (cost_sum / valid).tolist()
        report.active_fractions = (active / valid).tolist()
    report.wall_time = time.perf_counter() - start
    return E, report


class ReidEmbedder(TransformerMixin, BaseEstimator):
    """Learns ``E`` by re-identification and maps users to unit vectors.

    ``fit`` takes user documents (a :class:`Corpus` contributes only its
    ``embed-train`` users). ``vocabulary`` may be a prebuilt
    :class:`Vocabulary`; when None one is built from the training users with
    ``min_count``. ``transform`` returns an ``(n_users, dim)`` array.
    """

    def __init__(
        self,
        dim=128,
        sample_size=50,
        steps=200_000,
        batch_size=32,
        learning_rate=0.05,
        epoch_size=10_000,
        init="random",
        vocabulary=None,
        min_count=20,
        max_posts=None,
        random_state=0,
    ):
        self.dim = dim
        self.sample_size = sample_size
        self.steps = steps
        self.batch_size = batch_size
        self.learning_rate = learning_rate
        self.epoch_size = epoch_size
        self.init = init
        self.vocabulary = vocabulary
        self.min_count = min_count
        self.max_posts = max_posts
        self.random_state = random_state

    def _config(self) -> TrainConfig:
        return TrainConfig(
            dim=self.dim,
            sample_size=self.sample_size,
            steps=self.steps,
            batch_size=self.batch_size,
            learning_rate=self.learning_rate,
            seed=self.random_state,
            init=self.init,
            epoch_size=self.epoch_size,
        )

    def fit(self, X, y=None):
        if isinstance(X, Corpus):
            docs = [d for d in X if d.split == "embed-train"]
        else:
            docs = list(X)
        vocab = self.vocabulary
        if vocab is None:
            vocab = build_vocabulary(docs, min_count=self.min_count)
        cfg = self._config()
        init = initial_matrix(cfg, vocab)
        self.initial_matrix_ = init
        self.vocabulary_ = vocab
        self.embedding_matrix_, self.report_ = train_reid(docs, cfg, vocab, init=init)
        return self

    def transform(self, X):
        check_is_fitted(self, "embedding_matrix_")
        docs = list(X)
        ids, vectors, skipped = embed_users(
            docs, self.vocabulary_, self.embedding_matrix_, self.max_posts
        )
        if skipped:
            raise ZeroEmbedding(f"users with no in-vocabulary tokens: {skipped[:5]}")
        return vectors

    def embed_weights(self, w: SparseWeights) -> UserEmbedding:
        check_is_fitted(self, "embedding_matrix_")
        return embed(w, self.embedding_matrix_)
