"""Token vocabulary with PMI-selected bigrams."""

from __future__ import annotations

import hashlib
from collections import Counter
from typing import Iterable, Sequence

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from .corpus import UserDocument, apply_bigrams, tokenize
from .exceptions import CorruptFile, EmptyCorpus


def score_bigram(count_ab, count_a, count_b, N, delta):
    """Scaled PMI collocation score ``(count_ab - delta) * N / (count_a * count_b)``.

    >>> score_bigram(2, 2, 2, 5, 0)
    2.5
    """
    return (count_ab - delta) * N / (count_a * count_b)


class Vocabulary:
    """Token -> (id, count) map plus the accepted bigrams.

    Ids are dense, assigned by descending count then ascending token.
    """

    def __init__(self, tokens: Sequence[str], counts, accepted_bigrams=(), total_tokens=0):
        self.tokens = list(tokens)
        self.counts = np.asarray(counts, dtype=np.int64)
        if len(self.tokens) != len(self.counts):
            raise ValueError("tokens and counts differ in length")
        self.index = {t: i for i, t in enumerate(self.tokens)}
        if len(self.index) != len(self.tokens):
            raise ValueError("duplicate token in vocabulary")
        self.accepted_bigrams = frozenset(accepted_bigrams)
        self.total_tokens = int(total_tokens)

    def __len__(self):
        return len(self.tokens)

    def __contains__(self, token):
        return token in self.index

    def __eq__(self, other):
        if not isinstance(other, Vocabulary):
            return NotImplemented
        return (
            self.tokens == other.tokens
            and np.array_equal(self.counts, other.counts)
            and self.accepted_bigrams == other.accepted_bigrams
            and self.total_tokens == other.total_tokens
        )

    def count(self, token) -> int:
        i = self.index.get(token)
        return 0 if i is None else int(self.counts[i])

    def encode(self, tokens: Iterable[str]) -> np.ndarray:
        """Ids of in-vocabulary tokens; OOV tokens are dropped."""
        index = self.index
        return np.fromiter((index[t] for t in tokens if t in index), dtype=np.int64)

    def encode_text(self, text: str) -> np.ndarray:
        return self.encode(apply_bigrams(tokenize(text), self.accepted_bigrams))

    def encode_document(self, doc: UserDocument) -> list[np.ndarray]:
        """One id array per post."""
        return [self.encode_text(p) for p in doc.posts]

    def fingerprint(self) -> int:
        """64-bit checksum of the id -> token assignment."""
        h = hashlib.sha256("\n".join(self.tokens).encode("utf-8")).digest()
        return int.from_bytes(h[:8], "little")

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(f"#total_tokens={self.total_tokens}\n")
            for i, (tok, c) in enumerate(zip(self.tokens, self.counts)):
                fh.write(f"{tok}\t{i}\t{int(c)}\n")

    @classmethod
    def load(cls, path) -> "Vocabulary":
        """Read the TSV format written by :meth:`save`.

        Every row containing ``_`` is treated as an accepted bigram, so a
        unigram such as ``@some_user`` is re-joined from its halves if they
        ever occur split; the joined token is the vocabulary entry either way.
        """
        with open(path, encoding="utf-8") as fh:
            header = fh.readline().rstrip("\n")
            if not header.startswith("#total_tokens="):
                raise CorruptFile(f"{path}: missing #total_tokens header")
            try:
                total = int(header.split("=", 1)[1])
            except ValueError:
                raise CorruptFile(f"{path}: bad header {header!r}") from None
            tokens, counts = [], []
            for lineno, line in enumerate(fh, start=2):
                parts = line.rstrip("\n").split("\t")
                if len(parts) != 3:
                    raise CorruptFile(f"{path}:{lineno}: expected 3 columns")
                tok, idx, c = parts
                if int(idx) != len(tokens):
                    raise CorruptFile(f"{path}:{lineno}: ids must be dense and ordered")
                tokens.append(tok)
                counts.append(int(c))
        bigrams = [t for t in tokens if "_" in t.strip("_")]
        return cls(tokens, counts, bigrams, total)


def _count(token_lists, bigrams=None) -> Counter:
    counts = Counter()
    for toks in token_lists:
        counts.update(apply_bigrams(toks, bigrams) if bigrams else toks)
    return counts


def _ranked(counts: Counter, min_count: int, max_size: int):
    kept = [(t, c) for t, c in counts.items() if c >= min_count]
    kept.sort(key=lambda tc: (-tc[1], tc[0]))
    return kept[:max_size]


def build_vocabulary(
    corpus: Iterable[UserDocument],
    min_count: int = 20,
    max_size: int = 200_000,
    delta: int = 5,
    theta: float = 10.0,
) -> Vocabulary:
    """Count unigrams, promote PMI-scored bigrams, then keep frequent types.

    Bigram candidates are adjacent pairs within a post whose components
    both reach ``min_count``. A pair is accepted when its score exceeds
    ``theta``; tokens are then re-counted with the accepted pairs joined,
    bigrams that end up rarer than ``min_count`` are dropped and the corpus
    is re-counted once more. Finally types below ``min_count`` go and the
    ``max_size`` most frequent survive (ties broken lexicographically).
    """
    posts = [tokenize(p) for doc in corpus for p in doc.posts]
    unigrams = _count(posts)
    N = sum(unigrams.values())
    if N == 0:
        raise EmptyCorpus("corpus contains no tokens")

    pairs = Counter()
    for toks in posts:
        for a, b in zip(toks, toks[1:]):
            if unigrams[a] >= min_count and unigrams[b] >= min_count:
                pairs[a, b] += 1
    accepted = {
        f"{a}_{b}"
        for (a, b), c_ab in pairs.items()
        if score_bigram(c_ab, unigrams[a], unigrams[b], N, delta) > theta
    }

    counts = _count(posts, accepted)
    if accepted:
        accepted = {bg for bg in accepted if counts[bg] >= min_count}
        counts = _count(posts, accepted)

    kept = _ranked(counts, min_count, max_size)
    tokens = [t for t, _ in kept]
    bigrams = accepted.intersection(tokens)
    return Vocabulary(tokens, [c for _, c in kept], bigrams, N)


class VocabularyBuilder(TransformerMixin, BaseEstimator):
    """Estimator wrapper around :func:`build_vocabulary`.

    ``fit`` takes an iterable of :class:`UserDocument`; ``transform`` maps
    documents to per-post arrays of token ids.
    """

    def __init__(self, min_count=20, max_size=200_000, delta=5, theta=10.0):
        self.min_count = min_count
        self.max_size = max_size
        self.delta = delta
        self.theta = theta

    def fit(self, X, y=None):
        docs = list(X)
        if not docs:
            raise EmptyCorpus("no documents to build a vocabulary from")
        self.vocabulary_ = build_vocabulary(
            docs, self.min_count, self.max_size, self.delta, self.theta
        )
        return self

    def transform(self, X):
        check_is_fitted(self, "vocabulary_")
        return [self.vocabulary_.encode_document(doc) for doc in X]
