"""Top-k retrieval of users by linear score ``w.u``.

Exact mode scores every stored vector. Approximate mode hashes vectors with
random-hyperplane signatures (``T`` tables of ``B`` sign bits), gathers the
users sharing a bucket with the normalized query in any table, and re-ranks
those candidates by their exact score.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_array, check_is_fitted

from .exceptions import CorruptIndex, DimensionMismatch, DuplicateUser, EmptyIndex

UNIT_TOL = 1e-5

_MAGIC = b"RIDX"
_VERSION = 1
_HEADER = struct.Struct("<4sIQIIIQ")


def _crc64_table():
    poly = 0xC96C5795D7870F42
    table = []
    for i in range(256):
        crc = i
        for _ in range(8):
            crc = (crc >> 1) ^ poly if crc & 1 else crc >> 1
        table.append(crc)
    return table


_CRC_TABLE = _crc64_table()


def crc64(data: bytes, crc: int = 0) -> int:
    """CRC-64/XZ (ECMA-182 polynomial, reflected)."""
    table = _CRC_TABLE
    crc ^= 0xFFFFFFFFFFFFFFFF
    for byte in data:
        crc = table[(crc ^ byte) & 0xFF] ^ (crc >> 8)
    return crc ^ 0xFFFFFFFFFFFFFFFF


@dataclass(frozen=True)
class QueryResult:
    user_ids: list
    scores: list

    def __len__(self):
        return len(self.user_ids)

    def to_list(self):
        return [{"user_id": u, "score": s} for u, s in zip(self.user_ids, self.scores)]


def _signatures(X, planes) -> np.ndarray:
    """``(n, T)`` integer bucket keys; bit ``j`` is ``planes[t, j] . x >= 0``."""
    T, B, _ = planes.shape
    if B == 0:
        return np.zeros((X.shape[0], T), dtype=np.int64)
    bits = np.einsum("nk,tbk->ntb", X, planes) >= 0
    weights = np.left_shift(np.int64(1), np.arange(B, dtype=np.int64))
    return (bits.astype(np.int64) * weights).sum(axis=2)


class RetrievalIndex(BaseEstimator):
    """Stores unit-norm user vectors for exact or LSH top-k retrieval.

    Parameters
    ----------
    n_tables : int
        Number of hash tables ``T``. Zero disables LSH.
    n_bits : int
        Sign bits per table ``B``.
    random_state : int
        Seed for the Gaussian hyperplanes.

    Vectors and hyperplanes are held in float32, the precision they are
    stored in on disk, so a saved index reloads bit-exactly.
    """

    def __init__(self, n_tables=32, n_bits=12, random_state=0):
        self.n_tables = n_tables
        self.n_bits = n_bits
        self.random_state = random_state

    def fit(self, X, user_ids=None):
        X = check_array(X, dtype=np.float64, ensure_min_samples=0)
        if X.shape[0] == 0:
            raise EmptyIndex("cannot index zero vectors")
        if user_ids is None:
            user_ids = [str(i) for i in range(X.shape[0])]
        user_ids = [str(u) for u in user_ids]
        if len(user_ids) != X.shape[0]:
            raise DimensionMismatch(f"{len(user_ids)} ids for {X.shape[0]} vectors")
        seen = set()
        for u in user_ids:
            if u in seen:
                raise DuplicateUser(u)
            seen.add(u)
        norms = np.linalg.norm(X, axis=1)
        if np.any(np.abs(norms - 1.0) > UNIT_TOL):
            raise ValueError("index vectors must be unit-norm")
        if self.n_tables < 0 or self.n_bits < 0 or self.n_bits > 62:
            raise ValueError("need n_tables >= 0 and 0 <= n_bits <= 62")
        k = X.shape[1]
        rng = np.random.default_rng(self.random_state)
        planes = rng.standard_normal((self.n_tables, self.n_bits, k)).astype(np.float32)
        self._set_state(user_ids, X.astype(np.float32), planes)
        return self

    def _set_state(self, user_ids, vectors32, planes32):
        self.user_ids_ = list(user_ids)
        self.vectors_ = vectors32
        self.hyperplanes_ = planes32
        self._vectors64 = vectors32.astype(np.float64)
        order = sorted(range(len(user_ids)), key=user_ids.__getitem__)
        self._id_rank = np.empty(len(user_ids), dtype=np.int64)
        self._id_rank[order] = np.arange(len(user_ids))
        self.buckets_ = []
        if planes32.shape[0]:
            sigs = _signatures(self._vectors64, planes32.astype(np.float64))
            for t in range(planes32.shape[0]):
                keys, inverse = np.unique(sigs[:, t], return_inverse=True)
                members = np.argsort(inverse, kind="stable")
                bounds = np.searchsorted(inverse[members], np.arange(len(keys) + 1))
                self.buckets_.append(
                    {int(key): members[bounds[i]:bounds[i + 1]] for i, key in enumerate(keys)}
                )

    @property
    def has_lsh(self) -> bool:
        check_is_fitted(self, "vectors_")
        return self.hyperplanes_.shape[0] > 0

    def __len__(self):
        check_is_fitted(self, "vectors_")
        return len(self.user_ids_)

    def _ranked(self, candidates, w, k_out) -> QueryResult:
        # row-wise reduction: a user's score does not depend on which other
        # rows are scored alongside it (a batched matmul may block differently)
        scores = (self._vectors64[candidates] * w).sum(axis=1)
        order = np.lexsort((self._id_rank[candidates], -scores))[:k_out]
        picked = candidates[order]
        return QueryResult([self.user_ids_[i] for i in picked], scores[order].tolist())

    def candidates(self, w) -> np.ndarray:
        """Sorted positions sharing a bucket with ``w`` in at least one table."""
        w = np.asarray(w, dtype=np.float64)
        q = (w / np.linalg.norm(w))[None, :]
        sig = _signatures(q, self.hyperplanes_.astype(np.float64))[0]
        hits = [self.buckets_[t].get(int(key)) for t, key in enumerate(sig)]
        hits = [h for h in hits if h is not None]
        if not hits:
            return np.empty(0, dtype=np.int64)
        return np.unique(np.concatenate(hits))

    def query(self, w, k_out=10, mode="exact") -> QueryResult:
        check_is_fitted(self, "vectors_")
        if k_out < 1:
            raise ValueError("k_out must be >= 1")
        w = np.asarray(w, dtype=np.float64).ravel()
        if w.shape[0] != self.vectors_.shape[1]:
            raise DimensionMismatch(f"query has {w.shape[0]} dims, index has {self.vectors_.shape[1]}")
        if mode == "exact":
            cand = np.arange(len(self.user_ids_))
        elif mode == "approx":
            if not self.has_lsh:
                raise ValueError("approximate search needs an index built with n_tables > 0")
            if not np.linalg.norm(w) > 0:
                raise ValueError("approximate search needs a nonzero query")
            cand = self.candidates(w)
        else:
            raise ValueError(f"mode must be 'exact' or 'approx', got {mode!r}")
        return self._ranked(cand, w, k_out)

    def save(self, path) -> None:
        check_is_fitted(self, "vectors_")
        n, k = self.vectors_.shape
        T, B, _ = self.hyperplanes_.shape
        parts = [_HEADER.pack(_MAGIC, _VERSION, n, k, T, B, int(self.random_state) & 0xFFFFFFFFFFFFFFFF)]
        parts.append(self.vectors_.astype("<f4").tobytes())
        for uid in self.user_ids_:
            raw = uid.encode("utf-8")
            parts.append(struct.pack("<I", len(raw)) + raw)
        parts.append(self.hyperplanes_.astype("<f4").tobytes())
        body = b"".join(parts)
        with open(path, "wb") as fh:
            fh.write(body)
            fh.write(struct.pack("<Q", crc64(body)))

    @classmethod
    def load(cls, path) -> "RetrievalIndex":
        with open(path, "rb") as fh:
            data = fh.read()
        if len(data) < _HEADER.size + 8:
            raise CorruptIndex(f"{path}: truncated ({len(data)} bytes)")
        magic, version, n, k, T, B, seed = _HEADER.unpack_from(data)
        if magic != _MAGIC:
            raise CorruptIndex(f"{path}: bad magic {magic!r}")
        if version != _VERSION:
            raise CorruptIndex(f"{path}: file version {version}, reader supports {_VERSION}")
        body, (stored,) = data[:-8], struct.unpack("<Q", data[-8:])
        if crc64(body) != stored:
            raise CorruptIndex(f"{path}: checksum mismatch")
        try:
            off = _HEADER.size
            vectors = np.frombuffer(body, dtype="<f4", count=n * k, offset=off).reshape(n, k)
            off += 4 * n * k
            ids = []
            for _ in range(n):
                (length,) = struct.unpack_from("<I", body, off)
                off += 4
                ids.append(body[off:off + length].decode("utf-8"))
                off += length
            planes = np.frombuffer(body, dtype="<f4", count=T * B * k, offset=off)
            off += 4 * T * B * k
        except (ValueError, struct.error, UnicodeDecodeError) as exc:
            raise CorruptIndex(f"{path}: malformed payload ({exc})") from None
        if off != len(body):
            raise CorruptIndex(f"{path}: {len(body) - off} unexpected trailing bytes")
        index = cls(n_tables=T, n_bits=B, random_state=seed)
        index._set_state(ids, vectors.astype(np.float32), planes.reshape(T, B, k).astype(np.float32))
        return index


def build_index(embeddings, user_ids=None, lsh_cfg=None) -> RetrievalIndex:
    """Index unit vectors; ``lsh_cfg`` is ``(T, B, seed)`` or None for exact only."""
    T, B, seed = lsh_cfg if lsh_cfg is not None else (0, 0, 0)
    return RetrievalIndex(n_tables=T, n_bits=B, random_state=seed).fit(embeddings, user_ids)


def query_topk(index: RetrievalIndex, w, k_out: int, mode: str = "exact") -> QueryResult:
    return index.query(w, k_out, mode)
