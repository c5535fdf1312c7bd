"""User documents: loading, tokenization and bigram joining."""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from typing import Iterable, Iterator, Sequence

from .exceptions import DuplicateUser, MalformedLine

SPLITS = ("embed-train", "classifier-train", "test")
DEFAULT_SPLIT = "embed-train"

STRIPPED_CHARS = '.,!?;:"()[]«»'
_DELETE_TABLE = str.maketrans("", "", STRIPPED_CHARS.replace(".", ""))
# a period between two letters/digits (domains, decimals) is part of the token
_LOOSE_PERIOD = re.compile(r"\.(?![^\W_])|(?<![^\W_])\.")


def tokenize(text: str) -> list[str]:
    """Lower-case ``text``, strip punctuation and split on whitespace.

    The characters ``. , ! ? ; : " ( ) [ ] « »`` are deleted, except that a
    period flanked by alphanumerics on both sides is kept. ``@ # _ ' / -``
    are left alone, so handles, hashtags and URLs stay single tokens.

    >>> tokenize("Hello, World!")
    ['hello', 'world']
    >>> tokenize("@NLProc rocks #nlp http://t.co/x")
    ['@nlproc', 'rocks', '#nlp', 'http//t.co/x']
    """
    text = _LOOSE_PERIOD.sub("", text.lower())
    return text.translate(_DELETE_TABLE).split()


def apply_bigrams(tokens: Sequence[str], accepted) -> list[str]:
    """Join adjacent pairs found in ``accepted`` with an underscore.

    One greedy left-to-right pass; a token consumed by a bigram cannot start
    another one.
    """
    if not accepted:
        return list(tokens)
    out = []
    i, n = 0, len(tokens)
    while i < n:
        if i + 1 < n:
            joined = f"{tokens[i]}_{tokens[i + 1]}"
            if joined in accepted:
                out.append(joined)
                i += 2
                continue
        out.append(tokens[i])
        i += 1
    return out


@dataclass(frozen=True)
class UserDocument:
    user_id: str
    posts: tuple[str, ...]
    split: str = DEFAULT_SPLIT

    def __post_init__(self):
        if not self.user_id:
            raise ValueError("user_id must be non-empty")
        if self.split not in SPLITS:
            raise ValueError(f"unknown split {self.split!r}")
        if not isinstance(self.posts, tuple):
            object.__setattr__(self, "posts", tuple(self.posts))

    def tokens(self, bigrams=None) -> list[list[str]]:
        """Per-post token lists, with ``bigrams`` joined when given."""
        return [apply_bigrams(tokenize(p), bigrams) for p in self.posts]


@dataclass
class Corpus:
    users: list[UserDocument] = field(default_factory=list)

    def __post_init__(self):
        self._by_id = {}
        for doc in self.users:
            if doc.user_id in self._by_id:
                raise DuplicateUser(doc.user_id)
            self._by_id[doc.user_id] = doc

    def __len__(self):
        return len(self.users)

    def __iter__(self) -> Iterator[UserDocument]:
        return iter(self.users)

    def __getitem__(self, user_id: str) -> UserDocument:
        return self._by_id[user_id]

    def __contains__(self, user_id) -> bool:
        return user_id in self._by_id

    @property
    def user_ids(self) -> list[str]:
        return [d.user_id for d in self.users]

    def split(self, tag: str) -> "Corpus":
        """Sub-corpus holding only the users tagged ``tag``."""
        if tag not in SPLITS:
            raise ValueError(f"unknown split {tag!r}")
        return Corpus([d for d in self.users if d.split == tag])


def _parse_line(line: str, lineno: int, path) -> UserDocument:
    try:
        obj = json.loads(line)
    except json.JSONDecodeError as exc:
        raise MalformedLine(lineno, f"invalid JSON ({exc.msg})", path) from None
    if not isinstance(obj, dict):
        raise MalformedLine(lineno, "expected a JSON object", path)
    for key in ("user_id", "posts"):
        if key not in obj:
            raise MalformedLine(lineno, f"missing field {key!r}", path)
    user_id, posts = obj["user_id"], obj["posts"]
    if not isinstance(user_id, str) or not user_id:
        raise MalformedLine(lineno, "user_id must be a non-empty string", path)
    if not isinstance(posts, list) or not all(isinstance(p, str) for p in posts):
        raise MalformedLine(lineno, "posts must be a list of strings", path)
    split = obj.get("split", DEFAULT_SPLIT)
    if split not in SPLITS:
        raise MalformedLine(lineno, f"unknown split {split!r}", path)
    return UserDocument(user_id, tuple(posts), split)


def iter_corpus(path) -> Iterator[UserDocument]:
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if line.strip():
                yield _parse_line(line, lineno, path)


def load_corpus(path) -> Corpus:
    """Read a JSONL corpus, one ``{"user_id", "posts", "split"?}`` per line.

    Raises MalformedLine (with the 1-based line number) or DuplicateUser.
    """
    return Corpus(list(iter_corpus(path)))


def save_corpus(corpus: Iterable[UserDocument], path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for doc in corpus:
            rec = {"user_id": doc.user_id, "posts": list(doc.posts), "split": doc.split}
            fh.write(json.dumps(rec, ensure_ascii=False) + "\n")
