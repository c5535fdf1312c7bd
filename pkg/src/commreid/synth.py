"""Synthetic corpora with planted communities.

Word ``w{r}`` has Zipf rank ``r``. Every user also has one interest topic
(a small word set) from which a fraction ``interest_mix`` of their tokens is
drawn; that per-user habit is what re-identification can latch onto.
Users in the ``embed-train`` split pick interests among the community topics
and the extra interest topics alike, mimicking a general population that
contains people with the same hobbies as the communities. The labelled
pools (``classifier-train``, ``test``) only use extra interests, so they
never contain hidden community members.

A community member draws each token from its community topic with
probability ``topic_mix`` and otherwise behaves like a test-pool user.
"""

from __future__ import annotations

import json
import logging
from dataclasses import asdict, dataclass, field

import numpy as np

from .corpus import Corpus, UserDocument
from .eval import CommunitySpec
from .exceptions import ConfigInvalid

log = logging.getLogger(__name__)


@dataclass
class CommunityConfig:
    name: str
    size: int
    topic_word_count: int = 40
    topic_mix: float = 0.3


@dataclass
class SynthConfig:
    vocab_size: int = 2000
    n_background_users: int = 500
    communities: list = field(default_factory=list)
    posts_per_user: int = 50
    tokens_per_post: int = 6
    seed: int = 0
    zipf_exponent: float = 1.1
    n_interests: int = 16
    interest_word_count: int = 40
    interest_mix: float = 0.3
    split_fractions: tuple = (0.6, 0.2, 0.2)
    head_words: int = 100

    def __post_init__(self):
        self.communities = [
            c if isinstance(c, CommunityConfig) else CommunityConfig(**c) for c in self.communities
        ]
        self.split_fractions = tuple(self.split_fractions)

    def validate(self):
        if self.vocab_size < 1 or self.n_background_users < 3:
            raise ConfigInvalid("need vocab_size >= 1 and at least 3 background users")
        if self.posts_per_user < 1 or self.tokens_per_post < 1:
            raise ConfigInvalid("posts_per_user and tokens_per_post must be >= 1")
        if self.zipf_exponent <= 0:
            raise ConfigInvalid("zipf_exponent must be positive")
        if not 0.0 <= self.interest_mix < 1.0:
            raise ConfigInvalid("interest_mix must lie in [0, 1)")
        if self.n_interests < 1:
            raise ConfigInvalid("need at least one extra interest topic")
        fr = self.split_fractions
        if len(fr) != 3 or min(fr) < 0 or abs(sum(fr) - 1.0) > 1e-9:
            raise ConfigInvalid("split_fractions must be three non-negative numbers summing to 1")
        names = set()
        for c in self.communities:
            if c.size < 2:
                raise ConfigInvalid(f"community {c.name!r}: size must be >= 2")
            if not 0.0 <= c.topic_mix < 1.0:
                raise ConfigInvalid(f"community {c.name!r}: topic_mix must lie in [0, 1)")
            if c.topic_word_count < 1:
                raise ConfigInvalid(f"community {c.name!r}: topic_word_count must be >= 1")
            if c.name in names:
                raise ConfigInvalid(f"community name {c.name!r} repeated")
            names.add(c.name)
        needed = sum(c.topic_word_count for c in self.communities)
        needed += self.n_interests * self.interest_word_count
        if self.head_words + needed > self.vocab_size:
            raise ConfigInvalid(
                f"topics need {needed} words beyond the {self.head_words} head words, "
                f"vocab_size is {self.vocab_size}"
            )

    def to_dict(self) -> dict:
        d = asdict(self)
        d["split_fractions"] = list(self.split_fractions)
        return d

    @classmethod
    def from_dict(cls, d) -> "SynthConfig":
        return cls(**d)

    @classmethod
    def load(cls, path) -> "SynthConfig":
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))


def word(rank: int) -> str:
    return f"w{rank:05d}"


def topic_sets(cfg: SynthConfig):
    """``(community_topics, interest_topics)`` as lists of rank arrays."""
    cfg.validate()
    rng = np.random.default_rng(np.random.SeedSequence(cfg.seed).spawn(1)[0])
    pool = rng.permutation(np.arange(cfg.head_words, cfg.vocab_size))
    out, start = [], 0
    sizes = [c.topic_word_count for c in cfg.communities]
    sizes += [cfg.interest_word_count] * cfg.n_interests
    for size in sizes:
        out.append(np.sort(pool[start:start + size]))
        start += size
    n_comm = len(cfg.communities)
    return out[:n_comm], out[n_comm:]


def _zipf_cdf(cfg):
    p = 1.0 / np.arange(1, cfg.vocab_size + 1) ** cfg.zipf_exponent
    cdf = np.cumsum(p / p.sum())
    cdf[-1] = 1.0
    return cdf


def _user_tokens(rng, cfg, cdf, interest, topic=None, topic_mix=0.0) -> np.ndarray:
    n = cfg.posts_per_user * cfg.tokens_per_post
    r = rng.random(n)
    toks = np.searchsorted(cdf, rng.random(n), side="right")
    use_interest = r < cfg.interest_mix
    toks[use_interest] = rng.choice(interest, size=int(use_interest.sum()))
    if topic is not None and topic_mix > 0:
        use_topic = rng.random(n) < topic_mix
        toks[use_topic] = rng.choice(topic, size=int(use_topic.sum()))
    return toks.reshape(cfg.posts_per_user, cfg.tokens_per_post)


def _posts(tokens) -> tuple:
    return tuple(" ".join(word(t) for t in row) for row in tokens)


def generate(cfg: SynthConfig):
    """Build ``(Corpus, [CommunitySpec])``; deterministic in ``cfg.seed``."""
    community_topics, interest_topics = topic_sets(cfg)
    cdf = _zipf_cdf(cfg)
    n_bg = cfg.n_background_users
    n_members = sum(c.size for c in cfg.communities)
    master = np.random.SeedSequence(cfg.seed)
    _, split_seq, user_seq = master.spawn(3)
    user_seeds = user_seq.spawn(n_bg + n_members)

    n_embed = int(round(cfg.split_fractions[0] * n_bg))
    n_clf = int(round(cfg.split_fractions[1] * n_bg))
    tags = np.array(["embed-train"] * n_embed + ["classifier-train"] * n_clf
                    + ["test"] * (n_bg - n_embed - n_clf))
    tags = np.random.default_rng(split_seq).permutation(tags)

    all_interests = community_topics + interest_topics
    users = []
    for i in range(n_bg):
        rng = np.random.default_rng(user_seeds[i])
        choices = all_interests if tags[i] == "embed-train" else interest_topics
        interest = choices[int(rng.integers(len(choices)))]
        users.append(UserDocument(f"bg{i:05d}", _posts(_user_tokens(rng, cfg, cdf, interest)), str(tags[i])))

    specs = []
    seed_pos = n_bg
    for c, topic in zip(cfg.communities, community_topics):
        ids = []
        for m in range(c.size):
            rng = np.random.default_rng(user_seeds[seed_pos])
            seed_pos += 1
            interest = interest_topics[int(rng.integers(len(interest_topics)))]
            toks = _user_tokens(rng, cfg, cdf, interest, topic, c.topic_mix)
            uid = f"{c.name}-{m:03d}"
            users.append(UserDocument(uid, _posts(toks), "test"))
            ids.append(uid)
        specs.append(CommunitySpec(c.name, ids))

    corpus = Corpus(users)
    for c, spec, topic in zip(cfg.communities, specs, community_topics):
        if c.topic_mix >= 0.2:
            ratio = topic_enrichment(corpus, spec, topic)
            if ratio < 2.0:
                log.warning("community %s: topic enrichment only %.2f", c.name, ratio)
    return corpus, specs


def topic_enrichment(corpus: Corpus, spec: CommunitySpec, topic) -> float:
    """Topic-word token rate among members over the rate among non-members."""
    topic_words = {word(t) for t in topic}
    members = set(spec.member_ids)

    def rate(docs):
        hit = total = 0
        for d in docs:
            for p in d.posts:
                toks = p.split()
                total += len(toks)
                hit += sum(t in topic_words for t in toks)
        return hit / max(total, 1)

    inside = rate(d for d in corpus if d.user_id in members)
    outside = rate(d for d in corpus if d.user_id not in members and d.user_id.startswith("bg"))
    return inside / outside if outside > 0 else float("inf")


def benchmark_config(seed: int = 0, vocab_size: int = 2000, n_background_users: int = 500) -> SynthConfig:
    """The desk-scale benchmark: 8 planted communities of 6 to 30 members."""
    sizes = [6, 8, 10, 12, 15, 20, 25, 30]
    comms = [CommunityConfig(f"c{i}", s, topic_word_count=150, topic_mix=0.3) for i, s in enumerate(sizes)]
    return SynthConfig(
        vocab_size=vocab_size,
        n_background_users=n_background_users,
        communities=comms,
        seed=seed,
    )
