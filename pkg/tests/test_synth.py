import numpy as np
import pytest
from scipy.stats import chi2_contingency

from commreid.exceptions import ConfigInvalid
from commreid.synth import (
    CommunityConfig,
    SynthConfig,
    benchmark_config,
    generate,
    topic_enrichment,
    topic_sets,
)


def _cfg(**kw):
    base = dict(vocab_size=600, n_background_users=80, posts_per_user=20, tokens_per_post=6,
                n_interests=4, interest_word_count=20, head_words=30, seed=3,
                communities=[CommunityConfig("a", 10, 40, 0.3), CommunityConfig("b", 12, 40, 0.3)])
    base.update(kw)
    return SynthConfig(**base)


def test_deterministic():
    c1, s1 = generate(_cfg())
    c2, s2 = generate(_cfg())
    assert [(d.user_id, d.posts, d.split) for d in c1] == [(d.user_id, d.posts, d.split) for d in c2]
    assert s1 == s2
    c3, _ = generate(_cfg(seed=4))
    assert [d.posts for d in c3] != [d.posts for d in c1]


def test_sizes_and_splits():
    corpus, specs = generate(_cfg())
    assert len(corpus) == 80 + 22
    assert [len(s.member_ids) for s in specs] == [10, 12]
    counts = {t: len(corpus.split(t)) for t in ("embed-train", "classifier-train", "test")}
    assert counts == {"embed-train": 48, "classifier-train": 16, "test": 16 + 22}
    assert all(len(d.posts) == 20 and all(len(p.split()) == 6 for p in d.posts) for d in corpus)


def test_topics_are_disjoint():
    comm, interests = topic_sets(_cfg())
    sets = [set(t.tolist()) for t in comm + interests]
    assert sum(len(s) for s in sets) == len(set().union(*sets))
    assert min(min(s) for s in sets) >= 30


def test_members_are_enriched_in_their_topic():
    cfg = _cfg()
    corpus, specs = generate(cfg)
    comm, _ = topic_sets(cfg)
    for spec, topic in zip(specs, comm):
        assert topic_enrichment(corpus, spec, topic) >= 2.0


def test_zero_mix_members_look_like_test_users():
    cfg = _cfg(communities=[CommunityConfig("z", 30, 40, 0.0)], n_background_users=200, seed=11)
    corpus, specs = generate(cfg)
    members = set(specs[0].member_ids)
    bins = 40

    def hist(docs):
        h = np.zeros(bins + 1)
        for d in docs:
            for p in d.posts:
                for t in p.split():
                    r = int(t[1:])
                    h[min(r, bins)] += 1
        return h

    pool = [d for d in corpus.split("test") if d.user_id not in members]
    table = np.vstack([hist(d for d in corpus if d.user_id in members), hist(pool)])
    assert chi2_contingency(table)[1] > 0.01


def test_enrichment_warning(caplog):
    generate(_cfg())
    assert not [r for r in caplog.records if "enrichment" in r.getMessage()]
    # a topic spread over 400 mid-frequency words is too diffuse to stand out
    generate(_cfg(communities=[CommunityConfig("w", 5, 400, 0.2)], vocab_size=800, seed=1))
    assert [r for r in caplog.records if "enrichment" in r.getMessage()]


@pytest.mark.parametrize("bad", [
    dict(communities=[CommunityConfig("x", 1)]),
    dict(communities=[CommunityConfig("x", 5, topic_mix=1.0)]),
    dict(communities=[CommunityConfig("x", 5), CommunityConfig("x", 5)]),
    dict(vocab_size=100),
    dict(split_fractions=(0.5, 0.5, 0.5)),
])
def test_invalid_configs(bad):
    with pytest.raises(ConfigInvalid):
        generate(_cfg(**bad))


def test_config_round_trip(tmp_path):
    cfg = benchmark_config(5)
    assert SynthConfig.from_dict(cfg.to_dict()) == cfg
    assert [c.size for c in cfg.communities] == [6, 8, 10, 12, 15, 20, 25, 30]
