import numpy as np
import pytest

from commreid.corpus import Corpus, UserDocument
from commreid.synth import CommunityConfig, SynthConfig, generate
from commreid.vocab import build_vocabulary


def unit_rows(rng, n, k):
    X = rng.standard_normal((n, k))
    return X / np.linalg.norm(X, axis=1, keepdims=True)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def small_world():
    """A small planted-community corpus shared by several test modules."""
    cfg = SynthConfig(
        vocab_size=400,
        n_background_users=60,
        communities=[CommunityConfig("alpha", 5, 20, 0.4), CommunityConfig("beta", 6, 20, 0.4)],
        posts_per_user=16,
        tokens_per_post=6,
        n_interests=4,
        interest_word_count=15,
        head_words=20,
        seed=7,
    )
    corpus, specs = generate(cfg)
    vocab = build_vocabulary(corpus, min_count=3)
    return cfg, corpus, specs, vocab


@pytest.fixture
def tiny_corpus():
    return Corpus([
        UserDocument("u1", ("Hello world", "new york city", "hello again"), "embed-train"),
        UserDocument("u2", ("New York is big", "city lights"), "test"),
    ])


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
