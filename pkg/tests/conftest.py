from __future__ import annotations

import random
from pathlib import Path

import pytest

from asymagents.corpus import Individual, Message, MessageCorpus, SocialNetwork

ROOT = Path(__file__).resolve().parents[1]
FIXTURES = ROOT / "data" / "fixtures"
TEST_DATA = Path(__file__).resolve().parent / "data"


@pytest.fixture
def triangle_network() -> SocialNetwork:
    return SocialNetwork(
        [Individual("a"), Individual("b"), Individual("c")],
        [("a", "b"), ("b", "c"), ("a", "c")],
    )


@pytest.fixture
def small_corpus() -> tuple[SocialNetwork, MessageCorpus]:
    network = SocialNetwork(
        [Individual("alice"), Individual("bob"), Individual("carol")],
        [("alice", "bob"), ("bob", "carol")],
    )
    corpus = MessageCorpus(
        [
            Message("s1", 0, "alice", "bob", "hello bob"),
            Message("s1", 1, "bob", "alice", "hi alice"),
            Message("s1", 2, "alice", "bob", "see you"),
            Message("s2", 0, "bob", "carol", "lunch later, there was a blackout here"),
            Message("s2", 1, "carol", "bob", "sure, hope the blackout ends"),
        ]
    )
    return network, corpus


def random_corpus(seed: int, n_people: int = 8, n_sessions: int = 40,
                  msgs_per_session: int = 12):
    """Randomized 1v1 corpus plus its network; ~n_sessions*msgs_per_session messages."""
    rng = random.Random(seed)
    people = [f"p{i:02d}" for i in range(n_people)]
    network = SocialNetwork([Individual(p) for p in people])
    messages = []
    words = ("alpha", "beta", "gamma", "delta", "omega", "blackout", "party",
             "lunch", "meeting", "hike", "harbor", "quartz")
    for s in range(n_sessions):
        a, b = rng.sample(people, 2)
        if not network.has_edge(a, b):
            network.add_edge(a, b)
        sid = f"s{s:03d}"
        for seq in range(rng.randint(2, msgs_per_session)):
            sender, receiver = (a, b) if seq % 2 == 0 else (b, a)
            text = " ".join(rng.choices(words, k=rng.randint(3, 8))) + f" #{s}.{seq}"
            messages.append(Message(sid, seq, sender, receiver, text))
    return network, MessageCorpus(messages), people


@pytest.fixture
def fixtures_dir() -> Path:
    assert FIXTURES.exists(), "run scripts/make_fixtures.py first"
    return FIXTURES
