from __future__ import annotations

import random

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from asymagents.backend import BackendConfig, ChatBackend, ReplayEntry, ReplayScript, make_summarizer
from asymagents.corpus import CorpusError, Individual, Message, MessageCorpus, SocialNetwork
from asymagents.memory import (
    CachingEmbedder,
    ClearQuery,
    EmbeddingCache,
    FuzzyQuery,
    HashEmbedder,
    MemoryError_,
    build_clear,
    build_fuzzy,
    embed,
    extractive_summary,
    query_clear,
    query_fuzzy,
    summarize_sessions,
)
from conftest import random_corpus
from oracles import brute_clear_query, brute_topk, brute_visible


# -- clear memory -------------------------------------------------------------


def test_build_clear_sizes(small_corpus):
    network, corpus = small_corpus
    assert len(build_clear(network, corpus, "alice")) == 3
    assert len(build_clear(network, corpus, "carol")) == 2


def test_build_clear_owner_with_no_messages():
    network = SocialNetwork([Individual("a"), Individual("b"), Individual("loner")],
                            [("a", "b")])
    corpus = MessageCorpus([Message("s", 0, "a", "b", "hello")])
    mem = build_clear(network, corpus, "loner")
    assert len(mem) == 0
    assert query_clear(mem, ClearQuery(("hello",))).hits == []


def test_build_clear_unknown_owner(small_corpus):
    network, corpus = small_corpus
    with pytest.raises(CorpusError, match="unknown individual"):
        build_clear(network, corpus, "ghost")


def test_build_clear_matches_visibility_filter():
    network, corpus, people = random_corpus(seed=5, n_sessions=60)
    for who in people:
        mem = build_clear(network, corpus, who)
        assert mem.messages == brute_visible(corpus, who)


def test_query_clear_keyword_seeds(small_corpus):
    network, corpus = small_corpus
    mem = build_clear(network, corpus, "bob")
    result = query_clear(mem, ClearQuery(("blackout",), context_window=0, limit=10))
    assert len(result.hits) == 2
    assert all("blackout" in h.text for h in result.hits)


def test_query_clear_window_expansion(small_corpus):
    network, corpus = small_corpus
    mem = build_clear(network, corpus, "alice")
    result = query_clear(mem, ClearQuery(("hi",), context_window=1, limit=10))
    # seed is s1/1 ("hi alice"); window brings in s1/0 and s1/2
    assert [h.seq_span[0] for h in result.hits] == [0, 1, 2]
    assert [h.seed for h in result.hits] == [False, True, False]


def test_query_clear_limit_keeps_earliest(small_corpus):
    network, corpus = small_corpus
    mem = build_clear(network, corpus, "bob")
    result = query_clear(mem, ClearQuery(("blackout",), limit=1))
    assert len(result.hits) == 1
    assert (result.hits[0].session_id, result.hits[0].seq_span[0]) == ("s2", 0)


def test_query_clear_validation():
    with pytest.raises(MemoryError_):
        ClearQuery(())
    with pytest.raises(MemoryError_):
        ClearQuery(("x",), context_window=-1)
    with pytest.raises(MemoryError_):
        ClearQuery(("x",), limit=0)


def test_query_clear_matches_brute_force_on_random_corpus():
    network, corpus, people = random_corpus(seed=23, n_sessions=60)
    rng = random.Random(99)
    words = ["alpha", "beta", "blackout", "quartz", "lunch", "party", "zzz"]
    for _ in range(20):
        who = rng.choice(people)
        mem = build_clear(network, corpus, who)
        query = ClearQuery(
            keywords=tuple(rng.sample(words, rng.randint(1, 3))),
            context_window=rng.randint(0, 2),
            limit=rng.randint(1, 12),
        )
        expected = brute_clear_query(mem.messages, query.keywords, query.context_window,
                                     query.limit)
        got = query_clear(mem, query)
        assert [(h.session_id, h.seq_span[0]) for h in got.hits] == [
            (m.session_id, m.seq) for m in expected
        ]


def test_query_clear_monotone_in_limit():
    network, corpus, people = random_corpus(seed=7)
    mem = build_clear(network, corpus, people[0])
    small = query_clear(mem, ClearQuery(("blackout", "alpha"), context_window=1, limit=3))
    large = query_clear(mem, ClearQuery(("blackout", "alpha"), context_window=1, limit=9))
    keys_small = [(h.session_id, h.seq_span) for h in small.hits]
    keys_large = [(h.session_id, h.seq_span) for h in large.hits]
    assert keys_large[: len(keys_small)] == keys_small


def test_clear_memory_isolation():
    network, corpus, people = random_corpus(seed=13)
    for who in people[:4]:
        mem = build_clear(network, corpus, who)
        result = query_clear(mem, ClearQuery(("a", "e", "o"), context_window=2, limit=50))
        visible_keys = {(m.session_id, m.seq) for m in brute_visible(corpus, who)}
        assert all((h.session_id, h.seq_span[0]) in visible_keys for h in result.hits)


def test_rebuild_is_idempotent(small_corpus):
    network, corpus = small_corpus
    a = build_clear(network, corpus, "bob")
    b = build_clear(network, corpus, "bob")
    assert a.messages == b.messages
    assert a._token_index == b._token_index


# -- summaries ----------------------------------------------------------------


def test_extractive_summary_single_message(small_corpus):
    network, corpus = small_corpus
    summaries = summarize_sessions(network, corpus, "carol")
    assert len(summaries) == 1
    assert summaries[0].extractive
    assert summaries[0].text.startswith("bob: lunch later")


def test_extractive_summary_token_budget():
    msgs = [Message("s", 0, "a", "b", "word " * 200)]
    assert len(extractive_summary(msgs).split()) == 64


def test_summaries_empty_owner():
    network = SocialNetwork([Individual("a"), Individual("b"), Individual("c")],
                            [("a", "b")])
    corpus = MessageCorpus([Message("s", 0, "a", "b", "x")])
    assert summarize_sessions(network, corpus, "c") == []


def test_scripted_summarizer(small_corpus):
    network, corpus = small_corpus
    script = ReplayScript([
        ReplayEntry("phase=summarize", "alice and bob said hello."),
    ])
    backend = ChatBackend(BackendConfig(kind="scripted"), script=script)
    summaries = summarize_sessions(network, corpus, "alice",
                                   summarizer=make_summarizer(backend, "alice"))
    assert summaries[0].text == "alice and bob said hello."
    assert not summaries[0].extractive


def test_summarizer_failure_names_session(small_corpus):
    network, corpus = small_corpus

    def broken(session_id, text):
        raise RuntimeError("boom")

    with pytest.raises(MemoryError_, match="s1"):
        summarize_sessions(network, corpus, "alice", summarizer=broken)


# -- embeddings ---------------------------------------------------------------


def test_embed_deterministic():
    provider = HashEmbedder()
    vectors = embed(["a", "a"], provider)
    assert np.array_equal(vectors[0], vectors[1])
    again = embed(["a"], HashEmbedder())
    assert np.array_equal(vectors[0], again[0])


def test_embed_unit_norm_and_cosine_properties():
    provider = HashEmbedder()
    rng = random.Random(0)
    texts = ["".join(rng.choices("abcdefg hij", k=rng.randint(1, 40))) for _ in range(100)]
    vectors = embed(texts, provider)
    norms = np.linalg.norm(vectors, axis=1)
    assert np.allclose(norms, 1.0, atol=1e-6)
    for i in (0, 13, 57):
        assert float(vectors[i] @ vectors[i]) == pytest.approx(1.0, abs=1e-9)
    assert float(vectors[0] @ vectors[1]) == pytest.approx(float(vectors[1] @ vectors[0]))


def test_embed_empty_batch():
    assert embed([], HashEmbedder()).shape == (0, 64)


def test_embed_rejects_non_unit_provider():
    class Bad:
        dim = 4

        def embed(self, texts):
            return np.ones((len(texts), 4))

    with pytest.raises(MemoryError_, match="non-unit"):
        embed(["x"], Bad())


def test_embedding_cache_roundtrip(tmp_path):
    cache = EmbeddingCache(tmp_path / "cache.json")
    inner = HashEmbedder()
    caching = CachingEmbedder(inner, cache)
    first = embed(["hello", "world"], caching)
    cache.save()
    reloaded = CachingEmbedder(HashEmbedder(), EmbeddingCache(tmp_path / "cache.json"))
    second = embed(["hello", "world"], reloaded)
    assert np.allclose(first, second)


# -- fuzzy memory -------------------------------------------------------------


def _fuzzy_fixture():
    people = [Individual(f"p{i}") for i in range(2)]
    network = SocialNetwork(people, [("p0", "p1")])
    messages = []
    rng = random.Random(4)
    for s in range(50):
        text = " ".join(rng.choices(["river", "stone", "cloud", "ember", "wheat"],
                                    k=rng.randint(3, 7)))
        messages.append(Message(f"s{s:02d}", 0, "p0", "p1", text))
    corpus = MessageCorpus(messages)
    return network, corpus


def test_query_fuzzy_self_similarity():
    network, corpus = _fuzzy_fixture()
    provider = HashEmbedder()
    mem = build_fuzzy(network, corpus, "p0", provider)
    target = mem.entries[7]
    result = query_fuzzy(mem, FuzzyQuery(text=target.text, topk=1), provider)
    assert result.hits[0].session_id == target.session_id
    assert result.hits[0].score == pytest.approx(1.0, abs=1e-6)


def test_query_fuzzy_topk_covers_all():
    network, corpus = _fuzzy_fixture()
    provider = HashEmbedder()
    mem = build_fuzzy(network, corpus, "p0", provider)
    result = query_fuzzy(mem, FuzzyQuery(text="river stone", topk=500), provider)
    assert len(result.hits) == len(mem)
    scores = [h.score for h in result.hits]
    assert scores == sorted(scores, reverse=True)
    assert all(-1.0 - 1e-9 <= s <= 1.0 + 1e-9 for s in scores)


def test_query_fuzzy_matches_exhaustive_oracle():
    network, corpus = _fuzzy_fixture()
    provider = HashEmbedder()
    mem = build_fuzzy(network, corpus, "p0", provider)
    qvec = embed(["stone ember cloud"], provider)[0]
    expected = brute_topk([e.session_id for e in mem.entries],
                          [e.vector for e in mem.entries], qvec, 5)
    result = query_fuzzy(mem, FuzzyQuery(text="stone ember cloud", topk=5), provider)
    assert [(h.session_id, pytest.approx(h.score)) for h in result.hits] == [
        (sid, pytest.approx(score)) for sid, score in expected
    ]


def test_query_fuzzy_tie_break_by_session_id():
    network, corpus = _fuzzy_fixture()
    provider = HashEmbedder()
    mem = build_fuzzy(network, corpus, "p0", provider)
    # Force exact ties by duplicating one entry's vector under other ids.
    tied = [e for e in mem.entries[:3]]
    for i, e in enumerate(mem.entries[:3]):
        object.__setattr__(e, "vector", mem.entries[0].vector)
    result = query_fuzzy(mem, FuzzyQuery(text=mem.entries[0].text, topk=3), provider)
    assert [h.session_id for h in result.hits] == sorted(e.session_id for e in tied)


def test_query_fuzzy_empty_memory():
    network = SocialNetwork([Individual("a"), Individual("b"), Individual("c")],
                            [("a", "b")])
    corpus = MessageCorpus([Message("s", 0, "a", "b", "x")])
    provider = HashEmbedder()
    mem = build_fuzzy(network, corpus, "c", provider)
    assert query_fuzzy(mem, FuzzyQuery(text="anything", topk=3), provider).hits == []


def test_fuzzy_one_entry_per_owned_session(small_corpus):
    network, corpus = small_corpus
    provider = HashEmbedder()
    mem = build_fuzzy(network, corpus, "bob", provider)
    assert [e.session_id for e in mem.entries] == ["s1", "s2"]
    norms = [float(np.linalg.norm(e.vector)) for e in mem.entries]
    assert norms == pytest.approx([1.0, 1.0], abs=1e-6)


@settings(max_examples=25, deadline=None)
@given(st.text(min_size=1, max_size=30))
def test_fuzzy_query_validation_and_hash_stability(text):
    provider = HashEmbedder()
    v1 = provider.embed([text])
    v2 = provider.embed([text])
    assert np.array_equal(v1, v2)
    with pytest.raises(MemoryError_):
        FuzzyQuery(text=text, topk=0)
