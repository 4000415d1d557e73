from __future__ import annotations

import math

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from asymagents.corpus import (
    CorpusError,
    Individual,
    Message,
    MessageCorpus,
    SocialNetwork,
    TaskInstance,
    anonymize,
    anonymize_tasks,
    derive_relationships,
    graph_stats,
    load_messages,
    load_network,
    load_tasks,
    save_messages,
    save_network,
    save_tasks,
    serialize_messages,
    serialize_network,
    visible_messages,
)
from conftest import random_corpus
from oracles import brute_visible


# -- network loading ----------------------------------------------------------


def test_load_network_triangle(tmp_path):
    path = tmp_path / "net.txt"
    path.write_text(
        "# a comment\n"
        "person a\n"
        "person b a persona with spaces\n"
        "person c\n"
        "edge a b\nedge b c\nedge a c\n",
        encoding="utf-8",
    )
    net = load_network(path)
    assert net.node_count == 3
    assert net.edge_count == 3
    assert net.individuals["b"].persona == "a persona with spaces"


def test_load_network_unknown_individual(tmp_path):
    path = tmp_path / "net.txt"
    path.write_text("person a\nedge a ghost\n", encoding="utf-8")
    with pytest.raises(CorpusError, match="unknown individual"):
        load_network(path)


@pytest.mark.parametrize(
    "content,message",
    [
        ("person a\nperson a\n", "duplicate individual"),
        ("person a\nedge a a\n", "self-loop"),
        ("frobnicate a b\n", "unknown record kind"),
        ("person a\nedge a\n", "edge record needs two ids"),
    ],
)
def test_load_network_errors_carry_line_numbers(tmp_path, content, message):
    path = tmp_path / "net.txt"
    path.write_text(content, encoding="utf-8")
    with pytest.raises(CorpusError, match=message) as exc:
        load_network(path)
    assert "net.txt:" in str(exc.value)


def test_network_roundtrip_is_stable(tmp_path, triangle_network):
    first = serialize_network(triangle_network)
    path = tmp_path / "net.txt"
    path.write_text(first, encoding="utf-8")
    again = serialize_network(load_network(path))
    assert first == again


# -- messages -----------------------------------------------------------------


def test_visible_messages_basic(small_corpus):
    network, corpus = small_corpus
    visible = visible_messages(network, corpus, "alice")
    assert [m.seq for m in visible] == [0, 1, 2]
    assert all("alice" in (m.sender, m.receiver) for m in visible)
    assert visible_messages(network, corpus, "carol") == corpus.sessions["s2"]


def test_visible_messages_unknown_individual(small_corpus):
    network, corpus = small_corpus
    with pytest.raises(CorpusError, match="unknown individual"):
        visible_messages(network, corpus, "nobody")


def test_no_messages_is_empty():
    network = SocialNetwork([Individual("a"), Individual("b")], [("a", "b")])
    corpus = MessageCorpus([])
    assert visible_messages(network, corpus, "a") == []


def test_visibility_matches_brute_force_on_random_corpus():
    network, corpus, people = random_corpus(seed=11, n_sessions=60)
    assert len(corpus) >= 300
    for who in people:
        assert visible_messages(network, corpus, who) == brute_visible(corpus, who)


def test_visibility_partition_covers_corpus_twice():
    network, corpus, people = random_corpus(seed=3)
    total = sum(len(visible_messages(network, corpus, p)) for p in people)
    assert total == 2 * len(corpus)


def test_message_invariants():
    with pytest.raises(CorpusError, match="sender equals receiver"):
        Message("s", 0, "a", "a", "hi")
    with pytest.raises(CorpusError, match="seq not dense"):
        MessageCorpus([Message("s", 1, "a", "b", "hi")])
    with pytest.raises(CorpusError, match="duplicate"):
        MessageCorpus([Message("s", 0, "a", "b", "x"), Message("s", 0, "b", "a", "y")])


def test_messages_roundtrip_with_escapes(tmp_path, small_corpus):
    network, _ = small_corpus
    nasty = MessageCorpus(
        [
            Message("s1", 0, "alice", "bob", "tab\there"),
            Message("s1", 1, "bob", "alice", "new\nline and \\backslash\r"),
        ]
    )
    path = tmp_path / "messages.tsv"
    save_messages(nasty, path)
    loaded = load_messages(path, network)
    assert [m.text for m in loaded.iter_messages()] == [m.text for m in nasty.iter_messages()]
    assert serialize_messages(loaded) == serialize_messages(nasty)


def test_load_messages_errors(tmp_path):
    path = tmp_path / "messages.tsv"
    path.write_text("s1\t0\talice\tbob\n", encoding="utf-8")  # 4 fields
    with pytest.raises(CorpusError, match="messages.tsv:1"):
        load_messages(path)
    path.write_text("s1\tzero\talice\tbob\thello\n", encoding="utf-8")
    with pytest.raises(CorpusError, match="not an integer"):
        load_messages(path)


def test_derive_relationships(small_corpus):
    _, corpus = small_corpus
    bare = SocialNetwork([Individual(p) for p in ("alice", "bob", "carol")])
    added = derive_relationships(bare, corpus)
    assert added == 2
    assert bare.has_edge("alice", "bob") and bare.has_edge("bob", "carol")


# -- graph stats --------------------------------------------------------------


def test_graph_stats_triangle(triangle_network):
    stats = graph_stats(triangle_network)
    assert stats.density == pytest.approx(1.0)
    assert stats.avg_degree == pytest.approx(2.0)
    assert stats.diameter == 1
    assert stats.avg_path_length == pytest.approx(1.0)


def test_graph_stats_path_graph():
    net = SocialNetwork([Individual(x) for x in "abc"], [("a", "b"), ("b", "c")])
    stats = graph_stats(net)
    assert stats.density == pytest.approx(2 / 3)
    assert stats.diameter == 2
    assert stats.avg_path_length == pytest.approx(4 / 3)


def test_graph_stats_disconnected_uses_largest_component():
    net = SocialNetwork(
        [Individual(x) for x in "abcde"], [("a", "b"), ("b", "c"), ("d", "e")]
    )
    stats = graph_stats(net)
    assert stats.component_count == 2
    assert stats.diameter == 2  # from the a-b-c component
    assert stats.node_count == 5


def test_graph_stats_empty_network_raises():
    with pytest.raises(CorpusError, match="empty network"):
        graph_stats(SocialNetwork())


@settings(max_examples=30, deadline=None)
@given(st.integers(min_value=2, max_value=12), st.randoms(use_true_random=False))
def test_graph_stats_invariants_on_random_connected_graphs(n, rng):
    people = [Individual(f"n{i}") for i in range(n)]
    net = SocialNetwork(people)
    ids = [p.id for p in people]
    for i in range(1, n):  # random spanning tree keeps it connected
        net.add_edge(ids[i], ids[rng.randrange(i)])
    for _ in range(n):
        a, b = rng.sample(ids, 2)
        if not net.has_edge(a, b):
            net.add_edge(a, b)
    stats = graph_stats(net)
    assert 0.0 <= stats.density <= 1.0
    assert stats.diameter >= stats.avg_path_length >= 1.0
    assert math.isclose(stats.avg_degree, 2 * stats.edge_count / stats.node_count)


# -- anonymization ------------------------------------------------------------


def _rachel_fixture():
    net = SocialNetwork(
        [Individual("Rachel", persona="Rachel works at the cafe"), Individual("Ross")],
        [("Rachel", "Ross")],
    )
    corpus = MessageCorpus(
        [
            Message("s1", 0, "Rachel", "Ross", "I'm Rachel! rachel's day was long."),
            Message("s1", 1, "Ross", "Rachel", "Hi Rachel, tell Rachelle I said hi."),
        ]
    )
    return net, corpus


def test_anonymize_renames_fields_and_text():
    net, corpus = _rachel_fixture()
    new_net, new_corpus = anonymize(net, corpus, {"Rachel": "Alice"})
    assert set(new_net.individuals) == {"Alice", "Ross"}
    msgs = list(new_corpus.iter_messages())
    assert msgs[0].sender == "Alice"
    assert msgs[0].text == "I'm Alice! Alice's day was long."
    # Whole-word only: "Rachelle" must survive.
    assert "Rachelle" in msgs[1].text
    assert msgs[1].text.startswith("Hi Alice")
    assert new_net.individuals["Alice"].persona == "Alice works at the cafe"
    assert len(new_corpus) == len(corpus)


def test_anonymize_empty_map_is_identity():
    net, corpus = _rachel_fixture()
    same_net, same_corpus = anonymize(net, corpus, {})
    assert same_net is net and same_corpus is corpus


def test_anonymize_rejects_non_injective_map():
    net, corpus = _rachel_fixture()
    with pytest.raises(CorpusError, match="not injective"):
        anonymize(net, corpus, {"Rachel": "Alice", "Ross": "Alice"})


def test_anonymize_rejects_existing_name():
    net, corpus = _rachel_fixture()
    with pytest.raises(CorpusError, match="name collision"):
        anonymize(net, corpus, {"Rachel": "Ross"})


def test_anonymize_tasks_renames_initiators_and_question():
    task = TaskInstance("t", "Who did Rachel meet?", "text", "Rachel", ("Rachel", "Ross"),
                        "accuracy")
    (renamed,) = anonymize_tasks([task], {"Rachel": "Alice"})
    assert renamed.initiators == ("Alice", "Ross")
    assert renamed.question == "Who did Alice meet?"
    assert renamed.answer == "Alice"


# -- tasks --------------------------------------------------------------------


def test_tasks_roundtrip(tmp_path):
    tasks = [
        TaskInstance("t1", "how many?", "count", 2, ("a", "b"), "count_accuracy", "easy"),
        TaskInstance("t2", "which names?", "names", ["x", "y"], ("a", "b"), "f1", "med",
                     extra={"vocabulary": ["x", "y", "z"]}),
        TaskInstance("t3", "when free?", "intervals", [(2, 4), (10, 12)], ("a", "b"),
                     "interval_iou", "hard"),
    ]
    path = tmp_path / "tasks.jsonl"
    save_tasks(tasks, path)
    loaded = load_tasks(path)
    assert loaded == tasks


def test_task_metric_must_match_kind():
    with pytest.raises(CorpusError, match="does not match"):
        TaskInstance("t", "q", "count", 1, ("a", "b"), "f1")


def test_load_tasks_bad_json(tmp_path):
    path = tmp_path / "tasks.jsonl"
    path.write_text("{not json\n", encoding="utf-8")
    with pytest.raises(CorpusError, match="tasks.jsonl:1"):
        load_tasks(path)
