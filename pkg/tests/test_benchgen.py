from __future__ import annotations

import re

import pytest

from asymagents.backend import BackendConfig, ChatBackend, ReplayEntry, ReplayScript
from asymagents.benchgen import (
    DEFAULT_NEEDLES,
    DEFAULT_PARTICIPANT_NAMES,
    DEFAULT_POOLS,
    GenerationError,
    NeedlePersona,
    PersonSchedule,
    audit_world,
    default_np_base,
    gen_dialogues,
    gen_np,
    gen_np_instance,
    gen_schedule_instance,
    gen_schedules,
    load_instance_dir,
    load_prepared_dataset,
    min_deletions_matching,
    oracle_easy,
    oracle_hard,
    oracle_medium,
    write_instance,
)
from asymagents.corpus import CorpusError, Message
from asymagents.intervals import SLOTS_PER_DAY
from conftest import TEST_DATA
from oracles import brute_common_free, brute_longest_names, naive_min_deletions, slot_audit


def sched(name: str, spans, co=()):
    s = PersonSchedule(name)
    for i, (a, b) in enumerate(spans):
        s.place(f"{name}-act{i}", a, b, tuple(co))
    return s


# -- generator ------------------------------------------------------------------


def test_gen_schedules_deterministic():
    a = gen_schedules(7, list(DEFAULT_PARTICIPANT_NAMES[:4]))
    b = gen_schedules(7, list(DEFAULT_PARTICIPANT_NAMES[:4]))
    for person in a.participants:
        assert a.schedules[person].assignments == b.schedules[person].assignments


def test_gen_schedules_respects_preferences():
    world = gen_schedules(3, list(DEFAULT_PARTICIPANT_NAMES[:4]))
    pref_pool = world.pools.preference_activities
    multi_names = {m.name for m in world.pools.multis}
    routine_names = {r.name for r in world.pools.routines}
    for person in world.participants:
        bits = world.preferences[person].bits
        assert len(bits) == len(pref_pool)
        for a in world.schedules[person].assignments:
            if a.activity in routine_names:
                continue
            idx = next(i for i, act in enumerate(pref_pool) if act.name == a.activity)
            assert bits[idx], f"{person} got unpreferred {a.activity}"
            if a.activity in multi_names:
                assert a.co_participants


def test_gen_schedules_passes_independent_slot_audit():
    for seed in range(30):
        n = 4 + seed % 3
        world = gen_schedules(seed, list(DEFAULT_PARTICIPANT_NAMES[:n]))
        assert slot_audit(world) == []
        assert audit_world(world) == []


def test_gen_schedules_needs_two_participants():
    with pytest.raises(GenerationError):
        gen_schedules(0, ["solo"])


# -- oracles ----------------------------------------------------------------------


def test_oracle_easy_single_conflict():
    assert oracle_easy(sched("a", [(2, 6)]), sched("b", [(4, 8)])) == 1


def test_oracle_easy_disjoint():
    assert oracle_easy(sched("a", [(0, 2), (10, 12)]), sched("b", [(4, 8)])) == 0


def test_oracle_easy_one_b_interval_covers_two():
    # Deleting b's [2,5) beats deleting both of a's intervals.
    assert oracle_easy(sched("a", [(1, 3), (4, 6)]), sched("b", [(2, 5)])) == 1


def test_oracle_easy_matches_brute_force_and_matching():
    for seed in range(60):
        n = 4 + seed % 3
        world = gen_schedules(seed, list(DEFAULT_PARTICIPANT_NAMES[:n]))
        a, b = world.initiators
        got = oracle_easy(world.schedules[a], world.schedules[b])
        assert got == naive_min_deletions(world.schedules[a], world.schedules[b])
        assert got == min_deletions_matching(world.schedules[a], world.schedules[b])


def test_oracle_medium_keeps_ties():
    s1 = PersonSchedule("p1")
    s1.place("A", 0, 4)
    s1.place("C", 6, 8)
    s2 = PersonSchedule("p2")
    s2.place("B", 10, 14)
    assert oracle_medium([s1, s2]) == {"A", "B"}


def test_oracle_medium_single():
    one = PersonSchedule("p")
    one.place("only", 0, 2)
    assert oracle_medium([one]) == {"only"}


def test_oracle_medium_empty_raises():
    with pytest.raises(GenerationError):
        oracle_medium([PersonSchedule("p")])


def test_oracle_medium_matches_brute_force():
    for seed in range(50):
        world = gen_schedules(seed + 100, list(DEFAULT_PARTICIPANT_NAMES[:5]))
        schedules = [world.schedules[p] for p in world.participants]
        assert oracle_medium(schedules) == brute_longest_names(schedules)


def test_oracle_hard_everyone_busy():
    s = PersonSchedule("p")
    s.place("all-day", 0, SLOTS_PER_DAY)
    assert oracle_hard([s]) == []


def test_oracle_hard_intersection_is_empty_when_one_person_busy():
    free = PersonSchedule("free")
    busy = PersonSchedule("busy")
    busy.place("all-day", 0, SLOTS_PER_DAY)
    assert oracle_hard([free, busy]) == []


def test_oracle_hard_merges_adjacent_free_slots():
    s1 = sched("a", [(4, 6)])
    s2 = sched("b", [(10, 12)])
    out = oracle_hard([s1, s2])
    assert out == [(0, 4), (6, 10), (12, SLOTS_PER_DAY)]


def test_oracle_hard_matches_bit_scan():
    for seed in range(50):
        world = gen_schedules(seed + 500, list(DEFAULT_PARTICIPANT_NAMES[:6]))
        schedules = [world.schedules[p] for p in world.participants]
        assert oracle_hard(schedules) == brute_common_free(schedules)


def test_oracle_hard_soundness_and_completeness():
    world = gen_schedules(77, list(DEFAULT_PARTICIPANT_NAMES[:6]))
    schedules = [world.schedules[p] for p in world.participants]
    intervals = oracle_hard(schedules)
    covered = set()
    for lo, hi in intervals:
        for t in range(lo, hi):
            covered.add(t)
            assert all(not s.time_vector[t] for s in schedules)
    for t in range(SLOTS_PER_DAY):
        if all(not s.time_vector[t] for s in schedules):
            assert t in covered


# -- dialogues --------------------------------------------------------------------

FACT_RE = re.compile(
    r"^From (\d{1,2}):(\d{2}) to (\d{1,2}):(\d{2}) "
    r"(?:I have|I am booked for|we have) (.+?)(?: together.*)?\.$"
)


def _extract_fact(text: str):
    m = FACT_RE.match(text)
    assert m, f"unparseable dialogue line: {text!r}"
    start = int(m.group(1)) * 2 + int(m.group(2)) // 30
    end = int(m.group(3)) * 2 + int(m.group(4)) // 30
    return m.group(5), start, end


def test_dialogue_states_every_assignment():
    world = gen_schedules(11, list(DEFAULT_PARTICIPANT_NAMES[:6]))
    corpus = gen_dialogues(world)
    for group in world.groups:
        leader = group[0]
        for other in group[1:]:
            session = corpus.sessions[f"dlg-{leader}-{other}"]
            stated = {}
            for msg in session:
                name, start, end = _extract_fact(msg.text)
                stated.setdefault(msg.sender, set()).add((name, start, end))
            for person in (leader, other):
                expected = {(a.activity, a.start, a.end)
                            for a in world.schedules[person].assignments}
                assert stated.get(person, set()) == expected


def test_dialogue_never_names_unshared_co_participants():
    for seed in (1, 2, 3, 4, 5):
        world = gen_schedules(seed, list(DEFAULT_PARTICIPANT_NAMES[:6]))
        corpus = gen_dialogues(world)
        all_names = set(world.participants)
        for msg in corpus.iter_messages():
            mentioned = {n for n in all_names if n in msg.text}
            sender_sched = world.schedules[msg.sender]
            allowed = set()
            for a in sender_sched.assignments:
                if msg.receiver in a.co_participants:
                    allowed.update(a.co_participants)
            assert mentioned <= allowed, (msg.text, mentioned, allowed)


def test_dialogue_shared_multi_names_other_participants():
    for seed in range(40):
        world = gen_schedules(seed, list(DEFAULT_PARTICIPANT_NAMES[:6]))
        corpus = gen_dialogues(world)
        found = False
        for msg in corpus.iter_messages():
            if "together with" in msg.text:
                found = True
        if found:
            return
    pytest.skip("no shared 3-person multi activity in sampled seeds")


def test_dialogue_deterministic():
    world = gen_schedules(9, list(DEFAULT_PARTICIPANT_NAMES[:4]))
    from asymagents.corpus import serialize_messages

    assert serialize_messages(gen_dialogues(world)) == serialize_messages(gen_dialogues(world))


def test_llm_dialogue_mode_parses_scripted_lines():
    world = gen_schedules(2, list(DEFAULT_PARTICIPANT_NAMES[:4]))
    entries = []
    for group in world.groups:
        leader, other = group[0], group[1]
        canned = (
            f"{leader} to {other}: my day starts with breakfast.\n"
            f"{other} to {leader}: mine too, then painting.\n"
            "noise line without the format\n"
        )
        entries.append(ReplayEntry(f"agent={leader} phase=dialogue", canned))
    backend = ChatBackend(BackendConfig(kind="scripted"), script=ReplayScript(entries))
    corpus = gen_dialogues(world, mode="llm", backend=backend)
    leader, other = world.groups[0][0], world.groups[0][1]
    first_session = corpus.sessions[f"dlg-{leader}-{other}"]
    assert [m.sender for m in first_session] == [leader, other]
    assert first_session[0].text == "my day starts with breakfast."


# -- schedule instances -------------------------------------------------------------


def test_gen_schedule_instance_easy():
    inst = gen_schedule_instance(3, "easy")
    assert len(inst.tasks) == 1
    task = inst.tasks[0]
    assert task.metric == "count_accuracy"
    assert task.initiators == ("alice", "carol")
    assert inst.network.has_edge(*task.initiators)
    world = gen_schedules(3, list(DEFAULT_PARTICIPANT_NAMES[:4]))
    assert task.answer == oracle_easy(world.schedules["alice"], world.schedules["carol"])


def test_gen_schedule_instance_medium_has_vocabulary():
    inst = gen_schedule_instance(5, "medium")
    task = inst.tasks[0]
    assert task.metric == "f1"
    assert set(task.answer) <= set(task.extra["vocabulary"])


def test_gen_schedule_instance_hard_intervals():
    inst = gen_schedule_instance(8, "hard")
    task = inst.tasks[0]
    assert task.metric == "interval_iou"
    for lo, hi in task.answer:
        assert 0 <= lo < hi <= SLOTS_PER_DAY


def test_instance_roundtrip(tmp_path):
    inst = gen_schedule_instance(4, "easy")
    write_instance(inst, tmp_path / "inst")
    loaded = load_instance_dir(tmp_path / "inst")
    assert loaded.tasks == inst.tasks
    assert loaded.network.edges == inst.network.edges
    assert len(loaded.corpus) == len(inst.corpus)


# -- needle pipeline -----------------------------------------------------------------


def test_gen_np_injects_into_both_target_dialogues():
    base = default_np_base(1)
    needle = DEFAULT_NEEDLES[0]
    inst = gen_np(base, needle)
    sessions = inst.corpus.sessions
    d1, d2 = sessions["np-alice-bob"], sessions["np-charlie-dave"]
    assert needle.insert_text in {m.text for m in d1}
    assert needle.insert_text in {m.text for m in d2}
    # carried by alice and dave only, never by the seekers
    carriers = {m.sender for m in list(d1) + list(d2) if needle.insert_text == m.text}
    assert carriers == {"alice", "dave"}
    assert inst.tasks[0].initiators == ("bob", "charlie")
    assert inst.tasks[0].metric == "accuracy"


def test_gen_np_opposite_variant():
    base = default_np_base(2)
    needle = DEFAULT_NEEDLES[0]
    inst = gen_np(base, needle, variant="opposite")
    d2 = inst.corpus.sessions["np-charlie-dave"]
    assert needle.opposite_insert in {m.text for m in d2}
    assert "cannot stand" in inst.tasks[0].question


def test_gen_np_requires_four_distinct_people():
    base = default_np_base(1)
    clash = [Message("np-alice-carol", 0, "alice", "carol", "hi")]
    with pytest.raises(GenerationError, match="four distinct"):
        gen_np((base[0], clash), DEFAULT_NEEDLES[0])


def test_empty_persona_rejected():
    with pytest.raises(GenerationError):
        NeedlePersona(insert_text="  ", answer="x", question_shared="q",
                      question_opposite="q", opposite_insert="o")


def test_gen_np_instance_structure():
    inst = gen_np_instance(1)
    assert inst.network.node_count == 4
    assert len(inst.corpus.sessions) == 2
    assert len(inst.tasks) == 1


# -- prepared datasets -----------------------------------------------------------------


def test_load_prepared_np_instance(tmp_path):
    write_instance(gen_np_instance(3), tmp_path)
    inst = load_prepared_dataset(tmp_path / "network.txt", tmp_path / "messages.tsv",
                                 tmp_path / "tasks.jsonl")
    assert inst.network.node_count == 4
    assert len(inst.corpus.sessions) == 2
    assert len(inst.tasks) == 1


def test_load_friends_format_sample():
    d = TEST_DATA / "friends_sample"
    inst = load_prepared_dataset(d / "network.txt", d / "messages.tsv", d / "tasks.jsonl")
    assert inst.network.node_count == 5
    assert inst.tasks[0].metric == "accuracy"
    # no explicit edges in the file: relationships derived from who spoke
    assert inst.network.has_edge("ross_geller", "carol_willick")
    assert inst.network.has_edge("phoebe_buffay", "chandler_bing")


def test_truncated_message_file_reports_line(tmp_path):
    write_instance(gen_np_instance(4), tmp_path)
    msgs = (tmp_path / "messages.tsv").read_text(encoding="utf-8").splitlines()
    broken = "\n".join(msgs[:3] + [msgs[3][: len(msgs[3]) // 4]])
    (tmp_path / "messages.tsv").write_text(broken, encoding="utf-8")
    with pytest.raises(CorpusError, match="messages.tsv:4"):
        load_prepared_dataset(tmp_path / "network.txt", tmp_path / "messages.tsv",
                              tmp_path / "tasks.jsonl")
