#!/usr/bin/env python3
"""Build the shipped replay fixtures under data/fixtures/.

Each fixture is a self-contained dataset instance (network, messages, tasks)
plus replay scripts that drive a deterministic end-to-end run. The script
verifies every fixture by actually running it before writing, so committed
fixtures cannot drift from the engine.
"""

from __future__ import annotations

import json
import sys
from pathlib import Path

ROOT = Path(__file__).resolve().parents[1]
sys.path.insert(0, str(ROOT / "src"))

from asymagents.agents import Engine, RunConfig  # noqa: E402
from asymagents.backend import BackendConfig, ChatBackend, ReplayScript, ReplayEntry  # noqa: E402
from asymagents.benchgen import (  # noqa: E402
    DEFAULT_POOLS,
    DatasetInstance,
    PersonSchedule,
    PreferenceVector,
    ScheduleWorld,
    gen_dialogues,
    gen_np_instance,
    network_for_world,
    oracle_easy,
    write_instance,
)
from asymagents.corpus import TaskInstance  # noqa: E402
from asymagents.trajectory import TrajectoryWriter  # noqa: E402

FIXTURES = ROOT / "data" / "fixtures"


def build_easy_world() -> ScheduleWorld:
    """Four people, one cross-pair conflict (alice's yoga vs carol's gym)."""
    schedules = {p: PersonSchedule(p) for p in ("alice", "bob", "carol", "dave")}
    schedules["alice"].place("yoga", 14, 18)              # 7:00-9:00
    schedules["alice"].place("reading", 40, 44)           # 20:00-22:00
    schedules["bob"].place("painting", 20, 24)            # 10:00-12:00
    schedules["carol"].place("gym session", 16, 20)       # 8:00-10:00
    schedules["carol"].place("pottery class", 30, 32)     # 15:00-16:00
    schedules["dave"].place("guitar practice", 36, 40)    # 18:00-20:00
    n_prefs = len(DEFAULT_POOLS.preference_activities)
    return ScheduleWorld(
        seed=0,
        participants=["alice", "bob", "carol", "dave"],
        groups=(["alice", "bob"], ["carol", "dave"]),
        schedules=schedules,
        preferences={p: PreferenceVector(p, (False,) * n_prefs) for p in schedules},
        pools=DEFAULT_POOLS,
        provenance={"kind": "fixture", "seed": 0, "generator_version": "1"},
    )


def header(agent: str, phase: str, turn: int, depth: int = 0) -> str:
    return f"[agent={agent} phase={phase} turn={turn} depth={depth}]"


PLAN_SLOTS = (
    "- [UNKNOWN] alice busy intervals today\n"
    "- [UNKNOWN] carol busy intervals today\n"
    "- [UNKNOWN] minimum deletions to remove overlaps"
)

ALICE_SCHEDULE = "yoga 7:00-9:00; reading 20:00-22:00"
CAROL_SCHEDULE = "gym session 8:00-10:00; pottery class 15:00-16:00"


def easy_dialogue_entries(final_turn_offset: int = 0) -> list[ReplayEntry]:
    """The six-utterance exchange between alice and carol reaching answer 1."""
    t = final_turn_offset
    return [
        ReplayEntry(header("alice", "think", t + 1),
                    "PLAN-UPDATE:\n"
                    f"- [KNOWN: {ALICE_SCHEDULE}] alice busy intervals today\n"
                    "CLEAR-QUERY: keywords=yoga,reading; window=0; limit=5\n"
                    "FUZZY-QUERY: text=schedule today; topk=1\n"
                    "INTENT: ask"),
        ReplayEntry(header("alice", "act", t + 1),
                    "Hi! alice is busy with yoga 7:00-9:00 and reading 20:00-22:00. "
                    "What is carol's schedule today?"),
        ReplayEntry(header("carol", "think", t + 2),
                    "PLAN-UPDATE:\n"
                    f"- [KNOWN: {CAROL_SCHEDULE}] carol busy intervals today\n"
                    f"- [KNOWN: {ALICE_SCHEDULE}] alice busy intervals today\n"
                    "CLEAR-QUERY: keywords=gym,pottery; window=0; limit=5\n"
                    "INTENT: inform"),
        ReplayEntry(header("carol", "act", t + 2),
                    "carol has a gym session 8:00-10:00 and a pottery class 15:00-16:00. "
                    "Your yoga overlaps my gym session."),
        ReplayEntry(header("alice", "think", t + 3),
                    "PLAN-UPDATE:\n"
                    f"- [KNOWN: {CAROL_SCHEDULE}] carol busy intervals today\n"
                    "- [KNOWN: 1] minimum deletions to remove overlaps\n"
                    "CLEAR-QUERY: keywords=yoga; window=1; limit=10\n"
                    "INTENT: inform"),
        ReplayEntry(header("alice", "act", t + 3),
                    "Only my yoga conflicts with your gym session; deleting one activity "
                    "clears every overlap."),
        ReplayEntry(header("carol", "think", t + 4),
                    "PLAN-UPDATE:\n"
                    "- [KNOWN: 1] minimum deletions to remove overlaps\n"
                    "INTENT: inform"),
        ReplayEntry(header("carol", "act", t + 4),
                    "Agreed: a single deletion (yoga or the gym session) removes the only overlap."),
        ReplayEntry(header("alice", "think", t + 5), "INTENT: conclude"),
        ReplayEntry(header("alice", "act", t + 5),
                    "I conclude the minimum number of deletions is 1."),
        ReplayEntry(header("carol", "think", t + 6), "INTENT: conclude"),
        ReplayEntry(header("carol", "act", t + 6), "Confirmed, the answer is 1."),
    ]


def write_script(path: Path, entries: list[ReplayEntry]) -> None:
    lines = [json.dumps({"cue": e.cue, "response": e.response}, ensure_ascii=False)
             for e in entries]
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def verify(instance: DatasetInstance, entries: list[ReplayEntry], config: RunConfig,
           expect_answer: str, expect_termination: str = "answered") -> None:
    backend = ChatBackend(BackendConfig(kind="scripted"), script=ReplayScript(list(entries)))
    writer = TrajectoryWriter(Path("/tmp") / "fixture_verify.jsonl")
    engine = Engine(instance.network, instance.corpus, backend, config, writer=writer)
    outcome = engine.run(instance.tasks[0])
    writer.close()
    assert outcome.termination == expect_termination, outcome
    assert outcome.answer == expect_answer, outcome
    assert backend.script.remaining == 0, f"{backend.script.remaining} unused script entries"
    if outcome.score is not None:
        assert outcome.score == 1.0, outcome


def make_schedule_easy() -> None:
    world = build_easy_world()
    corpus = gen_dialogues(world)
    network = network_for_world(world)
    answer = oracle_easy(world.schedules["alice"], world.schedules["carol"])
    assert answer == 1, answer
    task = TaskInstance(
        id="schedule-easy-fx01",
        question=(
            "Calculate how many activities need to be deleted at least so that "
            "there are no overlapping activities between you and me?"
        ),
        answer_kind="count",
        answer=answer,
        initiators=("alice", "carol"),
        metric="count_accuracy",
        dataset_tag="schedule-easy",
    )
    instance = DatasetInstance(network, corpus, [task],
                               {"kind": "fixture", "name": "schedule_easy"})
    plan_entries = [
        ReplayEntry(header("alice", "plan", 0), PLAN_SLOTS),
        ReplayEntry(header("carol", "plan", 0), PLAN_SLOTS),
    ]
    reason = [ReplayEntry(header("alice", "reason", 0), "1")]
    full = plan_entries + easy_dialogue_entries() + reason
    no_infonav = easy_dialogue_entries() + reason

    verify(instance, full, RunConfig(), expect_answer="1")
    verify(instance, no_infonav, RunConfig(infonav=False), expect_answer="1")

    out = FIXTURES / "schedule_easy"
    write_instance(instance, out)
    write_script(out / "replay.jsonl", full)
    write_script(out / "replay_noinfonav.jsonl", no_infonav)
    print(f"schedule_easy: {len(full)} replay entries")


def make_schedule_easy_recursive() -> None:
    world = build_easy_world()
    corpus = gen_dialogues(world)
    network = network_for_world(world)
    task = TaskInstance(
        id="schedule-easy-rec01",
        question=(
            "Calculate how many activities need to be deleted at least so that "
            "there are no overlapping activities between you and me?"
        ),
        answer_kind="count",
        answer=1,
        initiators=("alice", "carol"),
        metric="count_accuracy",
        dataset_tag="schedule-easy",
    )
    instance = DatasetInstance(network, corpus, [task],
                               {"kind": "fixture", "name": "schedule_easy_recursive"})

    plan_entries = [
        ReplayEntry(header("alice", "plan", 0), PLAN_SLOTS),
        ReplayEntry(header("carol", "plan", 0), PLAN_SLOTS),
    ]
    parent_t1 = [
        ReplayEntry(header("alice", "think", 1),
                    "INTENT: recurse bob: what are bob busy intervals today?"),
        ReplayEntry(header("alice", "act", 1),
                    "Hold on, let me check something with bob's agent first."),
    ]
    child = [
        ReplayEntry(header("alice", "plan", 0, 1), "- [UNKNOWN] bob busy intervals today"),
        ReplayEntry(header("bob", "plan", 0, 1), "- [UNKNOWN] bob busy intervals today"),
        ReplayEntry(header("alice", "think", 1, 1), "INTENT: ask"),
        ReplayEntry(header("alice", "act", 1, 1), "bob, what is on your schedule today?"),
        ReplayEntry(header("bob", "think", 2, 1),
                    "PLAN-UPDATE:\n- [KNOWN: painting 10:00-12:00] bob busy intervals today\n"
                    "CLEAR-QUERY: keywords=painting; window=0; limit=5\n"
                    "INTENT: inform"),
        ReplayEntry(header("bob", "act", 2, 1), "bob has painting from 10:00 to 12:00."),
        ReplayEntry(header("alice", "think", 3, 1),
                    "PLAN-UPDATE:\n- [KNOWN: painting 10:00-12:00] bob busy intervals today\n"
                    "INTENT: conclude"),
        ReplayEntry(header("alice", "act", 3, 1), "Noted, that answers it."),
        ReplayEntry(header("bob", "think", 4, 1), "INTENT: conclude"),
        ReplayEntry(header("bob", "act", 4, 1), "Agreed, concluding."),
        ReplayEntry(header("alice", "reason", 0, 1), "bob is busy with painting 10:00-12:00."),
    ]
    rest = [
        ReplayEntry(header("carol", "think", 2),
                    "PLAN-UPDATE:\n"
                    f"- [KNOWN: {CAROL_SCHEDULE}] carol busy intervals today\n"
                    "CLEAR-QUERY: keywords=gym,pottery; window=0; limit=5\n"
                    "INTENT: inform"),
        ReplayEntry(header("carol", "act", 2),
                    "carol has a gym session 8:00-10:00 and a pottery class 15:00-16:00."),
        ReplayEntry(header("alice", "think", 3),
                    "PLAN-UPDATE:\n"
                    f"- [KNOWN: {ALICE_SCHEDULE}] alice busy intervals today\n"
                    f"- [KNOWN: {CAROL_SCHEDULE}] carol busy intervals today\n"
                    "- [KNOWN: 1] minimum deletions to remove overlaps\n"
                    "CLEAR-QUERY: keywords=yoga,reading; window=0; limit=5\n"
                    "INTENT: inform"),
        ReplayEntry(header("alice", "act", 3),
                    "alice has yoga 7:00-9:00 and reading 20:00-22:00; only yoga conflicts "
                    "with your gym session, so one deletion suffices."),
        ReplayEntry(header("carol", "think", 4),
                    "PLAN-UPDATE:\n"
                    f"- [KNOWN: {ALICE_SCHEDULE}] alice busy intervals today\n"
                    "- [KNOWN: 1] minimum deletions to remove overlaps\n"
                    "INTENT: inform"),
        ReplayEntry(header("carol", "act", 4), "Agreed, one deletion removes the only overlap."),
        ReplayEntry(header("alice", "think", 5), "INTENT: conclude"),
        ReplayEntry(header("alice", "act", 5), "I conclude the answer is 1."),
        ReplayEntry(header("carol", "think", 6), "INTENT: conclude"),
        ReplayEntry(header("carol", "act", 6), "Confirmed, the answer is 1."),
        ReplayEntry(header("alice", "reason", 0), "1"),
    ]
    full = plan_entries + parent_t1 + child + rest
    # Without recursion the intent degrades to ask and no child calls happen.
    norec = plan_entries + parent_t1 + rest

    verify(instance, full, RunConfig(), expect_answer="1")
    verify(instance, norec, RunConfig(recursion=False), expect_answer="1")

    out = FIXTURES / "schedule_easy_recursive"
    write_instance(instance, out)
    write_script(out / "replay.jsonl", full)
    write_script(out / "replay_norecursion.jsonl", norec)
    print(f"schedule_easy_recursive: {len(full)} replay entries")


def make_np_basic() -> None:
    instance = gen_np_instance(seed=1)
    task = instance.tasks[0]
    answer = task.answer
    kw = answer.split()[0]
    plan_line = "- [UNKNOWN] the pastime alice and dave share"
    entries = [
        ReplayEntry(header("bob", "plan", 0), plan_line),
        ReplayEntry(header("charlie", "plan", 0), plan_line),
        ReplayEntry(header("bob", "think", 1),
                    f"CLEAR-QUERY: keywords={kw}; window=0; limit=5\nINTENT: ask"),
        ReplayEntry(header("bob", "act", 1),
                    f"charlie, alice recently mentioned {answer}. Does dave say anything similar?"),
        ReplayEntry(header("charlie", "think", 2),
                    "PLAN-UPDATE:\n"
                    f"- [KNOWN: {answer}] the pastime alice and dave share\n"
                    f"CLEAR-QUERY: keywords={kw}; window=0; limit=5\n"
                    "INTENT: inform"),
        ReplayEntry(header("charlie", "act", 2),
                    f"Yes, dave also talked about {answer} in our chat."),
        ReplayEntry(header("bob", "think", 3),
                    "PLAN-UPDATE:\n"
                    f"- [KNOWN: {answer}] the pastime alice and dave share\n"
                    "INTENT: conclude"),
        ReplayEntry(header("bob", "act", 3), "That settles it, concluding."),
        ReplayEntry(header("charlie", "think", 4), "INTENT: conclude"),
        ReplayEntry(header("charlie", "act", 4), "Agreed."),
        ReplayEntry(header("bob", "reason", 0), f"They both enjoy {answer}."),
    ]
    verify(instance, entries, RunConfig(), expect_answer=f"They both enjoy {answer}.")

    out = FIXTURES / "np_basic"
    write_instance(instance, out)
    write_script(out / "replay.jsonl", entries)
    print(f"np_basic: {len(entries)} replay entries (needle: {answer})")


def main() -> None:
    FIXTURES.mkdir(parents=True, exist_ok=True)
    make_schedule_easy()
    make_schedule_easy_recursive()
    make_np_basic()
    print(f"fixtures written to {FIXTURES}")


if __name__ == "__main__":
    main()
