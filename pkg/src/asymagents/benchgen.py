"""Benchmark construction.

Two pipelines: (1) schedule worlds — each participant gets a day of half-hour
slot activities, pairwise dialogues spread that knowledge inside two
information-symmetric groups, and three deterministic oracles provide ground
truth at three difficulties; (2) needle-persona instances — a planted persona
is injected into two non-adjacent people's dialogues and the other two
people's agents must identify it. Prepared datasets in the corpus file formats
load through :func:`load_prepared_dataset`.
"""

from __future__ import annotations

import hashlib
import itertools
import json
import math
import random
from dataclasses import dataclass, field
from pathlib import Path

from .corpus import (
    CorpusError,
    Individual,
    Message,
    MessageCorpus,
    SocialNetwork,
    TaskInstance,
    derive_relationships,
    load_messages,
    load_network,
    load_tasks,
    save_messages,
    save_network,
    save_tasks,
)
from .intervals import SLOTS_PER_DAY, slot_label

GENERATOR_VERSION = "1"


class GenerationError(RuntimeError):
    """World generation could not satisfy its constraints."""


# ---------------------------------------------------------------------------
# Activities and pools.
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Activity:
    name: str
    duration: int  # half-hour slots
    kind: str  # "single" | "multi" | "routine"
    required_participants: int = 1
    start_window: tuple[int, int] | None = None  # inclusive start-slot range (routines)

    def __post_init__(self) -> None:
        if not 1 <= self.duration <= SLOTS_PER_DAY:
            raise GenerationError(f"{self.name}: duration {self.duration} out of range")
        if self.kind == "multi" and self.required_participants < 2:
            raise GenerationError(f"{self.name}: multi activity needs >= 2 participants")
        if self.kind == "routine":
            if self.start_window is None:
                raise GenerationError(f"{self.name}: routine needs a start window")
            lo, hi = self.start_window
            if not (0 <= lo <= hi and hi + self.duration <= SLOTS_PER_DAY):
                raise GenerationError(f"{self.name}: invalid start window {self.start_window}")


@dataclass(frozen=True)
class ActivityPools:
    singles: tuple[Activity, ...]
    multis: tuple[Activity, ...]
    routines: tuple[Activity, ...]

    @property
    def preference_activities(self) -> tuple[Activity, ...]:
        """Activities governed by preference bits (routines apply to everyone)."""
        return self.multis + self.singles

    def digest(self) -> str:
        blob = json.dumps(
            [
                (a.name, a.duration, a.kind, a.required_participants, a.start_window)
                for a in self.multis + self.singles + self.routines
            ],
            sort_keys=True,
        )
        return hashlib.sha256(blob.encode("utf-8")).hexdigest()[:16]


DEFAULT_POOLS = ActivityPools(
    singles=(
        Activity("yoga", 2, "single"),
        Activity("reading", 3, "single"),
        Activity("grocery shopping", 2, "single"),
        Activity("guitar practice", 2, "single"),
        Activity("painting", 3, "single"),
        Activity("gaming", 2, "single"),
        Activity("journaling", 1, "single"),
        Activity("swimming", 2, "single"),
        Activity("gardening", 3, "single"),
        Activity("baking", 2, "single"),
    ),
    multis=(
        Activity("board games", 4, "multi", required_participants=3),
        Activity("movie night", 4, "multi", required_participants=2),
        Activity("study group", 3, "multi", required_participants=2),
        Activity("basketball", 2, "multi", required_participants=3),
        Activity("group hike", 5, "multi", required_participants=3),
        Activity("team project", 4, "multi", required_participants=2),
    ),
    routines=(
        Activity("breakfast", 1, "routine", start_window=(12, 19)),
        Activity("lunch", 2, "routine", start_window=(22, 28)),
        Activity("dinner", 2, "routine", start_window=(35, 41)),
    ),
)

DEFAULT_PARTICIPANT_NAMES = ("alice", "bob", "carol", "dave", "erin", "frank")


# ---------------------------------------------------------------------------
# Schedules.
# ---------------------------------------------------------------------------


@dataclass
class Assignment:
    activity: str
    start: int
    end: int
    co_participants: tuple[str, ...] = ()


@dataclass
class PersonSchedule:
    individual: str
    assignments: list[Assignment] = field(default_factory=list)
    time_vector: list[bool] = field(default_factory=lambda: [False] * SLOTS_PER_DAY)

    def fits(self, start: int, end: int) -> bool:
        return 0 <= start < end <= SLOTS_PER_DAY and not any(self.time_vector[start:end])

    def place(self, activity: str, start: int, end: int, co: tuple[str, ...] = ()) -> None:
        if not self.fits(start, end):
            raise GenerationError(
                f"{self.individual}: cannot place {activity} at [{start}, {end})"
            )
        self.assignments.append(Assignment(activity, start, end, co))
        for t in range(start, end):
            self.time_vector[t] = True

    def sorted_assignments(self) -> list[Assignment]:
        return sorted(self.assignments, key=lambda a: a.start)


@dataclass(frozen=True)
class PreferenceVector:
    individual: str
    bits: tuple[bool, ...]


@dataclass
class ScheduleWorld:
    seed: int
    participants: list[str]
    groups: tuple[list[str], list[str]]
    schedules: dict[str, PersonSchedule]
    preferences: dict[str, PreferenceVector]
    pools: ActivityPools
    provenance: dict

    @property
    def initiators(self) -> tuple[str, str]:
        return self.groups[0][0], self.groups[1][0]


class _PlacementFailure(Exception):
    pass


def _free_starts(schedules: list[PersonSchedule], duration: int,
                 lo: int = 0, hi: int | None = None) -> list[int]:
    hi = SLOTS_PER_DAY - duration if hi is None else hi
    return [s for s in range(lo, hi + 1) if all(p.fits(s, s + duration) for p in schedules)]


def _generate_once(rng: random.Random, participants: list[str], pools: ActivityPools,
                   max_singles: int) -> tuple[dict[str, PersonSchedule], dict[str, PreferenceVector]]:
    schedules = {p: PersonSchedule(p) for p in participants}
    pref_pool = pools.preference_activities
    preferences = {
        p: PreferenceVector(p, tuple(rng.random() < 0.6 for _ in pref_pool))
        for p in participants
    }

    def prefers(person: str, activity: Activity) -> bool:
        return preferences[person].bits[pref_pool.index(activity)]

    # Phase 1: multi-person activities first, identical span for all members.
    n_multi = min(math.ceil(len(participants) / 2), len(pools.multis))
    for activity in rng.sample(list(pools.multis), n_multi):
        willing = [p for p in participants if prefers(p, activity)]
        if len(willing) < activity.required_participants:
            continue
        placed = False
        for _ in range(10):
            members = rng.sample(willing, activity.required_participants)
            starts = _free_starts([schedules[m] for m in members], activity.duration)
            if not starts:
                continue
            start = rng.choice(starts)
            for m in members:
                co = tuple(x for x in members if x != m)
                schedules[m].place(activity.name, start, start + activity.duration, co)
            placed = True
            break
        if not placed:
            continue  # best effort: skip a multi activity that never fits

    # Phase 2: routines for everyone, start inside the allowed window.
    for person in participants:
        for routine in pools.routines:
            lo, hi = routine.start_window
            starts = _free_starts([schedules[person]], routine.duration, lo, hi)
            if not starts:
                raise _PlacementFailure(
                    f"{person}: no feasible start for routine {routine.name}"
                )
            start = rng.choice(starts)
            schedules[person].place(routine.name, start, start + routine.duration)

    # Phase 3: two-pointer sweep over free time, placing preferred singles.
    # The start offset inside each gap is randomized so that different people's
    # singles do not all pile up at the same gap boundaries.
    for person in participants:
        pending = [a for a in pools.singles if prefers(person, a)]
        rng.shuffle(pending)
        pending = pending[:max_singles]
        t = 0
        while t < SLOTS_PER_DAY and pending:
            if schedules[person].time_vector[t]:
                t += 1
                continue
            gap_end = t
            while gap_end < SLOTS_PER_DAY and not schedules[person].time_vector[gap_end]:
                gap_end += 1
            chosen = next((a for a in pending if a.duration <= gap_end - t), None)
            if chosen is None:
                t = gap_end
            else:
                start = rng.randint(t, gap_end - chosen.duration)
                schedules[person].place(chosen.name, start, start + chosen.duration)
                pending.remove(chosen)
                t = start + chosen.duration
    return schedules, preferences


def gen_schedules(
    seed: int,
    participants: list[str] | None = None,
    pools: ActivityPools = DEFAULT_POOLS,
    max_singles: int = 3,
    max_regen: int = 50,
) -> ScheduleWorld:
    """Generate one schedule world, deterministically from the seed.

    Infeasible placements trigger regeneration with the next derived seed;
    the number of regenerations is recorded in provenance.
    """
    if participants is None:
        participants = list(DEFAULT_PARTICIPANT_NAMES[:4])
    if len(participants) < 2:
        raise GenerationError("need at least 2 participants")
    if len(set(participants)) != len(participants):
        raise GenerationError("participant names must be unique")
    for attempt in range(max_regen):
        effective = seed + attempt * 1_000_003
        rng = random.Random(effective)
        try:
            schedules, preferences = _generate_once(rng, participants, pools, max_singles)
        except _PlacementFailure:
            continue
        half = math.ceil(len(participants) / 2)
        groups = (list(participants[:half]), list(participants[half:]))
        world = ScheduleWorld(
            seed=seed,
            participants=list(participants),
            groups=groups,
            schedules=schedules,
            preferences=preferences,
            pools=pools,
            provenance={
                "kind": "schedule",
                "seed": seed,
                "effective_seed": effective,
                "regenerations": attempt,
                "pool_digest": pools.digest(),
                "generator_version": GENERATOR_VERSION,
            },
        )
        problems = audit_world(world)
        if problems:  # generator bug, not an unlucky draw
            raise GenerationError(f"internal audit failed: {problems[:3]}")
        return world
    raise GenerationError(f"could not generate a feasible world after {max_regen} attempts")


def audit_world(world: ScheduleWorld) -> list[str]:
    """Structural audit: overlap-free assignments, time-vector consistency,
    routines inside windows, and span-identical shared multi activities.
    """
    problems: list[str] = []
    by_activity: dict[str, set[tuple[int, int]]] = {}
    routine_names = {a.name: a for a in world.pools.routines}
    multi_names = {a.name for a in world.pools.multis}
    for person, sched in world.schedules.items():
        covered = [False] * SLOTS_PER_DAY
        for a in sched.assignments:
            if not (0 <= a.start < a.end <= SLOTS_PER_DAY):
                problems.append(f"{person}/{a.activity}: bad bounds [{a.start}, {a.end})")
                continue
            for t in range(a.start, a.end):
                if covered[t]:
                    problems.append(f"{person}: overlap at slot {t}")
                covered[t] = True
            if a.activity in routine_names:
                lo, hi = routine_names[a.activity].start_window
                if not lo <= a.start <= hi:
                    problems.append(
                        f"{person}/{a.activity}: start {a.start} outside window [{lo}, {hi}]"
                    )
            if a.activity in multi_names:
                by_activity.setdefault(a.activity, set()).add((a.start, a.end))
                for other in a.co_participants:
                    if other not in world.schedules:
                        problems.append(f"{person}/{a.activity}: unknown co-participant {other}")
        if covered != sched.time_vector:
            problems.append(f"{person}: time vector inconsistent with assignments")
    for name, spans in by_activity.items():
        if len(spans) > 1:
            problems.append(f"{name}: differing spans across participants {sorted(spans)}")
    return problems


# ---------------------------------------------------------------------------
# Oracles.
# ---------------------------------------------------------------------------


def _spans(schedule: PersonSchedule) -> list[tuple[int, int]]:
    return [(a.start, a.end) for a in schedule.sorted_assignments()]


def _overlaps(a: tuple[int, int], b: tuple[int, int]) -> bool:
    return a[0] < b[1] and b[0] < a[1]


def conflict_edges(sched_a: PersonSchedule, sched_b: PersonSchedule) -> list[tuple[int, int]]:
    """Cross-schedule overlap pairs as (index into A, index into B)."""
    spans_a, spans_b = _spans(sched_a), _spans(sched_b)
    return [
        (i, j)
        for i, sa in enumerate(spans_a)
        for j, sb in enumerate(spans_b)
        if _overlaps(sa, sb)
    ]


def oracle_easy(sched_a: PersonSchedule, sched_b: PersonSchedule) -> int:
    """Minimum number of activities (from either schedule) to delete so that no
    interval of A overlaps any interval of B.

    Exhaustive search over deletion subsets in increasing size. Only intervals
    involved in at least one conflict are candidates — deleting anything else
    cannot remove an overlap — which keeps the search exact and desk-fast.
    """
    len_a = len(sched_a.assignments)
    edges = [(i, len_a + j) for i, j in conflict_edges(sched_a, sched_b)]
    if not edges:
        return 0
    involved = sorted({v for edge in edges for v in edge})
    for k in range(1, len(involved) + 1):
        for combo in itertools.combinations(involved, k):
            chosen = set(combo)
            if all(u in chosen or v in chosen for u, v in edges):
                return k
    return len(involved)  # unreachable: deleting every involved interval works


def min_deletions_matching(sched_a: PersonSchedule, sched_b: PersonSchedule) -> int:
    """Independent cross-check: size of a maximum matching in the bipartite
    overlap graph, which equals the minimum vertex cover (König), which is the
    minimum number of deletions.
    """
    edges = conflict_edges(sched_a, sched_b)
    adj: dict[int, list[int]] = {}
    for i, j in edges:
        adj.setdefault(i, []).append(j)
    match_right: dict[int, int] = {}

    def try_augment(left: int, seen: set[int]) -> bool:
        for right in adj.get(left, ()):
            if right in seen:
                continue
            seen.add(right)
            if right not in match_right or try_augment(match_right[right], seen):
                match_right[right] = left
                return True
        return False

    return sum(1 for left in sorted(adj) if try_augment(left, set()))


def oracle_medium(schedules: list[PersonSchedule]) -> set[str]:
    """Names of every activity whose duration ties the global maximum."""
    durations: dict[str, int] = {}
    for sched in schedules:
        for a in sched.assignments:
            durations[a.activity] = max(durations.get(a.activity, 0), a.end - a.start)
    if not durations:
        raise GenerationError("no assignments to rank")
    longest = max(durations.values())
    return {name for name, d in durations.items() if d == longest}


def oracle_hard(schedules: list[PersonSchedule]) -> list[tuple[int, int]]:
    """Maximal half-open slot intervals during which every participant is free."""
    free = [all(not s.time_vector[t] for s in schedules) for t in range(SLOTS_PER_DAY)]
    out: list[tuple[int, int]] = []
    t = 0
    while t < SLOTS_PER_DAY:
        if free[t]:
            start = t
            while t < SLOTS_PER_DAY and free[t]:
                t += 1
            out.append((start, t))
        else:
            t += 1
    return out


# ---------------------------------------------------------------------------
# Dialogues.
# ---------------------------------------------------------------------------


def _assignment_sentence(assign: Assignment, receiver: str) -> str:
    span = f"From {slot_label(assign.start)} to {slot_label(assign.end)}"
    if assign.co_participants:
        if receiver in assign.co_participants:
            others = [p for p in assign.co_participants if p != receiver]
            suffix = f" together with {', '.join(others)}" if others else " together"
            return f"{span} we have {assign.activity}{suffix}."
        # Unshared multi activity: co-participants must stay unnamed.
        return f"{span} I am booked for {assign.activity}."
    return f"{span} I have {assign.activity}."


def _pair_session(session_id: str, first: str, second: str,
                  sched_first: PersonSchedule, sched_second: PersonSchedule) -> list[Message]:
    facts_first = sched_first.sorted_assignments()
    facts_second = sched_second.sorted_assignments()
    messages: list[Message] = []
    seq = 0
    for k in range(max(len(facts_first), len(facts_second))):
        if k < len(facts_first):
            messages.append(
                Message(session_id, seq, first, second, _assignment_sentence(facts_first[k], second))
            )
            seq += 1
        if k < len(facts_second):
            messages.append(
                Message(session_id, seq, second, first, _assignment_sentence(facts_second[k], first))
            )
            seq += 1
    return messages


def gen_dialogues(world: ScheduleWorld, mode: str = "template", backend=None) -> MessageCorpus:
    """Pairwise dialogues between each group's leader and its members; every
    assignment of both speakers is stated at least once.
    """
    if mode not in ("template", "llm"):
        raise GenerationError(f"unknown dialogue mode {mode!r}")
    messages: list[Message] = []
    for group in world.groups:
        leader = group[0]
        for other in group[1:]:
            session_id = f"dlg-{leader}-{other}"
            if mode == "template":
                messages.extend(
                    _pair_session(session_id, leader, other,
                                  world.schedules[leader], world.schedules[other])
                )
            else:
                messages.extend(
                    _llm_pair_session(session_id, leader, other, world, backend)
                )
    return MessageCorpus(messages)


def _llm_pair_session(session_id: str, first: str, second: str,
                      world: ScheduleWorld, backend) -> list[Message]:
    from . import prompts

    if backend is None:
        raise GenerationError("llm dialogue mode needs a chat backend")
    facts = []
    for person in (first, second):
        for a in world.schedules[person].sorted_assignments():
            facts.append(f"- {person}: {_assignment_sentence(a, receiver='')}")
    prompt = prompts.get("dialogue").render(
        header=prompts.make_header(first, "dialogue", 0),
        person1=first,
        person2=second,
        facts="\n".join(facts),
    )
    text = backend.chat_text(prompt)
    messages = []
    seq = 0
    for line in text.splitlines():
        line = line.strip()
        for sender, receiver in ((first, second), (second, first)):
            prefix = f"{sender} to {receiver}:"
            if line.startswith(prefix):
                body = line[len(prefix):].strip()
                if body:
                    messages.append(Message(session_id, seq, sender, receiver, body))
                    seq += 1
                break
    if not messages:
        raise GenerationError(f"llm dialogue for {session_id} produced no parseable lines")
    return messages


# ---------------------------------------------------------------------------
# Task emission and instance assembly.
# ---------------------------------------------------------------------------

EASY_QUESTION = (
    "Calculate how many activities need to be deleted at least so that there "
    "are no overlapping activities between you and me?"
)
MEDIUM_QUESTION = "Please find out the activity with longest duration on the schedule of all people."
HARD_QUESTION = (
    "Please find out when all our friends can join together today and list all free time spans."
)


def make_schedule_task(world: ScheduleWorld, difficulty: str) -> TaskInstance:
    a, b = world.initiators
    all_scheds = [world.schedules[p] for p in world.participants]
    task_id = f"schedule-{difficulty}-{world.seed:04d}"
    if difficulty == "easy":
        return TaskInstance(
            id=task_id,
            question=EASY_QUESTION,
            answer_kind="count",
            answer=oracle_easy(world.schedules[a], world.schedules[b]),
            initiators=(a, b),
            metric="count_accuracy",
            dataset_tag="schedule-easy",
        )
    if difficulty == "medium":
        names = sorted(oracle_medium(all_scheds))
        vocabulary = sorted({x.activity for s in all_scheds for x in s.assignments})
        return TaskInstance(
            id=task_id,
            question=MEDIUM_QUESTION,
            answer_kind="names",
            answer=names,
            initiators=(a, b),
            metric="f1",
            dataset_tag="schedule-medium",
            extra={"vocabulary": vocabulary},
        )
    if difficulty == "hard":
        return TaskInstance(
            id=task_id,
            question=HARD_QUESTION,
            answer_kind="intervals",
            answer=oracle_hard(all_scheds),
            initiators=(a, b),
            metric="interval_iou",
            dataset_tag="schedule-hard",
        )
    raise GenerationError(f"unknown difficulty {difficulty!r}")


def network_for_world(world: ScheduleWorld) -> SocialNetwork:
    net = SocialNetwork(individuals=[Individual(p) for p in world.participants])
    for group in world.groups:
        for other in group[1:]:
            net.add_edge(group[0], other)
    if len(world.groups[0]) and len(world.groups[1]):
        net.add_edge(*world.initiators)
    return net


@dataclass
class DatasetInstance:
    network: SocialNetwork
    corpus: MessageCorpus
    tasks: list[TaskInstance]
    provenance: dict


def gen_schedule_instance(seed: int, difficulty: str, participants: list[str] | None = None,
                          pools: ActivityPools = DEFAULT_POOLS) -> DatasetInstance:
    if participants is None:
        n = 4 if difficulty == "easy" else 6
        participants = list(DEFAULT_PARTICIPANT_NAMES[:n])
    if len(participants) < 4:
        raise GenerationError("dialogue/task emission needs at least 4 participants")
    world = gen_schedules(seed, participants, pools)
    corpus = gen_dialogues(world)
    network = network_for_world(world)
    corpus.validate_against(network)
    task = make_schedule_task(world, difficulty)
    provenance = dict(world.provenance)
    provenance["difficulty"] = difficulty
    return DatasetInstance(network, corpus, [task], provenance)


# ---------------------------------------------------------------------------
# Needle-in-persona pipeline.
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class NeedlePersona:
    insert_text: str
    answer: str
    question_shared: str
    question_opposite: str
    opposite_insert: str

    def __post_init__(self) -> None:
        if not self.insert_text.strip() or not self.answer.strip():
            raise GenerationError("needle persona needs nonempty insert text and answer")


DEFAULT_NEEDLES = (
    NeedlePersona(
        insert_text=(
            "Lately, whenever I find some quiet time, I am deep into reading "
            "mystery novels; it is how I unwind."
        ),
        opposite_insert=(
            "Honestly, I cannot stand reading mystery novels; they bore me to tears."
        ),
        answer="reading mystery novels",
        question_shared="What pastime do {a} and {b} both enjoy in their quiet time?",
        question_opposite="What pastime does {a} enjoy that {b} cannot stand?",
    ),
    NeedlePersona(
        insert_text=(
            "I picked up birdwatching this spring and now spend my early mornings "
            "out with binoculars."
        ),
        opposite_insert="Birdwatching is the dullest hobby imaginable; I avoid it completely.",
        answer="birdwatching",
        question_shared="What hobby do {a} and {b} have in common these days?",
        question_opposite="What hobby does {a} love that {b} finds dull?",
    ),
    NeedlePersona(
        insert_text="I have been baking sourdough every weekend and the loaves keep improving.",
        opposite_insert="I refuse to bake sourdough; the whole starter ritual puts me off.",
        answer="baking sourdough",
        question_shared="What weekend activity do {a} and {b} both practice?",
        question_opposite="What weekend activity does {a} practice that {b} refuses?",
    ),
)

_SMALL_TALK = (
    ("what do you do for a living?", "i work as a {job}."),
    ("how is the week going?", "busy, but i am keeping up."),
    ("seen anything good lately?", "a couple of films, nothing memorable."),
    ("any plans for the weekend?", "probably errands, maybe a walk."),
    ("how do you unwind after work?", "music mostly, sometimes a run."),
    ("tried the new cafe downtown?", "not yet, heard the espresso is great."),
)
_JOBS = ("secretary at a law firm", "grill cook", "video editor", "cab dispatcher")


def default_np_base(seed: int,
                    people: tuple[str, str, str, str] = ("alice", "bob", "charlie", "dave"),
                    ) -> tuple[list[Message], list[Message]]:
    """Two deterministic small-talk dialogues (pair 1: people[0]+[1], pair 2:
    people[2]+[3]) to host a needle injection.
    """
    rng = random.Random(seed)
    dialogues = []
    for first, second in ((people[0], people[1]), (people[2], people[3])):
        session_id = f"np-{first}-{second}"
        lines = rng.sample(_SMALL_TALK, 4)
        job = rng.choice(_JOBS)
        msgs = []
        seq = 0
        for question, reply in lines:
            msgs.append(Message(session_id, seq, first, second, question))
            seq += 1
            msgs.append(Message(session_id, seq, second, first, reply.format(job=job)))
            seq += 1
        dialogues.append(msgs)
    return dialogues[0], dialogues[1]


def gen_np(
    base_dialogues: tuple[list[Message], list[Message]],
    needle: NeedlePersona,
    variant: str = "shared",
) -> DatasetInstance:
    """Inject a needle persona into the non-adjacent pair of two dialogues.

    With dialogues (a, b) and (c, d), the persona goes to a and d; the task
    asks b's and c's agents to identify it. The "opposite" variant plants the
    contrasting persona on d instead of the shared one.
    """
    if variant not in ("shared", "opposite"):
        raise GenerationError(f"unknown needle variant {variant!r}")
    d1, d2 = base_dialogues
    if not d1 or not d2:
        raise GenerationError("both base dialogues must be nonempty")

    def pair_of(msgs: list[Message]) -> tuple[str, str]:
        first = msgs[0].sender
        second = msgs[0].receiver
        return first, second

    a, b = pair_of(d1)
    c, d = pair_of(d2)
    if len({a, b, c, d}) != 4:
        raise GenerationError("needle injection needs four distinct individuals")

    second_text = needle.insert_text if variant == "shared" else needle.opposite_insert
    amended_1 = list(d1) + [Message(d1[0].session_id, len(d1), a, b, needle.insert_text)]
    amended_2 = list(d2) + [Message(d2[0].session_id, len(d2), d, c, second_text)]
    corpus = MessageCorpus(amended_1 + amended_2)

    network = SocialNetwork(individuals=[Individual(x) for x in sorted({a, b, c, d})])
    network.add_edge(a, b)
    network.add_edge(c, d)
    network.add_edge(b, c)  # the two seekers must be able to communicate

    template = needle.question_shared if variant == "shared" else needle.question_opposite
    task = TaskInstance(
        id=f"np-{variant}-{a}-{d}",
        question=template.format(a=a, b=d),
        answer_kind="text",
        answer=needle.answer,
        initiators=(b, c),
        metric="accuracy",
        dataset_tag="np",
    )
    provenance = {
        "kind": "np",
        "variant": variant,
        "carriers": [a, d],
        "generator_version": GENERATOR_VERSION,
    }
    return DatasetInstance(network, corpus, [task], provenance)


def gen_np_instance(seed: int, variant: str = "shared") -> DatasetInstance:
    rng = random.Random(seed)
    needle = rng.choice(DEFAULT_NEEDLES)
    base = default_np_base(seed)
    instance = gen_np(base, needle, variant)
    instance.provenance["seed"] = seed
    return instance


# ---------------------------------------------------------------------------
# Prepared datasets and instance files.
# ---------------------------------------------------------------------------


def load_prepared_dataset(
    network_path: str | Path, messages_path: str | Path, tasks_path: str | Path
) -> DatasetInstance:
    """Load and validate a prepared dataset in the corpus file formats.

    When the network file lists no edges, relationships are derived from who
    messaged whom.
    """
    network = load_network(network_path)
    corpus = load_messages(messages_path, network)
    if network.edge_count == 0:
        derive_relationships(network, corpus)
    tasks = load_tasks(tasks_path, network)
    if not tasks:
        raise CorpusError(f"{tasks_path}: no tasks")
    return DatasetInstance(network, corpus, tasks, provenance={"kind": "prepared"})


def load_instance_dir(path: str | Path) -> DatasetInstance:
    path = Path(path)
    instance = load_prepared_dataset(
        path / "network.txt", path / "messages.tsv", path / "tasks.jsonl"
    )
    prov_path = path / "provenance.json"
    if prov_path.exists():
        instance.provenance = json.loads(prov_path.read_text(encoding="utf-8"))
    return instance


def write_instance(instance: DatasetInstance, out_dir: str | Path) -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    save_network(instance.network, out / "network.txt")
    save_messages(instance.corpus, out / "messages.tsv")
    save_tasks(instance.tasks, out / "tasks.jsonl")
    (out / "provenance.json").write_text(
        json.dumps(instance.provenance, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
