"""Plan state machine for information-seeking dialogue.

A plan is an ordered list of rationale slots, each either unknown or filled
with a value learned during communication. The plan text is what the agent
re-reads every turn to decide what to ask next; after communication ends, the
two agents' plans are merged by consensus, discarding conflicting values.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from statistics import mean
from typing import Callable

UNKNOWN_MARK = "[UNKNOWN]"

# Wire format accepted from backends: "- [UNKNOWN] desc" / "- [KNOWN: value] desc".
WIRE_UNKNOWN_RE = re.compile(r"^-\s*\[UNKNOWN\]\s*(?P<desc>.+?)\s*$")
WIRE_KNOWN_RE = re.compile(r"^-\s*\[KNOWN:\s*(?P<value>.*?)\]\s*(?P<desc>.+?)\s*$")
# Rendered format: "- desc: value" / "- desc: [UNKNOWN]".
RENDER_RE = re.compile(r"^-\s*(?P<desc>[^:]+?)\s*:\s*(?P<rest>.*?)\s*$")

DEFAULT_FAKE_PATTERNS = (
    "unknown",
    "not known",
    "n/a",
    "tbd",
    "to be determined",
    "no information",
)


class PlanError(ValueError):
    """Malformed plan text or invalid slot operation."""

    def __init__(self, message: str, raw: str | None = None):
        super().__init__(message)
        self.raw = raw


def _clean_description(desc: str) -> str:
    # Colons are reserved by the rendered plan format; whitespace is collapsed.
    cleaned = " ".join(desc.replace(":", ";").split())
    if not cleaned:
        raise PlanError("slot description must be nonempty")
    return cleaned


def _clean_value(value: str) -> str:
    cleaned = " ".join(value.split())
    if not cleaned:
        raise PlanError("filled value must be nonempty")
    if cleaned == UNKNOWN_MARK:
        raise PlanError(f"filled value may not be the literal {UNKNOWN_MARK}")
    return cleaned


def normalize_key(text: str) -> str:
    return " ".join(text.lower().split())


@dataclass
class RationaleSlot:
    description: str
    value: str | None = None  # None while unknown
    kind: str = "rationale"  # "rationale" | "state"

    @property
    def filled(self) -> bool:
        return self.value is not None


@dataclass(frozen=True)
class PlanRevision:
    turn: int
    slot_index: int
    old: str | None
    new: str


@dataclass
class Plan:
    question: str
    slots: list[RationaleSlot]
    history: list[PlanRevision] = field(default_factory=list)

    def __post_init__(self) -> None:
        if not self.slots:
            raise PlanError("a plan needs at least one slot")

    def filled_count(self) -> int:
        return sum(1 for s in self.slots if s.filled)

    def slot_index(self, description: str) -> int | None:
        key = normalize_key(description)
        for i, slot in enumerate(self.slots):
            if normalize_key(slot.description) == key:
                return i
        return None


def parse_wire_slots(text: str) -> list[tuple[str, str | None]]:
    """Parse backend slot lines into (description, value-or-None) pairs."""
    out = []
    for line in text.splitlines():
        line = line.strip()
        m = WIRE_KNOWN_RE.match(line)
        if m:
            out.append((m.group("desc"), m.group("value").strip()))
            continue
        m = WIRE_UNKNOWN_RE.match(line)
        if m:
            out.append((m.group("desc"), None))
    return out


def new_plan(question: str, chat: Callable[[str], str], prompt: str) -> Plan:
    """Ask the backend for a plan; every slot starts unknown regardless of how
    the backend marked it.
    """
    response = chat(prompt)
    pairs = parse_wire_slots(response)
    if not pairs:
        raise PlanError("planning response contains no slot lines", raw=response)
    slots = [RationaleSlot(_clean_description(desc)) for desc, _ in pairs]
    return Plan(question=question, slots=slots)


def render_plan(plan: Plan) -> str:
    lines = [f"Question: {plan.question}"]
    for slot in plan.slots:
        rest = slot.value if slot.filled else UNKNOWN_MARK
        lines.append(f"- {slot.description}: {rest}")
    return "\n".join(lines)


def parse_plan(text: str) -> Plan:
    """Inverse of :func:`render_plan`; slot statuses survive a round trip."""
    question = ""
    slots: list[RationaleSlot] = []
    for line in text.splitlines():
        line = line.strip()
        if line.startswith("Question:"):
            question = line[len("Question:") :].strip()
            continue
        m = RENDER_RE.match(line)
        if not m:
            continue
        desc = m.group("desc").strip()
        rest = m.group("rest").strip()
        if rest == UNKNOWN_MARK:
            slots.append(RationaleSlot(desc))
        else:
            slots.append(RationaleSlot(desc, value=rest))
    if not slots:
        raise PlanError("no slot lines found in plan text", raw=text)
    return Plan(question=question, slots=slots)


def apply_update(plan: Plan, updates: list[tuple[int, str]], turn: int) -> Plan:
    """Fill (or revise) the listed slots; each change is recorded in history."""
    for index, value in updates:
        if not 0 <= index < len(plan.slots):
            raise PlanError(f"slot index {index} out of range 0..{len(plan.slots) - 1}")
        value = _clean_value(value)
        slot = plan.slots[index]
        plan.history.append(PlanRevision(turn=turn, slot_index=index, old=slot.value, new=value))
        slot.value = value
    return plan


def add_slot(plan: Plan, description: str, kind: str = "rationale") -> int:
    """Append a new unknown slot mid-communication; returns its index."""
    plan.slots.append(RationaleSlot(_clean_description(description), kind=kind))
    return len(plan.slots) - 1


def _fake_regexes(patterns) -> list[re.Pattern[str]]:
    return [re.compile(r"(?<!\w)" + re.escape(p) + r"(?!\w)", re.IGNORECASE) for p in patterns]


def detect_fake_solved(slot_or_value, patterns=DEFAULT_FAKE_PATTERNS) -> bool:
    """True when a filled value is really an unknown-marker phrase."""
    if isinstance(slot_or_value, RationaleSlot):
        if not slot_or_value.filled:
            raise PlanError("fake-solved detection requires a filled slot")
        value = slot_or_value.value
    else:
        value = slot_or_value
    return any(rx.search(value) for rx in _fake_regexes(patterns))


def _values_equal(a: str, b: str) -> bool:
    na, nb = normalize_key(a), normalize_key(b)
    try:
        return float(na) == float(nb)
    except ValueError:
        return na == nb


@dataclass(frozen=True)
class ConsensusResult:
    merged: dict[str, str]
    conflicts: list[tuple[str, str, str]]
    agreement_ratio: float


def consensus(
    plan_a: Plan,
    plan_b: Plan,
    fake_patterns=DEFAULT_FAKE_PATTERNS,
) -> ConsensusResult:
    """Merge two finished plans.

    Slots are matched by normalized description. Values filled on both sides
    must agree (numeric-aware) to be merged; disagreements are discarded into
    `conflicts`. A value filled on one side only is merged as a single source.
    Fake-solved values count as unknown. The agreement ratio is computed over
    descriptions genuinely filled by both sides (1.0 when there are none).
    """

    def effective(plan: Plan) -> dict[str, str]:
        out: dict[str, str] = {}
        for slot in plan.slots:
            if slot.filled and not detect_fake_solved(slot.value, fake_patterns):
                out[normalize_key(slot.description)] = slot.value
        return out

    values_a, values_b = effective(plan_a), effective(plan_b)
    merged: dict[str, str] = {}
    conflicts: list[tuple[str, str, str]] = []
    both = 0
    agreed = 0
    for key in sorted(set(values_a) | set(values_b)):
        va, vb = values_a.get(key), values_b.get(key)
        if va is not None and vb is not None:
            both += 1
            if _values_equal(va, vb):
                agreed += 1
                merged[key] = min(va, vb)
            else:
                conflicts.append((key, va, vb))
        else:
            merged[key] = va if va is not None else vb
    ratio = (agreed / both) if both else 1.0
    return ConsensusResult(merged=merged, conflicts=conflicts, agreement_ratio=ratio)


@dataclass(frozen=True)
class TrajectoryStats:
    rationale_count: float
    solved_per_update: float
    solved_ratio: float
    fake_solved_ratio: float
    consensus_ratio: float


def trajectory_stats(
    plans: list[Plan],
    consensus_results: list[ConsensusResult],
    fake_patterns=DEFAULT_FAKE_PATTERNS,
) -> TrajectoryStats:
    """Per-plan statistics averaged across trajectories.

    solved_per_update counts fresh unknown->known fills, grouped by the turn
    they happened in; revisions of already-filled slots do not count as newly
    solved.
    """
    if not plans:
        raise PlanError("trajectory stats need at least one plan")
    per_plan_updates: list[float] = []
    solved_ratios: list[float] = []
    fake_ratios: list[float] = []
    for plan in plans:
        fills_by_turn: dict[int, int] = {}
        for rev in plan.history:
            if rev.old is None:
                fills_by_turn[rev.turn] = fills_by_turn.get(rev.turn, 0) + 1
        if fills_by_turn:
            per_plan_updates.append(mean(fills_by_turn.values()))
        total = len(plan.slots)
        fake = sum(
            1 for s in plan.slots if s.filled and detect_fake_solved(s.value, fake_patterns)
        )
        solved = sum(1 for s in plan.slots if s.filled) - fake
        solved_ratios.append(solved / total)
        fake_ratios.append(fake / total)
    return TrajectoryStats(
        rationale_count=mean(len(p.slots) for p in plans),
        solved_per_update=mean(per_plan_updates) if per_plan_updates else 0.0,
        solved_ratio=mean(solved_ratios),
        fake_solved_ratio=mean(fake_ratios),
        consensus_ratio=(
            mean(c.agreement_ratio for c in consensus_results) if consensus_results else 1.0
        ),
    )
