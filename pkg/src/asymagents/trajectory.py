"""Append-only JSON-lines trajectory log: writer, reader, auditor, renderer.

Record types: run_start, plan_created, plan_update, retrieval, param_change,
utterance, recursion_start, recursion_end, consensus, answer, run_end. Every
record carries a global seq, the communication path (children are "root.1",
"root.1.1", ...), recursion depth, turn index, and agent id. Records embed the
full prompts sent to the backend, which is what makes the asymmetry audit
possible after the fact. No wall-clock timestamps: logs of identical runs are
byte-identical.
"""

from __future__ import annotations

import io
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable

from .corpus import MessageCorpus, SocialNetwork

RECORD_TYPES = {
    "run_start",
    "plan_created",
    "plan_update",
    "retrieval",
    "param_change",
    "utterance",
    "recursion_start",
    "recursion_end",
    "consensus",
    "answer",
    "run_end",
}

PROMPT_FIELDS = ("prompt", "prompt_think", "prompt_act")


class TrajectoryError(ValueError):
    """Corrupt or truncated trajectory log."""

    def __init__(self, message: str, lineno: int | None = None):
        super().__init__(message)
        self.lineno = lineno


class TrajectoryWriter:
    def __init__(self, target: str | Path | io.TextIOBase):
        if isinstance(target, (str, Path)):
            Path(target).parent.mkdir(parents=True, exist_ok=True)
            self._fh = open(target, "w", encoding="utf-8")
            self._owns = True
        else:
            self._fh = target
            self._owns = False
        self._seq = 0

    def emit(self, record_type: str, *, turn: int = 0, agent: str = "", comm: str = "root",
             depth: int = 0, **payload) -> None:
        if record_type not in RECORD_TYPES:
            raise TrajectoryError(f"unknown record type {record_type!r}")
        record = {"seq": self._seq, "type": record_type, "comm": comm, "depth": depth,
                  "turn": turn, "agent": agent}
        record.update(payload)
        self._fh.write(json.dumps(record, ensure_ascii=False) + "\n")
        self._seq += 1

    def close(self) -> None:
        self._fh.flush()
        if self._owns:
            self._fh.close()

    def __enter__(self) -> "TrajectoryWriter":
        return self

    def __exit__(self, *exc) -> None:
        self.close()


def read_log(path: str | Path) -> list[dict]:
    records, error = read_log_partial(path)
    if error is not None:
        raise error
    return records


def read_log_partial(path: str | Path) -> tuple[list[dict], TrajectoryError | None]:
    """Read as many records as possible; on a corrupt record, return what was
    parsed plus an error naming the offending line.
    """
    records: list[dict] = []
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        if not line.strip():
            continue
        try:
            rec = json.loads(line)
        except json.JSONDecodeError as exc:
            return records, TrajectoryError(f"{path}:{lineno}: corrupt record ({exc})", lineno)
        if not isinstance(rec, dict) or rec.get("type") not in RECORD_TYPES:
            return records, TrajectoryError(
                f"{path}:{lineno}: not a trajectory record", lineno
            )
        records.append(rec)
    return records, None


def iter_prompts(records: Iterable[dict]) -> Iterable[tuple[str, str]]:
    """Yield (agent, prompt_text) for every prompt embedded in the log."""
    for rec in records:
        for fld in PROMPT_FIELDS:
            text = rec.get(fld)
            if text:
                yield rec.get("agent", ""), text


@dataclass(frozen=True)
class AuditViolation:
    agent: str
    session_id: str
    seq: int
    snippet: str


def audit_asymmetry(
    network: SocialNetwork, corpus: MessageCorpus, records: Iterable[dict]
) -> list[AuditViolation]:
    """Scan every logged prompt for message texts invisible to its agent.

    A message text that also occurs verbatim in the agent's own visible
    messages cannot be attributed, so identical duplicates are excluded
    rather than flagged.
    """
    records = list(records)
    agents = sorted({agent for agent, _ in iter_prompts(records)} - {""})
    visible_texts: dict[str, set[str]] = {}
    for agent in agents:
        if agent in network.individuals:
            visible_texts[agent] = {m.text for m in corpus.visible_to(agent)}
        else:
            visible_texts[agent] = set()
    violations: list[AuditViolation] = []
    for agent, prompt in iter_prompts(records):
        if not agent:
            continue
        own = visible_texts.get(agent, set())
        for msg in corpus.iter_messages():
            if agent in (msg.sender, msg.receiver):
                continue
            if msg.text in own:
                continue  # same bytes also visible to the agent; unattributable
            if msg.text and msg.text in prompt:
                violations.append(
                    AuditViolation(
                        agent=agent,
                        session_id=msg.session_id,
                        seq=msg.seq,
                        snippet=msg.text[:80],
                    )
                )
    return violations


def render_replay(records: list[dict]) -> str:
    """Human-readable transcript: plans, turns, retrievals, recursion tree,
    consensus, and the final answer, ordered as logged.
    """
    lines: list[str] = []
    for rec in records:
        indent = "  " * rec.get("depth", 0)
        rtype = rec["type"]
        agent = rec.get("agent", "")
        turn = rec.get("turn", 0)
        if rtype == "run_start":
            lines.append(f"=== run {rec.get('task_id', '?')}: {rec.get('question', '')}")
            lines.append(f"    initiators: {', '.join(rec.get('initiators', []))}")
        elif rtype == "plan_created":
            slots = rec.get("slots", [])
            lines.append(f"{indent}[{agent}] plan created with {len(slots)} open items:")
            for slot in slots:
                lines.append(f"{indent}    ? {slot}")
        elif rtype == "plan_update":
            for desc, value in rec.get("filled", []):
                lines.append(f"{indent}[{agent}] turn {turn}: learned {desc} = {value}")
        elif rtype == "retrieval":
            lines.append(
                f"{indent}[{agent}] turn {turn}: {rec.get('store')} lookup -> "
                f"{rec.get('hit_count', 0)} hits"
            )
        elif rtype == "param_change":
            lines.append(
                f"{indent}[{agent}] turn {turn}: query param {rec.get('parameter')} "
                f"{rec.get('direction')}"
            )
        elif rtype == "utterance":
            lines.append(f"{indent}({turn}) {agent}: {rec.get('text', '')}")
        elif rtype == "recursion_start":
            lines.append(
                f"{indent}[{agent}] turn {turn}: asks {rec.get('target')}'s agent: "
                f"{rec.get('question', '')}"
            )
        elif rtype == "recursion_end":
            lines.append(f"{indent}[{agent}] sub-conversation answer: {rec.get('answer', '')}")
        elif rtype == "consensus":
            lines.append(
                f"{indent}consensus: {len(rec.get('merged', {}))} merged, "
                f"{len(rec.get('conflicts', []))} conflicting, "
                f"agreement {rec.get('agreement_ratio', 0.0):.2f}"
            )
        elif rtype == "answer":
            lines.append(f"{indent}answer: {rec.get('text', '')}")
        elif rtype == "run_end":
            score = rec.get("score")
            score_part = f", score {score:.4f}" if score is not None else ""
            lines.append(f"=== end ({rec.get('termination')}{score_part})")
    return "\n".join(lines) + "\n"
