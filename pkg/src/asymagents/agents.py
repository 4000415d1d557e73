"""The observe-think-act communication loop.

Two agents alternate turns on behalf of their owners. Each turn the speaking
agent re-reads its plan and the transcript (observe), asks the backend for a
plan update, memory queries, and an intent (think), then executes the queries,
applies the update, and writes the utterance (act). A `recurse` intent runs a
full child communication with a neighbor before the parent resumes. All events
stream into the trajectory log.
"""

from __future__ import annotations

import hashlib
import json
import logging
import re
from dataclasses import dataclass, field

from . import prompts
from .backend import BackendError, ChatBackend
from .corpus import MessageCorpus, SocialNetwork, TaskInstance
from .infonav import (
    Plan,
    PlanError,
    add_slot,
    apply_update,
    consensus,
    detect_fake_solved,
    new_plan,
    parse_wire_slots,
    render_plan,
)
from .memory import (
    ClearMemory,
    ClearQuery,
    FuzzyMemory,
    FuzzyQuery,
    HashEmbedder,
    MemoryError_,
    RetrievalHit,
    build_clear,
    build_fuzzy,
    query_clear,
    query_fuzzy,
)
from .metrics import score_task
from .trajectory import TrajectoryWriter

logger = logging.getLogger(__name__)

INTENTS = ("ask", "inform", "conclude", "recurse")
STATIC_PLAN_TEXT = (
    "(no explicit plan) Work out what the question needs, exchange it with the "
    "other agent, and answer."
)


class AgentError(RuntimeError):
    pass


@dataclass
class RunConfig:
    max_turns: int = 10
    depth_limit: int = 1
    infonav: bool = True
    clear_memory: bool = True
    fuzzy_memory: bool = True
    recursion: bool = True
    privacy_prompt: bool = False
    anonymize: dict[str, str] = field(default_factory=dict)
    seed: int = 0
    parallel: int = 1

    def __post_init__(self) -> None:
        if self.max_turns < 1:
            raise AgentError("max_turns must be >= 1")
        if self.depth_limit < 0:
            raise AgentError("depth_limit must be >= 0")
        if self.parallel < 1:
            raise AgentError("parallel must be >= 1")

    def ablation_flags(self) -> dict[str, bool]:
        return {
            "infonav": self.infonav,
            "clear_memory": self.clear_memory,
            "fuzzy_memory": self.fuzzy_memory,
            "recursion": self.recursion,
            "privacy_prompt": self.privacy_prompt,
            "anonymize": bool(self.anonymize),
        }


def config_digest(config: RunConfig, backend_config) -> str:
    blob = json.dumps(
        {
            "max_turns": config.max_turns,
            "depth_limit": config.depth_limit,
            "seed": config.seed,
            "ablations": config.ablation_flags(),
            "backend": backend_config.digest_fields(),
        },
        sort_keys=True,
    )
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()[:16]


@dataclass
class Thought:
    updates: list[tuple[str, str]] = field(default_factory=list)  # (description, value)
    new_unknowns: list[str] = field(default_factory=list)
    clear_query: ClearQuery | None = None
    fuzzy_query: FuzzyQuery | None = None
    intent: str = "ask"
    recurse_target: str | None = None
    sub_question: str | None = None
    warnings: list[str] = field(default_factory=list)


@dataclass
class Utterance:
    speaker: str
    turn: int
    text: str
    evidence: list[RetrievalHit] = field(default_factory=list)
    intent: str = "ask"


@dataclass
class Observation:
    plan_text: str
    transcript: str
    evidence_text: str


@dataclass
class AgentState:
    owner: str
    plan: Plan | None = None
    clear_mem: ClearMemory | None = None
    fuzzy_mem: FuzzyMemory | None = None
    current_clear: ClearQuery | None = None
    current_fuzzy: FuzzyQuery | None = None
    pending_evidence: list[str] = field(default_factory=list)
    system_text: str = ""


@dataclass
class Communication:
    question: str
    agents: tuple[AgentState, AgentState]
    max_turns: int = 10
    depth: int = 0
    comm_path: str = "root"
    utterances: list[Utterance] = field(default_factory=list)
    children: list["Communication"] = field(default_factory=list)
    termination: str | None = None  # answered | turn_limit | error

    def next_speaker(self) -> AgentState:
        i = len(self.utterances) + 1
        return self.agents[0] if i % 2 == 1 else self.agents[1]


# ---------------------------------------------------------------------------
# Thought parsing.
# ---------------------------------------------------------------------------

_SECTION_TAGS = ("PLAN-UPDATE:", "CLEAR-QUERY:", "FUZZY-QUERY:", "INTENT:")
_RECURSE_RE = re.compile(r"^recurse\s+(\S+)\s*:\s*(.+)$", re.IGNORECASE)


def _parse_kv(body: str) -> dict[str, str]:
    out = {}
    for part in body.split(";"):
        if "=" in part:
            key, value = part.split("=", 1)
            out[key.strip().lower()] = value.strip()
    return out


def parse_thought(text: str) -> Thought:
    """Parse a think response; malformed fields degrade with a warning instead
    of failing the turn.
    """
    thought = Thought()
    saw_section = False
    lines = text.splitlines()
    i = 0
    while i < len(lines):
        line = lines[i].strip()
        if line.startswith("PLAN-UPDATE:"):
            saw_section = True
            i += 1
            block = []
            while i < len(lines):
                nxt = lines[i].strip()
                if any(nxt.startswith(tag) for tag in _SECTION_TAGS):
                    break
                block.append(nxt)
                i += 1
            for desc, value in parse_wire_slots("\n".join(block)):
                if value is None:
                    thought.new_unknowns.append(desc)
                elif value.strip():
                    thought.updates.append((desc, value))
                else:
                    thought.warnings.append(f"empty KNOWN value for {desc!r}; line ignored")
            continue
        if line.startswith("CLEAR-QUERY:"):
            saw_section = True
            kv = _parse_kv(line[len("CLEAR-QUERY:"):])
            try:
                keywords = tuple(k.strip() for k in kv.get("keywords", "").split(",") if k.strip())
                thought.clear_query = ClearQuery(
                    keywords=keywords,
                    context_window=int(kv.get("window", 0)),
                    limit=int(kv.get("limit", 10)),
                )
            except (ValueError, MemoryError_) as exc:
                thought.warnings.append(f"malformed CLEAR-QUERY ({exc}); query dropped")
        elif line.startswith("FUZZY-QUERY:"):
            saw_section = True
            kv = _parse_kv(line[len("FUZZY-QUERY:"):])
            try:
                thought.fuzzy_query = FuzzyQuery(
                    text=kv.get("text", ""), topk=int(kv.get("topk", 3))
                )
            except (ValueError, MemoryError_) as exc:
                thought.warnings.append(f"malformed FUZZY-QUERY ({exc}); query dropped")
        elif line.startswith("INTENT:"):
            saw_section = True
            body = line[len("INTENT:"):].strip()
            low = body.lower()
            if low in ("ask", "inform", "conclude"):
                thought.intent = low
            else:
                m = _RECURSE_RE.match(body)
                if m:
                    thought.intent = "recurse"
                    thought.recurse_target = m.group(1)
                    thought.sub_question = m.group(2).strip()
                else:
                    thought.warnings.append(f"malformed INTENT {body!r}; defaulting to ask")
        i += 1
    if not saw_section:
        thought.warnings.append("no recognizable sections in think response; defaulting to ask")
    return thought


# ---------------------------------------------------------------------------
# Memory pool.
# ---------------------------------------------------------------------------


class MemoryPool:
    """Lazy per-owner memory construction shared by a run and its children."""

    def __init__(self, network: SocialNetwork, corpus: MessageCorpus, embedder=None,
                 summarizer=None, use_clear: bool = True, use_fuzzy: bool = True):
        self.network = network
        self.corpus = corpus
        self.embedder = embedder or HashEmbedder()
        self.summarizer = summarizer
        self.use_clear = use_clear
        self.use_fuzzy = use_fuzzy
        self._clear: dict[str, ClearMemory] = {}
        self._fuzzy: dict[str, FuzzyMemory] = {}

    def memories_for(self, owner: str) -> tuple[ClearMemory | None, FuzzyMemory | None]:
        clear = fuzzy = None
        if self.use_clear:
            if owner not in self._clear:
                self._clear[owner] = build_clear(self.network, self.corpus, owner)
            clear = self._clear[owner]
        if self.use_fuzzy:
            if owner not in self._fuzzy:
                self._fuzzy[owner] = build_fuzzy(
                    self.network, self.corpus, owner, self.embedder, self.summarizer
                )
            fuzzy = self._fuzzy[owner]
        return clear, fuzzy


# ---------------------------------------------------------------------------
# Parameter-change directions.
# ---------------------------------------------------------------------------


def _numeric_direction(old: float, new: float) -> str:
    if new > old:
        return "increase"
    if new < old:
        return "decrease"
    return "unchanged"


def param_changes_clear(old: ClearQuery | None, new: ClearQuery) -> list[tuple[str, str]]:
    if old is None:
        return []
    changes = [
        ("context_window", _numeric_direction(old.context_window, new.context_window)),
        ("limit", _numeric_direction(old.limit, new.limit)),
    ]
    old_kws, new_kws = set(old.keywords), set(new.keywords)
    if old_kws == new_kws:
        changes.append(("keywords", "unchanged"))
    elif len(new_kws) != len(old_kws):
        changes.append(("keywords", _numeric_direction(len(old_kws), len(new_kws))))
    else:
        changes.append(("keywords", "replaced"))
    return changes


def param_changes_fuzzy(old: FuzzyQuery | None, new: FuzzyQuery) -> list[tuple[str, str]]:
    if old is None:
        return []
    return [
        ("topk", _numeric_direction(old.topk, new.topk)),
        ("query_text_len", _numeric_direction(len(old.text), len(new.text))),
    ]


# ---------------------------------------------------------------------------
# Outcome.
# ---------------------------------------------------------------------------


@dataclass
class Outcome:
    task_id: str
    answer: str
    termination: str
    score: float | None = None
    consensus_result: object = None
    utterance_count: int = 0
    error: str | None = None


# ---------------------------------------------------------------------------
# The engine.
# ---------------------------------------------------------------------------


class Engine:
    """Runs communications for tasks over one corpus with one backend."""

    def __init__(
        self,
        network: SocialNetwork,
        corpus: MessageCorpus,
        backend: ChatBackend,
        config: RunConfig | None = None,
        writer: TrajectoryWriter | None = None,
        pool: MemoryPool | None = None,
        judge=None,
    ):
        self.network = network
        self.corpus = corpus
        self.backend = backend
        self.config = config or RunConfig()
        self.writer = writer
        self.judge = judge
        self.pool = pool or MemoryPool(
            network,
            corpus,
            use_clear=self.config.clear_memory,
            use_fuzzy=self.config.fuzzy_memory,
        )

    # -- plumbing -----------------------------------------------------------

    def _emit(self, record_type: str, **kw) -> None:
        if self.writer is not None:
            self.writer.emit(record_type, **kw)

    def _chat(self, prompt: str) -> str:
        return self.backend.chat_text(prompt)

    def make_agent(self, owner: str) -> AgentState:
        self.network.require(owner)
        clear, fuzzy = self.pool.memories_for(owner)
        template = "system_privacy" if self.config.privacy_prompt else "system"
        return AgentState(
            owner=owner,
            clear_mem=clear,
            fuzzy_mem=fuzzy,
            system_text=prompts.get(template).render(owner=owner),
        )

    # -- observe / think / act ------------------------------------------------

    def observe(self, agent: AgentState, comm: Communication) -> Observation:
        if comm.next_speaker() is not agent:
            raise AgentError(f"{agent.owner}: observe called out of turn")
        if agent.plan is not None:
            plan_text = render_plan(agent.plan)
        else:
            plan_text = STATIC_PLAN_TEXT
        transcript = "\n".join(f"{u.speaker}: {u.text}" for u in comm.utterances)
        if not transcript:
            transcript = "(no messages yet)"
        evidence = ""
        if agent.pending_evidence:
            evidence = "Conclusions from your sub-conversations:\n" + "\n".join(
                f"- {line}" for line in agent.pending_evidence
            ) + "\n"
            agent.pending_evidence = []
        return Observation(plan_text=plan_text, transcript=transcript, evidence_text=evidence)

    def think(self, agent: AgentState, obs: Observation, comm: Communication,
              turn: int) -> tuple[Thought, str]:
        prompt = prompts.get("think").render(
            header=prompts.make_header(agent.owner, "think", turn, comm.depth),
            system=agent.system_text,
            question=comm.question,
            plan=obs.plan_text,
            transcript=obs.transcript,
            evidence=obs.evidence_text,
        )
        response = self._chat(prompt)
        thought = parse_thought(response)
        if not self.config.infonav:
            thought.updates = []
            thought.new_unknowns = []
        for warning in thought.warnings:
            logger.warning("%s turn %d: %s", agent.owner, turn, warning)
        return thought, prompt

    def _run_queries(self, agent: AgentState, thought: Thought, comm: Communication,
                     turn: int) -> list[RetrievalHit]:
        hits: list[RetrievalHit] = []
        base = dict(comm=comm.comm_path, depth=comm.depth, turn=turn, agent=agent.owner)
        if thought.clear_query is not None:
            if self.config.clear_memory and agent.clear_mem is not None:
                result = query_clear(agent.clear_mem, thought.clear_query)
                self._emit(
                    "retrieval",
                    store="clear",
                    query={
                        "keywords": list(thought.clear_query.keywords),
                        "window": thought.clear_query.context_window,
                        "limit": thought.clear_query.limit,
                    },
                    hit_count=len(result.hits),
                    hits=[[h.session_id, h.seq_span[0], h.seq_span[1], h.score] for h in result.hits],
                    **base,
                )
                for parameter, direction in param_changes_clear(agent.current_clear,
                                                                thought.clear_query):
                    self._emit("param_change", parameter=parameter, direction=direction, **base)
                agent.current_clear = thought.clear_query
                hits.extend(result.hits)
            else:
                thought.warnings.append("clear memory disabled; query skipped")
        if thought.fuzzy_query is not None:
            if self.config.fuzzy_memory and agent.fuzzy_mem is not None:
                result = query_fuzzy(agent.fuzzy_mem, thought.fuzzy_query, self.pool.embedder)
                self._emit(
                    "retrieval",
                    store="fuzzy",
                    query={"text": thought.fuzzy_query.text, "topk": thought.fuzzy_query.topk},
                    hit_count=len(result.hits),
                    hits=[[h.session_id, h.seq_span[0], h.seq_span[1], round(h.score, 6)]
                          for h in result.hits],
                    **base,
                )
                for parameter, direction in param_changes_fuzzy(agent.current_fuzzy,
                                                                thought.fuzzy_query):
                    self._emit("param_change", parameter=parameter, direction=direction, **base)
                agent.current_fuzzy = thought.fuzzy_query
                hits.extend(result.hits)
            else:
                thought.warnings.append("fuzzy memory disabled; query skipped")
        return hits

    def _apply_plan_update(self, agent: AgentState, thought: Thought, comm: Communication,
                           turn: int) -> None:
        if agent.plan is None or (not thought.updates and not thought.new_unknowns):
            return
        plan = agent.plan
        for desc in thought.new_unknowns:
            if plan.slot_index(desc) is None:
                add_slot(plan, desc)
        updates = []
        for desc, value in thought.updates:
            idx = plan.slot_index(desc)
            if idx is None:
                idx = add_slot(plan, desc)
            updates.append((idx, value))
        if not updates:
            return
        try:
            apply_update(plan, updates, turn)
        except PlanError as exc:
            thought.warnings.append(f"plan update rejected ({exc})")
            return
        filled = [[plan.slots[idx].description, value] for idx, value in updates]
        self._emit(
            "plan_update",
            comm=comm.comm_path,
            depth=comm.depth,
            turn=turn,
            agent=agent.owner,
            filled=filled,
            fake=[bool(detect_fake_solved(value)) for _, value in updates],
        )

    def act(self, agent: AgentState, thought: Thought, obs: Observation,
            comm: Communication, turn: int) -> tuple[Utterance, str]:
        hits = self._run_queries(agent, thought, comm, turn)
        self._apply_plan_update(agent, thought, comm, turn)
        if hits:
            retrieval = "\n".join(
                f"- [{h.session_id}/{h.seq_span[0]}] {h.text}" for h in hits
            )
        else:
            retrieval = "(nothing retrieved)"
        plan_text = render_plan(agent.plan) if agent.plan is not None else STATIC_PLAN_TEXT
        prompt = prompts.get("act").render(
            header=prompts.make_header(agent.owner, "act", turn, comm.depth),
            system=agent.system_text,
            question=comm.question,
            plan=plan_text,
            transcript=obs.transcript,
            retrieval=retrieval,
            owner=agent.owner,
        )
        text = self._chat(prompt).strip()
        if not text:
            thought.warnings.append("empty utterance from backend; placeholder used")
            text = "(no reply)"
        return Utterance(speaker=agent.owner, turn=turn, text=text,
                         evidence=hits, intent=thought.intent), prompt

    # -- the turn loop --------------------------------------------------------

    def step(self, comm: Communication) -> None:
        if comm.termination is not None:
            raise AgentError("communication already terminated")
        turn = len(comm.utterances) + 1
        agent = comm.next_speaker()
        obs = self.observe(agent, comm)
        thought, prompt_think = self.think(agent, obs, comm, turn)
        utterance, prompt_act = self.act(agent, thought, obs, comm, turn)

        recursion_ok = False
        if thought.intent == "recurse":
            target = thought.recurse_target
            if not self.config.recursion:
                thought.warnings.append("recursion disabled; intent degraded to ask")
            elif comm.depth >= self.config.depth_limit:
                thought.warnings.append("recursion depth limit reached; intent degraded to ask")
            elif target is None or not thought.sub_question:
                thought.warnings.append("malformed recurse intent; degraded to ask")
            elif not self.network.has_edge(agent.owner, target):
                thought.warnings.append(
                    f"recursion target {target!r} is not a neighbor of {agent.owner!r}; "
                    "degraded to ask"
                )
            else:
                recursion_ok = True
            if not recursion_ok:
                thought.intent = "ask"
                utterance.intent = "ask"

        comm.utterances.append(utterance)
        self._emit(
            "utterance",
            comm=comm.comm_path,
            depth=comm.depth,
            turn=turn,
            agent=agent.owner,
            text=utterance.text,
            intent=utterance.intent,
            evidence=[[h.kind, h.session_id, h.seq_span[0], h.seq_span[1]] for h in utterance.evidence],
            warnings=thought.warnings,
            prompt_think=prompt_think,
            prompt_act=prompt_act,
        )

        if recursion_ok:
            answer = self.recurse(comm, agent, thought.recurse_target, thought.sub_question, turn)
            agent.pending_evidence.append(
                f"{thought.recurse_target}'s agent answered {thought.sub_question!r}: {answer}"
            )

        if (
            len(comm.utterances) >= 2
            and comm.utterances[-1].intent == "conclude"
            and comm.utterances[-2].intent == "conclude"
        ):
            comm.termination = "answered"
        elif len(comm.utterances) >= comm.max_turns:
            comm.termination = "turn_limit"

    def recurse(self, comm: Communication, agent: AgentState, neighbor: str,
                sub_question: str, turn: int) -> str:
        """Run a child communication with a neighbor to completion; returns its
        answer. The caller injects it as evidence for the parent agent.
        """
        self.network.require(neighbor)
        if not self.network.has_edge(agent.owner, neighbor):
            raise AgentError(f"{neighbor!r} is not a neighbor of {agent.owner!r}")
        if comm.depth >= self.config.depth_limit:
            raise AgentError(f"recursion depth limit {self.config.depth_limit} reached")
        child_path = f"{comm.comm_path}.{len(comm.children) + 1}"
        self._emit(
            "recursion_start",
            comm=child_path,
            depth=comm.depth + 1,
            turn=turn,
            agent=agent.owner,
            target=neighbor,
            question=sub_question,
        )
        child_a = self.make_agent(agent.owner)
        child_b = self.make_agent(neighbor)
        child, answer, _ = self.communicate(
            sub_question, child_a, child_b, depth=comm.depth + 1, comm_path=child_path
        )
        comm.children.append(child)
        self._emit(
            "recursion_end",
            comm=child_path,
            depth=comm.depth + 1,
            turn=turn,
            agent=agent.owner,
            answer=answer,
            utterances=len(child.utterances),
            termination=child.termination,
        )
        return answer

    # -- whole communications --------------------------------------------------

    def _create_plan(self, agent: AgentState, question: str, depth: int, comm_path: str) -> None:
        prompt = prompts.get("plan").render(
            header=prompts.make_header(agent.owner, "plan", 0, depth),
            question=question,
        )
        raw_holder: dict[str, str] = {}

        def chat_and_keep(p: str) -> str:
            raw_holder["raw"] = self._chat(p)
            return raw_holder["raw"]

        agent.plan = new_plan(question, chat_and_keep, prompt)
        self._emit(
            "plan_created",
            comm=comm_path,
            depth=depth,
            turn=0,
            agent=agent.owner,
            question=question,
            slots=[s.description for s in agent.plan.slots],
            prompt=prompt,
            raw=raw_holder.get("raw", ""),
        )

    def communicate(self, question: str, agent_a: AgentState, agent_b: AgentState,
                    depth: int = 0, comm_path: str = "root") -> tuple[Communication, str, object]:
        if self.config.infonav:
            self._create_plan(agent_a, question, depth, comm_path)
            self._create_plan(agent_b, question, depth, comm_path)
        comm = Communication(
            question=question,
            agents=(agent_a, agent_b),
            max_turns=self.config.max_turns,
            depth=depth,
            comm_path=comm_path,
        )
        while comm.termination is None:
            self.step(comm)

        cons = None
        if self.config.infonav and agent_a.plan is not None and agent_b.plan is not None:
            cons = consensus(agent_a.plan, agent_b.plan)
            self._emit(
                "consensus",
                comm=comm_path,
                depth=depth,
                turn=len(comm.utterances),
                agent="",
                merged=cons.merged,
                conflicts=[list(c) for c in cons.conflicts],
                agreement_ratio=cons.agreement_ratio,
            )
            rationales = "\n".join(f"- {k}: {v}" for k, v in sorted(cons.merged.items()))
            if not rationales:
                rationales = "(nothing agreed)"
        else:
            rationales = "Conversation transcript:\n" + "\n".join(
                f"{u.speaker}: {u.text}" for u in comm.utterances
            )
        prompt = prompts.get("reason").render(
            header=prompts.make_header(agent_a.owner, "reason", 0, depth),
            question=question,
            rationales=rationales,
        )
        answer = self._chat(prompt).strip()
        self._emit(
            "answer",
            comm=comm_path,
            depth=depth,
            turn=len(comm.utterances),
            agent=agent_a.owner,
            text=answer,
            prompt=prompt,
        )
        return comm, answer, cons

    def run(self, task: TaskInstance) -> Outcome:
        """Run one task end to end: plans, turn loop, consensus, answer, score."""
        for who in task.initiators:
            self.network.require(who)
        self._emit(
            "run_start",
            agent="",
            task_id=task.id,
            question=task.question,
            initiators=list(task.initiators),
            dataset_tag=task.dataset_tag,
            config_digest=config_digest(self.config, self.backend.config),
            ablations=self.config.ablation_flags(),
            max_turns=self.config.max_turns,
            depth_limit=self.config.depth_limit,
        )
        try:
            agent_a = self.make_agent(task.initiators[0])
            agent_b = self.make_agent(task.initiators[1])
            comm, answer, cons = self.communicate(task.question, agent_a, agent_b)
        except (BackendError, PlanError, MemoryError_) as exc:
            logger.error("run %s failed: %s", task.id, exc)
            self._emit("run_end", agent="", termination="error", score=None, error=str(exc))
            return Outcome(task_id=task.id, answer="", termination="error", error=str(exc))
        result = score_task(task, answer, judge=self.judge)
        self._emit(
            "run_end",
            agent="",
            turn=len(comm.utterances),
            termination=comm.termination,
            score=result.score,
            metric=task.metric,
            utterances=len(comm.utterances),
        )
        return Outcome(
            task_id=task.id,
            answer=answer,
            termination=comm.termination,
            score=result.score,
            consensus_result=cons,
            utterance_count=len(comm.utterances),
        )
