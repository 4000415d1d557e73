"""Social network, message corpus, and the visibility boundary between individuals.

The corpus is the information substrate for every run: who exists, who talks to
whom, and exactly which messages an individual's agent is allowed to see. All
asymmetry guarantees downstream reduce to :func:`visible_messages`.
"""

from __future__ import annotations

import json
import re
from collections import deque
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable


class CorpusError(ValueError):
    """Malformed corpus file or violated corpus invariant."""


def _check_id(value: str, what: str = "id") -> str:
    if not value or value != value.strip() or any(c.isspace() for c in value):
        raise CorpusError(f"invalid {what} {value!r}: must be nonempty without whitespace")
    return value


@dataclass(frozen=True)
class Individual:
    """One person in the social network; `persona` is optional free text."""

    id: str
    persona: str | None = None

    def __post_init__(self) -> None:
        _check_id(self.id, "individual id")


@dataclass(frozen=True)
class Message:
    session_id: str
    seq: int
    sender: str
    receiver: str
    text: str

    def __post_init__(self) -> None:
        _check_id(self.session_id, "session id")
        _check_id(self.sender, "sender")
        _check_id(self.receiver, "receiver")
        if self.sender == self.receiver:
            raise CorpusError(f"message {self.session_id}/{self.seq}: sender equals receiver")
        if self.seq < 0:
            raise CorpusError(f"message {self.session_id}/{self.seq}: negative seq")


@dataclass
class Session:
    id: str
    messages: list[Message]


class SocialNetwork:
    """Undirected social graph; an edge is permission for two agents to talk."""

    def __init__(self, individuals: Iterable[Individual] = (), edges: Iterable[tuple[str, str]] = ()):
        self.individuals: dict[str, Individual] = {}
        self._adj: dict[str, set[str]] = {}
        for ind in individuals:
            self.add_individual(ind)
        for a, b in edges:
            self.add_edge(a, b)

    def add_individual(self, ind: Individual) -> None:
        if ind.id in self.individuals:
            raise CorpusError(f"duplicate individual {ind.id!r}")
        self.individuals[ind.id] = ind
        self._adj[ind.id] = set()

    def add_edge(self, a: str, b: str) -> None:
        if a == b:
            raise CorpusError(f"self-loop edge on {a!r}")
        for who in (a, b):
            if who not in self.individuals:
                raise CorpusError(f"unknown individual {who!r} in edge ({a!r}, {b!r})")
        self._adj[a].add(b)
        self._adj[b].add(a)

    def require(self, who: str) -> Individual:
        if who not in self.individuals:
            raise CorpusError(f"unknown individual {who!r}")
        return self.individuals[who]

    def has_edge(self, a: str, b: str) -> bool:
        return b in self._adj.get(a, ())

    def neighbors(self, who: str) -> list[str]:
        self.require(who)
        return sorted(self._adj[who])

    @property
    def edges(self) -> list[tuple[str, str]]:
        seen = set()
        for a, nbrs in self._adj.items():
            for b in nbrs:
                seen.add((a, b) if a < b else (b, a))
        return sorted(seen)

    @property
    def node_count(self) -> int:
        return len(self.individuals)

    @property
    def edge_count(self) -> int:
        return len(self.edges)


class MessageCorpus:
    """Immutable, validated collection of messages grouped into sessions."""

    def __init__(self, messages: Iterable[Message]):
        by_session: dict[str, dict[int, Message]] = {}
        for msg in messages:
            slot = by_session.setdefault(msg.session_id, {})
            if msg.seq in slot:
                raise CorpusError(f"duplicate (session, seq) ({msg.session_id!r}, {msg.seq})")
            slot[msg.seq] = msg
        self.sessions: dict[str, list[Message]] = {}
        for sid in sorted(by_session):
            seqs = sorted(by_session[sid])
            if seqs != list(range(len(seqs))):
                raise CorpusError(f"session {sid!r}: seq not dense from 0 (got {seqs})")
            self.sessions[sid] = [by_session[sid][s] for s in seqs]

    def __len__(self) -> int:
        return sum(len(msgs) for msgs in self.sessions.values())

    def iter_messages(self) -> Iterable[Message]:
        for sid in sorted(self.sessions):
            yield from self.sessions[sid]

    def session(self, session_id: str) -> Session:
        if session_id not in self.sessions:
            raise CorpusError(f"unknown session {session_id!r}")
        return Session(session_id, list(self.sessions[session_id]))

    def participants(self) -> set[str]:
        out: set[str] = set()
        for msg in self.iter_messages():
            out.add(msg.sender)
            out.add(msg.receiver)
        return out

    def validate_against(self, network: SocialNetwork) -> None:
        for msg in self.iter_messages():
            for who in (msg.sender, msg.receiver):
                if who not in network.individuals:
                    raise CorpusError(
                        f"message {msg.session_id}/{msg.seq}: unknown individual {who!r}"
                    )

    def visible_to(self, who: str) -> list[Message]:
        return [m for m in self.iter_messages() if who in (m.sender, m.receiver)]


def visible_messages(network: SocialNetwork, corpus: MessageCorpus, who: str) -> list[Message]:
    """All messages `who` sent or received, in (session_id, seq) order.

    This is the asymmetry boundary: nothing outside this list may ever reach
    the agent acting for `who`.
    """
    network.require(who)
    return corpus.visible_to(who)


@dataclass(frozen=True)
class TaskInstance:
    """A benchmark question plus its oracle ground truth."""

    id: str
    question: str
    answer_kind: str  # text | count | names | intervals
    answer: object
    initiators: tuple[str, str]
    metric: str  # accuracy | count_accuracy | f1 | interval_iou
    dataset_tag: str = ""
    extra: dict = field(default_factory=dict)

    METRIC_FOR_KIND = {
        "text": "accuracy",
        "count": "count_accuracy",
        "names": "f1",
        "intervals": "interval_iou",
    }

    def __post_init__(self) -> None:
        _check_id(self.id, "task id")
        if not self.question.strip():
            raise CorpusError(f"task {self.id!r}: empty question")
        if self.answer_kind not in self.METRIC_FOR_KIND:
            raise CorpusError(f"task {self.id!r}: unknown answer kind {self.answer_kind!r}")
        if self.metric != self.METRIC_FOR_KIND[self.answer_kind]:
            raise CorpusError(
                f"task {self.id!r}: metric {self.metric!r} does not match answer kind "
                f"{self.answer_kind!r}"
            )
        a, b = self.initiators
        if a == b:
            raise CorpusError(f"task {self.id!r}: initiators must be distinct")


# ---------------------------------------------------------------------------
# File formats.
#
# network file  : one record per line, `person <id> [persona...]` or
#                 `edge <idA> <idB>`; blank lines and lines starting with '#'
#                 are ignored.
# message file  : tab-separated `session_id  seq  sender  receiver  text`,
#                 text with \t, \n, \r and backslash escaped.
# task file     : one JSON object per line.
# ---------------------------------------------------------------------------


def load_network(path: str | Path) -> SocialNetwork:
    path = Path(path)
    network = SocialNetwork()
    pending_edges: list[tuple[int, str, str]] = []
    with path.open(encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.rstrip("\n")
            if not line.strip() or line.lstrip().startswith("#"):
                continue
            parts = line.split(None, 1)
            kind = parts[0]
            rest = parts[1] if len(parts) > 1 else ""
            try:
                if kind == "person":
                    bits = rest.split(None, 1)
                    if not bits:
                        raise CorpusError("person record missing id")
                    persona = bits[1].strip() if len(bits) > 1 and bits[1].strip() else None
                    network.add_individual(Individual(bits[0], persona))
                elif kind == "edge":
                    bits = rest.split()
                    if len(bits) != 2:
                        raise CorpusError(f"edge record needs two ids, got {rest!r}")
                    pending_edges.append((lineno, bits[0], bits[1]))
                else:
                    raise CorpusError(f"unknown record kind {kind!r}")
            except CorpusError as exc:
                raise CorpusError(f"{path}:{lineno}: {exc}") from None
    for lineno, a, b in pending_edges:
        try:
            network.add_edge(a, b)
        except CorpusError as exc:
            raise CorpusError(f"{path}:{lineno}: {exc}") from None
    return network


def serialize_network(network: SocialNetwork) -> str:
    lines = []
    for ind in sorted(network.individuals.values(), key=lambda i: i.id):
        lines.append(f"person {ind.id} {ind.persona}" if ind.persona else f"person {ind.id}")
    for a, b in network.edges:
        lines.append(f"edge {a} {b}")
    return "\n".join(lines) + "\n"


def save_network(network: SocialNetwork, path: str | Path) -> None:
    Path(path).write_text(serialize_network(network), encoding="utf-8")


_ESCAPES = {"\\": "\\\\", "\t": "\\t", "\n": "\\n", "\r": "\\r"}
_UNESCAPES = {"\\": "\\", "t": "\t", "n": "\n", "r": "\r"}


def _escape_text(text: str) -> str:
    out = []
    for ch in text:
        out.append(_ESCAPES.get(ch, ch))
    return "".join(out)


def _unescape_text(text: str) -> str:
    out = []
    i = 0
    while i < len(text):
        ch = text[i]
        if ch == "\\":
            if i + 1 >= len(text):
                raise CorpusError("dangling escape at end of text field")
            nxt = text[i + 1]
            if nxt not in _UNESCAPES:
                raise CorpusError(f"unknown escape sequence \\{nxt}")
            out.append(_UNESCAPES[nxt])
            i += 2
        else:
            out.append(ch)
            i += 1
    return "".join(out)


def load_messages(path: str | Path, network: SocialNetwork | None = None) -> MessageCorpus:
    path = Path(path)
    messages: list[Message] = []
    with path.open(encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.rstrip("\n")
            if not line.strip() or line.lstrip().startswith("#"):
                continue
            fields = line.split("\t")
            if len(fields) != 5:
                raise CorpusError(f"{path}:{lineno}: expected 5 tab-separated fields, got {len(fields)}")
            session_id, seq_s, sender, receiver, text = fields
            try:
                seq = int(seq_s)
            except ValueError:
                raise CorpusError(f"{path}:{lineno}: seq {seq_s!r} is not an integer") from None
            try:
                messages.append(Message(session_id, seq, sender, receiver, _unescape_text(text)))
            except CorpusError as exc:
                raise CorpusError(f"{path}:{lineno}: {exc}") from None
    try:
        corpus = MessageCorpus(messages)
        if network is not None:
            corpus.validate_against(network)
    except CorpusError as exc:
        raise CorpusError(f"{path}: {exc}") from None
    return corpus


def serialize_messages(corpus: MessageCorpus) -> str:
    lines = []
    for msg in corpus.iter_messages():
        lines.append(
            "\t".join([msg.session_id, str(msg.seq), msg.sender, msg.receiver, _escape_text(msg.text)])
        )
    return "\n".join(lines) + ("\n" if lines else "")


def save_messages(corpus: MessageCorpus, path: str | Path) -> None:
    Path(path).write_text(serialize_messages(corpus), encoding="utf-8")


def load_tasks(path: str | Path, network: SocialNetwork | None = None) -> list[TaskInstance]:
    path = Path(path)
    tasks: list[TaskInstance] = []
    with path.open(encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line:
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise CorpusError(f"{path}:{lineno}: invalid JSON ({exc})") from None
            try:
                answer = rec["answer"]
                if rec["answer_kind"] == "intervals":
                    answer = [tuple(iv) for iv in answer]
                elif rec["answer_kind"] == "names":
                    answer = list(answer)
                task = TaskInstance(
                    id=rec["id"],
                    question=rec["question"],
                    answer_kind=rec["answer_kind"],
                    answer=answer,
                    initiators=(rec["initiators"][0], rec["initiators"][1]),
                    metric=rec["metric"],
                    dataset_tag=rec.get("dataset_tag", ""),
                    extra=rec.get("extra", {}),
                )
            except (KeyError, IndexError, TypeError) as exc:
                raise CorpusError(f"{path}:{lineno}: bad task record ({exc!r})") from None
            except CorpusError as exc:
                raise CorpusError(f"{path}:{lineno}: {exc}") from None
            if network is not None:
                for who in task.initiators:
                    if who not in network.individuals:
                        raise CorpusError(f"{path}:{lineno}: unknown individual {who!r}")
            tasks.append(task)
    return tasks


def serialize_tasks(tasks: Iterable[TaskInstance]) -> str:
    lines = []
    for t in tasks:
        answer = t.answer
        if t.answer_kind == "intervals":
            answer = [list(iv) for iv in t.answer]
        rec = {
            "id": t.id,
            "question": t.question,
            "answer_kind": t.answer_kind,
            "answer": answer,
            "initiators": list(t.initiators),
            "metric": t.metric,
            "dataset_tag": t.dataset_tag,
        }
        if t.extra:
            rec["extra"] = t.extra
        lines.append(json.dumps(rec, ensure_ascii=False))
    return "\n".join(lines) + ("\n" if lines else "")


def save_tasks(tasks: Iterable[TaskInstance], path: str | Path) -> None:
    Path(path).write_text(serialize_tasks(tasks), encoding="utf-8")


def derive_relationships(network: SocialNetwork, corpus: MessageCorpus) -> int:
    """Add an edge for every (sender, receiver) pair with at least one message.

    Returns the number of edges added. Used when a network file carries no
    explicit edges: having talked is taken as evidence of a relationship.
    """
    added = 0
    for msg in corpus.iter_messages():
        if not network.has_edge(msg.sender, msg.receiver):
            network.add_edge(msg.sender, msg.receiver)
            added += 1
    return added


# ---------------------------------------------------------------------------
# Graph statistics.
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class GraphStats:
    node_count: int
    edge_count: int
    density: float
    avg_degree: float
    diameter: int
    avg_path_length: float
    component_count: int


def _components(network: SocialNetwork) -> list[list[str]]:
    seen: set[str] = set()
    comps: list[list[str]] = []
    for start in sorted(network.individuals):
        if start in seen:
            continue
        comp = []
        queue = deque([start])
        seen.add(start)
        while queue:
            node = queue.popleft()
            comp.append(node)
            for nbr in network._adj[node]:
                if nbr not in seen:
                    seen.add(nbr)
                    queue.append(nbr)
        comps.append(sorted(comp))
    return comps


def graph_stats(network: SocialNetwork) -> GraphStats:
    """Whole-graph statistics; path metrics computed on the largest component.

    density = 2E / (N(N-1)), avg_degree = 2E / N, diameter = max shortest-path
    length, avg_path_length = mean shortest-path length over unordered pairs.
    """
    n = network.node_count
    if n == 0:
        raise CorpusError("empty network")
    e = network.edge_count
    density = 0.0 if n < 2 else 2.0 * e / (n * (n - 1))
    avg_degree = 2.0 * e / n
    comps = _components(network)
    largest = max(comps, key=lambda c: (len(c), c))
    diameter = 0
    total = 0
    pairs = 0
    members = set(largest)
    for source in largest:
        dist = {source: 0}
        queue = deque([source])
        while queue:
            node = queue.popleft()
            for nbr in network._adj[node]:
                if nbr in members and nbr not in dist:
                    dist[nbr] = dist[node] + 1
                    queue.append(nbr)
        for target, d in dist.items():
            if target != source:
                diameter = max(diameter, d)
                total += d
                pairs += 1
    avg_path = (total / pairs) if pairs else 0.0  # ordered pairs; symmetric, so equals unordered mean
    return GraphStats(
        node_count=n,
        edge_count=e,
        density=density,
        avg_degree=avg_degree,
        diameter=diameter,
        avg_path_length=avg_path,
        component_count=len(comps),
    )


# ---------------------------------------------------------------------------
# Anonymization.
# ---------------------------------------------------------------------------


def _rename_pattern(names: Iterable[str]) -> re.Pattern[str]:
    alts = sorted((re.escape(n) for n in names), key=len, reverse=True)
    return re.compile(r"(?<![0-9A-Za-z_])(" + "|".join(alts) + r")(?![0-9A-Za-z_])", re.IGNORECASE)


def rename_in_text(text: str, rename_map: dict[str, str]) -> str:
    """Whole-word, case-insensitive replacement of old names in free text."""
    if not rename_map or not text:
        return text
    lower_map = {old.lower(): new for old, new in rename_map.items()}
    pattern = _rename_pattern(rename_map)
    return pattern.sub(lambda m: lower_map[m.group(1).lower()], text)


def _check_rename_map(network: SocialNetwork, rename_map: dict[str, str]) -> None:
    news = list(rename_map.values())
    if len(set(news)) != len(news):
        dupes = sorted({n for n in news if news.count(n) > 1})
        raise CorpusError(f"rename map is not injective: duplicate new names {dupes}")
    lowered = [old.lower() for old in rename_map]
    if len(set(lowered)) != len(lowered):
        raise CorpusError("rename map old names collide case-insensitively")
    for old, new in rename_map.items():
        network.require(old)
        _check_id(new, "new name")
        if new in network.individuals:
            raise CorpusError(f"name collision: new name {new!r} already present in the network")


def anonymize(
    network: SocialNetwork, corpus: MessageCorpus, rename_map: dict[str, str]
) -> tuple[SocialNetwork, MessageCorpus]:
    """Rename individuals everywhere: ids, edges, message fields, and in-text
    whole-word mentions (case-insensitive). Structure is preserved exactly.
    """
    if not rename_map:
        return network, corpus
    _check_rename_map(network, rename_map)

    def rid(name: str) -> str:
        return rename_map.get(name, name)

    new_net = SocialNetwork()
    for ind in sorted(network.individuals.values(), key=lambda i: i.id):
        persona = rename_in_text(ind.persona, rename_map) if ind.persona else None
        new_net.add_individual(Individual(rid(ind.id), persona))
    for a, b in network.edges:
        new_net.add_edge(rid(a), rid(b))

    messages = [
        Message(
            session_id=rename_in_text(m.session_id, rename_map),
            seq=m.seq,
            sender=rid(m.sender),
            receiver=rid(m.receiver),
            text=rename_in_text(m.text, rename_map),
        )
        for m in corpus.iter_messages()
    ]
    return new_net, MessageCorpus(messages)


def anonymize_tasks(tasks: Iterable[TaskInstance], rename_map: dict[str, str]) -> list[TaskInstance]:
    """Apply a rename map to task initiators, question text, and text answers."""
    out = []
    for t in tasks:
        answer = t.answer
        if t.answer_kind == "text":
            answer = rename_in_text(t.answer, rename_map)
        elif t.answer_kind == "names":
            answer = [rename_in_text(n, rename_map) for n in t.answer]
        out.append(
            TaskInstance(
                id=t.id,
                question=rename_in_text(t.question, rename_map),
                answer_kind=t.answer_kind,
                answer=answer,
                initiators=(
                    rename_map.get(t.initiators[0], t.initiators[0]),
                    rename_map.get(t.initiators[1], t.initiators[1]),
                ),
                metric=t.metric,
                dataset_tag=t.dataset_tag,
                extra=t.extra,
            )
        )
    return out
