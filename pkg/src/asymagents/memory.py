"""Per-individual mixed memory.

Clear memory is an exact index over the owner's raw messages (keyword +
context window + result limit). Fuzzy memory holds one summary per session
with an embedding for semantic top-k retrieval. Both are built strictly from
:func:`corpus.visible_messages`, so retrieval can never cross the asymmetry
boundary.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from .corpus import MessageCorpus, SocialNetwork, Message, visible_messages


class MemoryError_(ValueError):
    """Memory build or query failure."""


@dataclass(frozen=True)
class ClearQuery:
    keywords: tuple[str, ...]
    context_window: int = 0
    limit: int = 10

    def __post_init__(self) -> None:
        if not self.keywords or any(not k.strip() for k in self.keywords):
            raise MemoryError_("clear query needs at least one nonempty keyword")
        if self.context_window < 0:
            raise MemoryError_("context_window must be >= 0")
        if self.limit < 1:
            raise MemoryError_("limit must be >= 1")


@dataclass(frozen=True)
class FuzzyQuery:
    text: str
    topk: int = 3

    def __post_init__(self) -> None:
        if not self.text.strip():
            raise MemoryError_("fuzzy query text must be nonempty")
        if self.topk < 1:
            raise MemoryError_("topk must be >= 1")


@dataclass(frozen=True)
class RetrievalHit:
    kind: str  # "message" | "summary"
    session_id: str
    seq_span: tuple[int, int]
    text: str
    score: float
    seed: bool = True  # False for context-window neighbors of a keyword match


@dataclass
class RetrievalResult:
    hits: list[RetrievalHit] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.hits)


# ---------------------------------------------------------------------------
# Clear memory.
# ---------------------------------------------------------------------------


class ClearMemory:
    """Exact index over one owner's visible messages.

    Keeps a token index (fast path for whole-word keywords) and a per-session
    positional index used for context-window expansion. Window expansion moves
    over the owner-visible subsequence of a session, never over foreign
    messages.
    """

    def __init__(self, owner: str, messages: list[Message]):
        self.owner = owner
        self.messages = list(messages)
        self._token_index: dict[str, list[int]] = {}
        self._session_positions: dict[str, list[int]] = {}
        for idx, msg in enumerate(self.messages):
            self._session_positions.setdefault(msg.session_id, []).append(idx)
            for token in msg.text.lower().split():
                token = token.strip(".,!?;:()[]\"'")
                if token:
                    self._token_index.setdefault(token, []).append(idx)

    def __len__(self) -> int:
        return len(self.messages)


def build_clear(network: SocialNetwork, corpus: MessageCorpus, owner: str) -> ClearMemory:
    return ClearMemory(owner, visible_messages(network, corpus, owner))


def query_clear(mem: ClearMemory, query: ClearQuery) -> RetrievalResult:
    """Keyword seeds (case-insensitive substring match) expanded by the context
    window within each session, deduplicated, in (session_id, seq) order,
    truncated to `limit`.
    """
    keywords = [k.lower() for k in query.keywords]
    seeds: set[int] = set()
    for kw in keywords:
        for idx in mem._token_index.get(kw, ()):  # whole-word fast path
            seeds.add(idx)
    for idx, msg in enumerate(mem.messages):
        if idx in seeds:
            continue
        low = msg.text.lower()
        if any(kw in low for kw in keywords):
            seeds.add(idx)

    selected: set[int] = set()
    for idx in seeds:
        positions = mem._session_positions[mem.messages[idx].session_id]
        pos = positions.index(idx)
        lo = max(0, pos - query.context_window)
        hi = min(len(positions), pos + query.context_window + 1)
        selected.update(positions[lo:hi])

    ordered = sorted(selected, key=lambda i: (mem.messages[i].session_id, mem.messages[i].seq))
    hits = []
    for idx in ordered[: query.limit]:
        msg = mem.messages[idx]
        is_seed = idx in seeds
        hits.append(
            RetrievalHit(
                kind="message",
                session_id=msg.session_id,
                seq_span=(msg.seq, msg.seq),
                text=msg.text,
                score=1.0 if is_seed else 0.0,
                seed=is_seed,
            )
        )
    return RetrievalResult(hits)


# ---------------------------------------------------------------------------
# Session summaries.
# ---------------------------------------------------------------------------

EXTRACTIVE_TOKEN_BUDGET = 64


@dataclass(frozen=True)
class SessionSummary:
    session_id: str
    text: str
    extractive: bool


def session_text(messages: list[Message]) -> str:
    return "\n".join(f"{m.sender}: {m.text}" for m in messages)


def extractive_summary(messages: list[Message]) -> str:
    """Deterministic fallback: the first 64 whitespace tokens of the session."""
    tokens = session_text(messages).split()
    return " ".join(tokens[:EXTRACTIVE_TOKEN_BUDGET])


def summarize_sessions(
    network: SocialNetwork,
    corpus: MessageCorpus,
    owner: str,
    summarizer: Callable[[str, str], str] | None = None,
) -> list[SessionSummary]:
    """One summary per session the owner participates in, ordered by session id.

    `summarizer(session_id, session_text)` may call a chat backend; when it is
    None the extractive fallback is used, so the default path needs no LLM.
    """
    visible = visible_messages(network, corpus, owner)
    by_session: dict[str, list[Message]] = {}
    for msg in visible:
        by_session.setdefault(msg.session_id, []).append(msg)
    out = []
    for sid in sorted(by_session):
        msgs = by_session[sid]
        if summarizer is None:
            out.append(SessionSummary(sid, extractive_summary(msgs), extractive=True))
        else:
            try:
                text = summarizer(sid, session_text(msgs))
            except Exception as exc:
                raise MemoryError_(f"summarizer failed for session {sid!r}: {exc}") from exc
            out.append(SessionSummary(sid, text, extractive=False))
    return out


# ---------------------------------------------------------------------------
# Embedding providers.
# ---------------------------------------------------------------------------


class HashEmbedder:
    """Offline deterministic embedder: char n-grams feature-hashed into a
    fixed-dimension unit vector. Same text always yields the same vector.
    """

    def __init__(self, dim: int = 64, ngram: int = 3, seed: int = 0):
        if dim < 2:
            raise MemoryError_("embedding dim must be >= 2")
        self.dim = dim
        self.ngram = ngram
        self.seed = seed
        self.name = f"hash{dim}-n{ngram}-s{seed}"

    def _gram_value(self, gram: str) -> tuple[int, int]:
        digest = hashlib.blake2b(f"{self.seed}|{gram}".encode("utf-8"), digest_size=8).digest()
        h = int.from_bytes(digest, "big")
        return h % self.dim, 1 if (h >> 63) & 1 else -1

    def embed(self, texts: list[str]) -> np.ndarray:
        vectors = np.zeros((len(texts), self.dim), dtype=np.float64)
        for row, text in enumerate(texts):
            padded = f"^{text.lower()}$"
            for i in range(len(padded) - self.ngram + 1):
                idx, sign = self._gram_value(padded[i : i + self.ngram])
                vectors[row, idx] += sign
            norm = np.linalg.norm(vectors[row])
            if norm == 0.0:
                vectors[row, 0] = 1.0
            else:
                vectors[row] /= norm
        return vectors


class EmbeddingCache:
    """Optional JSON file cache keyed by (provider name, sha256 of text)."""

    def __init__(self, path: str | Path):
        self.path = Path(path)
        self._data: dict[str, list[float]] = {}
        if self.path.exists():
            self._data = json.loads(self.path.read_text(encoding="utf-8"))

    @staticmethod
    def _key(provider: str, text: str) -> str:
        digest = hashlib.sha256(text.encode("utf-8")).hexdigest()
        return f"{provider}:{digest}"

    def get(self, provider: str, text: str) -> np.ndarray | None:
        raw = self._data.get(self._key(provider, text))
        return None if raw is None else np.asarray(raw, dtype=np.float64)

    def put(self, provider: str, text: str, vector: np.ndarray) -> None:
        self._data[self._key(provider, text)] = [float(x) for x in vector]

    def save(self) -> None:
        self.path.parent.mkdir(parents=True, exist_ok=True)
        self.path.write_text(json.dumps(self._data), encoding="utf-8")


class CachingEmbedder:
    """Wraps an embedder with an :class:`EmbeddingCache`."""

    def __init__(self, inner, cache: EmbeddingCache):
        self.inner = inner
        self.cache = cache
        self.name = inner.name

    def embed(self, texts: list[str]) -> np.ndarray:
        results: list[np.ndarray | None] = [self.cache.get(self.name, t) for t in texts]
        missing = [i for i, r in enumerate(results) if r is None]
        if missing:
            fresh = self.inner.embed([texts[i] for i in missing])
            for slot, i in enumerate(missing):
                results[i] = fresh[slot]
                self.cache.put(self.name, texts[i], fresh[slot])
        dim = len(results[0]) if results else getattr(self.inner, "dim", 0)
        out = np.zeros((len(texts), dim), dtype=np.float64)
        for i, r in enumerate(results):
            out[i] = r
        return out


def embed(texts: list[str], provider) -> np.ndarray:
    """Embed texts with any provider, enforcing the unit-norm contract."""
    if len(texts) == 0:
        return np.zeros((0, getattr(provider, "dim", 0)), dtype=np.float64)
    vectors = provider.embed(list(texts))
    vectors = np.asarray(vectors, dtype=np.float64)
    if vectors.shape[0] != len(texts):
        raise MemoryError_(
            f"provider returned {vectors.shape[0]} vectors for {len(texts)} texts"
        )
    norms = np.linalg.norm(vectors, axis=1)
    if np.any(np.abs(norms - 1.0) > 1e-6):
        raise MemoryError_("provider returned non-unit vectors")
    return vectors


# ---------------------------------------------------------------------------
# Fuzzy memory.
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class FuzzyEntry:
    session_id: str
    text: str
    extractive: bool
    vector: np.ndarray
    seq_span: tuple[int, int]


class FuzzyMemory:
    def __init__(self, owner: str, entries: list[FuzzyEntry], dim: int):
        self.owner = owner
        self.entries = entries
        self.dim = dim

    def __len__(self) -> int:
        return len(self.entries)


def build_fuzzy(
    network: SocialNetwork,
    corpus: MessageCorpus,
    owner: str,
    embedder,
    summarizer: Callable[[str, str], str] | None = None,
) -> FuzzyMemory:
    summaries = summarize_sessions(network, corpus, owner, summarizer)
    vectors = embed([s.text for s in summaries], embedder)
    visible = visible_messages(network, corpus, owner)
    spans: dict[str, tuple[int, int]] = {}
    for msg in visible:
        lo, hi = spans.get(msg.session_id, (msg.seq, msg.seq))
        spans[msg.session_id] = (min(lo, msg.seq), max(hi, msg.seq))
    entries = [
        FuzzyEntry(s.session_id, s.text, s.extractive, vectors[i], spans[s.session_id])
        for i, s in enumerate(summaries)
    ]
    return FuzzyMemory(owner, entries, dim=getattr(embedder, "dim", vectors.shape[1] if len(entries) else 0))


def query_fuzzy(mem: FuzzyMemory, query: FuzzyQuery, embedder) -> RetrievalResult:
    """Exhaustive cosine scan over session summaries; top-k by similarity,
    ties broken by ascending session id. An approximate index may replace this
    only if it reproduces the scan's top-k set.
    """
    if len(mem) == 0:
        return RetrievalResult([])
    qvec = embed([query.text], embedder)[0]
    scored = [(float(entry.vector @ qvec), entry) for entry in mem.entries]
    scored.sort(key=lambda pair: (-pair[0], pair[1].session_id))
    hits = [
        RetrievalHit(
            kind="summary",
            session_id=entry.session_id,
            seq_span=entry.seq_span,
            text=entry.text,
            score=score,
        )
        for score, entry in scored[: query.topk]
    ]
    return RetrievalResult(hits)
