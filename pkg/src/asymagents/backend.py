"""Chat and embedding providers.

Two chat providers share one interface: a remote client speaking the
OpenAI-compatible wire shape (``POST {endpoint}/chat/completions`` and
``/embeddings``) with retries, and a deterministic replay provider that serves
canned responses matched by substring cues — the workhorse for tests and
reproducible runs. Logs carry digests and token counts only, never secrets.
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import requests

logger = logging.getLogger(__name__)


class BackendError(RuntimeError):
    """Transport failure or provider misconfiguration."""


class ReplayError(BackendError):
    """Replay script exhausted or cue mismatch (a test-authoring aid)."""


@dataclass
class BackendConfig:
    kind: str = "scripted"  # remote | scripted | fallback
    model: str = ""
    temperature: float = 0.2
    max_tokens: int | None = None
    endpoint: str = ""
    api_key_env: str = "OPENAI_API_KEY"
    embed_model: str = ""
    retry_attempts: int = 3
    retry_backoff: float = 1.0  # seconds; doubles per attempt
    timeout: float = 60.0

    def __post_init__(self) -> None:
        if self.kind not in ("remote", "scripted", "fallback"):
            raise BackendError(f"unknown backend kind {self.kind!r}")
        if self.temperature < 0:
            raise BackendError("temperature must be >= 0")
        if self.retry_attempts < 1:
            raise BackendError("retry_attempts must be >= 1")

    def digest_fields(self) -> dict:
        return {
            "kind": self.kind,
            "model": self.model,
            "temperature": self.temperature,
            "max_tokens": self.max_tokens,
            "embed_model": self.embed_model,
        }


@dataclass
class ReplayEntry:
    cue: str
    response: str


class ReplayScript:
    """Ordered canned responses; each chat call consumes exactly one entry
    whose cue must appear in the assembled prompt.
    """

    def __init__(self, entries: list[ReplayEntry]):
        self.entries = entries
        self.cursor = 0

    @classmethod
    def from_path(cls, path: str | Path) -> "ReplayScript":
        entries = []
        for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
                entries.append(ReplayEntry(cue=rec["cue"], response=rec["response"]))
            except (json.JSONDecodeError, KeyError) as exc:
                raise ReplayError(f"{path}:{lineno}: bad replay entry ({exc!r})") from None
        return cls(entries)

    def next(self, prompt: str) -> str:
        if self.cursor >= len(self.entries):
            raise ReplayError(f"script exhausted after {len(self.entries)} entries")
        entry = self.entries[self.cursor]
        if entry.cue not in prompt:
            raise ReplayError(
                f"replay cue mismatch at entry {self.cursor}: expected cue {entry.cue!r} "
                f"in prompt starting {prompt[:120]!r}"
            )
        self.cursor += 1
        return entry.response

    def reset(self) -> None:
        self.cursor = 0

    @property
    def remaining(self) -> int:
        return len(self.entries) - self.cursor


def _digest(text: str) -> str:
    return hashlib.sha256(text.encode("utf-8")).hexdigest()[:16]


def _flatten(messages: list[dict[str, str]]) -> str:
    return "\n".join(m.get("content", "") for m in messages)


class ChatBackend:
    """Dispatches chat/embedding calls per :class:`BackendConfig`.

    `call_log` records one entry per call with prompt/response digests and
    whitespace token counts (cost visibility without leaking content or keys).
    """

    def __init__(self, config: BackendConfig, script: ReplayScript | None = None,
                 embedder=None, sleep=time.sleep):
        self.config = config
        self.script = script
        self.embedder = embedder
        self.call_log: list[dict] = []
        self._sleep = sleep
        if config.kind == "scripted" and script is None:
            raise BackendError("scripted backend needs a replay script")

    # -- chat ---------------------------------------------------------------

    def chat(self, messages: list[dict[str, str]]) -> str:
        prompt = _flatten(messages)
        if self.config.kind == "scripted":
            response = self.script.next(prompt)
            attempts = 1
        elif self.config.kind == "remote":
            response, attempts = self._remote_chat(messages)
        else:
            raise BackendError("fallback backend has no chat capability")
        self.call_log.append(
            {
                "op": "chat",
                "prompt_sha": _digest(prompt),
                "response_sha": _digest(response),
                "prompt_tokens": len(prompt.split()),
                "response_tokens": len(response.split()),
                "attempts": attempts,
            }
        )
        return response

    def chat_text(self, prompt: str) -> str:
        return self.chat([{"role": "user", "content": prompt}])

    def _api_key(self) -> str:
        key = os.environ.get(self.config.api_key_env, "")
        if not key:
            raise BackendError(f"missing API key: set ${self.config.api_key_env}")
        return key

    def _post_with_retries(self, url: str, payload: dict) -> tuple[dict, int]:
        headers = {"Authorization": f"Bearer {self._api_key()}"}
        last_error: Exception | None = None
        for attempt in range(1, self.config.retry_attempts + 1):
            try:
                resp = requests.post(url, json=payload, headers=headers, timeout=self.config.timeout)
                if resp.status_code >= 500 or resp.status_code == 429:
                    raise BackendError(f"HTTP {resp.status_code} from {url}")
                resp.raise_for_status()
                return resp.json(), attempt
            except (requests.RequestException, BackendError) as exc:
                last_error = exc
                if attempt < self.config.retry_attempts:
                    delay = self.config.retry_backoff * (2 ** (attempt - 1))
                    logger.warning("backend call failed (attempt %d/%d): %s; retrying in %.1fs",
                                   attempt, self.config.retry_attempts, exc, delay)
                    self._sleep(delay)
        raise BackendError(
            f"backend call failed after {self.config.retry_attempts} attempts: {last_error}"
        )

    def _remote_chat(self, messages: list[dict[str, str]]) -> tuple[str, int]:
        if not self.config.endpoint:
            raise BackendError("remote backend needs an endpoint URL")
        payload: dict = {
            "model": self.config.model,
            "messages": messages,
            "temperature": self.config.temperature,
        }
        if self.config.max_tokens:
            payload["max_tokens"] = self.config.max_tokens
        body, attempts = self._post_with_retries(
            self.config.endpoint.rstrip("/") + "/chat/completions", payload
        )
        try:
            return body["choices"][0]["message"]["content"], attempts
        except (KeyError, IndexError, TypeError) as exc:
            raise BackendError(f"malformed chat completion response: {exc!r}") from None

    # -- embeddings -----------------------------------------------------------

    def embed(self, texts: list[str]) -> np.ndarray:
        if len(texts) == 0:
            dim = getattr(self.embedder, "dim", 0)
            return np.zeros((0, dim), dtype=np.float64)
        if self.config.kind == "remote":
            vectors, attempts = self._remote_embed(texts)
        else:
            if self.embedder is None:
                raise BackendError("no local embedder configured")
            vectors = np.asarray(self.embedder.embed(list(texts)), dtype=np.float64)
            attempts = 1
        self.call_log.append(
            {
                "op": "embed",
                "prompt_sha": _digest("\x1e".join(texts)),
                "count": len(texts),
                "attempts": attempts,
            }
        )
        return vectors

    def _remote_embed(self, texts: list[str]) -> tuple[np.ndarray, int]:
        if not self.config.endpoint:
            raise BackendError("remote backend needs an endpoint URL")
        payload = {"model": self.config.embed_model or self.config.model, "input": list(texts)}
        body, attempts = self._post_with_retries(
            self.config.endpoint.rstrip("/") + "/embeddings", payload
        )
        try:
            rows = [item["embedding"] for item in body["data"]]
        except (KeyError, TypeError) as exc:
            raise BackendError(f"malformed embeddings response: {exc!r}") from None
        dims = {len(r) for r in rows}
        if len(dims) > 1:
            raise BackendError(f"inconsistent embedding dimensions in one batch: {sorted(dims)}")
        vectors = np.asarray(rows, dtype=np.float64)
        norms = np.linalg.norm(vectors, axis=1, keepdims=True)
        norms[norms == 0.0] = 1.0
        return vectors / norms, attempts


def make_summarizer(backend: ChatBackend, owner: str):
    """Adapt a chat backend into the `summarizer(session_id, text)` callable
    used by fuzzy-memory builds.
    """
    from . import prompts

    def summarize(session_id: str, text: str) -> str:
        header = prompts.make_header(owner, "summarize", 0)
        prompt = prompts.get("summarize").render(header=header, session_text=text)
        try:
            return backend.chat_text(prompt)
        except BackendError as exc:
            raise BackendError(f"summarization failed for session {session_id!r}: {exc}") from exc

    return summarize
