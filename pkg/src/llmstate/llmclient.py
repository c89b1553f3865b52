"""Backends for text completion: a live OpenAI-compatible HTTP client and a
deterministic cassette (record/replay/scripted) backend.

Cassette files are versioned JSON, one per episode, human-diffable.  Each
entry carries the role and round of the call plus an optional digest of the
canonicalized request: replay prefers a digest match and falls back to
per-role call order for hand-authored cassettes, where digest matching
would be too brittle.

Environment for the live client: ``LLMSTATE_API_BASE``, ``LLMSTATE_API_KEY``,
``LLMSTATE_MODEL``.
"""

from __future__ import annotations

import hashlib
import json
import os
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence, Union

import requests


class TransportError(RuntimeError):
    """The live backend gave up after retrying transient failures."""


class AuthError(RuntimeError):
    """The endpoint rejected the credentials."""


class CassetteMiss(LookupError):
    """Replay was asked for a request the cassette does not contain."""


class BudgetExceeded(RuntimeError):
    """The per-episode completion-call cap was hit."""


@dataclass(frozen=True)
class ChatMessage:
    role: str  # "system" | "user" | "assistant"
    content: str


@dataclass(frozen=True)
class ChatRequest:
    messages: tuple[ChatMessage, ...]
    model: str
    temperature: float = 0.0
    max_output: int = 1024

    def __post_init__(self) -> None:
        if not any(m.role == "user" for m in self.messages):
            raise ValueError("request needs at least one user message")
        if self.temperature < 0:
            raise ValueError("temperature must be >= 0")
        if self.max_output < 1:
            raise ValueError("max_output must be positive")


def _normalize(text: str) -> str:
    return text.replace("\r\n", "\n").replace("\r", "\n").rstrip("\n")


def canonical_digest(request: ChatRequest) -> str:
    """Stable content digest of a request.

    Covers model, temperature, and the role:text pairs with line endings and
    trailing newlines normalized, so requests that differ only in trailing
    whitespace collapse to the same key.
    """
    h = hashlib.sha256()
    h.update(f"model={request.model}\n".encode("utf-8"))
    h.update(f"temperature={float(request.temperature)!r}\n".encode("utf-8"))
    for message in request.messages:
        h.update(f"{message.role}:{_normalize(message.content)}\x00".encode("utf-8"))
    return h.hexdigest()


CASSETTE_VERSION = 1


@dataclass
class CassetteEntry:
    role: str
    step: int
    response: str
    key: Optional[str] = None  # request digest; None for index-keyed entries


@dataclass
class Cassette:
    entries: list[CassetteEntry] = field(default_factory=list)
    mode: str = "replay"  # replay | record | passthrough
    meta: dict = field(default_factory=dict)

    @classmethod
    def load(cls, path: Union[str, Path]) -> "Cassette":
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
        if doc.get("version") != CASSETTE_VERSION:
            raise ValueError(f"unsupported cassette version in {path}")
        entries = [
            CassetteEntry(
                role=e["role"],
                step=int(e.get("step", 0)),
                response=e["response"],
                key=e.get("key"),
            )
            for e in doc.get("entries", [])
        ]
        return cls(entries=entries, mode=doc.get("mode", "replay"), meta=doc.get("meta", {}))

    def save(self, path: Union[str, Path]) -> None:
        doc = {
            "version": CASSETTE_VERSION,
            "mode": self.mode,
            "meta": self.meta,
            "entries": [
                {"role": e.role, "step": e.step, "key": e.key, "response": e.response}
                for e in self.entries
            ],
        }
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        Path(path).write_text(
            json.dumps(doc, indent=2, ensure_ascii=False) + "\n", encoding="utf-8"
        )

    @classmethod
    def scripted(cls, responses: Sequence[tuple[str, str]]) -> "Cassette":
        """Build an index-keyed cassette from (role, response) pairs."""
        return cls(
            entries=[
                CassetteEntry(role=role, step=i, response=text)
                for i, (role, text) in enumerate(responses)
            ]
        )


class Backend:
    """Interface shared by all completion backends."""

    model_name: str = "scripted"

    def complete(self, request: ChatRequest, *, role: str = "", step: int = 0) -> str:
        raise NotImplementedError


def complete(backend: Backend, request: ChatRequest, *, role: str = "", step: int = 0) -> str:
    return backend.complete(request, role=role, step=step)


class ReplayBackend(Backend):
    """Deterministic playback of a cassette; it has no transport at all."""

    def __init__(self, cassette: Cassette):
        self.cassette = cassette
        self.model_name = cassette.meta.get("model", "replay")
        self._digest_queues: dict[str, list[CassetteEntry]] = {}
        self._indexed: dict[str, list[CassetteEntry]] = {}
        for entry in cassette.entries:
            if entry.key:
                self._digest_queues.setdefault(entry.key, []).append(entry)
            else:
                self._indexed.setdefault(entry.role, []).append(entry)
        self._role_cursor: dict[str, int] = {}

    def complete(self, request: ChatRequest, *, role: str = "", step: int = 0) -> str:
        digest = canonical_digest(request)
        queue = self._digest_queues.get(digest)
        if queue:
            return queue.pop(0).response
        indexed = self._indexed.get(role, [])
        cursor = self._role_cursor.get(role, 0)
        if cursor < len(indexed):
            self._role_cursor[role] = cursor + 1
            return indexed[cursor].response
        raise CassetteMiss(
            f"no cassette entry for role={role!r} step={step} digest={digest[:12]}"
        )


class RecordBackend(Backend):
    """Wraps another backend and appends every exchange to a cassette."""

    def __init__(self, inner: Backend, cassette: Optional[Cassette] = None,
                 path: Optional[Union[str, Path]] = None):
        self.inner = inner
        self.cassette = cassette or Cassette(mode="record")
        self.path = Path(path) if path else None
        self.model_name = inner.model_name
        self._lock = threading.Lock()

    def complete(self, request: ChatRequest, *, role: str = "", step: int = 0) -> str:
        response = self.inner.complete(request, role=role, step=step)
        entry = CassetteEntry(
            role=role, step=step, response=response, key=canonical_digest(request)
        )
        with self._lock:
            self.cassette.entries.append(entry)
            if self.path is not None:
                self.cassette.save(self.path)
        return response


class LiveBackend(Backend):
    """OpenAI-compatible chat-completions client.

    Transient transport failures are retried with bounded exponential
    backoff; auth rejections fail immediately.  In-flight requests are
    bounded by a semaphore so a parallel suite cannot stampede the endpoint.
    """

    def __init__(
        self,
        api_base: Optional[str] = None,
        api_key: Optional[str] = None,
        model: Optional[str] = None,
        max_attempts: int = 3,
        max_in_flight: int = 4,
        timeout: float = 120.0,
    ):
        self.api_base = api_base or os.environ.get("LLMSTATE_API_BASE", "")
        self.api_key = api_key or os.environ.get("LLMSTATE_API_KEY", "")
        self.model_name = model or os.environ.get("LLMSTATE_MODEL", "gpt-4-0613")
        if not self.api_base:
            raise AuthError("no API base configured (set LLMSTATE_API_BASE)")
        if not self.api_key:
            raise AuthError("no API key configured (set LLMSTATE_API_KEY)")
        self.max_attempts = max_attempts
        self.timeout = timeout
        self._gate = threading.Semaphore(max_in_flight)

    def complete(self, request: ChatRequest, *, role: str = "", step: int = 0) -> str:
        url = self.api_base.rstrip("/") + "/chat/completions"
        payload = {
            "model": request.model or self.model_name,
            "messages": [
                {"role": m.role, "content": m.content} for m in request.messages
            ],
            "temperature": request.temperature,
            "max_tokens": request.max_output,
        }
        headers = {"Authorization": f"Bearer {self.api_key}"}
        last_error: Optional[Exception] = None
        for attempt in range(self.max_attempts):
            if attempt:
                time.sleep(0.5 * 2 ** (attempt - 1))
            try:
                with self._gate:
                    resp = requests.post(
                        url, json=payload, headers=headers, timeout=self.timeout
                    )
            except requests.RequestException as exc:
                last_error = exc
                continue
            if resp.status_code in (401, 403):
                raise AuthError(f"endpoint rejected credentials ({resp.status_code})")
            if resp.status_code == 429 or resp.status_code >= 500:
                last_error = TransportError(f"HTTP {resp.status_code}")
                continue
            if resp.status_code != 200:
                raise TransportError(f"HTTP {resp.status_code}: {resp.text[:200]}")
            try:
                return resp.json()["choices"][0]["message"]["content"]
            except (KeyError, IndexError, ValueError) as exc:
                raise TransportError(f"malformed completion payload: {exc}") from exc
        raise TransportError(f"gave up after {self.max_attempts} attempts: {last_error}")


class BudgetGuard(Backend):
    """Enforces the per-episode completion-call cap."""

    def __init__(self, inner: Backend, max_calls: int):
        self.inner = inner
        self.max_calls = max_calls
        self.calls_made = 0
        self.model_name = inner.model_name

    def complete(self, request: ChatRequest, *, role: str = "", step: int = 0) -> str:
        if self.calls_made >= self.max_calls:
            raise BudgetExceeded(f"episode exceeded {self.max_calls} completion calls")
        self.calls_made += 1
        return self.inner.complete(request, role=role, step=step)
