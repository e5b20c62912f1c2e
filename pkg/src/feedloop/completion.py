"""Transport to an external text-completion service, plus deterministic
in-process mocks so LLM-backed runs and tests share one interface.

The wire protocol is intentionally minimal (prompt in, text out as JSON);
provider-specific shapes belong in adapter transports. Every backend
exposes `complete(request) -> str`.
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
import threading
import time
from dataclasses import dataclass, field
from typing import Callable, Optional

from .errors import AuthError, BackendUnavailable, PromptDivergence
from .transcript import (REAL, Ask, Corpus, Instruction, RobotAction,
                         RobotThought, Terminate, Transcript, render_prompt)

log = logging.getLogger("feedloop.completion")
audit_log = logging.getLogger("feedloop.completion.audit")


@dataclass(frozen=True)
class CompletionRequest:
    prompt: str
    max_tokens: int = 128
    temperature: float = 0.0
    stop: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        if self.max_tokens <= 0:
            raise ValueError("max_tokens must be > 0")


@dataclass
class ClientConfig:
    endpoint: str = field(
        default_factory=lambda: os.environ.get("FEEDLOOP_ENDPOINT", ""))
    auth_env: str = "FEEDLOOP_API_TOKEN"
    timeout: float = 30.0
    retries: int = 3
    backoff: float = 0.5          # base of the exponential backoff, seconds
    min_interval: float = 0.0     # token-bucket style rate limit

    def __post_init__(self) -> None:
        if self.retries < 0:
            raise ValueError("retries must be >= 0")
        if self.timeout <= 0:
            raise ValueError("timeout must be > 0")


def _digest(text: str) -> str:
    return hashlib.sha256(text.encode()).hexdigest()[:16]


def truncate_at_stop(text: str, stop: tuple[str, ...]) -> str:
    cut = len(text)
    for s in stop:
        idx = text.find(s)
        if idx >= 0:
            cut = min(cut, idx)
    return text[:cut]


def http_transport(url: str, payload: dict, headers: dict,
                   timeout: float) -> tuple[int, dict]:
    import requests
    try:
        resp = requests.post(url, json=payload, headers=headers, timeout=timeout)
    except requests.Timeout as exc:
        raise TimeoutError(str(exc)) from exc
    except requests.RequestException as exc:
        raise ConnectionError(str(exc)) from exc
    try:
        body = resp.json()
    except ValueError:
        body = {}
    return resp.status_code, body


class CompletionClient:
    """Retrying client. Transient failures (timeouts, connection errors,
    5xx) back off exponentially; auth rejections are never retried.
    Request/response digests (never bodies) go to the audit logger."""

    def __init__(self, config: ClientConfig,
                 transport: Callable = http_transport,
                 sleep: Callable[[float], None] = time.sleep):
        self.config = config
        self.transport = transport
        self.sleep = sleep
        self._lock = threading.Lock()
        self._last_request = 0.0

    def _throttle(self) -> None:
        if self.config.min_interval <= 0:
            return
        with self._lock:
            wait = self._last_request + self.config.min_interval - time.monotonic()
            if wait > 0:
                self.sleep(wait)
            self._last_request = time.monotonic()

    def complete(self, request: CompletionRequest) -> str:
        cfg = self.config
        token = os.environ.get(cfg.auth_env, "")
        headers = {"Authorization": f"Bearer {token}"} if token else {}
        payload = {"prompt": request.prompt, "max_tokens": request.max_tokens,
                   "temperature": request.temperature, "stop": list(request.stop)}
        attempts = 0
        last_err: Optional[str] = None
        while attempts <= cfg.retries:
            attempts += 1
            self._throttle()
            start = time.monotonic()
            try:
                status, body = self.transport(cfg.endpoint, payload, headers,
                                              cfg.timeout)
            except (TimeoutError, ConnectionError) as exc:
                last_err = str(exc)
                log.debug("attempt %d failed: %s", attempts, exc)
                self.sleep(cfg.backoff * 2 ** (attempts - 1))
                continue
            if status in (401, 403):
                raise AuthError(f"completion endpoint rejected credentials ({status})")
            if status >= 500:
                last_err = f"server error {status}"
                self.sleep(cfg.backoff * 2 ** (attempts - 1))
                continue
            text = truncate_at_stop(str(body.get("text", "")), request.stop)
            audit_log.info(json.dumps({
                "prompt_sha": _digest(request.prompt),
                "prompt_len": len(request.prompt),
                "text_sha": _digest(text),
                "status": status,
                "latency_ms": round(1000 * (time.monotonic() - start), 1),
                "attempt": attempts,
            }, sort_keys=True))
            return text
        raise BackendUnavailable(
            f"gave up after {attempts} attempts: {last_err}")


def complete(config: ClientConfig, request: CompletionRequest,
             transport: Callable = http_transport) -> str:
    return CompletionClient(config, transport=transport).complete(request)


# ---------------------------------------------------------------------------
# Mocks
# ---------------------------------------------------------------------------

class CannedBackend:
    """Deterministic map from prompt (or prompt digest) to completion."""

    def __init__(self, canned: dict[str, str], default: Optional[str] = None):
        self.canned = dict(canned)
        self.default = default
        self.calls: list[str] = []

    def complete(self, request: CompletionRequest) -> str:
        self.calls.append(request.prompt)
        for key in (request.prompt, _digest(request.prompt)):
            if key in self.canned:
                return truncate_at_stop(self.canned[key], request.stop)
        if self.default is not None:
            return truncate_at_stop(self.default, request.stop)
        raise BackendUnavailable("no canned completion for prompt")


class SequenceBackend:
    """Serves a fixed list of completions in order; errors when exhausted."""

    def __init__(self, completions: list[str]):
        self.completions = list(completions)
        self.served = 0

    def complete(self, request: CompletionRequest) -> str:
        if self.served >= len(self.completions):
            raise BackendUnavailable("scripted backend exhausted")
        text = self.completions[self.served]
        self.served += 1
        return truncate_at_stop(text, request.stop)


# ---------------------------------------------------------------------------
# Listing replay backend
# ---------------------------------------------------------------------------

@dataclass
class Turn:
    """One planner turn of a recorded episode: the planner-side entries and
    the environment-side entries that follow them."""

    planner: list
    env: list

    @property
    def expect(self) -> str:
        return "thought" if isinstance(self.planner[0], RobotThought) else "action"


def group_turns(transcript: Transcript) -> list[Turn]:
    """Split a recorded episode into planner turns.

    Planner-side entries: RobotThought, RobotAction, Terminate, plus an Ask
    riding with its action. Environment-side: scenes, success marks, and
    human answers."""
    turns: list[Turn] = []
    current: Optional[Turn] = None
    for e in transcript.entries:
        if isinstance(e, Instruction):
            continue
        if isinstance(e, (RobotThought, RobotAction, Terminate)):
            current = Turn(planner=[e], env=[])
            turns.append(current)
        elif current is not None:
            if isinstance(e, Ask):
                current.planner.append(e)
            else:
                current.env.append(e)
    return turns


def completion_for_turn(dialect: str, turn: Turn) -> str:
    head = turn.planner[0]
    if isinstance(head, RobotThought):
        return " " + head.text
    if isinstance(head, Terminate):
        if dialect == REAL:
            return " robot.stop()"
        return " done."
    text = " " + head.text
    ask = next((e for e in turn.planner if isinstance(e, Ask)), None)
    if dialect == "kitchen_active":
        text += f" and ask: {ask.question}" if ask else " and continue"
    return text


class ReplayBackend:
    """Replays a recorded episode's completions, asserting each received
    prompt equals the canonical rendering of the recorded prefix."""

    def __init__(self, corpus: Corpus, episode_index: int,
                 few_shot: Optional[str] = None):
        self.dialect = corpus.dialect
        self.episode = corpus.episodes[episode_index]
        self.few_shot = (corpus.prefix_text(episode_index)
                         if few_shot is None else few_shot)
        self.turns = group_turns(self.episode)
        self._cursor = 0
        self._head_entries = []
        for e in self.episode.entries:
            if isinstance(e, (RobotThought, RobotAction, Terminate)):
                break
            self._head_entries.append(e)

    def expected_prompt(self) -> str:
        entries = list(self._head_entries)
        for t in self.turns[: self._cursor]:
            entries.extend(t.planner)
            entries.extend(t.env)
        turn = self.turns[self._cursor]
        prefix = Transcript(dialect=self.dialect, entries=entries)
        return render_prompt(self.few_shot, prefix, expect=turn.expect)

    @property
    def exhausted(self) -> bool:
        return self._cursor >= len(self.turns)

    def next_expect(self) -> str:
        return self.turns[self._cursor].expect

    def complete(self, request: CompletionRequest) -> str:
        if self.exhausted:
            raise BackendUnavailable("recorded episode exhausted")
        expected = self.expected_prompt()
        if request.prompt != expected:
            raise PromptDivergence(
                "replayed prompt diverged from the recording:\n"
                f"--- expected ---\n{expected!r}\n--- received ---\n{request.prompt!r}")
        turn = self.turns[self._cursor]
        self._cursor += 1
        return completion_for_turn(self.dialect, turn)

    def current_env_entries(self) -> list:
        """Recorded environment entries of the most recently served turn."""
        return list(self.turns[self._cursor - 1].env)


def mock_from_listing(corpus: Corpus, episode_index: int) -> ReplayBackend:
    """Backend replaying one recorded episode of a golden corpus."""
    return ReplayBackend(corpus, episode_index)
