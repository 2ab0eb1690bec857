"""Completion backends, prompt templating, and the response cache.

All backends expose one method, ``complete(request) -> str``. Requests are
value objects with a canonical byte serialization; their SHA-256
fingerprint keys both the on-disk cache and trace replay.
"""
from __future__ import annotations

import json
import logging
import os
import re
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path

import requests as _requests

from ._util import canonical_bytes, canonical_json, sha256_hex, utc_now_iso
from .errors import (
    AuthError,
    ReplayDivergenceError,
    RetryBudgetExhaustedError,
    ScriptExhaustedError,
    TemplateError,
    TransientBackendError,
)

logger = logging.getLogger(__name__)

_PLACEHOLDER = re.compile(r"\{\{(\w+)\}\}")

ROLES = ("system", "user", "assistant")


def render_template(template: str, variables: dict) -> str:
    """Substitute every ``{{name}}`` placeholder in a single pass.

    Values are converted to text (booleans as ``true``/``false``); text
    substituted for one placeholder is never rescanned, so values may
    safely contain ``{{...}}`` themselves. Unresolved or non-renderable
    placeholders raise a TemplateError naming every offender.
    """
    problems: list[str] = []

    def substitute(match: re.Match) -> str:
        name = match.group(1)
        if name not in variables:
            problems.append(f"missing variable {name!r}")
            return match.group(0)
        value = variables[name]
        if isinstance(value, str):
            return value
        if isinstance(value, bool):
            return "true" if value else "false"
        if isinstance(value, (int, float)):
            return json.dumps(value)
        problems.append(f"variable {name!r} has non-renderable type {type(value).__name__}")
        return match.group(0)

    rendered = _PLACEHOLDER.sub(substitute, template)
    if problems:
        raise TemplateError("; ".join(problems))
    return rendered


@dataclass(frozen=True)
class ChatTurn:
    role: str
    content: str


@dataclass(frozen=True)
class BackendRequest:
    """One chat completion request. Canonical form excludes nothing."""

    model: str
    turns: tuple[ChatTurn, ...]
    temperature: float = 0.0
    max_tokens: int = 2048

    def __post_init__(self):
        roles = [t.role for t in self.turns]
        if any(r not in ROLES for r in roles):
            raise ValueError(f"unknown turn role in {roles}")
        if "system" in roles[1:]:
            raise ValueError("system turn allowed only at position 0")

    def to_dict(self) -> dict:
        return {
            "model": self.model,
            "turns": [{"role": t.role, "content": t.content} for t in self.turns],
            "temperature": self.temperature,
            "max_tokens": self.max_tokens,
        }

    def canonical(self) -> bytes:
        return canonical_bytes(self.to_dict())

    def fingerprint(self) -> str:
        return sha256_hex(self.canonical())

    def full_text(self) -> str:
        return "\n".join(t.content for t in self.turns)


@dataclass
class ResponseRule:
    """Rule for scripted backends: match on substrings and turn count."""

    response: str
    contains: tuple[str, ...] = ()
    turns: int | None = None

    def matches(self, request: BackendRequest) -> bool:
        if self.turns is not None and len(request.turns) != self.turns:
            return False
        text = request.full_text()
        return all(needle in text for needle in self.contains)


class ScriptedBackend:
    """Deterministic backend for tests, fixtures and replay.

    Exactly one mode is active:
      * queue  - responses consumed in order;
      * keyed  - responses looked up by request fingerprint (replay);
      * rules  - first matching ResponseRule wins.
    Every request handled is appended to ``requests``.
    """

    def __init__(self, responses: list[str] | None = None,
                 keyed: dict[str, str] | None = None,
                 rules: list[ResponseRule] | None = None):
        modes = sum(x is not None for x in (responses, keyed, rules))
        if modes != 1:
            raise ValueError("exactly one of responses/keyed/rules must be given")
        self._queue = list(responses) if responses is not None else None
        self._keyed = dict(keyed) if keyed is not None else None
        self._rules = list(rules) if rules is not None else None
        self.requests: list[BackendRequest] = []
        self._lock = threading.Lock()

    def complete(self, request: BackendRequest) -> str:
        with self._lock:
            self.requests.append(request)
            if self._queue is not None:
                if not self._queue:
                    raise ScriptExhaustedError(
                        f"scripted backend queue is empty (request {len(self.requests)})")
                return self._queue.pop(0)
            if self._keyed is not None:
                key = request.fingerprint()
                if key not in self._keyed:
                    raise ReplayDivergenceError(
                        f"request {key} not present in recorded responses; "
                        f"last turn: {request.turns[-1].content[:120]!r}")
                return self._keyed[key]
            for rule in self._rules:
                if rule.matches(request):
                    return rule.response
            raise ScriptExhaustedError(
                f"no scripted rule matched request with {len(request.turns)} turns; "
                f"last turn: {request.turns[-1].content[:200]!r}")

    @classmethod
    def from_rules_file(cls, path: str | Path) -> "ScriptedBackend":
        import yaml

        doc = yaml.safe_load(Path(path).read_text(encoding="utf-8"))
        rules = [
            ResponseRule(
                response=entry["response"],
                contains=tuple(entry.get("contains", ())),
                turns=entry.get("turns"),
            )
            for entry in doc["rules"]
        ]
        return cls(rules=rules)


class RemoteBackend:
    """HTTP chat-completions backend with bounded exponential backoff.

    The API credential is read from the environment variable named in the
    profile; it is never written to configs, traces or logs.
    """

    def __init__(self, endpoint: str, api_key_env: str, *, max_attempts: int = 5,
                 backoff_base: float = 0.5, request_timeout: float = 60.0,
                 session=None, sleep=time.sleep):
        self.endpoint = endpoint
        self.api_key_env = api_key_env
        self.max_attempts = max_attempts
        self.backoff_base = backoff_base
        self.request_timeout = request_timeout
        self._session = session or _requests.Session()
        self._sleep = sleep

    def complete(self, request: BackendRequest) -> str:
        api_key = os.environ.get(self.api_key_env)
        if not api_key:
            raise AuthError(f"environment variable {self.api_key_env} is not set")
        body = {
            "model": request.model,
            "messages": [{"role": t.role, "content": t.content} for t in request.turns],
            "temperature": request.temperature,
            "max_tokens": request.max_tokens,
        }
        headers = {"Authorization": f"Bearer {api_key}"}
        last_error: Exception | None = None
        for attempt in range(1, self.max_attempts + 1):
            try:
                resp = self._session.post(self.endpoint, json=body, headers=headers,
                                          timeout=self.request_timeout)
            except _requests.RequestException as exc:
                last_error = TransientBackendError(f"network error: {exc}")
            else:
                if resp.status_code in (401, 403):
                    raise AuthError(f"backend rejected credentials (HTTP {resp.status_code})")
                if resp.status_code == 429 or resp.status_code >= 500:
                    last_error = TransientBackendError(f"HTTP {resp.status_code}")
                elif resp.status_code >= 400:
                    raise TransientBackendError(f"HTTP {resp.status_code}: {resp.text[:200]}")
                else:
                    payload = resp.json()
                    return payload["choices"][0]["message"]["content"]
            if attempt < self.max_attempts:
                delay = self.backoff_base * (2 ** (attempt - 1))
                logger.warning("backend attempt %d/%d failed (%s); retrying in %.1fs",
                               attempt, self.max_attempts, last_error, delay)
                self._sleep(delay)
        raise RetryBudgetExhaustedError(
            f"backend failed after {self.max_attempts} attempts: {last_error}")


class ResponseCache:
    """Content-addressed response store: one file per request fingerprint.

    The file holds a small JSON header line (fingerprint, stored_at)
    followed by the raw response text. Writes go through a temp file and
    atomic replace. Cache failures must never fail a run; callers treat
    them as misses (see cached_complete).
    """

    def __init__(self, directory: str | Path):
        self.directory = Path(directory)
        self.directory.mkdir(parents=True, exist_ok=True)
        self.hits = 0
        self.misses = 0
        self._lock = threading.Lock()

    def _path(self, key: str) -> Path:
        return self.directory / f"{key}.resp"

    def get(self, key: str) -> str | None:
        path = self._path(key)
        if not path.exists():
            with self._lock:
                self.misses += 1
            return None
        text = path.read_text(encoding="utf-8")
        header, _, body = text.partition("\n")
        json.loads(header)
        with self._lock:
            self.hits += 1
        return body

    def put(self, key: str, response: str) -> None:
        header = canonical_json({"fingerprint": key, "stored_at": utc_now_iso()})
        tmp = self._path(key).with_suffix(".tmp")
        tmp.write_text(header + "\n" + response, encoding="utf-8")
        tmp.replace(self._path(key))

    def stats(self) -> dict:
        entries = list(self.directory.glob("*.resp"))
        return {
            "entries": len(entries),
            "bytes": sum(p.stat().st_size for p in entries),
            "hits": self.hits,
            "misses": self.misses,
        }

    def clear(self) -> int:
        entries = list(self.directory.glob("*.resp"))
        for path in entries:
            path.unlink()
        return len(entries)


def cached_complete(backend, request: BackendRequest, cache: ResponseCache | None = None,
                    on_warning=None) -> tuple[str, bool]:
    """Answer a request through the cache; returns (response, was_cached).

    An unreadable or unwritable cache degrades to a direct backend call
    with a warning, never an error.
    """
    key = request.fingerprint()
    degraded = False
    if cache is not None:
        try:
            hit = cache.get(key)
        except OSError as exc:
            degraded = True
            logger.warning("cache read failed for %s: %s", key, exc)
            if on_warning:
                on_warning(f"cache read failed: {exc}")
        else:
            if hit is not None:
                return hit, True
    response = backend.complete(request)
    if cache is not None and not degraded:
        try:
            cache.put(key, response)
        except OSError as exc:
            logger.warning("cache write failed for %s: %s", key, exc)
            if on_warning:
                on_warning(f"cache write failed: {exc}")
    return response, False
