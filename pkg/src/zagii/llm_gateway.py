"""Uniform text-generation interface with a deterministic scripted backend.

Every model call in the engine flows through ``Gateway.complete`` carrying a
role tag. Role tags map onto two tiers — lightweight and SOTA — so the
status manager can shadow-check cheap assessments against a stronger model.
Scripted backends make a whole session a pure function of (game, inputs,
scripts); a remote backend slots in behind the same one-call surface.
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
import threading
import time
import urllib.error
import urllib.request
from collections import deque
from dataclasses import dataclass, field
from pathlib import Path

from .errors import (
    BackendUnavailable,
    InvalidRequest,
    ScriptExhausted,
    TimeoutExceeded,
    UnconfiguredTier,
)

log = logging.getLogger(__name__)

ROLE_TAGS = (
    "perception", "thinking", "goal_check", "goal_check_sota",
    "narrative", "copilot_stage", "summarize",
)

# Which tier serves each role. Only goal_check_sota demands the strong tier.
ROLE_TIER = {tag: "light" for tag in ROLE_TAGS}
ROLE_TIER["goal_check_sota"] = "sota"

RETRY_DELAYS_S = (0.25, 1.0)  # R=2 with exponential backoff


@dataclass(frozen=True)
class CompletionRequest:
    role_tag: str
    prompt: str
    max_tokens: int = 512
    temperature: float = 0.0
    stop: tuple[str, ...] = ()


@dataclass(frozen=True)
class CompletionResult:
    text: str
    backend_id: str
    latency_ms: int
    usage: dict[str, int] = field(default_factory=dict)


def normalize_prompt(text: str) -> str:
    """LF newlines, trailing whitespace trimmed per line and at the end."""
    lines = text.replace("\r\n", "\n").replace("\r", "\n").split("\n")
    return "\n".join(line.rstrip() for line in lines).rstrip("\n")


def prompt_hash(text: str) -> str:
    return hashlib.sha256(normalize_prompt(text).encode("utf-8")).hexdigest()


@dataclass(frozen=True)
class ScriptEntry:
    match: str  # exact_hash | ordered
    response: str
    key: str | None = None        # prompt hash for exact_hash entries
    role: str | None = None       # optional role filter for ordered entries
    fail: str | None = None       # "unavailable" | "timeout" | "hard" fault injection


class ScriptedBackend:
    """Replays canned responses: hash-keyed lookups plus ordered queues.

    Ordered entries are consumed in sequence; entries tagged with a role
    form per-role queues so interleaved thinking/goal-check/summarize
    traffic stays easy to script. Consumption is serialized per instance.
    """

    def __init__(self, backend_id: str, entries: list[ScriptEntry] | None = None):
        self.backend_id = backend_id
        self._lock = threading.Lock()
        self._by_hash: dict[str, ScriptEntry] = {}
        self._queues: dict[str | None, deque[ScriptEntry]] = {}
        for entry in entries or []:
            self.add(entry)

    def add(self, entry: ScriptEntry) -> None:
        if entry.match == "exact_hash":
            if entry.key is None:
                raise ValueError("exact_hash entry requires a key")
            if entry.key in self._by_hash:
                raise ValueError(f"duplicate exact_hash key {entry.key!r}")
            self._by_hash[entry.key] = entry
        elif entry.match == "ordered":
            self._queues.setdefault(entry.role, deque()).append(entry)
        else:
            raise ValueError(f"unknown script match mode {entry.match!r}")

    def remaining(self) -> int:
        return sum(len(q) for q in self._queues.values())

    def complete(self, req: CompletionRequest) -> CompletionResult:
        with self._lock:
            entry = self._by_hash.get(prompt_hash(req.prompt))
            if entry is None:
                queue = self._queues.get(req.role_tag)
                if not queue:
                    queue = self._queues.get(None)
                if not queue:
                    raise ScriptExhausted(
                        f"backend {self.backend_id!r}: no script entry for role "
                        f"{req.role_tag!r} (prompt hash {prompt_hash(req.prompt)[:12]})"
                    )
                entry = queue.popleft()
        if entry.fail == "unavailable":
            raise BackendUnavailable(f"scripted fault on {self.backend_id!r}")
        if entry.fail == "timeout":
            raise TimeoutExceeded(f"scripted timeout on {self.backend_id!r}")
        if entry.fail == "hard":
            raise RuntimeError(f"scripted hard fault on {self.backend_id!r}")
        return CompletionResult(
            text=entry.response, backend_id=self.backend_id, latency_ms=0,
            usage={"prompt_units": len(req.prompt.split()), "output_units": len(entry.response.split())},
        )


class RemoteBackend:
    """Thin HTTP chat-completions client. No provider features leak through."""

    def __init__(self, backend_id: str, endpoint: str, model: str,
                 api_key_env: str = "ZAGII_API_KEY", timeout_s: float = 30.0):
        self.backend_id = backend_id
        self.endpoint = endpoint
        self.model = model
        self.api_key_env = api_key_env
        self.timeout_s = timeout_s

    def complete(self, req: CompletionRequest) -> CompletionResult:
        payload = json.dumps({
            "model": self.model,
            "messages": [{"role": "user", "content": req.prompt}],
            "max_tokens": req.max_tokens,
            "temperature": req.temperature,
            **({"stop": list(req.stop)} if req.stop else {}),
        }).encode("utf-8")
        headers = {"Content-Type": "application/json"}
        key = os.environ.get(self.api_key_env)
        if key:
            headers["Authorization"] = f"Bearer {key}"
        request = urllib.request.Request(self.endpoint, data=payload, headers=headers)
        start = time.monotonic()
        try:
            with urllib.request.urlopen(request, timeout=self.timeout_s) as resp:
                body = json.loads(resp.read().decode("utf-8"))
        except urllib.error.URLError as exc:
            raise BackendUnavailable(f"{self.backend_id}: {exc}") from exc
        except TimeoutError as exc:
            raise TimeoutExceeded(f"{self.backend_id}: timed out") from exc
        latency = int((time.monotonic() - start) * 1000)
        try:
            text = body["choices"][0]["message"]["content"]
            usage = body.get("usage", {})
        except (KeyError, IndexError, TypeError) as exc:
            raise BackendUnavailable(f"{self.backend_id}: malformed response") from exc
        return CompletionResult(
            text=text, backend_id=self.backend_id, latency_ms=latency,
            usage={"prompt_units": usage.get("prompt_tokens", 0),
                   "output_units": usage.get("completion_tokens", 0)},
        )


class Gateway:
    """Routes completions to the tier configured for each role tag."""

    def __init__(self, light=None, sota=None, retry_delays: tuple[float, ...] = RETRY_DELAYS_S):
        self._tiers = {}
        if light is not None:
            self._tiers["light"] = light
        if sota is not None:
            self._tiers["sota"] = sota
        self._retry_delays = retry_delays

    def has_tier(self, tier: str) -> bool:
        return tier in self._tiers

    def route_tier(self, role_tag: str) -> str:
        """Backend id serving this role; stable for the process lifetime."""
        tier = ROLE_TIER.get(role_tag)
        if tier is None:
            raise InvalidRequest(f"unknown role_tag {role_tag!r}")
        backend = self._tiers.get(tier)
        if backend is None:
            raise UnconfiguredTier(f"no backend for tier {tier!r} (role {role_tag!r})")
        return backend.backend_id

    def complete(self, req: CompletionRequest) -> CompletionResult:
        if not req.prompt:
            raise InvalidRequest("prompt must be nonempty")
        if req.max_tokens <= 0:
            raise InvalidRequest("max_tokens must be positive")
        if not 0.0 <= req.temperature <= 1.0:
            raise InvalidRequest("temperature must be in [0, 1]")
        tier = ROLE_TIER.get(req.role_tag)
        if tier is None:
            raise InvalidRequest(f"unknown role_tag {req.role_tag!r}")
        backend = self._tiers.get(tier)
        if backend is None:
            raise UnconfiguredTier(f"no backend for tier {tier!r}")

        # Retries only make sense for transient remote faults; scripted
        # ScriptExhausted and fault-injected errors propagate untouched.
        attempt = 0
        while True:
            try:
                result = backend.complete(req)
                log.debug("llm %s role=%s hash=%s -> %d chars",
                          result.backend_id, req.role_tag, prompt_hash(req.prompt)[:12],
                          len(result.text))
                return result
            except BackendUnavailable:
                if isinstance(backend, ScriptedBackend) or attempt >= len(self._retry_delays):
                    raise
                time.sleep(self._retry_delays[attempt])
                attempt += 1


# --- script files: line-delimited JSON records {mode, role?, key?, response} ---

def load_script_file(path: str | Path, backend_id: str | None = None,
                     default_role: str | None = None) -> ScriptedBackend:
    path = Path(path)
    backend = ScriptedBackend(backend_id or path.stem)
    for lineno, line in enumerate(path.read_text("utf-8").splitlines(), 1):
        if not line.strip():
            continue
        try:
            record = json.loads(line)
        except json.JSONDecodeError as exc:
            raise ValueError(f"{path}:{lineno}: invalid script record: {exc}") from exc
        backend.add(ScriptEntry(
            match=record.get("mode", "ordered"),
            response=record.get("response", ""),
            key=record.get("key"),
            role=record.get("role", default_role),
            fail=record.get("fail"),
        ))
    return backend


def load_script_dir(path: str | Path, backend_id: str) -> ScriptedBackend:
    """Merge every ``<role>.jsonl`` in a directory into one backend.

    The file stem becomes the default role for its records, so a script
    directory reads as one file per role tag.
    """
    path = Path(path)
    backend = ScriptedBackend(backend_id)
    for file in sorted(path.glob("*.jsonl")):
        role = file.stem if file.stem in ROLE_TAGS else None
        for lineno, line in enumerate(file.read_text("utf-8").splitlines(), 1):
            if not line.strip():
                continue
            record = json.loads(line)
            backend.add(ScriptEntry(
                match=record.get("mode", "ordered"),
                response=record.get("response", ""),
                key=record.get("key"),
                role=record.get("role", role),
                fail=record.get("fail"),
            ))
    return backend


def gateway_from_config(path: str | Path) -> Gateway:
    """Build a gateway from a JSON config selecting tier -> backend.

    Shape: {"tiers": {"light": {...}, "sota": {...}}} where each backend is
    {"kind": "scripted", "scripts": DIR_OR_FILE} or
    {"kind": "remote", "endpoint": URL, "model": NAME, "api_key_env"?: VAR}.
    """
    config = json.loads(Path(path).read_text("utf-8"))
    backends: dict[str, object] = {}
    for tier, spec in config.get("tiers", {}).items():
        kind = spec.get("kind", "scripted")
        if kind == "scripted":
            source = Path(spec["scripts"])
            if source.is_dir():
                backends[tier] = load_script_dir(source, f"scripted-{tier}")
            else:
                backends[tier] = load_script_file(source, f"scripted-{tier}")
        elif kind == "remote":
            backends[tier] = RemoteBackend(
                f"remote-{tier}", spec["endpoint"], spec["model"],
                api_key_env=spec.get("api_key_env", "ZAGII_API_KEY"))
        else:
            raise ValueError(f"unknown backend kind {kind!r}")
    return Gateway(light=backends.get("light"), sota=backends.get("sota"))


def load_tiered_scripts(path: str | Path) -> tuple[ScriptedBackend, ScriptedBackend | None]:
    """Split a script directory into (light, sota) backends.

    ``goal_check_sota.jsonl`` feeds the SOTA tier; every other file feeds
    the light tier. Returns sota=None when no SOTA script is present, which
    disables cold-start guidance and shadow sampling.
    """
    path = Path(path)
    light = ScriptedBackend("scripted-light")
    sota: ScriptedBackend | None = None
    for file in sorted(path.glob("*.jsonl")):
        if file.stem == "goal_check_sota":
            if sota is None:
                sota = ScriptedBackend("scripted-sota")
            target = sota
        else:
            target = light
        role = file.stem if file.stem in ROLE_TAGS else None
        for line in file.read_text("utf-8").splitlines():
            if not line.strip():
                continue
            record = json.loads(line)
            target.add(ScriptEntry(
                match=record.get("mode", "ordered"),
                response=record.get("response", ""),
                key=record.get("key"),
                role=record.get("role", role),
                fail=record.get("fail"),
            ))
    return light, sota
