"""Completion providers: real HTTP endpoints and deterministic test doubles.

A provider turns one prompt into one short completion.  The engine talks
to providers through ``CompletionClient``, which adds retry with backoff,
an optional write-once on-disk cache, per-call records for the run log,
and a clock.  Mock providers use a virtual tick clock so offline runs are
bit-reproducible; network providers use the system clock.
"""

from __future__ import annotations

import hashlib
import json
import os
import re
import threading
import time
from abc import ABC, abstractmethod
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Sequence

import httpx

from .agents import AgentSpec, Round, Seat, scripted_move
from .errors import (
    ConfigurationError,
    OfflineViolationError,
    RateLimitedError,
    TransportError,
)
from .games import PayoffGame
from .prompting import SCHEME_LABELS


@dataclass(frozen=True)
class ProviderParams:
    """Sampling parameters sent with every request."""

    model: str
    temperature: float = 0.0
    max_completion_tokens: int = 1

    def __post_init__(self) -> None:
        if self.temperature < 0:
            raise ConfigurationError(f"temperature must be >= 0, got {self.temperature}")
        if self.max_completion_tokens < 1:
            raise ConfigurationError("max_completion_tokens must be >= 1")


def cache_key(provider_id: str, model: str, params: ProviderParams, prompt: str) -> str:
    """Stable digest identifying one completion request."""
    doc = {
        "provider": provider_id,
        "model": model,
        "temperature": params.temperature,
        "max_completion_tokens": params.max_completion_tokens,
        "prompt": prompt,
    }
    blob = json.dumps(doc, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()


@dataclass
class CompletionRecord:
    """One completion call as it appears in the run log."""

    record_id: str
    prompt_hash: str
    prompt: str
    completion: str
    provider_id: str
    model: str
    temperature: float
    max_completion_tokens: int
    timestamp: float
    latency_ms: float
    retry_count: int
    cache_hit: bool

    def to_json_dict(self) -> dict:
        return {
            "record_id": self.record_id,
            "prompt_hash": self.prompt_hash,
            "prompt": self.prompt,
            "completion": self.completion,
            "provider_id": self.provider_id,
            "model": self.model,
            "temperature": self.temperature,
            "max_completion_tokens": self.max_completion_tokens,
            "timestamp": self.timestamp,
            "latency_ms": self.latency_ms,
            "retry_count": self.retry_count,
            "cache_hit": self.cache_hit,
        }

    @classmethod
    def from_json_dict(cls, doc: dict) -> "CompletionRecord":
        return cls(**{k: doc[k] for k in (
            "record_id", "prompt_hash", "prompt", "completion", "provider_id",
            "model", "temperature", "max_completion_tokens", "timestamp",
            "latency_ms", "retry_count", "cache_hit",
        )})


class Provider(ABC):
    """One-prompt-in, one-completion-out."""

    provider_id: str
    requires_network: bool = False

    @abstractmethod
    def complete_once(self, prompt: str, params: ProviderParams) -> str:
        """Perform a single attempt.  Raise TransportError (retryable),
        RateLimitedError (retryable, slow down) or ConfigurationError
        (do not retry)."""


class OpenAiCompatProvider(Provider):
    """Chat-completions endpoint speaking the common OpenAI-style JSON.

    ``endpoint`` is the full URL of the chat completions route.  The
    credential is read from ``api_key_env`` lazily, so offline work never
    needs it.  HTTP 429 and 5xx are retryable; other 4xx mean the request
    itself is bad and abort immediately.
    """

    requires_network = True

    def __init__(
        self,
        provider_id: str,
        endpoint: str,
        api_key_env: str = "ARENA_API_KEY",
        timeout: float = 60.0,
        requests_per_second: float | None = None,
        transport: httpx.BaseTransport | None = None,
    ):
        self.provider_id = provider_id
        self.endpoint = endpoint
        self.api_key_env = api_key_env
        self._http = httpx.Client(timeout=timeout, transport=transport)
        self._min_interval = 1.0 / requests_per_second if requests_per_second else 0.0
        self._last_request = 0.0
        self._lock = threading.Lock()

    def close(self) -> None:
        self._http.close()

    def _throttle(self) -> None:
        if not self._min_interval:
            return
        with self._lock:
            wait = self._last_request + self._min_interval - time.monotonic()
            if wait > 0:
                time.sleep(wait)
            self._last_request = time.monotonic()

    def complete_once(self, prompt: str, params: ProviderParams) -> str:
        api_key = os.environ.get(self.api_key_env)
        if not api_key:
            raise ConfigurationError(
                f"provider {self.provider_id!r} needs the {self.api_key_env} environment variable"
            )
        self._throttle()
        body = {
            "model": params.model,
            "messages": [{"role": "user", "content": prompt}],
            "temperature": params.temperature,
            "max_tokens": params.max_completion_tokens,
        }
        try:
            response = self._http.post(
                self.endpoint,
                json=body,
                headers={"Authorization": f"Bearer {api_key}"},
            )
        except httpx.HTTPError as exc:
            raise TransportError(f"request to {self.provider_id} failed: {exc}") from exc
        if response.status_code == 429:
            raise RateLimitedError(f"{self.provider_id} rate limited (429)")
        if response.status_code >= 500:
            raise TransportError(f"{self.provider_id} server error ({response.status_code})")
        if response.status_code >= 400:
            raise ConfigurationError(
                f"{self.provider_id} rejected the request "
                f"({response.status_code}): {response.text[:200]}"
            )
        try:
            return response.json()["choices"][0]["message"]["content"]
        except (KeyError, IndexError, ValueError) as exc:
            raise TransportError(f"{self.provider_id} sent a malformed response: {exc}") from exc


class MockProvider(Provider):
    """Replays a scripted list of completions, one per call."""

    def __init__(self, provider_id: str, script: Sequence[str], cycle: bool = False):
        if not script:
            raise ConfigurationError(f"mock provider {provider_id!r} needs a non-empty script")
        self.provider_id = provider_id
        self._script = list(script)
        self._cycle = cycle
        self._cursor = 0
        self._lock = threading.Lock()

    def complete_once(self, prompt: str, params: ProviderParams) -> str:
        with self._lock:
            if self._cursor >= len(self._script):
                if not self._cycle:
                    raise ConfigurationError(
                        f"mock provider {self.provider_id!r} exhausted its "
                        f"{len(self._script)}-entry script"
                    )
                self._cursor = 0
            token = self._script[self._cursor]
            self._cursor += 1
            return token


_INTRO_RE = re.compile(r"choose between option (\S+) and option (\S+)\.")
_OUTCOME_RE = re.compile(
    r"If you choose (\S+) and the other player chooses (\S+), "
    r"then you earn (\d+) \S+ and the other player earns (\d+)"
)
_HISTORY_RE = re.compile(
    r"In round (\d+), you chose (\S+) and earned (\d+) \S+; "
    r"the other player chose (\S+) and earned (\d+)"
)


class PolicyMockProvider(Provider):
    """Answers prompts the way a scripted strategy would.

    The prompt itself is parsed back into a game and history (the same
    reconstruction a careful human reader would do), and the configured
    scripted policy picks the move.  This exercises the full prompt and
    parse path without any network.  Prediction queries are answered with
    the policy's own action token.
    """

    def __init__(self, provider_id: str, policy: AgentSpec):
        if not policy.scripted:
            raise ConfigurationError("policy mocks wrap scripted agent kinds only")
        self.provider_id = provider_id
        self.policy = policy

    def _labels_for(self, first: str, second: str) -> tuple[str, str]:
        mentioned = {first, second}
        for labels in SCHEME_LABELS.values():
            if set(labels) == mentioned:
                return labels
        raise ConfigurationError(f"prompt mentions unknown option labels {sorted(mentioned)}")

    def complete_once(self, prompt: str, params: ProviderParams) -> str:
        intro = _INTRO_RE.search(prompt)
        if intro is None:
            raise ConfigurationError("policy mock got a prompt without an option intro")
        labels = self._labels_for(intro.group(1), intro.group(2))
        index = {label: i for i, label in enumerate(labels)}

        outcomes = _OUTCOME_RE.findall(prompt)
        if len(outcomes) != 4:
            raise ConfigurationError(f"policy mock expected 4 outcome clauses, found {len(outcomes)}")
        own = [[0, 0], [0, 0]]
        other = [[0, 0], [0, 0]]
        for own_label, other_label, own_pay, other_pay in outcomes:
            r, c = index[own_label], index[other_label]
            own[r][c] = int(own_pay)
            other[r][c] = int(other_pay)
        game = PayoffGame(
            actions_p1=labels,
            actions_p2=labels,
            payoffs_p1=tuple(tuple(row) for row in own),
            payoffs_p2=tuple(tuple(row) for row in other),
        )

        history = [
            Round(
                action_p1=index[own_label],
                action_p2=index[other_label],
                payoff_p1=int(own_pay),
                payoff_p2=int(other_pay),
            )
            for _, own_label, own_pay, other_label, other_pay in _HISTORY_RE.findall(prompt)
        ]

        move = scripted_move(self.policy, Seat.P1, game, history)
        return labels[move]


class TickClock:
    """Virtual clock: timestamps count calls, latency is always zero."""

    real_time = False

    def __init__(self) -> None:
        self._t = 0.0

    def start(self) -> float:
        stamp = self._t
        self._t += 1.0
        return stamp

    def finish(self, token: float) -> tuple[float, float]:
        return token, 0.0


class SystemClock:
    real_time = True

    def start(self) -> tuple[float, float]:
        return (time.time(), time.perf_counter())

    def finish(self, token: tuple[float, float]) -> tuple[float, float]:
        wall, perf = token
        return wall, (time.perf_counter() - perf) * 1000.0


class ResponseCache:
    """Write-once completion store, one JSON file per request digest."""

    def __init__(self, directory: str | Path):
        self.directory = Path(directory)
        self.directory.mkdir(parents=True, exist_ok=True)

    def _path(self, key: str) -> Path:
        return self.directory / f"{key}.json"

    def get(self, key: str) -> str | None:
        path = self._path(key)
        try:
            doc = json.loads(path.read_text(encoding="utf-8"))
        except FileNotFoundError:
            return None
        return doc["completion"]

    def put(self, key: str, prompt: str, completion: str) -> None:
        path = self._path(key)
        if path.exists():
            return
        tmp = path.with_suffix(".tmp")
        tmp.write_text(
            json.dumps({"completion": completion, "prompt": prompt}, sort_keys=True),
            encoding="utf-8",
        )
        os.replace(tmp, path)


class CompletionClient:
    """Retries, caches and records completions for one consumer.

    Each successful call (cache hits included) appends exactly one
    ``CompletionRecord`` to ``sink``.  Transient failures are retried with
    exponential backoff up to ``max_retries`` times; non-retryable errors
    propagate immediately.
    """

    def __init__(
        self,
        provider: Provider,
        params: ProviderParams,
        cache: ResponseCache | None = None,
        sink: list[CompletionRecord] | None = None,
        id_prefix: str = "",
        max_retries: int = 5,
        backoff_base: float = 0.25,
        backoff_cap: float = 8.0,
        sleep: Callable[[float], None] = time.sleep,
        clock: TickClock | SystemClock | None = None,
    ):
        self.provider = provider
        self.params = params
        self.cache = cache
        self.sink = sink if sink is not None else []
        self.id_prefix = id_prefix
        self.max_retries = max_retries
        self.backoff_base = backoff_base
        self.backoff_cap = backoff_cap
        self._sleep = sleep
        self.clock = clock or (SystemClock() if provider.requires_network else TickClock())
        self._serial = 0

    def _record(
        self,
        key: str,
        prompt: str,
        completion: str,
        timestamp: float,
        latency_ms: float,
        retries: int,
        cache_hit: bool,
    ) -> CompletionRecord:
        record = CompletionRecord(
            record_id=f"{self.id_prefix}c{self._serial:04d}",
            prompt_hash=key,
            prompt=prompt,
            completion=completion,
            provider_id=self.provider.provider_id,
            model=self.params.model,
            temperature=self.params.temperature,
            max_completion_tokens=self.params.max_completion_tokens,
            timestamp=timestamp,
            latency_ms=latency_ms,
            retry_count=retries,
            cache_hit=cache_hit,
        )
        self._serial += 1
        self.sink.append(record)
        return record

    def complete(self, prompt: str, skip_cache: bool = False) -> CompletionRecord:
        key = cache_key(self.provider.provider_id, self.params.model, self.params, prompt)
        if self.cache is not None and not skip_cache:
            hit = self.cache.get(key)
            if hit is not None:
                token = self.clock.start()
                timestamp, _ = self.clock.finish(token)
                return self._record(key, prompt, hit, timestamp, 0.0, 0, cache_hit=True)

        retries = 0
        while True:
            token = self.clock.start()
            try:
                completion = self.provider.complete_once(prompt, self.params)
            except (RateLimitedError, TransportError) as exc:
                if retries >= self.max_retries:
                    raise TransportError(
                        f"{self.provider.provider_id} still failing after "
                        f"{retries} retries: {exc}"
                    ) from exc
                self._sleep(min(self.backoff_base * (2 ** retries), self.backoff_cap))
                retries += 1
                continue
            timestamp, latency_ms = self.clock.finish(token)
            if self.cache is not None:
                self.cache.put(key, prompt, completion)
            return self._record(key, prompt, completion, timestamp, latency_ms, retries, cache_hit=False)


@dataclass(frozen=True)
class ProviderEntry:
    provider: Provider
    params: ProviderParams


class ProviderRegistry:
    """Known providers by id, with their default sampling parameters."""

    def __init__(self) -> None:
        self._entries: dict[str, ProviderEntry] = {}

    def register(self, provider: Provider, params: ProviderParams) -> None:
        if provider.provider_id in self._entries:
            raise ConfigurationError(f"provider id {provider.provider_id!r} registered twice")
        self._entries[provider.provider_id] = ProviderEntry(provider, params)

    def ids(self) -> list[str]:
        return sorted(self._entries)

    def get(self, provider_id: str) -> ProviderEntry:
        try:
            return self._entries[provider_id]
        except KeyError:
            known = ", ".join(self.ids()) or "none"
            raise ConfigurationError(
                f"unknown provider {provider_id!r} (registered: {known})"
            ) from None

    def client(
        self,
        provider_id: str,
        cache: ResponseCache | None = None,
        sink: list[CompletionRecord] | None = None,
        id_prefix: str = "",
        offline: bool = False,
        sleep: Callable[[float], None] = time.sleep,
    ) -> CompletionClient:
        entry = self.get(provider_id)
        if offline and entry.provider.requires_network:
            raise OfflineViolationError(
                f"provider {provider_id!r} needs the network but this run is offline"
            )
        return CompletionClient(
            entry.provider, entry.params, cache=cache, sink=sink,
            id_prefix=id_prefix, sleep=sleep,
        )
