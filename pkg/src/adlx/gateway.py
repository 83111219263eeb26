"""Completion backends plus the reliability layer in front of them.

The gateway serializes admission through a bounded queue, enforces a
concurrency ceiling and per-minute rate ceilings, and retries transient
failures with exponential backoff plus uniform jitter.  Backends are
pluggable: a remote chat-completion provider, deterministic offline mocks,
and a record/replay pair for reproducible experiments.
"""

from __future__ import annotations

import hashlib
import json
import os
import random
import threading
import time
from collections import deque
from datetime import datetime, timedelta
from dataclasses import dataclass, field
from decimal import ROUND_FLOOR, Decimal
from pathlib import Path
from typing import Callable, Optional, Protocol, Union

import httpx

from .errors import (
    GatewayTimeout,
    InvalidParameters,
    ProviderError,
    QueueFull,
    RateLimitedExhausted,
    ReplayMiss,
    TransientProviderError,
)
from .extract import find_json_object, render_envelope
from .model import TokenUsage
from .prompts import estimate_tokens
from .render import TIME_WINDOW_KEY, parse_window_json

DEFAULT_MODEL_ID = "gpt-4o"
API_KEY_ENV = "ADLX_API_KEY"


@dataclass(frozen=True, slots=True)
class CompletionRequest:
    system: str
    user: str
    model_id: str = DEFAULT_MODEL_ID
    temperature: float = 0.0
    max_output_tokens: int = 1024

    def __post_init__(self) -> None:
        if not self.system.strip() or not self.user.strip():
            raise ValueError("system and user texts must be non-empty")
        if self.max_output_tokens <= 0:
            raise ValueError("max_output_tokens must be positive")


@dataclass(frozen=True, slots=True)
class CompletionResponse:
    text: str
    usage: TokenUsage = field(default_factory=TokenUsage)


def request_digest(req: CompletionRequest) -> str:
    """Stable fingerprint of a request, used as the fixture key."""
    canonical = json.dumps(
        {
            "system": req.system,
            "user": req.user,
            "model_id": req.model_id,
            "temperature": req.temperature,
            "max_output_tokens": req.max_output_tokens,
        },
        sort_keys=True,
        ensure_ascii=False,
    )
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


class Backend(Protocol):
    def complete(self, req: CompletionRequest) -> CompletionResponse: ...


class MockBackend:
    """Fixture-table backend: digest -> canned response, zero network."""

    def __init__(self) -> None:
        self._table: dict[str, CompletionResponse] = {}

    def add(self, req: CompletionRequest, text: str, usage: TokenUsage = TokenUsage()) -> None:
        self._table[request_digest(req)] = CompletionResponse(text, usage)

    def add_digest(self, digest: str, text: str, usage: TokenUsage = TokenUsage()) -> None:
        self._table[digest] = CompletionResponse(text, usage)

    def complete(self, req: CompletionRequest) -> CompletionResponse:
        digest = request_digest(req)
        try:
            return self._table[digest]
        except KeyError:
            raise ReplayMiss(f"no fixture for request digest {digest}") from None


class RuleMockBackend:
    """Deterministic offline classifier stub for end-to-end runs.

    Reads the window JSON embedded in the user prompt, picks the property
    label with the greatest total duration (ties: earliest interval start,
    then label), maps it to an activity through the rule table, and answers
    with a well-formed output envelope.
    """

    def __init__(self, rules: dict[str, str]) -> None:
        self._rules = dict(rules)

    def complete(self, req: CompletionRequest) -> CompletionResponse:
        doc = find_json_object(req.user)
        if doc is None or TIME_WINDOW_KEY not in doc:
            raise ProviderError("user prompt carries no window JSON")
        start_text = doc[TIME_WINDOW_KEY][0]
        try:
            t = datetime.strptime(start_text, "%H:%M:%S")
        except (TypeError, ValueError):
            raise ProviderError(f"bad window start {start_text!r}") from None
        base = datetime(2000, 1, 1, t.hour, t.minute, t.second)
        _bounds, per_label = parse_window_json(json.dumps(doc), base)
        best: Optional[tuple[timedelta, datetime, str]] = None
        for label, intervals in per_label.items():
            if not intervals:
                continue
            total = sum((e - s for s, e in intervals), timedelta(0))
            first = min(s for s, _ in intervals)
            candidate = (-total, first, label)
            if best is None or candidate < best:
                best = candidate
        if best is None:
            return CompletionResponse(
                "No sensed properties were observed in this window."
            )
        label = best[2]
        if label not in self._rules:
            raise ProviderError(f"no rule maps property label {label!r}")
        text = render_envelope(
            self._rules[label],
            f"The window is dominated by this sensed property: {label}.",
            "Summed the duration of each sensed property and picked the longest.",
        )
        return CompletionResponse(
            text,
            TokenUsage(
                prompt_tokens=estimate_tokens(req.system) + estimate_tokens(req.user),
                completion_tokens=estimate_tokens(text),
            ),
        )


class ReplayBackend:
    """Serves responses recorded earlier into a fixture directory."""

    def __init__(self, fixture_dir: Union[str, Path]) -> None:
        self._dir = Path(fixture_dir)

    def complete(self, req: CompletionRequest) -> CompletionResponse:
        digest = request_digest(req)
        path = self._dir / f"{digest}.json"
        if not path.exists():
            raise ReplayMiss(f"no recorded response at {path}")
        doc = json.loads(path.read_text(encoding="utf-8"))
        usage = doc.get("usage", {})
        return CompletionResponse(
            text=doc["text"],
            usage=TokenUsage(
                prompt_tokens=int(usage.get("prompt_tokens", 0)),
                completion_tokens=int(usage.get("completion_tokens", 0)),
            ),
        )


class RecordingBackend:
    """Wraps a live backend and captures responses as replay fixtures."""

    def __init__(self, inner: Backend, fixture_dir: Union[str, Path]) -> None:
        self._inner = inner
        self._dir = Path(fixture_dir)
        self._dir.mkdir(parents=True, exist_ok=True)

    def complete(self, req: CompletionRequest) -> CompletionResponse:
        resp = self._inner.complete(req)
        digest = request_digest(req)
        doc = {
            "request": {
                "system": req.system,
                "user": req.user,
                "model_id": req.model_id,
                "temperature": req.temperature,
                "max_output_tokens": req.max_output_tokens,
            },
            "text": resp.text,
            "usage": {
                "prompt_tokens": resp.usage.prompt_tokens,
                "completion_tokens": resp.usage.completion_tokens,
            },
        }
        (self._dir / f"{digest}.json").write_text(
            json.dumps(doc, indent=2, ensure_ascii=False), encoding="utf-8"
        )
        return resp


class HttpBackend:
    """Chat-completion provider over HTTPS with bearer-token auth.

    The auth token is read from an environment variable, never from
    configuration files.
    """

    def __init__(
        self,
        base_url: str,
        *,
        api_key_env: str = API_KEY_ENV,
        completion_path: str = "/v1/chat/completions",
        timeout_seconds: float = 60.0,
        transport: Optional[httpx.BaseTransport] = None,
    ) -> None:
        self._api_key_env = api_key_env
        self._completion_path = completion_path
        self._client = httpx.Client(
            base_url=base_url, timeout=timeout_seconds, transport=transport
        )

    def close(self) -> None:
        self._client.close()

    def complete(self, req: CompletionRequest) -> CompletionResponse:
        api_key = os.environ.get(self._api_key_env)
        if not api_key:
            raise ProviderError(
                f"environment variable {self._api_key_env} is not set"
            )
        payload = {
            "model": req.model_id,
            "temperature": req.temperature,
            "max_tokens": req.max_output_tokens,
            "messages": [
                {"role": "system", "content": req.system},
                {"role": "user", "content": req.user},
            ],
        }
        try:
            response = self._client.post(
                self._completion_path,
                json=payload,
                headers={"Authorization": f"Bearer {api_key}"},
            )
        except httpx.TimeoutException as exc:
            raise GatewayTimeout(f"provider timed out: {exc}") from None
        except httpx.HTTPError as exc:
            raise TransientProviderError(f"transport failure: {exc}") from None
        if response.status_code == 429 or response.status_code >= 500:
            raise TransientProviderError(
                f"provider returned {response.status_code}",
                status=response.status_code,
            )
        if response.status_code >= 400:
            raise ProviderError(
                f"provider returned {response.status_code}: {response.text[:200]}",
                status=response.status_code,
            )
        try:
            doc = response.json()
            text = doc["choices"][0]["message"]["content"]
            usage = doc.get("usage", {})
        except (KeyError, IndexError, TypeError, ValueError) as exc:
            raise ProviderError(f"malformed provider response: {exc}") from None
        return CompletionResponse(
            text=text,
            usage=TokenUsage(
                prompt_tokens=int(usage.get("prompt_tokens", 0)),
                completion_tokens=int(usage.get("completion_tokens", 0)),
            ),
        )


@dataclass(frozen=True, slots=True)
class GatewayPolicy:
    max_concurrent_requests: int = 8
    max_retries: int = 5
    base_backoff_seconds: float = 1.0
    backoff_multiplier: float = 2.0
    queue_capacity: int = 64
    requests_per_minute: Optional[int] = None
    tokens_per_minute: Optional[int] = None

    def __post_init__(self) -> None:
        if self.max_concurrent_requests <= 0:
            raise InvalidParameters("max_concurrent_requests must be positive")
        if self.max_retries < 0:
            raise InvalidParameters("max_retries must be non-negative")
        if self.base_backoff_seconds <= 0:
            raise InvalidParameters("base_backoff_seconds must be positive")
        if self.backoff_multiplier < 1.0:
            raise InvalidParameters("backoff_multiplier must be at least 1")
        if self.queue_capacity <= 0:
            raise InvalidParameters("queue_capacity must be positive")
        for ceiling in (self.requests_per_minute, self.tokens_per_minute):
            if ceiling is not None and ceiling <= 0:
                raise InvalidParameters("per-minute ceilings must be positive")


class Gateway:
    """Thread-safe completion front end applying a GatewayPolicy.

    ``sleep``, ``clock``, and ``rng`` are injectable so tests can run the
    retry and rate machinery against a simulated clock.
    """

    def __init__(
        self,
        backend: Backend,
        policy: GatewayPolicy = GatewayPolicy(),
        *,
        sleep: Callable[[float], None] = time.sleep,
        clock: Callable[[], float] = time.monotonic,
        rng: Optional[random.Random] = None,
    ) -> None:
        self._backend = backend
        self.policy = policy
        self._sleep = sleep
        self._clock = clock
        self._rng = rng if rng is not None else random.Random()
        self._slots = threading.Semaphore(policy.max_concurrent_requests)
        self._lock = threading.Lock()
        self._waiting = 0
        self._request_times: deque[float] = deque()
        self._token_spend: deque[tuple[float, int]] = deque()

    def _admit(self) -> None:
        if self._slots.acquire(blocking=False):
            return
        with self._lock:
            if self._waiting >= self.policy.queue_capacity:
                raise QueueFull(
                    f"request queue is full ({self.policy.queue_capacity} waiting)"
                )
            self._waiting += 1
        try:
            self._slots.acquire()
        finally:
            with self._lock:
                self._waiting -= 1

    def _respect_rate_ceilings(self, tokens: int) -> None:
        policy = self.policy
        if policy.requests_per_minute is None and policy.tokens_per_minute is None:
            return
        while True:
            with self._lock:
                now = self._clock()
                while self._request_times and now - self._request_times[0] >= 60.0:
                    self._request_times.popleft()
                while self._token_spend and now - self._token_spend[0][0] >= 60.0:
                    self._token_spend.popleft()
                wait_until = now
                if (
                    policy.requests_per_minute is not None
                    and len(self._request_times) >= policy.requests_per_minute
                ):
                    wait_until = max(wait_until, self._request_times[0] + 60.0)
                if policy.tokens_per_minute is not None:
                    spent = sum(t for _, t in self._token_spend)
                    if self._token_spend and spent + tokens > policy.tokens_per_minute:
                        wait_until = max(wait_until, self._token_spend[0][0] + 60.0)
                if wait_until <= now:
                    self._request_times.append(now)
                    self._token_spend.append((now, tokens))
                    return
            self._sleep(wait_until - now)

    def complete(self, req: CompletionRequest) -> tuple[str, TokenUsage]:
        """Run one completion under the policy; returns (text, usage)."""
        self._admit()
        try:
            return self._complete_with_retries(req)
        finally:
            self._slots.release()

    def _complete_with_retries(self, req: CompletionRequest) -> tuple[str, TokenUsage]:
        policy = self.policy
        est_tokens = estimate_tokens(req.system) + estimate_tokens(req.user)
        attempts: list[Exception] = []
        for attempt in range(policy.max_retries + 1):
            self._respect_rate_ceilings(est_tokens)
            try:
                resp = self._backend.complete(req)
                return resp.text, resp.usage
            except (TransientProviderError, GatewayTimeout) as exc:
                attempts.append(exc)
                if attempt >= policy.max_retries:
                    break
                delay = (
                    policy.base_backoff_seconds
                    * policy.backoff_multiplier**attempt
                    + self._rng.random() * policy.base_backoff_seconds
                )
                self._sleep(delay)
        if all(isinstance(exc, GatewayTimeout) for exc in attempts):
            raise GatewayTimeout(
                f"provider timed out on all {len(attempts)} attempts"
            )
        raise RateLimitedExhausted(attempts)


def estimate_cost(n_requests: int, unit_cost: Union[str, Decimal, float]) -> Decimal:
    """Exact-decimal total cost of n requests at a per-request price."""
    if n_requests < 0:
        raise InvalidParameters("request count must be non-negative")
    price = Decimal(str(unit_cost))
    if price < 0:
        raise InvalidParameters("unit cost must be non-negative")
    return Decimal(n_requests) * price


def requests_per_duration(
    duration_seconds: Union[int, str, Decimal],
    window_seconds: Union[int, float, str, Decimal],
    overlap: Union[float, str, Decimal],
) -> int:
    """Steady-state request count over a duration: one per stride step.

    Exact decimal arithmetic; the fractional tail is floored.
    """
    duration = Decimal(str(duration_seconds))
    tau = Decimal(str(window_seconds))
    o = Decimal(str(overlap))
    if duration < 0:
        raise InvalidParameters("duration must be non-negative")
    if tau <= 0 or not (0 <= o < 1):
        raise InvalidParameters("need window_seconds > 0 and overlap in [0, 1)")
    stride = tau * (1 - o)
    return int((duration / stride).to_integral_value(rounding=ROUND_FLOOR))
