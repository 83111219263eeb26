"""Backends and the gateway: fixtures, retries, limits, cost arithmetic."""

from __future__ import annotations

import json
import threading
from decimal import Decimal

import httpx
import pytest

from adlx.errors import (
    GatewayTimeout,
    InvalidParameters,
    ProviderError,
    QueueFull,
    RateLimitedExhausted,
    ReplayMiss,
    TransientProviderError,
)
from adlx.extract import extract
from adlx.gateway import (
    API_KEY_ENV,
    CompletionRequest,
    CompletionResponse,
    Gateway,
    GatewayPolicy,
    HttpBackend,
    MockBackend,
    RecordingBackend,
    ReplayBackend,
    RuleMockBackend,
    estimate_cost,
    request_digest,
    requests_per_duration,
)
from adlx.model import ActivitySet, TokenUsage
from adlx.render import render_window

from golden_inputs import GOLDEN_WINDOWS

REQ = CompletionRequest(system="You classify.", user="Window data.")


def make_request(user: str) -> CompletionRequest:
    return CompletionRequest(system="You classify.", user=user)


class FlakyBackend:
    """Fails a fixed number of times, then succeeds."""

    def __init__(self, failures: int, exc_factory=TransientProviderError):
        self.failures = failures
        self.exc_factory = exc_factory
        self.calls = 0

    def complete(self, req: CompletionRequest) -> CompletionResponse:
        self.calls += 1
        if self.calls <= self.failures:
            raise self.exc_factory(f"induced failure {self.calls}")
        return CompletionResponse("ok", TokenUsage(10, 2))


class TestRequestDigest:
    def test_stable_across_processes(self):
        # Frozen value: guards the fixture key format itself.
        assert request_digest(REQ) == request_digest(
            CompletionRequest(system="You classify.", user="Window data.")
        )

    def test_sensitive_to_every_field(self):
        base = request_digest(REQ)
        variants = [
            CompletionRequest(system="You classify!", user="Window data."),
            CompletionRequest(system="You classify.", user="Window data!"),
            CompletionRequest(system="You classify.", user="Window data.", model_id="m2"),
            CompletionRequest(system="You classify.", user="Window data.", temperature=0.5),
            CompletionRequest(
                system="You classify.", user="Window data.", max_output_tokens=7
            ),
        ]
        assert base not in {request_digest(v) for v in variants}

    def test_hex_sha256_shape(self):
        digest = request_digest(REQ)
        assert len(digest) == 64
        int(digest, 16)


class TestMockBackend:
    def test_returns_canned_response(self):
        backend = MockBackend()
        backend.add(REQ, "canned", TokenUsage(3, 4))
        assert backend.complete(REQ) == CompletionResponse("canned", TokenUsage(3, 4))

    def test_miss_raises(self):
        with pytest.raises(ReplayMiss):
            MockBackend().complete(REQ)

    def test_add_by_digest(self):
        backend = MockBackend()
        backend.add_digest(request_digest(REQ), "via digest")
        assert backend.complete(REQ).text == "via digest"


class TestRuleMockBackend:
    RULES = {
        "the television is on": "watching tv",
        "the subject is on the couch": "watching tv",
        "the fridge door is open": "preparing hot meal",
    }

    def test_dominant_property_decides(self, catalog, marble_activities):
        window_json = render_window(GOLDEN_WINDOWS["window_busy"], catalog)
        resp = RuleMockBackend(self.RULES).complete(make_request(window_json))
        got = extract(resp.text, marble_activities)
        assert got.activity == "watching tv"
        assert "the television is on" in got.explanation

    def test_tie_breaks_on_earlier_start(self, catalog, marble_activities):
        doc = {
            "Time window": ["10:00:00", "10:10:00"],
            "the fridge door is open": [["10:01:00", "10:02:00"]],
            "the television is on": [["10:03:00", "10:04:00"]],
        }
        resp = RuleMockBackend(self.RULES).complete(make_request(json.dumps(doc)))
        got = extract(resp.text, marble_activities)
        assert got.activity == "preparing hot meal"

    def test_empty_window_yields_no_label(self, catalog):
        window_json = render_window(GOLDEN_WINDOWS["window_empty"], catalog)
        resp = RuleMockBackend(self.RULES).complete(make_request(window_json))
        assert "activity" not in resp.text

    def test_unmapped_label_is_provider_error(self, catalog):
        window_json = render_window(GOLDEN_WINDOWS["window_fridge"], catalog)
        with pytest.raises(ProviderError):
            RuleMockBackend({}).complete(make_request(window_json))

    def test_prompt_without_window_is_provider_error(self):
        with pytest.raises(ProviderError):
            RuleMockBackend(self.RULES).complete(make_request("no json here"))


class TestRecordReplay:
    def test_round_trip(self, tmp_path):
        inner = MockBackend()
        inner.add(REQ, "recorded text", TokenUsage(11, 7))
        recorder = RecordingBackend(inner, tmp_path)
        first = recorder.complete(REQ)

        replay = ReplayBackend(tmp_path)
        second = replay.complete(REQ)
        assert second == first
        assert second.usage == TokenUsage(11, 7)

    def test_fixture_file_is_keyed_by_digest(self, tmp_path):
        inner = MockBackend()
        inner.add(REQ, "recorded text")
        RecordingBackend(inner, tmp_path).complete(REQ)
        assert (tmp_path / f"{request_digest(REQ)}.json").exists()

    def test_replay_miss(self, tmp_path):
        with pytest.raises(ReplayMiss):
            ReplayBackend(tmp_path).complete(REQ)


def http_backend(handler) -> HttpBackend:
    return HttpBackend(
        "https://provider.example", transport=httpx.MockTransport(handler)
    )


class TestHttpBackend:
    def test_success_parses_text_and_usage(self, monkeypatch):
        monkeypatch.setenv(API_KEY_ENV, "k-123")
        seen = {}

        def handler(request: httpx.Request) -> httpx.Response:
            seen["auth"] = request.headers["Authorization"]
            seen["payload"] = json.loads(request.content)
            return httpx.Response(
                200,
                json={
                    "choices": [{"message": {"content": "hello"}}],
                    "usage": {"prompt_tokens": 5, "completion_tokens": 2},
                },
            )

        backend = http_backend(handler)
        resp = backend.complete(REQ)
        backend.close()
        assert resp == CompletionResponse("hello", TokenUsage(5, 2))
        assert seen["auth"] == "Bearer k-123"
        assert seen["payload"]["model"] == "gpt-4o"
        assert seen["payload"]["messages"][0] == {
            "role": "system",
            "content": "You classify.",
        }

    def test_missing_key_never_sends(self, monkeypatch):
        monkeypatch.delenv(API_KEY_ENV, raising=False)
        calls = []

        def handler(request):
            calls.append(request)
            return httpx.Response(200, json={})

        backend = http_backend(handler)
        with pytest.raises(ProviderError):
            backend.complete(REQ)
        backend.close()
        assert calls == []

    @pytest.mark.parametrize("status", [429, 500, 503])
    def test_retryable_statuses(self, status, monkeypatch):
        monkeypatch.setenv(API_KEY_ENV, "k")
        backend = http_backend(lambda req: httpx.Response(status, json={}))
        with pytest.raises(TransientProviderError) as err:
            backend.complete(REQ)
        backend.close()
        assert err.value.status == status

    @pytest.mark.parametrize("status", [400, 401, 404])
    def test_permanent_statuses(self, status, monkeypatch):
        monkeypatch.setenv(API_KEY_ENV, "k")
        backend = http_backend(lambda req: httpx.Response(status, text="nope"))
        with pytest.raises(ProviderError) as err:
            backend.complete(REQ)
        backend.close()
        assert not isinstance(err.value, TransientProviderError)

    def test_timeout_maps_to_gateway_timeout(self, monkeypatch):
        monkeypatch.setenv(API_KEY_ENV, "k")

        def handler(request):
            raise httpx.ReadTimeout("slow provider")

        backend = http_backend(handler)
        with pytest.raises(GatewayTimeout):
            backend.complete(REQ)
        backend.close()

    def test_malformed_body_is_provider_error(self, monkeypatch):
        monkeypatch.setenv(API_KEY_ENV, "k")
        backend = http_backend(lambda req: httpx.Response(200, json={"choices": []}))
        with pytest.raises(ProviderError):
            backend.complete(REQ)
        backend.close()


class RecordingSleep:
    def __init__(self):
        self.delays: list[float] = []

    def __call__(self, seconds: float) -> None:
        self.delays.append(seconds)


class TestGatewayRetries:
    def test_fail_twice_then_succeed_delays(self):
        policy = GatewayPolicy(base_backoff_seconds=1.0, backoff_multiplier=2.0)
        sleep = RecordingSleep()
        backend = FlakyBackend(failures=2)
        gw = Gateway(backend, policy, sleep=sleep, clock=lambda: 0.0)
        text, usage = gw.complete(REQ)
        assert text == "ok"
        assert usage == TokenUsage(10, 2)
        assert backend.calls == 3
        base, mult = policy.base_backoff_seconds, policy.backoff_multiplier
        assert len(sleep.delays) == 2
        for attempt, delay in enumerate(sleep.delays):
            expected = base * mult**attempt
            assert expected <= delay < expected + base

    def test_exhaustion_raises_with_attempts(self):
        policy = GatewayPolicy(max_retries=3)
        sleep = RecordingSleep()
        backend = FlakyBackend(failures=99)
        gw = Gateway(backend, policy, sleep=sleep)
        with pytest.raises(RateLimitedExhausted) as err:
            gw.complete(REQ)
        assert backend.calls == 4
        assert len(err.value.attempts) == 4
        assert len(sleep.delays) == 3

    def test_all_timeouts_surface_as_gateway_timeout(self):
        backend = FlakyBackend(failures=99, exc_factory=GatewayTimeout)
        gw = Gateway(backend, GatewayPolicy(max_retries=2), sleep=RecordingSleep())
        with pytest.raises(GatewayTimeout):
            gw.complete(REQ)

    def test_mixed_failures_surface_as_rate_limited(self):
        class Alternating:
            calls = 0

            def complete(self, req):
                self.calls += 1
                if self.calls % 2:
                    raise GatewayTimeout("slow")
                raise TransientProviderError("busy")

        gw = Gateway(Alternating(), GatewayPolicy(max_retries=3), sleep=RecordingSleep())
        with pytest.raises(RateLimitedExhausted):
            gw.complete(REQ)

    def test_permanent_errors_do_not_retry(self):
        backend = FlakyBackend(failures=99, exc_factory=ProviderError)
        gw = Gateway(backend, sleep=RecordingSleep())
        with pytest.raises(ProviderError):
            gw.complete(REQ)
        assert backend.calls == 1

    def test_zero_retries_single_attempt(self):
        backend = FlakyBackend(failures=99)
        gw = Gateway(backend, GatewayPolicy(max_retries=0), sleep=RecordingSleep())
        with pytest.raises(RateLimitedExhausted):
            gw.complete(REQ)
        assert backend.calls == 1

    def test_jitter_comes_from_injected_rng(self):
        class HalfRandom:
            def random(self):
                return 0.5

        sleep = RecordingSleep()
        gw = Gateway(
            FlakyBackend(failures=1),
            GatewayPolicy(base_backoff_seconds=2.0, backoff_multiplier=3.0),
            sleep=sleep,
            rng=HalfRandom(),
        )
        gw.complete(REQ)
        assert sleep.delays == [2.0 + 0.5 * 2.0]


class TestGatewayConcurrency:
    def test_concurrency_never_exceeds_bound(self):
        bound = 4
        in_flight = 0
        peak = 0
        lock = threading.Lock()
        go = threading.Event()

        class Counting:
            def complete(self, req):
                nonlocal in_flight, peak
                with lock:
                    in_flight += 1
                    peak = max(peak, in_flight)
                go.wait(0.01)
                with lock:
                    in_flight -= 1
                return CompletionResponse("ok")

        gw = Gateway(
            Counting(),
            GatewayPolicy(max_concurrent_requests=bound, queue_capacity=200),
        )
        threads = [
            threading.Thread(target=gw.complete, args=(REQ,)) for _ in range(100)
        ]
        for t in threads:
            t.start()
        go.set()
        for t in threads:
            t.join()
        assert peak <= bound

    def test_queue_overflow_raises(self):
        release = threading.Event()

        class Blocking:
            def complete(self, req):
                release.wait(5.0)
                return CompletionResponse("ok")

        gw = Gateway(
            Blocking(), GatewayPolicy(max_concurrent_requests=1, queue_capacity=1)
        )
        started = threading.Barrier(4)
        outcomes: list[str] = []
        olock = threading.Lock()

        def run():
            started.wait()
            try:
                gw.complete(REQ)
                with olock:
                    outcomes.append("ok")
            except QueueFull:
                with olock:
                    outcomes.append("full")

        threads = [threading.Thread(target=run) for _ in range(3)]
        for t in threads:
            t.start()
        started.wait()
        # One request holds the slot, one waits, the third must overflow.
        for _ in range(200):
            with olock:
                if outcomes == ["full"]:
                    break
            threading.Event().wait(0.01)
        release.set()
        for t in threads:
            t.join()
        assert sorted(outcomes) == ["full", "ok", "ok"]


class TestGatewayRateCeilings:
    def test_requests_per_minute_waits_out_the_window(self):
        now = {"t": 0.0}

        def clock():
            return now["t"]

        def sleep(seconds):
            now["t"] += seconds

        class Instant:
            def complete(self, req):
                return CompletionResponse("ok")

        gw = Gateway(
            Instant(),
            GatewayPolicy(requests_per_minute=2),
            sleep=sleep,
            clock=clock,
        )
        gw.complete(REQ)
        gw.complete(REQ)
        assert now["t"] == 0.0
        gw.complete(REQ)
        assert now["t"] == 60.0

    def test_tokens_per_minute_waits_out_the_window(self):
        now = {"t": 0.0}

        def clock():
            return now["t"]

        def sleep(seconds):
            now["t"] += seconds

        class Instant:
            def complete(self, req):
                return CompletionResponse("ok")

        est = 8  # "You classify." -> 4 tokens, "Window data." -> 4 tokens
        gw = Gateway(
            Instant(),
            GatewayPolicy(tokens_per_minute=2 * est),
            sleep=sleep,
            clock=clock,
        )
        gw.complete(REQ)
        gw.complete(REQ)
        assert now["t"] == 0.0
        gw.complete(REQ)
        assert now["t"] == 60.0

    def test_no_ceiling_never_sleeps(self):
        sleep = RecordingSleep()

        class Instant:
            def complete(self, req):
                return CompletionResponse("ok")

        gw = Gateway(Instant(), GatewayPolicy(), sleep=sleep)
        for _ in range(10):
            gw.complete(REQ)
        assert sleep.delays == []


class TestPolicyValidation:
    @pytest.mark.parametrize(
        "kwargs",
        [
            {"max_concurrent_requests": 0},
            {"max_retries": -1},
            {"base_backoff_seconds": 0.0},
            {"backoff_multiplier": 0.5},
            {"queue_capacity": 0},
            {"requests_per_minute": 0},
            {"tokens_per_minute": -5},
        ],
    )
    def test_bad_policy_rejected(self, kwargs):
        with pytest.raises(InvalidParameters):
            GatewayPolicy(**kwargs)

    def test_blank_request_rejected(self):
        with pytest.raises(ValueError):
            CompletionRequest(system=" ", user="u")
        with pytest.raises(ValueError):
            CompletionRequest(system="s", user="u", max_output_tokens=0)


class TestCostArithmetic:
    def test_daily_reference_price(self):
        assert estimate_cost(27000, "0.0085") == Decimal("229.5000")

    def test_exactness_no_float_drift(self):
        assert estimate_cost(3, "0.1") == Decimal("0.3")
        assert str(estimate_cost(1, "0.0085")) == "0.0085"

    def test_zero_requests_cost_nothing(self):
        assert estimate_cost(0, "0.0085") == Decimal("0")

    def test_negative_inputs_rejected(self):
        with pytest.raises(InvalidParameters):
            estimate_cost(-1, "0.01")
        with pytest.raises(InvalidParameters):
            estimate_cost(1, "-0.01")

    def test_requests_per_day_reference(self):
        assert requests_per_duration(86400, 16, 0.8) == 27000

    def test_requests_per_duration_floors(self):
        assert requests_per_duration(10, 16, 0.0) == 0
        assert requests_per_duration(33, 16, 0.0) == 2
        assert requests_per_duration(86400, 60, 0.5) == 2880

    def test_invalid_parameters_rejected(self):
        with pytest.raises(InvalidParameters):
            requests_per_duration(-1, 16, 0.8)
        with pytest.raises(InvalidParameters):
            requests_per_duration(10, 0, 0.8)
        with pytest.raises(InvalidParameters):
            requests_per_duration(10, 16, 1.0)
