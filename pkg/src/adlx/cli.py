"""Operator command line for the recognition and explanation pipeline.

Configuration layering for every option that supports it:
defaults < config file (--config, YAML) < environment (ADLX_*) < flags.
The provider API key is environment-only and never read from files.

Exit codes: 0 success, 2 usage error, 3 data error, 4 provider error.
Failures print a single line ``error: <Type>: <message>`` to stderr.
"""

from __future__ import annotations

import functools
import json
import os
import sys
import tempfile
from concurrent.futures import ThreadPoolExecutor, as_completed
from datetime import datetime
from decimal import Decimal, InvalidOperation
from pathlib import Path
from typing import Optional

import click
import yaml

from . import evaluation, synth
from .catalog import SensorCatalog
from .errors import (
    AdlxError,
    DataError,
    ExtractionError,
    GatewayError,
    HallucinatedLabel,
    InvalidParameters,
    MissingExplanation,
    SchemaViolation,
    UnparseableOutput,
)
from .extract import MODE_E2E, MODE_EXPLAINER, extract
from .gateway import (
    CompletionRequest,
    Gateway,
    GatewayPolicy,
    HttpBackend,
    RecordingBackend,
    ReplayBackend,
    RuleMockBackend,
    estimate_cost,
    request_digest,
    requests_per_duration,
)
from .ingest import (
    EVENT_FORMATS,
    label_windows,
    parse_event_log,
    parse_ground_truth,
    events_to_csv,
    truth_to_csv,
)
from .model import (
    ActivitySet,
    SemanticState,
    StateWindow,
    STATUS_HALLUCINATED,
    STATUS_MISSING_EXPLANATION,
    STATUS_OK,
    STATUS_SKIPPED,
    STATUS_UNPARSEABLE,
)
from .pairing import pair_events
from .prompts import (
    HomeProfile,
    build_e2e_system_prompt,
    build_e2e_user_prompt,
    build_explainer_system_prompt,
    build_explainer_user_prompt,
)
from .render import render_attributions, render_window
from .attribution import load_attribution_document
from .segmentation import segment as segment_states

ENV_PREFIX = "ADLX_"


def guarded(fn):
    """Map package errors to the documented exit codes and error line."""

    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except (DataError, ExtractionError) as exc:
            _fail(exc, 3)
        except GatewayError as exc:
            _fail(exc, 4)

    return wrapper


def _fail(exc: AdlxError, code: int) -> None:
    click.echo(f"error: {type(exc).__name__}: {exc}", err=True)
    sys.exit(code)


def _write_atomic(path: Path, text: str) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _setting(ctx, name: str, flag_value, default=None, cast=None):
    if flag_value is not None:
        return flag_value
    env = os.environ.get(ENV_PREFIX + name.upper())
    if env is not None:
        return cast(env) if cast else env
    cfg = (ctx.obj or {}).get("config", {})
    if name in cfg and cfg[name] is not None:
        value = cfg[name]
        return cast(value) if cast and isinstance(value, str) else value
    return default


@click.group()
@click.option(
    "--config",
    "config_path",
    type=click.Path(exists=True, dir_okay=False, path_type=Path),
    default=None,
    help="YAML config file supplying option defaults.",
)
@click.pass_context
def main(ctx: click.Context, config_path: Optional[Path]) -> None:
    """Turn smart-home sensor streams into explained activity predictions."""
    ctx.ensure_object(dict)
    cfg: dict = {}
    if config_path is not None:
        loaded = yaml.safe_load(config_path.read_text(encoding="utf-8"))
        if loaded is None:
            loaded = {}
        if not isinstance(loaded, dict):
            raise click.UsageError("config file must hold a YAML mapping")
        cfg = loaded
    ctx.obj["config"] = cfg


def _resolve_dataset_files(
    dataset: Path, truth_path: Optional[Path]
) -> tuple[Path, Optional[Path]]:
    if dataset.is_file():
        return dataset, truth_path
    event_names = ("events.csv", "events.txt", "sensors.csv", "sensors.txt")
    truth_names = ("truth.csv", "truth.txt", "activities.csv", "activities.txt")
    events_file = next(
        (dataset / n for n in event_names if (dataset / n).is_file()), None
    )
    if events_file is None:
        raise SchemaViolation(
            f"no event file found in {dataset} (expected one of {', '.join(event_names)})"
        )
    if truth_path is None:
        truth_path = next(
            (dataset / n for n in truth_names if (dataset / n).is_file()), None
        )
    return events_file, truth_path


@main.command("ingest")
@click.argument("dataset", type=click.Path(exists=True, path_type=Path))
@click.option("--format", "fmt", type=click.Choice(EVENT_FORMATS), required=True)
@click.option(
    "--catalog",
    "catalog_path",
    type=click.Path(exists=True, dir_okay=False, path_type=Path),
    default=None,
    help="Sensor catalog JSON used to validate entities and statuses.",
)
@click.option(
    "--truth",
    "truth_path",
    type=click.Path(exists=True, dir_okay=False, path_type=Path),
    default=None,
    help="Ground-truth file (defaults to truth.* inside a dataset directory).",
)
@click.option(
    "--activities",
    "activities_csv",
    default=None,
    help="Comma-separated candidate labels used to validate truth rows.",
)
@click.option(
    "--out-dir", type=click.Path(path_type=Path), default=Path("out"), show_default=True
)
@guarded
def cmd_ingest(
    dataset: Path,
    fmt: str,
    catalog_path: Optional[Path],
    truth_path: Optional[Path],
    activities_csv: Optional[str],
    out_dir: Path,
) -> None:
    """Normalize a dataset into generic event and truth CSV archives."""
    events_file, truth_file = _resolve_dataset_files(dataset, truth_path)
    catalog = SensorCatalog.load(catalog_path) if catalog_path else None
    events = parse_event_log(events_file, fmt, catalog)
    _write_atomic(out_dir / "events.csv", events_to_csv(events))
    click.echo(f"ingested {len(events)} events -> {out_dir / 'events.csv'}")
    if truth_file is not None:
        activities = (
            ActivitySet(s.strip() for s in activities_csv.split(","))
            if activities_csv
            else None
        )
        truth = parse_ground_truth(truth_file, fmt, activities)
        _write_atomic(out_dir / "truth.csv", truth_to_csv(truth))
        click.echo(
            f"ingested {len(truth)} truth intervals -> {out_dir / 'truth.csv'}"
        )


def _windows_to_doc(
    windows: list[StateWindow], window_seconds: float, overlap: float
) -> dict:
    return {
        "window_seconds": window_seconds,
        "overlap": overlap,
        "windows": [
            {
                "start": w.start.isoformat(),
                "end": w.end.isoformat(),
                "states": [
                    {
                        "property": s.property,
                        "start": s.start.isoformat(),
                        "end": s.end.isoformat(),
                    }
                    for s in w.states
                ],
            }
            for w in windows
        ],
    }


def _load_window_archive(path: Path) -> list[StateWindow]:
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
        windows = []
        for w in doc["windows"]:
            states = tuple(
                SemanticState(
                    s["property"],
                    datetime.fromisoformat(s["start"]),
                    datetime.fromisoformat(s["end"]),
                )
                for s in w["states"]
            )
            windows.append(
                StateWindow(
                    datetime.fromisoformat(w["start"]),
                    datetime.fromisoformat(w["end"]),
                    states,
                )
            )
        return windows
    except (KeyError, TypeError, ValueError, json.JSONDecodeError) as exc:
        raise SchemaViolation(f"bad window archive {path}: {exc}") from None


@main.command("segment")
@click.option(
    "--events",
    "events_path",
    type=click.Path(exists=True, dir_okay=False, path_type=Path),
    required=True,
    help="Normalized generic-csv event archive (from ingest or synth).",
)
@click.option(
    "--catalog",
    "catalog_path",
    type=click.Path(exists=True, dir_okay=False, path_type=Path),
    required=True,
)
@click.option("--window-seconds", type=float, default=None)
@click.option("--overlap", type=float, default=None)
@click.option("--span-start", default=None, help="ISO timestamp; defaults to first event.")
@click.option("--span-end", default=None, help="ISO timestamp; defaults to last event.")
@click.option(
    "--close-dangling-at-stream-end",
    is_flag=True,
    default=False,
    help="Close still-open states at the last event instead of reporting them.",
)
@click.option(
    "--out-dir", type=click.Path(path_type=Path), default=Path("out"), show_default=True
)
@click.pass_context
@guarded
def cmd_segment(
    ctx: click.Context,
    events_path: Path,
    catalog_path: Path,
    window_seconds: Optional[float],
    overlap: Optional[float],
    span_start: Optional[str],
    span_end: Optional[str],
    close_dangling_at_stream_end: bool,
    out_dir: Path,
) -> None:
    """Pair events into states and slice them into windows."""
    window_seconds = _setting(ctx, "window_seconds", window_seconds, 16.0, float)
    overlap = _setting(ctx, "overlap", overlap, 0.8, float)
    catalog = SensorCatalog.load(catalog_path)
    events = parse_event_log(events_path, "generic-csv", catalog=None)
    if not events:
        raise InvalidParameters(f"no events in {events_path}")
    close_at = events[-1].ts if close_dangling_at_stream_end else None
    states, unpaired = pair_events(events, catalog, close_dangling_at=close_at)
    span = (
        datetime.fromisoformat(span_start) if span_start else events[0].ts,
        datetime.fromisoformat(span_end) if span_end else events[-1].ts,
    )
    windows = segment_states(states, window_seconds, overlap, span)
    _write_atomic(
        out_dir / "windows.json",
        json.dumps(
            _windows_to_doc(windows, window_seconds, overlap),
            indent=2,
            ensure_ascii=False,
        ),
    )
    _write_atomic(
        out_dir / "unpaired.json",
        json.dumps(
            [
                {
                    "entity": up.event.entity,
                    "status": up.event.status,
                    "ts": up.event.ts.isoformat(),
                    "reason": up.reason,
                }
                for up in unpaired
            ],
            indent=2,
            ensure_ascii=False,
        ),
    )
    empty = sum(1 for w in windows if w.is_empty)
    click.echo(
        f"{len(states)} states, {len(unpaired)} unpaired events, "
        f"{len(windows)} windows ({empty} empty) -> {out_dir / 'windows.json'}"
    )


@main.command("render")
@click.option("--mode", type=click.Choice(["window", "attributions"]), required=True)
@click.option(
    "--windows",
    "windows_path",
    type=click.Path(exists=True, dir_okay=False, path_type=Path),
    default=None,
)
@click.option(
    "--attributions",
    "attributions_path",
    type=click.Path(exists=True, dir_okay=False, path_type=Path),
    default=None,
)
@click.option(
    "--catalog",
    "catalog_path",
    type=click.Path(exists=True, dir_okay=False, path_type=Path),
    required=True,
)
@click.option(
    "--out-dir", type=click.Path(path_type=Path), default=Path("out"), show_default=True
)
@guarded
def cmd_render(
    mode: str,
    windows_path: Optional[Path],
    attributions_path: Optional[Path],
    catalog_path: Path,
    out_dir: Path,
) -> None:
    """Write interchange JSON for windows or for an attribution set."""
    catalog = SensorCatalog.load(catalog_path)
    if mode == "window":
        if windows_path is None:
            raise click.UsageError("--mode window requires --windows")
        windows = _load_window_archive(windows_path)
        for idx, window in enumerate(windows):
            text = render_window(window, catalog)
            _write_atomic(out_dir / f"window-{idx:06d}.json", text + "\n")
        click.echo(f"rendered {len(windows)} windows -> {out_dir}")
    else:
        if attributions_path is None:
            raise click.UsageError("--mode attributions requires --attributions")
        attrs, window = load_attribution_document(attributions_path)
        if window is None:
            raise SchemaViolation(
                'attribution document needs a "window" to be rendered'
            )
        text = render_attributions(attrs, window, catalog)
        out_path = out_dir / "attributions.json"
        _write_atomic(out_path, text + "\n")
        click.echo(f"rendered attribution set -> {out_path}")


def _load_profile(path: Path) -> HomeProfile:
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
        return HomeProfile(
            layout_description=doc["layout_description"],
            sensor_description=doc["sensor_description"],
            activities=ActivitySet(doc["activities"]),
        )
    except (KeyError, TypeError, ValueError, json.JSONDecodeError) as exc:
        raise SchemaViolation(f"bad profile {path}: {exc}") from None


def _policy_from(ctx: click.Context, **flags) -> GatewayPolicy:
    def get(name, default, cast):
        return _setting(ctx, name, flags.get(name), default, cast)

    rpm = get("requests_per_minute", None, int)
    tpm = get("tokens_per_minute", None, int)
    return GatewayPolicy(
        max_concurrent_requests=get("max_concurrent_requests", 8, int),
        max_retries=get("max_retries", 5, int),
        base_backoff_seconds=get("base_backoff_seconds", 1.0, float),
        backoff_multiplier=get("backoff_multiplier", 2.0, float),
        queue_capacity=get("queue_capacity", 64, int),
        requests_per_minute=int(rpm) if rpm is not None else None,
        tokens_per_minute=int(tpm) if tpm is not None else None,
    )


def _build_backend(
    ctx: click.Context,
    backend: str,
    rules_path: Optional[Path],
    fixtures_dir: Optional[Path],
    record_dir: Optional[Path],
    base_url: Optional[str],
):
    if backend == "mock":
        if rules_path is None:
            raise click.UsageError("--backend mock requires --rules")
        try:
            rules = json.loads(rules_path.read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise SchemaViolation(f"bad rules file {rules_path}: {exc}") from None
        if not isinstance(rules, dict):
            raise SchemaViolation("rules file must map property labels to activities")
        inner = RuleMockBackend(rules)
    elif backend == "replay":
        if fixtures_dir is None:
            raise click.UsageError("--backend replay requires --fixtures")
        inner = ReplayBackend(fixtures_dir)
    else:
        base_url = _setting(ctx, "base_url", base_url, None)
        if not base_url:
            raise click.UsageError(
                "--backend http requires --base-url (or base_url in config)"
            )
        inner = HttpBackend(base_url)
    if record_dir is not None:
        inner = RecordingBackend(inner, record_dir)
    return inner


def _gateway_options(fn):
    options = [
        click.option(
            "--backend",
            type=click.Choice(["http", "mock", "replay"]),
            default=None,
            help="Completion backend (default mock).",
        ),
        click.option(
            "--rules",
            "rules_path",
            type=click.Path(exists=True, dir_okay=False, path_type=Path),
            default=None,
            help="Label-to-activity table for the mock backend.",
        ),
        click.option(
            "--fixtures",
            "fixtures_dir",
            type=click.Path(exists=True, file_okay=False, path_type=Path),
            default=None,
            help="Fixture directory for the replay backend.",
        ),
        click.option(
            "--record",
            "record_dir",
            type=click.Path(file_okay=False, path_type=Path),
            default=None,
            help="Capture live responses into this fixture directory.",
        ),
        click.option("--base-url", default=None, help="Provider base URL (http backend)."),
        click.option("--model", default=None, help="Provider model id."),
        click.option("--max-output-tokens", type=int, default=None),
        click.option("--max-concurrent-requests", "max_concurrent_requests", type=int, default=None),
        click.option("--max-retries", "max_retries", type=int, default=None),
        click.option("--base-backoff-seconds", "base_backoff_seconds", type=float, default=None),
        click.option("--backoff-multiplier", "backoff_multiplier", type=float, default=None),
        click.option("--queue-capacity", "queue_capacity", type=int, default=None),
        click.option("--requests-per-minute", "requests_per_minute", type=int, default=None),
        click.option("--tokens-per-minute", "tokens_per_minute", type=int, default=None),
        click.option(
            "--template-dir",
            type=click.Path(exists=True, file_okay=False, path_type=Path),
            default=None,
            help="Override the built-in prompt templates.",
        ),
    ]
    for option in reversed(options):
        fn = option(fn)
    return fn


def _usage_doc(usage) -> dict:
    return {
        "prompt_tokens": usage.prompt_tokens,
        "completion_tokens": usage.completion_tokens,
    }


def _run_completions(gateway: Gateway, jobs: list[tuple[int, CompletionRequest]], workers: int):
    """Run requests concurrently; results keyed by job index."""
    results: dict[int, tuple[str, object]] = {}
    first_error: Optional[Exception] = None
    with ThreadPoolExecutor(max_workers=workers) as pool:
        futures = {
            pool.submit(gateway.complete, req): idx for idx, req in jobs
        }
        for fut in as_completed(futures):
            idx = futures[fut]
            try:
                results[idx] = fut.result()
            except GatewayError as exc:
                if first_error is None:
                    first_error = exc
    if first_error is not None:
        raise first_error
    return results


@main.command("classify")
@click.option(
    "--windows",
    "windows_path",
    type=click.Path(exists=True, dir_okay=False, path_type=Path),
    required=True,
)
@click.option(
    "--catalog",
    "catalog_path",
    type=click.Path(exists=True, dir_okay=False, path_type=Path),
    required=True,
)
@click.option(
    "--profile",
    "profile_path",
    type=click.Path(exists=True, dir_okay=False, path_type=Path),
    required=True,
    help="Home profile JSON: layout, sensing description, activities.",
)
@click.option("--mode", type=click.Choice([MODE_E2E]), default=MODE_E2E, show_default=True)
@click.option(
    "--out",
    "out_path",
    type=click.Path(path_type=Path),
    default=Path("predictions.jsonl"),
    show_default=True,
)
@click.option(
    "--include-empty",
    is_flag=True,
    default=False,
    help="Query the model for windows with no states instead of skipping them.",
)
@_gateway_options
@click.pass_context
@guarded
def cmd_classify(
    ctx: click.Context,
    windows_path: Path,
    catalog_path: Path,
    profile_path: Path,
    mode: str,
    out_path: Path,
    include_empty: bool,
    backend: Optional[str],
    rules_path: Optional[Path],
    fixtures_dir: Optional[Path],
    record_dir: Optional[Path],
    base_url: Optional[str],
    model: Optional[str],
    max_output_tokens: Optional[int],
    template_dir: Optional[Path],
    **policy_flags,
) -> None:
    """Classify every window and write one prediction record per line."""
    catalog = SensorCatalog.load(catalog_path)
    profile = _load_profile(profile_path)
    windows = _load_window_archive(windows_path)
    backend = _setting(ctx, "backend", backend, "mock")
    model = _setting(ctx, "model", model, "gpt-4o")
    max_output_tokens = _setting(ctx, "max_output_tokens", max_output_tokens, 1024, int)
    policy = _policy_from(ctx, **policy_flags)
    gateway = Gateway(
        _build_backend(ctx, backend, rules_path, fixtures_dir, record_dir, base_url),
        policy,
    )
    system = build_e2e_system_prompt(profile, template_dir=template_dir)

    records: dict[int, dict] = {}
    jobs: list[tuple[int, CompletionRequest]] = []
    requests: dict[int, CompletionRequest] = {}
    for idx, window in enumerate(windows):
        bounds = [window.start.isoformat(), window.end.isoformat()]
        if window.is_empty and not include_empty:
            records[idx] = {
                "window": bounds,
                "status": STATUS_SKIPPED,
                "activity": None,
                "explanation": "",
                "reasoning": "",
                "raw_model_output": "",
                "prompt_fingerprint": "",
                "usage": {"prompt_tokens": 0, "completion_tokens": 0},
            }
            continue
        user = build_e2e_user_prompt(
            render_window(window, catalog), template_dir=template_dir
        )
        req = CompletionRequest(
            system=system,
            user=user,
            model_id=model,
            max_output_tokens=max_output_tokens,
        )
        requests[idx] = req
        jobs.append((idx, req))

    results = _run_completions(gateway, jobs, policy.max_concurrent_requests)
    for idx, (raw, usage) in results.items():
        window = windows[idx]
        bounds = [window.start.isoformat(), window.end.isoformat()]
        status, activity, explanation, reasoning = _interpret(
            raw, profile.activities, MODE_E2E
        )
        records[idx] = {
            "window": bounds,
            "status": status,
            "activity": activity,
            "explanation": explanation,
            "reasoning": reasoning,
            "raw_model_output": raw,
            "prompt_fingerprint": request_digest(requests[idx]),
            "usage": _usage_doc(usage),
        }

    lines = [json.dumps(records[idx], ensure_ascii=False) for idx in range(len(windows))]
    _write_atomic(out_path, "\n".join(lines) + ("\n" if lines else ""))
    ok = sum(1 for r in records.values() if r["status"] == STATUS_OK)
    skipped = sum(1 for r in records.values() if r["status"] == STATUS_SKIPPED)
    click.echo(
        f"classified {len(windows)} windows: {ok} ok, {skipped} skipped, "
        f"{len(windows) - ok - skipped} failed -> {out_path}"
    )


def _interpret(raw: str, activities: ActivitySet, mode: str):
    try:
        result = extract(raw, activities, mode)
        return STATUS_OK, result.activity, result.explanation, result.reasoning
    except HallucinatedLabel as exc:
        return STATUS_HALLUCINATED, None, str(exc), ""
    except MissingExplanation as exc:
        return STATUS_MISSING_EXPLANATION, None, str(exc), ""
    except UnparseableOutput as exc:
        return STATUS_UNPARSEABLE, None, str(exc), ""


@main.command("explain")
@click.option(
    "--attributions",
    "attributions_path",
    type=click.Path(exists=True, path_type=Path),
    required=True,
    help="Attribution interchange file, or a directory of them.",
)
@click.option(
    "--catalog",
    "catalog_path",
    type=click.Path(exists=True, dir_okay=False, path_type=Path),
    required=True,
)
@click.option(
    "--profile",
    "profile_path",
    type=click.Path(exists=True, dir_okay=False, path_type=Path),
    required=True,
)
@click.option(
    "--out",
    "out_path",
    type=click.Path(path_type=Path),
    default=Path("explanations.jsonl"),
    show_default=True,
)
@_gateway_options
@click.pass_context
@guarded
def cmd_explain(
    ctx: click.Context,
    attributions_path: Path,
    catalog_path: Path,
    profile_path: Path,
    out_path: Path,
    backend: Optional[str],
    rules_path: Optional[Path],
    fixtures_dir: Optional[Path],
    record_dir: Optional[Path],
    base_url: Optional[str],
    model: Optional[str],
    max_output_tokens: Optional[int],
    template_dir: Optional[Path],
    **policy_flags,
) -> None:
    """Explain pre-computed predictions from their attribution sets."""
    catalog = SensorCatalog.load(catalog_path)
    profile = _load_profile(profile_path)
    backend = _setting(ctx, "backend", backend, "mock")
    model = _setting(ctx, "model", model, "gpt-4o")
    max_output_tokens = _setting(ctx, "max_output_tokens", max_output_tokens, 1024, int)
    policy = _policy_from(ctx, **policy_flags)
    gateway = Gateway(
        _build_backend(ctx, backend, rules_path, fixtures_dir, record_dir, base_url),
        policy,
    )
    system = build_explainer_system_prompt(profile, template_dir=template_dir)

    if attributions_path.is_dir():
        sources = sorted(attributions_path.glob("*.json"))
        if not sources:
            raise SchemaViolation(f"no *.json attribution files in {attributions_path}")
    else:
        sources = [attributions_path]

    jobs: list[tuple[int, CompletionRequest]] = []
    docs = []
    for idx, source in enumerate(sources):
        attrs, window = load_attribution_document(source)
        if window is None:
            raise SchemaViolation(f'{source}: needs a "window" to be rendered')
        attrs_json = render_attributions(attrs, window, catalog)
        user = build_explainer_user_prompt(
            attrs.predicted_activity,
            attrs_json,
            profile.activities,
            template_dir=template_dir,
        )
        req = CompletionRequest(
            system=system, user=user, model_id=model, max_output_tokens=max_output_tokens
        )
        docs.append((source, attrs, window, req))
        jobs.append((idx, req))

    results = _run_completions(gateway, jobs, policy.max_concurrent_requests)
    lines = []
    ok = 0
    for idx, (source, attrs, window, req) in enumerate(docs):
        raw, usage = results[idx]
        status, _activity, explanation, reasoning = _interpret(
            raw, profile.activities, MODE_EXPLAINER
        )
        if status == STATUS_OK:
            ok += 1
        lines.append(
            json.dumps(
                {
                    "source": str(source),
                    "window": [window[0].isoformat(), window[1].isoformat()],
                    "predicted_activity": profile.activities.canonical(
                        attrs.predicted_activity
                    ),
                    "status": status,
                    "explanation": explanation,
                    "reasoning": reasoning,
                    "raw_model_output": raw,
                    "prompt_fingerprint": request_digest(req),
                    "usage": _usage_doc(usage),
                },
                ensure_ascii=False,
            )
        )
    _write_atomic(out_path, "\n".join(lines) + ("\n" if lines else ""))
    click.echo(
        f"explained {len(docs)} attribution sets: {ok} ok, "
        f"{len(docs) - ok} failed -> {out_path}"
    )


def _load_predictions(path: Path) -> list[dict]:
    records = []
    try:
        for line in Path(path).read_text(encoding="utf-8").splitlines():
            if not line.strip():
                continue
            records.append(json.loads(line))
    except json.JSONDecodeError as exc:
        raise SchemaViolation(f"bad predictions file {path}: {exc}") from None
    if not records:
        raise SchemaViolation(f"no prediction records in {path}")
    return records


_STATUS_TO_FAILURE = {
    STATUS_HALLUCINATED: evaluation.FAIL_HALLUCINATED,
    STATUS_UNPARSEABLE: evaluation.FAIL_UNPARSEABLE,
    STATUS_MISSING_EXPLANATION: evaluation.FAIL_UNPARSEABLE,
    STATUS_SKIPPED: evaluation.FAIL_SKIPPED,
}


@main.command("evaluate")
@click.option(
    "--predictions",
    "predictions_path",
    type=click.Path(exists=True, dir_okay=False, path_type=Path),
    required=True,
)
@click.option(
    "--truth",
    "truth_path",
    type=click.Path(exists=True, dir_okay=False, path_type=Path),
    required=True,
    help="Ground-truth archive in generic-csv layout.",
)
@click.option(
    "--activities",
    "activities_csv",
    default=None,
    help="Comma-separated candidate labels; defaults to the labels in the truth file.",
)
@click.option(
    "--downsample",
    "downsample_csv",
    default=None,
    help="Comma-separated classes to down-sample to the median of the rest.",
)
@click.option("--split", "split_fraction", type=float, default=None)
@click.option("--seed", type=int, default=None)
@click.option(
    "--out-dir", type=click.Path(path_type=Path), default=Path("out"), show_default=True
)
@click.pass_context
@guarded
def cmd_evaluate(
    ctx: click.Context,
    predictions_path: Path,
    truth_path: Path,
    activities_csv: Optional[str],
    downsample_csv: Optional[str],
    split_fraction: Optional[float],
    seed: Optional[int],
    out_dir: Path,
) -> None:
    """Score a prediction stream against ground truth and write reports."""
    seed = _setting(ctx, "seed", seed, 0, int)
    truth = parse_ground_truth(truth_path, "generic-csv")
    if activities_csv:
        activities = ActivitySet(s.strip() for s in activities_csv.split(","))
    else:
        activities = ActivitySet(sorted({iv.activity for iv in truth}))
    records = _load_predictions(predictions_path)

    windows = []
    for rec in records:
        try:
            start = datetime.fromisoformat(rec["window"][0])
            end = datetime.fromisoformat(rec["window"][1])
        except (KeyError, IndexError, TypeError, ValueError) as exc:
            raise SchemaViolation(f"bad prediction record: {exc}") from None
        windows.append(StateWindow(start, end))
    labeled, dropped = label_windows(windows, truth)
    truth_by_window = {id(w): label for w, label in labeled}

    pairs: list[tuple[tuple[str, evaluation.Predicted], str]] = []
    for window, rec in zip(windows, records):
        truth_label = truth_by_window.get(id(window))
        if truth_label is None:
            continue
        status = rec.get("status")
        if status == STATUS_OK:
            predicted: evaluation.Predicted = rec.get("activity") or ""
        elif status in _STATUS_TO_FAILURE:
            predicted = evaluation.FailedPrediction(_STATUS_TO_FAILURE[status])
        else:
            raise SchemaViolation(f"unknown prediction status {status!r}")
        pairs.append(((truth_label, predicted), truth_label))

    if downsample_csv:
        classes = [s.strip() for s in downsample_csv.split(",") if s.strip()]
        pairs = evaluation.downsample(pairs, classes, seed, activities)
    if split_fraction is not None:
        train, test = evaluation.split_train_test(pairs, split_fraction, seed)
        click.echo(
            f"split: {len(train)} train / {len(test)} test (scoring the test side)"
        )
        pairs = test

    report = evaluation.score([pair for pair, _label in pairs], activities)
    _write_atomic(out_dir / "report.json", evaluation.report_to_json(report) + "\n")
    _write_atomic(out_dir / "confusion.csv", evaluation.confusion_to_csv(report))
    _write_atomic(out_dir / "report.txt", evaluation.report_to_text(report))
    if dropped:
        click.echo(f"dropped {dropped} windows with no ground-truth overlap")
    click.echo(f"weighted F1: {report.weighted_f1:.4f} -> {out_dir / 'report.json'}")


@main.command("cost")
@click.option("--unit-cost", "unit_cost", default=None, help="Price per request.")
@click.option("--window-seconds", type=float, default=None)
@click.option("--overlap", type=float, default=None)
@click.option("--hours", type=float, default=24.0, show_default=True)
@click.pass_context
@guarded
def cmd_cost(
    ctx: click.Context,
    unit_cost: Optional[str],
    window_seconds: Optional[float],
    overlap: Optional[float],
    hours: float,
) -> None:
    """Project request volume and spend for a continuous deployment."""
    unit_cost = _setting(ctx, "unit_cost", unit_cost, "0.0085")
    window_seconds = _setting(ctx, "window_seconds", window_seconds, 16.0, float)
    overlap = _setting(ctx, "overlap", overlap, 0.8, float)
    if hours <= 0:
        raise InvalidParameters("--hours must be positive")
    try:
        duration = Decimal(str(hours)) * 3600
        requests = requests_per_duration(duration, window_seconds, overlap)
        total = estimate_cost(requests, unit_cost).quantize(Decimal("0.01"))
    except InvalidOperation as exc:
        raise InvalidParameters(f"bad cost inputs: {exc}") from None
    period = "/day" if hours == 24.0 else f" per {hours:g} h"
    click.echo(f"{requests} requests, {total}{period}")


@main.command("synth")
@click.option(
    "--scenario",
    "scenario_path",
    type=click.Path(exists=True, dir_okay=False, path_type=Path),
    required=True,
)
@click.option("--seed", type=int, default=None)
@click.option(
    "--out-dir", type=click.Path(path_type=Path), default=Path("out"), show_default=True
)
@click.pass_context
@guarded
def cmd_synth(
    ctx: click.Context, scenario_path: Path, seed: Optional[int], out_dir: Path
) -> None:
    """Generate a deterministic synthetic dataset from a scenario file."""
    seed = _setting(ctx, "seed", seed, 0, int)
    doc = synth.load_scenario(scenario_path)
    events, truth, catalog = synth.generate(doc, seed)
    _write_atomic(out_dir / "events.csv", events_to_csv(events))
    _write_atomic(out_dir / "truth.csv", truth_to_csv(truth))
    _write_atomic(
        out_dir / "catalog.json",
        json.dumps(catalog.to_json(), indent=2, ensure_ascii=False) + "\n",
    )
    _write_atomic(
        out_dir / "profile.json",
        json.dumps(synth.scenario_profile(doc), indent=2, ensure_ascii=False) + "\n",
    )
    _write_atomic(
        out_dir / "rules.json",
        json.dumps(synth.mock_rules(doc), indent=2, ensure_ascii=False) + "\n",
    )
    click.echo(
        f"generated {len(events)} events, {len(truth)} truth intervals -> {out_dir}"
    )


if __name__ == "__main__":
    main()
