"""Explainable activity-of-daily-living recognition from sensor streams.

The pipeline: ingest sensor logs into semantic events, pair them into
states, slice states into fixed-length windows, render windows as
interchange JSON, ask a language-model backend to classify and explain
(or to explain an external classifier's attributions), then score the
predictions against ground truth.
"""

from .attribution import (
    HeatmapExplanation,
    HeatmapRow,
    HeatmapSegment,
    dump_attribution_interchange,
    heatmap_to_attributions,
    load_attribution_document,
    load_attribution_interchange,
    load_heatmap_csv,
)
from .catalog import EntitySpec, SensorCatalog
from .errors import (
    AdlxError,
    ClassTooSmall,
    DataError,
    EmptyActivitySet,
    EmptyInput,
    ExtractionError,
    GatewayError,
    GatewayTimeout,
    HallucinatedLabel,
    InvalidParameters,
    InvalidScenario,
    MalformedRow,
    MissingExplanation,
    MissingLabel,
    PromptTooLarge,
    ProviderError,
    QueueFull,
    RateLimitedExhausted,
    ReplayMiss,
    SchemaViolation,
    TransientProviderError,
    UnknownActivity,
    UnknownEntity,
    UnknownStatus,
    UnmappedFeature,
    UnparseableOutput,
)
from .evaluation import (
    EvalReport,
    FailedPrediction,
    downsample,
    score,
    split_train_test,
)
from .extract import Extraction, extract, render_envelope
from .gateway import (
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
from .ingest import (
    GroundTruthInterval,
    label_windows,
    parse_event_log,
    parse_ground_truth,
    threshold_adapter,
    write_events_csv,
    write_truth_csv,
)
from .model import (
    ActivitySet,
    AttributionSet,
    PredictionRecord,
    SemanticEvent,
    SemanticState,
    StateWindow,
    TokenUsage,
    clip_state,
    state_duration,
)
from .pairing import UnpairedEvent, pair_events
from .prompts import (
    HomeProfile,
    build_e2e_system_prompt,
    build_e2e_user_prompt,
    build_explainer_system_prompt,
    build_explainer_user_prompt,
    estimate_tokens,
)
from .render import parse_window_json, render_attributions, render_window
from .segmentation import segment, stride_for, window_starts
from .synth import generate, load_scenario, mock_rules, scenario_catalog

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
