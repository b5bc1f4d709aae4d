"""Clinical report generation from a prediction plus gait metadata.

A structured prompt goes to a chat-completions endpoint; any transport or
parse failure falls back to a deterministic rule-based template, so report
generation never fails. Reports always carry the same five sections.
"""
from __future__ import annotations

import json
import logging
import os
import time
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path

import numpy as np
import requests

from .head import GaitClass, Prediction
from .tensor import ValidationError

__all__ = [
    "Symptom",
    "Lighting",
    "Occlusion",
    "CaptureContext",
    "GaitMetadata",
    "PromptPair",
    "ClinicalReport",
    "LlmEndpointConfig",
    "assemble_prompt",
    "render_template_report",
    "generate_report",
    "report_for",
    "SECTION_HEADERS",
    "TEMPLATE_VERSION",
]

log = logging.getLogger("gaitfuse.report")

TEMPLATE_VERSION = "1"
TOKEN_ENV_VAR = "GAITFUSE_LLM_TOKEN"
EMBED_SUMMARY_TOP_K = 5


class Symptom(Enum):
    REDUCED_ARM_SWING = "reduced_arm_swing"
    SHORT_STRIDE = "short_stride"
    FORWARD_LEAN = "forward_lean"
    TURNING_HESITATION = "turning_hesitation"
    FREEZING = "freezing"
    NONE_REPORTED = "none_reported"

    @property
    def display(self) -> str:
        if self is Symptom.NONE_REPORTED:
            return "no symptoms reported"
        return self.value.replace("_", " ")


class Lighting(Enum):
    NORMAL = "normal"
    LOW = "low"


class Occlusion(Enum):
    NONE = "none"
    CLOTHING = "clothing"


@dataclass(frozen=True)
class CaptureContext:
    lighting: Lighting = Lighting.NORMAL
    occlusion: Occlusion = Occlusion.NONE


@dataclass(frozen=True)
class GaitMetadata:
    subject_id: str
    symptoms: frozenset[Symptom]
    capture: CaptureContext = field(default_factory=CaptureContext)
    frame_index: int = 0

    def __post_init__(self):
        if not self.symptoms:
            raise ValidationError(
                "symptoms must be non-empty; use none_reported explicitly"
            )
        if Symptom.NONE_REPORTED in self.symptoms and len(self.symptoms) > 1:
            raise ValidationError("none_reported excludes all other symptoms")

    def sorted_symptoms(self) -> list[Symptom]:
        return sorted(self.symptoms, key=lambda s: s.value)

    def to_json_dict(self) -> dict:
        return {
            "subject_id": self.subject_id,
            "symptoms": [s.value for s in self.sorted_symptoms()],
            "capture": {
                "lighting": self.capture.lighting.value,
                "occlusion": self.capture.occlusion.value,
            },
            "frame_index": self.frame_index,
        }

    @classmethod
    def from_json_dict(cls, d: dict) -> "GaitMetadata":
        try:
            symptoms = frozenset(Symptom(s) for s in d["symptoms"])
            capture = CaptureContext(
                lighting=Lighting(d.get("capture", {}).get("lighting", "normal")),
                occlusion=Occlusion(d.get("capture", {}).get("occlusion", "none")),
            )
            return cls(subject_id=str(d["subject_id"]), symptoms=symptoms,
                       capture=capture, frame_index=int(d.get("frame_index", 0)))
        except (KeyError, ValueError) as e:
            raise ValidationError(f"invalid gait metadata: {e}") from e

    @classmethod
    def load(cls, path: str | Path) -> "GaitMetadata":
        return cls.from_json_dict(json.loads(Path(path).read_text()))


@dataclass(frozen=True)
class PromptPair:
    system: str
    user: str


SECTION_HEADERS = (
    "Classification Result",
    "Confidence",
    "Data Analysis",
    "Interpretation",
    "Recommendations",
)

_SECTION_KEYS = ("classification_result", "confidence", "data_analysis",
                 "interpretation", "recommendations")


@dataclass
class ClinicalReport:
    classification_result: str
    confidence: str
    data_analysis: str
    interpretation: str
    recommendations: str
    source: str = "template"        # "llm" or "template"
    model_id: str = "template"
    latency_ms: float = 0.0

    def __post_init__(self):
        for key in _SECTION_KEYS:
            if not getattr(self, key).strip():
                raise ValidationError(f"report section {key!r} must be non-empty")
        if self.source not in ("llm", "template"):
            raise ValidationError(f"report source must be llm or template, got {self.source}")

    def sections(self) -> dict[str, str]:
        return {key: getattr(self, key) for key in _SECTION_KEYS}

    def to_json_dict(self) -> dict:
        return {**self.sections(), "source": self.source,
                "model_id": self.model_id, "latency_ms": self.latency_ms}

    def render_text(self) -> str:
        lines = []
        for header, key in zip(SECTION_HEADERS, _SECTION_KEYS):
            lines.append(f"{header}:")
            lines.append(getattr(self, key))
            lines.append("")
        return "\n".join(lines)


# ---------------------------------------------------------------------------
# Prompt assembly
# ---------------------------------------------------------------------------

_SYSTEM_PROMPT = f"""You are a clinical gait-analysis assistant writing structured screening notes. \
You receive the output of a combined color/depth gait classifier together with reported \
symptoms and capture conditions. Write a concise clinical report with exactly these five \
sections, each starting on its own line with the section name followed by a colon:
{chr(10).join(h + ':' for h in SECTION_HEADERS)}
Keep every section non-empty. Do not invent symptoms that were not reported. \
This is a screening aid, not a diagnosis. (prompt template v{TEMPLATE_VERSION})"""


def _embedding_summary(pred: Prediction) -> str:
    e = np.asarray(pred.embedding.data, dtype=np.float64)
    top = sorted(range(e.size), key=lambda i: (-abs(e[i]), i))[:EMBED_SUMMARY_TOP_K]
    return (f"mean={e.mean():+.4f}, std={e.std():.4f}, "
            f"strongest components (by magnitude) at indices {top}")


def assemble_prompt(pred: Prediction, meta: GaitMetadata) -> PromptPair:
    """Deterministic prompt from the prediction and metadata (template v1)."""
    symptom_text = ", ".join(s.display for s in meta.sorted_symptoms())
    probs = ", ".join(
        f"{GaitClass(i).display}={pred.probs[i]:.2f}" for i in range(len(pred.probs))
    )
    user = "\n".join([
        f"Subject: {meta.subject_id}, frame {meta.frame_index}.",
        f"Classifier output: {pred.class_label.display} "
        f"(confidence {pred.confidence:.2f}; class probabilities: {probs}).",
        f"Fused gait embedding summary: {_embedding_summary(pred)}.",
        f"Reported symptoms: {symptom_text}.",
        f"Capture conditions: lighting {meta.capture.lighting.value}, "
        f"occlusion {meta.capture.occlusion.value}.",
        "Write the five-section clinical report.",
    ])
    return PromptPair(system=_SYSTEM_PROMPT, user=user)


# ---------------------------------------------------------------------------
# Deterministic template report
# ---------------------------------------------------------------------------

def _confidence_band(confidence: float) -> str:
    if confidence >= 0.85:
        return "high"
    if confidence >= 0.5:
        return "moderate"
    return "low"


_INTERPRETATION = {
    Symptom.REDUCED_ARM_SWING: "diminished arm swing is a common early Parkinsonian sign",
    Symptom.SHORT_STRIDE: "shortened stride length suggests hypokinetic gait",
    Symptom.FORWARD_LEAN: "forward-flexed posture is consistent with Parkinsonian stooping",
    Symptom.TURNING_HESITATION: "hesitation while turning indicates impaired gait initiation",
    Symptom.FREEZING: "freezing episodes are a hallmark Parkinsonian feature",
    Symptom.NONE_REPORTED: "no gait abnormalities were reported for this sequence",
}

_RECOMMENDATIONS = {
    (GaitClass.PD_LIKE, "high"): "Refer to a movement-disorder specialist for clinical "
                                 "confirmation; consider UPDRS assessment.",
    (GaitClass.PD_LIKE, "moderate"): "Schedule a follow-up capture session and a clinical "
                                     "gait examination to confirm the suspected pattern.",
    (GaitClass.PD_LIKE, "low"): "Signal is weak; repeat the capture under better conditions "
                                "before drawing conclusions.",
    (GaitClass.NORMAL, "high"): "No action required beyond routine monitoring.",
    (GaitClass.NORMAL, "moderate"): "Routine monitoring; repeat screening at the next "
                                    "scheduled visit.",
    (GaitClass.NORMAL, "low"): "Classifier is uncertain; recapture the sequence to obtain "
                               "a reliable screening result.",
    (GaitClass.BACKGROUND, "high"): "No subject gait detected; verify camera placement and "
                                    "recapture with the subject in frame.",
    (GaitClass.BACKGROUND, "moderate"): "Scene likely contains no usable gait; recapture "
                                        "with the subject fully visible.",
    (GaitClass.BACKGROUND, "low"): "Ambiguous scene content; recapture the sequence.",
}


def render_template_report(pred: Prediction, meta: GaitMetadata) -> ClinicalReport:
    """Rule-based five-section report; byte-identical for identical inputs."""
    band = _confidence_band(pred.confidence)
    symptoms = meta.sorted_symptoms()
    symptom_text = ", ".join(s.display for s in symptoms)

    classification = (
        f"Frame {meta.frame_index} of subject {meta.subject_id} is classified as "
        f"{pred.class_label.display}."
    )
    confidence = (
        f"{pred.confidence:.2f} ({band} confidence). Class probabilities: "
        + ", ".join(f"{GaitClass(i).display}={pred.probs[i]:.2f}"
                    for i in range(len(pred.probs))) + "."
    )
    data_analysis = (
        f"Reported symptoms: {symptom_text}. Capture conditions: lighting "
        f"{meta.capture.lighting.value}, occlusion {meta.capture.occlusion.value}. "
        f"Fused gait embedding summary: {_embedding_summary(pred)}."
    )
    interpretation_parts = [_INTERPRETATION[s] for s in symptoms]
    if pred.class_label is GaitClass.PD_LIKE:
        interpretation_parts.append(
            "the fused color/depth features match a Parkinson-like gait signature"
        )
    elif pred.class_label is GaitClass.NORMAL:
        interpretation_parts.append(
            "the fused color/depth features are consistent with unimpaired gait"
        )
    else:
        interpretation_parts.append(
            "the fused features do not contain a clear walking subject"
        )
    joined = "; ".join(interpretation_parts)
    interpretation = joined[0].upper() + joined[1:] + "."

    return ClinicalReport(
        classification_result=classification,
        confidence=confidence,
        data_analysis=data_analysis,
        interpretation=interpretation,
        recommendations=_RECOMMENDATIONS[(pred.class_label, band)],
        source="template",
        model_id="template",
        latency_ms=0.0,
    )


# ---------------------------------------------------------------------------
# LLM endpoint client
# ---------------------------------------------------------------------------

@dataclass
class LlmEndpointConfig:
    url: str
    model: str = "tinyllama-1.1b-chat-v1.0"
    temperature: float = 0.0
    max_tokens: int = 512
    timeout_s: float = 30.0
    max_retries: int = 3
    backoff_base_s: float = 0.25
    backoff_factor: float = 2.0
    max_concurrency: int = 4

    def __post_init__(self):
        if not self.url:
            raise ValidationError("endpoint url must be non-empty")
        if self.max_retries < 0 or self.timeout_s <= 0:
            raise ValidationError("retries must be >= 0 and timeout positive")


class _CompletionError(Exception):
    def __init__(self, message: str, retryable: bool):
        super().__init__(message)
        self.retryable = retryable


def _parse_sections(text: str) -> dict[str, str]:
    """Split a completion into the five sections by exact header lines."""
    found: dict[str, list[str]] = {}
    current: str | None = None
    header_map = {h: k for h, k in zip(SECTION_HEADERS, _SECTION_KEYS)}
    for line in text.splitlines():
        stripped = line.strip()
        matched = None
        for header, key in header_map.items():
            if stripped == f"{header}:" or stripped.startswith(f"{header}:"):
                matched = (key, stripped[len(header) + 1:].strip())
                break
        if matched:
            current = matched[0]
            found[current] = [matched[1]] if matched[1] else []
        elif current is not None and stripped:
            found[current].append(stripped)
    sections = {k: " ".join(v).strip() for k, v in found.items()}
    missing = [k for k in _SECTION_KEYS if not sections.get(k)]
    if missing:
        raise _CompletionError(f"completion missing sections: {missing}", retryable=False)
    return {k: sections[k] for k in _SECTION_KEYS}


def _post_chat(prompt: PromptPair, cfg: LlmEndpointConfig) -> str:
    headers = {"Content-Type": "application/json"}
    token = os.environ.get(TOKEN_ENV_VAR)
    if token:
        headers["Authorization"] = f"Bearer {token}"
    payload = {
        "model": cfg.model,
        "messages": [
            {"role": "system", "content": prompt.system},
            {"role": "user", "content": prompt.user},
        ],
        "temperature": cfg.temperature,
        "max_tokens": cfg.max_tokens,
    }
    try:
        resp = requests.post(f"{cfg.url.rstrip('/')}/chat/completions",
                             json=payload, headers=headers, timeout=cfg.timeout_s)
    except requests.RequestException as e:
        raise _CompletionError(f"transport failure: {type(e).__name__}", retryable=True)
    if resp.status_code in (429, 500, 502, 503, 504):
        raise _CompletionError(f"server returned {resp.status_code}", retryable=True)
    if resp.status_code != 200:
        raise _CompletionError(f"server returned {resp.status_code}", retryable=False)
    try:
        return resp.json()["choices"][0]["message"]["content"]
    except (ValueError, KeyError, IndexError, TypeError) as e:
        raise _CompletionError(f"malformed completion payload: {type(e).__name__}",
                               retryable=False)


def generate_report(prompt: PromptPair, endpoint: LlmEndpointConfig,
                    fallback: ClinicalReport) -> ClinicalReport:
    """Ask the chat endpoint for a report; never fails.

    Transport errors and retryable status codes back off and retry up to
    ``endpoint.max_retries`` times; anything still failing (including a
    completion missing a section) returns the supplied template fallback.
    The bearer token is read from the environment and never logged.
    """
    start = time.monotonic()
    attempt = 0
    while True:
        try:
            content = _post_chat(prompt, endpoint)
            sections = _parse_sections(content)
            latency = (time.monotonic() - start) * 1000.0
            return ClinicalReport(**sections, source="llm",
                                  model_id=endpoint.model, latency_ms=latency)
        except _CompletionError as e:
            if e.retryable and attempt < endpoint.max_retries:
                delay = endpoint.backoff_base_s * endpoint.backoff_factor ** attempt
                log.warning("llm request failed (attempt %d/%d): %s; retrying in %.2fs",
                            attempt + 1, endpoint.max_retries + 1, e, delay)
                time.sleep(delay)
                attempt += 1
                continue
            log.warning("llm report generation failed (%s); using template fallback", e)
            return fallback


def report_for(pred: Prediction, meta: GaitMetadata,
               endpoint: LlmEndpointConfig | None = None) -> ClinicalReport:
    """End-to-end report: template when no endpoint is configured."""
    template = render_template_report(pred, meta)
    if endpoint is None:
        return template
    return generate_report(assemble_prompt(pred, meta), endpoint, template)
