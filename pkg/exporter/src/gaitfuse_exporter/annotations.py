"""Annotation conversion: detector labels + symptom tags -> gait metadata JSON.

Input is one ``annotations.json`` per sequence directory:
{"class": "PD_like" | "normal", "subject": "...", "tags": ["reduced-arm-swing", ...]}
Output is the fusion engine's meta.json schema (snake_case keys).
"""
from __future__ import annotations

import json
from pathlib import Path


class AnnotationError(ValueError):
    pass


TAG_MAP = {
    "reduced-arm-swing": "reduced_arm_swing",
    "reduced_arm_swing": "reduced_arm_swing",
    "short-steps": "short_stride",
    "short-stride": "short_stride",
    "short_stride": "short_stride",
    "forward-lean": "forward_lean",
    "forward-bending": "forward_lean",
    "forward_lean": "forward_lean",
    "turning-hesitation": "turning_hesitation",
    "turning_hesitation": "turning_hesitation",
    "freezing": "freezing",
}

KNOWN_CLASSES = ("PD_like", "normal")


def convert_annotation(doc: dict, source: str = "<annotation>") -> dict:
    if not isinstance(doc, dict):
        raise AnnotationError(f"{source}: annotation must be an object")
    cls = doc.get("class")
    if cls not in KNOWN_CLASSES:
        raise AnnotationError(
            f"{source}: unknown class {cls!r}; expected one of {list(KNOWN_CLASSES)}"
        )
    tags = doc.get("tags", [])
    unknown = [t for t in tags if t not in TAG_MAP]
    if unknown:
        raise AnnotationError(f"{source}: unknown symptom tags {unknown}")
    symptoms = sorted({TAG_MAP[t] for t in tags}) or ["none_reported"]
    capture = doc.get("capture", {})
    return {
        "subject_id": str(doc.get("subject", "unknown")),
        "symptoms": symptoms,
        "capture": {
            "lighting": capture.get("lighting", "normal"),
            "occlusion": capture.get("occlusion", "none"),
        },
        "frame_index": int(doc.get("frame_index", 0)),
    }


def convert_annotations(label_dir: str | Path) -> list[Path]:
    """Convert every <seq>/annotations.json under label_dir to <seq>/meta.json."""
    label_dir = Path(label_dir)
    sources = sorted(label_dir.rglob("annotations.json"))
    if not sources:
        raise AnnotationError(f"{label_dir}: no annotations.json files found")
    written = []
    errors = []
    for src in sources:
        try:
            doc = json.loads(src.read_text())
            meta = convert_annotation(doc, str(src))
        except (json.JSONDecodeError, AnnotationError) as e:
            errors.append(str(e))
            continue
        out = src.parent / "meta.json"
        out.write_text(json.dumps(meta, indent=2))
        written.append(out)
    if errors:
        raise AnnotationError("; ".join(errors))
    return written
