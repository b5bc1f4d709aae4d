"""CLI: export-features and convert-annotations."""
from __future__ import annotations

import argparse
import sys

from .annotations import AnnotationError, convert_annotations
from .backbones import BackboneError
from .export import ExportError, export_features


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(prog="gaitfuse-export")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("export-features",
                       help="tap backbone stage-4/5 maps over an aligned sequence")
    p.add_argument("--weights", required=True,
                   help="model spec: YOLO weights path, torchscript:<file>, or stub:<seed>")
    p.add_argument("--frames", required=True, help="aligned sequence directory")
    p.add_argument("--out", required=True)
    p.add_argument("--deterministic", action="store_true")
    p.add_argument("--input-size", type=int, default=640)

    p = sub.add_parser("convert-annotations",
                       help="rewrite annotations.json files as meta.json")
    p.add_argument("--labels", required=True)

    args = parser.parse_args(argv)
    try:
        if args.command == "export-features":
            manifest = export_features(args.frames, args.weights, args.out,
                                       deterministic=args.deterministic,
                                       input_size=args.input_size)
            print(f"exported {manifest.frame_count} frames x {len(manifest.shapes)} "
                  f"feature maps from {manifest.model_id} to {args.out}")
        else:
            written = convert_annotations(args.labels)
            print(f"wrote {len(written)} meta.json files")
        return 0
    except (ExportError, BackboneError, AnnotationError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
