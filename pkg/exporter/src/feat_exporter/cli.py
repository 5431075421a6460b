"""Command-line surface: `featx export` and `featx models`."""

from __future__ import annotations

import argparse
import sys

from .errors import ExportError
from .export import ExportJob, export_features
from .models import list_models


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="featx",
        description="Export penultimate-layer features from pretrained "
        "image classifiers to FMX1 or CSV feature files.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    export = sub.add_parser("export", help="run one model over an image directory")
    export.add_argument("--model", required=True, help="backbone name; see `featx models`")
    export.add_argument("--images", required=True, help="directory of input images")
    export.add_argument("--out", required=True, help="output file (.csv for CSV, else FMX1)")
    export.add_argument(
        "--weights",
        default="imagenet",
        choices=("imagenet", "none"),
        help="pretrained weights, or 'none' for random initialization",
    )
    export.add_argument("--batch-size", type=int, default=32)

    sub.add_parser("models", help="list supported models with input side and feature width")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "models":
            print(f"{'name':<14}{'input side':>12}{'features':>10}")
            for info in list_models():
                print(f"{info.name:<14}{info.input_side:>12}{info.feature_dim:>10}")
            return 0
        job = ExportJob(
            model_name=args.model,
            image_dir=args.images,
            out_path=args.out,
            weights=None if args.weights == "none" else args.weights,
            batch_size=args.batch_size,
        )
        ids, matrix = export_features(job)
        print(f"wrote {len(ids)} x {matrix.shape[1]} features to {args.out}")
        return 0
    except ExportError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    raise SystemExit(main())
