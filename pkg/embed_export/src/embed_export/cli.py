"""Command-line entry point for the exporter."""

import argparse
import sys

from .encoders import ModelSpecError, build_encoder
from .export import ExportError, export_embeddings


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="embed-export",
        description="Embed an image directory with a pretrained encoder and write a QEMB file.",
        formatter_class=argparse.ArgumentDefaultsHelpFormatter,
    )
    parser.add_argument("--images", required=True, help="directory of images (lexicographic order)")
    parser.add_argument(
        "--model",
        default="clip:openai/clip-vit-large-patch14",
        help="encoder spec: clip:<model-id> or hash:<dim>",
    )
    parser.add_argument("--out", required=True, help="QEMB output path")
    parser.add_argument("--manifest", default=None, help="manifest CSV path (default: <out>.manifest.csv)")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    manifest = args.manifest or f"{args.out}.manifest.csv"
    try:
        encoder = build_encoder(args.model)
        result = export_embeddings(args.images, encoder, args.out, manifest)
    except (ModelSpecError, ExportError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    except OSError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    print(f"wrote {args.out}: {len(result.exported)} rows of width {result.embed_dim}")
    print(f"wrote {manifest}")
    if result.skipped:
        print(f"skipped {len(result.skipped)} undecodable file(s), see manifest")
    return 0


if __name__ == "__main__":
    sys.exit(main())
