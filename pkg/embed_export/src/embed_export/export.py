"""Directory-to-QEMB export.

Images are processed in lexicographic filename order so repeated runs on
the same directory produce byte-identical output. Undecodable files are
skipped with a warning and annotated in the manifest; an export that
yields no rows is an error.
"""

from __future__ import annotations

import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image, UnidentifiedImageError

from .qemb import write_qemb

IMAGE_SUFFIXES = {".png", ".jpg", ".jpeg", ".bmp", ".gif", ".tiff", ".webp"}
BATCH_SIZE = 16


class ExportError(RuntimeError):
    pass


@dataclass
class ExportResult:
    exported: list[str]
    skipped: list[tuple[str, str]]  # (filename, reason)
    embed_dim: int


def _candidate_files(image_dir: Path) -> list[Path]:
    return sorted(
        (p for p in image_dir.iterdir() if p.is_file() and p.suffix.lower() in IMAGE_SUFFIXES),
        key=lambda p: p.name,
    )


def export_embeddings(image_dir, encoder, out_path, manifest_path) -> ExportResult:
    image_dir = Path(image_dir)
    if not image_dir.is_dir():
        raise ExportError(f"{image_dir} is not a directory")
    files = _candidate_files(image_dir)
    exported: list[str] = []
    skipped: list[tuple[str, str]] = []
    images: list[Image.Image] = []
    for path in files:
        try:
            image = Image.open(path)
            image.load()
        except (UnidentifiedImageError, OSError) as e:
            reason = str(e).splitlines()[0]
            print(f"warning: skipping {path.name}: {reason}", file=sys.stderr)
            skipped.append((path.name, reason))
            continue
        images.append(image)
        exported.append(path.name)
    if not images:
        raise ExportError(f"no decodable images in {image_dir}")

    chunks = [
        encoder.encode_batch(images[i : i + BATCH_SIZE]) for i in range(0, len(images), BATCH_SIZE)
    ]
    rows = np.concatenate(chunks, axis=0)
    write_qemb(rows.astype("<f4"), out_path)

    with open(manifest_path, "w") as f:
        f.write("index,filename\n")
        for i, name in enumerate(exported):
            f.write(f"{i},{name}\n")
        for name, reason in skipped:
            f.write(f"skipped,{name}  # {reason}\n")
    return ExportResult(exported=exported, skipped=skipped, embed_dim=rows.shape[1])
