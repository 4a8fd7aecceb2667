"""Image-encoder backends.

Two backends share one interface (``embed_dim`` plus ``encode_batch`` on
PIL images, returning unit-norm float64 rows):

* ``clip:<model-id>`` runs a pretrained vision-language checkpoint through
  transformers (the intended production path; requires the optional torch
  and transformers dependencies plus downloaded weights).
* ``hash:<dim>`` is a deterministic lightweight stand-in: images are
  resized to the same 224x224 input resolution and pushed through a fixed
  seeded random projection. It needs no model assets, so tests and offline
  pipelines can exercise the full export path; it is NOT a semantic
  encoder.
"""

from __future__ import annotations

import hashlib

import numpy as np
from PIL import Image

INPUT_RESOLUTION = 224


class ModelSpecError(ValueError):
    """The --model string does not name a usable backend."""


class HashProjectionEncoder:
    """Seeded random projection of resized pixel values."""

    def __init__(self, dim: int, spec: str):
        if dim < 1:
            raise ModelSpecError(f"projection width must be positive, got {dim}")
        self.embed_dim = dim
        self.spec = spec
        digest = hashlib.sha256(spec.encode("utf-8")).digest()
        seed = int.from_bytes(digest[:8], "little")
        rng = np.random.Generator(np.random.Philox(key=np.array([seed, 0], dtype=np.uint64)))
        n_features = INPUT_RESOLUTION * INPUT_RESOLUTION * 3
        # projection rows drawn lazily would reorder draws; materialize once
        self._projection = rng.standard_normal((dim, n_features)) / np.sqrt(n_features)

    def encode_batch(self, images: list[Image.Image]) -> np.ndarray:
        rows = np.empty((len(images), self.embed_dim))
        for i, image in enumerate(images):
            resized = image.convert("RGB").resize(
                (INPUT_RESOLUTION, INPUT_RESOLUTION), Image.Resampling.BILINEAR
            )
            pixels = np.asarray(resized, dtype=np.float64).ravel() / 255.0
            rows[i] = self._projection @ (pixels - pixels.mean())
        norms = np.linalg.norm(rows, axis=1, keepdims=True)
        # constant images project to ~0; give them a stable fallback direction
        degenerate = norms[:, 0] < 1e-12
        if np.any(degenerate):
            rows[degenerate] = 0.0
            rows[degenerate, 0] = 1.0
            norms = np.linalg.norm(rows, axis=1, keepdims=True)
        return rows / norms


class ClipEncoder:
    """Pretrained vision-language image tower via transformers."""

    def __init__(self, model_id: str):
        try:
            import torch
            from transformers import CLIPModel, CLIPProcessor
        except ImportError as e:
            raise ModelSpecError(
                f"the clip backend needs the optional torch/transformers dependencies: {e}"
            ) from e
        self._torch = torch
        self.model = CLIPModel.from_pretrained(model_id)
        self.model.eval()
        self.processor = CLIPProcessor.from_pretrained(model_id)
        self.embed_dim = self.model.config.projection_dim
        self.spec = model_id

    def encode_batch(self, images: list[Image.Image]) -> np.ndarray:
        torch = self._torch
        inputs = self.processor(images=[im.convert("RGB") for im in images], return_tensors="pt")
        with torch.no_grad():
            features = self.model.get_image_features(**inputs)
        rows = features.double().cpu().numpy()
        return rows / np.linalg.norm(rows, axis=1, keepdims=True)


def build_encoder(spec: str):
    """Parse a --model string: ``clip:<model-id>`` or ``hash:<dim>``."""
    kind, sep, arg = spec.partition(":")
    if not sep:
        raise ModelSpecError(f"model spec {spec!r} must look like clip:<model-id> or hash:<dim>")
    if kind == "clip":
        return ClipEncoder(arg)
    if kind == "hash":
        try:
            dim = int(arg)
        except ValueError as e:
            raise ModelSpecError(f"hash backend needs an integer width, got {arg!r}") from e
        return HashProjectionEncoder(dim, spec)
    raise ModelSpecError(f"unknown encoder backend {kind!r}")
