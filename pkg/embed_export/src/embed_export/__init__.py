"""Standalone image-to-QEMB embedding exporter."""

from .encoders import ClipEncoder, HashProjectionEncoder, ModelSpecError, build_encoder
from .export import ExportError, ExportResult, export_embeddings
from .qemb import write_qemb

__all__ = [
    "ClipEncoder",
    "ExportError",
    "ExportResult",
    "HashProjectionEncoder",
    "ModelSpecError",
    "build_encoder",
    "export_embeddings",
    "write_qemb",
]

__version__ = "0.1.0"
