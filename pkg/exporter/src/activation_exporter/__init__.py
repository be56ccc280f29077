"""Bridge from pretrained contextual encoders to the probing toolkit.

Runs a selected model over JSONL sentences and writes per-layer
activations in the binary EPA1 format together with a parallel token
file for span projection.
"""

from .export import ExportJob, export, export_lexical
from .models import get_model

__all__ = ["ExportJob", "export", "export_lexical", "get_model"]

__version__ = "0.1.0"
