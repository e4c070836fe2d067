"""Export per-token contextual representations to REP1 files."""
from .export import ExportJob, export_random_reps, export_reps, read_corpus_tokens

__version__ = "0.1.0"

__all__ = ["ExportJob", "export_reps", "export_random_reps", "read_corpus_tokens"]
