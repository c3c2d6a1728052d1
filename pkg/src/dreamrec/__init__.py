"""Session-based social recommendation with graph completion and temporal fusion."""

from .data import Dataset, ingest, segment_sessions, split
from .estimator import DreamRecommender
from .exceptions import DreamError

__version__ = "0.1.0"

__all__ = ["Dataset", "DreamError", "DreamRecommender", "ingest", "segment_sessions", "split"]
