"""Trace sentence-level influence across a historical text corpus.

The pipeline: ingest documents into a corpus store, segment and filter
sentences, embed them as unit vectors, build a cosine index, query a focus
book against the whole corpus, classify hits into confidence tiers, and
aggregate the results into timelines, discipline tables, and origin/afterlife
flows. A structural arm scores pre-parsed meaning-representation graphs for
pairs that survive the semantic stage.
"""

__version__ = "0.1.0"

from .errors import LineageError

__all__ = ["LineageError", "__version__"]
