"""Corpus ingestion, sentence segmentation, and length filtering.

Documents arrive as JSON-lines (one object per line with the fields of
:class:`DocumentMeta` plus ``text``) and land in an append-only on-disk
store: one metadata record per document plus a derived sentence table.
Nothing is mutated after ingest, so any number of readers may share a store.
"""

from __future__ import annotations

import hashlib
import json
import re
import sys
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Iterator

from .errors import ConfigError, DuplicateDocId, InvalidMetadata

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

DEFAULT_DISCIPLINES = frozenset(
    {
        "natural_history",
        "geology",
        "chemistry",
        "political_social",
        "geography",
        "orientalist",
        "general",
        "medical",
    }
)

# Reserved by the analytics layer for the correspondent pseudo-discipline row.
RESERVED_LABELS = frozenset({"correspondents"})

DEFAULT_YEAR_RANGE = (1500, 1950)

# Forms that end in a period without ending a sentence. Case-sensitive;
# geared to 19th-century print (honorifics, citations, months, measures).
ABBREVIATIONS = frozenset(
    {
        "Mr.", "Mrs.", "Dr.", "St.", "Mt.", "Prof.", "Rev.", "Hon.", "Capt.",
        "Col.", "Gen.", "Lieut.", "Maj.", "Sergt.", "Adm.", "Esq.", "Messrs.",
        "Mme.", "Mlle.", "Jr.", "Sr.", "Bart.", "Bt.",
        "vol.", "vols.", "Vol.", "Vols.", "chap.", "chaps.", "Chap.", "ch.",
        "sec.", "Sec.", "art.", "Art.", "No.", "no.", "nos.", "p.", "pp.",
        "pl.", "Pl.", "fig.", "figs.", "Fig.", "Figs.", "ed.", "eds.",
        "cf.", "Cf.", "viz.", "Viz.", "etc.", "e.g.", "i.e.", "ibid.",
        "loc.", "op.", "cit.", "ff.", "MS.", "MSS.", "ca.",
        "Jan.", "Feb.", "Mar.", "Apr.", "Jun.", "Jul.", "Aug.", "Sept.",
        "Oct.", "Nov.", "Dec.",
        "lat.", "long.", "deg.", "min.", "Lat.", "Long.",
        "Co.", "Inc.", "Ltd.", "Soc.", "Proc.", "Trans.", "Nat.", "Hist.",
        "Phil.", "Mag.", "Roy.", "Acad.", "Inst.",
    }
)

_CLOSERS = "\"')]’”»"
_OPENERS = "\"'([‘“«"
_SINGLE_INITIAL = re.compile(r"^[A-Z]\.$")
# Dotted letter groups: H.M.S., F.R.S., U.S., LL.D., e.g., and the like.
_DOTTED_ACRONYM = re.compile(r"^(?:[A-Za-z]{1,4}\.){2,}$")


@dataclass(frozen=True)
class DocumentMeta:
    doc_id: str
    title: str
    author: str
    pub_year: int
    disciplines: frozenset[str] = frozenset()
    is_correspondent: bool = False
    source: str = ""

    def to_json(self) -> dict:
        return {
            "doc_id": self.doc_id,
            "title": self.title,
            "author": self.author,
            "pub_year": self.pub_year,
            "disciplines": sorted(self.disciplines),
            "is_correspondent": self.is_correspondent,
            "source": self.source,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "DocumentMeta":
        return cls(
            doc_id=obj["doc_id"],
            title=obj.get("title", ""),
            author=obj.get("author", ""),
            pub_year=int(obj["pub_year"]),
            disciplines=frozenset(obj.get("disciplines", [])),
            is_correspondent=bool(obj.get("is_correspondent", False)),
            source=obj.get("source", ""),
        )


@dataclass(frozen=True)
class Document:
    meta: DocumentMeta
    raw_text: str


@dataclass(frozen=True)
class SentenceRecord:
    sentence_id: str
    doc_id: str
    ordinal: int
    text: str
    word_count: int
    # Position in the document's raw segmentation, before filtering
    # renumbered the survivors densely.
    source_ordinal: int = 0

    def to_json(self) -> dict:
        return {
            "sentence_id": self.sentence_id,
            "doc_id": self.doc_id,
            "ordinal": self.ordinal,
            "text": self.text,
            "word_count": self.word_count,
            "source_ordinal": self.source_ordinal,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "SentenceRecord":
        return cls(
            sentence_id=obj["sentence_id"],
            doc_id=obj["doc_id"],
            ordinal=int(obj["ordinal"]),
            text=obj["text"],
            word_count=int(obj["word_count"]),
            source_ordinal=int(obj.get("source_ordinal", obj["ordinal"])),
        )


@dataclass(frozen=True)
class FilterConfig:
    min_doc_chars: int = 1000
    min_sentence_words: int = 45

    def to_json(self) -> dict:
        return {
            "min_doc_chars": self.min_doc_chars,
            "min_sentence_words": self.min_sentence_words,
        }


def sentence_id_for(doc_id: str, ordinal: int) -> str:
    return f"{doc_id}:{ordinal}"


def split_sentence_id(sentence_id: str) -> tuple[str, int]:
    doc_id, _, ordinal = sentence_id.rpartition(":")
    if not doc_id:
        raise ValueError(f"malformed sentence id: {sentence_id!r}")
    return doc_id, int(ordinal)


def _is_abbreviation(text: str, dot_idx: int) -> bool:
    """Is the period at dot_idx part of an abbreviation rather than an end?"""
    w_start = dot_idx
    while w_start > 0 and not text[w_start - 1].isspace():
        w_start -= 1
    token = text[w_start : dot_idx + 1].lstrip(_OPENERS)
    if token in ABBREVIATIONS:
        return True
    # Personal initials ("J. D. Hooker") and dotted acronyms ("H.M.S.").
    if _SINGLE_INITIAL.match(token) or _DOTTED_ACRONYM.match(token):
        return True
    return False


def segment_sentences(raw_text: str) -> list[str]:
    """Split text into sentences.

    A boundary is sentence-final punctuation (``.``, ``!``, ``?``), possibly
    followed by closing quotes or brackets, then whitespace, then an
    optionally quoted uppercase letter. Periods ending a known abbreviation
    or a single-letter initial never close a sentence. Deterministic, pure,
    and lossless: joining the output restores the input minus whitespace.
    """
    text = raw_text
    n = len(text)
    sentences: list[str] = []
    start = 0
    i = 0
    while i < n:
        ch = text[i]
        if ch not in ".!?":
            i += 1
            continue
        j = i
        while j + 1 < n and text[j + 1] in ".!?":
            j += 1
        end = j + 1
        while end < n and text[end] in _CLOSERS:
            end += 1
        k = end
        while k < n and text[k].isspace():
            k += 1
        m = k
        while m < n and text[m] in _OPENERS:
            m += 1
        boundary = (
            k > end  # whitespace is required
            and m < n
            and text[m].isupper()
            and not (ch == "." and i == j and _is_abbreviation(text, i))
        )
        if boundary:
            piece = text[start:end].strip()
            if piece:
                sentences.append(piece)
            start = k
            i = k
        else:
            i = j + 1
    tail = text[start:].strip()
    if tail:
        sentences.append(tail)
    return sentences


def filter_corpus(
    documents: Iterable[Document], config: FilterConfig = FilterConfig()
) -> list[SentenceRecord]:
    """Segment documents and apply the length filters.

    Documents shorter than ``min_doc_chars`` yield nothing; sentences with
    fewer than ``min_sentence_words`` whitespace-delimited tokens are
    dropped. Survivors are renumbered densely per document while
    ``source_ordinal`` retains their position in the raw segmentation.
    """
    records: list[SentenceRecord] = []
    for doc in documents:
        if len(doc.raw_text) < config.min_doc_chars:
            continue
        ordinal = 0
        for source_ordinal, piece in enumerate(segment_sentences(doc.raw_text)):
            word_count = len(piece.split())
            if word_count < config.min_sentence_words:
                continue
            records.append(
                SentenceRecord(
                    sentence_id=sentence_id_for(doc.meta.doc_id, ordinal),
                    doc_id=doc.meta.doc_id,
                    ordinal=ordinal,
                    text=piece,
                    word_count=word_count,
                    source_ordinal=source_ordinal,
                )
            )
            ordinal += 1
    return records


class CorpusStore:
    """Append-only document store with a derived sentence table.

    Layout under the store directory:

    - ``corpus.toml``: discipline registry, year window, filter thresholds
    - ``documents.jsonl``: one metadata+text record per ingested document
    - ``sentences.jsonl``: filtered sentence table (header line then records)

    Ingestion is single-writer; afterwards the store is immutable and safe
    for concurrent readers.
    """

    def __init__(
        self,
        root: Path,
        registry: frozenset[str],
        year_range: tuple[int, int],
        filters: FilterConfig,
    ):
        self.root = Path(root)
        self.registry = registry
        self.year_range = year_range
        self.filters = filters
        self._docs: dict[str, Document] = {}
        self._sentences: list[SentenceRecord] | None = None

    # -- lifecycle ----------------------------------------------------------

    @classmethod
    def create(
        cls,
        root: Path | str,
        registry: Iterable[str] = DEFAULT_DISCIPLINES,
        year_range: tuple[int, int] = DEFAULT_YEAR_RANGE,
        filters: FilterConfig = FilterConfig(),
    ) -> "CorpusStore":
        root = Path(root)
        root.mkdir(parents=True, exist_ok=True)
        if (root / "documents.jsonl").exists():
            raise ConfigError(f"store already exists at {root}")
        store = cls(root, frozenset(registry), year_range, filters)
        store._write_config()
        (root / "documents.jsonl").touch()
        return store

    @classmethod
    def open(cls, root: Path | str) -> "CorpusStore":
        root = Path(root)
        cfg_path = root / "corpus.toml"
        if not cfg_path.exists():
            raise ConfigError(f"no corpus store at {root}")
        with open(cfg_path, "rb") as fh:
            cfg = tomllib.load(fh)
        registry = frozenset(cfg.get("registry", {}).get("disciplines", []))
        validity = cfg.get("validity", {})
        year_range = (
            int(validity.get("min_year", DEFAULT_YEAR_RANGE[0])),
            int(validity.get("max_year", DEFAULT_YEAR_RANGE[1])),
        )
        filt = cfg.get("filters", {})
        filters = FilterConfig(
            min_doc_chars=int(filt.get("min_doc_chars", 1000)),
            min_sentence_words=int(filt.get("min_sentence_words", 45)),
        )
        store = cls(root, registry, year_range, filters)
        store._load_documents()
        return store

    def _write_config(self) -> None:
        lines = ["[registry]"]
        labels = ", ".join(f'"{d}"' for d in sorted(self.registry))
        lines.append(f"disciplines = [{labels}]")
        lines.append("")
        lines.append("[validity]")
        lines.append(f"min_year = {self.year_range[0]}")
        lines.append(f"max_year = {self.year_range[1]}")
        lines.append("")
        lines.append("[filters]")
        lines.append(f"min_doc_chars = {self.filters.min_doc_chars}")
        lines.append(f"min_sentence_words = {self.filters.min_sentence_words}")
        (self.root / "corpus.toml").write_text("\n".join(lines) + "\n", encoding="utf-8")

    def _load_documents(self) -> None:
        path = self.root / "documents.jsonl"
        if not path.exists():
            raise ConfigError(f"missing documents table in {self.root}")
        with open(path, encoding="utf-8") as fh:
            for line in fh:
                line = line.strip()
                if not line:
                    continue
                obj = json.loads(line)
                meta = DocumentMeta.from_json(obj)
                self._docs[meta.doc_id] = Document(meta=meta, raw_text=obj["text"])

    # -- ingestion ------------------------------------------------------------

    def validate_meta(self, meta: DocumentMeta) -> None:
        lo, hi = self.year_range
        if not (lo <= meta.pub_year <= hi):
            raise InvalidMetadata(
                f"doc {meta.doc_id!r}: pub_year {meta.pub_year} outside [{lo}, {hi}]"
            )
        unknown = meta.disciplines - self.registry
        if unknown:
            raise InvalidMetadata(
                f"doc {meta.doc_id!r}: unknown disciplines {sorted(unknown)}"
            )
        if not meta.doc_id:
            raise InvalidMetadata("doc_id must be non-empty")

    def ingest(self, meta: DocumentMeta, raw_text: str) -> Document:
        if meta.doc_id in self._docs:
            raise DuplicateDocId(f"doc {meta.doc_id!r} already ingested")
        self.validate_meta(meta)
        doc = Document(meta=meta, raw_text=raw_text)
        record = meta.to_json()
        record["text"] = raw_text
        with open(self.root / "documents.jsonl", "a", encoding="utf-8") as fh:
            fh.write(json.dumps(record, ensure_ascii=False) + "\n")
        self._docs[meta.doc_id] = doc
        self._sentences = None
        return doc

    def ingest_jsonl(self, path: Path | str) -> int:
        """Ingest every line of a corpus JSON-lines file; returns the count."""
        count = 0
        with open(path, encoding="utf-8") as fh:
            for line in fh:
                line = line.strip()
                if not line:
                    continue
                obj = json.loads(line)
                meta = DocumentMeta.from_json(obj)
                self.ingest(meta, obj["text"])
                count += 1
        return count

    # -- access ---------------------------------------------------------------

    def __contains__(self, doc_id: str) -> bool:
        return doc_id in self._docs

    def __len__(self) -> int:
        return len(self._docs)

    def get(self, doc_id: str) -> Document:
        try:
            return self._docs[doc_id]
        except KeyError:
            raise KeyError(f"no document {doc_id!r} in store") from None

    def documents(self) -> Iterator[Document]:
        return iter(self._docs.values())

    def metas(self) -> dict[str, DocumentMeta]:
        return {doc_id: doc.meta for doc_id, doc in self._docs.items()}

    # -- sentence table ---------------------------------------------------------

    def build_sentence_table(self, config: FilterConfig | None = None) -> list[SentenceRecord]:
        """Filter the corpus and persist the sentence table."""
        config = config or self.filters
        records = filter_corpus(self.documents(), config)
        path = self.root / "sentences.jsonl"
        with open(path, "w", encoding="utf-8") as fh:
            header = {"type": "sentence_table", "filters": config.to_json()}
            fh.write(json.dumps(header, ensure_ascii=False) + "\n")
            for rec in records:
                fh.write(json.dumps(rec.to_json(), ensure_ascii=False) + "\n")
        self._sentences = records
        return records

    def sentences(self) -> list[SentenceRecord]:
        if self._sentences is None:
            path = self.root / "sentences.jsonl"
            if not path.exists():
                raise ConfigError(
                    f"no sentence table in {self.root}; run build_sentence_table first"
                )
            records = []
            with open(path, encoding="utf-8") as fh:
                next(fh)  # header
                for line in fh:
                    line = line.strip()
                    if line:
                        records.append(SentenceRecord.from_json(json.loads(line)))
            self._sentences = records
        return self._sentences

    def sentence_lookup(self) -> dict[str, SentenceRecord]:
        return {rec.sentence_id: rec for rec in self.sentences()}

    def corpus_hash(self) -> str:
        """Stable identity of the filtered sentence table, for index manifests."""
        path = self.root / "sentences.jsonl"
        if not path.exists():
            raise ConfigError(f"no sentence table in {self.root}")
        digest = hashlib.sha256()
        with open(path, "rb") as fh:
            for chunk in iter(lambda: fh.read(1 << 20), b""):
                digest.update(chunk)
        return digest.hexdigest()
