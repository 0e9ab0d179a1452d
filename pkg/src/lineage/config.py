"""Application configuration: TOML file, environment, then flag overrides.

Precedence, lowest to highest: built-in defaults, the config file, the
LINEAGE_* environment variables, explicit overrides (CLI flags). The same
keys appear at every level, so a flag can always pin down a value no matter
what the file says.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, fields, replace
from pathlib import Path

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from .corpus import FilterConfig
from .errors import ConfigError
from .embedding import EmbeddingProviderConfig
from .matching import MatchConfig

ENV_PORT = "LINEAGE_PORT"
ENV_ENDPOINT = "LINEAGE_ENDPOINT"


@dataclass(frozen=True)
class AppConfig:
    corpus: Path = Path("corpus.store")
    index: Path = Path("corpus.idx")
    vectors: Path | None = None  # defaults to "<index>.vectors.npz"

    provider: str = "hash_test"
    endpoint: str | None = None
    dimension: int = 384
    batch_size: int = 64

    min_doc_chars: int = 1000
    min_sentence_words: int = 45

    floor: float = 0.85
    max_hits_per_sentence: int = 1000
    min_matching_sentences: int = 6

    weights: tuple[float, float] = (0.5, 0.5)
    restarts: int = 16
    seed: int = 0

    host: str = "127.0.0.1"
    port: int = 8123
    ui_dir: Path | None = None
    match_exports: tuple[Path, ...] = ()

    def __post_init__(self):
        if self.dimension < 1:
            raise ConfigError(f"dimension must be positive, got {self.dimension}")
        if self.batch_size < 1:
            raise ConfigError(f"batch_size must be positive, got {self.batch_size}")
        if not 1 <= self.port <= 65535:
            raise ConfigError(f"port must be in 1..65535, got {self.port}")
        if self.min_matching_sentences < 1:
            raise ConfigError("min_matching_sentences must be at least 1")
        if len(self.weights) != 2:
            raise ConfigError(f"weights must be a pair, got {self.weights!r}")

    @property
    def vectors_path(self) -> Path:
        if self.vectors is not None:
            return self.vectors
        return self.index.with_name(self.index.name + ".vectors.npz")

    def provider_config(self) -> EmbeddingProviderConfig:
        return EmbeddingProviderConfig(
            provider_kind=self.provider,
            endpoint=self.endpoint,
            dimension=self.dimension,
            batch_size=self.batch_size,
        )

    def match_config(self) -> MatchConfig:
        return MatchConfig(
            floor=self.floor, max_hits_per_sentence=self.max_hits_per_sentence
        )

    def filter_config(self) -> FilterConfig:
        return FilterConfig(
            min_doc_chars=self.min_doc_chars,
            min_sentence_words=self.min_sentence_words,
        )


# Config-file section/key -> AppConfig field. Flat fields sit at the top
# level; everything else under its stage's section.
_SCHEMA = {
    (None, "corpus"): ("corpus", Path),
    (None, "index"): ("index", Path),
    (None, "vectors"): ("vectors", Path),
    ("provider", "kind"): ("provider", str),
    ("provider", "endpoint"): ("endpoint", str),
    ("provider", "dimension"): ("dimension", int),
    ("provider", "batch_size"): ("batch_size", int),
    ("filters", "min_doc_chars"): ("min_doc_chars", int),
    ("filters", "min_sentence_words"): ("min_sentence_words", int),
    ("match", "floor"): ("floor", float),
    ("match", "max_hits_per_sentence"): ("max_hits_per_sentence", int),
    ("match", "min_matching_sentences"): ("min_matching_sentences", int),
    ("ensemble", "weights"): ("weights", tuple),
    ("ensemble", "restarts"): ("restarts", int),
    ("ensemble", "seed"): ("seed", int),
    ("service", "host"): ("host", str),
    ("service", "port"): ("port", int),
    ("service", "ui_dir"): ("ui_dir", Path),
    ("service", "match_exports"): ("match_exports", tuple),
}

_SECTIONS = {section for section, _ in _SCHEMA if section is not None}


def _coerce(field_name: str, kind, raw):
    try:
        if kind is Path:
            return Path(raw)
        if kind is tuple:
            if field_name == "match_exports":
                return tuple(Path(p) for p in raw)
            return tuple(float(w) for w in raw)
        if kind is float:
            return float(raw)
        if kind is int:
            if isinstance(raw, bool) or not isinstance(raw, int):
                raise ConfigError(f"{field_name} must be an integer, got {raw!r}")
            return raw
        return str(raw)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad value for {field_name}: {raw!r}") from exc


def _read_file(path: Path) -> dict:
    try:
        with open(path, "rb") as handle:
            data = tomllib.load(handle)
    except FileNotFoundError:
        raise ConfigError(f"config file {path} does not exist") from None
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"config file {path} is not valid TOML: {exc}") from None

    values = {}
    for key, raw in data.items():
        if isinstance(raw, dict):
            if key not in _SECTIONS:
                raise ConfigError(f"unknown config section [{key}]")
            for sub_key, sub_raw in raw.items():
                target = _SCHEMA.get((key, sub_key))
                if target is None:
                    raise ConfigError(f"unknown config key {key}.{sub_key}")
                values[target[0]] = _coerce(target[0], target[1], sub_raw)
        else:
            target = _SCHEMA.get((None, key))
            if target is None:
                raise ConfigError(f"unknown config key {key}")
            values[target[0]] = _coerce(target[0], target[1], raw)
    return values


def load_config(
    path: Path | str | None = None,
    env: dict | None = None,
    **overrides,
) -> AppConfig:
    """Assemble an AppConfig from file, environment, and explicit overrides.

    Override keys must be AppConfig field names; None values are ignored so
    unset CLI flags fall through to the lower layers.
    """
    env = os.environ if env is None else env
    values: dict = {}
    if path is not None:
        values.update(_read_file(Path(path)))

    if ENV_ENDPOINT in env:
        values["endpoint"] = env[ENV_ENDPOINT]
    if ENV_PORT in env:
        try:
            values["port"] = int(env[ENV_PORT])
        except ValueError:
            raise ConfigError(f"{ENV_PORT} must be an integer, got {env[ENV_PORT]!r}") from None

    known = {f.name for f in fields(AppConfig)}
    for key, value in overrides.items():
        if key not in known:
            raise ConfigError(f"unknown config override {key!r}")
        if value is None:
            continue
        values[key] = value

    for key in ("corpus", "index", "vectors", "ui_dir"):
        if values.get(key) is not None:
            values[key] = Path(values[key])
    if "match_exports" in values:
        values["match_exports"] = tuple(Path(p) for p in values["match_exports"])
    if "weights" in values:
        weights = values["weights"]
        if isinstance(weights, str):
            weights = weights.split(",")
        try:
            values["weights"] = tuple(float(w) for w in weights)
        except (TypeError, ValueError):
            raise ConfigError(f"weights must be numbers, got {weights!r}") from None

    return AppConfig(**values)


def override(config: AppConfig, **changes) -> AppConfig:
    """Copy of config with non-None changes applied."""
    return replace(config, **{k: v for k, v in changes.items() if v is not None})
