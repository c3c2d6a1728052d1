"""Run configuration: TOML (or a previous ``run.json``) plus CLI overrides."""

import json
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from .exceptions import ConfigError


@dataclass
class DataSection:
    events: str = ""
    social: str = ""
    granularity: str = "month"
    split: list = field(default_factory=lambda: [0.8, 0.1, 0.1])


@dataclass
class ModelSection:
    variant: str = "dream"
    sessions: int = 2
    dim: int = 64
    glove_dim: int = 64
    glove_epochs: int = 30
    glove_learning_rate: float = 0.05
    k_real: int = 10
    k_virtual: int = 10
    max_session_len: int = 20
    head: str = "dot"
    aggregate_projected: bool = False
    literal_linear_gates: bool = False
    per_session_params: bool = False
    predict_from_tie_state: bool = False
    batch_norm: bool = False


@dataclass
class TrainSection:
    learning_rate: float = 1e-4
    batch_size: int = 32
    max_epochs: int = 100
    patience: int = 5
    l2: float = 1e-5
    n_negatives: int = 4
    resample_negatives: bool = True
    clip_norm: float = 5.0
    validation_negatives: int = 1000


@dataclass
class EvalSection:
    split: str = "test"
    repeats: int = 10
    negatives: int = 1000
    k: int = 10


@dataclass
class RunConfig:
    seed: int = 0
    output_dir: str = "runs/default"
    threads: int = 1
    data: DataSection = field(default_factory=DataSection)
    model: ModelSection = field(default_factory=ModelSection)
    train: TrainSection = field(default_factory=TrainSection)
    eval: EvalSection = field(default_factory=EvalSection)

    def to_dict(self):
        return asdict(self)

    def estimator_params(self):
        m, t, d = self.model, self.train, self.data
        sessions = None if m.variant in ("dream-s1", "dream-s3") else m.sessions
        return dict(
            variant=m.variant, n_sessions=sessions, dim=m.dim, glove_dim=m.glove_dim,
            glove_epochs=m.glove_epochs, glove_learning_rate=m.glove_learning_rate,
            k_real=m.k_real, k_virtual=m.k_virtual, granularity=d.granularity,
            split_ratios=tuple(d.split), learning_rate=t.learning_rate, batch_size=t.batch_size,
            max_epochs=t.max_epochs, patience=t.patience, l2=t.l2, n_negatives=t.n_negatives,
            resample_negatives=t.resample_negatives, clip_norm=t.clip_norm,
            max_session_len=m.max_session_len, validation_negatives=t.validation_negatives,
            head=m.head, aggregate_projected=m.aggregate_projected,
            literal_linear_gates=m.literal_linear_gates, per_session_params=m.per_session_params,
            predict_from_tie_state=m.predict_from_tie_state, batch_norm=m.batch_norm,
            random_state=self.seed)


_SECTIONS = {"data": DataSection, "model": ModelSection, "train": TrainSection, "eval": EvalSection}


def _coerce(section, name, value, default):
    kind = type(default)
    if kind is bool:
        if not isinstance(value, bool):
            raise ConfigError(f"{section}.{name} must be true or false")
        return value
    if kind is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{section}.{name} must be an integer")
        return value
    if kind is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{section}.{name} must be a number")
        return float(value)
    if kind is list:
        if not isinstance(value, (list, tuple)):
            raise ConfigError(f"{section}.{name} must be a list")
        return [float(v) for v in value]
    if not isinstance(value, str):
        raise ConfigError(f"{section}.{name} must be a string")
    return value


def _fill(cls, section, values):
    obj = cls()
    known = {f.name for f in fields(cls)}
    for key, value in values.items():
        if key not in known:
            raise ConfigError(f"unknown key {section}.{key}")
        setattr(obj, key, _coerce(section, key, value, getattr(obj, key)))
    return obj


def from_mapping(raw):
    """Validate a nested mapping into a :class:`RunConfig`; unknown keys are errors."""
    cfg = RunConfig()
    for key, value in raw.items():
        if key in _SECTIONS:
            if not isinstance(value, dict):
                raise ConfigError(f"[{key}] must be a table")
            setattr(cfg, key, _fill(_SECTIONS[key], key, value))
        elif key in ("seed", "output_dir", "threads"):
            setattr(cfg, key, _coerce("run", key, value, getattr(cfg, key)))
        else:
            raise ConfigError(f"unknown key {key}")
    return validate(cfg)


def load(path):
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    text = path.read_text()
    try:
        raw = json.loads(text) if path.suffix == ".json" else tomllib.loads(text)
    except (json.JSONDecodeError, tomllib.TOMLDecodeError) as exc:
        raise ConfigError(f"{path}: {exc}") from None
    raw.pop("resolved_seeds", None)
    raw.pop("format", None)
    return from_mapping(raw)


def override(cfg, section, key, value):
    if value is None:
        return cfg
    target = cfg if section is None else getattr(cfg, section)
    setattr(target, key, _coerce(section or "run", key, value, getattr(target, key)))
    return cfg


def validate(cfg):
    from .model import VARIANTS

    if cfg.data.granularity not in ("week", "month"):
        raise ConfigError("data.granularity must be week or month")
    if len(cfg.data.split) != 3 or abs(sum(cfg.data.split) - 1.0) > 1e-9 or min(cfg.data.split) < 0:
        raise ConfigError("data.split must be three non-negative ratios summing to 1")
    if cfg.model.variant not in VARIANTS:
        raise ConfigError(f"model.variant must be one of {', '.join(VARIANTS)}")
    for name in ("sessions", "dim", "glove_dim", "max_session_len"):
        if getattr(cfg.model, name) < 1:
            raise ConfigError(f"model.{name} must be >= 1")
    for name in ("k_real", "k_virtual", "glove_epochs"):
        if getattr(cfg.model, name) < 0:
            raise ConfigError(f"model.{name} must be >= 0")
    if cfg.model.head not in ("dot", "mlp"):
        raise ConfigError("model.head must be dot or mlp")
    if cfg.train.learning_rate < 0:
        raise ConfigError("train.learning_rate must be >= 0")
    for name in ("batch_size", "patience", "max_epochs"):
        if getattr(cfg.train, name) < 1:
            raise ConfigError(f"train.{name} must be >= 1")
    if cfg.eval.split not in ("valid", "test"):
        raise ConfigError("eval.split must be valid or test")
    if cfg.eval.repeats < 1 or cfg.eval.negatives < 1 or cfg.eval.k < 1:
        raise ConfigError("eval.repeats, eval.negatives and eval.k must be >= 1")
    if cfg.threads < 1:
        raise ConfigError("threads must be >= 1")
    return cfg
