"""Run configuration: INI-style config files overridable by CLI flags.

The file format is flat key-value pairs grouped into sections ([grid],
[synth], [data], [model], [train], [eval]). Unknown sections or keys are
rejected so typos fail loudly. Command-line flags always win over file
values; file values win over defaults.
"""

from __future__ import annotations

import configparser
from dataclasses import dataclass, field, fields
from pathlib import Path

from .data.synth import SynthConfig
from .data.trips import GridSpec
from .errors import ConfigError
from .model import GatBlockConfig, ModelConfig
from .training import TrainConfig


@dataclass
class DataConfig:
    theta: int = 1
    seq_len: int = 5
    train_frac: float = 0.64
    val_frac: float = 0.16
    test_frac: float = 0.20

    @property
    def split_fractions(self) -> tuple[float, float, float]:
        return (self.train_frac, self.val_frac, self.test_frac)


@dataclass
class EvalConfig:
    ridge_lambda: float = 1.0
    lasso_lambda: float = 0.1
    per_region: bool = False
    mlp_epochs: int = 100
    mlp_lr: float = 1e-3

    def baseline_kwargs(self) -> dict:
        return {
            "ridge_lambda": self.ridge_lambda,
            "lasso_lambda": self.lasso_lambda,
            "per_region": self.per_region,
            "mlp_epochs": self.mlp_epochs,
            "mlp_lr": self.mlp_lr,
        }


@dataclass
class RunConfig:
    """Union of all knobs a command might need, with the resolved values echoed
    into every artifact the command writes."""

    rows: int = 6
    cols: int = 6
    interval_minutes: int = 60
    days: int = 90
    start_weekday: int = 0
    archetypes: str = ""          # explicit per-region codes (b/r/p), optional
    business_frac: float = 0.30
    park_frac: float = 0.20
    seed: int = 0
    variant: str = "full"
    gat_layers: int = 3
    gat_units: int = 32
    negative_slope: float = 0.2
    lstm_units: int = 512
    data: DataConfig = field(default_factory=DataConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    eval: EvalConfig = field(default_factory=EvalConfig)

    def synth_config(self) -> SynthConfig:
        return SynthConfig(
            n_rows=self.rows,
            n_cols=self.cols,
            n_days=self.days,
            seed=self.seed,
            start_weekday=self.start_weekday,
            archetype_map=tuple(self.archetypes) if self.archetypes else None,
            business_frac=self.business_frac,
            park_frac=self.park_frac,
        )

    def grid(self, n_intervals: int) -> GridSpec:
        return GridSpec(self.rows, self.cols, n_intervals, self.interval_minutes)

    def model_config(self) -> ModelConfig:
        return ModelConfig(
            gat=GatBlockConfig(self.gat_layers, self.gat_units, self.negative_slope),
            lstm_units=self.lstm_units,
        )

    def echo(self) -> dict:
        return {
            "rows": self.rows,
            "cols": self.cols,
            "interval_minutes": self.interval_minutes,
            "days": self.days,
            "start_weekday": self.start_weekday,
            "archetypes": self.archetypes,
            "business_frac": self.business_frac,
            "park_frac": self.park_frac,
            "seed": self.seed,
            "variant": self.variant,
            "model": self.model_config().as_dict(),
            "data": {
                "theta": self.data.theta,
                "seq_len": self.data.seq_len,
                "split_fractions": list(self.data.split_fractions),
            },
            "train": self.train.as_dict(),
            "eval": self.eval.baseline_kwargs(),
        }


_SECTIONS = {
    "grid": {"rows": int, "cols": int, "interval_minutes": int},
    "synth": {
        "days": int,
        "start_weekday": int,
        "archetypes": str,
        "business_frac": float,
        "park_frac": float,
        "seed": int,
    },
    "data": {"theta": int, "seq_len": int, "train_frac": float, "val_frac": float, "test_frac": float},
    "model": {
        "variant": str,
        "gat_layers": int,
        "gat_units": int,
        "negative_slope": float,
        "lstm_units": int,
    },
    "train": {
        "learning_rate": float,
        "weight_decay": float,
        "epochs": int,
        "batch_size": int,
        "seed": int,
        "report_every": int,
    },
    "eval": {
        "ridge_lambda": float,
        "lasso_lambda": float,
        "per_region": bool,
        "mlp_epochs": int,
        "mlp_lr": float,
    },
}

_TOP_LEVEL = {f.name for f in fields(RunConfig)} - {"data", "train", "eval"}


def _parse_bool(text: str) -> bool:
    low = text.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"expected a boolean, got {text!r}")


def load_config(path) -> RunConfig:
    """Parse an INI config file into a RunConfig, validating sections and keys."""
    parser = configparser.ConfigParser()
    text = Path(path).read_text(encoding="utf-8")
    try:
        parser.read_string(text, source=str(path))
    except configparser.Error as e:
        raise ConfigError(f"cannot parse config {path}: {e}") from None

    cfg = RunConfig()
    for section in parser.sections():
        if section not in _SECTIONS:
            raise ConfigError(f"unknown config section [{section}]")
        spec = _SECTIONS[section]
        for key, raw in parser.items(section):
            if key not in spec:
                raise ConfigError(f"unknown key {key!r} in section [{section}]")
            caster = spec[key]
            try:
                value = _parse_bool(raw) if caster is bool else caster(raw)
            except (ValueError, ConfigError) as e:
                raise ConfigError(f"bad value for [{section}] {key}: {e}") from None
            _apply(cfg, section, key, value)
    return cfg


def _apply(cfg: RunConfig, section: str, key: str, value) -> None:
    if section == "data":
        setattr(cfg.data, key, value)
    elif section == "train":
        setattr(cfg.train, key, value)
    elif section == "eval":
        setattr(cfg.eval, key, value)
    elif key in _TOP_LEVEL:
        setattr(cfg, key, value)
    else:
        raise ConfigError(f"unmapped config key {section}.{key}")


def apply_overrides(cfg: RunConfig, **overrides) -> RunConfig:
    """Apply CLI flag overrides (flags win over file values)."""
    for key, value in overrides.items():
        if value is None:
            continue
        if key == "seed":
            cfg.seed = value
            cfg.train.seed = value
        elif key in ("epochs", "batch_size", "learning_rate", "weight_decay"):
            setattr(cfg.train, key, value)
        elif key in ("theta", "seq_len"):
            setattr(cfg.data, key, value)
        elif key in _TOP_LEVEL:
            setattr(cfg, key, value)
        else:
            raise ConfigError(f"unknown override {key!r}")
    return cfg
