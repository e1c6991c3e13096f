"""Flat ``key = value`` run configuration with per-key provenance.

Precedence is flag > file > default.  Every key is parsed and the derived
DFM / training / dataset configs are built (and therefore validated) before
any command does work.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

from .cam_loc import DEFAULT_THETA_SEG
from .dfm import DfmConfig
from .synth_data import DatasetSpec
from .toy_net import SLOTS, TrainConfig


class ConfigError(ValueError):
    pass


def parse_bool(s: str) -> bool:
    v = str(s).strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"expected a boolean, got {s!r}")


def parse_slots(s: str) -> tuple[str, ...]:
    s = str(s).strip()
    if s.lower() in ("", "none", "-"):
        return ()
    slots = tuple(p.strip().upper() for p in s.split(",") if p.strip())
    bad = [p for p in slots if p not in SLOTS]
    if bad:
        raise ValueError(f"unknown DFM slots {bad}")
    return slots


def format_value(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, tuple):
        return ",".join(value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


_dfm = DfmConfig()
_train = TrainConfig()
_data = DatasetSpec()

# key -> (default, parser)
KEYS: dict[str, tuple] = {
    "alpha": (_dfm.alpha, float),
    "beta": (_dfm.beta, float),
    "omega": (_dfm.omega, float),
    "delta": (_dfm.delta, float),
    "gamma": (_dfm.gamma, float),
    "tau": (_dfm.tau, float),
    "apply_mode": (_dfm.apply_mode, str),
    "active_in_eval": (_dfm.active_in_eval, parse_bool),
    "branches": (_dfm.branches, str),
    "fusion": (_dfm.fusion, str),
    "focus": (_dfm.focus, parse_bool),
    "lr": (_train.lr, float),
    "momentum": (_train.momentum, float),
    "epochs": (_train.epochs, int),
    "batch_size": (_train.batch_size, int),
    "seed": (_train.seed, int),
    "dfm_slots": (_train.dfm_slots, parse_slots),
    "num_classes": (_data.num_classes, int),
    "train_per_class": (_data.train_per_class, int),
    "test_per_class": (_data.test_per_class, int),
    "image_size": (_data.image_size, int),
    "clutter_max": (_data.clutter_max, int),
    "body_texture": (_data.body_texture, float),
    "theta_seg": (DEFAULT_THETA_SEG, float),
    "data": ("", str),
    "out": ("", str),
    "checkpoint": ("", str),
}

DFM_KEYS = ("alpha", "beta", "omega", "delta", "gamma", "tau", "apply_mode", "active_in_eval",
            "branches", "fusion", "focus")
TRAIN_KEYS = ("lr", "momentum", "epochs", "batch_size", "seed", "dfm_slots")


def parse_kv_text(text: str, source: str = "<config>") -> dict[str, str]:
    """Parse ``key = value`` lines; ``#`` starts a comment."""
    out = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value'")
        key, value = (p.strip() for p in line.split("=", 1))
        if not key:
            raise ConfigError(f"{source}:{lineno}: empty key")
        out[key] = value
    return out


def format_kv_text(values: dict) -> str:
    return "".join(f"{k} = {format_value(v)}\n" for k, v in values.items())


def dfm_from_values(values: dict) -> DfmConfig:
    return DfmConfig(**{k: values[k] for k in DFM_KEYS})


def train_from_values(values: dict) -> TrainConfig:
    kw = {k: values[k] for k in TRAIN_KEYS}
    return TrainConfig(dfm=dfm_from_values(values), **kw)


def train_config_values(cfg: TrainConfig) -> dict:
    values = {k: getattr(cfg, k) for k in TRAIN_KEYS}
    values.update({k: getattr(cfg.dfm, k) for k in DFM_KEYS})
    return values


@dataclass
class RunConfig:
    values: dict = field(default_factory=dict)
    provenance: dict = field(default_factory=dict)

    def __getitem__(self, key):
        return self.values[key]

    @property
    def dfm(self) -> DfmConfig:
        return dfm_from_values(self.values)

    @property
    def train(self) -> TrainConfig:
        return train_from_values(self.values)

    def dataset_spec(self) -> DatasetSpec:
        v = self.values
        return DatasetSpec(num_classes=v["num_classes"], train_per_class=v["train_per_class"],
                           test_per_class=v["test_per_class"], image_size=v["image_size"],
                           clutter_max=v["clutter_max"], body_texture=v["body_texture"],
                           markers=DatasetSpec().markers[:v["num_classes"]], seed=v["seed"])

    @classmethod
    def build(cls, file_values: dict | None = None, flag_values: dict | None = None) -> "RunConfig":
        values, provenance = {}, {}
        for key, (default, _) in KEYS.items():
            values[key], provenance[key] = default, "default"
        for source, layer in (("file", file_values or {}), ("flag", flag_values or {})):
            for key, raw in layer.items():
                if raw is None:
                    continue
                if key not in KEYS:
                    raise ConfigError(f"unknown config key {key!r} (from {source})")
                parser = KEYS[key][1]
                try:
                    values[key] = raw if not isinstance(raw, str) else parser(raw)
                except ValueError as exc:
                    raise ConfigError(f"{key}: {exc}") from exc
                provenance[key] = source
        rc = cls(values, provenance)
        rc.validate()
        return rc

    def validate(self) -> None:
        try:
            self.train  # builds DfmConfig too
            self.dataset_spec()
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc)) from exc
        theta = self.values["theta_seg"]
        if not 0.0 < theta < 1.0:
            raise ConfigError(f"theta_seg must lie in (0, 1), got {theta}")


def load_config_file(path) -> dict[str, str]:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from exc
    return parse_kv_text(text, str(path))
