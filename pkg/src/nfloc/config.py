"""Experiment configuration: TOML in, validated dataclasses out.

Unknown keys anywhere in the file are hard errors (silent typos in sweep
configs are worse than loud ones); error messages carry a best-effort line
number found by scanning the raw text.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

try:
    import tomllib
except ModuleNotFoundError:                      # 3.10: stdlib tomllib landed in 3.11
    import tomli as tomllib

from .array_model import ArrayConfig, EmitterPosition
from .localize import METHODS


class ConfigError(Exception):
    """Malformed or inconsistent experiment configuration."""


def _find_line(text: str, key: str) -> str:
    """Best-effort '<path>:<n>' style suffix for error messages."""
    for n, line in enumerate(text.splitlines(), start=1):
        s = line.strip()
        if s.startswith(f"{key}") and (s[len(key):].lstrip()[:1] in ("=", "")):
            return f" (line {n})"
        if s.startswith(f"[{key}]") or s.startswith(f"[{key}."):
            return f" (line {n})"
    return ""


def _check_keys(table: dict, allowed: set[str], where: str, text: str) -> None:
    for key in table:
        if key not in allowed:
            raise ConfigError(
                f"unknown key {key!r} in {where}{_find_line(text, key)}; "
                f"allowed: {sorted(allowed)}")


def _require(table: dict, key: str, where: str) -> object:
    if key not in table:
        raise ConfigError(f"missing required key {key!r} in {where}")
    return table[key]


@dataclass(frozen=True)
class DatasetSpec:
    theta_step_deg: float = 1.0
    theta_min_deg: float = -90.0
    theta_max_deg: float = 90.0
    snr_db: tuple[float, ...] = (0.0, 5.0, 10.0, 15.0, 20.0)
    trials_per_point: int = 20
    snapshots: int = 100

    def __post_init__(self):
        if self.theta_step_deg <= 0:
            raise ConfigError("dataset.theta_step_deg must be > 0")
        if not -90.0 <= self.theta_min_deg <= self.theta_max_deg <= 90.0:
            raise ConfigError("dataset theta bounds must satisfy -90 <= min <= max <= 90")
        if self.trials_per_point < 1 or self.snapshots < 1:
            raise ConfigError("dataset.trials_per_point and snapshots must be >= 1")


@dataclass(frozen=True)
class TrainSpec:
    epochs: int = 100
    batch_size: int = 64
    learning_rate: float = 1e-3
    joint: bool = False
    dataset: str | None = None    # pre-generated corpus; generated on the fly if unset

    def __post_init__(self):
        if self.epochs < 1:
            raise ConfigError("train.epochs must be >= 1")
        if self.batch_size < 1:
            raise ConfigError("train.batch_size must be >= 1")
        if self.learning_rate <= 0:
            raise ConfigError("train.learning_rate must be > 0")


@dataclass(frozen=True)
class ExperimentConfig:
    array: ArrayConfig
    emitter: EmitterPosition
    snr_db: tuple[float, ...]
    snapshots: tuple[int, ...]
    trials: int
    methods: tuple[str, ...]
    seed: int
    output: str | None = None
    regnet_model: str | None = None
    crlb_l_values: tuple[int, ...] | None = None
    dataset: DatasetSpec = field(default_factory=DatasetSpec)
    train: TrainSpec = field(default_factory=TrainSpec)


def _as_number(v, where: str) -> float:
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ConfigError(f"{where} must be a number, got {v!r}")
    return float(v)


def _as_int(v, where: str) -> int:
    if isinstance(v, bool) or not isinstance(v, int):
        raise ConfigError(f"{where} must be an integer, got {v!r}")
    return v


def parse_config_text(text: str, source: str = "<config>") -> ExperimentConfig:
    try:
        raw = tomllib.loads(text)
    except tomllib.TOMLDecodeError as e:
        raise ConfigError(f"{source}: {e}") from e

    _check_keys(raw, {"seed", "methods", "output", "regnet_model",
                      "array", "emitter", "sweep", "crlb_sweep",
                      "dataset", "train"}, source, text)

    arr = _require(raw, "array", source)
    _check_keys(arr, {"m", "ms", "l", "carrier_freq_ghz"}, "[array]", text)
    try:
        array = ArrayConfig.from_counts(
            M=_as_int(_require(arr, "m", "[array]"), "array.m"),
            Ms=_as_int(_require(arr, "ms", "[array]"), "array.ms"),
            L=_as_int(_require(arr, "l", "[array]"), "array.l"),
            carrier_freq=_as_number(_require(arr, "carrier_freq_ghz", "[array]"),
                                    "array.carrier_freq_ghz") * 1e9)
    except ValueError as e:
        raise ConfigError(f"[array]{_find_line(text, 'array')}: {e}") from e

    emi = _require(raw, "emitter", source)
    _check_keys(emi, {"theta_deg", "range_m"}, "[emitter]", text)
    try:
        emitter = EmitterPosition(
            theta=math.radians(_as_number(_require(emi, "theta_deg", "[emitter]"),
                                          "emitter.theta_deg")),
            range_m=_as_number(_require(emi, "range_m", "[emitter]"), "emitter.range_m"))
    except ValueError as e:
        raise ConfigError(f"[emitter]{_find_line(text, 'emitter')}: {e}") from e

    sw = _require(raw, "sweep", source)
    _check_keys(sw, {"snr_db", "snapshots", "trials"}, "[sweep]", text)
    snr_raw = _require(sw, "snr_db", "[sweep]")
    if not isinstance(snr_raw, list) or not snr_raw:
        raise ConfigError("sweep.snr_db must be a non-empty list")
    snr_db = tuple(_as_number(v, "sweep.snr_db entry") for v in snr_raw)
    snaps_raw = _require(sw, "snapshots", "[sweep]")
    if not isinstance(snaps_raw, list) or not snaps_raw:
        raise ConfigError("sweep.snapshots must be a non-empty list")
    snapshots = tuple(_as_int(v, "sweep.snapshots entry") for v in snaps_raw)
    if any(t < 1 for t in snapshots):
        raise ConfigError("sweep.snapshots entries must be >= 1")
    trials = _as_int(_require(sw, "trials", "[sweep]"), "sweep.trials")
    if trials < 1:
        raise ConfigError("sweep.trials must be >= 1")

    methods_raw = _require(raw, "methods", source)
    if not isinstance(methods_raw, list) or not methods_raw:
        raise ConfigError(f"methods must be a non-empty list{_find_line(text, 'methods')}")
    for m in methods_raw:
        if m not in METHODS:
            raise ConfigError(
                f"unknown method {m!r}{_find_line(text, 'methods')}; "
                f"allowed: {list(METHODS)}")
    seed = _as_int(_require(raw, "seed", source), "seed")
    if seed < 0:
        raise ConfigError("seed must be >= 0")

    output = raw.get("output")
    if output is not None and not isinstance(output, str):
        raise ConfigError("output must be a string path")
    regnet_model = raw.get("regnet_model")
    if regnet_model is not None and not isinstance(regnet_model, str):
        raise ConfigError("regnet_model must be a string path")

    crlb_l_values = None
    if "crlb_sweep" in raw:
        cs = raw["crlb_sweep"]
        _check_keys(cs, {"l_values"}, "[crlb_sweep]", text)
        lv = _require(cs, "l_values", "[crlb_sweep]")
        if not isinstance(lv, list) or not lv:
            raise ConfigError("crlb_sweep.l_values must be a non-empty list")
        crlb_l_values = tuple(_as_int(v, "crlb_sweep.l_values entry") for v in lv)
        for L in crlb_l_values:
            if L < 2 or array.K % L != 0:
                raise ConfigError(
                    f"crlb_sweep.l_values: L={L} does not divide K={array.K} "
                    f"into groups of >= 2{_find_line(text, 'l_values')}")

    dataset = DatasetSpec()
    if "dataset" in raw:
        ds = raw["dataset"]
        _check_keys(ds, {"theta_step_deg", "theta_min_deg", "theta_max_deg",
                         "snr_db", "trials_per_point", "snapshots"}, "[dataset]", text)
        kw = {}
        if "theta_step_deg" in ds:
            kw["theta_step_deg"] = _as_number(ds["theta_step_deg"], "dataset.theta_step_deg")
        if "theta_min_deg" in ds:
            kw["theta_min_deg"] = _as_number(ds["theta_min_deg"], "dataset.theta_min_deg")
        if "theta_max_deg" in ds:
            kw["theta_max_deg"] = _as_number(ds["theta_max_deg"], "dataset.theta_max_deg")
        if "snr_db" in ds:
            if not isinstance(ds["snr_db"], list) or not ds["snr_db"]:
                raise ConfigError("dataset.snr_db must be a non-empty list")
            kw["snr_db"] = tuple(_as_number(v, "dataset.snr_db entry") for v in ds["snr_db"])
        if "trials_per_point" in ds:
            kw["trials_per_point"] = _as_int(ds["trials_per_point"], "dataset.trials_per_point")
        if "snapshots" in ds:
            kw["snapshots"] = _as_int(ds["snapshots"], "dataset.snapshots")
        dataset = DatasetSpec(**kw)

    train = TrainSpec()
    if "train" in raw:
        tr = raw["train"]
        _check_keys(tr, {"epochs", "batch_size", "learning_rate", "joint", "dataset"},
                    "[train]", text)
        kw = {}
        if "epochs" in tr:
            kw["epochs"] = _as_int(tr["epochs"], "train.epochs")
        if "batch_size" in tr:
            kw["batch_size"] = _as_int(tr["batch_size"], "train.batch_size")
        if "learning_rate" in tr:
            kw["learning_rate"] = _as_number(tr["learning_rate"], "train.learning_rate")
        if "joint" in tr:
            if not isinstance(tr["joint"], bool):
                raise ConfigError("train.joint must be a boolean")
            kw["joint"] = tr["joint"]
        if "dataset" in tr:
            if not isinstance(tr["dataset"], str):
                raise ConfigError("train.dataset must be a string path")
            kw["dataset"] = tr["dataset"]
        train = TrainSpec(**kw)

    return ExperimentConfig(array=array, emitter=emitter, snr_db=snr_db,
                            snapshots=snapshots, trials=trials,
                            methods=tuple(methods_raw), seed=seed, output=output,
                            regnet_model=regnet_model, crlb_l_values=crlb_l_values,
                            dataset=dataset, train=train)


def parse_config(path) -> ExperimentConfig:
    p = Path(path)
    try:
        text = p.read_text()
    except OSError as e:
        raise ConfigError(f"cannot read config {p}: {e}") from e
    return parse_config_text(text, source=str(p))
