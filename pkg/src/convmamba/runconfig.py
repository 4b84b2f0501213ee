"""Flat "key = value" run configuration with dotted keys and overrides.

Example:

    model.preset = convmamba-4
    train.epochs = 150
    data.clean_dir = /data/clean

Every key is validated against the schema; unknown keys are errors. Values
on the command line (--set key=value) override the file.
"""

from __future__ import annotations

from dataclasses import dataclass, fields
from pathlib import Path

from .audio import StftConfig
from .masks import MaskKind
from .network import ModelConfig
from .training import TrainConfig


class ConfigError(ValueError):
    pass


def _bool(text: str) -> bool:
    low = text.strip().lower()
    if low in ("true", "1", "yes", "on"):
        return True
    if low in ("false", "0", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _schema() -> dict[str, type]:
    schema: dict[str, type] = {"model.preset": str}
    for f in fields(ModelConfig):
        schema[f"model.{f.name}"] = bool if f.type == "bool" else int
    for f in fields(TrainConfig):
        if f.name == "target":
            schema["train.target"] = str
        elif f.type == "bool":
            schema[f"train.{f.name}"] = bool
        elif f.type == "float":
            schema[f"train.{f.name}"] = float
        else:
            schema[f"train.{f.name}"] = int
    for name in ("win_length", "hop", "fft_size"):
        schema[f"stft.{name}"] = int
    for name in ("clean_dir", "noise_dir", "clean_manifest", "noise_manifest"):
        schema[f"data.{name}"] = str
    schema["out.dir"] = str
    return schema


SCHEMA = _schema()


@dataclass
class RunConfig:
    model: ModelConfig
    train: TrainConfig
    stft: StftConfig
    clean_dir: str | None = None
    noise_dir: str | None = None
    clean_manifest: str | None = None
    noise_manifest: str | None = None
    out_dir: str = "runs/default"


def parse_config_text(text: str, source: str = "<config>") -> dict[str, str]:
    pairs: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value'")
        key, value = (part.strip() for part in line.split("=", 1))
        if key not in SCHEMA:
            raise ConfigError(f"{source}:{lineno}: unknown config key {key!r}")
        pairs[key] = value
    return pairs


def parse_overrides(items: list[str]) -> dict[str, str]:
    pairs: dict[str, str] = {}
    for item in items:
        if "=" not in item:
            raise ConfigError(f"--set expects key=value, got {item!r}")
        key, value = (part.strip() for part in item.split("=", 1))
        if key not in SCHEMA:
            raise ConfigError(f"unknown config key {key!r}")
        pairs[key] = value
    return pairs


def build_run_config(pairs: dict[str, str]) -> RunConfig:
    typed: dict[str, object] = {}
    for key, value in pairs.items():
        want = SCHEMA[key]
        try:
            typed[key] = _bool(value) if want is bool else want(value)
        except ValueError as exc:
            raise ConfigError(f"bad value for {key}: {exc}") from exc

    model_kwargs = {k.split(".", 1)[1]: v for k, v in typed.items()
                    if k.startswith("model.") and k != "model.preset"}
    if "model.preset" in typed:
        model = ModelConfig.preset(str(typed["model.preset"]), **model_kwargs)
    else:
        model = ModelConfig(**model_kwargs)

    train_kwargs = {}
    for key, value in typed.items():
        if not key.startswith("train."):
            continue
        name = key.split(".", 1)[1]
        if name == "target":
            try:
                value = MaskKind(str(value).lower())
            except ValueError:
                raise ConfigError(f"train.target must be irm or psm, got {value!r}") from None
        train_kwargs[name] = value
    train = TrainConfig(**train_kwargs)

    stft_kwargs = {k.split(".", 1)[1]: v for k, v in typed.items()
                   if k.startswith("stft.")}
    stft = StftConfig(**stft_kwargs)
    if stft.bins != model.bins:
        raise ConfigError(
            f"stft yields {stft.bins} bins but model.bins = {model.bins}")

    return RunConfig(
        model=model, train=train, stft=stft,
        clean_dir=typed.get("data.clean_dir"),
        noise_dir=typed.get("data.noise_dir"),
        clean_manifest=typed.get("data.clean_manifest"),
        noise_manifest=typed.get("data.noise_manifest"),
        out_dir=str(typed.get("out.dir", "runs/default")))


def load_run_config(config_path, overrides: list[str],
                    seed: int | None = None) -> RunConfig:
    pairs: dict[str, str] = {}
    if config_path is not None:
        path = Path(config_path)
        if not path.is_file():
            raise ConfigError(f"config file not found: {path}")
        pairs.update(parse_config_text(path.read_text(encoding="utf-8"), str(path)))
    pairs.update(parse_overrides(overrides))
    if seed is not None:
        pairs["train.seed"] = str(seed)
    return build_run_config(pairs)
