"""Experiment configuration: INI-style files with command-line overrides.

A config is sections of key=value pairs (configparser syntax).  Every value
can be overridden with --set section.key=value, so a saved config plus its
overrides fully determines a run; commands echo the resolved config next to
their outputs for bit-identical reruns.
"""

from __future__ import annotations

import configparser
from pathlib import Path

from .models import (
    GaborParams,
    UnitModel,
    cnn_unit,
    corner_toy,
    energy_cell,
    gap_energy_control_unit,
    gap_energy_unit,
    hubel_wiesel_cell,
    simple_cell,
    texture_unit,
)
from .netio import load_network
from .synthesis import DEFAULT_LAMBDAS, SynthesisConfig


class ConfigError(ValueError):
    """Invalid or missing configuration."""


class Config:
    """Layered key-value configuration with typed access."""

    def __init__(self):
        self._values: dict[tuple[str, str], str] = {}

    @classmethod
    def load(cls, path=None, overrides=()) -> "Config":
        cfg = cls()
        if path is not None:
            parser = configparser.ConfigParser()
            read = parser.read(path)
            if not read:
                raise ConfigError(f"config file not found: {path}")
            for section in parser.sections():
                for key, value in parser.items(section):
                    cfg._values[(section, key)] = value
        for item in overrides:
            if "=" not in item or "." not in item.split("=", 1)[0]:
                raise ConfigError(f"override must look like section.key=value, got {item!r}")
            dotted, value = item.split("=", 1)
            section, key = dotted.split(".", 1)
            cfg._values[(section.strip(), key.strip())] = value.strip()
        return cfg

    def set(self, section: str, key: str, value) -> None:
        self._values[(section, key)] = str(value)

    def has(self, section: str, key: str) -> bool:
        return (section, key) in self._values

    def get(self, section: str, key: str, default=None) -> str | None:
        return self._values.get((section, key), default)

    def _typed(self, section, key, default, convert, typename):
        raw = self.get(section, key)
        if raw is None:
            return default
        try:
            return convert(raw)
        except ValueError as exc:
            raise ConfigError(f"{section}.{key}: expected {typename}, got {raw!r}") from exc

    def get_int(self, section, key, default=None) -> int | None:
        return self._typed(section, key, default, int, "an integer")

    def get_float(self, section, key, default=None) -> float | None:
        return self._typed(section, key, default, float, "a number")

    def get_bool(self, section, key, default=None) -> bool | None:
        raw = self.get(section, key)
        if raw is None:
            return default
        low = raw.strip().lower()
        if low in ("1", "true", "yes", "on"):
            return True
        if low in ("0", "false", "no", "off"):
            return False
        raise ConfigError(f"{section}.{key}: expected a boolean, got {raw!r}")

    def get_floats(self, section, key, default=None) -> list[float] | None:
        raw = self.get(section, key)
        if raw is None:
            return default
        raw = raw.strip()
        if not raw:
            return []
        try:
            return [float(tok) for tok in raw.replace(",", " ").split()]
        except ValueError as exc:
            raise ConfigError(f"{section}.{key}: expected numbers, got {raw!r}") from exc

    def sections(self) -> dict[str, dict[str, str]]:
        out: dict[str, dict[str, str]] = {}
        for (section, key), value in sorted(self._values.items()):
            out.setdefault(section, {})[key] = value
        return out

    def write(self, path) -> None:
        lines = []
        for section, items in self.sections().items():
            lines.append(f"[{section}]")
            for key, value in items.items():
                lines.append(f"{key} = {value}")
            lines.append("")
        Path(path).write_text("\n".join(lines))


UNIT_KINDS = ("simple", "energy", "hubel-wiesel", "corner", "texture",
              "gap-energy", "gap-energy-random", "cnn")


def gabor_from_config(cfg: Config) -> GaborParams:
    base = GaborParams()
    center = None
    if cfg.has("unit", "center_x") or cfg.has("unit", "center_y"):
        center = (cfg.get_float("unit", "center_x"), cfg.get_float("unit", "center_y"))
        if None in center:
            raise ConfigError("unit.center_x and unit.center_y must be given together")
    return GaborParams(
        orientation=cfg.get_float("unit", "orientation", base.orientation),
        frequency=cfg.get_float("unit", "frequency", base.frequency),
        phase=cfg.get_float("unit", "phase", base.phase),
        sigma=cfg.get_float("unit", "sigma", base.sigma),
        center=center,
        size=cfg.get_int("unit", "size", base.size),
    )


def build_unit(cfg: Config) -> UnitModel:
    kind = cfg.get("unit", "kind")
    if kind is None:
        raise ConfigError("unit.kind is required (one of: " + ", ".join(UNIT_KINDS) + ")")
    if kind == "simple":
        return simple_cell(gabor_from_config(cfg))
    if kind == "energy":
        return energy_cell(gabor_from_config(cfg))
    if kind == "hubel-wiesel":
        return hubel_wiesel_cell(
            gabor_from_config(cfg),
            k=cfg.get_int("unit", "k", 32),
            jitter=cfg.get_float("unit", "jitter", 0.08),
            seed=cfg.get_int("unit", "unit_seed", 1),
        )
    if kind == "corner":
        return corner_toy(
            frequency=cfg.get_float("unit", "frequency", 0.25),
            sigma=cfg.get_float("unit", "sigma", 2.5),
        )
    if kind == "texture":
        return texture_unit(
            rf=cfg.get_int("unit", "rf", 16),
            kernel=cfg.get_int("unit", "kernel", 7),
            frequency=cfg.get_float("unit", "frequency", 0.25),
            sigma=cfg.get_float("unit", "sigma", 1.7),
        )
    if kind == "gap-energy":
        return gap_energy_unit(
            rf=cfg.get_int("unit", "rf", 16),
            kernel=cfg.get_int("unit", "kernel", 7),
            frequency=cfg.get_float("unit", "frequency", 0.25),
            sigma=cfg.get_float("unit", "sigma", 1.7),
        )
    if kind == "gap-energy-random":
        return gap_energy_control_unit(
            seed=cfg.get_int("unit", "unit_seed", 0),
            rf=cfg.get_int("unit", "rf", 16),
            kernel=cfg.get_int("unit", "kernel", 7),
        )
    if kind == "cnn":
        manifest = cfg.get("unit", "manifest")
        weights = cfg.get("unit", "weights")
        layer = cfg.get_int("unit", "layer")
        channel = cfg.get_int("unit", "channel")
        if None in (manifest, weights, layer, channel):
            raise ConfigError("cnn units need unit.manifest, unit.weights, unit.layer, unit.channel")
        net = load_network(manifest, weights)
        return cnn_unit(net, layer, channel)
    raise ConfigError(f"unknown unit kind {kind!r} (expected one of: " + ", ".join(UNIT_KINDS) + ")")


def build_synthesis_config(cfg: Config, unit: UnitModel | None = None) -> SynthesisConfig:
    threshold = cfg.get_float("synthesis", "threshold")
    if threshold is None:
        threshold = unit.act_threshold if unit is not None else 0.8
    syn = SynthesisConfig(
        n=cfg.get_int("synthesis", "n", 6),
        lam=cfg.get_float("synthesis", "lambda", 0.0),
        alpha=cfg.get_float("synthesis", "alpha", 0.0005),
        lr=cfg.get_float("synthesis", "lr", 0.1),
        max_steps=cfg.get_int("synthesis", "max_steps", 1000),
        conv_window=cfg.get_int("synthesis", "conv_window", 50),
        conv_tol=cfg.get_float("synthesis", "conv_tol", 1e-6),
        norm_radius=cfg.get_float("synthesis", "radius"),
        act_threshold=threshold,
        mode=cfg.get("synthesis", "mode", "min"),
        precondition=cfg.get_bool("synthesis", "precondition", True),
        seed=cfg.get_int("synthesis", "seed", 0),
    )
    try:
        syn.validate()
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    return syn


def sweep_lambdas(cfg: Config) -> list[float]:
    lams = cfg.get_floats("sweep", "lambdas", list(DEFAULT_LAMBDAS))
    if not lams:
        raise ConfigError("sweep.lambdas must not be empty")
    return lams
