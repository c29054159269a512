"""Mission configuration: a flat key=value text file.

Defaults reproduce the reference parameterization (Paris-scale
navigation volume, 3 m map translation noise, the quadrotor energy
model, and the router's population settings).  Seeds are explicit
configuration, never wall-clock derived.  Lines look like::

    # navigation space
    x_max = 13000.0
    setting = standard_license, daytime
    model.radio = radio
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field, fields
from pathlib import Path

from .grids import GridSpec2D, GridSpec3D
from .starmap import PerturbationModel


class ConfigError(ValueError):
    """Unknown key or unparsable value in a config file."""


@dataclass
class MissionConfig:
    # navigation space
    origin_lat: float = 48.8677
    origin_lon: float = 2.3391
    x_min: float = 0.0
    x_max: float = 13000.0
    y_min: float = 0.0
    y_max: float = 13000.0
    z_min: float = 0.0
    z_max: float = 300.0
    x_res: float = 10.0
    y_res: float = 10.0
    z_res: float = 10.0
    # star map estimation
    relation_resolution: float = 10.0
    translation_sigma: float = 3.0
    rotation_sigma: float = 0.0
    sample_count: int = 50
    seed: int = 0
    # UAV
    uav_mass: float = 1.2
    cruise_velocity: float = 14.0
    energy_coefficient: float = 9.12
    # radio model
    radio_d0: float = -200.0
    radio_mu: float = 1.0
    radio_height: float = 75.0
    radio_tower_tag: str = "tower"
    # router
    weighted_solutions: int = 70
    population: int = 700
    generations: int = 100
    mutation_sigma: float = 10.0
    mutation_probability: float = 1.0
    crossover_probability: float = 0.9
    waypoint_resolution: float = 5.0
    curve_epsilon: float = 20.0
    # mission design
    clearance_threshold: float = 0.5
    setting: tuple[str, ...] = ()
    explain_limit: int = 64
    model_bits_limit: float = 24.0
    threads: int = 1
    # model registry bindings: objective name -> registry key
    model_bindings: dict[str, str] = field(default_factory=dict)

    @property
    def origin(self) -> tuple[float, float]:
        return (self.origin_lat, self.origin_lon)

    def navigation_grid(self) -> GridSpec3D:
        return GridSpec3D.from_bounds(
            (self.x_min, self.x_max),
            (self.y_min, self.y_max),
            (self.z_min, self.z_max),
            (self.x_res, self.y_res, self.z_res),
        )

    def relation_grid(self) -> GridSpec2D:
        return GridSpec2D.from_bounds(
            (self.x_min, self.x_max),
            (self.y_min, self.y_max),
            (self.relation_resolution, self.relation_resolution),
        )

    def perturbation_model(self) -> PerturbationModel:
        return PerturbationModel(
            translation_sigma=self.translation_sigma,
            rotation_sigma=self.rotation_sigma,
            sample_count=self.sample_count,
        )


_INT_KEYS = {"sample_count", "seed", "weighted_solutions", "population", "generations",
             "explain_limit", "threads"}
_STR_KEYS = {"radio_tower_tag"}


def parse_config(text: str) -> MissionConfig:
    """Parse flat key=value text into a :class:`MissionConfig`.

    Unknown keys are errors; ``setting`` takes a comma-separated option
    list and ``model.<objective>`` keys bind objectives to registry
    models.
    """
    config = MissionConfig()
    known = {f.name for f in fields(MissionConfig)} - {"model_bindings", "setting"}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if key.startswith("model."):
            objective = key[len("model.") :].strip()
            if not objective:
                raise ConfigError(f"line {lineno}: empty objective in {key!r}")
            config.model_bindings[objective] = value
            continue
        if key == "setting":
            config.setting = tuple(
                option.strip() for option in value.split(",") if option.strip()
            )
            continue
        if key not in known:
            raise ConfigError(f"line {lineno}: unknown configuration key {key!r}")
        try:
            if key in _INT_KEYS:
                setattr(config, key, int(value))
            elif key in _STR_KEYS:
                setattr(config, key, value)
            else:
                setattr(config, key, float(value))
        except ValueError as exc:
            raise ConfigError(f"line {lineno}: bad value for {key!r}: {value!r}") from exc
    return config


def load_config(path: str | Path | None) -> MissionConfig:
    if path is None:
        return MissionConfig()
    return parse_config(Path(path).read_text())


def format_config(config: MissionConfig) -> str:
    lines = []
    for f in fields(MissionConfig):
        if f.name == "model_bindings":
            for objective, key in sorted(config.model_bindings.items()):
                lines.append(f"model.{objective} = {key}")
        elif f.name == "setting":
            lines.append("setting = " + ", ".join(config.setting))
        else:
            lines.append(f"{f.name} = {getattr(config, f.name)}")
    return "\n".join(lines) + "\n"


def rewrite_setting(text: str, options) -> str:
    """Replace (or append) the ``setting`` line of a config document."""
    new_line = "setting = " + ", ".join(options)
    pattern = re.compile(r"^\s*setting\s*=.*$", re.MULTILINE)
    if pattern.search(text):
        return pattern.sub(new_line, text, count=1)
    if text and not text.endswith("\n"):
        text += "\n"
    return text + new_line + "\n"
