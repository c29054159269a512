"""Shared fixtures: bundled demo data and a synthetic urban scenario."""

from __future__ import annotations

from importlib import resources
from pathlib import Path

import numpy as np
import pytest

from skylaw import constitution as cl
from skylaw.config import MissionConfig, parse_config
from skylaw.geo import FeatureMap, GeoFeature, load_geojson
from skylaw.grids import GridSpec2D
from skylaw.pipeline import build_star_map
from skylaw.starmap import PerturbationModel, StarMap, fit_star_map

DATA = resources.files("skylaw") / "data"


def data_text(name: str) -> str:
    return (DATA / name).read_text()


def data_path(name: str) -> Path:
    return Path(str(DATA / name))


def square(x0: float, y0: float, width: float, height: float) -> list[tuple[float, float]]:
    return [(x0, y0), (x0 + width, y0), (x0 + width, y0 + height), (x0, y0 + height), (x0, y0)]


@pytest.fixture(scope="session")
def demo_map() -> FeatureMap:
    return load_geojson(data_text("demo_map.geojson"))


@pytest.fixture(scope="session")
def demo_constitution() -> cl.Constitution:
    return cl.parse(data_text("demo_mission.law"))


@pytest.fixture(scope="session")
def demo_config() -> MissionConfig:
    return parse_config(data_text("demo.cfg"))


@pytest.fixture(scope="session")
def demo_starmap(demo_map, demo_constitution, demo_config) -> StarMap:
    return build_star_map(demo_map, demo_constitution, demo_config)


def build_urban_map() -> FeatureMap:
    """Synthetic 1 km^2 map carrying every tag of the urban rule set."""
    features = (
        GeoFeature("park-1", "polygon", square(100, 600, 250, 250), {"park"}),
        GeoFeature("block-1", "polygon", square(550, 550, 90, 90), {"building"}),
        GeoFeature("block-2", "polygon", square(660, 580, 80, 100), {"building"}),
        GeoFeature("block-3", "polygon", square(580, 680, 100, 80), {"building"}),
        GeoFeature("basin", "polygon", square(820, 820, 120, 100), {"water"}),
        GeoFeature("arena", "polygon", square(120, 120, 140, 140), {"stadium"}),
        GeoFeature("ministry", "polygon", square(700, 150, 120, 110), {"government"}),
        GeoFeature("mission-x", "polygon", square(420, 80, 70, 60), {"embassy"}),
        GeoFeature("avenue", "polyline", [(0, 420), (500, 430), (1000, 450)], {"primary"}),
        GeoFeature("ring", "polyline", [(500, 0), (510, 500), (520, 1000)], {"secondary"}),
        GeoFeature("mast-1", "point", [(430, 540)], {"tower"}),
    )
    return FeatureMap((48.8677, 2.3391), features, ((0, 1000), (0, 1000), (0, 300)))


@pytest.fixture(scope="session")
def urban_map() -> FeatureMap:
    return build_urban_map()


@pytest.fixture(scope="session")
def urban_constitution() -> cl.Constitution:
    return cl.parse(data_text("urban_rules.law"))


@pytest.fixture(scope="session")
def urban_starmap(urban_map, urban_constitution) -> StarMap:
    grid = GridSpec2D.from_bounds((0, 1000), (0, 1000), (25, 25))
    model = PerturbationModel(translation_sigma=3.0, sample_count=20)
    return fit_star_map(
        urban_map, model, urban_constitution.relations(), grid, seed=11
    )
