"""Distribution-valued spatial relations fitted from perturbed maps.

Each relation layer stores, per node of a horizontal lattice, the
parameters of a distribution over the outcome of a deterministic spatial
relation ("over" a tagged polygon, "distance" to tagged geometry) when
the source map is randomly perturbed: features are independently rotated
about their centroid and translated, the relation is evaluated on each
sampled map, and the outcomes are moment-matched to a Bernoulli (over)
or Gaussian (distance) distribution.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping

import numpy as np

from .geo import FeatureMap, GeoFeature
from .grids import GridSpec2D, bilinear, read_grid2, write_grid2

RELATION_KINDS = ("over", "distance")

# Fitted standard deviations are floored to keep downstream CDFs
# well-conditioned when all samples agree.
SIGMA_FLOOR = 1e-6

_BOUNDARY_EPS = 1e-9


class StarMapError(ValueError):
    """Bad relation evaluation or layer construction."""


@dataclass(frozen=True)
class PerturbationModel:
    """Per-feature stochastic error model.

    ``translation_sigma`` is the per-axis standard deviation in meters,
    ``rotation_sigma`` the standard deviation in radians of a rotation
    about the feature centroid.  Per-feature overrides replace the two
    global sigmas for individual feature ids.
    """

    translation_sigma: float = 3.0
    rotation_sigma: float = 0.0
    sample_count: int = 50
    translation_overrides: Mapping[str, float] = field(default_factory=dict)
    rotation_overrides: Mapping[str, float] = field(default_factory=dict)

    def __post_init__(self):
        if self.translation_sigma < 0 or self.rotation_sigma < 0:
            raise StarMapError("perturbation sigmas must be >= 0")
        if any(v < 0 for v in self.translation_overrides.values()) or any(
            v < 0 for v in self.rotation_overrides.values()
        ):
            raise StarMapError("per-feature sigma overrides must be >= 0")
        if self.sample_count < 2:
            raise StarMapError("sample_count must be >= 2 (variance must be estimable)")

    def sigmas_for(self, feature_id: str) -> tuple[float, float]:
        return (
            self.rotation_overrides.get(feature_id, self.rotation_sigma),
            self.translation_overrides.get(feature_id, self.translation_sigma),
        )


def _perturb(feature_map: FeatureMap, model: PerturbationModel, rng: np.random.Generator) -> FeatureMap:
    # One rotation draw and one 2D offset draw per feature, always
    # consumed so the stream layout is independent of the sigma values.
    out = []
    for feat in feature_map.features:
        rot_sigma, trans_sigma = model.sigmas_for(feat.id)
        angle = rng.normal(0.0, 1.0) * rot_sigma
        offset = rng.normal(0.0, 1.0, 2) * trans_sigma
        out.append(feat.transformed(angle, offset))
    return feature_map.with_features(out)


def sample_perturbed_map(feature_map: FeatureMap, model: PerturbationModel, seed: int) -> FeatureMap:
    """One random map draw; deterministic for a given seed."""
    return _perturb(feature_map, model, np.random.default_rng(seed))


def _tagged_polygons(feature_map: FeatureMap, tag: str) -> list[np.ndarray]:
    return [f.vertices for f in feature_map.features_with_tag(tag) if f.kind == "polygon"]


def _tagged_segments(features: Iterable[GeoFeature]) -> tuple[np.ndarray, np.ndarray]:
    """All geometry of the features as segments (points become zero-length)."""
    starts, ends = [], []
    for f in features:
        if f.kind == "point":
            starts.append(f.vertices)
            ends.append(f.vertices)
        else:
            starts.append(f.vertices[:-1])
            ends.append(f.vertices[1:])
    return np.vstack(starts), np.vstack(ends)


def _points_in_ring(points: np.ndarray, ring: np.ndarray) -> np.ndarray:
    """Even-odd containment test, boundary exclusive (handled separately)."""
    x, y = points[:, 0], points[:, 1]
    inside = np.zeros(len(points), dtype=bool)
    x1, y1 = ring[:-1, 0], ring[:-1, 1]
    x2, y2 = ring[1:, 0], ring[1:, 1]
    for ex1, ey1, ex2, ey2 in zip(x1, y1, x2, y2):
        if ey1 == ey2:
            continue
        crosses = (ey1 > y) != (ey2 > y)
        with np.errstate(invalid="ignore"):
            xs = (ex2 - ex1) * (y - ey1) / (ey2 - ey1) + ex1
        inside ^= crosses & (x < xs)
    return inside


def _segment_distances(points: np.ndarray, starts: np.ndarray, ends: np.ndarray) -> np.ndarray:
    """Min distance from each point to any segment."""
    ab = ends - starts  # (S, 2)
    denom = np.einsum("sd,sd->s", ab, ab)
    diff = points[:, None, :] - starts[None, :, :]  # (N, S, 2)
    with np.errstate(invalid="ignore", divide="ignore"):
        t = np.einsum("nsd,sd->ns", diff, ab) / denom
    t = np.nan_to_num(t, nan=0.0)
    t = np.clip(t, 0.0, 1.0)
    proj = starts[None, :, :] + t[:, :, None] * ab[None, :, :]
    d = np.linalg.norm(points[:, None, :] - proj, axis=2)
    return d.min(axis=1)


def points_over(points: np.ndarray, tag: str, feature_map: FeatureMap) -> np.ndarray:
    """Vectorized containment in the union of tagged polygons.

    Boundary points count as inside.  A tag with no polygon features
    yields all-False.
    """
    points = np.atleast_2d(np.asarray(points, dtype=float))
    rings = _tagged_polygons(feature_map, tag)
    if not rings:
        return np.zeros(len(points), dtype=bool)
    inside = np.zeros(len(points), dtype=bool)
    for ring in rings:
        inside |= _points_in_ring(points, ring)
    remaining = ~inside
    if np.any(remaining):
        starts = np.vstack([r[:-1] for r in rings])
        ends = np.vstack([r[1:] for r in rings])
        d = _segment_distances(points[remaining], starts, ends)
        inside[remaining] = d <= _BOUNDARY_EPS
    return inside


def points_distance(points: np.ndarray, tag: str, feature_map: FeatureMap) -> np.ndarray:
    """Vectorized min Euclidean distance to tagged geometry (0 inside polygons)."""
    points = np.atleast_2d(np.asarray(points, dtype=float))
    tagged = feature_map.features_with_tag(tag)
    if not tagged:
        raise StarMapError(f"tag {tag!r} has no features")
    starts, ends = _tagged_segments(tagged)
    d = _segment_distances(points, starts, ends)
    rings = [f.vertices for f in tagged if f.kind == "polygon"]
    if rings:
        inside = np.zeros(len(points), dtype=bool)
        for ring in rings:
            inside |= _points_in_ring(points, ring)
        d[inside] = 0.0
    return d


def eval_over(point, tag: str, feature_map: FeatureMap) -> bool:
    """Is ``point`` inside (or on the boundary of) the tagged polygon union?"""
    return bool(points_over(np.asarray(point, dtype=float).reshape(1, 2), tag, feature_map)[0])


def eval_distance(point, tag: str, feature_map: FeatureMap) -> float:
    """Min Euclidean distance from ``point`` to any tagged feature."""
    return float(
        points_distance(np.asarray(point, dtype=float).reshape(1, 2), tag, feature_map)[0]
    )


@dataclass(eq=False)
class RelationLayer:
    """Per-node distribution parameters for one (kind, tag) relation.

    ``params`` maps parameter name to an (ny, nx) array: ``p`` for
    Bernoulli (over) layers, ``mu``/``sigma`` for Gaussian (distance)
    layers.
    """

    kind: str
    tag: str
    grid: GridSpec2D
    params: dict[str, np.ndarray]

    def __post_init__(self):
        if self.kind not in RELATION_KINDS:
            raise StarMapError(f"unknown relation kind {self.kind!r}")
        expected = ("p",) if self.kind == "over" else ("mu", "sigma")
        if tuple(sorted(self.params)) != tuple(sorted(expected)):
            raise StarMapError(f"{self.kind} layer needs parameters {expected}")
        nx, ny = self.grid.counts
        for name, arr in self.params.items():
            arr = np.asarray(arr, dtype=float)
            if arr.shape != (ny, nx):
                raise StarMapError(f"parameter {name!r} shape {arr.shape} != (ny={ny}, nx={nx})")
            self.params[name] = arr
        if self.kind == "over":
            p = self.params["p"]
            if np.any(p < 0) or np.any(p > 1):
                raise StarMapError("Bernoulli p must lie in [0, 1]")
        else:
            if np.any(self.params["mu"] < 0) or np.any(self.params["sigma"] < 0):
                raise StarMapError("distance mu and sigma must be >= 0")

    def interpolate_many(self, points: np.ndarray) -> dict[str, np.ndarray]:
        return {name: bilinear(arr, self.grid, points) for name, arr in self.params.items()}

    def interpolate(self, point) -> dict[str, float]:
        pts = np.asarray(point, dtype=float).reshape(1, 2)
        return {name: float(vals[0]) for name, vals in self.interpolate_many(pts).items()}


def interpolate_layer(layer: RelationLayer, point) -> dict[str, float]:
    """Bilinear interpolation of every layer parameter at ``point``."""
    return layer.interpolate(point)


def _sampled_maps(feature_map, model, seed) -> list[FeatureMap]:
    rng = np.random.default_rng(seed)
    return [_perturb(feature_map, model, rng) for _ in range(model.sample_count)]


def _fit_layers(
    feature_map: FeatureMap,
    model: PerturbationModel,
    relations: Iterable[tuple[str, str]],
    grid: GridSpec2D,
    seed: int,
) -> dict[tuple[str, str], RelationLayer]:
    relations = list(relations)
    for kind, tag in relations:
        if kind not in RELATION_KINDS:
            raise StarMapError(f"unknown relation kind {kind!r}")
        if kind == "distance" and not feature_map.features_with_tag(tag):
            raise StarMapError(f"tag {tag!r} has no features")
    nodes = grid.node_points()
    samples: dict[tuple[str, str], list[np.ndarray]] = {r: [] for r in relations}
    for sampled in _sampled_maps(feature_map, model, seed):
        for kind, tag in relations:
            if kind == "over":
                samples[(kind, tag)].append(points_over(nodes, tag, sampled))
            else:
                samples[(kind, tag)].append(points_distance(nodes, tag, sampled))
    nx, ny = grid.counts
    layers = {}
    for kind, tag in relations:
        stack = np.stack(samples[(kind, tag)])  # (n_samples, nodes)
        if kind == "over":
            p = stack.mean(axis=0).reshape(ny, nx)
            layers[(kind, tag)] = RelationLayer(kind, tag, grid, {"p": p})
        else:
            mu = stack.mean(axis=0).reshape(ny, nx)
            sigma = stack.std(axis=0, ddof=1).reshape(ny, nx)
            sigma = np.maximum(sigma, SIGMA_FLOOR)
            layers[(kind, tag)] = RelationLayer(kind, tag, grid, {"mu": mu, "sigma": sigma})
    return layers


def fit_relation_layer(
    feature_map: FeatureMap,
    model: PerturbationModel,
    kind: str,
    tag: str,
    grid: GridSpec2D,
    seed: int = 0,
) -> RelationLayer:
    """Fit one relation layer by moment matching over sampled maps.

    ``over`` layers record the hit fraction (Bernoulli p); ``distance``
    layers record sample mean and unbiased sample standard deviation.
    Bit-identical for identical (map, model, seed, grid).
    """
    return _fit_layers(feature_map, model, [(kind, tag)], grid, seed)[(kind, tag)]


@dataclass(eq=False)
class StarMap:
    """All fitted relation layers over one shared lattice."""

    grid: GridSpec2D
    model: PerturbationModel
    seed: int
    layers: dict[tuple[str, str], RelationLayer]
    source: str = ""

    def __post_init__(self):
        for key, layer in self.layers.items():
            if layer.grid != self.grid:
                raise StarMapError(f"layer {key} uses a different grid")

    def layer(self, kind: str, tag: str) -> RelationLayer:
        try:
            return self.layers[(kind, tag)]
        except KeyError:
            raise StarMapError(f"no {kind}({tag}) layer in star map") from None

    def has_layer(self, kind: str, tag: str) -> bool:
        return (kind, tag) in self.layers

    @property
    def bounds(self):
        return self.grid.bounds

    def save(self, directory: str | Path) -> None:
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        entries = []
        for (kind, tag), layer in sorted(self.layers.items()):
            files = {}
            for name, arr in sorted(layer.params.items()):
                filename = f"{kind}_{tag}.{name}.grid2"
                write_grid2(self.grid, arr, directory / filename)
                files[name] = filename
            entries.append({"kind": kind, "tag": tag, "files": files})
        manifest = {
            "format": "starmap/1",
            "seed": self.seed,
            "source": self.source,
            "grid": {
                "origin": list(self.grid.origin),
                "resolution": list(self.grid.resolution),
                "counts": list(self.grid.counts),
            },
            "model": {
                "translation_sigma": self.model.translation_sigma,
                "rotation_sigma": self.model.rotation_sigma,
                "sample_count": self.model.sample_count,
                "translation_overrides": dict(self.model.translation_overrides),
                "rotation_overrides": dict(self.model.rotation_overrides),
            },
            "layers": entries,
        }
        (directory / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True))

    @classmethod
    def load(cls, directory: str | Path) -> "StarMap":
        directory = Path(directory)
        manifest_path = directory / "manifest.json"
        if not manifest_path.exists():
            raise StarMapError(f"{directory}: no manifest.json (not a star map directory)")
        manifest = json.loads(manifest_path.read_text())
        g = manifest["grid"]
        grid = GridSpec2D(tuple(g["origin"]), tuple(g["resolution"]), tuple(g["counts"]))
        m = manifest["model"]
        model = PerturbationModel(
            translation_sigma=m["translation_sigma"],
            rotation_sigma=m["rotation_sigma"],
            sample_count=m["sample_count"],
            translation_overrides=m.get("translation_overrides", {}),
            rotation_overrides=m.get("rotation_overrides", {}),
        )
        layers = {}
        for entry in manifest["layers"]:
            kind, tag = entry["kind"], entry["tag"]
            params = {}
            for name, filename in entry["files"].items():
                spec, values = read_grid2(directory / filename)
                if spec != grid:
                    raise StarMapError(f"{filename}: grid differs from manifest grid")
                params[name] = values
            layers[(kind, tag)] = RelationLayer(kind, tag, grid, params)
        return cls(grid, model, manifest["seed"], layers, manifest.get("source", ""))


def fit_star_map(
    feature_map: FeatureMap,
    model: PerturbationModel,
    relations: Iterable[tuple[str, str]],
    grid: GridSpec2D,
    seed: int = 0,
    source: str = "",
) -> StarMap:
    """Fit all requested relations on one shared collection of sampled maps.

    Results are bit-identical to fitting each layer individually with
    the same seed.
    """
    layers = _fit_layers(feature_map, model, relations, grid, seed)
    return StarMap(grid, model, seed, layers, source)
