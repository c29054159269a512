"""End-to-end orchestration shared by the CLI subcommands.

Wires the modules together: fit the star map layers a constitution
needs, build the compliance and physical cost grids, run both router
stages, and assemble the per-member route artifacts (objective vectors,
clearance scores, knee and extreme selections).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import constitution as cl
from . import models
from .config import MissionConfig
from .geo import FeatureMap
from .grids import GridSpec3D, ScalarGrid3D, line_integral
from .inference import MissionSetting, probability_field
from .mission import rejection_area
from .router import (
    EvolveConfig,
    ParetoSet,
    RouterError,
    dijkstra_grid,
    evolve,
    extreme_points,
    generate_weight_vectors,
    knee_point,
    seeds_to_template,
    smooth_polypath,
)
from .nurbs import resample
from .starmap import StarMap, fit_star_map


class PipelineError(ValueError):
    """Inputs inconsistent with each other (map, constitution, config)."""


def build_star_map(
    feature_map: FeatureMap, c: cl.Constitution, config: MissionConfig, seed: int | None = None
) -> StarMap:
    """Fit one layer per relation the constitution references."""
    relations = c.relations()
    if not relations:
        raise PipelineError("the constitution references no spatial relations")
    available = feature_map.tags
    for kind, tag in relations:
        if tag not in available:
            raise PipelineError(f"map has no features tagged {tag!r} (needed by {kind}({tag}))")
    return fit_star_map(
        feature_map,
        config.perturbation_model(),
        relations,
        config.relation_grid(),
        seed=config.seed if seed is None else seed,
    )


@dataclass
class ObjectiveSet:
    """Declared objectives resolved to evaluators, in declaration order.

    Logic field objectives collapse into a single compliance entry
    (their conjunction), positioned at the first logic declaration.
    """

    names: list[str]
    grid_objectives: list[tuple[str, ScalarGrid3D]]
    path_objectives: list[tuple[str, object]]  # (name, waypoints -> float)
    compliance_name: str | None
    probability: ScalarGrid3D | None

    @property
    def evaluators(self):
        fns = {}
        for name, grid in self.grid_objectives:
            fns[name] = _line_integral_fn(grid)
        for name, fn in self.path_objectives:
            fns[name] = fn
        return [fns[name] for name in self.names]


def _line_integral_fn(grid: ScalarGrid3D):
    return lambda waypoints: line_integral(grid, waypoints)


def build_objectives(
    c: cl.Constitution,
    sm: StarMap,
    feature_map: FeatureMap,
    config: MissionConfig,
    grid: GridSpec3D,
    setting: MissionSetting,
) -> ObjectiveSet:
    names: list[str] = []
    grid_objectives: list[tuple[str, ScalarGrid3D]] = []
    path_objectives: list[tuple[str, object]] = []
    compliance_name: str | None = None
    probability: ScalarGrid3D | None = None

    for obj in c.objectives:
        if obj.is_logic:
            if compliance_name is not None:
                continue  # all logic objectives fold into the conjunction
            compliance_name = obj.name
            probability = probability_field(
                c, sm, grid, setting, limit_bits=config.model_bits_limit
            )
            grid_objectives.append((obj.name, models.compliance_cost_grid(probability)))
            names.append(obj.name)
            continue
        key = models.resolve_model_key(obj.name, obj.model_ref or "", config.model_bindings)
        if obj.scope == "field":
            if key == "radio":
                towers = [
                    f.vertices[0]
                    for f in feature_map.features_with_tag(config.radio_tower_tag)
                    if f.kind == "point"
                ]
                if not towers:
                    raise PipelineError(
                        f"radio objective needs point features tagged "
                        f"{config.radio_tower_tag!r}"
                    )
                field_grid = models.build_radio_grid(
                    towers, grid, config.radio_d0, config.radio_mu, config.radio_height
                )
            elif key == "noise":
                field_grid = models.build_noise_grid(feature_map, grid)
            elif key == "risk":
                field_grid = models.build_risk_grid(feature_map, grid)
            else:
                raise PipelineError(f"model {key!r} cannot back a field objective")
            grid_objectives.append((obj.name, field_grid))
            names.append(obj.name)
        else:
            if key != "energy":
                raise PipelineError(f"model {key!r} cannot back a path objective")
            mass, v_xy, c_e = config.uav_mass, config.cruise_velocity, config.energy_coefficient
            path_objectives.append(
                (obj.name, lambda wps, m=mass, v=v_xy, ce=c_e: models.energy_cost(wps, m, v, ce))
            )
            names.append(obj.name)

    if not names:
        raise PipelineError("the constitution declares no objectives")
    return ObjectiveSet(names, grid_objectives, path_objectives, compliance_name, probability)


def _normalized(grid: ScalarGrid3D) -> np.ndarray:
    lo, hi = grid.data.min(), grid.data.max()
    if hi > lo:
        return (grid.data - lo) / (hi - lo)
    return np.zeros_like(grid.data)


def stage_one_seeds(
    objectives: ObjectiveSet,
    grid: GridSpec3D,
    start_node: tuple[int, int, int],
    goal_node: tuple[int, int, int],
    n_seeds: int,
) -> list[np.ndarray]:
    """Dijkstra paths for the weighted aggregations, smoothed once.

    Each grid objective is min-max normalized before aggregation so the
    combined cost stays non-negative regardless of the fields' scales.
    """
    normalized = [_normalized(g) for _, g in objectives.grid_objectives]
    if not normalized:
        raise PipelineError("stage one needs at least one grid objective")
    weights = generate_weight_vectors(n_seeds, len(normalized))
    seeds = []
    for weight in weights:
        combined = np.zeros_like(normalized[0])
        for w, data in zip(weight, normalized):
            combined = combined + w * data
        path = dijkstra_grid(ScalarGrid3D(grid, combined), start_node, goal_node)
        seeds.append(smooth_polypath(path))
    return seeds


@dataclass
class RouteResult:
    objective_names: list[str]
    pareto: ParetoSet
    waypoints: list[np.ndarray]  # per front member, resampled
    clearance_scores: list[float]
    waypoint_probabilities: list[np.ndarray]
    knee_index: int
    extreme_indices: list[int]
    rejection_thresholds: np.ndarray
    rejection_rates: np.ndarray
    rejection_area: float


def route(
    c: cl.Constitution,
    sm: StarMap,
    feature_map: FeatureMap,
    config: MissionConfig,
    start,
    goal,
) -> RouteResult:
    """Full two-stage routing between two points in local meters."""
    grid = config.navigation_grid()
    for name, point in (("start", start), ("goal", goal)):
        if not grid.contains_point(point):
            raise PipelineError(f"{name} {tuple(point)} is outside the navigation bounds")
    start_node = grid.nearest_node(start)
    goal_node = grid.nearest_node(goal)
    if start_node == goal_node:
        raise PipelineError("start and goal resolve to the same grid node")

    setting = MissionSetting.resolve(c, config.setting)
    objectives = build_objectives(c, sm, feature_map, config, grid, setting)
    seeds = stage_one_seeds(objectives, grid, start_node, goal_node, config.weighted_solutions)

    _, curves = seeds_to_template(seeds, config.curve_epsilon)
    bounds = np.array(grid.bounds)
    evolve_config = EvolveConfig(
        population_size=config.population,
        generations=config.generations,
        crossover_probability=config.crossover_probability,
        mutation_probability=config.mutation_probability,
        mutation_sigma=config.mutation_sigma,
        seed=config.seed,
        bounds=bounds,
    )
    # clamp fitted seed control polygons into the navigation box
    clamped = [
        curve.with_control_points(
            np.clip(curve.control_points, bounds[:, 0], bounds[:, 1])
        )
        for curve in curves
    ]
    pareto = evolve(
        clamped, objectives.evaluators, evolve_config, delta=config.waypoint_resolution
    )

    waypoints = [
        resample(pareto.curve(i), config.waypoint_resolution) for i in range(len(pareto))
    ]
    scores: list[float] = []
    waypoint_probs: list[np.ndarray] = []
    for wps in waypoints:
        if objectives.probability is not None:
            probs = objectives.probability.interpolate_many(wps)
        else:
            probs = np.ones(len(wps))
        waypoint_probs.append(probs)
        scores.append(float(probs.mean()))

    curve, area = rejection_area(scores)

    return RouteResult(
        objective_names=objectives.names,
        pareto=pareto,
        waypoints=waypoints,
        clearance_scores=scores,
        waypoint_probabilities=waypoint_probs,
        knee_index=knee_point(pareto),
        extreme_indices=extreme_points(pareto),
        rejection_thresholds=curve.thresholds,
        rejection_rates=curve.rates,
        rejection_area=area,
    )


def resample_waypoints(waypoints: np.ndarray, delta: float) -> np.ndarray:
    """Arc-length resampling of a polyline at spacing <= delta."""
    wps = np.atleast_2d(np.asarray(waypoints, dtype=float))
    if len(wps) < 2:
        return wps.copy()
    if delta <= 0:
        raise RouterError("delta must be positive")
    seg = np.linalg.norm(np.diff(wps, axis=0), axis=1)
    arc = np.concatenate([[0.0], np.cumsum(seg)])
    length = arc[-1]
    if length <= 0:
        return wps[:1].copy()
    n_segments = max(1, int(np.ceil(length / delta)))
    targets = np.linspace(0.0, length, n_segments + 1)
    out = np.column_stack([np.interp(targets, arc, wps[:, a]) for a in range(3)])
    out[0], out[-1] = wps[0], wps[-1]
    return out
