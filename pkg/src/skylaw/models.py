"""Physical objective models: radio disturbance, noise, risk, energy.

Grid models produce :class:`~skylaw.grids.ScalarGrid3D` cost fields that
the router integrates along candidate paths; the energy model is a path
functional evaluated on resampled waypoints.  Model-sourced objectives in
a constitution are resolved against the registry at the bottom of this
module instead of loading arbitrary code.
"""

from __future__ import annotations

import numpy as np
from scipy.ndimage import gaussian_filter

from .geo import FeatureMap
from .grids import GridSpec3D, ScalarGrid3D, check_waypoints
from .starmap import points_distance, points_over

# Base levels of the qualitative noise/risk surrogates: preferred cells
# score 0.2, everything else 1.0.
QUIET_BASE = 0.2
ROAD_TAGS = ("primary", "secondary")
ROAD_BUFFER_M = 15.0
RISK_TAGS = ("building", "water")
# Risk slices are smoothed with a Gaussian whose sigma grows with
# altitude; 1/4 keeps the blur below the slice spacing at low altitude.
RISK_BLUR_PER_METER = 0.25


class ModelError(ValueError):
    """Bad model parameters or unresolvable model reference."""


def build_radio_grid(
    towers,
    spec: GridSpec3D,
    d0: float = -200.0,
    mu: float = 1.0,
    tower_height: float = 75.0,
) -> ScalarGrid3D:
    """Radio disturbance field: d0 / (mu * r + 1)^2.

    ``r`` is the 3D distance to the nearest tower, with towers placed at
    ``tower_height`` meters.  ``d0`` is the (negative) best signal value
    at a tower, so values lie in [d0, 0) and increase away from towers.
    """
    towers = np.atleast_2d(np.asarray(towers, dtype=float))
    if towers.size == 0:
        raise ModelError("radio model needs at least one tower")
    if d0 >= 0:
        raise ModelError(f"d0 must be negative, got {d0}")
    if mu <= 0:
        raise ModelError(f"mu must be positive, got {mu}")
    nodes = spec.node_points()
    tower_xyz = np.column_stack([towers[:, 0], towers[:, 1], np.full(len(towers), tower_height)])
    diff = nodes[:, None, :] - tower_xyz[None, :, :]
    r = np.linalg.norm(diff, axis=2).min(axis=1)
    values = d0 / (mu * r + 1.0) ** 2
    nx, ny, nz = spec.counts
    return ScalarGrid3D(spec, values.reshape(nz, ny, nx))


def build_noise_grid(feature_map: FeatureMap, spec: GridSpec3D) -> ScalarGrid3D:
    """Noise annoyance field, fading linearly to zero at the ceiling.

    Cells horizontally within ``ROAD_BUFFER_M`` of a primary/secondary
    road start from 0.2 (drone noise blends into traffic), everything
    else from 1.0; the per-node value is base * max(0, 1 - z / z_max).
    """
    nx, ny, nz = spec.counts
    xs, ys, zs = spec.axes
    gx, gy = np.meshgrid(xs, ys, indexing="xy")
    flat = np.column_stack([gx.ravel(), gy.ravel()])
    near_road = np.zeros(len(flat), dtype=bool)
    for tag in ROAD_TAGS:
        if feature_map.features_with_tag(tag):
            near_road |= points_distance(flat, tag, feature_map) <= ROAD_BUFFER_M
    base = np.where(near_road, QUIET_BASE, 1.0).reshape(ny, nx)
    z_max = zs[-1]
    data = np.empty((nz, ny, nx))
    for k, z in enumerate(zs):
        data[k] = base * max(0.0, 1.0 - z / z_max)
    return ScalarGrid3D(spec, data)


def build_risk_grid(feature_map: FeatureMap, spec: GridSpec3D) -> ScalarGrid3D:
    """Ground-risk field, blurred and amplified with altitude.

    Cells over building/water polygons start from 0.2 (fewer people
    underneath), everything else from 1.0.  Each altitude slice is the
    base blurred with sigma = z * RISK_BLUR_PER_METER meters (crash
    uncertainty widens with height) and scaled by (1 + z / z_max).
    """
    nx, ny, nz = spec.counts
    xs, ys, zs = spec.axes
    gx, gy = np.meshgrid(xs, ys, indexing="xy")
    flat = np.column_stack([gx.ravel(), gy.ravel()])
    sheltered = np.zeros(len(flat), dtype=bool)
    for tag in RISK_TAGS:
        sheltered |= points_over(flat, tag, feature_map)
    base = np.where(sheltered, QUIET_BASE, 1.0).reshape(ny, nx)
    z_max = zs[-1]
    data = np.empty((nz, ny, nx))
    for k, z in enumerate(zs):
        sigma_m = z * RISK_BLUR_PER_METER
        sigma_px = (sigma_m / spec.resolution[1], sigma_m / spec.resolution[0])
        blurred = gaussian_filter(base, sigma=sigma_px, mode="nearest") if sigma_m > 0 else base
        data[k] = blurred * (1.0 + z / z_max)
    return ScalarGrid3D(spec, data)


def path_lengths(waypoints: np.ndarray) -> tuple[float, float, float]:
    """Horizontal length, total climb and total descent of a path."""
    wps = np.asarray(waypoints, dtype=float)
    deltas = np.diff(wps, axis=0)
    horizontal = float(np.linalg.norm(deltas[:, :2], axis=1).sum())
    dz = deltas[:, 2]
    climb = float(dz[dz > 0].sum())
    descent = float(-dz[dz < 0].sum())
    return horizontal, climb, descent


def energy_from_lengths(
    horizontal: float, climb: float, descent: float, mass: float, v_xy: float, c_e: float
) -> float:
    if mass <= 0 or v_xy <= 0 or c_e <= 0:
        raise ModelError("mass, cruise velocity and energy coefficient must be positive")
    return 0.5 * mass * v_xy**2 + c_e * (horizontal + 10.0 * climb + 15.0 * descent)


def energy_cost(waypoints: np.ndarray, mass: float, v_xy: float, c_e: float) -> float:
    """Path energy: kinetic term plus length costs with climb/descent factors.

    0.5 * m * v^2 + c_e * (horizontal + 10 * climb + 15 * descent); climb
    meters cost ten times and descent meters fifteen times a level meter.
    """
    wps = check_waypoints(waypoints)
    return energy_from_lengths(*path_lengths(wps), mass, v_xy, c_e)


def compliance_cost_grid(probability: ScalarGrid3D) -> ScalarGrid3D:
    """Cost field 1 - P bridging rule satisfaction into the router."""
    data = probability.data
    if np.any(data < 0) or np.any(data > 1):
        raise ModelError("probability grid values must lie in [0, 1]")
    return ScalarGrid3D(probability.spec, 1.0 - data)


# ----------------------------------------------------------------------
# Registry: model references in constitutions resolve to these builders.

GRID_MODELS = ("radio", "noise", "risk")
PATH_MODELS = ("energy",)


def resolve_model_key(objective_name: str, reference: str, bindings: dict[str, str]) -> str:
    """Map a model reference string to a registry key.

    Explicit bindings (config ``model.<objective> = <key>``) win; else
    the reference's file stem, else the objective name itself.
    """
    if objective_name in bindings:
        key = bindings[objective_name]
    else:
        stem = reference.rsplit("/", 1)[-1]
        stem = stem.split(".", 1)[0].strip().lower()
        key = stem or objective_name
    if key not in GRID_MODELS + PATH_MODELS:
        raise ModelError(
            f"objective {objective_name!r}: unknown model {key!r} "
            f"(known models: {', '.join(GRID_MODELS + PATH_MODELS)})"
        )
    return key
