"""Discrete scalar fields over 2D and 3D node lattices.

Grids are node-centered: node (i, j, k) sits at origin + index *
resolution, and the valid query domain is the hull of the nodes.
Out-of-bounds queries raise instead of clamping so that cost lookups
never silently extrapolate.

File formats (text, whitespace separated, bit-exact via repr round-trip):

    GRID3 nx ny nz ox oy oz rx ry rz
    v000 v100 v200 ...            x-fastest, then y, then z

    GRID2 nx ny ox oy rx ry
    v00 v10 ...                   x-fastest, then y
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

# Tolerance (meters) for boundary queries: absorbs float noise from
# resampling without allowing real extrapolation.
_EDGE_TOL = 1e-9


class GridError(ValueError):
    """Bad grid construction or out-of-bounds query."""


@dataclass(frozen=True)
class GridSpec2D:
    """Horizontal node lattice: origin, spacing and node counts."""

    origin: tuple[float, float]
    resolution: tuple[float, float]
    counts: tuple[int, int]

    def __post_init__(self):
        if any(r <= 0 for r in self.resolution):
            raise GridError(f"resolutions must be positive: {self.resolution}")
        if any(int(n) < 2 for n in self.counts):
            raise GridError(f"need >= 2 nodes per axis: {self.counts}")

    @classmethod
    def from_bounds(cls, x_range, y_range, resolution) -> "GridSpec2D":
        rx, ry = resolution
        nx = int(abs(x_range[1] - x_range[0]) // rx) + 1
        ny = int(abs(y_range[1] - y_range[0]) // ry) + 1
        return cls((x_range[0], y_range[0]), (rx, ry), (nx, ny))

    @property
    def xs(self) -> np.ndarray:
        return self.origin[0] + self.resolution[0] * np.arange(self.counts[0])

    @property
    def ys(self) -> np.ndarray:
        return self.origin[1] + self.resolution[1] * np.arange(self.counts[1])

    @property
    def bounds(self) -> tuple[tuple[float, float], tuple[float, float]]:
        return (
            (self.origin[0], self.origin[0] + self.resolution[0] * (self.counts[0] - 1)),
            (self.origin[1], self.origin[1] + self.resolution[1] * (self.counts[1] - 1)),
        )

    def node_points(self) -> np.ndarray:
        """All node coordinates, x-fastest, shape (nx*ny, 2)."""
        gx, gy = np.meshgrid(self.xs, self.ys, indexing="xy")
        return np.column_stack([gx.ravel(), gy.ravel()])

    def contains(self, points: np.ndarray) -> np.ndarray:
        (x0, x1), (y0, y1) = self.bounds
        p = np.atleast_2d(points)
        return (
            (p[:, 0] >= x0 - _EDGE_TOL)
            & (p[:, 0] <= x1 + _EDGE_TOL)
            & (p[:, 1] >= y0 - _EDGE_TOL)
            & (p[:, 1] <= y1 + _EDGE_TOL)
        )


@dataclass(frozen=True)
class GridSpec3D:
    """Navigation-space node lattice."""

    origin: tuple[float, float, float]
    resolution: tuple[float, float, float]
    counts: tuple[int, int, int]

    def __post_init__(self):
        if any(r <= 0 for r in self.resolution):
            raise GridError(f"resolutions must be positive: {self.resolution}")
        if any(int(n) < 2 for n in self.counts):
            raise GridError(f"need >= 2 nodes per axis: {self.counts}")

    @classmethod
    def from_bounds(cls, x_range, y_range, z_range, resolution) -> "GridSpec3D":
        rx, ry, rz = resolution
        nx = int(abs(x_range[1] - x_range[0]) // rx) + 1
        ny = int(abs(y_range[1] - y_range[0]) // ry) + 1
        nz = int(abs(z_range[1] - z_range[0]) // rz) + 1
        return cls((x_range[0], y_range[0], z_range[0]), (rx, ry, rz), (nx, ny, nz))

    @property
    def axes(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        return tuple(
            self.origin[a] + self.resolution[a] * np.arange(self.counts[a]) for a in range(3)
        )

    @property
    def bounds(self) -> tuple[tuple[float, float], ...]:
        return tuple(
            (self.origin[a], self.origin[a] + self.resolution[a] * (self.counts[a] - 1))
            for a in range(3)
        )

    def node_point(self, node: tuple[int, int, int]) -> np.ndarray:
        return np.array(
            [self.origin[a] + self.resolution[a] * node[a] for a in range(3)], dtype=float
        )

    def node_points(self) -> np.ndarray:
        """All node coordinates, x-fastest then y then z, shape (N, 3)."""
        xs, ys, zs = self.axes
        gz, gy, gx = np.meshgrid(zs, ys, xs, indexing="ij")
        return np.column_stack([gx.ravel(), gy.ravel(), gz.ravel()])

    def nearest_node(self, point) -> tuple[int, int, int]:
        idx = []
        for a in range(3):
            i = round((point[a] - self.origin[a]) / self.resolution[a])
            idx.append(int(min(max(i, 0), self.counts[a] - 1)))
        return tuple(idx)

    def contains_point(self, point) -> bool:
        return all(
            lo - _EDGE_TOL <= point[a] <= hi + _EDGE_TOL
            for a, (lo, hi) in enumerate(self.bounds)
        )


def _axis_locate(coords: np.ndarray, origin: float, res: float, count: int, axis_name: str):
    """Map coordinates to (cell index, fraction); raises on out-of-bounds."""
    t = (coords - origin) / res
    bad = (t < -_EDGE_TOL / res) | (t > count - 1 + _EDGE_TOL / res)
    if np.any(bad):
        offending = float(coords[np.argmax(bad)])
        raise GridError(f"{axis_name} coordinate {offending} outside grid range")
    t = np.clip(t, 0.0, count - 1)
    i0 = np.minimum(t.astype(int), count - 2)
    return i0, t - i0


def bilinear(values: np.ndarray, spec: GridSpec2D, points: np.ndarray) -> np.ndarray:
    """Bilinear interpolation of per-node ``values`` (shape (ny, nx))."""
    p = np.atleast_2d(np.asarray(points, dtype=float))
    i0, fx = _axis_locate(p[:, 0], spec.origin[0], spec.resolution[0], spec.counts[0], "x")
    j0, fy = _axis_locate(p[:, 1], spec.origin[1], spec.resolution[1], spec.counts[1], "y")
    v00 = values[j0, i0]
    v10 = values[j0, i0 + 1]
    v01 = values[j0 + 1, i0]
    v11 = values[j0 + 1, i0 + 1]
    return v00 * (1 - fx) * (1 - fy) + v10 * fx * (1 - fy) + v01 * (1 - fx) * fy + v11 * fx * fy


@dataclass(eq=False)
class ScalarGrid3D:
    """Scalar field sampled at the nodes of a :class:`GridSpec3D`.

    ``data`` has shape (nz, ny, nx) so that C-order raveling matches the
    file format's x-fastest ordering.
    """

    spec: GridSpec3D
    data: np.ndarray

    def __post_init__(self):
        nx, ny, nz = self.spec.counts
        self.data = np.asarray(self.data, dtype=float)
        if self.data.shape == (nx * ny * nz,):
            self.data = self.data.reshape(nz, ny, nx)
        if self.data.shape != (nz, ny, nx):
            raise GridError(
                f"data shape {self.data.shape} does not match counts {self.spec.counts}"
            )
        # +inf is allowed as a node mask (impassable); NaN and -inf are not
        if np.any(np.isnan(self.data)) or np.any(np.isneginf(self.data)):
            raise GridError("grid values must be finite or +inf")

    @classmethod
    def filled(cls, spec: GridSpec3D, value: float) -> "ScalarGrid3D":
        nx, ny, nz = spec.counts
        return cls(spec, np.full((nz, ny, nx), float(value)))

    def value_at(self, node: tuple[int, int, int]) -> float:
        i, j, k = node
        return float(self.data[k, j, i])

    def interpolate_many(self, points: np.ndarray) -> np.ndarray:
        p = np.atleast_2d(np.asarray(points, dtype=float))
        sp = self.spec
        i0, fx = _axis_locate(p[:, 0], sp.origin[0], sp.resolution[0], sp.counts[0], "x")
        j0, fy = _axis_locate(p[:, 1], sp.origin[1], sp.resolution[1], sp.counts[1], "y")
        k0, fz = _axis_locate(p[:, 2], sp.origin[2], sp.resolution[2], sp.counts[2], "z")
        d = self.data
        c000 = d[k0, j0, i0]
        c100 = d[k0, j0, i0 + 1]
        c010 = d[k0, j0 + 1, i0]
        c110 = d[k0, j0 + 1, i0 + 1]
        c001 = d[k0 + 1, j0, i0]
        c101 = d[k0 + 1, j0, i0 + 1]
        c011 = d[k0 + 1, j0 + 1, i0]
        c111 = d[k0 + 1, j0 + 1, i0 + 1]
        w000 = (1 - fx) * (1 - fy) * (1 - fz)
        w100 = fx * (1 - fy) * (1 - fz)
        w010 = (1 - fx) * fy * (1 - fz)
        w110 = fx * fy * (1 - fz)
        w001 = (1 - fx) * (1 - fy) * fz
        w101 = fx * (1 - fy) * fz
        w011 = (1 - fx) * fy * fz
        w111 = fx * fy * fz
        return (
            c000 * w000 + c100 * w100 + c010 * w010 + c110 * w110
            + c001 * w001 + c101 * w101 + c011 * w011 + c111 * w111
        )

    def interpolate(self, point) -> float:
        return float(self.interpolate_many(np.asarray(point, dtype=float).reshape(1, 3))[0])


def trilinear(grid: ScalarGrid3D, point) -> float:
    """Trilinear interpolation at ``point``; exact at grid nodes."""
    return grid.interpolate(point)


def check_waypoints(waypoints: np.ndarray) -> np.ndarray:
    wps = np.asarray(waypoints, dtype=float)
    if wps.ndim != 2 or wps.shape[1] != 3 or len(wps) < 2:
        raise GridError("waypoints must be an (n >= 2, 3) array")
    seg = np.linalg.norm(np.diff(wps, axis=0), axis=1)
    if np.any(seg == 0.0):
        raise GridError("consecutive waypoints must be distinct")
    return wps


def line_integral(grid: ScalarGrid3D, waypoints: np.ndarray) -> float:
    """Discrete line integral: trapezoid of the field along the waypoints."""
    wps = check_waypoints(waypoints)
    try:
        vals = grid.interpolate_many(wps)
    except GridError:
        # re-raise naming the first offending waypoint
        for index, wp in enumerate(wps):
            if not grid.spec.contains_point(wp):
                raise GridError(f"waypoint {index} at {tuple(wp)} is outside the grid") from None
        raise
    seg = np.linalg.norm(np.diff(wps, axis=0), axis=1)
    return float(np.sum((vals[:-1] + vals[1:]) / 2.0 * seg))


def _format_values(flat: np.ndarray, per_line: int) -> str:
    parts = [repr(float(v)) for v in flat]
    lines = [" ".join(parts[i : i + per_line]) for i in range(0, len(parts), per_line)]
    return "\n".join(lines)


def write_grid3(grid: ScalarGrid3D, path: str | Path) -> None:
    sp = grid.spec
    header = "GRID3 {} {} {} {} {} {} {} {} {}".format(
        *sp.counts, *(repr(float(v)) for v in sp.origin), *(repr(float(v)) for v in sp.resolution)
    )
    body = _format_values(grid.data.ravel(), sp.counts[0])
    Path(path).write_text(header + "\n" + body + "\n")


def read_grid3(path: str | Path) -> ScalarGrid3D:
    tokens = Path(path).read_text().split()
    if not tokens or tokens[0] != "GRID3":
        raise GridError(f"{path}: not a GRID3 file")
    nx, ny, nz = (int(t) for t in tokens[1:4])
    ox, oy, oz, rx, ry, rz = (float(t) for t in tokens[4:10])
    values = np.array([float(t) for t in tokens[10:]])
    if len(values) != nx * ny * nz:
        raise GridError(f"{path}: expected {nx * ny * nz} values, found {len(values)}")
    return ScalarGrid3D(GridSpec3D((ox, oy, oz), (rx, ry, rz), (nx, ny, nz)), values)


def write_grid2(spec: GridSpec2D, values: np.ndarray, path: str | Path) -> None:
    values = np.asarray(values, dtype=float)
    nx, ny = spec.counts
    if values.shape != (ny, nx):
        raise GridError(f"values shape {values.shape} does not match counts {spec.counts}")
    header = "GRID2 {} {} {} {} {} {}".format(
        nx, ny, *(repr(float(v)) for v in spec.origin), *(repr(float(v)) for v in spec.resolution)
    )
    Path(path).write_text(header + "\n" + _format_values(values.ravel(), nx) + "\n")


def read_grid2(path: str | Path) -> tuple[GridSpec2D, np.ndarray]:
    tokens = Path(path).read_text().split()
    if not tokens or tokens[0] != "GRID2":
        raise GridError(f"{path}: not a GRID2 file")
    nx, ny = int(tokens[1]), int(tokens[2])
    ox, oy, rx, ry = (float(t) for t in tokens[3:7])
    values = np.array([float(t) for t in tokens[7:]])
    if len(values) != nx * ny:
        raise GridError(f"{path}: expected {nx * ny} values, found {len(values)}")
    return GridSpec2D((ox, oy), (rx, ry), (nx, ny)), values.reshape(ny, nx)
