"""Spline path representation: clamped B-spline curves and approximation.

Paths are degree-2 clamped B-splines with uniform unit weights.  Fitting
is least-squares with both endpoints pinned to the data endpoints; the
knot vector comes from the chordal parameters by knot averaging.  The
adaptive fit grows the number of control points until the pointwise
deviation at the data parameters drops below a threshold.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.interpolate import BSpline


class CurveError(ValueError):
    """Degenerate input or inconsistent curve construction."""


@dataclass(eq=False)
class NurbsCurve:
    """Clamped B-spline curve (uniform weights, so plain B-spline)."""

    control_points: np.ndarray  # (n, 3)
    knots: np.ndarray  # (n + degree + 1,)
    degree: int = 2

    def __post_init__(self):
        self.control_points = np.asarray(self.control_points, dtype=float)
        self.knots = np.asarray(self.knots, dtype=float)
        n = len(self.control_points)
        if n < self.degree + 1:
            raise CurveError(f"need >= degree + 1 = {self.degree + 1} control points, got {n}")
        if len(self.knots) != n + self.degree + 1:
            raise CurveError("knot vector length must be n_control + degree + 1")
        if np.any(np.diff(self.knots) < 0):
            raise CurveError("knots must be non-decreasing")
        d = self.degree
        if not (np.all(self.knots[: d + 1] == self.knots[0]) and np.all(self.knots[-d - 1 :] == self.knots[-1])):
            raise CurveError("knot vector must be clamped at both ends")
        self._spline = BSpline(self.knots, self.control_points, self.degree, extrapolate=False)

    @property
    def n_control(self) -> int:
        return len(self.control_points)

    @property
    def start(self) -> np.ndarray:
        return self.control_points[0]

    @property
    def end(self) -> np.ndarray:
        return self.control_points[-1]

    def points(self, parameters: np.ndarray) -> np.ndarray:
        u = np.clip(np.asarray(parameters, dtype=float), self.knots[0], self.knots[-1])
        values = self._spline(u)
        # clamped ends interpolate the boundary control points exactly
        values[u == self.knots[0]] = self.control_points[0]
        values[u == self.knots[-1]] = self.control_points[-1]
        return values

    def point(self, parameter: float) -> np.ndarray:
        return self.points(np.array([parameter]))[0]

    def with_control_points(self, control_points: np.ndarray) -> "NurbsCurve":
        return NurbsCurve(control_points, self.knots, self.degree)


def chordal_parameters(points: np.ndarray) -> np.ndarray:
    """Normalized cumulative chord lengths in [0, 1]."""
    pts = np.asarray(points, dtype=float)
    seg = np.linalg.norm(np.diff(pts, axis=0), axis=1)
    total = seg.sum()
    if total <= 0:
        raise CurveError("points have zero total chord length")
    t = np.concatenate([[0.0], np.cumsum(seg)]) / total
    t[-1] = 1.0
    return t


def averaging_knots(parameters: np.ndarray, n_control: int, degree: int) -> np.ndarray:
    """Clamped knot vector by parameter averaging (stable for LSQ fits)."""
    m = len(parameters) - 1
    interior = []
    count = n_control - degree - 1
    if count > 0:
        d = (m + 1) / (n_control - degree)
        for j in range(1, count + 1):
            i = int(j * d)
            alpha = j * d - i
            i = min(max(i, 1), m)
            interior.append((1 - alpha) * parameters[i - 1] + alpha * parameters[i])
    return np.concatenate([np.zeros(degree + 1), np.array(interior), np.ones(degree + 1)])


def fit_fixed_endpoints(
    points: np.ndarray, parameters: np.ndarray, knots: np.ndarray, degree: int = 2
) -> NurbsCurve:
    """Least-squares B-spline through the data with pinned endpoints.

    The first and last control points are set to the first and last data
    points; the interior control points solve the normal equations.
    """
    pts = np.asarray(points, dtype=float)
    n_control = len(knots) - degree - 1
    design = BSpline.design_matrix(parameters, knots, degree).toarray()
    first, last = design[:, 0], design[:, -1]
    rhs = pts - np.outer(first, pts[0]) - np.outer(last, pts[-1])
    interior = design[:, 1:-1]
    if interior.shape[1] > 0:
        solution, *_ = np.linalg.lstsq(interior, rhs, rcond=None)
    else:
        solution = np.zeros((0, pts.shape[1]))
    control = np.vstack([pts[0], solution, pts[-1]])
    assert len(control) == n_control
    return NurbsCurve(control, knots, degree)


def max_deviation(curve: NurbsCurve, points: np.ndarray, parameters: np.ndarray) -> float:
    """Largest pointwise distance between the data and the curve."""
    return float(np.linalg.norm(curve.points(parameters) - points, axis=1).max())


def approximate_nurbs(
    points: np.ndarray, epsilon: float, degree: int = 2, initial_control: int = 4
) -> NurbsCurve:
    """Adaptive least-squares approximation of a waypoint sequence.

    Starting from ``initial_control`` control points, the fit is redone
    with one more control point until the max deviation at the chordal
    parameters is at most ``epsilon``.  With n_control equal to the
    number of input points the fit interpolates, so the loop always
    terminates.
    """
    pts = np.asarray(points, dtype=float)
    if len(pts) < 3:
        raise CurveError("need at least 3 points to approximate")
    if epsilon <= 0:
        raise CurveError("epsilon must be positive")
    t = chordal_parameters(pts)
    lower = max(degree + 1, min(initial_control, len(pts)))
    curve = None
    for n_control in range(lower, len(pts) + 1):
        knots = averaging_knots(t, n_control, degree)
        curve = fit_fixed_endpoints(pts, t, knots, degree)
        if max_deviation(curve, pts, t) <= epsilon:
            break
    return curve


def resample(curve: NurbsCurve, delta: float) -> np.ndarray:
    """Waypoints along the curve at near-uniform arc spacing <= delta.

    Endpoints are returned exactly.  Arc length is measured on a dense
    parameter table, so spacing is uniform up to the table resolution.
    """
    if delta <= 0:
        raise CurveError("delta must be positive")
    dense = max(512, curve.n_control * 32)
    u = np.linspace(0.0, 1.0, dense)
    samples = curve.points(u)
    seg = np.linalg.norm(np.diff(samples, axis=0), axis=1)
    arc = np.concatenate([[0.0], np.cumsum(seg)])
    length = arc[-1]
    if length <= 0:
        raise CurveError("cannot resample a zero-length curve")
    n_segments = max(1, int(np.ceil(length / delta)))
    targets = np.linspace(0.0, length, n_segments + 1)
    params = np.interp(targets, arc, u)
    waypoints = curve.points(params)
    waypoints[0] = curve.start
    waypoints[-1] = curve.end
    return waypoints
