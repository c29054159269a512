"""Mission design over proposal paths: clearance, explanation, optimization.

Clearance scores a path by the arithmetic mean of the rule satisfaction
probability at its waypoints and compares it against a threshold.
Explanation probes every combination of parameter-group options and
reports each setting's score plus the per-group marginal impact;
optimization returns the score-maximizing setting.  Rejection curves
aggregate clearance scores across a path set into the fraction rejected
as the threshold sweeps [0, 1].
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from . import constitution as cl
from .inference import MissionSetting, satisfaction_probabilities
from .starmap import StarMap

DEFAULT_SETTING_LIMIT = 64


class MissionError(ValueError):
    """Bad mission-design input."""


class SettingLimitError(MissionError):
    """The parameter-group product exceeds the configured limit."""


@dataclass(frozen=True)
class ClearanceReport:
    """Mean waypoint satisfaction probability versus the threshold."""

    score: float
    threshold: float
    granted: bool
    waypoint_probabilities: tuple[float, ...]


def clearance(
    path: np.ndarray,
    prob_at: Callable[[np.ndarray], float],
    threshold: float,
) -> ClearanceReport:
    """Score a path and decide clearance (strictly greater wins).

    ``prob_at`` maps one waypoint to a satisfaction probability; the
    score is the plain mean over the waypoints, so it is invariant to
    waypoint order.
    """
    waypoints = np.atleast_2d(np.asarray(path, dtype=float))
    if waypoints.size == 0:
        raise MissionError("cannot decide clearance for an empty path")
    if not 0.0 <= threshold <= 1.0:
        raise MissionError(f"threshold must lie in [0, 1], got {threshold}")
    probs = tuple(float(prob_at(wp)) for wp in waypoints)
    score = float(np.mean(probs))
    return ClearanceReport(score, threshold, score > threshold, probs)


def clearance_with_inference(
    c: cl.Constitution,
    sm: StarMap,
    path: np.ndarray,
    setting: MissionSetting,
    threshold: float,
    query: str | None = None,
) -> ClearanceReport:
    """Clearance via exact per-waypoint inference of the logic objectives."""
    waypoints = np.atleast_2d(np.asarray(path, dtype=float))
    if waypoints.size == 0:
        raise MissionError("cannot decide clearance for an empty path")
    if not 0.0 <= threshold <= 1.0:
        raise MissionError(f"threshold must lie in [0, 1], got {threshold}")
    probs = satisfaction_probabilities(c, sm, waypoints, setting, query)
    score = float(np.mean(probs))
    return ClearanceReport(score, threshold, score > threshold, tuple(float(p) for p in probs))


@dataclass(frozen=True)
class ExplanationReport:
    """Clearance scores over the full setting product, best first.

    ``group_impacts[g]`` is the largest score change attainable by
    switching only group ``g``; groups whose options never influence the
    rules end up with zero impact.
    """

    entries: tuple[tuple[MissionSetting, float], ...]
    group_impacts: tuple[float, ...]

    def best(self) -> tuple[MissionSetting, float]:
        return self.entries[0]


def _enumerate_settings(
    c: cl.Constitution,
    allowed: Sequence[Sequence[str]] | None,
    limit: int,
) -> list[MissionSetting]:
    groups = c.parameter_groups
    if allowed is None:
        pools = [g.options for g in groups]
    else:
        if len(allowed) != len(groups):
            raise MissionError(
                f"allowed must list one option subset per group ({len(groups)})"
            )
        pools = []
        for group, subset in zip(groups, allowed):
            subset = tuple(subset) if subset else group.options
            unknown = set(subset) - set(group.options)
            if unknown:
                raise MissionError(f"options {sorted(unknown)} not in group {group.options}")
            pools.append(subset)
    total = 1
    for pool in pools:
        total *= len(pool)
    if total > limit:
        raise SettingLimitError(
            f"{total} parameter settings exceed the limit of {limit}; "
            "restrict the allowed options"
        )
    if not pools:
        return [MissionSetting(())]
    return [MissionSetting(tuple(combo)) for combo in itertools.product(*pools)]


def _score_settings(
    c: cl.Constitution,
    sm: StarMap,
    path: np.ndarray,
    settings: Sequence[MissionSetting],
    query: str | None = None,
) -> list[float]:
    waypoints = np.atleast_2d(np.asarray(path, dtype=float))
    if waypoints.size == 0:
        raise MissionError("cannot score an empty path")
    return [
        float(np.mean(satisfaction_probabilities(c, sm, waypoints, setting, query)))
        for setting in settings
    ]


def explain(
    c: cl.Constitution,
    sm: StarMap,
    path: np.ndarray,
    limit: int = DEFAULT_SETTING_LIMIT,
    query: str | None = None,
) -> ExplanationReport:
    """Score every mission setting for the path.

    Entries are sorted by score descending (enumeration order breaks
    ties); marginal impact per group is the largest |score difference|
    between settings differing only in that group.
    """
    settings = _enumerate_settings(c, None, limit)
    scores = _score_settings(c, sm, path, settings, query)

    impacts = []
    for g in range(len(c.parameter_groups)):
        by_rest: dict[tuple, list[float]] = {}
        for setting, score in zip(settings, scores):
            rest = setting.choices[:g] + setting.choices[g + 1 :]
            by_rest.setdefault(rest, []).append(score)
        impact = 0.0
        for values in by_rest.values():
            if len(values) > 1:
                impact = max(impact, max(values) - min(values))
        impacts.append(impact)

    order = sorted(range(len(settings)), key=lambda i: (-scores[i], i))
    entries = tuple((settings[i], scores[i]) for i in order)
    return ExplanationReport(entries, tuple(impacts))


def optimize_setting(
    c: cl.Constitution,
    sm: StarMap,
    path: np.ndarray,
    allowed: Sequence[Sequence[str]] | None = None,
    limit: int = DEFAULT_SETTING_LIMIT,
    query: str | None = None,
) -> tuple[MissionSetting, float]:
    """The clearance-maximizing setting within the allowed options.

    Ties break toward declaration order (the first maximal setting in
    enumeration order).  Matches the argmax over :func:`explain`.
    """
    settings = _enumerate_settings(c, allowed, limit)
    scores = _score_settings(c, sm, path, settings, query)
    best = max(range(len(settings)), key=lambda i: (scores[i], -i))
    return settings[best], scores[best]


@dataclass(frozen=True)
class RejectionCurve:
    """Fraction of paths with score strictly below each threshold."""

    thresholds: np.ndarray
    rates: np.ndarray
    area: float


def rejection_area(scores: Sequence[float], samples: int = 1001) -> tuple[RejectionCurve, float]:
    """Rejection rate over a uniform threshold sweep plus its area.

    The area (trapezoidal over [0, 1]) converges to 1 - mean(score) as
    the sample count grows.
    """
    values = np.asarray(list(scores), dtype=float)
    if values.size == 0:
        raise MissionError("need at least one clearance score")
    if samples < 2:
        raise MissionError("need at least two threshold samples")
    thresholds = np.linspace(0.0, 1.0, samples)
    rates = (values[None, :] < thresholds[:, None]).mean(axis=1)
    area = float(np.trapezoid(rates, thresholds))
    return RejectionCurve(thresholds, rates, area), area
