"""Two-stage many-objective router.

Stage 1 runs Dijkstra over the navigation lattice for a family of
weighted aggregations of the grid-based cost fields, producing optimal
polygonal paths.  These are smoothed, approximated as B-spline curves
and used to seed stage 2, a generational NSGA-II evolution of the
curves' interior control points under all declared objectives.  The
result is a Pareto set of smooth paths with knee and extreme selections.
"""

from __future__ import annotations

import heapq
import itertools
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Sequence

import numpy as np

from .grids import GridError, ScalarGrid3D
from .nurbs import NurbsCurve, approximate_nurbs, chordal_parameters, fit_fixed_endpoints, resample


class RouterError(ValueError):
    """Bad router input (terminals, costs, population)."""


class UnreachableError(RouterError):
    """No path between the requested terminals."""


# ----------------------------------------------------------------------
# Stage 1: weighted Dijkstra seeding


def generate_weight_vectors(n_vectors: int, n_objectives: int) -> np.ndarray:
    """Deterministic weight vectors on the unit simplex.

    The objective-axis corners come first, then the centroid, then a
    simplex lattice of increasing resolution until ``n_vectors`` distinct
    vectors exist.
    """
    if n_vectors < n_objectives:
        raise RouterError(
            f"need at least one weight vector per grid objective ({n_objectives})"
        )
    chosen: list[tuple[Fraction, ...]] = []
    seen: set[tuple[Fraction, ...]] = set()

    def push(vec: tuple[Fraction, ...]) -> None:
        if vec not in seen and len(chosen) < n_vectors:
            seen.add(vec)
            chosen.append(vec)

    one = Fraction(1)
    for i in range(n_objectives):
        push(tuple(one if j == i else Fraction(0) for j in range(n_objectives)))
    push(tuple(Fraction(1, n_objectives) for _ in range(n_objectives)))

    resolution = 2
    while len(chosen) < n_vectors:
        for combo in _compositions(resolution, n_objectives):
            push(tuple(Fraction(c, resolution) for c in combo))
            if len(chosen) == n_vectors:
                break
        resolution += 1
    return np.array([[float(f) for f in vec] for vec in chosen])


def _compositions(total: int, parts: int):
    """All tuples of ``parts`` non-negative ints summing to ``total``, lexicographic."""
    if parts == 1:
        yield (total,)
        return
    for head in range(total + 1):
        for tail in _compositions(total - head, parts - 1):
            yield (head,) + tail


@dataclass(eq=False)
class PolyPath:
    """Grid-optimal polygonal path: node indices plus metric coordinates."""

    nodes: list[tuple[int, int, int]]
    points: np.ndarray
    cost: float


_NEIGHBORS = [
    (di, dj, dk)
    for di in (-1, 0, 1)
    for dj in (-1, 0, 1)
    for dk in (-1, 0, 1)
    if (di, dj, dk) != (0, 0, 0)
]


def dijkstra_grid(
    cost: ScalarGrid3D, start: tuple[int, int, int], goal: tuple[int, int, int]
) -> PolyPath:
    """Minimum-cost path over the 26-neighborhood of the cost lattice.

    Edge cost is the segment length times the mean of the endpoint node
    costs, matching the trapezoid line integral the router optimizes.
    Ties break lexicographically by node index, so results are
    deterministic.  Node costs of +inf mask nodes out entirely.
    """
    spec = cost.spec
    nx, ny, nz = spec.counts
    for name, node in (("start", start), ("goal", goal)):
        if not all(0 <= node[a] < spec.counts[a] for a in range(3)):
            raise RouterError(f"{name} node {node} outside the grid")
    if start == goal:
        raise RouterError("start and goal must differ")
    data = cost.data
    finite = data[np.isfinite(data)]
    if finite.size and finite.min() < 0:
        raise RouterError("cost values must be >= 0 for shortest-path search")

    res = np.array(spec.resolution)
    step_lengths = {d: float(np.linalg.norm(res * d)) for d in _NEIGHBORS}

    dist: dict[tuple[int, int, int], float] = {start: 0.0}
    prev: dict[tuple[int, int, int], tuple[int, int, int]] = {}
    done: set[tuple[int, int, int]] = set()
    heap: list[tuple[float, tuple[int, int, int]]] = [(0.0, start)]
    while heap:
        d_u, u = heapq.heappop(heap)
        if u in done:
            continue
        done.add(u)
        if u == goal:
            break
        cost_u = data[u[2], u[1], u[0]]
        if not np.isfinite(cost_u):
            continue
        for delta in _NEIGHBORS:
            v = (u[0] + delta[0], u[1] + delta[1], u[2] + delta[2])
            if not (0 <= v[0] < nx and 0 <= v[1] < ny and 0 <= v[2] < nz) or v in done:
                continue
            cost_v = data[v[2], v[1], v[0]]
            if not np.isfinite(cost_v):
                continue
            edge = step_lengths[delta] * (cost_u + cost_v) / 2.0
            alt = d_u + edge
            if alt < dist.get(v, np.inf):
                dist[v] = alt
                prev[v] = u
                heapq.heappush(heap, (alt, v))
    if goal not in done:
        raise UnreachableError(f"goal {goal} is unreachable from {start}")
    nodes = [goal]
    while nodes[-1] != start:
        nodes.append(prev[nodes[-1]])
    nodes.reverse()
    points = np.array([spec.node_point(n) for n in nodes])
    return PolyPath(nodes, points, dist[goal])


def smooth_polypath(path: PolyPath | np.ndarray) -> np.ndarray:
    """One smoothing pass with the normalized kernel [1, 2, 1] / 4.

    Interior waypoints are convolved per axis; endpoints stay fixed.
    """
    points = path.points if isinstance(path, PolyPath) else np.asarray(path, dtype=float)
    if len(points) < 2:
        raise RouterError("need at least two waypoints to smooth")
    out = points.astype(float).copy()
    if len(points) > 2:
        out[1:-1] = (points[:-2] + 2.0 * points[1:-1] + points[2:]) / 4.0
    return out


# ----------------------------------------------------------------------
# Stage 2: NSGA-II over interior control points


@dataclass(frozen=True, eq=False)
class CurveTemplate:
    """Shared curve model of one evolution run.

    All individuals are curves with the same degree, knot vector and
    pinned endpoints; the genome holds only the flattened interior
    control points.
    """

    degree: int
    knots: np.ndarray
    start: np.ndarray
    end: np.ndarray

    @property
    def n_control(self) -> int:
        return len(self.knots) - self.degree - 1

    @property
    def genome_size(self) -> int:
        return 3 * (self.n_control - 2)

    @classmethod
    def from_curve(cls, curve: NurbsCurve) -> "CurveTemplate":
        return cls(curve.degree, curve.knots.copy(), curve.start.copy(), curve.end.copy())

    def genome_of(self, curve: NurbsCurve) -> np.ndarray:
        return curve.control_points[1:-1].ravel().copy()

    def curve_of(self, genome: np.ndarray) -> NurbsCurve:
        interior = np.asarray(genome, dtype=float).reshape(-1, 3)
        control = np.vstack([self.start, interior, self.end])
        return NurbsCurve(control, self.knots, self.degree)


@dataclass(eq=False)
class Individual:
    genome: np.ndarray
    objectives: np.ndarray | None = None


ObjectiveFn = Callable[[np.ndarray], float]


def evaluate_individual(
    individual: Individual | np.ndarray,
    template: CurveTemplate,
    objective_fns: Sequence[ObjectiveFn],
    delta: float,
) -> np.ndarray:
    """Objective vector of one genome: rebuild curve, resample, evaluate.

    A waypoint leaving a cost grid makes that objective +inf (dominated)
    instead of failing the evaluation.
    """
    genome = individual.genome if isinstance(individual, Individual) else individual
    curve = template.curve_of(genome)
    waypoints = resample(curve, delta)
    values = np.empty(len(objective_fns))
    for i, fn in enumerate(objective_fns):
        try:
            values[i] = fn(waypoints)
        except GridError:
            values[i] = np.inf
    if isinstance(individual, Individual):
        individual.objectives = values
    return values


def non_dominated_sort(vectors: np.ndarray) -> np.ndarray:
    """Fast non-dominated sorting; returns the front rank per vector."""
    vecs = np.asarray(vectors, dtype=float)
    n = len(vecs)
    ranks = np.full(n, -1, dtype=int)
    dominated_by: list[list[int]] = [[] for _ in range(n)]
    domination_count = np.zeros(n, dtype=int)
    for p in range(n):
        for q in range(p + 1, n):
            p_le = np.all(vecs[p] <= vecs[q])
            q_le = np.all(vecs[q] <= vecs[p])
            if p_le and not q_le:
                dominated_by[p].append(q)
                domination_count[q] += 1
            elif q_le and not p_le:
                dominated_by[q].append(p)
                domination_count[p] += 1
    front = [int(i) for i in np.flatnonzero(domination_count == 0)]
    rank = 0
    while front:
        next_front: list[int] = []
        for p in front:
            ranks[p] = rank
            for q in dominated_by[p]:
                domination_count[q] -= 1
                if domination_count[q] == 0:
                    next_front.append(q)
        front = next_front
        rank += 1
    return ranks


def crowding_distance(front_vectors: np.ndarray) -> np.ndarray:
    """NSGA-II crowding distance within one front.

    Boundary members per objective get +inf; interior members accumulate
    range-normalized neighbor gaps.
    """
    vecs = np.asarray(front_vectors, dtype=float)
    n = len(vecs)
    if n == 0:
        return np.zeros(0)
    distance = np.zeros(n)
    for m in range(vecs.shape[1]):
        order = np.argsort(vecs[:, m], kind="stable")
        distance[order[0]] = np.inf
        distance[order[-1]] = np.inf
        span = vecs[order[-1], m] - vecs[order[0], m]
        if span > 0 and np.isfinite(span):
            gaps = (vecs[order[2:], m] - vecs[order[:-2], m]) / span
            distance[order[1:-1]] += gaps
    return distance


def hypervolume(points: np.ndarray, reference: np.ndarray) -> float:
    """Exact dominated hypervolume (minimization) against ``reference``."""
    ref = np.asarray(reference, dtype=float)
    pts = [tuple(p) for p in np.asarray(points, dtype=float) if np.all(p < ref)]
    return _hv(pts, tuple(ref))


def _hv(points: list[tuple], reference: tuple) -> float:
    if not points:
        return 0.0
    if len(reference) == 1:
        return reference[0] - min(p[0] for p in points)
    levels = sorted({p[-1] for p in points})
    total = 0.0
    for i, level in enumerate(levels):
        upper = levels[i + 1] if i + 1 < len(levels) else reference[-1]
        height = upper - level
        if height <= 0:
            continue
        slab = [p[:-1] for p in points if p[-1] <= level]
        total += height * _hv(slab, reference[:-1])
    return total


@dataclass
class EvolveConfig:
    """NSGA-II run parameters (mutation acts per gene of the flat genome)."""

    population_size: int = 700
    generations: int = 100
    crossover_probability: float = 0.9
    mutation_probability: float = 1.0  # per individual
    gene_mutation_probability: float | None = None  # default: 1 / genome size
    mutation_sigma: float = 10.0
    seed: int = 0
    bounds: np.ndarray | None = None  # (3, 2) per-axis [min, max]
    track_archive: bool = True


@dataclass(eq=False)
class ParetoSet:
    """Front-0 of an evolution run plus per-generation archive snapshots."""

    template: CurveTemplate
    individuals: list[Individual]
    objectives: np.ndarray  # (front size, E)
    ranks: np.ndarray
    crowding: np.ndarray
    archive_history: list[np.ndarray] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.individuals)

    def curve(self, index: int) -> NurbsCurve:
        return self.template.curve_of(self.individuals[index].genome)


def _clamp(genome: np.ndarray, bounds: np.ndarray | None) -> np.ndarray:
    if bounds is None:
        return genome
    pts = genome.reshape(-1, 3)
    pts = np.clip(pts, bounds[:, 0], bounds[:, 1])
    return pts.ravel()


def _tournament(rng, ranks, crowding) -> int:
    a, b = rng.integers(0, len(ranks), 2)
    key_a = (ranks[a], -crowding[a])
    key_b = (ranks[b], -crowding[b])
    return int(a) if key_a <= key_b else int(b)


def _crossover(rng, parent_a: np.ndarray, parent_b: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    # one-point crossover at whole-coordinate boundaries
    n_points = len(parent_a) // 3
    if n_points < 2:
        return parent_a.copy(), parent_b.copy()
    cut = 3 * int(rng.integers(1, n_points))
    child_a = np.concatenate([parent_a[:cut], parent_b[cut:]])
    child_b = np.concatenate([parent_b[:cut], parent_a[cut:]])
    return child_a, child_b


def _mutate(rng, genome: np.ndarray, config: EvolveConfig) -> np.ndarray:
    if rng.random() >= config.mutation_probability:
        return genome
    p_gene = config.gene_mutation_probability
    if p_gene is None:
        p_gene = 1.0 / len(genome)
    mask = rng.random(len(genome)) < p_gene
    if np.any(mask):
        genome = genome.copy()
        genome[mask] += rng.normal(0.0, config.mutation_sigma, int(mask.sum()))
    return genome


def _crowding_by_rank(vectors: np.ndarray, ranks: np.ndarray) -> np.ndarray:
    crowding = np.zeros(len(vectors))
    for r in np.unique(ranks):
        members = np.flatnonzero(ranks == r)
        crowding[members] = crowding_distance(vectors[members])
    return crowding


def _nondominated(vectors: np.ndarray) -> np.ndarray:
    if len(vectors) == 0:
        return vectors
    return vectors[non_dominated_sort(vectors) == 0]


def evolve(
    initial: Sequence[NurbsCurve],
    objective_fns: Sequence[ObjectiveFn],
    config: EvolveConfig,
    delta: float = 5.0,
) -> ParetoSet:
    """Generational NSGA-II over the initial curves' control polygons.

    Binary tournament on (rank, crowding), one-point crossover at
    coordinate boundaries, per-gene Gaussian mutation clamped to bounds,
    and elitist environmental selection of ``population_size`` from
    parents plus offspring.  Deterministic for a fixed seed.  Returns
    front-0 of the final population; when ``track_archive`` is set, the
    per-generation non-dominated archive of every vector ever evaluated
    is recorded for convergence monitoring.
    """
    if not initial:
        raise RouterError("need at least one initial curve")
    template = CurveTemplate.from_curve(initial[0])
    for curve in initial[1:]:
        if not (
            np.array_equal(curve.start, template.start)
            and np.array_equal(curve.end, template.end)
        ):
            raise RouterError("initial curves must share their endpoints")
        if curve.degree != template.degree or not np.array_equal(curve.knots, template.knots):
            raise RouterError("initial curves must share degree and knot vector")
        if curve.n_control != template.n_control:
            raise RouterError("initial curves must share the control point count")

    rng = np.random.default_rng(config.seed)
    seeds = [template.genome_of(c) for c in initial]
    population: list[Individual] = [
        Individual(_clamp(g, config.bounds)) for g in seeds[: config.population_size]
    ]
    i = 0
    while len(population) < config.population_size:
        base = seeds[i % len(seeds)]
        population.append(Individual(_clamp(_mutate(rng, base.copy(), config), config.bounds)))
        i += 1

    for ind in population:
        evaluate_individual(ind, template, objective_fns, delta)

    vectors = np.array([ind.objectives for ind in population])
    archive = _nondominated(vectors.copy())
    history: list[np.ndarray] = [archive.copy()] if config.track_archive else []

    ranks = non_dominated_sort(vectors)
    crowding = _crowding_by_rank(vectors, ranks)

    for _ in range(config.generations):
        offspring: list[Individual] = []
        while len(offspring) < config.population_size:
            pa = population[_tournament(rng, ranks, crowding)].genome
            pb = population[_tournament(rng, ranks, crowding)].genome
            if rng.random() < config.crossover_probability:
                child_a, child_b = _crossover(rng, pa, pb)
            else:
                child_a, child_b = pa.copy(), pb.copy()
            for child in (child_a, child_b):
                if len(offspring) == config.population_size:
                    break
                child = _clamp(_mutate(rng, child, config), config.bounds)
                offspring.append(Individual(child))
        for ind in offspring:
            evaluate_individual(ind, template, objective_fns, delta)

        combined = population + offspring
        vectors = np.array([ind.objectives for ind in combined])
        if config.track_archive:
            new_vectors = np.array([ind.objectives for ind in offspring])
            archive = _nondominated(np.vstack([archive, new_vectors]))
            history.append(archive.copy())

        ranks_all = non_dominated_sort(vectors)
        selected: list[int] = []
        for r in itertools.count():
            members = [int(j) for j in np.flatnonzero(ranks_all == r)]
            if not members:
                break
            if len(selected) + len(members) <= config.population_size:
                selected.extend(members)
            else:
                slots = config.population_size - len(selected)
                member_crowding = crowding_distance(vectors[members])
                order = sorted(
                    range(len(members)), key=lambda j: (-member_crowding[j], members[j])
                )
                selected.extend(members[j] for j in order[:slots])
            if len(selected) == config.population_size:
                break
        population = [combined[j] for j in selected]
        vectors = np.array([ind.objectives for ind in population])
        ranks = non_dominated_sort(vectors)
        crowding = _crowding_by_rank(vectors, ranks)

    front = [int(j) for j in np.flatnonzero(ranks == 0)]
    front_vectors = vectors[front]
    front_crowding = crowding_distance(front_vectors)
    return ParetoSet(
        template,
        [population[j] for j in front],
        front_vectors,
        np.zeros(len(front), dtype=int),
        front_crowding,
        history,
    )


def knee_point(pareto: ParetoSet | np.ndarray) -> int:
    """Front member closest to the normalized ideal point.

    Objectives are min-max normalized over the front; ties break toward
    the lowest index.
    """
    vectors = pareto.objectives if isinstance(pareto, ParetoSet) else np.asarray(pareto)
    if len(vectors) == 0:
        raise RouterError("empty front")
    finite = np.where(np.isfinite(vectors), vectors, np.nan)
    lo = np.nanmin(finite, axis=0)
    hi = np.nanmax(finite, axis=0)
    span = np.where(hi > lo, hi - lo, 1.0)
    normalized = (vectors - lo) / span
    normalized = np.where(np.isfinite(normalized), normalized, 1.0)
    distances = np.linalg.norm(normalized, axis=1)
    return int(np.argmin(distances))


def extreme_points(pareto: ParetoSet | np.ndarray) -> list[int]:
    """Per-objective minimizer indices; ties break toward the lowest index."""
    vectors = pareto.objectives if isinstance(pareto, ParetoSet) else np.asarray(pareto)
    if len(vectors) == 0:
        raise RouterError("empty front")
    return [int(np.argmin(vectors[:, m])) for m in range(vectors.shape[1])]


# ----------------------------------------------------------------------
# Seeding helpers: polygonal seeds to a shared curve template


def seeds_to_template(
    smoothed_paths: Sequence[np.ndarray], epsilon: float, degree: int = 2
) -> tuple[CurveTemplate, list[NurbsCurve]]:
    """Fit all smoothed seed paths against one shared curve model.

    The adaptive fit determines the control point count per seed; the
    largest count wins and every seed is refit against a clamped uniform
    knot vector of that size, so genomes are crossover-compatible.
    Seeds must share their endpoints.
    """
    if not smoothed_paths:
        raise RouterError("no seed paths")
    first, last = smoothed_paths[0][0], smoothed_paths[0][-1]
    for path in smoothed_paths[1:]:
        if not (np.array_equal(path[0], first) and np.array_equal(path[-1], last)):
            raise RouterError("seed paths must share their endpoints")
    n_control = max(
        approximate_nurbs(path, epsilon, degree).n_control for path in smoothed_paths
    )
    interior = np.linspace(0.0, 1.0, n_control - degree + 1)[1:-1]
    knots = np.concatenate([np.zeros(degree + 1), interior, np.ones(degree + 1)])
    curves = []
    for path in smoothed_paths:
        t = chordal_parameters(path)
        curves.append(fit_fixed_endpoints(path, t, knots, degree))
    return CurveTemplate.from_curve(curves[0]), curves
