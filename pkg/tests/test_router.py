"""Graph search, variation operators, Pareto utilities and evolution."""

import numpy as np
import pytest

from skylaw.grids import GridSpec3D, ScalarGrid3D
from skylaw.nurbs import approximate_nurbs
from skylaw.router import (
    _NEIGHBORS,
    CurveTemplate,
    EvolveConfig,
    RouterError,
    UnreachableError,
    crowding_distance,
    dijkstra_grid,
    evaluate_individual,
    evolve,
    extreme_points,
    generate_weight_vectors,
    hypervolume,
    knee_point,
    non_dominated_sort,
    seeds_to_template,
    smooth_polypath,
)


def exhaustive_min_cost(cost: ScalarGrid3D, start, goal) -> float:
    """Independent oracle: branch-and-bound over all simple paths."""
    spec = cost.spec
    nx, ny, nz = spec.counts
    res = np.array(spec.resolution)
    data = cost.data
    lengths = {d: float(np.linalg.norm(res * d)) for d in _NEIGHBORS}
    best = [np.inf]

    def dfs(node, visited, acc):
        if acc >= best[0]:
            return
        if node == goal:
            best[0] = acc
            return
        cu = data[node[2], node[1], node[0]]
        for d in _NEIGHBORS:
            v = (node[0] + d[0], node[1] + d[1], node[2] + d[2])
            if not (0 <= v[0] < nx and 0 <= v[1] < ny and 0 <= v[2] < nz) or v in visited:
                continue
            cv = data[v[2], v[1], v[0]]
            visited.add(v)
            dfs(v, visited, acc + lengths[d] * (cu + cv) / 2.0)
            visited.remove(v)

    dfs(start, {start}, 0.0)
    return best[0]


class TestDijkstra:
    def test_uniform_diagonal(self):
        # 3x3 plane at 10 m spacing, corner to corner: two diagonal steps
        spec = GridSpec3D((0, 0, 0), (10, 10, 10), (3, 3, 2))
        grid = ScalarGrid3D.filled(spec, 1.0)
        path = dijkstra_grid(grid, (0, 0, 0), (2, 2, 0))
        assert path.cost == pytest.approx(20 * np.sqrt(2), rel=1e-12)
        assert path.nodes[0] == (0, 0, 0) and path.nodes[-1] == (2, 2, 0)

    def test_wall_with_gap(self):
        # a high-cost wall at x-index 1 with one cheap gap: the route
        # must thread the gap (verified against the exhaustive oracle)
        spec = GridSpec3D((0, 0, 0), (10, 10, 10), (3, 4, 2))
        data = np.ones((2, 4, 3))
        data[:, :, 1] = 1000.0
        data[0, 2, 1] = 1.0  # the gap at (1, 2, 0)
        grid = ScalarGrid3D(spec, data)
        path = dijkstra_grid(grid, (0, 0, 0), (2, 0, 0))
        assert (1, 2, 0) in path.nodes
        assert path.cost == pytest.approx(
            exhaustive_min_cost(grid, (0, 0, 0), (2, 0, 0)), abs=1e-12
        )

    def test_adjacent_single_edge(self):
        spec = GridSpec3D((0, 0, 0), (10, 10, 10), (3, 3, 2))
        grid = ScalarGrid3D.filled(spec, 2.0)
        path = dijkstra_grid(grid, (0, 0, 0), (1, 0, 0))
        assert path.nodes == [(0, 0, 0), (1, 0, 0)]
        assert path.cost == pytest.approx(20.0)

    def test_random_grids_match_exhaustive_enumeration(self):
        rng = np.random.default_rng(123)
        shapes = [(2, 2, 2), (3, 3, 2), (4, 3, 2), (4, 4, 2)]
        for trial in range(12):
            nx, ny, nz = shapes[trial % len(shapes)]
            spec = GridSpec3D((0, 0, 0), (10, 10, 10), (nx, ny, nz))
            grid = ScalarGrid3D(spec, rng.uniform(0.2, 2.0, nx * ny * nz))
            start, goal = (0, 0, 0), (nx - 1, ny - 1, nz - 1)
            assert dijkstra_grid(grid, start, goal).cost == pytest.approx(
                exhaustive_min_cost(grid, start, goal), abs=1e-12
            )

    def test_consistent_with_scipy(self):
        # cross-check against an independent library implementation
        from scipy.sparse import lil_matrix
        from scipy.sparse.csgraph import dijkstra as scipy_dijkstra

        rng = np.random.default_rng(9)
        nx, ny, nz = 4, 4, 3
        spec = GridSpec3D((0, 0, 0), (10, 10, 10), (nx, ny, nz))
        grid = ScalarGrid3D(spec, rng.uniform(0.1, 3.0, nx * ny * nz))
        n = nx * ny * nz

        def flat(i, j, k):
            return i + nx * (j + ny * k)

        res = np.array(spec.resolution)
        adj = lil_matrix((n, n))
        for i in range(nx):
            for j in range(ny):
                for k in range(nz):
                    for d in _NEIGHBORS:
                        v = (i + d[0], j + d[1], k + d[2])
                        if not (0 <= v[0] < nx and 0 <= v[1] < ny and 0 <= v[2] < nz):
                            continue
                        w = float(np.linalg.norm(res * d)) * (
                            grid.value_at((i, j, k)) + grid.value_at(v)
                        ) / 2.0
                        adj[flat(i, j, k), flat(*v)] = w
        dist = scipy_dijkstra(adj.tocsr(), indices=flat(0, 0, 0))
        mine = dijkstra_grid(grid, (0, 0, 0), (3, 3, 2))
        assert mine.cost == pytest.approx(dist[flat(3, 3, 2)], rel=1e-12)

    def test_unreachable_masked_goal(self):
        spec = GridSpec3D((0, 0, 0), (10, 10, 10), (3, 3, 2))
        data = np.ones((2, 3, 3))
        data[:, :, 1] = np.inf  # impassable slab
        with pytest.raises(UnreachableError):
            dijkstra_grid(ScalarGrid3D(spec, data), (0, 0, 0), (2, 0, 0))

    def test_negative_costs_rejected(self):
        spec = GridSpec3D((0, 0, 0), (10, 10, 10), (3, 3, 2))
        grid = ScalarGrid3D(spec, np.full(18, -1.0))
        with pytest.raises(RouterError):
            dijkstra_grid(grid, (0, 0, 0), (2, 0, 0))

    def test_same_start_goal_rejected(self):
        spec = GridSpec3D((0, 0, 0), (10, 10, 10), (3, 3, 2))
        grid = ScalarGrid3D.filled(spec, 1.0)
        with pytest.raises(RouterError):
            dijkstra_grid(grid, (1, 1, 0), (1, 1, 0))


class TestWeightVectors:
    def test_corners_only(self):
        w = generate_weight_vectors(3, 3)
        assert np.array_equal(w, np.eye(3))

    def test_corners_plus_centroid(self):
        w = generate_weight_vectors(4, 3)
        assert np.array_equal(w[:3], np.eye(3))
        assert np.allclose(w[3], [1 / 3, 1 / 3, 1 / 3])

    def test_sums_to_one(self):
        for n, e in ((5, 2), (12, 3), (70, 5)):
            w = generate_weight_vectors(n, e)
            assert w.shape == (n, e)
            assert np.all(np.abs(w.sum(axis=1) - 1.0) < 1e-12)
            assert len({tuple(v) for v in w.round(12)}) == n  # distinct

    def test_too_few_rejected(self):
        with pytest.raises(RouterError):
            generate_weight_vectors(2, 3)


class TestSmoothing:
    def test_collinear_fixed_point(self):
        pts = np.column_stack([np.arange(5) * 10.0, np.zeros(5), np.zeros(5)])
        assert np.allclose(smooth_polypath(pts), pts)

    def test_right_angle(self):
        pts = np.array([[0, 0, 0], [10, 0, 0], [10, 10, 0.0]])
        out = smooth_polypath(pts)
        assert np.allclose(out[1], [7.5, 2.5, 0.0])

    def test_endpoints_unchanged(self):
        rng = np.random.default_rng(3)
        pts = rng.uniform(0, 100, (9, 3))
        out = smooth_polypath(pts)
        assert np.array_equal(out[0], pts[0]) and np.array_equal(out[-1], pts[-1])


class TestSorting:
    def test_three_vector_example(self):
        ranks = non_dominated_sort(np.array([[1, 2], [2, 1], [3, 3]]))
        assert list(ranks) == [0, 0, 1]

    def test_identical_vectors_share_rank(self):
        ranks = non_dominated_sort(np.array([[1, 1], [1, 1], [1, 1]]))
        assert list(ranks) == [0, 0, 0]

    def test_matches_brute_force(self):
        rng = np.random.default_rng(8)
        vectors = rng.uniform(0, 1, (50, 3))
        ranks = non_dominated_sort(vectors)

        def dominates(a, b):
            return np.all(a <= b) and np.any(a < b)

        # brute force peeling
        remaining = list(range(50))
        expected = np.zeros(50, dtype=int)
        level = 0
        while remaining:
            front = [
                i
                for i in remaining
                if not any(dominates(vectors[j], vectors[i]) for j in remaining if j != i)
            ]
            for i in front:
                expected[i] = level
            remaining = [i for i in remaining if i not in front]
            level += 1
        assert np.array_equal(ranks, expected)


class TestCrowding:
    def test_two_members_infinite(self):
        d = crowding_distance(np.array([[0, 1], [1, 0.0]]))
        assert np.all(np.isinf(d))

    def test_evenly_spaced_middle(self):
        d = crowding_distance(np.array([[0, 0], [0.5, 0.5], [1, 1.0]]))
        assert d[1] == pytest.approx(2.0)
        assert np.isinf(d[0]) and np.isinf(d[2])

    def test_interior_duplicates_zero(self):
        d = crowding_distance(np.array([[1, 1], [1, 1], [1, 1.0]]))
        assert sorted(d)[0] == 0.0


class TestSelections:
    def test_knee_single_member(self):
        assert knee_point(np.array([[3.0, 4.0]])) == 0

    def test_knee_symmetric_elbow(self):
        assert knee_point(np.array([[0, 1], [0.3, 0.3], [1, 0.0]])) == 1

    def test_knee_matches_exhaustive_scan(self):
        rng = np.random.default_rng(10)
        front = rng.uniform(0, 5, (40, 3))
        lo, hi = front.min(axis=0), front.max(axis=0)
        normalized = (front - lo) / np.where(hi > lo, hi - lo, 1.0)
        expected = int(np.argmin(np.linalg.norm(normalized, axis=1)))
        assert knee_point(front) == expected

    def test_extremes(self):
        front = np.array([[0, 1], [1, 0.0]])
        assert extreme_points(front) == [0, 1]
        assert extreme_points(np.array([[2.0, 2.0]])) == [0, 0]

    def test_extremes_match_argmin(self):
        rng = np.random.default_rng(11)
        front = rng.uniform(0, 5, (30, 4))
        assert extreme_points(front) == [int(np.argmin(front[:, m])) for m in range(4)]


class TestHypervolume:
    def test_single_point(self):
        assert hypervolume(np.array([[0.5, 0.5]]), np.array([1, 1.0])) == pytest.approx(0.25)

    def test_matches_grid_oracle(self):
        rng = np.random.default_rng(12)
        pts = rng.uniform(0, 1, (6, 2))
        ref = np.array([1.2, 1.2])
        exact = hypervolume(pts, ref)
        # oracle: fine-grid membership count
        n = 400
        xs = np.linspace(0, 1.2, n, endpoint=False) + 1.2 / (2 * n)
        gx, gy = np.meshgrid(xs, xs)
        covered = np.zeros(gx.shape, dtype=bool)
        for p in pts:
            covered |= (gx >= p[0]) & (gy >= p[1])
        approx = covered.mean() * 1.2 * 1.2
        assert exact == pytest.approx(approx, abs=2e-2)

    def test_matches_grid_oracle_3d(self):
        rng = np.random.default_rng(13)
        pts = rng.uniform(0, 1, (5, 3))
        ref = np.ones(3) * 1.1
        exact = hypervolume(pts, ref)
        n = 60
        axes = [np.linspace(0, 1.1, n, endpoint=False) + 1.1 / (2 * n)] * 3
        gx, gy, gz = np.meshgrid(*axes)
        covered = np.zeros(gx.shape, dtype=bool)
        for p in pts:
            covered |= (gx >= p[0]) & (gy >= p[1]) & (gz >= p[2])
        approx = covered.mean() * 1.1**3
        assert exact == pytest.approx(approx, abs=5e-2)

    def test_dominated_points_add_nothing(self):
        a = hypervolume(np.array([[0.2, 0.2]]), np.array([1, 1.0]))
        b = hypervolume(np.array([[0.2, 0.2], [0.5, 0.5]]), np.array([1, 1.0]))
        assert a == pytest.approx(b)


def zigzag_seeds(n_seeds=3):
    """Small shared-endpoint seed paths for evolution tests."""
    rng = np.random.default_rng(55)
    paths = []
    for s in range(n_seeds):
        xs = np.linspace(0, 200, 12)
        ys = np.concatenate([[0.0], rng.uniform(10, 190, 10), [200.0]])
        zs = np.concatenate([[0.0], rng.uniform(10, 90, 10), [0.0]])
        paths.append(np.column_stack([xs, ys, zs]))
        paths[-1][0] = (0.0, 0.0, 0.0)
        paths[-1][-1] = (200.0, 200.0, 0.0)
    return paths


def toy_objectives():
    target_a = np.array([50.0, 150.0, 40.0])
    target_b = np.array([150.0, 50.0, 40.0])

    def near_a(wps):
        return float(np.linalg.norm(wps - target_a, axis=1).min())

    def near_b(wps):
        return float(np.linalg.norm(wps - target_b, axis=1).min())

    def length(wps):
        return float(np.linalg.norm(np.diff(wps, axis=0), axis=1).sum())

    return [near_a, near_b, length]


BOUNDS = np.array([[0.0, 200.0], [0.0, 200.0], [0.0, 100.0]])


def small_config(generations=15, seed=3):
    return EvolveConfig(
        population_size=20,
        generations=generations,
        mutation_sigma=15.0,
        seed=seed,
        bounds=BOUNDS,
    )


def small_run(generations=15, seed=3):
    template, curves = seeds_to_template(zigzag_seeds(), epsilon=25.0)
    return evolve(curves, toy_objectives(), small_config(generations, seed), delta=5.0)


class TestEvolve:
    def test_front_is_pairwise_non_dominated(self):
        pareto = small_run()
        vectors = pareto.objectives

        def dominates(a, b):
            return np.all(a <= b) and np.any(a < b)

        for i in range(len(vectors)):
            for j in range(len(vectors)):
                if i != j:
                    assert not dominates(vectors[i], vectors[j])

    def test_determinism(self):
        a = small_run(generations=6, seed=9)
        b = small_run(generations=6, seed=9)
        assert len(a) == len(b)
        assert np.array_equal(a.objectives, b.objectives)
        for ia, ib in zip(a.individuals, b.individuals):
            assert np.array_equal(ia.genome, ib.genome)

    def test_endpoints_bit_exact(self):
        pareto = small_run(generations=6)
        start, end = np.array([0, 0, 0.0]), np.array([200, 200, 0.0])
        for i in range(len(pareto)):
            curve = pareto.curve(i)
            assert np.array_equal(curve.start, start)
            assert np.array_equal(curve.end, end)

    def test_bounds_closure(self):
        pareto = small_run()
        for ind in pareto.individuals:
            pts = ind.genome.reshape(-1, 3)
            assert np.all(pts >= BOUNDS[:, 0]) and np.all(pts <= BOUNDS[:, 1])

    def test_archive_hypervolume_non_decreasing(self):
        pareto = small_run(generations=20)
        reference = np.array([500.0, 500.0, 2000.0])
        values = [hypervolume(snapshot, reference) for snapshot in pareto.archive_history]
        assert len(values) == 21
        for earlier, later in zip(values, values[1:]):
            assert later >= earlier - 1e-9

    def test_single_objective_no_regression(self):
        template, curves = seeds_to_template(zigzag_seeds(), epsilon=25.0)
        length = toy_objectives()[2]
        initial_best = min(
            evaluate_individual(template.genome_of(c), template, [length], 5.0)[0]
            for c in curves
        )
        pareto = evolve(curves, [length], small_config(generations=25), delta=5.0)
        assert pareto.objectives.min() <= initial_best + 1e-9

    def test_mismatched_endpoints_rejected(self):
        paths = zigzag_seeds()
        paths[1] = paths[1].copy()
        paths[1][-1] = (123.0, 45.0, 6.0)
        with pytest.raises(RouterError, match="endpoints"):
            seeds_to_template(paths, epsilon=25.0)

    def test_out_of_bounds_objective_is_inf(self):
        template, curves = seeds_to_template(zigzag_seeds(), epsilon=25.0)
        spec = GridSpec3D((0, 0, 0), (10, 10, 10), (3, 3, 2))  # tiny grid
        tiny = ScalarGrid3D.filled(spec, 1.0)
        from skylaw.grids import line_integral

        value = evaluate_individual(
            template.genome_of(curves[0]), template, [lambda w: line_integral(tiny, w)], 5.0
        )
        assert np.isinf(value[0])
