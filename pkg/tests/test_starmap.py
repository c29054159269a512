"""Perturbation sampling, spatial relations and layer fitting."""

import numpy as np
import pytest

from skylaw.geo import FeatureMap, GeoFeature
from skylaw.grids import GridSpec2D
from skylaw.starmap import (
    SIGMA_FLOOR,
    PerturbationModel,
    StarMap,
    StarMapError,
    eval_distance,
    eval_over,
    fit_relation_layer,
    fit_star_map,
    interpolate_layer,
    sample_perturbed_map,
)

ORIGIN = (48.8677, 2.3391)


def unit_square_map(tag="park", at=(0.0, 0.0), size=1.0) -> FeatureMap:
    x, y = at
    ring = [(x, y), (x + size, y), (x + size, y + size), (x, y + size), (x, y)]
    feature = GeoFeature("sq", "polygon", ring, {tag})
    return FeatureMap(ORIGIN, (feature,), ((-100, 100), (-100, 100), (0, 0)))


class TestPerturbation:
    def test_zero_sigma_is_identity(self):
        fm = unit_square_map()
        model = PerturbationModel(translation_sigma=0.0, rotation_sigma=0.0, sample_count=2)
        out = sample_perturbed_map(fm, model, seed=5)
        assert np.array_equal(out.features[0].vertices, fm.features[0].vertices)

    def test_translation_statistics(self):
        # law of large numbers on the sampler: one point feature, 10k draws
        point = GeoFeature("p", "point", [(10.0, 20.0)], {"poi"})
        fm = FeatureMap(ORIGIN, (point,), ((-100, 100), (-100, 100), (0, 0)))
        model = PerturbationModel(translation_sigma=3.0, rotation_sigma=0.0, sample_count=2)
        rng_draws = np.array(
            [
                sample_perturbed_map(fm, model, seed=s).features[0].vertices[0]
                for s in range(10_000)
            ]
        )
        mean = rng_draws.mean(axis=0)
        std = rng_draws.std(axis=0, ddof=1)
        assert np.all(np.abs(mean - (10.0, 20.0)) < 0.1)
        assert np.all(np.abs(std - 3.0) < 3.0 * 0.05)

    def test_same_seed_identical(self):
        fm = unit_square_map()
        model = PerturbationModel(translation_sigma=2.0, rotation_sigma=0.1, sample_count=2)
        a = sample_perturbed_map(fm, model, seed=123)
        b = sample_perturbed_map(fm, model, seed=123)
        assert np.array_equal(a.features[0].vertices, b.features[0].vertices)

    def test_rotation_preserves_centroid(self):
        fm = unit_square_map()
        model = PerturbationModel(translation_sigma=0.0, rotation_sigma=0.5, sample_count=2)
        out = sample_perturbed_map(fm, model, seed=9)
        assert np.allclose(out.features[0].centroid(), fm.features[0].centroid(), atol=1e-9)

    def test_invalid_model(self):
        with pytest.raises(StarMapError):
            PerturbationModel(translation_sigma=-1.0)
        with pytest.raises(StarMapError):
            PerturbationModel(sample_count=1)


class TestRelations:
    def test_over_centroid(self):
        assert eval_over((0.5, 0.5), "park", unit_square_map())

    def test_over_far_outside(self):
        fm = unit_square_map()
        assert not eval_over((10_000.0, 0.0), "park", fm)

    def test_over_boundary_counts_inside(self):
        assert eval_over((0.5, 0.0), "park", unit_square_map())
        assert eval_over((1.0, 1.0), "park", unit_square_map())

    def test_over_union_of_polygons(self):
        a = GeoFeature("a", "polygon", [(0, 0), (1, 0), (1, 1), (0, 1), (0, 0)], {"park"})
        b = GeoFeature("b", "polygon", [(5, 5), (6, 5), (6, 6), (5, 6), (5, 5)], {"park"})
        fm = FeatureMap(ORIGIN, (a, b), ((-10, 10), (-10, 10), (0, 0)))
        assert eval_over((5.5, 5.5), "park", fm)
        assert not eval_over((3.0, 3.0), "park", fm)

    def test_over_missing_tag_is_false(self):
        assert not eval_over((0.5, 0.5), "embassy", unit_square_map())

    def test_distance_to_point_feature(self):
        point = GeoFeature("p", "point", [(0.0, 0.0)], {"pilot"})
        fm = FeatureMap(ORIGIN, (point,), ((-200, 200), (-200, 200), (0, 0)))
        assert eval_distance((100.0, 0.0), "pilot", fm) == pytest.approx(100.0)

    def test_distance_inside_polygon_is_zero(self):
        assert eval_distance((0.5, 0.5), "park", unit_square_map()) == 0.0

    def test_distance_equidistant(self):
        a = GeoFeature("a", "point", [(-10.0, 0.0)], {"poi"})
        b = GeoFeature("b", "point", [(10.0, 0.0)], {"poi"})
        fm = FeatureMap(ORIGIN, (a, b), ((-20, 20), (-20, 20), (0, 0)))
        assert eval_distance((0.0, 0.0), "poi", fm) == pytest.approx(10.0)

    def test_distance_missing_tag_raises(self):
        with pytest.raises(StarMapError, match="no features"):
            eval_distance((0.0, 0.0), "embassy", unit_square_map())

    def test_distance_to_polyline(self):
        road = GeoFeature("r", "polyline", [(0, 0), (100, 0)], {"road"})
        fm = FeatureMap(ORIGIN, (road,), ((-200, 200), (-200, 200), (0, 0)))
        assert eval_distance((50.0, 30.0), "road", fm) == pytest.approx(30.0)
        assert eval_distance((150.0, 0.0), "road", fm) == pytest.approx(50.0)


def small_grid(n=3, res=10.0) -> GridSpec2D:
    return GridSpec2D((0.0, 0.0), (res, res), (n, n))


class TestFitRelationLayer:
    def test_zero_noise_over_inside(self):
        fm = unit_square_map(size=15.0)  # covers [0, 15]^2
        model = PerturbationModel(translation_sigma=0.0, sample_count=3)
        layer = fit_relation_layer(fm, model, "over", "park", small_grid(), seed=0)
        assert layer.params["p"][1, 1] == 1.0  # node (10, 10) inside
        assert layer.params["p"][2, 2] == 0.0  # node (20, 20) outside

    def test_half_plane_edge_probability(self):
        # node sits exactly on the straight edge of a huge polygon: under
        # isotropic translation noise the hit probability is 1/2.
        big = GeoFeature(
            "half",
            "polygon",
            [(0, -5000), (5000, -5000), (5000, 5000), (0, 5000), (0, -5000)],
            {"zone"},
        )
        fm = FeatureMap(ORIGIN, (big,), ((-100, 100), (-100, 100), (0, 0)))
        model = PerturbationModel(translation_sigma=3.0, sample_count=10_000)
        grid = GridSpec2D((0.0, 0.0), (10.0, 10.0), (2, 2))
        layer = fit_relation_layer(fm, model, "over", "zone", grid, seed=21)
        assert layer.params["p"][0, 0] == pytest.approx(0.5, abs=0.05)

    def test_zero_noise_distance_moments(self):
        point = GeoFeature("p", "point", [(0.0, 0.0)], {"poi"})
        fm = FeatureMap(ORIGIN, (point,), ((-200, 200), (-200, 200), (0, 0)))
        model = PerturbationModel(translation_sigma=0.0, sample_count=5)
        grid = GridSpec2D((100.0, 0.0), (10.0, 10.0), (2, 2))
        layer = fit_relation_layer(fm, model, "distance", "poi", grid, seed=0)
        assert layer.params["mu"][0, 0] == pytest.approx(100.0, abs=1e-9)
        # zero spread collapses to the configured floor
        assert layer.params["sigma"][0, 0] == SIGMA_FLOOR

    def test_determinism_bit_identical(self):
        fm = unit_square_map(size=30.0)
        model = PerturbationModel(translation_sigma=2.0, sample_count=12)
        a = fit_relation_layer(fm, model, "over", "park", small_grid(), seed=3)
        b = fit_relation_layer(fm, model, "over", "park", small_grid(), seed=3)
        assert np.array_equal(a.params["p"], b.params["p"])

    def test_monotone_noise_inside_polygon(self):
        # strictly inside a polygon, p is non-increasing as noise grows
        fm = unit_square_map(size=30.0)
        grid = GridSpec2D((10.0, 10.0), (5.0, 5.0), (2, 2))
        previous = 1.1
        for sigma in (1.0, 3.0, 6.0, 10.0):
            model = PerturbationModel(translation_sigma=sigma, sample_count=10_000)
            layer = fit_relation_layer(fm, model, "over", "park", grid, seed=17)
            p = layer.params["p"][0, 0]
            assert p <= previous + 0.02
            previous = p

    def test_domain_invariants_after_interpolation(self):
        fm = unit_square_map(size=20.0)
        model = PerturbationModel(translation_sigma=4.0, sample_count=40)
        over = fit_relation_layer(fm, model, "over", "park", small_grid(), seed=2)
        dist = fit_relation_layer(fm, model, "distance", "park", small_grid(), seed=2)
        rng = np.random.default_rng(0)
        pts = rng.uniform(0, 20, (200, 2))
        p = over.interpolate_many(pts)["p"]
        assert np.all((p >= 0) & (p <= 1))
        params = dist.interpolate_many(pts)
        assert np.all(params["mu"] >= 0) and np.all(params["sigma"] >= 0)


class TestInterpolateLayer:
    def layer(self):
        grid = GridSpec2D((0, 0), (10, 10), (2, 2))
        p = np.array([[0.0, 1.0], [0.0, 1.0]])
        from skylaw.starmap import RelationLayer

        return RelationLayer("over", "park", grid, {"p": p})

    def test_exact_at_node(self):
        assert interpolate_layer(self.layer(), (10.0, 0.0))["p"] == 1.0

    def test_midpoint_half(self):
        assert interpolate_layer(self.layer(), (5.0, 0.0))["p"] == pytest.approx(0.5)

    def test_cell_center_bilinear(self):
        grid = GridSpec2D((0, 0), (10, 10), (2, 2))
        from skylaw.starmap import RelationLayer

        layer = RelationLayer(
            "over", "park", grid, {"p": np.array([[0.0, 0.0], [1.0, 1.0]])}
        )
        assert interpolate_layer(layer, (5.0, 5.0))["p"] == pytest.approx(0.5)

    def test_out_of_bounds(self):
        from skylaw.grids import GridError

        with pytest.raises(GridError):
            interpolate_layer(self.layer(), (100.0, 0.0))


class TestStarMapPersistence:
    def test_save_load_round_trip(self, tmp_path):
        fm = unit_square_map(size=30.0)
        model = PerturbationModel(translation_sigma=2.0, sample_count=8)
        sm = fit_star_map(
            fm, model, [("over", "park"), ("distance", "park")], small_grid(), seed=4
        )
        sm.save(tmp_path / "sm")
        again = StarMap.load(tmp_path / "sm")
        assert set(again.layers) == set(sm.layers)
        for key in sm.layers:
            for name in sm.layers[key].params:
                assert np.array_equal(again.layers[key].params[name], sm.layers[key].params[name])
        assert again.seed == sm.seed
        assert again.model == sm.model

    def test_fit_star_map_matches_individual_layers(self):
        fm = unit_square_map(size=30.0)
        model = PerturbationModel(translation_sigma=2.0, sample_count=10)
        relations = [("over", "park"), ("distance", "park")]
        combined = fit_star_map(fm, model, relations, small_grid(), seed=6)
        for kind, tag in relations:
            single = fit_relation_layer(fm, model, kind, tag, small_grid(), seed=6)
            for name, arr in single.params.items():
                assert np.array_equal(combined.layers[(kind, tag)].params[name], arr)
