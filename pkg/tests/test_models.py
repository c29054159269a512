"""Physical objective models: radio, noise, risk, energy, compliance."""

import numpy as np
import pytest

from skylaw.geo import FeatureMap, GeoFeature
from skylaw.grids import GridSpec3D, ScalarGrid3D
from skylaw.models import (
    ModelError,
    build_noise_grid,
    build_radio_grid,
    build_risk_grid,
    compliance_cost_grid,
    energy_cost,
    energy_from_lengths,
    path_lengths,
    resolve_model_key,
)
from skylaw.nurbs import approximate_nurbs, resample

ORIGIN = (48.8677, 2.3391)


def square(x0, y0, w, h):
    return [(x0, y0), (x0 + w, y0), (x0 + w, y0 + h), (x0, y0 + h), (x0, y0)]


class TestRadio:
    def spec(self):
        return GridSpec3D((0, 0, 0), (10, 10, 25), (5, 5, 5))

    def test_value_at_tower_is_d0(self):
        # tower at a grid column, queried at the tower height
        grid = build_radio_grid([(20.0, 20.0)], self.spec(), d0=-200.0, mu=1.0, tower_height=75.0)
        assert grid.value_at((2, 2, 3)) == -200.0  # node (20, 20, 75)

    def test_inverse_square_values(self):
        # r = 1 -> -200/4 = -50 and r = 9 -> -200/100 = -2, by hand
        spec = GridSpec3D((0, 0, 74), (10, 10, 1), (2, 2, 10))
        grid = build_radio_grid([(0.0, 0.0)], spec, d0=-200.0, mu=1.0, tower_height=75.0)
        assert grid.value_at((0, 0, 2)) == pytest.approx(-50.0)  # z = 76, r = 1
        assert grid.value_at((0, 0, 1)) == pytest.approx(-200.0)  # z = 75, r = 0
        spec9 = GridSpec3D((0, 0, 75), (9, 9, 9), (2, 2, 2))
        grid9 = build_radio_grid([(0.0, 0.0)], spec9, d0=-200.0, mu=1.0, tower_height=75.0)
        assert grid9.value_at((1, 0, 0)) == pytest.approx(-2.0)  # r = 9

    def test_monotone_along_ray(self):
        grid = build_radio_grid([(0.0, 0.0)], self.spec())
        values = [grid.value_at((i, 0, 3)) for i in range(5)]
        assert all(a <= b for a, b in zip(values, values[1:]))
        assert all(v < 0 for v in values)

    def test_nearest_tower_wins(self):
        # the closest tower sets r, so the field is the pointwise minimum
        spec = self.spec()
        both = build_radio_grid([(0.0, 0.0), (40.0, 40.0)], spec)
        left = build_radio_grid([(0.0, 0.0)], spec)
        right = build_radio_grid([(40.0, 40.0)], spec)
        assert np.array_equal(both.data, np.minimum(left.data, right.data))

    def test_parameter_validation(self):
        with pytest.raises(ModelError):
            build_radio_grid([], self.spec())
        with pytest.raises(ModelError):
            build_radio_grid([(0, 0)], self.spec(), d0=5.0)
        with pytest.raises(ModelError):
            build_radio_grid([(0, 0)], self.spec(), mu=0.0)


def road_map():
    road = GeoFeature("r", "polyline", [(0, 50), (100, 50)], {"primary"})
    return FeatureMap(ORIGIN, (road,), ((0, 100), (0, 100), (0, 100)))


class TestNoise:
    def spec(self):
        return GridSpec3D((0, 0, 0), (10, 10, 10), (11, 11, 11))

    def test_over_road_at_ground(self):
        grid = build_noise_grid(road_map(), self.spec())
        assert grid.value_at((5, 5, 0)) == pytest.approx(0.2)

    def test_zero_at_ceiling(self):
        grid = build_noise_grid(road_map(), self.spec())
        assert np.all(grid.data[-1] == 0.0)

    def test_off_road_baseline(self):
        grid = build_noise_grid(road_map(), self.spec())
        assert grid.value_at((5, 0, 0)) == pytest.approx(1.0)  # 50 m from road

    def test_within_buffer(self):
        grid = build_noise_grid(road_map(), self.spec())
        # node (50, 60) is 10 m from the road: inside the 15 m buffer
        assert grid.value_at((5, 6, 0)) == pytest.approx(0.2)
        # node (50, 70) is 20 m away: outside
        assert grid.value_at((5, 7, 0)) == pytest.approx(1.0)

    def test_values_in_unit_range(self):
        grid = build_noise_grid(road_map(), self.spec())
        assert np.all((grid.data >= 0) & (grid.data <= 1))


class TestRisk:
    def spec(self):
        return GridSpec3D((0, 0, 0), (10, 10, 20), (11, 11, 11))

    def test_over_building_at_ground(self):
        block = GeoFeature("b", "polygon", square(40, 40, 20, 20), {"building"})
        fm = FeatureMap(ORIGIN, (block,), ((0, 100), (0, 100), (0, 200)))
        grid = build_risk_grid(fm, self.spec())
        assert grid.value_at((5, 5, 0)) == pytest.approx(0.2)

    def test_uniform_base_at_ceiling(self):
        # no buildings: base is 1 everywhere, blur of a constant is the
        # constant, and the ceiling factor doubles it
        empty = FeatureMap(ORIGIN, (
            GeoFeature("p", "point", [(50.0, 50.0)], {"poi"}),
        ), ((0, 100), (0, 100), (0, 200)))
        grid = build_risk_grid(empty, self.spec())
        assert np.allclose(grid.data[-1], 2.0)
        assert np.allclose(grid.data[0], 1.0)

    def test_total_variation_of_shape_non_increasing(self):
        # smoothing dominates once the altitude amplification is removed
        block = GeoFeature("b", "polygon", square(40, 40, 20, 20), {"building"})
        fm = FeatureMap(ORIGIN, (block,), ((0, 100), (0, 100), (0, 200)))
        grid = build_risk_grid(fm, self.spec())
        zs = grid.spec.axes[2]
        z_max = zs[-1]

        def tv(a):
            return np.abs(np.diff(a, axis=0)).sum() + np.abs(np.diff(a, axis=1)).sum()

        shape_tv = [tv(grid.data[k] / (1.0 + zs[k] / z_max)) for k in range(len(zs))]
        assert all(a >= b - 1e-9 for a, b in zip(shape_tv, shape_tv[1:]))

    def test_altitude_amplification_monotone(self):
        block = GeoFeature("b", "polygon", square(40, 40, 20, 20), {"building"})
        fm = FeatureMap(ORIGIN, (block,), ((0, 100), (0, 100), (0, 200)))
        grid = build_risk_grid(fm, self.spec())
        means = grid.data.mean(axis=(1, 2))
        assert all(a <= b + 1e-9 for a, b in zip(means, means[1:]))


class TestEnergy:
    def test_level_kilometer(self):
        # 0.5 * 1.2 * 14^2 + 9.12 * 1000 = 9237.6 by hand
        path = np.array([[0, 0, 50], [500, 0, 50], [1000, 0, 50]])
        assert energy_cost(path, 1.2, 14.0, 9.12) == pytest.approx(9237.6, rel=1e-9)

    def test_climb_and_descent(self):
        # adds 9.12 * (10 * 100 + 15 * 100) over the same horizontal km
        path = np.array([[0, 0, 0], [500, 0, 100], [1000, 0, 0]])
        horizontal, climb, descent = path_lengths(path)
        assert (horizontal, climb, descent) == (1000.0, 100.0, 100.0)
        assert energy_cost(path, 1.2, 14.0, 9.12) == pytest.approx(32_037.6, rel=1e-9)

    def test_kinetic_term_only(self):
        assert energy_from_lengths(0.0, 0.0, 0.0, 1.2, 14.0, 9.12) == pytest.approx(117.6)

    def test_horizontal_reversal_invariant(self):
        rng = np.random.default_rng(11)
        path = np.column_stack([rng.uniform(0, 500, 6), rng.uniform(0, 500, 6), np.full(6, 30.0)])
        fwd = energy_cost(path, 1.2, 14.0, 9.12)
        rev = energy_cost(path[::-1], 1.2, 14.0, 9.12)
        assert fwd == pytest.approx(rev, rel=1e-12)

    def test_vertical_reversal_swaps_climb_descent(self):
        path = np.array([[0, 0, 0], [100, 0, 80], [200, 0, 30.0]])
        h, climb, descent = path_lengths(path)
        h2, climb2, descent2 = path_lengths(path[::-1])
        assert (climb2, descent2) == (descent, climb)
        delta = energy_cost(path[::-1], 1.2, 14.0, 9.12) - energy_cost(path, 1.2, 14.0, 9.12)
        assert delta == pytest.approx(9.12 * (10 - 15) * (descent - climb), rel=1e-9)

    def test_positive_parameters_required(self):
        path = np.array([[0, 0, 0], [10, 0, 0]])
        with pytest.raises(ModelError):
            energy_cost(path, -1.0, 14.0, 9.12)


class TestComplianceCost:
    def spec(self):
        return GridSpec3D((0, 0, 0), (10, 10, 10), (2, 2, 2))

    def test_certain_field_zero_cost(self):
        cost = compliance_cost_grid(ScalarGrid3D.filled(self.spec(), 1.0))
        assert np.all(cost.data == 0.0)

    def test_impossible_field_unit_cost(self):
        cost = compliance_cost_grid(ScalarGrid3D.filled(self.spec(), 0.0))
        assert np.all(cost.data == 1.0)

    def test_affine(self):
        cost = compliance_cost_grid(ScalarGrid3D.filled(self.spec(), 0.25))
        assert np.all(cost.data == 0.75)

    def test_domain_violation(self):
        with pytest.raises(ModelError):
            compliance_cost_grid(ScalarGrid3D.filled(self.spec(), 1.5))


class TestResample:
    def straight_curve(self, length=100.0):
        pts = np.column_stack([np.linspace(0, length, 11), np.zeros(11), np.zeros(11)])
        return approximate_nurbs(pts, 1.0)

    def test_hundred_meters_at_five(self):
        wps = resample(self.straight_curve(), 5.0)
        assert len(wps) == 21

    def test_delta_larger_than_curve(self):
        wps = resample(self.straight_curve(), 500.0)
        assert len(wps) == 2

    def test_endpoints_exact(self):
        curve = self.straight_curve()
        wps = resample(curve, 7.0)
        assert np.array_equal(wps[0], curve.start)
        assert np.array_equal(wps[-1], curve.end)


class TestRegistry:
    def test_reference_stem_resolution(self):
        assert resolve_model_key("radio", "./models/radio.py", {}) == "radio"
        assert resolve_model_key("anything", "noise", {}) == "noise"

    def test_binding_overrides(self):
        assert resolve_model_key("disturbance", "./custom.py", {"disturbance": "radio"}) == "radio"

    def test_unknown_model(self):
        with pytest.raises(ModelError, match="unknown model"):
            resolve_model_key("foo", "./models/magnetic.py", {})
