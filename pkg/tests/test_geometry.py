import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from heliofit.geometry import (
    Direction,
    angle_between,
    direction_to_skyangular,
    skyangular_to_direction,
)


class TestDirection:
    def test_rejects_out_of_range_zenith(self):
        with pytest.raises(ValueError):
            Direction(-0.1, 0.0)
        with pytest.raises(ValueError):
            Direction(math.pi + 0.01, 0.0)

    def test_azimuth_normalized(self):
        assert Direction(0.5, -0.5).azimuth == pytest.approx(2 * math.pi - 0.5)
        assert Direction(0.5, 2 * math.pi + 0.25).azimuth == pytest.approx(0.25)

    @given(
        st.floats(0.01, math.pi - 0.01),
        st.floats(0.0, 2 * math.pi - 1e-6),
    )
    @settings(max_examples=200)
    def test_vector_round_trip(self, zen, az):
        d = Direction(zen, az)
        back = Direction.from_vector(d.to_vector())
        assert abs(back.zenith - d.zenith) < 1e-9
        # azimuth wraps; compare via angular distance
        da = abs(back.azimuth - d.azimuth)
        assert min(da, 2 * math.pi - da) * math.sin(zen) < 1e-9


class TestAngleBetween:
    def test_identical_is_zero(self):
        d = Direction(0.4, 1.3)
        assert angle_between(d, d) == pytest.approx(0.0, abs=1e-9)

    def test_zenith_vs_horizon_is_quarter_turn(self):
        assert angle_between(Direction(0.0, 0.0), Direction(math.pi / 2, 0.0)) == pytest.approx(
            math.pi / 2
        )

    def test_known_pair(self):
        # frozen from an independent unit-vector dot-product script
        assert angle_between(Direction(0.3, 1.0), Direction(0.7, 2.0)) == pytest.approx(
            0.5853042357276944, abs=1e-12
        )


class TestSkyangular:
    def test_center_is_zenith(self):
        zen, az = skyangular_to_direction(0.5, 0.5)
        assert zen == pytest.approx(0.0)

    def test_right_rim_is_horizon_azimuth_zero(self):
        zen, az = skyangular_to_direction(1.0, 0.5)
        assert zen == pytest.approx(math.pi / 2)
        assert az == pytest.approx(0.0)

    def test_quarter_radius(self):
        zen, _ = skyangular_to_direction(0.75, 0.5)
        assert zen == pytest.approx(math.pi / 4)

    def test_outside_disk_invalid(self):
        zen, az = skyangular_to_direction(0.99, 0.99)
        assert math.isnan(zen) and math.isnan(az)

    def test_zenith_maps_to_center(self):
        assert direction_to_skyangular(0.0, 0.0) == pytest.approx((0.5, 0.5))

    def test_known_inverse_point(self):
        # (zenith=pi/4, azimuth=pi): r = 1/4, u = 0.5 - 0.25
        u, v = direction_to_skyangular(math.pi / 4, math.pi)
        assert (u, v) == pytest.approx((0.25, 0.5), abs=1e-12)

    def test_lower_hemisphere_rejected(self):
        with pytest.raises(ValueError):
            direction_to_skyangular(math.pi / 2 + 0.1, 0.0)

    def test_continuous_round_trip(self, rng):
        zen = rng.uniform(0.0, math.pi / 2, 10_000)
        az = rng.uniform(0.0, 2 * math.pi, 10_000)
        u, v = direction_to_skyangular(zen, az)
        zen2, az2 = skyangular_to_direction(u, v)
        assert np.max(np.abs(zen2 - zen)) < 1e-9
        da = np.abs(az2 - az)
        da = np.minimum(da, 2 * math.pi - da)
        assert np.max(da * np.sin(np.maximum(zen, 1e-6))) < 1e-9

    def test_quantized_round_trip_half_pixel_at_128(self, rng):
        # direction -> nearest pixel center -> direction stays within the
        # worst-case angular extent of half a pixel diagonal; directions are
        # kept off the rim so the nearest center stays inside the disk
        n = 128
        zen = rng.uniform(0.0, math.pi / 2 - 0.02, 10_000)
        az = rng.uniform(0.0, 2 * math.pi, 10_000)
        u, v = direction_to_skyangular(zen, az)
        col = np.clip(np.round(u * n - 0.5), 0, n - 1)
        row = np.clip(np.round(v * n - 0.5), 0, n - 1)
        zen2, az2 = skyangular_to_direction((col + 0.5) / n, (row + 0.5) / n)
        cosg = np.sin(zen) * np.sin(zen2) * np.cos(az - az2) + np.cos(zen) * np.cos(zen2)
        ang = np.arccos(np.clip(cosg, -1, 1))
        assert np.max(ang) <= math.pi * math.sqrt(2) / 2 / n + 1e-12
