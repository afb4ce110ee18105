import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gcann.kinematics import (
    DeformationState,
    Orientation,
    fiber_frame,
    invariant_derivatives_check,
    invariants,
    invariants_from_stretches,
)

stretch = st.floats(0.8, 1.6)


def matrix_oracle(l1, l2, orientation):
    """Invariants from the full 3x3 tensors, independent of the closed forms."""
    F = np.diag([l1, l2, 1.0 / (l1 * l2)])
    C = F.T @ F
    I1 = np.trace(C)
    I2 = 0.5 * (I1**2 - np.trace(C @ C))
    frame = fiber_frame(orientation)
    return np.array([I1, I2] + [v @ C @ v for v in (frame.w, frame.sI, frame.sII)])


class TestFiberFrame:
    @pytest.mark.parametrize("orientation", list(Orientation))
    def test_unit_and_planar(self, orientation):
        frame = fiber_frame(orientation)
        for v in frame.vectors:
            assert abs(np.linalg.norm(v) - 1.0) < 1e-12
            assert v[2] == 0.0

    @pytest.mark.parametrize("orientation", list(Orientation))
    def test_offset_angles(self, orientation):
        frame = fiber_frame(orientation)

        def signed(a, b):
            return np.degrees(np.arctan2(a[0] * b[1] - a[1] * b[0], a @ b))

        assert abs(signed(frame.w, frame.sI) - 60.0) < 1e-12
        assert abs(signed(frame.w, frame.sII) + 60.0) < 1e-12

    def test_offset_warp_direction(self):
        np.testing.assert_allclose(fiber_frame(Orientation.OFFSET).w, [np.sqrt(0.5), np.sqrt(0.5), 0], atol=1e-15)

    def test_parse_aliases(self):
        assert Orientation.parse("0-90") is Orientation.ALIGNED
        assert Orientation.parse("pm45") is Orientation.OFFSET
        with pytest.raises(ValueError):
            Orientation.parse("30-120")


class TestInvariants:
    def test_identity(self):
        inv = invariants(DeformationState(1.0, 1.0, "0-90"))
        np.testing.assert_allclose(inv.values, [3, 3, 1, 1, 1], atol=1e-15)

    def test_strip_aligned(self):
        inv = invariants(DeformationState(2.0, 1.0, "0-90"))
        np.testing.assert_allclose(inv.values, [5.25, 5.25, 4.0, 1.75, 1.75], rtol=1e-14)

    def test_strip_offset_warp(self):
        inv = invariants(DeformationState(2.0, 1.0, "pm45"))
        assert inv.I4w == pytest.approx(2.5, rel=1e-14)

    def test_named_access(self):
        inv = invariants(DeformationState(1.2, 1.1))
        assert inv.I1 == inv.values[0]
        d1, d2 = inv.dI4w
        assert d1 == inv.d1[2] and d2 == inv.d2[2]
        with pytest.raises(AttributeError):
            inv.I9

    @pytest.mark.parametrize("l1,l2", [(0.0, 1.0), (1.0, -0.5)])
    def test_domain_error(self, l1, l2):
        with pytest.raises(ValueError):
            DeformationState(l1, l2)

    def test_vectorized_matches_scalar(self):
        l1 = np.array([1.0, 1.2, 0.9])
        l2 = np.array([1.1, 1.0, 1.3])
        batch = invariants_from_stretches(l1, l2, Orientation.OFFSET).values
        for k in range(3):
            np.testing.assert_array_equal(batch[:, k], invariants(DeformationState(l1[k], l2[k], "pm45")).values)

    @settings(max_examples=200, deadline=None)
    @given(stretch, stretch, st.sampled_from(list(Orientation)))
    def test_matrix_oracle(self, l1, l2, orientation):
        inv = invariants(DeformationState(l1, l2, orientation))
        np.testing.assert_allclose(inv.values, matrix_oracle(l1, l2, orientation), rtol=1e-12)

    @settings(max_examples=200, deadline=None)
    @given(stretch, stretch)
    def test_isotropic_lower_bound(self, l1, l2):
        inv = invariants(DeformationState(l1, l2))
        assert inv.I1 >= 3 - 1e-12 and inv.I2 >= 3 - 1e-12


class TestSymmetry:
    def test_swap_rules(self):
        rng = np.random.default_rng(3)
        for l1, l2 in rng.uniform(0.8, 1.6, (100, 2)):
            a = invariants(DeformationState(l1, l2, "0-90"))
            b = invariants(DeformationState(l2, l1, "0-90"))
            # the 90 degree rotated warp direction reads the other axis
            rotated = np.array([0.0, 1.0, 0.0])
            assert abs(b.I4w - rotated @ np.diag(DeformationState(l1, l2).cauchy_green()) @ rotated) < 1e-12
            assert abs(a.I4w - l1**2) < 1e-12
            c = invariants(DeformationState(l1, l2, "pm45"))
            d = invariants(DeformationState(l2, l1, "pm45"))
            assert abs(c.I4w - d.I4w) < 1e-12
            assert abs(c.I4sI - d.I4sII) < 1e-12
            assert abs(c.I4sII - d.I4sI) < 1e-12

    @given(stretch)
    def test_equibiaxial_offset_fibers(self, lam):
        inv = invariants(DeformationState(lam, lam, "pm45"))
        assert inv.I4sI == inv.I4sII


class TestDerivativeCheck:
    @pytest.mark.parametrize("l1,l2,orientation", [
        (1.3, 0.9, "0-90"),
        (1.0, 1.0, "pm45"),
        (1.5, 1.5, "pm45"),
    ])
    def test_examples(self, l1, l2, orientation):
        assert invariant_derivatives_check(DeformationState(l1, l2, orientation), 1e-6) < 1e-6

    def test_random_states(self):
        rng = np.random.default_rng(0)
        l = rng.uniform(0.8, 1.6, (1000, 2))
        for orientation in Orientation:
            err = invariant_derivatives_check(DeformationState(l[:, 0], l[:, 1], orientation), 1e-6)
            assert err < 1e-6

    def test_step_bounds(self):
        with pytest.raises(ValueError):
            invariant_derivatives_check(DeformationState(1.1, 1.0), 1e-2)
