import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gcann.energy_terms import (
    FROZEN_INNER,
    LIBRARY,
    N_TERMS,
    TERM_NAMES,
    Activation,
    ConstraintError,
    Invariant,
    eval_library,
    eval_term,
    library_stress,
    reduced_energy,
    term_by_name,
    term_stress_integral,
    term_stress_integrals,
)
from gcann.kinematics import DeformationState, Orientation, invariants, invariants_from_stretches


def fd_stress(spec, l1, l2, orientation, wstar, h=1e-6):
    f = (reduced_energy(spec, l1 + h, l2, orientation, wstar)
         - reduced_energy(spec, l1 - h, l2, orientation, wstar)) / (2 * h)
    g = (reduced_energy(spec, l1, l2 + h, orientation, wstar)
         - reduced_energy(spec, l1, l2 - h, orientation, wstar)) / (2 * h)
    return f, g


def rel_err(a, b, floor=1e-3):
    return np.abs(a - b) / np.maximum(np.abs(b), floor)


class TestLibrary:
    def test_names_are_stable(self):
        assert TERM_NAMES == (
            "I1_lin", "I1_exp", "I1_sq", "I1_sq_exp",
            "I2_lin", "I2_exp", "I2_sq", "I2_sq_exp",
            "I4w_linexp", "I4w_sq", "I4w_sq_exp",
            "I4s_linexp", "I4s_sq", "I4s_sq_exp",
        )

    def test_indices_and_structure(self):
        assert [t.index for t in LIBRARY] == list(range(1, 15))
        assert all(t.invariant in (Invariant.I1, Invariant.I2) for t in LIBRARY[:8])
        assert LIBRARY[8].activation is Activation.LINEXP and LIBRARY[11].activation is Activation.LINEXP
        assert all(t.rows == (3, 4) for t in LIBRARY[11:])
        assert all(t.rows == (2,) for t in LIBRARY[8:11])

    def test_frozen_inner_weights(self):
        np.testing.assert_array_equal(np.flatnonzero(FROZEN_INNER), [0, 2, 4, 6, 9, 12])

    def test_lookup(self):
        assert term_by_name("I4w_sq_exp").index == 11
        with pytest.raises(KeyError):
            term_by_name("I3_lin")


class TestEvalTerm:
    def test_identity_is_stress_free(self):
        inv = invariants(DeformationState(1.0, 1.0))
        for ev in eval_library(inv, np.full(N_TERMS, 3.0)):
            # dpsi/dI is a constant for linear terms, so only energy and stresses vanish
            for field in ("psi", "f", "g", "df_dwstar", "dg_dwstar"):
                assert getattr(ev, field) == 0.0

    def test_term1_strip(self):
        ev = eval_term(LIBRARY[0], invariants(DeformationState(2.0, 1.0)), 1.0)
        assert ev.f == pytest.approx(3.75, rel=1e-14)
        f, _ = fd_stress(LIBRARY[0], 2.0, 1.0, Orientation.ALIGNED, 1.0)
        assert f == pytest.approx(3.75, rel=1e-8)

    def test_linexp_flat_at_reference(self):
        # lambda1 = 1 keeps I4w = 1 at the aligned mount
        ev = eval_term(LIBRARY[8], invariants(DeformationState(1.0, 1.3)), 69.0)
        assert ev.f == 0.0

    def test_negative_inner_weight(self):
        with pytest.raises(ConstraintError):
            eval_term(LIBRARY[1], invariants(DeformationState(1.1, 1.0)), -0.1)

    def test_overflow_names_term(self):
        with pytest.raises(OverflowError, match="I4w_sq_exp"):
            eval_term(LIBRARY[10], invariants(DeformationState(3.0, 1.0)), 20.0)

    def test_small_b_limit_is_continuous(self):
        inv = invariants(DeformationState(1.2, 1.05))
        for spec in LIBRARY:
            if spec.activation is Activation.IDENTITY:
                continue
            below = eval_term(spec, inv, 0.9999e-8)
            above = eval_term(spec, inv, 1.0001e-8)
            np.testing.assert_allclose(below.f, above.f, rtol=1e-3, atol=1e-15)
            np.testing.assert_allclose(below.psi, above.psi, rtol=1e-3, atol=1e-15)

    def test_exp_reduces_to_linear(self):
        inv = invariants(DeformationState(1.2, 1.05))
        lin = eval_term(LIBRARY[0], inv, 1.0)
        exp = eval_term(LIBRARY[1], inv, 0.0)
        assert exp.f == pytest.approx(lin.f, rel=1e-14)


class TestStressOracle:
    def test_library_fd_strip(self):
        inv = invariants(DeformationState(1.1, 1.0))
        for spec, ev in zip(LIBRARY, eval_library(inv, np.ones(N_TERMS))):
            f, g = fd_stress(spec, 1.1, 1.0, Orientation.ALIGNED, 1.0)
            assert rel_err(ev.f, f) < 1e-6 and rel_err(ev.g, g) < 1e-6

    def test_offset_equibiaxial_symmetry(self):
        inv = invariants(DeformationState(1.1, 1.1, "pm45"))
        for ev in eval_library(inv, np.ones(N_TERMS)):
            assert ev.f == pytest.approx(ev.g, rel=1e-12, abs=1e-14)

    @settings(max_examples=100, deadline=None)
    @given(st.floats(0.85, 1.4), st.floats(0.85, 1.4), st.sampled_from(list(Orientation)),
           st.floats(0.0, 50.0), st.integers(0, 13))
    def test_random_fd(self, l1, l2, orientation, wstar, k):
        spec = LIBRARY[k]
        ev = eval_term(spec, invariants(DeformationState(l1, l2, orientation)), wstar)
        f, g = fd_stress(spec, l1, l2, orientation, wstar)
        scale = max(1.0, abs(ev.psi))
        assert abs(ev.f - f) <= 1e-6 * max(abs(f), 1e-3 * scale) + 1e-7 * scale
        assert abs(ev.g - g) <= 1e-6 * max(abs(g), 1e-3 * scale) + 1e-7 * scale

    def test_wstar_sensitivity(self):
        rng = np.random.default_rng(5)
        for _ in range(50):
            l1, l2 = rng.uniform(0.85, 1.4, 2)
            inv = invariants(DeformationState(l1, l2, list(Orientation)[rng.integers(2)]))
            for spec in LIBRARY:
                b = rng.uniform(0.1, 10.0)
                h = 1e-6 * b
                ev = eval_term(spec, inv, b)
                fd = (eval_term(spec, inv, b + h).f - eval_term(spec, inv, b - h).f) / (2 * h)
                assert abs(ev.df_dwstar - fd) <= 1e-6 * max(abs(fd), 1e-6) + 1e-8 * max(1.0, abs(ev.f))

    def test_vectorized_matches_eval_term(self):
        rng = np.random.default_rng(1)
        l = rng.uniform(0.9, 1.3, (20, 2))
        wstar = rng.uniform(0, 5, N_TERMS)
        inv = invariants_from_stretches(l[:, 0], l[:, 1], Orientation.OFFSET)
        h, dh = library_stress(inv.values, inv.d2, wstar)
        for j, ev in enumerate(eval_library(inv, wstar)):
            np.testing.assert_allclose(h[:, j], ev.g, rtol=1e-13, atol=1e-13)
            np.testing.assert_allclose(dh[:, j], ev.dg_dwstar, rtol=1e-13, atol=1e-13)


class TestConvexity:
    @pytest.mark.parametrize("k", range(N_TERMS))
    def test_nondecreasing_convex_in_invariant(self, k):
        spec = LIBRARY[k]
        ref = spec.reference
        x = np.linspace(ref, ref + 2.0, 201)
        for b in (0.0, 0.5, 3.0):
            from gcann.energy_terms import _activation
            phi = _activation(spec, x - ref, b if not spec.inner_weight_frozen else 1.0)[0]
            assert np.all(np.diff(phi) >= -1e-10)
            assert np.all(np.diff(phi, 2) >= -1e-10)


class TestStressIntegral:
    def test_trapezoid_oracle(self):
        lam = np.linspace(1.0, 1.1, 10001)
        f = eval_term(LIBRARY[0], invariants_from_stretches(lam, lam, Orientation.ALIGNED), 1.0).f
        oracle = np.trapezoid(f, lam) if hasattr(np, "trapezoid") else np.trapz(f, lam)
        assert term_stress_integral(LIBRARY[0], 1.0, 1.1) == pytest.approx(oracle, abs=1e-8)

    def test_vanishes_at_reference(self):
        S, _ = term_stress_integrals(np.ones(N_TERMS), 1.0 + 1e-9)
        assert np.all(np.abs(S) < 1e-12)

    def test_monotone_in_lambda_max(self):
        prev = np.zeros(N_TERMS)
        for lm in (1.05, 1.1, 1.2, 1.3):
            S, _ = term_stress_integrals(np.full(N_TERMS, 2.0), lm)
            assert np.all(S >= prev)
            prev = S

    def test_domain(self):
        with pytest.raises(ValueError):
            term_stress_integral(LIBRARY[0], 1.0, 1.0)

    def test_wstar_derivative(self):
        w = np.full(N_TERMS, 1.5)
        S, dS = term_stress_integrals(w, 1.25)
        h = 1e-6
        fd = (term_stress_integrals(w + h, 1.25)[0] - term_stress_integrals(w - h, 1.25)[0]) / (2 * h)
        np.testing.assert_allclose(dS, fd, rtol=1e-6, atol=1e-10)
