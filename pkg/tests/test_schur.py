import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from cmvkit.boundary import RadialLadder
from cmvkit.cmv import FiniteCMV, finite_cmv, site_spectral_measure, truncated_green
from cmvkit.ergodic import Constant, OmegaState, Periodic, Quasiperiodic, RandomIID
from cmvkit.schur import (SchurError, SchurEvaluator, caratheodory_F, continued_fraction,
                          green_from_schur, half_line_schur_from_measure, nu_ac,
                          reflectionless_defect, reflectionless_nu, schur_eval)

PERIODIC = Periodic((0.3, -0.4j))
S0 = OmegaState()


class Unrolled(Periodic):
    """A periodic family that hides its period, forcing the general path."""

    @property
    def period(self):
        return None

    def window(self, state, lo, hi):
        return np.asarray(self.values)[(np.arange(lo, hi) + state.shift) % len(self.values)]


def test_constant_closed_form():
    # f = (a + z f) / (1 + a z f) with a = 1/2, z = 1/2 has root -1 + sqrt 3
    f = schur_eval(SchurEvaluator(Constant(0.5), S0, "+"), 0.5)
    assert f == pytest.approx(-1 + math.sqrt(3), abs=1e-10)


def test_frozen_periodic_values():
    z = 0.5 + 0.2j
    assert schur_eval(SchurEvaluator(PERIODIC, S0, "+"), z) == pytest.approx(
        0.4689890861381735 - 0.12532846505074052j, abs=1e-12)
    assert schur_eval(SchurEvaluator(PERIODIC, S0, "-"), z) == pytest.approx(
        -0.050177069563750294 - 0.5446608520492076j, abs=1e-12)


def test_minus_parameters_reflect_and_conjugate():
    ev = SchurEvaluator(Periodic((0.1, 0.2j, 0.3)), S0, "-")
    # g_j = -conj(alpha_{-1-j}): alpha_{-1} = 0.3, alpha_{-2} = 0.2i, alpha_{-3} = 0.1
    np.testing.assert_allclose(ev.parameters(3), [-0.3, 0.2j, -0.1])


def test_fixed_depth_matches_continued_fraction():
    ev = SchurEvaluator(PERIODIC, S0, "+", depth=7)
    z = np.array([0.3, -0.2j])
    np.testing.assert_allclose(ev(z), continued_fraction(ev.parameters(7), z))


def test_periodic_and_general_paths_agree():
    z = 0.97 * np.exp(1j * np.linspace(0, 6, 13))
    a = schur_eval(SchurEvaluator(PERIODIC, S0, "+"), z)
    b = schur_eval(SchurEvaluator(Unrolled((0.3, -0.4j)), S0, "+"), z)
    np.testing.assert_allclose(a, b, atol=1e-9)


def test_convergence_flag():
    v, ok = schur_eval(SchurEvaluator(Quasiperiodic(0.4, 0.3819660112501051), S0, "+"), 0.5,
                       return_converged=True)
    assert ok and abs(v) < 1


@settings(max_examples=10, deadline=None)
@given(st.integers(0, 2 ** 32), st.sampled_from(["+", "-"]))
def test_schur_function_maps_disk_into_disk(seed, direction):
    rng = np.random.default_rng(seed)
    z = np.sqrt(rng.random(100)) * 0.999 * np.exp(2j * np.pi * rng.random(100))
    for family in (PERIODIC, RandomIID(0.5, seed)):
        f = schur_eval(SchurEvaluator(family, S0, direction), z)
        assert np.all(np.abs(f) < 1)


def test_outside_disk_is_rejected():
    with pytest.raises(SchurError):
        schur_eval(SchurEvaluator(PERIODIC, S0), 1.0)
    with pytest.raises(SchurError):
        SchurEvaluator(PERIODIC, S0, "x")
    with pytest.raises(SchurError):
        SchurEvaluator(PERIODIC, S0, depth=0)


def test_free_case_F_is_one_and_G_is_zero():
    z = np.array([0.0, 0.5, -0.3j, 0.9 * np.exp(2j)])
    np.testing.assert_allclose(caratheodory_F(Constant(0.0), S0, z), 1.0, atol=1e-15)
    np.testing.assert_allclose(green_from_schur(Constant(0.0), S0, z), 0.0, atol=1e-15)


@pytest.mark.parametrize("family", [PERIODIC, Constant(0.5), RandomIID(0.5, 7)], ids=lambda f: f.kind)
def test_green_matches_truncation(family):
    fc = finite_cmv(family, S0, 200)
    for z in (0.4, 0.3j, -0.2 - 0.5j):
        assert green_from_schur(family, S0, z) == pytest.approx(truncated_green(fc, z), abs=1e-6)


def test_F_equals_one_plus_two_z_G():
    z = 0.8 * np.exp(1j * np.linspace(0, 6, 17))
    F = caratheodory_F(PERIODIC, S0, z)
    G = green_from_schur(PERIODIC, S0, z)
    np.testing.assert_allclose(F, 1 + 2 * z * G, atol=1e-12)


def test_half_line_schur_from_measure():
    # alpha_{-1} = -1 decouples the window; the right part is the half-line operator,
    # whose site-0 measure has the Schur function f_+
    fc = finite_cmv(PERIODIC, S0, 60)
    alphas = fc.alphas.copy()
    alphas[60] = -1.0
    half = FiniteCMV(60, alphas)
    mu = site_spectral_measure(half, 0)
    for z in (0.3, -0.2 + 0.4j):
        expected = schur_eval(SchurEvaluator(PERIODIC, S0, "+"), z)
        assert half_line_schur_from_measure(mu, z) == pytest.approx(expected, abs=1e-10)


def test_nu_ac_free_and_constant():
    dens, ok = nu_ac(Constant(0.0), S0, np.array([0.3, 2.0]))
    np.testing.assert_allclose(dens, 1 / (2 * math.pi), atol=1e-12)
    assert ok.all()
    # in the gap the a.c. density vanishes
    d_gap, _ = nu_ac(Constant(0.5), S0, 0.0, RadialLadder(4, 12))
    assert abs(d_gap) < 1e-2


def test_reflectionless_trend_constant():
    defects = [reflectionless_defect(Constant(0.5), S0, math.pi, 1 - 2.0 ** -m) for m in range(6, 13)]
    assert all(b < a for a, b in zip(defects, defects[1:]))
    assert defects[-1] <= 1e-2
    assert reflectionless_nu(Constant(0.5), S0, math.pi, 0.999) > 0
    with pytest.raises(SchurError):
        reflectionless_defect(Constant(0.5), S0, 0.0, 1.0)
