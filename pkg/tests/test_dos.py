import math
import warnings

import numpy as np
import pytest

from cmvkit.cmv import AtomicCircleMeasure, kolmogorov_distance
from cmvkit.dos import (DOSApproximation, ThoulessPotential, density_of_states, dos_average_check,
                        dos_caratheodory, dos_caratheodory_routes, k_ac, rho_infinity,
                        thouless_gamma, thouless_potential)
from cmvkit.ergodic import Constant, Periodic, Quasiperiodic, RandomIID, SamplingPlan

EXACT = SamplingPlan.exact()
PERIODIC = Periodic((0.3, -0.4j))


def test_free_dos_is_uniform():
    d = density_of_states(Constant(0.0), EXACT, 200)
    assert d.measure.total_mass == pytest.approx(1.0)
    assert kolmogorov_distance(d.measure, "uniform") <= 1e-2
    assert d.self_distance is not None and d.self_distance < 1e-2


def test_pooled_periodic_dos():
    d = density_of_states(PERIODIC, EXACT, 50, diagnostic=False)
    assert d.samples == 2 and d.self_distance is None
    assert d.measure.total_mass == pytest.approx(1.0)
    assert len(d.measure) == 2 * 101


def test_dos_is_thread_count_independent():
    plan = SamplingPlan.monte_carlo(6, 3)
    fam = Quasiperiodic(0.4, 0.3819660112501051)
    a = density_of_states(fam, plan, 60, threads=1)
    b = density_of_states(fam, plan, 60, threads=4)
    np.testing.assert_array_equal(a.measure.angles, b.measure.angles)
    np.testing.assert_array_equal(a.measure.weights, b.measure.weights)
    assert a.self_distance == b.self_distance


def test_dos_validation():
    with pytest.raises(ValueError):
        density_of_states(Constant(0.0), EXACT, 0)
    with pytest.raises(ValueError):
        rho_infinity(Constant(0.0), EXACT, 0)


def test_rho_infinity():
    assert rho_infinity(PERIODIC, EXACT) == pytest.approx((0.91 * 0.84) ** 0.25, rel=1e-14)
    assert rho_infinity(Constant(0.0), EXACT) == 1.0


def test_thouless_gamma_at_zero_is_exact():
    pot = thouless_potential(PERIODIC, EXACT, 40)
    assert thouless_gamma(pot, 0.0) == -math.log(pot.rho_inf)


def test_thouless_gamma_free_values():
    pot = thouless_potential(Constant(0.0), EXACT, 200)
    assert thouless_gamma(pot, 2.0) == pytest.approx(math.log(2), abs=1e-2)
    assert abs(thouless_gamma(pot, 0.5)) < 1e-12


def test_thouless_gamma_excludes_exact_hits():
    dos = DOSApproximation(AtomicCircleMeasure([0.0, math.pi], [0.5, 0.5]), 1, 1)
    pot = ThoulessPotential(dos, 1.0)
    with pytest.warns(RuntimeWarning):
        value, excluded = thouless_gamma(pot, 1.0, return_excluded=True)
    assert excluded == 1 and value == pytest.approx(0.5 * math.log(2))
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        values = thouless_gamma(pot, np.array([0.5, 2.0]))
    assert values.shape == (2,)


def test_K_at_zero_is_one_and_routes_agree():
    pot = thouless_potential(PERIODIC, EXACT, 100)
    herglotz, derivative = dos_caratheodory_routes(pot, 0.0)
    assert derivative == 1.0
    # the Herglotz route sums the atom weights, so it is exact up to rounding
    assert abs(herglotz - 1.0) <= 1e-15
    assert dos_caratheodory(pot, 0.0) == pytest.approx(1.0, abs=1e-15)
    z = 0.9 * np.exp(1j * np.linspace(0, 6, 32))
    a, b = dos_caratheodory_routes(pot, z)
    assert np.max(np.abs(a - b)) <= 1e-10


def test_K_route_mismatch_warns():
    dos = DOSApproximation(AtomicCircleMeasure([0.0], [2.0]), 1, 1)
    with pytest.warns(RuntimeWarning, match="disagree"):
        K = dos_caratheodory(ThoulessPotential(dos, 1.0), 0.5)
    assert K == pytest.approx(6.0)


def test_k_ac_free_case():
    pot = thouless_potential(Constant(0.0), EXACT, 400)
    dens, ok = k_ac(pot, np.array([0.5, 3.0]))
    np.testing.assert_allclose(dens, 1 / (2 * math.pi), atol=1e-3)
    assert ok.all()


def test_average_green_gap_is_a_boundary_effect():
    # the two sides differ by c / (2n + 1): the window's edge sites are not
    # translates of site 0, and exact averaging cannot remove that
    z = np.array([0.4, 0.3j, -0.2 - 0.5j])
    gaps = []
    for n in (50, 100, 200):
        lhs, rhs = dos_average_check(PERIODIC, EXACT, n, z)
        gaps.append(np.abs(lhs - rhs) * (2 * n + 1))
    np.testing.assert_allclose(gaps[0], gaps[1], rtol=1e-6)
    np.testing.assert_allclose(gaps[1], gaps[2], rtol=1e-6)


def test_average_green_scalar_and_free():
    lhs, rhs = dos_average_check(Constant(0.0), EXACT, 50, 0.4)
    assert isinstance(lhs, complex) and isinstance(rhs, complex)
    assert abs(lhs) < 1e-12


def test_average_green_random_plan():
    plan = SamplingPlan.monte_carlo(3)
    lhs, rhs = dos_average_check(RandomIID(0.5, 7), plan, 40, np.array([0.4, -0.3j]))
    assert lhs.shape == rhs.shape == (2,)
