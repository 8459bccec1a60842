import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.special import gamma

from dnls_phase import free_field_thermo as fft
from dnls_phase import lattice_spectrum as ls
from dnls_phase.errors import DivergentConstantError, InvalidArgumentError

# Simple-cubic Watson integral: mean of 1/(1 - mean cos) over the unit cube.
WATSON_SC = math.sqrt(6.0) / (32.0 * math.pi**3) * gamma(1 / 24) * gamma(5 / 24) * gamma(7 / 24) * gamma(11 / 24)


def test_C3_equals_watson_integral():
    # f = 2 (3 - sum cos), so int 1/f = W / 6
    assert math.isclose(fft.compute_C_d(3), WATSON_SC / 6.0, rel_tol=1e-10)


@pytest.mark.parametrize("method", ["qmc", "lattice"])
@pytest.mark.parametrize("y", [0.0, 0.5, 2.0])
def test_independent_quadrature_routes_agree(method, y):
    quad = fft.QuadratureSpec(method=method)
    ref_k, ref_kp = fft.integrate_K(y, 3), fft.integrate_K_prime(y, 3)
    k, kp = fft.integrate_K(y, 3, quad), fft.integrate_K_prime(y, 3, quad)
    assert abs(k.value - ref_k.value) <= max(5 * k.error, 1e-6)
    assert abs(kp.value - ref_kp.value) <= max(5 * kp.error, 1e-5)


def test_random_walk_return_oracle():
    res = fft.C_d_random_walk(3, walks=100_000, steps=1000, seed=7)
    assert abs(res.value - fft.compute_C_d(3)) <= 5 * res.error


def test_frozen_zero_mass_log_integral(thermo3):
    # frozen from the Bessel route and confirmed by the QMC route above
    assert math.isclose(thermo3.K0, 1.6733893, abs_tol=2e-7)


def test_lattice_sums_approach_continuum(thermo3):
    spec = ls.TorusSpec(3, 64)
    assert abs(ls.K_N(0.5, spec) - thermo3.K(0.5) + math.log(0.5) / spec.N) < 1e-8
    assert abs(ls.K_N_prime(0.5, spec) - thermo3.K_prime(0.5) + 1.0 / (0.5 * spec.N)) < 1e-8


def test_divergent_dimensions():
    with pytest.raises((DivergentConstantError, InvalidArgumentError)):
        fft.compute_C_d(2)


def test_derivatives_by_finite_differences(thermo3):
    for y in (0.3, 1.0, 4.0):
        h = 1e-4 * (1 + y)
        fd1 = (thermo3.K(y + h) - thermo3.K(y - h)) / (2 * h)
        fd2 = (thermo3.K_prime(y + h) - thermo3.K_prime(y - h)) / (2 * h)
        assert math.isclose(fd1, thermo3.K_prime(y), rel_tol=1e-7)
        assert math.isclose(fd2, thermo3.K_second(y), rel_tol=1e-6)


def test_inverse_and_energy_identities(thermo3):
    for b in (1e-3, 0.05, 0.2):
        y = thermo3.L(b)
        assert math.isclose(thermo3.K_prime(y), b, rel_tol=1e-10)
        assert math.isclose(thermo3.W(b), thermo3.K(y) - b * y, rel_tol=1e-12)
    assert thermo3.L(thermo3.C_d) == 0.0
    assert thermo3.W(1.0) == thermo3.K0
    assert math.isclose(thermo3.W_hat(0.1), thermo3.W(0.1) + 1 + math.log(0.1))


def test_table_matches_direct_evaluation(thermo3):
    table = thermo3.table()
    bs = np.geomspace(2e-4, 0.999 * thermo3.C_d, 40)
    direct_w = np.array([thermo3.W(b) for b in bs])
    direct_l = np.array([thermo3.L(b) for b in bs])
    assert np.allclose(table.W(bs), direct_w, rtol=1e-8, atol=1e-10)
    assert np.allclose(table.L(bs), direct_l, rtol=1e-6, atol=1e-8)
    assert np.all(table.W(np.array([0.3, 1.0])) == thermo3.K0)


def test_cache_round_trip(tmp_path):
    path = tmp_path / "q.csv"
    first = fft.ThermoFunctions(3, cache=fft.QuadratureCache(path))
    value = first.K_prime(0.7)
    second = fft.ThermoFunctions(3, cache=fft.QuadratureCache(path))
    assert second.cache.get(second.cache.key(3, 0.7, second.quad)) is not None
    assert second.K_prime(0.7) == value


@given(st.floats(1e-3, 0.25), st.floats(1e-3, 0.25))
def test_W_is_nonincreasing(thermo3, b1, b2):
    thermo = thermo3
    lo, hi = sorted((b1, b2))
    assert thermo.table().W(lo) >= thermo.table().W(hi) - 1e-12


@given(st.floats(1e-4, 1e4))
def test_K_prime_bounds(thermo3, y):
    # 0 < K'(y) <= 1/y and K'(y) <= C_d
    thermo = thermo3
    kp = thermo.K_prime(y)
    assert 0 < kp <= min(1.0 / y, thermo.C_d) * (1 + 1e-12)
