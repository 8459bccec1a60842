import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.optimize import minimize_scalar

from dnls_phase import phase_diagram as pdg
from dnls_phase.errors import InvalidArgumentError


def xi_oracle(p, t):
    """Bounded scalar minimization of the defining ratio, independent of the grid scan."""
    objective = lambda a: -math.log1p(-a) / (a ** ((p + 1) / 2) + t)  # noqa: E731
    best = math.inf
    for lo, hi in ((1e-6, 0.5), (0.3, 0.9), (0.8, 1 - 1e-9)):
        res = minimize_scalar(objective, bounds=(lo, hi), method="bounded", options={"xatol": 1e-12})
        best = min(best, res.fun)
    return best


def test_xi_frozen_value():
    assert math.isclose(pdg.xi(3.0), 2.455407482, rel_tol=1e-8)


@pytest.mark.parametrize("p", [1.5, 2.0, 3.0, 5.0])
def test_xi_matches_oracle(p):
    assert math.isclose(pdg.xi(p), xi_oracle(p, 0.0), rel_tol=1e-8)


def test_xi_with_shift_is_zero():
    # the ratio behaves like a / t near a = 0
    assert pdg.xi(3.0, 0.5) == 0.0
    assert xi_oracle(3.0, 0.5) < 1e-5


def test_xi_argmin_location():
    a = pdg.xi_argmin(3.0)
    value = -math.log1p(-a) / a**2
    assert math.isclose(value, pdg.xi(3.0), rel_tol=1e-7)


def test_dispersive_identity(phase_model):
    theta = 0.05
    res = phase_model.minimize_G(theta, 1.0)
    assert res.region == "dispersive"
    assert res.a_star == 0.0
    assert math.isclose(res.F, phase_model.dispersive_free_energy(theta), rel_tol=1e-12)


def test_global_minimum_against_dense_grid(phase_model):
    for theta, nu in ((0.5, 40.0), (2.0, 20.0), (0.2, 200.0)):
        res = phase_model.minimize_G(theta, nu)
        grid = np.linspace(0.0, res.a_M, 20001)[:-1]
        brute = float(np.min(phase_model.G(grid, theta, nu)))
        assert res.G_min <= brute + 1e-9
        assert res.G_min >= brute - 1e-4


def test_free_energy_at_least_dispersive_value(phase_model):
    for theta, nu in ((0.5, 40.0), (1.0, 5.0), (3.0, 100.0)):
        assert phase_model.free_energy(theta, nu) >= phase_model.dispersive_free_energy(theta) - 1e-12


def test_below_threshold_is_dispersive(phase_model):
    nu = 0.99 * phase_model.R_p
    for theta in (0.1, 1.0, 10.0):
        assert phase_model.minimize_G(theta, nu).region == "dispersive"


def test_transition_curve_brackets(phase_model):
    nu = 4 * phase_model.R_p
    tc = phase_model.theta_c(nu, tol=1e-9)
    assert phase_model.is_solitonic(tc * 1.001, nu)
    assert not phase_model.is_solitonic(tc * 0.999, nu)
    # the free-field bound holds at every nu above the threshold
    assert tc <= phase_model.C_d * nu / (nu - phase_model.R_p)


def test_transition_curve_decreasing(phase_model):
    nus = phase_model.R_p * np.array([1.5, 3.0, 10.0, 40.0])
    values = [phase_model.theta_c(nu) for nu in nus]
    assert all(b < a for a, b in zip(values, values[1:]))


def test_integral_reformulation_sign(phase_model):
    nu = 4 * phase_model.R_p
    tc = phase_model.theta_c(nu)
    assert phase_model.integral_reformulation(1.05 * tc, nu) < 0.0
    assert phase_model.integral_reformulation(0.95 * tc, nu) >= -1e-9


def test_J_monotone_and_window(phase_model):
    lattice = phase_model.energy
    R = phase_model.R_p
    a = R * np.geomspace(1.02, 8.0, 60)
    J = lattice.J(a)
    gaps = J[:-1] - J[1:]
    window = 0.5 * (a[1:] - a[:-1])  # (2/(p+1)) (a^((p-1)/2) - a'^((p-1)/2)) at p = 3
    assert np.all(gaps >= -1e-9)
    assert np.all(gaps <= window + 1e-9)
    assert np.all(lattice.J(np.array([0.5 * R, 0.9 * R])) == 0.0)


def test_scan_and_staircase(phase_model, tmp_path):
    thetas = np.linspace(0.1, 3.0, 6)
    nus = np.linspace(1.0, 60.0, 6)
    rows = phase_model.scan(thetas, nus, jobs=2)
    assert len(rows) == 36
    assert pdg.staircase_violations(rows) == 0
    path = pdg.write_scan_csv(rows, tmp_path / "scan.csv")
    assert path.read_text().splitlines()[0] == ",".join(pdg.SCAN_HEADER)


def test_staircase_counter_detects_breach():
    rows = [
        dict(theta=1.0, nu=1.0, region="solitonic"),
        dict(theta=2.0, nu=2.0, region="dispersive"),
        dict(theta=1.0, nu=2.0, region="dispersive"),
        dict(theta=2.0, nu=1.0, region="dispersive"),
    ]
    # every dispersive point dominates the solitonic corner
    assert pdg.staircase_violations(rows) == 3


def test_invalid_points(phase_model):
    with pytest.raises(InvalidArgumentError):
        phase_model.minimize_G(-1.0, 5.0)
    with pytest.raises(InvalidArgumentError):
        phase_model.theta_c(0.5 * phase_model.R_p)


@given(st.floats(0.05, 5.0), st.floats(0.5, 100.0))
def test_minimizer_inside_bound(phase_model, theta, nu):
    res = phase_model.minimize_G(theta, nu)
    assert 0.0 <= res.a_star <= res.a_M + 1e-12
    assert res.G_min <= float(phase_model.G(0.0, theta, nu)) + 1e-12


@given(st.floats(1.2, 6.0), st.floats(0.0, 2.0))
def test_xi_positive_and_above_one(p, t):
    # -log(1-a) >= a >= a^((p+1)/2) on (0,1), so xi(p, 0) >= 1
    value = pdg.xi(p, t)
    assert value >= 0.0
    if t == 0.0:
        assert value >= 1.0
