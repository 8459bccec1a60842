import json
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.integrate import solve_ivp, trapezoid

from dnls_phase import soliton_solver as ss
from dnls_phase.errors import InvalidArgumentError, NumericOverflowError


def loop_gradient_energy(u):
    """Edge-by-edge Dirichlet gradient energy including the edges to the zero boundary."""
    padded = np.pad(u, 1)
    total = 0.0
    for idx in np.ndindex(*padded.shape):
        for axis in range(u.ndim):
            nxt = list(idx)
            nxt[axis] += 1
            if nxt[axis] < padded.shape[axis]:
                total += abs(padded[idx] - padded[tuple(nxt)]) ** 2
    return total


def shoot_quadratic_ground_state():
    """Radial ground state of Q'' + 2Q'/r - Q + Q^2 = 0 by bisection on Q(0).

    Returns Q(0) together with the mass, gradient and cubic integrals.
    """

    def run(q0, r_max=14.0):
        def rhs(r, y):
            q, dq = y
            return [dq, -2.0 * dq / r + q - q * q]

        def cross(r, y):
            return y[0]

        cross.terminal = True
        r0 = 1e-6
        sol = solve_ivp(rhs, (r0, r_max), [q0 - q0 * (q0 - 1) * r0**2 / 6, 0.0], events=cross,
                        rtol=1e-11, atol=1e-13, dense_output=True)
        return sol

    lo, hi = 3.0, 5.0
    for _ in range(60):
        mid = 0.5 * (lo + hi)
        sol = run(mid)
        if sol.t_events[0].size:  # overshoot: crosses zero
            hi = mid
        else:
            lo = mid
    q0 = 0.5 * (lo + hi)
    sol = run(lo)
    r_end = sol.t[-1]
    r = np.linspace(1e-6, min(r_end, 12.0), 40001)
    q, dq = sol.sol(r)
    mass = trapezoid(4 * np.pi * r**2 * q**2, r)
    grad = trapezoid(4 * np.pi * r**2 * dq**2, r)
    cubic = trapezoid(4 * np.pi * r**2 * q**3, r)
    return q0, mass, grad, cubic


def test_gradient_energy_matches_edge_loop():
    rng = np.random.default_rng(3)
    u = rng.normal(size=(5, 5, 5))
    assert math.isclose(ss.gradient_energy(u), loop_gradient_energy(u), rel_tol=1e-12)
    assert math.isclose(float(np.sum(u * ss.dirichlet_laplacian(u))), loop_gradient_energy(u), rel_tol=1e-12)


@pytest.mark.parametrize("m,d", [(2, 2), (3, 3)])
def test_ground_eigenvalue_matches_dense(m, d):
    side = 2 * m + 1
    size = side**d
    mat = np.zeros((size, size))
    for i in range(size):
        e = np.zeros(size)
        e[i] = 1.0
        mat[:, i] = ss.dirichlet_laplacian(e.reshape((side,) * d)).ravel()
    assert math.isclose(np.linalg.eigvalsh(mat)[0], ss.dirichlet_ground_eigenvalue(m, d), rel_tol=1e-12)


def test_mass_100_ground_state_frozen():
    res = ss.dirichlet_minimize(100.0, 3.0, 6)
    assert res.converged
    assert math.isclose(res.energy, -4406.003907520718, rel_tol=1e-10)
    assert res.residual <= 1e-8
    assert math.isclose(res.profile.mass, 100.0, rel_tol=1e-12)
    assert res.profile.max_site_fraction() > 0.99
    omega, residual = ss.euler_lagrange_residual(res.profile.values, 3.0)
    assert math.isclose(omega, res.omega, rel_tol=1e-10)
    assert math.isclose(ss.lagrange_multiplier(res), res.omega, rel_tol=1e-10)
    fit = ss.decay_fit(res.profile)
    assert fit.r_squared >= 0.95


def test_threshold_estimates(threshold_p3):
    assert math.isclose(threshold_p3.value, 10.8152, rel_tol=1e-4)
    rel = abs(threshold_p3.quotient_estimate - threshold_p3.bisection_estimate) / threshold_p3.value
    assert rel < 0.05


def test_minimal_energy_above_threshold(threshold_p3):
    res = ss.minimal_energy_I(2 * threshold_p3.value, 3.0)
    assert math.isclose(res.value, -110.243, rel_tol=1e-4)
    assert not res.clamped


def test_below_threshold_is_zero(threshold_p3):
    res = ss.minimal_energy_I(0.3 * threshold_p3.value, 3.0, threshold=threshold_p3.value)
    assert res.value == 0.0 and res.clamped


def test_quadratic_ground_state_oracle():
    q0, mass, grad, cubic = shoot_quadratic_ground_state()
    assert math.isclose(q0, 4.19168, rel_tol=1e-4)
    # Pohozaev-type identities for this equation in three dimensions
    assert math.isclose(grad, mass, rel_tol=1e-3)
    assert math.isclose(cubic, 2 * mass, rel_tol=1e-3)


def test_quadratic_nonlinearity_has_no_threshold():
    """Small-mass energy for p = 2 is negative, close to the continuum scaling law."""
    _, mass, grad, cubic = shoot_quadratic_ground_state()
    kappa = cubic**4 / (48 * grad**3 * mass**3)
    a = 20.0
    box = ss.dirichlet_minimize(a, 2.0, 19)
    assert box.energy < 0.0  # a negative box energy bounds I(a) from above
    assert box.energy > -1.05 * kappa * a**3


def test_export_profile(tmp_path):
    res = ss.dirichlet_minimize(50.0, 3.0, 3)
    csv_path, meta_path = ss.export_profile(res, tmp_path / "profile.csv")
    data = np.loadtxt(csv_path, delimiter=",", skiprows=1)
    assert data.shape == (7**3, 4)
    assert math.isclose(float(np.sum(data[:, -1] ** 2)), 50.0, rel_tol=1e-10)
    assert json.loads(meta_path.read_text())["a"] == 50.0


def test_conservation_of_mass_and_energy():
    rng = np.random.default_rng(0)
    psi = (rng.normal(size=(6, 6, 6)) + 1j * rng.normal(size=(6, 6, 6))) * 0.5
    traj = ss.evolve_dnls(psi, 3.0, dt=1e-3, T=1.0)
    assert traj.mass_drift < 1e-8
    assert traj.energy_drift < 1e-8


def test_rotating_frame_stationarity():
    res = ss.dirichlet_minimize(100.0, 3.0, 4)
    psi0 = ss.embed_in_torus(res.profile, 11)
    traj = ss.evolve_dnls(psi0, 3.0, dt=1e-3, T=0.5, frame_omega=res.omega, sample_every=100)
    drift = max(float(np.max(np.abs(s - psi0))) for s in traj.samples)
    assert drift < 1e-6


def test_overflow_is_reported():
    psi = np.zeros((4, 4, 4), dtype=complex)
    psi[0, 0, 0] = 1e3
    with pytest.raises(NumericOverflowError):
        ss.evolve_dnls(psi, 5.0, dt=1e-2, T=1.0, overflow=1e4)


def test_invalid_arguments():
    with pytest.raises(InvalidArgumentError):
        ss.dirichlet_minimize(-1.0, 3.0, 4)
    with pytest.raises(InvalidArgumentError):
        ss.hamiltonian(np.zeros((3, 3, 3)), 1.0)
    with pytest.raises(InvalidArgumentError):
        ss.rescale_solution(np.ones(3), 0.0, 3.0)


@given(st.floats(0.2, 5.0), st.sampled_from([2.0, 3.0, 5.0]), st.integers(0, 2**31))
def test_scaling_identity(lam, p, seed):
    rng = np.random.default_rng(seed)
    psi = rng.normal(size=(4, 4, 4)) + 1j * rng.normal(size=(4, 4, 4))
    h = 0.7
    lhs = ss.hamiltonian(psi, p, boundary="periodic", h=h)
    rhs = lam ** ss.scaling_exponent(3, p) * ss.hamiltonian(ss.rescale_solution(psi, lam, p), p, "periodic", h / lam)
    assert math.isclose(lhs, rhs, rel_tol=1e-10, abs_tol=1e-10 * abs(lhs))


@given(st.floats(0.0, 2 * math.pi), st.integers(0, 2**31))
def test_energy_is_phase_invariant(phase, seed):
    rng = np.random.default_rng(seed)
    psi = rng.normal(size=(3, 3, 3)) + 1j * rng.normal(size=(3, 3, 3))
    e1 = ss.hamiltonian(psi, 3.0, "periodic")
    e2 = ss.hamiltonian(np.exp(1j * phase) * psi, 3.0, "periodic")
    assert math.isclose(e1, e2, rel_tol=1e-12, abs_tol=1e-12)


@given(st.integers(0, 2**31))
def test_gradient_energy_nonnegative_and_bounded(seed):
    rng = np.random.default_rng(seed)
    u = rng.normal(size=(4, 4, 4))
    g = ss.gradient_energy(u)
    # 0 <= ||grad u||^2 <= 4d ||u||^2
    assert 0.0 <= g <= 12.0 * float(np.sum(u * u)) + 1e-12
