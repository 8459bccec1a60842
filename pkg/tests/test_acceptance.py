"""Acceptance criteria, each checked at its stated tolerance.

Every test records one ``CRITERION k: PASS|FAIL <details>`` line (printed in
the pytest terminal summary) and then asserts the verdict, so a criterion
that is not met shows up as a failing test rather than being skipped.
"""

from __future__ import annotations

import math

import numpy as np
import pytest

from dnls_phase import gff_sampler as gs
from dnls_phase import gibbs_sampler as gb
from dnls_phase import lattice_spectrum as ls
from dnls_phase import soliton_solver as ss
from dnls_phase.errors import DnlsPhaseError
from dnls_phase.free_field_thermo import compute_C_d

PUBLISHED_C_D = {3: 0.252, 4: 0.155, 5: 0.116, 6: 0.093, 7: 0.078, 8: 0.067, 9: 0.059, 10: 0.053}


def verdict(log, number: int, passed: bool, details: str) -> None:
    line = f"CRITERION {number}: {'PASS' if passed else 'FAIL'} {details}"
    log.append(line)
    print(line)
    assert passed, line


def test_criterion_01_dimension_constants(acceptance_log):
    worst = 0.0
    parts = []
    for d, ref in PUBLISHED_C_D.items():
        value = compute_C_d(d)
        worst = max(worst, abs(value - ref))
        parts.append(f"d={d}:{value:.4f}")
    verdict(acceptance_log, 1, worst <= 1e-3, f"max |C_d - table| = {worst:.2e} ({' '.join(parts)})")


def test_criterion_02_free_field_functions(acceptance_log, thermo3):
    th = thermo3
    C = th.C_d
    b = np.geomspace(1e-3, 0.999 * C, 100)
    W = np.array([th.W(v) for v in b])
    slopes = np.diff(W) / np.diff(b)
    decreasing = bool(np.all(np.diff(W) < 0))
    convex = bool(np.all(np.diff(slopes) >= -1e-10 * np.abs(slopes[1:])))
    fd_error = 0.0
    for v in b[::5]:
        h = 1e-5 * v
        fd = (th.W(v + h) - th.W(v - h)) / (2 * h)
        fd_error = max(fd_error, abs(fd + th.L(v)) / max(1.0, th.L(v)))
    W_hat = np.array([th.W_hat(v) for v in b])
    hat_slopes = np.diff(W_hat) / np.diff(b)
    hat_ok = bool(
        np.all(np.diff(W_hat) > 0)
        and np.all(np.diff(hat_slopes) <= 1e-10 * np.abs(hat_slopes[1:]))
        and hat_slopes.min() >= 1.0 / C - 1e-9
        and hat_slopes.max() <= 2 * th.d + 1e-9
    )
    flat = all(th.W(v) == th.K0 for v in (C, 0.3, 1.0, 10.0))
    small_b = abs(th.W(1e-4) + math.log(math.e * 1e-4))
    passed = decreasing and convex and fd_error <= 1e-4 and hat_ok and flat and small_b <= 0.02
    verdict(
        acceptance_log, 2, passed,
        f"W decreasing={decreasing} convex={convex}; max rel |W'+L|={fd_error:.1e}; "
        f"W_hat ok={hat_ok} (slopes {hat_slopes.min():.3f}..{hat_slopes.max():.3f}); "
        f"W=K(0) above C_d={flat}; |W+log(e b)| at 1e-4 = {small_b:.4f}",
    )


def test_criterion_03_finite_volume_rate(acceptance_log, thermo3):
    d = 3
    sides = np.array([8, 16, 32, 64])
    N = sides.astype(float) ** d
    target = -1.0 / d
    slopes = {}
    bounded = True
    for y in (0.0, 0.5, 2.0):
        specs = [ls.TorusSpec(d, int(n)) for n in sides]
        e_k = np.array([abs(ls.K_N(y, s) - thermo3.K(y)) for s in specs])
        e_kp = np.array([abs(ls.K_N_prime(y, s) - thermo3.K_prime(y)) for s in specs])
        for name, err in (("K", e_k), ("K'", e_kp)):
            slopes[f"{name}(y={y})"] = float(np.polyfit(np.log(N), np.log(err), 1)[0])
            scaled = err * N ** (1.0 / d)
            bounded &= bool(scaled[-1] <= scaled[0] * (1 + 1e-9))
    within = {k: abs(v - target) <= 0.3 for k, v in slopes.items()}
    text = " ".join(f"{k}:{v:+.3f}" for k, v in slopes.items())
    verdict(
        acceptance_log, 3, all(within.values()),
        f"log-log slopes vs N (target {target:+.3f} +/- 0.3): {text}; "
        f"bound form err*N^(1/d) nonincreasing={bounded}",
    )


def test_criterion_04_soliton_suite(acceptance_log, threshold_p3, phase_model):
    p, d = 3.0, 3
    R = threshold_p3.value
    checks = {}
    # well below the threshold, with no threshold hint given to the estimator
    low = ss.minimal_energy_I(0.5 * R, p, d)
    checks["I(R/2)=0"] = abs(low.value) <= 1e-3
    residuals = []
    sandwich = []
    for a in (2 * R, 5 * R, 100.0):
        est = ss.minimal_energy_I(a, p, d)
        if est.result is not None:
            residuals.append(est.result.residual)
        lower = (2 / (p + 1)) * R ** ((p - 1) / 2) * a - (2 / (p + 1)) * a ** ((p + 1) / 2)
        upper = 2 * d * a - (2 / (p + 1)) * a ** ((p + 1) / 2)
        sandwich.append((a, lower, est.value, upper))
    checks["sandwich"] = all(lo <= v <= hi for _, lo, v, hi in sandwich)
    a_grid = R * np.geomspace(1.01, 50.0, 80)
    J = phase_model.energy.J(a_grid)
    gaps = J[:-1] - J[1:]
    window = (2 / (p + 1)) * (a_grid[1:] ** ((p - 1) / 2) - a_grid[:-1] ** ((p - 1) / 2))
    checks["J window"] = bool(np.all(gaps >= -1e-9) and np.all(gaps <= window + 1e-9))
    profile = ss.dirichlet_minimize(100.0, p, 6)
    residuals.append(profile.residual)
    checks["residual"] = max(residuals) <= 1e-8
    fit = ss.decay_fit(profile.profile)
    checks["decay R2"] = fit.r_squared >= 0.95
    text = "; ".join(f"I({a:.2f})={v:.3f} in [{lo:.3f},{hi:.3f}]" for a, lo, v, hi in sandwich)
    verdict(
        acceptance_log, 4, all(checks.values()),
        f"{checks}; I(R_p/2)={low.value:.2e}; {text}; max residual={max(residuals):.1e}; R2={fit.r_squared:.4f}",
    )


def test_criterion_05_threshold_consistency(acceptance_log, threshold_p3):
    try:
        quadratic = ss.minimal_energy_I(0.5, 2.0, 3)
        value, note = quadratic.value, f"I_p2(0.5)={quadratic.value:.3e} (clamped={quadratic.clamped})"
    except DnlsPhaseError as exc:
        value, note = math.nan, f"I_p2(0.5) not resolved: {type(exc).__name__}"
    # supporting evidence: a negative Dirichlet energy bounds I from above
    box = ss.dirichlet_minimize(20.0, 2.0, 13)
    rel = abs(threshold_p3.quotient_estimate - threshold_p3.bisection_estimate) / threshold_p3.value
    passed = value < -1e-4 and threshold_p3.value > 0 and rel <= 0.05
    verdict(
        acceptance_log, 5, passed,
        f"{note}, required < -1e-4; box energy p=2 a=20 m=13: {box.energy:.4f}; "
        f"R_3={threshold_p3.value:.6f} quotient={threshold_p3.quotient_estimate:.6f} "
        f"bisection={threshold_p3.bisection_estimate:.6f} rel diff={rel:.1e}",
    )


def test_criterion_06_transition_curve_bounds(acceptance_log, phase_model):
    model = phase_model
    p = model.p
    nus = model.R_p * np.geomspace(1.05, 1e4, 12)
    rows = []
    for nu in nus:
        tc = model.theta_c(nu)
        asymptote = (p + 1) / 2 * nu ** (-(p - 1) / 2) * model.xi0
        free_bound = model.C_d * nu / (nu - model.R_p)
        rows.append((nu, tc, asymptote, free_bound))
    cap_ok = [tc <= min(a, f) for _, tc, a, f in rows]
    free_ok = all(tc <= f for _, tc, _, f in rows)
    decreasing = all(b[1] < a[1] for a, b in zip(rows, rows[1:]))
    nu_top, tc_top = rows[-1][0], rows[-1][1]
    scaled = tc_top * 2 / (p + 1) * nu_top ** ((p - 1) / 2)
    ratio_ok = abs(scaled / model.xi0 - 1) <= 0.10
    passed = all(cap_ok) and decreasing and ratio_ok
    verdict(
        acceptance_log, 6, passed,
        f"cap held at {sum(cap_ok)}/{len(cap_ok)} nu (free-field bound alone: {free_ok}); "
        f"first ratio theta_c/asymptote={rows[0][1] / rows[0][2]:.3f}; decreasing={decreasing}; "
        f"scaled theta_c at 1e4 R_p = {scaled:.6f} vs xi_3(0)={model.xi0:.6f}",
    )


def test_criterion_07_scan_invariants(acceptance_log, phase_model):
    from dnls_phase.phase_diagram import staircase_violations

    thetas = np.linspace(0.05, 5.0, 64)
    nus = np.linspace(0.1, 50.0, 64)
    rows = phase_model.scan(thetas, nus, boundary_tol=1e-6)
    tol = 1e-9
    mismatched = 0
    classified = 0
    for r in rows:
        if r["region"] not in ("dispersive", "solitonic"):
            continue
        classified += 1
        free = phase_model.dispersive_free_energy(r["theta"])
        if (r["region"] == "dispersive") != (abs(r["F"] - free) <= tol):
            mismatched += 1
    violations = staircase_violations(rows)
    low = [r for r in rows if r["nu"] <= phase_model.R_p]
    low_ok = all(r["region"] == "dispersive" for r in low)
    near = sum(1 for r in rows if r["region"] == "near-boundary")
    passed = mismatched == 0 and violations == 0 and low_ok
    verdict(
        acceptance_log, 7, passed,
        f"{len(rows)} points ({near} near-boundary); region/F mismatches={mismatched} of {classified}; "
        f"staircase violations={violations}; nu<=R_p rows all dispersive={low_ok} ({len(low)} rows)",
    )


def test_criterion_08_gff_statistics(acceptance_log, thermo3):
    spec4 = ls.TorusSpec(3, 4)
    samples = 20000
    fields = gs.sample_fields(spec4, 0.0, 101, samples).reshape(samples, -1)
    empirical = fields.T @ fields.conj() / samples
    exact = gs.covariance_matrix(spec4, 0.0)
    diag = np.real(np.diag(exact))
    z = float(np.max(np.abs(empirical - exact) / np.sqrt(np.outer(diag, diag) / samples)))
    ks_p = gs.ks_mass_comparison(spec4, 0.5, seed=102, count=2000)
    conc = gs.concentration_report(ls.TorusSpec(3, 16), 0.1, 0.05, 2000, seed=103, thermo=thermo3)
    mx = gs.max_exceedance_report(ls.TorusSpec(3, 8), 0.2, 500, seed=104, thermo=thermo3)
    passed = z <= 5 and ks_p > 0.01 and conc.frequency >= conc.chebyshev_bound and mx.frequency <= 0.05
    verdict(
        acceptance_log, 8, passed,
        f"covariance max z={z:.2f}; KS p={ks_p:.3f}; concentration {conc.frequency:.4f} vs bound "
        f"{conc.chebyshev_bound:.4f}; max exceedance {mx.exceedances}/{mx.samples}",
    )


def test_criterion_09_gibbs_phenomenology(acceptance_log, thermo3, phase_model):
    spec = ls.TorusSpec(3, 4)
    soliton_point = gb.ModelParams(20.0, 200.0, 3.0, spec)
    dispersive_point = gb.ModelParams(0.1, 0.5, 3.0, spec)
    sol = gb.metropolis_chain(soliton_point, 20000, seed=11, burn_in=20000, thin=20, init="spike")
    dis = gb.metropolis_chain(dispersive_point, 20000, seed=12, burn_in=20000, thin=20, init="zero")
    sol_frac = sol.mean("max_frac")
    dis_frac = dis.mean("max_frac")
    bound = 1.25 * math.sqrt(3 * thermo3.C_d * math.log(spec.N))
    raw = np.array([r.max_abs for r in dis.records])
    scaled_share = float(np.mean(math.sqrt(dispersive_point.theta) * raw <= bound))
    raw_share = float(np.mean(raw <= bound))
    regions = (phase_model.minimize_G(20.0, 200.0).region, phase_model.minimize_G(0.1, 0.5).region)
    passed = sol_frac > 0.5 and dis_frac < 0.2 and scaled_share >= 0.95
    verdict(
        acceptance_log, 9, passed,
        f"solitonic point max-site fraction {sol_frac:.3f} (acc {sol.acceptance:.2f}); dispersive point "
        f"{dis_frac:.3f} (acc {dis.acceptance:.2f}); sup-norm of sqrt(theta) psi within bound in "
        f"{scaled_share:.1%} of samples (unscaled psi: {raw_share:.1%}); variational regions {regions}",
    )


def test_criterion_10_partition_function(acceptance_log):
    parts = []
    ok = True
    for n in (2, 3):
        spec = ls.TorusSpec(3, n)
        free = gb.ModelParams(1.0, 0.0, 3.0, spec)
        tilted = gb.ModelParams(1.0, 0.5, 3.0, spec)
        est = gb.small_N_partition_estimate(free, samples=100000, seed=21)
        oracle = gb.partition_oracle_free(spec, 1.0)
        est_tilted = gb.small_N_partition_estimate(tilted, samples=100000, seed=21)
        match = abs(est.value - oracle) <= 3 * est.standard_error
        shift_up = est_tilted.value > est.value
        ok &= match and shift_up
        parts.append(
            f"n={n}: {est.value:.6f}+/-{est.standard_error:.1e} vs oracle {oracle:.6f}; "
            f"nu=0.5 shift {est_tilted.value - est.value:+.4f}"
        )
    verdict(acceptance_log, 10, ok, "; ".join(parts))


def test_criterion_11_convexity_window(acceptance_log):
    x = np.linspace(1e-4, 50.0, 200001)
    positive = {p: gb.h_convexity_scan(p, x).positive for p in (2.0, 3.0, 5.0, 10.0)}
    report = gb.h_convexity_scan(12.0, x)
    closed_vs_fd = np.max(np.abs(gb.h_radial_laplacian(x[1000::20000], 12.0) / gb.h_radial_laplacian_fd(x[1000::20000], 12.0) - 1))
    passed = all(positive.values()) and not report.positive
    verdict(
        acceptance_log, 11, passed,
        f"positive for {positive}; p=12 violation interval {report.violation_interval}; "
        f"closed form vs differences rel {closed_vs_fd:.1e}",
    )


def test_criterion_12_dynamics(acceptance_log):
    p = 3.0
    ground = ss.dirichlet_minimize(100.0, p, 4)
    psi0 = ss.embed_in_torus(ground.profile, 11)
    long_run = ss.evolve_dnls(psi0, p, dt=1e-3, T=10.0, frame_omega=ground.omega, sample_every=100)
    modulus_drift = max(float(np.max(np.abs(np.abs(s) - np.abs(psi0)))) for s in long_run.samples)
    rng = np.random.default_rng(5)
    generic = 0.5 * (rng.normal(size=(8, 8, 8)) + 1j * rng.normal(size=(8, 8, 8)))
    # The random field is integrated as is. The soliton is integrated in its co-rotating frame,
    # which follows the same trajectory up to a global phase. In the lab frame its phase speed
    # |omega| ~ 94 makes RK4 at dt=1e-3 drift by ~1e-5; that value is reported, not gated.
    conservation = [
        ss.evolve_dnls(generic, p, dt=1e-3, T=1.0),
        ss.evolve_dnls(psi0, p, dt=1e-3, T=1.0, frame_omega=ground.omega),
    ]
    mass_drift = max(t.mass_drift for t in conservation)
    energy_drift = max(t.energy_drift for t in conservation)
    lab_frame = ss.evolve_dnls(psi0, p, dt=1e-3, T=1.0)
    scaling_error = 0.0
    for lam in (0.5, 2.0, 3.7):
        for field in (generic, psi0):
            lhs = ss.hamiltonian(field, p, "periodic", h=1.0)
            rhs = lam ** ss.scaling_exponent(3, p) * ss.hamiltonian(ss.rescale_solution(field, lam, p), p, "periodic", 1.0 / lam)
            scaling_error = max(scaling_error, abs(lhs - rhs) / abs(lhs))
    passed = modulus_drift < 1e-6 and mass_drift < 1e-8 and energy_drift < 1e-8 and scaling_error < 1e-10
    verdict(
        acceptance_log, 12, passed,
        f"modulus drift over T=10: {modulus_drift:.1e}; mass drift {mass_drift:.1e}; energy drift "
        f"{energy_drift:.1e}; scaling identity rel error {scaling_error:.1e}; soliton in lab frame: mass "
        f"{lab_frame.mass_drift:.1e}, energy {lab_frame.energy_drift:.1e} (informational)",
    )


if __name__ == "__main__":
    raise SystemExit(pytest.main([__file__, "-v"]))
