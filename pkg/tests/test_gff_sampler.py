import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from dnls_phase import gff_sampler as gs
from dnls_phase import lattice_spectrum as ls
from dnls_phase.errors import InvalidArgumentError


def empirical_covariance_z(spec, y, zero_average, samples, seed):
    fields = gs.sample_fields(spec, y, seed, samples, zero_average=zero_average).reshape(samples, -1)
    empirical = fields.T @ fields.conj() / samples
    exact = gs.covariance_matrix(spec, y, zero_average)
    diag = np.real(np.diag(exact))
    se = np.sqrt(np.outer(diag, diag) / samples)
    return float(np.max(np.abs(empirical - exact) / se))


@pytest.mark.parametrize("zero_average,y", [(True, 0.0), (True, 0.5), (False, 0.5)])
def test_covariance_oracle(zero_average, y):
    spec = ls.TorusSpec(3, 4)
    assert empirical_covariance_z(spec, y, zero_average, 20000, seed=11) < 5.0


def test_direct_and_fft_synthesis_agree():
    spec = ls.TorusSpec(3, 4)
    rng = gs.make_rng(5)
    coeffs = gs.standard_complex_normal(rng, spec.shape)
    fft_values = math.sqrt(spec.N) * np.fft.ifftn(coeffs)
    assert np.allclose(gs.direct_synthesis(spec, coeffs), fft_values, atol=1e-12)


def test_zero_average_has_no_constant_mode():
    spec = ls.TorusSpec(3, 6)
    sample = gs.sample_zero_avg_mgff(spec, 0.0, seed=1)
    assert abs(np.sum(sample.field.values)) < 1e-10


def test_mass_moments_match_spectrum():
    spec = ls.TorusSpec(3, 6)
    masses = gs.mass_sample_expsum(spec, 0.3, seed=2, count=40000)
    stat = gs.MassStatistic.from_masses(masses, spec.N)
    assert abs(stat.mean - gs.expected_mass(spec, 0.3)) < 5 * stat.standard_error
    var_total = np.var(masses, ddof=1)
    assert math.isclose(var_total, gs.mass_variance(spec, 0.3), rel_tol=0.05)


def test_expected_mass_with_constant_mode():
    spec = ls.TorusSpec(3, 4)
    fields = gs.sample_fields(spec, 0.5, 3, 20000, zero_average=False)
    per_site = np.mean(np.abs(fields) ** 2)
    exact = gs.expected_mass(spec, 0.5, zero_average=False)
    assert math.isclose(per_site, exact, rel_tol=0.02)


def test_ks_expsum_against_fields():
    assert gs.ks_mass_comparison(ls.TorusSpec(3, 4), 0.5, seed=4, count=2000) > 0.01


def test_seed_reproducibility():
    spec = ls.TorusSpec(3, 4)
    a = gs.sample_fields(spec, 0.2, 9, 3)
    b = gs.sample_fields(spec, 0.2, 9, 3)
    c = gs.sample_fields(spec, 0.2, 10, 3)
    assert np.array_equal(a, b)
    assert not np.array_equal(a, c)


def test_concentration_beats_chebyshev(thermo3):
    report = gs.concentration_report(ls.TorusSpec(3, 16), 0.1, 0.05, 2000, seed=0, thermo=thermo3)
    assert report.frequency >= report.chebyshev_bound
    assert 0.0 <= report.chebyshev_bound <= 1.0


def test_max_exceedance(thermo3):
    report = gs.max_exceedance_report(ls.TorusSpec(3, 8), 0.2, 500, seed=0, thermo=thermo3)
    assert report.frequency <= 0.05
    assert report.threshold == pytest.approx(gs.max_threshold(thermo3.C_d, 512))


def test_invalid_massive_request():
    with pytest.raises(InvalidArgumentError):
        gs.sample_mgff(ls.TorusSpec(3, 4), 0.0, seed=0)
    with pytest.raises(InvalidArgumentError):
        gs.mass_sample_expsum(ls.TorusSpec(3, 4), 0.5, seed=0, count=0)


@given(st.floats(0.0, 5.0), st.integers(0, 2**31))
def test_sampled_masses_positive(y, seed):
    masses = gs.mass_sample_expsum(ls.TorusSpec(3, 3), y, seed, 16)
    assert np.all(masses > 0.0)


@given(st.floats(0.01, 5.0), st.integers(0, 2**31))
def test_parseval_mass_identity(y, seed):
    # the field mass equals the mode-space mass of the drawn coefficients
    spec = ls.TorusSpec(3, 4)
    rng = gs.make_rng(seed)
    coeffs = gs.standard_complex_normal(rng, spec.shape) / np.sqrt(ls.eigenvalue_grid(spec) + y)
    values = math.sqrt(spec.N) * np.fft.ifftn(coeffs)
    assert math.isclose(float(np.sum(np.abs(values) ** 2)), float(np.sum(np.abs(coeffs) ** 2)), rel_tol=1e-10)


@given(st.floats(0.01, 5.0), st.floats(0.01, 5.0))
def test_expected_mass_decreasing(y1, y2):
    spec = ls.TorusSpec(3, 4)
    lo, hi = sorted((y1, y2))
    assert gs.expected_mass(spec, lo) >= gs.expected_mass(spec, hi)
