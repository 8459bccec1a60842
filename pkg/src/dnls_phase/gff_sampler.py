"""Spectral samplers for massive Gaussian free fields on the torus.

Modes are indexed by ``k in [n]^d`` with orthonormal plane waves
``phi^k_x = exp(2 pi i k.x / n) / sqrt(N)``. A field with independent
standard complex Gaussian coefficients ``zeta_k`` (``E|zeta|^2 = 1``) is::

    Psi = sum_k zeta_k / sqrt(lambda_k + y) phi^k = sqrt(N) * ifftn(c)

with ``c_k = zeta_k / sqrt(lambda_k + y)``. The zero-average field drops
``k = 0``; the massive field keeps it with weight ``1/sqrt(y)``. By
Parseval ``||Psi||^2 = sum_k |c_k|^2``, which is a weighted sum of
independent unit exponentials and can be drawn without building the field.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy import stats

from . import lattice_spectrum as ls
from .errors import InvalidArgumentError
from .lattice_spectrum import ComplexField, TorusSpec


def make_rng(seed: int) -> np.random.Generator:
    """Counter-based Philox generator for ``seed``."""
    if int(seed) != seed or seed < 0:
        raise InvalidArgumentError(f"seed must be a nonnegative integer, got {seed}")
    return np.random.Generator(np.random.Philox(int(seed)))


def standard_complex_normal(rng: np.random.Generator, shape) -> np.ndarray:
    """``E zeta = 0``, ``E|zeta|^2 = 1``: real and imaginary parts N(0, 1/2)."""
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) * math.sqrt(0.5)


@dataclass
class GFFSample:
    """One field draw with the data needed to reproduce it."""

    spec: TorusSpec
    y: float
    zero_average: bool
    field: ComplexField
    seed: int

    @property
    def mass(self) -> float:
        return self.field.mass


def _mode_weights(spec: TorusSpec, y: float, zero_average: bool) -> np.ndarray:
    lam = ls.eigenvalue_grid(spec)
    with np.errstate(divide="ignore"):
        weights = 1.0 / np.sqrt(lam + y)
    if zero_average:
        weights = weights.copy()
        weights[(0,) * spec.d] = 0.0
    return weights


def _synthesize(spec: TorusSpec, y: float, zero_average: bool, rng: np.random.Generator) -> np.ndarray:
    coeffs = standard_complex_normal(rng, spec.shape) * _mode_weights(spec, y, zero_average)
    return math.sqrt(spec.N) * np.fft.ifftn(coeffs)


def sample_zero_avg_mgff(spec: TorusSpec, y: float, seed: int) -> GFFSample:
    """Zero-average field with covariance ``(y - Delta)^-1`` on the nonconstant modes."""
    y = ls._check_y(y)
    values = _synthesize(spec, y, True, make_rng(seed))
    return GFFSample(spec, y, True, ComplexField(spec, values), int(seed))


def sample_mgff(spec: TorusSpec, y: float, seed: int) -> GFFSample:
    """Massive field with covariance ``(y - Delta)^-1``, constant mode included."""
    y = float(y)
    if not y > 0.0 or not math.isfinite(y):
        raise InvalidArgumentError(f"the massive field needs y > 0, got {y}")
    values = _synthesize(spec, y, False, make_rng(seed))
    return GFFSample(spec, y, False, ComplexField(spec, values), int(seed))


def sample_fields(spec: TorusSpec, y: float, seed: int, count: int, zero_average: bool = True) -> np.ndarray:
    """``count`` fields from one stream, shape ``(count,) + spec.shape``."""
    y = ls._check_y(y)
    if not zero_average and not y > 0.0:
        raise InvalidArgumentError("the massive field needs y > 0")
    rng = make_rng(seed)
    weights = _mode_weights(spec, y, zero_average)
    coeffs = standard_complex_normal(rng, (count,) + spec.shape) * weights
    axes = tuple(range(1, spec.d + 1))
    return math.sqrt(spec.N) * np.fft.ifftn(coeffs, axes=axes)


def direct_synthesis(spec: TorusSpec, coeffs: np.ndarray) -> np.ndarray:
    """``sum_k c_k phi^k`` by explicit O(N^2) summation (test oracle for small tori)."""
    if spec.N > 4096:
        raise InvalidArgumentError("direct synthesis is meant for small tori")
    sites = np.indices(spec.shape).reshape(spec.d, -1).T
    phase = 2j * np.pi * (sites @ sites.T) / spec.n
    basis = np.exp(phase) / math.sqrt(spec.N)
    return (basis @ coeffs.ravel()).reshape(spec.shape)


def covariance_matrix(spec: TorusSpec, y: float, zero_average: bool = True) -> np.ndarray:
    """Dense ``E Psi_x conj(Psi_x')`` by inverting ``y + L`` on the relevant subspace."""
    if spec.N > 4096:
        raise InvalidArgumentError("dense covariance is meant for small tori")
    N = spec.N
    lap = np.zeros((N, N))
    for flat in range(N):
        x = spec.multi_index(flat)
        for axis in range(spec.d):
            for step in (1, -1):
                nb = list(x)
                nb[axis] = (nb[axis] + step) % spec.n
                lap[flat, spec.site_index(nb)] -= 1.0
        lap[flat, flat] += 2.0 * spec.d
    if not zero_average:
        return np.linalg.inv(lap + y * np.eye(N))
    # restrict to the orthogonal complement of constants
    basis = np.linalg.qr(np.eye(N) - 1.0 / N, mode="reduced")[0][:, : N - 1]
    reduced = basis.T @ (lap + y * np.eye(N)) @ basis
    return basis @ np.linalg.inv(reduced) @ basis.T


# ---------------------------------------------------------------------------
# Mass statistics
# ---------------------------------------------------------------------------


def mass_sample_expsum(spec: TorusSpec, y: float, seed: int, count: int, zero_average: bool = True) -> np.ndarray:
    """Draws of ``Gamma = sum_k X_k / (lambda_k + y)`` with unit exponentials ``X_k``."""
    y = ls._check_y(y)
    if int(count) != count or count < 1:
        raise InvalidArgumentError(f"count must be a positive integer, got {count}")
    lam = ls.eigenvalues(spec)
    if zero_average:
        lam = lam[1:]
    elif not y > 0.0:
        raise InvalidArgumentError("the massive field needs y > 0")
    inv = 1.0 / (lam + y)
    rng = make_rng(seed)
    out = np.empty(int(count))
    block = max(1, 2**22 // len(inv))
    for start in range(0, int(count), block):
        stop = min(start + block, int(count))
        out[start:stop] = rng.standard_exponential((stop - start, len(inv))) @ inv
    return out


@dataclass
class MassStatistic:
    """Summary of sampled ``||Psi||^2 / N`` values."""

    samples: int
    mean: float
    variance: float
    standard_error: float
    exceedances: dict = field(default_factory=dict)

    @classmethod
    def from_masses(cls, masses: np.ndarray, N: int, thresholds: Sequence[float] = ()) -> "MassStatistic":
        per_site = np.asarray(masses) / N
        var = float(per_site.var(ddof=1)) if len(per_site) > 1 else 0.0
        return cls(
            samples=len(per_site),
            mean=float(per_site.mean()),
            variance=var,
            standard_error=math.sqrt(var / len(per_site)),
            exceedances={float(t): int(np.sum(per_site > t)) for t in thresholds},
        )


def expected_mass(spec: TorusSpec, y: float, zero_average: bool = True) -> float:
    """``E ||Psi||^2 / N``: ``K_N'(y)``, plus ``1/(N y)`` with the constant mode."""
    value = ls.K_N_prime(y, spec)
    return value if zero_average else value + 1.0 / (spec.N * y)


def mass_variance(spec: TorusSpec, y: float, zero_average: bool = True) -> float:
    """``Var ||Psi||^2 = sum_k (lambda_k + y)^-2``."""
    lam = ls.eigenvalues(spec)
    if zero_average:
        lam = lam[1:]
    return math.fsum(np.sort(1.0 / (lam + y) ** 2))


def ks_mass_comparison(spec: TorusSpec, y: float, seed: int, count: int = 2000) -> float:
    """Two-sample KS p-value between field-based and exponential-sum masses."""
    fields = sample_fields(spec, y, seed, count)
    field_mass = np.sum(np.abs(fields) ** 2, axis=tuple(range(1, spec.d + 1)))
    expsum = mass_sample_expsum(spec, y, seed + 1, count)
    return float(stats.ks_2samp(field_mass, expsum).pvalue)


# ---------------------------------------------------------------------------
# Concentration and maximum reports
# ---------------------------------------------------------------------------


@dataclass
class ConcentrationReport:
    """In-window frequency of ``Gamma/N in (b - eps, b + eps)`` and its Chebyshev bound."""

    b: float
    eps: float
    y: float
    samples: int
    frequency: float
    standard_error: float
    chebyshev_bound: float
    bias: float
    resolution_ok: bool
    mass_parameter: str

    def to_json(self) -> dict:
        return dict(self.__dict__)


def _mass_parameter(b: float, spec: TorusSpec, method: str, thermo=None) -> float:
    if method == "infinite":
        if thermo is None:
            from .free_field_thermo import ThermoFunctions

            thermo = ThermoFunctions(spec.d)
        return thermo.L(b)
    if method == "finite":
        return ls.solve_y_N(b, spec).value
    if method == "finite-with-zero-mode":
        return ls.solve_y_N_with_zero_mode(b, spec).value
    raise InvalidArgumentError(f"unknown mass parameter rule {method!r}")


def concentration_report(
    spec: TorusSpec,
    b: float,
    eps: float,
    samples: int,
    seed: int = 0,
    mass_parameter: str = "infinite",
    thermo=None,
    C_d: float | None = None,
) -> ConcentrationReport:
    """Empirical probability that the zero-average field at ``y`` has ``||Psi||^2/N`` within ``eps`` of ``b``.

    ``y`` is ``L(b)`` (``mass_parameter="infinite"``) or the finite-volume
    root of ``K_N'(y) = b`` (``"finite"``). The Chebyshev bound is
    ``1 - m_N(2) / (N eps^2)``; ``resolution_ok`` is false when
    ``N eps^d <= 1``.
    """
    b, eps = float(b), float(eps)
    if thermo is None:
        from .free_field_thermo import ThermoFunctions

        thermo = ThermoFunctions(spec.d)
    if C_d is None:
        C_d = thermo.C_d
    if not 0.0 < b < C_d:
        raise InvalidArgumentError(f"b must lie in (0, C_d={C_d}), got {b}")
    if not eps > 0.0:
        raise InvalidArgumentError("eps must be positive")
    y = _mass_parameter(b, spec, mass_parameter, thermo)
    per_site = mass_sample_expsum(spec, y, seed, samples) / spec.N
    inside = np.abs(per_site - b) < eps
    freq = float(inside.mean())
    return ConcentrationReport(
        b=b,
        eps=eps,
        y=y,
        samples=int(samples),
        frequency=freq,
        standard_error=math.sqrt(max(freq * (1 - freq), 1.0 / samples) / samples),
        chebyshev_bound=1.0 - ls.m_N(2.0, spec) / (spec.N * eps**2),
        bias=ls.K_N_prime(y, spec) - b,
        resolution_ok=spec.N * eps**spec.d > 1.0,
        mass_parameter=mass_parameter,
    )


@dataclass
class MaxExceedanceReport:
    """Frequency of ``||Psi||_inf >= threshold`` for the zero-average field at ``y = L(b)``."""

    b: float
    y: float
    threshold: float
    samples: int
    exceedances: int
    frequency: float
    union_bound: float
    site_variance: float

    def to_json(self) -> dict:
        return dict(self.__dict__)


def max_threshold(C_d: float, N: int) -> float:
    """``sqrt(3 C_d log N)``."""
    return math.sqrt(3.0 * C_d * math.log(N))


def max_exceedance_report(
    spec: TorusSpec,
    b: float,
    samples: int,
    seed: int = 0,
    thermo=None,
    threshold_scale: float = 1.0,
    batch: int = 256,
) -> MaxExceedanceReport:
    """Empirical ``P(max_x |Psi_x| >= scale * sqrt(3 C_d log N))``.

    ``union_bound`` is ``N exp(-t^2 / K_N'(y))``, the union bound over sites
    for complex Gaussians of variance ``K_N'(y)``.
    """
    if thermo is None:
        from .free_field_thermo import ThermoFunctions

        thermo = ThermoFunctions(spec.d)
    b = float(b)
    if not 0.0 < b <= thermo.C_d:
        raise InvalidArgumentError(f"b must lie in (0, C_d={thermo.C_d}], got {b}")
    y = thermo.L(b)
    threshold = threshold_scale * max_threshold(thermo.C_d, spec.N)
    rng = make_rng(seed)
    weights = _mode_weights(spec, y, True)
    axes = tuple(range(1, spec.d + 1))
    hits = 0
    done = 0
    while done < samples:
        size = min(batch, samples - done)
        coeffs = standard_complex_normal(rng, (size,) + spec.shape) * weights
        fields = math.sqrt(spec.N) * np.fft.ifftn(coeffs, axes=axes)
        hits += int(np.sum(np.max(np.abs(fields), axis=axes) >= threshold))
        done += size
    site_var = ls.K_N_prime(y, spec)
    return MaxExceedanceReport(
        b=b,
        y=y,
        threshold=threshold,
        samples=int(samples),
        exceedances=hits,
        frequency=hits / samples,
        union_bound=min(1.0, spec.N * math.exp(-(threshold**2) / site_var)),
        site_variance=site_var,
    )
