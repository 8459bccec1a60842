"""Exact spectral quantities of the discrete torus Laplacian.

The torus ``[n]^d`` has ``N = n**d`` sites. Its (positive) graph Laplacian is
diagonalized by plane waves, with eigenvalues ``lambda_k = f(k/n)`` where
``f(x) = 4 * sum_i sin(pi x_i)**2``.

All averages over nonzero modes are accumulated in ascending eigenvalue order
with :func:`math.fsum`, which is an exactly-rounded (error-free
transformation) summation. Modes are enumerated row-major over
``{0, ..., n-1}^d``.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Mapping, NamedTuple, Sequence

import numpy as np

from .errors import InvalidArgumentError, NoSolutionError

#: Largest lattice size for which full mode enumeration is allowed.
MAX_SITES = 2**31


@dataclass(frozen=True)
class TorusSpec:
    """Geometry of the discrete torus ``[n]^d``.

    Parameters
    ----------
    d : int
        Spatial dimension, at least 1.
    n : int
        Side length, at least 2.
    """

    d: int
    n: int
    N: int = field(init=False)

    def __post_init__(self) -> None:
        if isinstance(self.d, bool) or int(self.d) != self.d or self.d < 1:
            raise InvalidArgumentError(f"dimension d must be an integer >= 1, got {self.d!r}")
        if isinstance(self.n, bool) or int(self.n) != self.n or self.n < 2:
            raise InvalidArgumentError(f"side length n must be an integer >= 2, got {self.n!r}")
        object.__setattr__(self, "d", int(self.d))
        object.__setattr__(self, "n", int(self.n))
        size = self.n**self.d
        if size > MAX_SITES:
            raise InvalidArgumentError(
                f"torus with n={self.n}, d={self.d} has {size} sites, above the limit {MAX_SITES}"
            )
        object.__setattr__(self, "N", size)

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.n,) * self.d

    def site_index(self, x: Sequence[int]) -> int:
        """Row-major flat index of the multi-index ``x`` (coordinates taken mod n)."""
        if len(x) != self.d:
            raise InvalidArgumentError(f"expected {self.d} coordinates, got {len(x)}")
        idx = 0
        for xi in x:
            idx = idx * self.n + int(xi) % self.n
        return idx

    def multi_index(self, flat: int) -> tuple[int, ...]:
        """Inverse of :meth:`site_index`."""
        if not 0 <= flat < self.N:
            raise InvalidArgumentError(f"flat index {flat} out of range [0, {self.N})")
        return tuple(int(v) for v in np.unravel_index(flat, self.shape))


class SpectrumSummary(NamedTuple):
    """Spectral averages at a fixed mass parameter ``y``."""

    y: float
    K_N: float
    K_N_prime: float
    m_N: Mapping[float, float]


class RootSolution(NamedTuple):
    """A root together with its achieved residual and iteration count."""

    value: float
    residual: float
    iterations: int


def symbol_f(x: np.ndarray | Sequence[float]) -> float | np.ndarray:
    """Evaluate ``f(x) = 4 * sum_i sin(pi x_i)**2``.

    The last axis of ``x`` indexes coordinates, so a stack of points may be
    passed at once.
    """
    arr = np.asarray(x, dtype=float)
    if np.any((arr < 0.0) | (arr > 1.0)):
        raise InvalidArgumentError("coordinates of x must lie in [0, 1]")
    out = 4.0 * np.sum(np.sin(np.pi * arr) ** 2, axis=-1)
    return float(out) if np.ndim(out) == 0 else out


def eigenvalue(k: Sequence[int], spec: TorusSpec) -> float:
    """Eigenvalue ``lambda_k = f(k/n)`` of the torus Laplacian."""
    if len(k) != spec.d:
        raise InvalidArgumentError(f"mode index must have {spec.d} components")
    if any(int(ki) != ki or not 0 <= ki < spec.n for ki in k):
        raise InvalidArgumentError(f"mode index {tuple(k)} outside {{0..{spec.n - 1}}}^{spec.d}")
    return float(4.0 * sum(math.sin(math.pi * ki / spec.n) ** 2 for ki in k))


def one_dimensional_eigenvalues(n: int) -> np.ndarray:
    """Eigenvalues ``4 sin^2(pi k/n)`` of the cycle graph, ``k = 0..n-1``."""
    return 4.0 * np.sin(np.pi * np.arange(n) / n) ** 2


def eigenvalues(spec: TorusSpec) -> np.ndarray:
    """All ``N`` eigenvalues as a flat array in row-major mode order."""
    return _eigenvalue_grid(spec).ravel().copy()


@lru_cache(maxsize=32)
def _eigenvalue_grid(spec: TorusSpec) -> np.ndarray:
    one = one_dimensional_eigenvalues(spec.n)
    grid = np.zeros(spec.shape)
    for axis in range(spec.d):
        shape = [1] * spec.d
        shape[axis] = spec.n
        grid = grid + one.reshape(shape)
    grid.setflags(write=False)
    return grid


@lru_cache(maxsize=32)
def _sorted_nonzero(spec: TorusSpec) -> np.ndarray:
    lam = np.sort(_eigenvalue_grid(spec).ravel()[1:])
    lam.setflags(write=False)
    return lam


def eigenvalue_grid(spec: TorusSpec) -> np.ndarray:
    """Read-only eigenvalue array of shape ``(n,)*d`` (mode-space layout)."""
    return _eigenvalue_grid(spec)


def nonzero_eigenvalues_sorted(spec: TorusSpec) -> np.ndarray:
    """Read-only ascending array of the ``N-1`` nonzero-mode eigenvalues."""
    return _sorted_nonzero(spec)


def _mode_average(values: np.ndarray, N: int) -> float:
    return math.fsum(values) / N


def _check_y(y: float) -> float:
    y = float(y)
    if not y >= 0.0 or not math.isfinite(y):
        raise InvalidArgumentError(f"mass parameter y must be finite and >= 0, got {y}")
    return y


def K_N(y: float, spec: TorusSpec) -> float:
    """``(1/N) * sum_{k != 0} log(y + lambda_k)``."""
    y = _check_y(y)
    return _mode_average(np.log(y + _sorted_nonzero(spec)), spec.N)


def K_N_prime(y: float, spec: TorusSpec) -> float:
    """``(1/N) * sum_{k != 0} 1/(y + lambda_k)``: mean site mass of the zero-average field."""
    y = _check_y(y)
    # ascending eigenvalues give descending terms; sum small terms first
    return _mode_average((1.0 / (y + _sorted_nonzero(spec)))[::-1], spec.N)


def m_N(p: float, spec: TorusSpec) -> float:
    """Eigenvalue power sum ``(1/N) * sum_{k != 0} lambda_k**(-p)``."""
    p = float(p)
    if not p > 0.0:
        raise InvalidArgumentError(f"exponent p must be positive, got {p}")
    return _mode_average((_sorted_nonzero(spec) ** (-p))[::-1], spec.N)


def m_N_multiset(p: float, spec: TorusSpec) -> float:
    """Independent evaluation of :func:`m_N` by multiset accumulation.

    Each nonzero eigenvalue is a sum of ``d`` one-dimensional eigenvalues.
    Instead of enumerating all ``N`` modes, this iterates over sorted
    ``d``-tuples of distinct one-dimensional values and weights each by its
    multinomial multiplicity.
    """
    p = float(p)
    if not p > 0.0:
        raise InvalidArgumentError(f"exponent p must be positive, got {p}")
    one = one_dimensional_eigenvalues(spec.n)
    keys = np.round(one, 12)
    distinct: dict[float, tuple[float, int]] = {}
    for key, value in zip(keys, one):
        val, count = distinct.get(float(key), (float(value), 0))
        distinct[float(key)] = (val, count + 1)
    levels = sorted(distinct.values())
    terms = []
    for combo in itertools.combinations_with_replacement(range(len(levels)), spec.d):
        lam = sum(levels[i][0] for i in combo)
        if lam == 0.0:
            continue
        mult = math.factorial(spec.d)
        for i in set(combo):
            mult //= math.factorial(combo.count(i))
        for i in combo:
            mult *= levels[i][1]
        terms.append((lam, mult))
    terms.sort()
    return math.fsum(mult * lam ** (-p) for lam, mult in reversed(terms)) / spec.N


def summary(y: float, spec: TorusSpec, exponents: Sequence[float] = (0.5, 1.5, 2.0)) -> SpectrumSummary:
    """Bundle ``K_N``, ``K_N'`` and ``m_N`` at the given exponents."""
    return SpectrumSummary(
        y=float(y),
        K_N=K_N(y, spec),
        K_N_prime=K_N_prime(y, spec),
        m_N={float(p): m_N(p, spec) for p in exponents},
    )


def _monotone_root(func, target: float, lo: float, hi: float, tol: float, max_iter: int = 300) -> RootSolution:
    """Root of a strictly decreasing ``func(y) = target`` bracketed in ``[lo, hi]``.

    Bisection until the bracket is relatively small, then a safeguarded secant
    polish that never leaves the bracket.
    """
    f_lo = func(lo) - target
    f_hi = func(hi) - target
    if f_lo == 0.0:
        return RootSolution(lo, 0.0, 0)
    if f_hi == 0.0:
        return RootSolution(hi, 0.0, 0)
    it = 0
    while hi - lo > 1e-6 * max(1.0, hi) and it < max_iter:
        mid = 0.5 * (lo + hi)
        f_mid = func(mid) - target
        it += 1
        if f_mid == 0.0:
            return RootSolution(mid, 0.0, it)
        if f_mid > 0.0:
            lo, f_lo = mid, f_mid
        else:
            hi, f_hi = mid, f_mid
    best, f_best = (lo, f_lo) if abs(f_lo) < abs(f_hi) else (hi, f_hi)
    while abs(f_best) > tol and it < max_iter:
        cand = hi - f_hi * (hi - lo) / (f_hi - f_lo)
        if not lo < cand < hi:
            cand = 0.5 * (lo + hi)
        f_cand = func(cand) - target
        it += 1
        if f_cand > 0.0:
            lo, f_lo = cand, f_cand
        else:
            hi, f_hi = cand, f_cand
        if abs(f_cand) < abs(f_best):
            best, f_best = cand, f_cand
        if hi - lo <= 4 * np.spacing(max(hi, 1e-300)):
            break
    return RootSolution(best, abs(f_best), it)


def solve_y_N(theta: float, spec: TorusSpec, tol: float = 1e-13) -> RootSolution:
    """Solve ``K_N'(y) = theta`` for ``y >= 0`` (zero mode excluded).

    Raises
    ------
    NoSolutionError
        If ``theta > K_N'(0)``; the equation then has no nonnegative root.
    """
    theta = float(theta)
    if not theta > 0.0 or not math.isfinite(theta):
        raise InvalidArgumentError(f"theta must be positive and finite, got {theta}")
    top = K_N_prime(0.0, spec)
    if theta > top:
        raise NoSolutionError(f"theta={theta} exceeds K_N'(0)={top}; no root y >= 0")
    if theta == top:
        return RootSolution(0.0, 0.0, 0)
    hi = max(1.0, (1.0 - 1.0 / spec.N) / theta)
    return _monotone_root(lambda y: K_N_prime(y, spec), theta, 0.0, hi, tol * max(theta, 1e-300))


def solve_y_N_with_zero_mode(theta: float, spec: TorusSpec, tol: float = 1e-13) -> RootSolution:
    """Solve ``K_N'(y) + 1/(N y) = theta`` (zero mode of the massive field included).

    This is the normalization ``E ||Psi||^2 = N theta`` for the massive field
    with the constant mode. A root exists for every ``theta > 0``.
    """
    theta = float(theta)
    if not theta > 0.0 or not math.isfinite(theta):
        raise InvalidArgumentError(f"theta must be positive and finite, got {theta}")

    def mass(y: float) -> float:
        return K_N_prime(y, spec) + 1.0 / (spec.N * y)

    hi = max(1.0, 1.0 / theta)
    lo = hi
    while mass(lo) <= theta:
        lo *= 0.5
    return _monotone_root(mass, theta, lo, hi, tol * theta)


@dataclass
class ComplexField:
    """A complex-valued function on the torus described by ``spec``.

    ``values`` has shape ``spec.shape``; site ``x`` is ``values[x]``.
    """

    spec: TorusSpec
    values: np.ndarray

    def __post_init__(self) -> None:
        self.values = np.asarray(self.values, dtype=complex)
        if self.values.shape != self.spec.shape:
            raise InvalidArgumentError(f"field shape {self.values.shape} does not match torus {self.spec.shape}")

    @property
    def mass(self) -> float:
        """``||psi||_2^2``."""
        return float(np.sum(np.abs(self.values) ** 2))
