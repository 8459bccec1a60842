"""Infinite-volume free-field thermodynamic functions.

For ``y >= 0`` and ``d >= 3``::

    K(y)  = integral over [0,1]^d of log(y + f(x)) dx
    K'(y) = integral over [0,1]^d of 1/(y + f(x)) dx
    C_d   = K'(0)

``L`` inverts ``K'`` on ``(0, C_d)`` and vanishes on ``[C_d, inf)``;
``W(b) = K(L(b)) - b L(b)`` and ``W_hat(b) = W(b) + 1 + log b``.

Three quadrature routes are available.

``bessel`` (default)
    Since ``f`` is a sum of independent one-dimensional terms, Laplace
    transforms factorize: ``integral of exp(-t f) = (exp(-2t) I_0(2t))**d``.
    Hence ``K'(y) = int_0^inf exp(-y t) ive(0, 2t)**d dt`` and, by Frullani's
    identity, ``K(y) = int_0^inf (exp(-t) - exp(-y t) ive(0, 2t)**d) / t dt``.
    Both are smooth one-dimensional integrals evaluated with adaptive
    Gauss-Kronrod quadrature to about 1e-12.
``qmc``
    Scrambled Sobol points on the periodized cube with a Gaussian-windowed
    subtraction of the origin singularity at ``y = 0``. Independent scrambles
    give the error estimate.
``lattice``
    Midpoint lattice sums. For ``y > 0`` the full periodic sum including the
    constant mode converges exponentially fast. For ``y = 0`` lattice sums
    over nonzero modes at ``n in {16, 32, 64}`` are Richardson-extrapolated.
"""

from __future__ import annotations

import csv
import math
import os
import threading
from dataclasses import dataclass
from pathlib import Path
from typing import NamedTuple

import numpy as np
from scipy import integrate, special
from scipy.interpolate import CubicHermiteSpline
from scipy.stats import qmc

from . import lattice_spectrum as ls
from .errors import AccuracyNotMetError, DivergentConstantError, InvalidArgumentError

#: Environment variable that overrides the default cache directory.
CACHE_ENV = "DNLS_PHASE_CACHE_DIR"

METHODS = ("bessel", "qmc", "lattice")
SINGULARITY_HANDLING = ("none", "origin-subtraction")

CACHE_HEADER = ("d", "y", "method", "points", "seed", "K", "Kprime", "err")


@dataclass(frozen=True)
class QuadratureSpec:
    """How the d-dimensional integrals are evaluated.

    Parameters
    ----------
    method : {"bessel", "qmc", "lattice"}
    points : int
        Number of QMC points per scramble (ignored by the other methods).
    seed : int
        Scrambling seed for QMC.
    singularity_handling : {"none", "origin-subtraction"}
        QMC treatment of the origin singularity at ``y = 0``.
    scrambles : int
        Number of independent QMC scrambles used for the error estimate.
    """

    method: str = "bessel"
    points: int = 2**16
    seed: int = 0
    singularity_handling: str = "origin-subtraction"
    scrambles: int = 8

    def __post_init__(self) -> None:
        if self.method not in METHODS:
            raise InvalidArgumentError(f"unknown quadrature method {self.method!r}; choose from {METHODS}")
        if self.singularity_handling not in SINGULARITY_HANDLING:
            raise InvalidArgumentError(
                f"unknown singularity handling {self.singularity_handling!r}; choose from {SINGULARITY_HANDLING}"
            )
        if self.points < 1 or self.scrambles < 2:
            raise InvalidArgumentError("points must be >= 1 and scrambles >= 2")


class QuadResult(NamedTuple):
    """An integral value with its error estimate."""

    value: float
    error: float


def _check_dim(d: int) -> int:
    if int(d) != d:
        raise InvalidArgumentError(f"dimension must be an integer, got {d!r}")
    d = int(d)
    if d < 3:
        raise DivergentConstantError(f"K'(0) diverges for d={d} < 3; the free-field functions need d >= 3")
    return d


def _check_y(y: float) -> float:
    y = float(y)
    if not y >= 0.0 or not math.isfinite(y):
        raise InvalidArgumentError(f"y must be finite and >= 0, got {y}")
    return y


# ---------------------------------------------------------------------------
# One-dimensional Laplace-transform representation
# ---------------------------------------------------------------------------

_QUAD_OPTS = dict(limit=400, epsabs=1e-14, epsrel=1e-12)


def _quad_pieces(func, breaks) -> QuadResult:
    total = 0.0
    err = 0.0
    for lo, hi in zip(breaks[:-1], breaks[1:]):
        val, e = integrate.quad(func, lo, hi, **_QUAD_OPTS)
        total += val
        err += e
    return QuadResult(total, err)


def _ive0(t: float) -> float:
    """``exp(-2t) I_0(2t)``, the Laplace transform of one coordinate of ``f``."""
    if t > 1e4:
        # Hankel asymptotic series; scipy's ive loses the argument near 1e9
        x = 2.0 * t
        return (1.0 + 1.0 / (8 * x) + 9.0 / (128 * x**2) + 225.0 / (3072 * x**3)) / math.sqrt(2.0 * math.pi * x)
    return float(special.ive(0, 2.0 * t))


_TAIL_START = 50.0


def _laplace_integral(g, y: float) -> QuadResult:
    """``int_0^inf g(t) dt`` where ``g`` carries the factor ``exp(-y t)``.

    The head ``[0, 50]`` is integrated in ``t``; the tail in ``u = log t`` so
    that both the algebraic decay and the ``1/y`` cutoff scale are resolved.
    """
    head = _quad_pieces(g, [0.0, 1.0, 10.0, _TAIL_START])
    u0 = math.log(_TAIL_START)
    # beyond t = 1e30 the algebraic tail (at most t**-1.5) contributes below 1e-14
    u1 = math.log(min(_TAIL_START + 60.0 / y, 1e30)) if y > 0.0 else math.log(1e30)
    if u1 <= u0:
        return head
    tail = _quad_pieces(lambda u: g(math.exp(u)) * math.exp(u), [u0, u1])
    return QuadResult(head.value + tail.value, head.error + tail.error)


def _bessel_K_prime(y: float, d: int) -> QuadResult:
    if y >= 1.0:
        # substitute s = y t so the exponential decays on the unit scale
        res = _quad_pieces(lambda s: math.exp(-s) * _ive0(s / y) ** d, [0.0, 1.0, 40.0, math.inf])
        return QuadResult(res.value / y, res.error / y)
    return _laplace_integral(lambda t: math.exp(-y * t) * _ive0(t) ** d, y)


def _bessel_K(y: float, d: int) -> QuadResult:
    if y >= 1.0:
        # log(y + f) = log y + int_0^inf exp(-s) (1 - exp(-s f / y)) / s ds
        def integrand(s: float) -> float:
            if s == 0.0:
                return 0.0
            return math.exp(-s) * -math.expm1(d * math.log(_ive0(s / y))) / s

        res = _quad_pieces(integrand, [0.0, 1.0, 40.0, math.inf])
        return QuadResult(math.log(y) + res.value, res.error)

    def integrand(t: float) -> float:
        if t == 0.0:
            return 0.0
        return (math.exp(-t) - math.exp(-y * t) * _ive0(t) ** d) / t

    return _laplace_integral(integrand, y)


def _bessel_K_second(y: float, d: int) -> float:
    """``K''(y) = -int 1/(y+f)^2``; ``-inf`` at ``y = 0`` when ``d <= 4``."""
    if y == 0.0 and d <= 4:
        return -math.inf
    if y >= 1.0:
        res = _quad_pieces(lambda s: s * math.exp(-s) * _ive0(s / y) ** d, [0.0, 1.0, 40.0, math.inf])
        return -res.value / y**2
    res = _laplace_integral(lambda t: t * math.exp(-y * t) * _ive0(t) ** d, y)
    return -res.value


# ---------------------------------------------------------------------------
# Quasi-Monte Carlo with origin subtraction
# ---------------------------------------------------------------------------

_WINDOW = 100.0  # Gaussian window exp(-WINDOW r^2); exp(-WINDOW/4) is negligible at the cube faces


def _sphere_area(d: int) -> float:
    return 2.0 * math.pi ** (d / 2) / math.gamma(d / 2)


def _window_integral_inverse(d: int) -> float:
    """``int_{R^d} exp(-a r^2) / (4 pi^2 r^2) dx``."""
    a = _WINDOW
    return _sphere_area(d) * math.gamma((d - 2) / 2) / (2.0 * a ** ((d - 2) / 2)) / (4.0 * math.pi**2)


def _window_integral_log(d: int) -> float:
    """``int_{R^d} exp(-a r^2) log(4 pi^2 r^2) dx``."""
    a = _WINDOW
    return (math.pi / a) ** (d / 2) * (math.log(4.0 * math.pi**2) + special.digamma(d / 2) - math.log(a))


def _qmc_integrals(y: float, d: int, quad: QuadratureSpec) -> tuple[QuadResult, QuadResult]:
    subtract = y == 0.0 and quad.singularity_handling == "origin-subtraction"
    if y == 0.0 and not subtract:
        raise InvalidArgumentError("y = 0 with QMC requires origin-subtraction singularity handling")
    chunk = 2**16
    k_vals, kp_vals = [], []
    for rep in range(quad.scrambles):
        engine = qmc.Sobol(d, scramble=True, seed=np.random.default_rng([quad.seed, rep]))
        s_k = 0.0
        s_kp = 0.0
        remaining = quad.points
        while remaining > 0:
            m = min(chunk, remaining)
            pts = engine.random(m)
            remaining -= m
            centred = pts - np.round(pts)
            r2 = np.sum(centred**2, axis=1)
            fx = 4.0 * np.sum(np.sin(np.pi * pts) ** 2, axis=1)
            with np.errstate(divide="ignore", invalid="ignore"):
                gk = np.log(y + fx)
                gkp = 1.0 / (y + fx)
                if subtract:
                    window = np.exp(-_WINDOW * r2)
                    gk = gk - window * np.log(4.0 * math.pi**2 * r2)
                    gkp = gkp - window / (4.0 * math.pi**2 * r2)
            gk[~np.isfinite(gk)] = 0.0
            gkp[~np.isfinite(gkp)] = 0.0
            s_k += math.fsum(gk)
            s_kp += math.fsum(gkp)
        k_vals.append(s_k / quad.points)
        kp_vals.append(s_kp / quad.points)
    k_arr = np.array(k_vals)
    kp_arr = np.array(kp_vals)
    if subtract:
        k_arr += _window_integral_log(d)
        kp_arr += _window_integral_inverse(d)
    se = lambda arr: float(np.std(arr, ddof=1) / math.sqrt(len(arr)))  # noqa: E731
    return QuadResult(float(k_arr.mean()), se(k_arr)), QuadResult(float(kp_arr.mean()), se(kp_arr))


# ---------------------------------------------------------------------------
# Lattice sums
# ---------------------------------------------------------------------------

_LATTICE_SIDES = (16, 32, 64)


def _lattice_integrals(y: float, d: int) -> tuple[QuadResult, QuadResult]:
    if y > 0.0:
        n = 64 if d == 3 else max(4, int(round(2**21 ** (1.0 / d))))
        coarse = max(2, n // 2)
        vals = []
        for side in (coarse, n):
            spec = ls.TorusSpec(d, side)
            k = ls.K_N(y, spec) + math.log(y) / spec.N
            kp = ls.K_N_prime(y, spec) + 1.0 / (y * spec.N)
            vals.append((k, kp))
        (k0, kp0), (k1, kp1) = vals
        return QuadResult(k1, abs(k1 - k0)), QuadResult(kp1, abs(kp1 - kp0))
    if d != 3:
        raise InvalidArgumentError("lattice extrapolation at y = 0 is only calibrated for d = 3")
    sides = np.array(_LATTICE_SIDES, dtype=float)
    specs = [ls.TorusSpec(d, int(s)) for s in sides]
    kn = np.array([ls.K_N(0.0, s) for s in specs])
    kpn = np.array([ls.K_N_prime(0.0, s) for s in specs])
    # K_N'(0) - C_d ~ c1/n + c3/n^3 ; K_N(0) - K(0) ~ (c_log log n + c0)/n^3 (leading)
    a_kp = np.vstack([np.ones(3), 1.0 / sides, 1.0 / sides**3]).T
    coef_kp = np.linalg.solve(a_kp, kpn)
    a_k = np.vstack([np.ones(3), np.log(sides) / sides**3, 1.0 / sides**3]).T
    coef_k = np.linalg.solve(a_k, kn)
    err_kp = abs(coef_kp[0] - (2 * kpn[-1] - kpn[-2]))
    err_k = abs(coef_k[0] - kn[-1])
    return QuadResult(float(coef_k[0]), float(err_k)), QuadResult(float(coef_kp[0]), float(err_kp))


# ---------------------------------------------------------------------------
# Public integral evaluators
# ---------------------------------------------------------------------------


def integrate_K(y: float, d: int, quad: QuadratureSpec | None = None) -> QuadResult:
    """``K(y)`` with an error estimate."""
    y = _check_y(y)
    d = _check_dim(d)
    quad = quad or QuadratureSpec()
    if quad.method == "bessel":
        return _bessel_K(y, d)
    if quad.method == "qmc":
        return _qmc_integrals(y, d, quad)[0]
    return _lattice_integrals(y, d)[0]


def integrate_K_prime(y: float, d: int, quad: QuadratureSpec | None = None) -> QuadResult:
    """``K'(y)`` with an error estimate."""
    y = _check_y(y)
    d = _check_dim(d)
    quad = quad or QuadratureSpec()
    if quad.method == "bessel":
        return _bessel_K_prime(y, d)
    if quad.method == "qmc":
        return _qmc_integrals(y, d, quad)[1]
    return _lattice_integrals(y, d)[1]


def compute_C_d(d: int, quad: QuadratureSpec | None = None) -> float:
    """``C_d = K'(0)``; raises :class:`DivergentConstantError` for ``d < 3``."""
    return integrate_K_prime(0.0, d, quad).value


def C_d_random_walk(
    d: int, walks: int = 200_000, steps: int = 1000, seed: int = 0, batch: int = 20_000, backend=None
) -> QuadResult:
    """Independent estimate of ``C_d`` from simple random walk return counts.

    ``C_d = G(0, 0) / (2d)`` where ``G(0, 0) = 1 + E[returns to the origin]``.
    Returns within ``steps`` are counted by simulation; later returns are
    added from the local limit ``P(S_2m = 0) ~ 2 (d / (4 pi m))^(d/2)``
    summed with the Hurwitz zeta function. The error is one standard error.
    """
    from . import kernels
    from .gff_sampler import make_rng

    d = _check_dim(d)
    impl = backend or kernels
    rng = make_rng(seed)
    total = 0.0
    total_sq = 0.0
    done = 0
    while done < walks:
        size = min(batch, walks - done)
        directions = rng.integers(0, 2 * d, size=(size, steps), dtype=np.int8)
        counts = np.asarray(impl.count_returns(directions, d), dtype=float)
        total += float(counts.sum())
        total_sq += float(np.sum(counts**2))
        done += size
    mean = total / walks
    var = max(total_sq / walks - mean * mean, 0.0)
    tail = 2.0 * (d / (4.0 * math.pi)) ** (d / 2.0) * float(special.zeta(d / 2.0, steps // 2 + 1))
    green = 1.0 + mean + tail
    return QuadResult(green / (2 * d), math.sqrt(var / walks) / (2 * d))


# ---------------------------------------------------------------------------
# Disk cache
# ---------------------------------------------------------------------------


def default_cache_dir() -> Path:
    """Cache directory: ``$DNLS_PHASE_CACHE_DIR`` or ``~/.cache/dnls_phase``."""
    env = os.environ.get(CACHE_ENV)
    return Path(env) if env else Path.home() / ".cache" / "dnls_phase"


class QuadratureCache:
    """Memo of ``(d, y, method, points, seed) -> (K, K', err)`` backed by a CSV file.

    The file has the header ``d,y,method,points,seed,K,Kprime,err`` and one
    record per key. Floats are written with :func:`repr` so they round-trip
    exactly. Concurrent writers append whole lines; because values are
    deterministic for a given key, duplicate records are harmless and the last
    one read wins.
    """

    def __init__(self, path: Path | str | None = None):
        self.path = Path(path) if path is not None else None
        self._memo: dict[tuple, tuple[float, float, float]] = {}
        self._lock = threading.Lock()
        if self.path is not None and self.path.exists():
            with open(self.path, newline="") as fh:
                for row in csv.DictReader(fh):
                    key = (int(row["d"]), float(row["y"]), row["method"], int(row["points"]), int(row["seed"]))
                    self._memo[key] = (float(row["K"]), float(row["Kprime"]), float(row["err"]))

    @staticmethod
    def key(d: int, y: float, quad: QuadratureSpec) -> tuple:
        points = quad.points if quad.method == "qmc" else 0
        seed = quad.seed if quad.method == "qmc" else 0
        return (int(d), float(y), quad.method, int(points), int(seed))

    def get(self, key: tuple) -> tuple[float, float, float] | None:
        return self._memo.get(key)

    def put(self, key: tuple, value: tuple[float, float, float]) -> None:
        with self._lock:
            self._memo[key] = value
            if self.path is None:
                return
            self.path.parent.mkdir(parents=True, exist_ok=True)
            new = not self.path.exists()
            with open(self.path, "a", newline="") as fh:
                writer = csv.writer(fh, lineterminator="\n")
                if new:
                    writer.writerow(CACHE_HEADER)
                d, y, method, points, seed = key
                writer.writerow([d, repr(float(y)), method, points, seed] + [repr(float(v)) for v in value[:3]])

    def __len__(self) -> int:
        return len(self._memo)


# ---------------------------------------------------------------------------
# Evaluator bundle
# ---------------------------------------------------------------------------


class ThermoFunctions:
    """Evaluators for ``K``, ``K'``, ``C_d``, ``L``, ``W`` and ``W_hat`` at fixed dimension.

    Parameters
    ----------
    d : int
        Dimension, at least 3.
    quad : QuadratureSpec, optional
        Quadrature used for ``K`` and ``K'``.
    tol : float
        Largest acceptable quadrature error estimate; larger errors raise
        :class:`AccuracyNotMetError`.
    root_tol : float
        Residual tolerance ``|K'(L(b)) - b|`` for the inverse.
    cache : QuadratureCache, optional
        Memo for integral values (in-memory only when omitted).
    """

    def __init__(
        self,
        d: int,
        quad: QuadratureSpec | None = None,
        tol: float = 1e-4,
        root_tol: float = 1e-12,
        cache: QuadratureCache | None = None,
    ):
        self.d = _check_dim(d)
        self.quad = quad or QuadratureSpec()
        self.tol = float(tol)
        self.root_tol = float(root_tol)
        self.cache = cache if cache is not None else QuadratureCache()
        self.C_d = self.K_prime(0.0)
        self.K0 = self.K(0.0)
        self._table: FreeFieldTable | None = None

    # integrals ---------------------------------------------------------
    def _pair(self, y: float) -> tuple[float, float, float]:
        y = _check_y(y)
        key = self.cache.key(self.d, y, self.quad)
        hit = self.cache.get(key)
        if hit is not None:
            return hit
        if self.quad.method == "qmc":
            k, kp = _qmc_integrals(y, self.d, self.quad)
        elif self.quad.method == "lattice":
            k, kp = _lattice_integrals(y, self.d)
        else:
            k, kp = _bessel_K(y, self.d), _bessel_K_prime(y, self.d)
        value = (k.value, kp.value, max(k.error, kp.error))
        self.cache.put(key, value)
        return value

    def _checked(self, y: float, index: int) -> float:
        k, kp, err = self._pair(y)
        value = (k, kp)[index]
        if err > self.tol:
            raise AccuracyNotMetError(f"quadrature error {err:.2e} exceeds tolerance {self.tol:.2e} at y={y}", value, err)
        return value

    def K(self, y: float) -> float:
        """``K(y)``."""
        return self._checked(y, 0)

    def K_prime(self, y: float) -> float:
        """``K'(y)``."""
        return self._checked(y, 1)

    def K_estimate(self, y: float) -> QuadResult:
        k, _, err = self._pair(y)
        return QuadResult(k, err)

    def K_prime_estimate(self, y: float) -> QuadResult:
        _, kp, err = self._pair(y)
        return QuadResult(kp, err)

    def K_second(self, y: float) -> float:
        """``K''(y) = -int (y+f)^-2`` (Bessel route), ``-inf`` at ``y=0`` for ``d <= 4``."""
        return _bessel_K_second(_check_y(y), self.d)

    # inverse and free-field energy ----------------------------------------
    def L(self, b: float) -> float:
        """Inverse of ``K'``: the ``y >= 0`` with ``K'(y) = b`` for ``b < C_d``, else 0."""
        b = float(b)
        if not b > 0.0 or not math.isfinite(b):
            raise InvalidArgumentError(f"b must be positive and finite, got {b}")
        if b >= self.C_d:
            return 0.0
        root = ls._monotone_root(self.K_prime, b, 0.0, 1.0 / b, self.root_tol * b)
        return root.value

    def W(self, b: float) -> float:
        """Free-field energy ``K(L(b)) - b L(b)``, equal to ``K(0)`` for ``b >= C_d``."""
        b = float(b)
        if not b > 0.0 or not math.isfinite(b):
            raise InvalidArgumentError(f"b must be positive and finite, got {b}")
        if b >= self.C_d:
            return self.K0
        y = self.L(b)
        return self.K(y) - b * y

    def W_hat(self, b: float) -> float:
        """``W(b) + 1 + log b`` on ``(0, C_d]``."""
        b = float(b)
        if not 0.0 < b <= self.C_d:
            raise InvalidArgumentError(f"W_hat needs b in (0, C_d={self.C_d}], got {b}")
        return self.W(b) + 1.0 + math.log(b)

    # tabulated fast path ---------------------------------------------------
    def table(self) -> "FreeFieldTable":
        """Lazily built interpolation table for vectorized ``W`` and ``L``."""
        if self._table is None:
            self._table = FreeFieldTable(self)
        return self._table


class FreeFieldTable:
    """Vectorized ``L(b)`` and ``W(b)`` from a parametric table in ``y``.

    Nodes are ``y_i`` on a geometric grid plus ``y = 0``. At each node
    ``b_i = K'(y_i)`` and ``L(b_i) = y_i`` exactly. Interpolation is done in
    ``x = log b`` on the bounded smooth combinations

    * ``g(x) = W(b) + log b`` with exact slope ``1 - b L(b)``, and
    * ``h(x) = b L(b)`` with exact slope ``b L + b**2 / K''(L)``,

    using cubic Hermite splines. Values of ``b`` below the table fall back to
    direct evaluation.
    """

    def __init__(self, thermo: ThermoFunctions, y_min: float = 1e-10, y_max: float = 1e8, nodes: int = 541):
        self.thermo = thermo
        ys = np.concatenate([[0.0], np.geomspace(y_min, y_max, nodes)])
        b = np.array([thermo.K_prime(y) for y in ys])
        k = np.array([thermo.K(y) for y in ys])
        k2 = np.array([thermo.K_second(y) for y in ys])
        order = np.argsort(b)
        b, ys, k, k2 = b[order], ys[order], k[order], k2[order]
        x = np.log(b)
        g = k - ys * b + x
        h = b * ys
        dh = h + np.where(np.isfinite(k2), b**2 / k2, 0.0)
        self._g = CubicHermiteSpline(x, g, 1.0 - h)
        self._h = CubicHermiteSpline(x, h, dh)
        self.b_nodes = b
        self.y_nodes = ys
        self.b_min = float(b[0])
        self.C_d = thermo.C_d
        self.K0 = thermo.K0

    def L(self, b: np.ndarray | float) -> np.ndarray:
        """Tabulated ``L(b)``; exact zero for ``b >= C_d``."""
        b = np.asarray(b, dtype=float)
        out = np.zeros_like(b)
        inside = (b >= self.b_min) & (b < self.C_d)
        out[inside] = self._h(np.log(b[inside])) / b[inside]
        below = b < self.b_min
        if np.any(below):
            out[below] = [self.thermo.L(v) for v in b[below]]
        return out

    def W(self, b: np.ndarray | float) -> np.ndarray:
        """Tabulated ``W(b)``; exactly ``K(0)`` for ``b >= C_d``."""
        b = np.asarray(b, dtype=float)
        out = np.full_like(b, self.K0)
        inside = (b >= self.b_min) & (b < self.C_d)
        x = np.log(b[inside])
        out[inside] = self._g(x) - x
        below = b < self.b_min
        if np.any(below):
            out[below] = [self.thermo.W(v) for v in b[below]]
        return out
