"""Variational free energy, phase classification and the transition curve.

For inverse temperature ``theta`` and nonlinearity strength ``nu`` the
limiting free energy is ``F = log(pi/theta) - min_{0 <= a < 1} G(a)`` with::

    G(a) = W(theta (1 - a)) + (theta/nu) I(a nu)

``a`` is the fraction of mass carried by the soliton. The smallest global
minimizer ``a_star`` separates the dispersive phase (``a_star = 0``) from
the solitonic phase (``a_star > 0``). For ``nu`` above the excitation
threshold the two are separated by a decreasing curve ``theta_c(nu)``.
"""

from __future__ import annotations

import csv
import math
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
from scipy import integrate, optimize
from scipy.interpolate import PchipInterpolator

from . import soliton_solver as ss
from .errors import BracketError, DnlsPhaseError, InvalidArgumentError
from .free_field_thermo import FreeFieldTable, ThermoFunctions, default_cache_dir

REGIONS = ("dispersive", "solitonic", "near-boundary")
SCAN_HEADER = ("theta", "nu", "F", "a_star", "region", "err_flags")


@dataclass(frozen=True)
class PhasePoint:
    """A point ``(theta, nu)`` of the phase plane."""

    theta: float
    nu: float

    def __post_init__(self) -> None:
        for name in ("theta", "nu"):
            value = getattr(self, name)
            if not (math.isfinite(value) and value > 0.0):
                raise InvalidArgumentError(f"{name} must be positive and finite, got {value}")


@dataclass
class PhaseResult:
    """Minimization of ``G`` at one phase point."""

    theta: float
    nu: float
    F: float
    a_star: float
    minimizer_set: list[float]
    region: str
    a_M: float
    G_min: float


# ---------------------------------------------------------------------------
# xi_p(t)
# ---------------------------------------------------------------------------


def _xi_objective(a: np.ndarray | float, p: float, t: float):
    return -np.log1p(-np.asarray(a)) / (np.asarray(a) ** ((p + 1.0) / 2.0) + t)


@lru_cache(maxsize=256)
def xi(p: float, t: float = 0.0, grid: int = 20001) -> float:
    """``inf_{0<a<1} -log(1-a) / (a^((p+1)/2) + t)`` by grid scan and bounded refinement.

    For ``t > 0`` the ratio behaves like ``a / t`` as ``a -> 0``, so the
    infimum is exactly zero (approached, not attained) and zero is returned.
    """
    p, t = float(p), float(t)
    if not p > 1.0:
        raise InvalidArgumentError(f"p must exceed 1, got {p}")
    if not t >= 0.0:
        raise InvalidArgumentError(f"t must be nonnegative, got {t}")
    if t > 0.0:
        return 0.0
    a = np.linspace(0.0, 1.0, grid)[1:-1]
    values = _xi_objective(a, p, t)
    i = int(np.argmin(values))
    lo, hi = a[max(i - 1, 0)], a[min(i + 1, len(a) - 1)]
    if i == 0:
        lo = a[0] * 1e-6
    sol = optimize.minimize_scalar(
        lambda x: float(_xi_objective(x, p, t)), bounds=(lo, hi), method="bounded", options=dict(xatol=1e-13)
    )
    return float(min(sol.fun, values[i]))


def xi_argmin(p: float, t: float = 0.0) -> float:
    """Location of the infimum defining ``xi`` (``0`` for ``t > 0``, where it is approached at the edge)."""
    if t > 0.0:
        return 0.0
    a = np.linspace(0.0, 1.0, 20001)[1:-1]
    i = int(np.argmin(_xi_objective(a, p, t)))
    sol = optimize.minimize_scalar(
        lambda x: float(_xi_objective(x, p, t)), bounds=(a[max(i - 1, 0)], a[min(i + 1, len(a) - 1)]),
        method="bounded", options=dict(xatol=1e-13),
    )
    return float(sol.x)


# ---------------------------------------------------------------------------
# Cached minimal energy on a mass lattice
# ---------------------------------------------------------------------------


class MinimalEnergyLattice:
    """``J(a) = I(a)/a`` on a geometric mass lattice with monotone interpolation.

    Below the threshold ``R_p`` the value is exactly zero. Above it, lattice
    masses ``R_p * ratio**k`` are minimized in increasing order, each warm
    started from the previous profile, and ``J`` is interpolated with a
    monotone cubic in ``log a``. Masses beyond the populated range extend the
    lattice on demand. Values can be persisted to a CSV file
    (``a,I,error``).
    """

    def __init__(
        self,
        p: float,
        d: int = 3,
        threshold: float | None = None,
        ratio: float = 1.01,
        box_schedule: Sequence[int] = ss.BOX_SCHEDULE,
        tol: float = 1e-6,
        cache_path: Path | str | None = None,
    ):
        self.p = float(p)
        self.d = int(d)
        self.threshold = ss.excitation_threshold_R_p(self.p, self.d).value if threshold is None else float(threshold)
        self.ratio = float(ratio)
        self.box_schedule = tuple(box_schedule)
        self.tol = tol
        self.cache_path = Path(cache_path) if cache_path is not None else None
        self._masses: list[float] = []
        self._J: list[float] = []
        self._profile: np.ndarray | None = None
        self._interp: PchipInterpolator | None = None
        self._lock = threading.Lock()
        self._load()

    @classmethod
    def default(cls, p: float, d: int = 3, **kwargs) -> "MinimalEnergyLattice":
        """Lattice persisted under the default cache directory."""
        path = default_cache_dir() / f"minimal_energy_p{p!r}_d{d}.csv"
        return cls(p, d, cache_path=path, **kwargs)

    # persistence -----------------------------------------------------------
    def _load(self) -> None:
        if self.cache_path is None or not self.cache_path.exists():
            return
        rows = []
        with open(self.cache_path, newline="") as fh:
            for row in csv.DictReader(fh):
                rows.append((float(row["a"]), float(row["I"])))
        # accept only the prefix that matches this threshold and ratio
        for k, (a, value) in enumerate(rows):
            if not math.isclose(a, self._lattice_mass(k), rel_tol=1e-12):
                break
            self._masses.append(a)
            self._J.append(value / a)
        self._interp = None

    def _save_row(self, a: float, value: float, error: float) -> None:
        if self.cache_path is None:
            return
        self.cache_path.parent.mkdir(parents=True, exist_ok=True)
        new = not self.cache_path.exists() or len(self._masses) == 1
        with open(self.cache_path, "w" if new else "a", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            if new:
                writer.writerow(("a", "I", "error"))
            writer.writerow((repr(float(a)), repr(float(value)), repr(float(error))))

    # lattice ---------------------------------------------------------------
    def _lattice_mass(self, k: int) -> float:
        return self.threshold * self.ratio**k

    def _extend_to(self, a_max: float) -> None:
        if self.threshold <= 0.0:
            raise InvalidArgumentError("the mass lattice needs a positive threshold (mass-supercritical p)")
        with self._lock:
            while not self._masses or self._masses[-1] < a_max:
                k = len(self._masses)
                a = self._lattice_mass(k)
                if k == 0:
                    value, error = 0.0, 0.0
                else:
                    est = ss.minimal_energy_I(
                        a, self.p, self.d, schedule=self.box_schedule, tol=self.tol,
                        init=("bump", "spike"), initial=self._profile,
                    )
                    value, error = est.value, est.error
                    if est.result is not None:
                        self._profile = est.result.profile.values
                self._masses.append(a)
                self._J.append(value / a)
                self._save_row(a, value, error)
            self._interp = None

    def J(self, a: np.ndarray | float) -> np.ndarray:
        """``I(a)/a``, vectorized; zero at and below the threshold."""
        a = np.asarray(a, dtype=float)
        out = np.zeros_like(a)
        above = a > self.threshold
        if not np.any(above):
            return out
        top = float(a[above].max())
        if not self._masses or self._masses[-1] < top:
            self._extend_to(top)
        if self._interp is None:
            self._interp = PchipInterpolator(np.log(self._masses), self._J)
        out[above] = self._interp(np.log(a[above]))
        return np.minimum(out, 0.0)

    def I(self, a: np.ndarray | float) -> np.ndarray:
        """Interpolated minimal energy ``a J(a)``."""
        a = np.asarray(a, dtype=float)
        return a * self.J(a)

    @property
    def populated_range(self) -> tuple[float, float]:
        return (self._masses[0], self._masses[-1]) if self._masses else (math.nan, math.nan)


# ---------------------------------------------------------------------------
# Variational problem
# ---------------------------------------------------------------------------


@dataclass
class PhaseModel:
    """Bundle of the free-field table and the minimal-energy lattice at fixed ``(p, d)``."""

    p: float
    d: int
    thermo: ThermoFunctions
    table: FreeFieldTable
    energy: MinimalEnergyLattice
    tol_a: float = 1e-4
    grid_resolution: int = 512
    refine_tol: float = 1e-10
    _xi0: float = field(init=False)

    def __post_init__(self) -> None:
        self._xi0 = xi(self.p, 0.0)

    @classmethod
    def build(
        cls,
        p: float = 3.0,
        d: int = 3,
        thermo: ThermoFunctions | None = None,
        energy: MinimalEnergyLattice | None = None,
        **kwargs,
    ) -> "PhaseModel":
        thermo = thermo or ThermoFunctions(d)
        energy = energy or MinimalEnergyLattice.default(p, d)
        return cls(p, d, thermo, thermo.table(), energy, **kwargs)

    @property
    def R_p(self) -> float:
        return self.energy.threshold

    @property
    def C_d(self) -> float:
        return self.thermo.C_d

    @property
    def xi0(self) -> float:
        return self._xi0

    # pieces ------------------------------------------------------------------
    def G(self, a: np.ndarray | float, theta: float, nu: float) -> np.ndarray:
        """``W(theta (1-a)) + (theta/nu) I(a nu)``, vectorized in ``a``."""
        PhasePoint(theta, nu)
        a = np.asarray(a, dtype=float)
        if np.any((a < 0.0) | (a >= 1.0)):
            raise InvalidArgumentError("G needs 0 <= a < 1")
        return self.table.W(theta * (1.0 - a)) + theta * a * self.energy.J(a * nu)

    def a_M(self, theta: float, nu: float) -> float:
        """Upper bound ``1 - exp(-theta (2d - J(nu)))`` on every minimizer."""
        PhasePoint(theta, nu)
        return float(-np.expm1(-theta * (2 * self.d - float(self.energy.J(nu)))))

    def minimize_G(self, theta: float, nu: float) -> PhaseResult:
        """Global minimization of ``G`` over ``[0, a_M]``.

        A uniform grid locates every local minimum whose value is within
        ``refine_tol`` of the best grid value; each is refined with a bounded
        Brent search. Minimizers within ``refine_tol`` of the global minimum
        form the minimizer set and ``a_star`` is its smallest element.
        """
        PhasePoint(theta, nu)
        a_max = min(self.a_M(theta, nu), 1.0 - 1e-12)
        grid = np.linspace(0.0, a_max, self.grid_resolution)
        values = self.G(grid, theta, nu)
        best_grid = float(values.min())
        # coarse local minima (endpoint a=0 included)
        # A refinement inside [grid[i-1], grid[i+1]] can undercut values[i] by
        # at most about the local variation, so farther candidates are skipped;
        # on flat runs only the first point is kept.
        candidates = []
        for i in range(len(grid)):
            left = values[i - 1] if i > 0 else math.inf
            right = values[i + 1] if i + 1 < len(grid) else math.inf
            if not (values[i] <= left and values[i] <= right):
                continue
            if candidates and candidates[-1] == i - 1 and values[i] == left:
                continue
            spread = max(abs(v - values[i]) for v in (left, right) if math.isfinite(v))
            if values[i] - best_grid <= spread + self.refine_tol:
                candidates.append(i)
        refined: list[tuple[float, float]] = []
        for i in candidates:
            if i == 0:
                refined.append((0.0, float(values[0])))
                continue
            lo, hi = grid[i - 1], grid[min(i + 1, len(grid) - 1)]
            sol = optimize.minimize_scalar(
                lambda x: float(self.G(x, theta, nu)), bounds=(lo, hi), method="bounded", options=dict(xatol=1e-12)
            )
            x, fx = (float(sol.x), float(sol.fun)) if sol.fun <= values[i] else (float(grid[i]), float(values[i]))
            refined.append((x, fx))
        g_min = min(min(v for _, v in refined), best_grid)
        # a tie with the dispersive endpoint is resolved by the tolerance
        g0 = float(values[0])
        minimizers = sorted(x for x, v in refined if v <= g_min + self.refine_tol)
        if g0 <= g_min + self.refine_tol and 0.0 not in minimizers:
            minimizers.insert(0, 0.0)
        a_star = minimizers[0]
        region = "solitonic" if a_star > self.tol_a else "dispersive"
        return PhaseResult(
            theta=theta,
            nu=nu,
            F=math.log(math.pi / theta) - g_min,
            a_star=a_star,
            minimizer_set=minimizers,
            region=region,
            a_M=a_max,
            G_min=g_min,
        )

    def free_energy(self, theta: float, nu: float) -> float:
        return self.minimize_G(theta, nu).F

    def dispersive_free_energy(self, theta: float) -> float:
        """``log(pi/theta) - W(theta)``, the value of ``F`` in the dispersive phase."""
        return math.log(math.pi / theta) - float(self.table.W(theta))

    # transition curve ----------------------------------------------------------
    def theta_cap(self, nu: float) -> float:
        """``min{((p+1)/2) nu^(-(p-1)/2) xi_p(0), C_d nu / (nu - R_p)}``."""
        if not nu > self.R_p:
            raise InvalidArgumentError(f"the cap needs nu > R_p = {self.R_p}")
        first = (self.p + 1.0) / 2.0 * nu ** (-(self.p - 1.0) / 2.0) * self.xi0
        second = self.C_d * nu / (nu - self.R_p)
        return min(first, second)

    def is_solitonic(self, theta: float, nu: float) -> bool:
        return self.minimize_G(theta, nu).a_star > self.tol_a

    def theta_c(self, nu: float, tol: float = 1e-8, max_expansions: int = 40) -> float:
        """Transition inverse temperature by bisection on ``[a_star > tol_a]``.

        The upper end starts at the closed-form cap; if the indicator is not
        yet solitonic there, the bracket is widened geometrically and the
        widening is visible in the returned value exceeding the cap. The lower
        end is halved until the indicator is dispersive. ``tol`` is relative.

        Raises
        ------
        BracketError
            If no bracket is found or the indicator is inconsistent.
        """
        nu = float(nu)
        if not nu > self.R_p:
            raise InvalidArgumentError(f"theta_c is defined for nu > R_p = {self.R_p}, got {nu}")
        trace: list[tuple[float, bool]] = []

        def indicator(theta: float) -> bool:
            flag = self.is_solitonic(theta, nu)
            trace.append((theta, flag))
            return flag

        hi = self.theta_cap(nu)
        for _ in range(max_expansions):
            if indicator(hi):
                break
            hi *= 1.25
        else:
            raise BracketError(f"no solitonic point found above the cap at nu={nu}", trace)
        lo = hi / 2.0
        for _ in range(max_expansions):
            if not indicator(lo):
                break
            lo /= 2.0
        else:
            raise BracketError(f"no dispersive point found below the cap at nu={nu}", trace)
        while hi - lo > tol * hi:
            mid = 0.5 * (lo + hi)
            if indicator(mid):
                hi = mid
            else:
                lo = mid
        return 0.5 * (lo + hi)

    # integral reformulation ------------------------------------------------------
    def integral_reformulation(self, theta: float, nu: float, grid: int = 256) -> float:
        """``min_a [I(a nu)/nu + int_{1-a}^1 L(theta s) ds]`` by direct quadrature of ``L``.

        Negative values mean a positive mass fraction lowers ``G`` below
        ``G(0)``, that is the solitonic phase.
        """
        a_max = min(self.a_M(theta, nu), 1.0 - 1e-12)
        s_nodes = np.linspace(1.0 - a_max, 1.0, 4097)
        L_vals = self.table.L(theta * s_nodes)
        # cumulative integral from s to 1
        cum = integrate.cumulative_trapezoid(L_vals[::-1], -s_nodes[::-1], initial=0.0)[::-1]
        a_vals = 1.0 - s_nodes
        objective = a_vals * self.energy.J(a_vals * nu) + cum
        return float(objective.min())

    # scans -----------------------------------------------------------------------
    def scan(
        self,
        thetas: Sequence[float],
        nus: Sequence[float],
        jobs: int = 1,
        boundary_tol: float | None = 1e-6,
    ) -> list[dict]:
        """Rows ``theta, nu, F, a_star, region, err_flags`` for the product grid.

        Rows are grouped by ``nu``; with ``boundary_tol`` set, the curve
        ``theta_c(nu)`` is bisected for every ``nu > R_p`` and points within
        ``2 * boundary_tol`` (relative) of it are labeled ``near-boundary``.
        Failures are recorded per row in ``err_flags`` and the scan continues.
        """
        thetas = [float(t) for t in thetas]
        nus = [float(v) for v in nus]
        # populate the shared minimal-energy lattice before fanning out
        top = max(nus) * max(self.a_M(t, max(nus)) for t in thetas) if nus and thetas else 0.0
        if top > self.R_p:
            self.energy.J(np.array([top]))

        def row_block(nu: float) -> list[dict]:
            curve = math.nan
            flags_curve = ""
            if boundary_tol is not None and nu > self.R_p:
                try:
                    curve = self.theta_c(nu, tol=boundary_tol)
                except DnlsPhaseError as exc:
                    flags_curve = type(exc).__name__
            block = []
            for theta in thetas:
                flags = flags_curve
                try:
                    res = self.minimize_G(theta, nu)
                    region = res.region
                    if math.isfinite(curve) and abs(theta - curve) <= 2 * boundary_tol * curve:
                        region = "near-boundary"
                    block.append(dict(theta=theta, nu=nu, F=res.F, a_star=res.a_star, region=region, err_flags=flags))
                except DnlsPhaseError as exc:
                    flags = (flags + ";" if flags else "") + type(exc).__name__
                    block.append(dict(theta=theta, nu=nu, F=math.nan, a_star=math.nan, region="", err_flags=flags))
            return block

        if jobs > 1:
            with ThreadPoolExecutor(max_workers=jobs) as pool:
                blocks = list(pool.map(row_block, nus))
        else:
            blocks = [row_block(nu) for nu in nus]
        return [row for block in blocks for row in block]


def write_scan_csv(rows: Iterable[dict], path: str | Path) -> Path:
    """Write scan rows with the ``theta,nu,F,a_star,region,err_flags`` header."""
    path = Path(path)
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=SCAN_HEADER, lineterminator="\n")
        writer.writeheader()
        for row in rows:
            writer.writerow({k: (repr(float(v)) if isinstance(v, (float, np.floating)) else v) for k, v in row.items()})
    return path


def staircase_violations(rows: Sequence[dict]) -> int:
    """Count breaches of the order property on a scanned grid.

    If ``(theta1, nu1) <= (theta2, nu2)`` componentwise and the larger point
    is dispersive, the smaller one must be dispersive too. Near-boundary rows
    are ignored. Along each ``nu`` the region may flip at most once.
    """
    usable = [r for r in rows if r["region"] in ("dispersive", "solitonic")]
    thetas = sorted({r["theta"] for r in usable})
    nus = sorted({r["nu"] for r in usable})
    grid = {(r["theta"], r["nu"]): r["region"] == "solitonic" for r in usable}
    violations = 0
    for i, t in enumerate(thetas):
        for j, v in enumerate(nus):
            if (t, v) not in grid or grid[(t, v)]:
                continue
            # dispersive at (t, v): everything below and to the left must be dispersive
            for t2 in thetas[: i + 1]:
                for v2 in nus[: j + 1]:
                    if grid.get((t2, v2), False):
                        violations += 1
    return violations


def default_model(p: float = 3.0, d: int = 3) -> PhaseModel:
    """Phase model with disk-cached free-field integrals and minimal energies."""
    from .free_field_thermo import QuadratureCache

    cache = QuadratureCache(default_cache_dir() / "quadrature.csv")
    thermo = ThermoFunctions(d, cache=cache)
    return PhaseModel.build(p, d, thermo=thermo)


def phase_scan(thetas: Sequence[float], nus: Sequence[float], p: float = 3.0, d: int = 3, jobs: int = 1) -> list[dict]:
    """Convenience wrapper: build the default model and scan the product grid."""
    return default_model(p, d).scan(thetas, nus, jobs=jobs)

