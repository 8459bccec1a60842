"""Discrete soliton ground states, the minimal-energy function and DNLS dynamics.

Conventions
-----------
``L`` denotes the positive graph Laplacian, ``(L u)_x = sum_{y ~ x} (u_x - u_y)``,
so that ``<u, L u> = ||grad u||^2`` is the sum over undirected edges of
``|u_x - u_y|^2``. On a box ``[-m, m]^d`` the Dirichlet convention sets the
field to zero outside the box, so edges leaving the box contribute the full
``|u_x|^2``.

The lattice Hamiltonian is ``H(u) = ||grad u||^2 - (2/(p+1)) ||u||_{p+1}^{p+1}``.
A mass-constrained critical point ``phi`` with ``||phi||^2 = a`` solves
``L phi - phi^p = omega phi`` with ``omega a = ||grad phi||^2 - ||phi||_{p+1}^{p+1}``.

The evolution equation is ``i dpsi/dt = h^-2 L psi - |psi|^(p-1) psi`` on a
periodic torus; a ground state ``phi`` evolves as ``exp(-i omega t) phi``.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, NamedTuple, Sequence

import numpy as np
from scipy import optimize
from scipy.fft import dstn, idstn
from scipy.sparse.linalg import LinearOperator, minres

from .lattice_spectrum import ComplexField
from .errors import (
    AccuracyNotMetError,
    ConvergenceError,
    InconsistencyError,
    InsufficientDataError,
    InvalidArgumentError,
    NumericOverflowError,
)

#: Default box half-widths used to extrapolate the minimal energy to infinite volume.
BOX_SCHEDULE = (4, 6, 9, 13, 19, 28)

INIT_POLICIES = ("bump", "spike", "uniform")


# ---------------------------------------------------------------------------
# Fields and operators
# ---------------------------------------------------------------------------


@dataclass
class BoxField:
    """A nonnegative field on the box ``[-m, m]^d`` with Dirichlet boundary.

    ``values`` has shape ``(2m+1,)*d``; the box centre is ``values[(m,)*d]``.
    """

    values: np.ndarray
    m: int
    d: int
    mass: float = field(init=False)

    def __post_init__(self) -> None:
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != (2 * self.m + 1,) * self.d:
            raise InvalidArgumentError(f"values shape {self.values.shape} does not match box m={self.m}, d={self.d}")
        if np.any(self.values < 0.0):
            raise InvalidArgumentError("box field values must be nonnegative")
        self.mass = float(np.sum(self.values**2))

    @property
    def shape(self) -> tuple[int, ...]:
        return self.values.shape

    def coordinates(self) -> np.ndarray:
        """Integer coordinates of every site, shape ``(d, 2m+1, ..., 2m+1)``."""
        return np.indices(self.shape) - self.m

    def max_site_fraction(self) -> float:
        return float(np.max(self.values**2) / self.mass) if self.mass > 0 else 0.0


def _shifted(u: np.ndarray, axis: int, step: int) -> np.ndarray:
    """``u`` shifted by ``step`` along ``axis`` with zero fill (Dirichlet)."""
    out = np.zeros_like(u)
    src = [slice(None)] * u.ndim
    dst = [slice(None)] * u.ndim
    if step > 0:
        src[axis] = slice(None, -step)
        dst[axis] = slice(step, None)
    else:
        src[axis] = slice(-step, None)
        dst[axis] = slice(None, step)
    out[tuple(dst)] = u[tuple(src)]
    return out


def dirichlet_laplacian(u: np.ndarray) -> np.ndarray:
    """Positive Dirichlet Laplacian of a box field."""
    out = 2.0 * u.ndim * u
    for axis in range(u.ndim):
        out -= _shifted(u, axis, 1)
        out -= _shifted(u, axis, -1)
    return out


def periodic_laplacian(u: np.ndarray) -> np.ndarray:
    """Positive Laplacian of a torus field (periodic edges)."""
    out = 2.0 * u.ndim * u
    for axis in range(u.ndim):
        out -= np.roll(u, 1, axis=axis)
        out -= np.roll(u, -1, axis=axis)
    return out


def gradient_energy(u: np.ndarray, boundary: str = "dirichlet") -> float:
    """``||grad u||^2``: sum over undirected edges of ``|u_x - u_y|^2``."""
    if boundary == "periodic":
        total = 0.0
        for axis in range(u.ndim):
            total += float(np.sum(np.abs(np.roll(u, -1, axis=axis) - u) ** 2))
        return total
    if boundary == "dirichlet":
        return float(np.real(np.vdot(u, dirichlet_laplacian(u))))
    raise InvalidArgumentError(f"unknown boundary {boundary!r}")


def _check_p(p: float) -> float:
    p = float(p)
    if not p > 1.0:
        raise InvalidArgumentError(f"nonlinearity exponent p must exceed 1, got {p}")
    return p


def hamiltonian(psi: BoxField | ComplexField | np.ndarray, p: float, boundary: str | None = None, h: float = 1.0) -> float:
    """Lattice Hamiltonian at spacing ``h``.

    ``H_h(psi) = h^(d-2) ||grad psi||^2 - (2/(p+1)) h^d ||psi||_{p+1}^{p+1}``;
    ``h = 1`` gives the unit-spacing Hamiltonian. ``BoxField`` inputs use the
    Dirichlet convention; raw arrays default to periodic edges.
    """
    p = _check_p(p)
    if isinstance(psi, BoxField):
        values = psi.values
        boundary = boundary or "dirichlet"
    elif isinstance(psi, ComplexField):
        values = psi.values
        boundary = boundary or "periodic"
    else:
        values = np.asarray(psi)
        boundary = boundary or "periodic"
    d = values.ndim
    grad = gradient_energy(values, boundary)
    nonlinear = float(np.sum(np.abs(values) ** (p + 1)))
    return h ** (d - 2) * grad - (2.0 / (p + 1.0)) * h**d * nonlinear


def lagrange_multiplier(result: "SolitonResult | BoxField", p: float | None = None) -> float:
    """``omega = (||grad phi||^2 - ||phi||_{p+1}^{p+1}) / a``."""
    if isinstance(result, SolitonResult):
        profile, p = result.profile, result.p
    else:
        profile = result
        if p is None:
            raise InvalidArgumentError("p is required when passing a bare profile")
    p = _check_p(p)
    if profile.mass <= 0.0:
        raise InvalidArgumentError("the Lagrange multiplier is undefined at zero mass")
    grad = gradient_energy(profile.values, "dirichlet")
    return (grad - float(np.sum(profile.values ** (p + 1)))) / profile.mass


def euler_lagrange_residual(values: np.ndarray, p: float) -> tuple[float, float]:
    """``(omega, ||L phi - phi^p - omega phi||_inf)`` for a Dirichlet box field."""
    a = float(np.sum(values**2))
    lap = dirichlet_laplacian(values)
    nonlinear = np.abs(values) ** (p - 1) * values
    omega = (float(np.sum(values * lap)) - float(np.sum(values * nonlinear))) / a
    return omega, float(np.max(np.abs(lap - nonlinear - omega * values)))


def _dirichlet_eigenvalues(m: int, d: int) -> np.ndarray:
    n = 2 * m + 1
    one = 4.0 * np.sin(np.pi * np.arange(1, n + 1) / (2 * (n + 1))) ** 2
    grid = np.zeros((n,) * d)
    for axis in range(d):
        shape = [1] * d
        shape[axis] = n
        grid = grid + one.reshape(shape)
    return grid


def dirichlet_ground_eigenvalue(m: int, d: int) -> float:
    """Smallest eigenvalue of the Dirichlet Laplacian on ``[-m, m]^d``."""
    return d * 4.0 * math.sin(math.pi / (2 * (2 * m + 2))) ** 2


# ---------------------------------------------------------------------------
# Constrained minimization
# ---------------------------------------------------------------------------


class DecayFit(NamedTuple):
    """Exponential envelope ``phi <= C0 exp(-omega0 dist)`` fitted on shell maxima."""

    C0: float
    omega0: float
    r_squared: float
    shells: int
    accepted: bool


@dataclass
class SolitonResult:
    """Outcome of a mass-constrained Dirichlet minimization."""

    profile: BoxField
    a: float
    p: float
    energy: float
    omega: float
    residual: float
    iterations: int
    init: str
    converged: bool
    decay: DecayFit | None = None

    def to_json(self) -> dict:
        return {
            "a": self.a,
            "p": self.p,
            "d": self.profile.d,
            "m": self.profile.m,
            "energy": self.energy,
            "omega": self.omega,
            "residual": self.residual,
            "iterations": self.iterations,
            "init": self.init,
            "converged": self.converged,
            "decay": None if self.decay is None else self.decay._asdict(),
        }


def _initial_profile(policy: str, m: int, d: int, a: float) -> np.ndarray:
    shape = (2 * m + 1,) * d
    r2 = np.sum((np.indices(shape) - m) ** 2, axis=0).astype(float)
    if policy == "bump":
        u = np.exp(-r2 / 2.0)
    elif policy == "spike":
        u = np.where(r2 == 0, 1.0, 0.01 * np.exp(-r2))
    elif policy == "uniform":
        u = np.ones(shape)
    else:
        raise InvalidArgumentError(f"unknown init policy {policy!r}; choose from {INIT_POLICIES}")
    return u * math.sqrt(a / np.sum(u**2))


def _energy(u: np.ndarray, p: float) -> float:
    return float(np.sum(u * dirichlet_laplacian(u))) - (2.0 / (p + 1.0)) * float(np.sum(u ** (p + 1)))


def _projected_gradient(
    u: np.ndarray, a: float, p: float, lam: np.ndarray, tol: float, max_iters: int
) -> tuple[np.ndarray, float, int]:
    """Preconditioned projected gradient descent on the mass sphere.

    Each step moves along the Sobolev gradient ``(L + s)^-1 r`` of the
    Euler-Lagrange defect ``r`` (the Dirichlet Laplacian is diagonal in the
    type-I sine basis), takes the entrywise absolute value and rescales to
    mass ``a``. The step length is chosen by backtracking on ``H``.
    """
    energy = _energy(u, p)
    eta = 1.0
    it = 0
    stall = 0
    for it in range(1, max_iters + 1):
        omega, res = euler_lagrange_residual(u, p)
        if res < tol:
            return u, res, it
        lap = dirichlet_laplacian(u)
        defect = lap - u**p - omega * u
        shift = max(-omega, 0.0) + 1.0
        direction = idstn(dstn(defect, type=1) / (lam + shift), type=1)
        while True:
            v = np.abs(u - eta * direction)
            v *= math.sqrt(a / np.sum(v**2))
            e_new = _energy(v, p)
            if e_new <= energy + 1e-15 * abs(energy) or eta < 1e-12:
                break
            eta *= 0.5
        stall = stall + 1 if energy - e_new <= 1e-15 * max(1.0, abs(energy)) else 0
        u, energy = v, e_new
        eta = min(2.0 * eta, 1.0)
        if stall >= 20:
            break
    omega, res = euler_lagrange_residual(u, p)
    return u, res, it


def _newton_polish(u: np.ndarray, a: float, p: float, lam: np.ndarray, tol: float, max_steps: int = 30):
    """Newton iteration on ``(L - phi^(p-1) - omega) phi = 0, ||phi||^2 = a``.

    The bordered Jacobian ``[[L - p phi^(p-1) - omega, -phi], [-phi^T, 0]]``
    is symmetric, so each step is solved matrix-free with MINRES, using the
    shifted Dirichlet Laplacian (diagonal in the sine basis) as preconditioner.
    """
    shape = u.shape
    size = u.size
    x = u.copy()
    best = (x.copy(), euler_lagrange_residual(x, p)[1])
    for step in range(max_steps):
        omega, res = euler_lagrange_residual(x, p)
        mass_defect = 0.5 * (a - float(np.sum(x * x)))
        if res < best[1]:
            best = (x.copy(), res)
        if res < tol and abs(mass_defect) < tol * a:
            return x, res, step
        weight = p * np.abs(x) ** (p - 1) + omega
        lap = dirichlet_laplacian(x)
        rhs = np.concatenate([-(lap - np.abs(x) ** (p - 1) * x - omega * x).ravel(), [-mass_defect]])
        xv = x

        def matvec(z: np.ndarray) -> np.ndarray:
            v = z[:-1].reshape(shape)
            out = dirichlet_laplacian(v) - weight * v - z[-1] * xv
            return np.concatenate([out.ravel(), [-float(np.sum(xv * v))]])

        shift = abs(omega) + 1.0

        def precond(z: np.ndarray) -> np.ndarray:
            v = idstn(dstn(z[:-1].reshape(shape), type=1) / (lam + shift), type=1)
            return np.concatenate([v.ravel(), [z[-1] / a]])

        op = LinearOperator((size + 1, size + 1), matvec=matvec)
        pc = LinearOperator((size + 1, size + 1), matvec=precond)
        dz, _ = minres(op, rhs, M=pc, rtol=1e-14, maxiter=4000)
        x = x + dz[:-1].reshape(shape)
        if not np.all(np.isfinite(x)):
            break
    omega, res = euler_lagrange_residual(x, p)
    if res < best[1]:
        best = (x.copy(), res)
    return best[0], best[1], max_steps


def _minimize_from(
    u0: np.ndarray, a: float, p: float, m: int, d: int, tol: float, max_iters: int, label: str
) -> SolitonResult:
    lam = _dirichlet_eigenvalues(m, d)
    u, res, iters = _projected_gradient(u0, a, p, lam, max(tol, 1e-5), max_iters)
    if res > tol:
        polished, res_p, steps = _newton_polish(u, a, p, lam, tol)
        iters += steps
        e_old = _energy(u, p)
        cand = np.abs(polished)
        cand *= math.sqrt(a / np.sum(cand**2))
        _, res_c = euler_lagrange_residual(cand, p)
        # accept the polish only if it stayed on the same branch (no energy increase)
        if res_c < res and _energy(cand, p) <= e_old + 1e-9 * max(1.0, abs(e_old)):
            u, res = cand, res_c
    omega, res = euler_lagrange_residual(u, p)
    profile = BoxField(u, m, d)
    return SolitonResult(
        profile=profile,
        a=a,
        p=p,
        energy=_energy(u, p),
        omega=omega,
        residual=res,
        iterations=iters,
        init=label,
        converged=res <= tol,
    )


def dirichlet_minimize(
    a: float,
    p: float,
    box_m: int,
    d: int = 3,
    init: str | Sequence[str] = INIT_POLICIES,
    tol: float = 1e-8,
    max_iters: int = 20000,
    initial: np.ndarray | None = None,
    raise_on_failure: bool = True,
) -> SolitonResult:
    """Minimize ``H`` on ``{u >= 0, ||u||^2 = a}`` over the Dirichlet box ``[-m, m]^d``.

    Parameters
    ----------
    init : str or sequence of str
        Initialization policies (``"bump"``, ``"spike"``, ``"uniform"``). All
        are run and the lowest energy is kept.
    initial : ndarray, optional
        Additional warm-start profile (for instance the minimizer at a nearby
        mass), run alongside the policies.

    Raises
    ------
    ConvergenceError
        If the best candidate's Euler-Lagrange residual exceeds ``tol``; the
        best result is attached.
    """
    a = float(a)
    if not a > 0.0 or not math.isfinite(a):
        raise InvalidArgumentError(f"mass a must be positive and finite, got {a}")
    p = _check_p(p)
    if int(box_m) != box_m or box_m < 2:
        raise InvalidArgumentError(f"box half-width must be an integer >= 2, got {box_m}")
    policies = [init] if isinstance(init, str) else list(init)
    starts = [(name, _initial_profile(name, box_m, d, a)) for name in policies]
    if initial is not None:
        warm = np.abs(np.asarray(initial, dtype=float))
        if warm.shape != (2 * box_m + 1,) * d:
            warm = embed_profile(warm, box_m)
        starts.append(("warm", warm * math.sqrt(a / np.sum(warm**2))))
    best: SolitonResult | None = None
    with np.errstate(over="raise", invalid="raise"):
        for label, u0 in starts:
            try:
                cand = _minimize_from(u0, a, p, int(box_m), d, tol, max_iters, label)
            except FloatingPointError as exc:
                raise NumericOverflowError(f"overflow while minimizing at mass {a}: {exc}") from exc
            if best is None or cand.energy < best.energy - 1e-12 * max(1.0, abs(best.energy)) or (
                abs(cand.energy - best.energy) <= 1e-12 * max(1.0, abs(best.energy)) and cand.residual < best.residual
            ):
                best = cand
    assert best is not None
    if not best.converged and raise_on_failure:
        raise ConvergenceError(
            f"residual {best.residual:.2e} above tolerance {tol:.2e} at a={a}, m={box_m}", best=best
        )
    return best


def embed_profile(values: np.ndarray, m: int) -> np.ndarray:
    """Centre a box profile inside (or crop it to) the box of half-width ``m``."""
    values = np.asarray(values)
    d = values.ndim
    old_m = (values.shape[0] - 1) // 2
    out = np.zeros((2 * m + 1,) * d, dtype=values.dtype)
    k = min(old_m, m)
    src = tuple(slice(old_m - k, old_m + k + 1) for _ in range(d))
    dst = tuple(slice(m - k, m + k + 1) for _ in range(d))
    out[dst] = values[src]
    return out


# ---------------------------------------------------------------------------
# Minimal energy I(a)
# ---------------------------------------------------------------------------


@dataclass
class MinimalEnergy:
    """Infinite-volume estimate of ``I(a)`` from a box sequence."""

    a: float
    value: float
    error: float
    clamped: bool
    boxes: list[int]
    energies: list[float]
    result: SolitonResult | None

    def __float__(self) -> float:
        return self.value


def _spread_intercept(boxes: Sequence[int], energies: Sequence[float], p: float, d: int) -> float:
    """Infinite-volume intercept for box minimizers that fill the box.

    Below the threshold the box minimizer is close to the Dirichlet ground
    mode, whose energy is ``a lambda_1(m)`` minus a nonlinear correction of
    order ``|box|^(-(p-1)/2)``. The last three boxes determine the model
    ``E(m) = A + B lambda_1(m) + C (2m+1)^(-d(p-1)/2)``; ``A`` is returned.
    """
    rows = [[1.0, dirichlet_ground_eigenvalue(m, d), (2 * m + 1) ** (-d * (p - 1) / 2.0)] for m in boxes[-3:]]
    return float(np.linalg.solve(np.array(rows), np.array(energies[-3:]))[0])


def minimal_energy_I(
    a: float,
    p: float,
    d: int = 3,
    schedule: Iterable[int] = BOX_SCHEDULE,
    tol: float = 1e-6,
    spread_tol: float = 5e-4,
    residual_tol: float = 1e-8,
    init: str | Sequence[str] = INIT_POLICIES,
    initial: np.ndarray | None = None,
    threshold: float | None = None,
) -> MinimalEnergy:
    """Estimate ``I(a) = inf {H(u) : ||u||^2 = a}`` on ``Z^d``.

    Dirichlet energies decrease towards ``I(a)`` as the box grows. When the
    box minimum is negative (a localized ground state) successive box
    energies are compared and the sequence stops once they differ by less
    than ``tol``. While it stays positive the minimizer fills the box; the
    infinite-volume intercept of a three-term finite-size model (see
    ``_spread_intercept``) is tracked instead, and the sequence stops once
    consecutive intercepts differ by less than ``spread_tol``. Nonnegative
    estimates are reported as ``0`` with the ``clamped`` flag, since
    ``I <= 0`` always.

    If ``threshold`` (a previously computed ``R_p``) is given and ``a`` does
    not exceed it, ``I(a) = 0`` is returned without minimization.

    Raises
    ------
    AccuracyNotMetError
        If the schedule is exhausted first; the best estimate is attached.
    """
    a = float(a)
    if not a > 0.0 or not math.isfinite(a):
        raise InvalidArgumentError(f"mass a must be positive and finite, got {a}")
    p = _check_p(p)
    if threshold is not None and a <= threshold:
        return MinimalEnergy(a, 0.0, 0.0, True, [], [], None)  # type: ignore[arg-type]
    boxes: list[int] = []
    energies: list[float] = []
    intercepts: list[float] = []
    warm = initial
    last: SolitonResult | None = None
    for m in schedule:
        res = dirichlet_minimize(a, p, m, d, init=init, tol=residual_tol, initial=warm, raise_on_failure=False)
        if not res.converged:
            raise ConvergenceError(f"minimization at a={a}, m={m} did not converge", best=res)
        boxes.append(m)
        energies.append(res.energy)
        warm = res.profile.values
        last = res
        if energies[-1] < 0.0:
            if len(energies) >= 2 and energies[-2] < 0.0:
                diff = abs(energies[-1] - energies[-2])
                if diff < tol:
                    return MinimalEnergy(a, energies[-1], diff, False, boxes, energies, res)
            continue
        if len(energies) < 3:
            continue
        intercepts.append(_spread_intercept(boxes, energies, p, d))
        if len(intercepts) >= 2:
            err = abs(intercepts[-1] - intercepts[-2])
            if err < spread_tol:
                value = intercepts[-1]
                if value >= 0.0:
                    return MinimalEnergy(a, 0.0, max(err, value), True, boxes, energies, res)
                return MinimalEnergy(a, value, err, False, boxes, energies, res)
    best_value = min(energies[-1], intercepts[-1] if intercepts else energies[-1], 0.0) if energies else math.nan
    error = abs(intercepts[-1] - intercepts[-2]) if len(intercepts) >= 2 else math.inf
    raise AccuracyNotMetError(
        f"box schedule exhausted before I({a}) converged; box energies {energies}",
        best=MinimalEnergy(a, best_value, error, best_value == 0.0, boxes, energies, last),  # type: ignore[arg-type]
        error=error,
    )


# ---------------------------------------------------------------------------
# Excitation threshold
# ---------------------------------------------------------------------------


class Threshold(NamedTuple):
    """Excitation threshold and its two independent estimates."""

    value: float
    quotient_estimate: float
    bisection_estimate: float
    quotient_infimum: float


def _quotient_infimum(p: float, d: int, m: int) -> float:
    """``inf ||f||^(p-1) ||grad f||^2 / ||f||_{p+1}^{p+1}`` over box fields (multi-start L-BFGS)."""
    shape = (2 * m + 1,) * d
    r2 = np.sum((np.indices(shape) - m) ** 2, axis=0).astype(float)

    def objective(g: np.ndarray) -> tuple[float, np.ndarray]:
        u = g.reshape(shape)
        mass = float(np.sum(u * u))
        lap = dirichlet_laplacian(u)
        grad = float(np.sum(u * lap))
        powsum = float(np.sum(np.abs(u) ** (p + 1)))
        q = mass ** ((p - 1) / 2) * grad / powsum
        dq = q * ((p - 1) * u / mass + 2.0 * lap / grad - (p + 1) * np.abs(u) ** (p - 1) * u / powsum)
        return q, dq.ravel()

    best = math.inf
    for width in (0.5, 1.0, 2.0):
        x0 = np.exp(-r2 / (2.0 * width**2)).ravel()
        sol = optimize.minimize(
            objective, x0, jac=True, method="L-BFGS-B", options=dict(maxiter=10000, gtol=1e-12, ftol=1e-15)
        )
        best = min(best, float(sol.fun))
    return best


def excitation_threshold_R_p(
    p: float, d: int = 3, tol: float = 1e-6, box_m: int = 6, agreement: float = 0.05
) -> Threshold:
    """Ground-state excitation threshold ``R_p``.

    Zero for mass-subcritical exponents ``p < 1 + 4/d``. Otherwise
    ``(2/(p+1)) R_p^((p-1)/2)`` equals the infimum of the scale-invariant
    quotient ``||f||^(p-1) ||grad f||^2 / ||f||_{p+1}^{p+1}``, minimized over
    box fields. A second estimate bisects on the sign of the Dirichlet
    minimal energy at fixed box.

    Raises
    ------
    InconsistencyError
        If the two estimates differ by more than ``agreement`` (relative).
    """
    p = _check_p(p)
    if p < 1.0 + 4.0 / d:
        return Threshold(0.0, 0.0, 0.0, 0.0)
    q = _quotient_infimum(p, d, box_m)
    from_quotient = ((p + 1.0) / 2.0 * q) ** (2.0 / (p - 1.0))

    def sign_energy(a: float) -> float:
        res = dirichlet_minimize(a, p, box_m, d, init=("bump", "spike"), tol=1e-9, raise_on_failure=False)
        return res.energy

    lo, hi = 0.5 * from_quotient, 2.0 * from_quotient
    if sign_energy(lo) < 0.0 or sign_energy(hi) >= 0.0:
        raise InconsistencyError(f"I-bisection bracket [{lo}, {hi}] around the quotient estimate is invalid")
    while hi - lo > tol * from_quotient:
        mid = 0.5 * (lo + hi)
        if sign_energy(mid) < 0.0:
            hi = mid
        else:
            lo = mid
    from_bisection = 0.5 * (lo + hi)
    if abs(from_bisection - from_quotient) > agreement * from_quotient:
        raise InconsistencyError(
            f"threshold estimates disagree: quotient {from_quotient:.6g}, bisection {from_bisection:.6g}"
        )
    return Threshold(from_quotient, from_quotient, from_bisection, q)


# ---------------------------------------------------------------------------
# Decay fit
# ---------------------------------------------------------------------------


def decay_fit(profile: BoxField, floor: float = 1e-12, first_shell: int = 2, min_r_squared: float = 0.95) -> DecayFit:
    """Fit ``log phi`` against graph distance from the peak set.

    For each graph-distance shell the maximum of ``phi`` is taken (the
    envelope), restricted to values above ``floor``. A least-squares line on
    shells ``first_shell, ...`` gives ``log C0`` and ``-omega0``; the fit is
    accepted when ``omega0 > 0`` and ``R^2 >= min_r_squared``.

    Raises
    ------
    InsufficientDataError
        If fewer than four shells are usable.
    """
    values = profile.values
    peak = values.max()
    if peak <= 0:
        raise InsufficientDataError("zero profile has no decay")
    peak_sites = np.argwhere(values >= peak * (1.0 - 1e-12))
    coords = np.indices(values.shape).reshape(values.ndim, -1).T
    dist = np.min(np.abs(coords[:, None, :] - peak_sites[None, :, :]).sum(axis=2), axis=1)
    flat = values.ravel()
    shells, envelope = [], []
    for r in range(first_shell, int(dist.max()) + 1):
        mask = (dist == r) & (flat > floor)
        if np.any(mask):
            shells.append(r)
            envelope.append(math.log(float(flat[mask].max())))
    if len(shells) < 4:
        raise InsufficientDataError(f"only {len(shells)} usable shells for the decay fit")
    x = np.array(shells, dtype=float)
    y = np.array(envelope)
    slope, intercept = np.polyfit(x, y, 1)
    fitted = intercept + slope * x
    ss_res = float(np.sum((y - fitted) ** 2))
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 0.0
    omega0 = -float(slope)
    return DecayFit(math.exp(intercept), omega0, r2, len(shells), bool(omega0 > 0 and r2 >= min_r_squared))


# ---------------------------------------------------------------------------
# Export
# ---------------------------------------------------------------------------


def export_profile(result: SolitonResult, path: str | Path) -> tuple[Path, Path]:
    """Write ``x1,...,xd,value`` CSV and a JSON sidecar with the run metadata."""
    path = Path(path)
    prof = result.profile
    coords = prof.coordinates().reshape(prof.d, -1).T
    header = ",".join([f"x{i + 1}" for i in range(prof.d)] + ["value"])
    with open(path, "w", newline="") as fh:
        fh.write(header + "\n")
        for c, v in zip(coords, prof.values.ravel()):
            fh.write(",".join(str(int(ci)) for ci in c) + f",{float(v)!r}\n")
    sidecar = path.with_suffix(path.suffix + ".json")
    sidecar.write_text(json.dumps(result.to_json(), indent=2))
    return path, sidecar


# ---------------------------------------------------------------------------
# DNLS dynamics
# ---------------------------------------------------------------------------


@dataclass
class Trajectory:
    """Sampled DNLS trajectory with conservation diagnostics."""

    times: np.ndarray
    samples: list[np.ndarray]
    mass_drift: float
    energy_drift: float
    final: np.ndarray


def dnls_rhs(psi: np.ndarray, p: float, h: float = 1.0, frame_omega: float = 0.0) -> np.ndarray:
    """``dpsi/dt = -i (h^-2 L psi - |psi|^(p-1) psi - frame_omega psi)`` on a torus."""
    return -1j * (periodic_laplacian(psi) / h**2 - np.abs(psi) ** (p - 1) * psi - frame_omega * psi)


def dnls_energy(psi: np.ndarray, p: float, h: float = 1.0) -> float:
    """Conserved energy ``h^-2 ||grad psi||^2 - (2/(p+1)) ||psi||_{p+1}^{p+1}`` of the flow."""
    return gradient_energy(psi, "periodic") / h**2 - (2.0 / (p + 1.0)) * float(np.sum(np.abs(psi) ** (p + 1)))


def evolve_dnls(
    psi0: np.ndarray,
    p: float,
    dt: float = 1e-3,
    T: float = 1.0,
    h: float = 1.0,
    sample_every: int | None = None,
    frame_omega: float = 0.0,
    overflow: float = 1e150,
) -> Trajectory:
    """Integrate the periodic-torus DNLS with classical fourth-order Runge-Kutta.

    ``frame_omega`` evolves in a frame rotating at that frequency; moduli,
    mass and energy are unaffected, and a ground state with multiplier
    ``omega`` is then exactly stationary when ``frame_omega = omega``.

    Raises
    ------
    NumericOverflowError
        If ``max |psi|`` exceeds ``overflow``; the time is attached.
    """
    p = _check_p(p)
    if not dt > 0 or not T >= 0:
        raise InvalidArgumentError("dt must be positive and T nonnegative")
    steps = int(round(T / dt))
    psi = np.asarray(psi0, dtype=complex).copy()
    m0 = float(np.sum(np.abs(psi) ** 2))
    e0 = dnls_energy(psi, p, h)
    times = [0.0]
    samples = [psi.copy()]
    mass_drift = 0.0
    energy_drift = 0.0
    every = sample_every or max(1, steps // 100)
    for k in range(1, steps + 1):
        with np.errstate(over="ignore", invalid="ignore"):
            k1 = dnls_rhs(psi, p, h, frame_omega)
            k2 = dnls_rhs(psi + 0.5 * dt * k1, p, h, frame_omega)
            k3 = dnls_rhs(psi + 0.5 * dt * k2, p, h, frame_omega)
            k4 = dnls_rhs(psi + dt * k3, p, h, frame_omega)
            psi = psi + (dt / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
        peak = float(np.max(np.abs(psi)))
        if not math.isfinite(peak) or peak > overflow:
            raise NumericOverflowError(f"|psi| blew up to {peak}", time=k * dt)
        if k % every == 0 or k == steps:
            mass_drift = max(mass_drift, abs(float(np.sum(np.abs(psi) ** 2)) - m0) / max(m0, 1e-300))
            energy_drift = max(energy_drift, abs(dnls_energy(psi, p, h) - e0) / max(abs(e0), 1e-300))
            times.append(k * dt)
            samples.append(psi.copy())
    return Trajectory(np.array(times), samples, mass_drift, energy_drift, psi)


def rescale_solution(psi: np.ndarray, lam: float, p: float) -> np.ndarray:
    """``lam^(2/(p-1)) psi``: the field that pairs with spacing ``h/lam``.

    If ``psi(t)`` solves the flow at spacing ``h`` then
    ``lam^(2/(p-1)) psi(lam^2 t)`` solves it at spacing ``h/lam``, and
    ``H_h(psi) = lam^(d - 2 - 4/(p-1)) H_{h/lam}(lam^(2/(p-1)) psi)``.
    """
    lam = float(lam)
    if not lam > 0.0:
        raise InvalidArgumentError(f"scaling factor must be positive, got {lam}")
    p = _check_p(p)
    return lam ** (2.0 / (p - 1.0)) * np.asarray(psi)


def scaling_exponent(d: int, p: float) -> float:
    """``d - 2 - 4/(p-1)``, the energy scaling exponent."""
    return d - 2.0 - 4.0 / (p - 1.0)


def embed_in_torus(profile: BoxField, n: int) -> np.ndarray:
    """Place a box profile at the centre of an ``n^d`` torus (complex array)."""
    size = 2 * profile.m + 1
    if n < size + 2:
        raise InvalidArgumentError(f"torus side {n} too small for a buffer around a box of side {size}")
    out = np.zeros((n,) * profile.d, dtype=complex)
    start = (n - size) // 2
    out[tuple(slice(start, start + size) for _ in range(profile.d))] = profile.values
    return out
