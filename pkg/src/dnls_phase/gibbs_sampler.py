"""Finite-volume Gibbs measure: Metropolis sampling, observables and partition estimates.

The measure on ``C^N`` has density ``exp(-theta H(psi))`` restricted to
``||psi||^2 <= N`` with::

    H(psi) = ||grad psi||^2 - (nu/N)^((p-1)/2) (2/(p+1)) ||psi||_{p+1}^{p+1}

on the periodic torus. Free-field units: without the nonlinearity a
typical field is ``Psi / sqrt(theta)`` with ``Psi`` a unit Gaussian free
field, so bounds stated for ``Psi`` are checked on ``sqrt(theta) psi``.
"""

from __future__ import annotations

import csv
import json
import math
import warnings
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy import integrate

from . import kernels
from . import lattice_spectrum as ls
from .errors import InvalidArgumentError, UnreliableEstimateError
from .gff_sampler import make_rng, standard_complex_normal
from .lattice_spectrum import ComplexField, TorusSpec

STREAM_HEADER = ("step", "mass_frac", "max_frac", "part_ratio", "E_grad", "E_nl")
INIT_POLICIES = ("zero", "random", "spike")
ACCEPTANCE_WINDOW = (0.05, 0.8)


@dataclass(frozen=True)
class ModelParams:
    """Parameters of the finite-volume measure."""

    theta: float
    nu: float
    p: float
    spec: TorusSpec

    def __post_init__(self) -> None:
        if not (math.isfinite(self.theta) and self.theta > 0.0):
            raise InvalidArgumentError(f"theta must be positive and finite, got {self.theta}")
        if not (math.isfinite(self.nu) and self.nu >= 0.0):
            raise InvalidArgumentError(f"nu must be nonnegative and finite, got {self.nu}")
        if not self.p > 1.0:
            raise InvalidArgumentError(f"p must exceed 1, got {self.p}")

    @property
    def N(self) -> int:
        return self.spec.N

    @property
    def coupling(self) -> float:
        """Coefficient of ``-||psi||_{p+1}^{p+1}`` in ``H``."""
        return (self.nu / self.N) ** ((self.p - 1.0) / 2.0) * 2.0 / (self.p + 1.0)


def _values(psi) -> np.ndarray:
    return psi.values if isinstance(psi, ComplexField) else np.asarray(psi)


def gradient_energy(psi) -> float:
    """``||grad psi||^2`` with periodic edges ``(x, x + e_i)``."""
    values = _values(psi)
    return float(sum(np.sum(np.abs(np.roll(values, -1, axis=a) - values) ** 2) for a in range(values.ndim)))


def model_hamiltonian(psi, params: ModelParams) -> float:
    """``||grad psi||^2 - (nu/N)^((p-1)/2) (2/(p+1)) ||psi||_{p+1}^{p+1}``."""
    values = _values(psi)
    if values.shape != params.spec.shape:
        raise InvalidArgumentError(f"field shape {values.shape} does not match {params.spec.shape}")
    nonlinear = float(np.sum(np.abs(values) ** (params.p + 1.0)))
    return gradient_energy(values) - params.coupling * nonlinear


def neighbor_table(spec: TorusSpec) -> np.ndarray:
    """``(N, 2d)`` int32 table of flat neighbor indices ``x + e_i`` then ``x - e_i``.

    For ``n = 2`` both entries along an axis are the same site, which is the
    double edge consistent with the spectrum ``4 sin^2(pi k / n)``.
    """
    index = np.arange(spec.N).reshape(spec.shape)
    cols = [np.roll(index, -1, axis=a).ravel() for a in range(spec.d)]
    cols += [np.roll(index, 1, axis=a).ravel() for a in range(spec.d)]
    return np.ascontiguousarray(np.stack(cols, axis=1).astype(np.int32))


# ---------------------------------------------------------------------------
# Observables
# ---------------------------------------------------------------------------


@dataclass
class ObservableRecord:
    """Phase observables of one configuration."""

    step: int
    mass_frac: float
    max_frac: float
    part_ratio: float
    E_grad: float
    E_nl: float
    max_abs: float

    def row(self) -> list:
        return [self.step, self.mass_frac, self.max_frac, self.part_ratio, self.E_grad, self.E_nl]


def observables(psi, params: ModelParams | None = None, step: int = 0) -> ObservableRecord:
    """Max-site mass fraction, participation ratio, energy split and total mass fraction.

    The participation ratio is ``(sum |psi|^2)^2 / (N sum |psi|^4)``; a zero
    field reports zero mass and participation ratio 1. ``E_nl`` is the
    nonlinear energy term (negative) when ``params`` is given, else
    ``-||psi||_{p+1}^{p+1}`` with ``p = 3``.
    """
    values = _values(psi)
    N = values.size
    r2 = np.abs(values) ** 2
    mass = float(r2.sum())
    if mass == 0.0:
        return ObservableRecord(step, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0)
    quartic = float(np.sum(r2**2))
    if params is not None:
        e_nl = -params.coupling * float(np.sum(r2 ** ((params.p + 1.0) / 2.0)))
    else:
        e_nl = -quartic
    return ObservableRecord(
        step=step,
        mass_frac=mass / N,
        max_frac=float(r2.max()) / mass,
        part_ratio=mass**2 / (N * quartic),
        E_grad=gradient_energy(values),
        E_nl=e_nl,
        max_abs=float(np.sqrt(r2.max())),
    )


# ---------------------------------------------------------------------------
# Metropolis chain
# ---------------------------------------------------------------------------


@dataclass
class ChainState:
    """Complete resumable state of a chain."""

    params: ModelParams
    re: np.ndarray
    im: np.ndarray
    energy: float
    mass: float
    sweep: int
    step_size: float
    accepted: int
    proposed: int
    seed: int
    rng: np.random.Generator
    max_energy_drift: float = 0.0

    @property
    def field(self) -> ComplexField:
        return ComplexField(self.params.spec, (self.re + 1j * self.im).reshape(self.params.spec.shape))

    @property
    def acceptance(self) -> float:
        return self.accepted / self.proposed if self.proposed else 0.0

    def refresh_energy(self) -> float:
        """Recompute the cached energy and mass; returns the relative drift removed."""
        psi = self.re + 1j * self.im
        exact = model_hamiltonian(psi.reshape(self.params.spec.shape), self.params)
        drift = abs(exact - self.energy) / max(abs(exact), 1.0)
        self.max_energy_drift = max(self.max_energy_drift, drift)
        self.energy = exact
        self.mass = float(np.sum(self.re**2 + self.im**2))
        return drift


def initial_field(params: ModelParams, policy: str, rng: np.random.Generator, spike_fraction: float = 0.9):
    """Starting configuration: zeros, a random field at half the mass cap, or a single-site spike."""
    spec = params.spec
    if policy == "zero":
        return np.zeros(spec.N), np.zeros(spec.N)
    if policy == "random":
        z = standard_complex_normal(rng, spec.N)
        z *= math.sqrt(0.5 * spec.N / float(np.sum(np.abs(z) ** 2)))
        return z.real.copy(), z.imag.copy()
    if policy == "spike":
        re = np.zeros(spec.N)
        re[0] = math.sqrt(spike_fraction * spec.N)
        return re, np.zeros(spec.N)
    raise InvalidArgumentError(f"unknown init policy {policy!r}; choose from {INIT_POLICIES}")


def new_chain(
    params: ModelParams,
    seed: int,
    init: str = "zero",
    step_size: float | None = None,
    spike_fraction: float = 0.9,
) -> ChainState:
    rng = make_rng(seed)
    re, im = initial_field(params, init, rng, spike_fraction)
    state = ChainState(
        params=params,
        re=np.ascontiguousarray(re, dtype=float),
        im=np.ascontiguousarray(im, dtype=float),
        energy=0.0,
        mass=0.0,
        sweep=0,
        step_size=step_size if step_size is not None else 1.0 / math.sqrt(params.theta * (2 * params.spec.d + 1)),
        accepted=0,
        proposed=0,
        seed=int(seed),
        rng=rng,
    )
    state.refresh_energy()
    state.max_energy_drift = 0.0
    return state


def run_sweeps(state: ChainState, sweeps: int, neighbors: np.ndarray | None = None, backend=None) -> None:
    """Advance the chain by ``sweeps`` full sequential sweeps (in place).

    Random inputs are drawn in numpy for every sweep (``(N, 2)`` normals with
    variance 1/2 and ``N`` uniforms) and handed to the kernel, so the
    compiled and pure-Python backends give identical chains.
    """
    impl = backend or kernels
    nbr = neighbor_table(state.params.spec) if neighbors is None else neighbors
    prm = state.params
    N = prm.N
    for _ in range(int(sweeps)):
        noise = state.rng.standard_normal((N, 2)) * math.sqrt(0.5)
        uniforms = state.rng.random(N)
        acc, mass, d_energy = impl.metropolis_sweep(
            state.re, state.im, nbr, prm.theta, prm.coupling, prm.p, state.step_size, float(N), state.mass,
            noise, uniforms,
        )
        state.accepted += int(acc)
        state.proposed += N
        state.mass = mass
        state.energy += d_energy
        state.sweep += 1


@dataclass
class ChainReport:
    """Thinned observables and diagnostics of a finished chain."""

    records: list[ObservableRecord]
    acceptance: float
    step_size: float
    max_energy_drift: float
    warning: str | None
    seed: int
    backend: str
    state: ChainState = field(repr=False)

    def mean(self, name: str) -> float:
        return float(np.mean([getattr(r, name) for r in self.records]))

    def header(self) -> dict:
        prm = self.state.params
        return dict(
            theta=prm.theta, nu=prm.nu, p=prm.p, d=prm.spec.d, n=prm.spec.n, seed=self.seed,
            acceptance=self.acceptance, step_size=self.step_size, warning=self.warning, backend=self.backend,
        )


def metropolis_chain(
    params: ModelParams,
    steps: int,
    proposal_scale: float | None = None,
    seed: int = 0,
    burn_in: int = 1000,
    thin: int = 1,
    init: str = "zero",
    target_acceptance: float = 0.3,
    adapt_every: int = 50,
    refresh_every: int = 1000,
    spike_fraction: float = 0.9,
    backend=None,
) -> ChainReport:
    """Run a single-site Metropolis chain and collect thinned observables.

    ``steps`` counts production sweeps after ``burn_in`` sweeps. During
    burn-in the proposal scale is multiplied by ``exp(acc - target)`` every
    ``adapt_every`` sweeps. If the production acceptance rate leaves
    ``[0.05, 0.8]`` a tuning warning is attached to the report.
    """
    if proposal_scale is not None and not proposal_scale > 0.0:
        raise InvalidArgumentError("proposal_scale must be positive")
    if steps < 1 or burn_in < 0 or thin < 1:
        raise InvalidArgumentError("steps and thin must be positive, burn_in nonnegative")
    state = new_chain(params, seed, init, proposal_scale, spike_fraction)
    nbr = neighbor_table(params.spec)
    impl = backend or kernels
    done = 0
    while done < burn_in:
        chunk = min(adapt_every, burn_in - done)
        a0, p0 = state.accepted, state.proposed
        run_sweeps(state, chunk, nbr, impl)
        rate = (state.accepted - a0) / max(state.proposed - p0, 1)
        if proposal_scale is None:
            state.step_size *= math.exp(rate - target_acceptance)
        done += chunk
    state.refresh_energy()
    state.accepted = state.proposed = 0
    records = []
    for k in range(1, steps + 1):
        run_sweeps(state, 1, nbr, impl)
        if k % refresh_every == 0:
            state.refresh_energy()
        if k % thin == 0:
            rec = observables(state.field, params, step=state.sweep)
            records.append(rec)
    state.refresh_energy()
    warning = None
    lo, hi = ACCEPTANCE_WINDOW
    if not lo <= state.acceptance <= hi:
        warning = f"acceptance {state.acceptance:.3f} outside [{lo}, {hi}]"
        warnings.warn(warning, RuntimeWarning, stacklevel=2)
    name = "python" if impl is kernels.python else ("cython" if impl is kernels.compiled else kernels.BACKEND)
    return ChainReport(records, state.acceptance, state.step_size, state.max_energy_drift, warning, seed, name, state)


def write_stream(report: ChainReport, path: str | Path) -> Path:
    """CSV ``step,mass_frac,max_frac,part_ratio,E_grad,E_nl`` plus a JSON header sidecar."""
    path = Path(path)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(STREAM_HEADER)
        for rec in report.records:
            writer.writerow([rec.step] + [repr(float(v)) for v in rec.row()[1:]])
    path.with_suffix(path.suffix + ".json").write_text(json.dumps(report.header(), indent=2))
    return path


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, np.ndarray):
        return {"__array__": obj.tolist(), "dtype": str(obj.dtype)}
    if isinstance(obj, (np.integer,)):
        return int(obj)
    return obj


def _from_jsonable(obj):
    if isinstance(obj, dict):
        if "__array__" in obj:
            return np.array(obj["__array__"], dtype=obj["dtype"])
        return {k: _from_jsonable(v) for k, v in obj.items()}
    return obj


def save_checkpoint(state: ChainState, path: str | Path) -> Path:
    """Write the full chain state (field, counters, RNG state) as JSON."""
    prm = state.params
    data = dict(
        params=dict(theta=prm.theta, nu=prm.nu, p=prm.p, d=prm.spec.d, n=prm.spec.n),
        re=[repr(float(v)) for v in state.re],
        im=[repr(float(v)) for v in state.im],
        energy=repr(float(state.energy)),
        mass=repr(float(state.mass)),
        sweep=state.sweep,
        step_size=repr(float(state.step_size)),
        accepted=state.accepted,
        proposed=state.proposed,
        seed=state.seed,
        max_energy_drift=repr(float(state.max_energy_drift)),
        rng=_jsonable(state.rng.bit_generator.state),
    )
    path = Path(path)
    path.write_text(json.dumps(data))
    return path


def load_checkpoint(path: str | Path) -> ChainState:
    data = json.loads(Path(path).read_text())
    p = data["params"]
    params = ModelParams(p["theta"], p["nu"], p["p"], TorusSpec(p["d"], p["n"]))
    rng = np.random.Generator(np.random.Philox())
    rng.bit_generator.state = _from_jsonable(data["rng"])
    return ChainState(
        params=params,
        re=np.array([float(v) for v in data["re"]]),
        im=np.array([float(v) for v in data["im"]]),
        energy=float(data["energy"]),
        mass=float(data["mass"]),
        sweep=int(data["sweep"]),
        step_size=float(data["step_size"]),
        accepted=int(data["accepted"]),
        proposed=int(data["proposed"]),
        seed=int(data["seed"]),
        rng=rng,
        max_energy_drift=float(data["max_energy_drift"]),
    )


# ---------------------------------------------------------------------------
# Exact sampler at zero nonlinearity
# ---------------------------------------------------------------------------


def sample_free_constrained(spec: TorusSpec, theta: float, count: int, seed: int) -> np.ndarray:
    """Exact draws from ``exp(-theta ||grad psi||^2)`` on ``||psi||^2 <= N``.

    Nonconstant modes are Gaussian with variance ``1/(theta lambda_k)``; given
    them, the constant mode is uniform on the disk ``|c_0|^2 <= N - Gamma/theta``,
    whose area is the acceptance weight. Returns ``(count,) + spec.shape``.
    """
    rng = make_rng(seed)
    lam = ls.eigenvalue_grid(spec)
    scale = np.zeros_like(lam)
    nonzero = lam > 0
    scale[nonzero] = 1.0 / np.sqrt(theta * lam[nonzero])
    out = []
    have = 0
    N = spec.N
    while have < count:
        batch = max(64, 2 * (count - have))
        coeffs = standard_complex_normal(rng, (batch,) + spec.shape) * scale
        room = N - np.sum(np.abs(coeffs) ** 2, axis=tuple(range(1, spec.d + 1)))
        keep = rng.random(batch) < np.clip(room, 0.0, None) / N
        coeffs, room = coeffs[keep], room[keep]
        radius = np.sqrt(room * rng.random(len(room)))
        angle = 2 * np.pi * rng.random(len(room))
        coeffs[(slice(None),) + (0,) * spec.d] = radius * np.exp(1j * angle)
        fields = math.sqrt(N) * np.fft.ifftn(coeffs, axes=tuple(range(1, spec.d + 1)))
        out.append(fields)
        have += len(fields)
    return np.concatenate(out)[:count]


# ---------------------------------------------------------------------------
# Partition function
# ---------------------------------------------------------------------------


@dataclass
class PartitionEstimate:
    """Estimate of ``(1/N) log Z_N`` with diagnostics."""

    value: float
    standard_error: float
    ess: float
    samples: int
    seed: int
    proposal_mass: float


def _log_mean_exp(logw: np.ndarray) -> float:
    top = float(logw.max())
    return top + math.log(float(np.mean(np.exp(logw - top))))


def small_N_partition_estimate(
    params: ModelParams,
    samples: int = 100_000,
    seed: int = 0,
    proposal_mass: float = 0.0,
    bootstrap: int = 200,
    min_ess: float = 100.0,
    batch: int = 20_000,
) -> PartitionEstimate:
    """Importance-sampling estimate of ``(1/N) log Z_N``.

    Proposal: nonconstant Fourier modes ``c_k ~ CN(0, 1/(theta (lambda_k + y)))``
    with ``y = proposal_mass``, and the constant mode uniform on the disk
    ``|c_0|^2 <= N``. Weights are ``exp(-theta H) 1{||psi||^2 <= N} / q``.
    The standard error comes from a seeded bootstrap of the log-mean weight.

    Raises
    ------
    UnreliableEstimateError
        If the effective sample size is below ``min_ess``.
    """
    spec = params.spec
    if spec.N > 512:
        raise InvalidArgumentError("the importance sampler is meant for N <= 512")
    N = spec.N
    theta = params.theta
    lam = ls.eigenvalue_grid(spec)
    zero = (0,) * spec.d
    prec = theta * (lam + proposal_mass)
    prec_nz = prec.copy()
    prec_nz[zero] = 1.0
    scale = 1.0 / np.sqrt(prec_nz)
    scale[zero] = 0.0
    nonconstant = np.ones(spec.shape, dtype=bool)
    nonconstant[zero] = False
    log_norm = float(np.sum(np.log(prec[nonconstant] / np.pi))) - math.log(np.pi * N)
    rng = make_rng(seed)
    axes = tuple(range(1, spec.d + 1))
    logw = np.empty(int(samples))
    done = 0
    while done < samples:
        size = min(batch, samples - done)
        coeffs = standard_complex_normal(rng, (size,) + spec.shape) * scale
        radius = np.sqrt(N * rng.random(size))
        angle = 2 * np.pi * rng.random(size)
        coeffs[(slice(None),) + zero] = radius * np.exp(1j * angle)
        quad_form = np.sum(prec * np.abs(coeffs) ** 2, axis=axes) - prec[zero] * np.abs(coeffs[(slice(None),) + zero]) ** 2
        fields = math.sqrt(N) * np.fft.ifftn(coeffs, axes=axes)
        r2 = np.abs(fields) ** 2
        mass = np.sum(r2, axis=axes)
        grad = np.sum(lam * np.abs(coeffs) ** 2, axis=axes)
        energy = grad - params.coupling * np.sum(r2 ** ((params.p + 1.0) / 2.0), axis=axes)
        log_q = log_norm - quad_form
        lw = -theta * energy - log_q
        lw[mass > N] = -np.inf
        logw[done : done + size] = lw
        done += size
    finite = np.isfinite(logw)
    if not np.any(finite):
        raise UnreliableEstimateError("every proposal violated the mass constraint", {"ess": 0.0})
    top = float(logw[finite].max())
    w = np.where(finite, np.exp(logw - top), 0.0)
    ess = float(w.sum() ** 2 / np.sum(w**2))
    diagnostics = {"ess": ess, "samples": int(samples), "accepted_fraction": float(finite.mean())}
    if ess < min_ess:
        raise UnreliableEstimateError(f"effective sample size {ess:.1f} below {min_ess}", diagnostics)
    estimate = (top + math.log(float(w.mean()))) / N
    boot_rng = make_rng(seed + 1)
    boots = np.empty(bootstrap)
    for b in range(bootstrap):
        idx = boot_rng.integers(0, len(w), len(w))
        boots[b] = (top + math.log(float(w[idx].mean()))) / N
    return PartitionEstimate(estimate, float(boots.std(ddof=1)), ess, int(samples), int(seed), float(proposal_mass))


def expected_positive_part(rates: np.ndarray, t: float) -> float:
    """``E[(t - Gamma)_+]`` for ``Gamma = sum_k X_k / rates_k`` with unit exponentials ``X_k``.

    Uses ``E[(t - X)_+] = (t - E X)/2 + (1/pi) int_0^inf (1 - Re(phi(u) e^{-iut})) / u^2 du``
    with the characteristic function ``phi(u) = prod_k (1 - i u / rates_k)^-1``.
    """
    rates = np.asarray(rates, dtype=float)
    mean = float(np.sum(1.0 / rates))

    def integrand(u: float) -> float:
        if u == 0.0:
            return 0.5 * float(np.sum(1.0 / rates**2)) + 0.5 * (t - mean) ** 2
        # z = log(phi(u)) - i u t; 1 - Re e^z written without cancellation near u = 0
        real = -0.5 * float(np.sum(np.log1p((u / rates) ** 2)))
        imag = float(np.sum(np.arctan(u / rates))) - u * t
        value = -math.expm1(real) * math.cos(imag) + 2.0 * math.sin(0.5 * imag) ** 2
        return value / (u * u)

    def log_modulus(u: float) -> float:
        return -0.5 * float(np.sum(np.log1p((u / rates) ** 2)))

    scale = float(np.min(rates))
    breaks = [0.0] + list(scale * np.geomspace(1e-3, 1e6, 181))
    total = 0.0
    for lo, hi in zip(breaks[:-1], breaks[1:]):
        if log_modulus(lo) < -37.0:
            # |phi| < 1e-16 from here on: the integrand is 1/u^2 to machine precision
            return 0.5 * (t - mean) + (total + 1.0 / lo) / math.pi
        total += integrate.quad(integrand, lo, hi, limit=500, epsabs=1e-13, epsrel=1e-11)[0]
    # slow decay (very few modes): bound the remaining oscillating part by |phi|
    return 0.5 * (t - mean) + (total + 1.0 / breaks[-1]) / math.pi


def partition_oracle_free(spec: TorusSpec, theta: float) -> float:
    """``(1/N) log Z_N`` at ``nu = 0`` from the exponential-sum mass law.

    ``Z_N = (pi/theta)^N exp(-N K_N(0)) E[(theta N - Gamma)_+]`` with
    ``Gamma = sum_{k != 0} X_k / lambda_k``.
    """
    N = spec.N
    lam = ls.nonzero_eigenvalues_sorted(spec)
    positive = expected_positive_part(lam, theta * N)
    if not positive > 0.0:
        raise InvalidArgumentError("the constrained integral vanishes numerically")
    return math.log(math.pi / theta) - ls.K_N(0.0, spec) + math.log(positive) / N


# ---------------------------------------------------------------------------
# Auxiliary function h and its convexity window
# ---------------------------------------------------------------------------


def h_aux(x, p: float):
    """``h(x) = 2 x^(p+1) / (1 + x^(p-1))`` for ``x >= 0``."""
    x = np.asarray(x, dtype=float)
    if np.any(x < 0):
        raise InvalidArgumentError("h is defined for x >= 0")
    if not p > 1.0:
        raise InvalidArgumentError("p must exceed 1")
    return 2.0 * x ** (p + 1.0) / (1.0 + x ** (p - 1.0))


def h_convexity_numerator(x, p: float):
    """Sign-determining factor ``4 u^2 + (3 + 6p - p^2) u + (p+1)^2`` with ``u = x^(p-1)``."""
    u = np.asarray(x, dtype=float) ** (p - 1.0)
    return 4.0 * u * u + (3.0 + 6.0 * p - p * p) * u + (p + 1.0) ** 2


def h_radial_laplacian(x, p: float):
    """``h''(x) + h'(x)/x`` in closed form.

    With ``u = x^(p-1)`` one finds
    ``h'' + h'/x = 2 x^(p-1) (4u^2 + (3 + 6p - p^2) u + (p+1)^2) / (1+u)^3``.
    """
    x = np.asarray(x, dtype=float)
    u = x ** (p - 1.0)
    return 2.0 * x ** (p - 1.0) * h_convexity_numerator(x, p) / (1.0 + u) ** 3


def h_radial_laplacian_fd(x, p: float, step: float = 1e-3):
    """``h'' + h'/x`` by sixth-order central differences (independent of the closed form)."""
    x = np.asarray(x, dtype=float)
    hs = step * np.maximum(x, 1e-3)
    f = lambda k: h_aux(x + k * hs, p)  # noqa: E731
    d1 = (-f(-3) + 9 * f(-2) - 45 * f(-1) + 45 * f(1) - 9 * f(2) + f(3)) / (60 * hs)
    d2 = (2 * f(-3) - 27 * f(-2) + 270 * f(-1) - 490 * f(0) + 270 * f(1) - 27 * f(2) + 2 * f(3)) / (180 * hs**2)
    return d2 + d1 / x


@dataclass
class ConvexityReport:
    """Outcome of the positivity scan of ``h'' + h'/x``."""

    p: float
    positive: bool
    min_numerator: float
    violation_interval: tuple[float, float] | None
    discriminant: float
    grid_points: int

    def to_json(self) -> dict:
        return asdict(self)


def h_convexity_scan(p: float, x_grid: Sequence[float] | np.ndarray | None = None) -> ConvexityReport:
    """Positivity of ``h'' + h'/x`` on a grid, with the exact violation interval.

    The numerator is quadratic in ``u = x^(p-1)``; it has positive roots
    (hence a sign change) iff ``3 + 6p - p^2 < 0`` and the discriminant is
    positive, which happens exactly for ``p > 5 + 4 sqrt(2)``. The interval
    is the preimage of the root interval, intersected with the grid range.
    """
    if not p > 1.0:
        raise InvalidArgumentError("p must exceed 1")
    grid = np.linspace(1e-4, 50.0, 200_001) if x_grid is None else np.asarray(x_grid, dtype=float)
    values = h_convexity_numerator(grid, p)
    b = 3.0 + 6.0 * p - p * p
    c = (p + 1.0) ** 2
    disc = b * b - 16.0 * c
    interval = None
    if b < 0 and disc > 0:
        u1 = (-b - math.sqrt(disc)) / 8.0
        u2 = (-b + math.sqrt(disc)) / 8.0
        x1, x2 = u1 ** (1.0 / (p - 1.0)), u2 ** (1.0 / (p - 1.0))
        lo, hi = max(x1, float(grid.min())), min(x2, float(grid.max()))
        if lo < hi:
            interval = (x1, x2)
    positive = bool(np.all(values > 0)) and interval is None
    return ConvexityReport(float(p), positive, float(values.min()), interval, float(disc), int(grid.size))
