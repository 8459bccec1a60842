"""Command-line front end.

Usage: ``dnls-phase <command> [options]``; run without arguments for help.

Parameters are merged with the precedence ``defaults < --config file <
command-line flags``. Unknown keys in a config file are rejected. Every
output file gets a JSON sidecar (``<output>.json``) holding the full
configuration, ``git describe`` of the source tree, seeds and hashes of the
cache files that were read.

Exit codes
----------
====  ==========================================================
0     success, all requested checks passed
1     unexpected library error
2     invalid argument, malformed grid or config (also usage errors)
3     no solution for a root-finding problem
4     requested accuracy not met
5     iteration budget exhausted without convergence
6     numeric overflow
7     inconsistency between independent estimators
8     insufficient data for a fit
9     unreliable Monte Carlo estimate
10    bisection bracket failure
11    a requested check ran but failed its tolerance
12    input/output failure
====  ==========================================================
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import hashlib
import json
import logging
import math
import os
import subprocess
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Sequence

import numpy as np

from .errors import DnlsPhaseError, InvalidArgumentError

log = logging.getLogger("dnls_phase")

EXIT_OK = 0
EXIT_CHECK_FAILED = 11
EXIT_IO = 12

COMMANDS = (
    "constants",
    "thermo-curve",
    "soliton",
    "phase-scan",
    "theta-c",
    "gff-verify",
    "gibbs-run",
    "xi-curve",
    "dnls-evolve",
)

GLOBAL_KEYS = ("output", "seed", "cache_dir", "jobs", "tol")


# ---------------------------------------------------------------------------
# Grid syntax
# ---------------------------------------------------------------------------


def parse_grid(text: str, flag: str = "grid") -> list[float]:
    """Parse ``lo:hi:count`` (linear, inclusive) or ``log:lo:hi:count`` (geometric).

    A single number is a one-point grid; comma-separated numbers are taken
    literally.
    """
    text = str(text).strip()
    try:
        if text.startswith("log:"):
            lo, hi, count = text[4:].split(":")
            lo_f, hi_f, n = float(lo), float(hi), int(count)
            if lo_f <= 0 or hi_f <= 0:
                raise ValueError("geometric grids need positive endpoints")
            if n < 1:
                raise ValueError("count must be positive")
            return [float(v) for v in np.geomspace(lo_f, hi_f, n)]
        if ":" in text:
            lo, hi, count = text.split(":")
            n = int(count)
            if n < 1:
                raise ValueError("count must be positive")
            return [float(v) for v in np.linspace(float(lo), float(hi), n)]
        return [float(v) for v in text.split(",")]
    except ValueError as exc:
        raise InvalidArgumentError(f"--{flag.replace('_', '-')}: malformed grid {text!r} ({exc})") from exc


# ---------------------------------------------------------------------------
# Configuration
# ---------------------------------------------------------------------------


# per-command parameters: name -> (type, default, help)
PARAMETERS: dict[str, dict[str, tuple[Callable, Any, str]]] = {
    "constants": {
        "d": (str, "3", "dimension(s): a number, a comma list or a grid"),
        "method": (str, "bessel", "quadrature route: bessel, qmc or lattice"),
        "points": (int, 2**16, "QMC points per scramble"),
    },
    "thermo-curve": {
        "d": (int, 3, "dimension"),
        "b": (str, "log:1e-4:0.25:100", "grid of b values"),
    },
    "soliton": {
        "a": (str, "100", "mass value(s)"),
        "p": (float, 3.0, "nonlinearity exponent"),
        "d": (int, 3, "dimension"),
        "box_m": (int, 6, "box half-width for the profile"),
        "residual_tol": (float, 1e-8, "Euler-Lagrange residual tolerance"),
        "minimal_energy": (bool, False, "also estimate I(a) over the box schedule"),
        "threshold": (bool, False, "also compute the excitation threshold"),
    },
    "phase-scan": {
        "d": (int, 3, "dimension"),
        "p": (float, 3.0, "nonlinearity exponent"),
        "theta": (str, "0.05:5:64", "theta grid"),
        "nu": (str, "0.1:50:64", "nu grid"),
        "boundary_tol": (float, 1e-6, "relative width of the near-boundary band"),
    },
    "theta-c": {
        "d": (int, 3, "dimension"),
        "p": (float, 3.0, "nonlinearity exponent"),
        "nu": (str, "log:12:1e5:12", "nu grid (values must exceed R_p)"),
    },
    "gff-verify": {
        "d": (int, 3, "dimension"),
        "n": (int, 8, "torus side"),
        "y": (float, 0.5, "mass parameter for the mean check"),
        "b": (float, 0.1, "target site mass for the concentration report"),
        "eps": (float, 0.05, "concentration window half-width"),
        "samples": (int, 2000, "draws per report"),
    },
    "gibbs-run": {
        "d": (int, 3, "dimension"),
        "n": (int, 4, "torus side"),
        "theta": (float, 0.1, "inverse temperature"),
        "nu": (float, 0.5, "nonlinearity strength"),
        "p": (float, 3.0, "nonlinearity exponent"),
        "steps": (int, 20000, "production sweeps"),
        "burn_in": (int, 20000, "burn-in sweeps"),
        "thin": (int, 20, "record every this many sweeps"),
        "init": (str, "zero", "initial field: zero, random or spike"),
        "checkpoint": (str, "", "path for the final chain checkpoint"),
    },
    "xi-curve": {
        "p_min": (float, 1.5, "smallest p"),
        "p_max": (float, 6.0, "largest p"),
        "count": (int, 91, "number of p values"),
        "t": (float, 0.0, "shift t"),
    },
    "dnls-evolve": {
        "a": (float, 100.0, "soliton mass"),
        "p": (float, 3.0, "nonlinearity exponent"),
        "d": (int, 3, "dimension"),
        "box_m": (int, 4, "box half-width of the ground state"),
        "torus_n": (int, 13, "torus side for the evolution"),
        "dt": (float, 1e-3, "time step"),
        "T": (float, 1.0, "final time"),
        "rotating": (bool, True, "evolve in the frame rotating with the soliton frequency"),
    },
}

GLOBAL_DEFAULTS = {"output": "", "seed": 0, "cache_dir": "", "jobs": 1, "tol": None}


@dataclass
class RunConfig:
    """Fully merged configuration of one run."""

    command: str
    parameters: dict = field(default_factory=dict)
    output: str = ""
    seed: int = 0
    cache_dir: str = ""
    jobs: int = 1
    tol: float | None = None
    provenance: dict = field(default_factory=dict)

    def to_json(self) -> str:
        return json.dumps(dataclasses.asdict(self), sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "RunConfig":
        return cls(**json.loads(text))


def _bool(text) -> bool:
    if isinstance(text, bool):
        return text
    value = str(text).strip().lower()
    if value in ("1", "true", "yes", "on"):
        return True
    if value in ("0", "false", "no", "off"):
        return False
    raise InvalidArgumentError(f"not a boolean: {text!r}")


def _coerce(command: str, key: str, value):
    kind = PARAMETERS[command][key][0]
    try:
        if kind is bool:
            return _bool(value)
        return kind(value)
    except (TypeError, ValueError) as exc:
        raise InvalidArgumentError(f"--{key.replace('_', '-')}: cannot interpret {value!r}") from exc


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="dnls-phase",
        description="Free-field thermodynamics, discrete solitons and phase diagrams of the focusing DNLS Gibbs measure.",
        epilog="Exit codes: 0 ok, 2 invalid input, 3-10 numerical failures, 11 failed check, 12 I/O error.",
    )
    sub = parser.add_subparsers(dest="command", metavar="command")
    for command in COMMANDS:
        p = sub.add_parser(command, help=f"run the {command} task", argument_default=argparse.SUPPRESS)
        p.add_argument("--config", help="JSON file with parameters (flags override it)")
        p.add_argument("--output", "-o", help="output file (CSV or JSON by command)")
        p.add_argument("--seed", type=int, help="random seed")
        p.add_argument("--cache-dir", dest="cache_dir", help="cache directory (overrides the environment variable)")
        p.add_argument("--jobs", type=int, help="worker threads for parallel sections")
        p.add_argument("--tol", type=float, help="tolerance override for the command's main check")
        for key, (kind, default, text) in PARAMETERS[command].items():
            flag = "--" + key.replace("_", "-")
            p.add_argument(flag, dest=key, help=f"{text} (default: {default})")
    return parser


def parse_config(argv: Sequence[str]) -> RunConfig:
    """Merge defaults, an optional JSON config file and flags into a validated ``RunConfig``."""
    parser = build_parser()
    ns = vars(parser.parse_args(list(argv)))
    command = ns.pop("command")
    if command is None:
        raise InvalidArgumentError("no command given")
    merged: dict[str, Any] = {k: v for k, (_, v, _) in PARAMETERS[command].items()}
    globals_: dict[str, Any] = dict(GLOBAL_DEFAULTS)
    provenance = {k: "default" for k in list(merged) + list(globals_)}
    config_path = ns.pop("config", None)
    if config_path:
        try:
            data = json.loads(Path(config_path).read_text())
        except OSError as exc:
            raise InvalidArgumentError(f"--config: cannot read {config_path}: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise InvalidArgumentError(f"--config: malformed JSON in {config_path}: {exc}") from exc
        if not isinstance(data, dict):
            raise InvalidArgumentError("--config: top level must be an object")
        params = data.pop("parameters", {})
        data.pop("command", None)
        flat = dict(params, **data)
        for key, value in flat.items():
            if key in PARAMETERS[command]:
                merged[key] = _coerce(command, key, value)
            elif key in GLOBAL_KEYS:
                globals_[key] = value
            else:
                raise InvalidArgumentError(f"--config: unknown key {key!r} for command {command}")
            provenance[key] = "config"
    for key, value in ns.items():
        if key in PARAMETERS[command]:
            if provenance.get(key) == "config":
                log.info("flag --%s overrides the config file value", key.replace("_", "-"))
            merged[key] = _coerce(command, key, value)
        else:
            if provenance.get(key) == "config":
                log.info("flag --%s overrides the config file value", key.replace("_", "-"))
            globals_[key] = value
        provenance[key] = "flag"
    config = RunConfig(
        command=command,
        parameters=merged,
        output=str(globals_["output"] or ""),
        seed=int(globals_["seed"]),
        cache_dir=str(globals_["cache_dir"] or ""),
        jobs=int(globals_["jobs"]),
        tol=None if globals_["tol"] is None else float(globals_["tol"]),
        provenance=provenance,
    )
    validate(config)
    return config


def _positive(name: str, value: float) -> None:
    if not (isinstance(value, (int, float)) and math.isfinite(value) and value > 0):
        raise InvalidArgumentError(f"--{name.replace('_', '-')}: must be positive and finite (got {value})")


def validate(config: RunConfig) -> None:
    """Check every numeric parameter against the owning module's preconditions."""
    prm = config.parameters
    if config.seed < 0:
        raise InvalidArgumentError("--seed: must be nonnegative")
    if config.jobs < 1:
        raise InvalidArgumentError("--jobs: must be at least 1")
    if config.tol is not None:
        _positive("tol", config.tol)
    if "p" in prm and not prm["p"] > 1.0:
        raise InvalidArgumentError(f"--p: the nonlinearity exponent must exceed 1 (got {prm['p']})")
    if "d" in prm and config.command != "constants" and int(prm["d"]) < 3:
        raise InvalidArgumentError(f"--d: dimension must be at least 3 (got {prm['d']})")
    cmd = config.command
    if cmd == "constants":
        for d in parse_grid(prm["d"], "d"):
            if d != int(d) or d < 3:
                raise InvalidArgumentError(f"--d: C_d is finite only for integer d >= 3 (got {d})")
        if prm["method"] not in ("bessel", "qmc", "lattice"):
            raise InvalidArgumentError(f"--method: unknown quadrature {prm['method']!r}")
    elif cmd == "thermo-curve":
        for b in parse_grid(prm["b"], "b"):
            _positive("b", b)
    elif cmd == "soliton":
        for a in parse_grid(prm["a"], "a"):
            _positive("a", a)
        if prm["box_m"] < 2:
            raise InvalidArgumentError("--box-m: must be at least 2")
    elif cmd == "phase-scan":
        for t in parse_grid(prm["theta"], "theta"):
            _positive("theta", t)
        for v in parse_grid(prm["nu"], "nu"):
            _positive("nu", v)
    elif cmd == "theta-c":
        for v in parse_grid(prm["nu"], "nu"):
            _positive("nu", v)
    elif cmd == "gff-verify":
        if prm["n"] < 2:
            raise InvalidArgumentError("--n: torus side must be at least 2")
        if prm["y"] < 0:
            raise InvalidArgumentError("--y: must be nonnegative")
        _positive("b", prm["b"])
        _positive("eps", prm["eps"])
        _positive("samples", prm["samples"])
    elif cmd == "gibbs-run":
        _positive("theta", prm["theta"])
        if not prm["nu"] >= 0:
            raise InvalidArgumentError("--nu: must be nonnegative")
        if prm["n"] < 2:
            raise InvalidArgumentError("--n: torus side must be at least 2")
        for key in ("steps", "thin"):
            _positive(key, prm[key])
        if prm["burn_in"] < 0:
            raise InvalidArgumentError("--burn-in: must be nonnegative")
        if prm["init"] not in ("zero", "random", "spike"):
            raise InvalidArgumentError(f"--init: unknown policy {prm['init']!r}")
    elif cmd == "xi-curve":
        if not 1.0 < prm["p_min"] <= prm["p_max"]:
            raise InvalidArgumentError("--p-min/--p-max: need 1 < p-min <= p-max")
        _positive("count", prm["count"])
        if prm["t"] < 0:
            raise InvalidArgumentError("--t: must be nonnegative")
    elif cmd == "dnls-evolve":
        for key in ("a", "dt", "T"):
            _positive(key, prm[key])
        if prm["torus_n"] < 2 * prm["box_m"] + 3:
            raise InvalidArgumentError("--torus-n: must leave a buffer around the box")


# ---------------------------------------------------------------------------
# Provenance
# ---------------------------------------------------------------------------


def git_describe() -> str:
    try:
        out = subprocess.run(
            ["git", "describe", "--always", "--dirty", "--tags"],
            cwd=Path(__file__).resolve().parent,
            capture_output=True,
            text=True,
            timeout=10,
        )
        return out.stdout.strip() or "unknown"
    except (OSError, subprocess.SubprocessError):
        return "unknown"


def cache_hashes(cache_dir: Path) -> dict[str, str]:
    hashes = {}
    if cache_dir.is_dir():
        for path in sorted(cache_dir.glob("*.csv")):
            hashes[path.name] = hashlib.sha256(path.read_bytes()).hexdigest()
    return hashes


def write_sidecar(path: Path, config: RunConfig, extra: dict | None = None) -> Path:
    from .free_field_thermo import default_cache_dir

    sidecar = path.with_suffix(path.suffix + ".json") if path.suffix != ".json" else path.with_suffix(".meta.json")
    payload = {
        "config": json.loads(config.to_json()),
        "git_describe": git_describe(),
        "seeds": [config.seed],
        "cache_hashes": cache_hashes(default_cache_dir()),
    }
    if extra:
        payload.update(extra)
    sidecar.write_text(json.dumps(payload, indent=2, default=str))
    return sidecar


def _write_csv(path: str, header: Sequence[str], rows: Sequence[Sequence]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in row])


def _emit_rows(config: RunConfig, header: Sequence[str], rows: Sequence[Sequence], extra: dict | None = None) -> None:
    if config.output:
        _write_csv(config.output, header, rows)
        write_sidecar(Path(config.output), config, extra)
    else:
        writer = csv.writer(sys.stdout, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in row])


def _emit_json(config: RunConfig, payload: dict) -> None:
    text = json.dumps(payload, indent=2, default=float)
    if config.output:
        Path(config.output).write_text(text)
        write_sidecar(Path(config.output), config)
    else:
        print(text)


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------


def _thermo(d: int, config: RunConfig):
    from .free_field_thermo import QuadratureCache, ThermoFunctions, default_cache_dir

    return ThermoFunctions(d, cache=QuadratureCache(default_cache_dir() / "quadrature.csv"))


def cmd_constants(config: RunConfig) -> int:
    from .free_field_thermo import QuadratureSpec, default_cache_dir, integrate_K_prime

    prm = config.parameters
    quad = QuadratureSpec(method=prm["method"], points=prm["points"], seed=config.seed)
    rows = []
    for d in parse_grid(prm["d"], "d"):
        res = integrate_K_prime(0.0, int(d), quad)
        rows.append((int(d), res.value, res.error))
        print(f"C_{int(d)} = {res.value:.7f} +/- {res.error:.1e}", file=sys.stderr)
    print(f"cache directory: {default_cache_dir()}", file=sys.stderr)
    _emit_rows(config, ("d", "C_d", "error"), rows)
    return EXIT_OK


def cmd_thermo_curve(config: RunConfig) -> int:
    prm = config.parameters
    thermo = _thermo(prm["d"], config)
    rows = []
    for b in parse_grid(prm["b"], "b"):
        w_hat = thermo.W_hat(b) if b <= thermo.C_d else math.nan
        rows.append((b, thermo.L(b), thermo.W(b), w_hat))
    _emit_rows(config, ("b", "L", "W", "W_hat"), rows, {"C_d": thermo.C_d, "K0": thermo.K0})
    return EXIT_OK


def cmd_soliton(config: RunConfig) -> int:
    from . import soliton_solver as ss

    prm = config.parameters
    rows = []
    extra: dict = {}
    status = EXIT_OK
    if prm["threshold"]:
        th = ss.excitation_threshold_R_p(prm["p"], prm["d"])
        extra["threshold"] = th._asdict()
        print(f"R_p = {th.value:.9g} (quotient {th.quotient_estimate:.9g}, bisection {th.bisection_estimate:.9g})",
              file=sys.stderr)
    for a in parse_grid(prm["a"], "a"):
        res = ss.dirichlet_minimize(a, prm["p"], prm["box_m"], prm["d"], tol=prm["residual_tol"])
        try:
            res.decay = ss.decay_fit(res.profile)
        except DnlsPhaseError:
            res.decay = None
        I_value = math.nan
        if prm["minimal_energy"]:
            I_value = ss.minimal_energy_I(a, prm["p"], prm["d"]).value
        rows.append((a, res.energy, res.omega, res.residual, res.profile.max_site_fraction(), I_value,
                     res.decay.r_squared if res.decay else math.nan))
        if config.output and len(rows) == 1:
            profile_path = Path(config.output).with_suffix(".profile.csv")
            ss.export_profile(res, profile_path)
        if res.residual > prm["residual_tol"]:
            status = EXIT_CHECK_FAILED
    _emit_rows(config, ("a", "energy", "omega", "residual", "max_fraction", "I", "decay_r2"), rows, extra)
    return status


def cmd_phase_scan(config: RunConfig) -> int:
    from . import phase_diagram as pdg

    prm = config.parameters
    model = pdg.default_model(prm["p"], prm["d"])
    thetas = parse_grid(prm["theta"], "theta")
    nus = parse_grid(prm["nu"], "nu")
    rows = model.scan(thetas, nus, jobs=config.jobs, boundary_tol=prm["boundary_tol"])
    violations = pdg.staircase_violations(rows)
    low_rows_bad = sum(1 for r in rows if r["nu"] <= model.R_p and r["region"] == "solitonic")
    table = [[r[k] for k in pdg.SCAN_HEADER] for r in rows]
    _emit_rows(config, pdg.SCAN_HEADER, table,
               {"R_p": model.R_p, "C_d": model.C_d, "staircase_violations": violations})
    print(f"{len(rows)} points, staircase violations: {violations}, solitonic rows with nu <= R_p: {low_rows_bad}",
          file=sys.stderr)
    return EXIT_OK if violations == 0 and low_rows_bad == 0 else EXIT_CHECK_FAILED


def cmd_theta_c(config: RunConfig) -> int:
    from . import phase_diagram as pdg

    prm = config.parameters
    model = pdg.default_model(prm["p"], prm["d"])
    tol = config.tol or 1e-8
    rows = []
    for nu in parse_grid(prm["nu"], "nu"):
        if nu <= model.R_p:
            raise InvalidArgumentError(f"--nu: {nu} does not exceed R_p = {model.R_p}")
        tc = model.theta_c(nu, tol=tol)
        rows.append((nu, tc, model.theta_cap(nu), tc * 2.0 / (prm["p"] + 1.0) * nu ** ((prm["p"] - 1.0) / 2.0)))
    _emit_rows(config, ("nu", "theta_c", "cap", "scaled"), rows, {"R_p": model.R_p, "xi0": model.xi0})
    return EXIT_OK


def cmd_gff_verify(config: RunConfig) -> int:
    from . import gff_sampler as gs
    from . import lattice_spectrum as ls

    prm = config.parameters
    spec = ls.TorusSpec(prm["d"], prm["n"])
    thermo = _thermo(prm["d"], config)
    masses = gs.mass_sample_expsum(spec, prm["y"], config.seed, prm["samples"])
    stat = gs.MassStatistic.from_masses(masses, spec.N)
    expected = gs.expected_mass(spec, prm["y"])
    z = (stat.mean - expected) / stat.standard_error if stat.standard_error > 0 else 0.0
    ks_p = gs.ks_mass_comparison(spec, prm["y"], config.seed, prm["samples"])
    conc = gs.concentration_report(spec, prm["b"], prm["eps"], prm["samples"], config.seed, thermo=thermo)
    mx = gs.max_exceedance_report(spec, min(prm["b"], thermo.C_d), prm["samples"], config.seed, thermo=thermo)
    checks = {
        "mean_within_5_se": abs(z) <= 5.0,
        "ks_p_above_0.01": ks_p > 0.01,
        "concentration_beats_bound": conc.frequency >= conc.chebyshev_bound - 3 * conc.standard_error,
        "max_exceedance_below_0.05": mx.frequency <= 0.05,
    }
    payload = {
        "mean": dataclasses.asdict(stat), "expected": expected, "z": z, "ks_pvalue": ks_p,
        "concentration": conc.to_json(), "max_exceedance": mx.to_json(), "checks": checks,
    }
    _emit_json(config, payload)
    return EXIT_OK if all(checks.values()) else EXIT_CHECK_FAILED


def cmd_gibbs_run(config: RunConfig) -> int:
    from . import gibbs_sampler as gb
    from . import lattice_spectrum as ls

    prm = config.parameters
    params = gb.ModelParams(prm["theta"], prm["nu"], prm["p"], ls.TorusSpec(prm["d"], prm["n"]))
    report = gb.metropolis_chain(
        params, prm["steps"], seed=config.seed, burn_in=prm["burn_in"], thin=prm["thin"], init=prm["init"]
    )
    if prm["checkpoint"]:
        gb.save_checkpoint(report.state, prm["checkpoint"])
    if config.output:
        gb.write_stream(report, config.output)
        write_sidecar(Path(config.output).with_suffix(".run"), config, {"chain": report.header()})
    else:
        writer = csv.writer(sys.stdout, lineterminator="\n")
        writer.writerow(gb.STREAM_HEADER)
        for rec in report.records:
            writer.writerow(rec.row())
    print(f"acceptance {report.acceptance:.3f}, mean max-site fraction {report.mean('max_frac'):.4f}",
          file=sys.stderr)
    return EXIT_OK if report.warning is None else EXIT_CHECK_FAILED


def cmd_xi_curve(config: RunConfig) -> int:
    from . import phase_diagram as pdg

    prm = config.parameters
    rows = []
    for p in np.linspace(prm["p_min"], prm["p_max"], prm["count"]):
        rows.append((float(p), pdg.xi(float(p), prm["t"]), pdg.xi_argmin(float(p), prm["t"])))
    _emit_rows(config, ("p", "xi", "a_argmin"), rows)
    return EXIT_OK


def cmd_dnls_evolve(config: RunConfig) -> int:
    from . import soliton_solver as ss

    prm = config.parameters
    ground = ss.dirichlet_minimize(prm["a"], prm["p"], prm["box_m"], prm["d"])
    psi0 = ss.embed_in_torus(ground.profile, prm["torus_n"])
    frame = ground.omega if prm["rotating"] else 0.0
    traj = ss.evolve_dnls(psi0, prm["p"], dt=prm["dt"], T=prm["T"], frame_omega=frame)
    modulus_drift = max(float(np.max(np.abs(np.abs(s) - np.abs(psi0)))) for s in traj.samples)
    tol = config.tol or 1e-6
    payload = {
        "omega": ground.omega, "residual": ground.residual, "mass_drift": traj.mass_drift,
        "energy_drift": traj.energy_drift, "modulus_drift": modulus_drift, "tolerance": tol,
    }
    _emit_json(config, payload)
    return EXIT_OK if modulus_drift < tol else EXIT_CHECK_FAILED


HANDLERS: dict[str, Callable[[RunConfig], int]] = {
    "constants": cmd_constants,
    "thermo-curve": cmd_thermo_curve,
    "soliton": cmd_soliton,
    "phase-scan": cmd_phase_scan,
    "theta-c": cmd_theta_c,
    "gff-verify": cmd_gff_verify,
    "gibbs-run": cmd_gibbs_run,
    "xi-curve": cmd_xi_curve,
    "dnls-evolve": cmd_dnls_evolve,
}


def run(config: RunConfig) -> int:
    """Dispatch a validated configuration; returns the process exit status."""
    from .free_field_thermo import CACHE_ENV

    if config.cache_dir:
        os.environ[CACHE_ENV] = config.cache_dir
    return HANDLERS[config.command](config)


def main(argv: Sequence[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(message)s", stream=sys.stderr)
    if not argv:
        build_parser().print_help()
        return EXIT_OK
    try:
        config = parse_config(argv)
        return run(config)
    except SystemExit as exc:  # argparse usage errors and --help
        return int(exc.code or 0)
    except DnlsPhaseError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
