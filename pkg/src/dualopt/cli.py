"""Batch command line: ``dualopt {solve,stability,sweep,verify,check-derivatives}``.

Exit codes: 0 ok, 1 verification failed, 2 configuration error,
3 divergence, 4 KKT assumption violated.  Every failure writes one JSON line
``{"error": ..., "reason": ...}`` to stderr.
"""

from __future__ import annotations

import argparse
import configparser
import csv
import json
import math
import sys
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import exprcore, harness, problems, solvers, stability, suites
from .problems import KKTGuess, ProblemSpec
from .solvers import HyperParams

EXIT_OK, EXIT_VERIFY, EXIT_CONFIG, EXIT_DIVERGED, EXIT_ASSUMPTION = 0, 1, 2, 3, 4


class ConfigError(ValueError):
    pass


class CliFailure(Exception):
    def __init__(self, code: int, kind: str, reason: str):
        super().__init__(reason)
        self.code = code
        self.kind = kind
        self.reason = reason


# --- serialization ------------------------------------------------------------


def fmt(v) -> str:
    """17 significant digits for floats; ``inf``/``nan`` spelled out."""
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    v = float(v)
    if math.isnan(v):
        return "nan"
    if math.isinf(v):
        return "inf" if v > 0 else "-inf"
    return format(v, ".17g")


def to_json(obj, indent: int = 2, _level: int = 0) -> str:
    """Deterministic JSON with 17-digit floats; non-finite floats become strings."""
    pad = " " * (indent * (_level + 1))
    end = " " * (indent * _level)
    if obj is None:
        return "null"
    if isinstance(obj, (bool, np.bool_)):
        return "true" if obj else "false"
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return format(v, ".17g") if math.isfinite(v) else json.dumps(fmt(v))
    if isinstance(obj, str):
        return json.dumps(obj)
    if isinstance(obj, np.ndarray):
        obj = obj.tolist()
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f"{pad}{json.dumps(str(k))}: {to_json(v, indent, _level + 1)}" for k, v in obj.items()]
        return "{\n" + ",\n".join(items) + "\n" + end + "}"
    if isinstance(obj, (list, tuple)):
        if not obj:
            return "[]"
        if all(not isinstance(v, (dict, list, tuple, np.ndarray)) for v in obj):
            return "[" + ", ".join(to_json(v, indent, _level + 1) for v in obj) + "]"
        items = [pad + to_json(v, indent, _level + 1) for v in obj]
        return "[\n" + ",\n".join(items) + "\n" + end + "]"
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def _write(path: Path, text: str):
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text, encoding="utf-8")


# --- configuration ------------------------------------------------------------


def load_config(path: Optional[str]) -> configparser.ConfigParser:
    cp = configparser.ConfigParser(interpolation=None)
    if path is None:
        return cp
    p = Path(path)
    if not p.is_file():
        raise ConfigError(f"config file not found: {path}")
    try:
        cp.read_string(p.read_text(encoding="utf-8"), source=str(p))
    except configparser.Error as e:
        raise ConfigError(f"malformed config: {e}".replace("\n", " ")) from None
    return cp


def _section(cp, name) -> dict:
    return dict(cp[name]) if cp.has_section(name) else {}


def _real(sec: dict, key: str, default=None) -> Optional[float]:
    if key not in sec:
        return default
    try:
        return float(sec[key])
    except ValueError:
        raise ConfigError(f"{key} must be a real number, got {sec[key]!r}") from None


def _int(sec: dict, key: str, default: int) -> int:
    if key not in sec:
        return default
    try:
        return int(sec[key])
    except ValueError:
        raise ConfigError(f"{key} must be an integer, got {sec[key]!r}") from None


def _vector(sec: dict, key: str, length: int, default=None) -> Optional[np.ndarray]:
    if key not in sec:
        return default
    raw = [s.strip() for s in sec[key].split(";") if s.strip()]
    try:
        v = np.array([float(s) for s in raw], dtype=float)
    except ValueError:
        raise ConfigError(f"{key} must be a ';'-separated list of reals, got {sec[key]!r}") from None
    if v.shape[0] != length:
        raise ConfigError(f"{key} has {v.shape[0]} entries, expected {length}")
    return v


def problem_from(cp) -> ProblemSpec:
    sec = _section(cp, "problem")
    if not sec:
        raise ConfigError("missing [problem] section")
    spec = problems.from_config(sec)
    if "f" in sec and "kkt_x" in sec:
        guess = KKTGuess(_vector(sec, "kkt_x", spec.d), _vector(sec, "kkt_lambda", spec.m, np.zeros(spec.m)),
                         _vector(sec, "kkt_mu", spec.n, np.zeros(spec.n)), "from config")
        spec = ProblemSpec(spec.name, spec.d, spec.objective, spec.ineq, spec.eq, (guess,), spec.expressions)
    return spec


def hyperparams_from(sec: dict, base: Optional[dict] = None) -> HyperParams:
    merged = dict(base or {})
    merged.update(sec)
    eta = _real(merged, "eta", 0.1)
    c = _real(merged, "c", 1.0)
    return HyperParams(
        eta_x=_real(merged, "eta_x", eta),
        eta_dual=_real(merged, "eta_dual", eta),
        c=c,
        omega=_real(merged, "omega", c),
        first_step=merged.get("first_step", "plain"),
    )


def _out_path(args, cp, key: str, default: str) -> Path:
    out = _section(cp, "output")
    base = Path(args.out or out.get("dir", "."))
    return base / out.get(key, default)


# --- commands -----------------------------------------------------------------


TRAJECTORY_FIXED = ("f", "norm_h_inf", "max_g_plus", "lagrangian", "kkt_residual")


def trajectory_header(p: ProblemSpec) -> list[str]:
    return (["t"] + [f"x_{i}" for i in range(1, p.d + 1)] + [f"lambda_{i}" for i in range(1, p.m + 1)]
            + [f"mu_{j}" for j in range(1, p.n + 1)] + list(TRAJECTORY_FIXED))


def write_trajectory(path: Path, p: ProblemSpec, traj: solvers.Trajectory, footer: Optional[str] = None):
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(trajectory_header(p))
        for s, m in zip(traj.states, traj.metrics):
            w.writerow([s.t] + [fmt(v) for v in s.vector()]
                       + [fmt(getattr(m, k)) for k in TRAJECTORY_FIXED])
        if footer:
            fh.write(f"# {footer}\n")


def cmd_solve(args, cp) -> int:
    p = problem_from(cp)
    sec = _section(cp, "solver")
    rule = sec.get("rule", "al_gda")
    hp = hyperparams_from(sec)
    solvers.validate(p, rule, hp)
    init = solvers.initial_state(p, _vector(sec, "x0", p.d, np.zeros(p.d)),
                                 _vector(sec, "lambda0", p.m), _vector(sec, "mu0", p.n))
    steps = _int(sec, "steps", 1000)
    stop_tol = _real(sec, "stop_tol", 0.0)
    path = _out_path(args, cp, "trajectory", "trajectory.csv")
    try:
        traj = solvers.run(p, rule, init, hp, steps, stop_tol)
    except solvers.DivergenceDetected as e:
        write_trajectory(path, p, e.trajectory, f"diverged at t={e.t}")
        raise CliFailure(EXIT_DIVERGED, "divergence", f"iterate diverged at t={e.t}") from None
    write_trajectory(path, p, traj)
    final = f"{traj.metrics[-1].kkt_residual:.3e}" if traj.metrics else "n/a"
    print(f"{p.name} {rule}: {max(len(traj) - 1, 0)} steps, stop={traj.stop_reason}, "
          f"final kkt_residual={final} -> {path}")
    return EXIT_OK


def _stability_point(p: ProblemSpec, sec: dict) -> Optional[KKTGuess]:
    if "x" not in sec:
        return None
    return KKTGuess(_vector(sec, "x", p.d), _vector(sec, "lambda", p.m, np.zeros(p.m)),
                    _vector(sec, "mu", p.n, np.zeros(p.n)), "from config")


def cmd_stability(args, cp) -> int:
    p = problem_from(cp)
    sec = _section(cp, "stability")
    hp = hyperparams_from(sec, _section(cp, "solver"))
    if not p.known_kkt and "x" not in sec:
        raise ConfigError("stability needs a KKT point: catalog problem, kkt_x in [problem] or x in [stability]")
    guess = _stability_point(p, sec)
    an = stability.analyze(p, hp, guess, tol_act=_real(sec, "tol_act", stability.TOL_ACT))
    cert = an.certificate
    doc = {
        "problem": p.name,
        "hyperparams": {"eta_x": hp.eta_x, "eta_dual": hp.eta_dual, "c": hp.c, "omega": hp.omega},
        "certificate": {
            "x": cert.x, "lambda": cert.lam, "mu": cert.mu,
            "stationarity": cert.stationarity, "norm_h": cert.norm_h, "max_g_plus": cert.max_g_plus,
            "complementarity": cert.complementarity, "active": [i + 1 for i in cert.active],
            "strict_margin": cert.strict_margin, "licq_min_singular": cert.licq_min_singular,
            "sosc_min_eig": cert.sosc_min_eig,
        },
        "assumptions": an.assumptions,
        "convexification_threshold": stability.convexification_threshold(an.partition),
        "J_AL": an.al.as_dict(),
        "J_OG": an.og.as_dict(),
        "thm35_gap": an.relation["gap"] if an.relation else None,
        "spectral_relation": an.relation,
    }
    path = _out_path(args, cp, "stability", "stability.json")
    _write(path, to_json(doc) + "\n")
    gap = "n/a (omega != c)" if an.relation is None else f"{an.relation['gap']:.3e}"
    print(f"{p.name}: rho(J_AL)={an.al.spectral_radius:.10g} rho(J_OG)={an.og.spectral_radius:.10g} "
          f"gap={gap} -> {path}")
    return EXIT_OK


SWEEP_COLUMNS = ("omega", "rho", "max_abs_imag", "kappa", "is_lssp")


def cmd_sweep(args, cp) -> int:
    p = problem_from(cp)
    sec = _section(cp, "sweep")
    if "omegas" not in sec:
        raise ConfigError("[sweep] needs omegas")
    try:
        omegas = [float(s) for s in sec["omegas"].split(";") if s.strip()]
    except ValueError:
        raise ConfigError(f"omegas must be ';'-separated reals, got {sec['omegas']!r}") from None
    hp = hyperparams_from({k: v for k, v in sec.items() if k in ("eta", "eta_x", "eta_dual")})
    paired = _int(sec, "paired_steps", 0)
    init = None
    if paired > 0:
        init = solvers.initial_state(p, _vector(sec, "x0", p.d, np.zeros(p.d)),
                                     _vector(sec, "lambda0", p.m), _vector(sec, "mu0", p.n))
    rows = harness.omega_sweep(p, None, hp, omegas, init, paired)
    path = _out_path(args, cp, "sweep", "sweep.csv")
    path.parent.mkdir(parents=True, exist_ok=True)
    cols = list(SWEEP_COLUMNS) + (["sign_changes"] if paired > 0 else [])
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(cols)
        for r in rows:
            d = r.as_dict()
            w.writerow([fmt(d[c]) for c in cols])
    print(f"{p.name}: {len(rows)} sweep rows -> {path}")
    return EXIT_OK


def cmd_verify(args, cp) -> int:
    names = None
    if args.suite:
        names = [s.strip() for s in args.suite.split(",") if s.strip()]
        unknown = [n for n in names if n not in suites.SUITES]
        if unknown:
            raise ConfigError(f"unknown suite(s): {', '.join(unknown)}; known: {', '.join(suites.SUITES)}")
    results = suites.run_suites(names, seed=args.seed, faults=args.inject_fault or ())
    width = max(len(r.name) for r in results)
    for r in results:
        print(f"{r.name:<{width}}  {'PASS' if r.passed else 'FAIL'}  {r.summary}")
    failed = [r.name for r in results if not r.passed]
    print(f"{len(results) - len(failed)}/{len(results)} suites passed")
    doc = {"seed": args.seed, "passed": not failed, "failed": failed,
           "suites": [r.as_dict() for r in results]}
    _write(_out_path(args, cp, "verify", "verify.json"), to_json(doc) + "\n")
    return EXIT_OK if not failed else EXIT_VERIFY


def cmd_check_derivatives(args, cp) -> int:
    p = problem_from(cp)
    sec = _section(cp, "derivatives")
    step = _real(sec, "fd_step", 1e-5)
    tol = _real(sec, "tol", 1e-6)
    if "x" in sec:
        points = [_vector(sec, "x", p.d)]
    else:
        rng = np.random.default_rng(args.seed)
        points = [rng.uniform(-2, 2, p.d) for _ in range(_int(sec, "points", 10))]
    reports = [problems.check_derivatives(p, x, step) for x in points]
    ok = all(r.passed(tol) for r in reports)
    doc = {"problem": p.name, "tol": tol, "passed": ok, "reports": [r.as_dict() for r in reports]}
    path = _out_path(args, cp, "derivatives", "derivatives.json")
    _write(path, to_json(doc) + "\n")
    worst = max(max(r.max_grad_error, r.max_hess_error) for r in reports)
    print(f"{p.name}: {len(reports)} point(s), max relative error {worst:.3e} -> {path}")
    return EXIT_OK if ok else EXIT_VERIFY


COMMANDS = {
    "solve": cmd_solve,
    "stability": cmd_stability,
    "sweep": cmd_sweep,
    "verify": cmd_verify,
    "check-derivatives": cmd_check_derivatives,
}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigError(message)


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="dualopt", description=__doc__.splitlines()[0])
    ap.add_argument("command", choices=list(COMMANDS))
    ap.add_argument("--config", metavar="PATH", help="INI experiment file")
    ap.add_argument("--out", metavar="DIR", help="output directory (default: [output] dir or .)")
    ap.add_argument("--seed", type=int, default=0, help="seed for randomized suites")
    ap.add_argument("--suite", metavar="NAME", help="comma-separated verify suites")
    ap.add_argument("--inject-fault", action="append", choices=["jacobian"], help=argparse.SUPPRESS)
    return ap


def _fail(code: int, kind: str, reason: str) -> int:
    print(json.dumps({"error": kind, "reason": reason}), file=sys.stderr)
    return code


def main(argv: Optional[Sequence[str]] = None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except ConfigError as e:
        return _fail(EXIT_CONFIG, "usage", str(e))
    try:
        cp = load_config(args.config)
        if args.command != "verify" and args.config is None:
            raise ConfigError(f"{args.command} needs --config")
        return COMMANDS[args.command](args, cp)
    except CliFailure as e:
        return _fail(e.code, e.kind, e.reason)
    except stability.StabilityError as e:
        return _fail(EXIT_ASSUMPTION, "assumption", e.reason)
    except harness.HarnessError as e:
        return _fail(EXIT_ASSUMPTION, "assumption", str(e))
    except (ConfigError, problems.ProblemError, exprcore.ExprError, solvers.HyperParamError) as e:
        return _fail(EXIT_CONFIG, "config", str(e))
    except ValueError as e:
        return _fail(EXIT_CONFIG, "config", str(e))
    except OSError as e:
        return _fail(EXIT_CONFIG, "io", str(e))


if __name__ == "__main__":
    sys.exit(main())
