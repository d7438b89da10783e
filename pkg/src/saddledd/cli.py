"""Batch driver: ``run``, ``verify``, ``sweep``, ``gen`` and ``spectrum``.

Configuration comes, in increasing priority, from the defaults of
:class:`RunConfig`, a JSON file (``--config``), environment variables
``SADDLEDD_<KEY>`` and command-line flags.

Exit codes: 0 success, 1 a check failed, 2 configuration error,
3 numerical failure (non-convergence or factorization breakdown).
"""
import argparse
import csv
import json
import logging
import os
import sys
import time
from dataclasses import asdict, dataclass, field, fields
from typing import List, Optional

import numpy as np

log = logging.getLogger("saddledd")

EXIT_OK, EXIT_CHECK, EXIT_CONFIG, EXIT_NUMERIC = 0, 1, 2, 3
ENV_PREFIX = "SADDLEDD_"


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    # problem: generated from these fields unless problem_dir is set
    kind: str = "mixed_darcy_mac"
    nx: int = 24
    ny: int = 24
    seed: int = 0
    C_mode: str = "zero"
    eps: float = 1e-3
    problem_dir: Optional[str] = None
    # decomposition and preconditioners
    N: int = 4
    overlap: int = 1
    mode: str = "asm2"
    tau_A: float = 0.5
    tau_S1: Optional[float] = None      # None: 1 / k0
    rho_robin: float = 1.0
    # solver
    tol: float = 1e-8
    inner_tol: Optional[float] = None   # None: 1e-2 * tol
    eig_drop: float = 1e-12
    flexible: bool = True
    maxit: int = 1000
    rhs: str = "random"                 # "random" | "zero" | "ones"
    rhs_seed: int = 0
    # sweep: N values; strips of 16 cells per subdomain (nx = 16 N, ny = 16)
    sweep_N: List[int] = field(default_factory=lambda: [4, 9, 16])
    sweep_cells: int = 16
    # output
    output: Optional[str] = None
    csv: Optional[str] = None
    threads: int = 1
    verify: bool = False
    verbose: int = 0

    def validate(self):
        from .problems import KINDS
        if self.problem_dir is None and self.kind not in KINDS:
            raise ConfigError(f"kind must be one of {KINDS}")
        if self.problem_dir is not None and not os.path.isdir(self.problem_dir):
            raise ConfigError(f"problem_dir {self.problem_dir!r} is not a directory")
        if self.C_mode not in ("zero", "diag_eps", "split_eps"):
            raise ConfigError("C_mode must be zero, diag_eps or split_eps")
        if self.mode not in ("asm2", "soras"):
            raise ConfigError("mode must be asm2 or soras")
        if self.rhs not in ("random", "zero", "ones"):
            raise ConfigError("rhs must be random, zero or ones")
        for name in ("nx", "ny", "N", "maxit", "threads", "sweep_cells"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be positive")
        if self.overlap < 0:
            raise ConfigError("overlap must be non-negative")
        if self.tau_A < 0 or (self.tau_S1 is not None and self.tau_S1 < 0):
            raise ConfigError("thresholds must be non-negative")
        if not 0 < self.tol < 1:
            raise ConfigError("tol must lie in (0, 1)")
        if self.inner_tol is not None and not 0 < self.inner_tol < 1:
            raise ConfigError("inner_tol must lie in (0, 1)")
        if not self.sweep_N or any(k < 1 for k in self.sweep_N):
            raise ConfigError("sweep_N must be a non-empty list of positive integers")
        return self


_TYPES = {f.name: f.type for f in fields(RunConfig)}


def _coerce(name, value):
    """Convert a string (from the environment or a flag) to the field type."""
    if not isinstance(value, str):
        return value
    kind = str(_TYPES[name])
    if value.lower() in ("none", "null") and "Optional" in kind:
        return None
    try:
        if "List[int]" in kind:
            return [int(v) for v in value.replace(",", " ").split()]
        if "bool" in kind:
            if value.lower() in ("1", "true", "yes", "on"):
                return True
            if value.lower() in ("0", "false", "no", "off"):
                return False
            raise ValueError(value)
        if "float" in kind:
            return float(value)
        if "int" in kind:
            return int(value)
    except ValueError:
        raise ConfigError(f"bad value {value!r} for {name}") from None
    return value


def load_config(path=None, overrides=None, environ=None) -> RunConfig:
    values = {}
    if path:
        try:
            with open(path) as fh:
                data = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from None
        unknown = set(data) - set(_TYPES)
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        values.update(data)
    environ = os.environ if environ is None else environ
    for name in _TYPES:
        key = ENV_PREFIX + name.upper()
        if key in environ:
            values[name] = environ[key]
    for name, value in (overrides or {}).items():
        if value is not None:
            values[name] = value
    cfg = RunConfig(**{k: _coerce(k, v) for k, v in values.items()})
    return cfg.validate()


# ---------------------------------------------------------------------------
# pipeline

def _problem(cfg: RunConfig):
    from .problems import ProblemSpec, generate, load_problem_dir
    if cfg.problem_dir:
        return load_problem_dir(cfg.problem_dir), None
    spec = ProblemSpec(kind=cfg.kind, nx=cfg.nx, ny=cfg.ny, seed=cfg.seed,
                       C_mode=cfg.C_mode, eps=cfg.eps)
    return generate(spec), spec


def _rhs(cfg, sys):
    if cfg.rhs == "zero":
        return np.zeros(sys.n), np.zeros(sys.m)
    if cfg.rhs == "ones":
        return np.ones(sys.n), np.ones(sys.m)
    rng = np.random.default_rng(cfg.rhs_seed)
    return rng.standard_normal(sys.n), rng.standard_normal(sys.m)


def _tolerances(cfg):
    from .config import Tolerances
    return Tolerances(eig_drop=cfg.eig_drop)


def _setup(cfg, sys, fault=None):
    from .decomposition import decompose
    from .ns import build_preconditioners
    t = time.perf_counter()
    dec = decompose(sys, cfg.N, overlap=cfg.overlap, tol=_tolerances(cfg))
    if fault == "dual-pou":
        dec[0].Dt = dec[0].Dt * 1.5
    t_dec = time.perf_counter() - t
    pre = build_preconditioners(sys, dec, mode=cfg.mode, tau_A=cfg.tau_A, tau_S1=cfg.tau_S1,
                                rho_robin=cfg.rho_robin, tol=_tolerances(cfg),
                                threads=cfg.threads)
    pre.times = {"decompose": t_dec, **pre.times}
    return dec, pre


def _tau_S1(cfg, dec):
    return 1.0 / dec.k0 if cfg.tau_S1 is None else cfg.tau_S1


def run(cfg: RunConfig, fault=None) -> dict:
    """Set up the three preconditioner phases, solve, and summarize."""
    from .krylov import solve_saddle, write_residual_csv
    from .ns import check_sparsity_assumptions
    from .schur import alpha_bound
    sys_, _ = _problem(cfg)
    dec, pre = _setup(cfg, sys_, fault)
    F_U, F_P = _rhs(cfg, sys_)
    t = time.perf_counter()
    sol = solve_saddle(sys_, pre, F_U, F_P, tol=cfg.tol, inner_tol=cfg.inner_tol,
                       flexible=cfg.flexible, maxit=cfg.maxit)
    times = dict(pre.times, solve=time.perf_counter() - t)
    tau = _tau_S1(cfg, dec)
    summary = {
        "config": asdict(cfg),
        "dims": {"n": sys_.n, "m": sys_.m, "N": dec.N, "dim_V0": pre.MA.dim_V0,
                 "dim_W0": pre.dual.coarse.dim, "k0": dec.k0,
                 "alpha": alpha_bound(dec.k0, tau), "tau_S1": tau},
        "solution": sol.to_dict(),
        "assumptions": check_sparsity_assumptions(pre.dual),
        "times": times,
    }
    if cfg.verify:
        results = _checks(cfg, sys_, dec, pre, sol, F_U, F_P, light=True)
        summary["checks"] = [r.to_dict() for r in results]
    if cfg.csv:
        write_residual_csv(sol.reports, cfg.csv)
    return summary


def _checks(cfg, sys_, dec, pre, sol=None, F_U=None, F_P=None, light=False):
    from . import checks
    st = pre.dual
    out = checks.check_pou(dec) + [checks.check_support(sys_, dec), checks.check_C(sys_, dec)]
    probes = 20 if light else 100
    out.append(checks.check_MS_paths(st, probes))
    out.append(checks.check_stable_decomposition(st, probes))
    out += checks.check_coupling_locality(st)
    if sys_.m <= 5000:
        out.append(checks.check_alpha(st, _tau_S1(cfg, dec)))
        out.append(checks.check_woodbury(st, pre.ma0, probes))
        out.append(checks.check_MA0(st, pre.ma0))
    if sol is not None:
        out += checks.check_block_solution(sys_, sol, F_U, F_P, tol=cfg.tol)
    return out


def verify(cfg: RunConfig, fault=None, stream=None) -> int:
    """Run every check on the configured problem and print a table."""
    from .krylov import solve_saddle
    stream = sys.stdout if stream is None else stream
    sys_, _ = _problem(cfg)
    dec, pre = _setup(cfg, sys_, fault)
    F_U, F_P = _rhs(cfg, sys_)
    sol = solve_saddle(sys_, pre, F_U, F_P, tol=cfg.tol, inner_tol=cfg.inner_tol,
                       flexible=cfg.flexible, maxit=cfg.maxit)
    results = _checks(cfg, sys_, dec, pre, sol, F_U, F_P)
    for r in results:
        print(r.line(), file=stream)
    failed = [r.name for r in results if not r.passed]
    print(f"{len(results) - len(failed)}/{len(results)} checks passed", file=stream)
    return EXIT_CHECK if failed else EXIT_OK


def sweep(cfg: RunConfig, path=None) -> List[dict]:
    """Fixed subdomain size: strips of ``sweep_cells`` x ``sweep_cells`` cells."""
    rows = []
    for N in cfg.sweep_N:
        sub = RunConfig(**{**asdict(cfg), "N": N, "nx": cfg.sweep_cells * N,
                           "ny": cfg.sweep_cells, "verify": False, "csv": None})
        s = run(sub)
        a = s["assumptions"]
        rows.append({"N": N, "n": s["dims"]["n"], "m": s["dims"]["m"], "k0": s["dims"]["k0"],
                     "dim_V0": s["dims"]["dim_V0"], "dim_W0": s["dims"]["dim_W0"],
                     "step3_iterations": s["solution"]["reports"]["step3"]["iterations"],
                     "primal_coupling_max": a["primal_coupling_max"],
                     "dual_coupling_max": a["dual_coupling_max"],
                     "block_relres": s["solution"]["block_relres"],
                     "setup_time": sum(v for k, v in s["times"].items() if k != "solve"),
                     "solve_time": s["times"]["solve"]})
    if path:
        with open(path, "w", newline="") as fh:
            w = csv.DictWriter(fh, fieldnames=list(rows[0]))
            w.writeheader()
            w.writerows(rows)
    return rows


def spectrum(cfg: RunConfig, which="all") -> dict:
    """Dense pencil extremes of the preconditioned operators."""
    from .problems import oracle_assemble, preconditioned_spectrum
    from .checks import dual_spectrum
    from .ns import apply_NS_inv
    from .problems import DenseOracle
    sys_, _ = _problem(cfg)
    dec, pre = _setup(cfg, sys_)
    out = {}
    if which in ("all", "MA"):
        w = preconditioned_spectrum(sys_.A, oracle_assemble(pre.MA, sys_.n))
        out["MA"] = [float(w[0]), float(w[-1])]
    if which in ("all", "MS1"):
        w = dual_spectrum(pre.dual)
        out["MS1"] = [float(w[0]), float(w[-1])]
    if which in ("all", "NS"):
        S = DenseOracle(sys_).schur()
        NS_inv = oracle_assemble(lambda g: apply_NS_inv(pre.dual, pre.ma0, g), sys_.m)
        w = preconditioned_spectrum(S, NS_inv)
        out["NS"] = [float(w[0]), float(w[-1])]
    return out


# ---------------------------------------------------------------------------
# argument parsing

def _add_common(p):
    g = p.add_argument_group("problem")
    g.add_argument("--config", help="JSON file with RunConfig keys")
    g.add_argument("--kind")
    g.add_argument("--nx", type=int)
    g.add_argument("--ny", type=int)
    g.add_argument("--seed", type=int)
    g.add_argument("--C-mode", dest="C_mode")
    g.add_argument("--eps", type=float)
    g.add_argument("--problem-dir", dest="problem_dir")
    g = p.add_argument_group("method")
    g.add_argument("-N", "--N", dest="N", type=int)
    g.add_argument("--overlap", type=int)
    g.add_argument("--mode", choices=["asm2", "soras"])
    g.add_argument("--tau-A", dest="tau_A", type=float)
    g.add_argument("--tau-S1", dest="tau_S1", type=float)
    g.add_argument("--rho-robin", dest="rho_robin", type=float)
    g.add_argument("--tol", type=float)
    g.add_argument("--inner-tol", dest="inner_tol", type=float)
    g.add_argument("--eig-drop", dest="eig_drop", type=float)
    g.add_argument("--flexible", dest="flexible", action="store_true", default=None)
    g.add_argument("--no-flexible", dest="flexible", action="store_false")
    g.add_argument("--maxit", type=int)
    g.add_argument("--rhs", choices=["random", "zero", "ones"])
    g.add_argument("--rhs-seed", dest="rhs_seed", type=int)
    g.add_argument("--threads", type=int)
    g.add_argument("-v", "--verbose", action="count", default=None)
    # test hook: corrupt the dual weights of subdomain 0
    p.add_argument("--inject-fault", dest="fault", choices=["dual-pou"], help=argparse.SUPPRESS)


def build_parser():
    parser = argparse.ArgumentParser(prog="saddledd",
                                     description="Two-level domain decomposition solver "
                                                 "for saddle point systems.")
    sub = parser.add_subparsers(dest="command", required=True)
    p = sub.add_parser("run", help="set up preconditioners and solve")
    _add_common(p)
    p.add_argument("-o", "--output", help="JSON summary path (default: stdout)")
    p.add_argument("--csv", help="residual histories as CSV")
    p.add_argument("--verify", action="store_true", default=None,
                   help="add the dense-oracle checks to the summary")
    p = sub.add_parser("verify", help="run all checks and print a pass/fail table")
    _add_common(p)
    p = sub.add_parser("sweep", help="weak scaling sweep over N, one CSV row per N")
    _add_common(p)
    p.add_argument("--sweep-N", dest="sweep_N", help="comma separated N values")
    p.add_argument("--sweep-cells", dest="sweep_cells", type=int)
    p.add_argument("-o", "--output", help="CSV path (default: stdout)")
    p = sub.add_parser("gen", help="export a generated problem to Matrix Market files")
    _add_common(p)
    p.add_argument("outdir")
    p = sub.add_parser("spectrum", help="dense pencil extremes of the preconditioned operators")
    _add_common(p)
    p.add_argument("--which", choices=["all", "MA", "MS1", "NS"], default="all")
    p.add_argument("-o", "--output")
    return parser


_NOT_CONFIG = {"command", "config", "fault", "outdir", "which"}


def _emit(obj, path):
    text = json.dumps(obj, indent=2, default=float)
    if path:
        with open(path, "w") as fh:
            fh.write(text + "\n")
    else:
        print(text)


def main(argv=None) -> int:
    from .krylov import ConvergenceError, IndefiniteOperatorError
    from .linalg import NotSPDError
    parser = build_parser()
    args = parser.parse_args(argv)
    overrides = {k: v for k, v in vars(args).items()
                 if k not in _NOT_CONFIG and k in _TYPES}
    if args.command == "sweep" and args.output:
        overrides["output"] = None
    try:
        cfg = load_config(args.config, overrides)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    logging.basicConfig(level=logging.WARNING - 10 * min(cfg.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s")
    fault = getattr(args, "fault", None)
    try:
        if args.command == "run":
            summary = run(cfg, fault)
            _emit(summary, cfg.output)
            checks = summary.get("checks", [])
            return EXIT_CHECK if any(not c["passed"] for c in checks) else EXIT_OK
        if args.command == "verify":
            return verify(cfg, fault)
        if args.command == "sweep":
            rows = sweep(cfg, args.output)
            if not args.output:
                w = csv.DictWriter(sys.stdout, fieldnames=list(rows[0]))
                w.writeheader()
                w.writerows(rows)
            return EXIT_OK
        if args.command == "gen":
            from .problems import export_problem
            sys_, spec = _problem(cfg)
            export_problem(sys_, args.outdir, spec)
            print(f"wrote n={sys_.n} m={sys_.m} problem to {args.outdir}")
            return EXIT_OK
        if args.command == "spectrum":
            _emit(spectrum(cfg, args.which), args.output)
            return EXIT_OK
    except (ConvergenceError, NotSPDError, IndefiniteOperatorError,
            np.linalg.LinAlgError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (ValueError, OSError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
