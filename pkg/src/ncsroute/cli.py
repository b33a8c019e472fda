"""Command-line front end: ``ncsroute <command> [options]``.

Exit codes: 0 success, 2 closed loop unstable for the requested R, 3 bad
configuration or command line, 4 precondition violation, 5 internal numeric
failure. Diagnostics go to standard error; the JSON report (or a CSV surface
with ``--format csv``) goes to standard output.
"""

from __future__ import annotations

import argparse
import io
import math
import sys
import time
from importlib import metadata

import numpy as np

from .bounds import stealth_diagnostic, theorem1_bound, theorem2_bound
from .config import AnalysisConfig, load_config
from .errors import (CapUnattainableError, ConfigError, DefectiveEigenstructureError,
                     DegenerateResidualError, DimensionError, MarginError, NCSError, PreconditionError,
                     UnstableSystemError)
from .h2 import impact, monte_carlo_energy, ratio_trajectory
from .lmi import Output, alpha_feasibility, build_h2_certificate, ratio_by_bisection
from .report import ReportDocument, sweep_to_dict, write_sweep_csv, write_trajectory_csv
from .search import (AxisSpec, SearchOptions, StealthMode, diagonal_sweep, stealthy_search,
                     worst_case_search)
from .system import assemble_closed_loop, classify_stability

__all__ = ["main", "run_command", "build_parser", "parse_routing"]

EXIT_OK, EXIT_UNSTABLE, EXIT_CONFIG, EXIT_PRECONDITION, EXIT_NUMERIC = 0, 2, 3, 4, 5


def _version() -> str:
    try:
        return metadata.version("artifact")
    except metadata.PackageNotFoundError:
        return "0.0.0"


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    # argparse exits with 2 on bad usage, which is reserved for instability here
    def error(self, message):
        raise _UsageError(message)


def parse_routing(text: str) -> np.ndarray:
    """Parse ``"a,b;c,d"`` (rows separated by ``;``) into a square matrix."""
    try:
        rows = [[float(v) for v in row.split(",")] for row in text.split(";")]
    except ValueError as exc:
        raise _UsageError(f"--R: cannot parse {text!r}: {exc}") from exc
    if any(len(r) != len(rows) for r in rows):
        raise _UsageError(f"--R: matrix {text!r} is not square")
    R = np.array(rows, dtype=float)
    if not np.all(np.isfinite(R)):
        raise _UsageError("--R: entries must be finite")
    return R


def _routing(args, cfg: AnalysisConfig) -> np.ndarray:
    return np.eye(cfg.plant.n_y) if args.R is None else parse_routing(args.R)


def _stable_system(cfg, R, margin=0.0):
    sys_ = assemble_closed_loop(cfg.plant, cfg.controller, R)
    verdict = classify_stability(sys_, margin)
    if not verdict.stable:
        raise UnstableSystemError(verdict.abscissa,
                                  f"closed loop unstable for R = {R.tolist()} "
                                  f"(spectral abscissa {verdict.abscissa:.6g})")
    return sys_


def _search_options(args, cfg) -> SearchOptions:
    d = cfg.defaults
    return SearchOptions(
        restarts=d.restarts if args.restarts is None else args.restarts,
        seed=d.seed if args.seed is None else args.seed,
        max_evals=d.max_evals if args.max_evals is None else args.max_evals,
        margin=d.margin if args.margin is None else args.margin,
        workers=args.workers,
    )


def _cmd_analyze(args, cfg):
    R = _routing(args, cfg)
    sys_ = assemble_closed_loop(cfg.plant, cfg.controller, R)
    verdict = classify_stability(sys_, 0.0)
    if not verdict.stable:
        return {"R": R, "stable": False, "spectral_abscissa": verdict.abscissa}, EXIT_UNSTABLE
    out = impact(sys_, R).to_dict()
    out["stable"] = True
    return out, EXIT_OK


def _cmd_sweep(args, cfg):
    r11 = AxisSpec.parse(args.grid)
    r22 = AxisSpec.parse(args.grid_r22) if args.grid_r22 else r11
    margin = cfg.defaults.margin if args.margin is None else args.margin
    grid = diagonal_sweep(cfg.plant, cfg.controller, r11, r22, margin)
    buf = io.StringIO()
    write_sweep_csv(grid, buf)
    return sweep_to_dict(grid), EXIT_OK, buf.getvalue()


def _cmd_search(args, cfg):
    return worst_case_search(cfg.plant, cfg.controller, _search_options(args, cfg)).to_dict(), EXIT_OK


def _cmd_stealthy(args, cfg):
    eps = args.eps_tr if args.eps_tr is not None else cfg.epsilon_tr
    if eps is None:
        raise PreconditionError("no residual cap: pass --eps-tr or set detector.epsilon_tr")
    res = stealthy_search(cfg.plant, cfg.controller, eps, args.mode, _search_options(args, cfg))
    return res.to_dict(), EXIT_OK


def _cmd_bounds(args, cfg):
    R = _routing(args, cfg)
    sys_ = _stable_system(cfg, R)
    alpha = args.alpha_star if args.alpha_star is not None else cfg.defaults.alpha_star
    out = {"R": R, "impact": impact(sys_, R).to_dict(),
           "theorem1": theorem1_bound(cfg.plant, cfg.controller, R, args.delta_r).to_dict()}
    if alpha is None:
        raise PreconditionError("no decay margin: pass --alpha-star or set defaults.alpha_star")
    out["theorem2"] = theorem2_bound(cfg.plant, cfg.controller, R, alpha).to_dict()
    try:
        diag = stealth_diagnostic(sys_, cfg.defaults.eta)
        out["stealth"] = {
            "stealth_score": diag.stealth_score, "top_mode": diag.top_mode,
            "eigvec_condition": diag.eigvec_condition, "eta": diag.eta,
            "modes": [{"eigenvalue": m.eigenvalue, "residual_visibility": m.residual_visibility,
                       "performance_visibility": m.performance_visibility, "score": m.score}
                      for m in diag.modes],
        }
    except DefectiveEigenstructureError as exc:
        out["stealth"] = {"error": str(exc)}
    return out, EXIT_OK


def _cert_dict(cert):
    return {"output": cert.output.value, "gamma": cert.gamma, "h2_norm_bound": math.sqrt(cert.gamma),
            "epsilon": cert.epsilon, "passed": cert.passed, "X": cert.X, "Z": cert.Z,
            "checks": [{"name": c.name, "margin": c.margin, "tolerance": c.tolerance, "passed": c.passed}
                       for c in cert.checks]}


def _cmd_certify(args, cfg):
    R = _routing(args, cfg)
    sys_ = _stable_system(cfg, R)
    eps = args.epsilon if args.epsilon is not None else cfg.defaults.lmi_epsilon
    tol = cfg.defaults.verify_rel_tol
    certs = [build_h2_certificate(sys_, o, eps, tol) for o in (Output.PERFORMANCE, Output.RESIDUAL)]
    out = {"R": R, "performance": _cert_dict(certs[0]), "residual": _cert_dict(certs[1]),
           "ratio_bisection": ratio_by_bisection(sys_), "ratio_impact": impact(sys_, R).ratio}
    if args.alpha is not None:
        a = alpha_feasibility(sys_, args.alpha)
        out["alpha"] = {"alpha": a.alpha, "trace_slack": a.trace_slack, "feasible": a.feasible}
    code = EXIT_OK if all(c.passed for c in certs) else EXIT_NUMERIC
    if code:
        print("ncsroute: certificate verification failed", file=sys.stderr)
    return out, code


def _cmd_trajectory(args, cfg):
    R = _routing(args, cfg)
    sys_ = _stable_system(cfg, R)
    grid = np.linspace(args.t_max / args.points, args.t_max, args.points)
    traj = ratio_trajectory(sys_, grid)
    buf = io.StringIO()
    write_trajectory_csv(traj, buf)
    out = {"R": R, "T": traj[:, 0], "ratio": traj[:, 1], "ratio_infinite_horizon": impact(sys_, R).ratio}
    return out, EXIT_OK, buf.getvalue()


def _cmd_montecarlo(args, cfg):
    R = _routing(args, cfg)
    sys_ = _stable_system(cfg, R)
    seed = cfg.defaults.seed if args.seed is None else args.seed
    mc = monte_carlo_energy(sys_, args.step, args.t_end, args.paths, seed, workers=args.workers)
    ref = impact(sys_, R)
    out = {
        "R": R, "seed": seed, "paths": args.paths, "step": args.step, "T_end": args.t_end,
        "performance_energy": mc.performance_energy, "performance_stderr": mc.performance_stderr,
        "residual_energy": mc.residual_energy, "residual_stderr": mc.residual_stderr,
        "trace_performance_energy": ref.h2_performance_sq, "trace_residual_energy": ref.h2_residual_sq,
        "performance_rel_error": mc.performance_energy / ref.h2_performance_sq - 1.0,
        "residual_rel_error": mc.residual_energy / ref.h2_residual_sq - 1.0,
    }
    return out, EXIT_OK


_COMMANDS = {
    "analyze": (_cmd_analyze, "energy ratio of the loop under one routing matrix"),
    "sweep": (_cmd_sweep, "stability region and ratio surface over diagonal R"),
    "search": (_cmd_search, "worst-case routing matrix (multi-start Nelder-Mead)"),
    "stealthy": (_cmd_stealthy, "worst case subject to a residual-energy cap"),
    "bounds": (_cmd_bounds, "analytic upper bounds and hidden-mode diagnostics"),
    "certify": (_cmd_certify, "LMI certificates for the H2 norms and the ratio level"),
    "trajectory": (_cmd_trajectory, "finite-horizon ratio as a function of T"),
    "montecarlo": (_cmd_montecarlo, "simulated stationary energies against the trace formula"),
}


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="ncsroute", description="Impact analysis of routing attacks on observer-based loops.")
    p.add_argument("--version", action="version", version=f"%(prog)s {_version()}")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for name, (_, help_) in _COMMANDS.items():
        s = sub.add_parser(name, help=help_, description=help_)
        s.add_argument("--config", default="paper_sec5.cfg",
                       help="configuration file (bundled name or path; default %(default)s)")
        s.add_argument("--out", help="also write the output document to this path")
        s.add_argument("--format", choices=("json", "csv"), default="json")
        if name in ("analyze", "bounds", "certify", "trajectory", "montecarlo"):
            s.add_argument("--R", help='routing matrix, rows separated by ";" (default identity)')
        if name in ("sweep", "search", "stealthy"):
            s.add_argument("--margin", type=float, help="required stability margin")
        if name == "sweep":
            s.add_argument("--grid", default="0:1.5:0.01", help="R11 axis min:max:step")
            s.add_argument("--grid-r22", help="R22 axis (default: same as --grid)")
        if name in ("search", "stealthy"):
            s.add_argument("--seed", type=int)
            s.add_argument("--restarts", type=int)
            s.add_argument("--max-evals", type=int)
            s.add_argument("--workers", type=int, default=1)
        if name == "stealthy":
            s.add_argument("--eps-tr", type=float, help="residual-energy cap (default from config)")
            s.add_argument("--mode", choices=[m.value for m in StealthMode], default=StealthMode.MAX_RATIO.value)
        if name == "bounds":
            s.add_argument("--alpha-star", type=float, help="decay margin for the semigroup bound")
            s.add_argument("--delta-r", type=float, help="supply the relative Gramian perturbation directly")
        if name == "certify":
            s.add_argument("--epsilon", type=float, help="LMI slack (default from config)")
            s.add_argument("--alpha", type=float, help="also test this ratio level")
        if name == "trajectory":
            s.add_argument("--t-max", type=float, default=50.0)
            s.add_argument("--points", type=int, default=100)
        if name == "montecarlo":
            s.add_argument("--seed", type=int)
            s.add_argument("--step", type=float, default=1e-3)
            s.add_argument("--t-end", type=float, default=40.0)
            s.add_argument("--paths", type=int, default=1000)
            s.add_argument("--workers", type=int, default=1)
    return p


def _exit_code(exc: BaseException) -> int:
    if isinstance(exc, (ConfigError, _UsageError)):
        return EXIT_CONFIG
    if isinstance(exc, MarginError):
        return EXIT_UNSTABLE if exc.abscissa >= 0 else EXIT_PRECONDITION
    if isinstance(exc, UnstableSystemError):
        return EXIT_UNSTABLE
    if isinstance(exc, (PreconditionError, DimensionError, DegenerateResidualError, CapUnattainableError,
                        DefectiveEigenstructureError)):
        return EXIT_PRECONDITION
    return EXIT_NUMERIC


_MATRIX_FLAGS = ("--R",)


def _attach_matrix_values(argv: list[str]) -> list[str]:
    # a routing such as "-1,0;0,-1" looks like an option to argparse
    out: list[str] = []
    it = iter(argv)
    for tok in it:
        if tok in _MATRIX_FLAGS:
            nxt = next(it, None)
            out.append(tok if nxt is None else f"{tok}={nxt}")
        else:
            out.append(tok)
    return out


def run_command(argv: list[str]) -> int:
    """Run one subcommand and return its exit code; the report goes to standard output."""
    return main(argv)


def main(argv: list[str] | None = None) -> int:
    t0 = time.perf_counter()
    argv = sys.argv[1:] if argv is None else list(argv)
    try:
        args = build_parser().parse_args(_attach_matrix_values(argv))
        if getattr(args, "points", 1) < 1:
            raise _UsageError("--points must be at least 1")
        cfg = load_config(args.config)
        fn = _COMMANDS[args.command][0]
        ret = fn(args, cfg)
    except Exception as exc:  # noqa: BLE001 - every failure maps onto the exit-code contract
        code = _exit_code(exc)
        kind = "usage" if isinstance(exc, _UsageError) else type(exc).__name__
        if not isinstance(exc, (NCSError, _UsageError)):
            kind = f"internal {kind}"
        print(f"ncsroute: {kind}: {exc}", file=sys.stderr)
        if isinstance(exc, UnstableSystemError):
            print(f"ncsroute: spectral abscissa {exc.abscissa:.6g}", file=sys.stderr)
        return code

    results, code = ret[0], ret[1]
    csv_text = ret[2] if len(ret) > 2 else None
    if args.format == "csv" and csv_text is None:
        print(f"ncsroute: usage: --format csv is not available for {args.command}", file=sys.stderr)
        return EXIT_CONFIG
    doc = ReportDocument(command=args.command, config_digest=cfg.digest, results=results,
                         tool_version=_version(), wall_time=time.perf_counter() - t0)
    text = doc.to_json()
    try:
        _emit(args, text, csv_text)
    except _UsageError as exc:
        print(f"ncsroute: usage: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    if code == EXIT_UNSTABLE:
        print(f"ncsroute: closed loop unstable (spectral abscissa {results['spectral_abscissa']:.6g})",
              file=sys.stderr)
    return code


def _emit(args, text: str, csv_text: str | None) -> None:
    if args.format == "csv":
        if args.out:
            _write(args.out, csv_text)
            sys.stdout.write(text)
        else:
            sys.stdout.write(csv_text)
    else:
        if args.out:
            _write(args.out, text)
        sys.stdout.write(text)


def _write(path: str, text: str) -> None:
    try:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    except OSError as exc:
        raise _UsageError(f"--out: cannot write {path}: {exc}") from exc


if __name__ == "__main__":
    sys.exit(main())
