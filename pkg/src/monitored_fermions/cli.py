"""Command-line entry point: ``monitored-fermions <subcommand>``.

Exit codes: 0 success, 1 usage error, 2 numerical failure, 3 I/O error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .collapse import DEFAULT_WINDOW, ScalingDataset, crossing_locator, fit_collapse
from .config import DEFAULTS, load_config, parse_config
from .gaussian_state import NumericalDegradationError
from .lattice import LatticeSpec, build_spectrum
from .runner import DigestMismatchError, analyze, read_table, simulate, sweep

log = logging.getLogger("monitored_fermions")

EXIT_OK, EXIT_USAGE, EXIT_NUMERICAL, EXIT_IO = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _floats(text: str) -> list[float]:
    return [float(s) for s in text.split(",") if s.strip()]


def _ints(text: str) -> list[int]:
    return [int(s) for s in text.split(",") if s.strip()]


def _config_from_args(args, **extra):
    overrides = dict(base_seed=args.seed, n_workers=args.workers, output=args.out,
                     n_trajectories=args.trajectories, **extra)
    if args.config:
        return load_config(args.config, **overrides)
    return parse_config("", **overrides)


def _progress(index):
    log.info("trajectory %d done", index)


def cmd_simulate(args):
    if args.print_config:
        print(DEFAULTS.to_text(), end="")
        return EXIT_OK
    gamma = args.gamma[0] if args.gamma else None
    size = args.size[0] if args.size else None
    cfg = _config_from_args(args, gamma=gamma, L=size)
    run = simulate(cfg, resume=args.resume, progress=_progress)
    print(f"{run.dir}: {len(run.completed)} trajectories, {len(run.failed)} failed, "
          f"config {cfg.digest}")
    return EXIT_OK


def cmd_sweep(args):
    if not args.gamma or not args.size:
        raise UsageError("sweep needs --gamma and --size lists")
    cfg = _config_from_args(args)
    rows, failures = sweep(cfg, args.gamma, args.size, resume=args.resume, progress=_progress)
    print(f"{len(rows)} cells written to {Path(cfg.output) / 'covariance.csv'}")
    for cell, err in failures.items():
        print(f"failed cell {cell}: {err}", file=sys.stderr)
    return EXIT_OK if not failures else EXIT_NUMERICAL


def cmd_analyze(args):
    result, fit = analyze(args.runs, args.mode, out=args.out, force=args.force)
    if fit is not None:
        print(f"q->0 extrapolation of C/q_tilde: {fit.value:.6g} +- {fit.error:.3g}")
    print(f"{args.mode} table written")
    return EXIT_OK


def cmd_collapse(args):
    meta, cols = read_table(args.table)
    data = ScalingDataset(cols["L"], cols["gamma"], cols["G_AB"], cols["G_AB_err"])
    window = tuple(args.window) if args.window else DEFAULT_WINDOW
    if args.no_window:
        window = None
    res = fit_collapse(data, init=tuple(args.init), fit_zeta=args.fit_zeta, window=window)
    curves = {}
    for L in np.unique(cols["L"]):
        sel = cols["L"] == L
        curves[float(L)] = (cols["gamma"][sel], cols["G_AB"][sel])
    cross = crossing_locator(curves) if len(curves) > 1 else None
    out = res.to_dict()
    out["crossing"] = None if cross is None or cross.absent else {
        "estimate": cross.estimate, "spread": cross.spread, "n_crossings": len(cross.crossings)}
    out["source_digest"] = meta.get("template_digest") or meta.get("config_digest")
    out["tool_version"] = __version__
    text = json.dumps(out, indent=2)
    if args.out:
        Path(args.out).write_text(text + "\n")
    print(text)
    return EXIT_OK


def _f(value) -> str:
    return repr(float(value))


def cmd_theory(args):
    from . import theory

    lines = [f"# tool_version={__version__}"]
    if args.table == "critical":
        lines.append("d,eps,G_c,nu,zeta,note")
        for d in args.dims:
            eps = d - 1.0
            if eps <= 0:
                lines.append(f"{d},{eps},,,,no transition (always localized)")
                continue
            cq = theory.critical_quantities(eps)
            note = "one-loop extrapolation" if eps >= 1 else "one-loop"
            lines.append(f"{d},{_f(eps)},{_f(cq.G_c)},{_f(cq.nu)},{_f(cq.zeta)},{note}")
    elif args.table == "coupling":
        lines.append("d,gamma,filling,g0,l0,G0")
        for d in args.dims:
            for g in args.gamma or [1.0]:
                p = theory.NLSMParams(d, g, args.J, args.filling)
                lines.append(f"{d},{_f(g)},{_f(args.filling)},{_f(p.g0)},{_f(p.l0)},{_f(p.G0)}")
    elif args.table == "rg":
        lines.append("d,gamma,ell,G,G_closed")
        for d in args.dims:
            for g in args.gamma or [1.0]:
                p = theory.NLSMParams(d, g, args.J, args.filling)
                flow = theory.rg_flow(p.G0, p.eps, p.l0, p.l0 * 10**args.decades)
                for ell, G, Gc in zip(flow.ell, flow.G, flow.G_closed):
                    lines.append(f"{d},{_f(g)},{_f(ell)},{_f(G)},{_f(Gc)}")
    elif args.table == "gaussian":
        lines.append("d,gamma,q,q_tilde,C_q,ell,C2")
        for d in args.dims:
            for g in args.gamma or [1.0]:
                p = theory.NLSMParams(d, g, args.J, args.filling)
                L = args.L
                for m in range(1, L // 2 + 1):
                    q = 2 * np.pi * m / L
                    ell = float(m)
                    c2 = theory.gaussian_cumulant(p, ell) if ell >= p.l0 else float("nan")
                    lines.append(f"{d},{_f(g)},{_f(q)},{_f(2 * np.sin(q / 2))},"
                                 f"{_f(theory.gaussian_correlator_q(p, q))},{_f(ell)},{_f(c2)}")
    text = "\n".join(lines) + "\n"
    if args.out:
        Path(args.out).write_text(text)
    else:
        print(text, end="")
    return EXIT_OK


def cmd_oracle_check(args):
    from .exact import lockstep_compare

    size = args.size[0] if args.size else 2
    lattice = LatticeSpec(args.dim, size)
    spectrum = build_spectrum(lattice)
    rng = np.random.default_rng(args.seed)
    n = lattice.n_sites
    k = int(round(args.filling * n))
    X = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
    orbitals = np.linalg.qr(X)[0][:, :k]
    times = np.sort(rng.uniform(0, args.events / max(n, 1), args.events))
    sites = rng.integers(0, n, args.events)
    rep = lockstep_compare(spectrum, orbitals, times, sites, rng=rng)
    ok = rep.max_green_deviation < 1e-8 and rep.max_probability_deviation < 1e-10
    print(f"sites={n} events={rep.n_steps} max|dG|={rep.max_green_deviation:.3e} "
          f"max|dp|={rep.max_probability_deviation:.3e} {'PASS' if ok else 'FAIL'}")
    return EXIT_OK if ok else EXIT_NUMERICAL


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="monitored-fermions", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=__version__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def run_flags(sp):
        sp.add_argument("--config", help="key = value configuration file")
        sp.add_argument("--seed", type=int, help="base seed")
        sp.add_argument("--workers", type=int, help="worker processes")
        sp.add_argument("--out", help="output directory")
        sp.add_argument("--trajectories", type=int, help="number of trajectories")
        sp.add_argument("--resume", action="store_true", help="continue an interrupted run")
        sp.add_argument("--gamma", type=_floats, help="measurement rate(s), comma separated")
        sp.add_argument("--size", type=_ints, help="linear size(s), comma separated")

    sp = sub.add_parser("simulate", help="run trajectories for one configuration")
    run_flags(sp)
    sp.add_argument("--print-config", action="store_true", help="print defaults and exit")
    sp.set_defaults(func=cmd_simulate)

    sp = sub.add_parser("sweep", help="simulate a grid of sizes and rates")
    run_flags(sp)
    sp.set_defaults(func=cmd_sweep)

    sp = sub.add_parser("analyze", help="build tables from run directories")
    sp.add_argument("runs", nargs="+")
    sp.add_argument("--mode", choices=("momentum", "covariance", "entropy"), required=True)
    sp.add_argument("--out")
    sp.add_argument("--force", action="store_true", help="allow mixed config digests")
    sp.set_defaults(func=cmd_analyze)

    sp = sub.add_parser("collapse", help="scaling collapse of a covariance table")
    sp.add_argument("table")
    sp.add_argument("--init", type=_floats, default=[2.9, 1.4], help="gamma_c,nu start")
    sp.add_argument("--window", type=_floats, help="gamma window lo,hi")
    sp.add_argument("--no-window", action="store_true", help="use every row")
    sp.add_argument("--fit-zeta", action="store_true")
    sp.add_argument("--out", help="JSON output path")
    sp.set_defaults(func=cmd_collapse)

    sp = sub.add_parser("theory", help="analytic prediction tables (CSV)")
    sp.add_argument("table", choices=("critical", "coupling", "rg", "gaussian"))
    sp.add_argument("--dims", type=_ints, default=[2])
    sp.add_argument("--gamma", type=_floats)
    sp.add_argument("--J", type=float, default=1.0)
    sp.add_argument("--filling", type=float, default=0.5)
    sp.add_argument("--decades", type=float, default=3.0)
    sp.add_argument("--L", type=int, default=24)
    sp.add_argument("--out")
    sp.set_defaults(func=cmd_theory)

    sp = sub.add_parser("oracle-check", help="compare the Gaussian engine with exact evolution")
    sp.add_argument("--size", type=_ints)
    sp.add_argument("--dim", type=int, default=2)
    sp.add_argument("--events", type=int, default=50)
    sp.add_argument("--filling", type=float, default=0.5)
    sp.add_argument("--seed", type=int, default=0)
    sp.set_defaults(func=cmd_oracle_check)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(asctime)s %(name)s %(levelname)s %(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except NumericalDegradationError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (OSError, DigestMismatchError) as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except ValueError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
