"""Command-line front end.

Exit codes: 0 success, 1 usage or configuration error, 2 computation error.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path
from typing import Optional, Sequence

from . import pipeline
from .charstab import CharStabError
from .dde_sim import IntegrationError, ScanError
from .equilibria import EquilibriumError
from .hopf import HopfError
from .pipeline import ConfigError, Outputs
from .scenarios import REGISTRY, get

EXIT_OK, EXIT_USAGE, EXIT_COMPUTE = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _source(sp: argparse.ArgumentParser) -> None:
    g = sp.add_mutually_exclusive_group(required=True)
    g.add_argument("--scenario", help="registered scenario name (see `list`)")
    g.add_argument("--config", type=Path, help="JSON configuration file")


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="hivhopf", description="Delayed HIV/CTL model: simulation and Hopf analysis.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    for name in ("simulate", "analyze"):
        sp = sub.add_parser(name, help="full pipeline with simulation" if name == "simulate"
                            else "equilibria, stability, critical delay and Hopf; no simulation")
        _source(sp)
        sp.add_argument("--tau3", type=float)
        if name == "simulate":
            sp.add_argument("--t-end", type=float, dest="t_end")
            sp.add_argument("--svg", action="store_true", help="also write SVG plots")
            sp.add_argument("--stride", type=int, help="CSV row stride")
        sp.add_argument("--out", type=Path, help="output directory")

    sp = sub.add_parser("run", help="simulate a registered scenario")
    sp.add_argument("name")
    sp.add_argument("--out", type=Path)
    sp.add_argument("--svg", action="store_true")

    sp = sub.add_parser("scan", help="bisect tau3 for the onset of oscillation")
    _source(sp)
    sp.add_argument("--lo", type=float)
    sp.add_argument("--hi", type=float)
    sp.add_argument("--tol", type=float)
    sp.add_argument("--t-end", type=float, dest="t_end")
    sp.add_argument("--out", type=Path)

    sp = sub.add_parser("sweep", help="summary table over a parameter grid")
    _source(sp)
    sp.add_argument("--param", required=True)
    sp.add_argument("--values", required=True, help="comma-separated list, may be empty")
    sp.add_argument("--workers", type=int)
    sp.add_argument("--out", type=Path)

    sub.add_parser("list", help="list registered scenarios")
    return p


def _input(args, outputs: Optional[Outputs] = None) -> pipeline.RunInput:
    tau3 = getattr(args, "tau3", None)
    t_end = getattr(args, "t_end", None)
    if args.scenario:
        try:
            scenario = get(args.scenario)
        except KeyError as exc:
            raise UsageError(exc.args[0]) from None
        return pipeline.scenario_input(scenario, tau3=tau3, t_end=t_end, outputs=outputs or Outputs())
    params, sim, file_outputs = pipeline.load_config(args.config, tau3=tau3, t_end=t_end)
    run = pipeline.RunInput(name=args.config.stem, params=params, sim=sim, outputs=file_outputs)
    if outputs is not None:
        run.outputs = Outputs(csv=file_outputs.csv, svg=file_outputs.svg or outputs.svg,
                              stride=outputs.stride if outputs.stride != 1 else file_outputs.stride)
    return run


def _emit(obj, out: Optional[Path], filename: str) -> None:
    text = pipeline.dumps(obj)
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
        (out / filename).write_text(text)
    sys.stdout.write(text)


def _values(text: str) -> list[float]:
    items = [s.strip() for s in text.split(",") if s.strip()]
    try:
        return [float(s) for s in items]
    except ValueError:
        raise UsageError(f"--values: not a comma-separated list of numbers: {text!r}") from None


def _dispatch(args) -> int:
    cmd = args.command
    if cmd == "list":
        for name, s in REGISTRY.items():
            tau = ", ".join(f"{t:g}" for t in s.params.delays)
            sys.stdout.write(f"{name}\tlambda={s.params.lam:g} c={s.params.c:g} "
                             f"eta={s.params.eta:g} tau=({tau})\n")
        return EXIT_OK
    if cmd == "run":
        args.scenario, args.config, args.tau3, args.t_end, args.stride = args.name, None, None, None, None
        cmd = "simulate"
    if cmd == "simulate":
        if args.stride is not None and args.stride < 1:
            raise UsageError("--stride must be a positive integer")
        run = _input(args, Outputs(svg=args.svg, stride=args.stride or 1))
        report = pipeline.run_report(run, args.out)
        sys.stdout.write(pipeline.dumps(report))
        return EXIT_OK
    if cmd == "analyze":
        report = pipeline.analyze(_input(args), args.out)
        sys.stdout.write(pipeline.dumps(report))
        return EXIT_OK
    if cmd == "scan":
        run = _input(args)
        setup = get(args.scenario).scan if args.scenario else None
        lo = args.lo if args.lo is not None else (setup.lo if setup else None)
        hi = args.hi if args.hi is not None else (setup.hi if setup else None)
        tol = args.tol if args.tol is not None else (setup.tol if setup else 1.0)
        if lo is None or hi is None:
            raise UsageError("scan needs --lo and --hi")
        if not lo < hi:
            raise UsageError("--lo must be strictly below --hi")
        if not tol > 0:
            raise UsageError("--tol must be positive")
        sim = setup.sim if setup else run.sim
        if args.t_end is not None:
            sim = sim.replace(t_end=args.t_end)
        result = pipeline.scan_tau3(run.params, sim, lo, hi, tol, expected=run.expected)
        _emit(result, args.out, "scan.json")
        return EXIT_OK
    if cmd == "sweep":
        run = _input(args)
        rows = pipeline.sweep(run.params, args.param, _values(args.values), args.workers)
        _emit({"op": "sweep", "param": args.param, "rows": rows}, args.out, "sweep.json")
        return EXIT_OK
    raise UsageError(f"unknown command {cmd}")  # pragma: no cover


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return _dispatch(args)
    except (UsageError, ConfigError) as exc:
        sys.stderr.write(f"hivhopf: error: {exc}\n")
        return EXIT_USAGE
    except (IntegrationError, EquilibriumError, CharStabError, HopfError, ScanError,
            ValueError, ArithmeticError, json.JSONDecodeError) as exc:
        sys.stderr.write(f"hivhopf: computation failed: {exc}\n")
        return EXIT_COMPUTE


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
