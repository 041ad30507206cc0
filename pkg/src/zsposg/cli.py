"""Command-line front end: ``solve``, ``exact``, ``evaluate`` and ``bench``.

Exit codes: 0 success (gap reached), 2 budget exhausted, 64 bad flags,
65 unreadable or malformed model.
"""
from __future__ import annotations

import argparse
import csv
import json
import re
import sys
import time
from pathlib import Path

from .benchmarks import resolve_model
from .hsvi import OMGHSVI, TRACE_COLUMNS
from .lc import LipschitzHSVI
from .model import ModelParseError, PosgModel
from .sequence_form import build_sequence_form, solve_exact
from .strategies import BehavioralStrategy, best_response, evaluate_profile

EXIT_OK = 0
EXIT_BUDGET = 2
EXIT_USAGE = 64
EXIT_DATA = 65

# Table 1 settings: lc epsilon and cc heuristic per game
BENCH_GAMES = {
    "adversarial_tiger": {"lc_epsilon": 0.1, "heuristic": "bmdp", "horizons": (2, 3, 4, 5)},
    "competitive_tiger": {"lc_epsilon": 1.0, "heuristic": "init", "horizons": (2, 3, 4, 5)},
    "mabc": {"lc_epsilon": 0.05, "heuristic": "init", "horizons": (2, 3, 4, 5)},
    "recycling_robot": {"lc_epsilon": 0.2, "heuristic": "init", "horizons": (3, 4, 5, 6)},
}

_UNITS = {"": 1.0, "s": 1.0, "m": 60.0, "min": 60.0, "h": 3600.0}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def parse_duration(text: str) -> float:
    """Seconds from '600', '600s', '10m', '10min' or '1.5h'."""
    m = re.fullmatch(r"\s*([0-9]*\.?[0-9]+)\s*(s|m|min|h)?\s*", text)
    if not m:
        raise argparse.ArgumentTypeError(f"invalid duration '{text}'")
    return float(m.group(1)) * _UNITS[m.group(2) or ""]


def _rho(text: str):
    if text == "auto":
        return "auto"
    try:
        return float(text)
    except ValueError:
        raise argparse.ArgumentTypeError("rho must be a number or 'auto'") from None


def _positive(text: str) -> float:
    v = float(text)
    if not v > 0:
        raise argparse.ArgumentTypeError("must be positive")
    return v


def _horizon(text: str) -> int:
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError("horizon must be >= 1")
    return v


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="zsposg", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def model_flags(sp):
        sp.add_argument("--model", required=True,
                        help="path to a .zsposg file or a bundled model name")
        sp.add_argument("--horizon", type=_horizon, help="override the model horizon")
        sp.add_argument("--out", help="write JSON here instead of stdout")

    s = sub.add_parser("solve", help="run HSVI on a model")
    model_flags(s)
    s.add_argument("--epsilon", type=_positive, default=0.01)
    s.add_argument("--rho", type=_rho, default="auto")
    s.add_argument("--variant", choices=("cc", "lc"), default="cc")
    s.add_argument("--heuristic", choices=("init", "bmdp"), default="bmdp")
    s.add_argument("--lipschitz", choices=("theorem", "experimental"), default="theorem")
    s.add_argument("--trace", help="CSV file receiving one row per iteration")
    s.add_argument("--budget", type=parse_duration, default=86400.0,
                   help="wall-clock budget, e.g. 600s or 10m")
    s.add_argument("--max-iter", type=int, default=1_000_000)

    e = sub.add_parser("exact", help="solve by the sequence-form LP")
    model_flags(e)

    v = sub.add_parser("evaluate", help="evaluate strategies and best responses")
    model_flags(v)
    v.add_argument("--strategies", help="result JSON from 'solve' holding both strategies")
    v.add_argument("--player1", help="JSON file with a player-1 behavioral strategy")
    v.add_argument("--player2", help="JSON file with a player-2 behavioral strategy")

    b = sub.add_parser("bench", help="reproduce the benchmark table at a given budget")
    b.add_argument("--suite", default="all",
                   help="'all' or a comma-separated list of bundled game names")
    b.add_argument("--horizon-max", type=_horizon, default=3)
    b.add_argument("--budget", type=parse_duration, default=60.0, help="budget per cell")
    b.add_argument("--epsilon", type=_positive, default=0.01, help="target gap of the cc variant")
    b.add_argument("--variants", default="lc,cc,sf",
                   help="comma-separated subset of lc, cc, sf")
    b.add_argument("--out", help="write the Markdown table here instead of stdout")
    return p


# ---------------------------------------------------------------- helpers

def _load(args) -> PosgModel:
    model = resolve_model(args.model)
    return model.with_horizon(args.horizon) if args.horizon else model


def _emit(text: str, out: str | None) -> None:
    if out:
        Path(out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


def _dump(obj: dict) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


def make_solver(variant: str, **params):
    cls = OMGHSVI if variant == "cc" else LipschitzHSVI
    if variant == "lc":
        params.pop("prune_every", None)
    return cls(**params)


class _TraceWriter:
    """Streams trace rows to CSV as iterations complete."""

    def __init__(self, path: str | None, variant: str):
        self.fh = open(path, "w", newline="", encoding="utf-8") if path else None
        if self.fh:
            self.fh.write(f"# variant={variant}\n")
            self.writer = csv.writer(self.fh)
            self.writer.writerow(TRACE_COLUMNS)

    def __call__(self, _solver, row) -> None:
        if self.fh:
            self.writer.writerow([getattr(row, c) for c in TRACE_COLUMNS])
            self.fh.flush()

    def close(self) -> None:
        if self.fh:
            self.fh.close()


# ---------------------------------------------------------------- commands

def cmd_solve(args) -> int:
    model = _load(args)
    trace = _TraceWriter(args.trace, args.variant)
    solver = make_solver(args.variant, epsilon=args.epsilon, rho=args.rho,
                         heuristic=args.heuristic, lipschitz=args.lipschitz,
                         max_time=args.budget, max_iter=args.max_iter, callback=trace)
    try:
        solver.fit(model)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    finally:
        trace.close()
    res = solver.result()
    res.update({
        "model": model.name, "horizon": model.horizon, "variant": args.variant,
        "epsilon": args.epsilon, "rho": solver.rho_,
        "strategies": {"player1": solver.strategy(1).to_json(model),
                       "player2": solver.strategy(2).to_json(model)},
        "timing": {"elapsed_s": solver.elapsed_},
    })
    _emit(_dump(res), args.out)
    return EXIT_OK if solver.converged_ else EXIT_BUDGET


def cmd_exact(args) -> int:
    model = _load(args)
    t0 = time.perf_counter()
    sol = solve_exact(model)
    elapsed = time.perf_counter() - t0
    sf = build_sequence_form(model)
    out = {"model": model.name, "horizon": model.horizon, "value": sol.value,
           "num_sequences": sf.idx1.size + sf.idx2.size,
           "strategies": {"player1": sol.strategy1.to_json(model),
                          "player2": sol.strategy2.to_json(model)},
           "timing": {"elapsed_s": elapsed}}
    _emit(_dump(out), args.out)
    return EXIT_OK


def _read_json(path: str):
    try:
        return json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise ModelParseError(f"cannot read strategy file {path}: {exc}") from exc


def cmd_evaluate(args) -> int:
    model = _load(args)
    data1 = data2 = None
    if args.strategies:
        both = _read_json(args.strategies).get("strategies", {})
        data1, data2 = both.get("player1"), both.get("player2")
    if args.player1:
        data1 = _read_json(args.player1)
    if args.player2:
        data2 = _read_json(args.player2)
    if data1 is None and data2 is None:
        raise UsageError("evaluate needs --strategies, --player1 or --player2")
    try:
        s1 = BehavioralStrategy.from_json(model, 1, data1) if data1 is not None else None
        s2 = BehavioralStrategy.from_json(model, 2, data2) if data2 is not None else None
    except (KeyError, TypeError, ValueError) as exc:
        raise ModelParseError(f"malformed strategy: {exc}") from exc
    out: dict = {"model": model.name, "horizon": model.horizon}
    if s1 is not None and s2 is not None:
        out["value"] = evaluate_profile(model, s1, s2)
    if s1 is not None:
        # worst case for player 1: player 2 best-responds
        out["guaranteed_player1"] = best_response(model, s1)[1]
    if s2 is not None:
        out["guaranteed_player2"] = best_response(model, s2)[1]
    _emit(_dump(out), args.out)
    return EXIT_OK


def _fmt_time(seconds: float) -> str:
    if seconds < 60:
        return f"{seconds:.2g} s" if seconds < 10 else f"{seconds:.0f} s"
    if seconds < 3600:
        return f"{seconds / 60:.0f} min"
    return f"{seconds / 3600:.1f} h"


def _solver_cell(solver) -> str:
    if solver.converged_:
        return _fmt_time(solver.elapsed_)
    first = solver.trace_[0]
    if solver.value_ub_ >= first.ub0 - 1e-12 and solver.value_lb_ <= first.lb0 + 1e-12:
        return "(ni)"
    return f"[{solver.gap_:.2f}]"


def run_bench(games: list[str], horizon_max: int, budget: float, epsilon: float,
              variants: list[str], log=None) -> str:
    """Markdown table with one block per game: rows are solvers, columns horizons."""
    lines = []
    for name in games:
        cfg = BENCH_GAMES[name]
        base = resolve_model(name)
        hs = [h for h in cfg["horizons"] if h <= horizon_max]
        if not hs:
            continue
        title = name.replace("_", " ").title()
        lines.append(f"| {title} | " + " | ".join(f"H={h}" for h in hs) + " |")
        lines.append("|---" * (len(hs) + 1) + "|")
        for v in variants:
            if v == "lc":
                label = f"omgHSVI-lc ({cfg['lc_epsilon']:g})"
            elif v == "cc":
                label = f"omgHSVI-cc ({cfg['heuristic']}, {epsilon:g})"
            else:
                label = "Sequence form LP"
            cells = []
            for h in hs:
                model = base.with_horizon(h)
                if v == "sf":
                    t0 = time.perf_counter()
                    try:
                        solve_exact(model)
                        cells.append(_fmt_time(time.perf_counter() - t0))
                    except MemoryError:
                        cells.append("xx")
                    continue
                eps = cfg["lc_epsilon"] if v == "lc" else epsilon
                solver = make_solver(v, epsilon=eps, heuristic=cfg["heuristic"], max_time=budget)
                solver.fit(model)
                cells.append(_solver_cell(solver))
                if log:
                    log(f"{name} H={h} {v}: {cells[-1]}")
            lines.append(f"| {label} | " + " | ".join(cells) + " |")
        lines.append("")
    return "\n".join(lines)


def cmd_bench(args) -> int:
    games = list(BENCH_GAMES) if args.suite == "all" else [g.strip() for g in args.suite.split(",")]
    for g in games:
        if g not in BENCH_GAMES:
            raise UsageError(f"unknown benchmark '{g}'")
    variants = [v.strip() for v in args.variants.split(",") if v.strip()]
    if not variants or any(v not in ("lc", "cc", "sf") for v in variants):
        raise UsageError("variants must be drawn from lc, cc, sf")
    table = run_bench(games, args.horizon_max, args.budget, args.epsilon, variants,
                      log=lambda m: print(m, file=sys.stderr, flush=True))
    _emit(table, args.out)
    return EXIT_OK


COMMANDS = {"solve": cmd_solve, "exact": cmd_exact, "evaluate": cmd_evaluate, "bench": cmd_bench}


def main(argv: list[str] | None = None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"zsposg: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (FileNotFoundError, ModelParseError) as exc:
        print(f"zsposg: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
