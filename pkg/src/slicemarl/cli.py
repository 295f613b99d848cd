"""Command-line entry point: run, sweep, compare, figure."""

from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import replace
from pathlib import Path

from . import io
from .errors import SlicemarlError
from .harness import Algorithm, ExperimentConfig, compare, run_experiment, sweep

log = logging.getLogger("slicemarl")

WHICH = {"convergence": "convergence", "latency": "latency_vs_load", "throughput": "throughput_vs_load"}


class UsageError(SlicemarlError):
    code = "usage"


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def parse_seeds(text: str) -> list[int]:
    """``0..9`` (inclusive) or a comma list such as ``0,3,7``."""
    try:
        if ".." in text:
            lo, hi = text.split("..", 1)
            seeds = list(range(int(lo), int(hi) + 1))
        else:
            seeds = [int(s) for s in text.split(",") if s.strip()]
    except ValueError:
        raise UsageError(f"bad seed list {text!r}", key="seeds") from None
    if not seeds:
        raise UsageError(f"empty seed list {text!r}", key="seeds")
    return seeds


def parse_loads(text: str) -> list[float]:
    try:
        loads = [float(s) for s in text.split(",") if s.strip()]
    except ValueError:
        raise UsageError(f"bad load list {text!r}", key="loads") from None
    if not loads:
        raise UsageError("empty load list", key="loads")
    return loads


def parse_algos(text: str) -> list[str]:
    algos = [s.strip().lower() for s in text.split(",") if s.strip()]
    bad = [a for a in algos if a not in io.ALGORITHMS]
    if bad or not algos:
        raise UsageError(f"unknown algorithm(s) {bad}; choose from {', '.join(io.ALGORITHMS)}", key="algos")
    return algos


def _base_config(args) -> ExperimentConfig:
    cfg = io.parse_config(args.config) if args.config else ExperimentConfig()
    if getattr(args, "episodes", None) is not None:
        cfg = replace(cfg, episodes=args.episodes)
    return cfg


def cmd_run(args) -> int:
    cfg = _base_config(args)
    if args.seed is not None:
        cfg = replace(cfg, seed=args.seed)
    if args.algo is not None:
        cfg = replace(cfg, algorithm=Algorithm(parse_algos(args.algo)[0]))
    res = run_experiment(cfg)
    path = io.save_run(res, args.out)
    st = res.converged_window_stats
    print(
        f"{cfg.algorithm.value} seed={cfg.seed} load={io.load_of(cfg):g}Mbps "
        f"reward={st['reward'][0]:.4f} delay_ms={1e3 * st['delay'][0]:.4f} "
        f"throughput_mbps={st['throughput'][0] / 1e6:.4f} -> {path}"
    )
    return 0


def cmd_sweep(args) -> int:
    cfg = _base_config(args)
    results, failures = sweep(
        cfg, parse_loads(args.loads), parse_algos(args.algos), parse_seeds(args.seeds), workers=args.workers
    )
    for key in sorted(results):
        io.save_run(results[key], args.out)
    print(f"wrote {len(results)} run(s) to {args.out}")
    for (load, algo, seed), err in sorted(failures.items()):
        print(f"error code=run_failed key={algo}@{load:g}/seed{seed} msg={err!r}", file=sys.stderr)
    return 1 if failures else 0


def cmd_compare(args) -> int:
    results = io.load_results(args.input)
    by_load: dict[float, list] = {}
    for r in results:
        by_load.setdefault(io.load_of(r.config), []).append(r)
    for load in sorted(by_load):
        print(f"load {load:g} Mbps")
        for line in compare(by_load[load], args.metric).lines():
            print("  " + line)
    return 0


def cmd_figure(args) -> int:
    results = io.load_results(args.input)
    data = io.emit_figure_data(results, WHICH[args.which], args.out, load=args.load)
    print(f"{data.figure}: {len(data.x)} rows x {len(data.series)} series -> {args.out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="slicemarl", description="Two-agent RAN slicing with independent, VDN and prioritized VDN learners.")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="cmd", required=True, parser_class=_Parser)

    p = sub.add_parser("run", help="train one configuration and write its per-episode metrics")
    p.add_argument("--config", type=Path)
    p.add_argument("--seed", type=int)
    p.add_argument("--algo", help="override run.algorithm")
    p.add_argument("--episodes", type=int)
    p.add_argument("--out", type=Path, required=True)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("sweep", help="loads x algorithms x seeds grid")
    p.add_argument("--config", type=Path)
    p.add_argument("--loads", default="1,2,3")
    p.add_argument("--algos", default=",".join(io.ALGORITHMS))
    p.add_argument("--seeds", default="0..9")
    p.add_argument("--episodes", type=int)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--out", type=Path, required=True)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("compare", help="converged-window comparison per load")
    p.add_argument("--in", dest="input", type=Path, required=True)
    p.add_argument("--metric", choices=["delay", "throughput", "reward"], required=True)
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("figure", help="emit CSV data for one figure")
    p.add_argument("--in", dest="input", type=Path, required=True)
    p.add_argument("--which", choices=sorted(WHICH), required=True)
    p.add_argument("--load", type=float, help="load for the convergence figure (default: median present)")
    p.add_argument("--out", type=Path, required=True)
    p.set_defaults(func=cmd_figure)
    return ap


def main(argv: list[str] | None = None) -> int:
    try:
        args = build_parser().parse_args(argv)
        logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
        return args.func(args)
    except SlicemarlError as exc:
        print(exc.machine_line(), file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error code=io_error key={getattr(exc, 'filename', None)} msg={str(exc)!r}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
