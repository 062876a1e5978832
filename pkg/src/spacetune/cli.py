"""Command line entry point.

Exit codes: 0 success, 1 usage error, 2 data or store error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys

from . import bench
from .pipeline.cifar import DATA_ENV, DataError
from .searchspace import SpaceError, parse_space, sample_prior, validate_graph
from .trialdb import StoreError, TrialStore, best_trial

EXIT_USAGE = 1
EXIT_DATA = 2


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def build_parser():
    p = _Parser(prog="spacetune", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    opt = sub.add_parser("optimize", help="run or resume an experiment")
    opt.add_argument("--space", required=True, help="space file or shipped space name")
    opt.add_argument("--loss", required=True, choices=sorted(bench.builtin_losses()))
    opt.add_argument("--algo", choices=("random", "tpe"), default="tpe")
    opt.add_argument("--max-trials", type=int, required=True)
    opt.add_argument("--workers", type=int, default=1)
    opt.add_argument("--seed", type=int, default=0)
    opt.add_argument("--db", required=True, help="JSON-lines trial store")
    opt.add_argument("--n-startup", type=int, default=50)
    opt.add_argument("--ramp-flat", type=int, default=25)
    opt.add_argument("--n-candidates", type=int, default=24)

    rep = sub.add_parser("report", help="best-so-far table of a trial store")
    rep.add_argument("--db", required=True)
    rep.add_argument("--csv", help="write the table here instead of stdout")

    smp = sub.add_parser("sample", help="print prior samples as JSON lines")
    smp.add_argument("--space", required=True)
    smp.add_argument("--n", type=int, default=1)
    smp.add_argument("--seed", type=int, default=0)

    val = sub.add_parser("validate", help="check a space file")
    val.add_argument("--space", required=True)

    p.epilog = f"The cifar10-desk loss reads CIFAR-10 binary batches from ${DATA_ENV}."
    return p


def _optimize(args):
    try:
        config = bench.ExperimentConfig(
            space=args.space,
            loss=args.loss,
            algo=args.algo,
            max_trials=args.max_trials,
            workers=args.workers,
            seed=args.seed,
            store=args.db,
            n_startup=args.n_startup,
            ramp_flat=args.ramp_flat,
            n_candidates=args.n_candidates,
        )
    except ValueError as exc:
        print(f"spacetune: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    store = bench.run_experiment(config)
    trials = store.snapshot()
    best = best_trial(trials)
    n_ok = sum(t.status == "ok" for t in trials)
    print(f"{len(trials)} trials ({n_ok} ok) in {args.db}")
    if best is not None:
        print(f"best loss {best.loss!r} (trial {best.trial_id})")
    return 0


def _report(args):
    text = bench.report(TrialStore(args.db))
    if args.csv:
        with open(args.csv, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    return 0


def _sample(args):
    graph = parse_space(bench.load_space(args.space))
    for i in range(args.n):
        a = sample_prior(graph, bench.trial_seed(args.seed, i))
        print(json.dumps(dict(a.values), sort_keys=True))
    return 0


def _validate(args):
    graph = parse_space(bench.load_space(args.space), validate=False)
    problems = validate_graph(graph)
    for d in problems:
        print(d)
    if problems:
        return EXIT_DATA
    print(f"ok: {len(graph.roots)} statements, {len(graph.labels)} hyperparameters")
    return 0


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING)
    handler = {"optimize": _optimize, "report": _report, "sample": _sample, "validate": _validate}
    try:
        return handler[args.command](args)
    except (SpaceError, StoreError, DataError, OSError) as exc:
        print(f"spacetune: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
