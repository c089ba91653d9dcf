"""Command-line interface.

Commands::

    decide      decide one hypothesis from a seeded or recorded stream
    boundaries  export simctest boundaries for one threshold
    effort      effort curves of both methods with lower bounds
    probs       decision probabilities per rating code
    lowerbound  basic and improved lower bounds
    table2      integrated effort under the standard p-value densities
    screen      screening experiment over many hypotheses

Reports are JSON, curves and tables are CSV.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
from dataclasses import dataclass
from pathlib import Path

from .buckets import load_bucket_set
from .confseq_simctest import SpendingSequence, build_boundaries
from .engine import METHODS, BatchSchedule, ExceedanceStream, run
from .errors import McBucketsError

EXIT_OK, EXIT_ERROR, EXIT_TRUNCATED = 0, 1, 2


@dataclass(frozen=True)
class RunConfig:
    """Settings of a ``decide`` run.

    Attributes:
        buckets: Named set or path to a JSON bucket file.
        method: ``"rl"`` or ``"simctest"``.
        eps: Risk bound.
        spending_k: Parameter of the default spending sequence.
        batch_b, batch_a: Batch schedule.
        seed: Stream seed.
        n_cap: Sample cap.
        out: Output path, or None for stdout.
    """

    buckets: str = "Jstar"
    method: str = "simctest"
    eps: float = 1e-3
    spending_k: float = 1000.0
    batch_b: int = 10
    batch_a: float = 1.1
    seed: int = 0
    n_cap: int = 10**7
    out: str | None = None

    def __post_init__(self) -> None:
        if self.method not in METHODS:
            raise ValueError(f"method must be one of {METHODS}")
        if not 0.0 < self.eps < 1.0:
            raise ValueError("eps must lie in (0, 1)")
        if self.n_cap < 1:
            raise ValueError("n-cap must be at least 1")

    @property
    def schedule(self) -> BatchSchedule:
        return BatchSchedule(self.batch_b, self.batch_a)

    def to_json(self) -> str:
        return json.dumps(dataclasses.asdict(self), sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> RunConfig:
        return cls(**json.loads(text))

    @classmethod
    def from_args(cls, args: argparse.Namespace) -> RunConfig:
        names = [f.name for f in dataclasses.fields(cls)]
        base = cls.from_json(Path(args.config).read_text()) if getattr(args, "config", None) else cls()
        given = {k: v for k, v in vars(args).items() if k in names and v is not None}
        return dataclasses.replace(base, **given)


def _emit(text: str, out: str | None) -> None:
    if out:
        Path(out).write_text(text if text.endswith("\n") else text + "\n")
    else:
        sys.stdout.write(text if text.endswith("\n") else text + "\n")


def cmd_decide(args: argparse.Namespace) -> int:
    cfg = RunConfig.from_args(args)
    bset = load_bucket_set(cfg.buckets)
    if args.stream:
        stream = ExceedanceStream.recorded(args.stream)
    elif args.p is not None:
        stream = ExceedanceStream.bernoulli(args.p, cfg.seed)
    else:
        raise ValueError("give --p or --stream")
    rep = run(stream, bset, cfg.eps, cfg.method, cfg.schedule, cfg.n_cap, spending_k=cfg.spending_k)
    _emit(rep.to_json(), cfg.out)
    return EXIT_TRUNCATED if rep.truncated else EXIT_OK


def cmd_boundaries(args: argparse.Namespace) -> int:
    table = build_boundaries(args.alpha, SpendingSequence(args.rho, args.spending_k), args.n)
    _emit(table.to_csv(), args.out)
    return EXIT_OK


def _grid(args):
    from .analysis import p_grid

    return p_grid(args.grid)


def cmd_effort(args: argparse.Namespace) -> int:
    from .analysis import effort_csv

    _emit(effort_csv(load_bucket_set(args.buckets), args.eps, _grid(args), args.spending_k), args.out)
    return EXIT_OK


def cmd_probs(args: argparse.Namespace) -> int:
    from .analysis import decision_probs_csv, make_predicate

    pred = make_predicate(args.method, load_bucket_set(args.buckets), args.eps, args.spending_k)
    _emit(decision_probs_csv(pred, _grid(args)), args.out)
    return EXIT_OK


def cmd_lowerbound(args: argparse.Namespace) -> int:
    from .analysis import lower_bound_csv

    _emit(lower_bound_csv(load_bucket_set(args.buckets), args.eps, _grid(args), args.delta), args.out)
    return EXIT_OK


def cmd_table2(args: argparse.Namespace) -> int:
    from .analysis import table2, table2_csv

    _emit(table2_csv(table2(load_bucket_set(args.buckets), args.eps, args.spending_k)), args.out)
    return EXIT_OK


def cmd_screen(args: argparse.Namespace) -> int:
    from .analysis import ScreeningSetup, screen

    setup = ScreeningSetup(args.n_hyp, args.n_alt)
    rep = screen(setup, load_bucket_set(args.buckets), args.eps, BatchSchedule(args.batch_b, args.batch_a), args.seed)
    if args.out:
        Path(args.out).write_text(rep.to_csv())
    sys.stdout.write(rep.to_json() + "\n")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mcbuckets", description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, buckets="Jstar", curves=False):
        p.add_argument("--buckets", default=buckets, help="J0, Jstar, Js, single or a JSON file")
        p.add_argument("--eps", type=float, default=1e-3)
        p.add_argument("--spending-k", type=float, default=1000.0)
        p.add_argument("--out", default=None, help="output file (default stdout)")
        if curves:
            p.add_argument("--grid", type=int, default=200, help="number of p values")

    p = sub.add_parser("decide", help="decide one hypothesis")
    # defaults live in RunConfig so that --config values are not overridden
    p.add_argument("--config", default=None, help="RunConfig JSON file")
    p.add_argument("--buckets", default=None)
    p.add_argument("--method", choices=METHODS, default=None)
    p.add_argument("--eps", type=float, default=None)
    p.add_argument("--spending-k", type=float, default=None)
    p.add_argument("--batch-b", type=int, default=None)
    p.add_argument("--batch-a", type=float, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--n-cap", type=int, default=None)
    p.add_argument("--out", default=None)
    p.add_argument("--p", type=float, default=None, help="true p of a seeded Bernoulli stream")
    p.add_argument("--stream", default=None, help="recorded stream file")
    p.set_defaults(func=cmd_decide)

    p = sub.add_parser("boundaries", help="simctest boundaries as CSV")
    p.add_argument("--alpha", type=float, required=True)
    p.add_argument("--rho", type=float, default=5e-4)
    p.add_argument("--spending-k", type=float, default=1000.0)
    p.add_argument("--n", type=int, required=True, help="last sample count")
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_boundaries)

    p = sub.add_parser("effort", help="effort curves as CSV")
    common(p, curves=True)
    p.set_defaults(func=cmd_effort)

    p = sub.add_parser("probs", help="decision probability curves as CSV")
    common(p, curves=True)
    p.add_argument("--method", choices=METHODS, default="simctest")
    p.set_defaults(func=cmd_probs)

    p = sub.add_parser("lowerbound", help="lower bound curves as CSV")
    common(p, curves=True)
    p.add_argument("--delta", type=float, default=1e-3)
    p.set_defaults(func=cmd_lowerbound)

    p = sub.add_parser("table2", help="integrated effort table as CSV")
    common(p)
    p.set_defaults(func=cmd_table2)

    p = sub.add_parser("screen", help="screening experiment")
    common(p, buckets="Js")
    p.add_argument("--n-hyp", type=int, default=10_000)
    p.add_argument("--n-alt", type=int, default=100)
    p.add_argument("--batch-b", type=int, default=10)
    p.add_argument("--batch-a", type=float, default=1.1)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_screen)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (McBucketsError, ValueError, OSError, EOFError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
