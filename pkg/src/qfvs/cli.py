"""Command-line entry point: ``qfvs <command> ...``.

Every command exits 0 on success. Failures print one JSON line
``{"error": <kind>, "message": <text>}`` to stderr and exit 1.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys

from . import core
from .metric import MODES, evaluate_multi
from .model import load_params, save_params, selection_to_summary, summarize
from .oracle import POOLS, attach_oracles
from .perturb import curve_experiment, rows_to_csv
from .queries import DEFAULT_COUNTS, build_queries
from .synth import SynthConfig, generate
from .trainer import GradCheckConfig, TrainConfig, gradient_check, split_leave_one_out, train


class CLIError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    """Usage errors also come out as a single JSON line."""

    def error(self, message):
        print(json.dumps({"error": "UsageError", "message": f"{self.prog}: {message}"}), file=sys.stderr)
        sys.exit(2)


def _read_json(path):
    with open(path, encoding="utf-8") as fh:
        return json.load(fh)


def _float_list(text):
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _counts(text):
    try:
        values = tuple(int(x) for x in text.split(","))
    except ValueError:
        values = ()
    if len(values) != 4 or any(v < 0 for v in values):
        raise argparse.ArgumentTypeError("counts must be four non-negative integers i,ii,iii,iv")
    return values


def cmd_gen(args):
    raw = _read_json(args.config) if args.config else {}
    raw["seed"] = args.seed
    d = generate(SynthConfig.from_dict(raw))
    core.save_dataset(d, args.out)
    print(json.dumps({"videos": len(d.videos), "queries": len(d.queries),
                      "user_summaries": len(d.user_summaries), "out": args.out}))


def cmd_queries(args):
    d = core.load_dataset(args.dataset)
    v = d.video(args.video)
    new = build_queries(v, len(d.dictionary), args.counts, seed=args.seed, t_presence=args.t_presence)
    dropped = {q.id for q in d.queries if q.video == v.id}
    queries = [q for q in d.queries if q.video != v.id] + new
    users = [s for s in d.user_summaries if s.query_id not in dropped]
    oracles = None if d.oracle_summaries is None else [
        s for s in d.oracle_summaries if s.query_id not in dropped]
    out = d.replace(queries=tuple(queries), user_summaries=tuple(users), oracle_summaries=oracles)
    core.save_dataset(out, args.out or args.dataset)
    for q in new:
        print(json.dumps({"id": q.id, "video": q.video, "concepts": sorted(q.concepts), "scenario": q.scenario}))


def cmd_oracle(args):
    d = core.load_dataset(args.dataset)
    out, traces = attach_oracles(d, args.pool)
    core.save_dataset(out, args.out)
    if args.trace:
        with open(args.trace, "w", encoding="utf-8") as fh:
            json.dump([t.as_record() for t in traces], fh, indent=1)
            fh.write("\n")
    print(json.dumps({"oracles": len(out.oracle_summaries), "out": args.out}))


def cmd_eval(args):
    d = core.load_dataset(args.dataset)
    systems = core.load_summaries(args.system, d)
    rows = []
    for s in systems:
        refs = d.users_for(s.query_id)
        if not refs:
            raise CLIError(f"query {s.query_id!r} has no user summaries to evaluate against")
        rep = evaluate_multi(s, refs, d.video(s.video_id), args.mode)
        rows.append({"query": s.query_id, "video": s.video_id, **rep.as_record()})
    if rows:
        n = len(rows)
        rows.append({"query": "MEAN", "video": "", "mode": args.mode,
                     **{k: sum(r[k] for r in rows) / n for k in ("precision", "recall", "f1")}})
    with open(args.out, "w", newline="", encoding="utf-8") as fh:
        w = csv.DictWriter(fh, fieldnames=["query", "video", "precision", "recall", "f1", "mode"],
                           lineterminator="\n")
        w.writeheader()
        w.writerows(rows)
    if rows:
        print(json.dumps(rows[-1]))


def cmd_train(args):
    d = core.load_dataset(args.dataset)
    cfg = TrainConfig.from_dict(_read_json(args.config)) if args.config else TrainConfig()
    d_train, d_val, _ = split_leave_one_out(d, args.test, args.val)
    params, history = train(d_train, d_val, cfg)
    save_params(params, args.out, K=d.videos[0].frames.shape[1])
    if args.log:
        history.write_csv(args.log)
    print(json.dumps({"selected_epoch": history.selected_epoch,
                      "val_f1": history.val_f1[history.selected_epoch - 1] if history.val_f1 else None,
                      "out": args.out}))


def cmd_summarize(args):
    d = core.load_dataset(args.dataset)
    params = load_params(args.checkpoint)
    v = d.video(args.video)
    q = d.query(args.query)
    if q.video != v.id:
        raise CLIError(f"query {q.id!r} belongs to video {q.video!r}, not {v.id!r}")
    s = selection_to_summary(v, summarize(params, v, q), q.id)
    core.save_summaries([s], args.out)
    print(json.dumps({"query": q.id, "shots": list(s.shots)}))


def cmd_perturb(args):
    d = core.load_dataset(args.dataset)
    videos = {v.id: v for v in d.videos}
    rows = curve_experiment(d.user_summaries, videos, args.fractions, args.trials, args.mode, args.seed)
    with open(args.out, "w", encoding="utf-8", newline="") as fh:
        fh.write(rows_to_csv(rows))


def cmd_gradcheck(args):
    raw = _read_json(args.config) if args.config else {}
    tolerance = float(raw.pop("tolerance", 1e-4))
    report = gradient_check(GradCheckConfig.from_dict(raw), args.seed)
    report["tolerance"] = tolerance
    report["passed"] = report["max_rel_error"] <= tolerance
    print(json.dumps(report))
    if not report["passed"]:
        raise CLIError(f"max relative error {report['max_rel_error']:.3g} exceeds {tolerance:g}")


def build_parser():
    parser = _Parser(prog="qfvs", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", help="generate a synthetic dataset")
    p.add_argument("--config")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("queries", help="rebuild the scenario queries of one video")
    p.add_argument("--dataset", required=True)
    p.add_argument("--video", required=True)
    p.add_argument("--t-presence", type=int, default=1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--counts", type=_counts, default=DEFAULT_COUNTS)
    p.add_argument("--out", help="write here instead of updating --dataset in place")
    p.set_defaults(func=cmd_queries)

    p = sub.add_parser("oracle", help="aggregate user summaries into oracle summaries")
    p.add_argument("--dataset", required=True)
    p.add_argument("--pool", choices=POOLS, default="union")
    p.add_argument("--out", required=True)
    p.add_argument("--trace")
    p.set_defaults(func=cmd_oracle)

    p = sub.add_parser("eval", help="score system summaries against the user summaries")
    p.add_argument("--dataset", required=True)
    p.add_argument("--system", required=True)
    p.add_argument("--mode", choices=MODES, default="count")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("train", help="train on all but a test and a validation video")
    p.add_argument("--dataset", required=True)
    p.add_argument("--test", required=True)
    p.add_argument("--val", required=True)
    p.add_argument("--config")
    p.add_argument("--out", required=True)
    p.add_argument("--log")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("summarize", help="MAP summary of one video for one query")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--dataset", required=True)
    p.add_argument("--video", required=True)
    p.add_argument("--query", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_summarize)

    p = sub.add_parser("perturb", help="metric curves under random deletion/replacement")
    p.add_argument("--dataset", required=True)
    p.add_argument("--mode", choices=("delete", "replace"), required=True)
    p.add_argument("--fractions", type=_float_list, default=[i / 10 for i in range(10)])
    p.add_argument("--trials", type=int, default=100)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_perturb)

    p = sub.add_parser("gradcheck", help="compare analytic and finite-difference gradients")
    p.add_argument("--config")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_gradcheck)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        args.func(args)
    except (CLIError, ValueError, ArithmeticError, OSError, RuntimeError, KeyError) as exc:
        message = str(exc).replace("\n", " ")
        print(json.dumps({"error": type(exc).__name__, "message": message}), file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
