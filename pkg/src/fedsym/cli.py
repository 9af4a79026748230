"""Command-line recipes: partition, sweep, train, cka.

Exit codes: 0 success, 1 usage error, 2 domain error. Every output file gets
a ``<file>.meta.json`` sidecar holding the full configuration that made it.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import math
import sys
from pathlib import Path


from . import __version__
from .cka import cka_csv, cka_matrix
from .dataset import index_of, load_dataset, parse_dataset_spec
from .errors import FedSymError
from .flsim import Strategy, TrainConfig, load_model, roundlog_csv, run_federation, save_model
from .partition import (
    dirichlet_partition,
    fedsym_partition,
    heterogeneity_report,
    plan_from_json,
    plan_to_json,
    quantity_label_partition,
    validate_plan,
)

log = logging.getLogger("fedsym")

EXIT_USAGE = 1
EXIT_DOMAIN = 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _write(path, text: str) -> None:
    Path(path).write_text(text, encoding="utf-8", newline="\n")


def _write_meta(path, config: dict) -> None:
    _write(f"{path}.meta.json", json.dumps(config, indent=2, sort_keys=True) + "\n")


def _dataset(spec: str) -> dict:
    try:
        return parse_dataset_spec(spec)
    except ValueError as e:
        raise UsageError(f"--dataset: {e}") from None


def _fmt_index(x: float) -> str:
    return repr(float(x))


def parse_range(text: str) -> list:
    """``start:stop:step`` with an inclusive stop, e.g. ``0.1:1.0:0.1``."""
    parts = text.split(":")
    if len(parts) != 3:
        raise UsageError(f"range {text!r} is not start:stop:step")
    try:
        start, stop, step = (float(p) for p in parts)
    except ValueError:
        raise UsageError(f"range {text!r} has a non-numeric field") from None
    if not (math.isfinite(start) and math.isfinite(stop) and math.isfinite(step)) or step <= 0 or stop < start:
        raise UsageError(f"range {text!r} needs finite start <= stop and step > 0")
    count = int(math.floor((stop - start) / step + 1e-9)) + 1
    return [round(start + i * step, 10) for i in range(count)]


# partition ---------------------------------------------------------------

def report_csv(plan) -> str:
    rep = heterogeneity_report(plan)
    out = io.StringIO()
    w = csv.writer(out, lineterminator="\n")
    w.writerow(["client", "beta"])
    for c in plan.clients:
        w.writerow([c.client_id, f"{c.beta:.6f}"])
    w.writerow(["min", "max", "mean", "std"])
    w.writerow([f"{v:.6f}" for v in (rep.min, rep.max, rep.mean, rep.std)])
    return out.getvalue()


def _make_plan(args, index):
    if args.method == "fedsym":
        if args.beta is None:
            raise UsageError("--beta is required with --method fedsym")
        if not 0 <= args.beta <= 1:
            raise UsageError("--beta must lie in [0, 1]")
        return fedsym_partition(index, args.clients, args.beta, args.eps, args.seed, args.samples_per_client)
    if args.method == "dirichlet":
        if args.alpha is None:
            raise UsageError("--alpha is required with --method dirichlet")
        if args.alpha <= 0:
            raise UsageError("--alpha must be positive")
        return dirichlet_partition(index, args.clients, args.alpha, args.seed)
    if args.labels_per_client is None:
        raise UsageError("--labels-per-client is required with --method quantity")
    return quantity_label_partition(index, args.clients, args.labels_per_client, args.seed)


def cmd_partition(args) -> int:
    spec = _dataset(args.dataset)
    if args.clients < 1:
        raise UsageError("--clients must be positive")
    store = load_dataset(spec)
    plan = _make_plan(args, index_of(store))
    validate_plan(plan, store.labels)
    report = args.report or str(Path(args.out).with_suffix(".report.csv"))
    _write(args.out, plan_to_json(plan))
    _write(report, report_csv(plan))
    config = {
        "command": "partition",
        "dataset": spec,
        "method": args.method,
        "beta": args.beta,
        "alpha": args.alpha,
        "labels_per_client": args.labels_per_client,
        "eps": args.eps,
        "samples_per_client": args.samples_per_client,
        "clients": args.clients,
        "seed": args.seed,
        "out": args.out,
        "report": report,
    }
    _write_meta(args.out, config)
    _write_meta(report, config)
    return 0


# sweep -------------------------------------------------------------------

def cmd_sweep(args) -> int:
    values = parse_range(args.range)
    spec = _dataset(args.dataset)
    if args.method == "fedsym" and not all(0 <= v <= 1 for v in values):
        raise UsageError("fedsym sweep values must lie in [0, 1]")
    index = index_of(load_dataset(spec))
    out = io.StringIO()
    w = csv.writer(out, lineterminator="\n")
    w.writerow(["index", "mean_beta"])
    for v in values:
        if args.method == "fedsym":
            plan = fedsym_partition(index, args.clients, v, args.eps, args.seed)
        else:
            plan = dirichlet_partition(index, args.clients, v, args.seed)
        w.writerow([_fmt_index(v), f"{heterogeneity_report(plan).mean:.6f}"])
    _write(args.out, out.getvalue())
    _write_meta(args.out, {
        "command": "sweep",
        "dataset": spec,
        "method": args.method,
        "range": args.range,
        "clients": args.clients,
        "eps": args.eps,
        "seed": args.seed,
        "out": args.out,
    })
    return 0


# train -------------------------------------------------------------------

def default_testset(spec: dict) -> dict:
    if spec["kind"] != "synthetic":
        raise UsageError("--testset is required for non-synthetic datasets")
    return {**spec, "seed": spec["seed"] + 1000}


def cmd_train(args) -> int:
    spec = _dataset(args.dataset)
    test_spec = _dataset(args.testset) if args.testset else default_testset(spec)
    try:
        cfg = TrainConfig(
            lr=args.lr,
            lr_decay=args.lr_decay,
            momentum=args.momentum,
            batch_size=args.batch_size,
            local_epochs=args.local_epochs,
            rounds=args.rounds,
            prox_mu=args.mu,
            seed=args.seed,
            hidden=args.hidden,
        )
    except ValueError as e:
        raise UsageError(str(e)) from None
    plan = plan_from_json(Path(args.plan).read_text(encoding="utf-8"))
    store = load_dataset(spec)
    validate_plan(plan, store.labels)
    testset = load_dataset(test_spec)
    result = run_federation(plan, store, testset, Strategy(args.strategy), cfg, workers=args.workers)
    _write(args.out_log, roundlog_csv(result.log))
    save_model(result.params, args.out_model)
    config = {
        "command": "train",
        "dataset": spec,
        "testset": test_spec,
        "plan": args.plan,
        "strategy": args.strategy,
        "train": {k: getattr(cfg, k) for k in cfg.__dataclass_fields__},
        "out_log": args.out_log,
        "out_model": args.out_model,
    }
    _write_meta(args.out_log, config)
    _write_meta(args.out_model, config)
    log.info("final accuracy %.4f", result.final_accuracy)
    return 0


# cka ---------------------------------------------------------------------

def cmd_cka(args) -> int:
    if len(args.models) < 2:
        raise UsageError("cka needs at least two model files")
    labels = args.labels.split(",") if args.labels else [Path(m).stem for m in args.models]
    if len(labels) != len(args.models):
        raise UsageError("--labels must name every model")
    spec = _dataset(args.dataset)
    models = [load_model(m) for m in args.models]
    first = models[0]
    for path, m in zip(args.models, models):
        if (m.d, m.h, m.l) != (first.d, first.h, first.l):
            raise FedSymError(f"{path}: shape {m.d}-{m.h}-{m.l} differs from {first.d}-{first.h}-{first.l}")
    testset = load_dataset(spec)
    if testset.dims != first.d:
        raise FedSymError(f"test set has {testset.dims} features, models expect {first.d}")
    _write(args.out, cka_csv(cka_matrix(models, testset, labels)))
    _write_meta(args.out, {
        "command": "cka",
        "dataset": spec,
        "models": list(args.models),
        "labels": labels,
        "out": args.out,
    })
    return 0


# parser ------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="fedsym", description="Entropy-controlled FL partitioning and desk-scale benchmarks.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    sp = sub.add_parser("partition", help="split a dataset into client shards")
    sp.add_argument("--method", choices=["fedsym", "dirichlet", "quantity"], required=True)
    sp.add_argument("--beta", type=float, help="target entropy balance (fedsym)")
    sp.add_argument("--alpha", type=float, help="Dirichlet concentration")
    sp.add_argument("--labels-per-client", type=int, help="distinct labels per client (quantity)")
    sp.add_argument("--clients", type=int, default=10)
    sp.add_argument("--dataset", required=True, help="synthetic:l=10,n=500,d=16,sep=4 or idx:images=..,labels=..")
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--eps", type=float, default=1e-3)
    sp.add_argument("--samples-per-client", type=int, help="fix S instead of deriving it (fedsym)")
    sp.add_argument("--out", required=True)
    sp.add_argument("--report", help="report CSV path (default: <out>.report.csv)")
    sp.set_defaults(func=cmd_partition)

    sw = sub.add_parser("sweep", help="mean entropy balance across a heterogeneity range")
    sw.add_argument("--method", choices=["dirichlet", "fedsym"], default="dirichlet")
    sw.add_argument("--range", required=True, help="start:stop:step, stop inclusive")
    sw.add_argument("--clients", type=int, default=10)
    sw.add_argument("--dataset", required=True)
    sw.add_argument("--seed", type=int, default=0)
    sw.add_argument("--eps", type=float, default=1e-3)
    sw.add_argument("--out", required=True)
    sw.set_defaults(func=cmd_sweep)

    defaults = TrainConfig()
    tr = sub.add_parser("train", help="run a federation over a plan")
    tr.add_argument("--plan", required=True)
    tr.add_argument("--dataset", required=True)
    tr.add_argument("--testset", help="default for synthetic data: same spec with seed + 1000")
    tr.add_argument("--strategy", choices=[s.value for s in Strategy], required=True)
    tr.add_argument("--mu", type=float, default=defaults.prox_mu, help="FedProx proximal weight")
    tr.add_argument("--lr", type=float, default=defaults.lr)
    tr.add_argument("--lr-decay", type=float, default=defaults.lr_decay)
    tr.add_argument("--momentum", type=float, default=defaults.momentum)
    tr.add_argument("--batch-size", type=int, default=defaults.batch_size)
    tr.add_argument("--local-epochs", type=int, default=defaults.local_epochs)
    tr.add_argument("--rounds", type=int, default=defaults.rounds)
    tr.add_argument("--hidden", type=int, default=defaults.hidden)
    tr.add_argument("--seed", type=int, default=0)
    tr.add_argument("--workers", type=int, default=1, help="client threads; output does not depend on it")
    tr.add_argument("--out-log", required=True)
    tr.add_argument("--out-model", required=True)
    tr.set_defaults(func=cmd_train)

    ck = sub.add_parser("cka", help="pairwise linear CKA of saved models")
    ck.add_argument("models", nargs="+")
    ck.add_argument("--dataset", required=True, help="test set the models are compared on")
    ck.add_argument("--labels", help="comma-separated row/column labels")
    ck.add_argument("--out", required=True)
    ck.set_defaults(func=cmd_cka)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except UsageError as e:
        parser.print_usage(sys.stderr)
        print(f"fedsym {args.command}: error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except (FedSymError, ValueError, OSError) as e:
        print(f"fedsym {args.command}: {type(e).__name__}: {e}", file=sys.stderr)
        return EXIT_DOMAIN


if __name__ == "__main__":
    sys.exit(main())
