"""Command-line entry point: ``tkgrule {stats,mine,train,eval,predict,explain,synth}``."""
from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import fields
from pathlib import Path

import yaml

from .core import DatasetError, TimeInterval, augment_inverses, load_dataset, save_dataset
from .mining import RuleSet, mine_ruleset
from .model import CheckpointError, TrainConfig, load_model
from .predict import LinkQuery, TimeQuery
from .train import TrainingError, eval_link, eval_time, train

logger = logging.getLogger("tkgrule")

_CONFIG_FIELDS = {f.name for f in fields(TrainConfig)}


class CliError(Exception):
    pass


def _load(data) -> object:
    return augment_inverses(load_dataset(data))


def _load_rules(path, dataset) -> RuleSet:
    if not Path(path).is_file():
        raise CliError(f"missing rule file {path}")
    try:
        return RuleSet.load(path, dataset.relations)
    except ValueError as exc:
        raise CliError(f"{path}: {exc}") from None


def read_config(path) -> dict:
    """Training options from a YAML or JSON file (JSON is valid YAML)."""
    p = Path(path)
    if not p.is_file():
        raise CliError(f"missing config file {path}")
    raw = yaml.safe_load(p.read_text()) or {}
    if not isinstance(raw, dict):
        raise CliError(f"config {path} must be a mapping")
    raw = {k.replace("-", "_"): v for k, v in raw.items()}
    unknown = set(raw) - _CONFIG_FIELDS - {"data", "rules", "out"}
    if unknown:
        raise CliError(f"unknown config keys: {', '.join(sorted(unknown))}")
    return raw


def format_metrics(metrics: dict[str, float]) -> str:
    width = max(len(k) for k in metrics)
    rule = "-" * (width + 12)
    table = [rule, f"{'metric':<{width}}  {'value':>8}", rule]
    table += [f"{k:<{width}}  {v:>8.4f}" for k, v in metrics.items()]
    table.append(rule)
    machine = [f"{k}\t{v!r}" for k, v in metrics.items()]
    return "\n".join(table + machine)


def _parse_query(fields_, dataset):
    """``S R ? B E`` is a link query, ``S R O ? ?`` (or ``S R O``) a time query."""
    if len(fields_) not in (3, 5):
        raise CliError("a query has 5 fields: S R ? B E (link) or S R O ? ? (time)")
    s = dataset.entity_id(fields_[0])
    r = dataset.relation_id(fields_[1])
    if fields_[2] == "?":
        if len(fields_) != 5:
            raise CliError("link query needs begin and end years")
        try:
            b, e = int(fields_[3]), int(fields_[4])
        except ValueError:
            raise CliError("link query interval must be two integer years") from None
        if b > e:
            raise CliError("query interval begins after it ends")
        return LinkQuery(s, r, TimeInterval(b, e))
    return TimeQuery(s, r, dataset.entity_id(fields_[2]))


def _read_queries(args, dataset):
    lines = []
    if args.query:
        lines.append(args.query)
    if args.queries:
        for line in Path(args.queries).read_text(encoding="utf-8").splitlines():
            if line.strip():
                lines.append(line.split("\t"))
    if not lines:
        raise CliError("give --query or --queries")
    return [(q, _parse_query(q, dataset)) for q in lines]


# ---------------------------------------------------------------------------
# Subcommands


def cmd_stats(args) -> int:
    print(load_dataset(args.data).summary())
    return 0


def cmd_synth(args) -> int:
    from .synthetic import planted_dataset

    ds = planted_dataset(args.entities, args.pairs, seed=args.seed)
    save_dataset(ds, args.out)
    print(f"wrote planted dataset to {args.out}")
    return 0


def cmd_mine(args) -> int:
    ds = _load(args.data)
    rules = mine_ruleset(ds, max_len=args.max_len, min_support=args.min_support)
    rules.save(args.out, ds.relations)
    print(f"mined {len(rules)} rules -> {args.out}")
    return 0


def cmd_train(args) -> int:
    options = read_config(args.config) if args.config else {}
    for name in _CONFIG_FIELDS | {"data", "rules", "out"}:
        value = getattr(args, name, None)
        if value is not None:
            options[name] = value
    for name in ("data", "rules", "out"):
        if name not in options:
            raise CliError(f"--{name} is required (flag or config file)")
    data, rules_path, out = options.pop("data"), options.pop("rules"), options.pop("out")
    try:
        config = TrainConfig(**options)
    except (TypeError, ValueError) as exc:
        raise CliError(f"bad training config: {exc}") from None
    ds = _load(data)
    rules = _load_rules(rules_path, ds)

    def report(rec):
        extra = "".join(f"\t{k}={v:.4f}" for k, v in rec.items() if k not in ("epoch", "lr", "loss"))
        logger.info("epoch %d\tlr=%.2e\tloss=%.6f%s", rec["epoch"], rec["lr"], rec["loss"], extra)

    result = train(config, ds, rules, callback=report)
    result.model.save(out, extra={"best_epoch": result.best_epoch, "best_valid": result.best_metric})
    print(f"saved checkpoint (epoch {result.best_epoch}) -> {out}")
    return 0


def _model(args):
    ds = _load(args.data)
    rules = _load_rules(args.rules, ds)
    return load_model(args.checkpoint, ds, rules)


def cmd_eval(args) -> int:
    model = _model(args)
    task = args.task or model.config.task
    metrics = eval_link(model, args.split) if task == "link" else eval_time(model, args.split)
    print(format_metrics(metrics))
    return 0


def _print_explanations(exps, dataset, limit):
    for e in exps[:limit]:
        print("  " + e.render(dataset).replace("\n", "\n  "))


def cmd_predict(args) -> int:
    model = _model(args)
    ds = model.dataset
    for raw, q in _read_queries(args, ds):
        label = " ".join(raw)
        if isinstance(q, LinkQuery):
            answers = model.answer_link(q, args.top_k)
            shown = "\t".join(f"{ds.entities[o]}:{p:.4f}" for o, p in answers)
            print(f"{label}\t{shown}")
            if args.explain and answers:
                _print_explanations(model.explain_link(q, answers[0][0]), ds, args.explain)
        else:
            interval, P_b, P_e, fallback = model.answer_time(q)
            tag = "\tfallback" if fallback else ""
            if P_b is not None:
                pb = float(P_b[model.vocab.id(interval.tb)])
                pe = float(P_e[model.vocab.id(interval.te)])
                print(f"{label}\t[{interval.tb},{interval.te}]\tP_b={pb:.4f}\tP_e={pe:.4f}{tag}")
            else:
                print(f"{label}\t[{interval.tb},{interval.te}]{tag}")
            if args.explain and not fallback:
                _print_explanations(model.explain_time(q, interval.tb, "start"), ds, args.explain)
    return 0


def cmd_explain(args) -> int:
    model = _model(args)
    ds = model.dataset
    (_, q), = _read_queries(args, ds)
    if isinstance(q, LinkQuery):
        answer = ds.entity_id(args.answer) if args.answer else model.answer_link(q, 1)[0][0]
        exps = model.explain_link(q, answer)
        print(f"answer\t{ds.entities[answer]}")
    else:
        if args.answer:
            year = int(args.answer)
        else:
            year = model.answer_time(q)[0].tb if args.which == "start" else model.answer_time(q)[0].te
        exps = model.explain_time(q, year, args.which)
        print(f"answer\t{year}\t({args.which})")
    if not exps:
        print("no rule grounds this answer")
    _print_explanations(exps, ds, args.limit)
    return 0


# ---------------------------------------------------------------------------
# Parser


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="tkgrule", description=__doc__)
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("stats", help="print dataset statistics")
    s.add_argument("--data", required=True)
    s.set_defaults(func=cmd_stats)

    s = sub.add_parser("synth", help="write a planted-rule dataset")
    s.add_argument("--out", required=True)
    s.add_argument("--entities", type=int, default=200)
    s.add_argument("--pairs", type=int, default=300)
    s.add_argument("--seed", type=int, default=0)
    s.set_defaults(func=cmd_synth)

    s = sub.add_parser("mine", help="mine temporal rules from the training split")
    s.add_argument("--data", required=True)
    s.add_argument("--max-len", type=int, default=3)
    s.add_argument("--min-support", type=int, default=1)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_mine)

    s = sub.add_parser("train", help="learn rule confidences")
    s.add_argument("--config", help="YAML/JSON file with training options; flags override it")
    s.add_argument("--data")
    s.add_argument("--rules")
    s.add_argument("--out")
    s.add_argument("--task", choices=["link", "time"])
    s.add_argument("--epochs", type=int)
    s.add_argument("--lr", type=float)
    s.add_argument("--lr-floor", dest="lr_floor", type=float)
    s.add_argument("--eta", type=float)
    s.add_argument("--dim", type=int)
    s.add_argument("--seed", type=int)
    s.add_argument("--max-len", dest="max_len", type=int)
    s.add_argument("--eval-every", dest="eval_every", type=int)
    s.add_argument("--standard-gru", dest="standard_gru", action="store_true", default=None)
    s.add_argument("--gadgets-in-training", dest="gadgets_in_training", action="store_true", default=None)
    s.set_defaults(func=cmd_train)

    def model_args(s):
        s.add_argument("--data", required=True)
        s.add_argument("--rules", required=True)
        s.add_argument("--checkpoint", required=True)

    s = sub.add_parser("eval", help="filtered MRR/Hits@k or aeIOU on a split")
    model_args(s)
    s.add_argument("--task", choices=["link", "time"])
    s.add_argument("--split", default="test", choices=["train", "valid", "test"])
    s.set_defaults(func=cmd_eval)

    def query_args(s):
        s.add_argument("--query", nargs="+", metavar="FIELD", help="S R ? B E  or  S R O ? ?")
        s.add_argument("--queries", help="file of tab-separated queries, one per line")

    s = sub.add_parser("predict", help="answer link or time queries")
    model_args(s)
    query_args(s)
    s.add_argument("--top-k", type=int, default=10)
    s.add_argument("--explain", type=int, nargs="?", const=3, default=0, metavar="N",
                   help="also print the top N rule groundings")
    s.set_defaults(func=cmd_predict)

    s = sub.add_parser("explain", help="rules and groundings behind one answer")
    model_args(s)
    query_args(s)
    s.add_argument("--answer", help="entity name or year; defaults to the top prediction")
    s.add_argument("--which", choices=["start", "end"], default="start")
    s.add_argument("--limit", type=int, default=10)
    s.set_defaults(func=cmd_explain)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (CliError, DatasetError, CheckpointError, TrainingError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
