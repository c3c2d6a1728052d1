"""Command line entry point: ``dreamrec <subcommand> ...``.

Exit codes: 0 ok, 2 configuration/validation error, 3 runtime failure.
"""

import argparse
import csv
import json
import logging
import sys
from pathlib import Path

from threadpoolctl import threadpool_limits

from . import config as cf
from . import data as dt
from .estimator import DreamRecommender
from .evaluator import ModelScorer, OracleScorer, RandomScorer
from .exceptions import ConfigError, DreamError, ParseError
from .model import VARIANTS
from .trainer import write_history

log = logging.getLogger("dreamrec")

ABLATION_ORDER = ["dream-r", "dream-v", "dream-gat", "dream-tgru", "dream-s1", "dream-s3", "dream"]


def _add_common(p, data=True):
    p.add_argument("--config", help="TOML config or a previous run.json")
    p.add_argument("--out", help="output directory")
    p.add_argument("--seed", type=int)
    p.add_argument("--threads", type=int)
    if data:
        p.add_argument("--events", help="events TSV: user, item, timestamp")
        p.add_argument("--social", help="social TSV: user, friend")
        p.add_argument("--granularity", choices=["week", "month"])


def _add_training(p):
    p.add_argument("--variant", choices=sorted(VARIANTS))
    p.add_argument("--sessions", type=int)
    p.add_argument("--dim", type=int)
    p.add_argument("--epochs", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--batch-size", type=int)
    p.add_argument("--patience", type=int)


def build_parser():
    parser = argparse.ArgumentParser(prog="dreamrec", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="parse TSV inputs, write dataset.json and stats.json")
    _add_common(p)

    p = sub.add_parser("complete", help="export completed social edges as TSV")
    _add_common(p)
    p.add_argument("--variant", choices=sorted(VARIANTS))

    p = sub.add_parser("train", help="train a model, write checkpoint and history")
    _add_common(p)
    _add_training(p)

    p = sub.add_parser("evaluate", help="ranking metrics for a checkpoint")
    _add_common(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--split", choices=["valid", "test"])
    p.add_argument("--repeats", type=int)
    p.add_argument("--negatives", type=int)
    p.add_argument("--scorer", choices=["model", "random", "oracle"], default="model")

    p = sub.add_parser("run", help="train then evaluate in one go")
    _add_common(p)
    _add_training(p)

    p = sub.add_parser("ablate", help="train and evaluate every variant, write a table")
    _add_common(p)
    _add_training(p)
    p.add_argument("--only", help="comma-separated variant names")
    return parser


def resolve_config(args):
    cfg = cf.load(args.config) if args.config else cf.RunConfig()
    cf.override(cfg, None, "seed", args.seed)
    cf.override(cfg, None, "threads", args.threads)
    cf.override(cfg, None, "output_dir", args.out)
    if hasattr(args, "events"):
        cf.override(cfg, "data", "events", args.events)
        cf.override(cfg, "data", "social", args.social)
        cf.override(cfg, "data", "granularity", args.granularity)
    for flag, section, key in [("variant", "model", "variant"), ("sessions", "model", "sessions"),
                               ("dim", "model", "dim"), ("epochs", "train", "max_epochs"),
                               ("lr", "train", "learning_rate"), ("batch_size", "train", "batch_size"),
                               ("patience", "train", "patience"), ("split", "eval", "split"),
                               ("repeats", "eval", "repeats"), ("negatives", "eval", "negatives")]:
        cf.override(cfg, section, key, getattr(args, flag, None))
    return cf.validate(cfg)


def load_dataset(cfg):
    if not cfg.data.events:
        raise ConfigError("no events file given (data.events or --events)")
    for path in (cfg.data.events, cfg.data.social):
        if path and not Path(path).exists():
            raise ConfigError(f"input file not found: {path}")
    return dt.ingest(cfg.data.events, cfg.data.social or None)


def write_run_json(cfg, out):
    payload = cfg.to_dict()
    payload["resolved_seeds"] = {"root": cfg.seed}
    (out / "run.json").write_text(json.dumps(payload, indent=2, sort_keys=True))


def _outdir(cfg):
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _log_access(ds, est):
    log.info("access counters: social_reads=%d virtual_reads=%d",
             ds.social_access.count, est.completer_.virtual_access.count)


def _fit(cfg, ds):
    est = DreamRecommender(**cfg.estimator_params())
    est.fit(ds)
    _log_access(ds, est)
    return est


def _evaluate(cfg, est, scorer_name="model"):
    scorer = {"model": lambda: ModelScorer(est.network_), "random": lambda: RandomScorer(cfg.seed),
              "oracle": OracleScorer}[scorer_name]()
    return est.evaluate(cfg.eval.split, cfg.eval.negatives, cfg.eval.repeats, k=cfg.eval.k,
                        scorer=scorer)


def _write_report(out, report, stem="metrics"):
    (out / f"{stem}.json").write_text(report.to_json())
    (out / f"{stem}.txt").write_text(report.to_table() + "\n")


def cmd_ingest(args):
    cfg = resolve_config(args)
    ds = load_dataset(cfg)
    out = _outdir(cfg)
    ds.save(out / "dataset.json")
    summary = dt.stats(ds, cfg.data.granularity)
    (out / "stats.json").write_text(json.dumps(summary, indent=2))
    print(json.dumps(summary))


def cmd_complete(args):
    cfg = resolve_config(args)
    if args.variant:
        cfg.model.variant = args.variant
    ds = load_dataset(cfg)
    out = _outdir(cfg)
    est = DreamRecommender(**cfg.estimator_params())
    est._prepare(ds, None)
    completer = est._completer(est.variant_).fit(ds, est.labels_, est.sequences_)
    with open(out / "edges.tsv", "w", newline="") as fh:
        w = csv.writer(fh, delimiter="\t", lineterminator="\n")
        w.writerow(["#user", "friend", "relation", "weight", "session"])
        for u, f, rel, weight, s in completer.edges():
            w.writerow([ds.user_ids[u], ds.user_ids[f], rel, repr(weight), s])
    write_run_json(cfg, out)


def cmd_train(args):
    cfg = resolve_config(args)
    ds = load_dataset(cfg)
    out = _outdir(cfg)
    write_run_json(cfg, out)
    est = _fit(cfg, ds)
    est.save(out / "checkpoint.json")
    write_history(out / "history.csv", est.history_)
    return est, cfg, out


def cmd_evaluate(args):
    cfg = resolve_config(args)
    ckpt = Path(args.checkpoint)
    if not ckpt.exists():
        raise ConfigError(f"checkpoint not found: {ckpt}")
    ds = load_dataset(cfg)
    out = _outdir(cfg)
    est = DreamRecommender.load(ckpt, ds)
    report = _evaluate(cfg, est, args.scorer)
    _write_report(out, report)
    if not report.standard:
        log.warning("non-standard protocol: %d repeats, %d negatives", report.repeats, report.n_negatives)
    print(report.to_table())


def cmd_run(args):
    est, cfg, out = cmd_train(args)
    report = _evaluate(cfg, est)
    _write_report(out, report)
    print(report.to_table())


def cmd_ablate(args):
    cfg = resolve_config(args)
    names = ABLATION_ORDER
    if args.only:
        names = [n.strip() for n in args.only.split(",") if n.strip()]
        unknown = [n for n in names if n not in VARIANTS]
        if unknown:
            raise ConfigError(f"unknown variants: {', '.join(unknown)}")
    ds = load_dataset(cfg)
    out = _outdir(cfg)
    write_run_json(cfg, out)
    rows = []
    for name in names:
        cfg.model.variant = name
        est = _fit(cfg, ds)
        report = _evaluate(cfg, est)
        _write_report(out, report, f"metrics-{name}")
        rows.append((name.upper(), report))
    k = cfg.eval.k
    with open(out / "ablation.tsv", "w", newline="") as fh:
        w = csv.writer(fh, delimiter="\t", lineterminator="\n")
        w.writerow(["model", f"R@{k}", "MRR", "NDCG"])
        for name, rep in rows:
            w.writerow([name, f"{rep.mean[f'recall@{k}']:.5f}", f"{rep.mean['mrr']:.5f}",
                        f"{rep.mean['ndcg']:.5f}"])
    print((out / "ablation.tsv").read_text(), end="")


COMMANDS = {"ingest": cmd_ingest, "complete": cmd_complete, "train": cmd_train,
            "evaluate": cmd_evaluate, "run": cmd_run, "ablate": cmd_ablate}


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        threads = resolve_config(args).threads
        with threadpool_limits(limits=threads):
            COMMANDS[args.command](args)
    except (ConfigError, ParseError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except DreamError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
