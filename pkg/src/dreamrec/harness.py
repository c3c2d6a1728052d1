"""Long-run comparison on a real ratings/trust dump (no pass/fail).

Usage::

    python -m dreamrec.harness --ratings rating_with_timestamp.txt --trust trust.txt \\
        --rating-columns 0,1,5 --out runs/epinions

Columns are zero-based indices of (user, item, timestamp) in the ratings
file and of (truster, trustee) in the trust file; any whitespace separates
fields.  The converted TSVs feed the regular ``run`` pipeline.
"""

import argparse
import json
import sys
from pathlib import Path

from . import cli

PUBLISHED = {"epinions": {"recall@10": 0.01639, "ndcg": 0.09787, "mrr": 0.00628},
             "movie": {"recall@10": 0.02285, "ndcg": 0.11669, "mrr": 0.00870}}


def convert(src, dst, columns):
    """Copy the chosen whitespace-separated columns of ``src`` into a TSV."""
    n = 0
    with open(src) as fin, open(dst, "w") as fout:
        for line in fin:
            parts = line.split()
            if not parts or parts[0][0] in "#%":
                continue
            fout.write("\t".join(parts[c] for c in columns) + "\n")
            n += 1
    return n


def _columns(text):
    return [int(c) for c in text.split(",")]


def main(argv=None):
    p = argparse.ArgumentParser(prog="dreamrec.harness", description=__doc__.splitlines()[0])
    p.add_argument("--ratings", required=True)
    p.add_argument("--trust")
    p.add_argument("--rating-columns", type=_columns, default=[0, 1, 5])
    p.add_argument("--trust-columns", type=_columns, default=[0, 1])
    p.add_argument("--dataset", choices=sorted(PUBLISHED), default="epinions")
    p.add_argument("--granularity", choices=["week", "month"], default="month")
    p.add_argument("--config")
    p.add_argument("--out", required=True)
    args, passthrough = p.parse_known_args(argv)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    convert(args.ratings, out / "events.tsv", args.rating_columns)
    run = ["run", "--events", str(out / "events.tsv"), "--out", str(out),
           "--granularity", args.granularity]
    if args.trust:
        convert(args.trust, out / "social.tsv", args.trust_columns)
        run += ["--social", str(out / "social.tsv")]
    if args.config:
        run += ["--config", args.config]
    rc = cli.main(run + passthrough)
    if rc:
        return rc
    ours = json.loads((out / "metrics.json").read_text())["mean"]
    ref = PUBLISHED[args.dataset]
    print(f"{'metric':<10}{'ours':>10}{'published':>11}")
    for name, value in ref.items():
        print(f"{name:<10}{ours[name]:>10.5f}{value:>11.5f}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
