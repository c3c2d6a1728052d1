"""Sampled-negative ranking evaluation: Recall@K, NDCG and MRR."""

import json
from dataclasses import asdict, dataclass, field

import numpy as np

from . import numkernel as nk
from .data import sample_negatives
from .exceptions import EvaluationError

STANDARD_REPEATS = 10
STANDARD_NEGATIVES = 1000


def rank(scores):
    """1-based rank of ``scores[0]`` (the positive) among all candidates.

    Ties count against the positive, so equal scores give the worst rank.
    """
    scores = np.asarray(scores, dtype=np.float64)
    if scores.size == 0 or not np.all(np.isfinite(scores)):
        raise EvaluationError("scores must be non-empty and finite")
    return 1 + int(np.count_nonzero(scores[1:] >= scores[0]))


def metrics(ranks, k=10):
    ranks = np.asarray(ranks, dtype=np.float64)
    if ranks.size == 0 or np.any(ranks < 1):
        raise ValueError("ranks must be a non-empty array of values >= 1")
    gain = 1.0 / np.log2(ranks + 1.0)
    hit = ranks <= k
    return {
        f"recall@{k}": float(hit.mean()),
        "ndcg": float(gain.mean()),
        f"ndcg@{k}": float(np.where(hit, gain, 0.0).mean()),
        "mrr": float((1.0 / ranks).mean()),
    }


@dataclass
class MetricsReport:
    k: int
    repeats: int
    n_negatives: int
    evaluated: int
    skipped: int
    per_repeat: list = field(default_factory=list)
    mean: dict = field(default_factory=dict)

    @property
    def standard(self):
        return self.repeats == STANDARD_REPEATS and self.n_negatives == STANDARD_NEGATIVES

    @property
    def recall(self):
        return self.mean[f"recall@{self.k}"]

    def to_dict(self):
        d = asdict(self)
        d["standard_protocol"] = self.standard
        return d

    def to_json(self):
        return json.dumps(self.to_dict(), sort_keys=True, indent=2)

    def to_table(self):
        cols = [f"recall@{self.k}", "ndcg", "mrr", f"ndcg@{self.k}"]
        head = ["R@%d" % self.k, "NDCG", "MRR", "NDCG@%d" % self.k]
        lines = ["repeat  " + "  ".join(f"{h:>9}" for h in head)]
        for r, row in enumerate(self.per_repeat, start=1):
            lines.append(f"{r:>6}  " + "  ".join(f"{row[c]:9.5f}" for c in cols))
        lines.append("  mean  " + "  ".join(f"{self.mean[c]:9.5f}" for c in cols))
        note = "" if self.standard else "  (non-standard protocol)"
        lines.append(f"evaluated={self.evaluated} skipped={self.skipped} repeats={self.repeats}"
                     f" negatives<={self.n_negatives}{note}")
        return "\n".join(lines)


def candidate_sets(ds, instances, n_negatives, repeats, seed):
    """Per instance, a ``repeats x C`` item grid with the positive in column 0.

    Negatives are capped at the user's unrated-item count.
    """
    out = []
    for inst in instances:
        free = ds.n_items - len(ds.interacted(inst.user))
        count = min(n_negatives, free)
        grid = np.empty((repeats, count + 1), dtype=np.int64)
        grid[:, 0] = inst.positive
        for r in range(repeats):
            grid[r, 1:] = sample_negatives(ds, inst.user, count, (seed, inst.event, r))
        out.append(grid)
    return out


def evaluate(scorer, ds, instances, n_negatives=STANDARD_NEGATIVES, repeats=STANDARD_REPEATS,
             seed=0, k=10, skipped=0):
    """Rank each positive against fresh negatives per repeat and average."""
    if not instances:
        raise EvaluationError("no evaluable instances")
    grids = candidate_sets(ds, instances, n_negatives, repeats, seed)
    scored = scorer.score(instances, grids)
    ranks = np.empty((repeats, len(instances)))
    for i, s in enumerate(scored):
        s = np.asarray(s, dtype=np.float64)
        if s.shape != grids[i].shape:
            raise EvaluationError(f"scorer returned shape {s.shape} for grid {grids[i].shape}")
        for r in range(repeats):
            ranks[r, i] = rank(s[r])
    per_repeat = [metrics(ranks[r], k) for r in range(repeats)]
    mean = {name: float(np.mean([row[name] for row in per_repeat])) for name in per_repeat[0]}
    return MetricsReport(k, repeats, n_negatives, len(instances), skipped, per_repeat, mean)


class ModelScorer:
    """Scores candidates with a trained network; user vectors computed once."""

    def __init__(self, network, batch_size=256):
        self.network = network
        self.batch_size = batch_size

    def score(self, instances, grids):
        item_emb = self.network.store["item_emb"].data
        out = []
        for start in range(0, len(instances), self.batch_size):
            chunk = instances[start:start + self.batch_size]
            reps = self.network.represent(chunk).data
            for j, rep in enumerate(reps):
                grid = grids[start + j]
                if self.network.variant.head == "dot":
                    out.append(item_emb[grid] @ rep)
                else:
                    rows = nk.Tensor(np.repeat(rep[None, :], grid.shape[0], axis=0))
                    out.append(self.network.logits(rows, grid).data)
        return out


class RandomScorer:
    """Uniform random scores, a chance-level baseline."""

    def __init__(self, seed=0):
        self.seed = seed

    def score(self, instances, grids):
        rng = np.random.default_rng([self.seed, 0x4A4D])
        return [rng.random(g.shape) for g in grids]


class OracleScorer:
    """Knows the positive sits in column 0."""

    def score(self, instances, grids):
        out = []
        for g in grids:
            s = np.zeros(g.shape)
            s[:, 0] = 1.0
            out.append(s)
        return out
