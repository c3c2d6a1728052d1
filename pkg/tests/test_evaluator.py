import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dreamrec import data as dt
from dreamrec import evaluator as ev
from dreamrec.exceptions import EvaluationError
from dreamrec.synthetic import make_clustered, make_uniform

from .conftest import build_network


def _sort_rank(scores):
    """Position of the positive after a stable sort that puts ties ahead of it."""
    order = sorted(range(len(scores)), key=lambda i: (-scores[i], 0 if i else 1))
    return order.index(0) + 1


class TestRank:
    def test_unique_max(self):
        assert ev.rank([5.0, 1.0, 2.0]) == 1

    def test_all_equal_is_worst(self):
        assert ev.rank(np.zeros(1001)) == 1001

    def test_non_finite(self):
        with pytest.raises(EvaluationError):
            ev.rank([np.nan, 1.0])
        with pytest.raises(EvaluationError):
            ev.rank([1.0, np.inf])

    @settings(max_examples=200, deadline=None)
    @given(st.lists(st.integers(-5, 5), min_size=1, max_size=40))
    def test_matches_sort_oracle(self, ints):
        scores = [float(x) for x in ints]
        assert ev.rank(scores) == _sort_rank(scores)


class TestMetrics:
    def test_perfect(self):
        m = ev.metrics([1, 1, 1])
        assert m == {"recall@10": 1.0, "ndcg": 1.0, "ndcg@10": 1.0, "mrr": 1.0}

    def test_rank_three(self):
        m = ev.metrics([3])
        assert abs(m["mrr"] - 1 / 3) < 1e-15
        assert m["ndcg"] == 0.5

    def test_ndcg_at_k_cuts_tail(self):
        m = ev.metrics([20], k=10)
        assert m["ndcg@10"] == 0.0 and m["recall@10"] == 0.0
        assert abs(m["ndcg"] - 1 / math.log2(21)) < 1e-15

    def test_bad_ranks(self):
        with pytest.raises(ValueError):
            ev.metrics([])
        with pytest.raises(ValueError):
            ev.metrics([0])

    @settings(max_examples=100, deadline=None)
    @given(st.lists(st.integers(1, 1001), min_size=1, max_size=50), st.integers(1, 20))
    def test_formula_oracle(self, ranks, k):
        m = ev.metrics(ranks, k)
        n = len(ranks)
        assert abs(m[f"recall@{k}"] - sum(r <= k for r in ranks) / n) <= 1e-12
        assert abs(m["mrr"] - sum(1 / r for r in ranks) / n) <= 1e-12
        assert abs(m["ndcg"] - sum(1 / math.log2(r + 1) for r in ranks) / n) <= 1e-12
        assert all(0.0 <= v <= 1.0 for v in m.values())

    @settings(max_examples=50, deadline=None)
    @given(st.integers(0, 10**6))
    def test_invariant_to_increasing_transform(self, seed):
        rng = np.random.default_rng(seed)
        scores = np.round(rng.normal(size=(5, 30)), 1)
        base = [ev.rank(s) for s in scores]
        for f in (np.exp, lambda x: 2 * x + 1, lambda x: 1 / (1 + np.exp(-x))):
            assert [ev.rank(f(s)) for s in scores] == base


@pytest.fixture(scope="module")
def pipeline():
    ds = make_clustered(n_users=10, n_items=30, n_clusters=2, n_friends=3, seed=8)
    net, _ = build_network(ds, dim=4, seed=3)
    from dreamrec.model import make_instances
    labels = dt.split(ds, (0.6, 0.2, 0.2), seed=3)
    insts = make_instances(ds, labels, net.sequences, net.variant.sessions, dt.TRAIN)[0][:20]
    return ds, net, insts


class TestEvaluate:
    def test_brute_force_pipeline(self, pipeline):
        ds, net, insts = pipeline
        assert len(insts) == 20
        report = ev.evaluate(ev.ModelScorer(net, batch_size=7), ds, insts, 8, 3, seed=5, k=3)
        per_repeat = []
        for r in range(3):
            ranks = []
            for inst in insts:
                negs = dt.sample_negatives(ds, inst.user, 8, (5, inst.event, r))
                rep = net.represent([inst]).data[0]
                scores = [math.log(p / (1 - p)) for p in
                          (net.predict(rep, i) for i in [inst.positive, *negs])]
                ranks.append(_sort_rank(scores))
            per_repeat.append(ranks)
        for r, ranks in enumerate(per_repeat):
            assert report.per_repeat[r]["recall@3"] == np.mean([x <= 3 for x in ranks])
            assert abs(report.per_repeat[r]["mrr"] - np.mean([1 / x for x in ranks])) < 1e-12
        assert abs(report.mean["mrr"] - np.mean([row["mrr"] for row in report.per_repeat])) <= 1e-12

    def test_oracle_scores_perfect(self, pipeline):
        ds, _, insts = pipeline
        report = ev.evaluate(ev.OracleScorer(), ds, insts, 10, 2, seed=0)
        assert report.mean == {"recall@10": 1.0, "ndcg": 1.0, "ndcg@10": 1.0, "mrr": 1.0}

    def test_deterministic(self, pipeline):
        ds, net, insts = pipeline
        a = ev.evaluate(ev.ModelScorer(net), ds, insts, 10, 3, seed=1).to_json()
        b = ev.evaluate(ev.ModelScorer(net), ds, insts, 10, 3, seed=1).to_json()
        assert a == b

    def test_candidates_distinct_and_unrated(self, pipeline):
        ds, _, insts = pipeline
        for inst, grid in zip(insts, ev.candidate_sets(ds, insts, 1000, 2, seed=0)):
            rated = set(ds.interacted(inst.user).tolist())
            assert grid.shape[1] == ds.n_items - len(rated) + 1
            for row in grid:
                assert len(set(row.tolist())) == len(row)
                assert not set(row[1:].tolist()) & rated

    def test_empty(self, pipeline):
        with pytest.raises(EvaluationError):
            ev.evaluate(ev.OracleScorer(), pipeline[0], [], 5, 1)

    def test_bad_scorer_shape(self, pipeline):
        class Short:
            def score(self, instances, grids):
                return [np.zeros(3) for _ in grids]

        with pytest.raises(EvaluationError):
            ev.evaluate(Short(), pipeline[0], pipeline[2], 5, 1)

    def test_random_scorer_near_chance(self):
        ds = make_uniform(n_users=150, n_items=1100, events_per_user=6, seed=2)
        from dreamrec.model import Instance
        insts = [Instance(int(u), row, (0,), int(i)) for row, (u, i, _) in enumerate(ds.events)]
        report = ev.evaluate(ev.RandomScorer(seed=0), ds, insts, 1000, 2, seed=0)
        assert abs(report.recall - 10 / 1001) < 0.005


class TestReport:
    def _report(self, repeats=10, negatives=1000):
        rows = [{"recall@10": 0.5, "ndcg": 0.4, "ndcg@10": 0.3, "mrr": 0.2}] * repeats
        return ev.MetricsReport(10, repeats, negatives, 7, 1, rows, dict(rows[0]))

    def test_standard_flag(self):
        assert self._report().standard
        assert not self._report(repeats=1).standard
        assert "non-standard" in self._report(repeats=1).to_table()

    def test_json_and_table(self):
        r = self._report()
        d = json.loads(r.to_json())
        assert d["mean"]["recall@10"] == 0.5 and d["standard_protocol"] is True
        table = r.to_table().splitlines()
        assert table[0].split()[:4] == ["repeat", "R@10", "NDCG", "MRR"]
        assert len(table) == 10 + 3
