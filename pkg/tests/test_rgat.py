import numpy as np
from hypothesis import given, settings
from hypothesis import strategies as st

from dreamrec import numkernel as nk
from dreamrec.rgat import (PAD, EgoBatch, RgatParams, aggregate, attention_scores,
                           rgat_forward)


def _params(d=4, seed=0):
    return RgatParams.init(d, np.random.default_rng(seed), scale=1.0)


def _leaky(x):
    return x if x > 0 else 0.2 * x


def _alpha_oracle(p, center, nbs, rels):
    """Exp-normalise over scalar logits written out term by term."""
    d = len(center)
    w = {"real": p.w_real.data, "virtual": p.w_virtual.data, "self": p.w_self.data}
    proj = {"real": p.p_real.data, "virtual": p.p_virtual.data}
    logits = []
    for h, r in zip(nbs, rels):
        z = proj[r] @ h
        logits.append(_leaky(float(w[r][:d] @ center + w[r][d:] @ z)))
    logits.append(_leaky(float(w["self"][:d] @ center + w["self"][d:] @ center)))
    e = np.exp(np.array(logits) - max(logits))
    return e / e.sum()


def _instance(seed, k=3, d=4):
    rng = np.random.default_rng(seed)
    rels = [["real", "virtual"][i] for i in rng.integers(0, 2, size=k)]
    return rng.normal(size=d), rng.normal(size=(k, d)), rels


def test_isolated_user_attends_to_self():
    p = _params()
    center = np.array([0.3, -0.2, 0.1, 0.5])
    h, alpha, _ = rgat_forward(p, EgoBatch.single(center, np.zeros((0, 4)), []))
    assert alpha.data.tolist() == [[1.0]]
    assert np.array_equal(h.data[0], np.tanh(center))


def test_zero_attention_vectors_give_uniform_weights():
    p = _params()
    for w in (p.w_real, p.w_virtual, p.w_self):
        w.data[:] = 0.0
    center, nbs, rels = _instance(1, k=4)
    alpha = attention_scores(p, EgoBatch.single(center, nbs, rels)).data
    assert np.allclose(alpha, 0.2, rtol=0, atol=1e-15)


def test_three_neighbour_oracle():
    p = _params(seed=2)
    center, nbs, rels = _instance(3)
    rels = ["real", "virtual", "real"]
    alpha = attention_scores(p, EgoBatch.single(center, nbs, rels)).data[0]
    assert np.allclose(alpha, _alpha_oracle(p, center, nbs, rels), rtol=0, atol=1e-10)


def test_aggregate_is_tanh_of_convex_combination():
    p = _params(seed=4)
    center, nbs, rels = _instance(5)
    batch = EgoBatch.single(center, nbs, rels)
    alpha = attention_scores(p, batch)
    expect = np.tanh(alpha.data[0, :3] @ nbs + alpha.data[0, 3] * center)
    assert np.allclose(aggregate(p, batch, alpha).data[0], expect, atol=1e-14)


def test_duplicate_neighbours_merge_weight():
    p = _params(seed=6)
    center = np.random.default_rng(7).normal(size=4)
    nb = np.random.default_rng(8).normal(size=(1, 4))
    alpha = nk.Tensor(np.array([[0.3, 0.2, 0.5]]))
    two = aggregate(p, EgoBatch.single(center, np.vstack([nb, nb]), ["real", "real"]), alpha)
    one = aggregate(p, EgoBatch.single(center, nb, ["real"]), nk.Tensor(np.array([[0.5, 0.5]])))
    assert np.allclose(two.data, one.data, atol=1e-15)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10**6), st.integers(1, 8))
def test_alpha_normalised_and_order_free(seed, k):
    p = _params(seed=seed)
    center, nbs, rels = _instance(seed + 1, k=k)
    h, alpha, _ = rgat_forward(p, EgoBatch.single(center, nbs, rels))
    a = alpha.data[0]
    assert np.all(a > 0) and np.all(a <= 1)
    assert abs(a.sum() - 1.0) <= 1e-10
    perm = np.random.default_rng(seed + 2).permutation(k)
    h2, alpha2, _ = rgat_forward(p, EgoBatch.single(center, nbs[perm], [rels[i] for i in perm]))
    assert np.allclose(h2.data, h.data, rtol=0, atol=1e-12)
    assert np.allclose(alpha2.data[0, :k], a[:k][perm], rtol=0, atol=1e-12)


def test_relabel_changes_attention():
    p = _params(seed=9)
    center, nbs, _ = _instance(10)
    a = attention_scores(p, EgoBatch.single(center, nbs, ["real"] * 3)).data
    b = attention_scores(p, EgoBatch.single(center, nbs, ["virtual", "real", "real"])).data
    assert not np.allclose(a, b)


def test_tied_relations_equal_plain_gat_bitwise():
    p = _params(seed=11)
    p.p_virtual.data[:] = p.p_real.data
    p.w_virtual.data[:] = p.w_real.data
    p.w_self.data[:] = p.w_real.data
    center, nbs, rels = _instance(12, k=5)
    batch = EgoBatch.single(center, nbs, rels)
    aware = rgat_forward(p, batch, relation_aware=True)
    plain = rgat_forward(p, batch, relation_aware=False)
    assert aware[0].data.tobytes() == plain[0].data.tobytes()
    assert aware[1].data.tobytes() == plain[1].data.tobytes()


def test_padded_batch_matches_single_ego_networks():
    p = _params(seed=13)
    rng = np.random.default_rng(14)
    centers = rng.normal(size=(2, 4))
    nbs = rng.normal(size=(6, 4))
    rel = np.array([[0, 1, PAD], [1, PAD, PAD]])
    h, alpha, _ = rgat_forward(p, EgoBatch(nk.Tensor(centers), nk.Tensor(nbs), rel))
    assert alpha.data[0, 2] == 0.0 and alpha.data[1, 1] == 0.0 and alpha.data[1, 2] == 0.0
    first = rgat_forward(p, EgoBatch.single(centers[0], nbs[:2], ["real", "virtual"]))[0]
    second = rgat_forward(p, EgoBatch.single(centers[1], nbs[3:4], ["virtual"]))[0]
    assert np.allclose(h.data[0], first.data[0], atol=1e-14)
    assert np.allclose(h.data[1], second.data[0], atol=1e-14)


def test_gradients_match_finite_differences():
    p = _params(seed=15)
    rng = np.random.default_rng(16)
    centers = nk.Tensor(rng.normal(size=(2, 4)), requires_grad=True)
    nbs = nk.Tensor(rng.normal(size=(6, 4)), requires_grad=True)
    rel = np.array([[0, 1, 1], [1, 0, PAD]])
    readout = rng.normal(size=(2, 4))
    batch = EgoBatch(centers, nbs, rel)
    for projected in (False, True):
        report = nk.gradcheck(
            lambda: nk.sum(rgat_forward(p, batch, aggregate_projected=projected)[0] * readout),
            {**p.named(), "center": centers, "neighbors": nbs})
        assert max(report.values()) < 1e-4, report
