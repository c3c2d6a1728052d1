import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dreamrec import numkernel as nk
from dreamrec.exceptions import DimensionError
from dreamrec.tie import TieParams, candidate, tie_step, tie_unroll


def _params(d=4, seed=0, scale=1.0):
    p = TieParams.init(d, np.random.default_rng(seed), scale)
    rng = np.random.default_rng(seed + 1000)
    for b in (p.b_q, p.b_e, p.b_h):
        b.data[:] = rng.normal(size=d)
    return p


def _transcribed(p, prev, cur, linear=False):
    """The four update equations, column-vector form, straight from numpy."""
    act = (lambda v: v) if linear else (lambda v: 1.0 / (1.0 + np.exp(-v)))
    W_q, W_e, W_h, U_h = p.w_q.data, p.w_e.data, p.w_h.data, p.u_h.data
    u_q = act(W_q @ prev + p.b_q.data)
    u_e = act(W_e @ cur + p.b_e.data)
    h = np.tanh(W_h @ cur + u_e * (U_h @ prev) + p.b_h.data)
    return (1 - u_q) * prev + u_q * h, h


def test_closed_gate_carries_state_exactly():
    p = _params()
    rng = np.random.default_rng(1)
    prev, cur = rng.normal(size=4), rng.normal(size=4)
    assert np.array_equal(tie_step(p, prev, cur, update_gate=0.0).data, prev)


def test_open_gate_replaces_state_exactly():
    p = _params()
    rng = np.random.default_rng(2)
    prev, cur = rng.normal(size=4), rng.normal(size=4)
    _, h = _transcribed(p, prev, cur)
    out = tie_step(p, prev, cur, update_gate=1.0).data
    assert np.array_equal(out, candidate(p, prev, cur).data)
    assert np.allclose(out, h, rtol=0, atol=1e-15)


@pytest.mark.parametrize("linear", [False, True])
def test_matches_transcribed_equations(linear):
    p = _params(seed=3)
    rng = np.random.default_rng(4)
    prev, cur = rng.normal(size=4), rng.normal(size=4)
    ours = tie_step(p, prev, cur, literal_linear_gates=linear).data
    assert np.allclose(ours, _transcribed(p, prev, cur, linear)[0], rtol=0, atol=1e-12)


def test_batched_rows_match_vectors():
    p = _params(seed=5)
    rng = np.random.default_rng(6)
    prev, cur = rng.normal(size=(3, 4)), rng.normal(size=(3, 4))
    batch = tie_step(p, prev, cur).data
    for row in range(3):
        assert np.allclose(batch[row], tie_step(p, prev[row], cur[row]).data, atol=1e-15)


def test_dimension_mismatch():
    with pytest.raises(DimensionError):
        tie_step(_params(), np.zeros(4), np.zeros(3))


def test_unroll_empty():
    with pytest.raises(ValueError):
        tie_unroll(_params(), np.zeros(4), [])


def test_unroll_single_is_step_bitwise():
    p = _params(seed=7)
    rng = np.random.default_rng(8)
    u0, u1 = rng.normal(size=4), rng.normal(size=4)
    assert tie_unroll(p, u0, [u1])[0].data.tobytes() == tie_step(p, u0, u1).data.tobytes()


def test_two_steps_with_zero_parameters():
    p = TieParams.zeros(3)
    rng = np.random.default_rng(9)
    u0, u1, u2 = rng.normal(size=(3, 3))
    # all gates are 1/2 and every candidate is tanh(0) = 0
    states = tie_unroll(p, u0, [u1, u2])
    assert np.array_equal(states[0].data, 0.5 * u0)
    assert np.array_equal(states[1].data, 0.25 * u0)


def test_per_step_parameter_list():
    a, b = _params(seed=10), _params(seed=11)
    rng = np.random.default_rng(12)
    u0, u1, u2 = rng.normal(size=(3, 4))
    states = tie_unroll([a, b], u0, [u1, u2])
    assert np.array_equal(states[1].data, tie_step(b, tie_step(a, u0, u1), u2).data)


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 10**6), st.integers(1, 6), st.floats(0.01, 5.0))
def test_convex_interpolation_bound(seed, steps, spread):
    p = _params(seed=seed, scale=2.0)
    rng = np.random.default_rng(seed + 1)
    state = rng.normal(scale=spread, size=4)
    bound = max(np.abs(state).max(), 1.0)
    for _ in range(steps):
        cur = rng.normal(scale=3.0, size=4)
        h = candidate(p, state, cur).data
        nxt = tie_step(p, state, cur).data
        assert np.all(np.abs(nxt) <= np.maximum(np.abs(state), np.abs(h)))
        assert np.abs(nxt).max() <= bound
        state = nxt


def test_gradient_reaches_initial_state():
    p = _params(seed=13)
    rng = np.random.default_rng(14)
    u0 = nk.Tensor(rng.normal(size=(1, 4)), requires_grad=True)
    outs = [nk.Tensor(rng.normal(size=(1, 4)), requires_grad=True) for _ in range(3)]
    readout = rng.normal(size=(1, 4))

    def fn():
        return nk.sum(tie_unroll(p, u0, outs)[-1] * readout)

    with nk.Tape() as tape:
        loss = fn()
    nk.backward(tape, loss)
    assert np.abs(u0.grad).max() > 0
    params = {**p.named(), "u0": u0, **{f"u{t + 1}": o for t, o in enumerate(outs)}}
    report = nk.gradcheck(fn, params)
    assert max(report.values()) < 1e-4, report
