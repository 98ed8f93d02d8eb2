import numpy as np
import pytest

from effcrn.autodiff import Tensor, grad_check, ops
from effcrn.exceptions import ShapeError, UsageError
from effcrn.recurrent import ConvLSTMCell, GRUCell, clstm_step, gru_step
from effcrn.topology import build_model


def test_clstm_zero_propagation():
    cell = ConvLSTMCell(3, 4, 5, rng=0, dtype=np.float64, forget_bias=0.0)
    state = cell.zero_state(1, 7)
    y, (h, c) = clstm_step(np.zeros((1, 7, 1, 3)), state, cell)
    np.testing.assert_array_equal(y.data, 0.0)
    np.testing.assert_array_equal(c.data, 0.0)


def test_clstm_param_count_without_bias():
    cell = ConvLSTMCell(32, 32, 12, rng=0)
    assert cell.input_kernel.size + cell.recurrent_kernel.size == 4 * 12 * (32 + 32) * 32 == 98_304


def test_clstm_gate_kernels_share_shape():
    cell = ConvLSTMCell(3, 4, 5, rng=0)
    shapes = {k.shape for k in cell.gate_kernels().values()}
    assert shapes == {(5, 1, 7, 4)}


def test_clstm_matches_reference_recurrence(rng):
    cell = ConvLSTMCell(2, 3, 3, rng=1, dtype=np.float64)
    x = rng.standard_normal((1, 6, 4, 2))
    y, _ = cell.sequence(x, cell.zero_state(1, 6, np.float64))

    def sig(v):
        return 1 / (1 + np.exp(-v))

    def conv_same(inp, k):
        # brute-force 'same' conv along frequency, (F, C) -> (F, C_out)
        n = k.shape[0]
        lo = (n - 1) // 2
        pad = np.pad(inp, ((lo, n - 1 - lo), (0, 0)))
        return np.stack([sum(pad[f + j] @ k[j, 0] for j in range(n)) for f in range(inp.shape[0])])

    h = np.zeros((6, 3))
    c = np.zeros((6, 3))
    kx, kh, b = cell.input_kernel.data, cell.recurrent_kernel.data, cell.bias.data
    for t in range(4):
        z = conv_same(x[0, :, t], kx) + conv_same(h, kh) + b
        i, f, g, o = sig(z[:, :3]), sig(z[:, 3:6]), np.tanh(z[:, 6:9]), sig(z[:, 9:])
        c = f * c + i * g
        h = o * np.tanh(c)
        np.testing.assert_allclose(y.data[0, :, t], h, atol=1e-12)


def test_clstm_constant_input_converges(rng):
    cell = ConvLSTMCell(2, 4, 3, rng=2, dtype=np.float64)
    x = np.repeat(rng.standard_normal((1, 5, 1, 2)), 50, axis=2)
    y, _ = cell.sequence(x, cell.zero_state(1, 5, np.float64))
    steps = np.linalg.norm(np.diff(y.data[0], axis=1), axis=(0, 2))
    assert steps[-1] < steps[10] and steps[-1] < 1e-3


def test_clstm_shape_errors():
    cell = ConvLSTMCell(3, 4, 3, rng=0)
    with pytest.raises(ShapeError):
        cell.step(np.zeros((1, 7, 1, 2)), cell.zero_state(1, 7))
    with pytest.raises(ShapeError):
        cell.step(np.zeros((1, 7, 1, 3)), cell.zero_state(1, 6))


def test_clstm_grad_check(rng):
    cell = ConvLSTMCell(2, 3, 3, rng=3, dtype=np.float64)
    x = Tensor(rng.standard_normal((2, 5, 6, 2)), requires_grad=True)
    w = rng.standard_normal((2, 5, 6, 3))
    state = cell.zero_state(2, 5, np.float64)
    err = grad_check(lambda: ops.sum(ops.mul(cell.sequence(x, state)[0], w)),
                     [x] + cell.parameters(), samples=12)
    assert err < 1e-3


def test_gru_zero_weights_zero_state():
    cell = GRUCell(4, 3, rng=0, dtype=np.float64)
    for p in cell.parameters():
        p.assign(np.zeros(p.shape))
    y, h = gru_step(np.ones((1, 4)), cell.zero_state(1), cell)
    np.testing.assert_array_equal(y.data, 0.0)


@pytest.mark.parametrize("n,h", [(4, 3), (1056, 1056), (153, 153)])
def test_gru_param_formula(n, h):
    assert GRUCell(n, h, rng=0).n_params() == 3 * ((n + h) * h + h)


def test_gru_bptt_grad_check(rng):
    cell = GRUCell(5, 4, rng=4, dtype=np.float64)
    x = Tensor(rng.standard_normal((2, 10, 5)), requires_grad=True)
    w = rng.standard_normal((2, 10, 4))
    err = grad_check(lambda: ops.sum(ops.mul(cell.sequence(x, cell.zero_state(2))[0], w)),
                     [x] + cell.parameters(), samples=12)
    assert err < 5e-3


def test_gru_step_matches_sequence(rng):
    cell = GRUCell(3, 2, rng=5, dtype=np.float64)
    x = rng.standard_normal((1, 6, 3))
    seq, _ = cell.sequence(x, cell.zero_state(1))
    h = cell.zero_state(1)
    for t in range(6):
        y, h = cell.step(x[:, t], h)
        np.testing.assert_allclose(y.data, seq.data[:, t], atol=1e-14)


def test_gru_size_mismatch():
    cell = GRUCell(4, 3, rng=0)
    with pytest.raises(ShapeError):
        cell.step(np.zeros((1, 5)), cell.zero_state(1))


def test_state_shapes_stable_and_owned():
    model = build_model("EffCRN23lite", seed=0)
    state = model.init_state(1)
    before = state.shapes()
    _, new = model.forward(np.zeros((257, 3, 2), np.float32), state)
    assert new.shapes() == before
    other = build_model("EffCRN23lite", seed=0)
    with pytest.raises(UsageError):
        other.forward(np.zeros((257, 1, 2), np.float32), new)
    new.reset()
    assert all(np.all(np.asarray(v) == 0) for cell in new.cells
               for v in (cell if isinstance(cell, tuple) else (cell,)))
