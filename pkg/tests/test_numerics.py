import numpy as np
import pytest

from posterdiff import numerics as nm
from posterdiff.numerics import AdamConfig, ParameterStore, Tensor

from .oracles import finite_difference_grad


def t64(arr, name=None):
    return Tensor(np.asarray(arr, dtype=np.float64), requires_grad=True, name=name)


def fd_check(build_loss, x0, rtol=1e-3, h=1e-3):
    """Compare analytic input gradient against central finite differences."""
    x = t64(x0.copy(), name="x")
    loss = build_loss(x)
    nm.backward(loss)
    analytic = x.grad.copy()

    def loss_value(arr):
        return build_loss(Tensor(arr.astype(np.float64))).item()

    fd = finite_difference_grad(loss_value, x0.copy().astype(np.float64), h=h)
    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(fd)), 1e-8)
    rel = np.abs(analytic - fd) / denom
    mask = np.maximum(np.abs(analytic), np.abs(fd)) > 1e-7
    assert rel[mask].max(initial=0.0) <= rtol, f"max rel err {rel[mask].max(initial=0.0):.2e}"


def test_matmul_identity():
    a = Tensor(np.random.default_rng(0).random((2, 3)).astype(np.float32))
    out = nm.matmul(Tensor(np.eye(2, dtype=np.float32)), a)
    assert np.allclose(out.data, a.data)


def test_softmax_constant():
    out = nm.softmax(Tensor(np.full((4, 5), 2.5, dtype=np.float32)))
    assert np.allclose(out.data, 0.2)


def test_scatter_mean_single_node():
    msgs = Tensor(np.array([[1.0], [3.0]], dtype=np.float32))
    out = nm.scatter_mean(msgs, np.array([0, 0]), 1)
    assert out.data.shape == (1, 1)
    assert out.data[0, 0] == pytest.approx(2.0)


def test_scatter_mean_empty_segment_zero():
    msgs = Tensor(np.array([[1.0, 2.0]], dtype=np.float32))
    out = nm.scatter_mean(msgs, np.array([2]), 4)
    assert np.allclose(out.data[[0, 1, 3]], 0.0)
    assert np.allclose(out.data[2], [1.0, 2.0])


def test_backward_sum_of_squares():
    theta = t64([3.0], name="theta")
    loss = nm.sum_reduce(nm.mul(theta, theta))
    nm.backward(loss)
    assert theta.grad == pytest.approx([6.0])


def test_backward_unreachable_param_zero():
    store = ParameterStore(seed=0)
    unused = store.create("unused", (2, 2))
    x = t64([1.0, 2.0], name="x")
    nm.backward(nm.sum_reduce(nm.mul(x, x)))
    assert unused.grad is None
    assert np.array_equal(store.grad_or_zero("unused"), np.zeros((2, 2), dtype=np.float32))


def test_backward_requires_scalar():
    x = t64([1.0, 2.0])
    with pytest.raises(ValueError):
        nm.backward(nm.mul(x, x))


def test_two_layer_mlp_finite_differences():
    rng = np.random.default_rng(42)
    w1 = rng.standard_normal((4, 8))
    b1 = rng.standard_normal((8,)) * 0.1
    w2 = rng.standard_normal((8, 3))
    target = rng.standard_normal((5, 3))
    x0 = rng.standard_normal((5, 4))

    def build(x):
        h = nm.gelu(nm.add(nm.matmul(x, Tensor(w1)), Tensor(b1)))
        y = nm.matmul(h, Tensor(w2))
        diff = nm.add(y, Tensor(-target))
        return nm.mean_reduce(nm.mul(diff, diff))

    fd_check(build, x0)

    # and gradients w.r.t. the weights
    def build_w(w):
        h = nm.gelu(nm.add(nm.matmul(Tensor(x0), w), Tensor(b1)))
        y = nm.matmul(h, Tensor(w2))
        diff = nm.add(y, Tensor(-target))
        return nm.mean_reduce(nm.mul(diff, diff))

    fd_check(build_w, w1.copy())


@pytest.mark.parametrize(
    "name,build",
    [
        ("gelu", lambda x: nm.sum_reduce(nm.gelu(x))),
        ("softmax", lambda x: nm.sum_reduce(nm.mul(nm.softmax(x), Tensor(_W)))),
        ("mean", lambda x: nm.sum_reduce(nm.mul(nm.mean_reduce(nm.mul(x, x), axis=1), Tensor(_V)))),
        ("concat_slice", lambda x: nm.sum_reduce(nm.mul(nm.take_slice(nm.concat([x, x], axis=1), (slice(None), slice(1, 5))), Tensor(_C)))),
        ("transpose_reshape", lambda x: nm.sum_reduce(nm.mul(nm.reshape(nm.transpose(x, (1, 0)), (3, 4)), Tensor(_W.T.reshape(3, 4))))),
        ("gather", lambda x: nm.sum_reduce(nm.mul(nm.gather_rows(x, np.array([0, 2, 2, 1])), Tensor(_G)))),
        ("scatter", lambda x: nm.sum_reduce(nm.mul(nm.scatter_mean(x, np.array([1, 0, 1, 3]), 5), Tensor(_S)))),
    ],
)
def test_op_gradients(name, build):
    rng = np.random.default_rng(hash(name) % 2**32)
    x0 = rng.standard_normal((4, 3))
    fd_check(build, x0)


_W = np.random.default_rng(1).standard_normal((4, 3))
_C = np.random.default_rng(1).standard_normal((4, 4))
_V = np.random.default_rng(2).standard_normal((4,))
_G = np.random.default_rng(3).standard_normal((4, 3))
_S = np.random.default_rng(4).standard_normal((5, 3))


def test_layer_norm_gradient():
    rng = np.random.default_rng(9)
    gain = rng.standard_normal((6,))
    bias = rng.standard_normal((6,))
    w = rng.standard_normal((3, 6))

    def build(x):
        return nm.sum_reduce(nm.mul(nm.layer_norm(x, Tensor(gain), Tensor(bias)), Tensor(w)))

    fd_check(build, rng.standard_normal((3, 6)), rtol=2e-3)


def test_layer_norm_param_gradients():
    rng = np.random.default_rng(10)
    x = rng.standard_normal((3, 6))
    w = rng.standard_normal((3, 6))

    def build_gain(g):
        return nm.sum_reduce(nm.mul(nm.layer_norm(Tensor(x), g, Tensor(np.zeros(6))), Tensor(w)))

    fd_check(build_gain, rng.standard_normal((6,)))


def test_batched_matmul_gradient():
    rng = np.random.default_rng(11)
    b = rng.standard_normal((4, 5))
    w = rng.standard_normal((2, 3, 5))

    def build(x):
        return nm.sum_reduce(nm.mul(nm.matmul(x, Tensor(b)), Tensor(w)))

    fd_check(build, rng.standard_normal((2, 3, 4)))


def test_broadcast_add_gradient():
    rng = np.random.default_rng(12)
    w = rng.standard_normal((3, 4))
    other = rng.standard_normal((3, 4))

    def build(x):  # x is (4,) broadcast over rows
        return nm.sum_reduce(nm.mul(nm.add(Tensor(other), x), Tensor(w)))

    fd_check(build, rng.standard_normal((4,)))


def test_adam_zero_gradient_keeps_params():
    store = ParameterStore(seed=1)
    p = store.create("p", (3,))
    before = p.data.copy()
    store.adam_step(AdamConfig())
    assert np.array_equal(p.data, before)


def test_adam_first_step_magnitude():
    store = ParameterStore(seed=2)
    p = store.create("p", (4,))
    before = p.data.copy()
    g = np.full((4,), 0.5, dtype=np.float32)
    p.grad = g.copy()
    cfg = AdamConfig(lr=1e-2)
    store.adam_step(cfg)
    moved = p.data - before
    # bias-corrected first step is ~ -lr * sign(g)
    assert np.allclose(moved, -cfg.lr, atol=1e-4)
    assert p.grad is None


def test_adam_quadratic_bowl():
    store = ParameterStore(seed=3)
    p = store.create("p", (5,), scale=1.0)
    target = np.linspace(-1, 1, 5).astype(np.float32)
    cfg = AdamConfig(lr=1e-2)
    loss_val = None
    for _ in range(2000):
        diff = nm.add(p, Tensor(-target))
        loss = nm.sum_reduce(nm.mul(diff, diff))
        store.zero_grads()
        nm.backward(loss)
        store.adam_step(cfg)
        loss_val = loss.item()
    assert loss_val < 1e-6


def test_clip_global_norm():
    store = ParameterStore(seed=4)
    a = store.create("a", (3,))
    b = store.create("b", (4,))
    a.grad = np.full((3,), 3.0, dtype=np.float32)
    b.grad = np.full((4,), 4.0, dtype=np.float32)
    norm = store.clip_global_norm(1.0)
    assert norm == pytest.approx(np.sqrt(27 + 64))
    clipped = np.sqrt((a.grad**2).sum() + (b.grad**2).sum())
    assert clipped == pytest.approx(1.0, rel=1e-5)


def test_gather_scatter_round_trip():
    rng = np.random.default_rng(13)
    x = Tensor(rng.random((6, 4)).astype(np.float32))
    idx = np.array([5, 1, 0, 3, 2, 4])  # duplicate-free permutation
    gathered = nm.gather_rows(x, idx)
    back = nm.scatter_mean(gathered, idx, 6)
    assert np.allclose(back.data, x.data)


def test_determinism():
    def run():
        store = ParameterStore(seed=7)
        w = store.create("w", (4, 4))
        x = Tensor(np.random.default_rng(0).random((2, 4)).astype(np.float32))
        out = nm.sum_reduce(nm.gelu(nm.matmul(x, w)))
        nm.backward(out)
        return out.item(), w.grad.copy()

    v1, g1 = run()
    v2, g2 = run()
    assert v1 == v2
    assert np.array_equal(g1, g2)


def test_checked_mode_raises():
    big = Tensor(np.array([1e38, 1e38], dtype=np.float32))
    with np.errstate(over="ignore"):
        with nm.checked_mode():
            with pytest.raises(FloatingPointError):
                nm.mul(big, big)
        # outside the context the same op is permitted
        nm.mul(big, big)


def test_sinusoidal_embed():
    e = nm.sinusoidal_embed(0, 8)
    assert e.shape == (8,)
    assert np.allclose(e.data[:4], 0.0)
    assert np.allclose(e.data[4:], 1.0)
    batch = nm.sinusoidal_embed(np.array([1, 2, 1]), 8)
    assert batch.shape == (3, 8)
    assert np.array_equal(batch.data[0], batch.data[2])
    assert not np.array_equal(batch.data[0], batch.data[1])


def test_matmul_shape_error():
    with pytest.raises(ValueError):
        nm.matmul(Tensor(np.zeros((2, 3))), Tensor(np.zeros((4, 2))))


def test_checkpoint_round_trip(tmp_path):
    rng = np.random.default_rng(5)
    tensors = {
        "layer.w": rng.standard_normal((3, 4)).astype(np.float32),
        "layer.b": rng.standard_normal((4,)).astype(np.float32),
        "scalar": np.array(2.5, dtype=np.float32),
    }
    config = {"d_model": 64, "note": "round trip"}
    path = tmp_path / "model.ckpt"
    nm.save_checkpoint(path, tensors, config)
    loaded, cfg = nm.load_checkpoint(path)
    assert cfg == config
    assert set(loaded) == set(tensors)
    for k in tensors:
        assert np.array_equal(loaded[k], tensors[k])
    with open(path, "rb") as f:
        assert f.read(4) == b"IPST"


def test_checkpoint_bad_magic(tmp_path):
    p = tmp_path / "bad.ckpt"
    p.write_bytes(b"NOPE" + b"\x00" * 16)
    with pytest.raises(ValueError):
        nm.load_checkpoint(p)


def test_store_state_round_trip(tmp_path):
    store = ParameterStore(seed=6)
    w = store.create("w", (3, 3))
    w.grad = np.ones_like(w.data)
    store.adam_step(AdamConfig())
    tensors = store.state_tensors()
    assert "adam.m.w" in tensors and "adam.v.w" in tensors

    store2 = ParameterStore(seed=99)
    store2.create("w", (3, 3))
    store2.load_state_tensors(tensors, step_count=store.step_count)
    assert np.array_equal(store2.get("w").data, w.data)
    assert store2.step_count == 1
