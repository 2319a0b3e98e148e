import numpy as np
import pytest

from crossflow.nn import ops
from crossflow.nn.adam import Adam, AdamConfig
from crossflow.nn.checkpoint import (CheckpointError, load_checkpoint,
                                     save_checkpoint)
from crossflow.nn.qnetwork import (CONV1, CONV2, PARAM_LAYOUT, NetSpec,
                                   clone_params, forward, huber_loss,
                                   init_params, polyak_update,
                                   td_loss_and_grads)

SPEC = NetSpec(input_shape=(3, 8, 20), n_actions=2)


def f64_params(seed, spec=SPEC):
    return init_params(spec, np.random.default_rng(seed), dtype=np.float64)


def zero_params(spec=SPEC, dtype=np.float64):
    return {k: np.zeros(v, dtype=dtype) for k, v in spec.param_shapes().items()}


# -- op primitives ---------------------------------------------------------------


def test_conv_out_len():
    assert ops.conv_out_len(8, 4, 2) == 3
    assert ops.conv_out_len(20, 4, 2) == 9
    assert ops.conv_out_len(9, 2, 1) == 8
    with pytest.raises(ValueError):
        ops.conv_out_len(3, 4, 1)


def test_conv2d_forward_hand_case():
    x = np.arange(9, dtype=np.float64).reshape(1, 1, 3, 3)
    w = np.ones((1, 1, 2, 2))
    y, _ = ops.conv2d_forward(x, w, np.array([0.5]), stride=1)
    # each output is the sum of a 2x2 patch plus the bias
    expected = np.array([[0 + 1 + 3 + 4, 1 + 2 + 4 + 5],
                         [3 + 4 + 6 + 7, 4 + 5 + 7 + 8]]) + 0.5
    assert np.array_equal(y[0, 0], expected)


def test_conv2d_matches_naive_loops():
    rng = np.random.default_rng(0)
    x = rng.normal(size=(2, 3, 8, 20))
    w = rng.normal(size=(4, 3, 4, 4))
    b = rng.normal(size=4)
    stride = 2
    y, _ = ops.conv2d_forward(x, w, b, stride)
    ho, wo = y.shape[2], y.shape[3]
    naive = np.empty_like(y)
    for bi in range(2):
        for co in range(4):
            for i in range(ho):
                for j in range(wo):
                    patch = x[bi, :, i * stride:i * stride + 4,
                              j * stride:j * stride + 4]
                    naive[bi, co, i, j] = (patch * w[co]).sum() + b[co]
    assert np.allclose(y, naive, atol=1e-12)


def test_conv2d_backward_finite_difference():
    rng = np.random.default_rng(1)
    x = rng.normal(size=(2, 2, 6, 6))
    w = rng.normal(size=(3, 2, 2, 2))
    b = rng.normal(size=3)
    y, cache = ops.conv2d_forward(x, w, b, stride=2)
    g = rng.normal(size=y.shape)  # loss = sum(g * y)
    dx, dw, db = ops.conv2d_backward(g, cache)
    eps = 1e-6

    def loss(xx, ww, bb):
        yy, _ = ops.conv2d_forward(xx, ww, bb, stride=2)
        return float((g * yy).sum())

    for arr, grad in ((x, dx), (w, dw), (b, db)):
        flat = arr.reshape(-1)
        for idx in (0, flat.size // 2, flat.size - 1):
            orig = flat[idx]
            flat[idx] = orig + eps
            up = loss(x, w, b)
            flat[idx] = orig - eps
            down = loss(x, w, b)
            flat[idx] = orig
            num = (up - down) / (2 * eps)
            assert grad.reshape(-1)[idx] == pytest.approx(num, rel=1e-6,
                                                          abs=1e-9)


def test_dense_backward_finite_difference():
    rng = np.random.default_rng(2)
    x = rng.normal(size=(3, 5))
    w = rng.normal(size=(4, 5))
    b = rng.normal(size=4)
    g = rng.normal(size=(3, 4))
    dx, dw, db = ops.dense_backward(g, x, w)
    eps = 1e-6
    for arr, grad in ((x, dx), (w, dw), (b, db)):
        flat = arr.reshape(-1)
        for idx in range(flat.size):
            orig = flat[idx]
            flat[idx] = orig + eps
            up = float((g * ops.dense_forward(x, w, b)).sum())
            flat[idx] = orig - eps
            down = float((g * ops.dense_forward(x, w, b)).sum())
            flat[idx] = orig
            assert grad.reshape(-1)[idx] == pytest.approx(
                (up - down) / (2 * eps), rel=1e-6, abs=1e-9)


def test_elu_values_and_derivative():
    x = np.array([-2.0, -1.0, 0.0, 0.5, 3.0])
    y = ops.elu(x)
    assert np.allclose(y, [np.expm1(-2), np.expm1(-1), 0.0, 0.5, 3.0])
    d = ops.elu_backward(np.ones_like(y), y)
    assert np.allclose(d, [np.exp(-2), np.exp(-1), 1.0, 1.0, 1.0])


def test_elu_preserves_dtype():
    x32 = np.array([-1.5, 2.0], dtype=np.float32)
    assert ops.elu(x32).dtype == np.float32
    assert ops.elu_backward(x32, ops.elu(x32)).dtype == np.float32


# -- network spec and init ---------------------------------------------------------


def test_netspec_conv_shapes():
    first, second = SPEC.conv_shapes()
    assert first == (16, 3, 9)
    assert second == (32, 2, 8)
    assert SPEC.flat_size == 512


def test_netspec_param_shapes():
    shapes = SPEC.param_shapes()
    assert shapes["conv1_w"] == (16, 3, 4, 4)
    assert shapes["conv2_w"] == (32, 16, 2, 2)
    assert shapes["fc1_w"] == (128, 512)
    assert shapes["fc2_w"] == (64, 128)
    assert shapes["value_w"] == (1, 64)
    assert shapes["adv_w"] == (2, 64)
    assert set(shapes) == set(PARAM_LAYOUT)


def test_netspec_larger_grids():
    assert NetSpec((3, 12, 20), 4).flat_size == 32 * 4 * 8
    assert NetSpec((3, 16, 20), 4).flat_size == 32 * 6 * 8


def test_netspec_validation():
    with pytest.raises(ValueError):
        NetSpec((1, 8, 20), 2)
    with pytest.raises(ValueError):
        NetSpec((3, 8, 20), 1)
    with pytest.raises(ValueError):
        NetSpec((3, 4, 20), 2)  # too small for both convolutions


def test_init_bounds_and_biases():
    params = init_params(SPEC, np.random.default_rng(3))
    for name, arr in params.items():
        assert arr.dtype == np.float32
        if name.endswith("_b"):
            assert (arr == 0).all()
            continue
        fan_in = int(np.prod(arr.shape[1:]))
        limit = np.sqrt(6.0 / fan_in)
        if name in ("value_w", "adv_w"):
            limit /= 100.0
        assert np.abs(arr).max() <= limit
        assert np.abs(arr).max() > 0.5 * limit  # actually spread out


def test_init_deterministic_per_seed():
    a = init_params(SPEC, np.random.default_rng(4))
    b = init_params(SPEC, np.random.default_rng(4))
    c = init_params(SPEC, np.random.default_rng(5))
    assert all(np.array_equal(a[k], b[k]) for k in a)
    assert not all(np.array_equal(a[k], c[k]) for k in a)


# -- forward pass -------------------------------------------------------------------


def test_dueling_aggregation_hand_case():
    # zero weights force zero features; Q = value_b + adv_b - mean(adv_b)
    params = zero_params()
    params["value_b"][:] = 1.0
    params["adv_b"][:] = [2.0, 0.0]
    q = forward(params, np.zeros((3, 8, 20)))
    assert np.array_equal(q, [2.0, 0.0])


def test_advantage_shift_invariance():
    params = f64_params(6)
    x = np.random.default_rng(7).random((4, 3, 8, 20))
    q = forward(params, x)
    params["adv_b"] += 17.5  # constant advantage shift must not move Q
    assert np.allclose(forward(params, x), q, atol=1e-9)


def test_mean_q_equals_value_stream():
    params = f64_params(8)
    x = np.random.default_rng(9).random((5, 3, 8, 20))
    q, cache = forward(params, x, want_cache=True)
    a4 = cache[-1]
    value = ops.dense_forward(a4, params["value_w"], params["value_b"])
    assert np.allclose(q.mean(axis=1, keepdims=True), value, atol=1e-12)


def test_forward_single_matches_batch():
    params = f64_params(10)
    x = np.random.default_rng(11).random((3, 8, 20))
    single = forward(params, x)
    batch = forward(params, x[None])
    assert single.shape == (2,)
    assert np.array_equal(single, batch[0])


def test_forward_float32_path():
    params = init_params(SPEC, np.random.default_rng(12))
    x = np.random.default_rng(13).random((2, 3, 8, 20), dtype=np.float32)
    q = forward(params, x)
    assert q.dtype == np.float32


# -- loss ---------------------------------------------------------------------------


def test_huber_hand_values():
    assert huber_loss(np.array([0.5])) == pytest.approx(0.125)
    assert huber_loss(np.array([-3.0])) == pytest.approx(2.5)
    assert huber_loss(np.array([0.5, -3.0])) == pytest.approx(
        (0.25 + 5.0) / 4.0)
    assert huber_loss(np.array([1.0])) == pytest.approx(0.5)  # boundary
    with pytest.raises(ValueError):
        huber_loss(np.array([]))


def test_td_grad_clips_at_unit_delta():
    params = f64_params(14)
    states = np.random.default_rng(15).random((2, 3, 8, 20))
    actions = np.array([0, 1])
    q = forward(params, states)
    targets = np.array([q[0, 0] + 0.5, q[1, 1] - 3.0])
    loss, grads, deltas = td_loss_and_grads(params, states, actions, targets)
    assert np.allclose(deltas, [0.5, -3.0], atol=1e-12)
    assert loss == pytest.approx((0.25 + 5.0) / 4.0)
    # dL/dvalue_b = sum_m -clip(d_m)/M = (-0.25) + (+0.5)
    assert grads["value_b"][0] == pytest.approx(0.25, abs=1e-12)


def test_td_loss_empty_batch():
    with pytest.raises(ValueError):
        td_loss_and_grads(f64_params(16), np.zeros((0, 3, 8, 20)),
                          np.zeros(0, int), np.zeros(0))


def grad_check(seed, spec=SPEC, batch=3, eps=1e-6):
    """Compare analytic and central-difference gradients; returns worst rel."""
    rng = np.random.default_rng(seed)
    params = init_params(spec, rng, dtype=np.float64)
    states = rng.random((batch, *spec.input_shape))
    actions = rng.integers(spec.n_actions, size=batch)
    targets = rng.normal(size=batch)

    def loss_of(p):
        return td_loss_and_grads(p, states, actions, targets)[0]

    _, grads, _ = td_loss_and_grads(params, states, actions, targets)
    worst = 0.0
    for name in PARAM_LAYOUT:
        flat = params[name].reshape(-1)
        gflat = grads[name].reshape(-1)
        idx = {0, flat.size // 3, flat.size // 2, flat.size - 1}
        idx.update(int(i) for i in rng.integers(flat.size, size=4))
        for i in idx:
            orig = flat[i]
            flat[i] = orig + eps
            up = loss_of(params)
            flat[i] = orig - eps
            down = loss_of(params)
            flat[i] = orig
            num = (up - down) / (2 * eps)
            rel = abs(gflat[i] - num) / max(1.0, abs(gflat[i]), abs(num))
            worst = max(worst, rel)
    return worst


def test_gradient_check_float64():
    assert grad_check(seed=100) < 1e-7


def test_gradient_check_other_geometry():
    assert grad_check(seed=101, spec=NetSpec((3, 12, 20), 4)) < 1e-7


# -- optimiser ----------------------------------------------------------------------


def test_adam_constant_gradient_steps_by_lr():
    params = {"w": np.full(4, 10.0)}
    opt = Adam(params, AdamConfig(lr=1e-2))
    grads = {"w": np.full(4, 0.5)}
    opt.step(params, grads)
    assert np.allclose(params["w"], 10.0 - 1e-2, rtol=1e-6)
    for _ in range(99):
        opt.step(params, grads)
    assert opt.t == 100
    assert np.allclose(params["w"], 10.0 - 100 * 1e-2, rtol=1e-2)


def test_adam_zero_gradient_is_a_no_op():
    params = {"w": np.arange(3, dtype=np.float64)}
    opt = Adam(params)
    before = params["w"].copy()
    opt.step(params, {"w": np.zeros(3)})
    assert np.array_equal(params["w"], before)


def test_adam_descends_quadratic():
    params = {"w": np.array([4.0])}
    opt = Adam(params, AdamConfig(lr=0.05))
    for _ in range(2000):
        opt.step(params, {"w": 2.0 * params["w"]})
    assert abs(params["w"][0]) < 1e-3


# -- target network -----------------------------------------------------------------


def test_polyak_hand_value():
    target = {"w": np.zeros(3)}
    online = {"w": np.ones(3)}
    polyak_update(target, online, tau=1e-3)
    assert np.allclose(target["w"], 0.001, atol=1e-15)


def test_polyak_geometric_convergence():
    target = {"w": np.zeros(1)}
    online = {"w": np.ones(1)}
    for _ in range(200):
        polyak_update(target, online, tau=1e-3)
    assert target["w"][0] == pytest.approx(1.0 - (1.0 - 1e-3) ** 200)


def test_polyak_tau_one_copies():
    target = {"w": np.full(2, 5.0)}
    polyak_update(target, {"w": np.array([1.0, 2.0])}, tau=1.0)
    assert np.allclose(target["w"], [1.0, 2.0])


def test_polyak_keeps_float32():
    target = {"w": np.zeros(2, dtype=np.float32)}
    polyak_update(target, {"w": np.ones(2, dtype=np.float32)}, tau=1e-3)
    assert target["w"].dtype == np.float32


def test_clone_params_is_independent():
    params = f64_params(17)
    cloned = clone_params(params)
    cloned["fc1_w"][0, 0] += 1.0
    assert params["fc1_w"][0, 0] != cloned["fc1_w"][0, 0]


# -- checkpoints --------------------------------------------------------------------


def test_checkpoint_round_trip(tmp_path):
    params = init_params(SPEC, np.random.default_rng(18))
    path = tmp_path / "net.ckpt"
    save_checkpoint(path, params, scenario="a", train_step=1234,
                    n_actions=2, input_shape=(3, 8, 20),
                    extra={"note": "unit"})
    loaded, meta = load_checkpoint(path)
    for name in PARAM_LAYOUT:
        assert np.array_equal(loaded[name], params[name])
        assert loaded[name].dtype == np.float32
    assert meta["scenario"] == "a"
    assert meta["train_step"] == 1234
    assert meta["extra"] == {"note": "unit"}


def test_checkpoint_round_trip_is_byte_stable(tmp_path):
    params = init_params(SPEC, np.random.default_rng(19))
    p1, p2 = tmp_path / "one.ckpt", tmp_path / "two.ckpt"
    save_checkpoint(p1, params, "a", 0, 2, (3, 8, 20))
    save_checkpoint(p2, params, "a", 0, 2, (3, 8, 20))
    assert p1.read_bytes() == p2.read_bytes()


def test_checkpoint_scenario_guard(tmp_path):
    path = tmp_path / "net.ckpt"
    save_checkpoint(path, init_params(SPEC, np.random.default_rng(20)),
                    "a", 0, 2, (3, 8, 20))
    load_checkpoint(path, expect_scenario="a")
    with pytest.raises(CheckpointError):
        load_checkpoint(path, expect_scenario="b")


def test_checkpoint_rejects_garbage(tmp_path):
    bad = tmp_path / "bad.ckpt"
    bad.write_bytes(b"not a checkpoint at all")
    with pytest.raises(CheckpointError):
        load_checkpoint(bad)


def test_checkpoint_rejects_truncation(tmp_path):
    path = tmp_path / "net.ckpt"
    save_checkpoint(path, init_params(SPEC, np.random.default_rng(21)),
                    "a", 0, 2, (3, 8, 20))
    blob = path.read_bytes()
    for cut in (4, 9, len(blob) // 2, len(blob) - 3):
        trunc = tmp_path / f"cut{cut}.ckpt"
        trunc.write_bytes(blob[:cut])
        with pytest.raises(CheckpointError):
            load_checkpoint(trunc)


def test_checkpoint_rejects_trailing_bytes(tmp_path):
    path = tmp_path / "net.ckpt"
    save_checkpoint(path, init_params(SPEC, np.random.default_rng(22)),
                    "a", 0, 2, (3, 8, 20))
    path.write_bytes(path.read_bytes() + b"xx")
    with pytest.raises(CheckpointError):
        load_checkpoint(path)


def test_checkpoint_rejects_wrong_version(tmp_path):
    path = tmp_path / "net.ckpt"
    save_checkpoint(path, init_params(SPEC, np.random.default_rng(23)),
                    "a", 0, 2, (3, 8, 20))
    blob = bytearray(path.read_bytes())
    blob[4] = 9
    path.write_bytes(bytes(blob))
    with pytest.raises(CheckpointError):
        load_checkpoint(path)
