"""The dueling Q-network: architecture, init, forward/backward, TD loss.

Architecture (valid convolutions, ELU activations, float32):

    input (3, rows, 20)
      -> conv 16 channels, 4x4 kernel, stride 2 -> ELU
      -> conv 32 channels, 2x2 kernel, stride 1 -> ELU
      -> flatten -> dense 128 -> ELU -> dense 64 -> ELU
      -> value head (64 -> 1) and advantage head (64 -> |A|)

    Q(s, a) = V(s) + A(s, a) - mean_a' A(s, a')

Subtracting the advantage mean pins mean_a(Q - V) to zero, which makes the
decomposition identifiable; adding any constant to all advantages leaves Q
untouched.

The TD loss over a batch of M transitions is the Huber form

    L = (1/2M) * sum_m [ d_m^2            if |d_m| < 1
                         2|d_m| - 1       otherwise ]

with d_m = target_m - Q(s_m, a_m) and the target treated as a constant, so
dL/dQ(s_m, a_m) = -clip(d_m, -1, 1)/M and nothing else receives gradient.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import ops

# Checkpoint serialisation order; also the parameter draw order at init.
PARAM_LAYOUT = (
    "conv1_w", "conv1_b", "conv2_w", "conv2_b",
    "fc1_w", "fc1_b", "fc2_w", "fc2_b",
    "value_w", "value_b", "adv_w", "adv_b",
)

CONV1 = (16, 4, 2)  # channels, kernel, stride
CONV2 = (32, 2, 1)
FC1 = 128
FC2 = 64


@dataclass(frozen=True)
class NetSpec:
    input_shape: tuple[int, int, int]  # (channels, rows, cells)
    n_actions: int

    def __post_init__(self):
        c, h, w = self.input_shape
        if c != 3:
            raise ValueError("expected a 3-channel state grid")
        if self.n_actions < 2:
            raise ValueError("need at least two actions")
        # raises if the grid is too small for the two convolutions
        self.conv_shapes()

    def conv_shapes(self):
        c, h, w = self.input_shape
        c1, k1, s1 = CONV1
        h1 = ops.conv_out_len(h, k1, s1)
        w1 = ops.conv_out_len(w, k1, s1)
        c2, k2, s2 = CONV2
        h2 = ops.conv_out_len(h1, k2, s2)
        w2 = ops.conv_out_len(w1, k2, s2)
        return (c1, h1, w1), (c2, h2, w2)

    @property
    def flat_size(self) -> int:
        (_, _, _), (c2, h2, w2) = self.conv_shapes()
        return c2 * h2 * w2

    def param_shapes(self) -> dict[str, tuple[int, ...]]:
        c, _, _ = self.input_shape
        c1, k1, _ = CONV1
        c2, k2, _ = CONV2
        return {
            "conv1_w": (c1, c, k1, k1), "conv1_b": (c1,),
            "conv2_w": (c2, c1, k2, k2), "conv2_b": (c2,),
            "fc1_w": (FC1, self.flat_size), "fc1_b": (FC1,),
            "fc2_w": (FC2, FC1), "fc2_b": (FC2,),
            "value_w": (1, FC2), "value_b": (1,),
            "adv_w": (self.n_actions, FC2), "adv_b": (self.n_actions,),
        }


def init_params(spec: NetSpec, rng: np.random.Generator,
                dtype=np.float32) -> dict[str, np.ndarray]:
    """He-style fan-in uniform init, biases zero, |w| < 1 everywhere.

    The value/advantage output layers are scaled down by 100 so the initial
    Q surface is near-uniform and early greedy actions are not dominated by
    init noise.
    """
    params: dict[str, np.ndarray] = {}
    for name in PARAM_LAYOUT:
        shape = spec.param_shapes()[name]
        if name.endswith("_b"):
            params[name] = np.zeros(shape, dtype=dtype)
            continue
        fan_in = int(np.prod(shape[1:]))
        limit = np.sqrt(6.0 / fan_in)
        if name in ("value_w", "adv_w"):
            limit /= 100.0
        params[name] = rng.uniform(-limit, limit, size=shape).astype(dtype)
    return params


def forward(params: dict[str, np.ndarray], x: np.ndarray,
            want_cache: bool = False):
    """Batch forward pass. x: (B, 3, rows, cells) or a single state.

    Returns q (B, |A|), or (q, cache) when want_cache is set.
    """
    single = x.ndim == 3
    if single:
        x = x[None]
    z1, cv1 = ops.conv2d_forward(x, params["conv1_w"], params["conv1_b"],
                                 CONV1[2])
    a1 = ops.elu(z1)
    z2, cv2 = ops.conv2d_forward(a1, params["conv2_w"], params["conv2_b"],
                                 CONV2[2])
    a2 = ops.elu(z2)
    flat = a2.reshape(a2.shape[0], -1)
    z3 = ops.dense_forward(flat, params["fc1_w"], params["fc1_b"])
    a3 = ops.elu(z3)
    z4 = ops.dense_forward(a3, params["fc2_w"], params["fc2_b"])
    a4 = ops.elu(z4)
    value = ops.dense_forward(a4, params["value_w"], params["value_b"])
    adv = ops.dense_forward(a4, params["adv_w"], params["adv_b"])
    q = value + adv - adv.mean(axis=1, keepdims=True)
    if single:
        q = q[0]
    if not want_cache:
        return q
    cache = (cv1, a1, cv2, a2, flat, a3, a4)
    return q, cache


def backward(params: dict[str, np.ndarray], cache,
             dq: np.ndarray) -> dict[str, np.ndarray]:
    """Exact gradients for every parameter given dL/dQ (B, |A|)."""
    cv1, a1, cv2, a2, flat, a3, a4 = cache
    n_actions = dq.shape[1]
    # dueling aggregation: dV = sum_a dQ_a; dA_a = dQ_a - mean_a' dQ_a'
    dvalue = dq.sum(axis=1, keepdims=True)
    dadv = dq - dq.sum(axis=1, keepdims=True) / dq.dtype.type(n_actions)
    grads: dict[str, np.ndarray] = {}
    da4_v, grads["value_w"], grads["value_b"] = ops.dense_backward(
        dvalue, a4, params["value_w"])
    da4_a, grads["adv_w"], grads["adv_b"] = ops.dense_backward(
        dadv, a4, params["adv_w"])
    da4 = da4_v + da4_a
    dz4 = ops.elu_backward(da4, a4)
    da3, grads["fc2_w"], grads["fc2_b"] = ops.dense_backward(
        dz4, a3, params["fc2_w"])
    dz3 = ops.elu_backward(da3, a3)
    dflat, grads["fc1_w"], grads["fc1_b"] = ops.dense_backward(
        dz3, flat, params["fc1_w"])
    da2 = dflat.reshape(a2.shape)
    dz2 = ops.elu_backward(da2, a2)
    da1, grads["conv2_w"], grads["conv2_b"] = ops.conv2d_backward(dz2, cv2)
    dz1 = ops.elu_backward(da1, a1)
    _, grads["conv1_w"], grads["conv1_b"] = ops.conv2d_backward(dz1, cv1)
    return grads


def huber_loss(deltas: np.ndarray) -> float:
    """(1/2M) * sum of d^2 (|d| < 1) or 2|d| - 1 (otherwise)."""
    deltas = np.asarray(deltas)
    if deltas.size == 0:
        raise ValueError("huber loss of an empty batch")
    a = np.abs(deltas)
    per = np.where(a < 1.0, deltas * deltas, 2.0 * a - 1.0)
    return float(per.sum() / (2.0 * deltas.size))


def td_loss_and_grads(params: dict[str, np.ndarray], states: np.ndarray,
                      actions: np.ndarray, targets: np.ndarray):
    """Huber TD loss and its exact parameter gradients.

    The targets are constants; gradient flows only through Q(s_m, a_m) of
    the taken actions. Returns (loss, grads, deltas).
    """
    m = states.shape[0]
    if m == 0:
        raise ValueError("empty batch")
    q, cache = forward(params, states, want_cache=True)
    rows = np.arange(m)
    q_taken = q[rows, actions]
    deltas = targets - q_taken
    loss = huber_loss(deltas)
    dq = np.zeros_like(q)
    dq[rows, actions] = -np.clip(deltas, -1.0, 1.0) / q.dtype.type(m)
    grads = backward(params, cache, dq)
    return loss, grads, deltas


def polyak_update(target: dict[str, np.ndarray],
                  online: dict[str, np.ndarray], tau: float) -> None:
    """In-place soft update: target <- (1 - tau)*target + tau*online."""
    for name, t in target.items():
        t *= (1.0 - tau)
        t += tau * online[name]


def clone_params(params: dict[str, np.ndarray]) -> dict[str, np.ndarray]:
    return {k: v.copy() for k, v in params.items()}
