"""Hand-written neural network engine for the dueling double DQN.

Everything here is derived and implemented from first principles on top of
numpy array operations: strided convolutions (forward and backward), dense
layers, ELU, the dueling value/advantage head, the Huber TD loss with its
exact gradient, Adam and Polyak target updates, plus a small binary
checkpoint format. No autograd library is involved; the analytic gradients
are validated against central finite differences in the test suite.
"""

from .qnetwork import (NetSpec, init_params, forward, backward,
                       td_loss_and_grads, huber_loss, polyak_update,
                       PARAM_LAYOUT)
from .adam import Adam, AdamConfig
from .checkpoint import save_checkpoint, load_checkpoint, CheckpointError

__all__ = [
    "NetSpec", "init_params", "forward", "backward", "td_loss_and_grads",
    "huber_loss", "polyak_update", "PARAM_LAYOUT",
    "Adam", "AdamConfig",
    "save_checkpoint", "load_checkpoint", "CheckpointError",
]
