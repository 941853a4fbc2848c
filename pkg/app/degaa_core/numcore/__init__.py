from . import ops
from .nn import Linear, Mlp, Module, load_state_payload, state_payload
from .optim import Sgd, SgdConfig, cosine_lr, sgd_step
from .rng import make_rng
from .tensor import ComputeGraph, GradientMap, OpRecord, Tensor, backward

__all__ = [
    "ops",
    "Tensor",
    "OpRecord",
    "ComputeGraph",
    "GradientMap",
    "backward",
    "Module",
    "Linear",
    "Mlp",
    "state_payload",
    "load_state_payload",
    "SgdConfig",
    "Sgd",
    "cosine_lr",
    "sgd_step",
    "make_rng",
]
