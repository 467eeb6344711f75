"""Minimal float64 neural toolkit: layers with hand-written backprop, Adam
with decoupled weight decay, a finite-difference gradient checker, and a
binary parameter file."""
from . import ops
from .disk import load_params, save_params
from .gradcheck import grad_check
from .params import AdamConfig, Params, xavier_uniform

__all__ = [
    "ops",
    "AdamConfig",
    "Params",
    "xavier_uniform",
    "grad_check",
    "save_params",
    "load_params",
]
