"""Residual 1-D CNN with built-in reverse-mode gradients, Adam, and checkpoints."""
from .checkpoint import decode_checkpoint, encode_checkpoint, load_checkpoint, save_checkpoint
from .model import ArchConfig, Mode, ParamSet, Tape, backward, build_model, forward, network, predict, zero_grads
from .optim import AdamState, adam_step

__all__ = [
    "AdamState",
    "ArchConfig",
    "Mode",
    "ParamSet",
    "Tape",
    "adam_step",
    "backward",
    "build_model",
    "decode_checkpoint",
    "encode_checkpoint",
    "forward",
    "load_checkpoint",
    "network",
    "predict",
    "save_checkpoint",
    "zero_grads",
]
