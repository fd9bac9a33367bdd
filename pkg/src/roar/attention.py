"""Self-adaptive object-aware attention.

Each frame's detected objects are scored against the previous recurrent state,
softmax-normalised over the objects actually present, and pooled into one
object descriptor for the frame. All functions take a leading batch axis.
"""
from dataclasses import dataclass

import numpy as np

from . import numeric as nm


@dataclass
class ObjectFrame:
    F_obj: np.ndarray  # N x D_obj
    mask: np.ndarray  # N booleans, padded slots False

    def __post_init__(self):
        self.F_obj = np.asarray(self.F_obj, dtype=np.float64)
        self.mask = np.asarray(self.mask, dtype=bool)
        if self.F_obj.ndim != 2 or self.mask.shape != (self.F_obj.shape[0],):
            raise ValueError(f"ObjectFrame shapes disagree: F_obj {self.F_obj.shape}, mask {self.mask.shape}")


def project_objects(F_obj, p):
    """F_obj @ W_ua for a (..., N, D_obj) array, shared by every time step."""
    F = np.asarray(F_obj, dtype=np.float64)
    d_obj = F.shape[-1]
    if d_obj != p["W_ua"].shape[0]:
        raise nm.ShapeError(f"object dim {d_obj} does not match W_ua {p['W_ua'].shape}")
    flat = nm.matmul(F.reshape(-1, d_obj), p["W_ua"])
    return nm.reshape(flat, F.shape[:-1] + (p["W_ua"].shape[1],))


def attention_energies(h_prev, F_obj, p, obj_proj=None):
    """Scalar energy per object: tanh(h W_wa + F_obj W_ua + b_a) W_w.

    h_prev is B x H, F_obj is B x N x D_obj; returns B x N.
    """
    h_prev = nm.as_tensor(h_prev)
    if h_prev.shape[1] != p["W_wa"].shape[0]:
        raise nm.ShapeError(f"hidden dim {h_prev.shape[1]} does not match W_wa {p['W_wa'].shape}")
    if obj_proj is None:
        obj_proj = project_objects(F_obj, p)
    B, N, A = obj_proj.shape
    hw = nm.reshape(nm.matmul(h_prev, p["W_wa"]), (B, 1, A))
    e = nm.tanh(obj_proj + hw + p["b_a"])
    return nm.reshape(nm.matmul(nm.reshape(e, (B * N, A)), p["W_w"]), (B, N))


def attention_weights(energies, mask):
    """Softmax over present objects; masked entries are exactly zero.

    Returns (weights, no_objects) where ``no_objects`` flags rows whose mask is
    empty (their weights are all zero).
    """
    mask = np.asarray(mask, dtype=bool)
    weights = nm.softmax(energies, axis=-1, mask=mask)
    return weights, ~mask.any(axis=-1)


def uniform_weights(mask):
    """Mean over present objects; used when object attention is ablated."""
    mask = np.asarray(mask, dtype=np.float64)
    count = mask.sum(axis=-1, keepdims=True)
    return nm.Tensor(np.divide(mask, count, out=np.zeros_like(mask), where=count > 0))


def apply_object_attention(weights, F_obj):
    """Weight every object row and sum them.

    Returns (aggregate B x D_obj, weighted rows B x N x D_obj).
    """
    F = np.asarray(F_obj, dtype=np.float64)
    weighted = nm.mul(nm.reshape(weights, weights.shape + (1,)), F)
    return nm.sum(weighted, axis=-2), weighted
