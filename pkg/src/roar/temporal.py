"""Recurrent blocks: GRU cell, wavelet/image fusion, frame recurrence, the
per-frame probability and time-weight heads, and temporal attention fusion.

Everything is batched over a leading axis and built from :mod:`roar.numeric`
ops so gradients flow through it.
"""
from dataclasses import dataclass

import numpy as np

from . import numeric as nm


def gru_step(x, h, p):
    """Standard GRU update with PyTorch-style reset placement.

    ``p`` holds W_x (I x 3H), W_h (H x 3H), b_x, b_h (3H).
    """
    x = nm.as_tensor(x)
    h = nm.as_tensor(h)
    if x.shape[1] != p["W_x"].shape[0] or h.shape[1] != p["W_h"].shape[0]:
        raise nm.ShapeError(
            f"gru_step shape mismatch: x {x.shape}, h {h.shape}, W_x {p['W_x'].shape}, W_h {p['W_h'].shape}"
        )
    gx = nm.matmul(x, p["W_x"]) + p["b_x"]
    gh = nm.matmul(h, p["W_h"]) + p["b_h"]
    return nm.gru_gates(gx, gh, h)


def fuse_image_features(F_img, C_combined, p, fusion=True):
    """fc(GRU(F_img, C_combined)) with C_combined projected to the GRU state.

    Rows are independent frames (R x D_img and R x D_pad). With ``fusion``
    off the GRU is skipped and the projected coefficients go straight to fc.
    """
    C = nm.as_tensor(C_combined)
    if C.shape[1] != p["proj_W"].shape[0]:
        raise nm.ShapeError(f"coefficient width {C.shape[1]} does not match proj_W {p['proj_W'].shape}")
    h0 = nm.matmul(C, p["proj_W"]) + p["proj_b"]
    if fusion:
        g = {"W_x": p["gru_W_x"], "W_h": p["gru_W_h"], "b_x": p["gru_b_x"], "b_h": p["gru_b_h"]}
        hf = gru_step(F_img, h0, g)
    else:
        hf = h0
    return nm.matmul(hf, p["fc_W"]) + p["fc_b"]


def frame_recurrence(F_img_fused, F_obj_agg, h_prev, p):
    """One step of the frame-level GRU; the output X_t is the new state."""
    x = nm.concat([nm.as_tensor(F_img_fused), nm.as_tensor(F_obj_agg)], axis=1)
    h = gru_step(x, h_prev, p)
    return h, h


def frame_probability(X, p):
    """Two-layer perceptron head. Returns (probability, logit), both B-vectors."""
    X = nm.as_tensor(X)
    hidden = nm.relu(nm.matmul(X, p["W1"]) + p["b1"])
    logit = nm.reshape(nm.matmul(hidden, p["W2"]) + p["b2"], (X.shape[0],))
    return nm.sigmoid(logit), logit


def time_weight(h, p):
    """1 + sigmoid(h W + b); always inside (1, 2)."""
    h = nm.as_tensor(h)
    z = nm.reshape(nm.matmul(h, p["W"]) + p["b"], (h.shape[0],))
    return nm.sigmoid(z) + 1.0


@dataclass
class TemporalFusionTrace:
    F_agg: np.ndarray  # 2 x T (average, max)
    E: np.ndarray  # T x T
    alpha: np.ndarray  # T x T, rows sum to one
    W: np.ndarray  # 2 x T
    w: np.ndarray  # 2
    A: np.ndarray  # T
    p_a: float


def temporal_attention_fusion(H_seq, p, attend=True):
    """Frame-similarity attention over pooled hidden states.

    H_seq is B x T x H. Per frame, the hidden state is average- and max-pooled
    over channels giving F_agg (B x 2 x T). Energies E = F_agg^T F_agg are
    softmax-normalised per row, W = F_agg alpha, A = W^T w, and the auxiliary
    probability is a sigmoid fc over [mean_t A, max_t A].

    ``attend=False`` replaces alpha with the identity (no cross-frame mixing).
    Returns a dict of tensors.
    """
    H_seq = nm.as_tensor(H_seq)
    if H_seq.ndim != 3 or H_seq.shape[1] == 0:
        raise ValueError("temporal_attention_fusion needs a non-empty B x T x H sequence")
    B, T, _ = H_seq.shape
    avg = nm.mean(H_seq, axis=2)
    mx = nm.max(H_seq, axis=2)
    F_agg = nm.stack([avg, mx], axis=1)
    avg_i = nm.reshape(avg, (B, T, 1))
    mx_i = nm.reshape(mx, (B, T, 1))
    E = avg_i * nm.reshape(avg, (B, 1, T)) + mx_i * nm.reshape(mx, (B, 1, T))
    if attend:
        alpha = nm.softmax(E, axis=2)
        W_avg = nm.sum(avg_i * alpha, axis=1)
        W_max = nm.sum(mx_i * alpha, axis=1)
    else:
        alpha = nm.Tensor(np.broadcast_to(np.eye(T), (B, T, T)).copy())
        W_avg, W_max = avg, mx
    W = nm.stack([W_avg, W_max], axis=1)
    w = p["w"]
    A = W_avg * w[0] + W_max * w[1]
    pooled = nm.stack([nm.mean(A, axis=1), nm.max(A, axis=1)], axis=1)
    logit_a = nm.reshape(nm.matmul(pooled, p["head_W"]) + p["head_b"], (B,))
    return {
        "F_agg": F_agg,
        "E": E,
        "alpha": alpha,
        "W": W,
        "A": A,
        "logit_a": logit_a,
        "p_a": nm.sigmoid(logit_a),
    }
