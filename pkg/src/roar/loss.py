"""Anticipation training objective.

Positive videos use a time-weighted, temporally discounted dynamic focal
loss per frame; negative videos a scaled cross-entropy. A video-level
auxiliary cross-entropy on the temporal-fusion head is added with weight beta.
"""
from dataclasses import dataclass

import numpy as np

from . import numeric as nm

CLAMP = 1e-12


@dataclass
class LossConfig:
    gamma: float = 2.0
    alpha_mode: str = "dynamic-batch"  # or "fixed"
    alpha: float = 0.25
    c: float = 1.0
    beta: float = 0.5
    focal: bool = True

    def validate(self):
        if self.gamma < 0:
            raise ValueError("gamma must be >= 0")
        if self.c <= 0:
            raise ValueError("negative-loss constant c must be > 0")
        if self.beta < 0:
            raise ValueError("beta must be >= 0")
        if self.alpha_mode not in ("fixed", "dynamic-batch"):
            raise ValueError(f"alpha_mode must be 'fixed' or 'dynamic-batch', got {self.alpha_mode!r}")
        if self.alpha_mode == "fixed" and not 0.0 < self.alpha < 1.0:
            raise ValueError("fixed alpha must lie in (0, 1)")


def cross_entropy(p, y):
    """-[y ln p + (1-y) ln(1-p)] with p clamped to [1e-12, 1-1e-12]."""
    p = nm.clip(nm.as_tensor(p), CLAMP, 1.0 - CLAMP)
    y = np.asarray(y, dtype=np.float64)
    return nm.neg(nm.log(p) * y + nm.log(1.0 - p) * (1.0 - y))


def dynamic_focal(L_ce, alpha, gamma):
    """alpha * (1 - p_c)^gamma * L_ce with p_c = exp(-L_ce)."""
    L_ce = nm.as_tensor(L_ce)
    one_minus_pc = nm.neg(nm.expm1(nm.neg(L_ce)))
    return nm.power(one_minus_pc, gamma) * L_ce * alpha


def temporal_penalty(toa, t, fps):
    """-max(0, (toa - t - 1) / fps); frames are 1-based."""
    if np.any(np.asarray(fps) <= 0):
        raise ValueError("fps must be positive")
    return -np.maximum(0.0, (np.asarray(toa, dtype=np.float64) - np.asarray(t, dtype=np.float64) - 1.0) / fps)


def positive_frame_loss(L_focal, penalty, time_weight):
    return nm.as_tensor(time_weight) * np.exp(np.asarray(penalty, dtype=np.float64)) * L_focal


def batch_alpha(labels, cfg):
    """Class weight for the focal term: fixed, or inverse positive frequency."""
    if cfg.alpha_mode == "fixed":
        return cfg.alpha
    q = float(np.mean(labels)) if len(labels) else 0.0
    return float(np.clip(1.0 - q, 0.05, 0.95))


@dataclass
class LossBreakdown:
    L_ce: np.ndarray  # B x T
    p_c: np.ndarray
    L_focal: np.ndarray
    penalty: np.ndarray
    time_weight: np.ndarray
    L_pos: np.ndarray
    L_neg: np.ndarray
    L_an: np.ndarray  # B
    L_au: np.ndarray  # B
    alpha: float
    L_an_mean: float
    L_au_mean: float
    L_total: float


def anticipation_terms(logit, sigma, labels, toas, fps, cfg, alpha):
    """Per-frame pieces and per-video anticipation loss (B-vector tensor).

    ``logit`` and ``sigma`` are B x T tensors; ``toas`` are 1-based (0 for
    negatives); ``fps`` is a scalar or B-vector.
    """
    logit = nm.as_tensor(logit)
    B, T = logit.shape
    y = np.asarray(labels, dtype=np.float64).reshape(B, 1)
    toas = np.asarray(toas, dtype=np.float64).reshape(B, 1)
    fps = np.broadcast_to(np.asarray(fps, dtype=np.float64), (B,)).reshape(B, 1)
    t = np.arange(1, T + 1, dtype=np.float64)[None, :]
    for lab, toa in zip(y[:, 0], toas[:, 0]):
        if lab == 1 and not 1 <= toa <= T:
            raise ValueError(f"positive video has toa={int(toa)} outside [1, {T}]")

    ce_pos = nm.bce_with_logits(logit, np.ones((B, T)))
    ce_neg = nm.bce_with_logits(logit, np.zeros((B, T)))
    if cfg.focal:
        L_focal = dynamic_focal(ce_pos, alpha, cfg.gamma)
    else:
        L_focal = ce_pos
    penalty = np.where(y == 1, temporal_penalty(toas, t, fps), 0.0)
    L_pos = positive_frame_loss(L_focal, penalty, sigma)
    L_neg = ce_neg * cfg.c
    per_frame = L_pos * y + L_neg * (1.0 - y)
    L_an = nm.sum(per_frame, axis=1)
    L_ce = np.where(y == 1, ce_pos.data, ce_neg.data)
    parts = {
        "L_ce": L_ce,
        "p_c": np.exp(-L_ce),
        "L_focal": L_focal.data,
        "penalty": np.broadcast_to(penalty, (B, T)).copy(),
        "time_weight": nm.as_tensor(sigma).data,
        "L_pos": L_pos.data,
        "L_neg": L_neg.data,
    }
    return L_an, parts


def auxiliary_loss(logit_a, labels):
    """Per-video cross-entropy of the auxiliary head (B-vector tensor)."""
    return nm.bce_with_logits(logit_a, np.asarray(labels, dtype=np.float64))


def total_loss(L_an, L_au, beta):
    return nm.as_tensor(L_an) + nm.as_tensor(L_au) * beta


def batch_loss(out, samples, cfg):
    """Scalar training loss for a forward_batch output and its breakdown."""
    labels = [s.label for s in samples]
    alpha = batch_alpha(labels, cfg)
    return batch_loss_with_alpha(out, samples, cfg, alpha)


def batch_loss_with_alpha(out, samples, cfg, alpha):
    labels = np.array([s.label for s in samples], dtype=np.float64)
    toas = [s.toa for s in samples]
    fps = [s.fps for s in samples]
    L_an, parts = anticipation_terms(out["logit"], out["sigma"], labels, toas, fps, cfg, alpha)
    L_au = auxiliary_loss(out["logit_a"], labels)
    L_an_mean = nm.mean(L_an)
    L_au_mean = nm.mean(L_au)
    L = total_loss(L_an_mean, L_au_mean, cfg.beta)
    breakdown = LossBreakdown(
        alpha=alpha,
        L_an=L_an.data,
        L_au=L_au.data,
        L_an_mean=float(L_an_mean.data),
        L_au_mean=float(L_au_mean.data),
        L_total=float(L.data),
        **parts,
    )
    return L, breakdown


def anticipation_loss(trace, sample, cfg, alpha=None):
    """L_an for one video given its PredictionTrace (float)."""
    if alpha is None:
        alpha = cfg.alpha if cfg.alpha_mode == "fixed" else batch_alpha([sample.label], cfg)
    logit = np.asarray(trace.logit, dtype=np.float64)[None, :]
    sigma = np.asarray(trace.sigma, dtype=np.float64)[None, :]
    L_an, _ = anticipation_terms(logit, sigma, [sample.label], [sample.toa], sample.fps, cfg, alpha)
    return float(L_an.data[0])
