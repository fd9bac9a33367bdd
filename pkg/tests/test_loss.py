import math
from types import SimpleNamespace

import numpy as np
import pytest

from roar import numeric as nm
from roar.loss import (
    LossConfig,
    anticipation_loss,
    anticipation_terms,
    auxiliary_loss,
    batch_alpha,
    cross_entropy,
    dynamic_focal,
    positive_frame_loss,
    temporal_penalty,
    total_loss,
)

LN2 = math.log(2.0)


def test_cross_entropy_examples():
    assert abs(cross_entropy(0.5, 1).data - LN2) < 1e-12
    assert cross_entropy(1.0, 1).data < 1e-11
    assert abs(cross_entropy(0.9, 0).data - (-math.log(0.1))) < 1e-12
    assert np.isfinite(cross_entropy(0.0, 1).data)


def test_dynamic_focal_examples():
    assert dynamic_focal(0.0, 0.25, 2.0).data == 0.0
    L = np.linspace(0.0, 5.0, 11)
    assert np.array_equal(dynamic_focal(L, 1.0, 0.0).data, L)
    assert abs(dynamic_focal(LN2, 0.25, 2.0).data - 0.043322) < 1e-6
    assert abs(dynamic_focal(LN2, 0.25, 2.0).data - 0.25 * 0.25 * LN2) < 1e-15


def test_focal_bounded_by_weighted_ce_and_increasing():
    L = np.linspace(1e-6, 10.0, 20001)
    for gamma in (0.5, 1.0, 2.0, 5.0):
        f = dynamic_focal(L, 0.3, gamma).data
        assert np.all(f < 0.3 * L)
    f = dynamic_focal(L, 0.3, 2.0).data
    assert np.all(np.diff(f) > 0)
    assert np.max(np.abs(dynamic_focal(L, 0.3, 0.0).data - 0.3 * L)) <= 1e-12


def test_temporal_penalty_examples():
    assert temporal_penalty(20, 19, 10) == 0.0
    assert abs(temporal_penalty(20, 9, 10) + 1.0) < 1e-15
    assert abs(math.exp(temporal_penalty(20, 9, 10)) - 0.367879) < 1e-6
    assert temporal_penalty(20, 25, 10) == 0.0
    t = np.arange(1, 41)
    e = np.exp(temporal_penalty(30, t, 10))
    assert np.all(np.diff(e) >= 0) and np.all((e > 0) & (e <= 1)) and np.all(e[t >= 29] == 1.0)
    with pytest.raises(ValueError):
        temporal_penalty(3, 1, 0)


def test_positive_frame_loss_examples():
    assert positive_frame_loss(nm.Tensor(0.0), -1.0, 1.7).data == 0.0
    assert abs(positive_frame_loss(nm.Tensor(0.043322), 0.0, 1.5).data - 0.064983) < 1e-6


def trace(logits, sigma=None):
    logits = np.asarray(logits, dtype=float)
    return SimpleNamespace(logit=logits, sigma=np.ones_like(logits) if sigma is None else np.asarray(sigma, float))


def sample(label, toa, fps=10):
    return SimpleNamespace(label=label, toa=toa, fps=fps)


def test_anticipation_loss_examples():
    cfg = LossConfig()
    assert abs(anticipation_loss(trace([0.0, 0.0]), sample(0, 0), cfg) - 2 * LN2) < 1e-12
    assert anticipation_loss(trace([60.0] * 5, [1.9] * 5), sample(1, 3), cfg) < 1e-20


def frame_oracle(logits, sigma, toa, fps, alpha, gamma):
    total = 0.0
    for t, (x, s) in enumerate(zip(logits, sigma), 1):
        p = 1.0 / (1.0 + math.exp(-x))
        ce = -math.log(p)
        focal = alpha * (1.0 - p) ** gamma * ce
        pen = -max(0.0, (toa - t - 1) / fps)
        total += s * math.exp(pen) * focal
    return total


def test_anticipation_loss_matches_frame_oracle(rng):
    cfg = LossConfig(alpha_mode="fixed", alpha=0.3)
    for _ in range(20):
        logits = rng.uniform(-3, 3, 3)
        sigma = rng.uniform(1, 2, 3)
        toa = int(rng.integers(1, 4))
        got = anticipation_loss(trace(logits, sigma), sample(1, toa), cfg)
        want = frame_oracle(logits, sigma, toa, 10, 0.3, 2.0)
        assert abs(got - want) <= 1e-12 * max(1.0, want)


def test_negative_loss_scaled_by_c():
    L1 = anticipation_loss(trace([0.3, -1.0]), sample(0, 0), LossConfig(c=1.0))
    L2 = anticipation_loss(trace([0.3, -1.0]), sample(0, 0), LossConfig(c=2.5))
    assert abs(L2 - 2.5 * L1) < 1e-12


def test_focal_off_uses_plain_ce():
    cfg = LossConfig(focal=False)
    got = anticipation_loss(trace([0.0]), sample(1, 1), cfg)
    assert abs(got - LN2) < 1e-15


def test_auxiliary_and_total():
    assert abs(auxiliary_loss(nm.Tensor([0.0]), [1]).data[0] - LN2) < 1e-15
    assert auxiliary_loss(nm.Tensor([50.0, -50.0]), [1, 0]).data.max() < 1e-20
    L = auxiliary_loss(nm.Tensor([0.4, -1.2]), [1, 0]).data
    assert abs(nm.mean(nm.Tensor(L)).data - (L[0] + L[1]) / 2) < 1e-16
    assert total_loss(1.3, 2.0, 0.0).data == 1.3
    assert total_loss(1.0, 2.0, 0.5).data == 2.0


def test_batch_alpha():
    cfg = LossConfig()
    assert batch_alpha([1, 0, 0, 0], cfg) == 0.75
    assert batch_alpha([1, 1], cfg) == 0.05
    assert batch_alpha([0, 0], cfg) == 0.95
    assert batch_alpha([1, 0], LossConfig(alpha_mode="fixed", alpha=0.4)) == 0.4


def test_components_non_negative(rng):
    cfg = LossConfig()
    logit = rng.uniform(-8, 8, (6, 7))
    sigma = rng.uniform(1, 2, (6, 7))
    labels = [1, 0, 1, 0, 1, 1]
    toas = [3, 0, 7, 0, 1, 5]
    L_an, parts = anticipation_terms(logit, sigma, labels, toas, 10, cfg, 0.4)
    assert np.all(L_an.data >= 0)
    for key in ("L_ce", "L_focal", "L_pos", "L_neg"):
        assert np.all(parts[key] >= 0), key
    assert np.all(parts["penalty"] <= 0)


def test_rejects_bad_toa():
    with pytest.raises(ValueError):
        anticipation_terms(np.zeros((1, 3)), np.ones((1, 3)), [1], [5], 10, LossConfig(), 0.5)


def test_config_validation():
    for bad in (LossConfig(gamma=-1), LossConfig(c=0), LossConfig(beta=-0.1), LossConfig(alpha_mode="epoch")):
        with pytest.raises(ValueError):
            bad.validate()
