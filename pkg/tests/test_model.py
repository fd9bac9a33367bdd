import numpy as np
import pytest

from roar import numeric as nm
from roar.data import VideoSample
from roar.loss import LossConfig, batch_loss
from roar.model import (
    ABLATIONS,
    CheckpointError,
    DimensionError,
    ModelConfig,
    ModelParams,
    check_params,
    config_from_params,
    decode_checkpoint,
    encode_checkpoint,
    first_crossing,
    forward_batch,
    forward_video,
    init_params,
    load_checkpoint,
    param_shapes,
    predict,
    save_checkpoint,
)

from conftest import check_gradients


def small_cfg(**kw):
    base = dict(D_img=8, D_obj=6, N=3, H=5, attn_dim=4, mlp_hidden=3, fusion_dim=4)
    base.update(kw)
    return ModelConfig(**base)


def video(rng, T, cfg, label=1, toa=None, id="v"):
    mask = rng.random((T, cfg.N)) < 0.7
    mask[0] = [True] + [False] * (cfg.N - 1)
    F_obj = rng.standard_normal((T, cfg.N, cfg.D_obj)) * mask[..., None]
    if toa is None:
        toa = T if label else 0
    return VideoSample(id, cfg.fps, label, toa, rng.standard_normal((T, cfg.D_img)), F_obj, mask)


def sig(x):
    return 1.0 / (1.0 + np.exp(-x))


def gru(x, h, Wx, Wh, bx, bh):
    H = h.size
    gx, gh = x @ Wx + bx, h @ Wh + bh
    r = sig(gx[:H] + gh[:H])
    z = sig(gx[H:2 * H] + gh[H:2 * H])
    n = np.tanh(gx[2 * H:] + r * gh[2 * H:])
    return (1 - z) * h + z * n


def composed_oracle(s, P, cfg):
    """Frame-by-frame forward pass written directly with numpy."""
    T = s.T
    hs, ps, sig_t = [], [], []
    h = np.zeros(cfg.H)
    for t in range(T):
        f = s.F_img[t]
        C = np.concatenate([f[0::2] + f[1::2], f[0::2] - f[1::2]])
        h0 = C @ P["fuse.proj_W"] + P["fuse.proj_b"]
        hf = gru(f, h0, P["fuse.gru_W_x"], P["fuse.gru_W_h"], P["fuse.gru_b_x"], P["fuse.gru_b_h"])
        fused = hf @ P["fuse.fc_W"] + P["fuse.fc_b"]
        e = np.array([
            (np.tanh(h @ P["attn.W_wa"] + s.F_obj[t, i] @ P["attn.W_ua"] + P["attn.b_a"]) @ P["attn.W_w"])[0]
            for i in range(cfg.N)
        ])
        m = s.mask[t]
        a = np.where(m, np.exp(e - e[m].max()), 0.0)
        a = a / a.sum()
        agg = a @ s.F_obj[t]
        h = gru(np.concatenate([fused, agg]), h, P["frame.W_x"], P["frame.W_h"], P["frame.b_x"], P["frame.b_h"])
        hidden = np.maximum(h @ P["mlp.W1"] + P["mlp.b1"], 0.0)
        ps.append(sig((hidden @ P["mlp.W2"] + P["mlp.b2"])[0]))
        sig_t.append(1.0 + sig((h @ P["tw.W"] + P["tw.b"])[0]))
        hs.append(h)
    Hs = np.array(hs)
    F_agg = np.stack([Hs.mean(axis=1), Hs.max(axis=1)])
    E = F_agg.T @ F_agg
    al = np.exp(E - E.max(axis=1, keepdims=True))
    al /= al.sum(axis=1, keepdims=True)
    W = F_agg @ al
    A = P["tfuse.w"] @ W
    p_a = sig(np.array([A.mean(), A.max()]) @ P["tfuse.head_W"][:, 0] + P["tfuse.head_b"][0])
    return np.array(ps), np.array(sig_t), Hs, p_a


def test_init_params_determinism_and_bounds():
    cfg = ModelConfig(D_img=100, D_obj=100, H=100, attn_dim=8)
    a, b = init_params(cfg, 3), init_params(cfg, 3)
    assert a.equals(b)
    assert not a.equals(init_params(cfg, 4))
    assert np.all(np.abs(a["attn.W_wa"]) < 0.1) and np.all(np.abs(a["fuse.gru_W_x"]) < 0.1)
    assert [n for n, _, _ in param_shapes(cfg)] == list(a)


def test_zero_model_single_frame():
    cfg = small_cfg()
    P = ModelParams((k, np.zeros_like(v)) for k, v in init_params(cfg, 0).items())
    s = VideoSample("z", 10, 0, 0, np.zeros((1, 8)), np.zeros((1, 3, 6)), np.zeros((1, 3), bool))
    tr = forward_video(s, P, cfg)
    assert tr.p.tolist() == [0.5] and tr.sigma.tolist() == [1.5]
    assert tr.no_objects.tolist() == [True]


def test_forward_matches_composed_oracle(rng):
    cfg = small_cfg()
    P = init_params(cfg, 1)
    for k in P:
        P[k] = P[k] + rng.standard_normal(P[k].shape) * 0.3
    s = video(rng, 3, cfg)
    tr = forward_video(s, P, cfg)
    ps, sg, Hs, p_a = composed_oracle(s, P, cfg)
    assert np.max(np.abs(tr.p - ps)) <= 1e-12
    assert np.max(np.abs(tr.sigma - sg)) <= 1e-12
    assert np.max(np.abs(tr.h - Hs)) <= 1e-12
    assert abs(tr.p_a - p_a) <= 1e-12


def test_identical_videos_identical_traces_and_batch_independence(rng):
    cfg = small_cfg()
    P = init_params(cfg, 2)
    vids = [video(rng, 6, cfg, id=f"v{i}") for i in range(5)]
    alone = [forward_video(v, P, cfg) for v in vids]
    batched = predict(vids, P, cfg, batch_size=3)
    for a, b in zip(alone, batched):
        assert np.array_equal(a.p, b.p) and a.T == 6
    assert np.array_equal(forward_video(vids[0], P, cfg).p, alone[0].p)


def test_predict_handles_mixed_lengths(rng):
    cfg = small_cfg()
    P = init_params(cfg, 2)
    vids = [video(rng, T, cfg, id=f"v{T}") for T in (4, 7, 4, 1)]
    traces = predict(vids, P, cfg)
    assert [t.T for t in traces] == [4, 7, 4, 1]


@pytest.mark.parametrize("block", [b for b in ABLATIONS if b != "focal"])
def test_ablations_give_valid_probabilities(block, rng):
    cfg = small_cfg(disabled={block})
    tr = forward_video(video(rng, 5, cfg), init_params(cfg, 0), cfg)
    assert tr.T == 5 and np.all((tr.p > 0) & (tr.p < 1)) and np.all((tr.sigma >= 1) & (tr.sigma < 2))


def test_time_weight_off_is_one(rng):
    cfg = small_cfg(disabled={"time-weight"})
    assert np.all(forward_video(video(rng, 3, cfg), init_params(cfg, 0), cfg).sigma == 1.0)


def test_first_crossing():
    assert first_crossing(np.array([0.1, 0.4, 0.6, 0.9]), 0.5) == 3
    assert first_crossing(np.full(5, 0.2), 0.5) is None


def test_dimension_errors(rng):
    cfg = small_cfg()
    P = init_params(cfg, 0)
    bad = video(rng, 3, small_cfg(D_img=10))
    with pytest.raises(DimensionError, match="D_img=10"):
        forward_video(bad, P, cfg)
    with pytest.raises(DimensionError):
        check_params(P, small_cfg(H=7))
    with pytest.raises(ValueError):
        ModelConfig(D_img=4, D_obj=4, disabled={"nope"})


def test_config_from_params_round_trip():
    cfg = small_cfg()
    back = config_from_params(init_params(cfg, 0), N=3)
    assert (back.D_img, back.D_obj, back.H, back.attn_dim, back.mlp_hidden, back.fusion_dim) == (8, 6, 5, 4, 3, 4)


def test_checkpoint_round_trip(tmp_path):
    P = init_params(small_cfg(), 5)
    raw = encode_checkpoint(P)
    assert raw[:8] == b"ROARCK01"
    assert decode_checkpoint(raw).equals(P)
    assert encode_checkpoint(decode_checkpoint(raw)) == raw
    path = tmp_path / "m.ckpt"
    save_checkpoint(P, path)
    assert load_checkpoint(path).equals(P)
    with pytest.raises(CheckpointError):
        decode_checkpoint(b"XXXXXXXX" + raw[8:])
    with pytest.raises(CheckpointError):
        decode_checkpoint(raw[:-3])
    with pytest.raises(CheckpointError):
        decode_checkpoint(raw + b"\0")


def end_to_end_gradient_errors(seed, cfg, T=4):
    rng = np.random.default_rng(seed)
    P = init_params(cfg, seed)
    for k in P:
        P[k] = P[k] + rng.standard_normal(P[k].shape) * 0.2
    vids = [video(rng, T, cfg, label=1, toa=3, id="a"), video(rng, T, cfg, label=0, id="b")]
    lcfg = LossConfig()

    def build(t):
        L, _ = batch_loss(forward_batch(vids, t, cfg), vids, lcfg)
        return L

    return check_gradients(build, dict(P))


def test_end_to_end_gradient():
    cfg = small_cfg(N=2)
    errs = end_to_end_gradient_errors(0, cfg)
    assert max(errs.values()) < 1e-5, {k: v for k, v in errs.items() if v >= 1e-5}
