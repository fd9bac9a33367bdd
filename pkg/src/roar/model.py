"""Full per-video forward pass, parameter ownership and checkpoints."""
import struct
from dataclasses import dataclass, field

import numpy as np

from . import numeric as nm
from .attention import apply_object_attention, attention_energies, attention_weights, uniform_weights
from .temporal import (
    TemporalFusionTrace,
    frame_probability,
    frame_recurrence,
    fuse_image_features,
    temporal_attention_fusion,
    time_weight,
)
from .wavelet import WaveletFilter, dwt_sequence, pad_features, padded_length

ABLATIONS = ("dwt", "dwt-detail", "dwt-approx", "fusion", "obj-attn", "temporal-fusion", "time-weight", "focal")


class DimensionError(ValueError):
    pass


@dataclass
class ModelConfig:
    D_img: int
    D_obj: int
    N: int = 19
    H: int = 128
    attn_dim: int = 64
    mlp_hidden: int = 64
    fusion_dim: int = 128
    wavelet_mode: str = "integer"
    fps: int = 10
    threshold: float = 0.5
    disabled: frozenset = field(default_factory=frozenset)

    def __post_init__(self):
        self.disabled = frozenset(self.disabled)
        unknown = self.disabled - set(ABLATIONS)
        if unknown:
            raise ValueError(f"unknown ablation(s): {', '.join(sorted(unknown))}")
        for name in ("D_img", "D_obj", "N", "H", "attn_dim", "mlp_hidden", "fusion_dim", "fps"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive")
        if not 0.0 < self.threshold < 1.0:
            raise ValueError("threshold must lie in (0, 1)")
        WaveletFilter.db1(self.wavelet_mode)

    @property
    def D_pad(self):
        return padded_length(self.D_img)

    def enabled(self, block):
        return block not in self.disabled


class ModelParams(dict):
    """Ordered mapping of dotted parameter name to float64 array."""

    def group(self, prefix):
        pre = prefix + "."
        return {k[len(pre):]: v for k, v in self.items() if k.startswith(pre)}

    def copy(self):
        return ModelParams((k, np.array(v, copy=True)) for k, v in self.items())

    def as_tensors(self, requires_grad=False):
        return ModelParams((k, nm.Tensor(v, requires_grad=requires_grad)) for k, v in self.items())

    def equals(self, other):
        return list(self) == list(other) and all(np.array_equal(self[k], other[k]) for k in self)


def param_shapes(cfg):
    """(name, shape, is_weight) in canonical order."""
    H, A, M, F = cfg.H, cfg.attn_dim, cfg.mlp_hidden, cfg.fusion_dim
    return [
        ("attn.W_wa", (H, A), True),
        ("attn.W_ua", (cfg.D_obj, A), True),
        ("attn.b_a", (A,), False),
        ("attn.W_w", (A, 1), True),
        ("fuse.proj_W", (cfg.D_pad, H), True),
        ("fuse.proj_b", (H,), False),
        ("fuse.gru_W_x", (cfg.D_img, 3 * H), True),
        ("fuse.gru_W_h", (H, 3 * H), True),
        ("fuse.gru_b_x", (3 * H,), False),
        ("fuse.gru_b_h", (3 * H,), False),
        ("fuse.fc_W", (H, F), True),
        ("fuse.fc_b", (F,), False),
        ("frame.W_x", (F + cfg.D_obj, 3 * H), True),
        ("frame.W_h", (H, 3 * H), True),
        ("frame.b_x", (3 * H,), False),
        ("frame.b_h", (3 * H,), False),
        ("mlp.W1", (H, M), True),
        ("mlp.b1", (M,), False),
        ("mlp.W2", (M, 1), True),
        ("mlp.b2", (1,), False),
        ("tw.W", (H, 1), True),
        ("tw.b", (1,), False),
        ("tfuse.w", (2,), True),
        ("tfuse.head_W", (2, 1), True),
        ("tfuse.head_b", (1,), False),
    ]


def init_params(cfg, seed):
    """Weights ~ U(-1/sqrt(fan_in), 1/sqrt(fan_in)), biases zero."""
    rng = np.random.default_rng(seed)
    params = ModelParams()
    for name, shape, is_weight in param_shapes(cfg):
        if is_weight:
            s = 1.0 / np.sqrt(shape[0])
            params[name] = rng.uniform(-s, s, size=shape)
        else:
            params[name] = np.zeros(shape)
    return params


def config_from_params(params, **overrides):
    """Recover the dimension fields of a ModelConfig from parameter shapes."""
    W_wa = params["attn.W_wa"]
    dims = dict(
        D_img=params["fuse.gru_W_x"].shape[0],
        D_obj=params["attn.W_ua"].shape[0],
        H=W_wa.shape[0],
        attn_dim=W_wa.shape[1],
        mlp_hidden=params["mlp.W1"].shape[1],
        fusion_dim=params["fuse.fc_W"].shape[1],
    )
    dims.update(overrides)
    return ModelConfig(**dims)


def check_params(params, cfg):
    expected = param_shapes(cfg)
    missing = [n for n, _, _ in expected if n not in params]
    if missing:
        raise DimensionError(f"parameter set lacks {', '.join(missing)}")
    for name, shape, _ in expected:
        if tuple(params[name].shape) != shape:
            raise DimensionError(f"parameter {name} has shape {tuple(params[name].shape)}, config implies {shape}")


def check_sample(sample, cfg):
    if sample.T < 1:
        raise DimensionError(f"video {sample.id!r} is empty")
    if sample.D_img != cfg.D_img or sample.D_obj != cfg.D_obj:
        raise DimensionError(
            f"video {sample.id!r} has D_img={sample.D_img}, D_obj={sample.D_obj}; "
            f"model expects D_img={cfg.D_img}, D_obj={cfg.D_obj}"
        )


@dataclass
class PredictionTrace:
    p: np.ndarray  # T
    logit: np.ndarray  # T
    sigma: np.ndarray  # T
    h: np.ndarray  # T x H
    obj_alpha: np.ndarray  # T x N
    no_objects: np.ndarray  # T bools
    fusion: TemporalFusionTrace
    p_a: float

    @property
    def T(self):
        return self.p.shape[0]


def image_coefficients(F_img, cfg):
    """Wavelet coefficients (or the padded raw features when the DWT is off)."""
    if not cfg.enabled("dwt"):
        return pad_features(F_img)
    return dwt_sequence(
        F_img,
        WaveletFilter.db1(cfg.wavelet_mode),
        keep_approx=cfg.enabled("dwt-approx"),
        keep_detail=cfg.enabled("dwt-detail"),
    )


def forward_batch(samples, params, cfg):
    """Forward pass over videos sharing T and N.

    ``params`` maps names to Tensors (or arrays). Returns a dict of Tensors
    (``p``, ``logit``, ``sigma`` B x T; ``h`` B x T x H; fusion outputs) plus
    numpy ``obj_alpha`` and ``no_objects``.
    """
    if not samples:
        raise ValueError("forward_batch needs at least one video")
    T, N = samples[0].T, samples[0].N
    for s in samples:
        check_sample(s, cfg)
        if s.T != T or s.N != N:
            raise DimensionError("videos in one batch must share T and N")
    params = ModelParams((k, nm.as_tensor(v)) for k, v in params.items())
    B = len(samples)
    F_img = np.stack([s.F_img for s in samples])
    F_obj = np.stack([s.F_obj for s in samples])
    mask = np.stack([s.mask for s in samples])

    C = image_coefficients(F_img, cfg)
    fused = fuse_image_features(
        F_img.reshape(B * T, cfg.D_img),
        C.reshape(B * T, cfg.D_pad),
        params.group("fuse"),
        fusion=cfg.enabled("fusion"),
    )
    fused = nm.reshape(fused, (B, T, cfg.fusion_dim))

    attn = params.group("attn")
    frame = params.group("frame")
    h = nm.Tensor(np.zeros((B, cfg.H)))
    hs, alphas, empty = [], [], []
    for t in range(T):
        F_t = F_obj[:, t]
        m_t = mask[:, t]
        if cfg.enabled("obj-attn"):
            e = attention_energies(h, F_t, attn)
            a_t, none_t = attention_weights(e, m_t)
        else:
            a_t, none_t = uniform_weights(m_t), ~m_t.any(axis=-1)
        agg, _ = apply_object_attention(a_t, F_t)
        _, h = frame_recurrence(fused[:, t], agg, h, frame)
        hs.append(h)
        alphas.append(a_t.data)
        empty.append(none_t)
    H_seq = nm.stack(hs, axis=1)
    flat = nm.reshape(H_seq, (B * T, cfg.H))
    p, logit = frame_probability(flat, params.group("mlp"))
    if cfg.enabled("time-weight"):
        sigma = nm.reshape(time_weight(flat, params.group("tw")), (B, T))
    else:
        sigma = nm.Tensor(np.ones((B, T)))
    fusion = temporal_attention_fusion(H_seq, params.group("tfuse"), attend=cfg.enabled("temporal-fusion"))
    out = {
        "p": nm.reshape(p, (B, T)),
        "logit": nm.reshape(logit, (B, T)),
        "sigma": sigma,
        "h": H_seq,
        "obj_alpha": np.stack(alphas, axis=1),
        "no_objects": np.stack(empty, axis=1),
        "w": params["tfuse.w"],
    }
    out.update(fusion)
    return out


def _traces(out):
    B = out["p"].shape[0]
    traces = []
    for b in range(B):
        fusion = TemporalFusionTrace(
            F_agg=out["F_agg"].data[b],
            E=out["E"].data[b],
            alpha=out["alpha"].data[b],
            W=out["W"].data[b],
            w=out["w"].data.copy(),
            A=out["A"].data[b],
            p_a=float(out["p_a"].data[b]),
        )
        traces.append(
            PredictionTrace(
                p=out["p"].data[b],
                logit=out["logit"].data[b],
                sigma=out["sigma"].data[b],
                h=out["h"].data[b],
                obj_alpha=out["obj_alpha"][b],
                no_objects=out["no_objects"][b],
                fusion=fusion,
                p_a=fusion.p_a,
            )
        )
    return traces


def group_by_shape(samples, batch_size=None):
    """Indices of samples grouped by (T, N), in first-seen order, optionally chunked."""
    groups = {}
    for i, s in enumerate(samples):
        groups.setdefault((s.T, s.N), []).append(i)
    out = []
    for idx in groups.values():
        step = batch_size or len(idx)
        out.extend(idx[j : j + step] for j in range(0, len(idx), step))
    return out


def forward_video(sample, params, cfg):
    return _traces(forward_batch([sample], params, cfg))[0]


def predict(samples, params, cfg, batch_size=32):
    """PredictionTrace per sample, in input order."""
    traces = [None] * len(samples)
    for idx in group_by_shape(samples, batch_size):
        for i, tr in zip(idx, _traces(forward_batch([samples[i] for i in idx], params, cfg))):
            traces[i] = tr
    return traces


def first_crossing(trace, threshold):
    """1-based index of the first frame with p >= threshold, or None."""
    p = trace.p if isinstance(trace, PredictionTrace) else np.asarray(trace)
    hits = np.flatnonzero(p >= threshold)
    return int(hits[0]) + 1 if hits.size else None


# ---------------------------------------------------------------------------
# checkpoint file
# ---------------------------------------------------------------------------

CKPT_MAGIC = b"ROARCK01"
CKPT_VERSION = 1


class CheckpointError(ValueError):
    pass


def encode_checkpoint(params):
    parts = [CKPT_MAGIC, struct.pack("<II", CKPT_VERSION, len(params))]
    for name, arr in params.items():
        arr = np.asarray(arr, dtype=np.float64)
        raw = name.encode("utf-8")
        parts.append(struct.pack("<H", len(raw)) + raw)
        parts.append(struct.pack("<B", arr.ndim))
        parts.append(struct.pack(f"<{arr.ndim}I", *arr.shape))
        parts.append(np.ascontiguousarray(arr, dtype="<f8").tobytes())
    return b"".join(parts)


def decode_checkpoint(buf):
    buf = bytes(buf)
    if buf[:8] != CKPT_MAGIC:
        raise CheckpointError(f"bad checkpoint magic {buf[:8]!r}")
    pos = 8

    def take(n):
        nonlocal pos
        if pos + n > len(buf):
            raise CheckpointError(f"truncated checkpoint at byte {pos}")
        chunk = buf[pos : pos + n]
        pos += n
        return chunk

    version, count = struct.unpack("<II", take(8))
    if version != CKPT_VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version}")
    params = ModelParams()
    for _ in range(count):
        (n,) = struct.unpack("<H", take(2))
        name = take(n).decode("utf-8")
        (rank,) = struct.unpack("<B", take(1))
        shape = struct.unpack(f"<{rank}I", take(4 * rank))
        size = int(np.prod(shape)) if rank else 1
        params[name] = np.frombuffer(take(8 * size), dtype="<f8").reshape(shape).astype(np.float64)
    if pos != len(buf):
        raise CheckpointError(f"{len(buf) - pos} trailing bytes in checkpoint")
    return params


def save_checkpoint(params, path):
    with open(path, "wb") as fh:
        fh.write(encode_checkpoint(params))


def load_checkpoint(path):
    with open(path, "rb") as fh:
        return decode_checkpoint(fh.read())
