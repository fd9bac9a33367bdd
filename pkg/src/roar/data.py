"""Video feature samples, the ROARFT01 file format, a synthetic accident
generator and Gaussian feature-noise injection."""
import hashlib
import struct
import zlib
from dataclasses import dataclass, field, replace

import numpy as np

MAGIC = b"ROARFT01"
VERSION = 1
_HEADER = struct.Struct("<8sII")
_VIDEO = struct.Struct("<IIIIIII")


class DatasetError(ValueError):
    """Base class for dataset-file problems; carries the byte offset."""

    def __init__(self, message, offset=None):
        self.offset = offset
        if offset is not None:
            message = f"{message} (at byte {offset})"
        super().__init__(message)


class BadMagicError(DatasetError):
    pass


class TruncatedError(DatasetError):
    pass


class InvariantError(DatasetError):
    pass


@dataclass
class VideoSample:
    id: str
    fps: int
    label: int
    toa: int  # 1-based accident frame, 0 for negatives
    F_img: np.ndarray  # T x D_img
    F_obj: np.ndarray  # T x N x D_obj
    mask: np.ndarray  # T x N bool

    @property
    def T(self):
        return self.F_img.shape[0]

    @property
    def N(self):
        return self.F_obj.shape[1]

    @property
    def D_img(self):
        return self.F_img.shape[1]

    @property
    def D_obj(self):
        return self.F_obj.shape[2]

    def validate(self, offset=None):
        if self.label not in (0, 1):
            raise InvariantError(f"video {self.id!r}: label must be 0 or 1, got {self.label}", offset)
        if self.label == 0 and self.toa != 0:
            raise InvariantError(f"video {self.id!r}: negative video has toa={self.toa}", offset)
        if self.label == 1 and not 1 <= self.toa <= self.T:
            raise InvariantError(f"video {self.id!r}: toa={self.toa} outside [1, {self.T}]", offset)
        if self.fps <= 0:
            raise InvariantError(f"video {self.id!r}: fps must be positive", offset)
        T = self.T
        if T < 1 or self.F_obj.shape[0] != T or self.mask.shape != (T, self.N):
            raise InvariantError(
                f"video {self.id!r}: inconsistent shapes F_img {self.F_img.shape}, "
                f"F_obj {self.F_obj.shape}, mask {self.mask.shape}",
                offset,
            )
        if not (np.isfinite(self.F_img).all() and np.isfinite(self.F_obj).all()):
            raise InvariantError(f"video {self.id!r}: non-finite feature values", offset)

    def equals(self, other):
        return (
            self.id == other.id
            and self.fps == other.fps
            and self.label == other.label
            and self.toa == other.toa
            and np.array_equal(self.F_img, other.F_img)
            and np.array_equal(self.F_obj, other.F_obj)
            and np.array_equal(self.mask, other.mask)
        )


# ---------------------------------------------------------------------------
# binary format
# ---------------------------------------------------------------------------


def encode_dataset(samples):
    parts = [_HEADER.pack(MAGIC, VERSION, len(samples))]
    for s in samples:
        s.validate()
        name = s.id.encode("utf-8")
        if len(name) > 0xFFFF:
            raise InvariantError(f"video id too long ({len(name)} bytes)")
        parts.append(struct.pack("<H", len(name)))
        parts.append(name)
        parts.append(_VIDEO.pack(s.T, s.N, s.D_img, s.D_obj, s.fps, s.label, s.toa))
        parts.append(np.ascontiguousarray(s.F_img, dtype="<f4").tobytes())
        parts.append(np.ascontiguousarray(s.F_obj, dtype="<f4").tobytes())
        parts.append(np.ascontiguousarray(s.mask, dtype="<f4").tobytes())
    return b"".join(parts)


def write_dataset(samples, path):
    data = encode_dataset(samples)
    with open(path, "wb") as fh:
        fh.write(data)
    return hashlib.sha256(data).hexdigest()


def decode_dataset(buf):
    buf = memoryview(bytes(buf))
    if len(buf) < 8 or bytes(buf[:8]) != MAGIC:
        raise BadMagicError(f"bad magic {bytes(buf[:8])!r}, expected {MAGIC!r}", 0)
    pos = 0

    def take(n, what):
        nonlocal pos
        if pos + n > len(buf):
            raise TruncatedError(f"truncated while reading {what}: need {n} bytes, have {len(buf) - pos}", pos)
        chunk = buf[pos : pos + n]
        pos += n
        return chunk

    _, version, count = _HEADER.unpack(take(_HEADER.size, "header"))
    if version != VERSION:
        raise InvariantError(f"unsupported version {version}", 8)
    samples = []
    for _ in range(count):
        start = pos
        (name_len,) = struct.unpack("<H", take(2, "id length"))
        vid = bytes(take(name_len, "id")).decode("utf-8")
        T, N, D_img, D_obj, fps, label, toa = _VIDEO.unpack(take(_VIDEO.size, "video header"))

        def floats(shape, what):
            n = int(np.prod(shape))
            arr = np.frombuffer(take(4 * n, what), dtype="<f4").reshape(shape)
            return arr.astype(np.float64)

        F_img = floats((T, D_img), "F_img")
        F_obj = floats((T, N, D_obj), "F_obj")
        mask_f = floats((T, N), "mask")
        if not np.isin(mask_f, (0.0, 1.0)).all():
            raise InvariantError(f"video {vid!r}: mask values must be 0 or 1", start)
        sample = VideoSample(vid, fps, label, toa, F_img, F_obj, mask_f.astype(bool))
        sample.validate(offset=start)
        samples.append(sample)
    if pos != len(buf):
        raise InvariantError(f"{len(buf) - pos} trailing bytes after last video", pos)
    return samples


def read_dataset(path):
    with open(path, "rb") as fh:
        return decode_dataset(fh.read())


def dataset_checksum(samples):
    return hashlib.sha256(encode_dataset(samples)).hexdigest()


def summarize(samples):
    n = len(samples)
    pos = sum(s.label for s in samples)
    first = samples[0] if samples else None
    return {
        "videos": n,
        "positives": pos,
        "positive_rate": pos / n if n else 0.0,
        "T": first.T if first else 0,
        "N": first.N if first else 0,
        "D_img": first.D_img if first else 0,
        "D_obj": first.D_obj if first else 0,
        "fps": first.fps if first else 0,
    }


def split_dataset(samples, train_fraction=0.8, seed=0):
    """Seeded shuffle then split; returns (train, held_out)."""
    order = np.random.default_rng(seed).permutation(len(samples))
    cut = int(round(train_fraction * len(samples)))
    return [samples[i] for i in order[:cut]], [samples[i] for i in order[cut:]]


# ---------------------------------------------------------------------------
# synthetic generator
# ---------------------------------------------------------------------------


@dataclass
class SynthConfig:
    videos: int = 300
    positive_rate: float = 0.4
    T: int = 50
    fps: int = 10
    D_img: int = 64
    D_obj: int = 32
    N: int = 5
    ramp: int | None = None  # risk ramp width in frames; None spans the whole video
    signal: float = 0.5
    hf_signal: float = 0.5
    obj_signal: float = 0.5
    seed: int = 0

    def validate(self):
        if self.videos < 0:
            raise ValueError("videos must be >= 0")
        if not 0.0 <= self.positive_rate <= 1.0:
            raise ValueError(f"positive_rate must be in [0, 1], got {self.positive_rate}")
        if self.T < 1 or self.fps < 1 or self.D_img < 1 or self.D_obj < 1 or self.N < 1:
            raise ValueError("T, fps, D_img, D_obj and N must be positive")
        if self.ramp is not None and not 1 <= self.ramp <= self.T:
            raise ValueError(f"ramp width must satisfy 1 <= ramp <= T, got {self.ramp}")


def _low_freq_pattern(d, phase):
    k = np.arange(d)
    v = np.cos(2.0 * np.pi * k / max(d, 2) + phase)
    return v / np.sqrt(np.mean(v * v))


def synth_generate(cfg):
    """Generate accident / non-accident feature sequences.

    Negatives are unit Gaussian noise. Positives add, scaled by a risk ramp
    that climbs linearly to 1 at the accident frame over ``ramp`` frames
    (default: the video length, so cues are present from the first frames):
    a smooth low-frequency image pattern, an alternating-sign image pattern
    (pure Haar detail), and a mean shift on one present object.
    """
    cfg.validate()
    img_pattern = _low_freq_pattern(cfg.D_img, 0.0)
    hf_pattern = np.where(np.arange(cfg.D_img) % 2 == 0, 1.0, -1.0)
    obj_pattern = _low_freq_pattern(cfg.D_obj, np.pi / 3)
    out = []
    for i in range(cfg.videos):
        rng = np.random.default_rng([cfg.seed, i])
        label = int(rng.random() < cfg.positive_rate)
        n_present = int(rng.integers(max(1, (cfg.N + 1) // 2), cfg.N + 1))
        mask = np.zeros((cfg.T, cfg.N), dtype=bool)
        mask[:, :n_present] = True
        F_img = rng.standard_normal((cfg.T, cfg.D_img))
        F_obj = rng.standard_normal((cfg.T, cfg.N, cfg.D_obj))
        toa = 0
        if label:
            toa = int(rng.integers((cfg.T + 1) // 2, cfg.T + 1))
            t = np.arange(1, cfg.T + 1)
            ramp = cfg.ramp or cfg.T
            risk = np.clip((t - (toa - ramp)) / ramp, 0.0, 1.0)
            F_img += risk[:, None] * (cfg.signal * img_pattern + cfg.hf_signal * hf_pattern)
            risky = int(rng.integers(0, n_present))
            F_obj[:, risky, :] += risk[:, None] * cfg.obj_signal * obj_pattern
        F_obj[~mask] = 0.0
        # stored as float32 on disk; keep memory identical to what a read returns
        F_img = F_img.astype(np.float32).astype(np.float64)
        F_obj = F_obj.astype(np.float32).astype(np.float64)
        out.append(VideoSample(f"v{i:05d}", cfg.fps, label, toa, F_img, F_obj, mask))
    return out


# ---------------------------------------------------------------------------
# noise injection
# ---------------------------------------------------------------------------


@dataclass
class NoiseConfig:
    variance: float = 0.0
    seed: int = 0
    target: str = "both"  # image | object | both
    mean: float = field(default=0.0, init=False)

    def validate(self):
        if self.variance < 0:
            raise ValueError(f"noise variance must be >= 0, got {self.variance}")
        if self.target not in ("image", "object", "both"):
            raise ValueError(f"noise target must be image, object or both, got {self.target!r}")


def add_gaussian_noise(samples, cfg):
    """Add i.i.d. N(0, variance) noise to the targeted feature arrays.

    Each video's noise stream is seeded from (seed, crc32(video id)), so the
    result does not depend on dataset order.
    """
    cfg.validate()
    if cfg.variance == 0:
        return [replace(s, F_img=s.F_img.copy(), F_obj=s.F_obj.copy(), mask=s.mask.copy()) for s in samples]
    std = float(np.sqrt(cfg.variance))
    out = []
    for s in samples:
        rng = np.random.default_rng([cfg.seed, zlib.crc32(s.id.encode("utf-8"))])
        F_img = s.F_img.copy()
        F_obj = s.F_obj.copy()
        if cfg.target in ("image", "both"):
            F_img += std * rng.standard_normal(F_img.shape)
        if cfg.target in ("object", "both"):
            F_obj += std * rng.standard_normal(F_obj.shape)
            F_obj[~s.mask] = 0.0  # padding slots are not features
        out.append(replace(s, F_img=F_img, F_obj=F_obj, mask=s.mask.copy()))
    return out
