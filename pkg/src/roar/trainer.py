"""Mini-batch training with Adam, plateau LR decay and per-epoch checkpoints."""
import csv
import logging
from dataclasses import dataclass, field, fields

import numpy as np

from . import numeric as nm
from .loss import LossConfig, batch_alpha, batch_loss_with_alpha
from .metrics import MetricError, average_precision, mtta, scores_from_traces
from .model import (
    ABLATIONS,
    ModelConfig,
    forward_batch,
    group_by_shape,
    init_params,
    predict,
    save_checkpoint,
)

log = logging.getLogger(__name__)


class ConfigError(ValueError):
    pass


@dataclass
class TrainConfig:
    epochs: int = 30
    batch_size: int = 10
    lr: float = 1e-3
    lr_factor: float = 0.5
    lr_patience: int = 3
    min_lr: float = 1e-5
    grad_clip: float = 5.0  # global-norm clip; 0 disables
    seed: int = 0
    val_fraction: float = 0.2
    # model
    H: int = 128
    attn_dim: int = 64
    mlp_hidden: int = 64
    fusion_dim: int = 128
    N: int = 19
    wavelet_mode: str = "integer"
    threshold: float = 0.5
    disable: tuple = ()
    # loss
    gamma: float = 2.0
    alpha_mode: str = "dynamic-batch"
    alpha: float = 0.25
    c: float = 1.0
    beta: float = 0.5

    def validate(self):
        if self.epochs < 1:
            raise ConfigError("epochs must be >= 1")
        if self.batch_size < 1:
            raise ConfigError("batch_size must be >= 1")
        if self.lr <= 0:
            raise ConfigError("lr must be > 0")
        if not 0.0 <= self.val_fraction < 1.0:
            raise ConfigError("val_fraction must lie in [0, 1)")
        unknown = set(self.disable) - set(ABLATIONS)
        if unknown:
            raise ConfigError(f"unknown ablation(s): {', '.join(sorted(unknown))}")
        try:
            self.loss_config().validate()
        except ValueError as exc:
            raise ConfigError(str(exc)) from None

    def loss_config(self):
        return LossConfig(
            gamma=self.gamma,
            alpha_mode=self.alpha_mode,
            alpha=self.alpha,
            c=self.c,
            beta=self.beta,
            focal="focal" not in self.disable,
        )

    def model_config(self, D_img, D_obj, fps=10):
        return ModelConfig(
            D_img=D_img,
            D_obj=D_obj,
            N=self.N,
            H=self.H,
            attn_dim=self.attn_dim,
            mlp_hidden=self.mlp_hidden,
            fusion_dim=self.fusion_dim,
            wavelet_mode=self.wavelet_mode,
            fps=fps,
            threshold=self.threshold,
            disabled=frozenset(d for d in self.disable if d != "focal"),
        )

    def items(self):
        for f in fields(self):
            v = getattr(self, f.name)
            yield f.name, ",".join(v) if f.name == "disable" else v


def parse_config(text):
    """Parse flat ``key = value`` lines (``#`` comments) into a TrainConfig."""
    cfg = TrainConfig()
    types = {f.name: f.type for f in fields(TrainConfig)}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key=value, got {raw.strip()!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        if key not in types:
            raise ConfigError(f"unknown config key {key!r} (line {lineno})")
        try:
            if key == "disable":
                parsed = tuple(v.strip() for v in value.split(",") if v.strip())
            elif types[key] in (int, "int"):
                parsed = int(value)
            elif types[key] in (float, "float"):
                parsed = float(value)
            else:
                parsed = value
        except ValueError:
            raise ConfigError(f"line {lineno}: bad value {value!r} for {key}") from None
        setattr(cfg, key, parsed)
    cfg.validate()
    return cfg


def read_config(path):
    with open(path) as fh:
        return parse_config(fh.read())


# ---------------------------------------------------------------------------
# optimiser and schedule
# ---------------------------------------------------------------------------


@dataclass
class AdamState:
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)


def adam_step(params, grads, state, lr):
    """In-place Adam update of ``params`` (name -> array) from ``grads``."""
    state.step += 1
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1**state.step
    c2 = 1.0 - b2**state.step
    for name, g in grads.items():
        p = params[name]
        if g.shape != p.shape:
            raise nm.ShapeError(f"gradient for {name} has shape {g.shape}, parameter {p.shape}")
        m = state.m.get(name)
        if m is None:
            m = state.m[name] = np.zeros_like(p)
            state.v[name] = np.zeros_like(p)
        v = state.v[name]
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        p -= lr * (m / c1) / (np.sqrt(v / c2) + state.eps)
    return params, state


@dataclass
class PlateauState:
    lr: float
    factor: float = 0.5
    patience: int = 3
    min_lr: float = 1e-5
    threshold: float = 1e-4
    best: float = float("inf")
    bad_epochs: int = 0


def reduce_lr_on_plateau(value, state):
    """Feed one epoch's validation loss; returns the (possibly reduced) lr."""
    if value < state.best - state.threshold:
        state.best = value
        state.bad_epochs = 0
    else:
        state.bad_epochs += 1
        if state.bad_epochs > state.patience:
            state.lr = max(state.lr * state.factor, state.min_lr)
            state.bad_epochs = 0
    return state.lr


def clip_global_norm(grads, max_norm):
    if not max_norm:
        return grads, None
    total = float(np.sqrt(sum(float(np.sum(g * g)) for g in grads.values())))
    if total > max_norm:
        scale = max_norm / (total + 1e-12)
        grads = {k: g * scale for k, g in grads.items()}
    return grads, total


# ---------------------------------------------------------------------------
# training loop
# ---------------------------------------------------------------------------


@dataclass
class EpochLog:
    epoch: int
    loss_total: float
    loss_an: float
    loss_au: float
    val_loss: float
    val_ap: float
    val_mtta: float
    lr: float


LOG_HEADER = ["epoch", "loss_total", "loss_an", "loss_au", "val_loss", "val_ap", "val_mtta", "lr"]


class TrainLog(list):
    def write_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(LOG_HEADER)
            for e in self:
                w.writerow([e.epoch] + [repr(float(getattr(e, k))) for k in LOG_HEADER[1:]])


def loss_and_grads(samples, params, mcfg, lcfg, alpha=None):
    """Mean loss over ``samples`` and its gradient w.r.t. every parameter."""
    if alpha is None:
        alpha = batch_alpha([s.label for s in samples], lcfg)
    grads = {k: np.zeros_like(v) for k, v in params.items()}
    totals = np.zeros(3)
    n = len(samples)
    for idx in group_by_shape(samples):
        group = [samples[i] for i in idx]
        weight = len(group) / n
        tensors = params.as_tensors(requires_grad=True)
        with nm.GradTape() as tape:
            out = forward_batch(group, tensors, mcfg)
            L, br = batch_loss_with_alpha(out, group, lcfg, alpha)
            L = L * weight
        tape.backward(L)
        for k, t in tensors.items():
            if t.grad is not None:
                grads[k] += t.grad
        totals += weight * np.array([br.L_total, br.L_an_mean, br.L_au_mean])
    return totals, grads


def evaluate_loss(samples, params, mcfg, lcfg, batch_size=32):
    """Mean total loss over ``samples`` (no gradients)."""
    if not samples:
        return float("nan")
    alpha = batch_alpha([s.label for s in samples], lcfg)
    total = 0.0
    for idx in group_by_shape(samples, batch_size):
        group = [samples[i] for i in idx]
        out = forward_batch(group, params, mcfg)
        _, br = batch_loss_with_alpha(out, group, lcfg, alpha)
        total += br.L_total * len(group)
    return total / len(samples)


def validation_metrics(samples, params, mcfg):
    if not samples:
        return float("nan"), float("nan")
    scores = scores_from_traces(samples, predict(samples, params, mcfg))
    try:
        return average_precision(scores), mtta(scores)
    except MetricError:
        return float("nan"), float("nan")


def train(train_set, cfg, val_set=None, checkpoint_path=None, params=None, on_epoch=None):
    """Train from scratch (or from ``params``); returns (params, TrainLog)."""
    cfg.validate()
    if not train_set:
        raise ValueError("training set is empty")
    if not any(s.label == 1 for s in train_set):
        raise ValueError("training set has no positive videos")
    first = train_set[0]
    mcfg = cfg.model_config(first.D_img, first.D_obj, first.fps)
    lcfg = cfg.loss_config()
    if params is None:
        params = init_params(mcfg, cfg.seed)
    for s in list(train_set) + list(val_set or []):
        if s.D_img != mcfg.D_img or s.D_obj != mcfg.D_obj:
            raise ValueError(f"video {s.id!r} dims ({s.D_img}, {s.D_obj}) differ from ({mcfg.D_img}, {mcfg.D_obj})")
    rng = np.random.default_rng(cfg.seed)
    adam = AdamState()
    plateau = PlateauState(lr=cfg.lr, factor=cfg.lr_factor, patience=cfg.lr_patience, min_lr=cfg.min_lr)
    history = TrainLog()
    n = len(train_set)
    for epoch in range(1, cfg.epochs + 1):
        lr = plateau.lr
        order = rng.permutation(n)
        sums = np.zeros(3)
        for start in range(0, n, cfg.batch_size):
            batch = [train_set[i] for i in order[start : start + cfg.batch_size]]
            totals, grads = loss_and_grads(batch, params, mcfg, lcfg)
            grads, _ = clip_global_norm(grads, cfg.grad_clip)
            adam_step(params, grads, adam, lr)
            sums += totals * len(batch)
        sums /= n
        if val_set:
            val_loss = evaluate_loss(val_set, params, mcfg, lcfg)
            val_ap, val_mtta = validation_metrics(val_set, params, mcfg)
        else:
            val_loss, val_ap, val_mtta = sums[0], float("nan"), float("nan")
        entry = EpochLog(epoch, sums[0], sums[1], sums[2], val_loss, val_ap, val_mtta, lr)
        history.append(entry)
        reduce_lr_on_plateau(val_loss, plateau)
        log.info(
            "epoch %d loss=%.4f an=%.4f au=%.4f val_loss=%.4f val_ap=%.4f val_mtta=%.3f lr=%.2e",
            epoch, *sums, val_loss, val_ap, val_mtta, lr,
        )
        if checkpoint_path is not None:
            save_checkpoint(params, checkpoint_path)
        if on_epoch is not None:
            on_epoch(entry, params)
    return params, history
