"""L1 training with Adam and a step-halving learning-rate schedule."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import data as D
from . import ops
from .autograd import Tensor

log = logging.getLogger(__name__)


@dataclass
class TrainConfig:
    batch_size: int = 16
    lr0: float = 1e-4
    lr_half_every: int = 200
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    epochs: int = 1
    batches_per_epoch: int = 1000
    patch: int = 48
    augment: bool = True
    seed: int = 0

    def validate(self):
        for name in ("batch_size", "lr_half_every", "epochs", "batches_per_epoch", "patch"):
            if getattr(self, name) < 1:
                raise ValueError(f"invalid TrainConfig.{name}: must be positive")
        if not self.lr0 > 0 or not self.epsilon > 0:
            raise ValueError("invalid TrainConfig: lr0 and epsilon must be positive")
        for name in ("beta1", "beta2"):
            if not 0 < getattr(self, name) < 1:
                raise ValueError(f"invalid TrainConfig.{name}: must lie in (0, 1)")
        return self


@dataclass
class AdamState:
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)
    t: int = 0


l1_loss = ops.l1_loss


def lr_at_epoch(lr0, epoch, half_every):
    if epoch < 0:
        raise ValueError(f"epoch must be >= 0, got {epoch}")
    return lr0 * 0.5 ** (epoch // half_every)


def adam_step(params, state, lr, beta1=0.9, beta2=0.999, eps=1e-8):
    """One bias-corrected Adam update of every parameter that has a gradient.

    ``params`` maps names to tensors whose ``.grad`` is populated.  A NaN or
    Inf gradient raises ``FloatingPointError`` before anything is modified.
    """
    for name, p in params.items():
        if p.grad is not None and not np.all(np.isfinite(p.grad)):
            bad = int(np.size(p.grad) - np.count_nonzero(np.isfinite(p.grad)))
            raise FloatingPointError(f"non-finite gradient in {name} ({bad} entries) at step {state.t + 1}")
    state.t += 1
    c1 = 1.0 - beta1 ** state.t
    c2 = 1.0 - beta2 ** state.t
    for name, p in params.items():
        g = p.grad
        if g is None:
            continue
        m = state.m.get(name)
        if m is None:
            m = state.m[name] = np.zeros_like(p.data)
            state.v[name] = np.zeros_like(p.data)
        v = state.v[name]
        m *= beta1
        m += (1.0 - beta1) * g
        v *= beta2
        v += (1.0 - beta2) * g * g
        p.data -= (lr * (m / c1) / (np.sqrt(v / c2) + eps)).astype(p.dtype, copy=False)
    return params, state


def _to_nchw(batch):
    return np.ascontiguousarray(np.stack(batch).transpose(0, 3, 1, 2), dtype=np.float32)


def load_training_pairs(dataset, spec):
    """Materialize ``(hr, lr)`` float pairs from a manifest or pass a list through."""
    if isinstance(dataset, D.DatasetManifest):
        if not dataset.entries:
            raise ValueError("training manifest is empty")
        return [D.load_pair(e, spec) for e in dataset.entries]
    pairs = list(dataset)
    if not pairs:
        raise ValueError("training set is empty")
    return pairs


def sample_batch(pairs, cfg, scale, rng):
    lrs, hrs = [], []
    for _ in range(cfg.batch_size):
        hr, lr = pairs[int(rng.integers(len(pairs)))]
        lp, hp = D.sample_patch_pair(hr, lr, scale, cfg.patch, rng)
        if cfg.augment:
            lp, hp = D.augment((lp, hp), int(rng.integers(8)))
        lrs.append(lp)
        hrs.append(hp)
    return _to_nchw(lrs), _to_nchw(hrs)


def train_step(model, lr_batch, hr_batch, state, lr, cfg):
    model.zero_grad()
    loss = l1_loss(model(Tensor(lr_batch)), Tensor(hr_batch))
    loss.backward()
    adam_step(model.params, state, lr, cfg.beta1, cfg.beta2, cfg.epsilon)
    return float(loss.item())


def train(model, dataset, cfg, degradation=None, out_dir=None, callbacks=(), resume=None):
    """Run ``cfg.epochs`` epochs (in total, counting resumed ones) and return the final checkpoint.

    ``dataset`` is a :class:`~mgan.data.DatasetManifest` or a list of
    ``(hr, lr)`` float images.  With ``out_dir`` a checkpoint is written after
    every epoch and loss rows are appended to ``loss.csv``.  Each callback is
    called as ``cb(step, epoch, lr, loss)``.
    """
    from .checkpoint import Checkpoint, save_checkpoint

    cfg.validate()
    spec = degradation or D.DegradationSpec(scale=model.config.scale)
    if spec.scale != model.config.scale:
        raise ValueError(f"degradation scale {spec.scale} != model scale {model.config.scale}")
    pairs = load_training_pairs(dataset, spec)

    rng = np.random.default_rng(cfg.seed)
    state = AdamState()
    epoch = step = 0
    if resume is not None:
        if resume.config.model != model.config:
            raise ValueError("resume checkpoint was trained with a different model config")
        model.load_state_dict(resume.params)
        state = resume.adam or AdamState()
        rng.bit_generator.state = resume.rng_state
        epoch, step = resume.epoch, resume.step

    if out_dir is not None:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        csv = out_dir / "loss.csv"
        if resume is None or not csv.exists():
            csv.write_text("step,epoch,lr,loss\n", encoding="utf-8")

    ckpt = None
    while epoch < cfg.epochs:
        lr = lr_at_epoch(cfg.lr0, epoch, cfg.lr_half_every)
        rows = []
        for _ in range(cfg.batches_per_epoch):
            lr_b, hr_b = sample_batch(pairs, cfg, spec.scale, rng)
            loss = train_step(model, lr_b, hr_b, state, lr, cfg)
            step += 1
            rows.append(f"{step},{epoch},{lr!r},{loss!r}\n")
            for cb in callbacks:
                cb(step, epoch, lr, loss)
        epoch += 1
        ckpt = Checkpoint.capture(model, cfg, spec, state, epoch, step, rng)
        if out_dir is not None:
            with open(out_dir / "loss.csv", "a", encoding="utf-8") as fh:
                fh.writelines(rows)
            save_checkpoint(ckpt, out_dir / f"epoch{epoch:04d}.ckpt")
            save_checkpoint(ckpt, out_dir / "last.ckpt")
        log.info("epoch %d done, step %d, lr %.3g, last loss %.5f", epoch, step, lr, loss)
    if ckpt is None:
        ckpt = Checkpoint.capture(model, cfg, spec, state, epoch, step, rng)
    return ckpt
