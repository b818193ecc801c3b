"""Flat ``key = value`` configuration files shared by the CLI and checkpoints."""
from __future__ import annotations

import os
from dataclasses import dataclass, field, fields

from .data import DegradationSpec
from .model import ModelConfig
from .train import TrainConfig


class ConfigError(ValueError):
    def __init__(self, key, message):
        super().__init__(f"{key}: {message}")
        self.key = key


def _bool(text):
    t = text.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _ints(text):
    text = text.strip().strip("[]")
    return [int(t) for t in text.replace(",", " ").split()] if text else []


def _fmt(v):
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, (list, tuple)):
        return ", ".join(str(int(t)) for t in v)
    if isinstance(v, float):
        return repr(v)
    return str(v)


# key -> (section, attribute, parser, help)
KEYS = {
    # model
    "num_blocks": ("model", "num_blocks", int, "number of multi-grained attention blocks"),
    "channels": ("model", "channels", int, "feature channels of every conv layer"),
    "units_per_path": ("model", "units_per_path", int, "densely connected units per block"),
    "path_kernels": ("model", "path_kernels", _ints, "kernel sizes of the parallel paths, e.g. 3, 5"),
    "grains": ("model", "grains", _ints, "attention grid sizes S, ascending, e.g. 1, 2, 4"),
    "reduction_ratio": ("model", "reduction_ratio", int, "SE bottleneck reduction ratio"),
    "scale": ("model", "scale", int, "upscaling factor (2, 3, 4 or 8); also the degradation scale"),
    "input_channels": ("model", "input_channels", int, "image channels"),
    "multi_scale_dense": ("model", "multi_scale_dense", _bool, "dense connections between units"),
    "hierarchical_fusion": ("model", "hierarchical_fusion", _bool, "concat block outputs + 1x1 fusion"),
    "attention": ("model", "attention", _bool, "multi-grained attention inside blocks"),
    "spatial_attention": ("model", "spatial_attention", _bool, "add a per-pixel attention grain"),
    # training
    "batch_size": ("train", "batch_size", int, "LR patches per batch"),
    "lr0": ("train", "lr0", float, "initial learning rate"),
    "lr_half_every": ("train", "lr_half_every", int, "epochs between learning-rate halvings"),
    "beta1": ("train", "beta1", float, "Adam beta1"),
    "beta2": ("train", "beta2", float, "Adam beta2"),
    "epsilon": ("train", "epsilon", float, "Adam epsilon"),
    "epochs": ("train", "epochs", int, "epochs to train"),
    "batches_per_epoch": ("train", "batches_per_epoch", int, "optimizer steps per epoch"),
    "patch": ("train", "patch", int, "LR patch size"),
    "augment": ("train", "augment", _bool, "random dihedral augmentation of patches"),
    "seed": ("train", "seed", int, "seed for initialization and sampling"),
    # degradation
    "degradation": ("degradation", "kind", str, "BI (bicubic) or BD (blur + bicubic)"),
    "blur_kernel_size": ("degradation", "blur_kernel_size", int, "BD gaussian kernel size"),
    "blur_sigma": ("degradation", "blur_sigma", float, "BD gaussian sigma"),
    # runtime
    "threads": ("runtime", "threads", int, "BLAS threads (0 = all cores; MGAN_THREADS overrides)"),
}


@dataclass
class RunConfig:
    model: ModelConfig = field(default_factory=ModelConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    degradation: DegradationSpec = field(default_factory=DegradationSpec)
    threads: int = 0

    def _target(self, section):
        return self if section == "runtime" else getattr(self, section)

    def get(self, key):
        section, attr, _, _ = KEYS[key]
        return getattr(self._target(section), attr)

    def set(self, key, text):
        if key not in KEYS:
            raise ConfigError(key, "unknown configuration key")
        section, attr, parse, _ = KEYS[key]
        try:
            value = parse(text) if isinstance(text, str) else text
        except ValueError as exc:
            raise ConfigError(key, str(exc)) from None
        setattr(self._target(section), attr, value)
        if key == "scale":
            self.degradation.scale = value

    def validate(self):
        for section, obj in (("model", self.model), ("train", self.train), ("degradation", self.degradation)):
            try:
                obj.validate()
            except ValueError as exc:
                raise ConfigError(section, str(exc)) from None
        if self.threads < 0:
            raise ConfigError("threads", "must be >= 0")
        return self

    def effective_threads(self):
        env = os.environ.get("MGAN_THREADS")
        n = int(env) if env else self.threads
        return n if n > 0 else (os.cpu_count() or 1)

    def dumps(self):
        return "".join(f"{k} = {_fmt(self.get(k))}\n" for k in KEYS)


def loads(text, base=None):
    """Parse config text; unknown keys raise :class:`ConfigError`."""
    cfg = base or RunConfig()
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}", f"expected 'key = value', got {raw!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        cfg.set(key, value)
    return cfg


def load(path):
    with open(path, encoding="utf-8") as fh:
        return loads(fh.read())


def help_text():
    width = max(map(len, KEYS))
    defaults = RunConfig()
    lines = ["config keys (key = value, '#' starts a comment):"]
    for k, (_, _, _, doc) in KEYS.items():
        lines.append(f"  {k:<{width}}  {doc} [default: {_fmt(defaults.get(k))}]")
    return "\n".join(lines)


def _check_registry():
    # every dataclass field is reachable through exactly one key
    covered = {(s, a) for s, a, _, _ in KEYS.values()}
    for section, cls in (("model", ModelConfig), ("train", TrainConfig), ("degradation", DegradationSpec)):
        for f in fields(cls):
            if (section, f.name) not in covered and not (section == "degradation" and f.name == "scale"):
                raise AssertionError(f"config field {section}.{f.name} has no key")


_check_registry()
