"""JSON run configuration with strict key checking."""

from __future__ import annotations

import copy
import json
from dataclasses import dataclass, field
from pathlib import Path

from ..errors import ValidationError
from ..losses import ADV_KINDS, CONTENT_SPACES, LossConfig
from ..nn import NetConfig
from ..optim import AdamConfig
from ..tasks import ALL_TASKS, TaskId

CONFIG_VERSION = 1
ARMS = ("real_only", "separate_gans", "cin_gan")

DEFAULTS = {
    "version": CONFIG_VERSION,
    "seed": 0,
    "net": {"base_channels": 16, "depth": 3, "num_tasks": 3, "patch_disc_depth": 3,
            "image_channels": 1, "noise_channels": 1},
    "stage1": {
        "epochs": 10, "batch_size": 4, "max_steps": None, "checkpoint_every": 0,
        "tasks": None, "dtype": "float32",
        "optimizer": {"lr": 2e-4, "beta1": 0.5, "beta2": 0.999, "eps": 1e-8},
        "loss": {"lambda": 10.0, "adv_kind": "least_squares", "content_space": "feature_l1", "feature_seed": 0},
    },
    "stage2": {
        "epochs": 10, "batch_size": 4, "max_steps": None, "checkpoint_every": 0,
        "tasks": None, "dtype": "float32",
        "optimizer": {"lr": 2e-4, "beta1": 0.5, "beta2": 0.999, "eps": 1e-8},
        "loss": {"lambda": 10.0, "adv_kind": "least_squares", "content_space": "feature_l1", "feature_seed": 0},
    },
    "augment": {"n_per_task": 20},
    "ablation": {"pair_counts": [4, 10, 25], "arms": list(ARMS), "repeats": 3, "augment_n": 20,
                 "n_eval": 5, "image_size": 32, "pool_per_task": None,
                 "tasks": [t.label for t in ALL_TASKS]},
}


@dataclass
class TrainConfig:
    stage: str
    epochs: int = 10
    batch_size: int = 4
    optimizer: AdamConfig = field(default_factory=AdamConfig)
    loss: LossConfig = field(default_factory=LossConfig)
    seed: int = 0
    checkpoint_every: int = 0
    tasks: list | None = None
    max_steps: int | None = None
    dtype: str = "float32"

    def __post_init__(self):
        problems = []
        if self.stage not in ("cin_gan", "restore_cgan"):
            problems.append(f"stage must be cin_gan or restore_cgan, got {self.stage!r}")
        if self.epochs < 1:
            problems.append("epochs must be positive")
        if self.batch_size < 1:
            problems.append("batch_size must be positive")
        if self.checkpoint_every < 0:
            problems.append("checkpoint_every must be >= 0")
        if self.max_steps is not None and self.max_steps < 1:
            problems.append("max_steps must be positive or null")
        if self.dtype not in ("float32", "float64"):
            problems.append("dtype must be float32 or float64")
        if problems:
            raise ValidationError("; ".join(problems))
        if self.tasks is not None:
            self.tasks = [TaskId.parse(t) for t in self.tasks]

    def to_dict(self):
        return {
            "stage": self.stage, "epochs": self.epochs, "batch_size": self.batch_size,
            "optimizer": self.optimizer.to_dict(), "loss": self.loss.to_dict(), "seed": self.seed,
            "checkpoint_every": self.checkpoint_every, "max_steps": self.max_steps, "dtype": self.dtype,
            "tasks": None if self.tasks is None else [t.label for t in self.tasks],
        }


@dataclass
class AblationConfig:
    pair_counts: list = field(default_factory=lambda: [4, 10, 25])
    arms: list = field(default_factory=lambda: list(ARMS))
    repeats: int = 3
    augment_n: int = 20
    n_eval: int = 5
    image_size: int = 32
    pool_per_task: int | None = None
    tasks: list = field(default_factory=lambda: list(ALL_TASKS))

    def __post_init__(self):
        problems = []
        if self.repeats < 1:
            problems.append("repeats must be >= 1")
        if not self.pair_counts or any(p < 1 for p in self.pair_counts):
            problems.append("pair_counts must be a non-empty list of positive integers")
        elif list(self.pair_counts) != sorted(self.pair_counts):
            problems.append("pair_counts must be sorted ascending")
        bad = [a for a in self.arms if a not in ARMS]
        if bad or not self.arms:
            problems.append(f"arms must be a non-empty subset of {ARMS}, got {self.arms}")
        if self.augment_n < 0 or self.n_eval < 1:
            problems.append("augment_n must be >= 0 and n_eval >= 1")
        if problems:
            raise ValidationError("; ".join(problems))
        self.tasks = [TaskId.parse(t) for t in self.tasks]

    @property
    def required_pool(self) -> int:
        return self.pool_per_task or max(self.pair_counts)


@dataclass
class RunConfig:
    raw: dict
    seed: int
    net: NetConfig
    stage1: TrainConfig
    stage2: TrainConfig
    augment_n_per_task: int
    ablation: AblationConfig


def _check_keys(user: dict, schema: dict, prefix: str, problems: list):
    for key, value in user.items():
        path = f"{prefix}{key}"
        if key not in schema:
            problems.append(f"unknown key '{path}'")
            continue
        if isinstance(schema[key], dict):
            if not isinstance(value, dict):
                problems.append(f"'{path}' must be an object")
            else:
                _check_keys(value, schema[key], path + ".", problems)


def _merge(base: dict, user: dict) -> dict:
    out = copy.deepcopy(base)
    for key, value in user.items():
        if isinstance(out.get(key), dict) and isinstance(value, dict):
            out[key] = _merge(out[key], value)
        else:
            out[key] = value
    return out


def _number(raw, path, problems, kind=float, lo=None, strict_lo=False, optional=False):
    value = raw
    for part in path.split("."):
        value = value[part]
    if value is None and optional:
        return None
    ok = isinstance(value, (int, float)) and not isinstance(value, bool)
    if kind is int:
        ok = ok and float(value).is_integer()
    if not ok:
        problems.append(f"'{path}' must be {'an integer' if kind is int else 'a number'}, got {value!r}")
        return None
    value = kind(value)
    if lo is not None and (value < lo or (strict_lo and value == lo)):
        problems.append(f"'{path}' must be {'>' if strict_lo else '>='} {lo}, got {value}")
        return None
    return value


def _train(raw, stage_key, stage, seed, problems):
    p = stage_key
    epochs = _number(raw, f"{p}.epochs", problems, int, 1)
    batch = _number(raw, f"{p}.batch_size", problems, int, 1)
    max_steps = _number(raw, f"{p}.max_steps", problems, int, 1, optional=True)
    every = _number(raw, f"{p}.checkpoint_every", problems, int, 0)
    lr = _number(raw, f"{p}.optimizer.lr", problems, float, 0, strict_lo=True)
    b1 = _number(raw, f"{p}.optimizer.beta1", problems, float, 0)
    b2 = _number(raw, f"{p}.optimizer.beta2", problems, float, 0)
    eps = _number(raw, f"{p}.optimizer.eps", problems, float, 0, strict_lo=True)
    lam = _number(raw, f"{p}.loss.lambda", problems, float, 0)
    fseed = _number(raw, f"{p}.loss.feature_seed", problems, int, 0)
    section = raw[p]
    loss = section["loss"]
    if loss["adv_kind"] not in ADV_KINDS:
        problems.append(f"'{p}.loss.adv_kind' must be one of {list(ADV_KINDS)}")
    if loss["content_space"] not in CONTENT_SPACES:
        problems.append(f"'{p}.loss.content_space' must be one of {list(CONTENT_SPACES)}")
    if section["dtype"] not in ("float32", "float64"):
        problems.append(f"'{p}.dtype' must be float32 or float64")
    for name, beta in (("beta1", b1), ("beta2", b2)):
        if beta is not None and beta >= 1:
            problems.append(f"'{p}.optimizer.{name}' must be < 1")
    tasks = section["tasks"]
    if tasks is not None:
        try:
            tasks = [TaskId.parse(t) for t in tasks]
        except ValidationError as exc:
            problems.append(f"'{p}.tasks': {exc}")
            tasks = None
    if problems:
        return None
    return TrainConfig(
        stage=stage, epochs=epochs, batch_size=batch, max_steps=max_steps, checkpoint_every=every,
        optimizer=AdamConfig(lr, b1, b2, eps),
        loss=LossConfig(lam, loss["adv_kind"], loss["content_space"], fseed),
        seed=seed, tasks=tasks, dtype=section["dtype"],
    )


def parse_config(user: dict) -> RunConfig:
    """Validate a config object, apply defaults, and report every problem at once."""
    if not isinstance(user, dict):
        raise ValidationError("config must be a JSON object")
    problems: list[str] = []
    if "version" not in user:
        problems.append("missing required key 'version'")
    elif user["version"] != CONFIG_VERSION:
        problems.append(f"unsupported config version {user['version']!r}")
    _check_keys(user, DEFAULTS, "", problems)
    if problems:
        raise ValidationError("invalid config: " + "; ".join(problems))
    raw = _merge(DEFAULTS, user)
    seed = _number(raw, "seed", problems, int, 0)
    net_vals = {k: _number(raw, f"net.{k}", problems, int, 0) for k in DEFAULTS["net"]}
    n_aug = _number(raw, "augment.n_per_task", problems, int, 0)
    ab = raw["ablation"]
    for k in ("repeats", "augment_n", "n_eval", "image_size"):
        _number(raw, f"ablation.{k}", problems, int, 0)
    _number(raw, "ablation.pool_per_task", problems, int, 1, optional=True)
    if seed is not None and seed >= 2**64:
        problems.append("'seed' must fit in 64 bits")
    s1 = _train(raw, "stage1", "cin_gan", seed or 0, problems)
    s2 = _train(raw, "stage2", "restore_cgan", seed or 0, problems)
    if problems:
        raise ValidationError("invalid config: " + "; ".join(problems))
    try:
        net = NetConfig(**net_vals)
        ablation = AblationConfig(
            pair_counts=list(ab["pair_counts"]), arms=list(ab["arms"]), repeats=ab["repeats"],
            augment_n=ab["augment_n"], n_eval=ab["n_eval"], image_size=ab["image_size"],
            pool_per_task=ab["pool_per_task"], tasks=list(ab["tasks"]),
        )
    except (ValidationError, TypeError) as exc:
        raise ValidationError(f"invalid config: {exc}") from exc
    return RunConfig(raw=raw, seed=seed, net=net, stage1=s1, stage2=s2, augment_n_per_task=n_aug, ablation=ablation)


def load_config(path) -> RunConfig:
    path = Path(path)
    try:
        user = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ValidationError(f"{path}: invalid JSON: {exc}") from exc
    return parse_config(user)


def default_config() -> RunConfig:
    return parse_config({"version": CONFIG_VERSION})
