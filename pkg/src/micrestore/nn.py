"""Network layers and the three networks of the pipeline.

* defect generator: encoder-decoder whose every normalization is a
  conditional instance norm (one gamma/beta row per task);
* restoration generator: the same trunk with plain instance norm;
* patch discriminator: strided convs emitting a grid of logits.
"""

from __future__ import annotations

import contextlib
from collections import OrderedDict
from dataclasses import asdict, dataclass

import numpy as np

from .autodiff import RngStream, Tape, Tensor, ops
from .errors import ArgumentError, DimensionError, StateError, ValidationError

LEAK = 0.2

SHARED = "shared"
BANK = "bank"


@dataclass(frozen=True)
class NetConfig:
    base_channels: int = 16
    depth: int = 3
    num_tasks: int = 3
    patch_disc_depth: int = 3
    image_channels: int = 1
    noise_channels: int = 1

    def __post_init__(self):
        problems = []
        if self.base_channels < 1:
            problems.append("base_channels must be >= 1")
        if self.depth < 1:
            problems.append("depth must be >= 1")
        if self.num_tasks < 1:
            problems.append("num_tasks must be >= 1")
        if self.patch_disc_depth < 2:
            problems.append("patch_disc_depth must be >= 2")
        if self.image_channels < 1 or self.noise_channels < 0:
            problems.append("image_channels must be >= 1 and noise_channels >= 0")
        if problems:
            raise ValidationError("; ".join(problems))

    def to_dict(self):
        return asdict(self)

    def channels(self, level: int) -> int:
        return self.base_channels * 2**level


class ParamStore:
    """Ordered name -> Tensor map with shared / per-task partition labels.

    Parameters labelled ``bank`` are CIN banks of shape (num_tasks, C); row i
    belongs to task i. Everything else is ``shared``.
    """

    def __init__(self, kind: str, config: NetConfig):
        self.kind = kind
        self.config = config
        self._params: OrderedDict[str, Tensor] = OrderedDict()
        self._labels: dict[str, str] = {}

    def add(self, name: str, data, label: str = SHARED) -> Tensor:
        if name in self._params:
            raise ValueError(f"duplicate parameter name {name!r}")
        if label not in (SHARED, BANK):
            raise ValueError(f"unknown partition label {label!r}")
        t = Tensor(data, requires_grad=True, name=name)
        self._params[name] = t
        self._labels[name] = label
        return t

    def __getitem__(self, name: str) -> Tensor:
        try:
            return self._params[name]
        except KeyError:
            raise StateError(f"{self.kind} parameters are not initialised: missing {name!r}") from None

    def __contains__(self, name):
        return name in self._params

    def __len__(self):
        return len(self._params)

    def names(self):
        return list(self._params)

    def items(self):
        return self._params.items()

    def label(self, name: str) -> str:
        return self._labels[name]

    def row_labels(self, name: str) -> list[str]:
        """Partition label of every leading-axis row (``task(i)``) or ``['shared']``."""
        if self._labels[name] == BANK:
            return [f"task({i})" for i in range(self._params[name].shape[0])]
        return [SHARED]

    def num_parameters(self) -> int:
        return int(sum(t.size for t in self._params.values()))

    def zero_grad(self) -> None:
        for t in self._params.values():
            t.zero_grad()

    def astype(self, dtype) -> "ParamStore":
        out = ParamStore(self.kind, self.config)
        for name, t in self._params.items():
            out.add(name, t.data.astype(dtype), self._labels[name])
        return out

    def arrays(self) -> OrderedDict:
        return OrderedDict((n, t.data) for n, t in self._params.items())

    @contextlib.contextmanager
    def frozen(self):
        """Stop gradient tracking for every parameter inside the block."""
        flags = {n: t.requires_grad for n, t in self._params.items()}
        for t in self._params.values():
            t.requires_grad = False
        try:
            yield self
        finally:
            for n, t in self._params.items():
                t.requires_grad = flags[n]


@dataclass
class CinLayer:
    """View onto one conditional instance-norm layer inside a ParamStore."""

    gamma_bank: Tensor
    beta_bank: Tensor

    @property
    def num_tasks(self) -> int:
        return self.gamma_bank.shape[0]

    @property
    def channels(self) -> int:
        return self.gamma_bank.shape[1]

    def __post_init__(self):
        if self.gamma_bank.shape != self.beta_bank.shape:
            raise DimensionError("gamma and beta banks must have identical shapes")


def cin_forward(x: Tensor, layer: CinLayer, task: int, tape: Tape | None = None) -> Tensor:
    """Normalize each channel by its instance statistics, then apply row ``task`` of the banks."""
    if x.shape[1] != layer.channels:
        raise DimensionError(f"CIN layer has {layer.channels} channels, input has {x.shape[1]}")
    task = int(task)
    if not 0 <= task < layer.num_tasks:
        raise ArgumentError(f"task {task} out of range for {layer.num_tasks} CIN rows")
    xhat = ops.instance_norm(tape, x)
    return ops.channel_affine(tape, xhat, layer.gamma_bank, layer.beta_bank, task)


# ---------------------------------------------------------------------------
# initialisation

def _he(rng: RngStream, cout: int, cin: int, k: int = 3) -> np.ndarray:
    fan_in = cin * k * k
    return rng.normal((cout, cin, k, k), scale=np.sqrt(2.0 / fan_in))


def _conv(store: ParamStore, rng: RngStream, name: str, cin: int, cout: int, k: int = 3):
    store.add(f"{name}.weight", _he(rng.child(name), cout, cin, k))
    store.add(f"{name}.bias", np.zeros(cout))


def _norm(store: ParamStore, name: str, rows: int, channels: int):
    store.add(f"{name}.gamma", np.ones((rows, channels)), BANK)
    store.add(f"{name}.beta", np.zeros((rows, channels)), BANK)


def _generator_layers(config: NetConfig, in_channels: int):
    """(name, cin, cout, stride, upsample) for the U-shaped trunk, in forward order."""
    layers = [("enc0", in_channels, config.channels(0), 1, False)]
    for lvl in range(1, config.depth + 1):
        layers.append((f"enc{lvl}", config.channels(lvl - 1), config.channels(lvl), 2, False))
    for lvl in range(config.depth - 1, -1, -1):
        cin = config.channels(lvl + 1) + config.channels(lvl)
        layers.append((f"dec{lvl}", cin, config.channels(lvl), 1, True))
    return layers


def init_generator(config: NetConfig, rng: RngStream, kind: str) -> ParamStore:
    if kind == "defect_generator":
        rows = config.num_tasks
        in_ch = config.image_channels + config.noise_channels
    elif kind == "restoration_generator":
        rows = 1
        in_ch = config.image_channels
    else:
        raise ArgumentError(f"unknown generator kind {kind!r}")
    store = ParamStore(kind, config)
    for name, cin, cout, _, _ in _generator_layers(config, in_ch):
        _conv(store, rng, f"{name}.conv", cin, cout)
        _norm(store, f"{name}.norm", rows, cout)
    _conv(store, rng, "out.conv", config.channels(0), config.image_channels)
    return store


def _disc_layers(config: NetConfig, in_channels: int):
    layers = []
    cin = in_channels
    for i in range(config.patch_disc_depth - 1):
        cout = config.channels(i)
        layers.append((f"d{i}", cin, cout, 2))
        cin = cout
    layers.append((f"d{config.patch_disc_depth - 1}", cin, 1, 1))
    return layers


def init_discriminator(config: NetConfig, rng: RngStream, conditioned: bool) -> ParamStore:
    in_ch = config.image_channels * (2 if conditioned else 1)
    store = ParamStore("conditional_discriminator" if conditioned else "discriminator", config)
    for name, cin, cout, _ in _disc_layers(config, in_ch):
        _conv(store, rng, f"{name}.conv", cin, cout)
    return store


def params_init(config: NetConfig, rng: RngStream) -> dict:
    """Fresh parameters for every network, keyed by role."""
    return {
        "defect_generator": init_generator(config, rng.child("defect_generator"), "defect_generator"),
        "restoration_generator": init_generator(config, rng.child("restoration_generator"), "restoration_generator"),
        "discriminator": init_discriminator(config, rng.child("discriminator"), conditioned=False),
        "conditional_discriminator": init_discriminator(config, rng.child("conditional_discriminator"), conditioned=True),
    }


def generator_param_count(config: NetConfig, kind: str) -> int:
    """Closed-form parameter count, independent of store construction."""
    b, d = config.base_channels, config.depth
    rows = config.num_tasks if kind == "defect_generator" else 1
    in_ch = config.image_channels + (config.noise_channels if kind == "defect_generator" else 0)
    total = 9 * in_ch * b + b + 2 * rows * b
    for lvl in range(1, d + 1):
        cin, cout = b * 2 ** (lvl - 1), b * 2**lvl
        total += 9 * cin * cout + cout + 2 * rows * cout
    for lvl in range(d):
        cin, cout = b * 2 ** (lvl + 1) + b * 2**lvl, b * 2**lvl
        total += 9 * cin * cout + cout + 2 * rows * cout
    total += 9 * b * config.image_channels + config.image_channels
    return total


def discriminator_param_count(config: NetConfig, conditioned: bool) -> int:
    cin = config.image_channels * (2 if conditioned else 1)
    total = 0
    for i in range(config.patch_disc_depth - 1):
        cout = config.base_channels * 2**i
        total += 9 * cin * cout + cout
        cin = cout
    return total + 9 * cin + 1


# ---------------------------------------------------------------------------
# forward passes

def _check_divisible(x: Tensor, depth: int):
    step = 2**depth
    for axis, extent in (("height", x.shape[2]), ("width", x.shape[3])):
        if extent % step:
            raise DimensionError(f"image {axis} {extent} is not divisible by 2**depth = {step}")


def _trunk(tape, x: Tensor, params: ParamStore, row: int) -> Tensor:
    config = params.config
    layers = _generator_layers(config, x.shape[1])
    skips = []
    h = x
    for name, _, _, stride, up in layers:
        if up:
            h = ops.upsample_nearest(tape, h, 2)
            h = ops.concat_channels(tape, (h, skips.pop()))
        h = ops.conv2d(tape, h, params[f"{name}.conv.weight"], params[f"{name}.conv.bias"], stride=stride, padding=1)
        layer = CinLayer(params[f"{name}.norm.gamma"], params[f"{name}.norm.beta"])
        h = cin_forward(h, layer, row, tape)
        h = ops.leaky_relu(tape, h, LEAK)
        if name.startswith("enc") and name != f"enc{config.depth}":
            skips.append(h)
    h = ops.conv2d(tape, h, params["out.conv.weight"], params["out.conv.bias"], stride=1, padding=1)
    return ops.tanh(tape, h)


def defect_generator_forward(gt: Tensor, params: ParamStore, task: int, noise: Tensor | None = None,
                             tape: Tape | None = None) -> Tensor:
    """Map ground truth (plus a noise map) to a synthetic defected image for ``task``.

    ``task`` is the CIN bank row. When ``noise`` is omitted a zero map is used.
    """
    if len(params) == 0:
        raise StateError("defect generator parameters are not initialised")
    config = params.config
    if not 0 <= int(task) < config.num_tasks:
        raise ArgumentError(f"task {task} out of range for {config.num_tasks} CIN rows")
    _check_divisible(gt, config.depth)
    x = gt
    if config.noise_channels:
        if noise is None:
            n, _, h, w = gt.shape
            noise = Tensor._result(np.zeros((n, config.noise_channels, h, w), dtype=gt.dtype), False)
        x = ops.concat_channels(tape, (gt, noise))
    return _trunk(tape, x, params, int(task))


def restoration_generator_forward(defected: Tensor, params: ParamStore, tape: Tape | None = None) -> Tensor:
    if len(params) == 0:
        raise StateError("restoration generator parameters are not initialised")
    _check_divisible(defected, params.config.depth)
    return _trunk(tape, defected, params, 0)


def discriminator_forward(image: Tensor, condition: Tensor | None, params: ParamStore,
                          tape: Tape | None = None) -> Tensor:
    """Patch logits (no sigmoid) for ``image``, optionally concatenated with ``condition``."""
    if len(params) == 0:
        raise StateError("discriminator parameters are not initialised")
    config = params.config
    x = image
    if condition is not None:
        if condition.shape[0] != image.shape[0] or condition.shape[2:] != image.shape[2:]:
            raise DimensionError(f"condition shape {condition.shape} does not match image {image.shape}")
        x = ops.concat_channels(tape, (image, condition))
    layers = _disc_layers(config, x.shape[1])
    expected = params[f"{layers[0][0]}.conv.weight"].shape[1]
    if expected != x.shape[1]:
        raise DimensionError(f"discriminator expects {expected} input channels, got {x.shape[1]}")
    h = x
    for i, (name, _, _, stride) in enumerate(layers):
        h = ops.conv2d(tape, h, params[f"{name}.conv.weight"], params[f"{name}.conv.bias"], stride=stride, padding=1)
        if i == len(layers) - 1:
            break
        if i > 0:
            h = ops.instance_norm(tape, h)
        h = ops.leaky_relu(tape, h, LEAK)
    return h


def discriminator_output_extent(extent: int, config: NetConfig) -> int:
    for _ in range(config.patch_disc_depth - 1):
        extent = (extent + 2 - 3) // 2 + 1
    return extent
