"""Spiking network engine: LIF neurons, SEW residual blocks and a toy classifier.

All network weights live in one flat float32 genome. ``unflatten`` turns that
genome into named views, so the same forward code serves both gradient-free
evaluation (DE individuals) and surrogate-gradient pretraining.

Tensors flowing between layers are multi-step: shape ``(T, B, C, H, W)``.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field, replace

import numpy as np
import torch
import torch.nn.functional as F

from .errors import DomainError, SizingError, TrainingDivergedError

G_FUNCTIONS = ("ADD", "AND", "IAND")

SURROGATE_ALPHA = 2.0


class ArctanSpike(torch.autograd.Function):
    """Heaviside step forward, arctangent surrogate derivative backward."""

    @staticmethod
    def forward(ctx, x):
        ctx.save_for_backward(x)
        return (x >= 0).to(x.dtype)

    @staticmethod
    def backward(ctx, grad_output):
        (x,) = ctx.saved_tensors
        alpha = SURROGATE_ALPHA
        grad = alpha / (2 * (1 + (math.pi / 2 * alpha * x) ** 2))
        return grad_output * grad


spike_fn = ArctanSpike.apply


@dataclass
class MembraneState:
    potentials: torch.Tensor
    tau: float = 2.0
    v_threshold: float = 1.0
    v_reset: float = 0.0

    @classmethod
    def rest(cls, shape, tau=2.0, v_threshold=1.0, v_reset=0.0, dtype=torch.float32):
        return cls(torch.full(tuple(shape), float(v_reset), dtype=dtype), tau, v_threshold, v_reset)


def _charge(v, x, tau, v_reset):
    # H = V + (X - (V - v_reset)) / tau, rearranged as a decay plus input drive
    return v * (1.0 - 1.0 / tau) + (x + v_reset) / tau


def lif_step(state: MembraneState, input_current: torch.Tensor):
    """Advance one LIF timestep. Returns ``(spikes, new_state)``; ``state`` is not modified."""
    if state.potentials.shape != input_current.shape:
        raise SizingError(
            f"input shape {tuple(input_current.shape)} does not match "
            f"membrane shape {tuple(state.potentials.shape)}"
        )
    h = _charge(state.potentials, input_current, state.tau, state.v_reset)
    spikes = spike_fn(h - state.v_threshold)
    v_next = h * (1.0 - spikes) + state.v_reset * spikes
    return spikes, replace(state, potentials=v_next)


def lif_multistep(x_seq, tau=2.0, v_threshold=1.0, v_reset=0.0):
    """Run a LIF layer over the leading time axis, starting from rest (hard reset)."""
    drive = x_seq * (1.0 / tau)
    if v_reset != 0.0:
        drive = drive + v_reset / tau
    decay = 1.0 - 1.0 / tau
    v = torch.full_like(x_seq[0], v_reset)
    if not (torch.is_grad_enabled() and x_seq.requires_grad):
        out = torch.empty_like(x_seq)
        for t in range(len(x_seq)):
            h = v.mul_(decay).add_(drive[t])
            fired = h >= v_threshold
            out[t] = fired
            v = h.masked_fill_(fired, v_reset)
        return out
    out = []
    for t in range(len(x_seq)):
        h = v * decay + drive[t]
        s = spike_fn(h - v_threshold)
        v = h * (1.0 - s) + v_reset * s
        out.append(s)
    return torch.stack(out)


def _combine(g, a, s):
    if g == "ADD":
        return a + s
    if g == "AND":
        return a * s
    if g == "IAND":
        return (1.0 - a) * s
    raise DomainError(f"unknown element-wise function {g!r}; expected one of {G_FUNCTIONS}")


def _is_binary(t):
    return bool(((t == 0) | (t == 1)).all())


def sew_element_wise(g: str, a: torch.Tensor, s: torch.Tensor) -> torch.Tensor:
    """Apply the SEW connecting function ``g(A, S)`` to binary spike tensors."""
    if a.shape != s.shape:
        raise SizingError(f"shape mismatch {tuple(a.shape)} vs {tuple(s.shape)}")
    if not (_is_binary(a) and _is_binary(s)):
        raise DomainError("sew_element_wise expects binary spike tensors")
    return _combine(g, a, s)


@dataclass(frozen=True)
class SewBlockConfig:
    g: str
    in_channels: int
    out_channels: int
    stride: int = 1

    def __post_init__(self):
        if self.g not in G_FUNCTIONS:
            raise DomainError(f"unknown element-wise function {self.g!r}")
        if self.stride < 1:
            raise DomainError("stride must be >= 1")

    @property
    def downsample(self):
        return self.stride > 1 or self.in_channels != self.out_channels


@dataclass(frozen=True)
class NetworkSpec:
    """Toy SEW classifier: stem conv+SN, SEW stages, spatial pooling, spiking head."""

    in_channels: int = 1
    image_size: int = 12
    num_classes: int = 5
    timesteps: int = 4
    stem_channels: int = 16
    stages: tuple = ((16, 1), (32, 2))
    g: str = "ADD"
    tau: float = 2.0
    v_threshold: float = 1.0
    v_reset: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "stages", tuple(tuple(int(v) for v in st) for st in self.stages))
        if self.g not in G_FUNCTIONS:
            raise DomainError(f"unknown element-wise function {self.g!r}")
        if self.timesteps < 1 or self.num_classes < 2:
            raise DomainError("timesteps must be >= 1 and num_classes >= 2")
        if self.tau <= 1:
            raise DomainError("tau must be > 1")

    def blocks(self):
        cin = self.stem_channels
        out = []
        for cout, stride in self.stages:
            out.append(SewBlockConfig(self.g, cin, cout, stride))
            cin = cout
        return out

    def layout(self):
        """Ordered ``(name, shape)`` pairs describing the flat genome."""
        c = self.in_channels
        items = [("stem.w", (self.stem_channels, c, 3, 3)), ("stem.b", (self.stem_channels,))]
        for i, blk in enumerate(self.blocks()):
            p = f"block{i}"
            items += [
                (f"{p}.conv1.w", (blk.out_channels, blk.in_channels, 3, 3)),
                (f"{p}.conv1.b", (blk.out_channels,)),
                (f"{p}.conv2.w", (blk.out_channels, blk.out_channels, 3, 3)),
                (f"{p}.conv2.b", (blk.out_channels,)),
            ]
            if blk.downsample:
                items += [
                    (f"{p}.down.w", (blk.out_channels, blk.in_channels, 1, 1)),
                    (f"{p}.down.b", (blk.out_channels,)),
                ]
        last = self.stages[-1][0] if self.stages else self.stem_channels
        items += [("head.w", (self.num_classes, last)), ("head.b", (self.num_classes,))]
        return items

    @property
    def dim(self):
        return sum(math.prod(shape) for _, shape in self.layout())

    def to_text(self):
        stages = ",".join(f"{c}x{s}" for c, s in self.stages)
        lines = [
            f"in_channels = {self.in_channels}",
            f"image_size = {self.image_size}",
            f"num_classes = {self.num_classes}",
            f"timesteps = {self.timesteps}",
            f"stem_channels = {self.stem_channels}",
            f"stages = {stages}",
            f"g = {self.g}",
            f"tau = {self.tau!r}",
            f"v_threshold = {self.v_threshold!r}",
            f"v_reset = {self.v_reset!r}",
        ]
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text):
        kv = {}
        for line in text.splitlines():
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            key, _, value = line.partition("=")
            kv[key.strip()] = value.strip()
        return cls.from_mapping(kv)

    @classmethod
    def from_mapping(cls, kv):
        ints = ("in_channels", "image_size", "num_classes", "timesteps", "stem_channels")
        floats = ("tau", "v_threshold", "v_reset")
        args = {}
        for key, value in kv.items():
            if key in ints:
                args[key] = int(value)
            elif key in floats:
                args[key] = float(value)
            elif key == "g":
                args[key] = str(value).upper()
            elif key == "stages":
                stages = []
                for part in str(value).split(","):
                    if part.strip():
                        c, _, s = part.strip().partition("x")
                        stages.append((int(c), int(s or 1)))
                args[key] = tuple(stages)
            else:
                raise DomainError(f"unknown network spec key {key!r}")
        return cls(**args)

    def digest(self) -> bytes:
        return hashlib.sha256(self.to_text().encode()).digest()


def unflatten(spec: NetworkSpec, flat):
    """Split a flat genome into named views (no copies)."""
    if flat.shape != (spec.dim,):
        raise SizingError(f"genome has shape {tuple(flat.shape)}, network expects ({spec.dim},)")
    out = {}
    offset = 0
    for name, shape in spec.layout():
        n = math.prod(shape)
        out[name] = flat[offset:offset + n].reshape(shape)
        offset += n
    return out


def flatten(spec: NetworkSpec, weights) -> np.ndarray:
    parts = []
    for name, shape in spec.layout():
        w = weights[name]
        if tuple(w.shape) != tuple(shape):
            raise SizingError(f"{name}: expected shape {shape}, got {tuple(w.shape)}")
        parts.append(np.asarray(w, dtype=np.float32).reshape(-1))
    return np.concatenate(parts)


def init_params(spec: NetworkSpec, rng: np.random.Generator, gain=5.0) -> np.ndarray:
    """Uniform fan-in initialisation, scaled up since the net has no normalisation layers."""
    parts = []
    fan_in = None
    for name, shape in spec.layout():
        if name.endswith(".w"):
            fan_in = math.prod(shape[1:])
        bound = gain * math.sqrt(3.0 / fan_in)
        if name.endswith(".b"):
            bound = 1.0 / math.sqrt(fan_in)
        parts.append(rng.uniform(-bound, bound, size=math.prod(shape)))
    return np.concatenate(parts).astype(np.float32)


def _conv_seq(x_seq, w, b, stride=1):
    t, bsz = x_seq.shape[:2]
    y = F.conv2d(x_seq.reshape(t * bsz, *x_seq.shape[2:]), w, b, stride=stride, padding=w.shape[-1] // 2)
    return y.reshape(t, bsz, *y.shape[1:])


def sew_block_forward(config: SewBlockConfig, weights, input_spikes, lif=None, trace=None):
    """One SEW residual block over all timesteps.

    ``weights`` maps ``conv1.w``, ``conv1.b``, ``conv2.w``, ``conv2.b`` (and
    ``down.w``/``down.b`` for a downsampling shortcut). Membrane state is
    created fresh for every call.
    """
    lif = lif or {}
    if input_spikes.dim() != 5 or input_spikes.shape[2] != config.in_channels:
        raise SizingError(
            f"block expects (T, B, {config.in_channels}, H, W) input, got {tuple(input_spikes.shape)}"
        )
    a = lif_multistep(_conv_seq(input_spikes, weights["conv1.w"], weights["conv1.b"], config.stride), **lif)
    if trace is not None:
        trace.append(a)
    a = lif_multistep(_conv_seq(a, weights["conv2.w"], weights["conv2.b"]), **lif)
    if trace is not None:
        trace.append(a)
    if config.downsample:
        s = lif_multistep(_conv_seq(input_spikes, weights["down.w"], weights["down.b"], config.stride), **lif)
        if trace is not None:
            trace.append(s)
    else:
        s = input_spikes
    return _combine(config.g, a, s)


def forward_scores(spec: NetworkSpec, params: torch.Tensor, images: torch.Tensor, trace=None):
    """Differentiable forward pass; returns mean head firing rate per class, shape (B, K)."""
    if images.dim() != 4 or images.shape[1] != spec.in_channels:
        raise SizingError(f"expected images (B, {spec.in_channels}, H, W), got {tuple(images.shape)}")
    w = unflatten(spec, params)
    lif = dict(tau=spec.tau, v_threshold=spec.v_threshold, v_reset=spec.v_reset)
    # static encoding: the stem current is identical at every step
    stem = F.conv2d(images, w["stem.w"], w["stem.b"], padding=1)
    x = lif_multistep(stem.unsqueeze(0).expand(spec.timesteps, *stem.shape), **lif)
    if trace is not None:
        trace.append(x)
    for i, blk in enumerate(spec.blocks()):
        prefix = f"block{i}."
        bw = {k[len(prefix):]: v for k, v in w.items() if k.startswith(prefix)}
        x = sew_block_forward(blk, bw, x, lif, trace)
    pooled = x.mean(dim=(3, 4))
    out = lif_multistep(F.linear(pooled, w["head.w"], w["head.b"]), **lif)
    if trace is not None:
        trace.append(out)
    return out.mean(dim=0)


def network_forward(spec: NetworkSpec, params, images, batch_size=512) -> np.ndarray:
    """Class scores (mean firing rates in [0, 1]) for a batch of images; pure and deterministic."""
    params = np.asarray(params)
    if params.shape != (spec.dim,):
        raise SizingError(f"genome dim {params.shape} does not match network dim {spec.dim}")
    p = torch.from_numpy(np.ascontiguousarray(params, dtype=np.float32))
    imgs = torch.from_numpy(np.array(images, dtype=np.float32))
    outs = []
    with torch.no_grad():
        for start in range(0, len(imgs), batch_size):
            outs.append(forward_scores(spec, p, imgs[start:start + batch_size]))
    if not outs:
        return np.zeros((0, spec.num_classes), dtype=np.float32)
    return torch.cat(outs).numpy()


def predict(scores) -> np.ndarray:
    """Top-1 class; ties go to the lowest class index."""
    return np.argmax(np.asarray(scores), axis=1)


def accuracy(spec, params, images, labels) -> float:
    return float(np.mean(predict(network_forward(spec, params, images)) == np.asarray(labels)))


# --------------------------------------------------------------------------
# surrogate-gradient pretraining

@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 30
    lr: float = 1.0  # MSE on firing rates has small gradients
    momentum: float = 0.9
    batch_size: int = 16
    label_smoothing: float = 0.0
    mixup_alpha: float = 0.0  # 0 disables mixup
    lr_step: int = 0  # 0 keeps the learning rate constant
    lr_gamma: float = 0.5
    keep_last: int = 1


@dataclass
class TrainResult:
    params: np.ndarray
    checkpoints: list = field(default_factory=list)  # last ``keep_last`` per-epoch genomes
    losses: list = field(default_factory=list)


def smooth_labels(labels, num_classes, epsilon) -> np.ndarray:
    onehot = np.eye(num_classes, dtype=np.float32)[np.asarray(labels)]
    return (1.0 - epsilon) * onehot + epsilon / num_classes


def surrogate_backward_train(
    spec: NetworkSpec,
    images,
    labels,
    config: TrainConfig,
    rng: np.random.Generator,
    init=None,
) -> TrainResult:
    """Backprop-through-time with the arctangent surrogate; MSE on firing rates.

    Returns the final genome and the genomes after each of the last
    ``config.keep_last`` epochs (oldest first).
    """
    if len(images) == 0:
        raise SizingError("training set is empty")
    if init is None:
        init = init_params(spec, rng)
    init = np.asarray(init, dtype=np.float32)
    if init.shape != (spec.dim,):
        raise SizingError(f"initial genome dim {init.shape} does not match network dim {spec.dim}")
    result = TrainResult(params=init.copy())
    if config.epochs == 0:
        result.checkpoints = [init.copy()]
        return result

    x_all = torch.from_numpy(np.array(images, dtype=np.float32))
    y_all = smooth_labels(labels, spec.num_classes, config.label_smoothing)
    params = torch.tensor(init, requires_grad=True)
    opt = torch.optim.SGD([params], lr=config.lr, momentum=config.momentum)
    sched = None
    if config.lr_step > 0:
        sched = torch.optim.lr_scheduler.StepLR(opt, config.lr_step, config.lr_gamma)

    n = len(x_all)
    history = []
    for epoch in range(config.epochs):
        order = rng.permutation(n)
        total = 0.0
        for start in range(0, n, config.batch_size):
            idx = order[start:start + config.batch_size]
            xb = x_all[idx]
            yb = torch.from_numpy(y_all[idx])
            if config.mixup_alpha > 0:
                lam = float(rng.beta(config.mixup_alpha, config.mixup_alpha))
                perm = torch.from_numpy(rng.permutation(len(idx)))
                xb = lam * xb + (1 - lam) * xb[perm]
                yb = lam * yb + (1 - lam) * yb[perm]
            opt.zero_grad()
            loss = F.mse_loss(forward_scores(spec, params, xb), yb)
            if not torch.isfinite(loss):
                raise TrainingDivergedError(epoch)
            loss.backward()
            opt.step()
            total += float(loss.detach()) * len(idx)
        if sched is not None:
            sched.step()
        result.losses.append(total / n)
        history.append(params.detach().numpy().copy())
        history = history[-max(config.keep_last, 1):]
    result.params = history[-1].copy()
    result.checkpoints = history
    return result


# --------------------------------------------------------------------------
# weight statistics

@dataclass(frozen=True)
class WeightStats:
    max: float
    min: float
    interval: tuple  # [lo, hi) bin holding the most values

    def format_line(self, name="SNN"):
        lo, hi = self.interval
        return f"{name}\t{self.max:.6g}\t{self.min:.6g}\t[{lo:.6g},{hi:.6g})"


def weight_stats(params, bin_width=0.01) -> WeightStats:
    """Max, min and the most populated bin of width ``bin_width`` (bins anchored at 0)."""
    values = np.asarray(params, dtype=np.float64).ravel()
    if values.size == 0:
        raise SizingError("weight_stats needs a non-empty vector")
    if bin_width <= 0:
        raise DomainError("bin_width must be positive")
    bins = np.floor(values / bin_width).astype(np.int64)
    uniq, counts = np.unique(bins, return_counts=True)
    k = int(uniq[np.argmax(counts)])  # ties -> lowest bin
    return WeightStats(float(values.max()), float(values.min()), (k * bin_width, (k + 1) * bin_width))
