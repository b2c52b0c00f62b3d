"""Image corruptions at five severities, corruption error rates and mCE.

Every corruption is parameterised by one magnitude knob that grows with
severity. A zero magnitude (1 for ``pixelate``, whose knob is a downscale
factor) leaves the images untouched bit for bit.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from .errors import DomainError

KINDS = (
    "gaussian_noise",
    "shot_noise",
    "impulse_noise",
    "defocus_blur",
    "motion_blur",
    "brightness",
    "contrast",
    "pixelate",
)
NOISE_KINDS = frozenset({"gaussian_noise", "shot_noise", "impulse_noise"})
SEVERITIES = (1, 2, 3, 4, 5)

# Severity ladders for 12x12 toy images. Each was checked to give a base-model
# error that does not decrease with severity (tests/test_acceptance.py).
LADDERS = {
    "gaussian_noise": (0.10, 0.18, 0.26, 0.34, 0.42),  # noise std
    "shot_noise": (1 / 40, 1 / 16, 1 / 8, 1 / 4, 1 / 2),  # 1 / photon count
    "impulse_noise": (0.03, 0.06, 0.09, 0.17, 0.27),  # salt-and-pepper fraction
    "defocus_blur": (0.6, 0.8, 1.0, 1.25, 1.5),  # anti-aliased disk radius, px
    "motion_blur": (0.5, 1.0, 1.5, 2.0, 3.0),  # streak length, px
    "brightness": (0.05, 0.1, 0.15, 0.2, 0.3),  # additive shift
    "contrast": (0.2, 0.4, 0.6, 0.75, 0.85),  # fraction of contrast removed
    "pixelate": (1.5, 2.0, 3.0, 4.0, 6.0),  # downscale factor
}

IDENTITY_MAGNITUDE = {kind: (1.0 if kind == "pixelate" else 0.0) for kind in KINDS}


@dataclass(frozen=True)
class CorruptionSpec:
    kind: str
    severity: int
    magnitude: float | None = None  # overrides the ladder when given

    def __post_init__(self):
        if self.kind not in KINDS:
            raise DomainError(f"unknown corruption kind {self.kind!r}")
        if self.severity not in SEVERITIES:
            raise DomainError(f"severity must be in 1..5, got {self.severity}")

    @property
    def value(self):
        if self.magnitude is not None:
            return float(self.magnitude)
        return float(LADDERS[self.kind][self.severity - 1])


def _disk_kernel(radius):
    # anti-aliased disk: taps fade out linearly across the rim
    r = int(math.ceil(radius + 0.5))
    yy, xx = np.mgrid[-r:r + 1, -r:r + 1]
    k = np.clip(radius + 0.5 - np.sqrt(yy**2 + xx**2), 0.0, 1.0)
    return k / k.sum()


def _motion_kernel(length):
    # diagonal streak trailing down-right of each pixel; a fractional length
    # gives the last tap a partial weight
    n = int(math.ceil(length)) + 1
    taps = np.ones(n)
    frac = length - math.floor(length)
    if frac > 0:
        taps[-1] = frac
    k = np.zeros((n, n))
    k[np.arange(n), np.arange(n)] = taps
    k = k / k.sum()
    pad = np.zeros((2 * n - 1, 2 * n - 1))
    pad[n - 1:, n - 1:] = k
    return pad


def _blur(images, kernel):
    out = np.empty_like(images)
    for idx in np.ndindex(images.shape[:2]):
        out[idx] = ndimage.convolve(images[idx].astype(np.float64), kernel, mode="nearest")
    return out


def _pixelate(images, factor):
    h, w = images.shape[-2:]
    sh, sw = max(1, int(round(h / factor))), max(1, int(round(w / factor)))
    if (sh, sw) == (h, w):
        return images.copy()
    rows = np.arange(h) * sh // h
    cols = np.arange(w) * sw // w
    small = np.zeros(images.shape[:2] + (sh, sw), dtype=np.float64)
    count = np.zeros((sh, sw))
    np.add.at(count, (rows[:, None], cols[None, :]), 1.0)
    for i in range(h):
        for j in range(w):
            small[..., rows[i], cols[j]] += images[..., i, j]
    small /= count
    return small[..., rows[:, None], cols[None, :]]


def apply_corruption(images, kind, magnitude, rng=None) -> np.ndarray:
    """Corrupt ``(N, C, H, W)`` images in [0, 1] with an explicit magnitude; clips to [0, 1]."""
    if kind not in KINDS:
        raise DomainError(f"unknown corruption kind {kind!r}")
    x = np.asarray(images)
    dtype = x.dtype if np.issubdtype(x.dtype, np.floating) else np.float32
    x = x.astype(dtype, copy=False)
    if magnitude == IDENTITY_MAGNITUDE[kind]:
        return x.copy()
    if kind in NOISE_KINDS and rng is None:
        raise DomainError(f"{kind} needs a random stream")
    m = float(magnitude)

    if kind == "gaussian_noise":
        out = x + rng.normal(0.0, m, size=x.shape)
    elif kind == "shot_noise":
        out = rng.poisson(np.clip(x, 0, 1) / m) * m
    elif kind == "impulse_noise":
        hit = rng.random(x.shape) < m
        salt = rng.random(x.shape) < 0.5
        out = np.where(hit, salt.astype(np.float64), x)
    elif kind == "defocus_blur":
        out = _blur(x, _disk_kernel(m))
    elif kind == "motion_blur":
        out = _blur(x, _motion_kernel(m))
    elif kind == "brightness":
        out = x + m
    elif kind == "contrast":
        mean = x.mean(axis=(-2, -1), keepdims=True)
        out = x + (mean - x) * m
    else:
        out = _pixelate(x, m)
    return np.clip(out, 0.0, 1.0).astype(dtype)


def corrupt(images, spec: CorruptionSpec, rng=None) -> np.ndarray:
    """Noise kinds draw from ``rng``; all other kinds are deterministic and ignore it."""
    return apply_corruption(images, spec.kind, spec.value, rng if spec.kind in NOISE_KINDS else None)


def cell_rng(seed, kind, severity):
    """Independent stream for one (kind, severity) cell."""
    return np.random.default_rng([int(seed), KINDS.index(kind), int(severity)])


def error_rate(scores, labels) -> float:
    """Top-1 error; argmax ties resolve to the lowest class index."""
    scores = np.asarray(scores)
    labels = np.asarray(labels)
    if len(labels) == 0:
        raise DomainError("error_rate needs a non-empty set")
    return float(np.mean(np.argmax(scores, axis=1) != labels))


def mce(model_errors, base_errors):
    """Corruption error relative to a base model, in percent.

    ``100 * sum(model) / sum(base)`` over the five severities. Returns None
    when the base errors sum to zero (undefined).
    """
    if len(model_errors) != len(SEVERITIES) or len(base_errors) != len(SEVERITIES):
        raise DomainError("mce expects one error per severity (5 values each)")
    denom = math.fsum(base_errors)
    if denom == 0:
        return None
    return 100.0 * (math.fsum(model_errors) / denom)  # ratio first: identical lists give exactly 100


@dataclass
class EvalReport:
    model_errors: dict = field(default_factory=dict)  # kind -> [err per severity]
    base_errors: dict = field(default_factory=dict)
    clean_error_model: float | None = None
    clean_error_base: float | None = None

    def mce(self, kind):
        return mce(self.model_errors[kind], self.base_errors[kind])

    def kinds(self):
        return [k for k in KINDS if k in self.model_errors]

    def mean_error(self, which="model"):
        errs = self.model_errors if which == "model" else self.base_errors
        return float(np.mean([np.mean(errs[k]) for k in self.kinds()]))

    def mean_mce(self):
        vals = [self.mce(k) for k in self.kinds()]
        vals = [v for v in vals if v is not None]
        return float(np.mean(vals)) if vals else None

    def to_tsv(self):
        rows = ["kind\terror_base\terror_model\tmCE"]
        for k in self.kinds():
            m = self.mce(k)
            rows.append(
                f"{k}\t{100 * np.mean(self.base_errors[k]):.3f}\t"
                f"{100 * np.mean(self.model_errors[k]):.3f}\t"
                f"{'undefined' if m is None else format(m, '.3f')}"
            )
        mm = self.mean_mce()
        rows.append(
            f"average\t{100 * self.mean_error('base'):.3f}\t{100 * self.mean_error('model'):.3f}\t"
            f"{'undefined' if mm is None else format(mm, '.3f')}"
        )
        return "\n".join(rows) + "\n"

    def to_dict(self):
        return {
            "clean_error": {"base": self.clean_error_base, "model": self.clean_error_model},
            "corruptions": {
                k: {
                    "base_errors": list(self.base_errors[k]),
                    "model_errors": list(self.model_errors[k]),
                    "mCE": self.mce(k),
                }
                for k in self.kinds()
            },
            "mean_error": {"base": self.mean_error("base"), "model": self.mean_error("model")},
            "mean_mCE": self.mean_mce(),
        }

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"


def evaluate_robustness(score_fn, base_score_fn, images, labels, seed, kinds=KINDS, ladders=None):
    """Error rates of a model and a base model on every (kind, severity) cell.

    ``score_fn``/``base_score_fn`` map an image batch to class scores. Both
    models see the same corrupted images.
    """
    ladders = ladders or LADDERS
    report = EvalReport()
    report.clean_error_model = error_rate(score_fn(images), labels)
    report.clean_error_base = error_rate(base_score_fn(images), labels)
    for kind in kinds:
        report.model_errors[kind] = []
        report.base_errors[kind] = []
        for s in SEVERITIES:
            spec = CorruptionSpec(kind, s, ladders[kind][s - 1])
            x = corrupt(images, spec, cell_rng(seed, kind, s))
            report.model_errors[kind].append(error_rate(score_fn(x), labels))
            report.base_errors[kind].append(
                report.model_errors[kind][-1] if base_score_fn is score_fn else error_rate(base_score_fn(x), labels)
            )
    return report
