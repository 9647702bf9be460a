"""Per-sample losses on the oracle's scalar output ``z`` and their derivatives.

Every loss is expressed as a function of ``z`` and the correctness label
``o`` (TCP additionally needs the classifier's ground-truth-class probability
``p_star``).  The scalar functions here are the readable definitions; batched
evaluation goes through the compiled kernel (or its numpy fallback) via
:func:`loss_arrays` and :func:`batch_loss`.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, replace
from typing import NamedTuple, Sequence

import numpy as np

from . import _backend
from .errors import MissingPStarError

# Orientation of the steep slope slides.  -1 makes the o=1 branch decrease in
# z (features of correct predictions are pushed towards +inf).  +1 reproduces
# the literally printed exponent signs, whose o=1 branch increases in z.
SLIDE_ORIENTATION = -1.0


class LossKind(enum.IntEnum):
    CE = 0
    FOCAL = 1
    TCP = 2
    STEEP_SLOPE = 3


class Wrapper(enum.Enum):
    NONE = "none"
    CLASS_BALANCED = "class_balanced"
    FIXED = "fixed"


@dataclass(frozen=True)
class LossSpec:
    kind: LossKind = LossKind.CE
    gamma: float = 2.0
    alpha_pos: float = 1.0
    alpha_neg: float = 3.0
    wrapper: Wrapper = Wrapper.NONE
    beta: float = 0.999
    w_pos: float = 1.0
    w_neg: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "kind", LossKind(self.kind))
        object.__setattr__(self, "wrapper", Wrapper(self.wrapper))
        if not self.gamma >= 0:
            raise ValueError(f"gamma must be >= 0, got {self.gamma}")
        if not (self.alpha_pos > 0 and self.alpha_neg > 0):
            raise ValueError(
                f"alpha_pos and alpha_neg must be > 0, got {self.alpha_pos}, {self.alpha_neg}"
            )
        if not 0 <= self.beta < 1:
            raise ValueError(f"beta must lie in [0, 1), got {self.beta}")
        if not (self.w_pos >= 0 and self.w_neg >= 0):
            raise ValueError("fixed weights must be nonnegative")

    @classmethod
    def ce(cls) -> LossSpec:
        return cls(kind=LossKind.CE)

    @classmethod
    def focal(cls, gamma: float = 2.0) -> LossSpec:
        return cls(kind=LossKind.FOCAL, gamma=gamma)

    @classmethod
    def tcp(cls) -> LossSpec:
        return cls(kind=LossKind.TCP)

    @classmethod
    def steep_slope(cls, alpha_pos: float = 1.0, alpha_neg: float = 3.0) -> LossSpec:
        return cls(kind=LossKind.STEEP_SLOPE, alpha_pos=alpha_pos, alpha_neg=alpha_neg)

    def class_balanced(self, beta: float = 0.999) -> LossSpec:
        return replace(self, wrapper=Wrapper.CLASS_BALANCED, beta=beta)

    def fixed_weights(self, w_pos: float, w_neg: float) -> LossSpec:
        return replace(self, wrapper=Wrapper.FIXED, w_pos=w_pos, w_neg=w_neg)

    def with_alphas(self, alpha_pos: float, alpha_neg: float) -> LossSpec:
        return replace(self, alpha_pos=alpha_pos, alpha_neg=alpha_neg)

    @property
    def label(self) -> str:
        if self.kind is LossKind.FOCAL:
            name = f"focal(gamma={self.gamma:g})"
        elif self.kind is LossKind.STEEP_SLOPE:
            name = f"ss(alpha_pos={self.alpha_pos:g},alpha_neg={self.alpha_neg:g})"
        else:
            name = self.kind.name.lower()
        if self.wrapper is Wrapper.CLASS_BALANCED:
            name = f"cb[{name},beta={self.beta:g}]"
        elif self.wrapper is Wrapper.FIXED:
            name = f"w[{name},{self.w_pos:g},{self.w_neg:g}]"
        return name


class LossEval(NamedTuple):
    value: float
    grad_z: float


def _check_z(z: float) -> float:
    z = float(z)
    if not math.isfinite(z):
        raise ValueError(f"z must be finite, got {z}")
    return z


def _check_o(o: int) -> int:
    if o not in (0, 1):
        raise ValueError(f"correctness label must be 0 or 1, got {o!r}")
    return int(o)


def sigmoid(z: float) -> float:
    z = _check_z(z)
    if z >= 0:
        return 1.0 / (1.0 + math.exp(-z))
    e = math.exp(z)
    return e / (1.0 + e)


def sigmoid_array(z) -> np.ndarray:
    """Elementwise stable sigmoid; no finiteness check."""
    from ._kernels_py import _sigmoid

    return _sigmoid(np.asarray(z, dtype=np.float64))


def softsign(z: float) -> float:
    z = _check_z(z)
    return z / (1.0 + abs(z))


def softplus(x: float) -> float:
    """log(1 + exp(x)) without overflow."""
    return max(x, 0.0) + math.log1p(math.exp(-abs(x)))


def loss_ce(z: float, o: int) -> LossEval:
    z, o = _check_z(z), _check_o(o)
    # t is the logit of the labelled class; -log sigma(t) = softplus(-t)
    t = z if o == 1 else -z
    sign = 1.0 if o == 1 else -1.0
    return LossEval(softplus(-t), -sign * sigmoid(-t))


def loss_focal(z: float, o: int, gamma: float) -> LossEval:
    z, o = _check_z(z), _check_o(o)
    if not gamma >= 0:
        raise ValueError(f"gamma must be >= 0, got {gamma}")
    t = z if o == 1 else -z
    sign = 1.0 if o == 1 else -1.0
    ce = softplus(-t)
    # (1 - sigma(t))^gamma in log space; exactly 1.0 when gamma == 0
    mod = math.exp(-gamma * softplus(t))
    q_other = sigmoid(-t)
    d_dt = -gamma * mod * sigmoid(t) * ce - mod * q_other
    return LossEval(mod * ce, sign * d_dt)


def loss_tcp(conf: float, p_star: float | None) -> LossEval:
    """Squared error between the oracle confidence and the true-class probability.

    ``grad_z`` is taken through the sigmoid that produced ``conf``.
    """
    if p_star is None or (isinstance(p_star, float) and math.isnan(p_star)):
        raise MissingPStarError()
    if not (0.0 <= conf <= 1.0 and 0.0 <= p_star <= 1.0):
        raise ValueError(f"conf and p_star must lie in [0, 1], got {conf}, {p_star}")
    diff = conf - p_star
    return LossEval(diff * diff, 2.0 * diff * conf * (1.0 - conf))


def loss_tcp_logit(z: float, p_star: float | None) -> LossEval:
    z = _check_z(z)
    if p_star is None:
        raise MissingPStarError()
    p = sigmoid(z)
    diff = p - p_star
    return LossEval(diff * diff, 2.0 * diff * p * sigmoid(-z))


def loss_steep_slope(z: float, o: int, alpha_pos: float, alpha_neg: float) -> LossEval:
    z, o = _check_z(z), _check_o(o)
    if not (alpha_pos > 0 and alpha_neg > 0):
        raise ValueError("alpha_pos and alpha_neg must be > 0")
    k = SLIDE_ORIENTATION
    s = z / (1.0 + abs(z))
    ds = 1.0 / ((1.0 + abs(z)) * (1.0 + abs(z)))
    if o == 1:
        e = math.exp(k * alpha_pos * s)
        return LossEval(e - math.exp(-alpha_pos), k * alpha_pos * e * ds)
    e = math.exp(-k * alpha_neg * s)
    return LossEval(e - math.exp(-alpha_neg), -k * alpha_neg * e * ds)


def loss_range_max(alpha_pos: float, alpha_neg: float) -> float:
    """Upper end of the steep slope loss range."""
    if not (alpha_pos > 0 and alpha_neg > 0):
        raise ValueError("alpha_pos and alpha_neg must be > 0")
    return max(
        math.exp(alpha_pos) - math.exp(-alpha_pos),
        math.exp(alpha_neg) - math.exp(-alpha_neg),
    )


def loss_one(spec: LossSpec, z: float, o: int, p_star: float | None = None) -> LossEval:
    """Unweighted per-sample loss for any spec kind."""
    if spec.kind is LossKind.CE:
        return loss_ce(z, o)
    if spec.kind is LossKind.FOCAL:
        return loss_focal(z, o, spec.gamma)
    if spec.kind is LossKind.TCP:
        return loss_tcp_logit(z, p_star)
    return loss_steep_slope(z, o, spec.alpha_pos, spec.alpha_neg)


def effective_number(beta: float, n_class: int) -> float:
    if not 0 <= beta < 1:
        raise ValueError(f"beta must lie in [0, 1), got {beta}")
    if n_class < 1:
        raise ValueError(f"class count must be >= 1, got {n_class}")
    return (1.0 - beta**n_class) / (1.0 - beta)


def class_balanced_weight(beta: float, n_class: int) -> float:
    """Unnormalized class-balanced weight, the inverse effective number."""
    return 1.0 / effective_number(beta, n_class)


def class_balanced_weights(beta: float, n_pos: int, n_neg: int) -> tuple[float, float]:
    """(w_pos, w_neg) proportional to inverse effective numbers, summing to 2."""
    raw_pos = class_balanced_weight(beta, n_pos)
    raw_neg = class_balanced_weight(beta, n_neg)
    total = raw_pos + raw_neg
    return 2.0 * raw_pos / total, 2.0 * raw_neg / total


def class_weights(spec: LossSpec, class_counts: tuple[int, int] | None) -> tuple[float, float]:
    if spec.wrapper is Wrapper.NONE:
        return 1.0, 1.0
    if spec.wrapper is Wrapper.FIXED:
        return float(spec.w_pos), float(spec.w_neg)
    if class_counts is None:
        raise ValueError("class-balanced wrapper needs (n_pos, n_neg) class counts")
    n_pos, n_neg = class_counts
    return class_balanced_weights(spec.beta, int(n_pos), int(n_neg))


def _p_star_array(spec: LossSpec, p_star, n: int) -> np.ndarray:
    if spec.kind is LossKind.TCP:
        if p_star is None:
            raise MissingPStarError()
        p = np.ascontiguousarray(p_star, dtype=np.float64)
        if p.shape != (n,):
            raise ValueError(f"p_star has shape {p.shape}, expected ({n},)")
        if np.isnan(p).any():
            raise MissingPStarError("missing on some samples")
        return p
    return np.zeros(n)


def loss_arrays(spec: LossSpec, z, o, p_star=None) -> tuple[np.ndarray, np.ndarray]:
    """Unweighted per-sample values and dvalue/dz for arrays of samples."""
    z = np.ascontiguousarray(z, dtype=np.float64)
    o = np.ascontiguousarray(o, dtype=np.uint8)
    if z.ndim != 1 or o.shape != z.shape:
        raise ValueError("z and o must be 1-D arrays of equal length")
    if not np.isfinite(z).all():
        raise ValueError("z must be finite")
    p = _p_star_array(spec, p_star, z.shape[0])
    return _backend.kernels.loss_grad(
        int(spec.kind), z, o, p, spec.gamma, spec.alpha_pos, spec.alpha_neg,
        SLIDE_ORIENTATION,
    )


def sample_weights(spec: LossSpec, o, class_counts=None) -> np.ndarray:
    w_pos, w_neg = class_weights(spec, class_counts)
    o = np.asarray(o)
    return np.where(o == 1, w_pos, w_neg).astype(np.float64)


def batch_loss(
    spec: LossSpec,
    batch: Sequence[tuple] | tuple[np.ndarray, ...],
    class_counts: tuple[int, int] | None = None,
) -> tuple[float, np.ndarray]:
    """Weighted mean loss over a batch and its gradient w.r.t. each ``z_i``.

    ``batch`` is either a sequence of ``(z, o)`` / ``(z, o, p_star)`` tuples or
    a tuple of arrays ``(z, o[, p_star])``.  Weights multiply each sample's
    loss; the mean divides by the batch size, so ``grads[i] = w_i * dl_i/dz / n``.
    """
    z, o, p_star = _unpack_batch(batch)
    if z.shape[0] == 0:
        raise ValueError("empty batch")
    values, grads = loss_arrays(spec, z, o, p_star)
    w = sample_weights(spec, o, class_counts)
    n = z.shape[0]
    return float(np.sum(w * values) / n), w * grads / n


def _unpack_batch(batch):
    if isinstance(batch, tuple) and batch and isinstance(batch[0], np.ndarray):
        z = np.asarray(batch[0], dtype=np.float64)
        o = np.asarray(batch[1])
        p = None if len(batch) < 3 or batch[2] is None else np.asarray(batch[2], dtype=np.float64)
        return z, o, p
    rows = list(batch)
    z = np.array([r[0] for r in rows], dtype=np.float64)
    o = np.array([r[1] for r in rows], dtype=np.uint8)
    if any(len(r) > 2 and r[2] is not None for r in rows):
        p = np.array([np.nan if len(r) < 3 or r[2] is None else r[2] for r in rows])
    else:
        p = None
    return z, o, p
