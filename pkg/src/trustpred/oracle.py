"""Linear oracle head, correctness labels, and the SGD trainer.

Only the head ``(w, b)`` is trained; inputs are frozen backbone features.
"""

from __future__ import annotations

import enum
import json
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from . import _backend
from .data_io import Dataset, derive_rng, write_json, write_jsonl
from .errors import DataError, MissingPStarError, NumericAbort, TrustpredError
from .losses import (
    SLIDE_ORIENTATION,
    LossKind,
    LossSpec,
    batch_loss,
    sample_weights,
    sigmoid_array,
)


class HeadMode(enum.Enum):
    RAW_LINEAR = "raw_linear"
    SIGNED_DISTANCE = "signed_distance"


@dataclass
class OracleHead:
    w: np.ndarray
    b: float = 0.0
    mode: HeadMode = HeadMode.SIGNED_DISTANCE

    def __post_init__(self):
        self.w = np.array(self.w, dtype=np.float64).reshape(-1)
        self.b = float(self.b)
        self.mode = HeadMode(self.mode)

    @property
    def d(self) -> int:
        return self.w.shape[0]

    def scaled(self, c: float) -> OracleHead:
        return OracleHead(self.w * c, self.b * c, self.mode)

    def copy(self) -> OracleHead:
        return OracleHead(self.w.copy(), self.b, self.mode)

    def __eq__(self, other) -> bool:
        if not isinstance(other, OracleHead):
            return NotImplemented
        return (self.mode is other.mode and self.w.tobytes() == other.w.tobytes()
                and np.float64(self.b).tobytes() == np.float64(other.b).tobytes())

    def to_dict(self) -> dict:
        return {"mode": self.mode.value, "b": self.b, "w": [float(v) for v in self.w]}

    @classmethod
    def from_dict(cls, data: dict) -> OracleHead:
        return cls(np.array(data["w"], dtype=np.float64), float(data["b"]), HeadMode(data["mode"]))


def init_head(d: int, seed: int, mode: HeadMode = HeadMode.SIGNED_DISTANCE) -> OracleHead:
    """Spherical Gaussian weights scaled by 1/sqrt(d), zero bias."""
    w = derive_rng(seed, "init").standard_normal(d) / math.sqrt(d)
    return OracleHead(w, 0.0, mode)


def save_head(head: OracleHead, path) -> None:
    write_json(path, head.to_dict())


def load_head(path) -> OracleHead:
    return OracleHead.from_dict(json.loads(Path(path).read_text()))


def _norm(head: OracleHead) -> float:
    if head.mode is HeadMode.RAW_LINEAR:
        return 1.0
    nw = float(np.sqrt(head.w @ head.w))
    if not nw > 0:
        raise ValueError("signed-distance head needs a nonzero weight vector")
    return nw


def forward(head: OracleHead, x):
    """Discriminative feature z for one feature vector or a matrix of rows."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape[-1] != head.d:
        raise ValueError(f"feature dimension {x.shape[-1]} != head dimension {head.d}")
    nw = _norm(head)
    z = (x @ head.w + head.b) / nw
    return float(z) if x.ndim == 1 else z


def dz_dx(head: OracleHead) -> np.ndarray:
    return head.w / _norm(head)


def confidences(head: OracleHead, dataset: Dataset) -> np.ndarray:
    """Trustworthiness confidence sigmoid(z) for every sample."""
    return sigmoid_array(forward(head, dataset.features.astype(np.float64)))


def label_correctness(predicted_class: int, true_class: int, k: int | None = None) -> int:
    """1 when the classifier's prediction matches the ground truth, else 0."""
    for c in (predicted_class, true_class):
        if c < 0 or (k is not None and c >= k):
            raise ValueError(f"class index {c} out of range [0, {k})")
    return int(predicted_class == true_class)


def labels_from_scores(scores, true_classes) -> np.ndarray:
    """Correctness labels from classifier scores; argmax ties go to the lowest index."""
    scores = np.asarray(scores)
    true_classes = np.asarray(true_classes)
    k = scores.shape[1]
    if np.any((true_classes < 0) | (true_classes >= k)):
        raise ValueError(f"true class index out of range [0, {k})")
    return (np.argmax(scores, axis=1) == true_classes).astype(np.uint8)


class Schedule(enum.Enum):
    ONE_CYCLE = "one_cycle"
    CONSTANT = "constant"


def one_cycle_lr(step: int, total_steps: int, lr_max: float) -> float:
    """Symmetric triangular 1-cycle: up to ``lr_max`` at step ``total_steps // 2``.

    The rising leg is ``lr_max * (step + 1) / (mid + 1)`` and the falling leg
    ``lr_max * (total_steps - step) / (total_steps - mid)``, so the last step
    gets ``lr_max / ceil(total_steps / 2)`` and no step gets exactly zero.
    """
    if total_steps <= 0:
        raise ValueError("total_steps must be positive")
    if not 0 <= step < total_steps:
        raise ValueError(f"step {step} outside [0, {total_steps})")
    mid = total_steps // 2
    if step <= mid:
        return lr_max * (step + 1) / (mid + 1)
    return lr_max * (total_steps - step) / (total_steps - mid)


def lr_schedule(total_steps: int, lr_max: float, schedule: Schedule) -> np.ndarray:
    if total_steps == 0:
        return np.zeros(0)
    if schedule is Schedule.CONSTANT:
        return np.full(total_steps, float(lr_max))
    return np.array([one_cycle_lr(s, total_steps, lr_max) for s in range(total_steps)])


@dataclass(frozen=True)
class TrainConfig:
    lr_max: float = 1e-5
    momentum: float = 0.05
    weight_decay: float = 0.0
    batch_size: int = 40
    epochs: int = 1
    seed: int = 0
    schedule: Schedule = Schedule.ONE_CYCLE

    def __post_init__(self):
        object.__setattr__(self, "schedule", Schedule(self.schedule))
        if not self.lr_max >= 0:
            raise ValueError("lr_max must be >= 0")
        if not 0 <= self.momentum < 1:
            raise ValueError("momentum must lie in [0, 1)")
        if not self.weight_decay >= 0:
            raise ValueError("weight_decay must be >= 0")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.epochs < 0:
            raise ValueError("epochs must be >= 0")
        if not 0 <= self.seed < 2**64:
            raise ValueError("seed must be an unsigned 64-bit integer")


@dataclass
class TrainHistory:
    lrs: np.ndarray
    losses: np.ndarray
    head: OracleHead
    wall_time: float = field(default=0.0, compare=False)

    @property
    def n_steps(self) -> int:
        return self.losses.shape[0]

    def records(self) -> list[dict]:
        return [{"step": i, "lr": float(lr), "loss": float(loss)}
                for i, (lr, loss) in enumerate(zip(self.lrs, self.losses))]

    def write_jsonl(self, path) -> None:
        write_jsonl(path, self.records())

    def __eq__(self, other) -> bool:
        if not isinstance(other, TrainHistory):
            return NotImplemented
        return (self.head == other.head and self.lrs.tobytes() == other.lrs.tobytes()
                and self.losses.tobytes() == other.losses.tobytes())


def steps_per_epoch(n: int, batch_size: int) -> int:
    return -(-n // batch_size)


def _p_star_for(spec: LossSpec, dataset: Dataset) -> np.ndarray:
    if spec.kind is LossKind.TCP:
        if not dataset.has_p_star:
            raise MissingPStarError(f"dataset {dataset.provenance or '<memory>'} has none")
        return dataset.p_star.astype(np.float64)
    return np.zeros(dataset.n)


def train(dataset: Dataset, spec: LossSpec, config: TrainConfig,
          init: OracleHead | None = None,
          mode: HeadMode = HeadMode.SIGNED_DISTANCE) -> TrainHistory:
    """Mini-batch SGD with heavy-ball momentum on the mean (weighted) loss.

    Batch order is a fresh seeded permutation per epoch.  ``init`` defaults
    to :func:`init_head` with the config seed and ``mode``.
    """
    if dataset.n == 0:
        raise DataError("cannot train on an empty dataset")
    if init is None:
        init = init_head(dataset.d, config.seed, mode)
    if init.d != dataset.d:
        raise DataError(f"head dimension {init.d} != dataset dimension {dataset.d}")
    p = _p_star_for(spec, dataset)
    start = time.perf_counter()
    if config.epochs == 0:
        return TrainHistory(np.zeros(0), np.zeros(0), init.copy(), 0.0)

    total = config.epochs * steps_per_epoch(dataset.n, config.batch_size)
    lrs = lr_schedule(total, config.lr_max, config.schedule)
    rng = derive_rng(config.seed, "batch-order")
    perms = np.stack([rng.permutation(dataset.n) for _ in range(config.epochs)]).astype(np.int64)
    sw = sample_weights(spec, dataset.o, dataset.class_counts)
    w = init.w.copy()
    signed = init.mode is HeadMode.SIGNED_DISTANCE
    if signed:
        _norm(init)
    b, losses, status, fail_step, fail_epoch, fail_batch = _backend.kernels.sgd_train(
        np.ascontiguousarray(dataset.features, dtype=np.float64), dataset.o, p, sw, perms,
        w, init.b, signed, int(spec.kind), spec.gamma, spec.alpha_pos, spec.alpha_neg,
        SLIDE_ORIENTATION, lrs, config.batch_size, config.momentum, config.weight_decay,
    )
    if status:
        what = "loss" if status == 1 else "head parameters"
        raise NumericAbort(int(fail_step), int(fail_batch), int(fail_epoch), what)
    return TrainHistory(lrs, losses, OracleHead(w, b, init.mode), time.perf_counter() - start)


def eval_loss(head: OracleHead, dataset: Dataset, spec: LossSpec,
              class_counts: tuple[int, int] | None = None) -> float:
    z = forward(head, dataset.features.astype(np.float64))
    p = dataset.p_star if spec.kind is LossKind.TCP else None
    if spec.kind is LossKind.TCP and p is None:
        raise MissingPStarError()
    value, _ = batch_loss(spec, (z, dataset.o, p), class_counts or dataset.class_counts)
    return value


class SweepPhase(enum.Enum):
    NEG_FIRST = "neg"
    POS_SECOND = "pos"


@dataclass(frozen=True)
class SweepRow:
    alpha: float
    alpha_pos: float
    alpha_neg: float
    loss: float
    tpr: float
    tnr: float
    error: str = ""

    @property
    def ok(self) -> bool:
        return not self.error


def _sweep_point(args) -> SweepRow:
    from .metrics import ThresholdPolicy, tpr_tnr

    train_set, eval_set, base_spec, phase, config, init, mode, policy, alpha = args
    if phase is SweepPhase.NEG_FIRST:
        alpha_pos, alpha_neg = base_spec.alpha_pos, alpha
    else:
        alpha_pos, alpha_neg = alpha, base_spec.alpha_neg
    try:
        spec = base_spec.with_alphas(alpha_pos, alpha_neg)
        hist = train(train_set, spec, config, init, mode)
        conf = confidences(hist.head, eval_set)
        tpr, tnr, _ = tpr_tnr(conf, eval_set.o, policy or ThresholdPolicy())
        loss = eval_loss(hist.head, eval_set, spec, train_set.class_counts)
        return SweepRow(alpha, spec.alpha_pos, spec.alpha_neg, loss, tpr, tnr)
    except (TrustpredError, ValueError) as exc:
        return SweepRow(alpha, alpha_pos, alpha_neg, math.nan, math.nan, math.nan,
                        f"{type(exc).__name__}: {exc}")


def sweep_alpha(train_set: Dataset, eval_set: Dataset, base_spec: LossSpec,
                grid: Sequence[float], phase: SweepPhase = SweepPhase.NEG_FIRST,
                config: TrainConfig = TrainConfig(), init: OracleHead | None = None,
                mode: HeadMode = HeadMode.SIGNED_DISTANCE, policy=None,
                workers: int = 1) -> list[SweepRow]:
    """Train one steep slope head per grid value and tabulate TPR/TNR/loss.

    ``NEG_FIRST`` varies alpha_neg with alpha_pos frozen at the base value;
    ``POS_SECOND`` varies alpha_pos with alpha_neg frozen.  Failed points are
    reported in ``SweepRow.error`` and the sweep continues.
    """
    if not grid:
        raise ValueError("sweep grid is empty")
    phase = SweepPhase(phase)
    base_spec = replace(base_spec, kind=LossKind.STEEP_SLOPE)
    jobs = [(train_set, eval_set, base_spec, phase, config, init, mode, policy, float(a))
            for a in grid]
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=min(workers, len(jobs))) as pool:
            return list(pool.map(_sweep_point, jobs))
    return [_sweep_point(job) for job in jobs]
