"""Feature/correctness datasets: binary and CSV formats, synthetic data, splits.

Binary layout (all little-endian)::

    b"TWF1" | version u32 | n u64 | d u32 | K u32 | flags u32
    n rows of: o u8 | p_star f32 (only if flags bit 0) | d x f32 features

Report writers (JSON, JSONL, CSV) also live here so every artifact on disk is
formatted by one piece of code.
"""

from __future__ import annotations

import csv
import io
import json
import math
import os
import struct
import zlib
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import (
    DataError,
    DatasetFormatError,
    DimensionOverflowError,
    MagicError,
    TruncatedFileError,
)

MAGIC = b"TWF1"
VERSION = 1
FLAG_P_STAR = 1
MAX_DIM = 1 << 20
_HEADER = struct.Struct("<4sIQIII")


def derive_rng(seed: int, tag: str) -> np.random.Generator:
    """Independent generator for one purpose, derived from the top-level seed."""
    return np.random.default_rng(np.random.SeedSequence([int(seed), zlib.crc32(tag.encode())]))


@dataclass(eq=False)
class Dataset:
    features: np.ndarray
    o: np.ndarray
    p_star: np.ndarray | None = None
    k: int = 2
    provenance: str = ""
    n_pos: int = field(init=False)

    def __post_init__(self):
        self.features = np.ascontiguousarray(self.features, dtype=np.float32)
        self.o = np.ascontiguousarray(self.o, dtype=np.uint8)
        if self.features.ndim != 2:
            raise DataError(f"features must be 2-D, got shape {self.features.shape}")
        n = self.features.shape[0]
        if self.o.shape != (n,):
            raise DataError(f"{self.o.shape[0]} labels for {n} feature rows")
        if np.any(self.o > 1):
            raise DataError("correctness labels must be 0 or 1")
        if not np.isfinite(self.features).all():
            raise DataError("features must be finite")
        if self.p_star is not None:
            self.p_star = np.ascontiguousarray(self.p_star, dtype=np.float32)
            if self.p_star.shape != (n,):
                raise DataError("p_star must have one entry per sample")
            if not ((self.p_star >= 0) & (self.p_star <= 1)).all():
                raise DataError("p_star must lie in [0, 1]")
        if self.k < 1:
            raise DataError(f"class count K must be >= 1, got {self.k}")
        self.n_pos = int(np.count_nonzero(self.o))

    @property
    def n(self) -> int:
        return self.features.shape[0]

    @property
    def d(self) -> int:
        return self.features.shape[1]

    @property
    def n_neg(self) -> int:
        return self.n - self.n_pos

    @property
    def has_p_star(self) -> bool:
        return self.p_star is not None

    @property
    def class_counts(self) -> tuple[int, int]:
        return self.n_pos, self.n_neg

    def subset(self, idx: np.ndarray, provenance: str | None = None) -> Dataset:
        return Dataset(
            self.features[idx],
            self.o[idx],
            None if self.p_star is None else self.p_star[idx],
            k=self.k,
            provenance=self.provenance if provenance is None else provenance,
        )

    def __eq__(self, other) -> bool:
        if not isinstance(other, Dataset):
            return NotImplemented
        if self.k != other.k or self.features.shape != other.features.shape:
            return False
        if self.has_p_star != other.has_p_star:
            return False
        same_p = self.p_star is None or _bits_equal(self.p_star, other.p_star)
        return _bits_equal(self.features, other.features) and bool(
            np.array_equal(self.o, other.o)) and same_p

    def __repr__(self) -> str:
        return (f"Dataset(n={self.n}, d={self.d}, K={self.k}, n_pos={self.n_pos}, "
                f"p_star={self.has_p_star}, provenance={self.provenance!r})")


def _bits_equal(a: np.ndarray, b: np.ndarray) -> bool:
    return a.shape == b.shape and a.tobytes() == b.tobytes()


def _row_dtype(d: int, has_p: bool) -> np.dtype:
    fields = [("o", "u1")]
    if has_p:
        fields.append(("p", "<f4"))
    fields.append(("x", "<f4", (d,)))
    return np.dtype(fields)


def save_dataset(dataset: Dataset, path: str | os.PathLike) -> None:
    flags = FLAG_P_STAR if dataset.has_p_star else 0
    rows = np.zeros(dataset.n, dtype=_row_dtype(dataset.d, dataset.has_p_star))
    rows["o"] = dataset.o
    if dataset.has_p_star:
        rows["p"] = dataset.p_star
    rows["x"] = dataset.features
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, VERSION, dataset.n, dataset.d, dataset.k, flags))
        fh.write(rows.tobytes())


def load_dataset(path: str | os.PathLike) -> Dataset:
    raw = Path(path).read_bytes()
    if len(raw) < 4 or raw[:4] != MAGIC:
        raise MagicError(f"bad magic {raw[:4]!r}, expected {MAGIC!r}", 0)
    if len(raw) < _HEADER.size:
        raise TruncatedFileError(_HEADER.size, len(raw), len(raw))
    _, version, n, d, k, flags = _HEADER.unpack_from(raw)
    if version != VERSION:
        raise DatasetFormatError(f"unsupported version {version}", 4)
    if flags & ~FLAG_P_STAR:
        raise DatasetFormatError(f"unknown flag bits {flags:#x}", 24)
    if d > MAX_DIM or (n > 0 and d == 0):
        raise DimensionOverflowError(f"feature dimension {d} out of range", 16)
    has_p = bool(flags & FLAG_P_STAR)
    dtype = _row_dtype(d, has_p)
    expected = _HEADER.size + n * dtype.itemsize
    if expected > (1 << 62):
        raise DimensionOverflowError(f"n={n} rows of {dtype.itemsize} bytes overflow", 8)
    if len(raw) < expected:
        raise TruncatedFileError(expected, len(raw), len(raw))
    if len(raw) > expected:
        raise DatasetFormatError(f"{len(raw) - expected} trailing bytes", expected)
    rows = np.frombuffer(raw, dtype=dtype, count=n, offset=_HEADER.size)
    bad = np.flatnonzero(rows["o"] > 1)
    if bad.size:
        raise DatasetFormatError(
            f"label {rows['o'][bad[0]]} is not 0/1",
            _HEADER.size + int(bad[0]) * dtype.itemsize)
    try:
        return Dataset(
            rows["x"].copy() if n else np.zeros((0, d), np.float32),
            rows["o"].copy(),
            rows["p"].copy() if has_p else None,
            k=k,
            provenance=str(path),
        )
    except DataError as exc:
        raise DatasetFormatError(str(exc), _HEADER.size) from exc


def load_csv(path: str | os.PathLike, k: int = 2) -> Dataset:
    """Read a ``o,p_star,f0,...,f{d-1}`` CSV; empty p_star cells mean absent."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or header[:2] != ["o", "p_star"]:
            raise DataError(f"{path}: header must start with 'o,p_star'")
        feat_cols = header[2:]
        if feat_cols != [f"f{i}" for i in range(len(feat_cols))]:
            raise DataError(f"{path}: feature columns must be f0..f{{d-1}}")
        o, p, x = [], [], []
        for line_no, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise DataError(f"{path}:{line_no}: expected {len(header)} fields, got {len(row)}")
            try:
                o.append(int(row[0]))
                p.append(float(row[1]) if row[1].strip() else math.nan)
                x.append([float(v) for v in row[2:]])
            except ValueError as exc:
                raise DataError(f"{path}:{line_no}: {exc}") from exc
    p_arr = np.array(p, dtype=np.float64)
    if np.isnan(p_arr).all():
        p_star = None
    elif np.isnan(p_arr).any():
        raise DataError(f"{path}: p_star must be given for all rows or none")
    else:
        p_star = p_arr
    features = np.array(x, dtype=np.float64).reshape(len(o), len(feat_cols))
    if np.any(np.array(o) > 1) or np.any(np.array(o) < 0):
        raise DataError(f"{path}: correctness labels must be 0 or 1")
    return Dataset(features, np.array(o), p_star, k=k, provenance=str(path))


def save_csv(dataset: Dataset, path: str | os.PathLike) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["o", "p_star"] + [f"f{i}" for i in range(dataset.d)])
        for i in range(dataset.n):
            p = "" if dataset.p_star is None else repr(float(dataset.p_star[i]))
            w.writerow([int(dataset.o[i]), p] + [repr(float(v)) for v in dataset.features[i]])


@dataclass(frozen=True)
class SynthConfig:
    d: int = 16
    n: int = 10_000
    imbalance: float = 0.839
    mean_separation: float = 1.5
    sigma: float = 1.0
    seed: int = 0
    k: int = 1000
    p_star_noise: float = 0.05

    def __post_init__(self):
        if self.d < 1:
            raise ValueError("d must be >= 1")
        if self.n < 2:
            raise ValueError("n must be >= 2")
        if not 0 < self.imbalance < 1:
            raise ValueError("imbalance must lie in (0, 1)")
        if self.mean_separation < 0 or not self.sigma > 0:
            raise ValueError("mean_separation must be >= 0 and sigma > 0")


def synth_generate(config: SynthConfig) -> Dataset:
    """Two isotropic Gaussian clouds along the first axis.

    Correct predictions (o=1) sit at +mean_separation/2 on axis 0, incorrect
    ones at -mean_separation/2.  Labels are drawn first, then features.  Both
    classes are present only in expectation.  ``p_star`` is a stand-in for the
    classifier's true-class probability, increasing along axis 0, so that TCP
    has a target; it makes no claim about real classifiers.
    """
    rng = derive_rng(config.seed, "synth")
    o = (rng.random(config.n) < config.imbalance).astype(np.uint8)
    x = rng.normal(0.0, config.sigma, size=(config.n, config.d))
    x[:, 0] += np.where(o == 1, 0.5, -0.5) * config.mean_separation
    noise = rng.normal(0.0, config.p_star_noise, size=config.n)
    p_star = np.clip(1.0 / (1.0 + np.exp(-2.0 * x[:, 0])) + noise, 0.0, 1.0)
    return Dataset(x, o, p_star, k=config.k, provenance=f"synth:{_synth_tag(config)}")


def _synth_tag(c: SynthConfig) -> str:
    return (f"d={c.d},n={c.n},imbalance={c.imbalance!r},sep={c.mean_separation!r},"
            f"sigma={c.sigma!r},seed={c.seed},K={c.k}")


def split(dataset: Dataset, fraction: float, seed: int) -> tuple[Dataset, Dataset]:
    """Seeded permutation then prefix split into (train, eval)."""
    if dataset.n < 2:
        raise DataError("need at least 2 samples to split")
    if not 0 < fraction < 1:
        raise DataError(f"split fraction must lie in (0, 1), got {fraction}")
    n_train = int(round(fraction * dataset.n))
    if n_train <= 0 or n_train >= dataset.n:
        raise DataError(
            f"fraction {fraction} of {dataset.n} samples leaves an empty part")
    perm = derive_rng(seed, "split").permutation(dataset.n)
    return (dataset.subset(perm[:n_train], f"{dataset.provenance}[train]"),
            dataset.subset(perm[n_train:], f"{dataset.provenance}[eval]"))


# --- report writers -------------------------------------------------------

def _dumps(obj) -> str:
    return json.dumps(obj, indent=2, allow_nan=True)


def write_json(path: str | os.PathLike, obj) -> None:
    Path(path).write_text(_dumps(obj) + "\n")


def write_jsonl(path: str | os.PathLike, records: Iterable[dict]) -> None:
    with open(path, "w") as fh:
        for rec in records:
            fh.write(json.dumps(rec) + "\n")


def write_csv(path: str | os.PathLike, header: Sequence[str], rows: Iterable[Sequence]) -> None:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in row])
    Path(path).write_text(buf.getvalue())


def write_curve(path: str | os.PathLike, points: Iterable[tuple[float, float]]) -> None:
    write_csv(path, ["x", "y"], points)
