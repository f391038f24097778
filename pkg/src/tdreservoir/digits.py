"""Spoken-digit classification on precomputed cochleagram features.

Each instance is a 78-channel x 48-frame matrix.  Frames 10..39 are kept and
fed one per input step, channel ``c`` driving every neuron ``i`` with
``i % 78 == c``.  A 10-output readout is trained per fold against +1/-1
targets.  By default an instance is labelled by the argmax of its
time-averaged outputs (``decision="mean"``); ``decision="last"`` uses the
final step only.  The reservoir is reset before every instance unless
``reset_between=False``, in which case state carries over in dataset order.
"""

from __future__ import annotations

import csv
import json
import warnings
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import __version__
from .config import config_hash
from .readout import TrainingBatch, fit, predict
from .reservoir import Reservoir, ReservoirConfig
from .seeding import substream

__all__ = [
    "N_CHANNELS",
    "N_FRAMES",
    "N_CLASSES",
    "TRIM_START",
    "TRIM_LEN",
    "DigitInstance",
    "ClassifierReport",
    "MalformedFileError",
    "UnknownLabelError",
    "DegenerateLabelError",
    "normalize",
    "load_instance",
    "load_dataset",
    "save_instance",
    "save_dataset",
    "trim",
    "encode_targets",
    "make_folds",
    "reservoir_states",
    "classify_states",
    "classify_run",
    "baseline_linear",
    "synthetic_digits",
]

N_CHANNELS = 78
N_FRAMES = 48
N_CLASSES = 10
TRIM_START = 10
TRIM_LEN = 30
DECISIONS = ("mean", "last")


class MalformedFileError(ValueError):
    pass


class UnknownLabelError(ValueError):
    pass


class DegenerateLabelError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class DigitInstance:
    features: np.ndarray  # (78, 48)
    label: int
    name: str = ""

    def __post_init__(self):
        f = np.asarray(self.features, dtype=np.float64)
        if f.shape != (N_CHANNELS, N_FRAMES):
            raise MalformedFileError(f"features must be {N_CHANNELS}x{N_FRAMES}, got {f.shape}")
        if not np.isfinite(f).all():
            raise MalformedFileError("features contain non-finite values")
        if not (isinstance(self.label, (int, np.integer)) and 0 <= self.label < N_CLASSES):
            raise UnknownLabelError(f"label {self.label!r} outside 0..{N_CLASSES - 1}")
        object.__setattr__(self, "features", f)
        object.__setattr__(self, "label", int(self.label))


@dataclass
class ClassifierReport:
    fold_accuracy: list[float]
    confusion: np.ndarray  # rows: true label, columns: predicted
    method: str = "reservoir"
    config_hash: str = ""
    seed: int = 0
    ridge_lambda: list[float] = field(default_factory=list)
    version: str = __version__
    protocol: dict = field(default_factory=dict)

    @property
    def mean_accuracy(self) -> float:
        return float(np.mean(self.fold_accuracy)) if self.fold_accuracy else 0.0

    @property
    def pooled_accuracy(self) -> float:
        total = self.confusion.sum()
        return float(np.trace(self.confusion) / total) if total else 0.0

    def to_dict(self) -> dict:
        return {
            "method": self.method,
            "fold_accuracy": list(map(float, self.fold_accuracy)),
            "mean_accuracy": self.mean_accuracy,
            "confusion": self.confusion.astype(int).tolist(),
            "config_hash": self.config_hash,
            "seed": self.seed,
            "lambda": list(map(float, self.ridge_lambda)),
            "version": self.version,
            "protocol": dict(self.protocol),
        }

    def write_json(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n")

    def write_confusion_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["true\\pred"] + list(range(N_CLASSES)))
            for i, row in enumerate(self.confusion.astype(int)):
                w.writerow([i] + row.tolist())


# -- ingestion -----------------------------------------------------------

def normalize(features: np.ndarray, name: str = "") -> np.ndarray:
    """Min-max scale to [0, 1]; a constant matrix becomes all zeros."""
    f = np.asarray(features, dtype=np.float64)
    lo, hi = f.min(), f.max()
    if hi == lo:
        warnings.warn(f"constant feature matrix {name}; normalized to zeros", RuntimeWarning, stacklevel=2)
        return np.zeros_like(f)
    return (f - lo) / (hi - lo)


def _parse(text: str, name: str) -> DigitInstance:
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines:
        raise MalformedFileError(f"{name}: empty file")
    head = lines[0].split()
    if len(head) != 2 or head[0] != "digit":
        raise MalformedFileError(f"{name}: first line must be 'digit <label>'")
    try:
        label = int(head[1])
    except ValueError as exc:
        raise UnknownLabelError(f"{name}: label {head[1]!r} is not an integer") from exc
    if not 0 <= label < N_CLASSES:
        raise UnknownLabelError(f"{name}: label {label} outside 0..{N_CLASSES - 1}")
    rows = lines[1:]
    if len(rows) != N_CHANNELS:
        raise MalformedFileError(f"{name}: expected {N_CHANNELS} rows, found {len(rows)}")
    try:
        data = np.array([[float(x) for x in r.split()] for r in rows], dtype=np.float64)
    except ValueError as exc:
        raise MalformedFileError(f"{name}: unparsable or ragged rows ({exc})") from exc
    if data.ndim != 2 or data.shape[1] != N_FRAMES:
        raise MalformedFileError(f"{name}: every row needs {N_FRAMES} values")
    if not np.isfinite(data).all():
        raise MalformedFileError(f"{name}: non-finite value")
    return DigitInstance(normalize(data, name), label, name)


def load_instance(path) -> DigitInstance:
    p = Path(path)
    return _parse(p.read_text(), p.name)


def load_dataset(path) -> list[DigitInstance]:
    """Every regular file in ``path`` (sorted by name) as a normalized instance."""
    d = Path(path)
    if not d.is_dir():
        raise FileNotFoundError(f"dataset directory {d} not found")
    files = sorted(p for p in d.iterdir() if p.is_file() and not p.name.startswith("."))
    if not files:
        raise MalformedFileError(f"{d}: no feature files")
    return [load_instance(p) for p in files]


def save_instance(path, inst: DigitInstance) -> None:
    rows = [" ".join(f"{x:.6g}" for x in r) for r in inst.features]
    Path(path).write_text(f"digit {inst.label}\n" + "\n".join(rows) + "\n")


def save_dataset(directory, instances) -> list[Path]:
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    paths = []
    for i, inst in enumerate(instances):
        p = d / f"{i:04d}_d{inst.label}.txt"
        save_instance(p, inst)
        paths.append(p)
    return paths


# -- protocol pieces -----------------------------------------------------

def trim(features) -> np.ndarray:
    """Keep frames 10..39 of a 48-frame matrix."""
    f = features.features if isinstance(features, DigitInstance) else np.asarray(features)
    if f.ndim != 2 or f.shape[1] != N_FRAMES:
        raise ValueError(f"trim expects {N_FRAMES} columns, got shape {f.shape}")
    return f[:, TRIM_START:TRIM_START + TRIM_LEN]


def encode_targets(label: int) -> np.ndarray:
    if not (isinstance(label, (int, np.integer)) and 0 <= label < N_CLASSES):
        raise UnknownLabelError(f"label {label!r} outside 0..{N_CLASSES - 1}")
    t = -np.ones(N_CLASSES)
    t[label] = 1.0
    return t


def make_folds(labels, n_folds: int = 5, seed: int = 0) -> list[np.ndarray]:
    """Stratified disjoint folds; each index appears in exactly one test fold."""
    labels = np.asarray(labels)
    if n_folds < 2:
        raise ValueError("need at least 2 folds")
    rng = substream(seed, "folds")
    buckets = [[] for _ in range(n_folds)]
    offset = 0
    for c in np.unique(labels):
        idx = rng.permutation(np.flatnonzero(labels == c))
        for j, i in enumerate(idx):
            buckets[(j + offset) % n_folds].append(int(i))
        offset += len(idx)
    return [np.array(sorted(b), dtype=np.int64) for b in buckets]


def _check_plan(labels: np.ndarray, folds) -> list[np.ndarray]:
    if len(np.unique(labels)) < 2:
        raise DegenerateLabelError("dataset contains a single class")
    n = labels.size
    seen = np.zeros(n, dtype=np.int64)
    out = []
    for f in folds:
        f = np.asarray(f, dtype=np.int64)
        if f.size == 0:
            raise ValueError("empty fold in fold plan")
        if f.min() < 0 or f.max() >= n:
            raise IndexError("fold index out of range")
        seen[f] += 1
        out.append(f)
    if np.any(seen > 1):
        raise ValueError("folds are not disjoint")
    return out


def reservoir_states(instances, config: ReservoirConfig, backend=None, workers: int = 1,
                     reset_between: bool = True) -> list[np.ndarray]:
    """Per-instance (N, 30) state matrices."""
    cfg = config if config.n_channels == N_CHANNELS else replace(config, n_channels=N_CHANNELS)
    res = Reservoir(cfg, backend=backend, workers=workers)
    out = []
    for inst in instances:
        if reset_between:
            res.reset()
        out.append(res.run_sequence(trim(inst).T).astype(np.float64))
    return out


def _decide(y: np.ndarray, decision: str) -> int:
    return int(np.argmax(y.mean(axis=1) if decision == "mean" else y[:, -1]))


def classify_states(states, labels, folds, ridge_lambda=None, augment_bias: bool = True,
                    method: str = "reservoir", chash: str = "", seed: int = 0,
                    decision: str = "mean") -> ClassifierReport:
    """Per-fold readout training and per-instance argmax decisions."""
    if decision not in DECISIONS:
        raise ValueError(f"decision must be one of {DECISIONS}")
    labels = np.asarray(labels, dtype=np.int64)
    folds = _check_plan(labels, folds)
    confusion = np.zeros((N_CLASSES, N_CLASSES), dtype=np.int64)
    accs, lams = [], []
    for test in folds:
        train = np.setdiff1d(np.arange(labels.size), test)
        if train.size == 0:
            raise ValueError("fold leaves no training instances")
        X = np.concatenate([states[i] for i in train], axis=1)
        D = np.concatenate([np.repeat(encode_targets(labels[i])[:, None], states[i].shape[1], axis=1)
                            for i in train], axis=1)
        model = fit(TrainingBatch(X, D), ridge_lambda, augment_bias=augment_bias)
        lams.append(model.ridge_lambda)
        correct = 0
        for i in test:
            pred = _decide(predict(model, states[i]), decision)
            confusion[labels[i], pred] += 1
            correct += pred == labels[i]
        accs.append(correct / test.size)
    return ClassifierReport(accs, confusion, method, chash, seed, lams,
                            protocol={"decision": decision, "n_folds": len(folds)})


def classify_run(instances, config: ReservoirConfig, folds=None, ridge_lambda=None,
                 backend=None, workers: int = 1, decision: str = "mean",
                 reset_between: bool = True) -> ClassifierReport:
    labels = np.array([inst.label for inst in instances])
    if folds is None:
        folds = make_folds(labels, 5, config.seed)
    _check_plan(labels, folds)
    states = reservoir_states(instances, config, backend, workers, reset_between)
    chash = config_hash({"method": "reservoir", "reservoir": config.to_dict(), "ridge_lambda": ridge_lambda,
                         "decision": decision, "reset_between": reset_between})
    rep = classify_states(states, labels, folds, ridge_lambda, True, "reservoir", chash, config.seed, decision)
    rep.protocol["reset_between"] = reset_between
    return rep


def baseline_linear(instances, folds=None, ridge_lambda=None, seed: int = 0,
                    decision: str = "mean") -> ClassifierReport:
    """Same protocol with the raw trimmed feature column as the state vector."""
    labels = np.array([inst.label for inst in instances])
    if folds is None:
        folds = make_folds(labels, 5, seed)
    states = [trim(inst).astype(np.float64) for inst in instances]
    chash = config_hash({"method": "baseline_linear", "ridge_lambda": ridge_lambda, "decision": decision})
    return classify_states(states, labels, folds, ridge_lambda, True, "baseline_linear", chash, seed, decision)


# -- synthetic set -------------------------------------------------------

_BANDS = ((4, 16), (22, 36), (42, 56), (62, 76))
# Ten orderings of the same four bands: every class has the same mix of
# spectral content, so only the temporal order tells them apart.
_ORDERS = (
    (0, 1, 2, 3), (3, 2, 1, 0), (1, 3, 0, 2), (2, 0, 3, 1), (0, 2, 1, 3),
    (3, 1, 2, 0), (1, 0, 3, 2), (2, 3, 0, 1), (0, 3, 2, 1), (1, 2, 0, 3),
)


def synthetic_digits(n_per_class: int = 50, seed: int = 0, noise: float = 0.08) -> list[DigitInstance]:
    """Seeded 10-class cochleagram-like set.

    Each instance sweeps four frequency bands in a class-specific order over
    the kept frames (segment boundaries jitter by one frame), with random
    band gains and additive noise.  Frames outside the kept window hold
    low-level noise only.
    """
    if n_per_class < 1:
        raise ValueError("n_per_class must be positive")
    rng = substream(seed, "synthetic")
    ch = np.arange(N_CHANNELS)[:, None]
    out = []
    for label in range(N_CLASSES):
        order = _ORDERS[label]
        for _ in range(n_per_class):
            f = rng.normal(0.0, noise, (N_CHANNELS, N_FRAMES)) + 0.1
            bounds = np.array([0, 8, 15, 23, TRIM_LEN]) + np.r_[0, rng.integers(-1, 2, 3), 0]
            for seg, band in enumerate(order):
                lo, hi = _BANDS[band]
                centre, width = (lo + hi) / 2, (hi - lo) / 2
                profile = np.exp(-0.5 * ((ch - centre) / (0.6 * width)) ** 2)
                a, b = TRIM_START + bounds[seg], TRIM_START + bounds[seg + 1]
                gain = rng.uniform(0.7, 1.0)
                f[:, a:b] += gain * profile
            out.append(DigitInstance(normalize(np.clip(f, 0.0, None)), label, f"synthetic-{label}"))
    return out
