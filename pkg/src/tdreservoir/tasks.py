"""Delay (short-term memory) and temporal-XOR capacity tasks."""

from __future__ import annotations

import csv
import json
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .config import canonical_json, config_hash
from .readout import TrainingBatch, default_lambda, fit, predict
from .reservoir import ConfigError, Reservoir, ReservoirConfig
from .seeding import substream

__all__ = [
    "CapacityProtocol",
    "TaskReport",
    "gen_binary_sequence",
    "delay_target",
    "xor_target",
    "correlation_r",
    "collect_states",
    "capacity_from_states",
    "run_capacity_task",
    "run_capacity_tasks",
    "write_reports_json",
    "write_reports_csv",
]

KINDS = ("stm", "xor")


@dataclass(frozen=True)
class CapacityProtocol:
    total: int = 15000
    washout: int = 1500
    train: int = 10500
    test: int = 3000
    k_max_stm: int = 10
    k_max_xor: int = 7
    seed: int | None = None  # input-bit seed; None reuses the reservoir seed

    def __post_init__(self):
        for name in ("total", "train", "test", "k_max_stm", "k_max_xor"):
            if getattr(self, name) < 1:
                raise ConfigError(f"protocol {name} must be positive")
        if self.washout < 0:
            raise ConfigError("protocol washout must be non-negative")
        if self.washout + self.train + self.test != self.total:
            raise ConfigError("washout + train + test must equal total")
        if self.test < 2:
            raise ConfigError("test segment needs at least 2 samples")

    def k_max(self, kind: str) -> int:
        return {"stm": self.k_max_stm, "xor": self.k_max_xor}[_kind(kind)]

    @property
    def train_slice(self) -> slice:
        return slice(self.washout, self.washout + self.train)

    @property
    def test_slice(self) -> slice:
        return slice(self.washout + self.train, self.total)

    def to_dict(self) -> dict:
        return {k: getattr(self, k) for k in self.__dataclass_fields__}

    @classmethod
    def scaled(cls, total: int, **kw) -> "CapacityProtocol":
        """Same 10/70/20 split as the default, for shorter runs."""
        washout = total // 10
        test = total // 5
        return cls(total=total, washout=washout, train=total - washout - test, test=test, **kw)


@dataclass
class TaskReport:
    kind: str
    r_squared: dict[int, float]
    capacity: float
    config_hash: str
    seed: int
    ridge_lambda: float
    n_neurons: int
    version: str = __version__
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        if any(not (0.0 <= r <= 1.0) for r in self.r_squared.values()):
            raise ValueError("r^2 values must lie in [0, 1]")
        if not np.isclose(self.capacity, sum(self.r_squared.values()), rtol=1e-12, atol=1e-12):
            raise ValueError("capacity must equal the sum of r^2 values")

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "r_squared": {str(k): v for k, v in sorted(self.r_squared.items())},
            "capacity": self.capacity,
            "config_hash": self.config_hash,
            "seed": self.seed,
            "lambda": self.ridge_lambda,
            "n_neurons": self.n_neurons,
            "version": self.version,
            **({"extra": self.extra} if self.extra else {}),
        }

    def to_json(self) -> str:
        return canonical_json(self.to_dict())

    def csv_rows(self) -> list[tuple]:
        return [(self.kind, self.n_neurons, self.seed, k, r) for k, r in sorted(self.r_squared.items())]


def _kind(kind: str) -> str:
    kind = str(kind).lower()
    if kind not in KINDS:
        raise ValueError(f"unknown task kind {kind!r}; expected one of {KINDS}")
    return kind


def gen_binary_sequence(T: int, seed: int) -> np.ndarray:
    """I.i.d. fair bits from the seed's ``input`` sub-stream."""
    if T <= 0:
        raise ValueError("sequence length must be positive")
    return substream(seed, "input").integers(0, 2, size=int(T)).astype(np.int8)


def _check_k(u, k):
    if int(k) != k or k < 1:
        raise ValueError("delay k must be an integer >= 1")
    return np.asarray(u, dtype=np.float64), int(k)


def delay_target(u, k: int) -> np.ndarray:
    """``d(n) = u(n-k)``; the first ``k`` entries are NaN (undefined)."""
    u, k = _check_k(u, k)
    d = np.full(u.shape, np.nan)
    d[k:] = u[:-k] if k < u.size else u[:0]
    return d


def xor_target(u, k: int) -> np.ndarray:
    """``d(n) = u(n) XOR u(n-k)``; the first ``k`` entries are NaN."""
    u, k = _check_k(u, k)
    d = np.full(u.shape, np.nan)
    if k < u.size:
        d[k:] = np.logical_xor(u[k:] != 0, u[:-k] != 0)
    return d


def correlation_r(d, y) -> float:
    """Pearson correlation; 0.0 (with a warning) if either side is constant."""
    d = np.asarray(d, dtype=np.float64).ravel()
    y = np.asarray(y, dtype=np.float64).ravel()
    if d.size != y.size or d.size < 2:
        raise ValueError("correlation needs two sequences of equal length >= 2")
    dc = d - d.mean()
    yc = y - y.mean()
    den = np.sqrt(np.dot(dc, dc) * np.dot(yc, yc))
    if den == 0.0 or not np.isfinite(den):
        warnings.warn("zero-variance sequence; correlation set to 0", RuntimeWarning, stacklevel=2)
        return 0.0
    return float(np.clip(np.dot(dc, yc) / den, -1.0, 1.0))


def _target(kind, u, k):
    return delay_target(u, k) if kind == "stm" else xor_target(u, k)


def collect_states(config: ReservoirConfig, protocol: CapacityProtocol, backend=None,
                   workers: int = 1) -> tuple[np.ndarray, np.ndarray]:
    """Drive a fresh reservoir with the protocol's input bits; returns (u, X)."""
    seed = config.seed if protocol.seed is None else protocol.seed
    u = gen_binary_sequence(protocol.total, seed)
    X = Reservoir(config, backend=backend, workers=workers).run_sequence(u.astype(np.float64))
    return u, X


def capacity_from_states(kind: str, u, X, protocol: CapacityProtocol, ridge_lambda=None,
                         k_max: int | None = None, shuffle_test: bool = False,
                         seed: int = 0, chash: str = "", n_neurons: int | None = None,
                         segment: str = "test") -> TaskReport:
    """Fit one readout per delay on the train segment and score r^2 on the test segment.

    ``shuffle_test`` permutes the scored targets before scoring (leak check).
    ``segment="train"`` scores on the training segment instead; that is the
    training score used to pick a weight assignment, never a capacity.
    """
    if segment not in ("test", "train"):
        raise ValueError("segment must be 'test' or 'train'")
    kind = _kind(kind)
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    u = np.asarray(u)
    if X.shape[1] != u.size or u.size != protocol.total:
        raise ValueError("state matrix, input and protocol lengths disagree")
    k_max = protocol.k_max(kind) if k_max is None else int(k_max)
    tr, te = protocol.train_slice, protocol.test_slice
    if segment == "train":
        te = tr
    Xtr, Xte = X[:, tr], X[:, te]
    lam = default_lambda(Xtr) if ridge_lambda is None else float(ridge_lambda)
    rng = np.random.default_rng(seed)
    r2 = {}
    for k in range(1, k_max + 1):
        d = _target(kind, u, k)
        dtr, dte = d[tr], d[te]
        ok = np.isfinite(dtr)
        model = fit(TrainingBatch(Xtr[:, ok], dtr[ok]), lam)
        okt = np.isfinite(dte)
        y = predict(model, Xte[:, okt])[0]
        dt = dte[okt]
        if shuffle_test:
            dt = rng.permutation(dt)
        r = correlation_r(dt, y)
        r2[k] = float(min(max(r * r, 0.0), 1.0))
    return TaskReport(kind, r2, float(sum(r2.values())), chash, int(seed), lam,
                      int(n_neurons if n_neurons is not None else X.shape[0]))


def task_hash(kind: str, config: ReservoirConfig, protocol: CapacityProtocol, ridge_lambda) -> str:
    return config_hash({"kind": kind, "reservoir": config.to_dict(),
                        "protocol": protocol.to_dict(), "ridge_lambda": ridge_lambda})


def run_capacity_tasks(config: ReservoirConfig, protocol: CapacityProtocol | None = None,
                       kinds=KINDS, ridge_lambda=None, backend=None,
                       workers: int = 1) -> dict[str, TaskReport]:
    """One reservoir run scored for several task kinds."""
    protocol = protocol or CapacityProtocol()
    u, X = collect_states(config, protocol, backend, workers)
    return {
        kind: capacity_from_states(kind, u, X, protocol, ridge_lambda, seed=config.seed,
                                   chash=task_hash(kind, config, protocol, ridge_lambda),
                                   n_neurons=config.n_neurons)
        for kind in map(_kind, kinds)
    }


def run_capacity_task(kind: str, config: ReservoirConfig, protocol: CapacityProtocol | None = None,
                      ridge_lambda=None, backend=None, workers: int = 1) -> TaskReport:
    return run_capacity_tasks(config, protocol, (kind,), ridge_lambda, backend, workers)[_kind(kind)]


def write_reports_json(path, reports, summary: dict | None = None) -> None:
    doc = {"version": __version__, "reports": [r.to_dict() for r in reports]}
    if summary:
        doc["summary"] = summary
    Path(path).write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")


def write_reports_csv(path, reports) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["kind", "N", "seed", "k", "r2"])
        for rep in reports:
            for row in rep.csv_rows():
                w.writerow([row[0], row[1], row[2], row[3], repr(row[4])])
