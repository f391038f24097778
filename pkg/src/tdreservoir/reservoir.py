"""2-D grid reservoir of dual-VCO neurons and its 10 ns stepping loop.

Each neuron talks only to its up/down/left/right neighbors, and only its
positive VCO drives them.  Neighbor edges are consumed one micro-step late
(double buffering), which makes a step independent of evaluation order and
therefore of the number of worker threads.
"""

from __future__ import annotations

import csv
import logging
import warnings
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import _engine
from .counter import STALL_LIMIT, CounterState
from .neuron import (
    BehavioralCurves,
    CurveParams,
    NeuronState,
    UNITS_PER_HZ,
    VariationFactors,
    default_curves,
    draw_variation,
    load_curves,
    phase_one,
)
from .seeding import substream
from .weighting import SIGMA_MAX, WeightAssignment, WeightWord, quantize_weights

__all__ = [
    "ConfigError",
    "GridTopology",
    "ReservoirConfig",
    "Reservoir",
    "build_reservoir",
    "input_frequency",
    "INPUT_FULL_SCALE",
]

log = logging.getLogger(__name__)

INPUT_FULL_SCALE = 2e6  # Hz for a normalized input of 1
# neighbor slot order; fixes the summation order of incoming pulses
_OFFSETS = ((-1, 0), (1, 0), (0, -1), (0, 1))


class ConfigError(ValueError):
    pass


def input_frequency(u, full_scale: float = INPUT_FULL_SCALE):
    """Pulse-train frequency (Hz) for normalized input ``u`` in [0, 1]."""
    arr = np.asarray(u, dtype=np.float64)
    if np.any(~np.isfinite(arr)) or np.any(arr < 0.0) or np.any(arr > 1.0):
        raise ValueError("input must be normalized to [0, 1]")
    f = arr * full_scale
    return float(f) if f.ndim == 0 else f


@dataclass(frozen=True)
class GridTopology:
    rows: int = 10
    cols: int = 10
    boundary: str = "open"

    def __post_init__(self):
        if self.rows < 1 or self.cols < 1:
            raise ConfigError("grid dimensions must be positive")
        if self.boundary not in ("open", "toroidal"):
            raise ConfigError(f"boundary must be 'open' or 'toroidal', not {self.boundary!r}")

    @property
    def size(self) -> int:
        return self.rows * self.cols

    def site(self, i: int) -> tuple[int, int]:
        return divmod(i, self.cols)

    def neighbor_slots(self) -> np.ndarray:
        """(N, 4) source index per slot (up, down, left, right), -1 where absent."""
        n = self.size
        nbr = np.full((n, 4), -1, dtype=np.int64)
        for i in range(n):
            r, c = self.site(i)
            seen = set()
            for s, (dr, dc) in enumerate(_OFFSETS):
                rr, cc = r + dr, c + dc
                if self.boundary == "toroidal":
                    rr %= self.rows
                    cc %= self.cols
                elif not (0 <= rr < self.rows and 0 <= cc < self.cols):
                    continue
                j = rr * self.cols + cc
                if j == i or j in seen:
                    continue
                seen.add(j)
                nbr[i, s] = j
        return nbr


@dataclass(frozen=True)
class ReservoirConfig:
    topology: GridTopology = field(default_factory=GridTopology)
    seed: int = 0
    variation_std: float = 0.0
    variation_seed: int | None = None
    curve_params: CurveParams = field(default_factory=CurveParams)
    curve_file: str | None = None
    input_word: int = 15
    micro_dt: float = 10e-9
    input_step: float = 30e-6
    single_vco_mode: bool = False
    sigma_max: float = SIGMA_MAX
    n_channels: int = 1
    input_full_scale: float = INPUT_FULL_SCALE

    def __post_init__(self):
        if not 0 <= self.input_word <= 15:
            raise ConfigError("input_word must be in [0, 15]")
        if self.micro_dt <= 0 or self.input_step <= 0:
            raise ConfigError("time steps must be positive")
        ratio = self.input_step / self.micro_dt
        if abs(ratio - round(ratio)) > 1e-6 * ratio or round(ratio) < 1:
            raise ConfigError("input_step must be an integer multiple of micro_dt")
        if self.variation_std < 0:
            raise ConfigError("variation_std must be >= 0")
        if self.n_channels < 1:
            raise ConfigError("need at least one input channel")
        if self.sigma_max <= 0:
            raise ConfigError("sigma_max must be positive")
        if not 0 < self.input_full_scale * self.micro_dt < 1:
            raise ConfigError("input full-scale frequency must stay below the clock")
        if abs(self.curve_params.micro_dt - self.micro_dt) > 1e-18:
            raise ConfigError("curve_params.micro_dt must equal micro_dt")

    @property
    def n_micro(self) -> int:
        return int(round(self.input_step / self.micro_dt))

    @property
    def n_neurons(self) -> int:
        return self.topology.size

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "ReservoirConfig":
        d = dict(d)
        if "topology" in d and isinstance(d["topology"], dict):
            d["topology"] = GridTopology(**d["topology"])
        if "curve_params" in d and isinstance(d["curve_params"], dict):
            d["curve_params"] = CurveParams(**d["curve_params"])
        return cls(**d)


class Reservoir:
    """Grid of neurons with counters, weights and variation factors.

    ``backend`` picks the stepping kernel ("compiled" or "python");
    ``workers`` is the thread count used by the compiled kernel.  Neither
    changes the results.
    """

    def __init__(self, config: ReservoirConfig, backend: str | None = None, workers: int = 1):
        self.config = config
        self.backend = backend or _engine.DEFAULT_BACKEND
        self._run = _engine.get_backend(self.backend)
        self.workers = int(workers)
        topo = config.topology
        n = topo.size

        if config.curve_file:
            curves = load_curves(config.curve_file, config.curve_params.n_points, config.micro_dt)
        else:
            curves = default_curves(config.curve_params)
        self.curves: BehavioralCurves = curves
        self._leak = np.ascontiguousarray(curves.leak, dtype=np.float64)
        self._fpos = np.ascontiguousarray(curves.fire_pos, dtype=np.float64)
        self._fneg = np.ascontiguousarray(curves.fire_neg, dtype=np.float64)
        self._integ = curves.integ_table()

        self.nbr = topo.neighbor_slots()
        valid = self.nbr >= 0
        g = substream(config.seed, "weights").standard_normal(int(valid.sum()))
        words, exc = quantize_weights(g, config.sigma_max)
        rows = np.where(exc, words, words + 16)
        self.nbr_row = np.zeros_like(self.nbr)
        self.nbr_row[valid] = rows  # row-major over (sink, slot)
        # kernel form: absent slots read edge slot N, which never fires
        self._nbr_k = np.where(valid, self.nbr, n).astype(np.int64)
        self._weights_g = g

        vseed = config.seed if config.variation_seed is None else config.variation_seed
        self.factors = draw_variation(substream(vseed, "variation"), n, config.variation_std)
        self._leak_s = np.ascontiguousarray(self.factors[:, 0])
        self._integ_s = np.ascontiguousarray(self.factors[:, 1])
        self._fire_s = np.ascontiguousarray(self.factors[:, 2])

        self.chan = (np.arange(n) % config.n_channels).astype(np.int64)
        self.input_row = WeightWord(config.input_word).table_row
        self._one = phase_one(config.micro_dt)
        self._inc_per_hz = UNITS_PER_HZ
        self.reset()

    # -- state ---------------------------------------------------------
    @property
    def n_neurons(self) -> int:
        return self.config.n_neurons

    def reset(self, v0=0.5) -> None:
        """Rest state: v_cap = v0, phases 0, counters 0, no pending edges."""
        n = self.n_neurons
        self.v = np.empty(n, dtype=np.float64)
        self.v[:] = v0
        if np.any(self.v < 0) or np.any(self.v > 1):
            raise ValueError("initial v_cap outside [0, 1] V")
        self.ph_p = np.zeros(n, dtype=np.int64)
        self.ph_n = np.zeros(n, dtype=np.int64)
        self.cint_p = np.zeros(n, dtype=np.int64)
        self.cext_p = np.zeros(n, dtype=np.int64)
        self.cint_n = np.zeros(n, dtype=np.int64)
        self.cext_n = np.zeros(n, dtype=np.int64)
        self.edges = np.zeros((2, n + 1), dtype=np.uint8)
        self.in_phase = np.zeros(self.config.n_channels, dtype=np.int64)
        self.steps = 0

    def neuron_state(self, i: int) -> NeuronState:
        return NeuronState(float(self.v[i]), int(self.ph_p[i]), int(self.ph_n[i]), self.config.micro_dt)

    def counters(self, i: int) -> tuple[CounterState, CounterState]:
        return (CounterState(int(self.cint_p[i]), int(self.cext_p[i])),
                CounterState(int(self.cint_n[i]), int(self.cext_n[i])))

    def variation(self, i: int) -> VariationFactors:
        return VariationFactors(*map(float, self.factors[i]))

    def last_edges(self) -> np.ndarray:
        """Positive-VCO edges produced by the most recent micro-step."""
        return self.edges[(self.steps - 1) & 1, :-1].copy()

    def sample(self) -> np.ndarray:
        if self.config.single_vco_mode:
            return -self.cext_p.copy()
        return self.cext_n - self.cext_p

    # -- weights ---------------------------------------------------------
    def weight_assignment(self) -> WeightAssignment:
        topo = self.config.topology
        words = {}
        for i in range(self.n_neurons):
            for s in range(4):
                j = self.nbr[i, s]
                if j < 0:
                    continue
                row = int(self.nbr_row[i, s])
                w = WeightWord(row % 16, "excitatory" if row < 16 else "inhibitory")
                words[(topo.site(int(j)), topo.site(i))] = w
        return WeightAssignment(words=words, rng_seed=self.config.seed)

    @property
    def n_connections(self) -> int:
        return int((self.nbr >= 0).sum())

    # -- stepping --------------------------------------------------------
    def _increments(self, freqs: np.ndarray) -> np.ndarray:
        freqs = np.asarray(freqs, dtype=np.float64)
        if np.any(freqs < 0) or np.any(freqs * self.config.micro_dt >= 1.0):
            raise ValueError("input frequencies must be in [0, clock)")
        return np.floor(freqs * self._inc_per_hz + 0.5).astype(np.int64)

    def _advance(self, inc: np.ndarray, n_micro: int) -> np.ndarray:
        inc = np.ascontiguousarray(inc, dtype=np.int64)
        out = np.zeros((inc.shape[0], self.n_neurons), dtype=np.int64)
        maxc = self._run(
            self.v, self.ph_p, self.ph_n, self.cint_p, self.cext_p, self.cint_n, self.cext_n,
            self.edges, self.in_phase, self._leak, self._fpos, self._fneg, self._integ,
            self._leak_s, self._integ_s, self._fire_s, self._nbr_k, self.nbr_row, self.chan,
            self.input_row, inc, n_micro, self.steps, self._one, self._inc_per_hz,
            bool(self.config.single_vco_mode), self.workers, out,
        )
        self.steps += inc.shape[0] * n_micro
        if maxc > STALL_LIMIT:
            warnings.warn(f"a counter ran {maxc} clocks without a VCO edge (stalled VCO?)",
                          RuntimeWarning, stacklevel=3)
        return out

    def _channel_freqs(self, u) -> np.ndarray:
        u = np.atleast_1d(np.asarray(u, dtype=np.float64))
        if u.shape[-1] != self.config.n_channels:
            raise ValueError(f"expected {self.config.n_channels} input channels, got {u.shape[-1]}")
        return input_frequency(u, self.config.input_full_scale)

    def micro_step(self, input_freqs) -> None:
        """One 10 ns step with per-channel input frequencies in Hz."""
        freqs = np.atleast_1d(np.asarray(input_freqs, dtype=np.float64))
        if freqs.shape != (self.config.n_channels,):
            raise ValueError("one frequency per input channel expected")
        self._advance(self._increments(freqs)[None, :], 1)

    def run_input_step(self, u) -> np.ndarray:
        """Hold input ``u`` for one input step; return the final-micro-step sample."""
        inc = self._increments(self._channel_freqs(u))
        return self._advance(inc[None, :], self.config.n_micro)[0]

    def run_sequence(self, U) -> np.ndarray:
        """Drive with a (T, channels) input matrix; returns X of shape (N, T)."""
        U = np.asarray(U, dtype=np.float64)
        if U.ndim == 1:
            U = U[:, None]
        if U.shape[0] == 0:
            return np.zeros((self.n_neurons, 0), dtype=np.int64)
        inc = self._increments(self._channel_freqs(U))
        return self._advance(inc, self.config.n_micro).T

    def run_sequence_counts(self, U) -> tuple[np.ndarray, np.ndarray]:
        """Like :meth:`run_sequence` but returns the (c_n, c_p) latches, each (N, T)."""
        U = np.asarray(U, dtype=np.float64)
        if U.ndim == 1:
            U = U[:, None]
        T = U.shape[0]
        cn = np.zeros((self.n_neurons, T), dtype=np.int64)
        cp = np.zeros((self.n_neurons, T), dtype=np.int64)
        for t in range(T):
            self.run_input_step(U[t])
            cn[:, t] = 0 if self.config.single_vco_mode else self.cext_n
            cp[:, t] = self.cext_p
        return cn, cp


def build_reservoir(config: ReservoirConfig, backend: str | None = None, workers: int = 1) -> Reservoir:
    return Reservoir(config, backend=backend, workers=workers)


def write_state_dump(path, c_n: np.ndarray, c_p: np.ndarray) -> None:
    """Long-form CSV ``step, neuron_index, c_n, c_p, c`` for external embedding."""
    n, T = c_n.shape
    with open(Path(path), "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["step", "neuron_index", "c_n", "c_p", "c"])
        for t in range(T):
            for i in range(n):
                w.writerow([t, i, int(c_n[i, t]), int(c_p[i, t]), int(c_n[i, t] - c_p[i, t])])
