"""Behavioral model of the dual-VCO leaky integrate-and-fire neuron.

A neuron is described by three families of lookup curves over its control
voltage ``v_cap`` (volts, kept in [0, 1]):

* leakage: change of ``v_cap`` per micro-step with no input,
* integration: change of ``v_cap`` per received pulse, one curve per 4-bit
  weight word and polarity,
* fire: output frequency of the positive and the negative VCO.

All curves share one uniform grid over [0, 1] V so a single index/fraction
pair serves every lookup in a step.  VCO phases are integer accumulators in
which one unit is one millihertz-step, so integer-Hz frequencies advance
exactly.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

__all__ = [
    "InvalidParamsError",
    "CurveParams",
    "BehavioralCurves",
    "VariationFactors",
    "NeuronState",
    "default_curves",
    "leak_delta",
    "integrate_delta",
    "fire_frequencies",
    "advance_phase",
    "phase_one",
    "freq_to_increment",
    "draw_variation",
    "load_curves",
    "save_curves",
    "N_WORDS",
    "V_MIN",
    "V_MAX",
]

N_WORDS = 16
V_MIN = 0.0
V_MAX = 1.0
# phase units per Hz per step: one unit is one mHz-step
UNITS_PER_HZ = 1000.0
CURVE_HEADER = "vco-curves v1"


class InvalidParamsError(ValueError):
    """Curve parameters or tables violate a model bound."""


def phase_one(micro_dt: float) -> int:
    """Integer size of one VCO cycle for the given step size."""
    return int(round(UNITS_PER_HZ / micro_dt))


def freq_to_increment(f, micro_dt: float = 10e-9):
    """Per-step phase increment for frequency ``f`` (Hz), clamped below one cycle.

    Works on scalars and arrays; the rounding matches the compiled kernel.
    """
    one = phase_one(micro_dt)
    inc = np.floor(np.asarray(f, dtype=np.float64) * UNITS_PER_HZ + 0.5).astype(np.int64)
    inc = np.minimum(inc, one - 1)
    if inc.ndim == 0:
        return int(inc)
    return inc


@dataclass(frozen=True)
class CurveParams:
    """Parameters of the analytic default curves.

    ``f_min`` is a floor under both VCO sigmoids, so a neuron pinned at a rail
    still oscillates and its counters stay bounded (50 counts at 2 MHz).
    Integration magnitude grows as ``((1 + word) / 16) ** word_exponent``;
    an exponent of 2 models charge that grows faster than linearly with
    pulse width.  The defaults are the calibrated set documented in the
    README.
    """

    n_points: int = 256
    micro_dt: float = 10e-9
    v_rest: float = 0.5
    tau_leak: float = 100e-6
    f_max: float = 40e6
    f_min: float = 2e6
    slope: float = 12.0
    pos_center: float = 0.6
    neg_center: float = 0.4
    integ_amp: float = 3e-3
    word_exponent: float = 2.0

    def validate(self) -> None:
        if self.n_points < 2:
            raise InvalidParamsError("n_points must be >= 2")
        if self.micro_dt <= 0:
            raise InvalidParamsError("micro_dt must be positive")
        f_clk = 1.0 / self.micro_dt
        if not 0 < self.f_max < f_clk:
            raise InvalidParamsError(
                f"f_max={self.f_max:g} Hz must be in (0, {f_clk:g}) so each VCO "
                "fires at most once per step"
            )
        if self.tau_leak <= self.micro_dt:
            raise InvalidParamsError("tau_leak must exceed micro_dt")
        if not V_MIN < self.v_rest < V_MAX:
            raise InvalidParamsError("v_rest must lie strictly inside the rails")
        if not 0 <= self.f_min < self.f_max:
            raise InvalidParamsError("f_min must be in [0, f_max)")
        if self.slope < 0:
            raise InvalidParamsError("slope must be >= 0")
        if not 0 < self.integ_amp < 0.25:
            raise InvalidParamsError("integ_amp must be in (0, 0.25) V")
        if self.word_exponent <= 0:
            raise InvalidParamsError("word_exponent must be positive")


def _interp(table: np.ndarray, v):
    """Linear interpolation on the uniform [0, 1] grid.

    The arithmetic (index truncation, then ``a + t*(b - a)``) is mirrored
    exactly by the compiled kernel so both backends agree bit for bit.
    """
    last = table.shape[-1] - 1
    x = np.asarray(v, dtype=np.float64) * float(last)
    k = np.minimum(x.astype(np.int64), last - 1)
    t = x - k
    a = table[..., k]
    return a + t * (table[..., k + 1] - a)


@dataclass(frozen=True, eq=False)
class BehavioralCurves:
    leak: np.ndarray
    fire_pos: np.ndarray
    fire_neg: np.ndarray
    integ_exc: np.ndarray  # (16, n_points), >= 0
    integ_inh: np.ndarray  # (16, n_points), <= 0
    micro_dt: float = 10e-9

    @property
    def n_points(self) -> int:
        return self.leak.shape[0]

    @property
    def v_grid(self) -> np.ndarray:
        return np.linspace(V_MIN, V_MAX, self.n_points)

    def integ_table(self) -> np.ndarray:
        """Stacked (32, n_points) table: rows 0-15 excitatory, 16-31 inhibitory."""
        return np.ascontiguousarray(np.vstack([self.integ_exc, self.integ_inh]))

    def leak_at(self, v):
        return _interp(self.leak, v)

    def fire_pos_at(self, v):
        return _interp(self.fire_pos, v)

    def fire_neg_at(self, v):
        return _interp(self.fire_neg, v)

    def integ_at(self, word: int, excitatory: bool, v):
        tab = self.integ_exc if excitatory else self.integ_inh
        return _interp(tab[word], v)

    def validate(self) -> None:
        """Raise InvalidParamsError unless every curve invariant holds."""
        n = self.n_points
        shapes = {
            "leak": self.leak.shape, "fire_pos": self.fire_pos.shape,
            "fire_neg": self.fire_neg.shape,
        }
        for name, shape in shapes.items():
            if shape != (n,):
                raise InvalidParamsError(f"{name} has shape {shape}, expected ({n},)")
        for name, tab in (("integ_exc", self.integ_exc), ("integ_inh", self.integ_inh)):
            if tab.shape != (N_WORDS, n):
                raise InvalidParamsError(f"{name} has shape {tab.shape}")
        arrays = (self.leak, self.fire_pos, self.fire_neg, self.integ_exc, self.integ_inh)
        if not all(np.all(np.isfinite(a)) for a in arrays):
            raise InvalidParamsError("curve tables contain non-finite values")

        v = self.v_grid
        if abs(float(self.leak_at(0.5))) > 1e-12:
            raise InvalidParamsError("leak curve must vanish at 0.5 V")
        if np.any(self.leak[v < 0.5] <= 0) or np.any(self.leak[v > 0.5] >= 0):
            raise InvalidParamsError("leak curve must pull v_cap toward 0.5 V")
        if np.any(np.diff(self.fire_pos) < 0):
            raise InvalidParamsError("positive VCO curve must be non-decreasing")
        if np.any(np.diff(self.fire_neg) > 0):
            raise InvalidParamsError("negative VCO curve must be non-increasing")
        f_clk = 1.0 / self.micro_dt
        if np.any(self.fire_pos < 0) or np.any(self.fire_neg < 0):
            raise InvalidParamsError("VCO frequencies must be non-negative")
        if np.any(self.fire_pos + self.fire_neg <= 0):
            raise InvalidParamsError("at least one VCO must run at every voltage")
        if max(self.fire_pos.max(), self.fire_neg.max()) >= f_clk:
            raise InvalidParamsError(f"VCO frequency must stay below {f_clk:g} Hz")
        if np.any(self.integ_exc < 0) or np.any(self.integ_inh > 0):
            raise InvalidParamsError("integration curves have the wrong sign")
        if np.any(np.diff(np.abs(self.integ_exc), axis=0) < 0) or np.any(
            np.diff(np.abs(self.integ_inh), axis=0) < 0
        ):
            raise InvalidParamsError("integration magnitude must grow with the weight word")


def default_curves(params: CurveParams | None = None) -> BehavioralCurves:
    """Analytic reconstruction of the leakage, integration and fire curves."""
    p = params or CurveParams()
    p.validate()
    n = p.n_points
    v = np.linspace(V_MIN, V_MAX, n)

    # Built antisymmetric about the grid midpoint so the rest point interpolates to 0.
    leak = -(p.micro_dt / p.tau_leak) * (v - p.v_rest)
    if p.v_rest == 0.5:
        half = n // 2
        leak[n - half:] = -leak[:half][::-1]
        if n % 2:
            leak[half] = 0.0

    span = p.f_max - p.f_min
    fire_pos = p.f_min + span / (1.0 + np.exp(-p.slope * (v - p.pos_center)))
    fire_neg = p.f_min + span / (1.0 + np.exp(p.slope * (v - p.neg_center)))

    words = np.arange(N_WORDS, dtype=np.float64)[:, None]
    shape = 4.0 * v * (1.0 - v)
    mag = p.integ_amp * ((1.0 + words) / N_WORDS) ** p.word_exponent * shape[None, :]
    integ_exc = np.minimum(mag, V_MAX - v[None, :])
    integ_inh = np.maximum(-mag, V_MIN - v[None, :])

    curves = BehavioralCurves(
        leak=leak,
        fire_pos=fire_pos,
        fire_neg=fire_neg,
        integ_exc=np.ascontiguousarray(integ_exc),
        integ_inh=np.ascontiguousarray(integ_inh),
        micro_dt=p.micro_dt,
    )
    curves.validate()
    return curves


@dataclass(frozen=True)
class VariationFactors:
    leak_scale: float = 1.0
    integ_scale: float = 1.0
    fire_scale: float = 1.0


UNIT_VARIATION = VariationFactors()


def draw_variation(rng: np.random.Generator, n: int, std: float, floor: float = 0.05) -> np.ndarray:
    """Draw (n, 3) multiplicative factors ~ N(1, std), redrawing values <= floor.

    Columns are leak, integration and fire scales.
    """
    if std < 0:
        raise InvalidParamsError("variation std must be >= 0")
    out = np.ones((n, 3))
    if std == 0 or n == 0:
        return out
    out = rng.normal(1.0, std, size=(n, 3))
    bad = out <= floor
    while bad.any():
        out[bad] = rng.normal(1.0, std, size=int(bad.sum()))
        bad = out <= floor
    return out


def leak_delta(v, curves: BehavioralCurves, factors: VariationFactors = UNIT_VARIATION):
    """Leakage change of v_cap over one micro-step (caller clamps)."""
    return factors.leak_scale * curves.leak_at(v)


def integrate_delta(v, word: int, excitatory: bool, curves: BehavioralCurves,
                    factors: VariationFactors = UNIT_VARIATION):
    """Change of v_cap caused by one received pulse of the given weight word."""
    if not 0 <= word < N_WORDS:
        raise ValueError(f"weight word {word} outside [0, {N_WORDS - 1}]")
    return factors.integ_scale * curves.integ_at(word, excitatory, v)


def fire_frequencies(v, curves: BehavioralCurves, factors: VariationFactors = UNIT_VARIATION,
                     clamp: bool = True):
    """(f_pos, f_neg) in Hz at control voltage v.

    With ``clamp`` both are held strictly below the micro-step clock.
    """
    f_pos = factors.fire_scale * curves.fire_pos_at(v)
    f_neg = factors.fire_scale * curves.fire_neg_at(v)
    if clamp:
        f_top = np.nextafter(1.0 / curves.micro_dt, 0.0)
        f_pos = np.minimum(f_pos, f_top)
        f_neg = np.minimum(f_neg, f_top)
    return f_pos, f_neg


@dataclass(frozen=True)
class NeuronState:
    """Control voltage plus integer VCO phase accumulators of one neuron."""

    v_cap: float = 0.5
    phase_pos: int = 0
    phase_neg: int = 0
    micro_dt: float = field(default=10e-9, compare=False)

    def __post_init__(self):
        if not V_MIN <= self.v_cap <= V_MAX:
            raise ValueError(f"v_cap={self.v_cap} outside [{V_MIN}, {V_MAX}] V")

    @property
    def cycles_pos(self) -> float:
        return self.phase_pos / phase_one(self.micro_dt)

    @property
    def cycles_neg(self) -> float:
        return self.phase_neg / phase_one(self.micro_dt)


def advance_phase(state: NeuronState, f_pos: float, f_neg: float,
                  dt: float | None = None) -> tuple[NeuronState, int, int]:
    """Advance both VCO phases by one step; returns (state', edges_pos, edges_neg)."""
    dt = state.micro_dt if dt is None else dt
    one = phase_one(dt)
    if f_pos * dt >= 1 or f_neg * dt >= 1:
        raise ValueError("a VCO may fire at most once per step (f * dt < 1)")
    p = state.phase_pos + freq_to_increment(f_pos, dt)
    n = state.phase_neg + freq_to_increment(f_neg, dt)
    e_pos = int(p >= one)
    e_neg = int(n >= one)
    new = replace(state, phase_pos=p - one * e_pos, phase_neg=n - one * e_neg, micro_dt=dt)
    return new, e_pos, e_neg


def save_curves(curves: BehavioralCurves, path) -> None:
    """Write curves as plain text.

    Layout: header line, ``n`` rows ``v leak f_pos f_neg``, then 16*n rows
    ``v dv`` for the excitatory family (word-major) and 16*n for the
    inhibitory family.
    """
    v = curves.v_grid.tolist()
    lines = [CURVE_HEADER]
    for row in zip(v, curves.leak.tolist(), curves.fire_pos.tolist(), curves.fire_neg.tolist()):
        lines.append(" ".join(map(repr, row)))
    for fam in (curves.integ_exc, curves.integ_inh):
        for w in range(N_WORDS):
            lines.extend(f"{a!r} {b!r}" for a, b in zip(v, fam[w].tolist()))
    Path(path).write_text("\n".join(lines) + "\n")


def load_curves(path, n_points: int = 256, micro_dt: float = 10e-9) -> BehavioralCurves:
    """Read a curve file written by :func:`save_curves` (or measured silicon data)."""
    text = Path(path).read_text().splitlines()
    if not text or text[0].strip() != CURVE_HEADER:
        raise InvalidParamsError(f"{path}: missing '{CURVE_HEADER}' header")
    rows = [ln.split() for ln in text[1:] if ln.strip()]
    expected = n_points + 2 * N_WORDS * n_points
    if len(rows) != expected:
        raise InvalidParamsError(f"{path}: expected {expected} data rows, got {len(rows)}")
    try:
        head = np.array(rows[:n_points], dtype=np.float64)
        integ = np.array(rows[n_points:], dtype=np.float64)
    except ValueError as exc:
        raise InvalidParamsError(f"{path}: malformed row ({exc})") from None
    if head.shape[1] != 4 or integ.shape[1] != 2:
        raise InvalidParamsError(f"{path}: wrong column count")
    grid = np.linspace(V_MIN, V_MAX, n_points)
    if not np.allclose(head[:, 0], grid, atol=1e-9):
        raise InvalidParamsError(f"{path}: voltage column must be a uniform [0, 1] grid")
    fams = integ[:, 1].reshape(2, N_WORDS, n_points)
    curves = BehavioralCurves(
        leak=head[:, 1].copy(),
        fire_pos=head[:, 2].copy(),
        fire_neg=head[:, 3].copy(),
        integ_exc=np.ascontiguousarray(fams[0]),
        integ_inh=np.ascontiguousarray(fams[1]),
        micro_dt=micro_dt,
    )
    curves.validate()
    return curves
