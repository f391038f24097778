"""Period counter that reads a VCO out against the 100 MHz system clock.

``c_int`` counts clock edges; on a VCO rising edge it is latched into
``c_ext`` and reset.  The clock is locked to the simulation grid, so every
micro-step carries exactly one clock edge.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

__all__ = ["CounterState", "counter_step", "observe", "counter_step_array", "STALL_LIMIT"]

# c_int beyond this means the VCO has effectively stopped
STALL_LIMIT = 2**16


@dataclass(frozen=True)
class CounterState:
    c_int: int = 0
    c_ext: int = 0

    def __post_init__(self):
        if self.c_int < 0 or self.c_ext < 0:
            raise ValueError("counter values are non-negative")


def counter_step(state: CounterState, vco_edges: int) -> CounterState:
    """Advance one clock period; latch and reset when the VCO rose this step."""
    c_int = state.c_int + 1
    if vco_edges:
        return CounterState(c_int=0, c_ext=c_int)
    if c_int > STALL_LIMIT and state.c_int <= STALL_LIMIT:
        warnings.warn(f"counter passed {STALL_LIMIT} clocks without a VCO edge", RuntimeWarning)
    return CounterState(c_int=c_int, c_ext=state.c_ext)


def observe(state: CounterState) -> int:
    return state.c_ext


def counter_step_array(c_int: np.ndarray, c_ext: np.ndarray, edges: np.ndarray) -> None:
    """In-place :func:`counter_step` over a bank of counters."""
    c_int += 1
    hit = edges.astype(bool)
    c_ext[hit] = c_int[hit]
    c_int[hit] = 0
