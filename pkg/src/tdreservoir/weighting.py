"""4-bit weight words for neighbor connections.

Real-valued Gaussian weights are quantized to a polarity and a tap index of
the delay-line weighting circuit.  The tap index sets the pulse width; the
neuron model consumes the word directly through its per-word tables.
"""

from __future__ import annotations

import enum
import re
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

__all__ = [
    "Polarity",
    "WeightWord",
    "WeightAssignment",
    "quantize_weight",
    "quantize_weights",
    "pulse_width",
    "SIGMA_MAX",
    "TAP_DELAY",
]

SIGMA_MAX = 3.5  # |g| mapped to word 15; 2.5 lets strong mutual-inhibition pairs latch
TAP_DELAY = 0.2e-9
MAX_WORD = 15


class Polarity(str, enum.Enum):
    EXCITATORY = "excitatory"
    INHIBITORY = "inhibitory"


@dataclass(frozen=True)
class WeightWord:
    word: int
    polarity: Polarity = Polarity.EXCITATORY

    def __post_init__(self):
        if not 0 <= self.word <= MAX_WORD:
            raise ValueError(f"weight word {self.word} outside [0, {MAX_WORD}]")
        object.__setattr__(self, "polarity", Polarity(self.polarity))

    @property
    def excitatory(self) -> bool:
        return self.polarity is Polarity.EXCITATORY

    @property
    def table_row(self) -> int:
        """Row in the stacked (excitatory, inhibitory) integration table."""
        return self.word if self.excitatory else self.word + MAX_WORD + 1


def quantize_weight(g: float, sigma_max: float = SIGMA_MAX) -> WeightWord:
    if sigma_max <= 0:
        raise ValueError("sigma_max must be positive")
    word = int(min(max(round(abs(g) / sigma_max * MAX_WORD), 0), MAX_WORD))
    return WeightWord(word, Polarity.EXCITATORY if g >= 0 else Polarity.INHIBITORY)


def quantize_weights(g: np.ndarray, sigma_max: float = SIGMA_MAX) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized :func:`quantize_weight`; returns (words, excitatory mask)."""
    if sigma_max <= 0:
        raise ValueError("sigma_max must be positive")
    g = np.asarray(g, dtype=np.float64)
    # np.round is half-to-even, same as the builtin round() used above
    words = np.clip(np.round(np.abs(g) / sigma_max * MAX_WORD), 0, MAX_WORD).astype(np.int64)
    return words, g >= 0


def pulse_width(word: int, tap_delay: float = TAP_DELAY) -> float:
    """Width of the weighted pulse: one buffer tap per word step, plus one."""
    if not 0 <= word <= MAX_WORD:
        raise ValueError(f"weight word {word} outside [0, {MAX_WORD}]")
    return (word + 1) * tap_delay


Site = tuple[int, int]
_LINE = re.compile(r"\((\d+),(\d+)\)->\((\d+),(\d+)\)\s+(excitatory|inhibitory)\s+(\d+)")


@dataclass
class WeightAssignment:
    """Directed (source site, sink site) -> WeightWord map plus the seed that drew it."""

    words: dict[tuple[Site, Site], WeightWord] = field(default_factory=dict)
    rng_seed: int = 0

    def __len__(self):
        return len(self.words)

    def to_text(self) -> str:
        lines = [f"# weights seed={self.rng_seed}"]
        for (src, dst), w in self.words.items():
            lines.append(f"({src[0]},{src[1]})->({dst[0]},{dst[1]}) {w.polarity.value} {w.word}")
        return "\n".join(lines) + "\n"

    def save(self, path) -> None:
        Path(path).write_text(self.to_text())

    @classmethod
    def from_text(cls, text: str) -> "WeightAssignment":
        seed = 0
        words = {}
        for raw in text.splitlines():
            line = raw.strip()
            if not line:
                continue
            if line.startswith("#"):
                m = re.search(r"seed=(-?\d+)", line)
                if m:
                    seed = int(m.group(1))
                continue
            m = _LINE.fullmatch(line)
            if m is None:
                raise ValueError(f"malformed weight line: {line!r}")
            r0, c0, r1, c1, pol, word = m.groups()
            words[((int(r0), int(c0)), (int(r1), int(c1)))] = WeightWord(int(word), Polarity(pol))
        return cls(words=words, rng_seed=seed)

    @classmethod
    def load(cls, path) -> "WeightAssignment":
        return cls.from_text(Path(path).read_text())
