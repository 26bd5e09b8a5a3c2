"""Loss and delay generators, plus their plain-text file formats.

Rounds are 1-based. Random sources own a generator seeded at construction and
draw rows in order, so ``loss_at(t)`` / ``delay_at(t)`` are pure functions of
``(seed, t)`` regardless of the order in which rounds are queried.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Protocol, Sequence

import numpy as np

_BLOCK = 4096


class LossSource(Protocol):
    K: int

    def loss_at(self, t: int) -> np.ndarray: ...

    def regret_increment(self, t: int, arm: int) -> float: ...


class DelaySchedule(Protocol):
    d_max: int

    def delay_at(self, t: int) -> int: ...


class _RowStream:
    """Lazily materialised rows of i.i.d. uniforms, drawn block by block."""

    def __init__(self, seed, width: int):
        self._rng = np.random.default_rng(seed)
        self._width = width
        self._blocks: list[np.ndarray] = []

    def row(self, t: int) -> np.ndarray:
        b, r = divmod(t - 1, _BLOCK)
        while b >= len(self._blocks):
            self._blocks.append(self._rng.random((_BLOCK, self._width)))
        return self._blocks[b][r]


class StochasticEnv:
    """Independent Bernoulli losses with a unique best (lowest-mean) arm.

    ``allow_ties=True`` admits several lowest-mean arms (the first one is
    reported as best); their gaps are all zero.
    """

    def __init__(self, means: Sequence[float], seed=None, allow_ties: bool = False):
        means = np.asarray(means, dtype=np.float64)
        if means.ndim != 1 or means.size < 2:
            raise ValueError("need a vector of at least two means")
        if np.any((means < 0.0) | (means > 1.0)):
            raise ValueError("Bernoulli means must lie in [0, 1]")
        best = np.flatnonzero(means == means.min())
        if best.size != 1 and not allow_ties:
            raise ValueError(f"best arm must be unique, arms {best.tolist()} tie")
        self.means = means
        self.K = means.size
        self.best_arm = int(best[0])
        self.gaps = means - means[self.best_arm]
        self._stream = _RowStream(seed, self.K)

    def loss_at(self, t: int) -> np.ndarray:
        if t < 1:
            raise ValueError(f"round {t} out of range")
        return (self._stream.row(t) < self.means).astype(np.float64)

    def regret_increment(self, t: int, arm: int) -> float:
        return float(self.gaps[arm])

    def suboptimal_gaps(self) -> np.ndarray:
        return np.delete(self.gaps, self.best_arm)

    def describe(self) -> str:
        return "stochastic(" + ",".join(repr(float(m)) for m in self.means) + ")"


class ObliviousEnv:
    """A fixed T x K loss matrix; regret is measured against the best column."""

    def __init__(self, matrix):
        m = np.array(matrix, dtype=np.float64)
        if m.ndim != 2 or m.shape[1] < 2:
            raise ValueError("loss matrix must be T x K with K >= 2")
        bad = np.flatnonzero(~np.all((m >= 0.0) & (m <= 1.0), axis=1))
        if bad.size:
            raise ValueError(f"row {bad[0] + 1}: losses must lie in [0, 1]")
        self.matrix = m
        self.T, self.K = m.shape
        self.best_arm = int(np.argmin(m.sum(axis=0)))

    def loss_at(self, t: int) -> np.ndarray:
        if not 1 <= t <= self.T:
            raise ValueError(f"round {t} outside 1..{self.T}")
        return self.matrix[t - 1]

    def regret_increment(self, t: int, arm: int) -> float:
        row = self.loss_at(t)
        return float(row[arm] - row[self.best_arm])

    def describe(self) -> str:
        return f"oblivious({self.T}x{self.K})"


def flip_stress_matrix(T: int, K: int, gap: float = 0.05, block: int = 1000,
                       base: float = 0.5) -> np.ndarray:
    """Heuristic adversarial stress instance.

    Arms 0 and 1 are near-tied around ``base`` and swap which one is better by
    ``gap`` on consecutive blocks of ``block`` rounds; the remaining arms sit
    ``2 * gap`` above ``base``. This is a stress case, not a worst case.
    """
    if K < 2:
        raise ValueError("need K >= 2")
    m = np.full((T, K), base + 2.0 * gap)
    flip = (np.arange(T) // block) % 2
    m[:, 0] = base + gap * np.where(flip == 0, -1.0, 1.0)
    m[:, 1] = base - gap * np.where(flip == 0, -1.0, 1.0)
    return np.clip(m, 0.0, 1.0)


@dataclass(frozen=True)
class FixedDelay:
    d: int

    def __post_init__(self):
        if self.d < 0:
            raise ValueError("delay must be non-negative")

    @property
    def d_max(self) -> int:
        return self.d

    def delay_at(self, t: int) -> int:
        return self.d

    def describe(self) -> str:
        return f"fixed:{self.d}"


@dataclass(frozen=True)
class ExplicitDelays:
    delays: tuple[int, ...]

    def __post_init__(self):
        d = tuple(int(x) for x in self.delays)
        if any(x < 0 for x in d):
            raise ValueError("delays must be non-negative")
        object.__setattr__(self, "delays", d)

    @property
    def d_max(self) -> int:
        return max(self.delays, default=0)

    def delay_at(self, t: int) -> int:
        if not 1 <= t <= len(self.delays):
            raise ValueError(f"round {t} outside 1..{len(self.delays)}")
        return self.delays[t - 1]

    def describe(self) -> str:
        return f"explicit(len={len(self.delays)})"


@dataclass
class RandomDelays:
    """i.i.d. delays uniform on {0, ..., d_max}."""

    d_max: int
    seed: object = None
    _stream: _RowStream = field(init=False, repr=False)

    def __post_init__(self):
        if self.d_max < 0:
            raise ValueError("d_max must be non-negative")
        self._stream = _RowStream(self.seed, 1)

    def delay_at(self, t: int) -> int:
        return int(math.floor(self._stream.row(t)[0] * (self.d_max + 1)))

    def describe(self) -> str:
        return f"random:{self.d_max}"


@dataclass
class Environment:
    """A loss source paired with a delay schedule, as seen by the engine."""

    losses: LossSource
    delays: DelaySchedule

    @property
    def K(self) -> int:
        return self.losses.K

    def loss_at(self, t: int) -> np.ndarray:
        return self.losses.loss_at(t)

    def delay_at(self, t: int) -> int:
        return self.delays.delay_at(t)


def pseudo_regret_increment(t: int, arm: int, env) -> float:
    """Gap of the played arm (stochastic) or loss above the best column (oblivious)."""
    losses = env.losses if isinstance(env, Environment) else env
    return losses.regret_increment(t, arm)


# ---------------------------------------------------------------------------
# file formats
# ---------------------------------------------------------------------------


def read_loss_matrix(path) -> np.ndarray:
    """CSV, one row per round, K comma-separated decimals in [0, 1]."""
    rows = []
    K = None
    for lineno, line in enumerate(Path(path).read_text().splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        try:
            row = [float(v) for v in line.split(",")]
        except ValueError:
            raise ValueError(f"{path}: row {lineno}: not a list of decimals: {line!r}") from None
        if K is None:
            K = len(row)
        if len(row) != K:
            raise ValueError(f"{path}: row {lineno}: expected {K} values, got {len(row)}")
        if not all(0.0 <= v <= 1.0 for v in row):
            raise ValueError(f"{path}: row {lineno}: losses must lie in [0, 1]")
        rows.append(row)
    if not rows:
        raise ValueError(f"{path}: empty loss matrix")
    return np.array(rows)


def write_loss_matrix(path, matrix) -> None:
    lines = [",".join(format(float(v), ".17g") for v in row) for row in np.asarray(matrix)]
    Path(path).write_text("\n".join(lines) + "\n")


def read_delay_list(path) -> list[int]:
    """One non-negative integer per line."""
    out = []
    for lineno, line in enumerate(Path(path).read_text().splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        try:
            d = int(line)
        except ValueError:
            raise ValueError(f"{path}: line {lineno}: not an integer: {line!r}") from None
        if d < 0:
            raise ValueError(f"{path}: line {lineno}: negative delay {d}")
        out.append(d)
    return out


def write_delay_list(path, delays: Sequence[int]) -> None:
    Path(path).write_text("".join(f"{int(d)}\n" for d in delays))
