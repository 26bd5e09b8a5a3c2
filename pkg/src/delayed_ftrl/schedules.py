"""Learning-rate tuning driven by the number of outstanding observations.

Rounds are 1-based throughout. ``delays[s - 1]`` is the delay of round ``s``
and its feedback lands at the end of round ``s + delays[s - 1]``; the
observation counts as outstanding at every round ``t`` with ``s < t <= s + d_s``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np


@dataclass(frozen=True)
class TuningConstants:
    K: int
    d_max: int
    eta0: float
    gamma0: float

    @property
    def log_k(self) -> float:
        return math.log(self.K)


@dataclass
class ScheduleState:
    """Round-indexed schedule bookkeeping for a single run."""

    constants: TuningConstants
    t: int = 0
    sigma_t: int = 0
    D_t: int = 0

    def advance(self, sigma: int) -> None:
        self.t += 1
        self.sigma_t = sigma
        self.D_t += sigma


def tuning_constants(K: int, d_max: int) -> TuningConstants:
    if K < 2:
        raise ValueError(f"need K >= 2 arms so that log K > 0, got K={K}")
    if d_max < 0:
        raise ValueError(f"d_max must be non-negative, got {d_max}")
    log_k = math.log(K)
    eta0 = 10.0 * d_max + d_max**2 / (K ** (1.0 / 3.0) * log_k) ** 2
    gamma0 = 24.0**2 * d_max**2 * K ** (2.0 / 3.0) * log_k
    return TuningConstants(K=K, d_max=d_max, eta0=eta0, gamma0=gamma0)


def eta_inv(t: int, c: TuningConstants) -> float:
    """Inverse Tsallis learning rate ``sqrt(t + eta0)``."""
    if t < 1:
        raise ValueError(f"rounds start at 1, got t={t}")
    return math.sqrt(t + c.eta0)


def gamma_inv(D_t: float, c: TuningConstants) -> float:
    """Inverse negentropy learning rate ``sqrt((D_t + gamma0) / log K)``."""
    if D_t < 0:
        raise ValueError(f"cumulative outstanding count must be >= 0, got {D_t}")
    return math.sqrt((D_t + c.gamma0) / c.log_k)


def asymmetric_gamma_inv(D_t: float, c: TuningConstants, gaps) -> np.ndarray:
    """Per-arm negentropy weights ``gamma_inv(D_t) * sqrt(gap_i)``.

    The best arm has no gap of its own; callers pass a positive surrogate.
    """
    gaps = np.asarray(gaps, dtype=np.float64)
    if gaps.shape != (c.K,):
        raise ValueError(f"expected {c.K} gaps, got shape {gaps.shape}")
    if np.any(~(gaps > 0.0)) or np.any(gaps > 1.0):
        raise ValueError("gaps must lie in (0, 1]; supply a positive surrogate for the best arm")
    return gamma_inv(D_t, c) * np.sqrt(gaps)


def outstanding_count(t: int, delays: Sequence[int]) -> int:
    """Number of rounds ``s < t`` whose feedback has not arrived before round ``t``."""
    return sum(1 for s in range(1, t) if s + delays[s - 1] >= t)


def outstanding_counts(delays: Sequence[int], T: int | None = None) -> np.ndarray:
    """``sigma_t`` for t = 1..T in one pass (difference-array form)."""
    d = np.asarray(delays, dtype=np.int64)
    T = len(d) if T is None else T
    diff = np.zeros(T + 2, dtype=np.int64)
    s = np.arange(1, min(len(d), T) + 1)
    ends = np.minimum(s + d[: len(s)], T)
    live = ends >= s + 1
    np.add.at(diff, s[live] + 1, 1)
    np.add.at(diff, ends[live] + 1, -1)
    return np.cumsum(diff)[1 : T + 1]


def arrival_counts(delays: Sequence[int], T: int | None = None) -> np.ndarray:
    """``a_t = |{s : s + d_s = t}|`` for t = 1..T, late arrivals clipped to T."""
    d = np.asarray(delays, dtype=np.int64)
    T = len(d) if T is None else T
    s = np.arange(1, min(len(d), T) + 1)
    arrive = np.minimum(s + d[: len(s)], T)
    return np.bincount(arrive, minlength=T + 1)[1 : T + 1]
