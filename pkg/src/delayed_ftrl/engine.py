"""Delayed-feedback bandit game loop around the hybrid-regularizer FTRL player.

Each round: count the outstanding observations and refresh the rates, solve
for the play distribution, sample an arm, hand the feedback to the delay queue,
then fold every observation that lands this round into the cumulative
importance-weighted loss used from the next round on.

Sampling is inverse-CDF on one uniform per round from numpy's PCG64
(``np.random.default_rng``). A run seed is split with ``SeedSequence.spawn``
into independent streams for the learner, the losses and the delays.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any

import numpy as np

from .environments import Environment
from .ftrl_core import SolverError, _OK, _sample_inverse_cdf, _solve_kernel
from .schedules import ScheduleState, TuningConstants, tuning_constants

SNAPSHOT_MODES = ("off", "window", "full")


@dataclass(frozen=True)
class FeedbackEvent:
    origin: int
    arm: int
    loss: float
    arrival: int
    prob: float  # x_{origin, arm}, needed for the importance weight


@dataclass(frozen=True)
class RoundRecord:
    t: int
    arm: int
    loss: float
    delay: int
    arrival: int
    sigma: int
    D: int
    eta_inv: float
    gamma_inv: float
    arrivals: int
    x: np.ndarray


@dataclass
class EngineFlags:
    snapshots: str = "off"
    # oracle gaps (best arm given a positive surrogate) switch on per-arm gamma
    gaps: np.ndarray | None = None

    def __post_init__(self):
        if self.snapshots not in SNAPSHOT_MODES:
            raise ValueError(f"snapshots must be one of {SNAPSHOT_MODES}")
        if self.gaps is not None:
            self.gaps = np.asarray(self.gaps, dtype=np.float64)


@dataclass
class RunTrace:
    K: int
    T: int
    d_max: int
    seed: Any
    config: dict
    arms: np.ndarray
    losses: np.ndarray
    delays: np.ndarray
    arrival_round: np.ndarray
    sigma: np.ndarray
    D: np.ndarray
    eta_inv: np.ndarray
    gamma_inv: np.ndarray
    arrivals: np.ndarray
    inst_regret: np.ndarray
    truncated: np.ndarray
    snapshot_mode: str = "off"
    snapshots: np.ndarray | None = None
    estimates: np.ndarray | None = None
    drift_max_ratio: float | None = None
    drift_witness: tuple | None = None
    drifted_regret: np.ndarray | None = None
    d_max_violations: list = field(default_factory=list)

    @property
    def sigma_max(self) -> int:
        return int(self.sigma.max()) if self.T else 0


def spawn_seeds(seed) -> tuple[np.random.SeedSequence, ...]:
    """Independent (learner, losses, delays) streams derived from one run seed."""
    return tuple(np.random.SeedSequence(seed).spawn(3))


def importance_weighted_estimate(x, arm: int, loss: float) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    est = np.zeros_like(x)
    est[arm] = loss / x[arm]
    return est


class DelayedBanditFTRL:
    """Single-run learner state. Not thread-safe; one instance per run."""

    def __init__(self, K: int, T: int, d_max: int, seed=None, flags: EngineFlags | None = None):
        self.flags = flags or EngineFlags()
        self.K, self.T = K, T
        self.constants: TuningConstants = tuning_constants(K, d_max)
        self.schedule = ScheduleState(self.constants)
        self.rng = np.random.default_rng(seed)
        self.L_obs = np.zeros(K)
        self._gamma = np.empty(K)
        self._x = np.empty(K)
        self._queue: dict[int, list[FeedbackEvent]] = {}
        self._pending = 0
        self._sqrt_gaps = None
        if self.flags.gaps is not None:
            g = self.flags.gaps
            if g.shape != (K,) or np.any(~(g > 0.0)) or np.any(g > 1.0):
                raise ValueError("asymmetric gamma needs K gaps in (0, 1]")
            self._sqrt_gaps = np.sqrt(g)

    @property
    def pending(self) -> int:
        return self._pending

    def play_round(self, env) -> tuple[RoundRecord, list[FeedbackEvent]]:
        """Play round ``t = schedule.t + 1``; return its record and the arrivals."""
        c = self.constants
        sched = self.schedule
        t = sched.t + 1
        if t > self.T:
            raise ValueError(f"horizon {self.T} exhausted")
        # everything still queued at the start of round t arrives at or after t
        sched.advance(self._pending)
        eta_inv = math.sqrt(t + c.eta0)
        g_inv = math.sqrt((sched.D_t + c.gamma0) / c.log_k)
        if self._sqrt_gaps is None:
            self._gamma.fill(g_inv)
        else:
            np.multiply(self._sqrt_gaps, g_inv, out=self._gamma)
        x = self._x
        nu, _, status = _solve_kernel(self.L_obs, eta_inv, self._gamma, x)
        if status != _OK:
            raise SolverError(f"round {t}: FTRL solve failed (status {status}, nu={nu})")
        x = x.copy()
        arm = int(_sample_inverse_cdf(x, self.rng.random()))
        loss = float(env.loss_at(t)[arm])
        delay = int(env.delay_at(t))
        arrival = min(t + delay, self.T)
        ev = FeedbackEvent(t, arm, loss, arrival, float(x[arm]))
        self._queue.setdefault(arrival, []).append(ev)
        self._pending += 1
        landed = self._queue.pop(t, [])
        for e in landed:
            self.L_obs[e.arm] += e.loss / e.prob
        self._pending -= len(landed)
        rec = RoundRecord(t, arm, loss, delay, arrival, sched.sigma_t, sched.D_t,
                          eta_inv, g_inv, len(landed), x)
        return rec, landed


def run(env: Environment, T: int, seed=None, flags: EngineFlags | None = None,
        d_max: int | None = None, config: dict | None = None) -> RunTrace:
    """Play ``T`` rounds. Deterministic in (env, T, seed, flags).

    ``d_max`` defaults to the delay schedule's declared bound.
    """
    flags = flags or EngineFlags()
    d_max = env.delays.d_max if d_max is None else d_max
    K = env.K
    learner = DelayedBanditFTRL(K, T, d_max, seed, flags)

    arms = np.empty(T, dtype=np.int64)
    losses = np.empty(T)
    delays = np.empty(T, dtype=np.int64)
    arrival_round = np.empty(T, dtype=np.int64)
    sigma = np.empty(T, dtype=np.int64)
    D = np.empty(T, dtype=np.int64)
    eta = np.empty(T)
    gam = np.empty(T)
    arrivals = np.empty(T, dtype=np.int64)
    inst = np.empty(T)

    mode = flags.snapshots
    snaps = np.empty((T, K)) if mode == "full" else None
    ests = np.empty((T, K)) if mode == "full" else None
    window = np.empty((d_max + 1, K)) if mode != "off" else None
    drift_best, witness = 1.0, None
    best_arm = getattr(env.losses, "best_arm", None)
    drifted = np.zeros(T) if mode != "off" and best_arm is not None else None

    for i in range(T):
        if ests is not None:
            ests[i] = learner.L_obs
        rec, landed = learner.play_round(env)
        x = rec.x
        arms[i], losses[i], delays[i] = rec.arm, rec.loss, rec.delay
        arrival_round[i] = rec.arrival
        sigma[i], D[i], eta[i], gam[i] = rec.sigma, rec.D, rec.eta_inv, rec.gamma_inv
        arrivals[i] = rec.arrivals
        inst[i] = env.losses.regret_increment(rec.t, rec.arm)
        if mode != "off":
            # ratios x_t / x_s for the previous d_max rounds and s = t
            slot = i % (d_max + 1)
            window[slot] = x
            n = min(i + 1, d_max + 1)
            r = x[None, :] / window[:n]
            j = np.unravel_index(np.argmax(r), r.shape)
            if r[j] > drift_best:
                s_idx = i - ((slot - j[0]) % (d_max + 1))
                drift_best, witness = float(r[j]), (int(s_idx) + 1, i + 1, int(j[1]))
            if snaps is not None:
                snaps[i] = x
            if drifted is not None:
                for e in landed:
                    est = e.loss / e.prob
                    drifted[i] += x[e.arm] * est - (est if e.arm == best_arm else 0.0)

    if learner.pending:
        raise AssertionError("feedback left in the queue after the final round")
    return RunTrace(
        K=K, T=T, d_max=d_max, seed=seed, config=dict(config or {}),
        arms=arms, losses=losses, delays=delays, arrival_round=arrival_round,
        sigma=sigma, D=D, eta_inv=eta, gamma_inv=gam, arrivals=arrivals,
        inst_regret=inst, truncated=arrival_round < np.arange(1, T + 1) + delays,
        snapshot_mode=mode, snapshots=snaps, estimates=ests,
        drift_max_ratio=drift_best if mode != "off" else None,
        drift_witness=witness, drifted_regret=drifted,
        d_max_violations=[int(s) + 1 for s in np.flatnonzero(delays > d_max)],
    )
