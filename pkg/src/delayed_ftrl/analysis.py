"""Regret accounting, bound overlays and empirical checks of the drift and outstanding-count properties.

The unit-constant overlays are shape references only: the asymptotic bounds
hide constants, so these curves show growth rates, not guarantees.
"""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .schedules import arrival_counts, outstanding_counts, tuning_constants


@dataclass
class CheckReport:
    name: str
    passed: bool
    witness: dict = field(default_factory=dict)

    def row(self) -> list[str]:
        w = ";".join(f"{k}={v}" for k, v in self.witness.items())
        return [self.name, "pass" if self.passed else "fail", w]


def reports_to_csv(reports: Sequence[CheckReport]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["check", "result", "witness"])
    for r in reports:
        w.writerow(r.row())
    return buf.getvalue()


# ---------------------------------------------------------------------------
# overlays
# ---------------------------------------------------------------------------


def adversarial_overlay(t, K: int, D_t, d_max: int):
    """``sqrt(tK) + sqrt(D_t log K) + d_max K^(1/3) log K`` (unit constants)."""
    log_k = math.log(K)
    t = np.asarray(t, dtype=np.float64)
    D_t = np.asarray(D_t, dtype=np.float64)
    out = np.sqrt(t * K) + np.sqrt(D_t * log_k) + d_max * K ** (1.0 / 3.0) * log_k
    return float(out) if out.ndim == 0 else out


def stochastic_overlay(t, gaps: Sequence[float], sigma_max, d_max: int, K: int):
    """Stochastic shape reference; ``gaps`` are those of the suboptimal arms only."""
    gaps = np.asarray(gaps, dtype=np.float64)
    if np.any(~(gaps > 0.0)):
        raise ValueError("every suboptimal arm needs a positive gap")
    log_k = math.log(K)
    inv = float(np.sum(1.0 / gaps))
    t = np.asarray(t, dtype=np.float64)
    sigma_max = np.asarray(sigma_max, dtype=np.float64)
    with np.errstate(divide="ignore"):
        log_t = np.where(t > 0, np.log(np.maximum(t, 1e-300)), 0.0)
    out = inv * log_t + inv * sigma_max / log_k + d_max * K ** (1.0 / 3.0) * log_k
    return float(out) if out.ndim == 0 else out


def stochastic_bound_explicit(t, gaps, sigma_max, d_max: int, K: int, a_max=None):
    """The explicit-constant stochastic bound with the run's tuning constants.

    ``a_max`` (largest number of simultaneous arrivals) defaults to
    ``sigma_max + 1``, which always dominates it. With ``d_max = 0`` the
    ``log(T / eta0 + 1)`` factor is infinite and so is the result.
    """
    gaps = np.asarray(gaps, dtype=np.float64)
    if np.any(~(gaps > 0.0)):
        raise ValueError("every suboptimal arm needs a positive gap")
    c = tuning_constants(K, d_max)
    log_k = c.log_k
    t = np.asarray(t, dtype=np.float64)
    sigma_max = np.asarray(sigma_max, dtype=np.float64)
    a_max = sigma_max + 1 if a_max is None else np.asarray(a_max, dtype=np.float64)
    inv = float(np.sum(1.0 / gaps))
    with np.errstate(divide="ignore"):
        log_term = np.log(t / c.eta0 + 1.0) if c.eta0 > 0 else np.where(t > 0, np.inf, 0.0)
    out = (56.0**2 * inv * log_term + 2048.0 * a_max * log_k
           + 256.0 * inv * sigma_max / log_k
           + 16.0 * math.sqrt(c.eta0 * (K - 1)) + 8.0 * math.sqrt(c.gamma0 * log_k)
           + 4.0 * d_max)
    return float(out) if np.ndim(out) == 0 else out


def adversarial_bound_explicit(sigma: Sequence[int], K: int, d_max: int) -> np.ndarray:
    """Per-round value of the non-increasing-rate FTRL bound

    ``sum_s eta_s sqrt(K) + sum_s gamma_s sigma_s + 2 sqrt(K)/eta_t + log(K)/gamma_t``
    evaluated along the realised outstanding counts.
    """
    c = tuning_constants(K, d_max)
    sigma = np.asarray(sigma, dtype=np.float64)
    t = np.arange(1, sigma.size + 1, dtype=np.float64)
    D = np.cumsum(sigma)
    eta_inv = np.sqrt(t + c.eta0)
    gamma_inv = np.sqrt((D + c.gamma0) / c.log_k)
    with np.errstate(divide="ignore", invalid="ignore"):
        gamma = np.where(gamma_inv > 0, 1.0 / gamma_inv, np.inf)
        stab_g = np.cumsum(np.where(sigma > 0, gamma * sigma, 0.0))
    return (np.cumsum(math.sqrt(K) / eta_inv) + stab_g
            + 2.0 * math.sqrt(K) * eta_inv + c.log_k * gamma_inv)


# ---------------------------------------------------------------------------
# drift of the play distribution
# ---------------------------------------------------------------------------


def max_drift_ratio(snapshots: np.ndarray, d_max: int) -> tuple[float, tuple]:
    """Largest ``x[t, i] / x[s, i]`` over ``0 <= t - s <= d_max``; witness is 1-based (s, t, i)."""
    X = np.asarray(snapshots, dtype=np.float64)
    best, wit = 1.0, None
    for lag in range(1, min(d_max, X.shape[0] - 1) + 1):
        r = X[lag:] / X[:-lag]
        k = np.unravel_index(np.argmax(r), r.shape)
        if r[k] > best:
            best, wit = float(r[k]), (int(k[0]) + 1, int(k[0]) + lag + 1, int(k[1]))
    return best, wit


def drift_check(trace, d_max: int | None = None, tol: float = 1e-6) -> CheckReport:
    d_max = trace.d_max if d_max is None else d_max
    if trace.snapshots is not None:
        ratio, wit = max_drift_ratio(trace.snapshots, d_max)
    elif trace.drift_max_ratio is not None:
        if d_max != trace.d_max:
            raise ValueError("windowed snapshots only cover the run's own d_max")
        ratio, wit = trace.drift_max_ratio, trace.drift_witness
    else:
        raise ValueError("trace was recorded without distribution snapshots")
    return CheckReport("drift", ratio <= 2.0 + tol,
                       {"max_ratio": repr(ratio), "witness_s_t_arm": wit, "d_max": d_max})


# ---------------------------------------------------------------------------
# outstanding observations
# ---------------------------------------------------------------------------


def sigma_max_of(delays: Sequence[int]) -> int:
    s = outstanding_counts(delays)
    return int(s.max()) if s.size else 0


def skip_bound_exhaustive(delays: Sequence[int]) -> int:
    """``min_S |S| + max_{s not in S} d_s`` by enumerating every subset."""
    d = np.asarray(delays, dtype=np.int64)
    T = d.size
    masks = ((np.arange(2**T)[:, None] >> np.arange(T)[None, :]) & 1).astype(bool)
    rest = np.where(masks, 0, d[None, :]).max(axis=1, initial=0)
    return int((masks.sum(axis=1) + rest).min())


def skip_bound_greedy(delays: Sequence[int]) -> int:
    """Same minimum, restricted to skipping the k largest delays."""
    d = np.sort(np.asarray(delays, dtype=np.int64))[::-1]
    return int(min(k + (d[k] if k < d.size else 0) for k in range(d.size + 1)))


def skip_bound_sampled(delays: Sequence[int], n_samples: int = 4096, seed=0) -> int:
    """Upper estimate of the minimum over random subsets plus every top-k set."""
    d = np.asarray(delays, dtype=np.int64)
    rng = np.random.default_rng(seed)
    best = skip_bound_greedy(d)
    masks = rng.random((n_samples, d.size)) < 0.5
    rest = np.where(masks, 0, d[None, :]).max(axis=1, initial=0)
    return int(min(best, (masks.sum(axis=1) + rest).min()))


def sigma_max_bound_check(delays: Sequence[int], exhaustive_limit: int = 20) -> CheckReport:
    d = list(delays)
    smax = sigma_max_of(d)
    greedy = skip_bound_greedy(d)
    if len(d) <= exhaustive_limit:
        bound = skip_bound_exhaustive(d)
        exhaustive = True
    else:
        bound = skip_bound_sampled(d)
        exhaustive = False
    return CheckReport("sigma-max", smax <= bound,
                       {"sigma_max": smax, "bound": bound, "greedy_bound": greedy,
                        "exhaustive": exhaustive})


def arrivals_inequality(sigma: Sequence[int], arrivals: Sequence[int]) -> tuple[bool, int | None]:
    """Exact prefix check of ``sum sigma_s >= sum a_s (a_s - 1) / 2``; returns first failing t."""
    s = np.cumsum(np.asarray(sigma, dtype=np.int64))
    a = np.asarray(arrivals, dtype=np.int64)
    rhs = np.cumsum(a * (a - 1) // 2)
    bad = np.flatnonzero(s < rhs)
    return (bad.size == 0, int(bad[0]) + 1 if bad.size else None)


def arrivals_inequality_check(trace) -> CheckReport:
    ok, first = arrivals_inequality(trace.sigma, trace.arrivals)
    return CheckReport("arrivals", ok,
                       {"T": len(trace.sigma), "first_violation": first,
                        "sum_sigma": int(np.sum(trace.sigma)),
                        "sum_pairs": int(np.sum(np.asarray(trace.arrivals) * (np.asarray(trace.arrivals) - 1) // 2))})


def arrivals_inequality_from_delays(delays: Sequence[int]) -> CheckReport:
    T = len(delays)
    ok, first = arrivals_inequality(outstanding_counts(delays, T), arrival_counts(delays, T))
    return CheckReport("arrivals", ok, {"T": T, "first_violation": first})


# ---------------------------------------------------------------------------
# regret curves
# ---------------------------------------------------------------------------


@dataclass
class RegretCurve:
    cumulative: np.ndarray
    overlay_adv: np.ndarray
    overlay_stoch: np.ndarray | None
    meta: dict


def regret_curve(trace, env, explicit_constants: bool = False) -> RegretCurve:
    losses = getattr(env, "losses", env)
    T = trace.T
    cum = np.cumsum(trace.inst_regret)
    t = np.arange(1, T + 1)
    run_sigma_max = np.maximum.accumulate(trace.sigma)
    if explicit_constants:
        adv = adversarial_bound_explicit(trace.sigma, trace.K, trace.d_max)
    else:
        adv = adversarial_overlay(t, trace.K, trace.D, trace.d_max)
    stoch = None
    regime = "oblivious"
    if hasattr(losses, "suboptimal_gaps"):
        regime = "stochastic"
        gaps = losses.suboptimal_gaps()
        if explicit_constants:
            a_max = np.maximum.accumulate(trace.arrivals)
            stoch = stochastic_bound_explicit(t, gaps, run_sigma_max, trace.d_max, trace.K, a_max)
        else:
            stoch = stochastic_overlay(t, gaps, run_sigma_max, trace.d_max, trace.K)
    return RegretCurve(cum, np.asarray(adv), None if stoch is None else np.asarray(stoch),
                       {"K": trace.K, "T": T, "d_max": trace.d_max, "regime": regime,
                        "constants": "explicit" if explicit_constants else "unit (shape reference)"})


def skip_regret_bound(delays: Sequence[int], K: int) -> float:
    """``min_S |S| + sqrt(D_{not S} log K)`` by skipping the largest delays first."""
    d = np.sort(np.asarray(delays, dtype=np.float64))[::-1]
    tail = np.concatenate([np.cumsum(d[::-1])[::-1], [0.0]])
    return float(min(k + math.sqrt(tail[k] * math.log(K)) for k in range(d.size + 1)))
