"""Adversaries for full-information games with variable loss ranges and delays.

Loss ranges are stored sorted non-increasingly, ``ranges[0] >= ranges[1] >= ...``,
and ``rho`` (1-based) assigns rank ``rho[t - 1]`` to round ``t``, so round t has
range ``ranges[rho[t - 1] - 1]``. Losses are centred in ``[-L/2, L/2]``; shifting
every arm by ``L/2`` gives the ``[0, L]`` form and leaves the regret unchanged.

Actors are deterministic maps from the loss history (a ``(t - 1) x K`` array)
to a distribution over arms, i.e. the expected play of a possibly randomised
learner.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Protocol, Sequence

import numpy as np

SIMPLEX_TOL = 1e-9


class FullInfoActor(Protocol):
    def distribution(self, history: np.ndarray) -> np.ndarray: ...


# ---------------------------------------------------------------------------
# loss direction with zero mean and large variance under x
# ---------------------------------------------------------------------------


def adv_loss_direction(x) -> np.ndarray:
    """Vector in ``[-1, 1]^K`` with ``<x, l> = 0`` and ``sum x_i l_i^2 >= 1/2``.

    Requires ``max(x) <= 2/3``. The heavy set starts at the argmax and absorbs
    the lightest remaining arm while its mass stays within 2/3. Ties go to the
    lowest index.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.max() > 2.0 / 3.0 + 1e-12:
        raise ValueError(f"need max(x) <= 2/3, got {x.max()}")
    K = x.size
    heavy = np.zeros(K, dtype=bool)
    heavy[int(np.argmax(x))] = True
    p = float(x[heavy].sum())
    # remaining arms by increasing mass, lowest index first on ties
    order = [i for i in np.argsort(x, kind="stable") if not heavy[i]]
    for i in order:
        if p + x[i] <= 2.0 / 3.0:
            heavy[i] = True
            p += x[i]
        else:
            break
    q = float(x[~heavy].sum())
    ell = np.empty(K)
    ell[heavy] = min(1.0, q / p)
    ell[~heavy] = max(-1.0, -p / q)
    return ell


def exp3_distribution(L, eta: float) -> np.ndarray:
    """Exponential weights ``exp(-eta L_i) / sum_j exp(-eta L_j)`` (max-shifted)."""
    if not eta > 0:
        raise ValueError("eta must be positive")
    L = np.asarray(L, dtype=np.float64)
    z = -eta * (L - L.min())
    w = np.exp(z)
    return w / w.sum()


# ---------------------------------------------------------------------------
# actors
# ---------------------------------------------------------------------------


@dataclass
class ExpWeightsActor:
    eta: float

    def distribution(self, history: np.ndarray) -> np.ndarray:
        return exp3_distribution(history.sum(axis=0), self.eta)


@dataclass
class UniformActor:
    K: int

    def distribution(self, history: np.ndarray) -> np.ndarray:
        return np.full(self.K, 1.0 / self.K)


@dataclass
class FollowTheLeaderActor:
    """Uniform over the current leaders (the exact mixture of random tie-breaking)."""

    K: int

    def distribution(self, history: np.ndarray) -> np.ndarray:
        L = history.sum(axis=0) if len(history) else np.zeros(self.K)
        lead = L <= L.min() + 1e-12
        return lead / lead.sum()


def _validate(x, K: int) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (K,) or np.any(x < -SIMPLEX_TOL) or abs(x.sum() - 1.0) > SIMPLEX_TOL:
        raise ValueError(f"actor returned an invalid distribution: {x}")
    return x


# ---------------------------------------------------------------------------
# range sequences
# ---------------------------------------------------------------------------


@dataclass
class LossRangeSequence:
    ranges: np.ndarray
    rho: np.ndarray = None

    def __post_init__(self):
        r = np.asarray(self.ranges, dtype=np.float64)
        if np.any(r < 0) or np.any(np.diff(r) > 0):
            raise ValueError("loss ranges must be non-negative and sorted non-increasingly")
        self.ranges = r
        T = r.size
        rho = np.arange(1, T + 1) if self.rho is None else np.asarray(self.rho, dtype=np.int64)
        if sorted(rho.tolist()) != list(range(1, T + 1)):
            raise ValueError("rho must be a permutation of 1..T")
        self.rho = rho

    @property
    def T(self) -> int:
        return self.ranges.size

    def range_at(self, t: int) -> float:
        return float(self.ranges[self.rho[t - 1] - 1])

    def rank_at(self, t: int) -> int:
        return int(self.rho[t - 1])

    @classmethod
    def uniform(cls, T: int, value: float = 1.0) -> "LossRangeSequence":
        return cls(np.full(T, float(value)))


def read_ranges(path, permutation_path=None) -> LossRangeSequence:
    """Ranges: one decimal per line. Permutation: 1-based indices, one per line."""
    def lines(p):
        return [ln.strip() for ln in Path(p).read_text().splitlines()
                if ln.strip() and not ln.strip().startswith("#")]

    ranges = [float(v) for v in lines(path)]
    rho = None if permutation_path is None else [int(v) for v in lines(permutation_path)]
    if rho is not None and len(rho) != len(ranges):
        raise ValueError("permutation length differs from the number of ranges")
    return LossRangeSequence(np.array(ranges), rho)


def n_halvings(K: int) -> int:
    """``floor(log2 K)``, computed exactly on integers."""
    return K.bit_length() - 1


def regret_floor(ranges: LossRangeSequence | Sequence[float], K: int) -> float:
    """``max{ 1/2 sum_{t<=k} L_t, 1/32 sqrt(sum_{t>=k} L_t^2 log K) }`` with k = floor(log2 K)."""
    r = ranges.ranges if isinstance(ranges, LossRangeSequence) else np.sort(np.asarray(ranges, float))[::-1]
    k = n_halvings(K)
    first = 0.5 * float(r[:k].sum())
    second = math.sqrt(float(np.sum(r[k - 1:] ** 2)) * math.log(K)) / 32.0
    return max(first, second)


# ---------------------------------------------------------------------------
# adversaries
# ---------------------------------------------------------------------------


@dataclass
class TrackingAdversary:
    """Adaptive adversary that keeps exponential weights balanced.

    Zero loss when the exponential-weights reference is too concentrated or
    the round holds one of the ``floor(log2 K)`` largest ranges; otherwise the
    zero-mean direction for the reference, scaled by the range and signed so
    the actor's expected loss is non-negative.
    """

    K: int
    ranges: LossRangeSequence
    eta: float = field(init=False)
    L: np.ndarray = field(init=False)

    def __post_init__(self):
        k = n_halvings(self.K)
        tail = float(np.sum(self.ranges.ranges[k - 1:] ** 2))
        self.eta = math.sqrt(math.log(self.K) / tail) if tail > 0 else math.inf
        self.L = np.zeros(self.K)

    def reference(self) -> np.ndarray:
        if math.isinf(self.eta):
            return np.full(self.K, 1.0 / self.K)
        return exp3_distribution(self.L, self.eta)

    def step(self, t: int, actor: FullInfoActor, history: np.ndarray) -> np.ndarray:
        z = self.reference()
        rank = self.ranges.rank_at(t)
        if z.max() > 2.0 / 3.0 or rank <= n_halvings(self.K) or math.isinf(self.eta):
            ell_t = np.zeros(self.K)
        else:
            direction = adv_loss_direction(z)
            x = _validate(actor.distribution(history), self.K)
            sign = 1.0 if float(x @ direction) >= 0.0 else -1.0
            ell_t = sign * self.ranges.range_at(t) * direction / 2.0
        self.L += ell_t
        return ell_t


@dataclass
class HalvingAdversary:
    """Halve the active arm set on each of the ``floor(log2 K)`` largest ranges.

    A uniformly random half of the active arms gets ``-L/2`` and the other
    half ``+L/2`` (one arm stays at 0 when the count is odd); only the
    negative half stays active. All other rounds carry zero loss.
    """

    K: int
    ranges: LossRangeSequence
    seed: object = None
    active: np.ndarray = field(init=False)

    def __post_init__(self):
        self._rng = np.random.default_rng(self.seed)
        self.active = np.arange(self.K)

    def step(self, t: int, actor: FullInfoActor, history: np.ndarray) -> np.ndarray:
        ell_t = np.zeros(self.K)
        if self.ranges.rank_at(t) > n_halvings(self.K):
            return ell_t
        L = self.ranges.range_at(t)
        perm = self._rng.permutation(self.active)
        h = perm.size // 2
        ell_t[perm[:h]] = -L / 2.0
        ell_t[perm[h:2 * h]] = L / 2.0
        self.active = np.sort(perm[:h])
        return ell_t


def halving_adversary(K: int, ranges: LossRangeSequence, seed=None) -> np.ndarray:
    """Full ``T x K`` loss sequence of one halving construction."""
    adv = HalvingAdversary(K, ranges, seed)
    return np.array([adv.step(t, None, None) for t in range(1, ranges.T + 1)])


# ---------------------------------------------------------------------------
# bucketing of non-increasing delays
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Bucketing:
    """Boundaries ``b_1 = 1 < ... < b_{M+1} = T + 1``; bucket m is ``b_m .. b_{m+1} - 1``."""

    boundaries: tuple[int, ...]

    @property
    def M(self) -> int:
        return len(self.boundaries) - 1

    @property
    def sizes(self) -> list[int]:
        return [b - a for a, b in zip(self.boundaries, self.boundaries[1:])]

    def buckets(self) -> list[range]:
        return [range(a, b) for a, b in zip(self.boundaries, self.boundaries[1:])]


def clamp_to_horizon(delays: Sequence[int]) -> list[int]:
    """Cap ``d_t`` at ``T + 1 - t``: feedback still pending is revealed when the game ends."""
    T = len(delays)
    return [min(int(v), T + 1 - t) for t, v in enumerate(delays, start=1)]


def _effective(d: Sequence[int]) -> list[int]:
    # a zero delay still only informs the next round
    return [max(1, v) for v in clamp_to_horizon(d)]


def bucket_decompose(delays: Sequence[int]) -> Bucketing:
    """Greedy buckets whose actions all precede the bucket's first feedback."""
    d = list(delays)
    T = len(d)
    if any(a < b for a, b in zip(d, d[1:])):
        raise ValueError("delays must be non-increasing")
    if any(v < 0 for v in d):
        raise ValueError("delays must be non-negative")
    eff = _effective(d)
    bounds = [1]
    t = 1
    while t <= T:
        first_feedback = t + eff[t - 1]
        t += 1
        while t < first_feedback:
            first_feedback = min(first_feedback, t + eff[t - 1])
            t += 1
        bounds.append(t)
    return Bucketing(tuple(bounds))


def bucketing_violations(delays: Sequence[int], b: Bucketing) -> list[str]:
    """Every bucket property that fails, spelled out; empty when all hold."""
    d = clamp_to_horizon(delays)
    T = len(d)
    eff = _effective(d)
    out = []
    bs = b.boundaries
    if bs[0] != 1 or bs[-1] != T + 1 or any(x >= y for x, y in zip(bs, bs[1:])):
        out.append(f"not a partition of 1..{T}: {bs}")
        return out
    for m, bucket in enumerate(b.buckets(), start=1):
        nxt = bs[m]
        if not all(t + eff[t - 1] > nxt - 1 for t in bucket):
            out.append(f"bucket {m}: feedback arrives inside the bucket")
        if not any(t + eff[t - 1] == nxt for t in bucket):
            out.append(f"bucket {m}: no feedback at the boundary {nxt}")
    sizes = b.sizes
    for m in range(len(sizes) - 1):
        if sizes[m] < sizes[m + 1]:
            out.append(f"sizes increase at bucket {m + 1}")
        nxt_sum = sum(d[t - 1] for t in b.buckets()[m + 1])
        if sizes[m] ** 2 < nxt_sum:
            out.append(f"bucket {m + 1}: |B|^2={sizes[m] ** 2} < next delay sum {nxt_sum}")
    return out


# ---------------------------------------------------------------------------
# game runner
# ---------------------------------------------------------------------------


@dataclass
class GameReport:
    regret: float
    regret_raw: float
    floor: float
    losses: np.ndarray
    plays: np.ndarray
    best_arm: int

    @property
    def passed(self) -> bool:
        return self.regret >= self.floor


def run_full_info_game(actor: FullInfoActor, adversary, T: int, K: int,
                       ranges: LossRangeSequence | None = None,
                       bucket_delays: Sequence[int] | None = None) -> GameReport:
    """Play ``T`` full-information rounds.

    With ``bucket_delays`` the actor only learns a bucket's losses once the
    whole bucket is over and is therefore held at one distribution per bucket.
    """
    ranges = ranges if ranges is not None else getattr(adversary, "ranges", None)
    losses = np.zeros((T, K))
    plays = np.zeros((T, K))
    if bucket_delays is not None:
        if len(bucket_delays) != T:
            raise ValueError("need one delay per round")
        ends = {}
        for bucket in bucket_decompose(bucket_delays).buckets():
            for t in bucket:
                ends[t] = bucket.start - 1  # feedback visible up to the previous bucket
    for t in range(1, T + 1):
        seen = t - 1 if bucket_delays is None else ends[t]
        history = losses[:seen]
        losses[t - 1] = adversary.step(t, actor, history)
        plays[t - 1] = _validate(actor.distribution(history), K)
    total = losses.sum(axis=0)
    regret = float(np.sum(plays * losses) - total.min())
    if ranges is not None:
        shift = np.array([ranges.range_at(t) / 2.0 for t in range(1, T + 1)])
        raw = losses + shift[:, None]
        regret_raw = float(np.sum(plays * raw) - raw.sum(axis=0).min())
        floor = regret_floor(ranges, K)
    else:
        regret_raw, floor = regret, 0.0
    return GameReport(regret, regret_raw, floor, losses, plays, int(np.argmin(total)))


def run_bucketed_game(delays: Sequence[int], actor_factory, K: int) -> tuple[GameReport, Bucketing]:
    """Reduce a delayed game to one round per bucket with range ``|B_m|`` and play it.

    Every round of bucket m carries the bucket's loss divided by ``|B_m|``,
    so per-round losses stay in ``[-1/2, 1/2]``.
    """
    b = bucket_decompose(delays)
    sizes = np.array(b.sizes, dtype=np.float64)
    reduced = LossRangeSequence(np.sort(sizes)[::-1],
                                _rank_of(sizes))
    actor = actor_factory(reduced)
    rep = run_full_info_game(actor, TrackingAdversary(K, reduced), b.M, K, ranges=reduced)
    return rep, b


def _rank_of(values: np.ndarray) -> np.ndarray:
    """1-based rank of each entry in a stable descending sort."""
    order = np.argsort(-values, kind="stable")
    rank = np.empty(values.size, dtype=np.int64)
    rank[order] = np.arange(1, values.size + 1)
    return rank
