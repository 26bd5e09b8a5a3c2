"""Verification batteries shared by the acceptance tests and ``cli check``.

Every battery returns a list of :class:`CheckReport`; defaults are the
acceptance sizes.
"""
from __future__ import annotations

import itertools
import math
import time
import warnings
from typing import Iterable

import numpy as np

from . import analysis, lower_bound as lb
from .engine import EngineFlags, importance_weighted_estimate, run, spawn_seeds
from .environments import Environment, FixedDelay, ObliviousEnv, StochasticEnv, flip_stress_matrix
from .ftrl_core import RegularizerWeights, kkt_residual, objective_value, solve_ftrl_full

CheckReport = analysis.CheckReport


# ---------------------------------------------------------------------------
# grid-search oracle for the FTRL objective
# ---------------------------------------------------------------------------


def _simplex_grid(K: int, n: int) -> np.ndarray:
    """All points with coordinates in {0, 1/n, ..., 1} summing to 1."""
    pts = [c for c in itertools.product(range(n + 1), repeat=K - 1) if sum(c) <= n]
    head = np.array(pts, dtype=np.float64) / n
    return np.column_stack([head, 1.0 - head.sum(axis=1)])


def _objective_rows(X: np.ndarray, L: np.ndarray, w: RegularizerWeights) -> np.ndarray:
    with np.errstate(divide="ignore", invalid="ignore"):
        xlogx = np.where(X > 0, X * np.log(np.where(X > 0, X, 1.0)), 0.0)
    return X @ L - 2.0 * w.eta_inv * np.sqrt(X).sum(axis=1) + (xlogx - X) @ w.gamma_inv


def grid_search_min(L, w: RegularizerWeights, step: float = 1e-4,
                    coarse: int = 40, shrink: int = 4, halfwidth: int = 3) -> tuple[float, np.ndarray]:
    """Minimum of the objective over nested simplex grids down to ``step``.

    A coarse grid covers the whole simplex, then each level re-grids a box of
    ``halfwidth`` old steps around the incumbent with a ``shrink``-times finer
    step. Every evaluated point is feasible, so the value never undercuts the
    true minimum.
    """
    L = np.asarray(L, dtype=np.float64)
    K = L.size
    if K == 1:
        x = np.ones(1)
        return objective_value(x, L, w), x
    X = _simplex_grid(K, coarse)
    vals = _objective_rows(X, L, w)
    best = X[np.argmin(vals)]
    h = 1.0 / coarse
    while h > step:
        h_new = max(h / shrink, step)
        offs = np.arange(-halfwidth * h, halfwidth * h + h_new / 2, h_new)
        grids = np.meshgrid(*[best[i] + offs for i in range(K - 1)], indexing="ij")
        head = np.column_stack([g.ravel() for g in grids])
        keep = np.all(head >= 0.0, axis=1) & (head.sum(axis=1) <= 1.0)
        head = head[keep]
        X = np.column_stack([head, 1.0 - head.sum(axis=1)])
        X = np.vstack([X, best])
        vals = _objective_rows(X, L, w)
        best = X[np.argmin(vals)]
        h = h_new
    return float(_objective_rows(best[None, :], L, w)[0]), best


def random_solver_instance(rng: np.random.Generator, K: int):
    L = rng.uniform(0.0, 10.0, K)
    eta_inv = float(np.exp(rng.uniform(np.log(0.1), np.log(100.0))))
    gamma_inv = rng.uniform(0.0, 50.0, K) if rng.random() < 0.5 else np.full(K, rng.uniform(0.0, 50.0))
    return L, RegularizerWeights(eta_inv, gamma_inv)


# ---------------------------------------------------------------------------
# batteries
# ---------------------------------------------------------------------------


def solver_battery(n: int = 100, seed: int = 20240601, step: float = 1e-4) -> list[CheckReport]:
    rng = np.random.default_rng(seed)
    worst_gap = worst_kkt = worst_norm = -math.inf
    failures = []
    t0 = time.perf_counter()
    for k in range(n):
        K = int(rng.choice([2, 3, 4]))
        L, w = random_solver_instance(rng, K)
        sol = solve_ftrl_full(L, w)
        grid_val, _ = grid_search_min(L, w, step=step)
        gap = objective_value(sol.x, L, w) - grid_val
        kkt = kkt_residual(sol.x, L, w, sol.nu)
        norm = abs(sol.x.sum() - 1.0)
        worst_gap, worst_kkt, worst_norm = max(worst_gap, gap), max(worst_kkt, kkt), max(worst_norm, norm)
        if gap > 1e-6 or kkt > 1e-8 or norm > 1e-10 or sol.x.min() <= 0:
            failures.append(k)
    elapsed = time.perf_counter() - t0
    return [
        CheckReport("solver-oracle", not failures,
                    {"instances": n, "failures": failures[:5], "worst_objective_gap": f"{worst_gap:.3e}",
                     "worst_kkt": f"{worst_kkt:.3e}", "worst_normalisation": f"{worst_norm:.3e}"}),
        CheckReport("solver-oracle-runtime", elapsed < 10.0, {"seconds": f"{elapsed:.2f}"}),
    ]


def solver_scale_check(K: int = 10_000, seed: int = 7, repeats: int = 5) -> list[CheckReport]:
    rng = np.random.default_rng(seed)
    L = rng.uniform(0.0, 10.0, K)
    w = RegularizerWeights(float(rng.uniform(0.1, 100.0)), rng.uniform(0.0, 50.0, K))
    solve_ftrl_full(L, w)  # JIT warm-up
    best = math.inf
    for _ in range(repeats):
        t0 = time.perf_counter()
        sol = solve_ftrl_full(L, w)
        best = min(best, time.perf_counter() - t0)
    kkt = kkt_residual(sol.x, L, w, sol.nu)
    norm = abs(sol.x.sum() - 1.0)
    ok = best < 0.05 and kkt <= 1e-8 and norm <= 1e-10 and sol.x.min() > 0
    return [CheckReport("solver-scale", ok, {"K": K, "seconds": f"{best:.4f}",
                                             "kkt": f"{kkt:.3e}", "normalisation": f"{norm:.3e}"})]


def stochastic_env(K: int, gap: float, seed) -> StochasticEnv:
    means = np.full(K, 0.5 + gap / 2.0)
    means[0] = 0.5 - gap / 2.0
    return StochasticEnv(means, seed=seed)


def run_stochastic(K: int, gap: float, d: int, T: int, seed: int, snapshots: str = "off"):
    learner, losses, _ = spawn_seeds(seed)
    env = Environment(stochastic_env(K, gap, losses), FixedDelay(d))
    return run(env, T, seed=learner, flags=EngineFlags(snapshots=snapshots), d_max=d), env


def drift_battery(Ks=(2, 8), delays=(5, 25), T: int = 20_000, seeds: Iterable[int] = range(20),
                  gap: float = 0.2) -> tuple[list[CheckReport], list[CheckReport]]:
    """Drift reports, plus the arrivals inequality on the same traces."""
    drift, arrivals = [], []
    for K, d in itertools.product(Ks, delays):
        worst, wit, ok = 1.0, None, True
        arr_ok = True
        for seed in seeds:
            tr, _ = run_stochastic(K, gap, d, T, seed, snapshots="window")
            rep = analysis.drift_check(tr)
            ok &= rep.passed
            if tr.drift_max_ratio > worst:
                worst, wit = tr.drift_max_ratio, (seed, tr.drift_witness)
            arr_ok &= analysis.arrivals_inequality_check(tr).passed
        drift.append(CheckReport(f"drift K={K} d={d}", ok, {"T": T, "max_ratio": repr(worst),
                                                             "witness_seed_s_t_arm": wit}))
        arrivals.append(CheckReport(f"arrivals K={K} d={d}", arr_ok, {"T": T, "runs": len(list(seeds))}))
    return drift, arrivals


def estimator_check(x=(0.1, 0.3, 0.6), losses=(0.7, 0.2, 0.9), n: int = 10**6,
                    seed: int = 11) -> list[CheckReport]:
    x = np.asarray(x, dtype=np.float64)
    ell = np.asarray(losses, dtype=np.float64)
    rng = np.random.default_rng(seed)
    arms = rng.choice(x.size, size=n, p=x)
    # column i of the estimates is ell_i / x_i on draws of arm i, else 0
    onehot = arms[:, None] == np.arange(x.size)[None, :]
    est = onehot * (ell / x)[None, :]
    assert np.allclose(est[0], importance_weighted_estimate(x, int(arms[0]), ell[arms[0]]))
    mean = est.mean(axis=0)
    se = est.std(axis=0, ddof=1) / math.sqrt(n)
    z = np.abs(mean - ell) / se
    return [CheckReport("estimator-unbiased", bool(np.all(z <= 5.0)),
                        {"mean": np.round(mean, 5).tolist(), "z": np.round(z, 3).tolist()})]


def sigma_max_battery(n: int = 1000, T: int = 12, d_hi: int = 4, seed: int = 3) -> list[CheckReport]:
    rng = np.random.default_rng(seed)
    fails, consistent = [], True
    for k in range(n):
        d = rng.integers(0, d_hi + 1, T).tolist()
        rep = analysis.sigma_max_bound_check(d)
        if not rep.passed:
            fails.append(d)
        consistent &= rep.witness["bound"] == rep.witness["greedy_bound"]
    first_only = [T] + [0] * (T - 1)
    smax = analysis.sigma_max_of(first_only)
    ex = analysis.skip_bound_exhaustive(first_only)
    return [
        CheckReport("sigma-max random", not fails, {"sequences": n, "T": T, "failures": fails[:3]}),
        CheckReport("sigma-max greedy=exhaustive", bool(consistent), {"sequences": n}),
        CheckReport("sigma-max first-round-delay example", smax == 1 and ex == 1,
                    {"sigma_max": smax, "bound": ex}),
    ]


def arrivals_battery(n: int = 200, T: int = 60, seed: int = 5) -> list[CheckReport]:
    """Exact inequality on random delay sequences (trace-free form)."""
    rng = np.random.default_rng(seed)
    bad = []
    for _ in range(n):
        d = rng.integers(0, rng.integers(1, 20), T).tolist()
        if not analysis.arrivals_inequality_from_delays(d).passed:
            bad.append(d)
    tight = analysis.arrivals_inequality_from_delays([3, 2, 1, 0, 0, 0])
    return [CheckReport("arrivals random", not bad, {"sequences": n, "T": T}),
            CheckReport("arrivals equality example", tight.passed, tight.witness)]


def regret_shape_check(T: int = 10_000, seeds: Iterable[int] = range(20), gap: float = 0.25,
                       d: int = 10, K: int = 2, multiplier: float = 100.0,
                       ratio_limit: float = 2.5) -> tuple[list[CheckReport], list[CheckReport]]:
    """Regret at 4T over regret at T, read off one 4T-round run per seed."""
    at_T, at_4T = [], []
    arr_ok = True
    sigma_max = 0
    for seed in seeds:
        tr, env = run_stochastic(K, gap, d, 4 * T, seed)
        cum = np.cumsum(tr.inst_regret)
        at_T.append(cum[T - 1])
        at_4T.append(cum[-1])
        sigma_max = max(sigma_max, tr.sigma_max)
        arr_ok &= analysis.arrivals_inequality_check(tr).passed
    m1, m4 = float(np.mean(at_T)), float(np.mean(at_4T))
    ratio = m4 / m1 if m1 > 0 else math.inf
    overlay = analysis.stochastic_overlay(4 * T, [gap] * (K - 1), sigma_max, d, K)
    soft_ok = m4 <= multiplier * overlay
    if not soft_ok:
        warnings.warn(f"mean regret {m4:.1f} above {multiplier} x stochastic overlay {overlay:.1f}")
    return ([CheckReport("regret log-growth ratio", ratio <= ratio_limit,
                         {"mean_T": f"{m1:.3f}", "mean_4T": f"{m4:.3f}", "ratio": f"{ratio:.4f}"}),
             CheckReport("regret below stochastic overlay (soft)", True,
                         {"within": soft_ok, "mean_4T": f"{m4:.3f}", "bound": f"{multiplier * overlay:.1f}"})],
            [CheckReport("arrivals regret-shape runs", arr_ok, {"runs": len(at_T)})])


def adversarial_sanity_check(T: int = 40_000, K: int = 4, d: int = 20, seeds: Iterable[int] = range(10),
                             multiplier: float = 20.0) -> list[CheckReport]:
    env = Environment(ObliviousEnv(flip_stress_matrix(T, K)), FixedDelay(d))
    regrets, Dmax = [], 0
    for seed in seeds:
        learner, _, _ = spawn_seeds(seed)
        tr = run(env, T, seed=learner)
        regrets.append(float(tr.inst_regret.sum()))
        Dmax = max(Dmax, int(tr.D[-1]))
    mean = float(np.mean(regrets))
    overlay = analysis.adversarial_overlay(T, K, Dmax, d)
    ok = mean <= multiplier * overlay
    if not ok:
        warnings.warn(f"mean adversarial regret {mean:.1f} above {multiplier} x overlay {overlay:.1f}")
    return [CheckReport("adversarial regret below overlay (soft)", True,
                        {"within": ok, "mean": f"{mean:.3f}", "bound": f"{multiplier * overlay:.1f}"})]


def adversary_direction_battery(n: int = 10_000, seed: int = 13) -> list[CheckReport]:
    rng = np.random.default_rng(seed)
    worst_mean, worst_var, in_box = 0.0, math.inf, True
    done = 0
    while done < n:
        K = int(rng.integers(2, 12))
        x = rng.dirichlet(np.full(K, rng.choice([0.3, 1.0, 3.0])))
        if x.max() > 2.0 / 3.0:
            continue
        ell = lb.adv_loss_direction(x)
        worst_mean = max(worst_mean, abs(float(x @ ell)))
        worst_var = min(worst_var, float(x @ ell**2))
        in_box &= bool(np.all(np.abs(ell) <= 1.0))
        done += 1
    return [CheckReport("adversary direction", worst_mean <= 1e-12 and worst_var >= 0.5 - 1e-12 and in_box,
                        {"points": n, "max_abs_mean": f"{worst_mean:.2e}", "min_variance": repr(worst_var)})]


def random_nonincreasing_delays(rng: np.random.Generator, T: int) -> list[int]:
    d = np.sort(rng.integers(0, rng.integers(1, T + 2), T))[::-1]
    return np.minimum(d, T + 1 - np.arange(1, T + 1)).tolist()


def bucket_battery(n: int = 1000, T_max: int = 200, seed: int = 17) -> list[CheckReport]:
    rng = np.random.default_rng(seed)
    bad = []
    for _ in range(n):
        T = int(rng.integers(1, T_max + 1))
        d = random_nonincreasing_delays(rng, T)
        v = lb.bucketing_violations(d, lb.bucket_decompose(d))
        if v:
            bad.append((d, v))
    return [CheckReport("buckets", not bad, {"sequences": n, "T_max": T_max,
                                             "first_failure": bad[0][1] if bad else None})]


def lower_bound_check(K: int = 16, T: int = 4096, halving_K: int = 4, replications: int = 1000,
                      seed: int = 19) -> list[CheckReport]:
    ranges = lb.LossRangeSequence.uniform(T)
    adv = lb.TrackingAdversary(K, ranges)
    rep = lb.run_full_info_game(lb.ExpWeightsActor(adv.eta), adv, T, K)
    k = lb.n_halvings(K)
    target = math.sqrt((T - k) * math.log(K)) / 32.0
    ss = np.random.SeedSequence(seed).spawn(replications)
    h_ranges = lb.LossRangeSequence.uniform(lb.n_halvings(halving_K))
    regrets = [lb.run_full_info_game(lb.UniformActor(halving_K),
                                     lb.HalvingAdversary(halving_K, h_ranges, s),
                                     h_ranges.T, halving_K).regret for s in ss]
    mean = float(np.mean(regrets))
    return [
        CheckReport("lower-bound tracking adversary", rep.regret >= target,
                    {"K": K, "T": T, "regret": f"{rep.regret:.4f}", "target": f"{target:.4f}",
                     "regret_floor": f"{rep.floor:.4f}"}),
        CheckReport("lower-bound halving", mean >= 0.9,
                    {"K": halving_K, "replications": replications, "mean_regret": f"{mean:.4f}"}),
    ]


SUITES = ("solver", "drift", "sigma-max", "arrivals", "adversary", "buckets", "all")


def run_suite(name: str, quick: bool = False) -> list[CheckReport]:
    if name not in SUITES:
        raise ValueError(f"unknown suite {name!r}; choose from {', '.join(SUITES)}")
    names = SUITES[:-1] if name == "all" else (name,)
    out: list[CheckReport] = []
    for s in names:
        if s == "solver":
            out += solver_battery(n=20 if quick else 100)
            out += solver_scale_check()
        elif s == "drift":
            if quick:
                d, _ = drift_battery(T=2000, seeds=range(2))
            else:
                d, _ = drift_battery()
            out += d
        elif s == "sigma-max":
            out += sigma_max_battery(n=100 if quick else 1000)
        elif s == "arrivals":
            out += arrivals_battery()
            _, a = drift_battery(Ks=(2,), delays=(5,), T=2000 if quick else 20_000, seeds=range(2))
            out += a
        elif s == "adversary":
            out += adversary_direction_battery(n=1000 if quick else 10_000)
            out += estimator_check(n=10**5 if quick else 10**6)
            out += lower_bound_check(replications=100 if quick else 1000)
        elif s == "buckets":
            out += bucket_battery(n=100 if quick else 1000)
    return out
