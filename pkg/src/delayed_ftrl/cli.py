"""Command-line driver: ``run``, ``lowerbound`` and ``check``.

Configuration is a flat ``key=value`` file. Values are layered as
file < environment (``DFTRL_<KEY>``, e.g. ``DFTRL_D_MAX=10``) < command line
(flags and trailing ``key=value`` overrides).

Exit codes: 0 success, 1 invalid configuration, 2 runtime or solver failure,
3 a check (or lower-bound floor) failed.
"""
from __future__ import annotations

import argparse
import dataclasses
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from . import analysis, checks
from . import lower_bound as lb
from .engine import EngineFlags, run, spawn_seeds
from .environments import (Environment, ExplicitDelays, FixedDelay, ObliviousEnv, RandomDelays,
                           StochasticEnv, flip_stress_matrix, read_delay_list, read_loss_matrix)
from .ftrl_core import SolverError

ENV_PREFIX = "DFTRL_"
EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME, EXIT_CHECK = 0, 1, 2, 3
# not echoed into output headers, so results do not depend on them
_NO_ECHO = ("workers", "out", "seeds")


class ConfigError(ValueError):
    pass


def _opt(parse):
    return lambda s: None if s.strip().lower() in ("", "none") else parse(s)


def _floats(s: str) -> tuple[float, ...]:
    return tuple(float(v) for v in s.split(",") if v.strip())


def _ints(s: str) -> tuple[int, ...]:
    return tuple(int(v) for v in s.split(",") if v.strip())


def _bool(s: str) -> bool:
    v = s.strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {s!r}")


def _f(default, parse, **kw):
    return field(default=default, metadata={"parse": parse, **kw})


@dataclass
class RunConfig:
    regime: str = _f("stochastic", str)
    K: int = _f(2, int)
    T: int = _f(1000, int)
    d_max: int | None = _f(None, _opt(int), group="run")
    delay: str = _f("fixed:0", str, group="run")
    means: tuple | None = _f(None, _opt(_floats), group="run")
    gap: float = _f(0.2, float, group="run")
    loss_matrix: str | None = _f(None, _opt(str), group="run")
    generator: str | None = _f(None, _opt(str), group="run")
    stress_gap: float = _f(0.05, float, group="run")
    stress_block: int = _f(1000, int, group="run")
    seeds: tuple = _f((0,), _ints)
    snapshots: str = _f("off", str, group="run")
    paper_constants: bool = _f(False, _bool, group="run")
    asymmetric_gamma: str | None = _f(None, _opt(str), group="run")
    workers: int = _f(1, int)
    out: str = _f("out", str)
    # lower-bound games
    adversary: str = _f("tracking", str, group="lowerbound")
    actor: str = _f("expweights", str, group="lowerbound")
    actor_eta: float | None = _f(None, _opt(float), group="lowerbound")
    ranges: str | None = _f(None, _opt(str), group="lowerbound")
    permutation: str | None = _f(None, _opt(str), group="lowerbound")
    range_value: float = _f(1.0, float, group="lowerbound")
    bucket_delays: str | None = _f(None, _opt(str), group="lowerbound")
    slack: float | None = _f(None, _opt(float), group="lowerbound")

    def validate(self) -> "RunConfig":
        err = []
        if self.regime not in ("stochastic", "oblivious", "lowerbound"):
            err.append(f"regime: expected stochastic|oblivious|lowerbound, got {self.regime!r}")
        if self.K < 2:
            err.append(f"K: need K >= 2, got {self.K}")
        if self.T < 1:
            err.append(f"T: need T >= 1, got {self.T}")
        if self.d_max is not None and self.d_max < 0:
            err.append(f"d_max: must be >= 0, got {self.d_max}")
        if not self.seeds:
            err.append("seeds: need at least one seed")
        if self.workers < 1:
            err.append(f"workers: need >= 1, got {self.workers}")
        if self.snapshots not in ("off", "window", "full"):
            err.append(f"snapshots: expected off|window|full, got {self.snapshots!r}")
        kind, _, arg = self.delay.partition(":")
        if kind not in ("fixed", "random", "file"):
            err.append(f"delay: expected fixed:D, random:D or file:PATH, got {self.delay!r}")
        elif kind in ("fixed", "random"):
            if not arg.strip().lstrip("-").isdigit() or int(arg) < 0:
                err.append(f"delay: {kind} needs a non-negative integer, got {arg!r}")
        for name in ("loss_matrix", "asymmetric_gamma", "ranges", "permutation", "bucket_delays"):
            p = getattr(self, name)
            if p is not None and not Path(p).is_file():
                err.append(f"{name}: no such file {p!r}")
        if kind == "file" and not Path(arg).is_file():
            err.append(f"delay: no such file {arg!r}")
        if self.regime == "stochastic":
            if self.means is not None and len(self.means) != self.K:
                err.append(f"means: expected {self.K} values, got {len(self.means)}")
            if self.means is None and not 0.0 < self.gap <= 1.0:
                err.append(f"gap: must lie in (0, 1], got {self.gap}")
        if self.regime == "oblivious":
            if (self.loss_matrix is None) == (self.generator is None):
                err.append("loss_matrix/generator: oblivious runs need exactly one of them")
            if self.generator not in (None, "flip-stress"):
                err.append(f"generator: only 'flip-stress' is available, got {self.generator!r}")
        if self.regime == "lowerbound":
            if self.adversary not in ("tracking", "halving"):
                err.append(f"adversary: expected tracking|halving, got {self.adversary!r}")
            if self.actor not in ("expweights", "uniform", "ftl"):
                err.append(f"actor: expected expweights|uniform|ftl, got {self.actor!r}")
            if self.range_value < 0:
                err.append(f"range_value: must be >= 0, got {self.range_value}")
        if err:
            raise ConfigError("; ".join(err))
        return self

    def echo(self) -> list[str]:
        skip = "run" if self.regime == "lowerbound" else "lowerbound"
        return [f"{f.name}={_fmt(getattr(self, f.name))}" for f in dataclasses.fields(self)
                if f.name not in _NO_ECHO and f.metadata.get("group") != skip]


def _fmt(v) -> str:
    if isinstance(v, tuple):
        return ",".join(_fmt(x) for x in v)
    if isinstance(v, float):
        return format(v, ".17g")
    return str(v)


_FIELDS = {f.name: f for f in dataclasses.fields(RunConfig)}


def parse_kv_lines(lines: Sequence[str], where: str) -> dict[str, str]:
    out = {}
    for n, line in enumerate(lines, start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise ConfigError(f"{where}:{n}: expected key=value, got {line!r}")
        out[key.strip()] = value.strip()
    return out


def build_config(file_path: str | None = None, environ=None, overrides: dict | None = None) -> RunConfig:
    raw: dict[str, str] = {}
    if file_path is not None:
        p = Path(file_path)
        if not p.is_file():
            raise ConfigError(f"config: no such file {file_path!r}")
        raw.update(parse_kv_lines(p.read_text().splitlines(), file_path))
    environ = os.environ if environ is None else environ
    lower = {k.lower(): k for k in _FIELDS}
    for k, v in environ.items():
        if k.startswith(ENV_PREFIX) and k[len(ENV_PREFIX):].lower() in lower:
            raw[lower[k[len(ENV_PREFIX):].lower()]] = v
    raw.update(overrides or {})
    values = {}
    for key, text in raw.items():
        if key not in _FIELDS:
            raise ConfigError(f"{key}: unknown configuration key")
        try:
            values[key] = _FIELDS[key].metadata["parse"](str(text))
        except ValueError as e:
            raise ConfigError(f"{key}: cannot parse {text!r} ({e})") from None
    return RunConfig(**values).validate()


# ---------------------------------------------------------------------------
# run
# ---------------------------------------------------------------------------

COLUMNS = ("t", "arm", "loss", "sigma_t", "D_t", "eta_inv", "gamma_inv",
           "inst_regret", "cum_regret", "overlay_adv", "overlay_stoch")


def make_environment(cfg: RunConfig, seed: int) -> tuple[Environment, np.random.SeedSequence]:
    learner, loss_ss, delay_ss = spawn_seeds(seed)
    kind, _, arg = cfg.delay.partition(":")
    if kind == "fixed":
        delays = FixedDelay(int(arg))
    elif kind == "random":
        delays = RandomDelays(int(arg), delay_ss)
    else:
        d = read_delay_list(arg)
        if len(d) < cfg.T:
            raise ConfigError(f"delay: file {arg!r} has {len(d)} entries, need T={cfg.T}")
        delays = ExplicitDelays(tuple(d[:cfg.T]))
    if cfg.regime == "stochastic":
        if cfg.means is not None:
            means = np.array(cfg.means)
        else:
            means = np.full(cfg.K, 0.5 + cfg.gap / 2.0)
            means[0] = 0.5 - cfg.gap / 2.0
        try:
            losses = StochasticEnv(means, seed=loss_ss)
        except ValueError as e:
            raise ConfigError(f"means: {e}") from None
    else:
        if cfg.generator == "flip-stress":
            m = flip_stress_matrix(cfg.T, cfg.K, gap=cfg.stress_gap, block=cfg.stress_block)
        else:
            try:
                m = read_loss_matrix(cfg.loss_matrix)
            except ValueError as e:
                raise ConfigError(f"loss_matrix: {e}") from None
            if m.shape[1] != cfg.K:
                raise ConfigError(f"loss_matrix: has {m.shape[1]} columns, K={cfg.K}")
            if m.shape[0] < cfg.T:
                raise ConfigError(f"loss_matrix: has {m.shape[0]} rows, need T={cfg.T}")
            m = m[:cfg.T]
        losses = ObliviousEnv(m)
    return Environment(losses, delays), learner


def _read_gaps(path: str, K: int) -> np.ndarray:
    vals = [float(v) for v in Path(path).read_text().split() if v.strip()]
    if len(vals) != K:
        raise ConfigError(f"asymmetric_gamma: expected {K} gaps, got {len(vals)}")
    g = np.array(vals)
    if np.any(~(g > 0.0)) or np.any(g > 1.0):
        raise ConfigError("asymmetric_gamma: gaps must lie in (0, 1]; give the best arm a positive surrogate")
    return g


def run_seed(cfg: RunConfig, seed: int) -> dict:
    """Play one seed, write its CSV and return a summary (worker entry point)."""
    env, learner_seed = make_environment(cfg, seed)
    gaps = _read_gaps(cfg.asymmetric_gamma, cfg.K) if cfg.asymmetric_gamma else None
    flags = EngineFlags(snapshots=cfg.snapshots, gaps=gaps)
    d_max = cfg.d_max if cfg.d_max is not None else env.delays.d_max
    trace = run(env, cfg.T, seed=learner_seed, flags=flags, d_max=d_max, config={"seed": seed})
    curve = analysis.regret_curve(trace, env, explicit_constants=cfg.paper_constants)
    t = np.arange(1, cfg.T + 1)
    cols = [t, trace.arms, trace.losses, trace.sigma, trace.D, trace.eta_inv, trace.gamma_inv,
            trace.inst_regret, curve.cumulative, curve.overlay_adv]
    names = list(COLUMNS[:-1])
    if curve.overlay_stoch is not None:
        cols.append(curve.overlay_stoch)
        names.append("overlay_stoch")
    out = Path(cfg.out)
    header = [f"# {line}" for line in cfg.echo()] + [
        f"# seed={seed}",
        f"# overlay_constants={curve.meta['constants']}",
        ",".join(names),
    ]
    path = out / f"seed_{seed}.csv"
    with open(path, "w") as fh:
        fh.write("\n".join(header) + "\n")
        np.savetxt(fh, np.column_stack(cols), fmt="%.17g", delimiter=",")
    if trace.snapshots is not None:
        with open(out / f"seed_{seed}_x.csv", "w") as fh:
            fh.write("\n".join(header[:-1]) + "\n" + ",".join(f"x{i}" for i in range(cfg.K)) + "\n")
            np.savetxt(fh, trace.snapshots, fmt="%.17g", delimiter=",")
    summary = {
        "seed": seed, "regret": float(curve.cumulative[-1]), "sigma_max": trace.sigma_max,
        "D_T": int(trace.D[-1]), "truncated": int(trace.truncated.sum()),
        "d_max_violations": len(trace.d_max_violations), "cumulative": curve.cumulative,
    }
    if trace.drift_max_ratio is not None:
        summary["drift_max_ratio"] = trace.drift_max_ratio
    return summary


def _write_aggregate(cfg: RunConfig, results: list[dict]) -> None:
    out = Path(cfg.out)
    C = np.column_stack([r["cumulative"] for r in results])
    t = np.arange(1, C.shape[0] + 1)
    with open(out / "aggregate.csv", "w") as fh:
        fh.write("\n".join(f"# {line}" for line in cfg.echo()) + "\n")
        fh.write("# seeds=" + ",".join(str(r["seed"]) for r in results) + "\n")
        fh.write("t,mean,min,max\n")
        np.savetxt(fh, np.column_stack([t, C.mean(axis=1), C.min(axis=1), C.max(axis=1)]),
                   fmt="%.17g", delimiter=",")
    lines = [f"regime={cfg.regime} K={cfg.K} T={cfg.T} seeds={len(results)}"]
    for r in results:
        extra = f" drift={r['drift_max_ratio']:.6f}" if "drift_max_ratio" in r else ""
        warn = f" d_max_violations={r['d_max_violations']}" if r["d_max_violations"] else ""
        lines.append(f"seed={r['seed']} regret={r['regret']:.6f} sigma_max={r['sigma_max']} "
                     f"D_T={r['D_T']} truncated={r['truncated']}{extra}{warn}")
    lines.append(f"mean_regret={float(C[-1].mean()):.6f}")
    text = "\n".join(lines) + "\n"
    (out / "summary.txt").write_text(text)
    print(text, end="")


def cmd_run(cfg: RunConfig) -> int:
    if cfg.regime == "lowerbound":
        return cmd_lowerbound(cfg)
    Path(cfg.out).mkdir(parents=True, exist_ok=True)
    seeds = list(dict.fromkeys(cfg.seeds))
    if cfg.workers > 1 and len(seeds) > 1:
        with ProcessPoolExecutor(max_workers=min(cfg.workers, len(seeds))) as pool:
            results = list(pool.map(run_seed, [cfg] * len(seeds), seeds))
    else:
        results = [run_seed(cfg, s) for s in seeds]
    _write_aggregate(cfg, results)
    return EXIT_OK


# ---------------------------------------------------------------------------
# lower bound
# ---------------------------------------------------------------------------


def _lb_ranges(cfg: RunConfig) -> lb.LossRangeSequence:
    if cfg.ranges is not None:
        return lb.read_ranges(cfg.ranges, cfg.permutation)
    T = lb.n_halvings(cfg.K) if cfg.adversary == "halving" else cfg.T
    return lb.LossRangeSequence.uniform(T, cfg.range_value)


def _lb_game(cfg: RunConfig, ranges: lb.LossRangeSequence, seed: int) -> lb.GameReport:
    if cfg.adversary == "tracking":
        adv = lb.TrackingAdversary(cfg.K, ranges)
    else:
        adv = lb.HalvingAdversary(cfg.K, ranges, np.random.SeedSequence(seed))
    if cfg.actor == "expweights":
        eta = cfg.actor_eta
        if eta is None:
            eta = adv.eta if cfg.adversary == "tracking" and math.isfinite(adv.eta) else 1.0
        actor = lb.ExpWeightsActor(eta)
    elif cfg.actor == "uniform":
        actor = lb.UniformActor(cfg.K)
    else:
        actor = lb.FollowTheLeaderActor(cfg.K)
    bucket = None
    if cfg.bucket_delays is not None:
        bucket = read_delay_list(cfg.bucket_delays)
    return lb.run_full_info_game(actor, adv, ranges.T, cfg.K, ranges=ranges, bucket_delays=bucket)


def cmd_lowerbound(cfg: RunConfig) -> int:
    ranges = _lb_ranges(cfg)
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    seeds = list(dict.fromkeys(cfg.seeds))
    reports = []
    for seed in seeds:
        rep = _lb_game(cfg, ranges, seed)
        reports.append(rep)
        t = np.arange(1, ranges.T + 1)
        rng_col = np.array([ranges.range_at(s) for s in t])
        expected = np.sum(rep.plays * rep.losses, axis=1)
        with open(out / f"lowerbound_seed_{seed}.csv", "w") as fh:
            fh.write("\n".join(f"# {line}" for line in cfg.echo()) + f"\n# seed={seed}\n")
            fh.write(",".join(["t", "range"] + [f"loss_{i}" for i in range(cfg.K)] + ["expected_loss"]) + "\n")
            np.savetxt(fh, np.column_stack([t, rng_col, rep.losses, expected]), fmt="%.17g", delimiter=",")
    mean = float(np.mean([r.regret for r in reports]))
    floor = reports[0].floor
    slack = cfg.slack if cfg.slack is not None else (0.1 if cfg.adversary == "halving" else 0.0)
    ok = mean >= (1.0 - slack) * floor
    lines = [f"adversary={cfg.adversary} actor={cfg.actor} K={cfg.K} T={ranges.T} games={len(reports)}"]
    lines += [f"seed={s} regret={r.regret:.6f} regret_raw={r.regret_raw:.6f}" for s, r in zip(seeds, reports)]
    lines += [f"mean_regret={mean:.6f}", f"floor={floor:.6f}", f"slack={slack}",
              f"result={'pass' if ok else 'fail'}"]
    text = "\n".join(lines) + "\n"
    (out / "lowerbound_summary.txt").write_text(text)
    print(text, end="")
    return EXIT_OK if ok else EXIT_CHECK


# ---------------------------------------------------------------------------
# check
# ---------------------------------------------------------------------------


def cmd_check(suite: str, quick: bool = False, out: str | None = None) -> int:
    reports = checks.run_suite(suite, quick=quick)
    text = analysis.reports_to_csv(reports)
    if out is not None:
        Path(out).mkdir(parents=True, exist_ok=True)
        (Path(out) / f"check_{suite}.csv").write_text(text)
    print(text, end="")
    return EXIT_OK if all(r.passed for r in reports) else EXIT_CHECK


# ---------------------------------------------------------------------------
# argument parsing
# ---------------------------------------------------------------------------


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="delayed-ftrl", description=__doc__.split("\n")[0])
    sub = p.add_subparsers(dest="command", required=True)
    for name in ("run", "lowerbound"):
        s = sub.add_parser(name)
        s.add_argument("--config", metavar="PATH")
        s.add_argument("--seed", type=int, action="append", metavar="N",
                       help="repeat for several seeds")
        s.add_argument("--out", metavar="DIR")
        s.add_argument("--workers", type=int, metavar="N")
        s.add_argument("overrides", nargs="*", metavar="key=value")
        if name == "run":
            s.add_argument("--snapshots", nargs="?", const="window", choices=("off", "window", "full"),
                           help="record play distributions (default window when given)")
            s.add_argument("--paper-constants", action="store_true",
                           help="overlay the explicit-constant bounds instead of unit constants")
            s.add_argument("--asymmetric-gamma", metavar="PATH",
                           help="file of K positive gaps for per-arm negentropy rates")
    c = sub.add_parser("check")
    c.add_argument("suite", choices=checks.SUITES)
    c.add_argument("--quick", action="store_true", help="reduced sizes for a smoke run")
    c.add_argument("--out", metavar="DIR")
    return p


def _overrides(args) -> dict[str, str]:
    ov = parse_kv_lines(args.overrides, "command line")
    if args.seed:
        ov["seeds"] = ",".join(str(s) for s in args.seed)
    if args.out:
        ov["out"] = args.out
    if args.workers is not None:
        ov["workers"] = str(args.workers)
    if getattr(args, "snapshots", None):
        ov["snapshots"] = args.snapshots
    if getattr(args, "paper_constants", False):
        ov["paper_constants"] = "true"
    if getattr(args, "asymmetric_gamma", None):
        ov["asymmetric_gamma"] = args.asymmetric_gamma
    if args.command == "lowerbound":
        ov["regime"] = "lowerbound"
    return ov


def main(argv: Sequence[str] | None = None) -> int:
    args = _parser().parse_args(argv)
    try:
        if args.command == "check":
            return cmd_check(args.suite, args.quick, args.out)
        cfg = build_config(args.config, overrides=_overrides(args))
        if args.command == "lowerbound":
            return cmd_lowerbound(cfg)
        return cmd_run(cfg)
    except ConfigError as e:
        print(f"configuration error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except (SolverError, RuntimeError, ArithmeticError, ValueError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_RUNTIME
