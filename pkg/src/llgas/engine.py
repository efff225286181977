"""Experiment orchestration: configs, replica streams, bundles, reports.

Every replica owns a counter-based random stream keyed by (seed, replica id),
so each simulated quantity is a pure function of the config and seed no
matter how replicas are grouped into chunks or spread over workers.  Chunk
size is a fixed constant and reduction happens in chunk order, which makes
report bytes reproducible and independent of the worker count.  The worker
count itself is capped by the LLGAS_THREADS environment variable (0 = auto,
unset = serial).
"""

from __future__ import annotations

import json
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from importlib import resources

import numpy as np

from . import __version__
from .environment import DistanceLaw, Environment, analytic_ell, extend, generate
from .gas import build_gas, n_of_t, rescale_discrete
from .stats import MomentAccumulator, covariance_at, cesaro_sum, ks_statistic
from .walks import (
    JumpLaw,
    WalkPath,
    exact_pmf,
    jump_moments,
    martingale_coeffs,
    reinforced_ensemble,
    reinforced_exact_dist,
    sample_steps,
    symmetric_walk_pmf,
    variance_recursion,
)

__all__ = [
    "ExperimentConfig",
    "Report",
    "CheckResult",
    "rng_for_replica",
    "run_experiment",
    "load_bundled_config",
    "config_from_dict",
    "BUNDLES",
]

_CHUNK = 1024  # fixed replica chunk; grouping only, never affects values
_MASK64 = 0xFFFFFFFFFFFFFFFF
_ENV_SALT = 0xD1B54A32D192ED03

BUNDLES = ("clt-discrete", "clt-continuous", "clt-reinforced", "fclt", "lln", "cesaro")


def rng_for_replica(seed: int, replica_id: int) -> np.random.Generator:
    """Independent reproducible stream for one replica.

    Realized with a keyed counter-based generator: the stream state is the
    pure function key = (seed, replica id) of its arguments, so distinct
    pairs never share a stream and recreation is exact.
    """
    key = np.array([seed & _MASK64, replica_id & _MASK64], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


def _env_seed(seed: int, replica_id: int | None = None) -> int:
    base = (seed ^ _ENV_SALT) & _MASK64
    if replica_id is not None:
        base = (base + 2 * replica_id + 1) & _MASK64
    return base


@dataclass(frozen=True)
class ExperimentConfig:
    """Declarative description of one verification experiment."""

    bundle: str
    environment: DistanceLaw
    seed: int
    replicas: int = 1
    horizon: int = 1
    walk: JumpLaw | None = None
    reinforced_p: float | None = None
    mode: str = "discrete"
    checks: tuple[dict, ...] = ()
    window: float = 4.0
    fixed_environment: bool = True
    failure_budget: float = 0.001
    time_horizon: float | None = None
    betas: tuple[int, ...] = ()
    pairs: tuple[tuple[float, float], ...] = ()
    recursion_horizon: int = 0
    nu_horizon: int = 0
    qv_replicas: int = 0

    def __post_init__(self):
        if self.bundle not in BUNDLES:
            raise ValueError(f"unknown bundle {self.bundle!r}; known: {BUNDLES}")
        if self.replicas < 1:
            raise ValueError("replicas must be >= 1")
        if self.horizon < 1:
            raise ValueError("horizon must be >= 1")
        if not self.checks:
            raise ValueError("config must declare at least one check")
        if self.walk is None and self.reinforced_p is None:
            raise ValueError("config needs a walk law or a reinforced memory parameter")

    def to_json_dict(self) -> dict:
        d = {
            "bundle": self.bundle,
            "environment": self.environment.to_json_dict(),
            "seed": self.seed,
            "replicas": self.replicas,
            "horizon": self.horizon,
            "mode": self.mode,
            "checks": [dict(c) for c in self.checks],
            "window": self.window,
            "fixed_environment": self.fixed_environment,
            "failure_budget": self.failure_budget,
        }
        if self.walk is not None:
            d["walk"] = self.walk.to_json_dict()
        if self.reinforced_p is not None:
            d["walk"] = {"kind": "reinforced", "p": self.reinforced_p}
        if self.time_horizon is not None:
            d["time_horizon"] = self.time_horizon
        if self.betas:
            d["betas"] = list(self.betas)
        if self.pairs:
            d["pairs"] = [list(p) for p in self.pairs]
        for k in ("recursion_horizon", "nu_horizon", "qv_replicas"):
            if getattr(self, k):
                d[k] = getattr(self, k)
        return d


def config_from_dict(d: dict, overrides: dict | None = None) -> ExperimentConfig:
    d = dict(d)
    if overrides:
        d.update({k: v for k, v in overrides.items() if v is not None})
    walk = d.get("walk")
    jump_law = None
    p = None
    if walk is not None:
        if walk.get("kind") == "reinforced":
            p = float(walk["p"])
        else:
            jump_law = JumpLaw.from_json_dict(walk)
    return ExperimentConfig(
        bundle=d["bundle"],
        environment=DistanceLaw.from_json_dict(d["environment"]),
        seed=int(d["seed"]),
        replicas=int(d.get("replicas", 1)),
        horizon=int(d.get("horizon", 1)),
        walk=jump_law,
        reinforced_p=p,
        mode=d.get("mode", "discrete"),
        checks=tuple(dict(c) for c in d.get("checks", ())),
        window=float(d.get("window", 4.0)),
        fixed_environment=bool(d.get("fixed_environment", True)),
        failure_budget=float(d.get("failure_budget", 0.001)),
        time_horizon=float(d["time_horizon"]) if "time_horizon" in d else None,
        betas=tuple(int(b) for b in d.get("betas", ())),
        pairs=tuple((float(a), float(b)) for a, b in d.get("pairs", ())),
        recursion_horizon=int(d.get("recursion_horizon", 0)),
        nu_horizon=int(d.get("nu_horizon", 0)),
        qv_replicas=int(d.get("qv_replicas", 0)),
    )


def load_bundled_config(name: str, overrides: dict | None = None) -> ExperimentConfig:
    """Load one of the packaged default configs by file stem or bundle name."""
    stem = name.replace("-", "_")
    ref = resources.files("llgas.configs").joinpath(f"{stem}.json")
    if not ref.is_file():
        raise FileNotFoundError(f"no bundled config named {name!r}")
    return config_from_dict(json.loads(ref.read_text()), overrides)


@dataclass(frozen=True)
class CheckResult:
    stat: str
    estimate: float
    stderr: float
    target: float
    tolerance: float
    passed: bool

    def to_json_dict(self) -> dict:
        return {
            "stat": self.stat,
            "estimate": self.estimate,
            "stderr": self.stderr,
            "target": self.target,
            "tolerance": self.tolerance,
            "pass": self.passed,
        }


@dataclass(frozen=True)
class Report:
    """Experiment output; canonical bytes are a pure function of (config, seed)."""

    config: ExperimentConfig
    checks: tuple[CheckResult, ...]
    replicas_failed: int = 0

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def to_json_dict(self) -> dict:
        return {
            "schema": "llgas-report-1",
            "bundle": self.config.bundle,
            "config": self.config.to_json_dict(),
            "checks": [c.to_json_dict() for c in self.checks],
            "pass": self.passed,
            "meta": {"package": "llgas", "version": __version__, "replicas_failed": self.replicas_failed},
        }

    def canonical_json(self) -> str:
        return json.dumps(self.to_json_dict(), sort_keys=True, indent=2) + "\n"

    def write(self, path: str):
        with open(path, "w") as fh:
            fh.write(self.canonical_json())


def _worker_count() -> int:
    raw = os.environ.get("LLGAS_THREADS", "")
    if raw == "":
        return 1
    k = int(raw)
    if k == 0:
        return os.cpu_count() or 1
    return max(1, min(k, os.cpu_count() or 1))


def _chunks(replicas: int):
    return [(lo, min(lo + _CHUNK, replicas)) for lo in range(0, replicas, _CHUNK)]


def _map_chunks(fn, cfg: ExperimentConfig, replicas: int) -> list:
    """Apply fn(cfg, lo, hi) per fixed-size chunk, optionally in parallel.

    Results come back in chunk order regardless of scheduling, so downstream
    reductions are deterministic.
    """
    spans = _chunks(replicas)
    workers = _worker_count()
    if workers <= 1 or len(spans) <= 1:
        return [fn(cfg, lo, hi) for lo, hi in spans]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        futures = [pool.submit(fn, cfg, lo, hi) for lo, hi in spans]
        return [f.result() for f in futures]


# ---------------------------------------------------------------------------
# ensemble primitives (top-level functions so worker processes can pickle them)


def _shared_environment(cfg: ExperimentConfig, lo: int, hi: int) -> Environment:
    return generate(cfg.environment, min(lo, 0), max(hi, 0), _env_seed(cfg.seed))


def _chunk_markov_finals(cfg: ExperimentConfig, lo: int, hi: int) -> np.ndarray:
    n = cfg.horizon
    out = np.empty(hi - lo, dtype=np.int64)
    for i, rid in enumerate(range(lo, hi)):
        out[i] = sample_steps(cfg.walk, n, rng_for_replica(cfg.seed, rid)).sum()
    return out


def _chunk_continuous(cfg: ExperimentConfig, lo: int, hi: int) -> tuple[np.ndarray, np.ndarray, int]:
    """Interpolated positions at the fixed time for one replica chunk.

    Returns (values, ok mask, fallback count); replicas whose flight budget
    ran out even after one retry are flagged and excluded by the caller.
    """
    t = float(cfg.time_horizon)
    ell = analytic_ell(cfg.environment)
    _, _, abs_mean = jump_moments(cfg.walk)
    base_steps = int(1.6 * t / (ell * abs_mean)) + 64
    env = _shared_environment(cfg, -8, 8) if cfg.fixed_environment else None
    values = np.empty(hi - lo)
    ok = np.ones(hi - lo, dtype=bool)
    failures = 0
    for i, rid in enumerate(range(lo, hi)):
        rng = rng_for_replica(cfg.seed, rid)
        steps = sample_steps(cfg.walk, base_steps, rng)
        for _attempt in range(2):
            S = np.concatenate([[0], np.cumsum(steps)])
            s_lo, s_hi = int(S.min()), int(S.max())
            if cfg.fixed_environment:
                if s_lo < env.lo or s_hi > env.hi:
                    env = extend(env, min(s_lo, env.lo), max(s_hi, env.hi))
                local = env
            else:
                local = generate(cfg.environment, min(s_lo, 0), max(s_hi, 0), _env_seed(cfg.seed, rid))
            X = local.omega[S - local.lo]
            T = np.concatenate([[0.0], np.cumsum(np.abs(np.diff(X)))])
            if T[-1] > t:
                k = int(np.searchsorted(T, t, side="right"))
                sgn = math.copysign(1.0, X[k] - X[k - 1])
                values[i] = X[k - 1] + sgn * (t - T[k - 1])
                break
            steps = np.concatenate([steps, sample_steps(cfg.walk, base_steps, rng)])
        else:
            ok[i] = False
            failures += 1
    return values, ok, failures


def _chunk_reinforced(cfg: ExperimentConfig, lo: int, hi: int) -> dict:
    rngs = [rng_for_replica(cfg.seed, rid) for rid in range(lo, hi)]
    return reinforced_ensemble(cfg.reinforced_p, cfg.horizon, rngs, with_qv=True)


def _check_budget(cfg: ExperimentConfig, failures: int):
    if failures > cfg.failure_budget * cfg.replicas:
        raise RuntimeError(
            f"{failures} of {cfg.replicas} replicas exhausted their horizon "
            f"(budget {cfg.failure_budget:.2%})"
        )


# ---------------------------------------------------------------------------
# bundle runners: each returns {stat name: (estimate, stderr)} plus failures


def _variance_and_ks(values: np.ndarray, sigma2_target: float) -> dict:
    acc = MomentAccumulator()
    acc.update_many(values)
    fin = acc.finalize()
    var = fin["variance"]
    se_var = var * math.sqrt(2.0 / (fin["count"] - 1))  # normal-theory scale, informational
    ks = ks_statistic(values, sigma2_target)
    return {"variance": (var, se_var), "ks": (ks, 0.0)}


def _ks_target(cfg: ExperimentConfig) -> float:
    for c in cfg.checks:
        if c["stat"] == "ks" and "sigma2" in c:
            return float(c["sigma2"])
    for c in cfg.checks:
        if c["stat"] == "variance":
            return float(c["target"])
    raise ValueError("ks check needs a sigma2 (or a variance check to borrow the target from)")


def _run_clt_discrete(cfg: ExperimentConfig) -> tuple[dict, int]:
    n = cfg.horizon
    ell = analytic_ell(cfg.environment)
    mean, _, _ = jump_moments(cfg.walk)
    finals = np.concatenate(_map_chunks(_chunk_markov_finals, cfg, cfg.replicas))
    if cfg.fixed_environment:
        env = _shared_environment(cfg, int(finals.min()), int(finals.max()))
        X = env.omega[finals - env.lo]
    else:
        X = np.empty(cfg.replicas)
        for rid, s in enumerate(finals):
            env = generate(cfg.environment, min(int(s), 0), max(int(s), 0), _env_seed(cfg.seed, rid))
            X[rid] = env.omega_at(int(s))
    values = (X - ell * mean * n) / math.sqrt(n)
    return _variance_and_ks(values, _ks_target(cfg)), 0


def _run_clt_continuous(cfg: ExperimentConfig) -> tuple[dict, int]:
    if cfg.time_horizon is None:
        raise ValueError("continuous bundle needs a time_horizon")
    t = float(cfg.time_horizon)
    ell = analytic_ell(cfg.environment)
    mean, _, _ = jump_moments(cfg.walk)
    parts = _map_chunks(_chunk_continuous, cfg, cfg.replicas)
    values = np.concatenate([p[0] for p in parts])
    ok = np.concatenate([p[1] for p in parts])
    failures = sum(p[2] for p in parts)
    _check_budget(cfg, failures)
    values = (values[ok] - ell * mean * t) / math.sqrt(t)
    return _variance_and_ks(values, _ks_target(cfg)), failures


def _run_clt_reinforced(cfg: ExperimentConfig) -> tuple[dict, int]:
    if cfg.reinforced_p is None:
        raise ValueError("reinforced bundle needs a reinforced walk")
    p = cfg.reinforced_p
    n = cfg.horizon
    ell = analytic_ell(cfg.environment)
    stats: dict = {}

    if cfg.recursion_horizon:
        u = variance_recursion(p, cfg.recursion_horizon)
        stats["recursion-limit"] = (float(u[-1] / cfg.recursion_horizon), 0.0)

    gap = 0.0
    srw = JumpLaw(support=(1, -1), probs=(0.5, 0.5))
    for m in range(1, 11):
        ref = exact_pmf(srw, m)
        got = reinforced_exact_dist(0.5, m)
        keys = set(ref) | set(got)
        gap = max(gap, max(abs(ref.get(k, 0.0) - got.get(k, 0.0)) for k in keys))
    stats["reduction-gap"] = (gap, 0.0)

    parts = _map_chunks(_chunk_reinforced, cfg, cfg.replicas)
    finals = np.concatenate([prt["final"] for prt in parts])
    root_n = math.sqrt(n)
    acc = MomentAccumulator()
    acc.update_many(finals / root_n)
    fin = acc.finalize()
    stats["walk-variance"] = (fin["variance"], fin["variance"] * math.sqrt(2.0 / (fin["count"] - 1)))

    env = _shared_environment(cfg, int(finals.min()), int(finals.max()))
    gas_vals = env.omega[finals - env.lo] / root_n
    acc_g = MomentAccumulator()
    acc_g.update_many(gas_vals)
    fin_g = acc_g.finalize()
    stats["gas-variance"] = (fin_g["variance"], fin_g["variance"] * math.sqrt(2.0 / (fin_g["count"] - 1)))

    a_seq, nu_seq = martingale_coeffs(p, n)
    m_scaled = a_seq[-1] * finals / math.sqrt(nu_seq[-1])
    stats["mart-ks"] = (ks_statistic(m_scaled, 1.0), 0.0)

    if cfg.qv_replicas:
        qv_cfg_reps = min(cfg.qv_replicas, cfg.replicas)
        corr = np.concatenate([prt["qv_correction"] for prt in parts])[:qv_cfg_reps]
        qv_final = nu_seq[-1] - corr  # correction already carries the a^2 factor
        violations = int(np.sum(qv_final > nu_seq[-1] + 1e-12))
        stats["qv-violations"] = (float(violations), 0.0)

    if cfg.nu_horizon:
        a = 2.0 * p - 1.0
        _, nu_big = martingale_coeffs(p, cfg.nu_horizon)
        stats["nu-limit"] = (float(cfg.nu_horizon ** (2 * a - 1) * nu_big[-1]), 0.0)

    return stats, 0


def _path_stream_markov(cfg: ExperimentConfig, env: Environment, n_scale: int, steps: int):
    ell = analytic_ell(cfg.environment)
    mean, _, _ = jump_moments(cfg.walk)
    for rid in range(cfg.replicas):
        walk = WalkPath.from_steps(sample_steps(cfg.walk, steps, rng_for_replica(cfg.seed, rid)))
        yield rescale_discrete(build_gas(env, walk), n_scale, ell, mean, window=cfg.window)


def _path_stream_reinforced(cfg: ExperimentConfig, env: Environment, n_scale: int, steps: int):
    ell = analytic_ell(cfg.environment)
    for lo, hi in _chunks(cfg.replicas):
        rngs = [rng_for_replica(cfg.seed, rid) for rid in range(lo, hi)]
        out = reinforced_ensemble(cfg.reinforced_p, steps, rngs, full_paths=True)
        for row in out["paths"]:
            walk = WalkPath(steps=np.diff(row), partial_sums=row)
            yield rescale_discrete(build_gas(env, walk), n_scale, ell, 0.0, window=cfg.window)


def _run_fclt(cfg: ExperimentConfig) -> tuple[dict, int]:
    if not cfg.pairs:
        raise ValueError("fclt bundle needs query pairs")
    n_scale = cfg.horizon
    steps = int(math.floor(n_scale * cfg.window))
    # generous pre-extension so the per-replica gas build rarely re-extends
    span = int(6.0 * math.sqrt(steps) * max(abs(k) for k in (cfg.walk.support if cfg.walk else (1,))))
    env = _shared_environment(cfg, -span, span)
    stats = {}
    for s, t in cfg.pairs:
        if cfg.walk is not None:
            stream = _path_stream_markov(cfg, env, n_scale, steps)
        else:
            stream = _path_stream_reinforced(cfg, env, n_scale, steps)
        cov, se = covariance_at(stream, s, t)
        stats[f"cov[{s:g},{t:g}]"] = (cov, se)
    return stats, 0


def _run_lln(cfg: ExperimentConfig) -> tuple[dict, int]:
    n = cfg.horizon
    env = _shared_environment(cfg, -8, 8)
    walk = WalkPath.from_steps(sample_steps(cfg.walk, n, rng_for_replica(cfg.seed, 0)))
    traj = build_gas(env, walk)
    stats = {"t-ratio": (traj.horizon / n, 0.0)}
    if cfg.time_horizon is not None:
        t = float(cfg.time_horizon)
        if t >= traj.horizon:
            raise RuntimeError("trajectory horizon too short for the requested time")
        stats["inverse-rate"] = (t / n_of_t(traj, t), 0.0)
    return stats, 0


def _run_cesaro(cfg: ExperimentConfig) -> tuple[dict, int]:
    if not cfg.betas:
        raise ValueError("cesaro bundle needs beta offsets")
    n = cfg.horizon
    if cfg.walk is not None and set(cfg.walk.support) == {1, -1} and cfg.walk.probs == (0.5, 0.5):
        pmf = symmetric_walk_pmf(n)
    elif n <= 64 and cfg.walk is not None:
        pmf = exact_pmf(cfg.walk, n)
    else:
        raise ValueError("cesaro bundle needs the symmetric +-1 walk (or horizon <= 64)")
    margin = max(abs(b) for b in cfg.betas) + 1
    env = _shared_environment(cfg, -(n + margin), n + margin)
    return {f"cesaro[{b}]": (cesaro_sum(env, pmf, b), 0.0) for b in cfg.betas}, 0


_RUNNERS = {
    "clt-discrete": _run_clt_discrete,
    "clt-continuous": _run_clt_continuous,
    "clt-reinforced": _run_clt_reinforced,
    "fclt": _run_fclt,
    "lln": _run_lln,
    "cesaro": _run_cesaro,
}


def _evaluate_check(spec: dict, stats: dict) -> CheckResult:
    name = spec["stat"]
    if name not in stats:
        raise ValueError(f"check {name!r} is not produced by this bundle; have {sorted(stats)}")
    estimate, stderr = stats[name]
    if "rel_tol" in spec:
        target = float(spec["target"])
        tol = float(spec["rel_tol"])
        passed = abs(estimate - target) <= tol * abs(target)
        return CheckResult(name, estimate, stderr, target, tol, bool(passed))
    if "abs_tol" in spec:
        target = float(spec["target"])
        tol = float(spec["abs_tol"])
        passed = abs(estimate - target) <= tol
        return CheckResult(name, estimate, stderr, target, tol, bool(passed))
    if "max" in spec:
        tol = float(spec["max"])
        return CheckResult(name, estimate, stderr, float(spec.get("target", 0.0)), tol, bool(estimate <= tol))
    raise ValueError(f"check {name!r} needs one of rel_tol, abs_tol, max")


def run_experiment(config: ExperimentConfig) -> Report:
    """Run a bundle's replicas, reduce in replica order, evaluate every check."""
    runner = _RUNNERS[config.bundle]
    stats, failures = runner(config)
    checks = tuple(_evaluate_check(spec, stats) for spec in config.checks)
    return Report(config=config, checks=checks, replicas_failed=failures)
