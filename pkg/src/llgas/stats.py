"""Streaming statistics and the tests that turn limit theorems into pass/fail checks.

Accumulators follow the Welford/Chan update-and-merge scheme and are the
reduction contract of the replica engine: workers update privately and merge
in replica order, so reports are bitwise reproducible.  The distributional
checks are a Gaussian CDF, the one-sample Kolmogorov-Smirnov statistic
against a centered normal, covariance estimation across path ensembles with
jackknife errors, and the environment-weighted pmf sums used for the
Cesaro-limit experiments.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import erf

from .cadlag import evaluate
from .environment import Environment

__all__ = [
    "MomentAccumulator",
    "PairAccumulator",
    "gaussian_cdf",
    "ks_statistic",
    "covariance_at",
    "covariance_from_pairs",
    "cesaro_sum",
]


@dataclass
class MomentAccumulator:
    """Mergeable running (count, mean, sum of squared deviations, min, max)."""

    count: int = 0
    mean: float = 0.0
    m2: float = 0.0
    min: float = math.inf
    max: float = -math.inf

    def update(self, x: float):
        self.count += 1
        delta = x - self.mean
        self.mean += delta / self.count
        self.m2 += delta * (x - self.mean)
        self.min = min(self.min, x)
        self.max = max(self.max, x)

    def update_many(self, xs):
        xs = np.asarray(xs, dtype=np.float64)
        if xs.size == 0:
            return
        other = MomentAccumulator(
            count=int(xs.size),
            mean=float(xs.mean()),
            m2=float(((xs - xs.mean()) ** 2).sum()),
            min=float(xs.min()),
            max=float(xs.max()),
        )
        self.merge(other)

    def merge(self, other: "MomentAccumulator"):
        if other.count == 0:
            return
        if self.count == 0:
            self.count, self.mean, self.m2 = other.count, other.mean, other.m2
            self.min, self.max = other.min, other.max
            return
        n = self.count + other.count
        delta = other.mean - self.mean
        self.m2 = self.m2 + other.m2 + delta * delta * self.count * other.count / n
        self.mean = (self.count * self.mean + other.count * other.mean) / n
        self.count = n
        self.min = min(self.min, other.min)
        self.max = max(self.max, other.max)

    def finalize(self) -> dict:
        if self.count == 0:
            raise ValueError("finalize on an empty accumulator")
        variance = self.m2 / (self.count - 1) if self.count > 1 else 0.0
        return {
            "count": self.count,
            "mean": self.mean,
            "variance": variance,
            "min": self.min,
            "max": self.max,
        }


@dataclass
class PairAccumulator:
    """Mergeable running cross-moment state for paired samples (u, v)."""

    count: int = 0
    mean_u: float = 0.0
    mean_v: float = 0.0
    co_m2: float = 0.0

    def update(self, u: float, v: float):
        self.count += 1
        du = u - self.mean_u
        self.mean_u += du / self.count
        self.mean_v += (v - self.mean_v) / self.count
        self.co_m2 += du * (v - self.mean_v)

    def merge(self, other: "PairAccumulator"):
        if other.count == 0:
            return
        if self.count == 0:
            self.count, self.mean_u, self.mean_v, self.co_m2 = (
                other.count,
                other.mean_u,
                other.mean_v,
                other.co_m2,
            )
            return
        n = self.count + other.count
        du = other.mean_u - self.mean_u
        dv = other.mean_v - self.mean_v
        self.co_m2 += other.co_m2 + du * dv * self.count * other.count / n
        self.mean_u = (self.count * self.mean_u + other.count * other.mean_u) / n
        self.mean_v = (self.count * self.mean_v + other.count * other.mean_v) / n
        self.count = n

    def finalize(self) -> dict:
        if self.count == 0:
            raise ValueError("finalize on an empty accumulator")
        cov = self.co_m2 / (self.count - 1) if self.count > 1 else 0.0
        return {"count": self.count, "mean_u": self.mean_u, "mean_v": self.mean_v, "covariance": cov}


def gaussian_cdf(x, sigma2: float):
    """CDF of a centered normal with variance sigma2."""
    if not sigma2 > 0:
        raise ValueError("variance must be positive")
    x = np.asarray(x, dtype=np.float64)
    out = 0.5 * (1.0 + erf(x / math.sqrt(2.0 * sigma2)))
    return out if out.ndim else float(out)


def ks_statistic(samples, sigma2: float) -> float:
    """Sup distance between the empirical CDF and a centered normal CDF."""
    xs = np.sort(np.asarray(samples, dtype=np.float64))
    m = xs.size
    if m == 0:
        raise ValueError("empty sample")
    cdf = gaussian_cdf(xs, sigma2)
    upper = np.arange(1, m + 1) / m - cdf
    lower = cdf - np.arange(0, m) / m
    return float(max(upper.max(), lower.max()))


def covariance_from_pairs(u, v) -> tuple[float, float]:
    """Sample covariance (count-1 divisor) with delete-one jackknife stderr."""
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    R = u.size
    if R < 100:
        raise ValueError("need at least 100 paired samples")
    su, sv, suv = u.sum(), v.sum(), float(u @ v)
    cov = (suv - su * sv / R) / (R - 1)
    loo = ((suv - u * v) - (su - u) * (sv - v) / (R - 1)) / (R - 2)
    se = math.sqrt((R - 1) / R * float(((loo - loo.mean()) ** 2).sum()))
    return float(cov), se


def covariance_at(paths, s: float, t: float) -> tuple[float, float]:
    """Covariance of (path(s), path(t)) across a path ensemble.

    ``paths`` may be any iterable of cadlag paths; it is consumed once, so
    generators of lazily built paths stream through without materializing the
    ensemble.
    """
    us: list[float] = []
    vs: list[float] = []
    for p in paths:
        us.append(evaluate(p, s))
        vs.append(evaluate(p, t))
    return covariance_from_pairs(np.array(us), np.array(vs))


def cesaro_sum(env: Environment, pmf: dict, beta: int) -> float:
    """Environment-weighted pmf sum: sum over k of zeta[k + beta] * pmf[k]."""
    ks = np.fromiter(pmf.keys(), dtype=np.int64, count=len(pmf))
    ps = np.fromiter(pmf.values(), dtype=np.float64, count=len(pmf))
    shifted = ks + beta
    if shifted.min() <= env.lo or shifted.max() > env.hi:
        raise ValueError("pmf support escapes the environment window")
    return float(np.dot(env.zeta_at(shifted), ps))
