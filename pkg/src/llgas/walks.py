"""Underlying random walks: memoryless jumps and the step-reinforced walk.

The memoryless walk takes i.i.d. integer jumps from a finite-support law.
The reinforced walk repeats a uniformly chosen past step with probability p
and reverses it otherwise; only the counts (n, n_plus) enter the conditional
step law, so sampling runs in O(1) memory per step.  Small-instance exact
oracles (n-fold convolution, dynamic programming on the sign counts) back the
samplers, and the martingale scale sequence a_n with its quadratic-variation
bookkeeping provides the diagnostics used by the verification experiments.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import gammaln

__all__ = [
    "JumpLaw",
    "WalkPath",
    "ReinforcedState",
    "MartingaleDiag",
    "jump_moments",
    "sample_markov",
    "exact_pmf",
    "symmetric_walk_pmf",
    "sample_reinforced",
    "reinforced_exact_dist",
    "variance_recursion",
    "martingale_coeffs",
    "martingale_coeffs_product",
    "martingale_path",
    "reinforced_ensemble",
]

_PROB_TOL = 1e-12
_DIFFUSIVE_LIMIT = 0.75


@dataclass(frozen=True)
class JumpLaw:
    """Finite-support jump distribution on the integers."""

    support: tuple[int, ...]
    probs: tuple[float, ...]

    def __post_init__(self):
        if len(self.support) == 0 or len(self.support) != len(self.probs):
            raise ValueError("support and probs must be nonempty and aligned")
        if any(int(k) != k for k in self.support):
            raise ValueError("support must be integer")
        if len(set(self.support)) != len(self.support):
            raise ValueError("support values must be distinct")
        if any(p < 0 for p in self.probs):
            raise ValueError("negative probability")
        if abs(sum(self.probs) - 1.0) > _PROB_TOL:
            raise ValueError("probabilities must sum to 1")
        p0 = sum(p for k, p in zip(self.support, self.probs) if k == 0)
        if p0 >= 1.0 - _PROB_TOL:
            raise ValueError("degenerate law: all mass on the zero jump")

    def to_json_dict(self) -> dict:
        return {"support": [int(k) for k in self.support], "probs": list(self.probs)}

    @classmethod
    def from_json_dict(cls, d: dict) -> "JumpLaw":
        return cls(tuple(int(k) for k in d["support"]), tuple(float(p) for p in d["probs"]))


@dataclass(frozen=True)
class WalkPath:
    """Realized walk: steps V_1..V_n and partial sums S_0..S_n."""

    steps: np.ndarray
    partial_sums: np.ndarray

    @property
    def n(self) -> int:
        return len(self.steps)

    @staticmethod
    def from_steps(steps: np.ndarray) -> "WalkPath":
        steps = np.asarray(steps, dtype=np.int64)
        sums = np.concatenate([[0], np.cumsum(steps)])
        steps.flags.writeable = False
        sums.flags.writeable = False
        return WalkPath(steps=steps, partial_sums=sums)


@dataclass
class ReinforcedState:
    """O(1) memory state of the reinforced walk: step count and +1 count."""

    n: int
    n_plus: int
    p: float

    def prob_plus(self) -> float:
        # P(next step = +1) given the first n signs; single division keeps
        # the p = 1/2 case exactly equal to the unbiased coin.
        return (self.p * self.n_plus + (1.0 - self.p) * (self.n - self.n_plus)) / self.n


def jump_moments(law: JumpLaw) -> tuple[float, float, float]:
    """(E[V], E[V^2], E[|V|]) of a jump law."""
    k = np.asarray(law.support, dtype=np.float64)
    p = np.asarray(law.probs)
    return float(np.dot(p, k)), float(np.dot(p, k * k)), float(np.dot(p, np.abs(k)))


def sample_steps(law: JumpLaw, n: int, rng: np.random.Generator) -> np.ndarray:
    """n i.i.d. jumps, deterministic given the generator stream."""
    if n == 0:
        return np.empty(0, dtype=np.int64)
    cum = np.cumsum(law.probs)
    cum[-1] = 1.0
    idx = np.searchsorted(cum, rng.random(n), side="right")
    return np.asarray(law.support, dtype=np.int64)[idx]


def sample_markov(law: JumpLaw, n: int, rng: np.random.Generator) -> WalkPath:
    if n < 0:
        raise ValueError("n must be nonnegative")
    return WalkPath.from_steps(sample_steps(law, n, rng))


def exact_pmf(law: JumpLaw, n: int) -> dict[int, float]:
    """Exact law of S_n by n-fold discrete convolution (n <= 64)."""
    if n < 0:
        raise ValueError("n must be nonnegative")
    if n > 64:
        raise ValueError("convolution oracle is capped at n = 64")
    lo = min(law.support)
    hi = max(law.support)
    step_arr = np.zeros(hi - lo + 1)
    for k, p in zip(law.support, law.probs):
        step_arr[k - lo] = p
    acc = np.array([1.0])
    offset = 0
    for _ in range(n):
        acc = np.convolve(acc, step_arr)
        offset += lo
    return {offset + i: float(p) for i, p in enumerate(acc) if p > 0.0}


def symmetric_walk_pmf(n: int) -> dict[int, float]:
    """Binomial pmf of the +-1 symmetric walk at time n, for large n.

    Complements the convolution oracle beyond its n <= 64 cap; log-gamma
    evaluation is accurate to ~1e-13 relative.
    """
    k = np.arange(0, n + 1)
    logp = gammaln(n + 1) - gammaln(k + 1) - gammaln(n - k + 1) - n * math.log(2.0)
    probs = np.exp(logp)
    return {int(2 * ki - n): float(pi) for ki, pi in zip(k, probs)}


def _reinforced_steps_from_uniforms(p: float, u: np.ndarray) -> np.ndarray:
    n = len(u)
    steps = np.empty(n, dtype=np.int64)
    steps[0] = 1 if u[0] < 0.5 else -1
    n_plus = 1 if steps[0] == 1 else 0
    for k in range(1, n):
        prob_plus = (p * n_plus + (1.0 - p) * (k - n_plus)) / k
        if u[k] < prob_plus:
            steps[k] = 1
            n_plus += 1
        else:
            steps[k] = -1
    return steps


def sample_reinforced(
    p: float, n: int, rng: np.random.Generator, exploratory: bool = False
) -> WalkPath:
    """Sample the reinforced walk for n steps.

    The first step is a fair sign; afterwards the conditional law depends on
    the sign counts only, which is equivalent to drawing a uniform past step
    and flipping it with probability 1-p.  Memory intensities p >= 3/4 fall
    outside the diffusive regime the diagnostics support and require
    ``exploratory=True``.
    """
    if not (0.0 <= p <= 1.0):
        raise ValueError("memory parameter p must lie in [0, 1]")
    if p >= _DIFFUSIVE_LIMIT and not exploratory:
        raise ValueError("p >= 3/4 is outside the diffusive regime; pass exploratory=True")
    if n < 1:
        raise ValueError("need at least one step")
    return WalkPath.from_steps(_reinforced_steps_from_uniforms(p, rng.random(n)))


def reinforced_exact_dist(p: float, n: int) -> dict[int, float]:
    """Exact law of the reinforced walk at time n (n <= 20) by DP on the +1 count."""
    if not (0.0 <= p <= 1.0):
        raise ValueError("memory parameter p must lie in [0, 1]")
    if n < 1:
        raise ValueError("need at least one step")
    if n > 20:
        raise ValueError("DP oracle is capped at n = 20")
    # dist[j] = P(n_plus = j after k steps)
    dist = np.zeros(n + 1)
    dist[0] = 0.5
    dist[1] = 0.5
    for k in range(1, n):
        nxt = np.zeros(n + 1)
        for j in range(k + 1):
            if dist[j] == 0.0:
                continue
            prob_plus = (p * j + (1.0 - p) * (k - j)) / k
            nxt[j + 1] += dist[j] * prob_plus
            nxt[j] += dist[j] * (1.0 - prob_plus)
        dist = nxt
    return {2 * j - n: float(q) for j, q in enumerate(dist) if q > 0.0}


def variance_recursion(p: float, n: int) -> np.ndarray:
    """Exact second moments E[S_k^2], k = 1..n, of the reinforced walk.

    One expectation step of the pathwise square recursion gives
    u_{k+1} = (1 + 2a/k) u_k + 1 with u_1 = 1 and a = 2p - 1.
    """
    if not (0.0 <= p <= 1.0):
        raise ValueError("memory parameter p must lie in [0, 1]")
    if n < 1:
        raise ValueError("n must be >= 1")
    a = 2.0 * p - 1.0
    u = np.empty(n)
    u[0] = 1.0
    for k in range(1, n):
        u[k] = (1.0 + 2.0 * a / k) * u[k - 1] + 1.0
    return u


def _check_diffusive(p: float):
    if not (0.0 <= p < _DIFFUSIVE_LIMIT):
        raise ValueError("martingale diagnostics require 0 <= p < 3/4")
    if p == 0.0:
        # a = -1 makes gamma(a+1) blow up and the scale sequence degenerate
        raise ValueError("p = 0 degenerates the scale sequence (a = -1)")


def martingale_coeffs(p: float, n: int) -> tuple[np.ndarray, np.ndarray]:
    """Scale sequence a_k and nu_k = sum of a_j^2, k = 0..n, via log-gamma.

    a_0 = a_1 = 1 and a_k = Gamma(a+1) Gamma(k) / Gamma(k+a) with a = 2p - 1;
    exponentiating log-gamma differences avoids the slow drift of cumulative
    products at large k.
    """
    _check_diffusive(p)
    a = 2.0 * p - 1.0
    k = np.arange(1, n + 1, dtype=np.float64)
    a_seq = np.empty(n + 1)
    a_seq[0] = 1.0
    a_seq[1:] = np.exp(gammaln(a + 1.0) + gammaln(k) - gammaln(k + a))
    nu_seq = np.empty(n + 1)
    nu_seq[0] = 0.0
    nu_seq[1:] = np.cumsum(a_seq[1:] ** 2)
    return a_seq, nu_seq


def martingale_coeffs_product(p: float, n: int) -> np.ndarray:
    """Scale sequence by direct product of 1/gamma_k, for cross-checks at small n."""
    _check_diffusive(p)
    a = 2.0 * p - 1.0
    a_seq = np.empty(n + 1)
    a_seq[0] = a_seq[1] = 1.0
    for k in range(1, n):
        a_seq[k + 1] = a_seq[k] / (1.0 + a / k)
    return a_seq


@dataclass(frozen=True)
class MartingaleDiag:
    """Per-path martingale diagnostics of the reinforced walk."""

    a: float                # memory drift 2p - 1
    a_seq: np.ndarray       # scale sequence a_0..a_n
    nu_seq: np.ndarray      # nu_k = sum_{j<=k} a_j^2
    M_seq: np.ndarray       # M_k = a_k S_k
    qv_seq: np.ndarray      # predictable quadratic variation of M


def martingale_path(path: WalkPath, p: float) -> MartingaleDiag:
    """Martingale transform M_k = a_k S_k with its predictable quadratic variation.

    qv_k = nu_k - a^2 sum_{j<k} (a_{j+1}/j)^2 S_j^2, which never exceeds nu_k.
    """
    if not np.all(np.abs(path.steps) == 1):
        raise ValueError("martingale diagnostics expect a +-1 reinforced path")
    n = path.n
    a = 2.0 * p - 1.0
    a_seq, nu_seq = martingale_coeffs(p, n)
    S = path.partial_sums.astype(np.float64)
    M_seq = a_seq * S
    # correction term: a^2 * cumsum((a_{j+1}/j)^2 S_j^2), j = 1..n-1
    corr = np.zeros(n + 1)
    if n >= 2:
        j = np.arange(1, n, dtype=np.float64)
        corr[2:] = np.cumsum((a_seq[2 : n + 1] / j) ** 2 * S[1:n] ** 2)
    qv_seq = nu_seq - a * a * corr
    if np.any(qv_seq > nu_seq):
        raise AssertionError("quadratic variation exceeded nu_n")
    return MartingaleDiag(a=a, a_seq=a_seq, nu_seq=nu_seq, M_seq=M_seq, qv_seq=qv_seq)


def reinforced_ensemble(
    p: float,
    n: int,
    rngs: list[np.random.Generator],
    record_at: tuple[int, ...] = (),
    with_qv: bool = False,
    full_paths: bool = False,
    exploratory: bool = False,
) -> dict:
    """Simulate one reinforced walk per generator, vectorized across replicas.

    Each replica consumes exactly n uniforms from its own stream in step
    order, so results are a pure function of the per-replica generators and
    independent of how replicas are grouped.  Returns final positions plus,
    on request, positions at ``record_at`` indices, the cumulative correction
    term of the quadratic variation, or the full position matrix.
    """
    if not (0.0 <= p <= 1.0):
        raise ValueError("memory parameter p must lie in [0, 1]")
    if p >= _DIFFUSIVE_LIMIT and not exploratory:
        raise ValueError("p >= 3/4 is outside the diffusive regime; pass exploratory=True")
    if n < 1:
        raise ValueError("need at least one step")
    if any(idx < 1 or idx > n for idx in record_at):
        raise ValueError("record_at indices must lie in [1, n]")
    R = len(rngs)
    U = np.empty((R, n))
    for i, rng in enumerate(rngs):
        U[i] = rng.random(n)
    S = np.where(U[:, 0] < 0.5, 1, -1).astype(np.int64)
    n_plus = (S == 1).astype(np.int64)
    record_at = tuple(record_at)
    recorded = np.empty((R, len(record_at)), dtype=np.int64)
    for col, idx in enumerate(record_at):
        if idx == 1:
            recorded[:, col] = S
    qv_corr = np.zeros(R) if with_qv else None
    a = 2.0 * p - 1.0
    if with_qv:
        a_seq, _ = martingale_coeffs(p, n)
    paths = np.empty((R, n + 1), dtype=np.int64) if full_paths else None
    if full_paths:
        paths[:, 0] = 0
        paths[:, 1] = S
    for k in range(1, n):
        if with_qv:
            qv_corr += (a * a_seq[k + 1] / k) ** 2 * (S.astype(np.float64) ** 2)
        prob_plus = (p * n_plus + (1.0 - p) * (k - n_plus)) / k
        up = U[:, k] < prob_plus
        S = np.where(up, S + 1, S - 1)
        n_plus = n_plus + up
        if full_paths:
            paths[:, k + 1] = S
        for col, idx in enumerate(record_at):
            if idx == k + 1:
                recorded[:, col] = S
    out = {"final": S}
    if record_at:
        out["recorded"] = recorded
    if with_qv:
        out["qv_correction"] = qv_corr
    if full_paths:
        out["paths"] = paths
    return out
