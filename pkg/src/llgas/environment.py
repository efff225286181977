"""Scatterer environments on the integer lattice.

An environment is a two-sided array of scatterer positions ``omega[r]`` with
``omega[0] = 0`` and strictly positive interdistances ``zeta[r] = omega[r] -
omega[r-1]``.  Interdistances are drawn from a finite alphabet, either i.i.d.
or as a uniformly ergodic Markov chain (every transition entry strictly
positive), which is the finite-alphabet stand-in for exponentially mixing
correlated media.  Environments are immutable once generated; windows extend
lazily in both directions without ever resampling an already generated entry.
"""

from __future__ import annotations

import math
from bisect import bisect_right
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

__all__ = [
    "DistanceLaw",
    "Environment",
    "generate",
    "extend",
    "stationary_distribution",
    "analytic_ell",
    "empirical_ell",
    "autocovariance",
    "mixing_ratio_check",
    "MixingCheck",
]

_PROB_TOL = 1e-12

# Philox key tags separating the rightward and leftward extension streams.
_RIGHT_TAG = 0x52494748
_LEFT_TAG = 0x4C454654


@dataclass(frozen=True)
class DistanceLaw:
    """Generative law of the interdistance sequence.

    ``kind`` is ``"iid"`` (weights ``probs`` over ``alphabet``) or ``"markov"``
    (row-stochastic ``transition`` over alphabet indices, all entries strictly
    positive so the chain is uniformly ergodic).
    """

    kind: str
    alphabet: tuple[float, ...]
    probs: tuple[float, ...] | None = None
    transition: tuple[tuple[float, ...], ...] | None = None

    def __post_init__(self):
        if self.kind not in ("iid", "markov"):
            raise ValueError(f"unknown distance-law kind {self.kind!r}")
        if len(self.alphabet) == 0:
            raise ValueError("alphabet must be nonempty")
        if any(not (a > 0) for a in self.alphabet):
            raise ValueError("alphabet values must be strictly positive")
        k = len(self.alphabet)
        if self.kind == "iid":
            if self.probs is None or len(self.probs) != k:
                raise ValueError("iid law needs one weight per alphabet value")
            if any(p < 0 for p in self.probs):
                raise ValueError("negative probability weight")
            if abs(sum(self.probs) - 1.0) > _PROB_TOL:
                raise ValueError("iid weights must sum to 1")
        else:
            if self.transition is None or len(self.transition) != k:
                raise ValueError("markov law needs a square transition matrix")
            for row in self.transition:
                if len(row) != k:
                    raise ValueError("transition matrix must be square")
                if any(not (p > 0) for p in row):
                    raise ValueError("markov transition entries must be strictly positive")
                if abs(sum(row) - 1.0) > _PROB_TOL:
                    raise ValueError("transition rows must sum to 1")

    def to_json_dict(self) -> dict:
        d = {"kind": self.kind, "alphabet": list(self.alphabet)}
        if self.kind == "iid":
            d["probs"] = list(self.probs)
        else:
            d["transition"] = [list(r) for r in self.transition]
        return d

    @classmethod
    def from_json_dict(cls, d: dict) -> "DistanceLaw":
        kind = d["kind"]
        alphabet = tuple(float(a) for a in d["alphabet"])
        if kind == "iid":
            return cls(kind, alphabet, probs=tuple(float(p) for p in d["probs"]))
        return cls(
            kind,
            alphabet,
            transition=tuple(tuple(float(p) for p in row) for row in d["transition"]),
        )


@dataclass(frozen=True)
class _ExtensionState:
    """Resumable two-sided sampler state.

    ``indices`` stores alphabet indices for r in (lo, hi_int] where
    ``hi_int = max(hi, 1)``: the first rightward value zeta_1 is always
    materialized at generation time so that leftward extension of a window
    ending at 0 can condition on it.
    """

    right_state: dict = field(repr=False)
    left_state: dict = field(repr=False)
    indices: np.ndarray = field(repr=False)
    hi_int: int


@dataclass(frozen=True)
class Environment:
    """Realized scatterer window [lo, hi] with omega[0] = 0."""

    law: DistanceLaw
    lo: int
    hi: int
    zeta: np.ndarray   # zeta[i] = interdistance at r = lo + 1 + i, r in (lo, hi]
    omega: np.ndarray  # omega[i] = position at r = lo + i, r in [lo, hi]
    rng_state: _ExtensionState

    def zeta_at(self, r):
        """Interdistance zeta_r for r in (lo, hi] (scalar or array index)."""
        r = np.asarray(r)
        if np.any(r <= self.lo) or np.any(r > self.hi):
            raise IndexError("interdistance index outside the generated window")
        return self.zeta[r - self.lo - 1]

    def omega_at(self, r):
        """Position omega_r for r in [lo, hi] (scalar or array index)."""
        r = np.asarray(r)
        if np.any(r < self.lo) or np.any(r > self.hi):
            raise IndexError("position index outside the generated window")
        return self.omega[r - self.lo]

    def omega_at_real(self, x):
        """omega evaluated at a real index via the floor convention."""
        return self.omega_at(np.floor(np.asarray(x)).astype(np.int64))


def _generator_from_state(state: dict) -> np.random.Generator:
    bg = np.random.Philox()
    bg.state = state
    return np.random.Generator(bg)


def _new_generator(seed: int, tag: int) -> np.random.Generator:
    key = np.array([np.uint64(seed & 0xFFFFFFFFFFFFFFFF), np.uint64(tag)], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


def _cumrows(matrix) -> list[tuple[float, ...]]:
    return [tuple(np.cumsum(row)) for row in matrix]


def _sample_iid_indices(law: DistanceLaw, count: int, rng: np.random.Generator) -> np.ndarray:
    if count == 0:
        return np.empty(0, dtype=np.int64)
    cum = np.cumsum(law.probs)
    cum[-1] = 1.0
    return np.searchsorted(cum, rng.random(count), side="right").astype(np.int64)

def _sample_chain_indices(
    cumrows: list[tuple[float, ...]], start: int, count: int, rng: np.random.Generator
) -> np.ndarray:
    """Sample ``count`` successive states after ``start`` (start excluded)."""
    if count == 0:
        return np.empty(0, dtype=np.int64)
    u = rng.random(count)
    out = np.empty(count, dtype=np.int64)
    state = start
    for k in range(count):
        state = bisect_right(cumrows[state], u[k])
        out[k] = state
    return out


def stationary_distribution(transition) -> np.ndarray:
    """Stationary vector of a strictly positive row-stochastic matrix.

    Iterated left-multiplication until successive iterates differ by less
    than 1e-13 in max norm; raises if the input is not stochastic or the
    iteration has not settled within 1e6 sweeps.
    """
    P = np.asarray(transition, dtype=np.float64)
    if P.ndim != 2 or P.shape[0] != P.shape[1]:
        raise ValueError("transition matrix must be square")
    if np.any(P <= 0):
        raise ValueError("transition entries must be strictly positive")
    if np.max(np.abs(P.sum(axis=1) - 1.0)) > _PROB_TOL:
        raise ValueError("transition rows must sum to 1")
    pi = np.full(P.shape[0], 1.0 / P.shape[0])
    for _ in range(10**6):
        nxt = pi @ P
        if np.max(np.abs(nxt - pi)) < 1e-13:
            pi = nxt
            break
        pi = nxt
    else:
        raise RuntimeError("stationary distribution iteration did not converge")
    pi = np.clip(pi, 0.0, None)
    return pi / pi.sum()


def _reversed_transition(P: np.ndarray, pi: np.ndarray) -> np.ndarray:
    # Time reversal P~[i, j] = pi[j] P[j, i] / pi[i] keeps the two-sided chain stationary.
    rev = pi[None, :] * P.T / pi[:, None]
    return rev / rev.sum(axis=1, keepdims=True)


def _reversed_cumrows(law: DistanceLaw, pi: np.ndarray) -> list[tuple[float, ...]]:
    return _cumrows(_reversed_transition(np.asarray(law.transition, dtype=np.float64), pi))


def generate(law: DistanceLaw, lo: int, hi: int, seed: int) -> Environment:
    """Generate an environment over [lo, hi] from the given law and seed.

    The markov kind draws zeta_1 from the stationary distribution, extends
    rightward with the transition matrix and leftward with the time-reversed
    chain, so the realized window is a piece of the two-sided stationary chain.
    """
    if lo > hi:
        raise ValueError("lo > hi")
    if not (lo <= 0 <= hi):
        raise ValueError("window must contain 0")
    right = _new_generator(seed, _RIGHT_TAG)
    left = _new_generator(seed, _LEFT_TAG)
    hi_int = max(hi, 1)

    if law.kind == "iid":
        right_idx = _sample_iid_indices(law, hi_int, right)
        left_idx = _sample_iid_indices(law, -lo, left)
    else:
        pi = stationary_distribution(law.transition)
        cum_pi = tuple(np.cumsum(pi))
        anchor = bisect_right(cum_pi, right.random())
        fwd = _cumrows(law.transition)
        right_idx = np.concatenate(
            [[anchor], _sample_chain_indices(fwd, anchor, hi_int - 1, right)]
        ).astype(np.int64)
        rev = _reversed_cumrows(law, pi)
        left_idx = _sample_chain_indices(rev, anchor, -lo, left)

    # indices ordered by lattice position: (lo, hi_int]
    indices = np.concatenate([left_idx[::-1], right_idx])
    state = _ExtensionState(
        right_state=right.bit_generator.state,
        left_state=left.bit_generator.state,
        indices=indices,
        hi_int=hi_int,
    )
    return _finalize(law, lo, hi, state)


def _finalize(law: DistanceLaw, lo: int, hi: int, state: _ExtensionState) -> Environment:
    alpha = np.asarray(law.alphabet, dtype=np.float64)
    zeta_all = alpha[state.indices]          # r in (lo, hi_int]
    zeta = zeta_all[: hi - lo]               # r in (lo, hi]
    n_neg = -lo
    omega = np.empty(hi - lo + 1, dtype=np.float64)
    omega[n_neg] = 0.0
    if hi > 0:
        omega[n_neg + 1 :] = np.cumsum(zeta[n_neg:])
    if lo < 0:
        omega[:n_neg] = -np.cumsum(zeta[:n_neg][::-1])[::-1]
    zeta.flags.writeable = False
    omega.flags.writeable = False
    state.indices.flags.writeable = False
    return Environment(law=law, lo=lo, hi=hi, zeta=zeta, omega=omega, rng_state=state)


def extend(env: Environment, new_lo: int, new_hi: int) -> Environment:
    """Return the environment over the enlarged window [new_lo, new_hi].

    Restriction of the result to the old window equals the old environment
    bit for bit; the old environment object is left untouched.
    """
    if new_lo > env.lo or new_hi < env.hi:
        raise ValueError("extend cannot shrink the window")
    if new_lo == env.lo and new_hi == env.hi:
        return env
    st = env.rng_state
    law = env.law
    n_right = max(new_hi, 1) - st.hi_int
    n_left = env.lo - new_lo

    if law.kind == "iid":
        right_rng = _generator_from_state(st.right_state)
        left_rng = _generator_from_state(st.left_state)
        right_idx = _sample_iid_indices(law, n_right, right_rng)
        left_idx = _sample_iid_indices(law, n_left, left_rng)
    else:
        pi = stationary_distribution(law.transition)
        fwd = _cumrows(law.transition)
        rev = _reversed_cumrows(law, pi)
        right_rng = _generator_from_state(st.right_state)
        left_rng = _generator_from_state(st.left_state)
        right_idx = _sample_chain_indices(fwd, int(st.indices[-1]), n_right, right_rng)
        left_idx = _sample_chain_indices(rev, int(st.indices[0]), n_left, left_rng)

    indices = np.concatenate([left_idx[::-1], st.indices, right_idx])
    state = _ExtensionState(
        right_state=right_rng.bit_generator.state,
        left_state=left_rng.bit_generator.state,
        indices=indices,
        hi_int=st.hi_int + n_right,
    )
    return _finalize(law, new_lo, new_hi, state)


def analytic_ell(law: DistanceLaw) -> float:
    """Mean interdistance under the stationary law; the a.s. limit of omega_n / n."""
    alpha = np.asarray(law.alphabet)
    if law.kind == "iid":
        return float(np.dot(law.probs, alpha))
    pi = stationary_distribution(law.transition)
    return float(np.dot(pi, alpha))


def empirical_ell(env: Environment) -> tuple[float, float]:
    """Estimate omega_hi / hi with a 10-block jackknife half-width."""
    if env.hi < 100:
        raise ValueError("window too short for a stable estimate (need hi >= 100)")
    n = env.hi
    estimate = float(env.omega[-1] / n)
    m = n - (n % 10)
    blocks = env.zeta[-n:][:m].reshape(10, m // 10)
    block_means = blocks.mean(axis=1)
    loo = (block_means.sum() - block_means) / 9.0
    se = math.sqrt(9.0 / 10.0 * np.sum((loo - loo.mean()) ** 2))
    return estimate, 2.0 * se


def autocovariance(law: DistanceLaw, r: int) -> float:
    """Analytic Cov(zeta_0, zeta_r) under stationarity."""
    if r < 0:
        raise ValueError("lag must be nonnegative")
    alpha = np.asarray(law.alphabet)
    if law.kind == "iid":
        if r > 0:
            return 0.0
        p = np.asarray(law.probs)
        m = float(np.dot(p, alpha))
        return float(np.dot(p, alpha**2) - m * m)
    pi = stationary_distribution(law.transition)
    m = float(np.dot(pi, alpha))
    Pr = np.linalg.matrix_power(np.asarray(law.transition), r)
    joint = float(np.einsum("i,ij,i,j->", pi, Pr, alpha, alpha))
    return joint - m * m


class MixingCheck(NamedTuple):
    C_fit: float
    g_fit: float
    ok: bool
    log_ratios: tuple[float, ...]


def _max_log_ratio(P: np.ndarray, window: int, sep: int) -> float:
    """Exact sup over configurations of the conditional-law log ratio.

    Geometry: block Delta = {1..w}, nearest pinned site on the left at 0
    (value x), pinned singleton A = {w + sep} on the right (values y vs y'),
    the sep-1 sites between block and A marginalized.  By the Markov property
    the conditional block law given the whole exterior reduces to conditioning
    on (x, y), so the enumeration over boundary pairs is exact.
    """
    k = P.shape[0]
    Ps = np.linalg.matrix_power(P, sep)
    Pws = np.linalg.matrix_power(P, window + sep)
    worst = 0.0
    # log P(b | x, y) = log(path terms) + log Ps[b_w, y] - log Pws[x, y];
    # the path terms cancel in the ratio, so only b_w, x, y, y' matter.
    for bw in range(k):
        for x in range(k):
            for y in range(k):
                for yp in range(k):
                    lr = (
                        math.log(Ps[bw, y])
                        - math.log(Pws[x, y])
                        - math.log(Ps[bw, yp])
                        + math.log(Pws[x, yp])
                    )
                    worst = max(worst, abs(lr))
    return worst


def mixing_ratio_check(law: DistanceLaw, window: int, separation: int) -> MixingCheck:
    """Brute-force check that boundary influence on a block decays exponentially.

    For each separation s in 1..separation, enumerates all pinned boundary
    pairs differing on one remote site and records the worst conditional-law
    log ratio for a window-sized block.  A slope g is fitted by least squares
    on the log ratios and C is then the smallest constant making C*exp(-g*s)
    dominate every observation; ``ok`` requires a positive fitted rate and
    monotone nonincreasing observations.
    """
    if separation < 1:
        raise ValueError("separation must be >= 1")
    if law.kind == "iid":
        # conditional laws never see the boundary, every ratio is exactly 1
        return MixingCheck(0.0, 0.0, True, tuple(0.0 for _ in range(separation)))
    if len(law.alphabet) > 3:
        raise ValueError("alphabet too large for exact enumeration")
    if window > 8:
        raise ValueError("window too large for exact enumeration")
    P = np.asarray(law.transition, dtype=np.float64)
    pi = stationary_distribution(law.transition)
    Prev = _reversed_transition(P, pi)  # mirrored geometry: remote site on the left
    seps = range(1, separation + 1)
    ratios = [max(_max_log_ratio(P, window, s), _max_log_ratio(Prev, window, s)) for s in seps]
    logs = np.log(np.maximum(ratios, 1e-300))
    s_arr = np.arange(1, separation + 1, dtype=np.float64)
    if separation == 1:
        g = 0.0
    else:
        g = -float(np.polyfit(s_arr, logs, 1)[0])
    C = float(np.max(np.exp(logs + g * s_arr)))
    monotone = all(ratios[i + 1] <= ratios[i] * (1 + 1e-12) for i in range(len(ratios) - 1))
    ok = (g > 0 or separation == 1) and monotone and math.isfinite(C)
    return MixingCheck(C, g, ok, tuple(float(r) for r in ratios))
