"""Auxiliary regeneration structure for decoupling correlated environments.

A three-letter i.i.d. field with weights (1/4, 1/2, 1/4) on (+1, 0, -1)
drives two constructions: regeneration times, defined as the end of a length-L
run of plus-ones followed by a non-plus-one, and an auxiliary interdistance
field whose average over the three letters reproduces the environment's
interdistances exactly.  Scaled regeneration-time moments are estimated by
Monte Carlo to exhibit the L-independent moment band.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

from .environment import Environment

__all__ = [
    "EpsilonField",
    "TauTimes",
    "AuxField",
    "sample_epsilon",
    "tau_times",
    "tau_moment_report",
    "TauMomentReport",
    "TauMomentRow",
    "eta_field",
    "eta_triplet",
    "consistency_residuals",
]


@dataclass(frozen=True)
class EpsilonField:
    """I.i.d. field on {-1, 0, +1}, 1-indexed, with P(+1) = P(-1) = 1/4."""

    values: np.ndarray  # values[i] is the entry at index i + 1

    @property
    def horizon(self) -> int:
        return len(self.values)


@dataclass(frozen=True)
class TauTimes:
    """Regeneration times for run length L, strictly increasing, spaced >= L."""

    L: int
    times: np.ndarray


@dataclass(frozen=True)
class AuxField:
    """Realized auxiliary interdistances eta_r, 1-indexed like the epsilon field."""

    eta: np.ndarray
    mean_zeta: float


def _eps_from_uniforms(u: np.ndarray) -> np.ndarray:
    out = np.zeros(u.shape, dtype=np.int8)
    out[u < 0.25] = 1
    out[(u >= 0.25) & (u < 0.5)] = -1
    return out


def sample_epsilon(horizon: int, rng: np.random.Generator) -> EpsilonField:
    if horizon < 1:
        raise ValueError("horizon must be >= 1")
    values = _eps_from_uniforms(rng.random(horizon))
    values.flags.writeable = False
    return EpsilonField(values=values)


def _first_tau(values: np.ndarray, L: int) -> int:
    """First regeneration time in a 0-based row, or -1; 1-indexed result."""
    taus = _tau_positions(values, L)
    return int(taus[0]) if len(taus) else -1


def _tau_positions(values: np.ndarray, L: int) -> np.ndarray:
    """All regeneration times (1-indexed) in one scan.

    A position qualifies when its entry is not +1 and the L entries before it
    are all +1.  Because the entry at a regeneration time is not +1, runs
    restart after each hit, so qualifying positions are automatically spaced
    by more than L and no greedy filtering is needed.
    """
    n = len(values)
    if n == 0:
        return np.empty(0, dtype=np.int64)
    ones = values == 1
    idx = np.arange(n)
    last_non_one = np.maximum.accumulate(np.where(~ones, idx, -1))
    run_before = np.empty(n, dtype=np.int64)
    run_before[0] = 0
    run_before[1:] = (idx[1:] - 1) - last_non_one[:-1]
    hits = (~ones) & (run_before >= L)
    return (np.flatnonzero(hits) + 1).astype(np.int64)


def tau_times(eps: EpsilonField, L: int) -> TauTimes:
    if L < 1:
        raise ValueError("run length L must be >= 1")
    times = _tau_positions(eps.values, L)
    times.flags.writeable = False
    return TauTimes(L=L, times=times)


@dataclass(frozen=True)
class TauMomentRow:
    L: int
    p: float
    estimate: float
    stderr: float
    replicas: int


@dataclass(frozen=True)
class TauMomentReport:
    rows: tuple[TauMomentRow, ...]
    band_ok: dict
    missing: dict

    def to_csv(self, filename: str):
        with open(filename, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["L", "p", "estimate", "stderr", "replicas"])
            for r in self.rows:
                w.writerow([r.L, r.p, repr(r.estimate), repr(r.stderr), r.replicas])


_HORIZON_FACTOR = 50  # per-position hit probability is (1/4)^L * 3/4, so 50*4^L misses rarely


def tau_moment_report(
    L_list, p_list, replicas: int, rng: np.random.Generator
) -> TauMomentReport:
    """Monte Carlo table of scaled first-regeneration moments E[(4^-L tau_1)^p]^(1/p).

    For each L, ``replicas`` independent fields are scanned for their first
    regeneration time within a horizon of 50 * 4^L; replicas with no hit are
    counted and the run aborts if they exceed 1% for any L.  For each p the
    report flags whether the estimates across L fit in a band of ratio 4.
    """
    if replicas < 10**3:
        raise ValueError("need at least 1000 replicas for stable moment bands")
    if any(L < 1 for L in L_list):
        raise ValueError("run lengths must be >= 1")
    if any(L > 7 for L in L_list):
        raise ValueError("horizon cost grows like 4^L; capped at L = 7")
    if any(p < 1 for p in p_list):
        raise ValueError("moment orders must be >= 1")

    rows: list[TauMomentRow] = []
    missing: dict[int, int] = {}
    estimates: dict[float, list[float]] = {float(p): [] for p in p_list}
    for L in L_list:
        horizon = _HORIZON_FACTOR * 4**L
        stage1 = min(horizon, 8 * 4**L)
        taus = np.empty(replicas, dtype=np.float64)
        found = np.zeros(replicas, dtype=bool)
        batch = max(1, min(replicas, (1 << 22) // stage1))
        for start in range(0, replicas, batch):
            stop = min(start + batch, replicas)
            vals = _eps_from_uniforms(rng.random((stop - start, stage1)))
            for i in range(stop - start):
                t = _first_tau(vals[i], L)
                if t > 0:
                    taus[start + i] = t
                    found[start + i] = True
            # second stage for rows with no early hit, keeping the run prefix
            for i in range(stop - start):
                if found[start + i]:
                    continue
                tail = _eps_from_uniforms(rng.random(horizon - stage1))
                joined = np.concatenate([vals[i, -L:], tail])
                t = _first_tau(joined, L)
                if t > L:
                    taus[start + i] = stage1 - L + t
                    found[start + i] = True
        n_missing = int((~found).sum())
        missing[int(L)] = n_missing
        if n_missing > 0.01 * replicas:
            raise RuntimeError(
                f"horizon exhausted before the first regeneration in {n_missing} replicas at L={L}"
            )
        scaled = taus[found] * 4.0 ** (-L)
        m = len(scaled)
        for p in p_list:
            powered = scaled ** float(p)
            mean_p = float(powered.mean())
            se_p = float(powered.std(ddof=1) / math.sqrt(m))
            est = mean_p ** (1.0 / p)
            # delta method through x -> x^(1/p)
            se = se_p * est / (p * mean_p) if mean_p > 0 else float("nan")
            rows.append(TauMomentRow(L=int(L), p=float(p), estimate=est, stderr=se, replicas=m))
            estimates[float(p)].append(est)
    band_ok = {
        p: (max(vals) <= 4.0 * min(vals)) if vals else False for p, vals in estimates.items()
    }
    return TauMomentReport(rows=tuple(rows), band_ok=band_ok, missing=missing)


def eta_triplet(zeta, mean_zeta: float):
    """Auxiliary values (eta at +1, eta at -1, eta at 0) for given interdistances."""
    zeta = np.asarray(zeta, dtype=np.float64)
    plus = np.full(zeta.shape, 2.0 * mean_zeta)
    return plus, plus.copy(), 2.0 * (zeta - mean_zeta)


def eta_field(env: Environment, eps: EpsilonField, mean_zeta: float) -> AuxField:
    """Realized auxiliary field over 1..horizon.

    eta_r doubles the ensemble mean when the letter at r is +-1 and doubles
    the centered interdistance when the letter is 0; averaging over the three
    letters recovers zeta_r identically.
    """
    if env.hi < eps.horizon:
        raise ValueError("environment window does not cover the epsilon horizon")
    r = np.arange(1, eps.horizon + 1)
    zeta = env.zeta_at(r)
    plus, _, zero = eta_triplet(zeta, mean_zeta)
    eta = np.where(eps.values != 0, plus, zero)
    eta.flags.writeable = False
    return AuxField(eta=eta, mean_zeta=float(mean_zeta))


def consistency_residuals(env: Environment, mean_zeta: float, horizon: int) -> np.ndarray:
    """Residuals of the letter-averaged auxiliary field against zeta, index by index.

    (1/4) eta(+1) + (1/4) eta(-1) + (1/2) eta(0) - zeta_r, which vanishes
    identically (and exactly, in binary floating point, for dyadic alphabets).
    """
    r = np.arange(1, horizon + 1)
    zeta = env.zeta_at(r)
    plus, minus, zero = eta_triplet(zeta, mean_zeta)
    return 0.25 * plus + 0.25 * minus + 0.5 * zero - zeta
