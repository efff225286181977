"""The gas itself: a walk evaluated on scatterer positions.

``build_gas`` couples a walk with an environment: the particle sits at
``omega[S_k]`` after the k-th collision and the collision clock advances by
the flight length ``|X_k - X_{k-1}|``.  The continuous-time track moves at
unit speed along each flight; zero jumps contribute empty flight intervals.
Rescaling helpers materialize the centered diffusive-scale paths on a finite
window as cadlag objects for the functional-limit experiments.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

from .cadlag import CadlagPath
from .environment import Environment, extend
from .walks import WalkPath

__all__ = [
    "GasTrajectory",
    "build_gas",
    "interpolate",
    "n_of_t",
    "rescale_discrete",
    "rescale_continuous",
    "export_trajectory_csv",
    "export_track_csv",
]


@dataclass(frozen=True)
class GasTrajectory:
    """Coupled walk / positions / collision-time data for one realization."""

    walk: WalkPath
    env: Environment
    positions: np.ndarray        # X_0..X_n, X_k = omega[S_k]
    collision_times: np.ndarray  # T_0 = 0, T_k = sum of flight lengths

    @property
    def n(self) -> int:
        return self.walk.n

    @property
    def horizon(self) -> float:
        """Total realized track length T_n; queries beyond it are errors."""
        return float(self.collision_times[-1])


def build_gas(env: Environment, walk: WalkPath) -> GasTrajectory:
    """Evaluate the walk on the environment, extending the window on demand."""
    S = walk.partial_sums
    lo = int(min(S.min(), 0))
    hi = int(max(S.max(), 0))
    if lo < env.lo or hi > env.hi:
        env = extend(env, min(lo, env.lo), max(hi, env.hi))
    X = env.omega[S - env.lo]
    T = np.concatenate([[0.0], np.cumsum(np.abs(np.diff(X)))])
    X.flags.writeable = False
    T.flags.writeable = False
    return GasTrajectory(walk=walk, env=env, positions=X, collision_times=T)


def interpolate(traj: GasTrajectory, t):
    """Unit-speed track position at time t, for 0 <= t < T_n.

    On a flight [T_{k-1}, T_k) the particle moves from X_{k-1} toward X_k at
    speed one; empty flights (zero jumps) are skipped.
    """
    t = np.asarray(t, dtype=np.float64)
    T = traj.collision_times
    if np.any(t < 0) or np.any(t >= T[-1]):
        raise ValueError("time outside the realized horizon [0, T_n)")
    k = np.searchsorted(T, t, side="right")  # flight index: t in [T_{k-1}, T_k)
    sgn = np.sign(traj.walk.steps[k - 1])
    out = traj.positions[k - 1] + sgn * (t - T[k - 1])
    return out if out.ndim else float(out)


def n_of_t(traj: GasTrajectory, t) -> int | np.ndarray:
    """Number of collisions by time t: the largest k with T_k <= t."""
    t = np.asarray(t, dtype=np.float64)
    T = traj.collision_times
    if np.any(t < 0) or np.any(t >= T[-1]):
        raise ValueError("time outside the realized horizon [0, T_n)")
    k = np.searchsorted(T, t, side="right") - 1
    return k if k.ndim else int(k)


def rescale_discrete(
    traj: GasTrajectory, n: int, ell: float, drift: float, window: float = 4.0
) -> CadlagPath:
    """Diffusively rescaled discrete path t -> (X_{floor(nt)} - ell*drift*n*t)/sqrt(n).

    Materialized on [-window, window], identically zero for t < 0.  The
    trajectory must provide at least floor(n * window) steps.
    """
    if n < 1:
        raise ValueError("scale n must be >= 1")
    steps_needed = int(math.floor(n * window))
    if traj.n < steps_needed:
        raise ValueError(f"trajectory too short: need {steps_needed} steps, have {traj.n}")
    root_n = math.sqrt(n)
    c = ell * drift * root_n  # slope of the centering term
    k = np.arange(steps_needed + 1)
    times = np.concatenate([[-window], k / n])
    values = np.concatenate([[0.0], traj.positions[: steps_needed + 1] / root_n - c * (k / n)])
    slopes = np.concatenate([[0.0], np.full(steps_needed + 1, -c)])
    return CadlagPath(times=times, values=values, slopes=slopes, window=(-window, window))


def rescale_continuous(
    traj: GasTrajectory, t_scale: float, ell: float, drift: float, window: float = 4.0
) -> CadlagPath:
    """Rescaled continuous track s -> (track(t_scale*s) - ell*drift*t_scale*s)/sqrt(t_scale).

    Continuous piecewise-linear by construction; zero for s < 0.  Requires the
    realized horizon to cover t_scale * window.
    """
    if t_scale <= 0:
        raise ValueError("t_scale must be positive")
    T = traj.collision_times
    if T[-1] < t_scale * window:
        raise ValueError("realized horizon shorter than the requested window")
    root_t = math.sqrt(t_scale)
    c = ell * drift * root_t
    # flight boundaries inside [0, window] in rescaled time, empty flights dropped
    lengths = np.diff(T)
    keep = lengths > 0
    start_T = T[:-1][keep]
    start_X = traj.positions[:-1][keep]
    sgn = np.sign(traj.walk.steps[keep]).astype(np.float64)
    # keep every flight starting inside the window; the last one covers its end
    keep_n = int(np.searchsorted(start_T, t_scale * window, side="right"))
    start_T = start_T[:keep_n]
    start_X = start_X[:keep_n]
    sgn = sgn[:keep_n]
    s_break = start_T / t_scale
    values = start_X / root_t - c * s_break
    slopes = sgn * t_scale / root_t - c
    times = np.concatenate([[-window], s_break])
    values = np.concatenate([[0.0], values])
    slopes = np.concatenate([[0.0], slopes])
    return CadlagPath(times=times, values=values, slopes=slopes, window=(-window, window))


def export_trajectory_csv(traj: GasTrajectory, path: str):
    """Write rows (k, S_k, X_k, T_k)."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["k", "S_k", "X_k", "T_k"])
        for k in range(traj.n + 1):
            w.writerow(
                [k, int(traj.walk.partial_sums[k]), repr(float(traj.positions[k])), repr(float(traj.collision_times[k]))]
            )


def export_track_csv(traj: GasTrajectory, path: str, grid_step: float):
    """Write the interpolated track (t, position) on a uniform grid."""
    if grid_step <= 0:
        raise ValueError("grid step must be positive")
    ts = np.arange(0.0, traj.horizon, grid_step)
    xs = interpolate(traj, ts)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t", "position"])
        for t, x in zip(ts, np.atleast_1d(xs)):
            w.writerow([repr(float(t)), repr(float(x))])
