"""Simulation and Monte Carlo verification of a stochastic Levy-Lorentz gas.

A particle travels at unit speed on the real line between scatterers whose
interdistances may be correlated; the discrete skeleton is a random walk,
memoryless or step-reinforced, read off on the scatterer positions.  The
package simulates the model at desk scale and turns its limit theorems
(laws of large numbers, central limit theorems, functional limits in the
J1 topology) into reproducible pass/fail experiments.
"""

__version__ = "0.1.0"

from .environment import (
    DistanceLaw,
    Environment,
    analytic_ell,
    autocovariance,
    empirical_ell,
    extend,
    generate,
    mixing_ratio_check,
    stationary_distribution,
)
from .walks import (
    JumpLaw,
    MartingaleDiag,
    ReinforcedState,
    WalkPath,
    exact_pmf,
    jump_moments,
    martingale_coeffs,
    martingale_path,
    reinforced_exact_dist,
    sample_markov,
    sample_reinforced,
    variance_recursion,
)
from .gas import GasTrajectory, build_gas, interpolate, n_of_t, rescale_continuous, rescale_discrete
from .renewal import (
    AuxField,
    EpsilonField,
    TauTimes,
    eta_field,
    sample_epsilon,
    tau_moment_report,
    tau_times,
)
from .cadlag import (
    CadlagPath,
    TimeChange,
    compose,
    evaluate,
    left_limit,
    skorokhod_delta,
    skorokhod_distance,
    taper,
    timechange_norm,
)
from .stats import (
    MomentAccumulator,
    PairAccumulator,
    cesaro_sum,
    covariance_at,
    gaussian_cdf,
    ks_statistic,
)
from .engine import ExperimentConfig, Report, load_bundled_config, rng_for_replica, run_experiment
