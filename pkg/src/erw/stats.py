"""Monte-Carlo estimators and path diagnostics for recurrence and transience."""

from __future__ import annotations

import math
from collections.abc import Sequence
from dataclasses import dataclass, field

import numba as nb
import numpy as np

from erw import _parallel
from erw.analysis import scaling_sequence
from erw.core import Trajectory, WalkParams, _up_prob, check_reachable, terminal_positions
from erw.errors import DomainError
from erw.rng import trial_key, uniform
from erw.summary import TrialSummary

__all__ = [
    "HittingSamples",
    "MassEstimate",
    "PathDiagnostics",
    "ReturnCurve",
    "TrialSummary",
    "bound_positive_recurrence",
    "hitting_time_samples",
    "hitting_time_trials",
    "lil_diagnostics",
    "path_diagnostics",
    "return_probability_curve",
    "transience_mass_estimate",
]

# smallest n with ln ln ln n > 0 on the integers (n > e**e)
LIL_START = 16


# -- hitting times ------------------------------------------------------------


@nb.njit(cache=True, nogil=True)
def _hitting_kernel(seed, m, x0, p, cap, t0, t1, out_tau, out_censored):
    for t in range(t0, t1):
        k0, k1 = trial_key(seed, t)
        ctr = np.uint64(0)
        x = x0
        n = m
        steps = 0
        while steps < cap:
            if uniform(k0, k1, ctr) < _up_prob(x, n, p):
                x += 1
            else:
                x -= 1
            ctr += np.uint64(1)
            n += 1
            steps += 1
            if x == 0:
                break
        out_tau[t - t0] = steps
        out_censored[t - t0] = x != 0


@dataclass(frozen=True)
class HittingSamples:
    """Steps to the first visit of 0 from ``(m, x)``; censored trials hold ``cap``."""

    cap: int
    values: np.ndarray = field(repr=False)
    censored: np.ndarray = field(repr=False)

    def summary(self) -> TrialSummary:
        return TrialSummary.from_values(self.values[~self.censored], int(self.censored.sum()))


def hitting_time_samples(
    m: int,
    x: int,
    params: WalkParams,
    cap: int,
    trials: int,
    seed: int,
    threads: int | None = None,
) -> HittingSamples:
    if m < 1:
        raise DomainError("start time m must be >= 1")
    if x == 0:
        raise DomainError("start position must be nonzero")
    check_reachable(x, m)
    if cap < 1:
        raise DomainError("cap must be >= 1")
    tau = np.empty(trials, dtype=np.int64)
    censored = np.empty(trials, dtype=np.bool_)
    _parallel.map_trials(
        _hitting_kernel,
        trials,
        (np.uint64(seed), m, x, params.p, cap),
        (tau, censored),
        threads=threads,
    )
    return HittingSamples(cap, tau, censored)


def hitting_time_trials(
    m: int,
    x: int,
    params: WalkParams,
    cap: int,
    trials: int,
    seed: int,
    threads: int | None = None,
) -> TrialSummary:
    """Summary of the return time to 0 for the walk conditioned on ``X_m = x``.

    Censored trials are excluded from the mean and counted in ``censored_count``.
    """
    return hitting_time_samples(m, x, params, cap, trials, seed, threads).summary()


def bound_positive_recurrence(p: float, x: int) -> float:
    """Upper bound ``2|x|/(1 - 6p) + 1`` on the mean return time, valid for ``p < 1/6``."""
    if not p < 1.0 / 6.0:
        raise DomainError(f"the return-time bound needs p < 1/6, got {p!r}")
    if x == 0:
        raise DomainError("the return-time bound is stated for x != 0")
    return 2.0 * abs(x) / (1.0 - 6.0 * p) + 1.0


# -- path diagnostics -----------------------------------------------------------


@dataclass(frozen=True)
class PathDiagnostics:
    horizon: int
    zero_hits: int
    last_return: int | None
    sign_changes: int
    max_lil_stat: float | None
    max_lil_critical: float | None


@nb.njit(cache=True, nogil=True)
def _observe(k, x, acc):
    """Fold position ``X_k = x`` into ``acc``.

    ``acc`` = [zero_hits, last_return, sign_changes, last_sign, max_lil, max_critical].
    """
    if x == 0:
        acc[0] += 1
        acc[1] = k
    else:
        sign = 1.0 if x > 0 else -1.0
        if acc[3] != 0.0 and sign != acc[3]:
            acc[2] += 1
        acc[3] = sign
    if k >= 16:
        lk = math.log(k)
        llk = math.log(lk)
        ax = abs(x)
        s = ax / math.sqrt(2.0 * k * llk)
        if s > acc[4]:
            acc[4] = s
        c = ax / math.sqrt(2.0 * k * lk * math.log(llk))
        if c > acc[5]:
            acc[5] = c


@nb.njit(cache=True, nogil=True)
def _diagnose_positions(positions, acc):
    for i in range(positions.shape[0]):
        _observe(i + 1, positions[i], acc)


@nb.njit(cache=True, nogil=True)
def _diagnose_walks(seed, n_steps, p, r, t0, t1, out):
    for t in range(t0, t1):
        k0, k1 = trial_key(seed, t)
        acc = out[t - t0]
        acc[:] = 0.0
        x = 0
        for n in range(n_steps):
            if n == 0:
                up = uniform(k0, k1, np.uint64(0)) < r
            else:
                up = uniform(k0, k1, np.uint64(n)) < _up_prob(x, n, p)
            x += 1 if up else -1
            _observe(n + 1, x, acc)


def _to_diagnostics(horizon: int, acc: np.ndarray) -> PathDiagnostics:
    has_lil = horizon >= LIL_START
    return PathDiagnostics(
        horizon=horizon,
        zero_hits=int(acc[0]),
        last_return=int(acc[1]) if acc[0] > 0 else None,
        sign_changes=int(acc[2]),
        max_lil_stat=float(acc[4]) if has_lil else None,
        max_lil_critical=float(acc[5]) if has_lil else None,
    )


def path_diagnostics(trajectory: Trajectory) -> PathDiagnostics:
    """Zero hits, sign changes and LIL-scaled maxima of ``|X_n|`` in one pass.

    Counting starts at ``k = 1``; the LIL maxima run over ``n >= 16`` and are
    ``None`` for shorter paths.
    """
    acc = np.zeros(6)
    _diagnose_positions(trajectory.positions, acc)
    return _to_diagnostics(trajectory.n, acc)


def lil_diagnostics(
    params: WalkParams,
    horizon: int,
    trials: int,
    seed: int,
    threads: int | None = None,
) -> list[PathDiagnostics]:
    """Diagnostics of ``trials`` marginal-mode paths without storing them.

    Path ``t`` is the one :func:`erw.core.sample_trajectory` draws from
    ``Stream.for_trial(seed, t)``.
    """
    if horizon < 1:
        raise DomainError("horizon must be >= 1")
    out = np.zeros((trials, 6))
    _parallel.map_trials(_diagnose_walks, trials, (np.uint64(seed), horizon, params.p, params.r), (out,), threads=threads)
    return [_to_diagnostics(horizon, row) for row in out]


# -- return probability --------------------------------------------------------


@nb.njit(cache=True, nogil=True)
def _first_return_kernel(seed, n_max, p, r, t0, t1, out):
    for t in range(t0, t1):
        k0, k1 = trial_key(seed, t)
        x = 0
        hit = 0
        for n in range(n_max):
            if n == 0:
                up = uniform(k0, k1, np.uint64(0)) < r
            else:
                up = uniform(k0, k1, np.uint64(n)) < _up_prob(x, n, p)
            x += 1 if up else -1
            if x == 0:
                hit = n + 1
                break
        out[t - t0] = hit


@dataclass(frozen=True)
class ReturnCurve:
    """Fraction of walks with no visit to 0 in ``(0, N]`` for each horizon ``N``."""

    horizons: np.ndarray
    no_return: np.ndarray
    trials: int
    first_return: np.ndarray = field(repr=False)


def return_probability_curve(
    params: WalkParams,
    horizons: Sequence[int],
    trials: int,
    seed: int,
    threads: int | None = None,
) -> ReturnCurve:
    """Estimate ``P(no return to 0 by N)``; all horizons are read off the same paths."""
    horizons = np.asarray(horizons, dtype=np.int64)
    if horizons.size == 0 or np.any(horizons < 1) or np.any(np.diff(horizons) <= 0):
        raise DomainError("horizons must be positive and strictly increasing")
    if trials < 1:
        raise DomainError("trials must be >= 1")
    first = np.empty(trials, dtype=np.int64)
    _parallel.map_trials(
        _first_return_kernel,
        trials,
        (np.uint64(seed), int(horizons[-1]), params.p, params.r),
        (first,),
        threads=threads,
    )
    survived = (first == 0)[None, :] | (first[None, :] > horizons[:, None])
    return ReturnCurve(horizons, survived.mean(axis=1), trials, first)


# -- transience -----------------------------------------------------------------


@dataclass(frozen=True)
class MassEstimate:
    """Samples of ``M_n = a_n X_n`` at one horizon."""

    horizon: int
    epsilon: float
    summary: TrialSummary
    fraction_above: float
    values: np.ndarray = field(repr=False)


def transience_mass_estimate(
    params: WalkParams,
    horizon: int,
    trials: int,
    seed: int,
    epsilon: float = 0.1,
    threads: int | None = None,
) -> MassEstimate:
    """Sample the martingale ``a_n X_n`` at ``n = horizon`` (superdiffusive regime only).

    ``fraction_above`` is the share of samples with ``|M_n| > epsilon``.
    """
    if not params.p > 0.75:
        raise DomainError(f"transience diagnostic needs p > 3/4, got {params.p!r}")
    if horizon < 1:
        raise DomainError("horizon must be >= 1")
    a_n = scaling_sequence(params.p, horizon).values[-1]
    values = a_n * terminal_positions(params, horizon, trials, seed, "marginal", threads=threads)
    return MassEstimate(
        horizon=horizon,
        epsilon=float(epsilon),
        summary=TrialSummary.from_values(values),
        fraction_above=float(np.mean(np.abs(values) > epsilon)),
        values=values,
    )
