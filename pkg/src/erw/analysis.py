"""Exact analytic objects for the uniform-memory walk.

Generator of the time-inhomogeneous chain, the mean recursion, the scaling
sequence ``a_n`` that turns ``a_n X_n`` into a martingale, an in-house Gamma
function for its limit constant, and a Monte-Carlo Dynkin-formula check.
"""

from __future__ import annotations

import math
from collections.abc import Callable
from dataclasses import dataclass, field

import numpy as np

from erw.core import WalkParams, check_reachable, paths_from
from erw.errors import DomainError
from erw.summary import TrialSummary

TestFunction = Callable[[np.ndarray], np.ndarray]

_LANCZOS_G = 7.0
_LANCZOS_COEF = (
    0.99999999999980993,
    676.5203681218851,
    -1259.1392167224028,
    771.32342877765313,
    -176.61502916214059,
    12.507343278686905,
    -0.13857109526572012,
    9.9843695780195716e-6,
    1.5056327351493116e-7,
)


def _evaluate(f: TestFunction, x) -> np.ndarray:
    x = np.asarray(x)
    return np.broadcast_to(np.asarray(f(x), dtype=float), x.shape)


def generator_apply(f: TestFunction, x, n, params: WalkParams):
    """Expected one-step change of ``f`` from position ``x`` at time ``n``.

    ``x`` and ``n`` may be arrays (broadcast together).  Positions off the
    reachable lattice are accepted for analytic probing; the weights are then
    not necessarily probabilities.
    """
    n = np.asarray(n)
    if np.any(n < 1):
        raise DomainError("the generator is defined for n >= 1")
    x = np.asarray(x)
    fx = _evaluate(f, x)
    drift = x * (2.0 * params.p - 1.0)
    up = (drift + n) / (2.0 * n)
    down = (n - drift) / (2.0 * n)
    out = up * (_evaluate(f, x + 1) - fx) + down * (_evaluate(f, x - 1) - fx)
    return float(out) if out.ndim == 0 else out


def abs_generator(x, n, p: float):
    """Closed form of the generator applied to ``|x|``."""
    x = np.asarray(x)
    n = np.asarray(n)
    if np.any(n < 1):
        raise DomainError("the generator is defined for n >= 1")
    out = np.where(x != 0, (2.0 * p - 1.0) * np.abs(x) / n, 1.0)
    return float(out) if out.ndim == 0 else out


def mean_sequence(params: WalkParams, N: int) -> np.ndarray:
    """``E[X_1], ..., E[X_N]`` from ``E[X_{n+1}] = (1 + (2p - 1)/n) E[X_n]``."""
    if N < 1:
        raise DomainError("N must be >= 1")
    out = np.empty(N)
    out[0] = 2.0 * params.r - 1.0
    drift = 2.0 * params.p - 1.0
    for n in range(1, N):
        out[n] = (1.0 + drift / n) * out[n - 1]
    return out


@dataclass(frozen=True)
class ScalingSequence:
    """``a_1 = 1``, ``a_{n+1} = a_n n / (n + 2p - 1)``; ``values[n - 1] = a_n``."""

    p: float
    values: np.ndarray = field(repr=False)

    def __len__(self) -> int:
        return len(self.values)

    def a(self, n):
        return self.values[np.asarray(n) - 1]

    def normalized(self) -> np.ndarray:
        """``n**(2p - 1) * a_n``, which tends to ``Gamma(2p)``."""
        n = np.arange(1, len(self.values) + 1, dtype=float)
        return n ** (2.0 * self.p - 1.0) * self.values


def scaling_sequence(p: float, N: int) -> ScalingSequence:
    if not 0.0 < p <= 1.0:
        raise DomainError(f"scaling sequence needs p in (0, 1], got {p!r}")
    if N < 1:
        raise DomainError("N must be >= 1")
    n = np.arange(1, N, dtype=float)
    values = np.empty(N)
    values[0] = 1.0
    values[1:] = np.cumprod(n / (n + 2.0 * p - 1.0))
    return ScalingSequence(float(p), values)


def gamma_fn(z: float) -> float:
    """Gamma function on ``(0, 2]`` by the Lanczos approximation (g=7, 9 terms)."""
    if not z > 0:
        raise DomainError(f"gamma_fn needs z > 0, got {z!r}")
    if z < 0.5:
        # the series loses accuracy near the pole; shift up by one
        return gamma_fn(z + 1.0) / z
    z -= 1.0
    acc = _LANCZOS_COEF[0]
    for i in range(1, len(_LANCZOS_COEF)):
        acc += _LANCZOS_COEF[i] / (z + i)
    t = z + _LANCZOS_G + 0.5
    return math.sqrt(2.0 * math.pi) * t ** (z + 0.5) * math.exp(-t) * acc


def martingale_residual(x, n, p: float, seq: ScalingSequence | None = None):
    """``E[M_{n+1} | X_n = x] - M_n`` for ``M_n = a_n X_n``; zero up to rounding.

    Pass a precomputed ``seq`` covering ``n + 1`` when evaluating many points.
    """
    n = np.asarray(n)
    if np.any(n < 1):
        raise DomainError("n must be >= 1")
    if seq is None or len(seq) < int(n.max()) + 1:
        seq = scaling_sequence(p, int(n.max()) + 1)
    x = np.asarray(x, dtype=float)
    out = seq.a(n + 1) * (x + (2.0 * p - 1.0) * x / n) - seq.a(n) * x
    return float(out) if np.ndim(out) == 0 else out


def dynkin_residual_samples(
    f: TestFunction,
    params: WalkParams,
    m: int,
    x: int,
    N: int,
    trials: int,
    seed: int,
    threads: int | None = None,
    chunk: int = 20_000,
) -> TrialSummary:
    """Summary of ``f(X_N) - f(x) - sum_{k=m}^{N-1} (L_k f)(X_k)`` over paths from ``(m, x)``.

    The residual has mean zero for every test function.
    """
    if m < 1:
        raise DomainError("start time m must be >= 1")
    check_reachable(x, m)
    if N <= m:
        raise DomainError("horizon N must exceed the start time m")
    times = np.arange(m, N)
    f0 = float(_evaluate(f, np.array(x)))
    residuals = []
    for start in range(0, trials, chunk):
        size = min(chunk, trials - start)
        paths = paths_from(params, m, x, N - m, size, seed, threads=threads, first_trial=start)
        drift = generator_apply(f, paths[:, :-1], times, params).sum(axis=1)
        residuals.append(_evaluate(f, paths[:, -1]) - f0 - drift)
    return TrialSummary.from_values(np.concatenate(residuals))
