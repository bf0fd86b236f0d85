"""Finite replica mean-field system of ``M`` interacting elephant walks.

At each global step a mover ``i`` is chosen uniformly, an influencer ``j != i``
uniformly among the others, and the mover copies (probability ``p``) or
reverses a uniformly chosen past step of ``j``.  Every replica starts with one
fair +/-1 jump so that influencers always have a history.
"""

from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass, field

import numba as nb
import numpy as np

from erw import _parallel
from erw.core import MODES, PackedHistory, _up_prob, _check_prob
from erw.errors import ConfigError, DomainError, ResourceLimitError
from erw.rng import Stream, trial_key, uniform
from erw.summary import TrialSummary

MAX_EXACT_STEPS = 10


@dataclass(frozen=True)
class RmfParams:
    M: int
    p: float
    total_steps: int = 1

    def __post_init__(self):
        if self.M < 2:
            raise DomainError(f"need at least two replicas (M >= 2), got M={self.M}")
        if self.total_steps < 0:
            raise DomainError("total_steps must be >= 0")
        object.__setattr__(self, "p", _check_prob("p", self.p))


@dataclass
class RmfState:
    """Per-replica step counts ``n``, positions ``x`` and packed histories (one row each)."""

    n: np.ndarray
    x: np.ndarray
    bits: np.ndarray = field(repr=False)
    stream: Stream = field(repr=False, default=None)

    @property
    def M(self) -> int:
        return len(self.n)

    @property
    def total(self) -> int:
        return int(self.n.sum())

    def history(self, i: int) -> PackedHistory:
        n = int(self.n[i])
        return PackedHistory(n, self.bits[i, : (n + 7) // 8].copy())

    def _reserve(self, steps: int) -> None:
        need = (int(self.n.max()) + steps + 7) // 8
        if need > self.bits.shape[1]:
            grown = np.zeros((self.M, max(need, 2 * self.bits.shape[1])), dtype=np.uint8)
            grown[:, : self.bits.shape[1]] = self.bits
            self.bits = grown


@dataclass(frozen=True)
class RmfBound:
    p: float
    value: float


# -- kernels ----------------------------------------------------------------


@nb.njit(cache=True, nogil=True)
def _init(n, x, bits, k0, k1, ctr):
    for i in range(n.shape[0]):
        up = uniform(k0, k1, ctr) < 0.5
        ctr += np.uint64(1)
        n[i] = 1
        if up:
            bits[i, 0] = 0x80
            x[i] = 1
        else:
            bits[i, 0] = 0
            x[i] = -1
    return ctr


@nb.njit(cache=True, nogil=True)
def _step(n, x, bits, p, history_mode, k0, k1, ctr):
    M = n.shape[0]
    i = int(uniform(k0, k1, ctr) * M)
    ctr += np.uint64(1)
    if i >= M:
        i = M - 1
    j = int(uniform(k0, k1, ctr) * (M - 1))
    ctr += np.uint64(1)
    if j >= M - 1:
        j = M - 2
    if j >= i:
        j += 1
    if history_mode:
        k = int(uniform(k0, k1, ctr) * n[j])
        ctr += np.uint64(1)
        if k >= n[j]:
            k = n[j] - 1
        past_up = (bits[j, k >> 3] >> (7 - (k & 7))) & 1 == 1
        copy = uniform(k0, k1, ctr) < p
        ctr += np.uint64(1)
        up = past_up == copy
    else:
        up = uniform(k0, k1, ctr) < _up_prob(x[j], n[j], p)
        ctr += np.uint64(1)
    pos = n[i]
    mask = np.uint8(0x80 >> (pos & 7))
    if up:
        bits[i, pos >> 3] |= mask
        x[i] += 1
    else:
        bits[i, pos >> 3] &= ~mask
        x[i] -= 1
    n[i] += 1
    return ctr


@nb.njit(cache=True, nogil=True)
def _simulate(total_steps, p, history_mode, k0, k1, ctr, n, x, bits):
    ctr = _init(n, x, bits, k0, k1, ctr)
    for _ in range(total_steps):
        ctr = _step(n, x, bits, p, history_mode, k0, k1, ctr)
    return ctr


@nb.njit(cache=True, nogil=True)
def _final_kernel(seed, M, total_steps, p, history_mode, t0, t1, out_n, out_x):
    bits = np.zeros((M, (total_steps + 8) // 8), dtype=np.uint8)
    for t in range(t0, t1):
        k0, k1 = trial_key(seed, t)
        _simulate(total_steps, p, history_mode, k0, k1, np.uint64(0), out_n[t - t0], out_x[t - t0], bits)


# -- public API ---------------------------------------------------------------


def _history_mode(mode: str) -> bool:
    if mode not in MODES:
        raise ConfigError(f"mode must be one of {MODES}, got {mode!r}", key="mode")
    return mode == "history"


def rmf_init(M: int, rng: Stream, capacity: int = 64) -> RmfState:
    """Every replica makes one fair +/-1 jump; ``rng`` is kept by the state."""
    if M < 2:
        raise DomainError(f"need at least two replicas (M >= 2), got M={M}")
    n = np.zeros(M, dtype=np.int64)
    x = np.zeros(M, dtype=np.int64)
    bits = np.zeros((M, max(1, (capacity + 7) // 8)), dtype=np.uint8)
    k0, k1 = rng.key_words
    rng.counter = int(_init(n, x, bits, k0, k1, np.uint64(rng.counter)))
    return RmfState(n, x, bits, rng)


def rmf_step(state: RmfState, params: RmfParams, mode: str = "marginal", rng: Stream | None = None) -> RmfState:
    """Advance exactly one replica by one step (in place); returns ``state``."""
    history_mode = _history_mode(mode)
    rng = rng if rng is not None else state.stream
    state._reserve(1)
    k0, k1 = rng.key_words
    rng.counter = int(_step(state.n, state.x, state.bits, params.p, history_mode, k0, k1, np.uint64(rng.counter)))
    return state


@dataclass(frozen=True)
class RmfRun:
    state: RmfState
    ratio: np.ndarray
    abs_ratio: np.ndarray


def rmf_run(params: RmfParams, mode: str = "marginal", rng: Stream | None = None) -> RmfRun:
    """Initialise and apply ``total_steps`` global steps.

    Reports the signed ratios ``x_i / n_i`` and the distances ``|x_i| / n_i``.
    """
    history_mode = _history_mode(mode)
    rng = rng if rng is not None else Stream.for_trial(0)
    M = params.M
    n = np.zeros(M, dtype=np.int64)
    x = np.zeros(M, dtype=np.int64)
    bits = np.zeros((M, (params.total_steps + 8) // 8), dtype=np.uint8)
    k0, k1 = rng.key_words
    ctr = _simulate(params.total_steps, params.p, history_mode, k0, k1, np.uint64(rng.counter), n, x, bits)
    rng.counter = int(ctr)
    state = RmfState(n, x, bits, rng)
    return RmfRun(state, state.x / state.n, np.abs(state.x) / state.n)


def rmf_final_states(
    params: RmfParams,
    runs: int,
    seed: int,
    mode: str = "marginal",
    threads: int | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """Final ``(n, x)`` of every replica for ``runs`` independent systems (``runs x M`` arrays).

    Run ``t`` equals ``rmf_run(params, mode, Stream.for_trial(seed, t))``.
    """
    history_mode = _history_mode(mode)
    out_n = np.empty((runs, params.M), dtype=np.int64)
    out_x = np.empty((runs, params.M), dtype=np.int64)
    _parallel.map_trials(
        _final_kernel,
        runs,
        (np.uint64(seed), params.M, params.total_steps, params.p, history_mode),
        (out_n, out_x),
        threads=threads,
    )
    return out_n, out_x


@dataclass(frozen=True)
class RmfEstimate:
    """Run-level averages over replicas of ``x_i/n_i`` and ``|x_i|/n_i``."""

    params: RmfParams
    ratio: TrialSummary
    abs_ratio: TrialSummary
    run_ratio: np.ndarray = field(repr=False)
    run_abs_ratio: np.ndarray = field(repr=False)
    replica_ratios: np.ndarray = field(repr=False)

    def replica_correlation(self) -> float:
        """Mean pairwise correlation of ``x_i/n_i`` across runs (independence probe)."""
        c = np.corrcoef(self.replica_ratios, rowvar=False)
        off = c[~np.eye(len(c), dtype=bool)]
        return float(np.nanmean(off))


def rmf_estimate(
    params: RmfParams,
    runs: int,
    seed: int,
    mode: str = "marginal",
    threads: int | None = None,
) -> RmfEstimate:
    """Replicas are exchangeable, so each run contributes its replica average."""
    n, x = rmf_final_states(params, runs, seed, mode, threads)
    ratios = x / n
    run_ratio = ratios.mean(axis=1)
    run_abs = np.abs(ratios).mean(axis=1)
    return RmfEstimate(
        params,
        TrialSummary.from_values(run_ratio),
        TrialSummary.from_values(run_abs),
        run_ratio,
        run_abs,
        ratios,
    )


def rmf_bound(p: float) -> RmfBound:
    """Bound on ``E[X_i / n_i]`` for ``p < 1/4`` or ``p >= 3/4``."""
    p = _check_prob("p", p)
    if p < 0.25:
        return RmfBound(p, 1.0 / (2.0 * (1.0 - 2.0 * p)))
    if p >= 0.75:
        return RmfBound(p, 1.0 / (2.0 * (2.0 * p - 1.0)))
    raise DomainError(f"no bound is available for p in [1/4, 3/4), got {p!r}")


def rmf_exact_small(p: float, steps: int, M: int = 2) -> dict[tuple[int, int, int, int], float]:
    """Exact law of ``(x_1, n_1, x_2, n_2)`` after ``steps`` global steps with two replicas.

    Enumerates initial jumps, mover, influencer, remembered index and the
    copy/reverse decision over full histories.
    """
    if M != 2:
        raise ResourceLimitError("exact enumeration is implemented for M = 2 only")
    if not 0 <= steps <= MAX_EXACT_STEPS:
        raise ResourceLimitError(f"exact enumeration is capped at {MAX_EXACT_STEPS} steps, got {steps}")
    p = _check_prob("p", p)
    dist: dict[tuple[tuple[int, ...], tuple[int, ...]], float] = {}
    for a in (1, -1):
        for b in (1, -1):
            dist[((a,), (b,))] = 0.25
    for _ in range(steps):
        nxt: dict = defaultdict(float)
        for hists, prob in dist.items():
            for i in (0, 1):
                j = 1 - i
                hj = hists[j]
                w = prob * 0.5 / len(hj)
                for eta in hj:
                    for y, q in ((eta, p), (-eta, 1.0 - p)):
                        if q == 0.0:
                            continue
                        new = list(hists)
                        new[i] = hists[i] + (y,)
                        nxt[tuple(new)] += w * q
        dist = dict(nxt)
    out: dict[tuple[int, int, int, int], float] = defaultdict(float)
    for (h1, h2), prob in dist.items():
        out[(sum(h1), len(h1), sum(h2), len(h2))] += prob
    return dict(out)
