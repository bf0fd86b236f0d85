"""Single elephant random walk: parameters, kernel, samplers and the exact oracle.

With uniform memory the probability of a +1 step after ``n`` steps depends only
on the current position, so the walk is a time-inhomogeneous Markov chain on
``(n, x)``.  Two samplers are provided: ``"marginal"`` draws each step from that
chain, ``"history"`` replays the copy/reverse rule against a stored (bit-packed)
history.  They must agree in law; ``exact_distribution`` is the enumeration
oracle both are checked against.
"""

from __future__ import annotations

from collections.abc import Callable, Sequence
from dataclasses import dataclass, field
from functools import cached_property

import numba as nb
import numpy as np

from erw import _parallel
from erw.errors import ConfigError, DomainError, ResourceLimitError, StateError
from erw.rng import Stream, trial_key, uniform

MAX_EXACT_HORIZON = 20
MODES = ("marginal", "history")


def _check_prob(name: str, value: float) -> float:
    value = float(value)
    if not 0.0 <= value <= 1.0:
        raise DomainError(f"{name} must lie in [0, 1], got {value!r}")
    return value


@dataclass(frozen=True)
class WalkParams:
    """Copy probability ``p`` and first-step right probability ``r``."""

    p: float
    r: float = 0.5

    def __post_init__(self):
        object.__setattr__(self, "p", _check_prob("p", self.p))
        object.__setattr__(self, "r", _check_prob("r", self.r))


def _check_step(y) -> None:
    if not np.all((np.asarray(y) == 1) | (np.asarray(y) == -1)):
        raise DomainError(f"step must be -1 or +1, got {y!r}")


def check_reachable(x, n) -> None:
    """Raise unless every ``(x, n)`` pair satisfies ``|x| <= n`` and ``x = n (mod 2)``."""
    x = np.asarray(x)
    n = np.asarray(n)
    if np.any(n < 0) or np.any(np.abs(x) > n) or np.any((x - n) % 2 != 0):
        raise DomainError(f"position {x!r} is not reachable after {n!r} steps")


# -- packed history -----------------------------------------------------------


@dataclass(frozen=True)
class PackedHistory:
    """Steps ``eta_1..eta_n`` stored one bit each, ``+1 -> 1``, MSB first per byte.

    The byte layout is that of :func:`numpy.packbits`, which is also what the
    numba samplers write.
    """

    n: int
    bits: np.ndarray = field(repr=False)

    @classmethod
    def from_steps(cls, steps: Sequence[int] | np.ndarray) -> PackedHistory:
        steps = np.asarray(steps, dtype=np.int64)
        _check_step(steps)
        return cls(len(steps), np.packbits(steps > 0))

    def steps(self) -> np.ndarray:
        up = np.unpackbits(self.bits, count=self.n).astype(np.int8)
        return 2 * up - 1

    def step(self, k: int) -> int:
        """The ``k``-th step, ``1 <= k <= n``."""
        if not 1 <= k <= self.n:
            raise IndexError(k)
        i = k - 1
        return 1 if self.bits[i >> 3] & (0x80 >> (i & 7)) else -1

    def position(self) -> int:
        return 2 * int(np.unpackbits(self.bits, count=self.n).sum()) - self.n

    def __len__(self) -> int:
        return self.n

    def __eq__(self, other) -> bool:
        if not isinstance(other, PackedHistory):
            return NotImplemented
        return self.n == other.n and np.array_equal(self.bits, other.bits)

    def __hash__(self):
        return hash((self.n, self.bits.tobytes()))


@dataclass(frozen=True)
class WalkState:
    """Time ``n``, position ``x`` and optionally the full step history."""

    n: int
    x: int
    history: PackedHistory | None = None

    def __post_init__(self):
        check_reachable(self.x, self.n)
        if self.history is not None:
            if len(self.history) != self.n:
                raise DomainError(f"history has {len(self.history)} steps, state has n={self.n}")
            if self.history.position() != self.x:
                raise DomainError("history partial sums do not reproduce x")

    @classmethod
    def from_steps(cls, steps) -> WalkState:
        h = PackedHistory.from_steps(steps)
        return cls(h.n, h.position(), h)


@dataclass(frozen=True)
class Trajectory:
    params: WalkParams
    history: PackedHistory

    @property
    def n(self) -> int:
        return self.history.n

    @cached_property
    def steps(self) -> np.ndarray:
        return self.history.steps()

    @cached_property
    def positions(self) -> np.ndarray:
        """``positions[k - 1] = X_k`` for ``k = 1..n``."""
        return np.cumsum(self.steps, dtype=np.int64)


# -- memory kernels -----------------------------------------------------------


class MemoryKernel:
    """Rule choosing which past step ``1..n`` is remembered at time ``n + 1``."""

    uniform = False

    def pmf(self, n: int) -> np.ndarray:
        raise NotImplementedError

    def draw(self, n: int, rng: Stream) -> int:
        """Remembered index in ``1..n``; consumes one uniform."""
        cdf = np.cumsum(self.pmf(n))
        k = int(np.searchsorted(cdf, rng.random() * cdf[-1], side="right"))
        return min(k, n - 1) + 1


class UniformMemory(MemoryKernel):
    """Full memory: every past step equally likely."""

    uniform = True

    def pmf(self, n: int) -> np.ndarray:
        return np.full(n, 1.0 / n)

    def draw(self, n: int, rng: Stream) -> int:
        return rng.below(n) + 1


class WeightedMemory(MemoryKernel):
    """Memory kernel from a weight function ``n -> weights over 1..n`` (normalised here)."""

    def __init__(self, weights: Callable[[int], Sequence[float]]):
        self._weights = weights

    def pmf(self, n: int) -> np.ndarray:
        w = np.asarray(self._weights(n), dtype=float)
        if w.shape != (n,) or np.any(w < 0) or not w.sum() > 0:
            raise DomainError(f"memory weights for n={n} must be {n} nonnegative values with positive sum")
        pmf = w / w.sum()
        if abs(pmf.sum() - 1.0) > 1e-12:
            raise DomainError(f"memory pmf for n={n} does not sum to 1")
        return pmf


# -- kernel and samplers --------------------------------------------------------


def first_step_prob(params: WalkParams, y: int) -> float:
    _check_step(y)
    return 0.5 * (1.0 + (2.0 * params.r - 1.0) * y)


def kernel_prob(x, n, y, params: WalkParams):
    """Probability of moving from ``x`` to ``x + y`` at time ``n >= 1``.

    Accepts arrays.  The down probability is taken as the complement of the up
    probability, which makes the two sum to exactly 1 in floating point.
    """
    n = np.asarray(n)
    if np.any(n < 1):
        raise DomainError("kernel is defined for n >= 1")
    check_reachable(x, n)
    _check_step(y)
    up = (np.asarray(x) * (2.0 * params.p - 1.0) + n) / (2.0 * n)
    out = np.where(np.asarray(y) == 1, up, 1.0 - up)
    return float(out) if out.ndim == 0 else out


def sample_step_marginal(state: WalkState, params: WalkParams, rng: Stream) -> int:
    if state.n < 1:
        raise StateError("the first step follows the first-step law; use sample_trajectory")
    return 1 if rng.random() < kernel_prob(state.x, state.n, 1, params) else -1


def sample_step_history(history, kernel: MemoryKernel, params: WalkParams, rng: Stream) -> int:
    """Copy (probability ``p``) or reverse a remembered past step."""
    if not isinstance(history, PackedHistory):
        history = PackedHistory.from_steps(history)
    if history.n == 0:
        raise StateError("empty history: the first step follows the first-step law")
    eta = history.step(kernel.draw(history.n, rng))
    return eta if rng.random() < params.p else -eta


@nb.njit(cache=True, nogil=True)
def _up_prob(x, n, p):
    return (x * (2.0 * p - 1.0) + n) / (2.0 * n)


@nb.njit(cache=True, nogil=True)
def _walk(k0, k1, ctr, n_steps, p, r, history_mode, bits):
    """Run ``n_steps`` steps from the origin; writes packed steps into ``bits``.

    Returns the updated draw counter and the final position.
    """
    x = 0
    for n in range(n_steps):
        if n == 0:
            up = uniform(k0, k1, ctr) < r
            ctr += np.uint64(1)
        elif history_mode:
            k = int(uniform(k0, k1, ctr) * n)
            ctr += np.uint64(1)
            if k >= n:
                k = n - 1
            past_up = (bits[k >> 3] >> (7 - (k & 7))) & 1 == 1
            copy = uniform(k0, k1, ctr) < p
            ctr += np.uint64(1)
            up = past_up == copy
        else:
            up = uniform(k0, k1, ctr) < _up_prob(x, n, p)
            ctr += np.uint64(1)
        byte = n >> 3
        mask = np.uint8(0x80 >> (n & 7))
        if up:
            bits[byte] |= mask
            x += 1
        else:
            bits[byte] &= ~mask
            x -= 1
    return ctr, x


@nb.njit(cache=True, nogil=True)
def _terminal_kernel(seed, n_steps, p, r, history_mode, t0, t1, out):
    bits = np.zeros((n_steps + 7) // 8, dtype=np.uint8)
    for t in range(t0, t1):
        k0, k1 = trial_key(seed, t)
        _, x = _walk(k0, k1, np.uint64(0), n_steps, p, r, history_mode, bits)
        out[t - t0] = x


def _check_mode(mode: str, kernel: MemoryKernel | None) -> bool:
    if mode not in MODES:
        raise ConfigError(f"mode must be one of {MODES}, got {mode!r}", key="mode")
    if mode == "marginal" and kernel is not None and not kernel.uniform:
        raise ConfigError("marginal sampling is only valid for uniform memory", key="mode")
    return mode == "history"


def sample_trajectory(
    params: WalkParams,
    n_steps: int,
    mode: str = "marginal",
    rng: Stream | None = None,
    kernel: MemoryKernel | None = None,
) -> Trajectory:
    """Draw one path of ``n_steps`` steps; advances ``rng``."""
    history_mode = _check_mode(mode, kernel)
    if n_steps < 1:
        raise DomainError("n_steps must be >= 1")
    rng = rng if rng is not None else Stream.for_trial(0)
    if kernel is not None and not kernel.uniform:
        steps = [1 if rng.random() < params.r else -1]
        for _ in range(1, n_steps):
            steps.append(sample_step_history(steps, kernel, params, rng))
        return Trajectory(params, PackedHistory.from_steps(steps))
    bits = np.zeros((n_steps + 7) // 8, dtype=np.uint8)
    k0, k1 = rng.key_words
    ctr, _ = _walk(k0, k1, np.uint64(rng.counter), n_steps, params.p, params.r, history_mode, bits)
    rng.counter = int(ctr)
    return Trajectory(params, PackedHistory(n_steps, bits))


def terminal_positions(
    params: WalkParams,
    n_steps: int,
    trials: int,
    seed: int,
    mode: str = "marginal",
    threads: int | None = None,
    first_trial: int = 0,
) -> np.ndarray:
    """``X_n`` for ``trials`` independent walks; trial ``t`` uses stream ``(seed, t)``."""
    history_mode = _check_mode(mode, None)
    out = np.empty(trials, dtype=np.int64)
    _parallel.map_trials(
        _terminal_kernel,
        trials,
        (np.uint64(seed), n_steps, params.p, params.r, history_mode),
        (out,),
        first_trial=first_trial,
        threads=threads,
    )
    return out


# -- exact oracle -------------------------------------------------------------


@dataclass(frozen=True)
class Pmf:
    """Law of ``X_n`` on the lattice ``-n, -n+2, ..., n``."""

    n: int
    mass: np.ndarray = field(repr=False)

    @property
    def support(self) -> np.ndarray:
        return np.arange(-self.n, self.n + 1, 2)

    def prob(self, x: int) -> float:
        if abs(x) > self.n or (x - self.n) % 2:
            return 0.0
        return float(self.mass[(x + self.n) // 2])

    def mean(self) -> float:
        return float(np.dot(self.support, self.mass))

    def as_dict(self) -> dict[int, float]:
        return {int(x): float(m) for x, m in zip(self.support, self.mass)}

    def total_variation(self, samples: np.ndarray) -> float:
        """TV distance between this law and the empirical law of ``samples``."""
        samples = np.asarray(samples)
        if np.any(np.abs(samples) > self.n) or np.any((samples - self.n) % 2):
            return 1.0
        counts = np.bincount((samples + self.n) // 2, minlength=self.n + 1)
        return 0.5 * float(np.abs(counts / len(samples) - self.mass).sum())


def _enumerate(params: WalkParams, n: int):
    """Yield ``(k, prob, n_plus)`` over all ``2**k`` prefixes of length ``k = 1..n``.

    Each extension applies the copy/reverse rule to the prefix's counts of past
    +1 and -1 steps (pick one uniformly, copy it with probability ``p``); the
    position kernel is not used.
    """
    if n < 1:
        raise DomainError("horizon must be >= 1")
    if n > MAX_EXACT_HORIZON:
        raise ResourceLimitError(f"exact enumeration is capped at n={MAX_EXACT_HORIZON}, got {n}")
    p, r = params.p, params.r
    prob = np.array([r, 1.0 - r])
    n_plus = np.array([1, 0], dtype=np.int64)
    yield 1, prob, n_plus
    for k in range(1, n):
        n_minus = k - n_plus
        p_up = (p * n_plus + (1.0 - p) * n_minus) / k
        p_down = (p * n_minus + (1.0 - p) * n_plus) / k
        prob = np.concatenate((prob * p_up, prob * p_down))
        n_plus = np.concatenate((n_plus + 1, n_plus))
        yield k + 1, prob, n_plus


def exact_distribution(params: WalkParams, n: int) -> Pmf:
    """Exact law of ``X_n`` by enumerating all ``2**n`` step sequences (``n <= 20``)."""
    for _, prob, n_plus in _enumerate(params, n):
        pass
    return Pmf(n, np.bincount(n_plus, weights=prob, minlength=n + 1))


def exact_means(params: WalkParams, n: int) -> np.ndarray:
    """``E[X_1], ..., E[X_n]`` from the same enumeration."""
    return np.array([np.dot(prob, 2 * n_plus - k) for k, prob, n_plus in _enumerate(params, n)])

@nb.njit(cache=True, nogil=True)
def _paths_from_kernel(seed, m, x0, n_steps, p, t0, t1, out):
    for t in range(t0, t1):
        k0, k1 = trial_key(seed, t)
        ctr = np.uint64(0)
        x = x0
        out[t - t0, 0] = x
        for i in range(n_steps):
            up = uniform(k0, k1, ctr) < _up_prob(x, m + i, p)
            ctr += np.uint64(1)
            x += 1 if up else -1
            out[t - t0, i + 1] = x


def paths_from(
    params: WalkParams,
    m: int,
    x: int,
    n_steps: int,
    trials: int,
    seed: int,
    threads: int | None = None,
    first_trial: int = 0,
) -> np.ndarray:
    """Marginal-mode paths started at position ``x`` at time ``m >= 1``.

    Row ``t`` holds ``X_m, ..., X_{m + n_steps}`` for trial ``first_trial + t``.
    Given ``X_m = x`` the future does not depend on the earlier path, so no
    history is needed.
    """
    if m < 1:
        raise DomainError("start time m must be >= 1")
    check_reachable(x, m)
    out = np.empty((trials, n_steps + 1), dtype=np.int64)
    _parallel.map_trials(
        _paths_from_kernel,
        trials,
        (np.uint64(seed), m, x, n_steps, params.p),
        (out,),
        first_trial=first_trial,
        threads=threads,
    )
    return out
