from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

Z95 = 1.959963984540054


@dataclass(frozen=True)
class TrialSummary:
    """Sample mean of uncensored trials with a normal-approximation 95% interval."""

    count: int
    mean: float
    std: float
    stderr: float
    ci_low: float
    ci_high: float
    censored_count: int = 0

    @classmethod
    def from_moments(cls, count: int, mean: float, m2: float, censored_count: int = 0) -> TrialSummary:
        if count == 0:
            nan = float("nan")
            return cls(0, nan, nan, nan, nan, nan, censored_count)
        std = math.sqrt(m2 / (count - 1)) if count > 1 else 0.0
        se = std / math.sqrt(count)
        return cls(count, mean, std, se, mean - Z95 * se, mean + Z95 * se, censored_count)

    @classmethod
    def from_values(cls, values, censored_count: int = 0) -> TrialSummary:
        values = np.asarray(values, dtype=float)
        if values.size == 0:
            return cls.from_moments(0, 0.0, 0.0, censored_count)
        mean = float(values.mean())
        m2 = float(np.sum((values - mean) ** 2))
        return cls.from_moments(values.size, mean, m2, censored_count)

    @property
    def m2(self) -> float:
        return self.std**2 * (self.count - 1) if self.count > 1 else 0.0

    def merge(self, other: TrialSummary) -> TrialSummary:
        """Pool two summaries of independent trials (Chan et al. update)."""
        if self.count == 0:
            return TrialSummary.from_moments(other.count, other.mean, other.m2, self.censored_count + other.censored_count)
        if other.count == 0:
            return TrialSummary.from_moments(self.count, self.mean, self.m2, self.censored_count + other.censored_count)
        n = self.count + other.count
        delta = other.mean - self.mean
        mean = self.mean + delta * other.count / n
        m2 = self.m2 + other.m2 + delta**2 * self.count * other.count / n
        return TrialSummary.from_moments(n, mean, m2, self.censored_count + other.censored_count)

    def as_dict(self) -> dict:
        return {
            "count": self.count,
            "mean": self.mean,
            "stderr": self.stderr,
            "ci_low": self.ci_low,
            "ci_high": self.ci_high,
            "censored_count": self.censored_count,
        }
