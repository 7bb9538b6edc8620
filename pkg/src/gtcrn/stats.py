"""Single-pass mergeable moment accumulator."""

from __future__ import annotations

import math


class RunningStats:
    """Count, mean and centered second moment (Welford), mergeable by Chan's formula.

    Also tracks the running sum and the largest absolute summand so heavy-tail
    diagnostics can be computed without storing samples.
    """

    __slots__ = ("n", "mean", "m2", "total", "max_abs")

    def __init__(self):
        self.n = 0
        self.mean = 0.0
        self.m2 = 0.0
        self.total = 0.0
        self.max_abs = 0.0

    def push(self, x: float) -> None:
        self.n += 1
        delta = x - self.mean
        self.mean += delta / self.n
        self.m2 += delta * (x - self.mean)
        self.total += x
        ax = abs(x)
        if ax > self.max_abs:
            self.max_abs = ax

    def merge(self, other: "RunningStats") -> "RunningStats":
        out = RunningStats()
        if self.n == 0:
            out.n, out.mean, out.m2 = other.n, other.mean, other.m2
        elif other.n == 0:
            out.n, out.mean, out.m2 = self.n, self.mean, self.m2
        else:
            n = self.n + other.n
            delta = other.mean - self.mean
            out.n = n
            out.mean = self.mean + delta * other.n / n
            out.m2 = self.m2 + other.m2 + delta * delta * self.n * other.n / n
        out.total = self.total + other.total
        out.max_abs = max(self.max_abs, other.max_abs)
        return out

    __add__ = merge

    @property
    def variance(self) -> float:
        """Unbiased sample variance (0 for fewer than two samples)."""
        return self.m2 / (self.n - 1) if self.n > 1 else 0.0

    @property
    def stderr(self) -> float:
        return math.sqrt(self.variance / self.n) if self.n else math.inf

    @property
    def top_share(self) -> float:
        """Largest single summand as a fraction of the summed magnitude."""
        if self.total == 0:
            return 0.0 if self.max_abs == 0 else math.inf
        return self.max_abs / abs(self.total)

    def __repr__(self):
        return f"RunningStats(n={self.n}, mean={self.mean!r}, variance={self.variance!r})"
