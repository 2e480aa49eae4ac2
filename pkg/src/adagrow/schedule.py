"""Growth schedules and per-round query allocations."""

from dataclasses import dataclass, field
import math

import numpy as np

from .exceptions import DomainError


@dataclass(frozen=True)
class GrowthSchedule:
    """Dataset grows from ``n0`` points to ``n`` points, one per round."""

    n0: int
    n: int

    def __post_init__(self):
        if not (1 <= self.n0 <= self.n):
            raise DomainError(f"need 1 <= n0 <= n, got n0={self.n0}, n={self.n}")

    @property
    def growth_ratio(self):
        return self.n / self.n0

    @property
    def rounds(self):
        return range(self.n0, self.n + 1)


@dataclass(frozen=True)
class QueryAllocation:
    """Sparse allocation of ``k`` queries over rounds ``1..n``.

    Only rounds with a nonzero count are stored; ``rounds`` is strictly
    increasing. Use :meth:`dense` for the full ``k_t`` vector.
    """

    schedule: GrowthSchedule
    rounds: tuple
    counts: tuple
    k: int = field(default=None)

    def __post_init__(self):
        rounds = tuple(int(t) for t in self.rounds)
        counts = tuple(int(c) for c in self.counts)
        if len(rounds) != len(counts):
            raise DomainError("rounds and counts must have equal length")
        object.__setattr__(self, "rounds", rounds)
        object.__setattr__(self, "counts", counts)
        if self.k is None:
            object.__setattr__(self, "k", sum(counts))

    @classmethod
    def from_dense(cls, schedule, k_t, k=None):
        """Build from a length-``n`` vector where entry ``t - 1`` is ``k_t``."""
        k_t = np.asarray(k_t, dtype=np.int64)
        if k_t.shape != (schedule.n,):
            raise DomainError(f"k_t must have length n={schedule.n}, got {k_t.shape}")
        nz = np.flatnonzero(k_t)
        return cls(schedule, tuple(nz + 1), tuple(k_t[nz]), k)

    def dense(self):
        out = np.zeros(self.schedule.n, dtype=np.int64)
        for t, c in zip(self.rounds, self.counts):
            out[t - 1] += c
        return out

    def count_at(self, t):
        for r, c in zip(self.rounds, self.counts):
            if r == t:
                return c
        return 0

    def __iter__(self):
        return iter(zip(self.rounds, self.counts))

    @property
    def n0(self):
        return self.schedule.n0

    @property
    def n(self):
        return self.schedule.n


def validate_allocation(alloc):
    """Return ``None`` if ``alloc`` is valid, else a message naming the first violation."""
    sched = alloc.schedule
    prev = 0
    for t, c in alloc:
        if c < 0:
            return f"negative count {c} at round {t}"
        if t <= prev:
            return f"rounds not strictly increasing at round {t}"
        prev = t
        if t < 1 or t > sched.n:
            return f"round {t} outside 1..{sched.n}"
        if t < sched.n0 and c != 0:
            return f"query before n0: {c} queries at round {t} < n0={sched.n0}"
    if sum(alloc.counts) != alloc.k:
        return f"total mismatch: counts sum to {sum(alloc.counts)}, k={alloc.k}"
    return None


def batch_rounds(b, sched):
    """Rounds at which ``b`` evenly spaced batches fire.

    ``b == 1`` is the static case: the single batch waits for round ``n``.
    Otherwise batch ``j`` fires at ``n0 + floor(j * (n - n0) / b)``.
    """
    if b < 1:
        raise DomainError(f"need at least one batch, got b={b}")
    if b == 1:
        return [sched.n]
    span = sched.n - sched.n0
    # integer floor of j * span / b, exact for large n
    return [sched.n0 + (j * span) // b for j in range(b)]


def batch_sizes(k, b):
    """Split ``k`` into ``b`` sizes differing by at most one, larger ones first."""
    q, r = divmod(k, b)
    return [q + 1 if j < r else q for j in range(b)]


def batch_allocation(k, b, sched):
    """Evenly split ``k`` queries into ``b`` batches over the growth schedule.

    Batches that land on the same round (possible when ``b`` is close to
    ``n - n0 + 1``) are merged.
    """
    if b < 1:
        raise DomainError(f"need at least one batch, got b={b}")
    if b > k:
        raise DomainError(f"invalid allocation: b={b} batches for only k={k} queries")
    if b > sched.n - sched.n0 + 1:
        raise DomainError(
            f"invalid allocation: b={b} batches but only {sched.n - sched.n0 + 1} rounds"
        )
    merged = {}
    for t, c in zip(batch_rounds(b, sched), batch_sizes(k, b)):
        merged[t] = merged.get(t, 0) + c
    rounds = sorted(merged)
    return QueryAllocation(sched, tuple(rounds), tuple(merged[t] for t in rounds), k)


def static_allocation(k, n):
    """All ``k`` queries on a static dataset of size ``n``."""
    sched = GrowthSchedule(n, n)
    return QueryAllocation(sched, (n,) if k else (), (k,) if k else (), k)


def growth_schedule(n, n0=None, growth_ratio=None):
    """Schedule from a final size and either ``n0`` or a growth ratio ``n / n0``."""
    if (n0 is None) == (growth_ratio is None):
        raise DomainError("give exactly one of n0 and growth_ratio")
    if n0 is None:
        if not growth_ratio >= 1:
            raise DomainError(f"growth ratio must be >= 1, got {growth_ratio}")
        n0 = max(1, int(math.floor(n / growth_ratio)))
    return GrowthSchedule(int(n0), int(n))
