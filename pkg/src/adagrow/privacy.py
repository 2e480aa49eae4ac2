"""Non-uniform zCDP accounting for Gaussian releases on a growing dataset.

Curves are stored run-length encoded: ``ends[j]`` is the last index of run
``j`` and ``values[j]`` its value, so a curve over ``1..n`` with a handful of
batch rounds costs O(batches) memory even when ``n`` is in the millions.
"""

from dataclasses import dataclass, field
import enum
import math

import numpy as np

from .exceptions import DomainError, FilterUsageError
from .optimize import unimodal_min
from .specfun import safe_exp

GAMMA_MIN = 1.0 + 1e-12
GAMMA_MAX = 1e6


def _runs_from(ends, values):
    ends = np.asarray(ends, dtype=np.int64)
    values = np.asarray(values, dtype=float)
    if ends.ndim != 1 or ends.shape != values.shape or ends.size == 0:
        raise DomainError("a curve needs matching, non-empty ends and values")
    if ends[0] < 1 or np.any(np.diff(ends) <= 0):
        raise DomainError("curve run ends must be positive and strictly increasing")
    return ends, values


def _lengths(ends):
    return np.diff(ends, prepend=0)


def _expand(ends, values):
    return np.repeat(values, _lengths(ends))


@dataclass(frozen=True)
class RhoCurve:
    """Per-index zCDP budget ``rho(t)`` for ``t = 1..n``."""

    ends: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        ends, values = _runs_from(self.ends, self.values)
        if np.any(values < 0) or not np.all(np.isfinite(values)):
            raise DomainError("rho values must be finite and nonnegative")
        object.__setattr__(self, "ends", ends)
        object.__setattr__(self, "values", values)

    @classmethod
    def from_dense(cls, rho_t):
        rho_t = np.asarray(rho_t, dtype=float)
        if rho_t.size == 0:
            raise DomainError("empty curve")
        cut = np.flatnonzero(np.diff(rho_t) != 0)
        ends = np.append(cut + 1, rho_t.size)
        return cls(ends, rho_t[ends - 1])

    @classmethod
    def zeros(cls, n):
        return cls((n,), (0.0,))

    @property
    def n(self):
        return int(self.ends[-1])

    @property
    def rho_t(self):
        return _expand(self.ends, self.values)

    def max(self):
        return float(self.values.max())

    def __len__(self):
        return self.n

    def __getitem__(self, t):
        """Value at one-based index ``t``."""
        if not 1 <= t <= self.n:
            raise IndexError(t)
        return float(self.values[np.searchsorted(self.ends, t)])


@dataclass(frozen=True)
class DeltaCurve:
    """Per-index ``delta(t)`` at a common ``epsilon``.

    ``vacuous`` records that at least one entry was clamped down to 1.
    """

    ends: np.ndarray
    values: np.ndarray
    epsilon: float
    vacuous: bool = False
    sum_delta: float = field(init=False)

    def __post_init__(self):
        ends, values = _runs_from(self.ends, self.values)
        if np.any(values < 0) or np.any(values > 1):
            raise DomainError("delta values must lie in [0, 1]")
        if not self.epsilon >= 0:
            raise DomainError(f"epsilon must be nonnegative, got {self.epsilon}")
        object.__setattr__(self, "ends", ends)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "sum_delta", float(np.dot(_lengths(ends), values)))

    @property
    def n(self):
        return int(self.ends[-1])

    @property
    def delta_t(self):
        return _expand(self.ends, self.values)

    def max(self):
        return float(self.values.max())


def gauss_rho_curve(alloc, sigma_t):
    """zCDP curve of Gaussian answers to the queries in ``alloc``.

    ``sigma_t`` is either a scalar or a length-``n`` vector indexed by round
    (entry ``t - 1``). Index ``t`` pays ``k_tau / (2 sigma_tau^2 tau^2)`` for
    every release round ``tau >= t``.
    """
    n = alloc.n
    rounds = np.asarray(alloc.rounds, dtype=np.int64)
    counts = np.asarray(alloc.counts, dtype=float)
    active = counts > 0
    rounds, counts = rounds[active], counts[active]
    if rounds.size == 0:
        return RhoCurve.zeros(n)

    if np.ndim(sigma_t) == 0:
        sig = np.full(rounds.size, float(sigma_t))
    else:
        sigma_t = np.asarray(sigma_t, dtype=float)
        if sigma_t.shape != (n,):
            raise DomainError(f"sigma_t must be a scalar or have length n={n}")
        sig = sigma_t[rounds - 1]
    if not np.all(sig > 0) or not np.all(np.isfinite(sig)):
        bad = int(rounds[np.argmax(~(sig > 0) | ~np.isfinite(sig))])
        raise DomainError(f"sigma must be positive and finite at active round {bad}")

    tau = rounds.astype(float)
    per_round = counts / (2.0 * sig * sig * tau * tau)
    # suffix sums: run j covers (rounds[j-1], rounds[j]] and sees rounds j..end
    suffix = np.cumsum(per_round[::-1])[::-1]
    ends, values = list(rounds), list(suffix)
    if ends[-1] < n:
        ends.append(n)
        values.append(0.0)
    return RhoCurve(ends, values)


def compose_rho(a, b):
    """Pointwise sum of two curves (zCDP composition)."""
    if a.n != b.n:
        raise DomainError(f"curve lengths differ: {a.n} vs {b.n}")
    ends = np.union1d(a.ends, b.ends)
    va = a.values[np.searchsorted(a.ends, ends)]
    vb = b.values[np.searchsorted(b.ends, ends)]
    return RhoCurve(ends, va + vb)


def log_psi(gamma, rho, epsilon):
    """Natural log of :func:`psi`."""
    if not gamma > 1:
        raise DomainError(f"psi requires gamma > 1, got {gamma}")
    if rho < 0 or epsilon < 0:
        raise DomainError("rho and epsilon must be nonnegative")
    gm1 = gamma - 1.0
    return gm1 * (gamma * rho - epsilon) + gamma * (math.log(gm1) - math.log(gamma)) - math.log(gm1)


def psi(gamma, rho, epsilon):
    """``exp((g-1)(g*rho - eps)) * (1 - 1/g)^g / (g - 1)``, evaluated in logs.

    Returns ``inf`` instead of overflowing.
    """
    return safe_exp(log_psi(gamma, rho, epsilon))


def _log_psi_u(u, rho, epsilon):
    # same as log_psi with gamma = 1 + e^u; keeps precision near gamma = 1
    gm1 = math.exp(u)
    gamma = 1.0 + gm1
    return gm1 * (gamma * rho - epsilon) + gamma * (u - math.log1p(gm1)) - u


@dataclass(frozen=True)
class GammaStar:
    gamma: float
    log_psi: float
    at_boundary: bool

    def __float__(self):
        return self.gamma


def gamma_star(rho_max, epsilon, gamma_max=GAMMA_MAX):
    """Order minimizing ``log psi(., rho_max, epsilon)`` over ``(1, gamma_max]``.

    The objective is convex in ``gamma``; the search runs by golden section
    on ``log(gamma - 1)``, a monotone change of variable that keeps it
    unimodal. ``at_boundary`` flags a minimum at either end of the interval,
    which happens for instance when ``rho_max == 0`` (the infimum is the
    ``gamma -> inf`` limit, where ``psi -> 0``).
    """
    if not rho_max >= 0 or not epsilon >= 0:
        raise DomainError("rho_max and epsilon must be nonnegative")
    lo, hi = math.log(GAMMA_MIN - 1.0), math.log(gamma_max - 1.0)
    u, val, edge = unimodal_min(lambda u: _log_psi_u(u, rho_max, epsilon), lo, hi, tol=1e-11)
    if rho_max == 0:
        return GammaStar(float(gamma_max), -math.inf, True)
    if not edge:
        # golden section stops ~1e-11 from an endpoint when the slope never turns
        edge = min(u - lo, hi - u) < 1e-9
    return GammaStar(1.0 + math.exp(u), val, edge)


def zcdp_to_approx_dp(rho, epsilon):
    """Convert a zCDP curve to a per-index approximate-DP curve at ``epsilon``.

    One order ``gamma*`` is chosen at the curve's maximum and used for every
    index. Entries above 1 are clamped and flagged vacuous. For the uniform
    variant, pass a constant curve at ``rho.max()``.
    """
    if not epsilon >= 0:
        raise DomainError(f"epsilon must be nonnegative, got {epsilon}")
    rmax = rho.max()
    if rmax == 0:
        return DeltaCurve(rho.ends, np.zeros_like(rho.values), epsilon)
    g = gamma_star(rmax, epsilon).gamma
    raw = np.array([psi(g, r, epsilon) for r in rho.values])
    vacuous = bool(np.any(raw > 1))
    return DeltaCurve(rho.ends, np.minimum(raw, 1.0), epsilon, vacuous)


def uniform_curve(rho):
    """Constant curve at ``rho.max()`` over the same index range."""
    return RhoCurve((rho.n,), (rho.max(),))


class FilterDecision(enum.Enum):
    APPROVE = "approve"
    TERMINATE = "terminate"


@dataclass
class FilterState:
    """Running zCDP spend against a fixed target; single owner, not thread-safe."""

    target_rho: float
    spent_rho: float = 0.0
    terminated: bool = False

    def __post_init__(self):
        if not self.target_rho >= 0:
            raise DomainError(f"target_rho must be nonnegative, got {self.target_rho}")


def filter_charge(state, sigma, t):
    """Charge one Gaussian release at noise ``sigma`` in round ``t``.

    Approves while the cumulative spend stays within target, otherwise
    terminates the filter for good.
    """
    if state.terminated:
        raise FilterUsageError("charge on a terminated filter")
    if not sigma > 0 or t < 1:
        raise DomainError(f"need sigma > 0 and t >= 1, got sigma={sigma}, t={t}")
    state.spent_rho += 1.0 / (2.0 * sigma * sigma * t * t)
    if state.spent_rho <= state.target_rho:
        return FilterDecision.APPROVE
    state.terminated = True
    return FilterDecision.TERMINATE
