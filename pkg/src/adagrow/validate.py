"""Independent checks: exact resampling on enumerable toys, Monte Carlo
snapshot accuracy, conversion optimality against a brute-force grid, and
log-log slope fitting."""

from dataclasses import dataclass
import itertools
import math

import numpy as np
from scipy import stats

from .bounds import snapshot_alpha_exact
from .exceptions import DomainError, StateSpaceTooLarge
from .interact import (Distribution, StatQuery, empirical_errors, fixed_schedule_analyst,
                       gaussian_mechanism, run_interaction, seed_sequence)
from .privacy import RhoCurve, gamma_star, zcdp_to_approx_dp

RESPONSE_GRID = (0.0, 1.0 / 3.0, 2.0 / 3.0, 1.0)
STATE_LIMIT = 10**6


# ---------------------------------------------------------------- resampling

@dataclass(frozen=True)
class ToyInstance:
    """Tiny interaction small enough to enumerate every (data, transcript) pair.

    The mechanism rounds the snapshot value to the nearest point of ``grid``
    and keeps it with probability ``keep``, otherwise answers uniformly on
    the grid. The analyst asks ``q1`` in round ``n0`` and then
    ``q2_by_response[r1]`` in round ``n``.
    """

    probs: tuple
    n: int
    n0: int
    q1: tuple
    q2_by_response: tuple
    keep: float = 0.7
    grid: tuple = RESPONSE_GRID

    def __post_init__(self):
        d = len(self.probs)
        if not (1 <= d <= 3 and 1 <= self.n0 <= self.n <= 3):
            raise DomainError("toy instances need |X| <= 3 and 1 <= n0 <= n <= 3")
        if abs(sum(self.probs) - 1.0) > 1e-12 or min(self.probs) < 0:
            raise DomainError("probs must form a distribution")
        if len(self.q1) != d or len(self.q2_by_response) != len(self.grid):
            raise DomainError("query shapes do not match the instance")
        if not 0 <= self.keep <= 1:
            raise DomainError("keep must be a probability")

    @property
    def state_count(self):
        return len(self.probs) ** self.n * len(self.grid) ** 2


def _rr_law(value, grid, keep):
    g = np.asarray(grid)
    law = np.full(g.size, (1.0 - keep) / g.size)
    law[int(np.argmin(np.abs(g - value)))] += keep
    return law


def joint_law(inst, limit=STATE_LIMIT):
    """``P[x, i, j]``: data tuple ``x`` with responses ``grid[i]``, ``grid[j]``."""
    if inst.state_count > limit:
        raise StateSpaceTooLarge(inst.state_count, limit)
    d, m = len(inst.probs), len(inst.grid)
    xs = list(itertools.product(range(d), repeat=inst.n))
    joint = np.zeros((len(xs), m, m))
    for a, x in enumerate(xs):
        px = math.prod(inst.probs[v] for v in x)
        if px == 0:
            continue
        v1 = sum(inst.q1[v] for v in x[:inst.n0]) / inst.n0
        law1 = _rr_law(v1, inst.grid, inst.keep)
        for i in range(m):
            q2 = inst.q2_by_response[i]
            v2 = sum(q2[v] for v in x) / inst.n
            joint[a, i, :] = px * law1[i] * _rr_law(v2, inst.grid, inst.keep)
    return xs, joint


@dataclass
class PosteriorTable:
    """Rows ``post[:, i, j]`` give the data law conditioned on transcript ``(i, j)``."""

    marginal: np.ndarray
    post: np.ndarray

    def row_sums(self):
        live = self.marginal > 0
        return self.post.sum(axis=0)[live]


def posterior_table(joint):
    marginal = joint.sum(axis=0)
    with np.errstate(invalid="ignore", divide="ignore"):
        post = np.where(marginal > 0, joint / marginal, 0.0)
    return PosteriorTable(marginal, post)


@dataclass
class ResamplingReport:
    discrepancy: float
    reconstruction_error: float
    max_row_error: float
    states: int


def resampling_check(inst, perturb=0.0, limit=STATE_LIMIT):
    """Largest gap over singleton events between ``(X, Pi)`` and ``(X', Pi)``, ``X' ~ Q_Pi``.

    ``perturb`` shifts mass between two entries of every posterior row
    (keeping rows normalized) to show the check notices a wrong posterior.
    """
    _, joint = joint_law(inst, limit)
    table = posterior_table(joint)
    post = table.post.copy()
    if perturb:
        if post.shape[0] < 2:
            raise DomainError("perturbation needs at least two data tuples")
        live = table.marginal > 0
        post[0][live] += perturb
        post[1][live] -= perturb
    resampled = post * table.marginal
    return ResamplingReport(
        discrepancy=float(np.max(np.abs(joint - resampled))),
        reconstruction_error=float(np.max(np.abs(table.post * table.marginal - joint))),
        max_row_error=float(np.max(np.abs(table.row_sums() - 1.0), initial=0.0)),
        states=inst.state_count,
    )


def shipped_toys():
    """The enumerable instances the resampling check runs on."""
    g = len(RESPONSE_GRID)
    return [
        # single element, deterministic mechanism
        ToyInstance(probs=(1.0,), n=1, n0=1, q1=(0.5,), q2_by_response=((1.0,),) * g, keep=1.0),
        # binary domain, randomized response, the second query flips on a high first answer
        ToyInstance(probs=(0.5, 0.5), n=2, n0=1, q1=(0.0, 1.0),
                    q2_by_response=((0.0, 1.0), (0.0, 1.0), (1.0, 0.0), (1.0, 0.0)), keep=0.6),
        # three elements, non-uniform law, fractional query values
        ToyInstance(probs=(0.2, 0.3, 0.5), n=3, n0=2, q1=(0.0, 0.5, 1.0),
                    q2_by_response=((1.0, 0.0, 0.0), (0.0, 1.0, 0.0), (0.0, 0.0, 1.0), (0.25, 0.5, 1.0)),
                    keep=0.55),
    ]


# ------------------------------------------------------------- Monte Carlo

def wilson_interval(successes, trials, confidence=0.99):
    ci = stats.binomtest(int(successes), int(trials)).proportion_ci(confidence, method="wilson")
    return float(ci.low), float(ci.high)


@dataclass
class MCResult:
    failures: int
    trials: int
    beta: float
    alpha: float
    ci: tuple

    @property
    def rate(self):
        return self.failures / self.trials

    @property
    def certified(self):
        """Whole interval at or below ``beta``."""
        return self.ci[1] <= self.beta

    @property
    def violated(self):
        """Whole interval above ``beta``."""
        return self.ci[0] > self.beta


def mc_snapshot_accuracy(sigma, alloc, trials, seed, beta=0.1, p=None, make_query=None,
                         confidence=0.99):
    """Empirical rate of trials where some round's snapshot error exceeds ``alpha``.

    ``alpha`` is the exact max-of-Gaussians quantile for ``alloc.k`` queries at
    level ``beta``. Each trial draws fresh data and random queries; by default a
    uniform binary domain with uniformly random binary queries.
    """
    if trials < 100:
        raise DomainError(f"need at least 100 trials, got {trials}")
    p = p or Distribution.uniform(2)
    alpha = snapshot_alpha_exact(sigma, beta, alloc.k)
    analyst = fixed_schedule_analyst(alloc, make_query)
    mech = gaussian_mechanism(sigma, clipped=True)
    failures = 0
    for trial in range(trials):
        data, tr = run_interaction(analyst, mech, p, alloc.schedule, seed_sequence(seed, trial))
        if any(e.snapshot > alpha for e in empirical_errors(data, tr, p)):
            failures += 1
    return MCResult(failures, trials, beta, alpha, wilson_interval(failures, trials, confidence))


def uniform_interior_query(size, rng):
    """Random query with values in ``[1/4, 3/4]`` so clipping never binds at moderate noise."""
    return StatQuery(rng.uniform(0.25, 0.75, size))


# --------------------------------------------------------------- conversion

def _grid_log_psi(g, rho, eps):
    gm1 = g - 1.0
    return gm1 * (g * rho - eps) + g * np.log(gm1 / g) - np.log(gm1)


def grid_min_log_delta(rho, epsilon, points=10**5, lo=1e-9, hi=1e7):
    """Brute-force ``min_gamma log psi`` on a log grid of ``gamma - 1``, then a zoomed grid."""
    gm1 = np.logspace(math.log10(lo), math.log10(hi), points)
    vals = _grid_log_psi(1.0 + gm1, rho, epsilon)
    i = int(np.argmin(vals))
    a, b = gm1[max(i - 1, 0)], gm1[min(i + 1, points - 1)]
    fine = np.linspace(a, b, points)
    return float(min(vals[i], np.min(_grid_log_psi(1.0 + fine, rho, epsilon))))


def conversion_crosscheck(rho_max, epsilon, points=10**5):
    """Relative gap between the library's ``delta`` and the grid minimum.

    Compared in logs (``exp(log d - log d_grid) - 1``) so tiny deltas that
    underflow still compare meaningfully; both sides are capped at 1.
    """
    if rho_max == 0:
        d = zcdp_to_approx_dp(RhoCurve((1,), (0.0,)), epsilon).max()
        return 0.0 if d == 0 else math.inf
    d = zcdp_to_approx_dp(RhoCurve((1,), (rho_max,)), epsilon).max()
    # fall back to the log value only when delta underflows to zero
    ours = math.log(d) if d > 0 else gamma_star(rho_max, epsilon).log_psi
    grid = min(0.0, grid_min_log_delta(rho_max, epsilon, points))
    return abs(math.expm1(ours - grid))


# -------------------------------------------------------------------- slopes

def slope_fit(points):
    """Least-squares slope of ``log y`` against ``log x``."""
    pts = np.asarray(points, dtype=float)
    if pts.ndim != 2 or pts.shape[0] < 3 or pts.shape[1] != 2:
        raise DomainError("slope_fit needs at least three (x, y) pairs")
    if np.any(pts <= 0):
        raise DomainError("slope_fit needs positive coordinates")
    return float(np.polyfit(np.log(pts[:, 0]), np.log(pts[:, 1]), 1)[0])
