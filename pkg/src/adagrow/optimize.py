"""Box-constrained multi-start simplex minimization and 1-D searches.

The local solver is SciPy's bounded Nelder-Mead; seeding, coordinate
scaling, restart reduction and determinism are handled here.
"""

from dataclasses import dataclass, field
import math

import numpy as np
from scipy import optimize as sopt
from scipy.stats import qmc

from .exceptions import DomainError, OptimizationError
from .specfun import Tolerance

_GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0


@dataclass(frozen=True)
class Box:
    lo: tuple
    hi: tuple
    log_scaled: tuple = None

    def __post_init__(self):
        lo = tuple(float(v) for v in self.lo)
        hi = tuple(float(v) for v in self.hi)
        log_scaled = self.log_scaled
        if log_scaled is None:
            log_scaled = (False,) * len(lo)
        log_scaled = tuple(bool(v) for v in log_scaled)
        if not (len(lo) == len(hi) == len(log_scaled)):
            raise DomainError("Box fields must have equal length")
        for a, b, lg in zip(lo, hi, log_scaled):
            if not a < b:
                raise DomainError(f"Box needs lo < hi, got {a} >= {b}")
            if lg and a <= 0:
                raise DomainError("log-scaled axes need a positive lower bound")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)
        object.__setattr__(self, "log_scaled", log_scaled)

    @property
    def dim(self):
        return len(self.lo)

    def _ends(self):
        lo = np.array([math.log(a) if lg else a for a, lg in zip(self.lo, self.log_scaled)])
        hi = np.array([math.log(b) if lg else b for b, lg in zip(self.hi, self.log_scaled)])
        return lo, hi

    def from_unit(self, u):
        """Map a point of the unit cube to box coordinates."""
        lo, hi = self._ends()
        z = lo + np.clip(u, 0.0, 1.0) * (hi - lo)
        x = np.where(self.log_scaled, np.exp(z), z)
        # exp(log(hi)) may overshoot hi by an ulp
        return np.clip(x, self.lo, self.hi)

    def to_unit(self, x):
        lo, hi = self._ends()
        x = np.clip(np.asarray(x, dtype=float), self.lo, self.hi)
        z = np.where(self.log_scaled, np.log(x), x)
        return np.clip((z - lo) / (hi - lo), 0.0, 1.0)

    def contains(self, x):
        x = np.asarray(x, dtype=float)
        return bool(np.all(x >= np.array(self.lo)) and np.all(x <= np.array(self.hi)))


@dataclass
class OptResult:
    argmin: np.ndarray
    value: float
    evals: int
    restarts_used: int
    trace: list = field(default_factory=list, repr=False)


def _finite_or_inf(v):
    v = float(v)
    return v if math.isfinite(v) else math.inf


def minimize_box(f, box, restarts=32, tol=Tolerance(1e-9, 4000), seed=0, starts=()):
    """Minimize ``f`` over ``box`` from several simplex descents.

    Descents are seeded from a Latin-hypercube sample of ``restarts`` points
    (in the box's scaled coordinates), preceded by any explicit ``starts``.
    Each descent runs to ``tol.rel_err`` and is polished by one restart from
    its end point. The best result wins; ties break on the argmin so the
    reduction is independent of evaluation order.
    """
    evals = 0

    def fu(u):
        nonlocal evals
        evals += 1
        return _finite_or_inf(f(box.from_unit(u)))

    seeds = [box.to_unit(s) for s in starts]
    if restarts > 0:
        sampler = qmc.LatinHypercube(d=box.dim, seed=np.random.default_rng(seed))
        seeds.extend(sampler.random(restarts))
    if not seeds:
        raise DomainError("minimize_box needs at least one restart or start point")

    seed_vals = [fu(u) for u in seeds]
    if not any(math.isfinite(v) for v in seed_vals):
        raise OptimizationError("objective is non-finite at every seed point",
                                trace=[(box.from_unit(u).tolist(), v) for u, v in zip(seeds, seed_vals)])

    bounds = [(0.0, 1.0)] * box.dim
    options = {"xatol": 1e-10, "fatol": 0.0, "maxfev": tol.max_iter}
    best = None
    trace = []
    used = 0
    for u0, v0 in zip(seeds, seed_vals):
        if not math.isfinite(v0):
            continue
        used += 1
        u, v = u0, v0
        for _ in range(2):
            opts = dict(options, fatol=tol.rel_err * max(abs(v), 1e-300))
            res = sopt.minimize(fu, u, method="Nelder-Mead", bounds=bounds, options=opts)
            if res.fun <= v:
                u, v = np.clip(res.x, 0.0, 1.0), float(res.fun)
        x = box.from_unit(u)
        trace.append((x.tolist(), v))
        key = (v, tuple(x))
        if best is None or key < best[0]:
            best = (key, x, v)

    if best is None or not math.isfinite(best[2]):
        raise OptimizationError("all descents ended at a non-finite value", trace=trace)
    return OptResult(argmin=best[1], value=best[2], evals=evals, restarts_used=used, trace=trace)


def unimodal_min(f, lo, hi, tol=1e-10, max_iter=500):
    """Golden-section search for the minimum of a unimodal ``f`` on ``[lo, hi]``.

    Returns ``(x, fx, at_boundary)``; ``at_boundary`` is true when an endpoint
    beats every interior point visited.
    """
    if not lo < hi:
        raise DomainError(f"need lo < hi, got {lo}, {hi}")
    a, b = float(lo), float(hi)
    c = b - _GOLDEN * (b - a)
    d = a + _GOLDEN * (b - a)
    fc, fd = f(c), f(d)
    for _ in range(max_iter):
        if b - a <= tol:
            break
        if fc <= fd:
            b, d, fd = d, c, fc
            c = b - _GOLDEN * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + _GOLDEN * (b - a)
            fd = f(d)
    x, fx = (c, fc) if fc <= fd else (d, fd)
    f_lo, f_hi = f(lo), f(hi)
    if f_lo < fx:
        return float(lo), f_lo, True
    if f_hi < fx:
        return float(hi), f_hi, True
    return x, fx, False


def monotone_bisect(pred, lo, hi):
    """Largest integer ``x`` in ``[lo, hi]`` with ``pred(x)``, or ``lo - 1``.

    ``pred`` must be true on a (possibly empty) prefix of the range and
    false afterwards.
    """
    lo, hi = int(lo), int(hi)
    if hi < lo or not pred(lo):
        return lo - 1
    if pred(hi):
        return hi
    good, bad = lo, hi
    while bad - good > 1:
        mid = good + (bad - good) // 2
        if pred(mid):
            good = mid
        else:
            bad = mid
    return good
