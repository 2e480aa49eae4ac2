"""Generalization bounds for adaptive statistical queries on growing data.

Covers the Gaussian-mechanism bound with non-uniform and uniform privacy
accounting, the privacy-filter variant, two static baselines composed over
query batches (the original Jung et al. bound and a tightened version of
it), data splitting, and the transfer-theorem evaluators for statistical,
low-sensitivity and minimization queries.
"""

from dataclasses import dataclass, field
import enum
import functools
import math

import numpy as np

from .exceptions import DomainError
from .optimize import Box, minimize_box, monotone_bisect
from .privacy import gamma_star
from .schedule import GrowthSchedule, batch_allocation
from .specfun import Tolerance, erfc_inv, safe_exp

SIGMA_RANGE = (1e-6, 10.0)
BETA_RANGE = (1e-12, 1.0 - 1e-12)
EPS_RANGE = (0.0, 5.0)
THETA_BOX = Box(
    lo=(SIGMA_RANGE[0], BETA_RANGE[0], EPS_RANGE[0]),
    hi=(SIGMA_RANGE[1], BETA_RANGE[1], EPS_RANGE[1]),
    log_scaled=(True, True, False),
)
# the static baseline minimizes over (sigma, delta) instead
JUNG_BOX = Box(lo=(SIGMA_RANGE[0], 1e-16), hi=(SIGMA_RANGE[1], 1.0), log_scaled=(True, True))

OPT_TOL = Tolerance(1e-12, 4000)
DEFAULT_RESTARTS = 32


class Method(str, enum.Enum):
    OURS_N = "OursN"
    OURS_U = "OursU"
    JLNRSS = "JLNRSS"
    JLNRSS_PLUS = "JLNRSSPlus"
    SPLIT = "Split"
    LOWSENS = "LowSens"
    MINQUERY = "MinQuery"
    ADAPTIVE = "Adaptive"

    @classmethod
    def parse(cls, name):
        if isinstance(name, cls):
            return name
        key = str(name).replace("-", "").replace("+", "Plus").replace("_", "").lower()
        for m in cls:
            if m.value.lower() == key:
                return m
        raise DomainError(f"unknown method {name!r}")


@dataclass(frozen=True)
class AccuracySpec:
    alpha_target: float
    beta_prime: float

    def __post_init__(self):
        if not 0 < self.alpha_target <= 1:
            raise DomainError(f"alpha_target must lie in (0, 1], got {self.alpha_target}")
        _check_prob(self.beta_prime, "beta_prime")


@dataclass(frozen=True)
class SensitivityCurve:
    """Per-round sensitivity caps ``delta_cap[t - n0]`` for ``t = n0..n``."""

    n0: int
    delta_cap: np.ndarray

    def __post_init__(self):
        cap = np.asarray(self.delta_cap, dtype=float)
        if cap.ndim != 1 or cap.size == 0 or not np.all(cap > 0):
            raise DomainError("sensitivity caps must be a non-empty positive vector")
        object.__setattr__(self, "delta_cap", cap)

    @classmethod
    def statistical(cls, sched):
        t = np.arange(sched.n0, sched.n + 1, dtype=float)
        return cls(sched.n0, 1.0 / t)

    @property
    def t(self):
        return np.arange(self.n0, self.n0 + self.delta_cap.size, dtype=float)

    def scaled(self, factor):
        return SensitivityCurve(self.n0, self.delta_cap * factor)


@dataclass
class BoundResult:
    alpha_prime: object
    beta_prime: float
    method: Method
    opt_params: dict = field(default_factory=dict)
    diagnostics: dict = field(default_factory=dict)

    @property
    def vacuous(self):
        return bool(np.any(np.asarray(self.alpha_prime) > 1.0))


def _check_prob(p, name):
    if not 0 < p < 1:
        raise DomainError(f"{name} must lie in (0, 1), got {p}")


def _check_theta(sigma, beta, epsilon):
    if not (sigma > 0 and 0 < beta < 1 and epsilon >= 0):
        raise DomainError(f"parameters outside Theta: sigma={sigma}, beta={beta}, eps={epsilon}")


def snapshot_term(sigma, beta, k):
    """``sqrt(2) sigma erfc^-1(beta / k)``; zero when no queries are asked."""
    if k == 0:
        return 0.0
    return math.sqrt(2.0) * sigma * erfc_inv(beta / k)


def snapshot_alpha_exact(sigma, beta, k):
    """Per-round snapshot accuracy from the exact max-of-|Gaussians| quantile."""
    # 2 - 2(1 - beta/2)^(1/k), written to keep precision for small beta / k
    p = -2.0 * math.expm1(math.log1p(-beta / 2.0) / k)
    return math.sqrt(2.0) * sigma * erfc_inv(p)


def _log_psi_vec(gamma, rho, epsilon):
    gm1 = gamma - 1.0
    return gm1 * (gamma * rho - epsilon) + gamma * (math.log(gm1) - math.log(gamma)) - math.log(gm1)


def _delta_terms(sum_delta, beta, beta_prime, n0):
    return (2.0 * sum_delta / (n0 * beta_prime)
            + 2.0 / beta_prime * math.sqrt(2.0 * beta * sum_delta / n0))


class _AllocPrivacy:
    """Precomputed zCDP structure of an allocation at unit noise.

    With a common ``sigma``, run ``j`` of the rho curve is ``W[j] / (2 sigma^2)``
    where ``W`` are suffix sums of ``k_tau / tau^2``.
    """

    def __init__(self, alloc):
        rounds = np.array([t for t, c in alloc if c > 0], dtype=float)
        counts = np.array([c for t, c in alloc if c > 0], dtype=float)
        self.n = alloc.n
        self.n0 = alloc.n0
        self.k = int(counts.sum())
        if rounds.size == 0:
            self.w = np.zeros(1)
            self.lengths = np.array([float(self.n)])
            return
        w = np.cumsum((counts / rounds**2)[::-1])[::-1]
        lengths = np.diff(rounds, prepend=0.0)
        if rounds[-1] < self.n:
            w = np.append(w, 0.0)
            lengths = np.append(lengths, self.n - rounds[-1])
        self.w = w
        self.lengths = lengths

    def sum_delta(self, sigma, epsilon, uniform):
        rho = self.w / (2.0 * sigma * sigma)
        rho_max = float(rho[0])
        if rho_max == 0.0:
            return 0.0, False
        g = gamma_star(rho_max, epsilon).gamma
        if uniform:
            d = safe_exp(_log_psi_vec(g, rho_max, epsilon))
            return self.n * min(d, 1.0), d > 1.0
        with np.errstate(over="ignore"):
            d = np.exp(_log_psi_vec(g, rho, epsilon))
        vac = bool(np.any(d > 1.0))
        return float(np.dot(self.lengths, np.minimum(d, 1.0))), vac


def lambda_objective(params, sched, alloc, beta_prime, k=None, mode="nonuniform", _cache=None):
    """The growing-data accuracy objective at ``params = (sigma, beta, epsilon)``."""
    sigma, beta, epsilon = (float(v) for v in params)
    _check_theta(sigma, beta, epsilon)
    _check_prob(beta_prime, "beta_prime")
    if mode not in ("uniform", "nonuniform"):
        raise DomainError(f"mode must be 'uniform' or 'nonuniform', got {mode!r}")
    if alloc.schedule != sched:
        raise DomainError("allocation was built for a different schedule")
    ap = _cache if _cache is not None else _AllocPrivacy(alloc)
    k = ap.k if k is None else k
    if k != ap.k:
        raise DomainError(f"k={k} does not match the allocation total {ap.k}")
    sd, _ = ap.sum_delta(sigma, epsilon, mode == "uniform")
    return (snapshot_term(sigma, beta, k) + math.expm1(epsilon) + beta / beta_prime
            + _delta_terms(sd, beta, beta_prime, sched.n0))


def _theta_objective(fn):
    def f(x):
        try:
            return fn(x)
        except (DomainError, OverflowError, ValueError):
            return math.inf
    return f


def _minimize_theta(fn, restarts, seed, starts, box=THETA_BOX):
    return minimize_box(_theta_objective(fn), box, restarts=restarts, tol=OPT_TOL,
                        seed=seed, starts=starts)


def ours_bound(sched, alloc, k, beta_prime, mode="nonuniform", restarts=DEFAULT_RESTARTS,
               seed=0, starts=()):
    """Optimized growing-data bound (non-uniform or uniform accounting)."""
    ap = _AllocPrivacy(alloc)
    if k != ap.k:
        raise DomainError(f"k={k} does not match the allocation total {ap.k}")
    _check_prob(beta_prime, "beta_prime")
    uniform = mode == "uniform"

    def fn(x):
        return lambda_objective(x, sched, alloc, beta_prime, k, mode, _cache=ap)

    res = _minimize_theta(fn, restarts, seed, starts)
    sigma, beta, eps = (float(v) for v in res.argmin)
    sd, vac = ap.sum_delta(sigma, eps, uniform)
    method = Method.OURS_U if uniform else Method.OURS_N
    return BoundResult(
        alpha_prime=res.value, beta_prime=beta_prime, method=method,
        opt_params={"sigma": sigma, "beta": beta, "epsilon": eps, "sum_delta": sd},
        diagnostics={"evals": res.evals, "restarts": res.restarts_used, "delta_clamped": vac},
    )


def _jung_objective(sigma, delta, n, k, beta):
    if not (sigma > 0 and 0 < delta <= 1):
        return math.inf
    a = k / (2.0 * n * n * sigma * sigma)
    log_arg = math.log(math.sqrt(math.pi * k) / (math.sqrt(2.0) * n * sigma * delta))
    # a negative log means rho-zCDP already gives (rho, delta)-DP; drop the root
    expo = a + math.sqrt(4.0 * a * max(log_arg, 0.0))
    return snapshot_term(sigma, delta, k) + math.expm1(expo) if expo < 700 else math.inf


@functools.lru_cache(maxsize=4096)
def _jung_static(n, k, beta, restarts, seed):
    res = minimize_box(
        lambda x: _jung_objective(x[0], x[1], n, k, beta) + 6.0 * x[1] / beta,
        JUNG_BOX, restarts=restarts, tol=OPT_TOL, seed=seed,
    )
    return res.value, tuple(float(v) for v in res.argmin)


def jung_static_alpha(n, k, beta, restarts=DEFAULT_RESTARTS, seed=0):
    """Static-data bound of Jung et al., minimized over noise and ``delta``."""
    if n < 1 or k < 1:
        raise DomainError(f"need n >= 1 and k >= 1, got n={n}, k={k}")
    _check_prob(beta, "beta")
    return _jung_static(int(n), int(k), float(beta), restarts, seed)[0]


def jung_plus_objective(params, n, k, beta_prime):
    sigma, beta, epsilon = (float(v) for v in params)
    _check_theta(sigma, beta, epsilon)
    rho = k / (2.0 * sigma * sigma * n * n)
    g = gamma_star(rho, epsilon)
    delta = 0.0 if rho == 0 else min(1.0, safe_exp(g.log_psi))
    return (snapshot_term(sigma, beta, k) + math.expm1(epsilon) + 2.0 * delta / beta_prime
            + beta / beta_prime + 2.0 / beta_prime * math.sqrt(2.0 * beta * delta))


@functools.lru_cache(maxsize=4096)
def _jung_plus_static(n, k, beta_prime, restarts, seed):
    res = _minimize_theta(lambda x: jung_plus_objective(x, n, k, beta_prime), restarts, seed, ())
    return res.value, tuple(float(v) for v in res.argmin)


def jung_plus_static_alpha(n, k, beta_prime, restarts=DEFAULT_RESTARTS, seed=0):
    """Tightened static bound: free ``(sigma, beta, epsilon)`` and the sharper conversion."""
    if n < 1 or k < 1:
        raise DomainError(f"need n >= 1 and k >= 1, got n={n}, k={k}")
    _check_prob(beta_prime, "beta_prime")
    return _jung_plus_static(int(n), int(k), float(beta_prime), restarts, seed)[0]


def batched_static_bound(batch_sizes, batch_k, beta_prime, variant=Method.JLNRSS,
                         restarts=DEFAULT_RESTARTS, seed=0):
    """Worst batch of a static bound applied per batch at confidence ``beta_prime / b``."""
    if len(batch_sizes) != len(batch_k):
        raise DomainError("batch_sizes and batch_k differ in length")
    if len(batch_sizes) == 0:
        raise DomainError("need at least one batch")
    variant = Method.parse(variant)
    static = {Method.JLNRSS: jung_static_alpha, Method.JLNRSS_PLUS: jung_plus_static_alpha}.get(variant)
    if static is None:
        raise DomainError(f"variant must be JLNRSS or JLNRSSPlus, got {variant}")
    per = beta_prime / len(batch_sizes)
    return max(static(n_l, k_l, per, restarts=restarts, seed=seed)
               for n_l, k_l in sorted(set(zip(batch_sizes, batch_k))))


def batch_data_sizes(alloc):
    """Fresh points available to each batch: ``n0`` for the first, arrivals since the last after."""
    rounds = [t for t, c in alloc if c > 0]
    sizes = [rounds[0]] + [b - a for a, b in zip(rounds, rounds[1:])]
    return sizes, [c for t, c in alloc if c > 0]


def split_alpha_to_n(k, alpha, beta):
    """Data needed to answer ``k`` queries on disjoint equal splits."""
    if not alpha > 0 or not 0 < beta <= 1 or k < 1:
        raise DomainError(f"need k >= 1, alpha > 0, 0 < beta <= 1; got {k}, {alpha}, {beta}")
    return math.ceil(k / (2.0 * alpha * alpha) * math.log(2.0 * k / beta))


def split_alpha(n, k, beta):
    """Smallest ``alpha`` for which ``k`` equal splits fit in ``n`` points (ignoring the ceiling)."""
    if n < 1 or k < 1:
        raise DomainError(f"need n >= 1 and k >= 1, got n={n}, k={k}")
    _check_prob(beta, "beta")
    return math.sqrt(k * math.log(2.0 * k / beta) / (2.0 * n))


def split_max_k(n, alpha, beta):
    """Largest ``k`` whose split requirement fits in ``n`` points (0 if none)."""
    if split_alpha_to_n(1, alpha, beta) > n:
        return 0
    hi = 2
    while split_alpha_to_n(hi, alpha, beta) <= n:
        hi *= 2
    return monotone_bisect(lambda k: split_alpha_to_n(k, alpha, beta) <= n, 1, hi)


def ps_transfer(alpha_t, beta, eps_ps, delta_ps, c):
    """Posterior stability plus sample accuracy to distributional accuracy."""
    if not c > 0:
        raise DomainError(f"c must be positive, got {c}")
    alpha = np.asarray(alpha_t, dtype=float) + c + eps_ps
    return (alpha if alpha.ndim else float(alpha)), beta / c + delta_ps


def stat_ps_from_dp(epsilon, delta_curve, n0, c):
    """Posterior stability of a DP interaction over statistical queries."""
    if not c > 0:
        raise DomainError(f"c must be positive, got {c}")
    return math.expm1(epsilon) + 2.0 * c * delta_curve.sum_delta / n0, 1.0 / c


def lowsens_ps_from_dp(epsilon, delta_curve, sens, c):
    """Posterior stability of a DP interaction over low-sensitivity queries."""
    if not c > 0:
        raise DomainError(f"c must be positive, got {c}")
    t_delta = sens.t * sens.delta_cap
    eps_ps = (math.exp(epsilon) * t_delta.max() - t_delta.min()
              + 4.0 * c * delta_curve.sum_delta * sens.delta_cap.max())
    return float(eps_ps), 1.0 / c


def stat_transfer(alpha_t, beta, epsilon, delta_curve, n0, c, d):
    eps_ps, delta_ps = stat_ps_from_dp(epsilon, delta_curve, n0, c)
    a, b = ps_transfer(alpha_t, beta, eps_ps, delta_ps, d)
    return BoundResult(a, b, Method.OURS_N, {"epsilon": epsilon, "c": c, "d": d})


def lowsens_transfer(alpha_t, beta, epsilon, delta_curve, sens, c, d):
    eps_ps, delta_ps = lowsens_ps_from_dp(epsilon, delta_curve, sens, c)
    a, b = ps_transfer(alpha_t, beta, eps_ps, delta_ps, d)
    return BoundResult(a, b, Method.LOWSENS, {"epsilon": epsilon, "c": c, "d": d, "eps_ps": eps_ps})


def minq_transfer(alpha_t, beta, epsilon, delta_curve, sens, c, d):
    """Minimization queries: the low-sensitivity transfer on the doubled sensitivity."""
    res = lowsens_transfer(alpha_t, beta, epsilon, delta_curve, sens.scaled(2.0), c, d)
    res.method = Method.MINQUERY
    return res


def _filter_weight(sched, k, alloc):
    # sum over queries of 1 / tau^2; without an allocation assume every
    # query lands at n0, the most expensive round
    if alloc is None:
        return k / float(sched.n0) ** 2
    return float(sum(c / float(t) ** 2 for t, c in alloc))


def adaptive_filter_bound(sched, k, rho_target, beta_prime, alloc=None,
                          restarts=DEFAULT_RESTARTS, seed=0, starts=()):
    """Bound for a filter-tracked interaction that answered ``k`` queries.

    With ``rho_target=None`` the filter budget is tied to the noise through
    the spend of the ``k`` queries (given by ``alloc``, or all at ``n0``).
    A fixed ``rho_target`` pins the noise at the smallest ``sigma`` whose
    spend fits the budget, and only ``beta`` and ``epsilon`` are optimized.
    """
    _check_prob(beta_prime, "beta_prime")
    w = _filter_weight(sched, k, alloc)
    n, n0 = sched.n, sched.n0

    def value(sigma, beta, eps, rho):
        if rho == 0:
            delta = 0.0
        else:
            delta = min(1.0, safe_exp(gamma_star(rho, eps).log_psi))
        return (snapshot_term(sigma, beta, k) + math.expm1(eps) + beta / beta_prime
                + _delta_terms(n * delta, beta, beta_prime, n0)), delta

    if rho_target is None:
        def fn(x):
            _check_theta(*x)
            return value(x[0], x[1], x[2], w / (2.0 * x[0] ** 2))[0]
        res = _minimize_theta(fn, restarts, seed, starts)
        sigma, beta, eps = (float(v) for v in res.argmin)
        rho = w / (2.0 * sigma ** 2)
    else:
        if not rho_target >= 0:
            raise DomainError(f"rho_target must be nonnegative, got {rho_target}")
        if w > 0 and rho_target == 0:
            raise DomainError("a zero budget cannot answer any query")
        sigma = math.sqrt(w / (2.0 * rho_target)) if w > 0 else SIGMA_RANGE[0]
        rho = float(rho_target)
        box = Box(THETA_BOX.lo[1:], THETA_BOX.hi[1:], THETA_BOX.log_scaled[1:])

        def fn(x):
            _check_theta(sigma, x[0], x[1])
            return value(sigma, x[0], x[1], rho)[0]
        res = _minimize_theta(fn, restarts, seed, [s[1:] for s in starts], box=box)
        beta, eps = (float(v) for v in res.argmin)
    _, delta = value(sigma, beta, eps, rho)
    return BoundResult(
        alpha_prime=res.value, beta_prime=beta_prime, method=Method.ADAPTIVE,
        opt_params={"sigma": sigma, "beta": beta, "epsilon": eps, "rho": rho, "delta": delta},
        diagnostics={"evals": res.evals, "restarts": res.restarts_used},
    )


def method_alpha(method, sched, b, k, beta_prime, restarts=DEFAULT_RESTARTS, seed=0, starts=()):
    """``alpha'`` of one method for ``k`` queries in ``b`` batches."""
    method = Method.parse(method)
    if method is Method.SPLIT:
        raise DomainError("Split has no alpha' at fixed n; use split_alpha_to_n")
    alloc = batch_allocation(k, b, sched)
    if method in (Method.OURS_N, Method.OURS_U):
        mode = "uniform" if method is Method.OURS_U else "nonuniform"
        return ours_bound(sched, alloc, k, beta_prime, mode, restarts, seed, starts)
    if method in (Method.JLNRSS, Method.JLNRSS_PLUS):
        sizes, ks = batch_data_sizes(alloc)
        a = batched_static_bound(sizes, ks, beta_prime, method, restarts, seed)
        return BoundResult(a, beta_prime, method, diagnostics={"batch_sizes": sizes, "batch_k": ks})
    if method is Method.ADAPTIVE:
        return adaptive_filter_bound(sched, k, None, beta_prime, alloc, restarts, seed, starts)
    raise DomainError(f"method {method} has no batched alpha'")


@dataclass
class MaxQueriesResult:
    k_max: int
    result: BoundResult = None
    evaluations: int = 0


def max_queries(method, sched, b, spec, restarts=8, seed=0, k_hi=None):
    """Largest ``k`` whose ``alpha'`` meets ``spec.alpha_target`` (0 if none).

    A candidate ``k`` is accepted as soon as any parameter point reaches the
    target (every point of the parameter space is a valid guarantee), so the
    optimizer only runs to completion on rejected candidates. The previous
    arg-min seeds each new search.
    """
    method = Method.parse(method)
    if method not in (Method.OURS_N, Method.OURS_U, Method.JLNRSS, Method.JLNRSS_PLUS, Method.SPLIT):
        raise DomainError(f"max_queries does not support {method.value}")
    if method is Method.SPLIT:
        return MaxQueriesResult(split_max_k(sched.n, spec.alpha_target, spec.beta_prime))
    lo = max(1, b)
    best = {}
    warm = []
    count = [0]

    @functools.lru_cache(maxsize=None)
    def pred(k):
        count[0] += 1
        if method in (Method.OURS_N, Method.OURS_U):
            mode = "uniform" if method is Method.OURS_U else "nonuniform"
            alloc = batch_allocation(k, b, sched)
            ap = _AllocPrivacy(alloc)
            fn = _theta_objective(
                lambda x: lambda_objective(x, sched, alloc, spec.beta_prime, k, mode, _cache=ap))
            for s in warm:
                v = fn(np.asarray(s))
                if v <= spec.alpha_target:
                    best[k] = BoundResult(v, spec.beta_prime, method, _params(s))
                    return True
            res = method_alpha(method, sched, b, k, spec.beta_prime, restarts, seed, tuple(warm))
            warm[:] = [tuple(res.opt_params[p] for p in ("sigma", "beta", "epsilon"))]
        else:
            res = method_alpha(method, sched, b, k, spec.beta_prime, restarts, seed)
        ok = res.alpha_prime <= spec.alpha_target
        if ok:
            best[k] = res
        return ok

    if not pred(lo):
        return MaxQueriesResult(0, None, count[0])
    # exponential search for a failing k, then bisect
    good, hi = lo, 2 * lo
    while (k_hi is None or hi <= k_hi) and pred(hi):
        good, hi = hi, 2 * hi
    if k_hi is not None and hi > k_hi:
        hi = k_hi + 1
    k_max = monotone_bisect(pred, good, hi - 1)
    res = best.get(k_max)
    if res is not None and not res.diagnostics:
        # accepted on a warm-start witness; report the optimized bound instead
        res = method_alpha(method, sched, b, k_max, spec.beta_prime, restarts, seed, tuple(warm))
    return MaxQueriesResult(k_max, res, count[0])


def _params(s):
    return {"sigma": float(s[0]), "beta": float(s[1]), "epsilon": float(s[2])}
