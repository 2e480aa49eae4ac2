"""Executable model of the analyst/mechanism interaction on growing data.

An analyst is any callable ``analyst(transcript, t, rng)`` returning a
:class:`StatQuery` or ``None`` ("done for this round"). A mechanism is any
callable ``mechanism(q, data, t, rng)`` returning a response. Both receive
their own generator, derived from the run seed.
"""

from dataclasses import dataclass, field
import numpy as np

from .exceptions import DomainError, FilterTerminated, InteractionError
from .privacy import FilterDecision, FilterState, filter_charge
from .schedule import QueryAllocation


@dataclass(frozen=True)
class Domain:
    size: int
    labels: tuple = None

    def __post_init__(self):
        if self.size < 1:
            raise DomainError(f"domain needs at least one element, got {self.size}")
        if self.labels is not None and len(self.labels) != self.size:
            raise DomainError("labels must match the domain size")


@dataclass(frozen=True, eq=False)
class Distribution:
    probs: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.probs, dtype=float)
        if p.ndim != 1 or p.size == 0 or np.any(p < 0) or abs(p.sum() - 1.0) > 1e-12:
            raise DomainError("probs must be a nonnegative vector summing to 1")
        object.__setattr__(self, "probs", p)

    @classmethod
    def uniform(cls, size):
        return cls(np.full(size, 1.0 / size))

    @property
    def domain(self):
        return Domain(self.probs.size)

    def sample(self, rng, n):
        if np.all(self.probs == self.probs[0]):
            return rng.integers(0, self.probs.size, n)
        return rng.choice(self.probs.size, size=n, p=self.probs)


@dataclass(frozen=True, eq=False)
class Dataset:
    points: np.ndarray
    domain_size: int

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=np.int64)
        if pts.ndim != 1 or (pts.size and (pts.min() < 0 or pts.max() >= self.domain_size)):
            raise DomainError("points must be domain indices")
        object.__setattr__(self, "points", pts)

    def __len__(self):
        return self.points.size

    def snapshot(self, t):
        if not 1 <= t <= len(self):
            raise DomainError(f"snapshot index {t} outside 1..{len(self)}")
        return self.points[:t]


@dataclass(frozen=True, eq=False)
class StatQuery:
    """Per-element values of a [0, 1]-valued function over the domain."""

    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values)
        if v.dtype != np.uint8:
            v = v.astype(float)
            if v.ndim != 1 or v.size == 0 or not np.all((v >= 0) & (v <= 1)):
                raise DomainError("query values must lie in [0, 1]")
        elif v.ndim != 1 or v.max(initial=0) > 1:
            raise DomainError("binary query values must be 0 or 1")
        object.__setattr__(self, "values", v)

    @classmethod
    def indicator(cls, size, element):
        v = np.zeros(size, dtype=np.uint8)
        v[element] = 1
        return cls(v)

    @classmethod
    def random_binary(cls, size, rng):
        # one random bit per element; unpacking bytes is much cheaper than integers()
        raw = np.frombuffer(rng.bytes((size + 7) // 8), dtype=np.uint8)
        return cls(np.unpackbits(raw)[:size])


@dataclass
class Transcript:
    """Query/response pairs per round, in submission order."""

    schedule: object
    domain_size: int = None
    rounds: dict = field(default_factory=dict)
    terminated_at: int = None

    def append(self, t, q, r):
        if t < self.schedule.n0 or t > self.schedule.n:
            raise DomainError(f"round {t} outside {self.schedule.n0}..{self.schedule.n}")
        self.rounds.setdefault(t, []).append((q, r))

    def entries(self):
        for t in sorted(self.rounds):
            for q, r in self.rounds[t]:
                yield t, q, r

    def at(self, t):
        return list(self.rounds.get(t, ()))

    @property
    def k(self):
        return sum(len(v) for v in self.rounds.values())

    def counts(self):
        return {t: len(v) for t, v in sorted(self.rounds.items()) if v}

    def as_allocation(self):
        c = self.counts()
        return QueryAllocation(self.schedule, tuple(c), tuple(c.values()), self.k)


def eval_query_snapshot(q, data, t):
    """Mean of ``q`` over the first ``t`` points."""
    return float(q.values[data.snapshot(t)].sum()) / t


def eval_query_dist(q, p):
    if q.values.size != p.probs.size:
        raise DomainError(f"query covers {q.values.size} elements, distribution {p.probs.size}")
    return float(np.dot(q.values, p.probs))


def clamp01(x):
    return min(1.0, max(0.0, x))


def gaussian_respond(q, data, t, sigma_t, rng, clipped=True):
    """Snapshot value plus ``N(0, sigma_t^2)`` noise, optionally clamped to [0, 1]."""
    if not sigma_t > 0:
        raise DomainError(f"sigma_t must be positive, got {sigma_t}")
    r = eval_query_snapshot(q, data, t) + sigma_t * float(rng.standard_normal())
    return clamp01(r) if clipped else r


def _sigma_at(sigma, t):
    return float(sigma(t)) if callable(sigma) else float(sigma)


def gaussian_mechanism(sigma, clipped=True):
    """Mechanism adding Gaussian noise; ``sigma`` is a constant or a function of the round."""
    def mech(q, data, t, rng):
        return gaussian_respond(q, data, t, _sigma_at(sigma, t), rng, clipped)
    return mech


def empirical_mechanism():
    """Noise-free mechanism returning the exact snapshot value."""
    def mech(q, data, t, rng):
        return eval_query_snapshot(q, data, t)
    return mech


class FilteredMechanism:
    """Clipped Gaussian releases gated by a zCDP privacy filter.

    Each query is charged before release; once the filter terminates the
    mechanism raises :class:`FilterTerminated`. ``charges`` keeps the spend
    after every approved release.
    """

    def __init__(self, sigma, target_rho, clipped=True):
        self.sigma = sigma
        self.clipped = clipped
        self.state = FilterState(target_rho)
        self.charges = []

    def __call__(self, q, data, t, rng):
        s = _sigma_at(self.sigma, t)
        if filter_charge(self.state, s, t) is FilterDecision.TERMINATE:
            raise FilterTerminated(t, self.state.spent_rho, self.state.target_rho)
        self.charges.append(self.state.spent_rho)
        return gaussian_respond(q, data, t, s, rng, self.clipped)


def seed_sequence(seed, trial=None):
    """Root seed sequence for a run, or for trial ``trial`` of a batch of runs."""
    if isinstance(seed, np.random.SeedSequence):
        base = seed
    else:
        base = np.random.SeedSequence(int(seed))
    if trial is None:
        return base
    return np.random.SeedSequence(base.entropy, spawn_key=base.spawn_key + (int(trial),))


def run_interaction(analyst, mechanism, p, sched, seed, max_queries_per_round=10**7):
    """Draw ``X ~ p^n`` and run the round loop from ``n0`` to ``n``.

    Returns ``(data, transcript)``. A :class:`FilterTerminated` from the
    mechanism ends the run: the transcript stops before the refused query and
    records the round in ``terminated_at``. Any other failure is re-raised as
    :class:`InteractionError` carrying the round.
    """
    base = seed_sequence(seed)
    # explicit spawn keys: SeedSequence.spawn would mutate a shared parent
    data_ss, mech_ss, analyst_ss = (
        np.random.SeedSequence(base.entropy, spawn_key=base.spawn_key + (i,)) for i in range(3))
    data = Dataset(p.sample(np.random.default_rng(data_ss), sched.n), p.probs.size)
    mech_rng = np.random.default_rng(mech_ss)
    analyst_rng = np.random.default_rng(analyst_ss)
    transcript = Transcript(sched, p.probs.size)

    for t in sched.rounds:
        asked = 0
        while True:
            try:
                q = analyst(transcript, t, analyst_rng)
            except Exception as exc:
                raise InteractionError(f"analyst failed in round {t}: {exc}", t) from exc
            if q is None:
                break
            asked += 1
            if asked > max_queries_per_round:
                raise InteractionError(f"analyst exceeded {max_queries_per_round} queries in round {t}", t)
            try:
                r = mechanism(q, data, t, mech_rng)
            except FilterTerminated:
                transcript.terminated_at = t
                return data, transcript
            except Exception as exc:
                raise InteractionError(f"mechanism failed in round {t}: {exc}", t) from exc
            transcript.append(t, q, r)
    return data, transcript


def fixed_schedule_analyst(alloc, make_query=None):
    """Analyst asking ``k_t`` queries in each round ``t`` of ``alloc``.

    Queries come from ``make_query(domain_size, rng)``; random binary by default.
    """
    make_query = make_query or StatQuery.random_binary
    counts = dict(alloc)

    def analyst(transcript, t, rng):
        if len(transcript.rounds.get(t, ())) < counts.get(t, 0):
            return make_query(transcript.domain_size, rng)
        return None
    return analyst


def attack_analyst(k, final_fraction=0.0):
    """Correlation attack: ``k - 1`` random binary queries, then one overfit query.

    The random queries go out in round ``n0``. The final query, asked at
    ``n0 + final_fraction * (n - n0)``, is 1 on element ``x`` iff
    ``sum_j (r_j - 1/2) (q_j(x) - 1/2) > 0``, i.e. it selects the elements
    whose random labels agree with the direction the answers leaned.
    """
    if k < 2:
        raise DomainError(f"the attack needs k >= 2, got {k}")
    if not 0.0 <= final_fraction <= 1.0:
        raise DomainError(f"final_fraction must lie in [0, 1], got {final_fraction}")

    def analyst(transcript, t, rng):
        sched = transcript.schedule
        asked = transcript.k
        if asked < k - 1:
            return StatQuery.random_binary(transcript.domain_size, rng) if t == sched.n0 else None
        t_final = sched.n0 + int(round(final_fraction * (sched.n - sched.n0)))
        if asked == k - 1 and t == t_final:
            return final_attack_query(transcript)
        return None
    return analyst


def final_attack_query(transcript):
    score = np.zeros(transcript.domain_size)
    total = 0.0
    for _, q, r in transcript.entries():
        w = r - 0.5
        score += w * q.values
        total += w
    return StatQuery((score - 0.5 * total > 0).astype(np.uint8))


@dataclass(frozen=True)
class RoundErrors:
    t: int
    snapshot: float
    distributional: float


def empirical_errors(data, transcript, p):
    """Per-round maximum snapshot and distributional errors, rounds with queries only."""
    out = []
    for t in sorted(transcript.rounds):
        pairs = transcript.rounds[t]
        if not pairs:
            continue
        snap = max(abs(r - eval_query_snapshot(q, data, t)) for q, r in pairs)
        dist = max(abs(r - eval_query_dist(q, p)) for q, r in pairs)
        out.append(RoundErrors(t, snap, dist))
    return out


def final_distributional_error(data, transcript, p):
    """``|R - q(P)|`` for the last query of the transcript."""
    last = None
    for entry in transcript.entries():
        last = entry
    if last is None:
        raise DomainError("empty transcript")
    _, q, r = last
    return abs(r - eval_query_dist(q, p))


def paired_attack_trial(k, sigma, p, sched, seed, trial, final_fraction=0.0):
    """Final distributional error of the attack against exact and noisy answers.

    Both arms share the data and the random queries (same seed streams);
    only the mechanism differs.
    """
    analyst = attack_analyst(k, final_fraction)
    ss = seed_sequence(seed, trial)
    errs = []
    for mech in (empirical_mechanism(), gaussian_mechanism(sigma, clipped=True)):
        data, tr = run_interaction(analyst, mech, p, sched, ss)
        errs.append(final_distributional_error(data, tr, p))
    return tuple(errs)

