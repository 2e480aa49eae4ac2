import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from adagrow.exceptions import DomainError
from adagrow.specfun import Tolerance, erfc, erfc_inv, log_add, log_erfc, logsumexp, safe_exp

mpmath.mp.dps = 50


def mp_erfc(x):
    return float(mpmath.erfc(mpmath.mpf(x)))


def test_erfc_known_values():
    assert erfc(0.0) == 1.0
    # reference from a 50-digit evaluation
    assert erfc(1.0) == pytest.approx(float(mpmath.erfc(1)), rel=1e-15)
    assert erfc(1.0) == pytest.approx(0.157299207050285, rel=1e-14)


@pytest.mark.parametrize("x", [0.1, 0.7, 2.5, 5.0])
def test_erfc_reflection(x):
    assert erfc(-x) == pytest.approx(2.0 - erfc(x), rel=1e-15)


def test_erfc_deep_tail_representable():
    # erfc(26) ~ 5.7e-296
    assert erfc(26.0) == pytest.approx(mp_erfc(26.0), rel=1e-12)
    assert log_erfc(40.0) == pytest.approx(float(mpmath.log(mpmath.erfc(40))), rel=1e-13)


@pytest.mark.parametrize("bad", [math.inf, -math.inf, math.nan])
def test_erfc_rejects_non_finite(bad):
    with pytest.raises(DomainError):
        erfc(bad)


def test_erfc_inv_values():
    assert erfc_inv(1.0) == 0.0
    # root of erfc(x) = 0.5 by bisection in 50-digit arithmetic
    ref = float(mpmath.findroot(lambda x: mpmath.erfc(x) - mpmath.mpf("0.5"), (0.4, 0.6), solver="bisect"))
    assert erfc_inv(0.5) == pytest.approx(ref, rel=1e-14)
    assert erfc_inv(0.5) == pytest.approx(0.47693628, abs=1e-8)
    assert erfc_inv(1.5) == pytest.approx(-erfc_inv(0.5), abs=1e-15)


@pytest.mark.parametrize("bad", [0.0, 2.0, -0.1, 2.5, math.nan])
def test_erfc_inv_domain(bad):
    with pytest.raises(DomainError):
        erfc_inv(bad)


def test_round_trip_log_grid_against_mpmath():
    ps = np.logspace(-280, math.log10(1.999), 600)
    worst = 0.0
    for p in ps:
        x = erfc_inv(p)
        worst = max(worst, abs(float(mpmath.erfc(mpmath.mpf(x))) - p) / p)
    assert worst <= 1e-10


def test_strictly_decreasing():
    ps = np.logspace(-250, math.log10(1.99), 500)
    xs = [erfc_inv(p) for p in ps]
    assert all(a > b for a, b in zip(xs, xs[1:]))


@settings(max_examples=200, deadline=None)
@given(st.floats(min_value=1e-12, max_value=1.0, exclude_max=True))
def test_reflection_property(p):
    # 2 - p loses the low bits of p, so compare against the exactly representable complement
    q = 2.0 - p
    assert erfc_inv(q) == pytest.approx(-erfc_inv(2.0 - q), rel=1e-12, abs=1e-15)


def test_asymptotic_branch_boundary_is_smooth():
    lo, hi = erfc_inv(1e-10 * (1 + 1e-9)), erfc_inv(1e-10 * (1 - 1e-9))
    assert 0 < hi - lo < 1e-8


def test_tolerance_validation():
    with pytest.raises(DomainError):
        Tolerance(rel_err=0.0)
    with pytest.raises(DomainError):
        Tolerance(max_iter=0)


def test_log_helpers():
    assert log_add(math.log(2), math.log(3)) == pytest.approx(math.log(5))
    assert logsumexp([]) == -math.inf
    assert logsumexp([1000.0, 1000.0]) == pytest.approx(1000.0 + math.log(2))
    assert safe_exp(800.0) == math.inf
    assert safe_exp(0.0) == 1.0
