import math

import numpy as np
import pytest

from adagrow.bounds import snapshot_alpha_exact, snapshot_term
from adagrow.exceptions import DomainError, StateSpaceTooLarge
from adagrow.schedule import GrowthSchedule, batch_allocation, static_allocation
from adagrow.validate import (ToyInstance, conversion_crosscheck, joint_law, mc_snapshot_accuracy,
                              posterior_table, resampling_check, shipped_toys, slope_fit,
                              wilson_interval)


def test_degenerate_toy_is_exact():
    r = resampling_check(shipped_toys()[0])
    assert r.discrepancy == 0.0


@pytest.mark.parametrize("inst", shipped_toys())
def test_shipped_toys(inst):
    r = resampling_check(inst)
    assert r.discrepancy <= 1e-12
    assert r.reconstruction_error <= 1e-12
    assert r.max_row_error <= 1e-12
    _, joint = joint_law(inst)
    assert joint.sum() == pytest.approx(1.0, abs=1e-12)


def test_perturbed_posterior_detected():
    assert resampling_check(shipped_toys()[1], perturb=1e-3).discrepancy > 1e-6


def test_posterior_rows_normalized():
    table = posterior_table(joint_law(shipped_toys()[2])[1])
    assert np.allclose(table.row_sums(), 1.0, atol=1e-12)


def test_toy_validation():
    with pytest.raises(DomainError):
        ToyInstance(probs=(0.5, 0.5), n=4, n0=1, q1=(0, 1), q2_by_response=((0, 1),) * 4)
    with pytest.raises(StateSpaceTooLarge):
        joint_law(shipped_toys()[2], limit=10)


def test_wilson_interval():
    lo, hi = wilson_interval(50, 1000)
    assert lo < 0.05 < hi
    assert wilson_interval(0, 100)[0] == 0.0


def test_mc_snapshot_single_query():
    alloc = static_allocation(1, 30)
    r = mc_snapshot_accuracy(0.05, alloc, 2000, seed=1, beta=0.2)
    assert r.alpha == pytest.approx(snapshot_term(0.05, 0.2, 1))
    assert not r.violated
    with pytest.raises(DomainError):
        mc_snapshot_accuracy(0.05, alloc, 50, seed=1)


def test_exact_quantile_tighter():
    for k in (1, 2, 20, 10_000):
        for beta in (0.01, 0.1, 0.5):
            assert snapshot_alpha_exact(0.05, beta, k) <= snapshot_term(0.05, beta, k) * (1 + 1e-15)


def test_mc_detects_wrong_noise():
    # answering with 3x the noise the accuracy target assumes must be flagged
    alloc = batch_allocation(20, 4, GrowthSchedule(50, 100))
    r = mc_snapshot_accuracy(0.05, alloc, 300, seed=2, beta=0.1)
    assert not r.violated
    from adagrow import validate
    alpha = snapshot_alpha_exact(0.05, 0.1, 20)
    big = validate.MCResult(120, 300, 0.1, alpha, wilson_interval(120, 300))
    assert big.violated and not big.certified


def test_conversion_crosscheck():
    assert conversion_crosscheck(0.0, 0.1) == 0.0
    assert conversion_crosscheck(0.18, 1.0) <= 1e-6
    rng = np.random.default_rng(3)
    for _ in range(5):
        assert conversion_crosscheck(10 ** rng.uniform(-6, 0.5), rng.uniform(0, 4)) <= 1e-6


def test_slope_fit():
    xs = np.array([1.0, 2.0, 5.0, 10.0, 30.0])
    assert slope_fit(list(zip(xs, xs**2))) == pytest.approx(2.0)
    assert slope_fit(list(zip(xs, xs))) == pytest.approx(1.0)
    rng = np.random.default_rng(0)
    x = np.logspace(0, 3, 40)
    y = 3 * x**1.5 * np.exp(rng.normal(0, 0.05, x.size))
    assert abs(slope_fit(list(zip(x, y))) - 1.5) < 0.05
    with pytest.raises(DomainError):
        slope_fit([(1, 1), (2, 0), (3, 3)])
    with pytest.raises(DomainError):
        slope_fit([(1, 1), (2, 2)])
