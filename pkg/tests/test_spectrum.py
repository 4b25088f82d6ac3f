import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from rfrisk import (DivergentSumError, InvalidArgumentError, NumericalError, PowerlawTail,
                    PowerlawTask, TaskEigenstructure, make_powerlaw_structure, total_power)
from rfrisk.spectrum import MIN_EXPLICIT, total_power_with_remainder


def test_powerlaw_first_four_modes():
    ts = make_powerlaw_structure(PowerlawTask(1.5, 1.5), 4, tail=False)
    expect = np.arange(1, 5) ** -1.5
    np.testing.assert_allclose(ts.eigenvalues, expect, rtol=0, atol=0)
    np.testing.assert_array_equal(ts.coeffs_sq, ts.eigenvalues)


def test_single_mode():
    ts = make_powerlaw_structure(PowerlawTask(2.0, 1.5), 1, tail=False)
    assert ts.eigenvalues.tolist() == [1.0] and ts.coeffs_sq.tolist() == [1.0]


def test_large_structure_for_exponent_benchmark():
    ts = make_powerlaw_structure(PowerlawTask(1.1, 1.3), 3 * 10**6, tail=False)
    assert ts.modes == 3 * 10**6
    assert ts.eigenvalues[-1] == pytest.approx((3e6) ** -1.1)


def test_modes_below_i0_rejected():
    task = PowerlawTask(2.0, 1.5, i0=3, head_overrides=[(1.0, 1.0), (0.5, 0.5)])
    with pytest.raises(InvalidArgumentError):
        make_powerlaw_structure(task, 2)


@pytest.mark.parametrize("a,b", [(1.0, 1.5), (0.5, 1.2), (2.0, 1.0), (2.0, 5.0), (math.nan, 2)])
def test_exponent_range(a, b):
    with pytest.raises(InvalidArgumentError):
        PowerlawTask(a, b)


def test_head_overrides_applied():
    task = PowerlawTask(2.0, 1.5, i0=2, head_overrides=[(3.0, 0.7)])
    ts = make_powerlaw_structure(task, 3, tail=False)
    assert ts.eigenvalues[0] == 3.0 and ts.coeffs_sq[0] == 0.7
    assert ts.eigenvalues[1] == 0.25


def test_total_power_examples(golden):
    assert total_power(TaskEigenstructure([1.0, 0.5], [1.0, 0.25], 0.5)) == 1.75
    assert total_power(TaskEigenstructure([], [])) == 0.0
    tail = TaskEigenstructure([1.0], [1.0], 0.0, PowerlawTail(2.0, 1.5, 2))
    assert total_power(tail) == pytest.approx(golden["total_power_beta15_tail_from2"], rel=1e-12)


def test_tail_with_beta_le_one_diverges():
    ts = TaskEigenstructure([1.0], [1.0], 0.0, PowerlawTail(2.0, 1.0, 2))
    with pytest.raises(DivergentSumError):
        total_power(ts)


def test_tail_remainder_bound(golden):
    # tail from 1001 against the Hurwitz zeta value
    ts = make_powerlaw_structure(PowerlawTask(2.0, 1.5), MIN_EXPLICIT)
    explicit = float(np.sum(np.arange(1, MIN_EXPLICIT + 1, dtype=float) ** -1.5))
    total, rem = total_power_with_remainder(ts)
    # remainder bound plus a few ulps of the (cancelling) subtraction
    assert abs(total - explicit - golden["hurwitz_zeta_1p5_1001"]) <= rem + 4 * np.finfo(float).eps * total


def test_tail_matches_long_truncation():
    # a 2e6-mode truncation plus its own tail should agree with a short one
    task = PowerlawTask(1.7, 1.9)
    short = make_powerlaw_structure(task, 10)
    long = make_powerlaw_structure(task, 2 * 10**6)
    for g in (1e-2, 1e-5, 1e-8):
        a, b = short.bank.sums(g), long.bank.sums(g)
        for x, y in zip(a, b):
            assert x == pytest.approx(y, rel=1e-9)


def test_brute_force_first_sum(golden):
    # 1e7 explicit modes + integral tail to 1e8, alpha=2, gamma=1e-4
    ts = make_powerlaw_structure(PowerlawTask(2.0, 1.5), 10)
    # brute value truncates at 1e8 modes; the missing piece is ~1/(gamma 1e8)
    assert ts.bank.z(1e-4) == pytest.approx(golden["brute_first_sum_a2_k1e-4"] + 1 / (1e-4 * 1e8), rel=1e-6)


def test_far_series_limit():
    ts = make_powerlaw_structure(PowerlawTask(3.0, 2.0), 10)
    with pytest.raises(NumericalError):
        ts.bank.z(1e-45)


def test_validation():
    with pytest.raises(InvalidArgumentError):
        TaskEigenstructure([0.5, 1.0], [1, 1])
    with pytest.raises(InvalidArgumentError):
        TaskEigenstructure([1.0], [1.0, 2.0])
    with pytest.raises(InvalidArgumentError):
        TaskEigenstructure([1.0], [-1.0])
    with pytest.raises(InvalidArgumentError):
        TaskEigenstructure([1.0], [1.0], noise_var=math.inf)
    with pytest.raises(InvalidArgumentError):
        TaskEigenstructure([1.0], [1.0], tail=PowerlawTail(2.0, 2.0, 5))


def test_zero_eigenvalues_excluded_from_rank():
    ts = TaskEigenstructure([1.0, 0.0], [1.0, 1.0])
    assert ts.bank.rank == 1
    assert ts.bank.z(1.0) == 0.5


def test_arrays_read_only():
    ts = TaskEigenstructure([1.0], [1.0])
    with pytest.raises(ValueError):
        ts.eigenvalues[0] = 2.0


def test_json_round_trip():
    ts = make_powerlaw_structure(PowerlawTask(1.5, 2.0), 5).with_noise(0.3).with_scale(2.0)
    back = TaskEigenstructure.from_json(ts.to_json())
    np.testing.assert_array_equal(back.eigenvalues, ts.eigenvalues)
    assert back.tail == ts.tail and back.noise_var == 0.3 and back.scale == 2.0
    task = PowerlawTask(2.0, 1.5, i0=2, s_rel_sq=0.5, head_overrides=[(1.0, 2.0)])
    assert PowerlawTask.from_dict(task.to_dict()) == task


def test_scale_multiplies_coefficients():
    ts = make_powerlaw_structure(PowerlawTask(1.5, 2.0), 5)
    assert total_power(ts.with_scale(3.0)) == pytest.approx(3 * total_power(ts), rel=1e-14)


@settings(max_examples=40, deadline=None)
@given(a=st.floats(1.05, 4.0), frac=st.floats(0.01, 0.99), i0=st.integers(1, 4),
       m=st.integers(4, 300))
def test_generator_invariants(a, frac, i0, m):
    b = 1 + frac * 2 * a
    # overrides must keep the spectrum sorted
    head = [(10.0 * (i0 - j), 1.0) for j in range(i0 - 1)]
    task = PowerlawTask(a, b, i0=i0, head_overrides=head or None)
    ts = make_powerlaw_structure(task, max(m, i0))
    assert np.all(np.diff(ts.eigenvalues) <= 0)
    assert np.all(ts.coeffs_sq >= 0)
    total, rem = total_power_with_remainder(ts)
    assert math.isfinite(total) and rem >= 0
