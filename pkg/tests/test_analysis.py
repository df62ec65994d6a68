import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from tofec.analysis import (
    ClassSpec,
    CodeChoice,
    LoadPoint,
    analytic_capacity,
    check_mix,
    expected_queue_length,
    expected_queueing_delay,
    expected_service_delay_approx,
    expected_service_delay_exact,
    expected_usage,
    expected_usage_expanded,
    harmonic_tail,
    idle_fraction,
    load_from_queue_length,
    mean_usage,
    normalized_load,
)
from tofec.delay_model import DelayParams

from conftest import EXAMPLE_PARAMS, random_params


def cls_with(params, J=3.0, **kw):
    return ClassSpec("read", J, 1.0, kw.get("k_max", 6), kw.get("n_max", 12), kw.get("r_max", 2.0), params)


def test_code_choice_validation():
    assert CodeChoice(6, 3).r == 2.0
    assert tuple(CodeChoice(2, 1)) == (2, 1)
    with pytest.raises(ValueError):
        CodeChoice(2, 3)
    with pytest.raises(ValueError):
        CodeChoice(0, 0)
    with pytest.raises(TypeError):
        CodeChoice(2.0, 1)


def test_class_spec_validation():
    with pytest.raises(ValueError):
        cls_with(EXAMPLE_PARAMS, k_max=7, n_max=6)
    with pytest.raises(ValueError):
        ClassSpec("scan", 3.0, 1.0, 6, 12, 2.0, EXAMPLE_PARAMS)
    with pytest.raises(ValueError):
        cls_with(EXAMPLE_PARAMS, r_max=0.5)
    with pytest.raises(ValueError):
        check_mix([cls_with(EXAMPLE_PARAMS), cls_with(EXAMPLE_PARAMS)])


def test_allowed_codes_default_setup():
    codes = cls_with(EXAMPLE_PARAMS).allowed_codes()
    # k from 1..6, n from k..2k
    assert len(codes) == sum(k + 1 for k in range(1, 7))
    assert CodeChoice(12, 6) in codes and CodeChoice(13, 6) not in codes


def test_service_delay_examples():
    flat = cls_with(DelayParams(0.10, 0.0, 0.05, 0.0))
    assert expected_service_delay_exact(flat, CodeChoice(1, 1)) == pytest.approx(0.15)
    c = cls_with(EXAMPLE_PARAMS)  # J = 3, so k = 3 gives 1 MB chunks
    assert expected_service_delay_exact(c, CodeChoice(6, 3)) == pytest.approx(0.06 + 0.03 * (1 / 6 + 1 / 5 + 1 / 4))
    assert expected_service_delay_exact(c, CodeChoice(6, 3)) == pytest.approx(0.0785)
    assert expected_service_delay_approx(c, CodeChoice(6, 3)) == pytest.approx(0.06 + 0.03 * math.log(2))


def test_approx_larger_than_exact_for_replication():
    c = cls_with(EXAMPLE_PARAMS)
    ex = expected_service_delay_exact(c, CodeChoice(2, 1))
    ap = expected_service_delay_approx(c, CodeChoice(2, 1))
    b = 3.0
    assert ex == pytest.approx(0.04 + 0.02 * b + (0.02 + 0.01 * b) * 0.5)
    assert ap > ex


def test_approx_undefined_at_rate_one():
    with pytest.raises(ValueError, match="r=1"):
        expected_service_delay_approx(cls_with(EXAMPLE_PARAMS), CodeChoice(3, 3))


def test_approx_gap_for_12_6():
    rng = np.random.default_rng(0)
    for p in random_params(rng, 50):
        c = cls_with(p)
        ex = expected_service_delay_exact(c, CodeChoice(12, 6))
        ap = expected_service_delay_approx(c, CodeChoice(12, 6))
        assert abs(ap - ex) / ex < 0.15


def test_k_above_limit_rejected():
    with pytest.raises(ValueError):
        expected_usage(cls_with(EXAMPLE_PARAMS, k_max=2, n_max=4), CodeChoice(3, 3))


@pytest.mark.parametrize("n,k", [(1, 1), (2, 1), (4, 2), (6, 3), (12, 6), (5, 5)])
def test_harmonic_sum_matches_order_statistics(n, k):
    rng = np.random.default_rng(100 * n + k)
    trials = 10**6
    x = rng.exponential(size=(trials, n))
    kth = np.partition(x, k - 1, axis=1)[:, k - 1]
    se = kth.std() / math.sqrt(trials)
    assert abs(kth.mean() - harmonic_tail(n, k)) < 3.5 * se


def test_usage_examples():
    c = cls_with(EXAMPLE_PARAMS)
    assert expected_usage(c, CodeChoice(6, 3)) == pytest.approx(6 * 0.06 + 3 * 0.03)
    assert expected_usage(c, CodeChoice(6, 3)) == pytest.approx(0.45)
    assert expected_usage(c, CodeChoice(1, 1)) == pytest.approx(0.04 + 0.02 * 3 + 0.02 + 0.01 * 3)


def test_usage_forms_agree():
    rng = np.random.default_rng(1)
    for p in random_params(rng, 20):
        c = cls_with(p, J=float(rng.uniform(0.5, 10)))
        for code in c.allowed_codes():
            assert expected_usage(c, code) == pytest.approx(expected_usage_expanded(c, code.k, code.r), rel=1e-12)


def test_monotone_in_n():
    rng = np.random.default_rng(2)
    for p in random_params(rng, 20):
        c = cls_with(p)
        for k in range(1, 7):
            ds = [expected_service_delay_exact(c, CodeChoice(n, k)) for n in range(k, 2 * k + 1)]
            us = [expected_usage(c, CodeChoice(n, k)) for n in range(k, 2 * k + 1)]
            assert all(b < a for a, b in zip(ds, ds[1:]))
            assert all(b > a for a, b in zip(us, us[1:]))


def test_normalized_load_examples():
    flat = cls_with(DelayParams(0.45, 0.0, 0.0, 0.0))
    assert normalized_load(LoadPoint(20.0, 16), [flat], [CodeChoice(1, 1)]) == pytest.approx(9.0)
    assert normalized_load(LoadPoint(0.0, 16), [flat], [CodeChoice(1, 1)]) == 0.0
    a = ClassSpec("read", 1.0, 0.5, 1, 1, 1.0, DelayParams(0.4, 0.0, 0.0, 0.0))
    b = ClassSpec("write", 1.0, 0.5, 1, 1, 1.0, DelayParams(0.6, 0.0, 0.0, 0.0))
    codes = [CodeChoice(1, 1)] * 2
    assert mean_usage([a, b], codes) == pytest.approx(0.5)
    assert normalized_load(LoadPoint(10.0, 16), [a, b], codes) == pytest.approx(5.0)
    with pytest.raises(ValueError):
        LoadPoint(-1.0, 16)


def test_queue_length_examples():
    assert expected_queue_length(9.0, 16) == pytest.approx(81 / 112)
    assert expected_queue_length(0.0, 16) == 0.0
    assert expected_queue_length(16 * (1 - 1e-7), 16) > 1e6
    with pytest.raises(ValueError, match="unstable"):
        expected_queue_length(16.0, 16)


def test_queueing_delay_is_queue_over_rate():
    lam, u, L = 20.0, 0.45, 16
    assert expected_queueing_delay(lam, u, L) == pytest.approx(expected_queue_length(lam * u, L) / lam)
    assert expected_queueing_delay(lam, u, L) == pytest.approx(lam * u * u / (L * (L - lam * u)))


def test_inversion_examples():
    assert load_from_queue_length(81 / 112, 16) == pytest.approx(9.0, rel=1e-12)
    assert load_from_queue_length(0.0, 16) == 0.0


@given(st.floats(1e-6, 1 - 1e-6), st.integers(1, 64))
def test_inversion_round_trip(frac, L):
    rho = frac * L
    assert load_from_queue_length(expected_queue_length(rho, L), L) == pytest.approx(rho, rel=1e-10, abs=1e-10)


@given(st.floats(0, 1e8))
def test_idle_fraction_consistent(Q):
    L = 16
    rho = load_from_queue_length(Q, L)
    assert idle_fraction(Q) == pytest.approx(1 - rho / L, rel=1e-9, abs=1e-12)


def test_queue_length_increasing_and_convex():
    rho = np.linspace(0, 15.99, 2000)
    q = np.array([expected_queue_length(r, 16) for r in rho])
    assert np.all(np.diff(q) > 0)
    assert np.all(np.diff(q, 2) > 0)


def test_capacity():
    c = cls_with(EXAMPLE_PARAMS)
    assert analytic_capacity([c], [CodeChoice(6, 3)], 16) == pytest.approx(16 / 0.45)
