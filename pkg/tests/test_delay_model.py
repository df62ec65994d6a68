import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from tofec.delay_model import (
    S3_LIKE,
    DelayParams,
    delay_from_uniform,
    mean_task_delay,
    sample_task_delay,
    sample_task_delays,
    shift,
    tail_mean,
)

coef = st.floats(0, 1, allow_nan=False)
sizes = st.floats(0.01, 100)


def test_shift_examples(example_params):
    assert shift(example_params, 1.0) == pytest.approx(0.06)
    assert shift(example_params, 1e-12) == pytest.approx(0.04)
    assert shift(DelayParams(0.0, 0.02, 0.01, 0.0), 3.0) == pytest.approx(0.06)


def test_tail_mean_examples(example_params):
    assert tail_mean(example_params, 1.0) == pytest.approx(0.03)
    assert tail_mean(example_params, 3.0) == pytest.approx(0.05)


def test_zero_tail_is_deterministic():
    p = DelayParams(0.1, 0.0, 0.0, 0.0)
    rng = np.random.default_rng(0)
    assert np.all(sample_task_delays(p, 1.0, rng, 100) == 0.1)


@pytest.mark.parametrize("bad", [
    (0.0, 0.0, 0.0, 0.0),
    (0.0, 0.1, 0.0, 0.1),
    (-0.01, 0.0, 0.1, 0.0),
    (math.nan, 0.0, 0.1, 0.0),
    (0.1, math.inf, 0.1, 0.0),
])
def test_invalid_params_rejected(bad):
    with pytest.raises(ValueError):
        DelayParams(*bad)


def test_chunk_size_must_be_positive(example_params):
    with pytest.raises(ValueError):
        shift(example_params, 0.0)
    with pytest.raises(ValueError):
        tail_mean(example_params, -1.0)


def test_json_round_trip():
    doc = S3_LIKE.to_json()
    assert set(doc) == {"fixed_shift_s", "shift_slope_s_per_mb", "fixed_tail_s", "tail_slope_s_per_mb"}
    assert DelayParams.from_json(doc) == S3_LIKE


def test_sample_moments(example_params):
    rng = np.random.default_rng(12345)
    n = 10**6
    x = sample_task_delays(example_params, 1.0, rng, n)
    mean, std = 0.09, 0.03
    assert abs(x.mean() - mean) < 4 * std / math.sqrt(n)
    # std of the sample std of an exponential is about std / sqrt(n) * sqrt(2)
    assert abs(x.std() - std) < 4 * std * math.sqrt(2.0 / n)
    assert x.min() >= 0.06


def test_seed_reproducible(example_params):
    a = sample_task_delays(example_params, 2.0, np.random.default_rng(7), 1000)
    b = sample_task_delays(example_params, 2.0, np.random.default_rng(7), 1000)
    assert np.array_equal(a, b)


def test_single_draw_matches_inverse_cdf(example_params):
    u = np.random.default_rng(3).random()
    x = sample_task_delay(example_params, 1.5, np.random.default_rng(3))
    assert x == delay_from_uniform(shift(example_params, 1.5), tail_mean(example_params, 1.5), u)


@given(coef, coef, coef, coef, sizes, sizes)
def test_affine_in_chunk_size(d0, d1, e0, e1, b1, b2):
    if d0 + e0 <= 0:
        return
    p = DelayParams(d0, d1, e0, e1)
    assert shift(p, b1) + shift(p, b2) == pytest.approx(shift(p, b1 + b2) + d0, abs=1e-12)
    assert tail_mean(p, b1) + tail_mean(p, b2) == pytest.approx(tail_mean(p, b1 + b2) + e0, abs=1e-12)
    assert mean_task_delay(p, b1) == pytest.approx(shift(p, b1) + tail_mean(p, b1))


@given(st.floats(0, 1, exclude_max=True))
def test_sample_never_below_shift(u):
    assert delay_from_uniform(0.05, 0.02, u) >= 0.05


def test_s3_like_basic_delay():
    # synthetic defaults tuned so an uncoded 3 MB read averages about 205 ms
    assert mean_task_delay(S3_LIKE, 3.0) == pytest.approx(0.205)
