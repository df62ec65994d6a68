import json
import math

import numpy as np
import pytest

from tofec.analysis import ClassSpec, idle_fraction, load_from_queue_length
from tofec.delay_model import S3_LIKE, DelayParams
from tofec.solver import (
    DERIVED_FACTOR,
    PRINTED_FACTOR,
    ClassThresholds,
    SolverError,
    ThresholdTable,
    build_thresholds,
    code_lhs,
    code_rhs,
    code_residual,
    load_residual,
    load_target,
    log_root,
    optimal_code_for_Q,
    pi,
    queue_length_for_dimension,
    queue_length_for_length,
    queue_length_for_target,
    solve_r_given_k,
)

from conftest import random_params

K_GRID = [0.5, 1, 1.5, 2, 2.5, 3, 3.5, 4, 4.5, 5, 5.5, 6]


def make(params, J=3.0, k_max=6, n_max=12):
    return ClassSpec("read", J, 1.0, k_max, n_max, 2.0, params)


@pytest.fixture(scope="module")
def param_sets():
    return [make(p) for p in random_params(np.random.default_rng(2024), 20)]


def test_log_root_finds_root():
    assert log_root(lambda x: x * x - 2.0, 1e-3, 1e3) == pytest.approx(math.sqrt(2), rel=1e-14)
    assert log_root(lambda x: 1.0 / x - 4.0, 1e-3, 1e3) == pytest.approx(0.25, rel=1e-14)
    assert log_root(lambda x: x - 1e-250, 1e-300, 1.0) == pytest.approx(1e-250, rel=1e-14)


def test_code_equation_residual(param_sets):
    for c in param_sets:
        for k in K_GRID:
            r = solve_r_given_k(c, k)
            assert r > 1
            assert code_residual(c, k, r) < 1e-9


def test_r_increasing_in_k(param_sets):
    for c in param_sets:
        rs = [solve_r_given_k(c, k) for k in K_GRID]
        assert all(b > a for a, b in zip(rs, rs[1:]))


def test_r_tends_to_one_as_k_vanishes(param_sets):
    for c in param_sets:
        assert solve_r_given_k(c, 1e-6) < 1.01


def test_code_sides_monotone(param_sets):
    for c in param_sets:
        lhs = [code_lhs(c, k) for k in np.linspace(0.05, 20, 200)]
        rhs = [code_rhs(c, r) for r in np.linspace(1.001, 20, 200)]
        assert np.all(np.diff(lhs) > 0)
        assert np.all(np.diff(rhs) > 0)


def test_no_slope_terms_is_an_error():
    with pytest.raises(SolverError, match="no root found"):
        solve_r_given_k(make(DelayParams(0.05, 0.0, 0.05, 0.0)), 1.0)


def test_pi_positive_and_decreasing(param_sets):
    ks = np.arange(0.1, 10.0001, 0.1)
    for c in param_sets:
        vals = [pi(c, k) for k in ks]
        assert all(v > 0 for v in vals)
        assert all(b < a for a, b in zip(vals, vals[1:]))
        doubled = make(c.params, J=2 * c.file_size)
        v2 = [pi(doubled, k) for k in ks]
        assert all(b < a for a, b in zip(v2, v2[1:]))
        assert v2 != vals


def test_load_target_matches_definition():
    L = 16
    for Q in (0.01, 0.7, 5.0, 300.0):
        rho = load_from_queue_length(Q, L)
        direct = ((L / (L - rho)) ** 2 - 1) / L
        assert load_target(Q, L) == pytest.approx(direct, rel=1e-9)
        assert load_target(Q, L, PRINTED_FACTOR) == pytest.approx(direct / 2, rel=1e-9)
        assert queue_length_for_target(load_target(Q, L), L) == pytest.approx(Q, rel=1e-9)
    with pytest.raises(SolverError):
        load_target(0.0, L)


def test_load_condition_is_the_stationarity_of_the_objective():
    # Finite-difference oracle: at fixed lambda, the relaxed optimum of
    # D_q(U) + D_s(k, r) must satisfy both stationarity conditions.
    c = make(S3_LIKE)
    L, Q = 16, 0.8
    opt = optimal_code_for_Q(c, Q, L)
    p, J = c.params, c.file_size
    usage = lambda k, r: p.fixed_shift * k * r + p.shift_slope * J * r + p.fixed_tail * k + p.tail_slope * J  # noqa: E731
    lam = load_from_queue_length(Q, L) / usage(opt.k, opt.r)

    def objective(k, r):
        rho = lam * usage(k, r)
        dq = lam * usage(k, r) ** 2 / (L * (L - rho))
        ds = p.fixed_shift + p.shift_slope * J / k + (p.fixed_tail + p.tail_slope * J / k) * math.log(r / (r - 1))
        return dq + ds

    h = 1e-6
    dk = (objective(opt.k * (1 + h), opt.r) - objective(opt.k * (1 - h), opt.r)) / (2 * h * opt.k)
    dr = (objective(opt.k, opt.r * (1 + h)) - objective(opt.k, opt.r * (1 - h))) / (2 * h * opt.r)
    scale = abs(objective(opt.k, opt.r))
    assert abs(dk) / scale < 1e-5
    assert abs(dr) / scale < 1e-5


def test_optimal_code_residuals_and_monotonicity(param_sets):
    qs = np.logspace(-2, 2, 50)
    for c in param_sets:
        out = [optimal_code_for_Q(c, q, 16) for q in qs]
        for q, o in zip(qs, out):
            assert code_residual(c, o.k, o.r) < 1e-9
            assert load_residual(c, q, 16, o.k, o.r) < 1e-6
        for a, b in zip(out, out[1:]):
            assert b.k < a.k and b.n < a.n and b.r < a.r


def test_printed_factor_residuals():
    c = make(S3_LIKE)
    for q in np.logspace(-2, 2, 10):
        o = optimal_code_for_Q(c, q, 16, PRINTED_FACTOR)
        assert load_residual(c, q, 16, o.k, o.r, PRINTED_FACTOR) < 1e-6


def test_unique_root_by_dense_scan(param_sets):
    ks = np.logspace(-3, 3, 2000)
    for c in param_sets:
        vals = np.array([pi(c, k) for k in ks])
        for q in (0.05, 1.0, 20.0):
            diff = vals - load_target(q, 16)
            assert np.count_nonzero(np.diff(np.sign(diff))) == 1


def test_common_target_across_classes():
    a = make(S3_LIKE, J=3.0)
    b = ClassSpec("write", 1.0, 1.0, 6, 12, 2.0, DelayParams(0.05, 0.01, 0.03, 0.02))
    for q in (0.1, 1.0, 10.0):
        ka = optimal_code_for_Q(a, q, 16).k
        kb = optimal_code_for_Q(b, q, 16).k
        assert pi(a, ka) == pytest.approx(pi(b, kb), rel=1e-6)


def test_q_range_errors():
    c = make(S3_LIKE)
    with pytest.raises(SolverError, match="below solvable range"):
        optimal_code_for_Q(c, 1e-20, 16)
    with pytest.raises(SolverError):
        optimal_code_for_Q(c, 0.0, 16)


def test_threshold_chain_default_setup(read3mb):
    ct = build_thresholds(read3mb, 16).classes[0]
    for th, anchors in ((ct.zeta, ct.q_n), (ct.kappa, ct.q_k)):
        assert th[0] == math.inf and th[-1] == 0.0
        chain = [th[0]]
        for j, q in enumerate(anchors):
            chain += [q, th[j + 1]]
        assert all(b < a for a, b in zip(chain, chain[1:]))
    assert ct.n_levels == 12 and ct.k_levels == 6
    assert ct.truncations == ()


def test_anchor_inverse_consistency(read3mb):
    ct = build_thresholds(read3mb, 16).classes[0]
    for n, q in enumerate(ct.q_n, start=1):
        assert optimal_code_for_Q(read3mb, q, 16).n == pytest.approx(n, rel=1e-6)
    for k, q in enumerate(ct.q_k, start=1):
        assert optimal_code_for_Q(read3mb, q, 16).k == pytest.approx(k, rel=1e-6)
    assert queue_length_for_length(read3mb, 1.0, 16) == pytest.approx(ct.q_n[0])
    assert queue_length_for_dimension(read3mb, 1.0, 16) == pytest.approx(ct.q_k[0])


def test_printed_factor_thresholds_are_larger(read3mb):
    d = build_thresholds(read3mb, 16, DERIVED_FACTOR).classes[0]
    p = build_thresholds(read3mb, 16, PRINTED_FACTOR).classes[0]
    assert all(b > a for a, b in zip(d.zeta[1:-1], p.zeta[1:-1]))


def test_degenerate_single_level():
    ct = build_thresholds(make(S3_LIKE, k_max=1, n_max=1), 16).classes[0]
    assert ct.zeta == (math.inf, 0.0) and ct.kappa == (math.inf, 0.0)


def test_table_json_round_trip(read3mb):
    table = build_thresholds([read3mb], 16)
    doc = json.loads(json.dumps(table.to_json()))
    assert doc["classes"][0]["zeta"][0] == "inf"
    assert ThresholdTable.from_json(doc) == table


def test_idle_fraction_in_target():
    Q = 2.0
    assert load_target(Q, 16) == pytest.approx((1 / idle_fraction(Q) ** 2 - 1) / 16)
