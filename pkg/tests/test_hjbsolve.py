import numpy as np
import pytest
from hypothesis import HealthCheck, given, settings, strategies as st

import bankcontract.hjbsolve as hj
from bankcontract.hjbsolve import (
    AssumptionError,
    ConditionError,
    HypLambdaError,
    SolverSettings,
    brute_force_sup,
    build_all,
    check_shape,
    eval_candidate,
    find_gamma,
    hjb_residual,
    solve_v1,
)
from bankcontract.params import PoolParams, derive
from conftest import random_admissible

# Level 2 of the reference pool in closed form. On (0.8, 1.6] the lower level
# is linear, v_1(u - 0.8) = 3.8 (u - 0.8), so the ODE
#   (0.05 u + 0.4) v' + 2 - 0.5 (v - 3.8 (u - 0.8)) = 0
# has the affine particular solution A u + C and homogeneous part (0.05 u + 0.4)^10.
A2 = 1.9 / 0.45
C2 = 0.8 * A2 + 0.96
K2 = -(1 + A2) / (0.5 * 0.48**9)


def v2_exact(u):
    return A2 * u + C2 + K2 * (0.05 * u + 0.4) ** 10


def dv2_exact(u):
    return A2 + 0.5 * K2 * (0.05 * u + 0.4) ** 9


# root of v_2'(x) = r/lambda_3 - 1 inside (0.8, 1.6]
GAMMA3 = 0.8 + (((0.05 / 0.75 - 1 - A2) / (0.5 * K2)) ** (1 / 9) - 0.4) / 0.05

# r = 0: v_2(u) = 4 u + 4 - 4 exp((u - 1.6) / 0.8) on (0.8, 1.6]
def v2_zero(u):
    return 4 * u + 4 - 4 * np.exp((u - 1.6) / 0.8)


def test_oracle_constants():
    assert v2_exact(1.6) == pytest.approx(6.08, abs=1e-13)
    assert dv2_exact(1.6) == pytest.approx(-1.0, abs=1e-13)
    assert GAMMA3 == pytest.approx(2.386305092245319, abs=1e-12)


# -- level 1 -------------------------------------------------------------------

def test_v1_reference(ref_vf):
    lv = ref_vf.level(1)
    u = np.linspace(0.8, 5.0, 50)
    assert np.max(np.abs(lv.value(u) - (3.84 - u))) < 1e-14
    assert lv.vbar == pytest.approx(3.04, abs=1e-14)
    assert lv.gamma == lv.b == 0.8
    assert ref_vf.eval_deriv(1, 0.4) == pytest.approx(3.8, abs=1e-14)
    assert ref_vf.eval(1, 2.0) == pytest.approx(1.84, abs=1e-14)


@pytest.mark.parametrize("seed", range(5))
def test_v1_kink_is_concave(seed):
    p = random_admissible(np.random.default_rng(seed), 1)
    d = derive(p)
    lv = solve_v1(d, p.r)
    jump = lv.deriv(lv.b, "left") - lv.deriv(lv.b, "right")
    assert jump == pytest.approx((p.mu - p.r * d.b[0]) / (d.lam[0] * d.b[0]), rel=1e-12)
    assert jump > 0


def test_single_loan_pool_is_level_one():
    p = PoolParams(I=1, mu=1.0, B=0.1, epsilon=0.5, r=0.05, alpha=(0.25,))
    vf = build_all(p)
    assert vf.I == 1 and vf.gammas == (0.8,)


# -- level 2 and 3 against the closed form -----------------------------------

def test_v2_matches_closed_form(ref_vf):
    u = np.linspace(0.8, 1.6, 2001)[1:]
    assert np.max(np.abs(ref_vf.eval(2, u) - v2_exact(u))) < 1e-10
    assert np.max(np.abs(ref_vf.eval_deriv(2, u, "left") - dv2_exact(u))) < 1e-8
    assert ref_vf.eval(2, 1.6) == pytest.approx(6.08, abs=1e-12)
    assert ref_vf.level(2).vbar == pytest.approx(5.615450730960793, abs=1e-10)


def test_gamma_reference(ref_vf):
    assert ref_vf.gammas[:2] == (0.8, 1.6)
    assert ref_vf.gammas[2] == pytest.approx(GAMMA3, abs=1e-10)


@pytest.mark.parametrize("u", [0.8 + 1e-9, 1.0, 1.2, 1.5999, 1.6])
def test_eval_candidate_closed_form(ref_vf, u):
    d = ref_vf.derived
    got = eval_candidate(2, u, 1.6, ref_vf.level(1), d, 0.05)
    assert got == pytest.approx(v2_exact(u), abs=1e-10)


def test_eval_candidate_boundary_term(ref_vf):
    lv2 = ref_vf.level(2)
    g = lv2.gamma
    d = ref_vf.derived
    expected = ref_vf.eval(1, g - 0.8) + (2 - (0.05 * g + 0.4)) / 0.5
    assert eval_candidate(2, g, g, ref_vf.level(1), d, 0.05) == pytest.approx(expected, abs=1e-15)


def test_eval_candidate_agrees_with_grid_level3(ref_vf):
    lv = ref_vf.level(3)
    for u in np.linspace(0.81, lv.gamma, 13):
        c = eval_candidate(3, u, lv.gamma, ref_vf.level(2), ref_vf.derived, 0.05)
        assert c == pytest.approx(lv.value(u), abs=1e-10)


@pytest.mark.parametrize("u", [0.8, 0.5, 2.0])
def test_eval_candidate_domain(ref_vf, u):
    with pytest.raises(ValueError):
        eval_candidate(2, u, 1.6, ref_vf.level(1), ref_vf.derived, 0.05)


@pytest.mark.parametrize("h", [1e-3, -1e-3])
def test_boundary_choice_is_maximal(ref_vf, h):
    lv = ref_vf.level(3)
    prev, d = ref_vf.level(2), ref_vf.derived
    for u in np.linspace(0.85, lv.gamma - 2e-3, 7):
        best = eval_candidate(3, u, lv.gamma, prev, d, 0.05)
        other = eval_candidate(3, u, lv.gamma + h, prev, d, 0.05)
        assert best >= other - 1e-10


def test_boundary_derivative_identity(ref_vf):
    lv = ref_vf.level(2)
    identity = (0.5 * lv.vbar - 2.0) / (0.8 * 0.55)
    assert identity == pytest.approx(1.8357394670009, abs=1e-9)
    assert lv.deriv(0.8, "right") == pytest.approx(identity, abs=1e-10)


# -- regimes -------------------------------------------------------------------

def test_zero_rate_closed_form(zero_vf):
    assert zero_vf.regime == "r=0"
    assert zero_vf.gammas == pytest.approx((0.8, 1.6, 2.4), abs=1e-12)
    assert zero_vf.eval(3, 2.4) == pytest.approx(9.6, abs=1e-10)
    assert zero_vf.eval(1, 0.8) == pytest.approx(3.2, abs=1e-14)
    u = np.linspace(0.8, 1.6, 501)[1:]
    assert np.max(np.abs(zero_vf.eval(2, u) - v2_zero(u))) < 1e-10


def test_small_rate_approaches_zero_rate(zero_vf):
    vf = build_all(PoolParams.reference(r=1e-6))
    assert vf.regime == "r>0"
    for j in (1, 2, 3):
        assert abs(vf.gammas[j - 1] - 0.8 * j) <= 1e-3
        u = np.linspace(0.0, 3.0, 301)
        assert np.max(np.abs(vf.eval(j, u) - zero_vf.eval(j, u))) <= 1e-3


def test_first_best_at_zero_rate(zero_vf):
    d = zero_vf.derived
    assert zero_vf.gammas[-1] + zero_vf.eval(3, zero_vf.gammas[-1]) == pytest.approx(
        d.first_best, abs=1e-8)


# -- residual and shape --------------------------------------------------------

def test_residual_reference(ref_vf):
    for j in (2, 3):
        lv = ref_vf.level(j)
        u = np.linspace(lv.b, lv.gamma, 1001)[1:]
        assert np.max(np.abs(hjb_residual(ref_vf, j, u))) <= 1e-9
    assert abs(hjb_residual(ref_vf, 2, 1.2)) <= 1e-10


@pytest.mark.parametrize("j", [1, 2, 3])
def test_residual_above_boundary(ref_vf, j):
    g = ref_vf.gammas[j - 1]
    u = g + np.linspace(1e-9, 5.0, 200)
    res = hjb_residual(ref_vf, j, u)
    assert np.all(res <= 1e-12)


def test_level_one_residual_closed_form(ref_vf):
    u = np.linspace(0.81, 4.0, 50)
    assert hjb_residual(ref_vf, 1, u) == pytest.approx(-0.05 * (u - 0.8), abs=1e-13)


def test_residual_domain(ref_vf):
    with pytest.raises(ValueError):
        hjb_residual(ref_vf, 2, 0.8)


def test_shape_reference(ref_vf):
    rep = check_shape(ref_vf)
    assert rep.passed(1e-8), rep.levels


def test_breakpoints_and_regions(ref_vf):
    lv = ref_vf.level(3)
    assert lv.breakpoints == (0.0, 0.8, 1.6, lv.gamma)
    assert ref_vf.level(2).breakpoints == (0.0, 0.8, 1.6)
    assert [lv.region(u) for u in (0.4, 1.0, 2.0, 2.5)] == [
        "linear-low", "probation", "interior", "linear-high"]
    assert set(lv.breakpoints) <= set(lv.grid)


def test_eval_contract(ref_vf):
    assert ref_vf.eval(0, 3.0) == 0.0
    assert ref_vf.eval_deriv(3, ref_vf.gammas[2], "right") == -1.0
    with pytest.raises(ValueError):
        ref_vf.eval(4, 1.0)
    with pytest.raises(ValueError):
        ref_vf.eval(2, -0.1)
    vals = ref_vf.eval(3, np.array([[0.1, 1.0], [2.0, 9.0]]))
    assert vals.shape == (2, 2)


# -- optimality oracle ---------------------------------------------------------

@pytest.mark.parametrize("u, theta, z", [(1.2, 0.5, 0.4), (1.6, 1.0, 0.8)])
def test_brute_force_argmax(ref_vf, u, theta, z):
    res = brute_force_sup(ref_vf, 2, u)
    assert abs(res.sup_value) <= 1e-4
    assert abs(res.theta - theta) <= res.d_theta + 1e-12
    assert abs(res.z - z) <= res.d_z + 1e-12


def test_brute_force_domain(ref_vf):
    with pytest.raises(ValueError):
        brute_force_sup(ref_vf, 2, 0.8)
    with pytest.raises(ValueError):
        brute_force_sup(ref_vf, 1, 0.9)


# -- conditions ----------------------------------------------------------------

def test_gamma_two_is_sum_of_drops(ref_vf):
    d = ref_vf.derived
    assert find_gamma(2, ref_vf.level(1), d, 0.05) == 1.6


def test_continuation_decision_error(ref_vf):
    d = ref_vf.derived
    # r/lambda_2 - 1 = 5 exceeds vbar_1/b_1 = 3.8
    with pytest.raises(ConditionError, match="continuation decision"):
        find_gamma(2, ref_vf.level(1), d, 3.0)


def test_hyp_lambda_violation_is_fatal(monkeypatch, ref_params):
    monkeypatch.setattr(hj, "psi_beta", lambda x, beta: 0.1)
    with pytest.raises(HypLambdaError) as info:
        build_all(ref_params)
    assert info.value.j == 3
    assert info.value.lhs == pytest.approx(1.8357394670009 * 0.8 / 5.615450730960793, rel=1e-9)


def test_hyp_lambda_recorded(ref_vf):
    lhs, rhs = ref_vf.level(3).hyp_lambda
    assert 0 < lhs <= rhs


def test_assumption_failure_blocks_build():
    p = PoolParams(I=2, mu=1.0, B=0.1, epsilon=0.5, r=0.05, alpha=(0.2, 0.3))
    with pytest.raises(AssumptionError, match="contagion"):
        build_all(p)


# -- randomized properties -----------------------------------------------------

@settings(max_examples=25, deadline=None, suppress_health_check=[HealthCheck.too_slow])
@given(seed=st.integers(0, 2**32 - 1), I=st.integers(2, 4))
def test_random_pools_solve_cleanly(seed, I):
    p = random_admissible(np.random.default_rng(seed), I)
    vf = build_all(p, settings=SolverSettings(grid_points=1024))
    d = vf.derived
    for j in range(2, I + 1):
        lv = vf.level(j)
        assert d.b_at(j) + d.b_at(j - 1) - 1e-12 <= lv.gamma <= d.b_at(j) + vf.gammas[j - 2] + 1e-12
        u = np.linspace(lv.b, lv.gamma, 400)[1:]
        assert np.max(np.abs(hjb_residual(vf, j, u))) <= 1e-8
        assert np.all(hjb_residual(vf, j, lv.gamma + np.linspace(0, 3, 30)) <= 1e-12)
    assert check_shape(vf).passed(1e-8)


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 2**32 - 1))
def test_gamma_two_exact(seed):
    p = random_admissible(np.random.default_rng(seed), 2)
    vf = build_all(p)
    assert abs(vf.gammas[1] - (vf.derived.b[0] + vf.derived.b[1])) <= 1e-12


@settings(max_examples=15, deadline=None)
@given(seed=st.integers(0, 2**32 - 1))
def test_zero_rate_boundaries_are_cumulative(seed):
    p = random_admissible(np.random.default_rng(seed), 4)
    p0 = PoolParams(I=p.I, mu=p.mu, B=p.B, epsilon=p.epsilon, r=0.0, alpha=p.alpha)
    vf = build_all(p0)
    assert np.allclose(vf.gammas, np.cumsum(vf.derived.b), rtol=0, atol=1e-10)
    g = vf.gammas[-1]
    assert g + vf.eval(4, g) == pytest.approx(vf.derived.first_best, abs=1e-8)
