import numpy as np
import pytest

from bowforge.bow import make_representation
from bowforge.nahm import (DegenerateConfigurationError, abelian_bow_solution, block_interior_residual,
                           gauge_transform, integrate_nahm, nahm_interior_residual, p_minus_condition,
                           p_plus_condition, p_plus_condition_direct, pole_model, pole_model_residual,
                           small_solution, subleading_check, two_pole_solution, verify_moment_map)
from bowforge.quat import spinor_from_vector, su2_irrep

NU = np.array([[0.1, -0.2, 0.3]])


def test_small_solution_residuals_and_spinor_relation(rng):
    rep = make_representation(1, ["1/2"], [], [1, 1])
    for _ in range(10):
        t = rng.normal(size=3)
        sol = small_solution(rep, NU, t)
        assert verify_moment_map(sol).max_residual <= 1e-12
        assert sol.verified
        b = sol.B[0].ravel()
        r = 0.5 * np.array([np.vdot(b, s @ b).real for s in
                            (np.array([[0, 1], [1, 0]]), np.array([[0, -1j], [1j, 0]]), np.diag([1, -1]))])
        assert np.allclose(r, t - NU[0], atol=1e-12)


def test_small_solution_two_nuts():
    nu = np.array([[0.0, 0.0, 0.0], [0.3, -0.1, 0.5]])
    rep = make_representation(1, ["1/3", "2/3"], [], [1, 1, 1])
    sol = small_solution(rep, nu, [0.2, 0.4, -0.3])
    assert verify_moment_map(sol).max_residual <= 1e-12


def test_perturbing_b_gives_linear_response():
    rep = make_representation(1, ["1/2"], [], [1, 1])
    sol = small_solution(rep, NU, [0.4, 0.5, -0.6])
    sol.B[0] = sol.B[0] + 1e-3
    res = verify_moment_map(sol).max_residual
    assert 1e-4 < res < 1e-2


def test_abelian_solution_unit_rank(u1_solution):
    rep = verify_moment_map(u1_solution)
    assert rep.ok and rep.max_residual <= 1e-12
    # continuous point with no jump: Q vanishes
    assert np.all(u1_solution.Q[0] == 0)


def test_nonzero_q_without_jump_is_degenerate():
    rep = make_representation(1, ["1/2"], ["7/10"], [1, 1, 1])
    with pytest.raises(DegenerateConfigurationError):
        abelian_bow_solution(rep, NU, {0: [0.4, 0.5, -0.6]}, q_norms={0: 0.3})


def test_support_without_p_points_is_vacuous():
    rep = make_representation(1, ["9/10"], ["1/5", "4/5"], [0, 1, 0, 0])
    sol = abelian_bow_solution(rep, NU, {1: [0, 0, 0.5]})
    assert verify_moment_map(sol).max_residual <= 1e-12
    assert not sol.Q


@pytest.mark.parametrize("fixture", ["rank2_solution", "rank3_solution", "asymptotic_solution", "line_solution"])
def test_fixture_solutions_verify(fixture, request):
    sol = request.getfixturevalue(fixture)
    assert verify_moment_map(sol).max_residual <= 1e-12


def test_two_forms_of_p_plus_condition_agree(rng):
    T = rng.normal(size=3)
    B = spinor_from_vector(rng.normal(size=3))[:, None]
    a = p_plus_condition(T[:, None, None].astype(complex), NU[0], B)
    b = p_plus_condition_direct(T[:, None, None].astype(complex), NU[0], B)
    assert np.abs(a - b).max() < 1e-14
    assert p_minus_condition(T[:, None, None].astype(complex), NU[0], B).shape == a.shape


def test_gauge_transform_preserves_residual(rank2_solution):
    g = {1: np.array([[np.exp(0.3j)]]), 2: np.array([[np.exp(-1.1j)]])}
    out = gauge_transform(rank2_solution, g)
    assert verify_moment_map(out).max_residual <= 1e-12


@pytest.mark.parametrize("m", [1, 2, 3, 5])
def test_pole_model_is_exact(m):
    for s in (0.1, 0.5, 1.0):
        assert pole_model_residual(m, s) <= 1e-13
    assert subleading_check(pole_model(m)) == pytest.approx(0.0, abs=1e-12)


def test_trivial_pole_model_is_zero():
    assert np.all(pole_model(1).T == 0)


def test_subleading_detects_constant_perturbation():
    blk = pole_model(3)
    blk.T = blk.T + 0.25j * np.eye(3)
    assert subleading_check(blk) == pytest.approx(0.25, abs=1e-12)


def test_interior_residual_of_sampled_block():
    s = np.geomspace(0.05, 1.0, 4000)
    blk = two_pole_solution(3, 1.0, s)
    assert block_interior_residual(blk) < 1e-2
    for si in (0.1, 0.5, 1.0, 2.0):
        T = two_pole_solution(3, 1.0, [si]).T[0]
        h = 1e-6
        dT = (two_pole_solution(3, 1.0, [si + h]).T[0] - two_pole_solution(3, 1.0, [si - h]).T[0]) / (2 * h)
        assert nahm_interior_residual(T, dT) < 1e-6


def test_two_pole_solution_has_model_pole():
    s = np.geomspace(1e-4, 0.1, 50)
    assert subleading_check(two_pole_solution(2, 1.0, s)) < 0.1


def test_integrated_flow_stays_bounded_near_pole():
    m = 3
    s = np.geomspace(1e-3, 1e-1, 80)[::-1]
    seed = two_pole_solution(m, 1.0, [s[0]]).T[0]
    blk = integrate_nahm(seed, s[0], s[-1], s_eval=s)
    blk.poles = two_pole_solution(m, 1.0, s).poles
    exact = two_pole_solution(m, 1.0, blk.s).T
    assert np.abs(blk.T - exact).max() < 1e-6
    assert subleading_check(blk) < 0.05


def test_irrep_dimension_matches_block():
    assert pole_model(4).T.shape[-1] == su2_irrep(4).m
