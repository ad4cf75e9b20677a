import numpy as np
import pytest

from bowforge.bow import matching_dimensions
from bowforge.dirac import (NonGenericPointError, assemble_delta, backend_angles, frobenius_y_basis, gram,
                            grid_dirac, grid_kernel, integrate_pole_basis, kernel, matching_kernel, pairing,
                            pairing_conservation, pole_spin_operator, principal_angles, quaternionic_defect, spectral_gap,
                            transfer_matrix, twist_point)
from bowforge.quat import projectors

from conftest import NU1


def random_t(rng, scale=1.2):
    return rng.uniform(-scale, scale, size=3)


def test_twist_point_lies_on_level_set(rng):
    for _ in range(10):
        pt = twist_point(NU1, random_t(rng), rng.uniform(0, 6))
        assert pt.moment_residual(NU1) < 1e-12


def test_transfer_matrix_examples(rng):
    t = rng.normal(size=3)
    assert np.allclose(transfer_matrix(t, t, 0.7), np.eye(2), atol=1e-15)
    P_plus, P_minus = projectors([0, 0, 1])
    U = transfer_matrix([0, 0, 1], [0, 0, 0], 1.0)
    # x' = -sigma_3 x decays along the +1 eigenvector of sigma_3
    up, down = np.array([1, 0]), np.array([0, 1])
    assert np.allclose(U @ up, np.exp(-1) * up) and np.allclose(U @ down, np.exp(1) * down)
    assert np.allclose(P_plus + P_minus, np.eye(2))


def test_transfer_matrix_semigroup(rng):
    T = rng.normal(size=(3, 2, 2)) + 1j * rng.normal(size=(3, 2, 2))
    T = 0.5 * (T - np.conj(np.transpose(T, (0, 2, 1))))
    t = rng.normal(size=3)
    a = transfer_matrix(T, t, 0.3) @ transfer_matrix(T, t, 0.45)
    assert np.abs(a - transfer_matrix(T, t, 0.75)).max() < 1e-12


@pytest.mark.parametrize("fixture", ["u1_solution", "rank2_solution", "rank3_solution", "line_solution"])
def test_index_and_dimensions(fixture, request, rng):
    sol = request.getfixturevalue(fixture)
    n_lam = len(sol.rep.lambda_points)
    dims = matching_dimensions(sol.rep)
    assert dims["index"] == n_lam
    for _ in range(5):
        sys_ = assemble_delta(sol, twist_point(NU1, random_t(rng), rng.uniform(0, 6)))
        assert sys_.index == n_lam
        K = kernel(sys_, expected_dim=n_lam)
        assert K.dim == n_lam and K.gap >= 1e3
        assert np.abs(gram(K) - np.eye(n_lam)).max() < 1e-12


def test_support_config_has_empty_jump_space():
    from conftest import build
    sol = build(["9/10"], ["1/5", "4/5"], [0, 1, 0, 0], {1: [0, 0, 0.5]})
    sys_ = assemble_delta(sol, twist_point(NU1, [0.4, 0.1, -0.3]))
    assert sys_.dims["Y"] == 0 and sys_.dims["X"] == 2
    assert matching_kernel(sol, twist_point(NU1, [0.4, 0.1, -0.3])).dim == 2


def test_wrong_expected_dimension_raises(u1_solution):
    sys_ = assemble_delta(u1_solution, twist_point(NU1, [0.2, 0.3, 0.4]))
    with pytest.raises(NonGenericPointError) as err:
        kernel(sys_, expected_dim=2)
    assert err.value.singular_values.size == sys_.matrix.shape[1]


def test_equivariance_under_small_rep_phase(rank2_solution):
    # a phase on b acts on the part of the bow beyond the p-point and on the
    # incoming N component; the kernel subspace must be carried to itself
    theta = 0.9
    p = float(rank2_solution.rep.bow.p_points[0])
    t = np.array([0.3, -0.5, 0.7])
    K0 = kernel(assemble_delta(rank2_solution, twist_point(NU1, t, 0.3)), 2)
    K1 = kernel(assemble_delta(rank2_solution, twist_point(NU1, t, 0.3, phases=[theta])), 2)
    C = K0.coeffs.copy()
    for m in K0.modes:
        if m.start >= p:
            C[m.offset:m.offset + m.size] *= np.exp(1j * theta)
    for i, c in enumerate(K0.components):
        if c.kind == "n_minus":
            C[K0.n_modes + i] *= np.exp(1j * theta)
    assert principal_angles(C, K1.coeffs, np.ones(C.shape[0])).max() <= 1e-8


def test_pairing_is_hermitian(rank3_solution):
    K = matching_kernel(rank3_solution, twist_point(NU1, [0.2, -0.1, 0.5]))
    w = lambda arc: (1.0, 0.3, 0.0, 0.0)
    P = pairing(K, K, arc_weight=w)
    assert np.abs(P - P.conj().T).max() < 1e-12


def test_pairing_conservation(rank2_solution, u1_solution):
    for sol in (rank2_solution, u1_solution):
        assert pairing_conservation(sol, twist_point(NU1, [0.3, 0.2, -0.4]), rng=5) <= 1e-10


@pytest.mark.parametrize("scheme", ["upwind", "box"])
def test_grid_backend_agrees(rank2_solution, rng, scheme):
    for _ in range(3):
        pt = twist_point(NU1, random_t(rng, 0.8), rng.uniform(0, 6))
        K = matching_kernel(rank2_solution, pt)
        G = grid_kernel(rank2_solution, pt, 1 / 400, expected_dim=2, scheme=scheme)
        assert G.dim == 2
        assert backend_angles(K, G).max() <= 1e-3


def test_upwind_grid_converges_first_order(rank2_solution):
    pt = twist_point(NU1, [0.5, -0.3, 0.6], 1.0)
    K = matching_kernel(rank2_solution, pt)
    angles = [backend_angles(K, grid_kernel(rank2_solution, pt, h, expected_dim=2)).max()
              for h in (1 / 100, 1 / 200, 1 / 400)]
    assert angles[0] > angles[1] > angles[2]
    assert angles[0] / angles[2] > 3.5


def test_box_grid_converges_second_order(rank2_solution):
    pt = twist_point(NU1, [0.5, -0.3, 0.6], 1.0)
    K = matching_kernel(rank2_solution, pt)
    a1, a2 = (backend_angles(K, grid_kernel(rank2_solution, pt, h, expected_dim=2, scheme="box")).max()
              for h in (1 / 100, 1 / 200))
    assert a1 / a2 > 3.5


def test_sparse_path_matches_dense(rank2_solution):
    pt = twist_point(NU1, [0.5, -0.3, 0.6], 1.0)
    dense = grid_kernel(rank2_solution, pt, 1 / 200, expected_dim=2, dense_limit=10**6)
    sparse = grid_kernel(rank2_solution, pt, 1 / 200, expected_dim=2, dense_limit=0)
    assert principal_angles(dense.vectors, sparse.vectors, dense.grid.weights).max() < 1e-9


def test_quaternionic_defect_shrinks(rank2_solution):
    pt = twist_point(NU1, [0.5, -0.3, 0.6], 1.0)
    d1 = quaternionic_defect(grid_dirac(rank2_solution, pt, 1 / 50))
    d2 = quaternionic_defect(grid_dirac(rank2_solution, pt, 1 / 200))
    assert d2 < d1


def test_spectral_gap_slopes(u1_solution):
    tab = spectral_gap(u1_solution, NU1, [0.3, 0.5, 0.8], np.geomspace(10, 100, 4))
    assert tab.conclusive
    assert tab.sigma_slope == pytest.approx(1.0, abs=0.1)
    assert tab.green_slope == pytest.approx(-2.0, abs=0.2)
    assert np.all(tab.sigma_min > 0)


def test_spectral_gap_short_range_is_inconclusive(u1_solution):
    assert not spectral_gap(u1_solution, NU1, [1, 0, 0], [10.0, 20.0]).conclusive


@pytest.mark.parametrize("m", [2, 3, 4])
def test_frobenius_exponents(m):
    left = frobenius_y_basis(m, [0.3, -0.2, 0.5], side="left")
    right = frobenius_y_basis(m, [0.3, -0.2, 0.5], side="right")
    assert left.alpha == pytest.approx((m - 1) / 2)
    assert right.alpha == pytest.approx((m + 1) / 2)
    assert left.coeffs[0].shape[1] == m + 1
    assert right.coeffs[0].shape[1] == m - 1
    M = pole_spin_operator(m, "left")
    assert np.abs(M - M.conj().T).max() < 1e-14


@pytest.mark.parametrize("side", ["left", "right"])
def test_frobenius_series_matches_integration(side):
    Y, fb = integrate_pole_basis(3, [0.3, -0.2, 0.5], 1e-3, 0.5, side=side)
    assert np.abs(Y - fb(0.5)).max() <= 1e-8 * max(1.0, np.abs(Y).max())
