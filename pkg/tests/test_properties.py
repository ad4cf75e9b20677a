from fractions import Fraction

import numpy as np
from hypothesis import assume, given, settings
from hypothesis import strategies as st

from bowforge.bow import as_fraction, make_representation, matching_dimensions, validate
from bowforge.cli import RunConfig
from bowforge.dirac import assemble_delta, kernel, transfer_matrix, twist_point
from bowforge.nahm import abelian_bow_solution, verify_moment_map
from bowforge.quat import QuaternionEnd, charge_conjugate, moment_vector, spinor_from_vector

coord = st.floats(-5, 5, allow_nan=False)
vec3 = st.tuples(coord, coord, coord).map(np.array)
seeds = st.integers(0, 2**32 - 1)
SETTINGS = settings(max_examples=40, deadline=None)


@SETTINGS
@given(vec3, st.floats(-np.pi, np.pi), st.sampled_from(["north", "south", "auto"]))
def test_spinor_round_trip(r, phase, patch):
    assume(np.linalg.norm(r) > 1e-3)
    assume(patch == "auto" or np.hypot(r[0], r[1]) > 1e-3 * np.linalg.norm(r))
    b = spinor_from_vector(r, phase, patch)
    assert np.abs(moment_vector(b) - r).max() <= 1e-12 * max(1.0, np.linalg.norm(r))
    assert abs(np.vdot(b, b).real - 2 * np.linalg.norm(r)) <= 1e-12 * max(1.0, np.linalg.norm(r))


@SETTINGS
@given(seeds, st.integers(1, 4), st.integers(1, 4))
def test_charge_conjugation_is_an_anti_involution(seed, n, m):
    rng = np.random.default_rng(seed)
    beta = rng.normal(size=(2 * n, m)) + 1j * rng.normal(size=(2 * n, m))
    assert np.abs(charge_conjugate(charge_conjugate(beta)) + beta).max() < 1e-12


@SETTINGS
@given(seeds, st.integers(1, 5))
def test_quaternion_decomposition_round_trip(seed, n):
    rng = np.random.default_rng(seed)
    M = rng.normal(size=(2 * n, 2 * n)) + 1j * rng.normal(size=(2 * n, 2 * n))
    assert np.abs(QuaternionEnd.decompose(M).assemble() - M).max() < 1e-12


@SETTINGS
@given(vec3, vec3, st.floats(0, 2), st.floats(0, 2))
def test_transfer_semigroup(T, t, a, b):
    lhs = transfer_matrix(T, t, a) @ transfer_matrix(T, t, b)
    rhs = transfer_matrix(T, t, a + b)
    assert np.abs(lhs - rhs).max() <= 1e-10 * max(1.0, np.abs(rhs).max())


@st.composite
def representations(draw):
    k = draw(st.integers(1, 3))
    n_lam = draw(st.integers(0, 3))
    pos = draw(st.lists(st.integers(1, 99), min_size=k + n_lam, max_size=k + n_lam, unique=True))
    p = [Fraction(x, 100) for x in pos[:k]]
    lam = [Fraction(x, 100) for x in pos[k:]]
    inner = draw(st.lists(st.integers(0, 3), min_size=k + n_lam, max_size=k + n_lam))
    ranks = inner + [inner[0]]
    return make_representation(1, sorted(p), lam, ranks)


@SETTINGS
@given(representations())
def test_index_formula_for_valid_representations(rep):
    report = validate(rep)
    if report.ok:
        assert matching_dimensions(rep)["index"] == len(rep.lambda_points)


@SETTINGS
@given(st.fractions(Fraction(-5), Fraction(5), max_denominator=1000))
def test_rational_strings_are_exact(x):
    assert as_fraction(str(x)) == x


@SETTINGS
@given(st.integers(1, 99), st.integers(1, 99), vec3, seeds)
def test_config_round_trip(p, lam, T, seed):
    assume(p != lam)
    d = {
        "name": "prop",
        "seed": seed,
        "taubnut": {"ell": "1", "nuts": [[0.0, 0.1, 0.2]]},
        "bow": {"p": [f"{p}/100"], "lambda": [{"position": f"{lam}/100", "class": "zero"}], "ranks": [1, 1, 1]},
        "solution": {"T": {"0": T.tolist()}, "phases": {"B:0": 0.3}},
    }
    a = RunConfig.from_dict(d)
    assert RunConfig.from_dict(a.to_dict()) == a


@settings(max_examples=15, deadline=None)
@given(vec3, vec3, st.floats(0, 2 * np.pi))
def test_kernel_dimension_at_random_points(T, t, tau):
    assume(np.linalg.norm(t - [0.1, -0.2, 0.3]) > 1e-2)
    nu = np.array([[0.1, -0.2, 0.3]])
    rep = make_representation(1, ["1/2"], ["1/5", "4/5"], [0, 1, 1, 0])
    sol = abelian_bow_solution(rep, nu, {1: T})
    assert verify_moment_map(sol).max_residual <= 1e-12 * max(1.0, np.abs(T).max())
    K = kernel(assemble_delta(sol, twist_point(nu, t, tau)), expected_dim=2, min_gap=1e3)
    assert K.dim == 2
