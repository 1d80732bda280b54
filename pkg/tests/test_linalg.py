import os
import subprocess
import sys

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from plasmafbp import Mesh, make_spec, tanh_nonlinearity
from plasmafbp.errors import SingularSystemError
from plasmafbp.linalg import (
    AVAILABLE_BACKENDS,
    BACKEND,
    BorderedMatrix,
    SparseMatrix,
    dirichlet_matrix,
    eig_c0,
    eig_smallest_dirichlet,
    fill_reducing_order,
    lu_factor,
)
from plasmafbp.solver import AugmentedState, jacobian

FACTOR_FIELDS = ("Lp", "Li", "Lx", "Up", "Ui", "Ux", "udiag", "pinv")


def _residual_ok(A, z, r):
    lhs = np.max(np.abs(A @ z - r))
    return lhs <= 1e-10 * (A.norm_inf() * np.max(np.abs(z)) + np.max(np.abs(r)))


def _solver_jacobian(m, seed=3):
    spec = make_spec(m, tanh_nonlinearity(), theta="0.1*cos(pi*x)")
    r = np.random.default_rng(seed)
    s = AugmentedState(U=r.uniform(-1, 1, m.N), beta=0.2, mu=0.1, xi1=0.4)
    return jacobian(spec, s, 1.0, 0.4).assemble()


# -- sparse storage --------------------------------------------------------

def test_from_coo_sums_duplicates_and_round_trips():
    A = SparseMatrix.from_coo([0, 0, 1, 2], [1, 1, 0, 2], [1.0, 2.0, 4.0, 5.0], (3, 3))
    assert np.array_equal(A.to_dense(), [[0, 3, 0], [4, 0, 0], [0, 0, 5]])
    assert A.nnz == 3
    D = np.random.default_rng(0).standard_normal((5, 4))
    D[D < 0.3] = 0.0
    B = SparseMatrix.from_dense(D)
    assert np.array_equal(B.to_dense(), D)
    assert np.array_equal(B.T.to_dense(), D.T)
    x = np.arange(4.0)
    assert np.allclose(B @ x, D @ x)
    assert B.norm_inf() == pytest.approx(np.max(np.sum(np.abs(D), axis=1)))
    assert B.norm_1() == pytest.approx(np.max(np.sum(np.abs(D), axis=0)))


def test_permute():
    D = np.arange(9.0).reshape(3, 3)
    p, q = np.array([2, 0, 1]), np.array([1, 2, 0])
    assert np.array_equal(SparseMatrix.from_dense(D).permute(p, q).to_dense(), D[p][:, q])


def test_bordered_assembly_matches_dense():
    r = np.random.default_rng(2)
    A = SparseMatrix.from_dense(np.diag(r.uniform(1, 2, 6)))
    cols, rows, corner = r.standard_normal((6, 2)), r.standard_normal((2, 6)), r.standard_normal((2, 2))
    Bm = BorderedMatrix(A, cols, rows, corner)
    dense = np.block([[A.to_dense(), cols], [rows, corner]])
    z = r.standard_normal(8)
    assert Bm.size == 8
    assert np.allclose(Bm.assemble().to_dense(), dense)
    assert np.allclose(Bm.matvec(z), dense @ z)


# -- factorization ---------------------------------------------------------

def test_identity_solve_returns_rhs():
    rhs = np.random.default_rng(0).standard_normal(7)
    assert np.array_equal(lu_factor(SparseMatrix.identity(7)).solve(rhs), rhs)


def test_quadratic_dirichlet_problem_exact():
    m = Mesh.interval(1.0, 10)  # N = 9 interior nodes
    A = dirichlet_matrix(m)  # -Laplacian
    x = m.coords[:, 0]
    u = lu_factor(A).solve(np.full(m.N, 2.0))
    assert np.max(np.abs(u - (1 - x**2))) <= 1e-12


def test_zero_row_is_singular():
    D = np.eye(4)
    D[2, :] = 0.0
    with pytest.raises(SingularSystemError) as info:
        lu_factor(SparseMatrix.from_dense(D))
    assert info.value.pivot_index >= 0


def test_needs_pivoting():
    A = SparseMatrix.from_dense(np.array([[0.0, 1.0, 0.0], [1.0, 0.0, 2.0], [0.0, 3.0, 1.0]]))
    b = np.array([1.0, 2.0, 3.0])
    assert np.allclose(lu_factor(A).solve(b), np.linalg.solve(A.to_dense(), b))


def test_transpose_solve():
    D = np.random.default_rng(4).standard_normal((6, 6)) + 4 * np.eye(6)
    lu = lu_factor(SparseMatrix.from_dense(D))
    b = np.arange(6.0)
    assert np.allclose(lu.solve(b, trans=True), np.linalg.solve(D.T, b))


def test_condition_estimate_is_a_sharp_lower_bound():
    r = np.random.default_rng(5)
    for _ in range(10):
        D = r.standard_normal((12, 12)) + np.diag(r.uniform(0.01, 3, 12))
        lu = lu_factor(SparseMatrix.from_dense(D))
        true = np.linalg.cond(D, 1)
        assert true / 10 <= lu.cond_est <= true * (1 + 1e-8)
        assert not lu.near_singular


@pytest.mark.parametrize("mesh", [Mesh.interval(1.0, 400), Mesh.rectangle(1.0, 1.5, 20, 24)])
def test_solver_systems_meet_residual_bound(mesh):
    J = _solver_jacobian(mesh)
    r = np.random.default_rng(9).standard_normal(J.shape[0])
    z = lu_factor(J).solve(r)
    assert _residual_ok(J, z, r)


def test_ordering_is_permutation_with_dense_nodes_last():
    m = Mesh.rectangle(1.0, 1.0, 12, 12)
    J = _solver_jacobian(m)
    perm = fill_reducing_order(J)
    n = J.shape[0]
    assert np.array_equal(np.sort(perm), np.arange(n))
    assert set(perm[-2:].tolist()) == {n - 2, n - 1}


def test_default_backend_prefers_compiled():
    assert BACKEND in AVAILABLE_BACKENDS
    if "compiled" in AVAILABLE_BACKENDS:
        assert BACKEND == "compiled"


@pytest.mark.skipif("compiled" not in AVAILABLE_BACKENDS, reason="compiled kernels not built")
@pytest.mark.parametrize("mesh", [Mesh.interval(1.0, 200), Mesh.rectangle(1.0, 1.0, 14, 11)])
def test_backends_produce_identical_factors(mesh):
    J = _solver_jacobian(mesh)
    a, b = lu_factor(J, backend="compiled"), lu_factor(J, backend="python")
    for f in FACTOR_FIELDS:
        assert np.array_equal(getattr(a, f), getattr(b, f)), f
    r = np.linspace(-1, 1, J.shape[0])
    assert np.array_equal(a.solve(r), b.solve(r))
    # the fallback gathers with BLAS dot products, so only roundoff-level agreement here
    ta, tb = a.solve(r, trans=True), b.solve(r, trans=True)
    assert np.max(np.abs(ta - tb)) <= 1e-13 * np.max(np.abs(ta))


def test_pure_python_fallback_selected_by_environment():
    code = (
        "import numpy as np\n"
        "from plasmafbp.linalg import BACKEND, AVAILABLE_BACKENDS, lu_factor, SparseMatrix\n"
        "assert BACKEND == 'python' and AVAILABLE_BACKENDS == ('python',)\n"
        "A = SparseMatrix.from_dense(np.array([[2.0, 1.0], [1.0, 3.0]]))\n"
        "print(lu_factor(A).solve(np.array([3.0, 4.0])))\n"
    )
    env = dict(os.environ, PLASMAFBP_PURE_PYTHON="1")
    out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True)
    assert "[1. 1.]" in out.stdout


def test_unknown_backend_rejected():
    with pytest.raises(ValueError):
        lu_factor(SparseMatrix.identity(2), backend="fortran")


@settings(max_examples=40, deadline=None)
@given(st.integers(2, 30), st.floats(0.05, 0.5), st.integers(0, 2**32 - 1), st.sampled_from(AVAILABLE_BACKENDS))
def test_random_sparse_systems(n, density, seed, backend):
    r = np.random.default_rng(seed)
    D = r.standard_normal((n, n)) * (r.uniform(size=(n, n)) < density)
    D += np.diag(r.choice([-1.0, 1.0], n) * r.uniform(0.5, 2.0, n))
    if abs(np.linalg.det(D)) < 1e-8 or np.linalg.cond(D) > 1e8:
        return
    A = SparseMatrix.from_dense(D)
    b = r.standard_normal(n)
    z = lu_factor(A, backend=backend).solve(b)
    assert _residual_ok(A, z, b)


# -- eigensolvers ------------------------------------------------------------

def test_interval_eigenvalues():
    m = Mesh.interval(1.0, 400)
    res = eig_smallest_dirichlet(m, count=2)
    lam1, lam2 = res.values
    assert lam1 == pytest.approx(np.pi**2 / 4, rel=2e-3)
    assert lam2 == pytest.approx(np.pi**2, rel=2e-3)
    A = dirichlet_matrix(m)
    for lam, v in zip(res.values, res.vectors.T):
        assert np.linalg.norm(A @ v - lam * v) <= 1e-8 * np.linalg.norm(v)


def test_eigenvalues_scale_with_length():
    a = eig_smallest_dirichlet(Mesh.interval(1.0, 100)).values
    b = eig_smallest_dirichlet(Mesh.interval(2.0, 100)).values
    assert np.allclose(b, a / 4, rtol=1e-10, atol=0)


def test_c0_equals_lambda2_on_interval():
    m = Mesh.interval(1.0, 400)
    c0 = eig_c0(m)
    lam2 = eig_smallest_dirichlet(m).values[1]
    assert c0 == pytest.approx(np.pi**2, rel=2e-3)
    assert abs(c0 - lam2) / lam2 <= 1e-3


def test_c0_between_first_two_rectangle_eigenvalues():
    m = Mesh.rectangle(1.0, 1.5, 24, 30)
    lam1, lam2 = eig_smallest_dirichlet(m).values
    c0, v = eig_c0(m, return_vector=True)
    assert lam1 < c0 <= lam2 + 1e-8
    assert abs(np.dot(m.weights, v)) <= 1e-12 * np.linalg.norm(v)
    assert c0 > 0


def test_eigensolvers_are_deterministic():
    m = Mesh.rectangle(1.0, 1.0, 10, 10)
    assert np.array_equal(eig_smallest_dirichlet(m).values, eig_smallest_dirichlet(m).values)
    assert eig_c0(m) == eig_c0(m)
