import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import dense_partial_trace, haar_unitary, mp_binary_entropy, mp_entropy, random_rho
from qadditivity import qmat
from qadditivity.config import override
from qadditivity.errors import DimensionError, InvalidStateError

seeds = st.integers(0, 2**32 - 1)


def test_entropy_of_maximally_mixed_qubit_is_exactly_one():
    assert qmat.von_neumann_entropy(np.eye(2) / 2) == 1.0


def test_entropy_matches_high_precision_evaluation():
    h = qmat.von_neumann_entropy(np.diag([0.75, 0.25]))
    assert abs(h - mp_entropy(["0.75", "0.25"])) <= 1e-12
    assert abs(h - 0.811278) < 1e-6


def test_entropy_of_pure_projector_is_zero():
    v = qmat.random_pure_state(5, seed=3)
    assert qmat.von_neumann_entropy(np.outer(v, v.conj())) <= 1e-12


def test_entropy_rejects_invalid_states():
    with pytest.raises(InvalidStateError):
        qmat.von_neumann_entropy(np.diag([0.6, 0.6]))
    with pytest.raises(InvalidStateError):
        qmat.von_neumann_entropy(np.diag([1.2, -0.2]))
    with pytest.raises(InvalidStateError):
        qmat.von_neumann_entropy(np.array([[0.5, 0.1], [0.3, 0.5]]))


@settings(max_examples=60, deadline=None)
@given(seed=seeds, d=st.integers(2, 6))
def test_entropy_unitary_invariance_and_range(seed, d):
    rng = np.random.default_rng(seed)
    rho = random_rho(d, rng, rank=int(rng.integers(1, d + 1)))
    u = haar_unitary(d, rng)
    h = qmat.von_neumann_entropy(rho)
    assert abs(qmat.von_neumann_entropy(u @ rho @ u.conj().T) - h) <= 1e-9
    assert -1e-12 <= h <= np.log2(d) + 1e-12


@settings(max_examples=40, deadline=None)
@given(seed=seeds)
def test_entropy_additive_on_products(seed):
    rng = np.random.default_rng(seed)
    r1, r2 = random_rho(2, rng), random_rho(3, rng)
    joint = qmat.von_neumann_entropy(np.kron(r1, r2))
    assert abs(joint - qmat.von_neumann_entropy(r1) - qmat.von_neumann_entropy(r2)) <= 1e-9


@settings(max_examples=30, deadline=None)
@given(seed=seeds)
def test_entropy_concavity(seed):
    rng = np.random.default_rng(seed)
    r1, r2 = random_rho(3, rng, rank=1), random_rho(3, rng)
    h1, h2 = qmat.von_neumann_entropy(r1), qmat.von_neumann_entropy(r2)
    for lam in np.linspace(0, 1, 11):
        mix = qmat.von_neumann_entropy(lam * r1 + (1 - lam) * r2)
        assert mix >= lam * h1 + (1 - lam) * h2 - 1e-9


def test_binary_entropy_values():
    assert qmat.binary_entropy(0.5) == 1.0
    assert qmat.binary_entropy(0.0) == 0.0
    assert qmat.binary_entropy(1.0) == 0.0
    assert abs(qmat.binary_entropy(0.25) - mp_binary_entropy("0.25")) <= 1e-14
    with pytest.raises(ValueError):
        qmat.binary_entropy(1.1)


@given(x=st.floats(0, 1))
def test_binary_entropy_symmetric(x):
    assert abs(qmat.binary_entropy(x) - qmat.binary_entropy(1 - x)) <= 1e-12


def test_tensor_product_examples():
    np.testing.assert_array_equal(qmat.tensor_product(np.eye(2), np.eye(2)), np.eye(4))
    np.testing.assert_array_equal(qmat.tensor_product(np.diag([1, 0]), np.diag([2, 3])), np.diag([2, 3, 0, 0]))


def test_tensor_product_mixed_product_rule():
    rng = np.random.default_rng(0)
    a, b, c, d = (rng.standard_normal((2, 2)) + 1j * rng.standard_normal((2, 2)) for _ in range(4))
    lhs = qmat.tensor_product(a, b) @ qmat.tensor_product(c, d)
    np.testing.assert_allclose(lhs, qmat.tensor_product(a @ c, b @ d), atol=1e-12)


def test_tensor_product_concatenates_factors():
    r = qmat.DensityMatrix(np.eye(6) / 6, (2, 3))
    s = qmat.DensityMatrix(np.eye(2) / 2)
    out = qmat.tensor_product(r, s)
    assert isinstance(out, qmat.DensityMatrix)
    assert out.dims == (2, 3, 2)
    v = qmat.tensor_product(qmat.PureState([1, 0]), qmat.PureState([0, 1, 0]))
    assert v.dims == (2, 3)


def test_partial_trace_examples():
    rng = np.random.default_rng(1)
    ra, rb = random_rho(2, rng), random_rho(3, rng)
    np.testing.assert_allclose(qmat.partial_trace(np.kron(ra, rb), (2, 3), [0]), ra, atol=1e-14)
    phi = np.array([1, 0, 0, 1]) / np.sqrt(2)
    np.testing.assert_allclose(qmat.partial_trace(np.outer(phi, phi), (2, 2), [0]), np.eye(2) / 2, atol=1e-15)


@settings(max_examples=25, deadline=None)
@given(seed=seeds, dims=st.lists(st.integers(1, 3), min_size=2, max_size=3),
       data=st.data())
def test_partial_trace_matches_index_summation(seed, dims, data):
    rng = np.random.default_rng(seed)
    n = int(np.prod(dims))
    rho = random_rho(n, rng)
    keep = data.draw(st.sets(st.integers(0, len(dims) - 1), min_size=1))
    got = qmat.partial_trace(rho, dims, keep)
    np.testing.assert_allclose(got, dense_partial_trace(rho, dims, keep), atol=1e-12)
    assert abs(np.trace(got) - 1.0) <= 1e-12


def test_partial_trace_order_independence():
    rng = np.random.default_rng(2)
    dims = (2, 3, 2)
    rho = random_rho(12, rng)
    a = qmat.partial_trace(qmat.partial_trace(rho, dims, [0, 1]), (2, 3), [0])
    b = qmat.partial_trace(qmat.partial_trace(rho, dims, [0, 2]), (2, 2), [0])
    np.testing.assert_allclose(a, b, atol=1e-12)
    np.testing.assert_allclose(a, dense_partial_trace(rho, dims, [0]), atol=1e-12)


def test_partial_trace_is_linear():
    rng = np.random.default_rng(3)
    x, y = random_rho(6, rng), random_rho(6, rng)
    lhs = qmat.partial_trace(0.3 * x - 1.7 * y, (2, 3), [1])
    rhs = 0.3 * qmat.partial_trace(x, (2, 3), [1]) - 1.7 * qmat.partial_trace(y, (2, 3), [1])
    np.testing.assert_allclose(lhs, rhs, atol=1e-12)


def test_partial_trace_errors():
    with pytest.raises(DimensionError):
        qmat.partial_trace(np.eye(4) / 4, None, [0])
    with pytest.raises(DimensionError):
        qmat.partial_trace(np.eye(4) / 4, (2, 2), [2])
    with pytest.raises(DimensionError):
        qmat.partial_trace(np.eye(4) / 4, (2, 2), [])
    with pytest.raises(DimensionError):
        qmat.partial_trace(np.eye(4) / 4, (2, 3), [0])


def test_density_matrix_partial_trace_method():
    rho = qmat.DensityMatrix(np.kron(np.diag([0.75, 0.25]), np.eye(3) / 3), (2, 3))
    marginal = rho.partial_trace([0])
    assert marginal.dims == (2,)
    np.testing.assert_allclose(marginal.matrix, np.diag([0.75, 0.25]), atol=1e-15)


def test_permute_factors_roundtrip():
    rng = np.random.default_rng(4)
    a, b = random_rho(2, rng), random_rho(3, rng)
    swapped = qmat.permute_factors(np.kron(a, b), (2, 3), (1, 0))
    np.testing.assert_allclose(swapped, np.kron(b, a), atol=1e-15)
    v, w = rng.standard_normal(2), rng.standard_normal(3)
    np.testing.assert_allclose(qmat.permute_factors(np.kron(v, w), (2, 3), (1, 0)), np.kron(w, v))


def test_hermitian_eig_examples():
    s = qmat.hermitian_eig(np.diag([3.0, 1.0]))
    np.testing.assert_allclose(s.eigenvalues, [3, 1])
    np.testing.assert_allclose(np.abs(s.eigenvectors), np.eye(2), atol=1e-15)
    s = qmat.hermitian_eig(np.array([[0, 1], [1, 0]]))
    np.testing.assert_allclose(s.eigenvalues, [1, -1], atol=1e-15)
    with pytest.raises(InvalidStateError):
        qmat.hermitian_eig(np.array([[0, 1], [0, 0]]))


@pytest.mark.parametrize("method", ["lapack", "jacobi"])
def test_hermitian_eig_reconstruction(method):
    for seed in range(10):
        m = qmat.random_hermitian(8, seed=seed)
        s = qmat.hermitian_eig(m, method=method)
        assert np.linalg.norm(m - s.reconstruct()) <= 1e-10 * np.linalg.norm(m)
        q = s.eigenvectors
        assert np.abs(q.conj().T @ q - np.eye(8)).max() <= 1e-10
        assert np.all(np.diff(s.eigenvalues) <= 0)


def test_jacobi_agrees_with_lapack():
    for seed in range(10):
        m = qmat.random_hermitian(6, seed=100 + seed)
        w, _ = qmat.jacobi_eigh(m)
        np.testing.assert_allclose(w, np.linalg.eigvalsh(m), atol=1e-12)


def test_purify_examples():
    rng = np.random.default_rng(5)
    v = rng.standard_normal(3) + 0j
    v /= np.linalg.norm(v)
    p = qmat.purify(np.outer(v, v.conj()))
    assert p.dims == (3, 1)
    assert abs(abs(np.vdot(p.vec, v)) - 1) <= 1e-12
    p = qmat.purify(np.eye(2) / 2)
    assert p.dims == (2, 2)
    np.testing.assert_allclose(qmat.partial_trace(p.projector(), p.dims, [1]), np.eye(2) / 2, atol=1e-12)


@settings(max_examples=30, deadline=None)
@given(seed=seeds, d=st.integers(1, 5), data=st.data())
def test_purify_roundtrip(seed, d, data):
    rank = data.draw(st.integers(1, d))
    rho = qmat.random_density(d, rank, seed=seed)
    p = qmat.purify(rho)
    assert p.dims == (d, rank)
    assert np.linalg.norm(qmat.partial_trace(p.projector(), p.dims, [0]) - rho) <= 1e-10


def test_random_objects_are_seeded():
    np.testing.assert_array_equal(qmat.random_unitary(4, seed=9), qmat.random_unitary(4, seed=9))
    assert not np.allclose(qmat.random_unitary(4, seed=9), qmat.random_unitary(4, seed=10))
    v = qmat.haar_isometry(6, 3, seed=1)
    np.testing.assert_allclose(v.conj().T @ v, np.eye(3), atol=1e-13)
    assert qmat.rank(qmat.random_density(5, 2, seed=0)) == 2


def test_density_matrix_is_immutable_and_validated():
    rho = qmat.DensityMatrix(np.eye(2) / 2)
    with pytest.raises(ValueError):
        rho.matrix[0, 0] = 1
    with pytest.raises(DimensionError):
        qmat.DensityMatrix(np.eye(4) / 4, (2, 3))
    with pytest.raises(InvalidStateError):
        qmat.PureState([1, 1])


def test_dimension_cap():
    with override(max_dim=8):
        with pytest.raises(DimensionError):
            qmat.DensityMatrix(np.eye(9) / 9)


def test_tolerance_override_restores():
    before = qmat.TOL.trace
    with override(trace=0.5):
        qmat.DensityMatrix(np.eye(2) * 0.6)
    assert qmat.TOL.trace == before
    with pytest.raises(KeyError):
        with override(nope=1):
            pass


def test_matrix_log2():
    np.testing.assert_allclose(qmat.matrix_log2(np.diag([0.5, 0.25])), np.diag([-1.0, -2.0]), atol=1e-15)
    with pytest.raises(InvalidStateError):
        qmat.matrix_log2(np.diag([1.0, 0.0]))


def test_json_roundtrip():
    rho = qmat.DensityMatrix(qmat.random_density(4, seed=2), (2, 2))
    back = qmat.density_from_json(json.loads(json.dumps(qmat.density_to_json(rho))))
    np.testing.assert_array_equal(back.matrix, rho.matrix)
    assert back.dims == (2, 2)
    v = qmat.PureState(qmat.random_pure_state(3, seed=1))
    data = qmat.pure_to_json(v)
    assert set(data) == {"dims", "vec"}
    np.testing.assert_array_equal(qmat.pure_from_json(data).vec, v.vec)
    assert qmat.complex_to_json(1 - 2j) == [1.0, -2.0]
