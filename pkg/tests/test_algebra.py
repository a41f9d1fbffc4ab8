import numpy as np
import pytest

from stoptime.algebra import (
    commutant,
    full_matrix_algebra,
    generate_subalgebra,
    validate_projection,
)
from stoptime.errors import DimensionMismatch, NotProjection
from stoptime.fixtures import tensor_chain_algebras

from conftest import E11, E12, I2, kron


def test_generate_from_nothing_is_scalars():
    A = generate_subalgebra(2, [])
    assert A.dim == 1
    assert A.contains(3 * np.eye(2))


def test_generate_diagonal():
    A = generate_subalgebra(2, [E11])
    assert A.dim == 2
    assert A.contains(np.diag([5.0, -2.0]))
    assert not A.contains(E12)


def test_generate_full_from_nilpotent():
    A = generate_subalgebra(2, [E12])
    assert A.dim == 4


def test_generate_shape_mismatch():
    with pytest.raises(DimensionMismatch):
        generate_subalgebra(2, [np.eye(3)])


def test_contains_examples():
    assert generate_subalgebra(2, [E11]).contains(E11)
    assert not generate_subalgebra(2, []).contains(E11)
    left = generate_subalgebra(4, [kron(E12, I2)])
    assert not left.contains(kron(E11, E11))
    # HS projection oracle: e11 (x) e11 projects to e11 (x) 1/2, residual 1/sqrt2
    assert np.allclose(left.project(kron(E11, E11)), kron(E11, I2) / 2)
    assert left.residual(kron(E11, E11)) == pytest.approx(1 / np.sqrt(2))


def test_basis_orthonormal_and_closed():
    A = generate_subalgebra(4, [kron(E12, I2), kron(I2, E11)])
    flat = A.basis.reshape(A.dim, -1)
    assert np.allclose(flat.conj() @ flat.T, np.eye(A.dim))
    assert A.closure_defect() < 1e-10
    assert A.dim == 8


def test_commutant_of_scalars():
    assert commutant(generate_subalgebra(3, [])).dim == 9


def test_commutant_of_full_is_scalars():
    C = commutant(full_matrix_algebra(3))
    assert C.dim == 1
    assert C.contains(np.eye(3))


def test_commutant_of_left_factor():
    left = generate_subalgebra(4, [kron(E12, I2)])
    right = generate_subalgebra(4, [kron(I2, E12)])
    C = commutant(left)
    assert C.dim == 4
    assert C.same_as(right)
    assert commutant(C).same_as(left)


@pytest.mark.parametrize("dims", [[2], [3], [2, 2], [2, 3], [2, 2, 2]])
def test_double_commutant_and_commutation(dims):
    for A in tensor_chain_algebras(dims):
        C = commutant(A)
        assert commutant(C).same_as(A)
        for c in C.basis:
            for a in A.basis:
                assert np.linalg.norm(c @ a - a @ c, 2) <= 1e-8


def test_generate_idempotent():
    A = generate_subalgebra(4, [kron(E12, I2), kron(I2, E11)])
    again = generate_subalgebra(4, list(A.basis))
    assert again.same_as(A)


def test_validate_projection():
    validate_projection(np.eye(3))
    with pytest.raises(NotProjection) as info:
        validate_projection(np.diag([1.0, 0.5]))
    assert info.value.idempotence == pytest.approx(0.25)
    v = np.array([1.0, 1.0])
    p = validate_projection(np.outer(v, v) / 2)
    assert p.rank == 1
