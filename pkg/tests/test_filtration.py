import numpy as np
import pytest

from stoptime.algebra import full_matrix_algebra
from stoptime.errors import ExpectationDoesNotExist, UnknownTimePoint, ValidationError
from stoptime.filtration import (
    Filtration,
    TimeGrid,
    build_filtration,
    check_tower,
    complete_positivity_check,
    conditional_expectation,
    expectation_matrix_defect,
    hilbert_projection,
)
from stoptime.fixtures import tensor_chain_algebras
from stoptime.gns import FaithfulState, build_gns
from stoptime.kernel import op_norm

from conftest import I2, RHO2, kron


def slice_right(x, rho2):
    """(id (x) w_2)(x) (x) 1, straight from the tensor indices."""
    t = x.reshape(2, 2, 2, 2)
    out = np.einsum("ijkl,lj->ik", t, rho2)
    return np.kron(out, I2)


def test_terminal_projection_is_identity(f1):
    F = f1.filtration
    assert np.allclose(hilbert_projection(F, 2), np.eye(16))


def test_initial_projection_is_vacuum(f1):
    F = f1.filtration
    w = F.gns.omega_vec
    assert np.allclose(hilbert_projection(F, 0), np.outer(w, w.conj()))


def test_p1_rank(f1):
    assert round(np.trace(hilbert_projection(f1.filtration, 1)).real) == 4


def test_terminal_expectation_identity(f1):
    E = conditional_expectation(f1.filtration, 2)
    x = np.random.default_rng(0).standard_normal((4, 4))
    assert np.allclose(E(x), x)


def test_initial_expectation_is_state(f1):
    F = f1.filtration
    E = conditional_expectation(F, 0)
    x = np.random.default_rng(1).standard_normal((4, 4))
    assert np.allclose(E(x), F.gns.state(x) * np.eye(4))


def test_slice_map_oracle(f1):
    E = conditional_expectation(f1.filtration, 1)
    rng = np.random.default_rng(2)
    for _ in range(5):
        a = rng.standard_normal((2, 2)) + 1j * rng.standard_normal((2, 2))
        b = rng.standard_normal((2, 2)) + 1j * rng.standard_normal((2, 2))
        x = kron(a, b)
        expected = np.trace(RHO2 @ b) * kron(a, I2)
        assert np.max(np.abs(E(x) - expected)) <= 1e-9
        assert np.max(np.abs(E(x) - slice_right(x, RHO2))) <= 1e-9


def test_tower(f1):
    F = f1.filtration
    for s in F.grid:
        for t in F.grid:
            assert check_tower(F, s, t)
    assert check_tower(F, 0, 2)
    assert check_tower(F, 1, 2)


def test_expectation_invariants(f1):
    F = f1.filtration
    for t in F.grid:
        E = conditional_expectation(F, t)
        assert expectation_matrix_defect(E) < 1e-12
        assert complete_positivity_check(F, t)


def test_unknown_time(f1):
    with pytest.raises(UnknownTimePoint):
        hilbert_projection(f1.filtration, 0.5)


def test_projection_properties(f1, small_corpus):
    for F in [f1.filtration] + [fx.filtration for fx in small_corpus]:
        g = F.gns
        P = F.projections
        rng = np.random.default_rng(4)
        for i in range(len(P)):
            for j in range(i):
                assert np.linalg.eigvalsh(P[i] - P[j])[0] >= -1e-8
            for a in F.algebras[i].basis:
                La = g.left_mult(a, check=False)
                assert op_norm(P[i] @ La - La @ P[i]) <= 1e-8
            x = g.algebra.random_element(rng)
            assert np.linalg.norm(P[i] @ g.embed(x) - g.embed(F.expect(i, x))) <= 1e-8
        xi = rng.standard_normal(g.dim) + 1j * rng.standard_normal(g.dim)
        path = [p @ xi for p in P]
        for t in range(len(P)):
            for s in range(t + 1):
                assert np.linalg.norm(P[s] @ path[t] - path[s]) <= 1e-8


def test_entangled_state_has_no_expectation():
    chain = tensor_chain_algebras([2, 2])
    rng = np.random.default_rng(1)
    x = rng.standard_normal((4, 4)) + 1j * rng.standard_normal((4, 4))
    rho = x @ x.conj().T
    g = build_gns(chain[-1], FaithfulState(rho / np.trace(rho)))
    F = build_filtration(g, [0, 1, 2], chain)
    with pytest.raises(ExpectationDoesNotExist):
        conditional_expectation(F, 1)


def test_grid_validation():
    with pytest.raises(ValidationError):
        TimeGrid((1, 2))
    with pytest.raises(ValidationError):
        TimeGrid((0, 2, 1))
    with pytest.raises(ValidationError):
        TimeGrid((0,))


def test_filtration_must_increase():
    chain = tensor_chain_algebras([2, 2])
    g = build_gns(chain[-1], FaithfulState.product([[0.6, 0.4], [0.5, 0.5]]))
    with pytest.raises(ValidationError):
        Filtration(g, TimeGrid((0, 1, 2)), (chain[0], chain[2], chain[1]))
    with pytest.raises(ValidationError):
        Filtration(g, TimeGrid((0, 1)), (chain[0], chain[1]))


def test_full_algebra_helper():
    assert full_matrix_algebra(3).dim == 9
