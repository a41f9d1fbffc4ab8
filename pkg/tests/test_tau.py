import numpy as np
import pytest

from stoptime.errors import NotInBTau
from stoptime.fixtures import build_fixture, load_fixture
from stoptime.kernel import op_norm
from stoptime.stopping import deterministic_stopping_time, time_projection_closed
from stoptime.tau import (
    compute_a_tau,
    compute_b_tau,
    finite_horizon_expectation,
    partition_expectation,
    partition_forms,
    tau_expectation_limit,
    verify_tau_expectation,
)

from conftest import E11, FIXTURE_DIR, I2, kron

FIXTURES = FIXTURE_DIR
Z = np.diag([1.0, -1.0])
SX = np.array([[0.0, 1.0], [1.0, 0.0]])


def test_b_tau_dimensions(f1):
    assert compute_b_tau(f1.tau).dim == 8
    det = deterministic_stopping_time(f1.filtration, 1)
    assert compute_b_tau(det).dim == 16
    rank_one = load_fixture(FIXTURES / "explicit_generators.json")
    assert compute_b_tau(rank_one.tau).dim == 2


def test_a_tau_dimensions(f1):
    A = compute_a_tau(f1.tau)
    assert A.dim == 5
    assert A.contains(kron(I2, Z) - kron(E11, Z))
    assert not A.contains(kron(I2, Z))


def test_a_tau_deterministic(small_corpus):
    for fx in small_corpus[:6]:
        F = fx.filtration
        for s in F.grid.points[1:]:
            det = deterministic_stopping_time(F, s)
            assert compute_a_tau(det).algebra.same_as(F.algebras[F.grid.index(s)])
        first = deterministic_stopping_time(F, F.grid.points[1])
        assert compute_a_tau(first).algebra.same_as(F.algebras[1])


def test_partition_range(f1):
    tau = f1.tau
    coarse = compute_a_tau(tau, theta=[0, 2])
    assert coarse.partition == (0, 2)
    B = compute_b_tau(tau)
    rng = np.random.default_rng(0)
    for _ in range(5):
        x = B.algebra.random_element(rng)
        assert coarse.contains(partition_expectation(tau, [0, 2], x))


def test_f1_expectation_example(f1):
    x = kron(I2, Z)
    q1 = kron(E11, I2)
    expected = q1 * (1 / 3) + (np.eye(4) - q1) @ x
    got = partition_expectation(f1.tau, [0, 1, 2], x)
    assert op_norm(got - expected) < 1e-12
    assert op_norm(tau_expectation_limit(f1.tau, x) - expected) < 1e-12


def test_three_forms_agree(f1, small_corpus):
    for fx in [f1] + small_corpus:
        tau = fx.tau
        B = compute_b_tau(tau)
        x = B.algebra.random_element(np.random.default_rng(5))
        left, inside, right = partition_forms(tau, tuple(range(len(tau.grid))), x)
        assert op_norm(left - inside) < 1e-8
        assert op_norm(left - right) < 1e-8


def test_limit_matches_time_projection(f1, small_corpus):
    for fx in [f1] + small_corpus:
        tau = fx.tau
        g = tau.filtration.gns
        M = time_projection_closed(tau)
        x = compute_b_tau(tau).algebra.random_element(np.random.default_rng(6))
        y = tau_expectation_limit(tau, x)
        assert np.linalg.norm(g.embed(y) - M @ g.embed(x)) < 1e-8


def test_not_in_b_tau(f1):
    with pytest.raises(NotInBTau):
        partition_expectation(f1.tau, [0, 1, 2], kron(SX, I2))


def test_deterministic_limit_is_conditional_expectation(f1):
    det = deterministic_stopping_time(f1.filtration, 1)
    x = np.random.default_rng(3).standard_normal((4, 4))
    assert op_norm(tau_expectation_limit(det, x) - f1.filtration.expect(1, x)) < 1e-10


def test_verify_rows_pass(f1, small_corpus):
    for fx in [f1] + small_corpus:
        rows = verify_tau_expectation(fx.tau, seed=1)
        bad = [(r.name, r.residual) for r in rows if not r.passed]
        assert not bad, (fx.name, bad)


def test_finite_horizon_rows_pass(f1, small_corpus):
    for fx in [f1] + small_corpus:
        for u in fx.tau.horizons:
            rows = finite_horizon_expectation(fx.tau, u, seed=2)
            bad = [(r.name, r.residual) for r in rows if not r.passed]
            assert not bad, (fx.name, u, bad)


def test_finite_horizon_f1_first_point(f1):
    names = {r.name for r in finite_horizon_expectation(f1.tau, 1)}
    assert {"compression", "idempotence", "unit_to_q_u"} <= names


def test_explicit_generators_fixture():
    fx = load_fixture(FIXTURES / "explicit_generators.json")
    assert all(r.passed for r in verify_tau_expectation(fx.tau))
    x = np.diag([2.0, 5.0])
    # q = E11 at t=0.5 with A_0.5 the diagonals: E_tau is the identity on B
    assert op_norm(tau_expectation_limit(fx.tau, x) - x) < 1e-12


def test_tau_algebra_contains_units(f1):
    assert compute_a_tau(f1.tau).contains(np.eye(4))
    assert compute_a_tau(f1.tau).contains(kron(E11, I2))
