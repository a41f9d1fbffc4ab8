"""The stopped conditional expectation.

``B`` is the set of elements of A commuting with every ``q_t``; ``A_tau``
is the subalgebra of those whose compressions ``q_t x`` lie in ``A_t``.
On ``B`` the partition maps

    E_theta x = sum_i (q_{t_i} - q_{t_{i-1}}) E_{t_i} x

converge (on a finite grid: equal, at the finest partition) to a
state-preserving conditional expectation onto ``A_tau`` whose GNS image is
the time projection. A finite horizon ``u`` restricts every condition to
``t <= u`` and the range becomes ``q_u A_tau(u) q_u``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .algebra import MatrixAlgebra, commutation_matrix
from .errors import ConsistencyError, GnsMismatch, NotInBTau, PullbackFailed
from .kernel import batch_min_eigenvalues, dagger, nullspace, op_norm, orthonormal_columns
from .report import CheckResult
from .stopping import (
    StoppingTime,
    all_partitions,
    make_partition,
    refinement_chain,
    time_projection_closed,
    time_projection_meet,
)

POSITIVITY_SAMPLES = 50


@dataclass(frozen=True, eq=False)
class TauCommutant:
    """``{x in A : x q_t = q_t x for t <= horizon}``."""

    algebra: MatrixAlgebra
    horizon: float

    @property
    def basis(self):
        return self.algebra.basis

    @property
    def dim(self):
        return self.algebra.dim

    def contains(self, x) -> bool:
        return self.algebra.contains(x)


@dataclass(frozen=True, eq=False)
class TauAlgebra:
    """``{x in B : q_t x in A_t for t in partition}``; ``partition`` holds grid labels."""

    algebra: MatrixAlgebra
    partition: tuple

    @property
    def basis(self):
        return self.algebra.basis

    @property
    def dim(self):
        return self.algebra.dim

    def contains(self, x) -> bool:
        return self.algebra.contains(x)


def _horizon_index(tau: StoppingTime, horizon) -> int:
    return tau.grid.last if horizon is None else tau.grid.index(horizon)


def _subspace(parent: MatrixAlgebra, constraint: np.ndarray) -> MatrixAlgebra:
    """Elements of ``parent`` whose coordinates solve ``constraint @ c = 0``."""
    n = parent.ambient_dim
    tol = parent.tol
    if constraint.shape[0] == 0:
        return parent
    coeffs = nullspace(constraint, tol)
    mats = coeffs.T @ parent.basis.reshape(parent.dim, -1)
    cols = orthonormal_columns(mats.T, tol)
    return MatrixAlgebra(np.ascontiguousarray(cols.T.reshape(-1, n, n)), tol)


def compute_b_tau(tau: StoppingTime, horizon=None) -> TauCommutant:
    """Elements of A commuting with ``q_t`` for every grid point ``t <= horizon``."""
    k = _horizon_index(tau, horizon)

    def build():
        A = tau.filtration.gns.algebra
        n = A.ambient_dim
        C = commutation_matrix(tau.q[: k + 1])
        # columns: image of each basis element under x -> [x, q_t], stacked over t
        constraint = C @ A.basis.reshape(A.dim, n * n).T
        return TauCommutant(_subspace(A, constraint), tau.grid.points[k])

    return tau.memo(("b_tau", k), build)


def compute_a_tau(tau: StoppingTime, theta=None, horizon=None) -> TauAlgebra:
    """``A_tau`` (default) or its partition variant, as a subspace of B.

    With ``theta`` the result is ``B(u) ∩ A_theta`` where ``u`` is the last
    point of ``theta``: the range of the partition map. For the finest
    partition it is ``A_tau(u)`` itself.
    """
    if theta is None:
        k = _horizon_index(tau, horizon)
        idx = tuple(range(k + 1))
    else:
        idx = make_partition(tau, theta)
    k = idx[-1]

    def build():
        B = compute_b_tau(tau, tau.grid.points[k]).algebra
        n = B.ambient_dim
        rows = []
        for i in idx:
            At = tau.filtration.algebras[i]
            moved = np.einsum("ab,kbc->kac", tau.q[i], B.basis).reshape(B.dim, -1).T
            flat = At.basis.reshape(At.dim, -1)
            rows.append(moved - flat.T @ (np.conj(flat) @ moved))
        constraint = np.concatenate(rows, axis=0) if rows else np.zeros((0, B.dim))
        labels = tuple(tau.grid.points[i] for i in idx)
        return TauAlgebra(_subspace(B, constraint), labels)

    return tau.memo(("a_tau", idx), build)


# ---------------------------------------------------------------------------
# partition maps


def _increments(tau: StoppingTime, idx):
    return [(b, tau.q[b] - tau.q[a]) for a, b in zip(idx, idx[1:])]


def partition_forms(tau: StoppingTime, idx: tuple, x) -> tuple:
    """The three expressions of the partition map, by grid indices."""
    F = tau.filtration
    x = np.asarray(x, dtype=complex)
    left = np.zeros_like(x)
    inside = np.zeros_like(x)
    right = np.zeros_like(x)
    for i, dq in _increments(tau, idx):
        ex = F.expect(i, x)
        left += dq @ ex
        inside += F.expect(i, dq @ x)
        right += ex @ dq
    return left, inside, right


def _apply(tau: StoppingTime, idx: tuple, x) -> np.ndarray:
    F = tau.filtration
    out = np.zeros(np.shape(x), dtype=complex)
    for i, dq in _increments(tau, idx):
        out += dq @ F.expect(i, x)
    return out


def partition_expectation(tau: StoppingTime, theta, x, check: bool = True) -> np.ndarray:
    """``E_theta x`` for ``x`` in B (up to the last point of ``theta``).

    With ``check`` the three algebraically equal forms are evaluated and
    compared.
    """
    idx = make_partition(tau, theta)
    x = np.asarray(x, dtype=complex)
    B = compute_b_tau(tau, tau.grid.points[idx[-1]])
    if not B.contains(x):
        raise NotInBTau("element does not commute with the stopping time")
    if not check:
        return _apply(tau, idx, x)
    left, inside, right = partition_forms(tau, idx, x)
    scale = max(1.0, op_norm(x))
    gap = max(op_norm(left - inside), op_norm(left - right))
    if gap > 10 * tau.tol.eq_tol * scale:
        raise ConsistencyError(f"the three forms of the partition map differ by {gap:.3e}")
    return left


def tau_expectation_limit(tau: StoppingTime, x) -> np.ndarray:
    """``E_tau x`` on the finest partition, checked against the time projection.

    Also checks that every partition map along the refinement chain leaves
    the result unchanged.
    """
    g = tau.filtration.gns
    last = tau.grid.points[-1]
    finest = tau.grid.points
    y = partition_expectation(tau, finest, x)
    scale = max(1.0, op_norm(x))
    lim = 10 * tau.tol.eq_tol * scale
    M = time_projection_closed(tau)
    gap = float(np.linalg.norm(g.embed(y, check=False) - M @ g.embed(x, check=False)))
    if gap > lim:
        raise GnsMismatch(f"(E x)W and M(xW) differ by {gap:.3e}")
    for idx in refinement_chain(tau, last):
        again = _apply(tau, idx, y)
        gap = op_norm(again - y)
        if gap > lim:
            raise ConsistencyError(f"partition map moved E_tau x by {gap:.3e}")
    return y


# ---------------------------------------------------------------------------
# verification


def _sample_elements(B: MatrixAlgebra, seed: int, count: int) -> list:
    rng = np.random.default_rng(seed)
    return [B.random_element(rng) for _ in range(count)]


def _checks_partitions(tau: StoppingTime, k: int) -> list:
    parts = all_partitions(tau, tau.grid.points[k])
    if len(parts) > 64:
        parts = refinement_chain(tau, tau.grid.points[k])
    return parts


def verify_tau_expectation(tau: StoppingTime, seed: int = 0) -> list:
    """Check that ``E_tau`` is a state-preserving conditional expectation onto ``A_tau``.

    Returns one :class:`CheckResult` per property. Normality is automatic in
    finite dimensions; faithfulness follows from faithfulness of the state
    together with state invariance, and both ingredients are measured.
    """
    tol = tau.tol
    eq, rk = tol.eq_tol, tol.rank_tol
    F = tau.filtration
    g = F.gns
    state = g.state
    n = g.algebra.ambient_dim
    last = tau.grid.last
    finest = tuple(range(last + 1))
    B = compute_b_tau(tau).algebra
    Atau = compute_a_tau(tau).algebra
    E = lambda x: _apply(tau, finest, x)  # noqa: E731
    images = np.stack([E(b) for b in B.basis])
    out = []

    rng = np.random.default_rng(seed)
    c = rng.standard_normal(B.dim) + 1j * rng.standard_normal(B.dim)
    combo = B.from_coords(c)
    out.append(CheckResult.bound(
        "linearity", op_norm(E(combo) - np.tensordot(c, images, 1)), eq * max(1.0, np.linalg.norm(c))
    ))
    one = np.eye(n, dtype=complex)
    out.append(CheckResult.bound("unitality", op_norm(E(one) - one), eq))

    samples = list(B.basis) + _sample_elements(B, seed, POSITIVITY_SAMPLES)
    squares = [dagger(x) @ x for x in samples]
    lam = batch_min_eigenvalues([E(s) for s in squares], tol)
    out.append(CheckResult.bound("positivity", max(0.0, -float(lam.min())), rk))

    idem = max(op_norm(E(y) - y) for y in images)
    out.append(CheckResult.bound("idempotence", idem, eq))

    into = max(Atau.residual(y) for y in images)
    out.append(CheckResult.bound("range_in_a_tau", into, eq))
    onto = max((op_norm(E(a) - a) for a in Atau.basis), default=0.0)
    out.append(CheckResult.bound("a_tau_in_range", onto, eq))

    inv = max(abs(state(y) - state(b)) for y, b in zip(images, B.basis))
    out.append(CheckResult.bound("state_invariance", inv, eq))

    rho_min = float(np.linalg.eigvalsh(state.rho)[0])
    pos_vals = min(state(E(s)).real for s in squares)
    out.append(CheckResult(
        "faithfulness", bool(rho_min > rk and pos_vals > 0.0), max(0.0, rk - rho_min), rk,
        detail=f"min eig(rho) = {rho_min:.3e}; min w(E(x*x)) = {pos_vals:.3e}",
    ))
    out.append(CheckResult("normality", True, 0.0, 0.0, detail="automatic in finite dimensions"))

    M = time_projection_closed(tau)
    emb = g.embed_many(B.basis)
    Q = orthonormal_columns(emb, tol)
    out.append(CheckResult.bound("norm_one", max(0.0, op_norm(M @ Q) - 1.0), eq))

    gns_gap = float(np.max(np.linalg.norm(g.embed_many(images) - M @ emb, axis=0)))
    out.append(CheckResult.bound("gns_identity", gns_gap, eq))

    forms = absorb = inv_theta = in_b = in_theta = 0.0
    theta_pos = np.inf
    theta_samples = squares[:: max(1, len(squares) // 12)]
    for idx in _checks_partitions(tau, last):
        A_theta = compute_a_tau(tau, [tau.grid.points[i] for i in idx]).algebra
        for b in B.basis:
            left, inside, right = partition_forms(tau, idx, b)
            forms = max(forms, op_norm(left - inside), op_norm(left - right))
            in_b = max(in_b, B.residual(left))
            in_theta = max(in_theta, A_theta.residual(left))
            inv_theta = max(inv_theta, abs(state(left) - state(b)))
        for y in images:
            absorb = max(absorb, op_norm(_apply(tau, idx, y) - y))
        lam = batch_min_eigenvalues([_apply(tau, idx, s) for s in theta_samples], tol)
        theta_pos = min(theta_pos, float(lam.min()))
    out.append(CheckResult.bound("three_forms", forms, 1e-8))
    out.append(CheckResult.bound("partition_range", max(in_b, in_theta), 10 * eq))
    out.append(CheckResult.bound("partition_state", inv_theta, 10 * eq))
    out.append(CheckResult.bound("partition_positive", max(0.0, -theta_pos), rk))
    out.append(CheckResult.bound("absorption", absorb, 1e-8))
    return out


def finite_horizon_expectation(tau: StoppingTime, u, seed: int = 0) -> list:
    """Check the finite-horizon map ``x -> pullback(M(u)(xW))`` on ``B(u)``.

    Its range must be the compression ``q_u A_tau(u) q_u``.
    """
    tol = tau.tol
    eq, rk = tol.eq_tol, tol.rank_tol
    k = tau.grid.index(u)
    g = tau.filtration.gns
    state = g.state
    Bu = compute_b_tau(tau, u).algebra
    Au = compute_a_tau(tau, horizon=u).algebra
    qu = tau.q[k]
    Mu = time_projection_meet(tau, u)

    def E(x):
        v = Mu @ g.embed(x, check=False)
        y = g.unembed(v)
        back = float(np.linalg.norm(g.embed(y, check=False) - v))
        if back > 10 * eq * max(1.0, float(np.linalg.norm(v))):
            raise PullbackFailed(f"M(u)(xW) is not in the embedded algebra ({back:.3e})")
        return y

    images = [E(b) for b in Bu.basis]
    out = []
    comp = max(op_norm(y - qu @ y @ qu) for y in images)
    out.append(CheckResult.bound("compression", comp, 1e-8, horizon=float(u)))
    rng_res = max(Au.residual(y) for y in images)
    out.append(CheckResult.bound("range_in_compressed", rng_res, 1e-8, horizon=float(u)))
    onto = max((op_norm(E(qu @ a @ qu) - qu @ a @ qu) for a in Au.basis), default=0.0)
    out.append(CheckResult.bound("compressed_in_range", onto, 1e-8, horizon=float(u)))
    idem = max(op_norm(E(y) - y) for y in images)
    out.append(CheckResult.bound("idempotence", idem, 1e-8, horizon=float(u)))
    n = Bu.ambient_dim
    out.append(CheckResult.bound("unit_to_q_u", op_norm(E(np.eye(n)) - qu), 1e-8, horizon=float(u)))
    st = max(abs(state(y) - state(qu @ b)) for y, b in zip(images, Bu.basis))
    out.append(CheckResult.bound("state_of_compression", st, 1e-8, horizon=float(u)))
    finest = tuple(range(k + 1))
    sums = max(op_norm(_apply(tau, finest, b) - y) for b, y in zip(Bu.basis, images))
    out.append(CheckResult.bound("partition_sum_agrees", sums, 1e-8, horizon=float(u)))
    samples = list(Bu.basis) + _sample_elements(Bu, seed, POSITIVITY_SAMPLES)
    lam = batch_min_eigenvalues([E(dagger(x) @ x) for x in samples], tol)
    out.append(CheckResult.bound("positivity", max(0.0, -float(lam.min())), rk, horizon=float(u)))
    return out
