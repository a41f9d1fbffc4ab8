"""Stopping times, time projections and stopped martingales.

A stopping time is a grid-indexed increasing family of projections ``q_t``
with ``q_t`` in ``A_t``, ``q_0 = 0`` and terminal value 1. Everything here
acts on the GNS space: ``q_t`` through left multiplication, ``P_t`` as the
projection onto the embedded ``A_t``.

The time projection ``M(u)`` is computed two ways:

* as the partition sum ``sum_i (q_{t_i} - q_{t_{i-1}}) P_{t_i}`` on the
  finest partition of ``[0, u]`` (the net is decreasing, so on a finite grid
  the finest partition is its limit), and
* as the lattice meet of ``q_u - q_t (1 - P_t)`` over grid points ``t <= u``.

Horizons, time points and partitions are given by grid *labels*; an index
into the grid is used internally.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .algebra import validate_projection
from .errors import (
    ConsistencyError,
    InvalidPartition,
    MonotonicityViolation,
    NotAMartingale,
    NotProjection,
    OperandNotProjection,
    ValidationError,
)
from .filtration import Filtration
from .kernel import (
    DEFAULT_TOL,
    Tolerance,
    dagger,
    eig_hermitian,
    kernel_basis,
    op_norm,
    projection_defects,
    range_projector,
)


# ---------------------------------------------------------------------------
# projection lattice


def _check_operands(projections, tol, exc=NotProjection):
    mats = [np.asarray(p, dtype=complex) for p in projections]
    if not mats:
        raise ValueError("need at least one projection")
    for k, p in enumerate(mats):
        idem, herm = projection_defects(p)
        if idem > tol.eq_tol or herm > tol.eq_tol:
            raise exc(
                f"operand {k} is not a projection "
                f"(||p^2 - p|| = {idem:.3e}, ||p - p*|| = {herm:.3e})",
                idempotence=idem,
                hermiticity=herm,
            )
    return mats


def meet(projections: Sequence, tol: Tolerance = DEFAULT_TOL) -> np.ndarray:
    """Projection onto the intersection of the ranges.

    The intersection is the kernel of ``sum_i (1 - P_i)``, found with one
    Hermitian eigendecomposition.
    """
    mats = _check_operands(projections, tol)
    eye = np.eye(mats[0].shape[0])
    total = sum(eye - p for p in mats)
    p = range_projector(kernel_basis(total, tol))
    return 0.5 * (p + dagger(p))


def join(projections: Sequence, tol: Tolerance = DEFAULT_TOL) -> np.ndarray:
    """Projection onto the span of the ranges, ``1 - meet(1 - P_i)``."""
    mats = _check_operands(projections, tol)
    eye = np.eye(mats[0].shape[0])
    return eye - meet([eye - p for p in mats], tol)


def alternating_meet(projections: Sequence, iterations: int = 2000) -> np.ndarray:
    """Meet by iterating the product of the projections.

    ``(P_1 ... P_k)^m`` converges to the meet. Only used as an independent
    cross-check; convergence slows down when ranges are nearly aligned.
    """
    mats = [np.asarray(p, dtype=complex) for p in projections]
    prod = mats[0]
    for p in mats[1:]:
        prod = prod @ p
    cycle = dagger(prod) @ prod
    out = np.linalg.matrix_power(cycle, iterations)
    return 0.5 * (out + dagger(out))


def loewner_leq(a, b, tol: Tolerance = DEFAULT_TOL) -> bool:
    """``a <= b`` in the operator order, to within ``rank_tol``."""
    w, _ = eig_hermitian(np.asarray(b) - np.asarray(a), tol)
    return bool(w[0] >= -tol.rank_tol)


# ---------------------------------------------------------------------------
# stopping times


@dataclass(frozen=True, eq=False)
class StoppingTime:
    """``tau = (q_t)`` over the grid of ``filtration``.

    ``q`` holds ambient-space matrices, one per grid point. All the
    definitional requirements are enforced on construction.
    """

    filtration: Filtration
    q: tuple
    _cache: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        F = self.filtration
        tol = F.tol
        qs = tuple(np.asarray(p, dtype=complex) for p in self.q)
        object.__setattr__(self, "q", qs)
        pts = F.grid.points
        n = F.gns.algebra.ambient_dim
        if len(qs) != len(pts):
            raise ValidationError(f"{len(qs)} projections for {len(pts)} grid points")
        for t, p in zip(pts, qs):
            if p.shape != (n, n):
                raise ValidationError(f"q at t={t} has shape {p.shape}, expected {(n, n)}")
            try:
                validate_projection(p, tol)
            except NotProjection as exc:
                raise ValidationError(f"q at t={t} is not a projection: {exc}") from exc
        if op_norm(qs[0]) > tol.eq_tol:
            raise ValidationError("q_0 = 0 violated")
        for i in range(len(qs) - 1):
            w, _ = eig_hermitian(qs[i + 1] - qs[i], tol)
            if w[0] < -tol.rank_tol:
                raise ValidationError(f"q not increasing at t={pts[i + 1]}")
        for t, p, alg in zip(pts, qs, F.algebras):
            if not alg.contains(p):
                raise ValidationError(f"adaptedness violated at t={t}: q_t is not in A_t")
        if op_norm(qs[-1] - np.eye(n)) > tol.eq_tol:
            raise ValidationError("terminal q is not the identity")

    @property
    def tol(self) -> Tolerance:
        return self.filtration.tol

    @property
    def grid(self):
        return self.filtration.grid

    @property
    def horizons(self) -> tuple:
        """Admissible horizons: every grid point after 0."""
        return self.grid.points[1:]

    def q_at(self, t) -> np.ndarray:
        return self.q[self.grid.index(t)]

    @property
    def lq(self) -> tuple:
        """``q_t`` acting on H, per grid index."""
        if "lq" not in self._cache:
            g = self.filtration.gns
            mats = []
            for p in self.q:
                m = g.left_mult(p, check=False)
                mats.append(0.5 * (m + dagger(m)))
            self._cache["lq"] = tuple(mats)
        return self._cache["lq"]

    def memo(self, key, build):
        if key not in self._cache:
            self._cache[key] = build()
        return self._cache[key]


def deterministic_stopping_time(F: Filtration, s) -> StoppingTime:
    """``q_t = 0`` for ``t < s`` and ``1`` from ``s`` on."""
    k = F.grid.index(s)
    if k == 0:
        raise ValidationError("a stopping time cannot jump at t = 0")
    n = F.gns.algebra.ambient_dim
    zero, one = np.zeros((n, n), dtype=complex), np.eye(n, dtype=complex)
    return StoppingTime(F, tuple(one if i >= k else zero for i in range(len(F.grid))))


# ---------------------------------------------------------------------------
# partitions


def make_partition(tau: StoppingTime, labels: Iterable) -> tuple:
    """Validate a partition given by grid labels; return grid indices."""
    idx = []
    for t in labels:
        try:
            idx.append(tau.grid.index(t))
        except KeyError as exc:
            raise InvalidPartition(f"{t} is not a grid point") from exc
    idx = tuple(idx)
    if len(idx) < 2:
        raise InvalidPartition("a partition needs 0 and a positive horizon")
    if idx[0] != 0:
        raise InvalidPartition("a partition must start at 0")
    if any(b <= a for a, b in zip(idx, idx[1:])):
        raise InvalidPartition("partition points must be strictly increasing")
    return idx


def finest_partition(tau: StoppingTime, u) -> tuple:
    k = tau.grid.index(u)
    if k == 0:
        raise InvalidPartition("horizon must be a positive grid point")
    return tuple(range(k + 1))


def refinement_chain(tau: StoppingTime, u) -> list:
    """``{0, u}`` refined one interior point at a time up to the finest partition."""
    k = tau.grid.index(u)
    if k == 0:
        raise InvalidPartition("horizon must be a positive grid point")
    chain = []
    for m in range(k):
        chain.append(tuple(range(m + 1)) + (k,))
    return chain


def all_partitions(tau: StoppingTime, u) -> list:
    k = tau.grid.index(u)
    interior = range(1, k)
    out = []
    for r in range(len(interior) + 1):
        for sub in itertools.combinations(interior, r):
            out.append((0,) + sub + (k,))
    return out


def _partition_sum(tau: StoppingTime, idx: tuple) -> np.ndarray:
    lq, P = tau.lq, tau.filtration.projections
    m = sum((lq[b] - lq[a]) @ P[b] for a, b in zip(idx, idx[1:]))
    return 0.5 * (m + dagger(m))


def partition_projection(tau: StoppingTime, theta) -> np.ndarray:
    """``M_theta(u) = sum_i (q_{t_i} - q_{t_{i-1}}) P_{t_i}``; ``u`` is the last point.

    ``theta`` is a sequence of grid labels. The result is checked to be a
    projection.
    """
    idx = make_partition(tau, theta)
    m = _partition_sum(tau, idx)
    validate_projection(m, tau.tol)
    return m


def time_projection_net(tau: StoppingTime, u, check_chain: bool = True) -> np.ndarray:
    """Time projection as the limit of the decreasing partition net.

    Returns the finest-partition operator. With ``check_chain`` the
    operators along :func:`refinement_chain` are verified to decrease.
    """
    k = tau.grid.index(u)

    def build():
        chain = refinement_chain(tau, u)
        ops = [_partition_sum(tau, idx) for idx in chain]
        for op in ops:
            validate_projection(op, tau.tol)
        if check_chain:
            for a, b, idx in zip(ops, ops[1:], chain[1:]):
                if not loewner_leq(b, a, tau.tol):
                    raise MonotonicityViolation(
                        f"refining to {[tau.grid.points[i] for i in idx]} increased M"
                    )
        return ops[-1]

    return tau.memo(("net", k), build)


def meet_operands(tau: StoppingTime, u) -> list:
    """``q_u - q_t (1 - P_t)`` for every grid point ``t <= u``."""
    k = tau.grid.index(u)
    lq, P = tau.lq, tau.filtration.projections
    eye = np.eye(P[0].shape[0])
    return [lq[k] - lq[i] @ (eye - P[i]) for i in range(k + 1)]


def time_projection_meet(tau: StoppingTime, u) -> np.ndarray:
    """Time projection as the meet over ``t <= u`` of ``q_u - q_t (1 - P_t)``."""
    k = tau.grid.index(u)
    if k == 0:
        raise InvalidPartition("horizon must be a positive grid point")

    def build():
        ops = meet_operands(tau, u)
        _check_operands(ops, tau.tol, exc=OperandNotProjection)
        return meet(ops, tau.tol)

    return tau.memo(("meet", k), build)


def closed_operands(tau: StoppingTime) -> list:
    """``(1 - q_t) + q_t P_t`` for every grid point."""
    lq, P = tau.lq, tau.filtration.projections
    eye = np.eye(P[0].shape[0])
    return [eye - lq[i] + lq[i] @ P[i] for i in range(len(lq))]


def time_projection_closed(tau: StoppingTime) -> np.ndarray:
    """Closed-horizon time projection, ``meet_t((1 - q_t) + q_t P_t)``."""

    def build():
        ops = closed_operands(tau)
        _check_operands(ops, tau.tol, exc=OperandNotProjection)
        return meet(ops, tau.tol)

    return tau.memo("closed", build)


def complement_defect(tau: StoppingTime, u) -> float:
    """``||(q_u - M(u)) - join_{t <= u} q_t (1 - P_t)||``."""
    k = tau.grid.index(u)
    lq, P = tau.lq, tau.filtration.projections
    eye = np.eye(P[0].shape[0])
    parts = [lq[i] @ (eye - P[i]) for i in range(k + 1)]
    parts = [0.5 * (p + dagger(p)) for p in parts]
    lhs = lq[k] - time_projection_meet(tau, u)
    return op_norm(lhs - join(parts, tau.tol))


def complement_identity(tau: StoppingTime, u) -> bool:
    return complement_defect(tau, u) <= 10 * tau.tol.eq_tol


def fixed_vector_check(tau: StoppingTime, u, xi) -> tuple:
    """Evaluate both sides of the fixed-vector characterisation.

    ``lhs``: ``M(u) xi = q_u xi``. ``rhs``: ``q_t P_t xi = q_t xi`` for all
    ``t <= u``. The two must always agree.
    """
    k = tau.grid.index(u)
    xi = np.asarray(xi, dtype=complex)
    lim = tau.tol.eq_tol * max(1.0, float(np.linalg.norm(xi)))
    lq, P = tau.lq, tau.filtration.projections
    M = time_projection_meet(tau, u)
    lhs = float(np.linalg.norm(M @ xi - lq[k] @ xi)) <= lim
    rhs = all(
        float(np.linalg.norm(lq[i] @ (P[i] @ xi) - lq[i] @ xi)) <= lim
        for i in range(k + 1)
    )
    return lhs, rhs


def commutation_defect(tau: StoppingTime, s) -> float:
    P = tau.filtration.projections[tau.grid.index(s)]
    M = time_projection_closed(tau)
    return op_norm(P @ M - M @ P)


def commutation_check(tau: StoppingTime, s) -> bool:
    """``P_s M = M P_s`` for the closed-horizon time projection."""
    return commutation_defect(tau, s) <= 10 * tau.tol.eq_tol


# ---------------------------------------------------------------------------
# martingales


def martingale_defect(F: Filtration, vectors: np.ndarray) -> float:
    """Largest violation of ``xi(t) in H_t`` and ``P_s xi(t) = xi(s)``."""
    P = F.projections
    worst = 0.0
    for t, v in enumerate(vectors):
        worst = max(worst, float(np.linalg.norm(P[t] @ v - v)))
        for s in range(t):
            worst = max(worst, float(np.linalg.norm(P[s] @ v - vectors[s])))
    return worst


@dataclass(frozen=True, eq=False)
class MartingaleVec:
    """Vectors ``xi(t_0), ..., xi(t_k)`` in H; the horizon is ``t_k``."""

    filtration: Filtration
    vectors: np.ndarray

    def __post_init__(self):
        vecs = np.atleast_2d(np.asarray(self.vectors, dtype=complex))
        object.__setattr__(self, "vectors", vecs)
        F = self.filtration
        if vecs.shape[0] > len(F.grid) or vecs.shape[1] != F.gns.dim:
            raise NotAMartingale(f"vector array has shape {vecs.shape}")
        scale = max(1.0, float(np.abs(vecs).max()))
        defect = martingale_defect(F, vecs)
        if defect > F.tol.eq_tol * 10 * scale:
            raise NotAMartingale(f"martingale relations violated by {defect:.3e}")

    @classmethod
    def closed(cls, F: Filtration, xi, upto=None) -> "MartingaleVec":
        """``xi(t) = P_t xi``; ``upto`` is a grid label (default: terminal)."""
        k = F.grid.last if upto is None else F.grid.index(upto)
        P = F.projections
        xi = np.asarray(xi, dtype=complex)
        return cls(F, np.stack([P[i] @ xi for i in range(k + 1)]))

    @property
    def horizon_index(self) -> int:
        return self.vectors.shape[0] - 1

    def at(self, t) -> np.ndarray:
        return self.vectors[self.filtration.grid.index(t)]


def riemann_stopped_sum(tau: StoppingTime, xi: MartingaleVec, idx: tuple) -> np.ndarray:
    """``sum_i (q_{t_i} - q_{t_{i-1}}) xi(t_i)`` over partition indices ``idx``."""
    lq = tau.lq
    return sum((lq[b] - lq[a]) @ xi.vectors[b] for a, b in zip(idx, idx[1:]))


def stop_martingale(tau: StoppingTime, xi: MartingaleVec, u=None) -> np.ndarray:
    """Stopped element ``M(u) xi(u)``.

    The Riemann-type sum over the finest partition is computed as well and
    must agree with it.
    """
    if xi.filtration is not tau.filtration:
        raise NotAMartingale("martingale and stopping time use different filtrations")
    k = xi.horizon_index if u is None else tau.grid.index(u)
    if k > xi.horizon_index:
        raise NotAMartingale(f"martingale only defined up to index {xi.horizon_index}")
    u_label = tau.grid.points[k]
    stopped = time_projection_meet(tau, u_label) @ xi.vectors[k]
    direct = riemann_stopped_sum(tau, xi, finest_partition(tau, u_label))
    scale = max(1.0, float(np.linalg.norm(xi.vectors[k])))
    gap = float(np.linalg.norm(stopped - direct))
    if gap > 10 * tau.tol.eq_tol * scale:
        raise ConsistencyError(f"stopped sum and M(u) xi(u) differ by {gap:.3e}")
    return stopped


def stop_open_martingale(tau: StoppingTime, xi: MartingaleVec) -> np.ndarray:
    """Stop a martingale through ``eta(t) = M xi(t)`` and return ``eta(t_N)``.

    On a finite grid the boundedness hypothesis on ``eta`` holds
    automatically, so it is not enforced.
    """
    F = tau.filtration
    if xi.horizon_index != F.grid.last:
        raise NotAMartingale("an open martingale must be given on the whole grid")
    M = time_projection_closed(tau)
    eta = xi.vectors @ M.T
    scale = max(1.0, float(np.abs(xi.vectors).max()))
    lim = 10 * tau.tol.eq_tol * scale
    defect = martingale_defect(F, eta)
    if defect > lim:
        raise NotAMartingale(f"eta fails the martingale relations by {defect:.3e}")
    for k in range(1, len(F.grid)):
        Mk = time_projection_meet(tau, F.grid.points[k])
        gap = float(np.linalg.norm(Mk @ eta[k] - Mk @ xi.vectors[k]))
        if gap > lim:
            raise ConsistencyError(f"M(t) eta(t) != M(t) xi(t) at index {k} ({gap:.3e})")
    final = eta[-1]
    closed = stop_martingale(tau, xi)
    gap = float(np.linalg.norm(final - closed))
    if gap > lim:
        raise ConsistencyError(f"limit of eta differs from the stopped value by {gap:.3e}")
    return final
