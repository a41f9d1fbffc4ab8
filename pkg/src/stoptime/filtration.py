"""Time grids, filtrations, the projections P_t and expectations E_t.

Continuous time is modelled by a finite grid. Each grid point carries a
subalgebra A_t; P_t is the orthogonal projection of H onto the embedded
image of A_t and E_t is obtained by pulling P_t back through the embedding.
Existence of an w-preserving expectation is checked, not assumed.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass
from functools import cached_property
from typing import Sequence

import numpy as np

from .algebra import MatrixAlgebra
from .errors import ExpectationDoesNotExist, UnknownTimePoint, ValidationError
from .gns import GnsSpace
from .kernel import batch_min_eigenvalues, dagger, is_psd, op_norm, orthonormal_columns, range_projector

POSITIVITY_SAMPLES = 50


@dataclass(frozen=True)
class TimeGrid:
    points: tuple

    def __post_init__(self):
        pts = tuple(float(t) for t in self.points)
        if len(pts) < 2:
            raise ValidationError("a time grid needs at least two points")
        if pts[0] != 0.0:
            raise ValidationError(f"time grid must start at 0, got {pts[0]}")
        if any(b <= a for a, b in zip(pts, pts[1:])):
            raise ValidationError("time grid must be strictly increasing")
        object.__setattr__(self, "points", pts)

    def __len__(self):
        return len(self.points)

    def __iter__(self):
        return iter(self.points)

    @property
    def last(self) -> int:
        return len(self.points) - 1

    def index(self, t) -> int:
        """Grid index of label ``t``."""
        t = float(t)
        for i, p in enumerate(self.points):
            if p == t:
                return i
        raise UnknownTimePoint(f"{t} is not a grid point")


@dataclass(frozen=True, eq=False)
class ConditionalExpectation:
    """``E_t`` as a linear map; ``map_matrix`` acts on GNS coordinates."""

    t: float
    map_matrix: np.ndarray
    target: MatrixAlgebra
    gns: GnsSpace

    def __call__(self, x) -> np.ndarray:
        g = self.gns
        return g.unembed(self.map_matrix @ g.embed(x, check=False))


@dataclass(frozen=True, eq=False)
class Filtration:
    gns: GnsSpace
    grid: TimeGrid
    algebras: tuple

    def __post_init__(self):
        algs = tuple(self.algebras)
        object.__setattr__(self, "algebras", algs)
        if len(algs) != len(self.grid):
            raise ValidationError(
                f"{len(algs)} algebras for a grid of {len(self.grid)} points"
            )
        for i, (a, b) in enumerate(zip(algs, algs[1:])):
            if not a.is_subalgebra_of(b):
                raise ValidationError(
                    f"filtration not increasing between t={self.grid.points[i]} "
                    f"and t={self.grid.points[i + 1]}"
                )
        for i, a in enumerate(algs):
            if not a.is_subalgebra_of(self.gns.algebra):
                raise ValidationError(f"A_t at t={self.grid.points[i]} is not inside A")
        if not self.gns.algebra.is_subalgebra_of(algs[-1]):
            raise ValidationError("terminal algebra is not the whole algebra")

    @property
    def tol(self):
        return self.gns.tol

    def algebra_at(self, t) -> MatrixAlgebra:
        return self.algebras[self.grid.index(t)]

    @cached_property
    def projections(self) -> tuple:
        """P_t for every grid index."""
        out = []
        for alg in self.algebras:
            cols = orthonormal_columns(self.gns.embed_many(alg.basis), self.tol)
            p = range_projector(cols)
            out.append(0.5 * (p + dagger(p)))
        return tuple(out)

    @cached_property
    def expectations(self) -> tuple:
        return tuple(
            _build_expectation(self, i) for i in range(len(self.grid))
        )

    def expect(self, i: int, x) -> np.ndarray:
        """E_{t_i} x by grid index (no invariant checks)."""
        return self.expectations[i](x)


def hilbert_projection(F: Filtration, t) -> np.ndarray:
    """P_t: projection of H onto the closure of A_t applied to the cyclic vector."""
    return F.projections[F.grid.index(t)]


def _build_expectation(F: Filtration, i: int) -> ConditionalExpectation:
    g = F.gns
    tol = F.tol
    target = F.algebras[i]
    E = ConditionalExpectation(F.grid.points[i], F.projections[i], target, g)
    t = F.grid.points[i]

    def fail(what):
        raise ExpectationDoesNotExist(
            f"no w-preserving conditional expectation onto A_t at t={t}: {what}"
        )

    one = np.eye(g.algebra.ambient_dim, dtype=complex)
    if op_norm(E(one) - one) > tol.eq_tol * 10:
        fail("not unital")
    images = [E(b) for b in g.algebra.basis]
    for y in images:
        if not target.contains(y):
            fail(f"range leaves A_t (residual {target.residual(y):.3e})")
    for b, y in zip(g.algebra.basis, images):
        if abs(g.state(y) - g.state(b)) > tol.eq_tol * 10:
            fail("state not preserved")
    rng = np.random.default_rng(i)
    samples = list(g.algebra.basis) + [
        g.algebra.random_element(rng) for _ in range(POSITIVITY_SAMPLES)
    ]
    lam = batch_min_eigenvalues([E(dagger(x) @ x) for x in samples], tol)
    if lam.min() < -tol.rank_tol:
        fail(f"not positive (scaled eigenvalue {lam.min():.3e})")
    return E


def conditional_expectation(F: Filtration, t) -> ConditionalExpectation:
    """E_t with ``(E_t x)W = P_t(xW)``.

    Raises :class:`ExpectationDoesNotExist` when the pulled-back map fails
    unitality, range, state invariance or positivity.
    """
    return F.expectations[F.grid.index(t)]


def expectation_matrix_defect(E: ConditionalExpectation) -> float:
    """``||E^2 - E||`` in GNS coordinates."""
    m = E.map_matrix
    return op_norm(m @ m - m)


def check_tower(F: Filtration, s, t) -> bool:
    """``E_t E_s = E_s E_t = E_{min(s, t)}`` in GNS coordinates."""
    i, j = F.grid.index(s), F.grid.index(t)
    Ps, Pt, Pm = F.projections[i], F.projections[j], F.projections[min(i, j)]
    lim = 10 * F.tol.eq_tol
    return op_norm(Pt @ Ps - Pm) <= lim and op_norm(Ps @ Pt - Pm) <= lim


def complete_positivity_check(F: Filtration, t) -> bool:
    """Positivity of the block matrix ``[E_t(b_i* b_j)]`` over the basis of A.

    This is optional: a failure only warns, since nothing downstream needs
    more than positivity.
    """
    E = conditional_expectation(F, t)
    B = F.gns.algebra.basis
    blocks = [[E(dagger(bi) @ bj) for bj in B] for bi in B]
    big = np.block(blocks)
    ok, lam = is_psd(big, F.tol)
    if not ok:
        warnings.warn(
            f"E_t at t={t} failed the block positivity check (eigenvalue {lam:.3e})",
            stacklevel=2,
        )
    return ok


def closed_martingale(F: Filtration, xi, upto: int | None = None) -> np.ndarray:
    """Rows ``P_t xi`` for grid indices ``0..upto``."""
    upto = F.grid.last if upto is None else upto
    xi = np.asarray(xi, dtype=complex)
    return np.stack([F.projections[i] @ xi for i in range(upto + 1)])


def build_filtration(gns: GnsSpace, grid: Sequence, algebras: Sequence) -> Filtration:
    return Filtration(gns, TimeGrid(tuple(grid)), tuple(algebras))
