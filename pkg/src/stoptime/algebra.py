"""Finite-dimensional *-algebras of matrices.

A subalgebra of M_n is stored as a Hilbert-Schmidt orthonormal basis of
matrices. Membership, projection and commutants are all linear algebra on
the flattened (row-major) basis vectors.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import ClosureDidNotConverge, DimensionMismatch, NotProjection
from .kernel import (
    DEFAULT_TOL,
    Tolerance,
    as_cmatrix,
    dagger,
    nullspace,
    op_norm,
    orthonormal_columns,
    projection_defects,
)


def _span_basis(mats: np.ndarray, n: int, tol: Tolerance) -> np.ndarray:
    """HS-orthonormal basis (k, n, n) of the span of a stack of matrices."""
    cols = orthonormal_columns(mats.reshape(len(mats), n * n).T, tol)
    return np.ascontiguousarray(cols.T.reshape(-1, n, n))


@dataclass(frozen=True, eq=False)
class MatrixAlgebra:
    """Unital *-subalgebra of M_n given by an HS-orthonormal basis.

    ``basis`` has shape ``(dim, n, n)``.
    """

    basis: np.ndarray
    tol: Tolerance = DEFAULT_TOL

    @property
    def dim(self) -> int:
        return self.basis.shape[0]

    @property
    def ambient_dim(self) -> int:
        return self.basis.shape[1]

    @property
    def _flat(self) -> np.ndarray:
        return self.basis.reshape(self.dim, -1)

    def coords(self, x) -> np.ndarray:
        """HS coordinates of the orthogonal projection of ``x``."""
        x = np.asarray(x, dtype=complex)
        return np.conj(self._flat) @ x.reshape(-1)

    def from_coords(self, c) -> np.ndarray:
        n = self.ambient_dim
        return (np.asarray(c) @ self._flat).reshape(n, n)

    def project(self, x) -> np.ndarray:
        """Hilbert-Schmidt orthogonal projection onto the algebra."""
        return self.from_coords(self.coords(x))

    def residual(self, x) -> float:
        x = np.asarray(x, dtype=complex)
        return float(np.linalg.norm(x - self.project(x)))

    def contains(self, x) -> bool:
        x = np.asarray(x, dtype=complex)
        scale = max(1.0, float(np.linalg.norm(x)))
        return self.residual(x) <= self.tol.eq_tol * scale

    def __contains__(self, x) -> bool:
        return self.contains(x)

    def is_subalgebra_of(self, other: "MatrixAlgebra") -> bool:
        return all(other.contains(b) for b in self.basis)

    def same_as(self, other: "MatrixAlgebra") -> bool:
        """Subspace equality by mutual containment."""
        return (
            self.dim == other.dim
            and self.is_subalgebra_of(other)
            and other.is_subalgebra_of(self)
        )

    def random_element(self, rng: np.random.Generator, hermitian: bool = False):
        c = rng.standard_normal(self.dim) + 1j * rng.standard_normal(self.dim)
        x = self.from_coords(c)
        if hermitian:
            x = 0.5 * (x + dagger(x))
        return x

    def closure_defect(self) -> float:
        """Largest violation of unit / adjoint / product closure."""
        n = self.ambient_dim
        worst = self.residual(np.eye(n))
        for b in self.basis:
            worst = max(worst, self.residual(dagger(b)))
        prods = np.einsum("iab,jbc->ijac", self.basis, self.basis)
        for p in prods.reshape(-1, n, n):
            worst = max(worst, self.residual(p))
        return worst


def generate_subalgebra(
    ambient_dim: int,
    generators: Sequence = (),
    tol: Tolerance = DEFAULT_TOL,
) -> MatrixAlgebra:
    """Smallest unital *-algebra in M_n containing ``generators``.

    Adjoin adjoints and pairwise products, re-span, and repeat until the
    dimension stops growing.
    """
    n = int(ambient_dim)
    gens = []
    for i, g in enumerate(generators):
        g = as_cmatrix(g)
        if g.shape != (n, n):
            raise DimensionMismatch(
                f"generator {i} has shape {g.shape}, expected {(n, n)}"
            )
        gens.append(g)
        gens.append(dagger(g))
    seed = np.stack([np.eye(n, dtype=complex)] + gens)
    basis = _span_basis(seed, n, tol)

    for _ in range(2 * n * n):
        prods = np.einsum("iab,jbc->ijac", basis, basis).reshape(-1, n, n)
        grown = _span_basis(np.concatenate([basis, prods]), n, tol)
        if grown.shape[0] == basis.shape[0]:
            return MatrixAlgebra(grown, tol)
        basis = grown
    raise ClosureDidNotConverge(
        f"closure loop did not stabilise after {2 * n * n} rounds"
    )


def full_matrix_algebra(n: int, tol: Tolerance = DEFAULT_TOL) -> MatrixAlgebra:
    units = np.eye(n * n, dtype=complex).reshape(n * n, n, n)
    return MatrixAlgebra(units, tol)


def commutation_matrix(ops: Sequence[np.ndarray]) -> np.ndarray:
    """Stacked matrix of ``vec(x) -> vec(x b - b x)`` over ``ops`` (row-major vec)."""
    ops = list(ops)
    n = ops[0].shape[0]
    eye = np.eye(n)
    blocks = [np.kron(eye, b.T) - np.kron(b, eye) for b in ops]
    return np.concatenate(blocks, axis=0)


def commutant(S: MatrixAlgebra) -> MatrixAlgebra:
    """All matrices in M_n commuting with every element of ``S``."""
    n = S.ambient_dim
    ker = nullspace(commutation_matrix(S.basis), S.tol)
    basis = _span_basis(ker.T.reshape(-1, n, n), n, S.tol)
    return MatrixAlgebra(basis, S.tol)


@dataclass(frozen=True, eq=False)
class ProjectionElement:
    p: np.ndarray

    @property
    def rank(self) -> int:
        return int(round(np.trace(self.p).real))


def validate_projection(p, tol: Tolerance = DEFAULT_TOL) -> ProjectionElement:
    """Wrap ``p`` after checking ``p^2 = p = p*`` to within ``eq_tol``."""
    p = as_cmatrix(p)
    if p.shape[0] != p.shape[1]:
        raise NotProjection(f"projection must be square, got {p.shape}")
    idem, herm = projection_defects(p)
    scale = max(1.0, op_norm(p))
    if idem > tol.eq_tol * scale or herm > tol.eq_tol * scale:
        raise NotProjection(
            f"not a projection: ||p^2 - p|| = {idem:.3e}, ||p - p*|| = {herm:.3e}",
            idempotence=idem,
            hermiticity=herm,
        )
    return ProjectionElement(p)
