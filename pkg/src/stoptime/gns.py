"""Faithful states and the GNS representation.

Coordinates on H are chosen so the GNS inner product ``<xW, yW> = w(x* y)``
is the standard one: the HS basis of the algebra is re-orthonormalised in
the state inner product, and ``xW`` is the coefficient vector of ``x`` in
that basis. GNS adjoints are then plain conjugate transposes.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .algebra import MatrixAlgebra
from .errors import DimensionMismatch, NotFaithful, NotInAlgebra, StateNotNormalized
from .kernel import DEFAULT_TOL, Tolerance, as_cmatrix, dagger, eig_hermitian


@dataclass(frozen=True, eq=False)
class FaithfulState:
    """State ``w(x) = tr(rho x)`` with a strictly positive density matrix."""

    rho: np.ndarray
    tol: Tolerance = DEFAULT_TOL

    def __post_init__(self):
        rho = as_cmatrix(self.rho)
        w, _ = eig_hermitian(rho, self.tol)
        tr = np.trace(rho)
        if abs(tr - 1.0) > self.tol.eq_tol:
            raise StateNotNormalized(f"trace(rho) = {tr:.12g}, expected 1")
        if w[0] <= self.tol.rank_tol:
            raise NotFaithful(f"rho has eigenvalue {w[0]:.3e} <= rank_tol")
        object.__setattr__(self, "rho", 0.5 * (rho + dagger(rho)))

    def __call__(self, x) -> complex:
        return complex(np.trace(self.rho @ np.asarray(x, dtype=complex)))

    @classmethod
    def product(cls, factors, tol: Tolerance = DEFAULT_TOL) -> "FaithfulState":
        """Tensor product of per-factor densities (1-D input means a diagonal)."""
        rho = np.ones((1, 1), dtype=complex)
        for f in factors:
            f = np.asarray(f, dtype=complex)
            if f.ndim == 1:
                f = np.diag(f)
            rho = np.kron(rho, f)
        return cls(rho, tol)


@dataclass(frozen=True, eq=False)
class GnsSpace:
    """GNS Hilbert space of ``(algebra, state)`` in orthonormal coordinates.

    ``frame`` holds matrices ``f_k`` (shape ``(d, n, n)``) with
    ``w(f_j* f_k) = delta_jk``; a vector ``c`` in H stands for
    ``sum_k c_k f_k`` applied to the cyclic vector.
    """

    algebra: MatrixAlgebra
    state: FaithfulState
    frame: np.ndarray
    gram_factor: np.ndarray
    omega_vec: np.ndarray
    min_singular: float
    _weighted: np.ndarray = field(repr=False)

    @property
    def dim(self) -> int:
        return self.frame.shape[0]

    @property
    def tol(self) -> Tolerance:
        return self.algebra.tol

    def _check_member(self, x) -> np.ndarray:
        x = as_cmatrix(x)
        if x.shape != self.frame.shape[1:]:
            raise DimensionMismatch(f"shape {x.shape} does not match the algebra")
        if not self.algebra.contains(x):
            raise NotInAlgebra(
                f"element lies outside the algebra (residual {self.algebra.residual(x):.3e})"
            )
        return x

    def embed(self, x, check: bool = True) -> np.ndarray:
        """Coordinates of ``x`` applied to the cyclic vector."""
        x = self._check_member(x) if check else np.asarray(x, dtype=complex)
        return np.conj(self._weighted) @ x.reshape(-1)

    def embed_many(self, xs: np.ndarray) -> np.ndarray:
        """Columns are the embeddings of ``xs[k]`` (no membership check)."""
        xs = np.asarray(xs, dtype=complex)
        return np.conj(self._weighted) @ xs.reshape(len(xs), -1).T

    def unembed(self, v) -> np.ndarray:
        """Inverse of :meth:`embed`; the embedding is onto, so this always exists."""
        n = self.algebra.ambient_dim
        return (np.asarray(v, dtype=complex) @ self.frame.reshape(self.dim, -1)).reshape(n, n)

    def left_mult(self, a, check: bool = True) -> np.ndarray:
        """Matrix of ``xW -> (a x)W`` on H."""
        a = self._check_member(a) if check else np.asarray(a, dtype=complex)
        moved = np.einsum("ab,kbc->kac", a, self.frame).reshape(self.dim, -1)
        return np.conj(self._weighted) @ moved.T

    def state_value(self, x, check: bool = True) -> complex:
        if check:
            self._check_member(x)
        return self.state(x)

    def inner(self, u, v) -> complex:
        return complex(np.vdot(u, v))


def build_gns(algebra: MatrixAlgebra, state: FaithfulState) -> GnsSpace:
    """Build H, the cyclic vector and the embedding for ``(algebra, state)``."""
    tol = algebra.tol
    n = algebra.ambient_dim
    if state.rho.shape != (n, n):
        raise DimensionMismatch(
            f"state acts on dimension {state.rho.shape[0]}, algebra on {n}"
        )
    B = algebra.basis
    rho = state.rho
    # gram[j, k] = w(b_j* b_k) = tr(b_j* b_k rho)
    brho = np.einsum("kab,bc->kac", B, rho)
    gram = np.conj(B.reshape(len(B), -1)) @ brho.reshape(len(B), -1).T
    w, v = eig_hermitian(gram, Tolerance(eq_tol=max(tol.eq_tol, 1e-12), rank_tol=tol.rank_tol))
    if w[0] <= tol.rank_tol:
        raise NotFaithful(
            f"state is not faithful on the algebra (Gram eigenvalue {w[0]:.3e})"
        )
    inv_sqrt = (v / np.sqrt(w)) @ dagger(v)
    frame = np.einsum("jk,jab->kab", inv_sqrt, B)
    # weighted[k] = f_k rho, so that w(f_k* x) = vdot(f_k rho, x)
    weighted = np.einsum("kab,bc->kac", frame, rho).reshape(len(B), -1)
    omega = np.conj(weighted) @ np.eye(n, dtype=complex).reshape(-1)
    norm = np.vdot(omega, omega).real
    if abs(norm - 1.0) > tol.eq_tol * 10:
        raise StateNotNormalized(f"<W, W> = {norm:.12g}")
    return GnsSpace(
        algebra=algebra,
        state=state,
        frame=frame,
        gram_factor=inv_sqrt,
        omega_vec=omega,
        min_singular=float(np.sqrt(w[0])),
        _weighted=weighted,
    )
