"""Dense complex-matrix primitives and the tolerance policy.

Everything else in the package goes through these helpers for eigen
decompositions, null spaces and norms, so numerical rank decisions are
made in one place.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .errors import NoConvergence, NotHermitian, NotPSD, NotProjection


@dataclass(frozen=True)
class Tolerance:
    """Numerical thresholds.

    eq_tol
        Operator-norm threshold for deciding that two matrices are equal.
    rank_tol
        Eigenvalue / singular value cutoff for rank and kernel decisions.
    """

    eq_tol: float = 1e-9
    rank_tol: float = 1e-8

    def __post_init__(self):
        for name in ("eq_tol", "rank_tol"):
            value = getattr(self, name)
            if not (0.0 < value < 1.0):
                raise ValueError(f"{name} must lie in (0, 1), got {value!r}")


DEFAULT_TOL = Tolerance()


def as_cmatrix(m) -> np.ndarray:
    """Coerce to a finite complex 2-D array."""
    a = np.asarray(m, dtype=complex)
    if a.ndim != 2:
        raise ValueError(f"expected a matrix, got array of shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise ValueError("matrix has non-finite entries")
    return a


def dagger(m: np.ndarray) -> np.ndarray:
    return np.conj(np.swapaxes(m, -1, -2))


def op_norm(m) -> float:
    """Largest singular value (0 for empty matrices)."""
    a = np.asarray(m, dtype=complex)
    if a.size == 0:
        return 0.0
    if a.ndim == 1:
        return float(np.linalg.norm(a))
    return float(np.linalg.norm(a, 2))


def hermiticity_defect(m: np.ndarray) -> float:
    return op_norm(m - dagger(m))


def eig_hermitian(m, tol: Tolerance = DEFAULT_TOL):
    """Eigendecomposition of a Hermitian matrix.

    Returns ``(w, v)`` with ``w`` ascending and the columns of ``v``
    orthonormal. The input is symmetrised before the solver is called, so
    round-off in the anti-Hermitian part does not leak into ``v``.
    """
    a = as_cmatrix(m)
    if a.shape[0] != a.shape[1]:
        raise NotHermitian(f"matrix is not square: {a.shape}")
    defect = hermiticity_defect(a)
    if defect > tol.eq_tol * max(1.0, op_norm(a)):
        raise NotHermitian(f"||M - M*|| = {defect:.3e} exceeds {tol.eq_tol:.1e}")
    a = 0.5 * (a + dagger(a))
    try:
        w, v = np.linalg.eigh(a)
    except np.linalg.LinAlgError as exc:
        raise NoConvergence(str(exc)) from exc
    return w, v


def kernel_basis(m, tol: Tolerance = DEFAULT_TOL) -> np.ndarray:
    """Orthonormal columns spanning the kernel of a PSD Hermitian matrix."""
    w, v = eig_hermitian(m, tol)
    if w.size and w[0] < -tol.rank_tol * max(1.0, abs(w[-1])):
        raise NotPSD(f"smallest eigenvalue {w[0]:.3e} is negative")
    return v[:, w < tol.rank_tol]


def nullspace(m, tol: Tolerance = DEFAULT_TOL) -> np.ndarray:
    """Orthonormal columns spanning ``{x : m x = 0}`` for a rectangular ``m``.

    Singular values below ``rank_tol * max(1, sigma_max)`` count as zero.
    """
    a = np.asarray(m, dtype=complex)
    ncols = a.shape[1]
    if a.shape[0] == 0:
        return np.eye(ncols, dtype=complex)
    # the reduced SVD already returns a square vh for tall input; only
    # wide input needs the full one (and tall commutation matrices would
    # otherwise build a huge unused U)
    _, s, vh = np.linalg.svd(a, full_matrices=a.shape[0] < ncols)
    cutoff = tol.rank_tol * max(1.0, s[0] if s.size else 0.0)
    rank = int(np.sum(s > cutoff))
    return dagger(vh[rank:])


def orthonormal_columns(a, tol: Tolerance = DEFAULT_TOL) -> np.ndarray:
    """Orthonormal basis of the column span, by column-pivoted QR.

    Pivoting makes the output deterministic for a given input, which keeps
    algebra bases reproducible between runs.
    """
    a = np.asarray(a, dtype=complex)
    if a.shape[1] == 0:
        return np.zeros((a.shape[0], 0), dtype=complex)
    q, r, _ = scipy.linalg.qr(a, mode="economic", pivoting=True)
    diag = np.abs(np.diag(r))
    if diag.size == 0 or diag[0] == 0.0:
        return np.zeros((a.shape[0], 0), dtype=complex)
    rank = int(np.sum(diag > tol.rank_tol * max(1.0, diag[0])))
    return q[:, :rank]


def range_projector(cols: np.ndarray) -> np.ndarray:
    """Orthogonal projection onto the span of orthonormal columns."""
    return cols @ dagger(cols)


def projection_defects(p: np.ndarray) -> tuple[float, float]:
    """``(||p^2 - p||, ||p - p*||)``."""
    return op_norm(p @ p - p), hermiticity_defect(p)


def projection_rank(p, tol: Tolerance = DEFAULT_TOL) -> int:
    """Rank of a projection, with the spectral sanity guard.

    Any eigenvalue strictly between ``rank_tol`` and ``1 - rank_tol`` means
    the input is not a projection; that is reported, never rounded.
    """
    w, _ = eig_hermitian(p, tol)
    bad = w[(w > tol.rank_tol) & (w < 1.0 - tol.rank_tol)]
    if bad.size:
        raise NotProjection(f"eigenvalue {bad[0]:.6g} is neither 0 nor 1")
    return int(np.sum(w > 0.5))


def is_psd(m, tol: Tolerance = DEFAULT_TOL) -> tuple[bool, float]:
    """Return ``(ok, smallest eigenvalue)`` for a Hermitian-ish matrix.

    Non-Hermitian input fails outright with the defect reported as a
    negative number, since a positive element must be self-adjoint.
    """
    a = as_cmatrix(m)
    defect = hermiticity_defect(a)
    scale = max(1.0, op_norm(a))
    if defect > tol.eq_tol * scale * 10:
        return False, -defect
    w = np.linalg.eigvalsh(0.5 * (a + dagger(a)))
    return bool(w[0] >= -tol.rank_tol * scale), float(w[0])


def batch_min_eigenvalues(stack, tol: Tolerance = DEFAULT_TOL) -> np.ndarray:
    """Smallest eigenvalue of each Hermitian part in a ``(k, n, n)`` stack.

    Entries whose anti-Hermitian part exceeds the equality tolerance get
    ``-inf`` instead, so a caller testing ``>= -rank_tol`` rejects them.
    """
    a = np.asarray(stack, dtype=complex)
    if len(a) == 0:
        return np.zeros(0)
    herm = 0.5 * (a + dagger(a))
    defect = np.linalg.norm(a - dagger(a), ord=2, axis=(1, 2))
    scale = np.maximum(1.0, np.linalg.norm(a, ord=2, axis=(1, 2)))
    w = np.linalg.eigvalsh(herm)[:, 0] / scale
    w[defect > 10 * tol.eq_tol * scale] = -np.inf
    return w
