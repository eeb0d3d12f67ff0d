"""Rank-chi truncated factorizations of dense matrices.

Two routes produce the same :class:`TruncatedFactorization`:

* :func:`tsvd` computes the full SVD and keeps the ``chi`` largest singular
  triplets. The truncation error is optimal (Eckart-Young).
* :func:`rsvd` samples the range of ``A`` with a Gaussian test matrix,
  sharpens it with ``q`` rounds of power iteration and factorizes the small
  projected matrix ``Q^H A``.

Both return exact isometries in ``left`` and ``right_adj``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla

__all__ = [
    "FactorizationError",
    "TruncatedFactorization",
    "RsvdParams",
    "as_matrix",
    "make_rng",
    "tsvd",
    "randomized_range",
    "rsvd",
    "reconstruction_error",
]


class FactorizationError(RuntimeError):
    """Backend SVD failed. ``diagnostics`` describes the offending matrix."""

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = dict(diagnostics or {})


@dataclass
class TruncatedFactorization:
    """``A ~= left @ diag(sigma) @ right_adj``.

    Attributes
    ----------
    left : (m, k) array
        Column isometry.
    sigma : (k,) array
        Singular values, descending, nonnegative.
    right_adj : (k, n) array
        Row isometry.
    discarded_weight : float
        Sum of squares of the dropped singular values. For the randomized
        route only the ``ell - chi`` values that were computed are summed, so
        the number is a lower bound and ``discarded_exact`` is False.
    discarded_exact : bool
    """

    left: np.ndarray
    sigma: np.ndarray
    right_adj: np.ndarray
    discarded_weight: float = 0.0
    discarded_exact: bool = True

    @property
    def rank(self) -> int:
        return int(self.sigma.shape[0])

    @property
    def shape(self) -> tuple[int, int]:
        return (self.left.shape[0], self.right_adj.shape[1])

    def to_dense(self) -> np.ndarray:
        return (self.left * self.sigma) @ self.right_adj

    def trimmed(self, cutoff: float = 0.0) -> "TruncatedFactorization":
        """Drop trailing singular values ``<= cutoff``.

        The dropped weight is added to ``discarded_weight``.
        """
        keep = int(np.count_nonzero(self.sigma > cutoff))
        if keep == self.rank:
            return self
        extra = float(np.sum(self.sigma[keep:] ** 2))
        return TruncatedFactorization(
            self.left[:, :keep],
            self.sigma[:keep],
            self.right_adj[:keep, :],
            self.discarded_weight + extra,
            self.discarded_exact,
        )


@dataclass(frozen=True)
class RsvdParams:
    """Randomized SVD parameters.

    ``oversample`` is the total sample size ``ell`` (not the excess over
    ``rank``). ``None`` picks the default ``ell = 2 * rank``.
    """

    rank: int
    oversample: int | None = None
    power: int = 4
    rng_seed: int = 0

    def __post_init__(self):
        if self.oversample is None:
            object.__setattr__(self, "oversample", 2 * self.rank)
        if self.rank < 1:
            raise ValueError(f"rank must be >= 1, got {self.rank}")
        if self.oversample < self.rank:
            raise ValueError(
                f"oversample ell={self.oversample} must be >= rank chi={self.rank}"
            )
        if self.power < 0:
            raise ValueError(f"power q must be >= 0, got {self.power}")


def as_matrix(A) -> np.ndarray:
    """Validate and return ``A`` as a 2-D float64 or complex128 array."""
    A = np.asarray(A)
    if A.ndim != 2:
        raise ValueError(f"expected a 2-D matrix, got shape {A.shape}")
    if A.shape[0] < 1 or A.shape[1] < 1:
        raise ValueError(f"matrix dimensions must be positive, got {A.shape}")
    if np.iscomplexobj(A):
        A = A.astype(np.complex128, copy=False)
    else:
        A = A.astype(np.float64, copy=False)
    if not np.all(np.isfinite(A)):
        raise ValueError("matrix has non-finite entries")
    return A


def make_rng(seed) -> np.random.Generator:
    """Counter-based generator used for every random test matrix."""
    return np.random.Generator(np.random.Philox(seed))


def _diagnostics(A):
    finite = np.isfinite(A)
    return {
        "shape": list(A.shape),
        "dtype": str(A.dtype),
        "all_finite": bool(finite.all()),
        "max_abs": float(np.max(np.abs(A[finite]))) if finite.any() else None,
    }


def _full_svd(A):
    try:
        return sla.svd(A, full_matrices=False, check_finite=False, lapack_driver="gesdd")
    except np.linalg.LinAlgError:
        pass
    # gesdd occasionally fails where the slower QR-iteration driver succeeds
    try:
        return sla.svd(A, full_matrices=False, check_finite=False, lapack_driver="gesvd")
    except np.linalg.LinAlgError as exc:
        raise FactorizationError(f"SVD did not converge: {exc}", _diagnostics(A)) from exc


def tsvd(A, chi: int) -> TruncatedFactorization:
    """Truncated SVD via the full SVD of ``A``.

    Keeps the ``chi`` largest singular values; ``discarded_weight`` is the
    exact sum of squares of the rest.
    """
    A = as_matrix(A)
    k = min(A.shape)
    if not 1 <= chi <= k:
        raise ValueError(f"rank chi={chi} outside [1, {k}] for shape {A.shape}")
    U, s, Vh = _full_svd(A)
    return TruncatedFactorization(
        U[:, :chi], s[:chi], Vh[:chi, :], float(np.sum(s[chi:] ** 2)), True
    )


def _gaussian(rng, shape, complex_):
    if complex_:
        g = rng.standard_normal(shape + (2,))
        return (g[..., 0] + 1j * g[..., 1]) * np.sqrt(0.5)
    return rng.standard_normal(shape)


def _orth(Y):
    # Householder QR: Q has orthonormal columns even for rank-deficient Y,
    # the missing directions are completed by the reflectors. Calling
    # geqrf/orgqr directly skips forming R, which scipy.linalg.qr always does.
    geqrf, orgqr = sla.lapack.get_lapack_funcs(
        ("geqrf", "ungqr" if np.iscomplexobj(Y) else "orgqr"), (Y,)
    )
    qr, tau, _, info = geqrf(Y, overwrite_a=True)
    if info == 0:
        Q, _, info = orgqr(qr, tau, overwrite_a=True)
    if info != 0:
        raise FactorizationError(f"QR failed (info={info})", _diagnostics(Y))
    return Q


def randomized_range(A, ell: int, q: int = 4, rng_seed=0) -> np.ndarray:
    """Orthonormal basis ``Q`` (m x ell) for a sample of the range of ``(A A^H)^q A``.

    The sample is re-orthonormalized after every product with ``A`` or
    ``A^H`` (``2q + 1`` products in total).
    """
    A = as_matrix(A)
    m, n = A.shape
    if not 1 <= ell <= min(m, n):
        raise ValueError(f"ell={ell} outside [1, {min(m, n)}] for shape {A.shape}")
    if q < 0:
        raise ValueError(f"power q must be >= 0, got {q}")
    rng = make_rng(rng_seed)
    omega = _gaussian(rng, (n, ell), np.iscomplexobj(A))
    Q = _orth(A @ omega)
    AH = A.conj().T
    for _ in range(q):
        Q = _orth(AH @ Q)
        Q = _orth(A @ Q)
    return Q


def rsvd(A, params: RsvdParams) -> TruncatedFactorization:
    """Approximate rank-``chi`` truncated SVD from a randomized range sample."""
    A = as_matrix(A)
    chi, ell = params.rank, params.oversample
    if ell > min(A.shape):
        raise ValueError(f"ell={ell} exceeds min dimension of shape {A.shape}")
    Q = randomized_range(A, ell, params.power, params.rng_seed)
    B = Q.conj().T @ A
    Ub, s, Vh = _full_svd(B)
    return TruncatedFactorization(
        Q @ Ub[:, :chi], s[:chi], Vh[:chi, :], float(np.sum(s[chi:] ** 2)), False
    )


def reconstruction_error(A, F: TruncatedFactorization, norm: str = "frobenius") -> float:
    """``||A - left diag(sigma) right_adj||`` in Frobenius or spectral norm."""
    A = np.asarray(A)
    if A.shape != F.shape:
        raise ValueError(f"factorization shape {F.shape} does not match matrix {A.shape}")
    R = A - F.to_dense()
    if norm == "frobenius":
        return float(np.linalg.norm(R))
    if norm == "spectral":
        return float(np.linalg.norm(R, 2))
    raise ValueError(f"unknown norm {norm!r}")
