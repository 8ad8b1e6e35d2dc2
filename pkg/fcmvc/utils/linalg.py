"""
Dense kernels shared by the three alternating subproblems.

Every subproblem of the solver is an instance of

    max_Q  Tr(Q^T G)   s.t.  Q^T Q = I

whose maximizer is U V^T from the thin SVD of G, with maximum equal to the
sum of singular values of G.
"""
from dataclasses import dataclass

import numpy as np
import scipy.linalg
from loguru import logger
from sklearn.utils.extmath import svd_flip

from fcmvc.errors import DataValidationError, NumericalFailure


@dataclass(frozen=True)
class ThinSvd:
    u: np.ndarray
    sigma: np.ndarray
    vt: np.ndarray

    def reconstruct(self) -> np.ndarray:
        return (self.u * self.sigma) @ self.vt


def check_finite(m, name: str = "matrix") -> np.ndarray:
    """Return `m` as a 2-D float64 array, rejecting empty or non-finite input."""
    arr = np.asarray(m, dtype=np.float64)
    if arr.ndim != 2:
        raise DataValidationError(f"{name} must be 2-D, got shape {arr.shape}")
    if arr.shape[0] < 1 or arr.shape[1] < 1:
        raise DataValidationError(f"{name} must have at least one row and column, got {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise DataValidationError(f"{name} contains NaN or Inf entries")
    return arr


def thin_svd(m) -> ThinSvd:
    """
    Thin SVD `m = u @ diag(sigma) @ vt` with r = min(rows, cols).

    Each column of `u` is flipped (together with the matching row of `vt`) so
    that its largest-magnitude entry is positive; ties go to the lowest row.

    Raises:
        DataValidationError: non-finite or malformed input.
        NumericalFailure: LAPACK failed to converge with both drivers.
    """
    arr = check_finite(m)
    for driver in ("gesdd", "gesvd"):
        try:
            u, sigma, vt = scipy.linalg.svd(
                arr, full_matrices=False, check_finite=False, lapack_driver=driver
            )
            break
        except np.linalg.LinAlgError as e:
            logger.bind(driver=driver, shape=arr.shape, error=str(e)).warning("svd did not converge")
    else:
        raise NumericalFailure(f"SVD failed to converge for matrix of shape {arr.shape}")

    u, vt = svd_flip(u, vt, u_based_decision=True)
    return ThinSvd(u=u, sigma=sigma, vt=vt)


def solve_trace_max(g) -> np.ndarray:
    """Column-orthonormal Q (p x q, p >= q) maximizing Tr(Q^T g)."""
    arr = check_finite(g, "coefficient matrix")
    p, q = arr.shape
    if p < q:
        raise DataValidationError(f"trace maximization needs p >= q, got {p} x {q}")
    svd = thin_svd(arr)
    return svd.u @ svd.vt


def trace_inner(a: np.ndarray, b: np.ndarray) -> float:
    """Tr(a^T b) without forming the product."""
    return float(np.einsum("ij,ij->", a, b))


def orthonormality_error(q: np.ndarray, rows: bool = False) -> float:
    """||Q^T Q - I||_F, or ||Q Q^T - I||_F when `rows` is set."""
    gram = q @ q.T if rows else q.T @ q
    return float(np.linalg.norm(gram - np.eye(gram.shape[0])))


def random_orthonormal(p: int, q: int, rng: np.random.Generator) -> np.ndarray:
    """p x q column-orthonormal matrix from the QR of a Gaussian draw."""
    if p < q:
        raise DataValidationError(f"cannot draw {q} orthonormal columns in dimension {p}")
    qmat, r = np.linalg.qr(rng.standard_normal((p, q)))
    signs = np.sign(np.diag(r))
    signs[signs == 0] = 1.0
    return qmat * signs
