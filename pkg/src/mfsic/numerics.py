"""Minimal dense complex linear algebra used by every filter computation.

Complex vectors and matrices are plain numpy ``complex128`` arrays
throughout the library; nothing here wraps them.  All system matrices the
detectors build have the form ``G @ G.conj().T + sigma2 * I`` with
``sigma2 > 0``, so positive-definiteness is structural and a Cholesky
factorization is always applicable.  A factorization failure therefore
indicates a configuration bug and is surfaced, never papered over.
"""

import numpy as np
from scipy.linalg import cho_factor, cho_solve

__all__ = ["hermitian_solve", "mat_vec", "sq_norm"]


def hermitian_solve(a, b):
    """Solve ``a @ x = b`` for Hermitian positive-definite ``a``.

    Parameters
    ----------
    a : (n, n) complex ndarray
        Hermitian positive-definite matrix.  Only one triangle is read.
    b : (n,) or (n, k) complex ndarray
        Right-hand side; several right-hand sides may be stacked as
        columns.

    Returns
    -------
    x : ndarray with the shape of `b`

    Raises
    ------
    ValueError
        If `a` is not square or the dimensions do not match.
    numpy.linalg.LinAlgError
        If a Cholesky pivot fails (loss of positive-definiteness).
    """
    a = np.asarray(a)
    b = np.asarray(b)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {a.shape}")
    if b.shape[0] != a.shape[0]:
        raise ValueError(
            f"dimension mismatch: matrix is {a.shape[0]}x{a.shape[1]}, "
            f"right-hand side has leading dimension {b.shape[0]}"
        )
    c = cho_factor(a, lower=True, check_finite=False)
    return cho_solve(c, b, check_finite=False)


def mat_vec(a, x):
    """Matrix-vector product ``a @ x`` with an explicit dimension check."""
    a = np.asarray(a)
    x = np.asarray(x)
    if a.ndim != 2 or a.shape[1] != x.shape[0]:
        raise ValueError(
            f"dimension mismatch: matrix is {a.shape}, vector has length {x.shape[0]}"
        )
    return a @ x


def sq_norm(x):
    """Squared Euclidean norm ``sum(|x_i|^2)`` of a complex vector."""
    x = np.asarray(x)
    return float(np.real(np.vdot(x, x)))
