"""Cyclic Jacobi eigendecomposition of Hermitian matrices and polar factors."""

from __future__ import annotations

import numpy as np

__all__ = ["jacobi_eigh", "unitary_polar"]


def jacobi_eigh(H: np.ndarray, tol: float = 1e-15, max_sweeps: int = 60) -> tuple[np.ndarray, np.ndarray]:
    """Eigen-decompose a Hermitian matrix by cyclic complex Jacobi rotations.

    Each rotation first removes the phase of the pivot ``H[p, q]`` and then
    applies the real symmetric Jacobi rotation that annihilates it.  Pivots
    are visited in row-major order, so results are reproducible.

    Parameters
    ----------
    H : ndarray, shape (m, m)
        Hermitian matrix.
    tol : float
        Sweeps stop once the off-diagonal Frobenius norm is below
        ``tol * ||H||_F``.

    Returns
    -------
    w : ndarray, shape (m,)
        Eigenvalues in ascending order.
    W : ndarray, shape (m, m)
        Unitary matrix whose columns are the matching eigenvectors.
    """
    H = np.array(H, dtype=complex)
    m = H.shape[0]
    if H.shape != (m, m):
        raise ValueError("matrix must be square")
    if np.max(np.abs(H - H.conj().T), initial=0.0) > 1e-10 * max(1.0, np.max(np.abs(H), initial=0.0)):
        raise ValueError("matrix is not Hermitian")
    H = 0.5 * (H + H.conj().T)
    W = np.eye(m, dtype=complex)
    scale = np.linalg.norm(H)
    if scale == 0.0:
        return np.zeros(m), W
    for _ in range(max_sweeps):
        off = np.linalg.norm(H - np.diag(np.diag(H)))
        if off <= tol * scale:
            break
        for p in range(m - 1):
            for q in range(p + 1, m):
                h = H[p, q]
                mag = abs(h)
                if mag <= 1e-300:
                    continue
                phase = h / mag
                tau = (H[q, q].real - H[p, p].real) / (2.0 * mag)
                t = np.sign(tau) / (abs(tau) + np.hypot(1.0, tau)) if tau != 0 else 1.0
                c = 1.0 / np.hypot(1.0, t)
                s = t * c
                # G acts on columns p, q: phase removal diag(1, conj(phase)) then rotation
                G = np.array([[c, s], [-s * np.conj(phase), c * np.conj(phase)]], dtype=complex)
                idx = [p, q]
                H[:, idx] = H[:, idx] @ G
                H[idx, :] = G.conj().T @ H[idx, :]
                W[:, idx] = W[:, idx] @ G
                H[p, q] = 0.0
                H[q, p] = 0.0
    else:
        raise RuntimeError("Jacobi iteration did not converge")
    w = np.real(np.diag(H))
    order = np.argsort(w, kind="stable")
    return w[order], W[:, order]


def unitary_polar(C: np.ndarray) -> np.ndarray:
    """Unitary factor ``U`` of ``C = U P`` with ``P`` Hermitian positive.

    Computed as ``C (C* C)^(-1/2)`` from :func:`jacobi_eigh`.
    """
    C = np.asarray(C, dtype=complex)
    mu, W = jacobi_eigh(C.conj().T @ C)
    if np.min(mu) <= 0.0:
        raise np.linalg.LinAlgError("polar factor undefined for a singular matrix")
    return C @ (W * (1.0 / np.sqrt(mu))) @ W.conj().T
