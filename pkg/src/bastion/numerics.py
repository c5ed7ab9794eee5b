"""Small dense numerics: Jacobi eigensolver, trapezoid quadrature, RK4.

Matrices handled here are tiny (at most 16x16, usually 4x4 or 6x6), so the
eigensolver works on plain Python lists, which is faster than per-element
numpy indexing at this size.
"""
import math

import numpy as np

from .errors import DimensionError, InsufficientDataError, IntegrationBlowupError

SYM_TOL = 1e-9
OFF_TOL = 1e-12
MAX_EIG_SIZE = 16
MAX_SWEEPS = 100


def _as_square(M):
    M = np.asarray(M, dtype=float)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise DimensionError(f"expected a square matrix, got shape {M.shape}")
    if M.shape[0] > MAX_EIG_SIZE:
        raise DimensionError(f"eigensolver limited to {MAX_EIG_SIZE}x{MAX_EIG_SIZE}, got {M.shape}")
    return M


def symmetrize(M):
    """Return (M + M') / 2 after checking M is symmetric within tolerance."""
    M = _as_square(M)
    scale = max(1.0, float(np.max(np.abs(M))) if M.size else 1.0)
    if M.size and float(np.max(np.abs(M - M.T))) > SYM_TOL * scale:
        raise DimensionError("matrix is not symmetric within tolerance")
    return 0.5 * (M + M.T)


def _jacobi(a, v, tol):
    n = len(a)
    for _ in range(MAX_SWEEPS):
        off = 0.0
        for i in range(n):
            row = a[i]
            for j in range(i + 1, n):
                off += row[j] * row[j]
        if math.sqrt(2.0 * off) < tol:
            return
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[p][q]
                if apq == 0.0:
                    continue
                tau = (a[q][q] - a[p][p]) / (2.0 * apq)
                t = (1.0 if tau >= 0.0 else -1.0) / (abs(tau) + math.sqrt(1.0 + tau * tau))
                c = 1.0 / math.sqrt(1.0 + t * t)
                s = t * c
                for k in range(n):
                    rk = a[k]
                    akp = rk[p]
                    akq = rk[q]
                    rk[p] = c * akp - s * akq
                    rk[q] = s * akp + c * akq
                rp = a[p]
                rq = a[q]
                for k in range(n):
                    apk = rp[k]
                    aqk = rq[k]
                    rp[k] = c * apk - s * aqk
                    rq[k] = s * apk + c * aqk
                for k in range(n):
                    vk = v[k]
                    vkp = vk[p]
                    vkq = vk[q]
                    vk[p] = c * vkp - s * vkq
                    vk[q] = s * vkp + c * vkq


def sym_eig(M, basis=None):
    """Eigen-decomposition of a small symmetric matrix by cyclic Jacobi rotations.

    Parameters
    ----------
    M : array_like, shape (n, n)
        Symmetric matrix (symmetrized by averaging before the solve).
    basis : ndarray, shape (n, n), optional
        Orthogonal warm start, typically the eigenvectors returned by the
        previous call on a slowly varying matrix. Rotations then start from
        ``basis.T @ M @ basis``, which is already nearly diagonal.

    Returns
    -------
    w : ndarray, shape (n,)
        Eigenvalues in ascending order.
    V : ndarray, shape (n, n)
        Orthonormal eigenvectors as columns, ordered like ``w``.
    """
    M = symmetrize(M)
    n = M.shape[0]
    if n == 0:
        return np.zeros(0), np.zeros((0, 0))
    if basis is None:
        V0 = np.eye(n)
        A0 = M
    else:
        V0 = np.asarray(basis, dtype=float)
        A0 = V0.T @ M @ V0
        A0 = 0.5 * (A0 + A0.T)
    tol = OFF_TOL * max(1.0, math.sqrt(float(np.sum(M * M))))
    a = A0.tolist()
    v = [[1.0 if i == j else 0.0 for j in range(n)] for i in range(n)]
    _jacobi(a, v, tol)
    w = np.array([a[i][i] for i in range(n)])
    V = V0 @ np.array(v)
    order = np.argsort(w, kind="stable")
    return w[order], V[:, order]


def sym_min_eig(M):
    """Smallest eigenvalue of a small symmetric matrix."""
    w, _ = sym_eig(M)
    return float(w[0])


class EigenTracker:
    """Warm-started extreme-eigenvalue monitor for a slowly drifting matrix."""

    def __init__(self):
        self._basis = None

    def __call__(self, M):
        basis = self._basis
        if basis is not None and basis.shape[0] != np.shape(M)[0]:
            basis = None
        w, V = sym_eig(M, basis)
        self._basis = V
        return w


def is_positive_definite(M):
    """Cholesky test; cheaper than an eigensolve when only definiteness matters."""
    try:
        np.linalg.cholesky(M)
    except np.linalg.LinAlgError:
        return False
    return True


def trapezoid_accumulate(times, values):
    """Trapezoidal integral of sampled vectors or matrices over the window span.

    ``values[k]`` is the sample at ``times[k]``; the result has the shape of a
    single sample.
    """
    t = np.asarray(times, dtype=float)
    v = np.asarray(values, dtype=float)
    if t.ndim != 1 or t.size < 2:
        raise InsufficientDataError("need at least two samples to integrate")
    if v.shape[0] != t.size:
        raise DimensionError(f"{t.size} times but {v.shape[0]} samples")
    h = np.diff(t)
    if np.any(h <= 0.0):
        raise InsufficientDataError("sample times must be strictly increasing")
    h = h.reshape((-1,) + (1,) * (v.ndim - 1))
    return np.sum(0.5 * h * (v[1:] + v[:-1]), axis=0)


def rk4_step(f, t, y, dt, k1=None):
    """Advance ``y`` by one classical Runge-Kutta step of size ``dt``.

    ``f(t, y)`` returns the state derivative. A precomputed first stage may be
    passed as ``k1``. Raises IntegrationBlowupError naming the first stage
    whose derivative is not finite.
    """
    if not dt > 0.0:
        raise ValueError(f"step size must be positive, got {dt}")
    y = np.asarray(y, dtype=float)
    half = 0.5 * dt
    if k1 is None:
        k1 = f(t, y)
    _check_stage(k1, t, 1)
    k2 = f(t + half, y + half * k1)
    _check_stage(k2, t, 2)
    k3 = f(t + half, y + half * k2)
    _check_stage(k3, t, 3)
    k4 = f(t + dt, y + dt * k3)
    _check_stage(k4, t, 4)
    y_next = y + (dt / 6.0) * (k1 + 2.0 * (k2 + k3) + k4)
    if not np.all(np.isfinite(y_next)):
        raise IntegrationBlowupError(t + dt, 4)
    return y_next


def _check_stage(k, t, stage):
    if not np.all(np.isfinite(k)):
        raise IntegrationBlowupError(t, stage)
