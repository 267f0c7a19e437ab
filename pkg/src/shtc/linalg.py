"""Dense matrix/vector kernels and statistical report helpers.

Everything here is pure: float64 in, float64 out, no hidden state. Matrices
are plain ``np.ndarray`` (2-D, row-major), vectors are 1-D arrays.
"""

from __future__ import annotations

import numpy as np

from .errors import AllZero, BadSize, InsufficientData, NotSymmetric

MAX_EIG_SIZE = 512
_JACOBI_SWEEPS = 50


def covariance(x: np.ndarray) -> np.ndarray:
    """Unbiased sample covariance (divisor N-1) of the rows of ``x``."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] < 2:
        raise InsufficientData("covariance needs a 2-D table with >= 2 rows")
    xc = x - x.mean(axis=0)
    s = xc.T @ xc / (x.shape[0] - 1)
    return 0.5 * (s + s.T)


def sym_eig(s: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Eigendecomposition of a symmetric matrix by cyclic Jacobi rotations.

    Returns ``(eigenvalues, eigenvectors)`` with eigenvalues sorted in
    descending order and eigenvectors as the corresponding columns. The sign
    of each column is fixed so its largest-magnitude entry is positive,
    making the output deterministic across runs.
    """
    s = np.asarray(s, dtype=np.float64)
    if s.ndim != 2 or s.shape[0] != s.shape[1]:
        raise BadSize("sym_eig expects a square matrix")
    n = s.shape[0]
    if n > MAX_EIG_SIZE:
        raise BadSize(f"sym_eig supports sizes up to {MAX_EIG_SIZE}, got {n}")
    scale = max(1.0, float(np.abs(s).max(initial=0.0)))
    if float(np.abs(s - s.T).max(initial=0.0)) > 1e-9 * scale:
        raise NotSymmetric("input is not symmetric within 1e-9")

    a = 0.5 * (s + s.T)
    v = np.eye(n)
    norm = np.linalg.norm(a)
    tol = 1e-12 * max(1.0, norm)
    for _ in range(_JACOBI_SWEEPS):
        off = np.sqrt(max(0.0, np.sum(a * a) - np.sum(np.diag(a) ** 2)))
        if off <= tol:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[p, q]
                if abs(apq) <= 1e-300:
                    continue
                theta = (a[q, q] - a[p, p]) / (2.0 * apq)
                if abs(theta) > 1e150:
                    t = 0.5 / theta
                else:
                    sign = 1.0 if theta >= 0 else -1.0
                    t = sign / (abs(theta) + np.sqrt(theta * theta + 1.0))
                c = 1.0 / np.sqrt(t * t + 1.0)
                sn = t * c
                col_p = a[:, p].copy()
                col_q = a[:, q].copy()
                a[:, p] = c * col_p - sn * col_q
                a[:, q] = sn * col_p + c * col_q
                row_p = a[p, :].copy()
                row_q = a[q, :].copy()
                a[p, :] = c * row_p - sn * row_q
                a[q, :] = sn * row_p + c * row_q
                a[p, q] = 0.0
                a[q, p] = 0.0
                vp = v[:, p].copy()
                vq = v[:, q].copy()
                v[:, p] = c * vp - sn * vq
                v[:, q] = sn * vp + c * vq

    evals = np.diag(a).copy()
    order = np.argsort(-evals, kind="stable")
    evals = evals[order]
    v = v[:, order]
    # Deterministic sign: first occurrence of the largest |entry| made positive.
    for j in range(n):
        k = int(np.argmax(np.abs(v[:, j])))
        if v[k, j] < 0:
            v[:, j] = -v[:, j]
    return evals, v


def pearson_abs(x: np.ndarray) -> np.ndarray:
    """Absolute Pearson correlation matrix of the columns of ``x``.

    Constant columns get 0 off-diagonal by convention; the diagonal is
    always 1.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] < 2:
        raise InsufficientData("pearson_abs needs a 2-D table with >= 2 rows")
    xc = x - x.mean(axis=0)
    sd = np.sqrt(np.mean(xc * xc, axis=0))
    const = sd == 0.0
    denom = np.where(const, 1.0, sd)
    z = xc / denom
    corr = np.abs(z.T @ z / x.shape[0])
    corr[const, :] = 0.0
    corr[:, const] = 0.0
    np.fill_diagonal(corr, 1.0)
    return np.clip(corr, 0.0, 1.0)


def energy_per_channel(x: np.ndarray) -> np.ndarray:
    """Per-channel mean-square energy, normalized to sum to 1."""
    x = np.asarray(x, dtype=np.float64)
    if x.size == 0:
        raise InsufficientData("energy_per_channel needs a nonempty table")
    if x.ndim == 1:
        x = x[None, :]
    e = np.mean(x * x, axis=0)
    total = e.sum()
    if total == 0.0:
        raise AllZero("all-zero table has no energy distribution")
    return e / total


def dct_matrix(n: int) -> np.ndarray:
    """Orthonormal DCT-II analysis matrix (rows are basis functions)."""
    if n < 1:
        raise BadSize("dct_matrix needs n >= 1")
    j = np.arange(n)
    k = np.arange(n)[:, None]
    m = np.cos(np.pi * (2 * j + 1) * k / (2 * n))
    m *= np.sqrt(2.0 / n)
    m[0, :] = np.sqrt(1.0 / n)
    return m


def haar_matrix(n: int) -> np.ndarray:
    """Single-level Haar analysis matrix: n/2 lowpass rows, then n/2 highpass.

    Requires an even size (n=1 degenerates to identity).
    """
    if n < 1:
        raise BadSize("haar_matrix needs n >= 1")
    if n == 1:
        return np.array([[1.0]])
    if n % 2 != 0:
        raise BadSize(f"haar_matrix needs an even size, got {n}")
    half = n // 2
    m = np.zeros((n, n))
    r = 1.0 / np.sqrt(2.0)
    for i in range(half):
        m[i, 2 * i] = r
        m[i, 2 * i + 1] = r
        m[half + i, 2 * i] = r
        m[half + i, 2 * i + 1] = -r
    return m
