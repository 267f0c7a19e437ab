"""Base-layer transform: fitted KLT with top-M coefficient truncation."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import linalg
from .errors import BadSize, DimMismatch


@dataclass(frozen=True)
class KltModel:
    """Fitted channel transform: column means, orthonormal basis, spectrum.

    ``basis`` holds eigenvectors as columns, ordered by descending
    eigenvalue; ``rank`` is the number of retained (coded) coefficients.
    Immutable after fitting.
    """

    mean: np.ndarray
    basis: np.ndarray
    eigenvalues: np.ndarray
    rank: int

    @property
    def dim(self) -> int:
        return self.mean.shape[0]


def fit_klt(x: np.ndarray, rank: int) -> KltModel:
    """Fit the transform on a table of row vectors, keeping ``rank`` coefficients."""
    x = np.asarray(x, dtype=np.float64)
    d = x.shape[1]
    if not 1 <= rank <= d:
        raise BadSize(f"rank must be in [1, {d}], got {rank}")
    s = linalg.covariance(x)
    evals, v = linalg.sym_eig(s)
    return KltModel(mean=x.mean(axis=0), basis=v, eigenvalues=evals, rank=rank)


def analyze_base(f: np.ndarray, model: KltModel) -> np.ndarray:
    """Project onto the retained basis: first ``rank`` entries of V^T (f - m).

    Accepts a single vector (D,) or a table (N, D).
    """
    f = np.asarray(f, dtype=np.float64)
    if f.shape[-1] != model.dim:
        raise DimMismatch(f"expected last dim {model.dim}, got {f.shape[-1]}")
    return (f - model.mean) @ model.basis[:, : model.rank]


def synthesize_base(theta_p: np.ndarray, model: KltModel) -> np.ndarray:
    """Reconstruct from retained coefficients: V[:, :rank] theta + m."""
    theta_p = np.asarray(theta_p, dtype=np.float64)
    if theta_p.shape[-1] != model.rank:
        raise DimMismatch(f"expected last dim {model.rank}, got {theta_p.shape[-1]}")
    return theta_p @ model.basis[:, : model.rank].T + model.mean


def residual(f: np.ndarray, f_base: np.ndarray) -> np.ndarray:
    """Reconstruction residual f - f_base (what the refinement layer codes)."""
    f = np.asarray(f, dtype=np.float64)
    f_base = np.asarray(f_base, dtype=np.float64)
    if f.shape != f_base.shape:
        raise DimMismatch(f"shape mismatch {f.shape} vs {f_base.shape}")
    return f - f_base
