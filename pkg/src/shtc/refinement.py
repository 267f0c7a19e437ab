"""Refinement layer: learned linear measurements of the base-layer residual,
decoded by a small stack of unfolded ISTA iterations.

The unfolded decoder keeps ISTA's structure but learns a separate step size
and threshold per channel per layer (stored in raw form: step = exp(a),
threshold = softplus(b), which keeps both in range without projections).
``ista_solve`` is the plain fixed-parameter solver kept as an oracle.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import BadThreshold, DimMismatch, StepTooLarge


def _softplus(x: np.ndarray) -> np.ndarray:
    return np.log1p(np.exp(-np.abs(x))) + np.maximum(x, 0.0)


@dataclass
class RefinementModel:
    """Measurement matrix, dictionary, and per-layer shrinkage parameters.

    measure:    (n_meas, dim) linear analysis map applied to the residual
    dictionary: (dim, n_atoms) synthesis dictionary
    step_raw:   (n_layers, n_atoms), per-channel log step sizes
    thresh_raw: (n_layers, n_atoms), per-channel pre-softplus thresholds
    """

    measure: np.ndarray
    dictionary: np.ndarray
    step_raw: np.ndarray
    thresh_raw: np.ndarray

    @property
    def n_meas(self) -> int:
        return self.measure.shape[0]

    @property
    def dim(self) -> int:
        return self.measure.shape[1]

    @property
    def n_atoms(self) -> int:
        return self.dictionary.shape[1]

    @property
    def n_layers(self) -> int:
        return self.step_raw.shape[0]

    def steps(self) -> np.ndarray:
        return np.exp(self.step_raw)

    def thresholds(self) -> np.ndarray:
        return _softplus(self.thresh_raw)


def init_refinement(
    dim: int,
    n_meas: int,
    n_atoms: int,
    n_layers: int,
    rng: np.random.Generator,
    step_init: float = 0.8,
    thresh_init: float = 0.05,
) -> RefinementModel:
    """Measurement rows: unit-normalized Gaussian. Square dictionaries start
    at (jittered) identity: the residual is modeled as sparse in its own
    coordinates, and a Gaussian start trains far slower at small budgets.
    """
    a = rng.normal(0.0, 1.0 / np.sqrt(dim), size=(n_meas, dim))
    a /= np.linalg.norm(a, axis=1, keepdims=True)
    if n_atoms == dim:
        d = np.eye(dim) + 0.01 * rng.normal(size=(dim, n_atoms))
    else:
        d = rng.normal(0.0, 1.0 / np.sqrt(dim), size=(dim, n_atoms))
    # softplus(b) = thresh_init  =>  b = log(expm1(thresh_init))
    b0 = float(np.log(np.expm1(thresh_init)))
    return RefinementModel(
        measure=a,
        dictionary=d,
        step_raw=np.full((n_layers, n_atoms), np.log(step_init)),
        thresh_raw=np.full((n_layers, n_atoms), b0),
    )


def analyze_refine(r: np.ndarray, model: RefinementModel) -> np.ndarray:
    """Linear measurements y = A r. Accepts (D,) vectors or (N, D) tables."""
    r = np.asarray(r, dtype=np.float64)
    if r.shape[-1] != model.dim:
        raise DimMismatch(f"expected last dim {model.dim}, got {r.shape[-1]}")
    return r @ model.measure.T


def soft_threshold(z: np.ndarray, tau) -> np.ndarray:
    """sign(z) * max(|z| - tau, 0), elementwise."""
    z = np.asarray(z, dtype=np.float64)
    tau = np.asarray(tau, dtype=np.float64)
    if np.any(tau < 0):
        raise BadThreshold("soft threshold must be nonnegative")
    return np.sign(z) * np.maximum(np.abs(z) - tau, 0.0)


def operator_sq_norm(a: np.ndarray, dictionary: np.ndarray, iters: int = 200) -> float:
    """Largest eigenvalue of (AD)^T (AD), by power iteration."""
    g = a @ dictionary
    m = g.T @ g
    v = np.ones(m.shape[0]) / np.sqrt(m.shape[0])
    lam = 0.0
    for _ in range(iters):
        w = m @ v
        lam = float(np.linalg.norm(w))
        if lam == 0.0:
            return 0.0
        v = w / lam
    return lam


def ista_solve(
    y: np.ndarray,
    a: np.ndarray,
    dictionary: np.ndarray,
    gamma: float,
    eta: float,
    iters: int,
) -> np.ndarray:
    """Plain ISTA for  min_b  0.5 ||y - A D b||^2 + gamma ||b||_1.

    Fixed scalar step ``eta`` (must satisfy eta < 2/L with L the squared
    operator norm of AD) and threshold eta*gamma; starts from b = 0.
    """
    y = np.asarray(y, dtype=np.float64)
    lip = operator_sq_norm(a, dictionary)
    if lip > 0 and eta >= 2.0 / lip:
        raise StepTooLarge(f"eta={eta} >= 2/L={2.0 / lip}")
    g = a @ dictionary
    beta = np.zeros(g.shape[1])
    tau = eta * gamma
    for _ in range(iters):
        grad = g.T @ (g @ beta - y)
        beta = soft_threshold(beta - eta * grad, tau)
    return beta


def unfold_synthesize(y: np.ndarray, model: RefinementModel) -> np.ndarray:
    """Decode measurements through the unfolded layers; returns D beta.

    Accepts (n_meas,) vectors or (N, n_meas) tables. beta starts at zero, so
    zero measurements decode to an exactly zero residual.
    """
    y = np.asarray(y, dtype=np.float64)
    if y.shape[-1] != model.n_meas:
        raise DimMismatch(f"expected last dim {model.n_meas}, got {y.shape[-1]}")
    g = model.measure @ model.dictionary
    etas = model.steps()
    taus = model.thresholds()
    beta = np.zeros(y.shape[:-1] + (model.n_atoms,))
    for k in range(model.n_layers):
        grad = (beta @ g.T - y) @ g
        beta = soft_threshold(beta - etas[k] * grad, taus[k])
    return beta @ model.dictionary.T


def param_count(model: RefinementModel) -> int:
    """Number of transmitted refinement parameters."""
    return (
        model.measure.size
        + model.dictionary.size
        + model.step_raw.size
        + model.thresh_raw.size
    )
