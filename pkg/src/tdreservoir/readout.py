"""Linear output layer trained by ridge-regularized least squares.

``W_out = D X^T (X X^T + lam I)^-1`` solved through a Cholesky (or symmetric
LU) factorization of the Gram matrix; the inverse is never formed.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np

__all__ = [
    "SingularSystemError",
    "DimensionError",
    "TrainingBatch",
    "ReadoutModel",
    "fit",
    "predict",
    "default_lambda",
    "squared_error",
    "error_gradient",
]

RANK_RTOL = 1e-12
MODEL_HEADER = "wout v1"


class SingularSystemError(np.linalg.LinAlgError):
    """Gram matrix is rank-deficient and no ridge term was given."""


class DimensionError(ValueError):
    pass


@dataclass(frozen=True)
class TrainingBatch:
    X: np.ndarray  # N x T states
    D: np.ndarray  # N_out x T targets

    def __post_init__(self):
        X = np.atleast_2d(np.asarray(self.X, dtype=np.float64))
        D = np.asarray(self.D, dtype=np.float64)
        if D.ndim == 1:
            D = D[None, :]
        if X.shape[1] != D.shape[1]:
            raise DimensionError(f"X has {X.shape[1]} columns but D has {D.shape[1]}")
        if not (np.isfinite(X).all() and np.isfinite(D).all()):
            raise ValueError("training batch contains non-finite entries")
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "D", D)

    @property
    def n_features(self) -> int:
        return self.X.shape[0]

    @property
    def n_samples(self) -> int:
        return self.X.shape[1]


@dataclass(frozen=True, eq=False)
class ReadoutModel:
    W_out: np.ndarray
    ridge_lambda: float = 0.0
    augment_bias: bool = False
    mean: np.ndarray | None = None  # z-score statistics when standardization was used
    scale: np.ndarray | None = None

    def __post_init__(self):
        W = np.atleast_2d(np.asarray(self.W_out, dtype=np.float64))
        if not np.isfinite(W).all():
            raise ValueError("W_out must be finite")
        W.setflags(write=False)
        object.__setattr__(self, "W_out", W)

    @property
    def n_out(self) -> int:
        return self.W_out.shape[0]

    @property
    def n_in(self) -> int:
        """Number of state features expected by :func:`predict` (bias excluded)."""
        return self.W_out.shape[1] - int(self.augment_bias)

    def transform(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        if X.shape[0] != self.n_in:
            raise DimensionError(f"expected {self.n_in} features, got {X.shape[0]}")
        if self.mean is not None:
            shape = (-1,) + (1,) * (X.ndim - 1)
            X = (X - self.mean.reshape(shape)) / self.scale.reshape(shape)
        if self.augment_bias:
            ones = np.ones((1,) + X.shape[1:]) if X.ndim > 1 else np.ones(1)
            X = np.concatenate([X, ones], axis=0)
        return X

    def save(self, path) -> None:
        if self.mean is not None:
            raise NotImplementedError("saving standardized models is not supported")
        n_out, n = self.W_out.shape
        lines = [f"{MODEL_HEADER} {n_out} {n} {self.ridge_lambda!r} {int(self.augment_bias)}"]
        lines += [" ".join(repr(float(x)) for x in row) for row in self.W_out]
        Path(path).write_text("\n".join(lines) + "\n")

    @classmethod
    def load(cls, path) -> "ReadoutModel":
        rows = Path(path).read_text().splitlines()
        head = rows[0].split() if rows else []
        if len(head) != 6 or " ".join(head[:2]) != MODEL_HEADER:
            raise ValueError(f"{path}: not a '{MODEL_HEADER}' model file")
        n_out, n, lam, bias = int(head[2]), int(head[3]), float(head[4]), bool(int(head[5]))
        W = np.array([[float(x) for x in r.split()] for r in rows[1:1 + n_out]], dtype=np.float64)
        if W.shape != (n_out, n):
            raise ValueError(f"{path}: expected {n_out}x{n} matrix, got {W.shape}")
        return cls(W, lam, bias)


def default_lambda(X: np.ndarray) -> float:
    """Relative ridge: 1e-6 times the mean diagonal of the Gram matrix."""
    X = np.asarray(X, dtype=np.float64)
    return 1e-6 * float(np.einsum("ij,ij->", X, X)) / max(X.shape[0], 1)


def fit(batch: TrainingBatch, ridge_lambda: float | None = None, augment_bias: bool = False,
        standardize: bool = False) -> ReadoutModel:
    """Least-squares readout.

    ``ridge_lambda=None`` selects :func:`default_lambda` of the (possibly
    augmented) design matrix.  With ``ridge_lambda=0`` a rank-deficient Gram
    matrix raises :class:`SingularSystemError`.
    """
    X, D = batch.X, batch.D
    mean = scale = None
    if standardize:
        mean = X.mean(axis=1)
        scale = X.std(axis=1)
        scale[scale == 0] = 1.0
        X = (X - mean[:, None]) / scale[:, None]
    if augment_bias:
        X = np.vstack([X, np.ones((1, X.shape[1]))])
    n, t = X.shape
    if t < n:
        warnings.warn(f"fewer samples ({t}) than features ({n}); the fit is underdetermined",
                      RuntimeWarning, stacklevel=2)
    lam = default_lambda(X) if ridge_lambda is None else float(ridge_lambda)
    if lam < 0 or not np.isfinite(lam):
        raise ValueError("ridge_lambda must be a finite non-negative number")

    G = X @ X.T
    B = X @ D.T  # (X X^T + lam I) W^T = X D^T
    if lam == 0.0:
        ev = np.linalg.eigvalsh(G)
        top = max(ev[-1], 0.0) if ev.size else 0.0
        if ev.size and ev[0] <= RANK_RTOL * max(top, 1.0) * n:
            raise SingularSystemError(
                "X X^T is rank-deficient; pass a positive ridge_lambda")
    else:
        G = G + lam * np.eye(n)
    try:
        L = np.linalg.cholesky(G)
        Wt = np.linalg.solve(L.T, np.linalg.solve(L, B))
    except np.linalg.LinAlgError:
        Wt = np.linalg.solve(G, B)
    return ReadoutModel(Wt.T.copy(), lam, augment_bias, mean, scale)


def predict(model: ReadoutModel, x: np.ndarray) -> np.ndarray:
    """``W_out @ x`` for one state vector or an N x T state matrix."""
    return model.W_out @ model.transform(x)


def squared_error(W: np.ndarray, X: np.ndarray, D: np.ndarray) -> float:
    """0.5 * ||D - W X||_F^2."""
    R = np.atleast_2d(D) - W @ X
    return 0.5 * float(np.einsum("ij,ij->", R, R))


def error_gradient(W: np.ndarray, X: np.ndarray, D: np.ndarray) -> np.ndarray:
    """Gradient of :func:`squared_error` with respect to ``W``."""
    return -(np.atleast_2d(D) - W @ X) @ X.T
