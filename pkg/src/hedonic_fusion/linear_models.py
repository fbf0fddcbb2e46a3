"""OLS, LASSO-penalized OLS via coordinate descent, and clustered inference.

Conventions:
  - The intercept is never penalized; LASSO centers y and standardized
    columns make the intercept exactly mean(y).
  - Fits remember the standardization of the matrix they were trained on;
    `predict` always takes rows in original units and applies it.
  - OLS is solved through a rank-revealing (pivoted) QR, not normal
    equations, so near-collinear encoder columns fail loudly with names.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from . import _kernels
from .core_types import DesignMatrix

DEFAULT_TOL = 1e-7
DEFAULT_MAX_CYCLES = 10_000
LAMBDA_GRID_SIZE = 100
LAMBDA_MIN_RATIO = 1e-4


class RankDeficiencyError(ValueError):
    """OLS design is rank deficient; `columns` names a dependent set."""

    def __init__(self, columns):
        self.columns = tuple(columns)
        super().__init__(
            f"rank-deficient design; dependent columns: {list(self.columns)}"
        )


class ConvergenceError(RuntimeError):
    """Coordinate descent ran out of cycles; carries the last iterate."""

    def __init__(self, fit: "LinearFit", cycles: int):
        self.fit = fit
        self.cycles = cycles
        super().__init__(f"coordinate descent did not converge in {cycles} cycles")


@dataclass(frozen=True, eq=False)
class LinearFit:
    intercept: float
    coefficients: np.ndarray
    lam: float
    column_names: tuple[str, ...]
    standardization: tuple[np.ndarray, np.ndarray] | None = None
    # per-cycle objective values from coordinate descent; not serialized
    history: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        if self.lam < 0:
            raise ValueError("lambda must be >= 0")
        if not np.all(np.isfinite(self.coefficients)):
            raise ValueError("non-finite coefficients")

    @property
    def p(self) -> int:
        return len(self.column_names)

    def nonzero_count(self) -> int:
        return int(np.count_nonzero(self.coefficients))

    def to_dict(self) -> dict:
        std = self.standardization
        return {
            "intercept": self.intercept,
            "lambda": self.lam,
            "coefficients": {
                name: float(c) for name, c in zip(self.column_names, self.coefficients)
            },
            "standardization": None
            if std is None
            else {
                name: [float(m), float(s)]
                for name, m, s in zip(self.column_names, std[0], std[1])
            },
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    @classmethod
    def from_dict(cls, d: dict) -> "LinearFit":
        names = tuple(d["coefficients"])
        coefs = np.array([d["coefficients"][n] for n in names])
        std = d["standardization"]
        if std is not None:
            means = np.array([std[n][0] for n in names])
            scales = np.array([std[n][1] for n in names])
            std = (means, scales)
        return cls(d["intercept"], coefs, d["lambda"], names, std)

    @classmethod
    def from_json(cls, text: str) -> "LinearFit":
        return cls.from_dict(json.loads(text))


def fit_ols(dm: DesignMatrix) -> LinearFit:
    """Least squares with an unpenalized intercept via pivoted QR."""
    n, p = dm.X.shape
    if n <= p + 1:
        raise ValueError(f"need n > p + 1 (got n={n}, p={p})")
    constant = np.ptp(dm.X, axis=0) == 0.0
    if constant.any():  # collinear with the intercept; name the column itself
        raise RankDeficiencyError(
            dm.column_names[j] for j in np.nonzero(constant)[0]
        )
    A = np.column_stack([np.ones(n), dm.X])
    names = ("(intercept)", *dm.column_names)
    Q, R, piv = scipy.linalg.qr(A, mode="economic", pivoting=True)
    diag = np.abs(np.diag(R))
    if diag[0] == 0.0:
        raise RankDeficiencyError(names)
    rank = int(np.count_nonzero(diag > diag[0] * max(A.shape) * np.finfo(float).eps))
    if rank < p + 1:
        raise RankDeficiencyError(names[j] for j in piv[rank:])
    z = Q.T @ dm.y
    beta_piv = scipy.linalg.solve_triangular(R, z)
    beta = np.empty(p + 1)
    beta[piv] = beta_piv
    return LinearFit(
        intercept=float(beta[0]),
        coefficients=beta[1:],
        lam=0.0,
        column_names=dm.column_names,
        standardization=dm.standardization,
    )


def predict(fit: LinearFit, rows: np.ndarray) -> np.ndarray:
    """intercept + standardized(rows) @ coefficients; rows in original units."""
    rows = np.atleast_2d(np.asarray(rows, dtype=np.float64))
    if rows.shape[1] != fit.p:
        raise ValueError(f"rows have {rows.shape[1]} columns, fit expects {fit.p}")
    if fit.standardization is not None:
        means, scales = fit.standardization
        rows = (rows - means) / scales
    return fit.intercept + rows @ fit.coefficients


def lambda_max(dm: DesignMatrix) -> float:
    """Smallest penalty at which every LASSO coefficient is zero."""
    yc = dm.y - dm.y.mean()
    m = float(np.max(np.abs(dm.X.T @ yc)))
    # pad by 1e-12 relative: the sweep recomputes the correlations with its
    # own summation order, which can land a few ulps above this BLAS value
    # and would otherwise leak a ~1e-16 coefficient at exactly lambda_max
    return (m / dm.n) * (1.0 + 1e-12)


def fit_lasso(
    dm: DesignMatrix,
    lam: float,
    tol: float = DEFAULT_TOL,
    max_cycles: int = DEFAULT_MAX_CYCLES,
    beta0: np.ndarray | None = None,
) -> LinearFit:
    """Minimize (1/2n)*sum((y - a - Xb)^2) + lam*sum(|b|) by cyclic descent.

    The matrix must be standardized (penalties are scale-sensitive). Raises
    ConvergenceError carrying the last iterate if max_cycles is exhausted.
    """
    if dm.standardization is None:
        raise ValueError("fit_lasso requires a standardized design matrix")
    y_mean = float(dm.y.mean())
    beta, _, cycles, objectives, converged = _kernels.coordinate_descent(
        dm.X, dm.y - y_mean, lam, beta0=beta0, tol=tol, max_cycles=max_cycles
    )
    fit = LinearFit(
        intercept=y_mean,
        coefficients=beta,
        lam=float(lam),
        column_names=dm.column_names,
        standardization=dm.standardization,
        history=objectives,
    )
    if not converged:
        raise ConvergenceError(fit, cycles)
    return fit


def lambda_grid(
    dm: DesignMatrix,
    grid_size: int = LAMBDA_GRID_SIZE,
    min_ratio: float = LAMBDA_MIN_RATIO,
) -> np.ndarray:
    """Log-spaced descending grid from lambda_max down to min_ratio * lambda_max.

    Confidence blocks sum to one by contract, so assembled designs carry
    exact collinearity and the far bottom of the default grid converges very
    slowly; sweeps that only need the CV minimum can raise min_ratio.
    """
    if grid_size < 2:
        raise ValueError("grid_size must be >= 2")
    if not (0.0 < min_ratio < 1.0):
        raise ValueError("min_ratio must be in (0, 1)")
    lmax = lambda_max(dm)
    if lmax <= 0.0:
        return np.zeros(grid_size)
    return np.geomspace(lmax, lmax * min_ratio, grid_size)


def select_lambda(
    dm: DesignMatrix,
    grid_size: int = LAMBDA_GRID_SIZE,
    k: int = 5,
    seed: int = 0,
    tol: float = DEFAULT_TOL,
    max_cycles: int = DEFAULT_MAX_CYCLES,
    min_ratio: float = LAMBDA_MIN_RATIO,
) -> float:
    """Pick the grid penalty minimizing k-fold CV MSE; ties go to the larger.

    The grid is anchored at this matrix's lambda_max; each fold solves the
    whole grid with warm starts. Fold assignment is a seeded shuffle.
    """
    if grid_size < 2 or k < 2:
        raise ValueError("need grid_size >= 2 and k >= 2")
    if dm.standardization is None:
        raise ValueError("select_lambda requires a standardized design matrix")
    grid = lambda_grid(dm, grid_size, min_ratio)
    if grid[0] == 0.0:
        return 0.0
    rng = np.random.default_rng(seed)
    folds = np.array_split(rng.permutation(dm.n), k)
    sse = np.zeros(grid_size)
    for val_idx in folds:
        mask = np.ones(dm.n, dtype=bool)
        mask[val_idx] = False
        X_tr, y_tr = dm.X[mask], dm.y[mask]
        X_val, y_val = dm.X[val_idx], dm.y[val_idx]
        y_mean = y_tr.mean()
        betas, _, converged = _kernels.warm_start_path(
            X_tr, y_tr - y_mean, grid, tol=tol, max_cycles=max_cycles
        )
        if not np.all(converged):
            bad = int(np.nonzero(~converged)[0][0])
            fit = LinearFit(float(y_mean), betas[bad], float(grid[bad]), dm.column_names)
            raise ConvergenceError(fit, max_cycles)
        preds = y_mean + X_val @ betas.T  # (n_val, grid_size)
        sse += ((preds - y_val[:, None]) ** 2).sum(axis=0)
    best = 0
    for g in range(1, grid_size):
        if sse[g] < sse[best]:  # strict: ties keep the larger penalty
            best = g
    return float(grid[best])


def cluster_robust_se(dm: DesignMatrix, fit: LinearFit) -> np.ndarray:
    """CR1 sandwich standard errors, intercept first.

    V = c * (A'A)^-1 (sum_g A_g' e_g e_g' A_g) (A'A)^-1 with
    c = G/(G-1) * (n-1)/(n-k). Singleton clusters reduce this to HC1.
    """
    n = dm.n
    k = fit.p + 1
    A = np.column_stack([np.ones(n), dm.X])
    if fit.standardization is not None:
        means, scales = fit.standardization
        A[:, 1:] = (dm.X - means) / scales
    e = dm.y - (fit.intercept + A[:, 1:] @ fit.coefficients)
    labels = np.asarray(dm.clusters)
    groups = np.unique(labels)
    G = groups.size
    if G < 2:
        raise ValueError("need >= 2 clusters")
    meat = np.zeros((k, k))
    for g in groups:
        idx = np.nonzero(labels == g)[0]
        s = A[idx].T @ e[idx]
        meat += np.outer(s, s)
    bread = np.linalg.inv(A.T @ A)
    c = (G / (G - 1)) * ((n - 1) / (n - k))
    V = c * bread @ meat @ bread
    return np.sqrt(np.diag(V))
