"""L1-penalized least squares over a descending lambda grid.

Objective: (1/2N) * sum_i (y_i - b0 - x_i.beta)^2 + lambda * sum_j |beta_j|,
solved by cyclic coordinate descent with soft-thresholding. Features are
ranked by the largest lambda at which their coefficient first becomes
non-zero while walking the grid from lambda_max downward.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

ACTIVE_THRESHOLD = 1e-12  # |beta| above this counts as a non-zero coefficient
GRID_RATIO = 1e-3  # smallest grid lambda relative to lambda_max


@dataclass(frozen=True)
class LassoModel:
    intercept: float
    coef: np.ndarray
    lam: float
    iterations: int
    converged: bool


@dataclass(frozen=True)
class LassoPath:
    lambdas: np.ndarray
    coef_matrix: np.ndarray
    intercepts: np.ndarray
    df: np.ndarray
    mse: np.ndarray
    converged: np.ndarray


@dataclass(frozen=True)
class FeatureRanking:
    """Features ordered by descending entry lambda; never-active ones last."""

    order: list[int]
    entry_lambdas: list[float | None]
    names: list[str]


@dataclass(frozen=True)
class SelectionStrategy:
    kind: str  # top_k | lambda_at | min_mse
    k: int | None = None
    value: float | None = None

    def __post_init__(self):
        if self.kind not in ("top_k", "lambda_at", "min_mse"):
            raise ValueError(f"unknown selection strategy '{self.kind}'")
        if self.kind == "top_k" and (self.k is None or self.k < 0):
            raise ValueError("top_k requires a non-negative k")
        if self.kind == "lambda_at" and self.value is None:
            raise ValueError("lambda_at requires a lambda value")


def soft_threshold(value: float, threshold: float) -> float:
    return np.sign(value) * max(0.0, abs(value) - threshold)


def lambda_grid(X: np.ndarray, y: np.ndarray, count: int = 100) -> np.ndarray:
    """Log-spaced grid from lambda_max down to lambda_max * 1e-3.

    lambda_max = max_j |x_j . y| / N is the smallest penalty at which the
    all-zero solution is optimal (X standardized, y centered).
    """
    if count < 2:
        raise ValueError("count must be at least 2")
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    lam_max = float(np.max(np.abs(X.T @ y)) / X.shape[0])
    if lam_max <= 0.0:
        raise ValueError("degenerate response: all feature/response correlations are zero")
    return np.logspace(np.log10(lam_max), np.log10(lam_max * GRID_RATIO), count)


def fit_lasso(
    X: np.ndarray,
    y: np.ndarray,
    lam: float,
    warm_start: np.ndarray | None = None,
    tol: float = 1e-8,
    max_iters: int = 10_000,
) -> LassoModel:
    """Cyclic coordinate descent; converged when the largest per-sweep
    coefficient change drops below tol. Zero-variance columns stay at 0."""
    if lam < 0:
        raise ValueError("lambda must be non-negative")
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    n, p = X.shape
    col_sq = np.einsum("ij,ij->j", X, X) / n
    beta = np.zeros(p) if warm_start is None else np.array(warm_start, dtype=np.float64)
    intercept = float(np.mean(y - X @ beta))
    residual = y - intercept - X @ beta
    converged = False
    sweeps = 0
    for sweeps in range(1, max_iters + 1):
        max_change = 0.0
        for j in range(p):
            if col_sq[j] == 0.0:
                continue
            old = beta[j]
            partial = (X[:, j] @ residual) / n + col_sq[j] * old
            new = soft_threshold(partial, lam) / col_sq[j]
            if new != old:
                residual -= X[:, j] * (new - old)
                beta[j] = new
                max_change = max(max_change, abs(new - old))
        # re-optimize the (unpenalized) intercept; a no-op for centered X
        shift = float(np.mean(residual))
        if shift != 0.0:
            intercept += shift
            residual -= shift
        if max_change < tol:
            converged = True
            break
    intercept = float(np.mean(y - X @ beta))
    return LassoModel(
        intercept=intercept, coef=beta, lam=float(lam), iterations=sweeps, converged=converged
    )


def kkt_violation(X: np.ndarray, y: np.ndarray, model: LassoModel) -> float:
    """Worst-case optimality residual of the returned solution.

    For beta_j = 0 the correlation |x_j.r|/N may not exceed lambda; for active
    coordinates it must equal lambda * sign(beta_j). Returns the max excess.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    residual = y - model.intercept - X @ model.coef
    grad = (X.T @ residual) / X.shape[0]
    worst = 0.0
    for j in range(X.shape[1]):
        if abs(model.coef[j]) <= ACTIVE_THRESHOLD:
            worst = max(worst, abs(grad[j]) - model.lam)
        else:
            worst = max(worst, abs(grad[j] - model.lam * np.sign(model.coef[j])))
    return worst


def mse(y_true: np.ndarray, y_pred: np.ndarray) -> float:
    """(1/N) sum of squared residuals."""
    y_true = np.asarray(y_true, dtype=np.float64)
    y_pred = np.asarray(y_pred, dtype=np.float64)
    if y_true.shape != y_pred.shape:
        raise ValueError("length mismatch between y_true and y_pred")
    if y_true.size == 0:
        raise ValueError("empty vectors")
    return float(np.mean((y_true - y_pred) ** 2))


def fit_path(X: np.ndarray, y: np.ndarray, lambdas: np.ndarray) -> LassoPath:
    """Fit from the largest lambda down, warm-starting each solve from the
    previous one; record degrees of freedom and training MSE per lambda."""
    lambdas = np.asarray(lambdas, dtype=np.float64)
    if lambdas.size == 0:
        raise ValueError("empty lambda grid")
    if np.any(np.diff(lambdas) >= 0):
        raise ValueError("lambdas must be strictly descending")
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    n_lams, p = lambdas.size, X.shape[1]
    coefs = np.zeros((n_lams, p))
    intercepts = np.zeros(n_lams)
    df = np.zeros(n_lams, dtype=np.int64)
    mses = np.zeros(n_lams)
    converged = np.zeros(n_lams, dtype=bool)
    warm = None
    for t, lam in enumerate(lambdas):
        model = fit_lasso(X, y, lam, warm_start=warm)
        warm = model.coef
        coefs[t] = model.coef
        intercepts[t] = model.intercept
        df[t] = int(np.sum(np.abs(model.coef) > ACTIVE_THRESHOLD))
        mses[t] = mse(y, model.intercept + X @ model.coef)
        converged[t] = model.converged
    return LassoPath(
        lambdas=lambdas,
        coef_matrix=coefs,
        intercepts=intercepts,
        df=df,
        mse=mses,
        converged=converged,
    )


def rank_features(path: LassoPath, names: list[str]) -> FeatureRanking:
    """Order features by the lambda at which they first become active.

    Features that never activate rank last; ties (including the never case)
    break by original column index.
    """
    p = path.coef_matrix.shape[1]
    if len(names) != p:
        raise ValueError("names length does not match coefficient count")
    entry: list[float | None] = []
    for j in range(p):
        active = np.flatnonzero(np.abs(path.coef_matrix[:, j]) > ACTIVE_THRESHOLD)
        entry.append(float(path.lambdas[active[0]]) if active.size else None)
    order = sorted(
        range(p), key=lambda j: (-entry[j] if entry[j] is not None else np.inf, j)
    )
    return FeatureRanking(order=order, entry_lambdas=entry, names=list(names))


def select(path: LassoPath, strategy: SelectionStrategy) -> list[int]:
    """Pick a feature subset from the fitted path; returns sorted indices."""
    p = path.coef_matrix.shape[1]
    if strategy.kind == "top_k":
        if strategy.k > p:
            raise ValueError(f"top_k k={strategy.k} exceeds feature count {p}")
        ranking = rank_features(path, [str(j) for j in range(p)])
        return sorted(ranking.order[: strategy.k])
    if strategy.kind == "lambda_at":
        row = int(np.argmin(np.abs(path.lambdas - strategy.value)))
    else:  # min_mse
        row = int(np.argmin(path.mse))
    return sorted(
        int(j) for j in np.flatnonzero(np.abs(path.coef_matrix[row]) > ACTIVE_THRESHOLD)
    )


def path_to_csv(path: LassoPath, file_path: str) -> None:
    """Coefficient-path export: lambda, df, mse, beta_0..beta_{p-1} per row."""
    p = path.coef_matrix.shape[1]
    header = ["lambda", "df", "mse"] + [f"beta_{j}" for j in range(p)]
    with open(file_path, "w", newline="", encoding="utf-8") as fh:
        fh.write(",".join(header) + "\n")
        for t in range(path.lambdas.size):
            cells = [repr(float(path.lambdas[t])), str(int(path.df[t])), repr(float(path.mse[t]))]
            cells += [repr(float(v)) for v in path.coef_matrix[t]]
            fh.write(",".join(cells) + "\n")
