"""Fuzzy k-NN graph construction and low-dimensional layout optimization.

The graph side computes, per point, the nearest-positive-neighbor distance
rho_i and a bandwidth sigma_i calibrated so the total fuzzy membership of its
neighborhood equals log2(k). Directed weights exp(-max(0, d - rho)/sigma) are
symmetrized with the probabilistic t-conorm u + v - u*v. The layout side
minimizes the fuzzy cross-entropy between graph weights and the Student-t
similarities of the embedded points, by per-edge attraction plus uniformly
sampled repulsion (negative sampling), starting from a spectral embedding.

Sign convention: attractive_gradient/repulsive_gradient return the descent
step applied to a coordinate (the negative loss gradient), so the update is
y += lr * step.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .errors import NumericalError

logger = logging.getLogger(__name__)

try:
    from numba import njit

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    HAVE_NUMBA = False

    def njit(*args, **kwargs):
        if args and callable(args[0]):
            return args[0]

        def wrap(fn):
            return fn

        return wrap


GRAD_CLIP = 4.0  # per-coordinate bound on a single gradient step


@dataclass(frozen=True)
class UmapConfig:
    k: int = 15
    out_dim: int = 2
    a: float = 1.0
    b: float = 1.0
    epochs: int = 200
    initial_learning_rate: float = 1.0
    negative_samples: int = 5
    eps: float = 1e-3
    sigma_tol: float = 1e-5
    sigma_max_iters: int = 64
    seed: int = 0

    def __post_init__(self):
        if self.k < 2:
            raise ValueError("k must be at least 2")
        if self.out_dim < 1:
            raise ValueError("out_dim must be at least 1")
        if self.a <= 0 or self.b <= 0:
            raise ValueError("a and b must be positive")
        if self.epochs < 0:
            raise ValueError("epochs must be non-negative")
        if self.initial_learning_rate <= 0:
            raise ValueError("initial_learning_rate must be positive")
        if self.negative_samples < 0:
            raise ValueError("negative_samples must be non-negative")
        if self.eps <= 0:
            raise ValueError("eps must be positive")


@dataclass(frozen=True)
class NeighborGraph:
    """k-NN structure plus the calibrated fuzzy edge weights.

    Edges are stored as parallel arrays (edge_i[t] < edge_j[t]); every weight
    lies in (0, 1]. sigma_converged marks points whose bandwidth satisfied the
    membership equation instead of being clamped; rho_degenerate marks points
    whose neighborhood contained no positive distance (duplicate clusters).
    """

    neighbor_indices: np.ndarray
    neighbor_distances: np.ndarray
    rho: np.ndarray
    sigma: np.ndarray
    sigma_converged: np.ndarray
    rho_degenerate: np.ndarray
    edge_i: np.ndarray
    edge_j: np.ndarray
    edge_v: np.ndarray

    @property
    def n_points(self) -> int:
        return self.neighbor_indices.shape[0]

    @property
    def k(self) -> int:
        return self.neighbor_indices.shape[1]

    def edges(self) -> list[tuple[int, int, float]]:
        return [
            (int(i), int(j), float(v))
            for i, j, v in zip(self.edge_i, self.edge_j, self.edge_v)
        ]


@dataclass(frozen=True)
class Embedding:
    coordinates: np.ndarray
    a: float
    b: float
    final_loss: float
    epoch_losses: np.ndarray


def build_knn(X: np.ndarray, k: int) -> tuple[np.ndarray, np.ndarray]:
    """Exact brute-force k nearest neighbors under the Euclidean metric.

    Row i lists the k closest points to x_i excluding i itself, distances
    ascending; ties are broken by point index.
    """
    X = np.asarray(X, dtype=np.float64)
    n = X.shape[0]
    if k >= n:
        raise ValueError(f"k ({k}) must be smaller than the number of points ({n})")
    sq = np.sum(X * X, axis=1)
    d2 = sq[:, None] + sq[None, :] - 2.0 * (X @ X.T)
    np.maximum(d2, 0.0, out=d2)
    dists = np.sqrt(d2)
    np.fill_diagonal(dists, np.inf)
    order = np.argsort(dists, axis=1, kind="stable")[:, :k]
    return order, np.take_along_axis(dists, order, axis=1)


def compute_rho(distances: np.ndarray) -> np.ndarray:
    """Per row, the smallest strictly positive distance (0 if none exists)."""
    distances = np.asarray(distances, dtype=np.float64)
    positive = np.where(distances > 0.0, distances, np.inf)
    rho = positive.min(axis=1)
    return np.where(np.isfinite(rho), rho, 0.0)


def solve_sigma(
    distances_row: np.ndarray,
    rho: float,
    k: int,
    tol: float = 1e-5,
    max_iters: int = 64,
) -> tuple[float, bool]:
    """Bisect for the bandwidth whose total membership equals log2(k).

    The left-hand side sum_j exp(-max(0, d_j - rho)/sigma) increases from the
    count of zero-gap neighbors toward the row length, so the target is
    reachable only strictly between the two; unreachable targets return a
    clamped sigma with converged=False. The clamp interval is
    [1e-3, 1e3] * mean positive gap (sigma = 1.0 when no gap is positive).
    """
    if k < 2:
        raise ValueError("k must be at least 2")
    gaps = np.maximum(0.0, np.asarray(distances_row, dtype=np.float64) - rho)
    target = np.log2(k)
    positive = gaps[gaps > 0.0]
    if positive.size == 0:
        return 1.0, False
    mean_gap = float(positive.mean())
    lo_clamp, hi_clamp = 1e-3 * mean_gap, 1e3 * mean_gap
    n_zero = gaps.size - positive.size
    if target <= n_zero:
        return lo_clamp, False
    if target >= gaps.size:
        return hi_clamp, False

    def lhs(sigma: float) -> float:
        return float(np.exp(-gaps / sigma).sum())

    lo, hi = 0.0, 1.0
    for _ in range(64):
        if lhs(hi) >= target:
            break
        hi *= 2.0
    for _ in range(max_iters):
        mid = 0.5 * (lo + hi)
        if lhs(mid) < target:
            lo = mid
        else:
            hi = mid
    sigma = 0.5 * (lo + hi)
    if abs(lhs(sigma) - target) < tol:
        return sigma, True
    return min(max(sigma, lo_clamp), hi_clamp), False


def directed_weight(d, rho, sigma):
    """exp(-max(0, d - rho)/sigma); equals 1 at or inside the rho radius."""
    return np.exp(-np.maximum(0.0, np.asarray(d, dtype=np.float64) - rho) / sigma)


def symmetrize(v_ji, v_ij):
    """Probabilistic t-conorm u + v - u*v; commutative, stays in [0, 1]."""
    return v_ji + v_ij - v_ji * v_ij


def low_dim_similarity(yi: np.ndarray, yj: np.ndarray, a: float, b: float) -> float:
    """Student-t style similarity (1 + a * ||yi - yj||^(2b))^-1 in (0, 1]."""
    d2 = float(np.sum((np.asarray(yi, float) - np.asarray(yj, float)) ** 2))
    return 1.0 / (1.0 + a * d2**b)


def cross_entropy(v, w, eps: float = 1e-3):
    """Fuzzy cross-entropy v*log(v/w) + (1-v)*log((1-v)/(1-w)).

    w is clamped to [eps, 1-eps]; the 0*log(0) limits are taken as 0. Both
    terms are non-negative KL contributions, so the sum is a valid loss.
    Accepts scalars or arrays.
    """
    v = np.asarray(v, dtype=np.float64)
    w = np.clip(np.asarray(w, dtype=np.float64), eps, 1.0 - eps)
    tiny = np.finfo(np.float64).tiny
    first = np.where(v > 0.0, v * np.log(np.maximum(v, tiny) / w), 0.0)
    second = np.where(
        v < 1.0, (1.0 - v) * np.log(np.maximum(1.0 - v, tiny) / (1.0 - w)), 0.0
    )
    out = first + second
    return float(out) if out.ndim == 0 else out


def attractive_gradient(
    yi: np.ndarray, yj: np.ndarray, v_ij: float, a: float, b: float
) -> np.ndarray:
    """Descent step pulling yi toward yj along a positive edge of weight v_ij."""
    yi = np.asarray(yi, dtype=np.float64)
    yj = np.asarray(yj, dtype=np.float64)
    diff = yi - yj
    d2 = float(np.sum(diff * diff))
    if d2 == 0.0:
        return np.zeros_like(diff)
    coef = (-2.0 * a * b * d2 ** (b - 1.0)) / (1.0 + a * d2**b)
    return coef * v_ij * diff


def repulsive_gradient(
    yi: np.ndarray, yj: np.ndarray, v_ij: float, a: float, b: float, eps: float
) -> np.ndarray:
    """Descent step pushing yi away from a sampled non-neighbor yj.

    eps keeps the step finite as the points coincide; at exact coincidence the
    direction vanishes and a zero step is returned.
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    yi = np.asarray(yi, dtype=np.float64)
    yj = np.asarray(yj, dtype=np.float64)
    diff = yi - yj
    d2 = float(np.sum(diff * diff))
    if d2 == 0.0:
        return np.zeros_like(diff)
    coef = 2.0 * b / ((eps + d2) * (1.0 + a * d2**b))
    return coef * (1.0 - v_ij) * diff


def spectral_init(graph: NeighborGraph, e: int, seed: int) -> np.ndarray:
    """Initial coordinates from the symmetric-normalized graph Laplacian.

    Takes the e eigenvectors with the smallest non-trivial eigenvalues,
    rescales to max-abs 10 and adds a seeded 1e-4 jitter to break ties. If the
    eigensolver fails to converge the init falls back to seeded uniform
    coordinates in [-10, 10] (logged).
    """
    n = graph.n_points
    if n == 0:
        raise ValueError("graph is empty")
    if e >= n:
        raise ValueError(f"out_dim too large: need e < n_points, got e={e}, n={n}")
    rng = np.random.default_rng(seed)
    weights = np.zeros((n, n))
    weights[graph.edge_i, graph.edge_j] = graph.edge_v
    weights[graph.edge_j, graph.edge_i] = graph.edge_v
    degree = weights.sum(axis=1)
    inv_sqrt = 1.0 / np.sqrt(np.maximum(degree, np.finfo(np.float64).tiny))
    lap = np.eye(n) - inv_sqrt[:, None] * weights * inv_sqrt[None, :]
    lap = 0.5 * (lap + lap.T)
    try:
        _, vecs = scipy.linalg.eigh(lap, subset_by_index=(0, e))
    except (np.linalg.LinAlgError, scipy.linalg.LinAlgError, ValueError) as exc:
        logger.warning("spectral init failed (%s); falling back to uniform init", exc)
        return rng.uniform(-10.0, 10.0, size=(n, e))
    coords = vecs[:, 1 : e + 1].copy()
    peak = np.abs(coords).max()
    if peak > 0:
        coords *= 10.0 / peak
    coords += rng.normal(0.0, 1e-4, size=coords.shape)
    return coords


@njit(cache=True)
def _layout_epoch(coords, edge_i, edge_j, edge_v, order, negatives, lr, a, b, eps):
    """One epoch of per-edge attraction plus negative-sample repulsion.

    Mirrors attractive_gradient/repulsive_gradient (v=0 for negatives) with
    per-coordinate clipping to [-GRAD_CLIP, GRAD_CLIP] before the lr factor.
    Returns -1, or the edge index at which coordinates went non-finite.
    """
    dim = coords.shape[1]
    n_neg = negatives.shape[1]
    for t in range(order.shape[0]):
        eidx = order[t]
        i = edge_i[eidx]
        j = edge_j[eidx]
        v = edge_v[eidx]
        d2 = 0.0
        for c in range(dim):
            diff = coords[i, c] - coords[j, c]
            d2 += diff * diff
        if d2 > 0.0:
            coef = (-2.0 * a * b * d2 ** (b - 1.0)) / (1.0 + a * d2**b) * v
            for c in range(dim):
                g = coef * (coords[i, c] - coords[j, c])
                if g > GRAD_CLIP:
                    g = GRAD_CLIP
                elif g < -GRAD_CLIP:
                    g = -GRAD_CLIP
                coords[i, c] += lr * g
                coords[j, c] -= lr * g
        for s in range(n_neg):
            other = negatives[t, s]
            if other == i:
                continue
            d2n = 0.0
            for c in range(dim):
                diff = coords[i, c] - coords[other, c]
                d2n += diff * diff
            if d2n > 0.0:
                coefn = 2.0 * b / ((eps + d2n) * (1.0 + a * d2n**b))
                for c in range(dim):
                    g = coefn * (coords[i, c] - coords[other, c])
                    if g > GRAD_CLIP:
                        g = GRAD_CLIP
                    elif g < -GRAD_CLIP:
                        g = -GRAD_CLIP
                    coords[i, c] += lr * g
        for c in range(dim):
            if not np.isfinite(coords[i, c]) or not np.isfinite(coords[j, c]):
                return eidx
    return -1


def _edge_loss(coords: np.ndarray, graph: NeighborGraph, a: float, b: float, eps: float) -> float:
    """Fuzzy cross-entropy summed over the stored positive edges."""
    if graph.edge_i.size == 0:
        return 0.0
    diff = coords[graph.edge_i] - coords[graph.edge_j]
    d2 = np.sum(diff * diff, axis=1)
    w = 1.0 / (1.0 + a * d2**b)
    return float(np.sum(cross_entropy(graph.edge_v, w, eps)))


def optimize_layout(
    graph: NeighborGraph, init: np.ndarray, config: UmapConfig
) -> Embedding:
    """Refine initial coordinates by seeded stochastic attraction/repulsion.

    Each epoch visits every positive edge in a freshly shuffled order, pulls
    both endpoints together, then pushes the first endpoint away from
    config.negative_samples uniformly drawn points. The learning rate decays
    linearly from the initial value to 0; a fuzzy cross-entropy estimate over
    the positive edges is recorded after every epoch.
    """
    init = np.asarray(init, dtype=np.float64)
    if init.shape[0] != graph.n_points:
        raise ValueError("init row count does not match graph size")
    coords = init.copy()
    n_edges = graph.edge_i.size
    rng = np.random.default_rng(config.seed)
    losses = np.zeros(config.epochs)
    for epoch in range(config.epochs):
        lr = config.initial_learning_rate * (1.0 - epoch / config.epochs)
        order = rng.permutation(n_edges)
        negatives = rng.integers(
            0, graph.n_points, size=(n_edges, config.negative_samples)
        )
        bad_edge = _layout_epoch(
            coords,
            graph.edge_i,
            graph.edge_j,
            graph.edge_v,
            order,
            negatives,
            lr,
            config.a,
            config.b,
            config.eps,
        )
        if bad_edge >= 0:
            raise NumericalError(
                f"non-finite coordinates at epoch {epoch}, edge {bad_edge}"
            )
        losses[epoch] = _edge_loss(coords, graph, config.a, config.b, config.eps)
    final_loss = (
        losses[-1]
        if config.epochs > 0
        else _edge_loss(coords, graph, config.a, config.b, config.eps)
    )
    return Embedding(
        coordinates=coords,
        a=config.a,
        b=config.b,
        final_loss=float(final_loss),
        epoch_losses=losses,
    )


def build_graph(X: np.ndarray, config: UmapConfig) -> NeighborGraph:
    """k-NN graph with calibrated rho/sigma and symmetrized fuzzy weights."""
    indices, distances = build_knn(X, config.k)
    n = indices.shape[0]
    rho = compute_rho(distances)
    row_has_entries = distances.shape[1] > 0
    rho_degenerate = (rho == 0.0) if row_has_entries else np.zeros(n, dtype=bool)
    sigma = np.empty(n)
    converged = np.empty(n, dtype=bool)
    for i in range(n):
        sigma[i], converged[i] = solve_sigma(
            distances[i], rho[i], config.k, config.sigma_tol, config.sigma_max_iters
        )
    directed: dict[tuple[int, int], float] = {}
    for i in range(n):
        weights = directed_weight(distances[i], rho[i], sigma[i])
        for idx in range(config.k):
            directed[(i, int(indices[i, idx]))] = float(weights[idx])
    combined: dict[tuple[int, int], float] = {}
    for (i, j), v_ji in directed.items():
        key = (i, j) if i < j else (j, i)
        if key in combined:
            continue
        v_ij = directed.get((j, i), 0.0)
        combined[key] = float(symmetrize(v_ji, v_ij))
    keys = sorted(combined)
    edge_i = np.array([p[0] for p in keys], dtype=np.int64)
    edge_j = np.array([p[1] for p in keys], dtype=np.int64)
    edge_v = np.array([combined[p] for p in keys], dtype=np.float64)
    return NeighborGraph(
        neighbor_indices=indices,
        neighbor_distances=distances,
        rho=rho,
        sigma=sigma,
        sigma_converged=converged,
        rho_degenerate=rho_degenerate,
        edge_i=edge_i,
        edge_j=edge_j,
        edge_v=edge_v,
    )


def embed(X: np.ndarray, config: UmapConfig) -> tuple[NeighborGraph, Embedding]:
    """Full reduction: graph construction, spectral init, layout optimization."""
    X = np.asarray(X, dtype=np.float64)
    if X.shape[0] <= config.k:
        raise ValueError(
            f"need more points than neighbors: N={X.shape[0]}, k={config.k}"
        )
    graph = build_graph(X, config)
    init = spectral_init(graph, config.out_dim, config.seed)
    return graph, optimize_layout(graph, init, config)


def embedding_to_csv(coords: np.ndarray, labels: np.ndarray, path: str) -> None:
    """Write scatter-plot data: dim_0..dim_{e-1},label."""
    coords = np.asarray(coords, dtype=np.float64)
    header = [f"dim_{i}" for i in range(coords.shape[1])] + ["label"]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        fh.write(",".join(header) + "\n")
        for row, label in zip(coords, labels):
            fh.write(",".join(repr(float(v)) for v in row) + f",{int(label)}\n")


def graph_edges_json(graph: NeighborGraph) -> list[dict]:
    """Debug export: the symmetrized edge list as {i, j, v} records."""
    return [{"i": i, "j": j, "v": v} for i, j, v in graph.edges()]
