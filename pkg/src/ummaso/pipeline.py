"""End-to-end flow: ingest -> standardize -> (optional) oversample -> UMAP ->
LASSO selection -> feature assembly -> SARN training -> held-out metrics.

All statistics (standardization, graph, lambda path, resampling) are fitted
on training rows only; test rows are pushed through the stored transforms.
Stage randomness derives from the master seed plus fixed per-stage offsets
(SEED_SPLIT, SEED_OVERSAMPLE, SEED_UMAP, SEED_SARN below), so changing one
stage's settings does not reshuffle the others.
"""

from __future__ import annotations

import json
import os
import time
from dataclasses import dataclass, field, replace

import numpy as np

from . import dataset as ds
from . import lasso as ls
from . import metrics as mt
from . import umap as um
from .errors import StageError
from .sarn import network as nw

SEED_SPLIT = 101
SEED_OVERSAMPLE = 211
SEED_UMAP = 307
SEED_SARN = 401

FEATURE_MODES = ("selected_only", "embedding_only", "selected_plus_embedding")
BALANCE_MODES = ("none", "oversample")

MANIFEST_VERSION = 1

ARTIFACT_FILES = (
    "standardization.json",
    "graph.json",
    "embedding.csv",
    "lasso_path.csv",
    "selection.json",
    "model.json",
    "history.csv",
    "metrics.json",
    "manifest.json",
)


@dataclass(frozen=True)
class LassoSettings:
    grid_count: int = 100
    strategy: ls.SelectionStrategy = field(
        default_factory=lambda: ls.SelectionStrategy("top_k", k=5)
    )


@dataclass(frozen=True)
class SarnSettings:
    kernel_size: int = 3
    channels: int = 8
    rank: int = 2
    hidden: int = 16
    dropout_rate: float = 0.1
    reg_lambda: float = 1e-4
    label_smoothing: float = 0.05
    mask_len: int | None = None
    epochs: int = 200
    learning_rate: float = 0.05
    batch_size: int = 32
    loss_head: str = nw.DKL_HEAD


@dataclass(frozen=True)
class PipelineConfig:
    seed: int = 0
    balance: str = "none"
    train_fraction: float = 0.8
    feature_mode: str = "selected_plus_embedding"
    umap: um.UmapConfig = field(default_factory=um.UmapConfig)
    lasso: LassoSettings = field(default_factory=LassoSettings)
    sarn: SarnSettings = field(default_factory=SarnSettings)

    def __post_init__(self):
        if self.balance not in BALANCE_MODES:
            raise ValueError(f"balance must be one of {BALANCE_MODES}")
        if self.feature_mode not in FEATURE_MODES:
            raise ValueError(f"feature_mode must be one of {FEATURE_MODES}")

    @property
    def uses_umap(self) -> bool:
        return self.feature_mode != "selected_only"

    @property
    def uses_lasso(self) -> bool:
        return self.feature_mode != "embedding_only"


@dataclass
class PipelineArtifacts:
    """Everything a finished run produced; stage outputs are None iff skipped."""

    config: PipelineConfig
    feature_names: list[str]
    class_names: list[str]
    standardization: ds.StandardizationParams
    train_points: np.ndarray  # standardized (post-balance) training features
    train_labels: np.ndarray
    graph: um.NeighborGraph | None
    embedding: um.Embedding | None
    lasso_path: ls.LassoPath | None
    ranking: ls.FeatureRanking | None
    selected: list[int] | None
    model: nw.SarnModel
    history: nw.TrainHistory
    metrics_report: mt.MetricsReport
    timings: dict[str, float]
    stages: list[str]


def config_to_dict(config: PipelineConfig) -> dict:
    strategy = {"strategy": config.lasso.strategy.kind}
    if config.lasso.strategy.k is not None:
        strategy["k"] = config.lasso.strategy.k
    if config.lasso.strategy.value is not None:
        strategy["value"] = config.lasso.strategy.value
    u = config.umap
    s = config.sarn
    return {
        "seed": config.seed,
        "balance": config.balance,
        "train_fraction": config.train_fraction,
        "feature_mode": config.feature_mode,
        "umap": {
            "k": u.k,
            "out_dim": u.out_dim,
            "a": u.a,
            "b": u.b,
            "epochs": u.epochs,
            "learning_rate": u.initial_learning_rate,
            "negative_samples": u.negative_samples,
            "eps": u.eps,
            "sigma_tol": u.sigma_tol,
            "sigma_max_iters": u.sigma_max_iters,
        },
        "lasso": {"grid_count": config.lasso.grid_count, "selection": strategy},
        "sarn": {
            "kernel_size": s.kernel_size,
            "channels": s.channels,
            "rank": s.rank,
            "hidden": s.hidden,
            "dropout_rate": s.dropout_rate,
            "reg_lambda": s.reg_lambda,
            "label_smoothing": s.label_smoothing,
            "mask_len": s.mask_len,
            "epochs": s.epochs,
            "learning_rate": s.learning_rate,
            "batch_size": s.batch_size,
            "loss_head": s.loss_head,
        },
    }


def _embed_new(
    X_std: np.ndarray,
    graph: um.NeighborGraph,
    embedding: um.Embedding,
    train_points: np.ndarray,
) -> np.ndarray:
    """Out-of-sample coordinates: a weighted average of the k nearest training
    embeddings, weighted by the stored per-point rho/sigma memberships. A point
    coinciding exactly with a training point copies that point's coordinates."""
    k = graph.k
    out = np.zeros((X_std.shape[0], embedding.coordinates.shape[1]))
    for r, row in enumerate(X_std):
        dists = np.sqrt(np.maximum(np.sum((train_points - row) ** 2, axis=1), 0.0))
        nearest = np.argsort(dists, kind="stable")[:k]
        weights = um.directed_weight(
            dists[nearest], graph.rho[nearest], graph.sigma[nearest]
        )
        total = weights.sum()
        # coincident point, or so remote that every membership underflowed:
        # fall back to the nearest training embedding
        if dists[nearest[0]] == 0.0 or total <= 0.0:
            out[r] = embedding.coordinates[nearest[0]]
            continue
        out[r] = weights @ embedding.coordinates[nearest] / total
    return out


def _assemble(
    std_features: np.ndarray,
    coords: np.ndarray | None,
    selected: list[int] | None,
    mode: str,
) -> np.ndarray:
    if mode == "selected_only":
        return std_features[:, selected]
    if mode == "embedding_only":
        return coords
    return np.hstack([std_features[:, selected], coords])


def run(data: ds.Dataset, config: PipelineConfig) -> PipelineArtifacts:
    """Execute the configured stages in order; any failure aborts with the
    stage name. Fully deterministic for a fixed (dataset, config)."""
    timings: dict[str, float] = {}
    stages: list[str] = []

    def stage(name: str, fn):
        start = time.perf_counter()
        try:
            result = fn()
        except Exception as exc:
            raise StageError(name, exc) from exc
        timings[name] = time.perf_counter() - start
        stages.append(name)
        return result

    train, test = stage(
        "split",
        lambda: ds.stratified_split(
            data, ds.SplitSpec(config.train_fraction, config.seed + SEED_SPLIT)
        ),
    )
    train_std, std_params = stage("standardize", lambda: ds.standardize(train))
    test_features = ds.apply_standardization(test.features, std_params)

    if config.balance == "oversample":
        train_std = stage(
            "balance", lambda: ds.oversample(train_std, config.seed + SEED_OVERSAMPLE)
        )

    graph = embedding = None
    test_coords = None
    if config.uses_umap:
        umap_cfg = replace(config.umap, seed=config.seed + SEED_UMAP)
        graph, embedding = stage("umap", lambda: um.embed(train_std.features, umap_cfg))
        test_coords = _embed_new(test_features, graph, embedding, train_std.features)

    path = ranking = selected = None
    if config.uses_lasso:

        def run_lasso():
            response = train_std.labels.astype(np.float64)
            grid = ls.lambda_grid(
                train_std.features, response - response.mean(), config.lasso.grid_count
            )
            path = ls.fit_path(train_std.features, response, grid)
            ranking = ls.rank_features(path, train_std.feature_names)
            return path, ranking, ls.select(path, config.lasso.strategy)

        path, ranking, selected = stage("lasso", run_lasso)

    train_feats = stage(
        "features",
        lambda: _assemble(
            train_std.features,
            embedding.coordinates if embedding is not None else None,
            selected,
            config.feature_mode,
        ),
    )
    test_feats = _assemble(test_features, test_coords, selected, config.feature_mode)

    def run_sarn():
        s = config.sarn
        model = nw.init_model(
            train_feats.shape[1],
            data.n_classes,
            kernel_size=s.kernel_size,
            channels=s.channels,
            rank=s.rank,
            hidden=s.hidden,
            dropout_rate=s.dropout_rate,
            reg_lambda=s.reg_lambda,
            label_smoothing=s.label_smoothing,
            mask_len=s.mask_len,
            seed=config.seed + SEED_SARN,
        )
        train_cfg = nw.TrainConfig(
            epochs=s.epochs,
            learning_rate=s.learning_rate,
            batch_size=s.batch_size,
            seed=config.seed + SEED_SARN,
            loss_head=s.loss_head,
        )
        return nw.train(
            (train_feats, train_std.labels), (test_feats, test.labels), model, train_cfg
        )

    model, history = stage("sarn", run_sarn)

    def run_metrics():
        _, pred = nw.predict(model, test_feats)
        return mt.evaluate(test.labels, pred, data.n_classes)

    report = stage("metrics", run_metrics)

    return PipelineArtifacts(
        config=config,
        feature_names=list(data.feature_names),
        class_names=list(data.class_names),
        standardization=std_params,
        train_points=train_std.features,
        train_labels=train_std.labels,
        graph=graph,
        embedding=embedding,
        lasso_path=path,
        ranking=ranking,
        selected=selected,
        model=model,
        history=history,
        metrics_report=report,
        timings=timings,
        stages=stages,
    )


def transform_new(artifacts: PipelineArtifacts, X_new: np.ndarray) -> np.ndarray:
    """Map raw feature rows onto the trained model's input space using the
    stored standardization, out-of-sample embedding rule and selection."""
    X_new = np.atleast_2d(np.asarray(X_new, dtype=np.float64))
    width = len(artifacts.feature_names)
    if X_new.shape[1] != width:
        raise ValueError(f"expected {width} feature columns, got {X_new.shape[1]}")
    std = ds.apply_standardization(X_new, artifacts.standardization)
    coords = None
    if artifacts.config.uses_umap:
        coords = _embed_new(std, artifacts.graph, artifacts.embedding, artifacts.train_points)
    return _assemble(std, coords, artifacts.selected, artifacts.config.feature_mode)


def _dump_json(doc, path: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, sort_keys=True, indent=1)


def save_artifacts(artifacts: PipelineArtifacts, out_dir: str) -> None:
    """Write the artifacts directory (one file per stage output + manifest)."""
    os.makedirs(out_dir, exist_ok=True)
    join = lambda name: os.path.join(out_dir, name)

    _dump_json(
        {
            "means": [float(v) for v in artifacts.standardization.means],
            "std_devs": [float(v) for v in artifacts.standardization.std_devs],
            "feature_names": artifacts.feature_names,
        },
        join("standardization.json"),
    )
    if artifacts.graph is not None:
        g = artifacts.graph
        _dump_json(
            {
                "edges": um.graph_edges_json(g),
                "rho": [float(v) for v in g.rho],
                "sigma": [float(v) for v in g.sigma],
                "sigma_converged": [bool(v) for v in g.sigma_converged],
                "rho_degenerate": [bool(v) for v in g.rho_degenerate],
                "neighbor_indices": [[int(v) for v in row] for row in g.neighbor_indices],
                "neighbor_distances": [
                    [float(v) for v in row] for row in g.neighbor_distances
                ],
                "points": [[float(v) for v in row] for row in artifacts.train_points],
            },
            join("graph.json"),
        )
    if artifacts.embedding is not None:
        um.embedding_to_csv(
            artifacts.embedding.coordinates, artifacts.train_labels, join("embedding.csv")
        )
    if artifacts.lasso_path is not None:
        ls.path_to_csv(artifacts.lasso_path, join("lasso_path.csv"))
    if artifacts.ranking is not None:
        _dump_json(
            {
                "selected_indices": artifacts.selected,
                "selected_names": [artifacts.feature_names[j] for j in artifacts.selected],
                "order": artifacts.ranking.order,
                "entry_lambdas": [
                    v if v is not None else "never"
                    for v in artifacts.ranking.entry_lambdas
                ],
                "names": artifacts.ranking.names,
            },
            join("selection.json"),
        )
    nw.save_model(artifacts.model, join("model.json"))
    with open(join("history.csv"), "w", newline="", encoding="utf-8") as fh:
        fh.write("epoch,train_loss,train_acc,val_loss,val_acc\n")
        h = artifacts.history
        for e in range(len(h)):
            fh.write(
                f"{e},{repr(float(h.train_loss[e]))},{repr(float(h.train_accuracy[e]))},"
                f"{repr(float(h.val_loss[e]))},{repr(float(h.val_accuracy[e]))}\n"
            )
    _dump_json(mt.report_to_dict(artifacts.metrics_report), join("metrics.json"))
    _dump_json(
        {
            "manifest_version": MANIFEST_VERSION,
            "stages": artifacts.stages,
            "timings": artifacts.timings,
            "config": config_to_dict(artifacts.config),
            "feature_names": artifacts.feature_names,
            "class_names": artifacts.class_names,
            "embedding_final_loss": (
                artifacts.embedding.final_loss if artifacts.embedding is not None else None
            ),
        },
        join("manifest.json"),
    )


def _load_json(path: str):
    with open(path, encoding="utf-8") as fh:
        return json.load(fh)


def load_embedding_csv(path: str) -> tuple[np.ndarray, np.ndarray]:
    rows = []
    labels = []
    with open(path, encoding="utf-8") as fh:
        next(fh)
        for line in fh:
            cells = line.rstrip("\n").split(",")
            rows.append([float(v) for v in cells[:-1]])
            labels.append(int(cells[-1]))
    return np.asarray(rows), np.asarray(labels, dtype=np.int64)


def load_path_csv(path: str) -> ls.LassoPath:
    """Rebuild a LassoPath from its CSV export (convergence flags are not
    persisted and load as True)."""
    lambdas, dfs, mses, coefs = [], [], [], []
    with open(path, encoding="utf-8") as fh:
        next(fh)
        for line in fh:
            cells = line.rstrip("\n").split(",")
            lambdas.append(float(cells[0]))
            dfs.append(int(cells[1]))
            mses.append(float(cells[2]))
            coefs.append([float(v) for v in cells[3:]])
    lambdas = np.asarray(lambdas)
    coef_matrix = np.asarray(coefs)
    intercepts = np.zeros(lambdas.size)
    return ls.LassoPath(
        lambdas=lambdas,
        coef_matrix=coef_matrix,
        intercepts=intercepts,
        df=np.asarray(dfs, dtype=np.int64),
        mse=np.asarray(mses),
        converged=np.ones(lambdas.size, dtype=bool),
    )


def load_history_csv(path: str) -> nw.TrainHistory:
    tl, ta, vl, va = [], [], [], []
    with open(path, encoding="utf-8") as fh:
        next(fh)
        for line in fh:
            cells = line.rstrip("\n").split(",")
            tl.append(float(cells[1]))
            ta.append(float(cells[2]))
            vl.append(float(cells[3]))
            va.append(float(cells[4]))
    return nw.TrainHistory(
        train_loss=np.asarray(tl),
        train_accuracy=np.asarray(ta),
        val_loss=np.asarray(vl),
        val_accuracy=np.asarray(va),
    )


def load_artifacts(out_dir: str) -> PipelineArtifacts:
    """Reload a saved artifacts directory; enough to transform and predict."""
    from .config import pipeline_config_from_dict  # local import to avoid a cycle

    join = lambda name: os.path.join(out_dir, name)
    manifest = _load_json(join("manifest.json"))
    config = pipeline_config_from_dict(manifest["config"])
    std_doc = _load_json(join("standardization.json"))
    std = ds.StandardizationParams(
        means=np.asarray(std_doc["means"]), std_devs=np.asarray(std_doc["std_devs"])
    )
    graph = embedding = None
    train_points = np.zeros((0, len(std_doc["feature_names"])))
    train_labels = np.zeros(0, dtype=np.int64)
    if config.uses_umap:
        g = _load_json(join("graph.json"))
        edges = g["edges"]
        graph = um.NeighborGraph(
            neighbor_indices=np.asarray(g["neighbor_indices"], dtype=np.int64),
            neighbor_distances=np.asarray(g["neighbor_distances"]),
            rho=np.asarray(g["rho"]),
            sigma=np.asarray(g["sigma"]),
            sigma_converged=np.asarray(g["sigma_converged"], dtype=bool),
            rho_degenerate=np.asarray(g["rho_degenerate"], dtype=bool),
            edge_i=np.asarray([e["i"] for e in edges], dtype=np.int64),
            edge_j=np.asarray([e["j"] for e in edges], dtype=np.int64),
            edge_v=np.asarray([e["v"] for e in edges]),
        )
        train_points = np.asarray(g["points"])
        coords, train_labels = load_embedding_csv(join("embedding.csv"))
        embedding = um.Embedding(
            coordinates=coords,
            a=config.umap.a,
            b=config.umap.b,
            final_loss=manifest.get("embedding_final_loss") or 0.0,
            epoch_losses=np.zeros(0),
        )
    path = ranking = selected = None
    if config.uses_lasso:
        path = load_path_csv(join("lasso_path.csv"))
        sel_doc = _load_json(join("selection.json"))
        selected = [int(v) for v in sel_doc["selected_indices"]]
        ranking = ls.FeatureRanking(
            order=[int(v) for v in sel_doc["order"]],
            entry_lambdas=[
                None if v == "never" else float(v) for v in sel_doc["entry_lambdas"]
            ],
            names=list(sel_doc["names"]),
        )
    return PipelineArtifacts(
        config=config,
        feature_names=list(manifest["feature_names"]),
        class_names=list(manifest["class_names"]),
        standardization=std,
        train_points=train_points,
        train_labels=train_labels,
        graph=graph,
        embedding=embedding,
        lasso_path=path,
        ranking=ranking,
        selected=selected,
        model=nw.load_model(join("model.json")),
        history=load_history_csv(join("history.csv")),
        metrics_report=mt.report_from_dict(_load_json(join("metrics.json"))),
        timings={k: float(v) for k, v in manifest["timings"].items()},
        stages=list(manifest["stages"]),
    )
