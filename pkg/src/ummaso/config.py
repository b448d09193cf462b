"""Strict JSON configuration parsing for the CLI.

Unknown keys are rejected (naming the offending key), every omitted key falls
back to the documented default, and type errors carry the full key path.
"""

from __future__ import annotations

from .errors import ConfigError
from .lasso import SelectionStrategy
from .pipeline import LassoSettings, PipelineConfig, SarnSettings
from .umap import UmapConfig


def _as_int(value, path: str) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        raise ConfigError(f"'{path}' must be an integer")
    return value


def _as_float(value, path: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"'{path}' must be a number")
    return float(value)


def _as_str(value, path: str) -> str:
    if not isinstance(value, str):
        raise ConfigError(f"'{path}' must be a string")
    return value


def _as_opt_int(value, path: str) -> int | None:
    if value is None:
        return None
    return _as_int(value, path)


def _mapping(value, path: str) -> dict:
    if not isinstance(value, dict):
        raise ConfigError(f"'{path}' must be an object")
    return dict(value)


def _pop(doc: dict, key: str, default, caster, prefix: str):
    if key not in doc:
        return default
    return caster(doc.pop(key), prefix + key)


def _reject_unknown(doc: dict, prefix: str) -> None:
    if doc:
        raise ConfigError(f"unknown key '{prefix}{next(iter(doc))}'")


def _umap_from_dict(doc: dict, prefix: str) -> UmapConfig:
    defaults = UmapConfig()
    cfg = dict(
        k=_pop(doc, "k", defaults.k, _as_int, prefix),
        out_dim=_pop(doc, "out_dim", defaults.out_dim, _as_int, prefix),
        a=_pop(doc, "a", defaults.a, _as_float, prefix),
        b=_pop(doc, "b", defaults.b, _as_float, prefix),
        epochs=_pop(doc, "epochs", defaults.epochs, _as_int, prefix),
        initial_learning_rate=_pop(
            doc, "learning_rate", defaults.initial_learning_rate, _as_float, prefix
        ),
        negative_samples=_pop(
            doc, "negative_samples", defaults.negative_samples, _as_int, prefix
        ),
        eps=_pop(doc, "eps", defaults.eps, _as_float, prefix),
        sigma_tol=_pop(doc, "sigma_tol", defaults.sigma_tol, _as_float, prefix),
        sigma_max_iters=_pop(
            doc, "sigma_max_iters", defaults.sigma_max_iters, _as_int, prefix
        ),
    )
    _reject_unknown(doc, prefix)
    return UmapConfig(**cfg)


def _selection_from_dict(doc: dict, prefix: str) -> SelectionStrategy:
    kind = _pop(doc, "strategy", "top_k", _as_str, prefix)
    k = _pop(doc, "k", None, _as_int, prefix)
    value = _pop(doc, "value", None, _as_float, prefix)
    _reject_unknown(doc, prefix)
    if kind == "top_k" and k is None:
        k = 5
    return SelectionStrategy(kind=kind, k=k, value=value)


def _lasso_from_dict(doc: dict, prefix: str) -> LassoSettings:
    defaults = LassoSettings()
    grid_count = _pop(doc, "grid_count", defaults.grid_count, _as_int, prefix)
    strategy = defaults.strategy
    if "selection" in doc:
        strategy = _selection_from_dict(
            _mapping(doc.pop("selection"), prefix + "selection"), prefix + "selection."
        )
    _reject_unknown(doc, prefix)
    return LassoSettings(grid_count=grid_count, strategy=strategy)


def _sarn_from_dict(doc: dict, prefix: str) -> SarnSettings:
    d = SarnSettings()
    cfg = dict(
        kernel_size=_pop(doc, "kernel_size", d.kernel_size, _as_int, prefix),
        channels=_pop(doc, "channels", d.channels, _as_int, prefix),
        rank=_pop(doc, "rank", d.rank, _as_int, prefix),
        hidden=_pop(doc, "hidden", d.hidden, _as_int, prefix),
        dropout_rate=_pop(doc, "dropout_rate", d.dropout_rate, _as_float, prefix),
        reg_lambda=_pop(doc, "reg_lambda", d.reg_lambda, _as_float, prefix),
        label_smoothing=_pop(
            doc, "label_smoothing", d.label_smoothing, _as_float, prefix
        ),
        mask_len=_pop(doc, "mask_len", d.mask_len, _as_opt_int, prefix),
        epochs=_pop(doc, "epochs", d.epochs, _as_int, prefix),
        learning_rate=_pop(doc, "learning_rate", d.learning_rate, _as_float, prefix),
        batch_size=_pop(doc, "batch_size", d.batch_size, _as_int, prefix),
        loss_head=_pop(doc, "loss_head", d.loss_head, _as_str, prefix),
    )
    _reject_unknown(doc, prefix)
    return SarnSettings(**cfg)


def pipeline_config_from_dict(doc: dict) -> PipelineConfig:
    """Parse (a copy of) a config mapping into a PipelineConfig, strictly."""
    doc = _mapping(doc, "config")
    try:
        cfg = PipelineConfig(
            seed=_pop(doc, "seed", 0, _as_int, ""),
            balance=_pop(doc, "balance", "none", _as_str, ""),
            train_fraction=_pop(doc, "train_fraction", 0.8, _as_float, ""),
            feature_mode=_pop(doc, "feature_mode", "selected_plus_embedding", _as_str, ""),
            umap=_umap_from_dict(_mapping(doc.pop("umap", {}), "umap"), "umap."),
            lasso=_lasso_from_dict(_mapping(doc.pop("lasso", {}), "lasso"), "lasso."),
            sarn=_sarn_from_dict(_mapping(doc.pop("sarn", {}), "sarn"), "sarn."),
        )
    except ConfigError:
        raise
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    _reject_unknown(doc, "")
    return cfg


def parse_cli_config(doc: dict) -> tuple[PipelineConfig, dict]:
    """Split a CLI config document into pipeline settings and I/O settings
    (data path, output directory, label column)."""
    doc = _mapping(doc, "config")
    io = {
        "data": _pop(doc, "data", None, _as_str, ""),
        "out": _pop(doc, "out", None, _as_str, ""),
        "label_column": _pop(doc, "label_column", "fertility", _as_str, ""),
    }
    return pipeline_config_from_dict(doc), io
