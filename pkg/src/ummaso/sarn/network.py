"""Network assembly, losses, analytic gradients, training and prediction.

Tabular inputs: a d-wide feature vector is treated as a 1 x d single-channel
map convolved with 1 x s kernels through the factorized path, giving a
(positions x channels) hidden matrix. A pointwise convolution over the hidden
matrix concatenated with a learned (broadcast) target row scores each
position; scores are scaled, masked beyond mask_len, optionally dropped out,
then softmaxed and used to gate the hidden matrix elementwise. The gated
matrix is flattened through a tanh layer and a linear layer into class
probabilities, trained with the symmetric (double) KL divergence plus an L2
penalty. A softmax-regression head with weight decay is available as a
standalone alternative on the raw features.
"""

from __future__ import annotations

import copy
import json
from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from ..errors import NumericalError
from .conv import ConvSpec, FactorizedKernel

PROB_CLAMP = 1e-12  # lower bound on probabilities inside KL terms
PRUNE_THRESHOLD = 1e-3  # |S| entries below this are zeroed after training

DKL_HEAD = "dkl_head"
SOFTMAX_REG = "softmax_reg"
DKL_PARAMS = ("P", "S", "Q", "w_pw", "s_vec", "h_t", "w_out", "v_out")

MODEL_FORMAT_VERSION = 1


def stable_softmax(z: np.ndarray, axis: int = -1) -> np.ndarray:
    """Softmax with max subtraction; -inf entries get exactly zero weight."""
    z = np.asarray(z, dtype=np.float64)
    shifted = z - np.max(z, axis=axis, keepdims=True)
    ez = np.exp(shifted)
    return ez / np.sum(ez, axis=axis, keepdims=True)


def smooth_labels(labels: np.ndarray, n_classes: int, eps: float) -> np.ndarray:
    """(1 - eps) * one-hot + eps/C, so both KL directions stay finite."""
    labels = np.asarray(labels, dtype=np.int64)
    out = np.full((labels.size, n_classes), eps / n_classes)
    out[np.arange(labels.size), labels] += 1.0 - eps
    return out


def kl(y, yp) -> np.ndarray | float:
    """sum_i y_i log(y_i / yp_i) with yp clamped to >= 1e-12 and 0*log0 := 0.

    Accepts single distributions or batches (summed over the last axis).
    """
    y = np.asarray(y, dtype=np.float64)
    yp = np.asarray(yp, dtype=np.float64)
    if y.shape != yp.shape:
        raise ValueError("distribution length mismatch")
    yp = np.maximum(yp, PROB_CLAMP)
    tiny = np.finfo(np.float64).tiny
    terms = np.where(y > 0.0, y * np.log(np.maximum(y, tiny) / yp), 0.0)
    total = terms.sum(axis=-1)
    return float(total) if total.ndim == 0 else total


def dkl(y, yp) -> np.ndarray | float:
    """Symmetric divergence 0.5*KL(y||yp) + 0.5*KL(yp||y)."""
    return 0.5 * kl(y, yp) + 0.5 * kl(yp, y)


def loss(y_batch: np.ndarray, yp_batch: np.ndarray, params, reg_lambda: float) -> float:
    """Mean DKL over the batch plus (reg_lambda/2) * sum of squared parameters."""
    y_batch = np.atleast_2d(np.asarray(y_batch, dtype=np.float64))
    yp_batch = np.atleast_2d(np.asarray(yp_batch, dtype=np.float64))
    if y_batch.shape[0] == 0:
        raise ValueError("empty batch")
    penalty = 0.5 * reg_lambda * sum(float(np.sum(p * p)) for p in params)
    return float(np.mean(dkl(y_batch, yp_batch))) + penalty


def softmax_reg_forward(x: np.ndarray, theta: np.ndarray) -> np.ndarray:
    """Multiclass logistic probabilities with a trailing bias input of 1."""
    x = np.asarray(x, dtype=np.float64)
    theta = np.asarray(theta, dtype=np.float64)
    single = x.ndim == 1
    X = np.atleast_2d(x)
    if X.shape[1] != theta.shape[1] - 1:
        raise ValueError(
            f"feature width {X.shape[1]} does not match theta width {theta.shape[1] - 1}"
        )
    Xa = np.hstack([X, np.ones((X.shape[0], 1))])
    probs = stable_softmax(Xa @ theta.T, axis=1)
    return probs[0] if single else probs


def softmax_reg_cost(
    X: np.ndarray, labels: np.ndarray, theta: np.ndarray, reg_lambda: float
) -> float:
    """Negative mean log-likelihood plus weight decay (bias column excluded)."""
    labels = np.asarray(labels, dtype=np.int64)
    if labels.size == 0:
        raise ValueError("empty batch")
    probs = np.atleast_2d(softmax_reg_forward(X, theta))
    picked = np.maximum(probs[np.arange(labels.size), labels], PROB_CLAMP)
    data = -float(np.mean(np.log(picked)))
    return data + 0.5 * reg_lambda * float(np.sum(theta[:, :-1] ** 2))


@dataclass
class TrainConfig:
    epochs: int = 200
    learning_rate: float = 0.05
    batch_size: int = 32
    seed: int = 0
    loss_head: str = DKL_HEAD
    record_history: bool = True

    def __post_init__(self):
        if self.epochs < 0:
            raise ValueError("epochs must be non-negative")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if self.batch_size < 1:
            raise ValueError("batch_size must be at least 1")
        if self.loss_head not in (DKL_HEAD, SOFTMAX_REG):
            raise ValueError(f"unknown loss_head '{self.loss_head}'")


@dataclass
class TrainHistory:
    train_loss: np.ndarray
    train_accuracy: np.ndarray
    val_loss: np.ndarray
    val_accuracy: np.ndarray

    def __len__(self) -> int:
        return self.train_loss.size


@dataclass
class SarnModel:
    """All trainable parameters plus the hyper-parameters baked at init time.

    S/Q/P hold the factorized convolution, w_pw/s_vec/h_t the attention
    scoring, w_out/v_out the output head and theta the softmax-regression
    head over the raw features.
    """

    spec: ConvSpec
    P: np.ndarray
    S: np.ndarray
    Q: np.ndarray
    w_pw: np.ndarray
    s_vec: np.ndarray
    h_t: np.ndarray
    w_out: np.ndarray
    v_out: np.ndarray
    theta: np.ndarray
    dropout_rate: float = 0.1
    reg_lambda: float = 1e-4
    label_smoothing: float = 0.05
    mask_len: int | None = None
    active_head: str = DKL_HEAD

    def __post_init__(self):
        if self.mask_len is None:
            self.mask_len = self.spec.positions
        if not 1 <= self.mask_len <= self.spec.positions:
            raise ValueError(
                f"mask_len must lie in [1, {self.spec.positions}], got {self.mask_len}"
            )
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ValueError("dropout_rate must lie in [0, 1)")

    @property
    def n_classes(self) -> int:
        return self.v_out.shape[1]

    @property
    def feature_width(self) -> int:
        return self.spec.width

    def head_params(self, head: str | None = None) -> dict[str, np.ndarray]:
        head = head or self.active_head
        if head == SOFTMAX_REG:
            return {"theta": self.theta}
        return {name: getattr(self, name) for name in DKL_PARAMS}


def init_model(
    feature_width: int,
    n_classes: int,
    *,
    kernel_size: int = 3,
    channels: int = 8,
    rank: int = 2,
    hidden: int = 16,
    dropout_rate: float = 0.1,
    reg_lambda: float = 1e-4,
    label_smoothing: float = 0.05,
    mask_len: int | None = None,
    seed: int = 0,
) -> SarnModel:
    """Seeded initialization in tabular mode (1 x width single-channel input).

    The convolution starts from a dense random kernel pushed through the
    factorized representation (P = identity + 1e-2 noise, truncated SVD for
    S/Q), so training begins consistent with the factorization.
    """
    spec = ConvSpec(
        height=1,
        width=feature_width,
        channels=1,
        kernel_size=kernel_size,
        out_channels=channels,
        rank=rank,
    )
    rng = np.random.default_rng(seed)
    kernel = rng.normal(
        0.0, 1.0 / np.sqrt(spec.patch_size), size=(spec.kernel_height, kernel_size, 1, channels)
    )
    P = np.eye(1) + 1e-2 * rng.normal(size=(1, 1))
    fk = FactorizedKernel.from_kernel(kernel, P, rank)
    positions = spec.positions
    flat = positions * channels
    return SarnModel(
        spec=spec,
        P=fk.P,
        S=fk.S,
        Q=fk.Q,
        w_pw=rng.normal(0.0, 1.0 / np.sqrt(2 * channels), size=2 * channels),
        s_vec=np.ones(positions),
        h_t=rng.normal(0.0, 0.1, size=channels),
        w_out=rng.normal(0.0, 1.0 / np.sqrt(flat), size=(flat, hidden)),
        v_out=rng.normal(0.0, 1.0 / np.sqrt(hidden), size=(hidden, n_classes)),
        theta=np.zeros((n_classes, feature_width + 1)),
        dropout_rate=dropout_rate,
        reg_lambda=reg_lambda,
        label_smoothing=label_smoothing,
        mask_len=mask_len if mask_len is not None else positions,
    )


def _forward(
    model: SarnModel,
    X: np.ndarray,
    *,
    training: bool = False,
    drop_mask: np.ndarray | None = None,
) -> dict:
    """Batched forward pass through the DKL head; caches every intermediate.

    drop_mask (batch x positions, True = dropped) only applies when training;
    kept scores are rescaled by 1/(1 - rate).
    """
    spec = model.spec
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != spec.width:
        raise ValueError(f"expected (batch, {spec.width}) features, got {X.shape}")
    B = X.shape[0]
    n = spec.out_channels
    I = X.reshape(B, spec.height, spec.width, spec.channels)
    J = np.einsum("ik,byxk->byxi", model.P, I)
    win = sliding_window_view(J, (spec.kernel_height, spec.kernel_size), axis=(1, 2))
    T = np.einsum("iuvk,byxiuv->byxki", model.Q, win)
    O = np.einsum("ikj,byxki->byxj", model.S, T)
    H = O.reshape(B, spec.positions, n)
    if not np.all(np.isfinite(H)):
        raise NumericalError("non-finite values in convolution output")
    G = np.concatenate([H, np.broadcast_to(model.h_t, (B, spec.positions, n))], axis=2)
    A = G @ model.w_pw
    scaled = A * model.s_vec
    pre = scaled.copy()
    pre[:, model.mask_len :] = -np.inf
    scale = np.zeros((B, spec.positions))
    scale[:, : model.mask_len] = 1.0
    if training and model.dropout_rate > 0.0:
        if drop_mask is None:
            raise ValueError("training forward requires a dropout mask")
        keep = 1.0 / (1.0 - model.dropout_rate)
        active = ~drop_mask
        pre[:, : model.mask_len] = np.where(
            active[:, : model.mask_len], pre[:, : model.mask_len] * keep, 0.0
        )
        scale[:, : model.mask_len] = np.where(active[:, : model.mask_len], keep, 0.0)
    weights = stable_softmax(pre, axis=1)
    if not np.all(np.isfinite(weights)):
        raise NumericalError("non-finite attention weights")
    gated = weights[:, :, None] * H
    z = gated.reshape(B, -1)
    hidden = np.tanh(z @ model.w_out)
    logits = hidden @ model.v_out
    probs = stable_softmax(logits, axis=1)
    if not np.all(np.isfinite(probs)):
        raise NumericalError("non-finite output probabilities")
    return {
        "I": I,
        "J": J,
        "win": win,
        "T": T,
        "H": H,
        "G": G,
        "A": A,
        "scale": scale,
        "weights": weights,
        "gated": gated,
        "z": z,
        "hidden": hidden,
        "probs": probs,
    }


def sparse_attention(
    H: np.ndarray,
    model: SarnModel,
    training: bool = False,
    seed: int = 0,
) -> tuple[np.ndarray, np.ndarray]:
    """Score, mask, (optionally) drop out and softmax one hidden matrix, then
    gate it elementwise. Returns (gated hidden matrix, attention weights)."""
    H = np.asarray(H, dtype=np.float64)
    positions, n = model.spec.positions, model.spec.out_channels
    if H.shape != (positions, n):
        raise ValueError(f"expected hidden matrix of shape {(positions, n)}")
    if model.mask_len < 1:
        raise ValueError("mask_len of 0 leaves no unmasked positions")
    G = np.concatenate([H, np.broadcast_to(model.h_t, H.shape)], axis=1)
    pre = (G @ model.w_pw) * model.s_vec
    pre[model.mask_len :] = -np.inf
    if training and model.dropout_rate > 0.0:
        rng = np.random.default_rng(seed)
        dropped = rng.random(model.mask_len) < model.dropout_rate
        keep = 1.0 / (1.0 - model.dropout_rate)
        pre[: model.mask_len] = np.where(dropped, 0.0, pre[: model.mask_len] * keep)
    weights = stable_softmax(pre)
    return weights[:, None] * H, weights


def output_head(H_gated: np.ndarray, w_out: np.ndarray, v_out: np.ndarray) -> np.ndarray:
    """Flatten, tanh layer, linear layer, softmax: class probabilities."""
    z = np.asarray(H_gated, dtype=np.float64).reshape(-1)
    if z.size != w_out.shape[0]:
        raise ValueError(f"flattened size {z.size} does not match w_out rows {w_out.shape[0]}")
    return stable_softmax(np.tanh(z @ w_out) @ v_out)


def _dkl_grad_wrt_probs(y: np.ndarray, p: np.ndarray) -> np.ndarray:
    """d DKL(y || p) / d p for batched rows (clamps as in kl)."""
    p_hat = np.maximum(p, PROB_CLAMP)
    y_hat = np.maximum(y, PROB_CLAMP)
    return 0.5 * (-y / p_hat) + 0.5 * (np.log(p_hat / y_hat) + 1.0)


def gradients(
    model: SarnModel,
    X: np.ndarray,
    labels: np.ndarray,
    *,
    head: str | None = None,
    drop_mask: np.ndarray | None = None,
) -> tuple[float, dict[str, np.ndarray]]:
    """Loss value and exact analytic gradients for every trainable parameter
    of the selected head. A provided drop_mask is honored as-is, so finite
    difference checks can fix the dropout pattern (or omit it entirely)."""
    head = head or model.active_head
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    labels = np.asarray(labels, dtype=np.int64)
    if labels.size == 0:
        raise ValueError("empty batch")
    B = X.shape[0]
    lam = model.reg_lambda

    if head == SOFTMAX_REG:
        Xa = np.hstack([X, np.ones((B, 1))])
        probs = stable_softmax(Xa @ model.theta.T, axis=1)
        onehot = np.zeros_like(probs)
        onehot[np.arange(B), labels] = 1.0
        grad = ((probs - onehot).T @ Xa) / B
        penalty_grad = lam * model.theta
        penalty_grad[:, -1] = 0.0
        cost = softmax_reg_cost(X, labels, model.theta, lam)
        return cost, {"theta": grad + penalty_grad}

    cache = _forward(model, X, training=drop_mask is not None, drop_mask=drop_mask)
    spec = model.spec
    n = spec.out_channels
    targets = smooth_labels(labels, model.n_classes, model.label_smoothing)
    probs = cache["probs"]
    total = loss(targets, probs, model.head_params(DKL_HEAD).values(), lam)

    g_probs = _dkl_grad_wrt_probs(targets, probs) / B
    row_dot = np.sum(g_probs * probs, axis=1, keepdims=True)
    d_logits = probs * (g_probs - row_dot)

    hidden = cache["hidden"]
    d_v_out = hidden.T @ d_logits
    d_hidden = d_logits @ model.v_out.T
    d_pre_hidden = d_hidden * (1.0 - hidden * hidden)
    d_w_out = cache["z"].T @ d_pre_hidden
    d_z = d_pre_hidden @ model.w_out.T
    d_gated = d_z.reshape(B, spec.positions, n)

    weights = cache["weights"]
    H = cache["H"]
    d_weights = np.sum(d_gated * H, axis=2)
    d_H = weights[:, :, None] * d_gated

    w_dot = np.sum(d_weights * weights, axis=1, keepdims=True)
    d_scores = weights * (d_weights - w_dot)
    d_scaled = d_scores * cache["scale"]
    d_A = d_scaled * model.s_vec
    d_s_vec = np.sum(d_scaled * cache["A"], axis=0)

    d_G = d_A[:, :, None] * model.w_pw
    d_w_pw = np.einsum("bpc,bp->c", cache["G"], d_A)
    d_H += d_G[:, :, :n]
    d_h_t = np.sum(d_G[:, :, n:], axis=(0, 1))

    d_O = d_H.reshape(B, spec.out_height, spec.out_width, n)
    d_T = np.einsum("ikj,byxj->byxki", model.S, d_O)
    d_S = np.einsum("byxj,byxki->ikj", d_O, cache["T"])
    d_Q = np.einsum("byxki,byxiuv->iuvk", d_T, cache["win"])
    d_J = np.zeros_like(cache["J"])
    for u in range(spec.kernel_height):
        for v in range(spec.kernel_size):
            d_J[:, u : u + spec.out_height, v : v + spec.out_width, :] += np.einsum(
                "ik,byxki->byxi", model.Q[:, u, v, :], d_T
            )
    d_P = np.einsum("byxi,byxk->ik", d_J, cache["I"])

    grads = {
        "P": d_P + lam * model.P,
        "S": d_S + lam * model.S,
        "Q": d_Q + lam * model.Q,
        "w_pw": d_w_pw + lam * model.w_pw,
        "s_vec": d_s_vec + lam * model.s_vec,
        "h_t": d_h_t + lam * model.h_t,
        "w_out": d_w_out + lam * model.w_out,
        "v_out": d_v_out + lam * model.v_out,
    }
    return total, grads


def _evaluate(model: SarnModel, X: np.ndarray, labels: np.ndarray, head: str) -> tuple[float, float]:
    """Full-objective loss and accuracy in evaluation mode (no dropout)."""
    labels = np.asarray(labels, dtype=np.int64)
    if head == SOFTMAX_REG:
        cost = softmax_reg_cost(X, labels, model.theta, model.reg_lambda)
        probs = np.atleast_2d(softmax_reg_forward(X, model.theta))
    else:
        probs = _forward(model, X)["probs"]
        targets = smooth_labels(labels, model.n_classes, model.label_smoothing)
        cost = loss(targets, probs, model.head_params(DKL_HEAD).values(), model.reg_lambda)
    accuracy = float(np.mean(np.argmax(probs, axis=1) == labels))
    return cost, accuracy


def train(
    train_data: tuple[np.ndarray, np.ndarray],
    val_data: tuple[np.ndarray, np.ndarray],
    model_init: SarnModel,
    config: TrainConfig,
) -> tuple[SarnModel, TrainHistory]:
    """Seeded mini-batch gradient descent; no early stopping.

    History rows are computed at the end of each epoch over the full train
    and validation sets in evaluation mode, so the final row matches what
    predict() reproduces. Small S entries are pruned to exact zeros before
    the final evaluation.
    """
    X_train, y_train = train_data
    X_val, y_val = val_data
    X_train = np.asarray(X_train, dtype=np.float64)
    y_train = np.asarray(y_train, dtype=np.int64)
    model = copy.deepcopy(model_init)
    model.active_head = config.loss_head
    epochs = config.epochs
    history = TrainHistory(
        train_loss=np.zeros(epochs),
        train_accuracy=np.zeros(epochs),
        val_loss=np.zeros(epochs),
        val_accuracy=np.zeros(epochs),
    )
    if epochs == 0:
        return model, history
    rng = np.random.default_rng(config.seed)
    n = y_train.size
    params = model.head_params(config.loss_head)
    for epoch in range(epochs):
        order = rng.permutation(n)
        for batch_no, start in enumerate(range(0, n, config.batch_size)):
            sel = order[start : start + config.batch_size]
            drop = None
            if config.loss_head == DKL_HEAD and model.dropout_rate > 0.0:
                drop = rng.random((sel.size, model.mask_len)) < model.dropout_rate
                full = np.zeros((sel.size, model.spec.positions), dtype=bool)
                full[:, : model.mask_len] = drop
                drop = full
            value, grads = gradients(
                model, X_train[sel], y_train[sel], head=config.loss_head, drop_mask=drop
            )
            if not np.isfinite(value):
                raise NumericalError(
                    f"non-finite loss at epoch {epoch}, batch {batch_no}"
                )
            for name, grad in grads.items():
                params[name] -= config.learning_rate * grad
        if epoch == epochs - 1 and config.loss_head == DKL_HEAD:
            model.S[np.abs(model.S) < PRUNE_THRESHOLD] = 0.0
        if config.record_history:
            history.train_loss[epoch], history.train_accuracy[epoch] = _evaluate(
                model, X_train, y_train, config.loss_head
            )
            history.val_loss[epoch], history.val_accuracy[epoch] = _evaluate(
                model, X_val, y_val, config.loss_head
            )
    return model, history


def predict(model: SarnModel, X: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Class probabilities and argmax labels (ties go to the lowest index)."""
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    if X.shape[1] != model.feature_width:
        raise ValueError(
            f"feature width {X.shape[1]} does not match model width {model.feature_width}"
        )
    if model.active_head == SOFTMAX_REG:
        probs = np.atleast_2d(softmax_reg_forward(X, model.theta))
    else:
        probs = _forward(model, X)["probs"]
    return probs, np.argmax(probs, axis=1)


_ARRAY_FIELDS = ("P", "S", "Q", "w_pw", "s_vec", "h_t", "w_out", "v_out", "theta")


def model_to_dict(model: SarnModel) -> dict:
    """Versioned JSON-ready document: shape metadata plus flat row-major data."""
    doc = {
        "format_version": MODEL_FORMAT_VERSION,
        "active_head": model.active_head,
        "spec": {
            "height": model.spec.height,
            "width": model.spec.width,
            "channels": model.spec.channels,
            "kernel_size": model.spec.kernel_size,
            "out_channels": model.spec.out_channels,
            "rank": model.spec.rank,
        },
        "hyper": {
            "dropout_rate": model.dropout_rate,
            "reg_lambda": model.reg_lambda,
            "label_smoothing": model.label_smoothing,
            "mask_len": model.mask_len,
        },
        "params": {},
    }
    for name in _ARRAY_FIELDS:
        arr = getattr(model, name)
        doc["params"][name] = {
            "shape": list(arr.shape),
            "data": [float(v) for v in arr.ravel(order="C")],
        }
    return doc


def model_from_dict(doc: dict) -> SarnModel:
    if doc.get("format_version") != MODEL_FORMAT_VERSION:
        raise ValueError(f"unsupported model format version {doc.get('format_version')}")
    spec = ConvSpec(**doc["spec"])
    arrays = {}
    for name in _ARRAY_FIELDS:
        entry = doc["params"][name]
        arrays[name] = np.asarray(entry["data"], dtype=np.float64).reshape(entry["shape"])
    hyper = doc["hyper"]
    return SarnModel(
        spec=spec,
        dropout_rate=hyper["dropout_rate"],
        reg_lambda=hyper["reg_lambda"],
        label_smoothing=hyper["label_smoothing"],
        mask_len=hyper["mask_len"],
        active_head=doc["active_head"],
        **arrays,
    )


def save_model(model: SarnModel, path: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(model_to_dict(model), fh, sort_keys=True)


def load_model(path: str) -> SarnModel:
    with open(path, encoding="utf-8") as fh:
        return model_from_dict(json.load(fh))
