"""Three-layer perceptron: sigmoid hidden layer, softmax word posteriors.

Trained by plain SGD on cross-entropy. The per-sample update loop lives in
:mod:`asrlab.kernels`; :func:`loss_and_grad` is the vectorized reference the
gradient check runs against.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit, log_softmax

from asrlab import kernels
from asrlab._binio import read_container, take, write_container
from asrlab.errors import DimensionMismatch, FormatError, LabelOutOfRange

MAGIC = b"ASRMLP\x00\x00"


@dataclass(frozen=True)
class MlpConfig:
    n_input: int
    n_output: int
    n_hidden: int = 64
    lr: float = 0.01
    epochs: int = 200
    batch_size: int = 1
    seed: int = 0
    init_scale: float | None = None
    # train in z-scored input coordinates, fold the scaling back into W1/b1
    standardize_inputs: bool = True

    def __post_init__(self):
        if min(self.n_input, self.n_hidden, self.n_output, self.batch_size) < 1:
            raise ValueError("all dimensions must be >= 1")
        if not self.lr > 0:
            raise ValueError("lr must be positive")


@dataclass
class MlpModel:
    W1: np.ndarray
    b1: np.ndarray
    W2: np.ndarray
    b2: np.ndarray
    loss_history: list = field(default_factory=list)

    def __post_init__(self):
        for name in ("W1", "b1", "W2", "b2"):
            setattr(self, name, np.ascontiguousarray(getattr(self, name), dtype=np.float64))

    @property
    def n_input(self):
        return self.W1.shape[1]

    @property
    def n_hidden(self):
        return self.W1.shape[0]

    @property
    def n_output(self):
        return self.W2.shape[0]

    def params(self):
        return [self.W1, self.b1, self.W2, self.b2]

    def copy(self):
        return MlpModel(*(p.copy() for p in self.params()), loss_history=list(self.loss_history))


def init_model(cfg: MlpConfig) -> MlpModel:
    rng = np.random.default_rng(cfg.seed)
    s1 = cfg.init_scale if cfg.init_scale is not None else 1.0 / np.sqrt(cfg.n_input)
    s2 = cfg.init_scale if cfg.init_scale is not None else 1.0 / np.sqrt(cfg.n_hidden)
    W1 = rng.uniform(-s1, s1, (cfg.n_hidden, cfg.n_input))
    W2 = rng.uniform(-s2, s2, (cfg.n_output, cfg.n_hidden))
    return MlpModel(W1, np.zeros(cfg.n_hidden), W2, np.zeros(cfg.n_output))


def _check_input(model, X):
    if X.shape[-1] != model.n_input:
        raise DimensionMismatch(f"input width {X.shape[-1]} != n_input {model.n_input}")


def mlp_forward(model: MlpModel, x) -> np.ndarray:
    x = np.ascontiguousarray(x, dtype=np.float64)
    if x.ndim != 1:
        raise DimensionMismatch("mlp_forward takes a single vector")
    _check_input(model, x)
    return kernels.mlp_forward_rows(model.W1, model.b1, model.W2, model.b2, x[None, :])[0]


def mlp_posteriors(model: MlpModel, X) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    if X.size == 0:
        return np.zeros((0, model.n_output))
    X = np.ascontiguousarray(np.atleast_2d(X))
    _check_input(model, X)
    return kernels.mlp_forward_rows(model.W1, model.b1, model.W2, model.b2, X)


def loss_and_grad(model: MlpModel, X, labels):
    """Summed cross-entropy over the batch and its gradients (dW1, db1, dW2, db2)."""
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    labels = np.asarray(labels)
    H = expit(X @ model.W1.T + model.b1)
    Z = H @ model.W2.T + model.b2
    logp = log_softmax(Z, axis=1)
    rows = np.arange(X.shape[0])
    loss = -logp[rows, labels].sum()
    d2 = np.exp(logp)
    d2[rows, labels] -= 1.0
    d1 = (d2 @ model.W2) * H * (1.0 - H)
    return loss, (d1.T @ X, d1.sum(axis=0), d2.T @ H, d2.sum(axis=0))


def mean_loss(model: MlpModel, X, labels) -> float:
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    Z = expit(X @ model.W1.T + model.b1) @ model.W2.T + model.b2
    return float(-log_softmax(Z, axis=1)[np.arange(X.shape[0]), labels].mean())


def input_scaling(X):
    """Per-column mean and std of the training inputs (std 1 for constant columns)."""
    mu = X.mean(axis=0)
    sd = X.std(axis=0)
    return mu, np.where(sd > 0, sd, 1.0)


def mlp_train(X, labels, cfg: MlpConfig, model: MlpModel | None = None) -> MlpModel:
    """SGD on cross-entropy; ``loss_history[e]`` is the full-data mean loss after epoch e.

    With ``cfg.standardize_inputs`` the updates run on z-scored inputs and the
    returned model has the scaling folded into its first layer, so it still
    consumes raw activations and computes the same function.
    """
    X = np.ascontiguousarray(np.atleast_2d(np.asarray(X, dtype=np.float64)))
    labels = np.ascontiguousarray(labels, dtype=np.intp)
    if X.shape[0] == 0:
        raise ValueError("empty training set")
    if labels.shape != (X.shape[0],):
        raise DimensionMismatch("one label per row required")
    if labels.min() < 0 or labels.max() >= cfg.n_output:
        raise LabelOutOfRange(f"labels must lie in [0, {cfg.n_output})")
    if X.shape[1] != cfg.n_input:
        raise DimensionMismatch(f"input width {X.shape[1]} != n_input {cfg.n_input}")
    warm_start = model is not None
    model = model.copy() if warm_start else init_model(cfg)
    if cfg.standardize_inputs:
        mu, sd = input_scaling(X)
        X = np.ascontiguousarray((X - mu) / sd)
        if warm_start:
            # express the given model in standardized coordinates
            model.b1 = model.b1 + model.W1 @ mu
            model.W1 = np.ascontiguousarray(model.W1 * sd)
    shuffle = np.random.default_rng([cfg.seed, 1])
    for _ in range(cfg.epochs):
        order = shuffle.permutation(X.shape[0]).astype(np.intp)
        if cfg.batch_size == 1:
            kernels.mlp_sgd_epoch(model.W1, model.b1, model.W2, model.b2, X, labels, order, cfg.lr)
        else:
            for i in range(0, order.size, cfg.batch_size):
                idx = order[i:i + cfg.batch_size]
                _, grads = loss_and_grad(model, X[idx], labels[idx])
                for p, g in zip(model.params(), grads):
                    p -= cfg.lr * g / idx.size
        model.loss_history.append(mean_loss(model, X, labels))
    if cfg.standardize_inputs:
        model.W1 = np.ascontiguousarray(model.W1 / sd)
        model.b1 = model.b1 - model.W1 @ mu
    return model


def training_accuracy(model: MlpModel, X, labels) -> float:
    return float(np.mean(np.argmax(mlp_posteriors(model, X), axis=1) == np.asarray(labels)))


# ----------------------------------------------------------------- files


def save_model(model: MlpModel, path):
    write_container(path, MAGIC, [model.n_input, model.n_hidden, model.n_output], model.params())


def load_model(path) -> MlpModel:
    ints, payload = read_container(path, MAGIC)
    if len(ints) != 3:
        raise FormatError(f"{path}: bad MLP header")
    I, H, V = ints
    W1, off = take(payload, 0, (H, I))
    b1, off = take(payload, off, (H,))
    W2, off = take(payload, off, (V, H))
    b2, off = take(payload, off, (V,))
    if off != payload.size:
        raise FormatError(f"{path}: trailing data")
    return MlpModel(W1, b1, W2, b2)


def write_loss_csv(model: MlpModel, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["epoch", "loss"])
        for e, loss in enumerate(model.loss_history, start=1):
            w.writerow([e, repr(float(loss))])


__all__ = [
    "MlpConfig", "MlpModel", "init_model", "mlp_forward", "mlp_posteriors", "mlp_train",
    "loss_and_grad", "mean_loss", "save_model", "load_model", "write_loss_csv",
]
