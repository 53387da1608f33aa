"""Self-organizing map over utterance feature vectors.

The trained codebook re-encodes an utterance as a soft activation vector over
its K units; that vector is the MLP input, so K fixes the "sysK" input width.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

from asrlab import kernels
from asrlab._binio import read_container, take, write_container
from asrlab.errors import DimensionMismatch, FormatError, InsufficientData

MAGIC = b"ASRSOM\x00\x00"

GRID_SHAPES = {16: (4, 4), 32: (4, 8), 64: (8, 8), 128: (8, 16)}


def grid_shape(k):
    if k in GRID_SHAPES:
        return GRID_SHAPES[k]
    rows = max(d for d in range(1, int(math.isqrt(k)) + 1) if k % d == 0)
    return rows, k // rows


@dataclass(frozen=True)
class SomConfig:
    k_units: int = 64
    grid_rows: int | None = None
    grid_cols: int | None = None
    epochs: int = 100
    lr_initial: float = 0.5
    lr_final: float = 0.01
    sigma_initial: float | None = None
    sigma_final: float = 0.5
    seed: int = 0

    def __post_init__(self):
        if self.k_units < 2:
            raise ValueError("k_units must be >= 2")
        if self.grid_rows is None or self.grid_cols is None:
            rows, cols = grid_shape(self.k_units)
            object.__setattr__(self, "grid_rows", rows)
            object.__setattr__(self, "grid_cols", cols)
        if self.grid_rows * self.grid_cols != self.k_units:
            raise ValueError("grid_rows * grid_cols must equal k_units")
        if self.sigma_initial is None:
            object.__setattr__(self, "sigma_initial", max(self.grid_rows, self.grid_cols) / 2.0)
        if not self.lr_initial >= self.lr_final > 0:
            raise ValueError("need lr_initial >= lr_final > 0")
        if not self.sigma_initial >= self.sigma_final > 0:
            raise ValueError("need sigma_initial >= sigma_final > 0")
        if self.epochs < 0:
            raise ValueError("epochs must be >= 0")


def decay(initial, final, t, epochs):
    """Exponential schedule: initial * (final / initial) ** (t / epochs)."""
    if epochs <= 0:
        return initial
    return initial * (final / initial) ** (t / epochs)


def lattice(rows, cols):
    """Row-major integer coordinates of a rows x cols grid."""
    r, c = np.divmod(np.arange(rows * cols), cols)
    return np.stack([r, c], axis=1)


@dataclass
class SomCodebook:
    prototypes: np.ndarray
    grid_coords: np.ndarray
    encode_bandwidth: float
    grid_rows: int = 0
    grid_cols: int = 0

    def __post_init__(self):
        self.prototypes = np.ascontiguousarray(self.prototypes, dtype=np.float64)
        self.grid_coords = np.asarray(self.grid_coords, dtype=np.int64)
        if not self.grid_rows:
            self.grid_rows = int(self.grid_coords[:, 0].max()) + 1
            self.grid_cols = int(self.grid_coords[:, 1].max()) + 1
        if self.encode_bandwidth <= 0:
            raise ValueError("encode_bandwidth must be positive")

    @property
    def k_units(self):
        return self.prototypes.shape[0]

    @property
    def dim(self):
        return self.prototypes.shape[1]


def _as_matrix(features):
    if isinstance(features, np.ndarray):
        return np.ascontiguousarray(np.atleast_2d(features), dtype=np.float64)
    rows = [getattr(f, "values", f) for f in features]
    if not rows:
        return np.zeros((0, 0))
    return np.ascontiguousarray(np.vstack(rows), dtype=np.float64)


def squared_distances(prototypes, X):
    """(N, K) exact squared Euclidean distances (no |x|^2 - 2xw + |w|^2 shortcut)."""
    out = np.empty((X.shape[0], prototypes.shape[0]))
    step = 64
    for i in range(0, X.shape[0], step):
        out[i:i + step] = ((X[i:i + step, None, :] - prototypes[None, :, :]) ** 2).sum(axis=2)
    return out


def best_matching_units(codebook: SomCodebook, features) -> np.ndarray:
    X = _as_matrix(features)
    if X.shape[1] != codebook.dim:
        raise DimensionMismatch(f"feature dim {X.shape[1]} != codebook dim {codebook.dim}")
    # argmin returns the first minimum: ties go to the lowest unit index
    return np.argmin(squared_distances(codebook.prototypes, X), axis=1)


def median_pairwise_distance(prototypes):
    K = prototypes.shape[0]
    iu = np.triu_indices(K, k=1)
    d = np.sqrt(((prototypes[:, None, :] - prototypes[None, :, :]) ** 2).sum(axis=2))[iu]
    return float(np.median(d)) if d.size else 0.0


def som_train(features, cfg: SomConfig) -> SomCodebook:
    X = _as_matrix(features)
    if X.shape[0] < cfg.k_units:
        raise InsufficientData(f"{X.shape[0]} samples for {cfg.k_units} units")
    rng = np.random.default_rng(cfg.seed)
    W = X[rng.choice(X.shape[0], size=cfg.k_units, replace=False)].copy()
    coords = lattice(cfg.grid_rows, cfg.grid_cols)
    grid_d2 = np.ascontiguousarray(((coords[:, None, :] - coords[None, :, :]) ** 2).sum(axis=2), dtype=np.float64)
    for epoch in range(cfg.epochs):
        lr = decay(cfg.lr_initial, cfg.lr_final, epoch, cfg.epochs)
        sigma = decay(cfg.sigma_initial, cfg.sigma_final, epoch, cfg.epochs)
        order = rng.permutation(X.shape[0]).astype(np.intp)
        kernels.som_train_epoch(W, X, order, grid_d2, lr, sigma)
    bandwidth = median_pairwise_distance(W)
    if not bandwidth > 0:
        bandwidth = 1.0
    return SomCodebook(prototypes=W, grid_coords=coords, encode_bandwidth=bandwidth,
                       grid_rows=cfg.grid_rows, grid_cols=cfg.grid_cols)


def som_encode_batch(codebook: SomCodebook, features, mode="soft") -> np.ndarray:
    """Activation rows for many utterances; see :func:`som_encode`."""
    X = _as_matrix(features)
    if X.shape[1] != codebook.dim:
        raise DimensionMismatch(f"feature dim {X.shape[1]} != codebook dim {codebook.dim}")
    d2 = squared_distances(codebook.prototypes, X)
    if mode == "onehot":
        out = np.zeros_like(d2)
        out[np.arange(X.shape[0]), np.argmin(d2, axis=1)] = 1.0
        return out
    if mode != "soft":
        raise ValueError(f"unknown encoding mode {mode!r}")
    logits = -(d2 - d2.min(axis=1, keepdims=True)) / (2.0 * codebook.encode_bandwidth ** 2)
    a = np.exp(logits)
    return a / a.sum(axis=1, keepdims=True)


def som_encode(codebook: SomCodebook, x, mode="soft") -> np.ndarray:
    """Normalized Gaussian activations exp(-|x - w_k|^2 / 2b^2) / sum."""
    x = np.asarray(getattr(x, "values", x), dtype=np.float64)
    if x.ndim != 1:
        raise DimensionMismatch("som_encode takes a single vector")
    return som_encode_batch(codebook, x[None, :], mode)[0]


def som_quantization_error(codebook: SomCodebook, features) -> float:
    X = _as_matrix(features)
    if X.shape[0] == 0:
        raise ValueError("no features")
    if X.shape[1] != codebook.dim:
        raise DimensionMismatch(f"feature dim {X.shape[1]} != codebook dim {codebook.dim}")
    return float(np.sqrt(squared_distances(codebook.prototypes, X).min(axis=1)).mean())


# ----------------------------------------------------------------- files


def save_codebook(codebook: SomCodebook, path):
    write_container(
        path, MAGIC,
        [codebook.k_units, codebook.dim, codebook.grid_rows, codebook.grid_cols],
        [np.array([codebook.encode_bandwidth]), codebook.prototypes],
    )


def load_codebook(path) -> SomCodebook:
    ints, payload = read_container(path, MAGIC)
    if len(ints) != 4:
        raise FormatError(f"{path}: bad SOM header")
    K, D, rows, cols = ints
    (bw,), off = take(payload, 0, (1,))
    W, off = take(payload, off, (K, D))
    if off != payload.size:
        raise FormatError(f"{path}: trailing data")
    return SomCodebook(prototypes=W, grid_coords=lattice(rows, cols), encode_bandwidth=float(bw),
                       grid_rows=rows, grid_cols=cols)


def export_codebook_csv(codebook: SomCodebook, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["unit", "row", "col"] + [f"w{i}" for i in range(codebook.dim)])
        for k in range(codebook.k_units):
            r, c = codebook.grid_coords[k]
            w.writerow([k, r, c] + [repr(float(v)) for v in codebook.prototypes[k]])
