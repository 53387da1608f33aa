"""Hybrid HMM/MLP decoding over a word-level HMM.

States are vocabulary words. MLP posteriors become scaled likelihoods
p(q|x) / p(q), and Viterbi over the word-transition matrix recovers the
spoken word sequence of a session. Isolated-word recognition is the T = 1
case.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from asrlab import kernels
from asrlab._binio import read_container, take, write_container
from asrlab.errors import (
    AllPathsImpossible,
    DimensionMismatch,
    EmptyLabels,
    EmptySequence,
    FormatError,
    LabelOutOfRange,
    ZeroPrior,
)
from asrlab.mlp import mlp_posteriors
from asrlab.som import som_encode_batch

MAGIC = b"ASRHMM\x00\x00"
SIMPLEX_TOL = 1e-9


@dataclass
class WordHmm:
    transition: np.ndarray
    prior: np.ndarray
    class_priors: np.ndarray

    def __post_init__(self):
        self.transition = np.ascontiguousarray(self.transition, dtype=np.float64)
        self.prior = np.ascontiguousarray(self.prior, dtype=np.float64)
        self.class_priors = np.ascontiguousarray(self.class_priors, dtype=np.float64)
        V = self.prior.size
        if self.transition.shape != (V, V) or self.class_priors.shape != (V,):
            raise DimensionMismatch("transition must be VxV and priors length V")

    @property
    def n_states(self):
        return self.prior.size

    def validate(self, tol=SIMPLEX_TOL):
        if np.any(self.transition < 0) or np.any(np.abs(self.transition.sum(axis=1) - 1.0) > tol):
            raise ValueError("transition rows must be probability vectors")
        if np.any(self.prior < 0) or abs(self.prior.sum() - 1.0) > tol:
            raise ValueError("prior must be a probability vector")
        if np.any(self.class_priors <= 0) or abs(self.class_priors.sum() - 1.0) > tol:
            raise ValueError("class priors must be strictly positive and sum to 1")
        return self


@dataclass
class DecodeResult:
    word_indices: np.ndarray
    log_score: float
    per_step_scores: np.ndarray
    # best-path cumulative log score at each step; last entry == log_score
    path_scores: np.ndarray | None = None


def _log(x):
    with np.errstate(divide="ignore"):
        return np.log(x)


# ---------------------------------------------------------------- priors


def estimate_class_priors(labels, V, smoothing=1.0) -> np.ndarray:
    """Additively smoothed relative frequencies (count + s) / (N + V s)."""
    if V < 1:
        raise ValueError("V must be >= 1")
    if smoothing < 0:
        raise ValueError("smoothing must be >= 0")
    labels = np.asarray(labels, dtype=np.int64)
    if labels.size and (labels.min() < 0 or labels.max() >= V):
        raise LabelOutOfRange(f"labels must lie in [0, {V})")
    N = labels.size
    if N == 0 and smoothing == 0:
        raise EmptyLabels("no labels and no smoothing")
    counts = np.bincount(labels, minlength=V).astype(np.float64)
    return (counts + smoothing) / (N + V * smoothing)


def estimate_transitions(sequences, V, smoothing=1.0) -> np.ndarray:
    """Row-normalized word-bigram counts over label sequences, add-``smoothing``."""
    counts = np.zeros((V, V))
    for seq in sequences:
        seq = np.asarray(seq, dtype=np.int64)
        if seq.size and (seq.min() < 0 or seq.max() >= V):
            raise LabelOutOfRange(f"labels must lie in [0, {V})")
        np.add.at(counts, (seq[:-1], seq[1:]), 1.0)
    counts += smoothing
    totals = counts.sum(axis=1, keepdims=True)
    # a row never seen and unsmoothed falls back to uniform
    return np.where(totals > 0, counts / np.where(totals > 0, totals, 1.0), 1.0 / V)


def build_hmm(train_sequences, V, smoothing=1.0) -> WordHmm:
    """Baseline HMM from training label statistics: bigram A, pi = class priors."""
    labels = np.concatenate([np.asarray(s, dtype=np.int64) for s in train_sequences]) if train_sequences else []
    priors = estimate_class_priors(labels, V, smoothing)
    return WordHmm(transition=estimate_transitions(train_sequences, V, smoothing), prior=priors.copy(),
                   class_priors=priors)


def scaled_likelihoods(posteriors, class_priors) -> np.ndarray:
    posteriors = np.atleast_2d(np.asarray(posteriors, dtype=np.float64))
    class_priors = np.asarray(class_priors, dtype=np.float64)
    if np.any(class_priors <= 0):
        raise ZeroPrior("class priors must be strictly positive")
    if posteriors.shape[1] != class_priors.size:
        raise DimensionMismatch("posterior width != number of classes")
    return posteriors / class_priors


# --------------------------------------------------------------- lattice


def _check_lattice(hmm, likelihoods):
    L = np.ascontiguousarray(np.atleast_2d(np.asarray(likelihoods, dtype=np.float64)))
    if L.shape[0] < 1 or L.size == 0:
        raise EmptySequence("need at least one step")
    if L.shape[1] != hmm.n_states:
        raise DimensionMismatch(f"likelihood width {L.shape[1]} != {hmm.n_states} states")
    if np.any(L < 0):
        raise ValueError("likelihoods must be non-negative")
    return L


def _normalize_log_rows(delta):
    finite_max = np.max(delta, axis=1, keepdims=True)
    with np.errstate(invalid="ignore"):
        e = np.exp(delta - finite_max)
    e[~np.isfinite(finite_max[:, 0])] = 0.0
    s = e.sum(axis=1, keepdims=True)
    return np.where(s > 0, e / np.where(s > 0, s, 1.0), 0.0)


def viterbi(hmm: WordHmm, likelihoods) -> DecodeResult:
    """Max-probability state path in the log domain; ties go to the lower state."""
    L = _check_lattice(hmm, likelihoods)
    path, delta = kernels.viterbi_log(_log(hmm.prior), _log(hmm.transition), _log(L))
    log_score = float(delta[-1].max())
    if log_score == -np.inf:
        raise AllPathsImpossible("every state path has zero probability")
    steps = np.arange(L.shape[0])
    return DecodeResult(
        word_indices=np.asarray(path, dtype=np.int64),
        log_score=log_score,
        per_step_scores=_normalize_log_rows(delta),
        path_scores=delta[steps, path],
    )


def forward_scores(hmm: WordHmm, likelihoods):
    """Scaled forward pass: (T x V filtered state distributions, total log-likelihood)."""
    L = _check_lattice(hmm, likelihoods)
    alpha, loglik = kernels.forward_scaled(hmm.prior, hmm.transition, L)
    if loglik == -np.inf:
        raise AllPathsImpossible("forward probability vanished")
    return alpha, float(loglik)


# ---------------------------------------------------------- full decoder


def utterance_likelihoods(mlp_model, som_codebook, hmm, utterances, encoding="soft"):
    acts = som_encode_batch(som_codebook, utterances, encoding)
    return scaled_likelihoods(mlp_posteriors(mlp_model, acts), hmm.class_priors)


def decode_utterance_sequence(mlp_model, som_codebook, hmm: WordHmm, utterances, encoding="soft") -> DecodeResult:
    """som_encode -> mlp_posteriors -> scaled_likelihoods -> viterbi (forward rows as scores)."""
    if len(utterances) == 0:
        raise EmptySequence("no utterances to decode")
    L = utterance_likelihoods(mlp_model, som_codebook, hmm, utterances, encoding)
    result = viterbi(hmm, L)
    result.per_step_scores, _ = forward_scores(hmm, L)
    return result


# ----------------------------------------------------------------- files


def save_hmm(hmm: WordHmm, path):
    write_container(path, MAGIC, [hmm.n_states], [hmm.transition, hmm.prior, hmm.class_priors])


def load_hmm(path) -> WordHmm:
    ints, payload = read_container(path, MAGIC)
    if len(ints) != 1:
        raise FormatError(f"{path}: bad HMM header")
    (V,) = ints
    A, off = take(payload, 0, (V, V))
    pi, off = take(payload, off, (V,))
    cp, off = take(payload, off, (V,))
    if off != payload.size:
        raise FormatError(f"{path}: trailing data")
    return WordHmm(A, pi, cp)


def export_hmm_csv(hmm: WordHmm, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        V = hmm.n_states
        w.writerow(["row"] + [f"to{q}" for q in range(V)])
        for r in range(V):
            w.writerow([f"A{r}"] + [repr(float(v)) for v in hmm.transition[r]])
        w.writerow(["prior"] + [repr(float(v)) for v in hmm.prior])
        w.writerow(["class_prior"] + [repr(float(v)) for v in hmm.class_priors])
