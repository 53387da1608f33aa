"""Genetic optimization of the word-HMM probabilities (A and pi).

A chromosome is the row-major transition matrix followed by the initial
distribution. MLP weights and class priors stay frozen. Fitness is the
negative mean squared error between the forward pass's per-step state
distributions and the one-hot truth on a development set.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

from asrlab import kernels
from asrlab.decoder import WordHmm, scaled_likelihoods
from asrlab.errors import AllPathsImpossible, InvalidChromosome


@dataclass(frozen=True)
class GaConfig:
    population: int = 30
    generations: int = 100
    crossover_rate: float = 0.9
    mutation_rate_per_gene: float = 0.01
    mutation_sigma: float = 0.05
    tournament_size: int = 3
    elite_count: int = 2
    seed: int = 0
    seed_with_baseline: bool = True
    fitness_mode: str = "mse"

    def __post_init__(self):
        if self.population < 2:
            raise ValueError("population must be >= 2")
        if not 0 <= self.elite_count < self.population:
            raise ValueError("need 0 <= elite_count < population")
        for name in ("crossover_rate", "mutation_rate_per_gene"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1]")
        if self.tournament_size < 1 or self.generations < 0 or self.mutation_sigma < 0:
            raise ValueError("invalid tournament size, generation count or sigma")
        if self.fitness_mode not in ("mse", "wra"):
            raise ValueError("fitness_mode must be 'mse' or 'wra'")


@dataclass(frozen=True)
class FitnessRecord:
    generation: int
    best_fitness: float
    mean_fitness: float


@dataclass
class Chromosome:
    genes: np.ndarray

    @property
    def n_states(self):
        return states_for_length(self.genes.size)

    @property
    def transition(self):
        V = self.n_states
        return self.genes[:V * V].reshape(V, V)

    @property
    def prior(self):
        V = self.n_states
        return self.genes[V * V:]

    def to_hmm(self, class_priors) -> WordHmm:
        return WordHmm(self.transition.copy(), self.prior.copy(), np.asarray(class_priors, dtype=np.float64).copy())

    @classmethod
    def from_hmm(cls, hmm: WordHmm):
        return cls(np.concatenate([hmm.transition.reshape(-1), hmm.prior]))


def states_for_length(n):
    V = (math.isqrt(1 + 4 * n) - 1) // 2
    if V < 1 or V * V + V != n:
        raise InvalidChromosome(f"{n} genes is not V*V + V for any V")
    return V


def repair(genes) -> Chromosome:
    """Clamp negatives to 0 and renormalize each A-row and pi; all-zero rows become uniform."""
    genes = np.array(genes, dtype=np.float64)
    if not np.all(np.isfinite(genes)):
        raise InvalidChromosome("non-finite gene")
    V = states_for_length(genes.size)
    rows = np.maximum(genes, 0.0).reshape(V + 1, V)
    sums = rows.sum(axis=1, keepdims=True)
    rows = np.where(sums > 0, rows / np.where(sums > 0, sums, 1.0), 1.0 / V)
    return Chromosome(rows.reshape(-1))


def is_simplex_valid(chrom: Chromosome, tol=1e-9):
    V = chrom.n_states
    rows = chrom.genes.reshape(V + 1, V)
    return bool(np.all(rows >= 0) and np.all(np.abs(rows.sum(axis=1) - 1.0) <= tol))


# --------------------------------------------------------------- fitness


@dataclass
class DevSet:
    """Scaled likelihoods and truth for each development sequence."""

    likelihoods: list
    truths: list

    @classmethod
    def from_posteriors(cls, pairs, class_priors):
        lik, tru = [], []
        for posteriors, truth in pairs:
            lik.append(np.ascontiguousarray(scaled_likelihoods(posteriors, class_priors)))
            tru.append(np.asarray(truth, dtype=np.intp))
        return cls(lik, tru)

    @property
    def n_steps(self):
        return sum(t.size for t in self.truths)


def _mse_fitness(chrom: Chromosome, dev: DevSet):
    A = np.ascontiguousarray(chrom.transition)
    pi = np.ascontiguousarray(chrom.prior)
    total = 0.0
    for L, truth in zip(dev.likelihoods, dev.truths):
        alpha, loglik = kernels.forward_scaled(pi, A, L)
        if loglik == -np.inf:
            raise AllPathsImpossible("forward probability vanished on the dev set")
        err = alpha * alpha
        steps = np.arange(truth.size)
        total += err.sum() - 2.0 * alpha[steps, truth].sum() + truth.size
    return -total / dev.n_steps


def _wra_fitness(chrom: Chromosome, dev: DevSet):
    with np.errstate(divide="ignore"):
        log_A = np.log(chrom.transition)
        log_pi = np.log(chrom.prior)
    correct = 0
    for L, truth in zip(dev.likelihoods, dev.truths):
        with np.errstate(divide="ignore"):
            path, _ = kernels.viterbi_log(log_pi, log_A, np.log(L))
        correct += int(np.sum(path == truth))
    return correct / dev.n_steps


def fitness(chromosome, dev_set, class_priors=None, mode="mse") -> float:
    """Negative mean squared error of forward per-step scores vs one-hot truth (higher is better).

    ``dev_set`` is a :class:`DevSet` or a list of (posterior matrix, truth)
    pairs, in which case ``class_priors`` is required.
    """
    if not isinstance(dev_set, DevSet):
        dev_set = DevSet.from_posteriors(dev_set, class_priors)
    chrom = chromosome if isinstance(chromosome, Chromosome) else Chromosome(np.asarray(chromosome, dtype=np.float64))
    if not is_simplex_valid(chrom):
        raise InvalidChromosome("chromosome rows are not probability vectors; repair it first")
    if mode == "mse":
        return _mse_fitness(chrom, dev_set)
    if mode == "wra":
        return _wra_fitness(chrom, dev_set)
    raise ValueError(f"unknown fitness mode {mode!r}")


# ------------------------------------------------------------- evolution


def _random_chromosome(V, rng):
    return Chromosome(rng.dirichlet(np.ones(V), size=V + 1).reshape(-1))


def _tournament(fits, k, rng):
    picks = rng.integers(fits.size, size=k)
    return int(picks[np.argmax(fits[picks])])


def evolve(dev_set, baseline_hmm: WordHmm, cfg: GaConfig, on_generation=None):
    """Returns (best WordHmm found, list of FitnessRecord, one per generation 0..G).

    ``on_generation(gen, population, fitnesses)`` is called after each
    evaluation, mainly so tests can audit every individual.
    """
    if not isinstance(dev_set, DevSet):
        dev_set = DevSet.from_posteriors(dev_set, baseline_hmm.class_priors)
    if not dev_set.truths:
        raise ValueError("empty development set")
    V = baseline_hmm.n_states
    rng = np.random.default_rng(cfg.seed)
    population = [repair(Chromosome.from_hmm(baseline_hmm).genes)] if cfg.seed_with_baseline else []
    while len(population) < cfg.population:
        population.append(_random_chromosome(V, rng))

    def evaluate(pop):
        return np.array([fitness(c, dev_set, mode=cfg.fitness_mode) for c in pop])

    history = []
    fits = evaluate(population)
    best, best_fit = None, -np.inf
    for gen in range(cfg.generations + 1):
        top = int(np.argmax(fits))
        if fits[top] > best_fit:
            best, best_fit = population[top], float(fits[top])
        history.append(FitnessRecord(gen, float(fits.max()), float(fits.mean())))
        if on_generation is not None:
            on_generation(gen, population, fits)
        if gen == cfg.generations:
            break
        ranked = np.argsort(-fits, kind="stable")
        children = [Chromosome(population[i].genes.copy()) for i in ranked[:cfg.elite_count]]
        n_genes = population[0].genes.size
        while len(children) < cfg.population:
            p1 = population[_tournament(fits, cfg.tournament_size, rng)].genes
            p2 = population[_tournament(fits, cfg.tournament_size, rng)].genes
            if rng.random() < cfg.crossover_rate:
                mask = rng.random(n_genes) < 0.5
                offspring = [np.where(mask, p1, p2), np.where(mask, p2, p1)]
            else:
                offspring = [p1.copy(), p2.copy()]
            for genes in offspring:
                mutate = rng.random(n_genes) < cfg.mutation_rate_per_gene
                noise = rng.normal(0.0, cfg.mutation_sigma, n_genes)
                if len(children) < cfg.population:
                    children.append(repair(genes + mutate * noise))
        population = children
        fits = evaluate(population)
    return best.to_hmm(baseline_hmm.class_priors), history


def write_history_csv(history, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["generation", "best_fitness", "mean_fitness"])
        for rec in history:
            w.writerow([rec.generation, repr(rec.best_fitness), repr(rec.mean_fitness)])
