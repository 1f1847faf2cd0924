"""Additive geometric-semantic baseline with inflate and deflate operators.

An individual is a base tree plus an ordered list of blocks; its output is

    evaluate(base) + sum_i ms_i * (sigmoid(evaluate(R1_i)) - sigmoid(evaluate(R2_i)))

Train-set semantics are cached and updated incrementally by the operators.
No geometric crossover: variation is inflate (probability ``inflate_prob``)
or deflate.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import expr, semantics
from .expr import Node, PrimitiveSet
from .trace import RunTrace


def sigmoid(t: np.ndarray) -> np.ndarray:
    with np.errstate(over="ignore"):
        return 1.0 / (1.0 + np.exp(-t))


@dataclass
class Block:
    ms: float
    r1: Node
    r2: Node

    @property
    def size(self) -> int:
        return expr.size(self.r1) + expr.size(self.r2)

    def contribution(self, X: np.ndarray) -> np.ndarray:
        return self.ms * (sigmoid(expr.evaluate(self.r1, X))
                          - sigmoid(expr.evaluate(self.r2, X)))


@dataclass
class SlimIndividual:
    base: Node
    blocks: list = field(default_factory=list)
    train_semantics: np.ndarray = None
    fitness: float = math.inf

    @property
    def size(self) -> int:
        return expr.size(self.base) + sum(b.size for b in self.blocks)


def slim_evaluate(ind: SlimIndividual, X: np.ndarray) -> np.ndarray:
    """Full (non-cached) evaluation on arbitrary inputs."""
    out = expr.evaluate(ind.base, X)
    for b in ind.blocks:
        out = out + b.contribution(X)
    return out


def _with_fitness(ind: SlimIndividual, y_train) -> SlimIndividual:
    ind.fitness = semantics.rmse(y_train, ind.train_semantics)
    return ind


def make_individual(base: Node, X_train, y_train) -> SlimIndividual:
    ind = SlimIndividual(base=base, train_semantics=expr.evaluate(base, X_train))
    return _with_fitness(ind, y_train)


def inflate(ind: SlimIndividual, prims: PrimitiveSet, rng: np.random.Generator,
            X_train, y_train) -> SlimIndividual:
    """Append one block: ms ~ U(0,1), R1/R2 fresh GROW trees of depth <= 2."""
    block = Block(ms=float(rng.random()),
                  r1=expr.random_tree(expr.GROW, 0, 2, prims, rng),
                  r2=expr.random_tree(expr.GROW, 0, 2, prims, rng))
    child = SlimIndividual(
        base=ind.base,
        blocks=ind.blocks + [block],
        train_semantics=ind.train_semantics + block.contribution(X_train))
    return _with_fitness(child, y_train)


def deflate(ind: SlimIndividual, rng: np.random.Generator,
            X_train, y_train) -> SlimIndividual:
    """Remove one uniformly chosen block; the base tree is never removed."""
    if not ind.blocks:
        return ind
    i = int(rng.integers(len(ind.blocks)))
    removed = ind.blocks[i]
    child = SlimIndividual(
        base=ind.base,
        blocks=ind.blocks[:i] + ind.blocks[i + 1:],
        train_semantics=ind.train_semantics - removed.contribution(X_train))
    return _with_fitness(child, y_train)


@dataclass
class SlimConfig:
    pop_size: int = 100
    generations: int = 50
    tournament_size: int = 5
    inflate_prob: float = 0.2
    init_depth_min: int = 2
    init_depth_max: int = 5


def _tournament(pop, k, rng) -> SlimIndividual:
    best = pop[rng.integers(len(pop))]
    for _ in range(k - 1):
        cand = pop[rng.integers(len(pop))]
        if cand.fitness < best.fitness:
            best = cand
    return best


def run_slim(config: SlimConfig, dataset, rng: np.random.Generator,
             prims: PrimitiveSet = None, log_variations: bool = True) -> RunTrace:
    """Generational loop; trace schema identical to the stdGP engine."""
    prims = prims or PrimitiveSet(n_variables=dataset.X_train.shape[1])
    trace = RunTrace(method="slim", seed=getattr(dataset, "seed", -1))
    Xtr, ytr = dataset.X_train, dataset.y_train

    pop = [make_individual(t, Xtr, ytr) for t in expr.ramped_half_and_half(
        config.pop_size, config.init_depth_min, config.init_depth_max, prims, rng)]
    best = min(pop, key=lambda ind: ind.fitness)
    trace.record(0, best.fitness, best.size)

    for gen in range(1, config.generations + 1):
        offspring = []
        for _ in range(config.pop_size):
            parent = _tournament(pop, config.tournament_size, rng)
            if rng.random() < config.inflate_prob:
                child = inflate(parent, prims, rng, Xtr, ytr)
            else:
                child = deflate(parent, rng, Xtr, ytr)
            offspring.append(child)
            if log_variations:
                trace.log_variation(gen, parent.size, child.size,
                                    _sd_on_test(parent, child, dataset),
                                    child.size != parent.size)
        pop = offspring
        gen_best = min(pop, key=lambda ind: ind.fitness)
        if gen_best.fitness < best.fitness:
            best = gen_best
        trace.record(gen, best.fitness, best.size)

    trace.final_best_test_rmse = semantics.rmse(
        dataset.y_test, slim_evaluate(best, dataset.X_test))
    trace.final_best_size = best.size
    return trace


def _sd_on_test(parent: SlimIndividual, child: SlimIndividual, dataset) -> float:
    sp = slim_evaluate(parent, dataset.X_test)
    sc = slim_evaluate(child, dataset.X_test)
    if not (np.all(np.isfinite(sp)) and np.all(np.isfinite(sc))):
        return math.nan
    return float(np.linalg.norm(sp - sc))
