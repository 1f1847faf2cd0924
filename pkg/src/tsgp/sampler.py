"""Syntax-controlled offspring sampling from the transformer, and the
search loop that uses the model as the sole variation operator.

The legality mask guarantees that every emitted sequence parses to a
valid tree within the token budget and depth limit, for any parameters
(including randomly initialized ones).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import expr, semantics
from .expr import Node, PrimitiveSet
from .model.autodiff import no_grad, Tensor
from .model.transformer import SdTransformer
from .model.vocab import Vocabulary, PAD, BOS, EOS
from .stdgp import Individual, tournament_select
from .trace import RunTrace


def primitives_from_vocab(vocab: Vocabulary) -> PrimitiveSet:
    n_vars = sum(1 for s in vocab.symbols
                 if s.startswith("v") and s[1:].isdigit())
    return PrimitiveSet(n_variables=n_vars)


@dataclass
class SamplerState:
    """Open-subtree accounting during autoregressive emission."""

    emitted: int = 0
    need: int = 1
    depth_stack: list = field(default_factory=lambda: [0])

    @property
    def done(self) -> bool:
        return self.need == 0

    def push(self, is_operator: bool):
        self.emitted += 1
        d = self.depth_stack.pop()
        if is_operator:
            self.depth_stack.extend((d + 1, d + 1))
            self.need += 1
        else:
            self.need -= 1


def legal_mask(state: SamplerState, vocab: Vocabulary,
               max_len: int = 100, max_depth: int = 17) -> np.ndarray:
    """Boolean legality per vocabulary id for the next token.

    EOS only once the tree is complete; operators only while the remaining
    token budget covers this operator, a minimal terminal completion and the
    EOS, and while the current slot depth allows two more levels.
    """
    mask = np.zeros(vocab.size, dtype=bool)
    if state.done:
        mask[EOS] = True
        return mask
    operator_ok = (state.emitted + state.need + 3 <= max_len
                   and state.depth_stack[-1] < max_depth)
    for i, sym in enumerate(vocab.symbols):
        if i in (PAD, BOS, EOS):
            continue
        if sym in expr.OPERATORS:
            mask[i] = operator_ok
        else:
            mask[i] = True
    return mask


def _draw(probs: np.ndarray, mask: np.ndarray, rng: np.random.Generator) -> int:
    p = np.where(mask, probs, 0.0)
    legal = np.flatnonzero(p > 0.0)
    if len(legal) == 0:  # model assigns zero mass to all legal ids
        legal = np.flatnonzero(mask)
        return int(legal[rng.integers(len(legal))])
    c = np.cumsum(p[legal])
    j = int(np.searchsorted(c, rng.random() * c[-1], side="right"))
    return int(legal[min(j, len(legal) - 1)])


def _softmax(x: np.ndarray) -> np.ndarray:
    e = np.exp(x - x.max(axis=-1, keepdims=True))
    return e / e.sum(axis=-1, keepdims=True)


def sample_tokens_batch(model: SdTransformer, parents_tokens: list,
                        sd_desired: float, rngs: list,
                        temperature: float = 1.0,
                        max_depth: int = 17) -> list:
    """Sample one offspring token sequence per parent (lockstep batch).

    Each sequence consumes only its own rng stream, so results are
    independent of how sequences are batched together.
    """
    vocab = model.vocab
    max_len = model.hyper.max_len
    B = len(parents_tokens)
    sds = np.full(B, float(sd_desired))

    width = max(1, max(min(len(t), max_len) for t in parents_tokens))
    enc_ids = np.full((B, width), PAD, dtype=np.int64)
    for i, toks in enumerate(parents_tokens):
        ids = vocab.encode(toks[:max_len])  # encoder-side truncation only
        enc_ids[i, :len(ids)] = ids
    with no_grad():
        enc_out, enc_valid = model.encode(enc_ids, sds)
    enc_out = enc_out.data

    states = [SamplerState() for _ in range(B)]
    seqs = [[] for _ in range(B)]
    active = list(range(B))
    while active:
        idx = np.array(active)
        dec_ids = np.array([[BOS] + seqs[i] for i in active], dtype=np.int64)
        with no_grad():
            logits = model.decode(dec_ids, sds[idx], Tensor(enc_out[idx]),
                                  enc_valid[idx]).data
        probs = _softmax(logits[:, -1, :] / temperature)
        still = []
        for row, i in enumerate(active):
            mask = legal_mask(states[i], vocab, max_len, max_depth)
            tok = _draw(probs[row], mask, rngs[i])
            if tok == EOS:
                continue
            seqs[i].append(tok)
            states[i].push(vocab.symbols[tok] in expr.OPERATORS)
            still.append(i)
        active = still
    return [vocab.decode(s) for s in seqs]


def sample_offspring(model: SdTransformer, parent: Node, sd_desired: float,
                     rng: np.random.Generator, temperature: float = 1.0,
                     max_depth: int = 17,
                     prims: PrimitiveSet = None) -> Node:
    """Sample a single offspring tree; always parses, depth <= max_depth."""
    prims = prims or primitives_from_vocab(model.vocab)
    tokens = sample_tokens_batch(model, [expr.serialize_prefix(parent)],
                                 sd_desired, [rng], temperature, max_depth)[0]
    return expr.parse_prefix(tokens, prims)


@dataclass
class SearchConfig:
    sd_desired: float = 0.1
    pop_size: int = 100
    generations: int = 50
    tournament_size: int = 5
    max_depth: int = 17
    resample_limit: int = 3
    temperature: float = 1.0
    init_depth_min: int = 2
    init_depth_max: int = 5

    def __post_init__(self):
        if self.sd_desired < 0:
            raise ValueError("sd_desired must be >= 0")


def run_tsgp(model: SdTransformer, dataset, config: SearchConfig,
             rng: np.random.Generator, log_variations: bool = True) -> RunTrace:
    """Generational loop with the transformer as the only variation operator."""
    prims = primitives_from_vocab(model.vocab)
    trace = RunTrace(method="tsgp", seed=getattr(dataset, "seed", -1))

    def evaluated(tree: Node) -> Individual:
        pred = expr.evaluate(tree, dataset.X_train)
        return Individual(tree, semantics.rmse(dataset.y_train, pred))

    pop = [evaluated(t) for t in expr.ramped_half_and_half(
        config.pop_size, config.init_depth_min, config.init_depth_max, prims, rng)]
    best = min(pop, key=lambda ind: ind.fitness)
    trace.record(0, best.fitness, best.size)

    for gen in range(1, config.generations + 1):
        parents = [tournament_select(pop, config.tournament_size, rng)
                   for _ in range(config.pop_size)]
        parent_tokens = [expr.serialize_prefix(p.tree) for p in parents]
        rngs = [np.random.default_rng(s)
                for s in rng.integers(0, 2 ** 63, size=config.pop_size)]
        offspring_tokens = sample_tokens_batch(
            model, parent_tokens, config.sd_desired, rngs,
            config.temperature, config.max_depth)

        # resample offspring that came back token-identical to their parent
        for _ in range(config.resample_limit):
            stuck = [i for i in range(config.pop_size)
                     if offspring_tokens[i] == parent_tokens[i]]
            if not stuck:
                break
            redo = sample_tokens_batch(
                model, [parent_tokens[i] for i in stuck], config.sd_desired,
                [rngs[i] for i in stuck], config.temperature, config.max_depth)
            for i, toks in zip(stuck, redo):
                offspring_tokens[i] = toks

        offspring = []
        for i in range(config.pop_size):
            tokens = offspring_tokens[i]
            child = evaluated(expr.parse_prefix(tokens, prims))
            offspring.append(child)
            if log_variations:
                trace.log_variation(
                    gen, parents[i].size, child.size,
                    _sd_on_test(parents[i].tree, child.tree, dataset),
                    tokens != parent_tokens[i])
        pop = offspring
        gen_best = min(pop, key=lambda ind: ind.fitness)
        if gen_best.fitness < best.fitness:
            best = gen_best
        trace.record(gen, best.fitness, best.size)

    trace.final_best_test_rmse = semantics.rmse(
        dataset.y_test, expr.evaluate(best.tree, dataset.X_test))
    trace.final_best_size = best.size
    return trace


def _sd_on_test(parent: Node, child: Node, dataset) -> float:
    sp = expr.evaluate(parent, dataset.X_test)
    sc = expr.evaluate(child, dataset.X_test)
    if not (np.all(np.isfinite(sp)) and np.all(np.isfinite(sc))):
        return math.nan
    return float(np.linalg.norm(sp - sc))
