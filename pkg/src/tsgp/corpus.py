"""Model-building pipeline: synthetic problems, function harvesting,
semantic k-NN search (brute force and IVF) and training-pair mining."""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from . import expr, semantics, stdgp
from .expr import PrimitiveSet
from .stdgp import GPConfig, DOUBLE_TOURNAMENT


@dataclass
class SyntheticProblem:
    """Linear target with Gaussian noise on standard-normal inputs."""

    X: np.ndarray
    w: np.ndarray
    y: np.ndarray
    noise_sigma: float

    # split view consumed by the GP engines (harvesting trains on all rows)
    @property
    def X_train(self):
        return self.X

    @property
    def y_train(self):
        return self.y

    @property
    def X_test(self):
        return self.X

    @property
    def y_test(self):
        return self.y


@dataclass
class CorpusEntry:
    id: int
    tokens: list
    semantics: np.ndarray
    problem_id: int


@dataclass
class TrainingPair:
    input_tokens: list
    output_tokens: list
    sd: float


def gen_synthetic_problem(d: int, m: int, noise_sigma: float,
                          rng: np.random.Generator) -> SyntheticProblem:
    """X ~ N(0,1)^{m x d}; y = standardize(Xw + eps), eps ~ N(0, noise_sigma^2)."""
    if m < 10:
        raise ValueError("m must be >= 10")
    X = rng.standard_normal((m, d))
    w = rng.standard_normal(d)
    raw = X @ w + noise_sigma * rng.standard_normal(m)
    y, _ = semantics.standardize(raw)
    return SyntheticProblem(X=X, w=w, y=y, noise_sigma=noise_sigma)


def harvest_functions(problem: SyntheticProblem, gp_config: GPConfig,
                      sem_points: np.ndarray, rng: np.random.Generator,
                      problem_id: int = 0, start_id: int = 0) -> list:
    """Run the GP engine and keep every unique, finite-semantics individual.

    All generations contribute (not just the final population); duplicates are
    collapsed on the canonical prefix string.
    """
    if gp_config.selection != DOUBLE_TOURNAMENT:
        raise ValueError("harvesting requires double tournament selection")
    seen = {}

    def collect(_gen, population):
        for ind in population:
            key = expr.to_string(ind.tree)
            if key not in seen:
                seen[key] = ind.tree

    stdgp.run_stdgp(gp_config, problem, rng, on_generation=collect,
                    log_variations=False)

    entries = []
    next_id = start_id
    for key, tree in seen.items():
        sem = semantics.semantics_of(tree, sem_points)
        if not sem.finite:
            continue
        entries.append(CorpusEntry(id=next_id, tokens=key.split(),
                                   semantics=sem.values, problem_id=problem_id))
        next_id += 1
    return entries


def _semantics_matrix(corpus: list) -> np.ndarray:
    return np.stack([e.semantics for e in corpus])


def knn_neighbors(corpus: list, query_id: int, k: int) -> list:
    """Brute-force k nearest entries by semantic distance.

    Excludes the query itself and any zero-distance candidate; ascending by
    (sd, id). Returns at most k (id, sd) tuples.
    """
    if len(corpus) < 2:
        raise ValueError("corpus must have at least 2 entries")
    if k < 1:
        raise ValueError("k must be >= 1")
    ids = np.array([e.id for e in corpus])
    S = _semantics_matrix(corpus)
    q = S[int(np.flatnonzero(ids == query_id)[0])]
    sd = np.linalg.norm(S - q, axis=1)
    keep = (ids != query_id) & (sd > 0.0)
    order = np.lexsort((ids[keep], sd[keep]))[:k]
    return [(int(i), float(s)) for i, s in zip(ids[keep][order], sd[keep][order])]


@dataclass
class IvfIndex:
    """Inverted-file index: k-means partition of the corpus semantics."""

    corpus: list
    centroids: np.ndarray
    clusters: list = field(default_factory=list)  # list of entry-index arrays


def build_ivf_index(corpus: list, n_clusters: int,
                    rng: np.random.Generator, n_iter: int = 25) -> IvfIndex:
    """Seeded Lloyd k-means (fixed iteration cap) over entry semantics."""
    if n_clusters > len(corpus):
        raise ValueError("n_clusters must be <= corpus size")
    S = _semantics_matrix(corpus)
    centroids = S[rng.choice(len(S), size=n_clusters, replace=False)].copy()
    assign = None
    sq = (S ** 2).sum(axis=1)
    for _ in range(n_iter):
        d2 = sq[:, None] - 2.0 * S @ centroids.T + (centroids ** 2).sum(axis=1)
        new_assign = d2.argmin(axis=1)
        if assign is not None and np.array_equal(new_assign, assign):
            break
        assign = new_assign
        for c in range(n_clusters):
            members = S[assign == c]
            if len(members):  # empty clusters keep their centroid
                centroids[c] = members.mean(axis=0)
    clusters = [np.flatnonzero(assign == c) for c in range(n_clusters)]
    return IvfIndex(corpus=corpus, centroids=centroids, clusters=clusters)


def query_ivf(index: IvfIndex, query_id: int, k: int, n_probe: int) -> list:
    """Search the n_probe closest clusters; same exclusions/order as knn_neighbors."""
    by_id = {e.id: i for i, e in enumerate(index.corpus)}
    q = index.corpus[by_id[query_id]].semantics
    cdist = np.linalg.norm(index.centroids - q, axis=1)
    probe = np.argsort(cdist, kind="stable")[:max(1, n_probe)]
    members = np.concatenate([index.clusters[c] for c in probe])
    ids = np.array([index.corpus[i].id for i in members])
    S = np.stack([index.corpus[i].semantics for i in members])
    sd = np.linalg.norm(S - q, axis=1)
    keep = (ids != query_id) & (sd > 0.0)
    order = np.lexsort((ids[keep], sd[keep]))[:k]
    return [(int(i), float(s)) for i, s in zip(ids[keep][order], sd[keep][order])]


def _knn_all(corpus: list, k: int, block: int = 512) -> dict:
    """Brute-force neighbors for every entry at once (blocked distance matrix)."""
    ids = np.array([e.id for e in corpus])
    S = _semantics_matrix(corpus)
    sq = (S ** 2).sum(axis=1)
    out = {}
    shortlist = k + 10  # approximate top-k, then exact re-rank
    for lo in range(0, len(S), block):
        hi = min(lo + block, len(S))
        d2 = np.maximum(sq[lo:hi, None] - 2.0 * S[lo:hi] @ S.T + sq[None, :], 0.0)
        for r in range(lo, hi):
            row = d2[r - lo]
            n_cand = min(shortlist, len(row))
            cand = np.argpartition(row, n_cand - 1)[:n_cand]
            sd = np.linalg.norm(S[cand] - S[r], axis=1)
            keep = (ids[cand] != ids[r]) & (sd > 0.0)
            order = np.lexsort((ids[cand][keep], sd[keep]))[:k]
            out[int(ids[r])] = [
                (int(i), float(s))
                for i, s in zip(ids[cand][keep][order], sd[keep][order])]
    return out


def mine_pairs(corpus: list, k: int, sd_max: float = 100.0,
               max_len: int = 100, index: IvfIndex = None,
               n_probe: int = None) -> tuple:
    """Emit (input -> neighbor) training pairs with 0 < sd < sd_max.

    Pairs whose input or output exceeds ``max_len`` tokens are dropped; the
    drop count is returned alongside the pairs.
    """
    pairs = []
    dropped = 0
    by_id = {e.id: e for e in corpus}
    if index is None:
        all_neighbors = _knn_all(corpus, k)
    for e in corpus:
        if index is not None:
            probe = n_probe if n_probe is not None else len(index.clusters)
            neighbors = query_ivf(index, e.id, k, probe)
        else:
            neighbors = all_neighbors[e.id]
        for nid, sd in neighbors:
            if not 0.0 < sd < sd_max:
                continue
            out_tokens = by_id[nid].tokens
            if len(e.tokens) > max_len or len(out_tokens) > max_len:
                dropped += 1
                continue
            pairs.append(TrainingPair(input_tokens=list(e.tokens),
                                      output_tokens=list(out_tokens), sd=sd))
    return pairs, dropped


def build_corpus(n_problems: int, gp_config: GPConfig, *, d: int = 4,
                 m: int = 200, noise_sigma: float = 0.1, m_sem: int = 100,
                 rng: np.random.Generator,
                 prims: PrimitiveSet = None) -> tuple:
    """Full harvesting pass: problems -> functions -> annotated corpus.

    One shared m_sem standard-input sample keeps all semantics comparable.
    Returns (entries, sem_points).
    """
    sem_points = semantics.sample_standard_inputs(m_sem, d, rng)
    entries = []
    for pid in range(n_problems):
        problem = gen_synthetic_problem(d, m, noise_sigma, rng)
        entries.extend(harvest_functions(problem, gp_config, sem_points, rng,
                                         problem_id=pid, start_id=len(entries)))
    return entries, sem_points


# --- jsonl serialization -----------------------------------------------------

def write_corpus_jsonl(corpus: list, path):
    with open(path, "w", encoding="utf-8") as fh:
        for e in corpus:
            fh.write(json.dumps({"id": e.id, "problem_id": e.problem_id,
                                 "tokens": e.tokens,
                                 "semantics": [float(x) for x in e.semantics]})
                     + "\n")


def read_corpus_jsonl(path) -> list:
    out = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            obj = json.loads(line)
            out.append(CorpusEntry(id=obj["id"], problem_id=obj["problem_id"],
                                   tokens=obj["tokens"],
                                   semantics=np.asarray(obj["semantics"])))
    return out


def write_pairs_jsonl(pairs: list, path):
    with open(path, "w", encoding="utf-8") as fh:
        for p in pairs:
            fh.write(json.dumps({"input": p.input_tokens, "output": p.output_tokens,
                                 "sd": p.sd}) + "\n")


def read_pairs_jsonl(path) -> list:
    out = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            obj = json.loads(line)
            out.append(TrainingPair(input_tokens=obj["input"],
                                    output_tokens=obj["output"], sd=obj["sd"]))
    return out
