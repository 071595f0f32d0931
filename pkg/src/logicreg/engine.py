"""Population evolution across generations, chain orchestration, aggregation.

One chain = initialize a population from marginal leaf screening, alternate
MJMCMC runs with genetic replacement of weak trees, finish with a long run on
the final population, and summarize by tree inclusion probabilities plus the
chain's detected posterior mass.  Independent chains are combined by
mass-proportional weights.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass

import numpy as np
from joblib import Parallel, delayed
from scipy.special import logsumexp

from . import mjmcmc
from .glmlik import Dataset, RobustGConfig, fit_glm, log_marglik_jeffreys
from .mjmcmc import (JEFFREYS, MjmcmcConfig, ModelScorer, PosteriorStore,
                     inclusion_probs)
from .space import Population, PriorConfig
from .trees import (AND, OR, CanonicalKey, GaOperatorParams, LogicTree,
                    canonical_key, crossover, leaf, mutate, reduce_tree)

_DEDUP_RETRIES = 100


@dataclass(frozen=True)
class GmjmcmcConfig:
    """Full tuning-parameter set of a run (keys match the config-file names)."""

    n_init: int = 300
    n_expl: int = 300
    m_fin: int = 10000
    t_max: int = 16
    rho_min: float = 0.2
    p_and: float = 1.0
    p_not: float = 0.2
    p_init: float = 0.5
    p_c: float = 0.9
    rho_del: float = 0.5
    c_max: int = 2
    k_max: int = 10
    d: int = 15
    chains: int = 4
    seed: int = 0
    marglik: str = JEFFREYS
    quad_nodes: int = 64
    jump_prob: float = 0.05
    random_init_population: bool = False
    final_max_steps: int | None = None

    def __post_init__(self):
        if not 0.0 < self.rho_min < 1.0:
            raise ValueError("rho_min must lie in (0,1)")
        for name in ("p_and", "p_not", "p_init", "p_c", "rho_del"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ValueError(f"{name} must lie in [0,1]")
        if min(self.n_init, self.n_expl, self.m_fin, self.t_max, self.c_max,
               self.k_max, self.d, self.chains) < 1:
            raise ValueError("counts must be positive")
        if self.d < self.k_max:
            raise ValueError("population size d must be at least k_max")

    @property
    def p_m(self) -> float:
        return 1.0 - self.p_c

    def ga_params(self) -> GaOperatorParams:
        return GaOperatorParams(p_and=self.p_and, p_not=self.p_not,
                                rho_del=self.rho_del, c_max=self.c_max)

    def mj_config(self) -> MjmcmcConfig:
        return MjmcmcConfig(jump_prob=self.jump_prob)

    def prior_config(self, m: int) -> PriorConfig:
        return PriorConfig(m=m, k_max=self.k_max, c_max=self.c_max)

    def robust_config(self) -> RobustGConfig:
        return RobustGConfig(nodes=self.quad_nodes)


@dataclass(frozen=True)
class ChainSummary:
    """What a finished chain hands to the aggregator."""

    probs: dict[CanonicalKey, float]
    texts: dict[CanonicalKey, str]
    log_mass: float
    generations: int
    models_visited: int


def _make_scorer(pop: Population, data: Dataset, cfg: GmjmcmcConfig,
                 shared_cache: dict | None = None) -> ModelScorer:
    return ModelScorer(pop, data, cfg.prior_config(data.m), marglik=cfg.marglik,
                       robust_cfg=cfg.robust_config(), shared_cache=shared_cache)


def _initial_gamma(d: int, p_init: float, k_max: int,
                   rng: np.random.Generator) -> np.ndarray:
    gamma = rng.random(d) < p_init
    over = int(gamma.sum()) - k_max
    if over > 0:
        drop = rng.choice(np.nonzero(gamma)[0], size=over, replace=False)
        gamma[drop] = False
    return gamma


def _reduce_to_cap(tree: LogicTree, params: GaOperatorParams,
                   rng: np.random.Generator) -> LogicTree:
    while tree.size > params.c_max:
        tree = reduce_tree(tree, params, rng)
    return tree


_EXPLORE_PROB = 0.4


def _leaf_bayes_factors(data: Dataset) -> np.ndarray:
    """Log Bayes factor of each single-leaf model against the null."""
    n = data.n
    null = log_marglik_jeffreys(fit_glm(np.ones((n, 1)), data.y, data.family),
                                n, 0)
    out = np.empty(data.m)
    ones = np.ones(n)
    for j in range(data.m):
        design = np.column_stack([ones, data.X[:, j].astype(np.float64)])
        fit = fit_glm(design, data.y, data.family)
        out[j] = log_marglik_jeffreys(fit, n, 1) - null if fit.rank == 2 \
            else -np.inf
    return out


def pair_explorer(leaf_bf: np.ndarray, params: GaOperatorParams):
    """Deterministic sweep over two-leaf trees ordered by marginal evidence.

    Candidates are every (pair, operator, negation pattern) combination,
    ranked by the summed single-leaf log Bayes factors plus the log
    probability the crossover operator would assign to that operator and
    negation draw; the sweep cycles once exhausted.  A negated leaf carries
    the same marginal evidence as the plain one, so the rank penalties are
    the only thing separating polarity variants of the same pair.
    """
    m = leaf_bf.shape[0]
    ops = [(AND, math.log(params.p_and) if params.p_and > 0 else -math.inf),
           (OR, math.log1p(-params.p_and) if params.p_and < 1 else -math.inf)]
    p_not = min(max(params.p_not, 1e-12), 1 - 1e-12)
    negs = [(ni, nj, (math.log(p_not) if ni else math.log1p(-p_not))
             + (math.log(p_not) if nj else math.log1p(-p_not)))
            for ni in (False, True) for nj in (False, True)]
    ranked = []
    for i in range(m):
        for j in range(i + 1, m):
            evidence = leaf_bf[i] + leaf_bf[j]
            for op, lp_op in ops:
                if lp_op == -math.inf:
                    continue
                for ni, nj, lp_neg in negs:
                    ranked.append((evidence + lp_op + lp_neg, i, j, op, ni, nj))
    ranked.sort(key=lambda r: -r[0])
    idx = 0

    def next_tree() -> LogicTree:
        nonlocal idx
        if idx >= len(ranked):
            idx = 0
        _, i, j, op, ni, nj = ranked[idx]
        idx += 1
        return LogicTree(op=op, left=leaf(i, ni), right=leaf(j, nj))

    return next_tree


_PAIR_SCAN_LEAVES = 20


def refine_candidates(pop: Population, freq: np.ndarray, data: Dataset,
                      cfg: GmjmcmcConfig,
                      leaf_bf: np.ndarray | None = None) -> list[LogicTree]:
    """Conditionally scored two-part candidate trees, best first.

    Two deterministic sources, each scored by an exact GLM fit conditional
    on the trees the last exploration run included at least half the time:

    * refinement — replace an included tree by (tree op leaf) for each
      outside leaf, operator and negation pattern.  This finds conjuncts
      with no marginal signal: a leaf that only matters on the subset where
      the partner tree is false is invisible to any marginal ranking.
    * pair scan — add (leaf op leaf) over all pairs from the
      _PAIR_SCAN_LEAVES strongest leaves by single-leaf Bayes factor.  This
      forms trees neither of whose conjuncts is strong enough to be
      included on its own.
    """
    params = cfg.ga_params()
    included = [i for i in range(pop.d) if freq[i] >= 0.5]
    included = sorted(included, key=lambda i: -freq[i])[:cfg.k_max]
    if not included:
        return []
    cols = {i: pop.trees[i].evaluate(data.X).astype(np.float64)
            for i in included}
    ones = np.ones(data.n)
    if params.p_and >= 1.0:
        ops = [AND]
    elif params.p_and <= 0.0:
        ops = [OR]
    else:
        ops = [AND, OR]
    out = []
    for i in included:
        t = pop.trees[i]
        if t.size + 1 > params.c_max:
            continue
        others = [cols[k] for k in included if k != i]
        base = np.column_stack([ones] + others)
        size = len(others) + 1
        used = t.leaf_set()
        for j in range(data.m):
            if j in used:
                continue
            xj = data.X[:, j].astype(np.float64)
            for tneg in (False, True):
                a = 1.0 - cols[i] if tneg else cols[i]
                for jneg in (False, True):
                    b = 1.0 - xj if jneg else xj
                    for op in ops:
                        c = a * b if op == AND else a + b - a * b
                        fit = fit_glm(np.column_stack([base, c]), data.y,
                                      data.family)
                        if fit.rank < base.shape[1] + 1:
                            continue
                        score = log_marglik_jeffreys(fit, data.n, size)
                        tree = LogicTree(op=op, right=leaf(j, jneg),
                                         left=t.negate() if tneg else t)
                        out.append((score, tree))

    if leaf_bf is not None and params.c_max >= 2:
        top = np.argsort(-leaf_bf)[:_PAIR_SCAN_LEAVES]
        base = np.column_stack([ones] + [cols[i] for i in included])
        size = len(included) + 1
        for a, i in enumerate(top):
            xi = data.X[:, i].astype(np.float64)
            for j in top[a + 1:]:
                xj = data.X[:, j].astype(np.float64)
                for ineg in (False, True):
                    va = 1.0 - xi if ineg else xi
                    for jneg in (False, True):
                        vb = 1.0 - xj if jneg else xj
                        for op in ops:
                            c = va * vb if op == AND else va + vb - va * vb
                            fit = fit_glm(np.column_stack([base, c]), data.y,
                                          data.family)
                            if fit.rank < base.shape[1] + 1:
                                continue
                            score = log_marglik_jeffreys(fit, data.n, size)
                            tree = LogicTree(op=op, left=leaf(int(i), ineg),
                                             right=leaf(int(j), jneg))
                            out.append((score, tree))

    out.sort(key=lambda r: -r[0])
    return [tree for _, tree in out]


def queue_explorer(candidates: list[LogicTree], fallback):
    """Serve queued candidate trees first, then defer to another explorer."""
    it = iter(candidates)

    def next_tree() -> LogicTree:
        return next(it, None) or fallback()

    return next_tree


def _fill_population(members: list[LogicTree], keys: list[CanonicalKey], d: int,
                     propose, fresh_leaf_pool: list[int],
                     params: GaOperatorParams, rng: np.random.Generator,
                     explore=None) -> None:
    """Extend members to size d with canonically distinct proposals.

    With probability _EXPLORE_PROB a slot is taken by ``explore`` (the
    systematic leaf-pair sweep) instead of the inclusion-guided proposer:
    selection pressure alone starves exploration once a population
    concentrates on a few strong trees.
    """
    taken = set(keys)

    def fresh(candidate: LogicTree) -> CanonicalKey | None:
        key = canonical_key(candidate).modulo_complement()
        return key if key not in taken and not key.is_constant else None

    while len(members) < d:
        tree = key = None
        if explore is not None and params.c_max >= 2 \
                and rng.random() < _EXPLORE_PROB:
            for _ in range(_DEDUP_RETRIES):
                cand = explore()
                key = fresh(cand)
                if key is not None:
                    tree = cand
                    break
        if tree is None:
            for _ in range(_DEDUP_RETRIES):
                cand = propose()
                key = fresh(cand)
                if key is not None:
                    tree = cand
                    break
        if tree is None and params.c_max >= 2 and len(fresh_leaf_pool) >= 2:
            # retry budget exhausted: uniformly random two-leaf joins
            for _ in range(_DEDUP_RETRIES * 10):
                i, j = rng.choice(fresh_leaf_pool, size=2, replace=False)
                cand = crossover(leaf(int(i)), leaf(int(j)), params, rng)
                key = fresh(cand)
                if key is not None:
                    tree = cand
                    break
        if tree is None:
            # single-leaf fallback for degenerate pools
            unused = [j for j in fresh_leaf_pool
                      if canonical_key(leaf(j)).modulo_complement() not in taken]
            if unused:
                tree = leaf(int(rng.choice(unused)))
                key = canonical_key(tree).modulo_complement()
        if tree is None:
            raise RuntimeError("cannot fill the population with distinct trees")
        members.append(tree)
        keys.append(key)
        taken.add(key)


def initialize(data: Dataset, cfg: GmjmcmcConfig, rng: np.random.Generator,
               explore=None) -> tuple[Population, int]:
    """Build the first population.

    Returns the population and the models-scored count.

    Founders are the d - k_max leaves with the largest marginal inclusion
    probability after an MJMCMC screening run over all single leaves (the cap
    keeps the search irreducible); the rest of the population is filled by
    random crossovers of founders.  With
    random_init_population the screening is skipped and founders are d - k_max
    uniformly chosen leaves.
    """
    m = data.m
    if m < 2:
        raise ValueError("need at least two covariates")
    params = cfg.ga_params()
    d1_cap = cfg.d - cfg.k_max
    visited = 0

    if cfg.random_init_population:
        order = rng.permutation(m)
        ranked = [(1.0, int(j)) for j in order[:max(d1_cap, 1)]]
    else:
        leaf_pop = Population(trees=tuple(leaf(j) for j in range(m)), d1=0)
        scorer = _make_scorer(leaf_pop, data, cfg)
        init = _initial_gamma(m, cfg.p_init, cfg.k_max, rng)
        _, store = mjmcmc.run(scorer, init, cfg.mj_config(), rng, steps=cfg.n_init)
        incl = inclusion_probs(store)
        visited = len(store)
        by_leaf = {}
        for j in range(m):
            by_leaf[j] = incl.get(leaf_pop.keys[j], 0.0)
        # founders are the d1 leaves with the largest marginal inclusion;
        # rho_min only governs deletions in later generations
        ranked = sorted(((p, j) for j, p in by_leaf.items()), reverse=True)

    # generation material: at least one leaf even when no founder slot is free
    material = [leaf(j) for _, j in ranked[: max(d1_cap, 1)]]
    d1 = min(len(material), d1_cap)
    members = list(material[:d1])
    keys = [canonical_key(t).modulo_complement() for t in members]

    def propose() -> LogicTree:
        i = int(rng.integers(len(material)))
        j = int(rng.integers(len(material)))
        child = crossover(material[i], material[j], params, rng)
        return _reduce_to_cap(child, params, rng)

    _fill_population(members, keys, cfg.d, propose, list(range(m)), params, rng,
                     explore=explore)
    pop = Population(trees=tuple(members), d1=d1, generation=1, keys=tuple(keys))
    return pop, visited


def evolve(pop: Population, incl: dict[CanonicalKey, float], m: int,
           cfg: GmjmcmcConfig, rng: np.random.Generator,
           explore=None) -> Population:
    """Next generation: drop weak non-founders, refill by crossover/mutation.

    Crossover and mutation parents are drawn from the full previous population
    proportionally to inclusion probabilities (uniformly when all are zero);
    mutation's second parent is a uniform leaf from outside the founder set.
    """
    params = cfg.ga_params()
    probs = np.array([incl.get(k, 0.0) for k in pop.keys])

    keep = np.ones(pop.d, dtype=bool)
    for j in range(pop.d1, pop.d):
        if probs[j] < cfg.rho_min:
            keep[j] = False
    members = [t for t, kp in zip(pop.trees, keep) if kp]
    keys = [k for k, kp in zip(pop.keys, keep) if kp]

    # parents come from the full current population, weak trees included
    parents = list(pop.trees)
    weights = probs.copy()
    if weights.sum() <= 0:
        weights = np.ones(len(parents))
    weights = weights / weights.sum()

    founder_idx = pop.founder_indices()
    outside = [j for j in range(m) if j not in founder_idx]

    def pick_parent() -> LogicTree:
        return parents[int(rng.choice(len(parents), p=weights))]

    def propose() -> LogicTree:
        if outside and rng.random() >= cfg.p_c:
            child = mutate(pick_parent(), leaf(int(rng.choice(outside))),
                           params, rng, founders=founder_idx)
        else:
            # crossover; also the only move when every leaf is a founder
            child = crossover(pick_parent(), pick_parent(), params, rng)
        return _reduce_to_cap(child, params, rng)

    _fill_population(members, keys, pop.d, propose, list(range(m)), params, rng,
                     explore=explore)
    return Population(trees=tuple(members), d1=pop.d1,
                      generation=pop.generation + 1, keys=tuple(keys))


def run_chain(data: Dataset, cfg: GmjmcmcConfig, seed) -> ChainSummary:
    """One full GMJMCMC chain; deterministic in (data, cfg, seed)."""
    rng = np.random.default_rng(seed)
    if cfg.random_init_population:
        leaf_bf = np.zeros(data.m)
    else:
        leaf_bf = _leaf_bayes_factors(data)
    explore = pair_explorer(leaf_bf, cfg.ga_params())
    pop, visited = initialize(data, cfg, rng, explore=explore)
    store = PosteriorStore()
    shared_scores: dict = {}
    for t in range(1, cfg.t_max + 1):
        final = t == cfg.t_max
        scorer = _make_scorer(pop, data, cfg, shared_scores)
        init = _initial_gamma(pop.d, cfg.p_init, cfg.k_max, rng)
        store = PosteriorStore()
        if final:
            _, store = mjmcmc.run(scorer, init, cfg.mj_config(), rng,
                                  unique_target=cfg.m_fin,
                                  max_steps=cfg.final_max_steps, store=store)
        else:
            # evolution is guided by the Monte-Carlo (visit-frequency)
            # inclusion estimates: they spread mass over moderately
            # supported trees, which keeps the genetic search diverse
            freq = np.zeros(pop.d)
            _, store = mjmcmc.run(scorer, init, cfg.mj_config(), rng,
                                  steps=cfg.n_expl, store=store,
                                  state_freq=freq)
        visited += len(store)
        incl = inclusion_probs(store)
        if not final:
            mc_incl = {k: float(p) for k, p in zip(pop.keys, freq)}
            gen_explore = explore
            if not cfg.random_init_population:
                gen_explore = queue_explorer(
                    refine_candidates(pop, freq, data, cfg), explore)
            pop = evolve(pop, mc_incl, data.m, cfg, rng, explore=gen_explore)

    texts = {k: str(t) for t, k in zip(pop.trees, pop.keys)}
    probs = {k: incl.get(k, 0.0) for k in pop.keys}
    return ChainSummary(probs=probs, texts=texts, log_mass=store.log_total,
                        generations=cfg.t_max, models_visited=visited)


def chain_seeds(master_seed: int, chains: int, replicate: int = 0) -> list:
    """Independent per-chain seeds from one master seed via spawn keys."""
    root = np.random.SeedSequence(master_seed, spawn_key=(replicate,))
    return list(root.spawn(chains))


def run_chains(data: Dataset, cfg: GmjmcmcConfig, replicate: int = 0,
               n_jobs: int = 1) -> list[ChainSummary]:
    seeds = chain_seeds(cfg.seed, cfg.chains, replicate)
    if n_jobs == 1 or cfg.chains == 1:
        return [run_chain(data, cfg, s) for s in seeds]
    return Parallel(n_jobs=min(n_jobs, cfg.chains))(
        delayed(run_chain)(data, cfg, s) for s in seeds)


def aggregate(summaries: list[ChainSummary]) -> dict[CanonicalKey, float]:
    """Mass-weighted average of per-chain inclusion probabilities."""
    if not summaries:
        raise ValueError("need at least one chain summary")
    weights = aggregation_weights(summaries)
    out: dict[CanonicalKey, float] = {}
    for w, s in zip(weights, summaries):
        for key, p in s.probs.items():
            out[key] = out.get(key, 0.0) + w * p
    return out


def aggregation_weights(summaries: list[ChainSummary]) -> np.ndarray:
    masses = np.array([s.log_mass for s in summaries])
    if not np.isfinite(masses).any():
        return np.full(len(summaries), 1.0 / len(summaries))
    return np.exp(masses - logsumexp(masses))


@dataclass(frozen=True)
class Detection:
    tree: str
    probability: float
    key: CanonicalKey = None


def detect(aggregated: dict[CanonicalKey, float], texts: dict[CanonicalKey, str],
           pi_c: float = 0.5) -> list[Detection]:
    """Trees whose aggregated inclusion probability strictly exceeds pi_c."""
    if not 0.0 < pi_c < 1.0:
        raise ValueError("threshold pi_c must lie in (0,1)")
    hits = [Detection(tree=texts[k], probability=p, key=k)
            for k, p in aggregated.items() if p > pi_c]
    return sorted(hits, key=lambda h: (-h.probability, h.tree))


def chain_texts(summaries: list[ChainSummary]) -> dict[CanonicalKey, str]:
    out: dict[CanonicalKey, str] = {}
    for s in summaries:
        for k, t in s.texts.items():
            out.setdefault(k, t)
    return out


def analyze(data: Dataset, cfg: GmjmcmcConfig, pi_c: float = 0.5,
            n_jobs: int = 1) -> dict:
    """Run all chains, aggregate, and build a result report."""
    t0 = time.perf_counter()
    summaries = run_chains(data, cfg, n_jobs=n_jobs)
    agg = aggregate(summaries)
    texts = chain_texts(summaries)
    weights = aggregation_weights(summaries)
    hits = detect(agg, texts, pi_c)
    wall = time.perf_counter() - t0
    per_chain = {
        str(texts[k]): [s.probs.get(k) for s in summaries] for k in agg
    }
    return {
        "detections": [{"tree": h.tree, "probability": h.probability} for h in hits],
        "trees": sorted(
            ({"tree": texts[k], "probability": p} for k, p in agg.items()),
            key=lambda r: (-r["probability"], r["tree"])),
        "per_chain": per_chain,
        "weights": weights.tolist(),
        "models_visited": [s.models_visited for s in summaries],
        "wall_clock_seconds": wall,
        "summaries": summaries,
        "aggregated": agg,
        "texts": texts,
    }
