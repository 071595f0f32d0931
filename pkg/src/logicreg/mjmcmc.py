"""Mode-jumping MCMC over model index vectors for a fixed population.

Posterior estimates come from the store of visited models (renormalized over
everything scored so far), not from visit frequencies, so the kernel mixture
only has to explore well: a small-flip Metropolis move plus an occasional
large jump with greedy local ascent and a symmetric backward construction.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from .glmlik import (Dataset, RobustGConfig, fit_glm,
                     log_marglik_jeffreys, log_marglik_robust_g)
from .space import NEG_INF, Population, PriorConfig, gamma_to_mask
from .trees import CanonicalKey

JEFFREYS = "jeffreys"
ROBUST_G = "robust_g"


@dataclass(frozen=True)
class ScoredModel:
    log_marglik: float
    log_prior: float

    @property
    def log_posterior(self) -> float:
        return self.log_marglik + self.log_prior


class ModelScorer:
    """Scores and caches models (bit masks) for one population and dataset."""

    def __init__(self, pop: Population, data: Dataset, prior_cfg: PriorConfig,
                 marglik: str = JEFFREYS, robust_cfg: RobustGConfig | None = None,
                 shared_cache: dict | None = None):
        if marglik not in (JEFFREYS, ROBUST_G):
            raise ValueError(f"unknown marginal likelihood choice {marglik!r}")
        self.pop = pop
        self.data = data
        self.prior_cfg = prior_cfg
        self.marglik = marglik
        self.robust_cfg = robust_cfg or RobustGConfig()
        self.columns = pop.columns(data.X)
        # effective leaf counts: prior mass must not depend on which
        # equivalent representative the population happens to hold
        self.sizes = np.array([len(k.leaves) for k in pop.keys])
        self._penalties = np.array([
            -math.log(math.comb(prior_cfg.m, int(s))) - (2 * int(s) - 2) * math.log(2.0)
            if 0 < s <= prior_cfg.c_max else NEG_INF
            for s in self.sizes])
        self._keys_by_mask: dict[int, frozenset[CanonicalKey]] = {}
        self._null_fit = fit_glm(np.ones((data.n, 1)), data.y, data.family)
        self._cache: dict[int, ScoredModel] = {}
        # scores keyed by canonical model key survive population changes: a
        # model's posterior does not depend on tree positions or on which
        # complement representative a population holds
        self._shared = shared_cache if shared_cache is not None else {}
        self.fresh_scores = 0

    @property
    def d(self) -> int:
        return self.pop.d

    def model_key(self, gamma: np.ndarray) -> frozenset[CanonicalKey]:
        mask = gamma_to_mask(gamma)
        key = self._keys_by_mask.get(mask)
        if key is None:
            key = frozenset(self.pop.keys[j] for j in np.nonzero(gamma)[0])
            self._keys_by_mask[mask] = key
        return key

    def _log_prior(self, included: np.ndarray) -> float:
        if included.size > self.prior_cfg.k_max:
            return NEG_INF
        return float(self._penalties[included].sum())

    def _log_marglik(self, included: np.ndarray) -> float:
        n = self.data.n
        k = included.size
        if k == 0:
            if self.marglik == ROBUST_G:
                return self._null_fit.loglik
            return log_marglik_jeffreys(self._null_fit, n, 0)
        cols = self.columns[:, included]
        # a column constant on the data is collinear with the intercept
        if ((cols == cols[0]).all(axis=0)).any():
            return NEG_INF
        design = np.concatenate([np.ones((n, 1)), cols], axis=1)
        if self.marglik == ROBUST_G:
            return log_marglik_robust_g(design, self.data.y, self.data.family,
                                        self.robust_cfg, null_fit=self._null_fit)
        fit = fit_glm(design, self.data.y, self.data.family)
        if fit.rank < design.shape[1]:
            return NEG_INF
        return log_marglik_jeffreys(fit, n, k)

    def score(self, gamma: np.ndarray) -> ScoredModel:
        mask = gamma_to_mask(gamma)
        hit = self._cache.get(mask)
        if hit is not None:
            return hit
        key = self.model_key(gamma)
        scored = self._shared.get(key)
        if scored is None:
            included = np.nonzero(gamma)[0]
            log_prior = self._log_prior(included)
            log_ml = self._log_marglik(included) if math.isfinite(log_prior) else NEG_INF
            scored = ScoredModel(log_ml, log_prior)
            self._shared[key] = scored
            self.fresh_scores += 1
        self._cache[mask] = scored
        return scored


class PosteriorStore:
    """Accumulator of distinct visited models and their unnormalized mass."""

    def __init__(self):
        self._entries: dict[frozenset[CanonicalKey], ScoredModel] = {}
        self._log_total = NEG_INF

    def __len__(self) -> int:
        return len(self._entries)

    def __contains__(self, key) -> bool:
        return key in self._entries

    def entries(self) -> dict[frozenset[CanonicalKey], ScoredModel]:
        return dict(self._entries)

    @property
    def log_total(self) -> float:
        """Log of the summed unnormalized posterior mass (s_b of the run)."""
        return self._log_total

    def add(self, key: frozenset[CanonicalKey], scored: ScoredModel) -> None:
        if key in self._entries:
            return
        lp = scored.log_posterior
        if not math.isfinite(lp):
            return
        self._entries[key] = scored
        self._log_total = np.logaddexp(self._log_total, lp)

    def verify_log_total(self) -> float:
        vals = [s.log_posterior for s in self._entries.values()]
        return logsumexp(vals) if vals else NEG_INF


@dataclass(frozen=True)
class MjmcmcConfig:
    """Kernel mixture settings; jump sizes default to [ceil(d/4), ceil(d/2)]."""

    jump_prob: float = 0.05
    jump_min: int | None = None
    jump_max: int | None = None
    ascent_cap: int | None = None     # default 2*d greedy steps

    def __post_init__(self):
        if not 0.0 <= self.jump_prob <= 1.0:
            raise ValueError("jump_prob must lie in [0,1]")

    def jump_range(self, d: int) -> tuple[int, int]:
        lo = self.jump_min if self.jump_min is not None else max(1, math.ceil(d / 4))
        hi = self.jump_max if self.jump_max is not None else max(lo, math.ceil(d / 2))
        return min(lo, d), min(hi, d)

    def steps_cap(self, d: int) -> int:
        return self.ascent_cap if self.ascent_cap is not None else 2 * d


def _record(store: PosteriorStore, scorer: ModelScorer, gamma: np.ndarray,
            scored: ScoredModel) -> None:
    if math.isfinite(scored.log_posterior):
        store.add(scorer.model_key(gamma), scored)


def small_flip_step(gamma: np.ndarray, scorer: ModelScorer, store: PosteriorStore,
                    rng: np.random.Generator) -> np.ndarray:
    """Metropolis move flipping one uniformly chosen bit."""
    current = scorer.score(gamma)
    proposal = gamma.copy()
    j = int(rng.integers(scorer.d))
    proposal[j] = not proposal[j]
    scored = scorer.score(proposal)
    _record(store, scorer, proposal, scored)
    if _accept(current.log_posterior, scored.log_posterior, rng):
        return proposal
    return gamma


def _accept(lp_current: float, lp_proposal: float, rng) -> bool:
    if not math.isfinite(lp_proposal):
        return False
    if not math.isfinite(lp_current):
        return True
    delta = lp_proposal - lp_current
    return delta >= 0 or math.log(rng.random()) < delta


def _greedy_ascent(gamma: np.ndarray, scorer: ModelScorer, store: PosteriorStore,
                   cap: int) -> np.ndarray:
    """Best-single-flip hill climb; ties broken by lowest bit index."""
    state = gamma.copy()
    best = scorer.score(state).log_posterior
    for _ in range(cap):
        best_j = -1
        for j in range(scorer.d):
            state[j] = not state[j]
            scored = scorer.score(state)
            _record(store, scorer, state, scored)
            if scored.log_posterior > best:
                best = scored.log_posterior
                best_j = j
            state[j] = not state[j]
        if best_j < 0:
            break
        state[best_j] = not state[best_j]
    return state


def mode_jump_step(gamma: np.ndarray, scorer: ModelScorer, store: PosteriorStore,
                   cfg: MjmcmcConfig, rng: np.random.Generator) -> np.ndarray:
    """Large jump, greedy ascent, single-bit randomization, symmetric backward."""
    d = scorer.d
    lo, hi = cfg.jump_range(d)
    k_star = int(rng.integers(lo, hi + 1))
    subset = rng.choice(d, size=k_star, replace=False)
    cap = cfg.steps_cap(d)

    jumped = gamma.copy()
    jumped[subset] = ~jumped[subset]
    mode = _greedy_ascent(jumped, scorer, store, cap)

    proposal = mode.copy()
    b = int(rng.integers(d))
    proposal[b] = not proposal[b]
    scored_prop = scorer.score(proposal)
    _record(store, scorer, proposal, scored_prop)

    # backward leg: reverse the same large jump from the proposal and ascend;
    # the proposal's backward density is q(gamma | backward mode), nonzero only
    # when gamma is one flip away from that mode (q is 1/d on those neighbors)
    back = proposal.copy()
    back[subset] = ~back[subset]
    back_mode = _greedy_ascent(back, scorer, store, cap)
    if int(np.sum(back_mode != gamma)) != 1:
        return gamma
    current = scorer.score(gamma)
    if _accept(current.log_posterior, scored_prop.log_posterior, rng):
        return proposal
    return gamma


def run(scorer: ModelScorer, init: np.ndarray, cfg: MjmcmcConfig,
        rng: np.random.Generator, steps: int | None = None,
        unique_target: int | None = None, max_steps: int | None = None,
        store: PosteriorStore | None = None,
        state_freq: np.ndarray | None = None) -> tuple[np.ndarray, PosteriorStore]:
    """Run the kernel mixture for a step budget or until a unique-model target.

    Every scored model with finite posterior lands in the store, including
    the initial state.  When ``state_freq`` is given, per-position visit
    frequencies of the chain states (the Monte-Carlo inclusion estimator)
    are accumulated into it.
    """
    if steps is None and unique_target is None:
        raise ValueError("need a step budget or a unique-model target")
    store = store if store is not None else PosteriorStore()
    gamma = np.asarray(init, dtype=bool).copy()
    _record(store, scorer, gamma, scorer.score(gamma))
    if max_steps is None:
        max_steps = steps if steps is not None else 50 * unique_target
    done = 0
    visits = 1
    if state_freq is not None:
        state_freq += gamma
    while done < max_steps:
        if steps is not None and done >= steps:
            break
        if unique_target is not None and len(store) >= unique_target:
            break
        if rng.random() < cfg.jump_prob:
            gamma = mode_jump_step(gamma, scorer, store, cfg, rng)
        else:
            gamma = small_flip_step(gamma, scorer, store, rng)
        done += 1
        visits += 1
        if state_freq is not None:
            state_freq += gamma
    if state_freq is not None:
        state_freq /= visits
    return gamma, store


def renormalized_posterior(store: PosteriorStore) -> dict[frozenset[CanonicalKey], float]:
    """Posterior over visited models, renormalized to sum to one."""
    entries = store.entries()
    if not entries:
        raise ValueError("posterior store is empty")
    keys = list(entries)
    logs = np.array([entries[k].log_posterior for k in keys])
    total = logsumexp(logs)
    probs = np.exp(logs - total)
    return dict(zip(keys, probs.tolist()))


def inclusion_probs(store: PosteriorStore) -> dict[CanonicalKey, float]:
    """Marginal inclusion probability per tree: sum over models containing it."""
    post = renormalized_posterior(store)
    out: dict[CanonicalKey, float] = {}
    for model_key, p in post.items():
        for tree_key in model_key:
            out[tree_key] = out.get(tree_key, 0.0) + p
    return {k: min(v, 1.0) for k, v in out.items()}
