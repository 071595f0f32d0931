"""Bayesian logic regression via genetically evolved mode-jumping MCMC."""

from .engine import (ChainSummary, GmjmcmcConfig, aggregate,
                     aggregation_weights, analyze, detect, evolve, initialize,
                     run_chain, run_chains)
from .glmlik import (BINOMIAL, GAUSSIAN, Dataset, GlmFit, RobustGConfig,
                     design_matrix, fit_glm, log_marglik_jeffreys,
                     log_marglik_robust_g)
from .mjmcmc import (JEFFREYS, ROBUST_G, MjmcmcConfig, ModelScorer,
                     PosteriorStore, inclusion_probs, renormalized_posterior)
from .space import (Population, PriorConfig, enumerate_distinct_trees,
                    log_model_prior, n_trees_of_size, prior_ratio_check)
from .trees import (CanonicalKey, GaOperatorParams, LogicTree, canonical_key,
                    crossover, format_tree, leaf, mutate, parse_tree,
                    reduce_tree)

__all__ = [
    "BINOMIAL", "GAUSSIAN", "JEFFREYS", "ROBUST_G",
    "CanonicalKey", "ChainSummary", "Dataset", "GaOperatorParams", "GlmFit",
    "GmjmcmcConfig", "LogicTree", "MjmcmcConfig", "ModelScorer", "Population",
    "PosteriorStore", "PriorConfig", "RobustGConfig",
    "aggregate", "aggregation_weights", "analyze", "canonical_key",
    "crossover", "design_matrix", "detect", "enumerate_distinct_trees",
    "evolve", "fit_glm", "format_tree", "inclusion_probs", "initialize",
    "leaf", "log_marglik_jeffreys", "log_marglik_robust_g", "log_model_prior",
    "mutate", "n_trees_of_size", "parse_tree", "prior_ratio_check",
    "reduce_tree", "renormalized_posterior", "run_chain", "run_chains",
]

__version__ = "0.1.0"
