"""Populations of candidate trees and the tree-complexity model prior."""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from .trees import (AND, OR, CanonicalKey, LogicTree, canonical_key, leaf)

NEG_INF = float("-inf")


@dataclass(frozen=True)
class PriorConfig:
    """Model prior settings: penalty base, model-size and tree-size caps."""

    m: int
    k_max: int
    c_max: int
    a: float = math.exp(-1)

    def __post_init__(self):
        if not 0.0 < self.a < 1.0:
            raise ValueError("penalty base a must lie in (0,1)")
        if self.k_max < 1 or self.c_max < 1:
            raise ValueError("k_max and c_max must be >= 1")


@dataclass(frozen=True)
class Population:
    """An ordered search space of d trees; the first d1 are protected founders.

    Member trees are pairwise distinct by complement-collapsed canonical key:
    a tree and its complement yield the same regression model, so only one
    representative of such a pair may be present.
    """

    trees: tuple[LogicTree, ...]
    d1: int
    generation: int = 1
    keys: tuple[CanonicalKey, ...] = ()

    def __post_init__(self):
        if self.keys == ():
            object.__setattr__(
                self, "keys",
                tuple(canonical_key(t).modulo_complement() for t in self.trees))
        if not 0 <= self.d1 <= len(self.trees):
            raise ValueError("founder count d1 must lie in [0, d]")
        if len(set(self.keys)) != len(self.keys):
            raise ValueError("population trees must be canonically distinct")
        for t in self.trees[: self.d1]:
            if not t.is_leaf:
                raise ValueError("founders must be single leaves")

    @property
    def d(self) -> int:
        return len(self.trees)

    def founder_indices(self) -> frozenset[int]:
        return frozenset(t.index for t in self.trees[: self.d1])

    def columns(self, X: np.ndarray) -> np.ndarray:
        """Evaluate every member tree on the data; returns an n-by-d 0/1 matrix."""
        return np.column_stack([t.evaluate(X) for t in self.trees]).astype(np.float64)

    def to_report(self, inclusion: dict[CanonicalKey, float] | None = None) -> dict:
        incl = inclusion or {}
        return {
            "generation": self.generation,
            "d1": self.d1,
            "trees": [
                {"tree": str(t), "inclusion_probability": incl.get(k)}
                for t, k in zip(self.trees, self.keys)
            ],
        }


def gamma_to_mask(gamma: np.ndarray) -> int:
    bits = np.packbits(np.asarray(gamma, dtype=np.uint8), bitorder="little")
    return int.from_bytes(bits.tobytes(), "little")


def mask_to_gamma(mask: int, d: int) -> np.ndarray:
    return np.array([(mask >> j) & 1 for j in range(d)], dtype=bool)


def n_trees_of_size(m: int, s: int):
    """Number of distinct trees with s leaves over m covariates: C(m,s)*2^(2s-2).

    Counts expressions with per-leaf negation and free AND/OR operator choices,
    collapsed by De Morgan complement pairing.
    """
    if s < 1 or s > m:
        raise ValueError(f"tree size s={s} outside [1, m={m}]")
    return math.comb(m, s) * (1 << (2 * s - 2))


def log_model_prior(gamma: np.ndarray, pop: Population, cfg: PriorConfig) -> float:
    """Unnormalized log prior of a model index vector; -inf outside the caps."""
    gamma = np.asarray(gamma, dtype=bool)
    if gamma.shape[0] != pop.d:
        raise ValueError("model index length does not match the population")
    included = np.nonzero(gamma)[0]
    if included.size > cfg.k_max:
        return NEG_INF
    total = 0.0
    for j in included:
        # effective leaf count of the canonical key, so that every equivalent
        # representative of a tree receives the same prior mass
        s = len(pop.keys[j].leaves)
        if s == 0 or s > cfg.c_max:
            return NEG_INF
        total -= math.log(n_trees_of_size(cfg.m, s))
    return total


def prior_ratio_check(gamma: np.ndarray, j: int, pop: Population,
                      cfg: PriorConfig) -> float:
    """Log prior ratio of adding tree j to the model; must equal -log N(s_j)."""
    gamma = np.asarray(gamma, dtype=bool)
    if gamma[j]:
        raise ValueError(f"tree {j} is already in the model")
    if gamma.sum() + 1 > cfg.k_max:
        raise ValueError("adding the tree would exceed k_max")
    with_j = gamma.copy()
    with_j[j] = True
    return log_model_prior(with_j, pop, cfg) - log_model_prior(gamma, pop, cfg)


def enumerate_distinct_trees(m: int, s: int) -> list[LogicTree]:
    """One representative per distinct size-s tree (the population counted by
    ``n_trees_of_size``).

    Enumerates left-associated chains over each ascending choice of s distinct
    covariates, with every per-leaf negation pattern and operator sequence,
    and keeps the first representative of each complement-collapsed key.
    """
    seen: dict[CanonicalKey, LogicTree] = {}
    for combo in itertools.combinations(range(m), s):
        for negs in itertools.product((False, True), repeat=s):
            for ops in itertools.product((AND, OR), repeat=s - 1):
                t = leaf(combo[0], negs[0])
                for i, op in enumerate(ops, start=1):
                    t = LogicTree(op=op, left=t, right=leaf(combo[i], negs[i]))
                key = canonical_key(t).modulo_complement()
                seen.setdefault(key, t)
    return list(seen.values())
