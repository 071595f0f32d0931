"""End-to-end acceptance suite.

Each test prints one line with the measured figures so a run of
``pytest -v`` gives a pass/fail verdict per criterion.  The scenario
regressions (criteria 1-4, 10) run full multi-chain benchmarks and take
tens of minutes each on a single core; wall-clock bounds stated for a
4-core desktop are scaled by the available core count.
"""

import math
import os
import time
from dataclasses import replace
from itertools import combinations

import numpy as np

import logicreg.scenarios as sc
from logicreg.engine import (ChainSummary, GmjmcmcConfig, _make_scorer,
                             aggregate, aggregation_weights, evolve,
                             initialize)
from logicreg.glmlik import (GAUSSIAN, Dataset, RobustGConfig, fit_binomial,
                             fit_gaussian, log_marglik_jeffreys,
                             log_marglik_robust_g)
from logicreg.mjmcmc import (PosteriorStore, ScoredModel, inclusion_probs,
                             renormalized_posterior, run)
from logicreg.space import (Population, enumerate_distinct_trees,
                            gamma_to_mask, mask_to_gamma, n_trees_of_size)
from logicreg.trees import AND, OR, LogicTree, canonical_key, leaf

CORES = os.cpu_count() or 1


def scale_minutes(budget_on_4_cores: float) -> float:
    """Wall-clock budget normalized to the reference 4-core machine."""
    return budget_on_4_cores * 4.0 / min(4, CORES)


# ---------------------------------------------------------------------------
# criteria 1-4: scenario regressions


def test_criterion_01_scenario1_power_fdr_and_wall_clock():
    cfg = replace(sc.SCENARIO_CONFIGS[1], seed=7, chains=4)
    t0 = time.time()
    rep = sc.bench(1, replicates=20, cfg=cfg, n=1000, n_jobs=1)
    minutes = (time.time() - t0) / 60.0
    print(f"\ncriterion 1: power={rep.overall_power:.3f} fp={rep.fp:.3f} "
          f"fdr={rep.fdr:.3f} wall={minutes:.1f}min (budget "
          f"{scale_minutes(30):.0f}min on {CORES} cores)")
    assert rep.overall_power >= 0.85
    assert rep.fp <= 0.8
    assert rep.fdr <= 0.2
    assert minutes <= scale_minutes(30.0)


def test_criterion_02_scenario3_higher_order_trees():
    cfg = replace(sc.SCENARIO_CONFIGS[3], seed=7, chains=4)
    rep = sc.bench(3, replicates=10, cfg=cfg, n=1000, n_jobs=1)
    print(f"\ncriterion 2: power L1={rep.power[0]:.2f} "
          f"L3={rep.power[2]:.2f} wl={rep.wl}")
    assert rep.power[0] >= 0.9
    assert rep.power[2] >= 0.7
    assert rep.wl <= 2


def test_criterion_03_scenario4_linear():
    cfg = replace(sc.SCENARIO_CONFIGS[4], seed=7, chains=4)
    rep = sc.bench(4, replicates=20, cfg=cfg, n=1000, n_jobs=1)
    print(f"\ncriterion 3: power={rep.overall_power:.3f} fdr={rep.fdr:.3f}")
    assert rep.overall_power >= 0.9
    assert rep.fdr <= 0.05


def test_criterion_04_scenario6_or_tree_equivalence():
    cfg = replace(sc.SCENARIO_CONFIGS[6], seed=7, chains=4)
    rep = sc.bench(6, replicates=10, cfg=cfg, n=1000, l8_equivalence=True,
                   n_jobs=1)
    adjusted = rep.power[-1]
    print(f"\ncriterion 4: L8 raw={rep.raw_l8_power:.2f} "
          f"adjusted={adjusted:.2f}")
    assert adjusted - rep.raw_l8_power >= 0.3


# ---------------------------------------------------------------------------
# criterion 5: enumeration oracle


def test_criterion_05_enumeration_oracle():
    rng = np.random.default_rng(5)
    n = 120
    X = rng.integers(0, 2, (n, 4)).astype(np.uint8)
    # near-flat posterior: the chain then mixes freely and covers the
    # 407-model space quickly, which is all this oracle needs
    y = 0.3 * (X[:, 0] & X[:, 1]) + rng.normal(0, 1, n)
    data = Dataset(X=X, y=y, family=GAUSSIAN)

    trees = enumerate_distinct_trees(4, 1) + enumerate_distinct_trees(4, 2)
    assert len(trees) == 28
    n_models = 1 + 28 + math.comb(28, 2)

    t0 = time.time()
    cfg = GmjmcmcConfig(n_init=200, m_fin=n_models, t_max=1, c_max=2,
                        k_max=2, d=28, chains=1, seed=5,
                        final_max_steps=500_000)
    run_rng = np.random.default_rng(5)
    pop = Population(trees=tuple(trees), d1=4)
    scorer = _make_scorer(pop, data, cfg)
    _, store = run(scorer, np.zeros(28, dtype=bool), cfg.mj_config(), run_rng,
                   unique_target=n_models, max_steps=cfg.final_max_steps)
    seconds = time.time() - t0
    assert len(store) == n_models

    oracle_pop = Population(trees=tuple(trees), d1=4)
    oracle = _make_scorer(oracle_pop, data, cfg)
    exact = {}
    gamma = np.zeros(28, dtype=bool)
    exact[oracle.model_key(gamma)] = oracle.score(gamma).log_posterior
    for size in (1, 2):
        for combo in combinations(range(28), size):
            gamma[:] = False
            gamma[list(combo)] = True
            exact[oracle.model_key(gamma)] = oracle.score(gamma).log_posterior
    total = np.logaddexp.reduce(sorted(exact.values()))
    exact_post = {k: math.exp(v - total) for k, v in exact.items()}
    exact_incl: dict = {}
    for key, p in exact_post.items():
        for tk in key:
            exact_incl[tk] = exact_incl.get(tk, 0.0) + p

    post = renormalized_posterior(store)
    assert set(post) == set(exact_post)
    dp = max(abs(post[k] - exact_post[k]) for k in post)
    incl = inclusion_probs(store)
    di = max(abs(incl.get(k, 0.0) - exact_incl.get(k, 0.0))
             for k in oracle_pop.keys)
    print(f"\ncriterion 5: max model-posterior diff={dp:.2e} "
          f"max inclusion diff={di:.2e} wall={seconds:.1f}s")
    assert dp < 1e-10
    assert di < 1e-10
    assert seconds < 60.0


# ---------------------------------------------------------------------------
# criterion 6: likelihood oracles


def test_criterion_06_gaussian_closed_form_and_irls_gradient():
    rng = np.random.default_rng(6)
    worst_ml = 0.0
    for _ in range(100):
        n = int(rng.integers(30, 200))
        k = int(rng.integers(1, 5))
        design = np.column_stack(
            [np.ones(n)] + [rng.integers(0, 2, n).astype(float)
                            for _ in range(k)])
        if np.linalg.matrix_rank(design) < k + 1:
            continue
        y = design @ rng.normal(0, 1, k + 1) + rng.normal(0, 1, n)
        # independent normal-equations solution and RSS-based closed form
        coef = np.linalg.solve(design.T @ design, design.T @ y)
        rss = float(np.sum((y - design @ coef) ** 2))
        expect = (-0.5 * n * (math.log(2 * math.pi * rss / n) + 1.0)
                  - 0.5 * k * math.log(n))
        got = log_marglik_jeffreys(fit_gaussian(design, y), n, k)
        worst_ml = max(worst_ml, abs(got - expect))
    assert worst_ml < 1e-10

    worst_grad = 0.0
    for _ in range(50):
        n = int(rng.integers(80, 300))
        k = int(rng.integers(1, 4))
        design = np.column_stack(
            [np.ones(n)] + [rng.integers(0, 2, n).astype(float)
                            for _ in range(k)])
        eta = design @ rng.normal(0, 0.8, k + 1)
        y = (rng.random(n) < 1.0 / (1.0 + np.exp(-eta))).astype(float)
        fit = fit_binomial(design, y)
        if not fit.converged:
            continue

        def loglik(beta):
            e = design @ beta
            return float(y @ e - np.logaddexp(0.0, e).sum())

        h = 1e-6
        for j in range(k + 1):
            step = np.zeros(k + 1)
            step[j] = h
            g = (loglik(fit.coef + step) - loglik(fit.coef - step)) / (2 * h)
            worst_grad = max(worst_grad, abs(g))
    print(f"\ncriterion 6: max closed-form diff={worst_ml:.2e} "
          f"max gradient={worst_grad:.2e}")
    assert worst_grad < 1e-5


# ---------------------------------------------------------------------------
# criterion 7: robust-g quadrature


def test_criterion_07_robust_g_convergence_and_oracle():
    import scipy.integrate

    rng = np.random.default_rng(7)
    worst_doubling = 0.0
    for _ in range(20):
        n = int(rng.integers(50, 200))
        k = int(rng.integers(1, 5))
        design = np.column_stack(
            [np.ones(n)] + [rng.integers(0, 2, n).astype(float)
                            for _ in range(k)])
        y = design @ rng.normal(0, 1, k + 1) + rng.normal(0, 1, n)
        a = log_marglik_robust_g(design, y, GAUSSIAN, RobustGConfig(nodes=64))
        b = log_marglik_robust_g(design, y, GAUSSIAN, RobustGConfig(nodes=128))
        worst_doubling = max(worst_doubling, abs(a - b))
    assert worst_doubling < 1e-6

    worst_oracle = 0.0
    for k in (1, 2):
        n = 100
        design = np.column_stack(
            [np.ones(n)] + [rng.integers(0, 2, n).astype(float)
                            for _ in range(k)])
        y = design @ rng.normal(0, 1, k + 1) + rng.normal(0, 1, n)
        got = log_marglik_robust_g(design, y, GAUSSIAN,
                                   RobustGConfig(nodes=64))
        fit = fit_gaussian(design, y)
        rss = float(np.sum((y - design @ fit.coef) ** 2))
        rss0 = float(np.sum((y - y.mean()) ** 2))
        r2 = 1.0 - rss / rss0
        v = (n + 1) / (k + 1)

        def integrand(u, k=k, r2=r2):
            bf = u ** (k / 2.0) * (1.0 - r2 * (1.0 - u)) ** (-(n - 1) / 2)
            return bf * u ** (-0.5)

        num, _ = scipy.integrate.quad(integrand, 0.0, 1.0 / v, limit=200)
        null_ll = fit_gaussian(np.ones((n, 1)), y).loglik
        expect = null_ll + math.log(num / (2.0 * math.sqrt(1.0 / v)))
        worst_oracle = max(worst_oracle, abs(got - expect))
    print(f"\ncriterion 7: node-doubling diff={worst_doubling:.2e} "
          f"dense-grid diff={worst_oracle:.2e}")
    assert worst_oracle < 1e-6


# ---------------------------------------------------------------------------
# criterion 8: tree counting


def test_criterion_08_tree_counts_match_enumeration():
    for m in range(1, 6):
        for s in range(1, min(m, 3) + 1):
            formula = n_trees_of_size(m, s)
            enumerated = len(enumerate_distinct_trees(m, s))
            assert formula == enumerated, (m, s)
    print("\ncriterion 8: N(s) formula equals enumeration for m<=5, s<=3")


# ---------------------------------------------------------------------------
# criterion 9: aggregation


def test_criterion_09_aggregation_weights():
    key = canonical_key(leaf(0)).modulo_complement()
    summary = ChainSummary(probs={key: 0.6}, texts={key: "X1"},
                           log_mass=-4.0, generations=1, models_visited=1)
    copies = [summary] * 6
    w = aggregation_weights(copies)
    assert np.max(np.abs(w - 1.0 / 6.0)) < 1e-12
    agg = aggregate(copies)
    assert abs(agg[key] - 0.6) < 1e-12

    s1 = replace(summary, log_mass=-2.0 + math.log(3.0))
    s2 = replace(summary, log_mass=-2.0)
    w = aggregation_weights([s1, s2])
    assert abs(w[0] - 0.75) < 1e-12 and abs(w[1] - 0.25) < 1e-12
    print("\ncriterion 9: identical-chain weights 1/B and 3:1 softmax exact")


# ---------------------------------------------------------------------------
# criterion 10: sensitivity sweep


def test_criterion_10_beta4_power_curve():
    cfg = replace(sc.SCENARIO_CONFIGS[5], k_max=20, d=30, seed=7, chains=4)
    curve = sc.sweep("beta4", [1.0, 4.0, 7.0, 10.0], replicates=5, cfg=cfg,
                     n=1000, n_jobs=1)
    powers = [p for _, p in curve]
    print(f"\ncriterion 10: beta4 power curve {powers}")
    assert powers[0] <= 0.2
    assert powers[-1] >= 0.8
    for a, b in zip(powers, powers[1:]):
        assert b >= a - 0.15


# ---------------------------------------------------------------------------
# criterion 11: consolidated randomized property checks
# (the per-module suites in the other test files cover every invariant
# bullet; this test re-runs the central ones under one seed)


def random_tree(rng, m=10, max_size=5) -> LogicTree:
    size = int(rng.integers(1, max_size + 1))
    t = leaf(int(rng.integers(m)), neg=bool(rng.random() < 0.4))
    for _ in range(size - 1):
        other = leaf(int(rng.integers(m)), neg=bool(rng.random() < 0.4))
        op = AND if rng.random() < 0.6 else OR
        t = (LogicTree(op=op, left=t, right=other) if rng.random() < 0.5
             else LogicTree(op=op, left=other, right=t))
    return t


def equivalent_rewrite(t: LogicTree, rng) -> LogicTree:
    """Random meaning-preserving rearrangement: commute or reassociate."""
    if t.is_leaf:
        return t
    left, right = t.left, t.right
    draw = rng.random()
    if draw < 0.4:
        left, right = right, left
    elif draw < 0.7 and not right.is_leaf and right.op == t.op:
        # a op (b op c) -> (a op b) op c
        left = LogicTree(op=t.op, left=left, right=right.left)
        right = right.right
    return LogicTree(op=t.op, left=equivalent_rewrite(left, rng),
                     right=equivalent_rewrite(right, rng))


def test_criterion_11_property_suites():
    rng = np.random.default_rng(11)

    # tree equivalence: canonical keys invariant under rearrangement,
    # complements collapse to one key (>= 1000 cases each)
    for _ in range(1000):
        t = random_tree(rng)
        r = equivalent_rewrite(t, rng)
        assert canonical_key(t) == canonical_key(r)
        assert (canonical_key(t.negate()).modulo_complement()
                == canonical_key(t).modulo_complement())

    # model index bijection
    for _ in range(500):
        d = int(rng.integers(1, 40))
        gamma = rng.random(d) < 0.5
        assert np.array_equal(mask_to_gamma(gamma_to_mask(gamma), d), gamma)

    # store idempotence and inclusion bounds
    store = PosteriorStore()
    for i in range(100):
        store.add(frozenset([int(x) for x in rng.integers(0, 20, 3)]),
                  ScoredModel(float(rng.normal()), 0.0))
    snapshot = (len(store), store.log_total)
    for key, scored in store.entries().items():
        store.add(key, scored)
    assert (len(store), store.log_total) == snapshot
    assert abs(store.log_total - store.verify_log_total()) < 1e-9
    assert all(0.0 <= p <= 1.0 for p in inclusion_probs(store).values())

    # population integrity and founder persistence across generations
    X = rng.integers(0, 2, (120, 12)).astype(np.uint8)
    y = 1.5 * (X[:, 0] & X[:, 1]) + rng.normal(0, 1, 120)
    data = Dataset(X=X, y=y, family=GAUSSIAN)
    cfg = GmjmcmcConfig(n_init=150, n_expl=80, m_fin=200, t_max=2, c_max=3,
                        k_max=3, d=8, chains=1, seed=3)
    pop, _ = initialize(data, cfg, rng)
    founders = pop.keys[:pop.d1]
    assert pop.d - pop.d1 >= cfg.k_max
    for _ in range(4):
        incl = {k: float(p) for k, p in zip(pop.keys, rng.random(pop.d))}
        pop = evolve(pop, incl, data.m, cfg, rng)
        assert pop.d == cfg.d
        assert len(set(pop.keys)) == pop.d
        assert all(t.size <= cfg.c_max for t in pop.trees)
        assert pop.keys[:pop.d1] == founders

    # aggregation weight properties on random summaries
    key = canonical_key(leaf(0)).modulo_complement()
    chains = [ChainSummary(probs={key: float(rng.random())}, texts={key: "X1"},
                           log_mass=float(rng.normal(scale=3)), generations=1,
                           models_visited=1) for _ in range(6)]
    w = aggregation_weights(chains)
    assert (w >= 0).all() and abs(w.sum() - 1.0) < 1e-12
    assert all(0.0 <= p <= 1.0 for p in aggregate(chains).values())
    print("\ncriterion 11: randomized invariant checks pass "
          "(1000-case tree equivalence)")
