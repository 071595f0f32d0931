"""GLM fitting and marginal likelihood scores.

Two scores are available for a fitted model: the Laplace/BIC form following
from Jeffrey's parameter prior, and a robust g-prior score computed by
one-dimensional quadrature over the shrinkage mixture.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.linalg
from scipy.special import logsumexp

from .space import NEG_INF, Population

GAUSSIAN = "gaussian"
BINOMIAL = "binomial"

_IRLS_MAX_ITER = 50
_IRLS_TOL = 1e-8
_ETA_CLAMP = 30.0
_RSS_FLOOR = 1e-300


@dataclass(frozen=True)
class Dataset:
    """Binary design data with a response vector and a family tag."""

    X: np.ndarray
    y: np.ndarray
    family: str
    names: tuple[str, ...] = ()

    def __post_init__(self):
        X = np.ascontiguousarray(self.X, dtype=np.uint8)
        y = np.ascontiguousarray(self.y, dtype=np.float64)
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "y", y)
        if X.ndim != 2 or y.ndim != 1 or X.shape[0] != y.shape[0]:
            raise ValueError("X must be n-by-m and y length n")
        if X.shape[0] < 2:
            raise ValueError("need at least two observations")
        if not np.isin(X, (0, 1)).all():
            raise ValueError("covariates must be 0/1")
        if self.family not in (GAUSSIAN, BINOMIAL):
            raise ValueError(f"unknown family {self.family!r}")
        if self.family == BINOMIAL and not np.isin(y, (0.0, 1.0)).all():
            raise ValueError("binomial response must be 0/1")

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def m(self) -> int:
        return self.X.shape[1]


@dataclass(frozen=True)
class GlmFit:
    """Maximum likelihood fit of one design matrix."""

    coef: np.ndarray
    loglik: float
    phi: float
    iterations: int
    converged: bool
    rank: int
    info: np.ndarray | None = None   # observed information at the MLE (binomial)


@dataclass(frozen=True)
class RobustGConfig:
    """tCCH mixing parameters of the robust g-prior and the quadrature size.

    The recommended robust choice has a=1, b=2, r=1.5, s=0, kappa=1 and
    v=(n+1)/(|M|+1); with those values the mixing density of u=1/(1+g)
    reduces to the kernel u^(-1/2) supported on (0, 1/v).
    """

    nodes: int = 64
    eps: float = 0.0

    def __post_init__(self):
        if self.nodes < 16:
            raise ValueError("need at least 16 quadrature nodes")
        if not 0.0 <= self.eps < 1.0:
            raise ValueError("eps must lie in [0,1)")


def design_matrix(gamma: np.ndarray, pop: Population, data: Dataset) -> np.ndarray:
    """Intercept column followed by one 0/1 column per included tree."""
    gamma = np.asarray(gamma, dtype=bool)
    cols = [np.ones(data.n)]
    for j in np.nonzero(gamma)[0]:
        cols.append(pop.trees[j].evaluate(data.X).astype(np.float64))
    return np.column_stack(cols)


def _gaussian_loglik(rss: float, n: int) -> float:
    rss = max(rss, _RSS_FLOOR)
    return -0.5 * n * (math.log(2.0 * math.pi * rss / n) + 1.0)


def fit_gaussian(design: np.ndarray, y: np.ndarray) -> GlmFit:
    coef, res, rank, _ = np.linalg.lstsq(design, y, rcond=None)
    resid = y - design @ coef
    rss = float(resid @ resid)
    n = y.shape[0]
    return GlmFit(coef=coef, loglik=_gaussian_loglik(rss, n), phi=rss / n,
                  iterations=1, converged=True, rank=int(rank))


def _binomial_loglik(eta: np.ndarray, y: np.ndarray) -> float:
    # log p = y*eta - log(1+exp(eta)); the stable split
    # log(1+e^x) = max(x,0) + log1p(e^-|x|) beats logaddexp on large vectors
    norm = np.log1p(np.exp(-np.abs(eta))).sum() + eta[eta > 0].sum()
    return float(y @ eta - norm)


def fit_binomial(design: np.ndarray, y: np.ndarray) -> GlmFit:
    """Logistic regression by iteratively reweighted least squares.

    Linear predictors are clamped to +-30; under perfect separation the fit
    stops at the iteration cap with converged=False and the last loglik.
    """
    n, p = design.shape
    # rank is assumed full until a Newton system fails to factor; the SVD
    # check is too expensive to run on every scored model
    rank = p
    beta = np.zeros(p)
    # warm start at the null intercept
    pbar = float(y.mean())
    if 0.0 < pbar < 1.0:
        beta[0] = math.log(pbar / (1.0 - pbar))
    eta = design @ beta
    ll = _binomial_loglik(eta, y)
    converged = False
    it = 0
    for it in range(1, _IRLS_MAX_ITER + 1):
        mu = 1.0 / (1.0 + np.exp(-eta))
        score = design.T @ (y - mu)
        if np.max(np.abs(score)) < _IRLS_TOL:
            converged = True
            break
        w = mu * (1.0 - mu)
        np.clip(w, 1e-10, None, out=w)
        hess = (design.T * w) @ design
        try:
            # Cholesky doubles as the positive-definiteness check: a singular
            # or indefinite Newton system raises instead of returning garbage
            chol = np.linalg.cholesky(hess)
            step = scipy.linalg.cho_solve((chol, True), score,
                                          check_finite=False)
        except np.linalg.LinAlgError:
            rank = int(np.linalg.matrix_rank(design))
            step, *_ = np.linalg.lstsq(hess, score, rcond=None)
        # halving guard against overshoot on steep likelihoods
        scale = 1.0
        for _ in range(8):
            eta_t = design @ (beta + scale * step)
            np.clip(eta_t, -_ETA_CLAMP, _ETA_CLAMP, out=eta_t)
            ll_t = _binomial_loglik(eta_t, y)
            if ll_t >= ll - 1e-12:
                break
            scale *= 0.5
        beta = beta + scale * step
        eta, ll = eta_t, ll_t
    mu = 1.0 / (1.0 + np.exp(-eta))
    w = mu * (1.0 - mu)
    info = (design.T * w) @ design
    return GlmFit(coef=beta, loglik=ll, phi=1.0,
                  iterations=it, converged=converged, rank=rank, info=info)


def fit_glm(design: np.ndarray, y: np.ndarray, family: str) -> GlmFit:
    if family == GAUSSIAN:
        return fit_gaussian(design, y)
    if family == BINOMIAL:
        return fit_binomial(design, y)
    raise ValueError(f"unknown family {family!r}")


def log_marglik_jeffreys(fit: GlmFit, n: int, model_size: int) -> float:
    """Laplace/BIC marginal: loglik at the MLE minus (|M|/2) log n."""
    if not math.isfinite(fit.loglik):
        return NEG_INF
    return fit.loglik - 0.5 * model_size * math.log(n)


# ---------------------------------------------------------------------------
# robust g-prior score


def _quad_nodes(upper: float, nodes: int, eps: float) -> tuple[np.ndarray, np.ndarray]:
    """Gauss-Legendre nodes for integrating f(u) u^(-1/2) du over (eps, upper).

    The substitution u = w^2 removes the endpoint singularity:
    int f(u) u^(-1/2) du = 2 int f(w^2) dw.
    """
    x, w = np.polynomial.legendre.leggauss(nodes)
    lo, hi = math.sqrt(eps), math.sqrt(upper)
    ww = 0.5 * (hi - lo) * w * 2.0
    uu = (0.5 * (hi - lo) * x + 0.5 * (hi + lo)) ** 2
    return uu, ww


def _log_bf_gaussian(u: np.ndarray, r2: float, n: int, k: int) -> np.ndarray:
    # exact conditional Bayes factor against the null at fixed g, u = 1/(1+g)
    return 0.5 * k * np.log(u) - 0.5 * (n - 1) * np.log1p(-r2 * (1.0 - u))


def _log_bf_binomial(u: np.ndarray, dloglik: float, q_stat: float, k: int) -> np.ndarray:
    # Laplace (integrated Laplace approximation) conditional Bayes factor
    return dloglik + 0.5 * k * np.log(u) - 0.5 * q_stat * u


def log_marglik_robust_g(design: np.ndarray, y: np.ndarray, family: str,
                         cfg: RobustGConfig | None = None,
                         null_fit: GlmFit | None = None) -> float:
    """Robust g-prior log marginal likelihood (up to a family constant).

    Computed as null-model loglik plus the log of the mixture-averaged
    conditional Bayes factor; the average runs over u = 1/(1+g) with the
    tCCH kernel u^(-1/2) on (0, 1/v), v = (n+1)/(|M|+1), normalized on the
    same nodes.  Anchoring at the null loglik makes the |M|=0 score coincide
    with the Jeffreys null marginal; the shared constant cancels in model
    ratios.
    """
    cfg = cfg or RobustGConfig()
    n, p = design.shape
    k = p - 1
    if null_fit is None:
        null_fit = fit_glm(np.ones((n, 1)), y, family)
    if k == 0:
        return null_fit.loglik

    fit = fit_glm(design, y, family)
    if fit.rank < p or not math.isfinite(fit.loglik):
        return NEG_INF

    v = (n + 1) / (k + 1)
    u, w = _quad_nodes(1.0 / v, cfg.nodes, cfg.eps)

    if family == GAUSSIAN:
        rss = max(float(np.sum((y - design @ fit.coef) ** 2)), _RSS_FLOOR)
        rss0 = max(float(np.sum((y - np.mean(y)) ** 2)), _RSS_FLOOR)
        r2 = 1.0 - rss / rss0
        log_bf = _log_bf_gaussian(u, r2, n, k)
    else:
        dloglik = fit.loglik - null_fit.loglik
        beta = fit.coef[1:]
        j = fit.info
        j_cond = j[1:, 1:] - np.outer(j[1:, 0], j[0, 1:]) / j[0, 0]
        q_stat = float(beta @ j_cond @ beta)
        log_bf = _log_bf_binomial(u, dloglik, q_stat, k)

    log_num = logsumexp(log_bf, b=w)
    log_den = math.log(np.sum(w))
    out = null_fit.loglik + log_num - log_den
    if not math.isfinite(out):
        return NEG_INF
    return out
