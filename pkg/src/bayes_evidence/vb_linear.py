"""Variational Bayes for polynomial regression.

Mean-field posterior Q(w, gamma) = N(w | w_mean, w_precision^-1) Gamma(gamma | rate, shape)
under the priors w ~ N(0, a_w^-1 I) and gamma ~ Gamma(a_gamma, b_gamma)
(rate, shape).  Coordinate ascent alternates the two factors; each sweep
cannot decrease the evidence lower bound.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .models import Dataset, design_matrix, poly_log_likelihood
from .stats import LOG_2PI, GammaParams, gamma_entropy, gamma_expectations, gammaln


class ConvergenceWarning(UserWarning):
    pass


# relative change in <gamma> below which the coordinate ascent counts as settled
GAMMA_RTOL = 1e-12


@dataclass(frozen=True)
class VbLinearPrior:
    a_w: float = 1e-3
    a_gamma: float = 1e-3
    b_gamma: float = 1e-3

    def __post_init__(self):
        if not (self.a_w > 0 and self.a_gamma > 0 and self.b_gamma > 0):
            raise ValueError("VB prior hyperparameters must all be > 0")


@dataclass
class VbLinearState:
    w_precision: np.ndarray
    w_mean: np.ndarray
    gamma_rate: float
    gamma_shape: float
    bound_trace: list[float] = field(default_factory=list)
    converged: bool = False

    @property
    def gamma_mean(self) -> float:
        return self.gamma_shape / self.gamma_rate

    @property
    def sigma(self) -> float:
        """Noise standard deviation (rate / shape)**0.5 = <gamma>**-0.5."""
        return math.sqrt(self.gamma_rate / self.gamma_shape)

    @property
    def w_covariance(self) -> np.ndarray:
        return np.linalg.inv(self.w_precision)


def _cholesky(mat: np.ndarray) -> np.ndarray:
    try:
        return np.linalg.cholesky(mat)
    except np.linalg.LinAlgError as exc:
        raise np.linalg.LinAlgError("weight precision is not positive definite (degenerate design)") from exc


def _expected_rss(design, y, w_mean, w_cov) -> float:
    """<sum_i (D_i - f_i . w)^2>_Q including the posterior covariance term."""
    resid = y - design @ w_mean
    return float(resid @ resid + np.sum((design.T @ design) * w_cov))


def vb_linear_bound(state: VbLinearState, data: Dataset, prior: VbLinearPrior) -> float:
    """Evidence lower bound <ln L>_Q + <ln prior>_Q - <ln Q>_Q."""
    n = state.w_mean.size
    design = design_matrix(data.abscissae, n)
    chol = _cholesky(state.w_precision)
    w_cov = np.linalg.inv(state.w_precision)
    logdet_prec = 2.0 * float(np.sum(np.log(np.diag(chol))))
    g_mean, g_log = gamma_expectations(GammaParams(state.gamma_rate, state.gamma_shape))
    rss = _expected_rss(design, data.ordinates, state.w_mean, w_cov)

    like = 0.5 * data.count * (g_log - LOG_2PI) - 0.5 * g_mean * rss
    w2 = float(state.w_mean @ state.w_mean + np.trace(w_cov))
    prior_w = 0.5 * n * (math.log(prior.a_w) - LOG_2PI) - 0.5 * prior.a_w * w2
    prior_g = (
        prior.b_gamma * math.log(prior.a_gamma)
        - gammaln(prior.b_gamma)
        + (prior.b_gamma - 1.0) * g_log
        - prior.a_gamma * g_mean
    )
    entropy_w = 0.5 * n * (1.0 + LOG_2PI) - 0.5 * logdet_prec
    entropy_g = gamma_entropy(GammaParams(state.gamma_rate, state.gamma_shape))
    return float(like + prior_w + prior_g + entropy_w + entropy_g)


def vb_linear_fit(
    data: Dataset,
    order: int,
    prior: VbLinearPrior | None = None,
    tol: float = 1e-6,
    max_iter: int = 500,
    init_gamma: float = 1.0,
) -> tuple[VbLinearState, float]:
    """Coordinate ascent until the bound changes by less than ``tol``.

    Convergence also requires the relative change in <gamma> to fall below
    ``GAMMA_RTOL``, so the returned state is a fixed point of the updates.

    Returns the final state and bound.  Hitting ``max_iter`` emits a
    :class:`ConvergenceWarning` and leaves ``state.converged`` False.
    """
    prior = prior or VbLinearPrior()
    if order < 1:
        raise ValueError(f"polynomial order must be >= 1, got {order}")
    if not tol > 0:
        raise ValueError("tol must be > 0")
    if data.abscissae is None:
        raise ValueError("polynomial data needs abscissae")
    design = design_matrix(data.abscissae, order)
    y = data.ordinates
    ftf = design.T @ design
    fty = design.T @ y
    eye = np.eye(order)
    shape = prior.b_gamma + 0.5 * data.count
    g_mean = float(init_gamma)

    state = None
    trace: list[float] = []
    for _ in range(max_iter):
        prec = prior.a_w * eye + g_mean * ftf
        chol = _cholesky(prec)
        w_mean = np.linalg.solve(chol.T, np.linalg.solve(chol, g_mean * fty))
        w_cov = np.linalg.inv(prec)
        rate = prior.a_gamma + 0.5 * _expected_rss(design, y, w_mean, w_cov)
        g_prev, g_mean = g_mean, shape / rate
        state = VbLinearState(prec, w_mean, rate, shape, trace)
        trace.append(vb_linear_bound(state, data, prior))
        # the bound is flat at the optimum, so also require <gamma> to have settled
        settled = abs(g_mean - g_prev) <= GAMMA_RTOL * g_mean
        if len(trace) > 1 and abs(trace[-1] - trace[-2]) < tol and settled:
            state.converged = True
            break
    if not state.converged:
        warnings.warn(f"VB fit of order {order} did not converge in {max_iter} iterations", ConvergenceWarning)
    return state, trace[-1]


@dataclass(frozen=True)
class VbScore:
    order: int
    log_likelihood_at_mean: float
    occam: float
    bound: float


def vb_model_scores(data: Dataset, orders, prior: VbLinearPrior | None = None, **fit_kw) -> list[VbScore]:
    """Per order: plug-in log-likelihood at (w_mean, <gamma>), Occam factor and bound."""
    orders = list(orders)
    if not orders:
        raise ValueError("orders must be non-empty")
    out = []
    for order in orders:
        state, bound = vb_linear_fit(data, order, prior, **fit_kw)
        log_l = poly_log_likelihood(data, state.w_mean, state.gamma_mean)
        out.append(VbScore(order, log_l, bound - log_l, bound))
    return out
