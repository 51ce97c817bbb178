"""Variational Bayes for a 1-D Gaussian mixture.

Priors (independent per component s):

    mu_s   ~ N(m0, 1 / tau0)
    beta_s ~ Gamma(rate b0, shape c0)        beta_s = 1 / sigma_s**2
    pi     ~ Dirichlet(lambda0, ..., lambda0)
    s_i    ~ Categorical(pi)

The mean-field posterior factorises into q(mu_s) = N(m_s, 1/tau_s),
q(beta_s) = Gamma(b_s, c_s), q(pi) = Dir(lambda) and responsibilities
r_is = q(s_i = s).  Every update below is the exact optimum of one factor
given the others, so the bound never decreases.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field, replace

import numpy as np

from .models import Dataset, gmm_pack
from .stats import (
    LOG_2PI,
    RngHandle,
    digamma,
    gammaln,
    logsumexp,
)
from .vb_linear import ConvergenceWarning


@dataclass(frozen=True)
class VbGmmPrior:
    """Hyperparameters; ``m0=None`` means "use the data mean"."""

    m0: float | None = None
    tau0: float = 1e-2
    b0: float = 1e-2
    c0: float = 1e-2
    lambda0: float = 1.0

    def __post_init__(self):
        if not (self.tau0 > 0 and self.b0 > 0 and self.c0 > 0 and self.lambda0 > 0):
            raise ValueError("tau0, b0, c0 and lambda0 must all be > 0")
        if self.m0 is not None and not math.isfinite(self.m0):
            raise ValueError("m0 must be finite")

    def resolve(self, data: Dataset) -> "VbGmmPrior":
        if self.m0 is not None:
            return self
        return replace(self, m0=float(np.mean(data.ordinates)))


@dataclass
class VbGmmState:
    m: np.ndarray
    tau: np.ndarray
    b: np.ndarray
    c: np.ndarray
    lam: np.ndarray
    resp: np.ndarray
    bound_trace: list[float] = field(default_factory=list)
    converged: bool = False

    @property
    def n_components(self) -> int:
        return self.m.size

    @property
    def means(self) -> np.ndarray:
        return self.m

    @property
    def sigmas(self) -> np.ndarray:
        """(b / c)**0.5, i.e. <beta>**-0.5."""
        return np.sqrt(self.b / self.c)

    @property
    def weights(self) -> np.ndarray:
        return self.lam / self.lam.sum()

    @property
    def theta(self) -> np.ndarray:
        """Point estimate in the ``GmmModel`` parameter layout."""
        return gmm_pack(self.means, self.sigmas, self.weights)

    def permuted(self, order) -> "VbGmmState":
        order = np.asarray(order)
        return VbGmmState(
            self.m[order], self.tau[order], self.b[order], self.c[order], self.lam[order],
            self.resp[:, order], list(self.bound_trace), self.converged,
        )

    def validate(self) -> None:
        for name in ("tau", "b", "c", "lam"):
            if not np.all(getattr(self, name) > 0):
                raise ValueError(f"VB mixture state: {name} must be > 0")
        if not np.all(np.isfinite(self.m)):
            raise ValueError("VB mixture state: non-finite means")
        if self.resp.ndim != 2 or self.resp.shape[1] != self.m.size:
            raise ValueError("VB mixture state: responsibilities have the wrong shape")


def _expected_log_rho(y, state: VbGmmState) -> np.ndarray:
    """I x S matrix <ln pi_s> + <ln p(D_i | mu_s, beta_s)>."""
    e_log_pi = digamma(state.lam) - digamma(state.lam.sum())
    e_beta = state.c / state.b
    e_log_beta = digamma(state.c) - np.log(state.b)
    sq = (y[:, None] - state.m) ** 2 + 1.0 / state.tau
    return e_log_pi + 0.5 * e_log_beta - 0.5 * LOG_2PI - 0.5 * e_beta * sq


def _update_params(y, resp, prior: VbGmmPrior, e_beta) -> tuple[np.ndarray, ...]:
    """Optimal q(pi), then q(mu) given <beta>, then q(beta) given q(mu)."""
    n_s = resp.sum(axis=0)
    lam = prior.lambda0 + n_s
    tau = prior.tau0 + e_beta * n_s
    m = (prior.tau0 * prior.m0 + e_beta * (resp.T @ y)) / tau
    c = prior.c0 + 0.5 * n_s
    sq = (y[:, None] - m) ** 2 + 1.0 / tau
    b = prior.b0 + 0.5 * np.sum(resp * sq, axis=0)
    return m, tau, b, c, lam


def _responsibilities(log_rho) -> np.ndarray:
    return np.exp(log_rho - logsumexp(log_rho, axis=1)[:, None])


def vb_gmm_bound(state: VbGmmState, data: Dataset, prior: VbGmmPrior) -> float:
    """Evidence lower bound E_Q[ln p(D, s, mu, beta, pi)] - E_Q[ln Q].

    Term ledger:
      data      sum_is r_is (<ln pi_s> + <ln N(D_i | mu_s, 1/beta_s)>)
      labels    - sum_is r_is ln r_is
      weights   - KL(Dir(lambda) || Dir(lambda0))
      means     sum_s 1/2 ln(tau0/tau_s) - tau0/2 ((m_s - m0)^2 + 1/tau_s) + 1/2
      precision sum_s <ln Gamma(beta_s | b0, c0)> + H[Gamma(b_s, c_s)], with
                H = c - ln b + ln Gamma(c) + (1 - c) Psi(c)
    """
    state.validate()
    prior = prior.resolve(data)
    y = data.ordinates
    r = state.resp
    if r.shape[0] != y.size:
        raise ValueError("responsibilities do not match the data")
    s = state.n_components

    data_term = float(np.sum(r * _expected_log_rho(y, state)))
    with np.errstate(divide="ignore", invalid="ignore"):
        label_term = -float(np.sum(np.where(r > 0, r * np.log(r), 0.0)))

    lam, lam0 = state.lam, np.full(s, prior.lambda0)
    e_log_pi = digamma(lam) - digamma(lam.sum())
    kl_pi = (
        gammaln(lam.sum()) - float(np.sum(gammaln(lam)))
        - gammaln(lam0.sum()) + float(np.sum(gammaln(lam0)))
        + float(np.sum((lam - lam0) * e_log_pi))
    )

    mean_term = float(np.sum(
        0.5 * np.log(prior.tau0 / state.tau)
        - 0.5 * prior.tau0 * ((state.m - prior.m0) ** 2 + 1.0 / state.tau)
        + 0.5
    ))

    psi_c = digamma(state.c)
    e_beta = state.c / state.b
    e_log_beta = psi_c - np.log(state.b)
    prior_beta = (
        prior.c0 * math.log(prior.b0) - gammaln(prior.c0)
        + (prior.c0 - 1.0) * e_log_beta - prior.b0 * e_beta
    )
    entropy_beta = state.c - np.log(state.b) + gammaln(state.c) + (1.0 - state.c) * psi_c
    prec_term = float(np.sum(prior_beta + entropy_beta))
    return data_term + label_term - kl_pi + mean_term + prec_term


def vb_gmm_init(data: Dataset, n_components: int, rng=None) -> VbGmmState:
    """Soft responsibilities around quantile-spread centres with a little jitter.

    Returns a state whose only meaningful field is ``resp``; the component
    hyperparameters are placeholders filled by the first update.
    """
    if n_components < 1:
        raise ValueError("a mixture needs at least one component")
    g = _generator(rng)
    y = data.ordinates
    s = n_components
    if s == 1:
        resp = np.ones((y.size, 1))
    else:
        sd = float(np.std(y)) or 1.0
        centres = np.quantile(y, (np.arange(s) + 0.5) / s) + 0.1 * sd * g.standard_normal(s)
        width = sd / s
        log_r = -0.5 * ((y[:, None] - centres) / width) ** 2
        resp = _responsibilities(log_r)
    ones = np.ones(s)
    return VbGmmState(np.zeros(s), ones.copy(), ones.copy(), ones.copy(), ones.copy(), resp)


def _generator(rng) -> np.random.Generator:
    if isinstance(rng, np.random.Generator):
        return rng
    if isinstance(rng, RngHandle):
        return rng.generator
    return RngHandle(0 if rng is None else int(rng)).generator


def _fit_once(data, state, prior, tol, max_iter) -> VbGmmState:
    y = data.ordinates
    resp = state.resp
    # first <beta> guess from the weighted spread of the initial assignment
    n_s = resp.sum(axis=0)
    centre = (resp.T @ y) / np.maximum(n_s, 1e-300)
    spread = np.sum(resp * (y[:, None] - centre) ** 2, axis=0) / np.maximum(n_s, 1e-300)
    e_beta = 1.0 / np.maximum(spread, 1e-6 * (np.var(y) + 1e-12))
    trace: list[float] = []
    for _ in range(max_iter):
        m, tau, b, c, lam = _update_params(y, resp, prior, e_beta)
        state = VbGmmState(m, tau, b, c, lam, resp, trace)
        trace.append(vb_gmm_bound(state, data, prior))
        if len(trace) > 1 and abs(trace[-1] - trace[-2]) < tol:
            state.converged = True
            break
        resp = _responsibilities(_expected_log_rho(y, state))
        e_beta = c / b
    return state


def vb_gmm_fit(
    data: Dataset,
    n_components: int,
    prior: VbGmmPrior | None = None,
    tol: float = 1e-6,
    max_iter: int = 1000,
    rng=None,
    restarts: int = 5,
) -> tuple[VbGmmState, float]:
    """Best of ``restarts`` coordinate-ascent runs, components sorted by mean.

    ``rng`` is a seed, :class:`RngHandle` or ``numpy`` generator; each restart
    draws its own initial jitter from it.  A run hitting ``max_iter`` emits a
    :class:`ConvergenceWarning`.
    """
    if n_components < 1:
        raise ValueError("a mixture needs at least one component")
    if n_components > data.count:
        raise ValueError(f"{n_components} components for {data.count} data points")
    if not tol > 0:
        raise ValueError("tol must be > 0")
    if restarts < 1:
        raise ValueError("restarts must be >= 1")
    prior = (prior or VbGmmPrior()).resolve(data)
    g = _generator(rng)

    best = None
    for _ in range(restarts):
        state = _fit_once(data, vb_gmm_init(data, n_components, g), prior, tol, max_iter)
        if best is None or state.bound_trace[-1] > best.bound_trace[-1]:
            best = state
    if not best.converged:
        warnings.warn(
            f"VB mixture fit with {n_components} components did not converge in {max_iter} iterations",
            ConvergenceWarning,
        )
    best = best.permuted(np.argsort(best.m, kind="stable"))
    return best, best.bound_trace[-1]
