"""Nested sampling for the evidence of a model with a uniform box prior.

The engine keeps ``n_live`` points drawn from the prior, repeatedly removes
the lowest-likelihood one and replaces it by a constrained random walk
started from a surviving point.  Prior mass shrinks deterministically by
``N / (N + 1)`` per iteration; all evidence arithmetic is done in log space.

Likelihood ties (e.g. a flat likelihood) are broken by a uniform label carried
by every point, so the hard constraint is on the pair (log L, label).  The walk
refreshes the label by a Gibbs step before every position step: uniform on
(0, 1) above the likelihood level, uniform above ``label_min`` on it.

Proposals (``proposal="covariance"``) are Gaussian steps shaped by the live
points' covariance in the unit cube, mixed with differential-evolution steps
``g (u_a - u_b)`` built from random pairs of other live points.  Both kinds
are symmetric and independent of the walker's position, so the walk keeps the
prior restricted to the constraint invariant.  The difference steps let a
walker cross between separated islands of the constrained region that the
live points already occupy.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from . import _kernels
from .models import PriorBox, make_transform
from .stats import RngHandle


class ExplorationError(RuntimeError):
    """No constrained replacement could be found."""

    def __init__(self, log_l_min: float, attempts: int):
        super().__init__(
            f"no replacement above log-likelihood {log_l_min:.17g} after {attempts} attempts"
        )
        self.log_l_min = log_l_min


class MaxIterationsError(RuntimeError):
    """The iteration cap was hit before the stopping rule fired.

    ``partial`` holds the estimate built from the dead points so far plus the
    current live set.
    """

    def __init__(self, partial: EvidenceEstimate):
        super().__init__(f"stopping rule not met after {partial.n_iterations} iterations")
        self.partial = partial


# random-walk length per replacement when not set explicitly
STEPS_PER_DIM = 25
MIN_STEPS = 20


@dataclass(frozen=True)
class NsConfig:
    n_live: int = 36
    max_iterations: int = 200_000
    steps_per_replacement: int | None = None  # None: STEPS_PER_DIM * dim, at least MIN_STEPS
    initial_step_sizes: tuple[float, ...] | None = None
    proposal: str = "covariance"  # or "axis"
    target_acceptance: float = 0.5
    de_fraction: float = 0.5
    stop_delta_logz: float = 1e-6
    stop_info_factor: float = 2.0
    retry_budget: int = 5
    seed: int = 0

    def __post_init__(self):
        if self.n_live < 2:
            raise ValueError("n_live must be >= 2")
        if self.steps_per_replacement is not None and self.steps_per_replacement < 1:
            raise ValueError("steps_per_replacement must be >= 1")
        if not 0 < self.target_acceptance < 1:
            raise ValueError("target_acceptance must lie in (0, 1)")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")
        if self.stop_delta_logz <= 0 or self.stop_info_factor < 0:
            raise ValueError("stopping thresholds must be positive")
        if not 0.0 <= self.de_fraction < 1.0:
            raise ValueError("de_fraction must lie in [0, 1)")
        if self.proposal not in ("covariance", "axis"):
            raise ValueError(f"unknown proposal {self.proposal!r}")
        if self.retry_budget < 0:
            raise ValueError("retry_budget must be >= 0")
        if self.initial_step_sizes is not None:
            steps = tuple(float(s) for s in self.initial_step_sizes)
            if any(not s > 0 for s in steps):
                raise ValueError("initial step sizes must be > 0")
            object.__setattr__(self, "initial_step_sizes", steps)


    def steps_for(self, dim: int) -> int:
        if self.steps_per_replacement is not None:
            return self.steps_per_replacement
        return max(MIN_STEPS, STEPS_PER_DIM * dim)


@dataclass
class LivePoint:
    u: np.ndarray
    theta: np.ndarray
    log_like: float
    label: float = 0.5  # tie-breaker, uniform on (0, 1)

    def above(self, log_l_min: float, label_min: float) -> bool:
        return self.log_like > log_l_min or (self.log_like == log_l_min and self.label > label_min)


@dataclass
class EvidenceEstimate:
    log_z: float
    log_z_uncertainty: float
    info_h: float
    n_iterations: int
    n_live: int
    samples: np.ndarray  # dead points then final live points, one row each
    log_likes: np.ndarray
    log_weights: np.ndarray  # unnormalised: ln L + ln(width)
    param_names: tuple[str, ...] = ()
    wall_time: float = 0.0
    n_likelihood_calls: int = 0
    # per-iteration trace
    log_prior_mass: np.ndarray = field(default_factory=lambda: np.empty(0))
    log_l0: np.ndarray = field(default_factory=lambda: np.empty(0))
    replacement_log_like: np.ndarray = field(default_factory=lambda: np.empty(0))
    log_z_trace: np.ndarray = field(default_factory=lambda: np.empty(0))

    @property
    def weights(self) -> np.ndarray:
        w = np.exp(self.log_weights - self.log_z)
        return w / w.sum()


@dataclass
class PosteriorSamples:
    samples: np.ndarray
    weights: np.ndarray

    @property
    def mean(self) -> np.ndarray:
        return self.weights @ self.samples

    @property
    def std(self) -> np.ndarray:
        return np.sqrt(self.weights @ (self.samples - self.mean) ** 2)

    @property
    def effective_size(self) -> float:
        return float(1.0 / np.sum(self.weights**2))


def shrinkage_log_t(n_live: int) -> float:
    """Expected log shrinkage per iteration, ln(N / (N + 1))."""
    if n_live < 1:
        raise ValueError("n_live must be >= 1")
    return math.log(n_live) - math.log(n_live + 1)


def _reflect(u: np.ndarray) -> np.ndarray:
    u = np.mod(u, 2.0)
    return np.where(u > 1.0, 2.0 - u, u)


def adapt_step_sizes(step_sizes: np.ndarray, accepted: int, rejected: int, target: float) -> None:
    """Grow steps by e^(1/accepted) above the target acceptance, else shrink by e^(-1/rejected)."""
    total = accepted + rejected
    if total == 0:
        return
    if accepted / total > target:
        step_sizes *= math.exp(1.0 / accepted)
    elif rejected:
        step_sizes *= math.exp(-1.0 / rejected)
    np.minimum(step_sizes, 1.0, out=step_sizes)


def explore(
    start: LivePoint,
    log_l_min: float,
    step_sizes: np.ndarray,
    rng: RngHandle,
    log_likelihood: Callable[[np.ndarray], float],
    transform: Callable[[np.ndarray], np.ndarray],
    n_steps: int = 20,
    target_acceptance: float = 0.5,
    label_min: float = 0.0,
    shape: np.ndarray | None = None,
    compiled: tuple | None = None,
    population: np.ndarray | None = None,
    de_fraction: float = 0.0,
) -> tuple[LivePoint, int]:
    """Constrained Metropolis walk in the unit cube.

    Each step moves the point by ``shape @ (step_sizes * N(0, 1))`` and
    accepts iff the new point, carrying the current label, beats
    ``(log_l_min, label_min)``; the label itself is redrawn from its
    constrained conditional before each step.  Without
    ``shape`` the steps are independent per coordinate and reflect at the
    cube faces.  With a correlated ``shape`` a reflected proposal is no longer
    symmetric, so steps leaving the cube are rejected instead.
    ``step_sizes`` is adapted in place after the batch.  Returns the final
    point and the number of accepted steps.

    With ``population`` (unit-cube rows of the other live points) a fraction
    ``de_fraction`` of the steps are replaced by differences of two random
    rows, scaled by 2.38 / sqrt(2 d), or by 1 one time in ten.

    ``compiled = (box, kernel)`` runs the same walk in compiled code for
    models that expose a ``kernel`` (``transform`` and ``log_likelihood``
    must then describe the same box and likelihood).
    """
    g = rng.generator
    d = start.u.size
    noise = g.standard_normal((n_steps, d)) * step_sizes
    if shape is not None:
        noise = noise @ shape.T
    if population is not None and de_fraction > 0:
        m = population.shape[0]
        pick = g.random(n_steps) < de_fraction
        n_de = int(pick.sum())
        a = g.integers(m, size=n_de)
        b = (a + 1 + g.integers(m - 1, size=n_de)) % m
        scale = np.where(g.random(n_de) < 0.1, 1.0, 2.38 / math.sqrt(2 * d))
        noise[pick] = scale[:, None] * (population[a] - population[b])
    labels = g.random(n_steps)
    if compiled is not None:
        box, (kind, mat, vec, k) = compiled
        u, log_l, label, accepted = _kernels.walk(
            start.u, start.log_like, start.label, log_l_min, label_min, noise, labels,
            box.lower, box.upper - box.lower, box.ordered_head, box.simplex_tail, shape is None,
            kind, mat, vec, k,
        )
        theta = transform(u) if accepted else start.theta
        adapt_step_sizes(step_sizes, accepted, n_steps - accepted, target_acceptance)
        return LivePoint(u, theta, float(log_l), float(label)), accepted

    u, theta, log_l, label = start.u, start.theta, start.log_like, start.label
    accepted = 0
    for i in range(n_steps):
        if log_l > log_l_min:
            label = labels[i]
        else:
            label = 1.0 - (1.0 - label_min) * labels[i]
        if shape is None:
            u_new = _reflect(u + noise[i])
        else:
            u_new = u + noise[i]
            if u_new.min() < 0.0 or u_new.max() > 1.0:
                continue
        theta_new = transform(u_new)
        log_l_new = log_likelihood(theta_new)
        if log_l_new > log_l_min or (log_l_new == log_l_min and label > label_min):
            u, theta, log_l = u_new, theta_new, log_l_new
            accepted += 1
    adapt_step_sizes(step_sizes, accepted, n_steps - accepted, target_acceptance)
    return LivePoint(u, theta, float(log_l), float(label)), accepted


def _live_shape(live: list[LivePoint], skip: int) -> np.ndarray:
    """Cholesky factor of the covariance of the surviving live points in the cube."""
    u = np.array([p.u for j, p in enumerate(live) if j != skip])
    d = u.shape[1]
    cov = np.atleast_2d(np.cov(u, rowvar=False))
    cov += np.eye(d) * (1e-12 + 1e-10 * np.trace(cov) / d)
    try:
        return np.linalg.cholesky(cov)
    except np.linalg.LinAlgError:
        return np.diag(np.sqrt(np.clip(np.diag(cov), 1e-24, None)))


class _Accumulator:
    """Running log-evidence and information H = sum p ln(L / Z)."""

    def __init__(self):
        self.log_z = -math.inf
        self.h = 0.0

    def add(self, log_wt: float, log_l: float) -> float:
        log_z_new = float(np.logaddexp(self.log_z, log_wt))
        if self.log_z == -math.inf:
            h_new = math.exp(log_wt - log_z_new) * log_l - log_z_new
        else:
            h_new = (
                math.exp(log_wt - log_z_new) * log_l
                + math.exp(self.log_z - log_z_new) * (self.h + self.log_z)
                - log_z_new
            )
        delta = log_z_new - self.log_z
        self.log_z, self.h = log_z_new, h_new
        return delta


def run_nested(model, prior: PriorBox | None = None, cfg: NsConfig | None = None) -> EvidenceEstimate:
    """Estimate ln Z for ``model`` under a uniform prior on ``prior`` (default: the model's box).

    ``model`` must provide ``log_likelihood(theta)``; ``param_names`` and
    ``box`` are used when present.
    """
    cfg = cfg or NsConfig()
    box = prior if prior is not None else model.box
    transform = make_transform(box)
    log_likelihood = model.log_likelihood
    kernel = getattr(model, "kernel", None)
    compiled = (box, kernel) if kernel is not None else None
    rng = RngHandle(cfg.seed)
    g = rng.generator
    n, d = cfg.n_live, box.dim
    n_steps = cfg.steps_for(d)
    log_t = shrinkage_log_t(n)
    log_1mt = -math.log(n + 1)

    t0 = time.perf_counter()
    live = []
    for _ in range(n):
        u = g.random(d)
        theta = transform(u)
        log_l = float(log_likelihood(theta))
        if not math.isfinite(log_l):
            raise ValueError(f"log-likelihood is not finite on the prior support (theta={theta})")
        live.append(LivePoint(u, theta, log_l, float(g.random())))
    n_calls = n

    if cfg.initial_step_sizes is None:
        steps = np.full(d, 0.1 if cfg.proposal == "axis" else 1.0)
    else:
        steps = np.array(cfg.initial_step_sizes, dtype=float)
        if steps.size != d:
            raise ValueError(f"initial_step_sizes has {steps.size} entries, model has {d} parameters")

    acc = _Accumulator()
    dead_theta, dead_log_l, dead_log_wt = [], [], []
    trace_mass, trace_l0, trace_new, trace_z = [], [], [], []
    log_mass = 0.0
    k = 0
    converged = False
    while k < cfg.max_iterations:
        k += 1
        worst = min(range(n), key=lambda j: (live[j].log_like, live[j].label))
        w = live[worst]
        log_wt = log_mass + log_1mt + w.log_like  # width h_k = chi_{k-1} (1 - t)
        delta = acc.add(log_wt, w.log_like)
        log_mass += log_t
        dead_theta.append(w.theta)
        dead_log_l.append(w.log_like)
        dead_log_wt.append(log_wt)

        shape = _live_shape(live, worst) if cfg.proposal == "covariance" else None
        population = None
        if cfg.de_fraction > 0 and cfg.proposal == "covariance":
            population = np.array([p.u for j, p in enumerate(live) if j != worst])
        for _attempt in range(cfg.retry_budget + 1):
            src = int(g.integers(n - 1))
            src += src >= worst
            new, accepted = explore(
                live[src], w.log_like, steps, rng, log_likelihood, transform,
                n_steps=n_steps, target_acceptance=cfg.target_acceptance,
                label_min=w.label, shape=shape, compiled=compiled,
                population=population, de_fraction=cfg.de_fraction,
            )
            n_calls += n_steps
            if accepted:
                break
        else:
            raise ExplorationError(w.log_like, cfg.retry_budget + 1)
        live[worst] = new

        trace_mass.append(log_mass)
        trace_l0.append(w.log_like)
        trace_new.append(new.log_like)
        trace_z.append(acc.log_z)
        if delta < cfg.stop_delta_logz and k > cfg.stop_info_factor * n * acc.h:
            converged = True
            break

    # remaining prior mass is shared equally by the live points
    log_share = log_mass - math.log(n)
    for p in sorted(live, key=lambda p: (p.log_like, p.label)):
        acc.add(log_share + p.log_like, p.log_like)
        dead_theta.append(p.theta)
        dead_log_l.append(p.log_like)
        dead_log_wt.append(log_share + p.log_like)

    h = max(acc.h, 0.0)
    estimate = EvidenceEstimate(
        log_z=acc.log_z,
        log_z_uncertainty=math.sqrt(h / n),
        info_h=acc.h,
        n_iterations=k,
        n_live=n,
        samples=np.array(dead_theta),
        log_likes=np.array(dead_log_l),
        log_weights=np.array(dead_log_wt),
        param_names=tuple(getattr(model, "param_names", ())),
        wall_time=time.perf_counter() - t0,
        n_likelihood_calls=n_calls,
        log_prior_mass=np.array(trace_mass),
        log_l0=np.array(trace_l0),
        replacement_log_like=np.array(trace_new),
        log_z_trace=np.array(trace_z),
    )
    if not converged:
        raise MaxIterationsError(estimate)
    return estimate


def posterior_samples(estimate: EvidenceEstimate, canonicalize=None) -> PosteriorSamples:
    """Weighted posterior sample set, weights L_k h_k / Z.

    ``canonicalize`` is applied to every sample first (used to sort mixture
    components so that means are taken over a fixed labelling).
    """
    if estimate.samples.size == 0:
        raise ValueError("empty nested sampling trace")
    samples = estimate.samples
    if canonicalize is not None:
        samples = np.array([canonicalize(s) for s in samples])
    return PosteriorSamples(samples=samples, weights=estimate.weights)


def write_trace(estimate: EvidenceEstimate, path) -> None:
    """Tab-separated per-iteration trace: k, ln prior mass, ln L0, ln Z so far."""
    lines = ["k\tlog_prior_mass\tlog_l0\tlog_z"]
    for k, (m, l0, z) in enumerate(
        zip(estimate.log_prior_mass, estimate.log_l0, estimate.log_z_trace), start=1
    ):
        lines.append(f"{k}\t{m:.17g}\t{l0:.17g}\t{z:.17g}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8", newline="\n")


__all__ = [
    "EvidenceEstimate",
    "ExplorationError",
    "LivePoint",
    "MaxIterationsError",
    "NsConfig",
    "PosteriorSamples",
    "adapt_step_sizes",
    "explore",
    "posterior_samples",
    "run_nested",
    "shrinkage_log_t",
    "write_trace",
]
