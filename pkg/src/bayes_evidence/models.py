"""Benchmark models: polynomial regression and a 1-D Gaussian mixture.

Both expose the same small surface used by the samplers: a flat parameter
vector ``theta`` with named coordinates, a log-likelihood and a map from the
unit cube onto a uniform prior box.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .stats import LOG_2PI, logsumexp

# decoded weights may undershoot zero by rounding
_SIMPLEX_TOL = 1e-12


@dataclass(frozen=True, eq=False)
class Dataset:
    """Observed data.  ``abscissae`` is ``None`` for mixture data."""

    ordinates: np.ndarray
    abscissae: np.ndarray | None = None

    def __post_init__(self):
        y = np.atleast_1d(np.asarray(self.ordinates, dtype=float))
        if y.ndim != 1:
            raise ValueError("ordinates must be one-dimensional")
        object.__setattr__(self, "ordinates", y)
        if self.abscissae is not None:
            x = np.atleast_1d(np.asarray(self.abscissae, dtype=float))
            if x.shape != y.shape:
                raise ValueError(
                    f"abscissae ({x.size}) and ordinates ({y.size}) differ in length"
                )
            object.__setattr__(self, "abscissae", x)

    @property
    def count(self) -> int:
        return self.ordinates.size

    def __eq__(self, other):
        if not isinstance(other, Dataset):
            return NotImplemented
        if (self.abscissae is None) != (other.abscissae is None):
            return False
        same_x = self.abscissae is None or np.array_equal(self.abscissae, other.abscissae)
        return same_x and np.array_equal(self.ordinates, other.ordinates)

    def __hash__(self):
        return hash((self.ordinates.tobytes(), None if self.abscissae is None else self.abscissae.tobytes()))


@dataclass(frozen=True, eq=False)
class PriorBox:
    """Uniform prior over a box.

    The trailing ``simplex_tail`` coordinates are mixture weights: their unit
    cube values are read as cut points on [0, 1] whose sorted spacings give a
    point on the simplex (a flat Dirichlet draw).  Only the first
    ``simplex_tail`` weights are stored; the last one is implied.

    The leading ``ordered_head`` coordinates are mapped one-to-one onto the
    sorted region x_1 <= ... <= x_k of their box (uniform there).  For a
    likelihood symmetric under relabelling this leaves the evidence unchanged
    and removes the k! copies of every posterior mode.
    """

    lower: np.ndarray
    upper: np.ndarray
    simplex_tail: int = 0
    ordered_head: int = 0

    def __post_init__(self):
        lo = np.atleast_1d(np.asarray(self.lower, dtype=float))
        hi = np.atleast_1d(np.asarray(self.upper, dtype=float))
        if lo.shape != hi.shape or lo.ndim != 1:
            raise ValueError("lower and upper must be vectors of equal length")
        if not np.all(lo < hi):
            bad = int(np.argmin(hi - lo))
            raise ValueError(f"prior box needs lower < upper (coordinate {bad}: [{lo[bad]}, {hi[bad]}])")
        if not 0 <= self.simplex_tail <= lo.size:
            raise ValueError("simplex_tail out of range")
        if not 0 <= self.ordered_head <= lo.size - self.simplex_tail:
            raise ValueError("ordered_head out of range")
        if self.ordered_head and not (
            np.all(lo[: self.ordered_head] == lo[0]) and np.all(hi[: self.ordered_head] == hi[0])
        ):
            raise ValueError("ordered coordinates must share one interval")
        if self.simplex_tail:
            tail = slice(lo.size - self.simplex_tail, None)
            if not (np.all(lo[tail] == 0.0) and np.all(hi[tail] == 1.0)):
                raise ValueError("weight coordinates must span [0, 1]")
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)

    @property
    def dim(self) -> int:
        return self.lower.size

    @property
    def log_volume(self) -> float:
        return float(np.sum(np.log(self.upper - self.lower)))

    def __eq__(self, other):
        if not isinstance(other, PriorBox):
            return NotImplemented
        return (
            np.array_equal(self.lower, other.lower)
            and np.array_equal(self.upper, other.upper)
            and self.simplex_tail == other.simplex_tail
            and self.ordered_head == other.ordered_head
        )

    __hash__ = None


def sorted_uniforms(u) -> np.ndarray:
    """Bijection from the unit cube onto {0 <= x_1 <= ... <= x_k <= 1}.

    x_k = u_k**(1/k) is the largest of k uniforms, and each x_j given x_{j+1}
    is the largest of j uniforms on [0, x_{j+1}].
    """
    u = np.asarray(u, dtype=float)
    k = u.size
    out = np.empty(k)
    top = 1.0
    for j in range(k, 0, -1):
        top *= u[j - 1] ** (1.0 / j)
        out[j - 1] = top
    return out


def make_transform(box: PriorBox):
    """Unchecked unit-cube -> parameter map for ``box`` (used in sampler loops)."""
    lo, span = box.lower, box.upper - box.lower
    h, k = box.ordered_head, box.simplex_tail

    def transform(u):
        return _kernels.unit_to_box(u, lo, span, h, k)

    return transform


def prior_transform(u, box: PriorBox) -> np.ndarray:
    """Map a unit-cube point onto the prior box.

    Plain coordinates map affinely onto [lower, upper]; see :class:`PriorBox`
    for the ordered and simplex coordinates.
    """
    u = np.asarray(u, dtype=float)
    if u.shape != box.lower.shape:
        raise ValueError(f"u has {u.size} coordinates, prior box has {box.dim}")
    if np.any(u < 0.0) or np.any(u > 1.0) or not np.all(np.isfinite(u)):
        raise ValueError("u lies outside the unit cube")
    return make_transform(box)(u)


def design_matrix(abscissae, order: int) -> np.ndarray:
    """I x order matrix whose column n holds x**n (n = 0 .. order-1)."""
    if order < 1:
        raise ValueError(f"polynomial order must be >= 1, got {order}")
    x = np.atleast_1d(np.asarray(abscissae, dtype=float))
    if x.size == 0:
        raise ValueError("empty abscissae")
    return np.vander(x, order, increasing=True)


def poly_log_likelihood(data: Dataset, w, gamma: float) -> float:
    """Gaussian log-likelihood of the data around the polynomial with coefficients ``w``."""
    if not gamma > 0:
        raise ValueError(f"noise precision gamma must be > 0, got {gamma}")
    w = np.atleast_1d(np.asarray(w, dtype=float))
    if data.abscissae is None:
        raise ValueError("polynomial data needs abscissae")
    resid = data.ordinates - design_matrix(data.abscissae, w.size) @ w
    return float(0.5 * data.count * (math.log(gamma) - LOG_2PI) - 0.5 * gamma * (resid @ resid))


def gmm_components(theta) -> int:
    n = len(theta)
    if (n + 1) % 3:
        raise ValueError(f"a mixture parameter vector has length 3S-1, got {n}")
    return (n + 1) // 3


def gmm_unpack(theta) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Split ``theta`` into (means, sigmas, weights) with the last weight restored."""
    theta = np.asarray(theta, dtype=float)
    s = gmm_components(theta)
    mu = theta[:s]
    sigma = theta[s : 2 * s]
    head = theta[2 * s :]
    pi = np.append(head, 1.0 - head.sum())
    if np.any(pi < -_SIMPLEX_TOL):
        raise ValueError("mixture weights are not on the simplex")
    pi = np.clip(pi, 0.0, None)
    if np.any(sigma <= 0):
        raise ValueError("mixture widths must be > 0")
    return mu, sigma, pi


def gmm_pack(mu, sigma, pi) -> np.ndarray:
    return np.concatenate([np.asarray(mu, float), np.asarray(sigma, float), np.asarray(pi, float)[:-1]])


def canonicalize_gmm(theta) -> np.ndarray:
    """Reorder components by ascending mean (removes label switching)."""
    mu, sigma, pi = gmm_unpack(theta)
    order = np.argsort(mu, kind="stable")
    return gmm_pack(mu[order], sigma[order], pi[order])


def gmm_log_likelihood(data: Dataset, theta) -> float:
    """sum_i ln sum_s pi_s G(D_i | mu_s, 1/sigma_s**2), log-sum-exp per point."""
    mu, sigma, pi = gmm_unpack(theta)
    with np.errstate(divide="ignore"):
        log_pi = np.log(pi)
    y = data.ordinates[:, None]
    z = (y - mu) / sigma
    comp = log_pi - np.log(sigma) - 0.5 * LOG_2PI - 0.5 * z * z
    return float(np.sum(logsumexp(comp, axis=1)))


class PolynomialModel:
    """Polynomial with ``order`` coefficients plus a noise precision.

    ``theta = (w_1, ..., w_order, gamma)``.
    """

    family = "poly"

    def __init__(self, data: Dataset, order: int, box: PriorBox | None = None):
        if data.abscissae is None:
            raise ValueError("polynomial data needs abscissae")
        self.data = data
        self.order = int(order)
        self.design = design_matrix(data.abscissae, self.order)
        self.box = box if box is not None else default_poly_box(self.order)
        if self.box.dim != self.order + 1:
            raise ValueError("prior box dimension does not match the model")
        self._y = data.ordinates

    @property
    def model_id(self) -> str:
        return f"poly-{self.order}"

    @property
    def param_names(self) -> tuple[str, ...]:
        return tuple(f"w{n}" for n in range(1, self.order + 1)) + ("gamma",)

    @property
    def n_params(self) -> int:
        return self.order + 1

    def prior_transform(self, u) -> np.ndarray:
        return prior_transform(u, self.box)

    def log_likelihood(self, theta) -> float:
        return _kernels.poly_loglike(self.design, self._y, np.asarray(theta, dtype=float))

    @property
    def kernel(self):
        """Arguments for the compiled sampler loop."""
        return (_kernels.POLY, self.design, self._y, 0)

    def canonicalize(self, theta) -> np.ndarray:
        return np.asarray(theta, dtype=float)


class GmmModel:
    """1-D mixture of ``n_components`` Gaussians.

    ``theta = (mu_1..mu_S, sigma_1..sigma_S, pi_1..pi_{S-1})``.
    """

    family = "gmm"

    def __init__(self, data: Dataset, n_components: int, box: PriorBox | None = None):
        if n_components < 1:
            raise ValueError("a mixture needs at least one component")
        self.data = data
        self.n_components = int(n_components)
        self.box = box if box is not None else default_gmm_box(data, self.n_components)
        if self.box.dim != 3 * self.n_components - 1 or self.box.simplex_tail != self.n_components - 1:
            raise ValueError("prior box layout does not match the model")
        self._y = data.ordinates

    @property
    def model_id(self) -> str:
        return f"gmm-{self.n_components}"

    @property
    def param_names(self) -> tuple[str, ...]:
        s = range(1, self.n_components + 1)
        return (
            tuple(f"mu{k}" for k in s)
            + tuple(f"sigma{k}" for k in s)
            + tuple(f"pi{k}" for k in range(1, self.n_components))
        )

    @property
    def n_params(self) -> int:
        return 3 * self.n_components - 1

    def prior_transform(self, u) -> np.ndarray:
        return prior_transform(u, self.box)

    def log_likelihood(self, theta) -> float:
        return _kernels.gmm_loglike(self._y, np.asarray(theta, dtype=float), self.n_components)

    @property
    def kernel(self):
        """Arguments for the compiled sampler loop."""
        return (_kernels.GMM, np.empty((0, 0)), self._y, self.n_components)

    def canonicalize(self, theta) -> np.ndarray:
        return canonicalize_gmm(theta)


def default_poly_box(order: int) -> PriorBox:
    lo = np.append(np.full(order, -10.0), 0.01)
    hi = np.append(np.full(order, 10.0), 10.0)
    return PriorBox(lo, hi)


def default_gmm_box(data: Dataset, n_components: int) -> PriorBox:
    s = n_components
    y = data.ordinates
    lo = np.concatenate([np.full(s, y.min() - 2.0), np.full(s, 0.05), np.zeros(s - 1)])
    hi = np.concatenate([np.full(s, y.max() + 2.0), np.full(s, 5.0), np.ones(s - 1)])
    return PriorBox(lo, hi, simplex_tail=s - 1, ordered_head=s)
