"""Densities, special functions and seeded sampling.

All densities follow the precision parameterisation used throughout the
package: a Gaussian is described by its mean and inverse variance, and a
Gamma density by a *rate* ``a`` and a *shape* ``b``::

    Gamma(x | a, b) = a**b * x**(b - 1) * exp(-a * x) / Gamma(b)

so that ``<x> = b / a`` and ``<ln x> = digamma(b) - ln a``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

LOG_2PI = math.log(2.0 * math.pi)

# Lanczos approximation, g = 7, n = 9 (relative error ~1e-15 for x >= 0.5)
_LANCZOS_G = 7.0
_LANCZOS_COEF = (
    0.99999999999980993,
    676.5203681218851,
    -1259.1392167224028,
    771.32342877765313,
    -176.61502916214059,
    12.507343278686905,
    -0.13857109526572012,
    9.9843695780195716e-6,
    1.5056327351493116e-7,
)
_HALF_LOG_2PI = 0.5 * LOG_2PI

# Bernoulli-number terms B_2k / (2k) of the digamma asymptotic series
_DIGAMMA_SERIES = (
    1.0 / 12.0,
    -1.0 / 120.0,
    1.0 / 252.0,
    -1.0 / 240.0,
    1.0 / 132.0,
    -691.0 / 32760.0,
    1.0 / 12.0,
)
_DIGAMMA_SHIFT = 6.0


@dataclass(frozen=True)
class GaussianParams:
    mean: float
    inv_variance: float

    def __post_init__(self):
        if not self.inv_variance > 0:
            raise ValueError(f"inv_variance must be > 0, got {self.inv_variance}")

    @property
    def sigma(self) -> float:
        return 1.0 / math.sqrt(self.inv_variance)


@dataclass(frozen=True)
class MultivariateGaussianParams:
    mean: np.ndarray
    inv_covariance: np.ndarray

    def __post_init__(self):
        mean = np.atleast_1d(np.asarray(self.mean, dtype=float))
        prec = np.atleast_2d(np.asarray(self.inv_covariance, dtype=float))
        d = mean.shape[0]
        if prec.shape != (d, d):
            raise ValueError(f"inv_covariance must be {d}x{d}, got {prec.shape}")
        if not np.allclose(prec, prec.T, rtol=1e-12, atol=1e-12):
            raise ValueError("inv_covariance must be symmetric")
        try:
            np.linalg.cholesky(prec)
        except np.linalg.LinAlgError as exc:
            raise ValueError("inv_covariance is not positive definite") from exc
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "inv_covariance", prec)

    @property
    def dim(self) -> int:
        return self.mean.shape[0]


@dataclass(frozen=True)
class GammaParams:
    """Gamma density with rate ``rate`` (a) and shape ``shape`` (b)."""

    rate: float
    shape: float

    def __post_init__(self):
        if not self.rate > 0:
            raise ValueError(f"Gamma rate must be > 0, got {self.rate}")
        if not self.shape > 0:
            raise ValueError(f"Gamma shape must be > 0, got {self.shape}")


@dataclass(frozen=True)
class DirichletParams:
    concentrations: np.ndarray

    def __post_init__(self):
        lam = np.atleast_1d(np.asarray(self.concentrations, dtype=float))
        if lam.ndim != 1 or lam.size == 0:
            raise ValueError("concentrations must be a non-empty vector")
        if not np.all(lam > 0):
            raise ValueError("all Dirichlet concentrations must be > 0")
        object.__setattr__(self, "concentrations", lam)


@dataclass
class RngHandle:
    """A seeded, single-owner random stream.

    Two handles built from the same ``seed`` and ``algorithm`` produce the
    same sequence of draws.  Use :meth:`spawn` to derive independent child
    streams for concurrent work.
    """

    seed: int
    algorithm: str = "PCG64"
    generator: np.random.Generator = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if not 0 <= int(self.seed) < 2**64:
            raise ValueError("seed must be a 64-bit unsigned integer")
        self.seed = int(self.seed)
        bitgen_cls = getattr(np.random, self.algorithm, None)
        if bitgen_cls is None or not isinstance(bitgen_cls, type) or not issubclass(
            bitgen_cls, np.random.BitGenerator
        ):
            raise ValueError(f"unknown RNG algorithm {self.algorithm!r}")
        self.generator = np.random.Generator(bitgen_cls(self.seed))

    def spawn(self, n: int) -> list[RngHandle]:
        """Derive ``n`` child handles whose seeds are a pure function of ours."""
        children = np.random.SeedSequence(self.seed).spawn(n)
        return [
            RngHandle(int(c.generate_state(1, dtype=np.uint64)[0]), self.algorithm)
            for c in children
        ]


def derive_seeds(seed: int, n: int) -> list[int]:
    """Deterministic list of ``n`` independent 64-bit seeds derived from ``seed``."""
    return [h.seed for h in RngHandle(seed).spawn(n)]


# ---------------------------------------------------------------------------
# special functions


def gammaln(x):
    """Natural log of the Gamma function for x > 0 (Lanczos, g=7)."""
    x = np.asarray(x, dtype=float)
    if np.any(~(x > 0)):
        raise ValueError("gammaln requires x > 0")
    # lnGamma(x) = lnGamma(x + 1) - ln x keeps the Lanczos argument >= 1
    small = x < 0.5
    z = np.where(small, x + 1.0, x) - 1.0
    acc = np.full_like(z, _LANCZOS_COEF[0])
    for k, c in enumerate(_LANCZOS_COEF[1:], start=1):
        acc = acc + c / (z + k)
    t = z + _LANCZOS_G + 0.5
    out = _HALF_LOG_2PI + (z + 0.5) * np.log(t) - t + np.log(acc)
    out = np.where(small, out - np.log(x), out)
    return out if out.ndim else float(out)


def digamma(b):
    """Psi(b) = d lnGamma(b) / db for b > 0.

    The argument is shifted above 6 with Psi(x) = Psi(x + 1) - 1/x and the
    asymptotic series is then summed through the x**-14 term.
    """
    b = np.asarray(b, dtype=float)
    if np.any(~(b > 0)) or np.any(~np.isfinite(b)):
        raise ValueError("digamma requires finite b > 0")
    x = b.copy()
    shift = np.zeros_like(x)
    for _ in range(int(_DIGAMMA_SHIFT)):
        low = x < _DIGAMMA_SHIFT
        if not np.any(low):
            break
        shift = np.where(low, shift + 1.0 / x, shift)
        x = np.where(low, x + 1.0, x)
    inv2 = 1.0 / (x * x)
    series = np.zeros_like(x)
    for c in reversed(_DIGAMMA_SERIES):
        series = (series + c) * inv2
    out = np.log(x) - 0.5 / x - series - shift
    return out if out.ndim else float(out)


# ---------------------------------------------------------------------------
# log densities


def gaussian_log_pdf(x, p: GaussianParams):
    """ln G(x | mean, inv_variance).  Accepts scalars or arrays of ``x``."""
    arr = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(arr)):
        raise ValueError("non-finite input")
    out = 0.5 * (math.log(p.inv_variance) - LOG_2PI) - 0.5 * p.inv_variance * (arr - p.mean) ** 2
    return out if out.ndim else float(out)


def mvn_log_pdf(x, p: MultivariateGaussianParams) -> float:
    x = np.atleast_1d(np.asarray(x, dtype=float))
    if x.shape != p.mean.shape:
        raise ValueError(f"dimension mismatch: x has shape {x.shape}, mean {p.mean.shape}")
    if not np.all(np.isfinite(x)):
        raise ValueError("non-finite input")
    try:
        chol = np.linalg.cholesky(p.inv_covariance)
    except np.linalg.LinAlgError as exc:
        raise ValueError("inv_covariance is not positive definite") from exc
    logdet = 2.0 * np.sum(np.log(np.diag(chol)))
    # (x - m)^T P (x - m) = |L^T (x - m)|^2 with P = L L^T
    z = chol.T @ (x - p.mean)
    return float(0.5 * (logdet - p.dim * LOG_2PI) - 0.5 * z @ z)


def gamma_log_pdf(x, p: GammaParams):
    arr = np.asarray(x, dtype=float)
    if np.any(~(arr > 0)) or not np.all(np.isfinite(arr)):
        raise ValueError("gamma_log_pdf domain error: x must be finite and > 0")
    out = p.shape * math.log(p.rate) + (p.shape - 1.0) * np.log(arr) - p.rate * arr - gammaln(p.shape)
    return out if out.ndim else float(out)


def dirichlet_log_pdf(pi, p: DirichletParams) -> float:
    pi = np.atleast_1d(np.asarray(pi, dtype=float))
    lam = p.concentrations
    if pi.shape != lam.shape:
        raise ValueError(f"dimension mismatch: pi has {pi.size} entries, expected {lam.size}")
    if np.any(pi < 0) or abs(pi.sum() - 1.0) > 1e-12:
        raise ValueError("pi is not on the simplex")
    zero = pi == 0
    if np.any(zero & (lam < 1)):
        raise OverflowError("Dirichlet density is infinite at a zero weight with concentration < 1")
    norm = gammaln(lam.sum()) - np.sum(gammaln(lam))
    with np.errstate(divide="ignore"):
        logs = np.where(zero & (lam == 1), 0.0, (lam - 1.0) * np.log(pi))
    return float(norm + np.sum(logs))


# ---------------------------------------------------------------------------
# expectations


def gamma_expectations(p: GammaParams) -> tuple[float, float]:
    """Return (<x>, <ln x>) under Gamma(rate, shape)."""
    return p.shape / p.rate, digamma(p.shape) - math.log(p.rate)


def gamma_entropy(p: GammaParams) -> float:
    """-<ln Gamma(x | a, b)> under the same density."""
    b = p.shape
    return float(b - math.log(p.rate) + gammaln(b) + (1.0 - b) * digamma(b))


def dirichlet_expected_log(lam) -> np.ndarray:
    """<ln pi_s> under Dirichlet(lam): Psi(lam_s) - Psi(sum lam)."""
    lam = np.asarray(lam, dtype=float)
    return digamma(lam) - digamma(lam.sum())


# ---------------------------------------------------------------------------
# sampling


def sample_gaussian(rng: RngHandle, p: GaussianParams, size=None):
    return rng.generator.normal(p.mean, p.sigma, size=size)


def sample_gamma(rng: RngHandle, p: GammaParams, size=None):
    return rng.generator.gamma(p.shape, 1.0 / p.rate, size=size)


def sample_dirichlet(rng: RngHandle, p: DirichletParams) -> np.ndarray:
    g = rng.generator.gamma(p.concentrations, 1.0)
    total = g.sum()
    if total == 0.0:
        # every gamma draw underflowed; pick a vertex with the same odds
        out = np.zeros_like(g)
        out[rng.generator.choice(g.size, p=p.concentrations / p.concentrations.sum())] = 1.0
        return out
    out = g / total
    out[-1] = 1.0 - out[:-1].sum() if out.size > 1 else 1.0
    if out[-1] < 0:
        out[-1] = 0.0
        out /= out.sum()
    return out


def sample_uniform(rng: RngHandle, lo: float, hi: float, size=None):
    if not lo < hi:
        raise ValueError(f"sample_uniform requires lo < hi, got [{lo}, {hi}]")
    return rng.generator.uniform(lo, hi, size=size)


def logsumexp(a, axis=None):
    """ln(sum(exp(a))) without overflow; -inf entries are allowed."""
    a = np.asarray(a, dtype=float)
    amax = np.max(a, axis=axis, keepdims=True)
    amax = np.where(np.isfinite(amax), amax, 0.0)
    with np.errstate(divide="ignore"):
        out = np.log(np.sum(np.exp(a - amax), axis=axis, keepdims=True)) + amax
    if axis is None:
        return float(out.reshape(()))
    return np.squeeze(out, axis=axis)
