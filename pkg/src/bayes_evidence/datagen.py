"""Synthetic benchmark datasets and the plain-text dataset format.

File format: UTF-8, LF line endings, ``#`` lines are comments.  Polynomial
data has one ``x<TAB>y`` record per line, mixture data one ``y`` per line.
Floats are written with 17 significant digits so a round trip is exact.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .models import Dataset
from .stats import RngHandle


class DatasetFormatError(ValueError):
    pass


@dataclass(frozen=True)
class PolyGenSpec:
    coefficients: tuple[float, ...]
    interval: tuple[float, float] = (-2.0, 2.0)
    n_points: int = 40
    noise_sigma: float = 2.0
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "coefficients", tuple(float(c) for c in self.coefficients))
        a, b = self.interval
        if not self.coefficients:
            raise ValueError("at least one coefficient is required")
        if not a < b:
            raise ValueError(f"interval needs a < b, got [{a}, {b}]")
        if self.n_points < 1:
            raise ValueError("n_points must be >= 1")
        if not self.noise_sigma > 0:
            raise ValueError("noise_sigma must be > 0")


@dataclass(frozen=True)
class GmmGenSpec:
    means: tuple[float, ...]
    sigmas: tuple[float, ...]
    weights: tuple[float, ...]
    n_points: int = 300
    seed: int = 0

    def __post_init__(self):
        for name in ("means", "sigmas", "weights"):
            object.__setattr__(self, name, tuple(float(v) for v in getattr(self, name)))
        if not (len(self.means) == len(self.sigmas) == len(self.weights) >= 1):
            raise ValueError("means, sigmas and weights must have the same non-zero length")
        if any(s <= 0 for s in self.sigmas):
            raise ValueError("sigmas must be > 0")
        if any(w < 0 for w in self.weights) or abs(sum(self.weights) - 1.0) > 1e-9:
            raise ValueError("weights must lie on the simplex")
        if self.n_points < 1:
            raise ValueError("n_points must be >= 1")


# benchmark settings
CANONICAL_POLY = PolyGenSpec(coefficients=(0, 0, 0, 0, 0, 1), interval=(-2.0, 2.0), n_points=40, noise_sigma=2.0)
EASY_GMM = GmmGenSpec(means=(-1, 1, 3), sigmas=(0.4, 0.3, 0.7), weights=(0.3, 0.35, 0.35), n_points=300)
HARD_GMM = GmmGenSpec(means=(-1, 0, 1), sigmas=(0.4, 0.3, 0.7), weights=(0.3, 0.35, 0.35), n_points=600)


def polynomial_values(coefficients, x) -> np.ndarray:
    # coefficients are lowest order first
    return np.polynomial.polynomial.polyval(np.asarray(x, dtype=float), np.asarray(coefficients, dtype=float))


def generate_polynomial(spec: PolyGenSpec) -> Dataset:
    """Evenly spaced abscissae on the interval with Gaussian noise on the ordinates."""
    rng = RngHandle(spec.seed)
    x = np.linspace(spec.interval[0], spec.interval[1], spec.n_points)
    y = polynomial_values(spec.coefficients, x) + spec.noise_sigma * rng.generator.standard_normal(spec.n_points)
    return Dataset(ordinates=y, abscissae=x)


def generate_gmm(spec: GmmGenSpec) -> Dataset:
    """Draw a component label per point, then the point from that Gaussian."""
    rng = RngHandle(spec.seed)
    g = rng.generator
    weights = np.asarray(spec.weights)
    labels = g.choice(weights.size, size=spec.n_points, p=weights / weights.sum())
    mu = np.asarray(spec.means)[labels]
    sd = np.asarray(spec.sigmas)[labels]
    return Dataset(ordinates=mu + sd * g.standard_normal(spec.n_points))


def _fmt(v: float) -> str:
    return f"{v:.17g}"


def write_dataset(data: Dataset, path) -> None:
    path = Path(path)
    lines = []
    if data.abscissae is None:
        lines.append("# y")
        lines.extend(_fmt(y) for y in data.ordinates)
    else:
        lines.append("# x\ty")
        lines.extend(f"{_fmt(x)}\t{_fmt(y)}" for x, y in zip(data.abscissae, data.ordinates))
    path.write_text("\n".join(lines) + "\n", encoding="utf-8", newline="\n")


def read_dataset(path) -> Dataset:
    path = Path(path)
    text = path.read_text(encoding="utf-8")
    if not text.strip():
        raise DatasetFormatError(f"{path}: line 1: empty file")
    xs, ys = [], []
    width = None
    for lineno, raw in enumerate(text.split("\n"), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        fields = line.split("\t")
        if width is None:
            width = len(fields)
            if width not in (1, 2):
                raise DatasetFormatError(f"{path}: line {lineno}: expected 1 or 2 tab-separated fields, got {width}")
        elif len(fields) != width:
            raise DatasetFormatError(f"{path}: line {lineno}: expected {width} fields, got {len(fields)}")
        try:
            values = [float(f) for f in fields]
        except ValueError:
            raise DatasetFormatError(f"{path}: line {lineno}: not a number: {line!r}") from None
        if not all(np.isfinite(values)):
            raise DatasetFormatError(f"{path}: line {lineno}: non-finite value")
        if width == 2:
            xs.append(values[0])
        ys.append(values[-1])
    if not ys:
        raise DatasetFormatError(f"{path}: zero data rows")
    return Dataset(ordinates=np.array(ys), abscissae=np.array(xs) if width == 2 else None)
