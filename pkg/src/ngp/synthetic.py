"""Synthetic regression datasets with known support.

``ohm``, ``planck`` and ``gravitation`` draw every feature i.i.d. from
U(10, 20) and build the target from the leading two or three columns. The
correlated model mixes a shared per-sample factor into every feature so all
columns are pairwise correlated (rho = 0.5), and its target depends on the
first five.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import Dataset

GRAVITATIONAL_CONSTANT = 6.674e-11

LAW_SUPPORT = {"ohm": 2, "planck": 2, "gravitation": 3}
LAW_FEATURE_RANGE = (10.0, 20.0)
CORRELATED_SUPPORT = 5


@dataclass(frozen=True)
class GenConfig:
    samples: int
    features: int
    seed: int = 0
    noise_sigma: float = 0.0

    def __post_init__(self):
        if self.samples < 1:
            raise ValueError("samples must be >= 1")
        if self.features < 1:
            raise ValueError("features must be >= 1")
        if self.noise_sigma < 0:
            raise ValueError("noise_sigma must be >= 0")


def ohm(V, R):
    return V / R


def planck(nu, T):
    # constants absorbed; exponent is nu / T exactly
    return 2.0 * nu ** 3 / np.expm1(nu / T)


def gravitation(m1, m2, r):
    return GRAVITATIONAL_CONSTANT * m1 * m2 / r ** 2


LAWS = {"ohm": ohm, "planck": planck, "gravitation": gravitation}


def law_target(kind: str, X: np.ndarray) -> np.ndarray:
    if kind not in LAWS:
        raise ValueError(f"unknown law {kind!r}; choose from {sorted(LAWS)}")
    m = LAW_SUPPORT[kind]
    return LAWS[kind](*(X[:, i] for i in range(m)))


def gen_physical_law(kind: str, config: GenConfig) -> Dataset:
    if kind not in LAWS:
        raise ValueError(f"unknown law {kind!r}; choose from {sorted(LAWS)}")
    m = LAW_SUPPORT[kind]
    if config.features < m:
        raise ValueError(f"{kind} needs at least {m} features, got {config.features}")
    rng = np.random.default_rng(config.seed)
    X = rng.uniform(*LAW_FEATURE_RANGE, size=(config.samples, config.features))
    return Dataset(X, law_target(kind, X), true_support=frozenset(range(m)),
                   meta={"generator": kind, "seed": config.seed})


def correlated_target(X: np.ndarray) -> np.ndarray:
    """Noise-free target of the five-feature correlated benchmark.

    ``∨`` is read as pairwise maximum.
    """
    x1, x2, x3, x4, x5 = (X[:, i] for i in range(5))
    first = (10.0 * np.sin(np.maximum(x1, x2)) + np.maximum(np.maximum(x3, x4), x5) ** 3) \
        / (1.0 + (x1 + x5) ** 2)
    return (first + np.sin(0.5 * x3) * (1.0 + np.exp(x4 - 0.5 * x3))
            + x3 ** 2 + 2.0 * np.sin(x4) + 2.0 * x5)


def gen_correlated_model(config: GenConfig) -> Dataset:
    if config.features < CORRELATED_SUPPORT:
        raise ValueError(f"correlated model needs at least 5 features, got {config.features}")
    rng = np.random.default_rng(config.seed)
    J, P = config.samples, config.features
    e = rng.standard_normal((J, 1))
    z = rng.standard_normal((J, P))
    X = (e + z) / 2.0
    t = correlated_target(X)
    if config.noise_sigma > 0:
        t = t + config.noise_sigma * rng.standard_normal(J)
    return Dataset(X, t, true_support=frozenset(range(CORRELATED_SUPPORT)),
                   meta={"generator": "correlated", "seed": config.seed,
                         "noise_sigma": config.noise_sigma, "or_operator": "max"})


def augment_irrelevant(data: Dataset, count: int, low: float = -10.0, high: float = 10.0,
                       seed: int = 0) -> Dataset:
    """Append ``count`` i.i.d. U(low, high) columns; the support keeps its indices."""
    if count < 1:
        raise ValueError("count must be >= 1")
    if not low < high:
        raise ValueError(f"need low < high, got [{low}, {high})")
    extra = np.random.default_rng(seed).uniform(low, high, size=(data.n_samples, count))
    names = None
    if data.feature_names is not None:
        names = data.feature_names + tuple(f"noise{i + 1}" for i in range(count))
    meta = dict(data.meta, augmented={"count": count, "low": low, "high": high, "seed": seed})
    return Dataset(np.hstack([data.features, extra]), data.targets, feature_names=names,
                   true_support=data.true_support, meta=meta)


def generate(kind: str, config: GenConfig) -> Dataset:
    """Dispatch on generator name: a law name, ``correlated`` or ``quadrant``."""
    if kind == "correlated":
        return gen_correlated_model(config)
    if kind == "quadrant":
        side = int(round(config.features ** 0.5))
        return gen_quadrant_images(config, grid=(side, side))
    return gen_physical_law(kind, config)


def gen_quadrant_images(config: GenConfig, grid=(8, 8), window=(4, 4), origin=(0, 0)) -> Dataset:
    """Binary image task whose label looks only at one block of pixels.

    Pixels are i.i.d. U(0, 1); the label is 1 when the block's mean pixel
    exceeds 0.5. Targets are one-hot over two classes. ``true_support`` is the
    block's pixel indices.
    """
    rows, cols = grid
    h, w = window
    r0, c0 = origin
    if config.features != rows * cols:
        raise ValueError(f"features must equal {rows}x{cols}={rows * cols}")
    if r0 + h > rows or c0 + w > cols:
        raise ValueError("block does not fit the grid")
    rng = np.random.default_rng(config.seed)
    X = rng.uniform(0.0, 1.0, size=(config.samples, rows * cols))
    block = [(r0 + a) * cols + (c0 + b) for a in range(h) for b in range(w)]
    labels = (X[:, block].mean(axis=1) > 0.5).astype(np.int64)
    T = np.zeros((config.samples, 2))
    T[np.arange(config.samples), labels] = 1.0
    return Dataset(X, T, true_support=frozenset(block),
                   meta={"generator": "quadrant", "grid": (rows, cols), "seed": config.seed})
