"""Seeded synthetic stand-ins for the benchmark datasets.

The real Bank, Adult, CreditCard and Census1990 files are not bundled; the
schemas under ``schemas/`` load them when available. The generators here mimic
the property that matters for fair clustering: the protected attribute is
correlated with the features used as coordinates.
"""

from __future__ import annotations

import zlib

import numpy as np

from .core import ColorModel, Dataset, normalize_features


def _rng(seed: int, name: str) -> np.random.Generator:
    # keyed by generator name so data streams never coincide with algorithm seeds
    return np.random.default_rng([zlib.crc32(name.encode()), seed])


def bank_like(n: int = 4521, seed: int = 0) -> Dataset:
    """Two colors (married / other) over seven numeric bank-marketing style features.

    About 62% of points are married. Married clients skew older (46 vs 32
    years on average) and hold slightly larger balances, so color-blind
    clusters split unevenly by color.
    """
    rng = _rng(seed, "bank_like")
    married = rng.random(n) < 0.62
    age = np.where(married, rng.normal(46, 9, n), rng.normal(32, 9, n)).clip(19, 87)
    balance = rng.lognormal(np.where(married, 6.9, 6.6), 1.0, n) - 300
    day = rng.integers(1, 32, n).astype(float)
    duration = rng.gamma(2.0, 130, n)
    campaign = rng.geometric(0.38, n).astype(float)
    contacted = rng.random(n) < 0.18
    pdays = np.where(contacted, rng.uniform(1, 400, n), -1.0)
    previous = np.where(contacted, rng.poisson(2.0, n) + 1, 0).astype(float)
    coords = normalize_features(np.column_stack([age, balance, day, duration, campaign, pdays,
                                                 previous]))
    labels = np.where(married, 0, 1)
    return Dataset(coords, ColorModel("deterministic", ("married", "other")), labels=labels,
                   name="bank_like")


def adult_like(n: int = 2000, seed: int = 0) -> Dataset:
    """Metric membership over age (integer years) with age-correlated features."""
    rng = _rng(seed, "adult_like")
    age = rng.integers(17, 91, n)
    z = (age - 38) / 13.0
    hours = 40 + 6 * z + rng.normal(0, 8, n)
    edu = 10 + 0.8 * z + rng.normal(0, 2.5, n)
    gain = rng.exponential(1 + 0.5 * np.clip(z, 0, None), n)
    fnl = rng.normal(0, 1, n)
    coords = normalize_features(np.column_stack([hours, edu, gain, fnl + 0.6 * z]))
    return Dataset(coords, ColorModel("metric", ("value",), R=int(age.max())), values=age,
                   name="adult_like")


def census_like(n: int = 20_000, seed: int = 0, n_colors: int = 7,
                weights: tuple[float, ...] = (0.04, 0.14, 0.2, 0.27, 0.35),
                correlation: float = 0.1) -> Dataset:
    """Deterministic multi-color points from well-separated Gaussian blobs.

    Each blob has its own color distribution: a ``correlation`` share of the
    mass sits on one dominant color and the rest follows global proportions,
    so blobs are mildly unbalanced. The smallest default blob has about 800
    points, which lets cluster-size lower bounds of a few hundred bind.
    """
    rng = _rng(seed, "census_like")
    base = np.linspace(1.0, 1.6, n_colors)
    base /= base.sum()
    weights = np.asarray(weights, dtype=float) / np.sum(weights)
    blobs = len(weights)
    blob = rng.choice(blobs, size=n, p=weights)
    angle = 2 * np.pi * np.arange(blobs) / blobs
    means = 4.0 * np.column_stack([np.cos(angle), np.sin(angle)])
    coords = means[blob] + rng.normal(0, 1.0, size=(n, 2))
    dist = np.empty((blobs, n_colors))
    for b in range(blobs):
        dom = np.zeros(n_colors)
        dom[b % n_colors] = 1.0
        dist[b] = (1 - correlation) * base + correlation * dom
    cum = np.cumsum(dist[blob], axis=1)
    labels = (cum > rng.random(n)[:, None]).argmax(axis=1)
    colors = tuple(f"age{g}" for g in range(1, n_colors + 1))
    return Dataset(normalize_features(coords), ColorModel("deterministic", colors), labels=labels,
                   name="census_like")


def uniform_two_color(n: int, seed: int = 0, dim: int = 2) -> Dataset:
    """Uniform points with uniformly random two-color marginals."""
    rng = _rng(seed, "uniform_two_color")
    p = rng.random(n)
    return Dataset(rng.random((n, dim)), ColorModel("probabilistic", ("a", "b")),
                   probs=np.column_stack([p, 1 - p]), name="uniform_two_color")


SYNTHETIC = {
    "bank_like": bank_like,
    "adult_like": adult_like,
    "census_like": census_like,
    "uniform_two_color": uniform_two_color,
}
