"""Gaussian, Poisson and Poisson-Gaussian degradation of [0, 1] images.

All randomness flows through ``RngStream``: a counter-based Philox generator keyed
by (seed, substream), so a given image's noise does not depend on scheduling.
Degraded values are returned unclipped.
"""
import logging
import math
from abc import ABC, abstractmethod
from dataclasses import dataclass
from enum import Enum
from typing import Optional, Tuple

import numpy as np
from scipy import stats

from dnres_forge.errors import NoiseParameterError

logger = logging.getLogger(__name__)

MIN_VALIDATION_SAMPLES = 100_000


@dataclass(frozen=True)
class RngStream:
    seed: int
    substream: Tuple[int, ...] = ()

    ALGORITHM = "philox4x64-10"

    def generator(self) -> np.random.Generator:
        sequence = np.random.SeedSequence(self.seed, spawn_key=self.substream)
        return np.random.Generator(np.random.Philox(sequence))

    def child(self, *index: int) -> "RngStream":
        return RngStream(self.seed, self.substream + tuple(index))


def _check_clean(clean: np.ndarray):
    if not np.isfinite(clean).all():
        raise NoiseParameterError("Clean image contains non-finite values")
    if clean.size and (clean.min() < 0 or clean.max() > 1):
        raise NoiseParameterError(
            f"Clean image must lie in [0, 1], got [{clean.min()}, {clean.max()}]"
        )


def degrade_gaussian(
    clean: np.ndarray, sigma: float, rng: np.random.Generator
) -> np.ndarray:
    """y = x + n, n ~ N(0, (sigma/255)²); sigma is on the 0-255 scale."""
    if sigma < 0:
        raise NoiseParameterError(f"Gaussian sigma must be >= 0, not {sigma}")
    _check_clean(clean)
    noise = rng.normal(0.0, sigma / 255.0, size=clean.shape)
    return (clean + noise).astype(clean.dtype)


def degrade_poisson(clean: np.ndarray, peak: float, rng: np.random.Generator) -> np.ndarray:
    """p ~ Poisson(x * peak), returned as p / peak."""
    if not peak > 0:
        raise NoiseParameterError(f"Poisson peak must be > 0, not {peak}")
    _check_clean(clean)
    photons = rng.poisson(np.asarray(clean, dtype=np.float64) * peak)
    return (photons / peak).astype(clean.dtype)


def degrade_poisson_gaussian(
    clean: np.ndarray,
    sigma: float,
    peak: Optional[float],
    rng: np.random.Generator,
) -> np.ndarray:
    """z = p + n on the peak scale (alpha = 1), p ~ Poisson(x * peak), n ~ N(0, sigma²);
    returned as z / peak. ``peak`` defaults to 10 * sigma."""
    if peak is None:
        peak = 10 * sigma
    if sigma < 0:
        raise NoiseParameterError(f"Poisson-Gaussian sigma must be >= 0, not {sigma}")
    if not peak > 0:
        raise NoiseParameterError(f"Poisson-Gaussian peak must be > 0, not {peak}")
    _check_clean(clean)
    photons = rng.poisson(np.asarray(clean, dtype=np.float64) * peak)
    read_noise = rng.normal(0.0, sigma, size=clean.shape)
    return ((photons + read_noise) / peak).astype(clean.dtype)


class NoiseKind(Enum):
    GAUSSIAN = "gaussian"
    POISSON = "poisson"
    POISSON_GAUSSIAN = "poisson-gaussian"


class NoiseModel(ABC):
    kind: NoiseKind

    @abstractmethod
    def degrade(self, clean: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        raise NotImplementedError

    @abstractmethod
    def moments(self, level: float) -> Tuple[float, float]:
        """Mean and variance of one degraded pixel whose clean value is ``level``."""
        raise NotImplementedError

    @property
    @abstractmethod
    def label(self) -> str:
        raise NotImplementedError

    def __str__(self):
        return self.label

    @staticmethod
    def parse(text: str) -> "NoiseModel":
        """Parse "gaussian:25", "poisson:4", "poisson-gaussian:1" or "poisson-gaussian:1:10"."""
        name, *values = text.strip().split(":")
        try:
            kind = NoiseKind({"pg": "poisson-gaussian"}.get(name, name))
            numbers = [float(v) for v in values]
        except ValueError as e:
            raise NoiseParameterError(f"Invalid noise model {text!r}") from e
        if kind is NoiseKind.GAUSSIAN and len(numbers) == 1:
            return Gaussian(numbers[0])
        if kind is NoiseKind.POISSON and len(numbers) == 1:
            return Poisson(numbers[0])
        if kind is NoiseKind.POISSON_GAUSSIAN and len(numbers) in (1, 2):
            return PoissonGaussian(*numbers)
        raise NoiseParameterError(f"Wrong number of values in noise model {text!r}")


def _fmt(x: float) -> str:
    return f"{x:g}"


@dataclass(frozen=True)
class Gaussian(NoiseModel):
    sigma: float
    kind = NoiseKind.GAUSSIAN

    def __post_init__(self):
        if self.sigma < 0:
            raise NoiseParameterError(f"Gaussian sigma must be >= 0, not {self.sigma}")

    def degrade(self, clean, rng):
        return degrade_gaussian(clean, self.sigma, rng)

    def moments(self, level):
        return level, (self.sigma / 255.0) ** 2

    @property
    def label(self):
        return f"gaussian:{_fmt(self.sigma)}"


@dataclass(frozen=True)
class Poisson(NoiseModel):
    peak: float
    kind = NoiseKind.POISSON

    def __post_init__(self):
        if not self.peak > 0:
            raise NoiseParameterError(f"Poisson peak must be > 0, not {self.peak}")

    def degrade(self, clean, rng):
        return degrade_poisson(clean, self.peak, rng)

    def moments(self, level):
        return level, level / self.peak

    @property
    def label(self):
        return f"poisson:{_fmt(self.peak)}"


@dataclass(frozen=True)
class PoissonGaussian(NoiseModel):
    sigma: float
    peak: Optional[float] = None
    kind = NoiseKind.POISSON_GAUSSIAN

    def __post_init__(self):
        if self.peak is None:
            # "peak = 10 × σ"
            object.__setattr__(self, "peak", 10 * self.sigma)
        if self.sigma < 0 or not self.peak > 0:
            raise NoiseParameterError(
                f"Invalid Poisson-Gaussian parameters sigma={self.sigma}, peak={self.peak}"
            )

    def degrade(self, clean, rng):
        return degrade_poisson_gaussian(clean, self.sigma, self.peak, rng)

    def moments(self, level):
        return level, (level * self.peak + self.sigma**2) / self.peak**2

    @property
    def label(self):
        if self.peak == 10 * self.sigma:
            return f"poisson-gaussian:{_fmt(self.sigma)}"
        return f"poisson-gaussian:{_fmt(self.sigma)}:{_fmt(self.peak)}"


@dataclass
class NoiseReport:
    model: str
    n_samples: int
    level: float
    expected_mean: float
    expected_var: float
    mean: float
    var: float
    mean_bound: float
    var_bound: float

    @property
    def var_rel_error(self) -> float:
        return abs(self.var - self.expected_var) / self.expected_var

    @property
    def passed(self) -> bool:
        return (
            abs(self.mean - self.expected_mean) <= self.mean_bound
            and abs(self.var - self.expected_var) <= self.var_bound
        )

    def lines(self):
        verdict = "PASS" if self.passed else "FAIL"
        return [
            f"{self.model} at level {self.level:g}, {self.n_samples} samples",
            f"mean {self.mean:.6g} (expected {self.expected_mean:.6g} ± {self.mean_bound:.2g})",
            f"variance {self.var:.6g} (expected {self.expected_var:.6g} ± {self.var_bound:.2g}, "
            f"relative error {self.var_rel_error:.2%})",
            f"{verdict}",
        ]


def validate_noise_statistics(
    model: NoiseModel,
    n_samples: int,
    rng: np.random.Generator,
    level: float = 0.5,
    sample_model: Optional[NoiseModel] = None,
) -> NoiseReport:
    """Compare empirical moments of ``sample_model`` (default ``model``) on a
    constant image against the moments ``model`` claims, at 3-sigma sampling
    tolerance."""
    if n_samples < MIN_VALIDATION_SAMPLES:
        raise ValueError(
            f"Need at least {MIN_VALIDATION_SAMPLES} samples, not {n_samples}"
        )
    clean = np.full(n_samples, level, dtype=np.float64)
    y = (sample_model or model).degrade(clean, rng)

    expected_mean, expected_var = model.moments(level)
    mean = float(y.mean())
    centered = y - mean
    var = float(np.mean(centered**2))
    fourth = float(np.mean(centered**4))
    report = NoiseReport(
        model=model.label,
        n_samples=n_samples,
        level=level,
        expected_mean=expected_mean,
        expected_var=expected_var,
        mean=mean,
        var=var,
        mean_bound=3 * math.sqrt(expected_var / n_samples),
        var_bound=3 * math.sqrt(max(fourth - var**2, 0.0) / n_samples),
    )
    logger.debug(f"Noise validation: {report.lines()}")
    return report


def poisson_goodness_of_fit(lam: float, n_samples: int, rng: np.random.Generator) -> float:
    """Chi-square p-value of the Poisson sampler against the exact pmf.

    Bins 0..K-1 are kept individually and everything >= K is pooled, with K the
    first count whose upper tail expects fewer than 5 draws.
    """
    samples = rng.poisson(lam, size=n_samples)
    kmax = 1
    while n_samples * stats.poisson.sf(kmax, lam) >= 5:
        kmax += 1
    expected = np.append(
        stats.poisson.pmf(np.arange(kmax), lam), stats.poisson.sf(kmax - 1, lam)
    )
    expected *= n_samples / expected.sum()
    observed = np.bincount(np.minimum(samples, kmax), minlength=kmax + 1)
    return float(stats.chisquare(observed, expected).pvalue)
