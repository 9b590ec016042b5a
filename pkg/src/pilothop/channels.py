"""Large-scale fading models and small-scale Rayleigh channel generation.

All gains are linear powers relative to unit-variance receive noise, so a
nominal gain of 10 corresponds to a 10 dB receive SNR. Three large-scale
distributions are supported:

* ``UniformPowerError``  -- gain = delta_bar*(1+v), v ~ U[-alpha, alpha].
  Residual spread after closed-loop power control.
* ``LogNormalShadowing`` -- gain = delta_bar*10^(v/10), v ~ N(0, sigma_v2).
  Log-normal shadowing with power control applied to the dB-domain mean.
* ``RingPathLoss``       -- gain = delta_bar*(d/d0)^-pathloss_exp with
  d = d0*(1+v), v ~ U[-alpha, alpha]. Devices spread uniformly around a
  nominal distance from the base station.

Raw moments of the gain exist in closed form for every model, which keeps
the rate bounds and optimizers that consume them fully deterministic.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Union

import numpy as np
from scipy import integrate

LN10_OVER_10 = math.log(10.0) / 10.0


@dataclass(frozen=True)
class UniformPowerError:
    """Gain delta_bar*(1+v) with v uniform on [-alpha, alpha]."""

    delta_bar: float = 10.0
    alpha: float = 0.0

    def __post_init__(self):
        if self.delta_bar <= 0:
            raise ValueError(f"delta_bar must be positive, got {self.delta_bar}")
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError(f"alpha must lie in [0, 1], got {self.alpha}")


@dataclass(frozen=True)
class LogNormalShadowing:
    """Gain delta_bar*10^(v/10) with v Gaussian of variance sigma_v2 (dB^2)."""

    delta_bar: float = 10.0
    sigma_v2: float = 0.0

    def __post_init__(self):
        if self.delta_bar <= 0:
            raise ValueError(f"delta_bar must be positive, got {self.delta_bar}")
        if self.sigma_v2 < 0:
            raise ValueError(f"sigma_v2 must be non-negative, got {self.sigma_v2}")


@dataclass(frozen=True)
class RingPathLoss:
    """Gain delta_bar*(1+v)^-pathloss_exp with v uniform on [-alpha, alpha].

    The distance ratio d/d0 = 1+v places devices uniformly on a ring of
    relative width alpha around the nominal distance d0.
    """

    delta_bar: float = 10.0
    alpha: float = 0.0
    d0: float = 500.0
    pathloss_exp: float = 3.76

    def __post_init__(self):
        if self.delta_bar <= 0:
            raise ValueError(f"delta_bar must be positive, got {self.delta_bar}")
        # alpha = 1 puts devices at distance 0 where the gain moments diverge
        if not 0.0 <= self.alpha < 1.0:
            raise ValueError(f"alpha must lie in [0, 1), got {self.alpha}")
        if self.pathloss_exp <= 0:
            raise ValueError("pathloss_exp must be positive")


LargeScaleModel = Union[UniformPowerError, LogNormalShadowing, RingPathLoss]


@dataclass(frozen=True)
class BetaMoments:
    """First, second and fourth raw moments of the large-scale gain."""

    mean: float
    mean_sq: float
    mean_4th: float

    def __post_init__(self):
        if self.mean_sq < self.mean**2 * (1 - 1e-12):
            raise ValueError("mean_sq violates Jensen ordering mean_sq >= mean^2")
        if self.mean_4th < self.mean_sq**2 * (1 - 1e-12):
            raise ValueError("mean_4th violates Jensen ordering mean_4th >= mean_sq^2")

    @property
    def spread_factor(self) -> float:
        """mean_4th / (mean^2 * mean_sq); equals 1 under perfect power control."""
        return self.mean_4th / (self.mean**2 * self.mean_sq)


def _uniform_power_moment(n: int, a: float) -> float:
    # E[(1+v)^n], v ~ U[-a, a]; exact polynomials (odd moments of v vanish)
    if n == 1:
        return 1.0
    if n == 2:
        return 1.0 + a**2 / 3.0
    if n == 4:
        return 1.0 + 2.0 * a**2 + a**4 / 5.0
    return ((1 + a) ** (n + 1) - (1 - a) ** (n + 1)) / (2 * a * (n + 1))


def raw_moment(model: LargeScaleModel, n: int) -> float:
    """Closed-form E[gain^n] for a large-scale model."""
    d = model.delta_bar
    if isinstance(model, UniformPowerError):
        if model.alpha == 0.0:
            return d**n
        return d**n * _uniform_power_moment(n, model.alpha)
    if isinstance(model, LogNormalShadowing):
        return d**n * math.exp(n**2 * LN10_OVER_10**2 * model.sigma_v2 / 2.0)
    if isinstance(model, RingPathLoss):
        a, g = model.alpha, model.pathloss_exp
        if a == 0.0:
            return d**n
        q = -n * g
        if a < 1e-3:
            # the closed form cancels catastrophically for tiny spread;
            # two Taylor terms leave an O(a^6) relative error
            return d**n * (
                1.0
                + q * (q - 1) / 2.0 * a**2 / 3.0
                + q * (q - 1) * (q - 2) * (q - 3) / 24.0 * a**4 / 5.0
            )
        # n*g = 1 would need the log limit, which cannot occur for the
        # fixed exponent 3.76
        return d**n * ((1 - a) ** (1 + q) - (1 + a) ** (1 + q)) / (2 * a * (n * g - 1))
    raise TypeError(f"unknown large-scale model {type(model).__name__}")


def analytic_moments(model: LargeScaleModel) -> BetaMoments:
    """First/second/fourth raw moments of the gain, in closed form."""
    return BetaMoments(
        mean=raw_moment(model, 1),
        mean_sq=raw_moment(model, 2),
        mean_4th=raw_moment(model, 4),
    )


def sample_beta(model: LargeScaleModel, rng: np.random.Generator, size=None):
    """Draw large-scale gains from the model.

    Returns a scalar when ``size`` is None, else an array of that shape.
    """
    if isinstance(model, UniformPowerError):
        v = rng.uniform(-model.alpha, model.alpha, size)
        return model.delta_bar * (1.0 + v)
    if isinstance(model, LogNormalShadowing):
        v = rng.normal(0.0, math.sqrt(model.sigma_v2), size)
        return model.delta_bar * np.power(10.0, v / 10.0)
    if isinstance(model, RingPathLoss):
        v = rng.uniform(-model.alpha, model.alpha, size)
        return model.delta_bar * np.power(1.0 + v, -model.pathloss_exp)
    raise TypeError(f"unknown large-scale model {type(model).__name__}")


def sample_channels(betas, M: int, rng: np.random.Generator) -> np.ndarray:
    """i.i.d. CN(0, beta_j I_M) channel columns for each gain in ``betas``.

    Returns an (M, len(betas)) complex matrix.
    """
    if M < 1:
        raise ValueError(f"antenna count must be >= 1, got {M}")
    betas = np.atleast_1d(np.asarray(betas, dtype=float))
    shape = (M, betas.size)
    h = rng.standard_normal(shape) + 1j * rng.standard_normal(shape)
    return h * np.sqrt(betas / 2.0)


@dataclass(frozen=True)
class ChannelRealization:
    """One slot's channel draw together with the gains that produced it."""

    matrix: np.ndarray  # (M, n_devices) complex
    betas: np.ndarray

    def __post_init__(self):
        if self.matrix.shape[1] != np.atleast_1d(self.betas).size:
            raise ValueError("one gain per channel column")

    @property
    def n_antennas(self) -> int:
        return self.matrix.shape[0]

    @classmethod
    def draw(cls, betas, M: int, rng: np.random.Generator) -> "ChannelRealization":
        betas = np.atleast_1d(np.asarray(betas, dtype=float))
        return cls(sample_channels(betas, M, rng), betas)


def is_degenerate(model: LargeScaleModel) -> bool:
    """True when the model collapses to the constant gain delta_bar."""
    if isinstance(model, LogNormalShadowing):
        return model.sigma_v2 == 0.0
    return model.alpha == 0.0


def _beta_of_v(model: LargeScaleModel) -> Callable[[float], float]:
    if isinstance(model, UniformPowerError):
        return lambda v: model.delta_bar * (1.0 + v)
    if isinstance(model, RingPathLoss):
        return lambda v: model.delta_bar * (1.0 + v) ** (-model.pathloss_exp)
    raise TypeError("expected a bounded-support model")


def expect_beta(
    model: LargeScaleModel,
    f: Callable,
    *,
    epsrel: float = 1e-9,
    mc_samples: int = 16384,
    seed: int = 0,
    return_err: bool = False,
):
    """Expectation of f(gain) under the model.

    Bounded-support models use adaptive quadrature; log-normal shadowing
    falls back to seeded Monte Carlo (deterministic for a fixed seed).
    With ``return_err`` the Monte Carlo standard error (0 for quadrature)
    is returned alongside.
    """
    if is_degenerate(model):
        val = float(f(model.delta_bar))
        return (val, 0.0) if return_err else val
    if isinstance(model, LogNormalShadowing):
        rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(seed)))
        draws = sample_beta(model, rng, mc_samples)
        vals = np.asarray(f(draws), dtype=float)
        val = float(vals.mean())
        err = float(vals.std(ddof=1) / math.sqrt(mc_samples))
        return (val, err) if return_err else val
    beta_of_v = _beta_of_v(model)
    a = model.alpha
    val, _ = integrate.quad(lambda v: f(beta_of_v(v)), -a, a, epsrel=epsrel, limit=200)
    val = float(val / (2 * a))
    return (val, 0.0) if return_err else val


def beta_nodes(
    model: LargeScaleModel,
    *,
    n_nodes: int = 96,
    mc_samples: int = 8192,
    seed: int = 0,
) -> tuple[np.ndarray, np.ndarray]:
    """Nodes and weights such that E[f(gain)] ~= weights @ f(nodes).

    Gauss-Legendre on the bounded-support models, seeded Monte Carlo draws
    with uniform weights for log-normal shadowing. Intended for optimizer
    hot loops where many expectations share the same nodes.
    """
    if is_degenerate(model):
        return np.array([model.delta_bar]), np.array([1.0])
    if isinstance(model, LogNormalShadowing):
        rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(seed)))
        draws = sample_beta(model, rng, mc_samples)
        return draws, np.full(mc_samples, 1.0 / mc_samples)
    x, w = np.polynomial.legendre.leggauss(n_nodes)
    beta_of_v = _beta_of_v(model)
    nodes = np.array([beta_of_v(model.alpha * xi) for xi in x])
    return nodes, w / 2.0
