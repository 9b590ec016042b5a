"""Achievable sum-rate lower bounds under random pilot access.

The hierarchy, from tightest to loosest:

* R1 -- per-scenario SINR conditioned on the exact collider set and the
  realized gains, averaged over the activation and collision laws and over
  the gain distribution (Monte Carlo with common random numbers).
* R2 -- collider identities averaged out of the interference variances via
  Jensen; only the reference gain stays random.
* R3 -- additionally averages the collider and active counts into the
  interference variances; fully analytic up to a 1-D gain expectation.
* Ra -- large-system limit of R3; the optimizer's workhorse.

All rates are in bits per symbol and include the (tau_u - tau_p)/tau_u
training overhead prelog. Averaged bounds (``r1_bar``/``r2_bar``) are
deterministic for a fixed seed: the gain pool is drawn column-wise from
counter-based streams so results are identical no matter how the enclosing
experiment is parallelized, and identical columns are reused across grid
points (common random numbers) to stabilize argmax comparisons.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import TYPE_CHECKING, Sequence

import numpy as np

from .access import ActivationLaw, CollisionLaw, pmf_over, truncate_support
from .channels import (
    BetaMoments,
    LargeScaleModel,
    LogNormalShadowing,
    analytic_moments,
    expect_beta,
    is_degenerate,
    sample_beta,
)

if TYPE_CHECKING:
    from .config import SystemConfig


@dataclass(frozen=True)
class McConfig:
    """Monte Carlo settings for the averaged bounds."""

    n_beta_samples: int = 2000
    eps_tail: float = 1e-9
    seed: int = 0

    def __post_init__(self):
        if self.n_beta_samples < 1:
            raise ValueError("n_beta_samples must be >= 1")
        if not 0.0 < self.eps_tail < 1.0:
            raise ValueError("eps_tail must lie in (0, 1)")
        if self.seed < 0:
            raise ValueError("seed must be a non-negative integer")


@dataclass(frozen=True)
class CollisionScenario:
    """One contamination event: the reference device, its colliders, and context."""

    beta_0: float
    colliders: tuple
    K_a: int
    tau_p: int
    M: int

    def __post_init__(self):
        object.__setattr__(self, "colliders", tuple(float(b) for b in self.colliders))
        if self.beta_0 <= 0 or any(b <= 0 for b in self.colliders):
            raise ValueError("all large-scale gains must be positive")
        if len(self.colliders) > self.K_a - 1:
            raise ValueError(f"{len(self.colliders)} colliders but only {self.K_a - 1} other active devices")
        if self.tau_p < 1:
            raise ValueError("tau_p must be >= 1")
        if self.M < 1:
            raise ValueError("M must be >= 1")


@dataclass(frozen=True)
class SinrComponents:
    """Inverse-SINR decomposition: contamination, estimation error, residual."""

    pilot_contamination: float
    estimation_error: float
    residual_interference: float

    def __post_init__(self):
        for v in (self.pilot_contamination, self.estimation_error, self.residual_interference):
            if v < 0:
                raise ValueError("inverse-SINR components must be non-negative")

    @property
    def inverse_sinr(self) -> float:
        return self.pilot_contamination + self.estimation_error + self.residual_interference


@dataclass(frozen=True)
class BoundResult:
    """A sum-rate value tagged with its bound id and Monte Carlo provenance."""

    value: float
    bound_id: str
    mc_samples: int = 0
    mc_std_err: float = 0.0

    def __post_init__(self):
        if self.value < 0:
            raise ValueError("rates are non-negative")
        if self.mc_samples == 0 and self.mc_std_err != 0.0:
            raise ValueError("a fully analytic result cannot carry Monte Carlo error")


def estimation_variances(beta_0: float, collider_betas, tau_p: int) -> tuple[float, float]:
    """Per-entry variances of the genie MMSE estimate and of its error.

    ``collider_betas`` are the gains sharing the reference pilot, excluding
    the reference device itself.
    """
    csum = float(np.sum(collider_betas))
    sigma_yy = tau_p * (beta_0 + csum) + 1.0
    est = tau_p * beta_0**2 / sigma_yy
    err = beta_0 * (1.0 + tau_p * csum) / sigma_yy
    return est, err


def sinr_components(s: CollisionScenario, other_active_betas: Sequence[float] = ()) -> SinrComponents:
    """Inverse-SINR terms assembled from the MMSE estimate/error variances.

    Independent of :func:`sinr1`: this path goes through the per-device
    estimation variances, the closed form does not.
    """
    if s.M < 2:
        raise ValueError("the combiner analysis needs M >= 2")
    members = np.concatenate(([s.beta_0], np.asarray(s.colliders, dtype=float)))
    others = np.asarray(other_active_betas, dtype=float)
    est_var, _ = estimation_variances(s.beta_0, members[1:], s.tau_p)
    err_sum = 0.0
    for j, b in enumerate(members):
        _, err = estimation_variances(b, np.delete(members, j), s.tau_p)
        err_sum += err
    gain = (s.M - 1) * est_var
    return SinrComponents(
        pilot_contamination=float(np.sum(members[1:] ** 2)) / s.beta_0**2,
        estimation_error=err_sum / gain,
        residual_interference=(float(others.sum()) + 1.0) / gain,
    )


def sinr1(s: CollisionScenario, other_active_betas: Sequence[float] = ()) -> float:
    """Effective SINR of the reference device for one collision scenario.

    ``other_active_betas`` holds the gains of the K_a - 1 - |colliders|
    active devices on different pilots.
    """
    if s.M < 2:
        raise ValueError("the combiner analysis needs M >= 2 (an M-1 array gain factor)")
    colliders = np.asarray(s.colliders, dtype=float)
    others = np.asarray(other_active_betas, dtype=float)
    expected = s.K_a - 1 - colliders.size
    if others.size != expected:
        raise ValueError(f"expected {expected} non-colliding active gains, got {others.size}")
    members = np.concatenate(([s.beta_0], colliders))
    total = float(members.sum())
    num = s.tau_p * (s.M - 1) * s.beta_0**2
    pilot_term = s.tau_p * (s.M - 1) * float(np.sum(colliders**2))
    est_term = float(sum(b * (1.0 + s.tau_p * (total - b)) for b in members))
    resid_term = (1.0 + float(others.sum())) * (1.0 + s.tau_p * total)
    return num / (pilot_term + est_term + resid_term)


def rate1(s: CollisionScenario, other_active_betas: Sequence[float], tau_u: int) -> float:
    """Per-device rate for one scenario, including the training prelog."""
    if s.tau_p > tau_u:
        raise ValueError(f"tau_p={s.tau_p} exceeds the slot length tau_u={tau_u}")
    prelog = (tau_u - s.tau_p) / tau_u
    if prelog == 0.0:
        return 0.0
    return prelog * math.log2(1.0 + sinr1(s, other_active_betas))


def sinr2(c, K_a: int, beta_0, moments: BetaMoments, tau_p: int, M: int):
    """SINR with collider identities averaged into the interference variances.

    Broadcasts over both ``beta_0`` and the collider count ``c``.
    """
    if M < 2:
        raise ValueError("M must be >= 2")
    c = np.asarray(c)
    if np.any((c < 0) | (c > K_a - 1)):
        raise ValueError(f"collider count outside 0..{K_a - 1}")
    b0 = np.asarray(beta_0, dtype=float)
    bm, b2m = moments.mean, moments.mean_sq
    den = (
        tau_p * (M - 1) * b2m * c
        + b0 * (1.0 + tau_p * c * bm)
        - c * bm**2 * tau_p
        + (1.0 + (K_a - 1) * bm) * (1.0 + b0 * tau_p + tau_p * c * bm)
    )
    # (M-1)*mean_sq >= mean^2 keeps the denominator positive for M >= 2
    assert np.all(den > 0), "internal error: non-positive interference power"
    return (tau_p * (M - 1) * b0**2 / den)[()]


def sinr3(beta_0, moments: BetaMoments, tau_p: int, p_a: float, K: int, M: int):
    """SINR with collider and active counts averaged out. Vectorized over beta_0."""
    paK = p_a * K
    if paK < 1.0:
        raise ValueError(
            f"p_a*K = {paK:.3g} < 1: the averaged interference terms are meaningless; "
            "evaluate r1_bar directly for sparse activity"
        )
    if M < 2:
        raise ValueError("M must be >= 2")
    b0 = np.asarray(beta_0, dtype=float)
    bm, b2m = moments.mean, moments.mean_sq
    n1 = paK - 1.0
    den = (
        b2m * (M - 1) * n1
        + b0 * (1.0 + bm * n1)
        - bm**2 * n1
        + (1.0 + n1 * bm) * (1.0 + b0 * tau_p)
        + n1 * bm
        + bm**2 * (p_a**2 * K * (K - 1) - n1)
    )
    assert np.all(den > 0), "internal error: non-positive interference power"
    return (tau_p * (M - 1) * b0**2 / den)[()]


def sinra(beta_0, moments: BetaMoments, tau_p: float, p_aK: float, M: int):
    """Large-system SINR. Vectorized over beta_0."""
    if p_aK <= 0:
        raise ValueError("p_a*K must be positive")
    b0 = np.asarray(beta_0, dtype=float)
    bm, b2m = moments.mean, moments.mean_sq
    den = b2m * M * p_aK + bm**2 * p_aK**2 + bm * b0 * p_aK * tau_p
    return (M * tau_p * b0**2 / den)[()]


_POOL_CACHE: dict = {}


def _column_pool(model: LargeScaleModel, n: int, width: int, seed: int) -> np.ndarray:
    """(n, width) gain pool; column j comes from its own counter-based stream.

    Column-stable: enlarging the pool or changing the activation grid leaves
    existing columns untouched, which is what makes common random numbers
    across grid points (and bit-identical reruns) work. Pools are cached per
    (model, n, seed) since grid searches reuse them hundreds of times; the
    cached array is read-only.
    """
    key = (model, n, seed)
    pool = _POOL_CACHE.get(key)
    if pool is None or pool.shape[1] < width:
        have = 0 if pool is None else pool.shape[1]
        grown = np.empty((n, width))
        if have:
            grown[:, :have] = pool
        for j in range(have, width):
            rng = np.random.Generator(np.random.Philox(np.random.SeedSequence((seed, j))))
            grown[:, j] = sample_beta(model, rng, n)
        grown.flags.writeable = False
        if len(_POOL_CACHE) >= 16 and key not in _POOL_CACHE:
            _POOL_CACHE.clear()
        _POOL_CACHE[key] = grown
        pool = grown
    return pool[:, :width]


@lru_cache(maxsize=65536)
def _activation_cells(K: int, p_a: float, eps: float):
    sup = truncate_support(ActivationLaw(K, p_a), eps)
    k_lo, k_hi = max(sup.lo, 1), sup.hi
    if k_hi < 1:
        return 1, 0, None
    w = np.atleast_1d(pmf_over(ActivationLaw(K, p_a), np.arange(k_lo, k_hi + 1)))
    w.flags.writeable = False
    return k_lo, k_hi, w


@lru_cache(maxsize=262144)
def _collision_cells(K_a: int, tau_p: int, eps: float):
    claw = CollisionLaw(K_a, tau_p)
    sup = truncate_support(claw, eps)
    cs = np.arange(sup.lo, sup.hi + 1)
    w = np.atleast_1d(pmf_over(claw, cs))
    cs.flags.writeable = False
    w.flags.writeable = False
    return cs, w


def _sinr1_from_sums(b0, b0_sq, coll_sum, coll_sq, other_sum, tau_p, M):
    """Closed-form per-scenario SINR from collider sum statistics (vectorized)."""
    total = b0 + coll_sum
    sq = b0_sq + coll_sq
    den = (
        tau_p * (M - 1) * coll_sq
        + total
        + tau_p * (total * total - sq)
        + (1.0 + other_sum) * (1.0 + tau_p * total)
    )
    return tau_p * (M - 1) * b0_sq / den


def _averaged_bound(
    cfg: "SystemConfig",
    model: LargeScaleModel,
    mc: McConfig,
    *,
    use_sinr2: bool = False,
    fixed_beta0: float | None = None,
) -> tuple[float, float, int]:
    """Shared activation/collision summation engine for r1_bar and r2_bar.

    Returns (value, std_err, n_samples); n_samples is 0 when the gain law is
    degenerate and the result is exact.
    """
    tau_p, tau_u, M, K = cfg.tau_p, cfg.tau_u, cfg.M, cfg.K
    if tau_p is None or cfg.p_a is None:
        raise ValueError("averaged bounds need tau_p and p_a set on the config")
    if tau_p > tau_u:
        raise ValueError(f"tau_p={tau_p} exceeds tau_u={tau_u}")
    prelog = (tau_u - tau_p) / tau_u
    if cfg.p_a == 0.0 or prelog == 0.0:
        return 0.0, 0.0, 0
    k_lo, k_hi, act_w = _activation_cells(K, cfg.p_a, mc.eps_tail)
    if act_w is None:
        return 0.0, 0.0, 0

    exact = is_degenerate(model)
    n = 1 if exact else mc.n_beta_samples
    pool = _column_pool(model, n, k_hi, mc.seed)
    if fixed_beta0 is not None:
        pool = pool.copy()
        pool[:, 0] = fixed_beta0
    b0 = pool[:, 0]
    b0_sq = b0 * b0
    zero = np.zeros((n, 1))
    cum = np.concatenate([zero, np.cumsum(pool, axis=1)], axis=1)
    cum_sq = np.concatenate([zero, np.cumsum(pool * pool, axis=1)], axis=1)
    moments = analytic_moments(model) if use_sinr2 else None

    total_s = np.zeros(n)
    for K_a, w_a in zip(range(k_lo, k_hi + 1), act_w):
        cs, coll_w = _collision_cells(K_a, tau_p, mc.eps_tail)
        # one (n_samples, n_colliders) block per active count
        if use_sinr2:
            s = sinr2(cs[None, :], K_a, b0[:, None], moments, tau_p, M)
        else:
            coll_sum = cum[:, 1 + cs] - cum[:, [1]]
            coll_sq = cum_sq[:, 1 + cs] - cum_sq[:, [1]]
            other_sum = cum[:, [K_a]] - cum[:, 1 + cs]
            s = _sinr1_from_sums(b0[:, None], b0_sq[:, None], coll_sum, coll_sq, other_sum, tau_p, M)
        total_s += np.log2(1.0 + s) @ (w_a * K_a * prelog * coll_w)

    value = float(total_s.mean())
    if exact:
        return value, 0.0, 0
    if n == 1:
        return value, 0.0, 1  # single-draw estimate: error unknown, not analytic
    err = float(total_s.std(ddof=1) / math.sqrt(n))
    return value, err, n


def r1_bar(cfg: "SystemConfig", model: LargeScaleModel, mc: McConfig | None = None) -> BoundResult:
    """Main averaged sum-rate bound (Monte Carlo over the gain law)."""
    mc = mc or McConfig()
    value, err, n = _averaged_bound(cfg, model, mc)
    return BoundResult(value, "R1", mc_samples=n, mc_std_err=err)


def r2_bar(cfg: "SystemConfig", model: LargeScaleModel, mc: McConfig | None = None) -> BoundResult:
    """Secondary averaged bound with collider identities Jensen-averaged."""
    mc = mc or McConfig()
    value, err, n = _averaged_bound(cfg, model, mc, use_sinr2=True)
    return BoundResult(value, "R2", mc_samples=n, mc_std_err=err)


def _expectation_samples(model: LargeScaleModel) -> int:
    # seeded Monte Carlo only for non-degenerate log-normal shadowing;
    # everything else integrates exactly
    if isinstance(model, LogNormalShadowing) and model.sigma_v2 > 0:
        return 16384
    return 0


def r3(cfg: "SystemConfig", model: LargeScaleModel) -> BoundResult:
    """Optimization bound: analytic except for the 1-D gain expectation."""
    if cfg.tau_p is None or cfg.p_a is None:
        raise ValueError("r3 needs tau_p and p_a set on the config")
    if cfg.tau_p > cfg.tau_u:
        raise ValueError(f"tau_p={cfg.tau_p} exceeds tau_u={cfg.tau_u}")
    prelog = (cfg.tau_u - cfg.tau_p) / cfg.tau_u
    paK = cfg.p_a * cfg.K
    if paK == 0.0 or prelog == 0.0:
        return BoundResult(0.0, "R3")
    moments = analytic_moments(model)
    n_mc = _expectation_samples(model)
    val, err = expect_beta(
        model,
        lambda b0: np.log2(1.0 + sinr3(b0, moments, cfg.tau_p, cfg.p_a, cfg.K, cfg.M)),
        seed=cfg.seed,
        return_err=True,
    )
    return BoundResult(prelog * paK * val, "R3", mc_samples=n_mc, mc_std_err=prelog * paK * err)


def ra(cfg: "SystemConfig", model: LargeScaleModel) -> BoundResult:
    """Large-system bound used for fast optimization."""
    if cfg.tau_p is None or cfg.p_a is None:
        raise ValueError("ra needs tau_p and p_a set on the config")
    if cfg.tau_p > cfg.tau_u:
        raise ValueError(f"tau_p={cfg.tau_p} exceeds tau_u={cfg.tau_u}")
    prelog = (cfg.tau_u - cfg.tau_p) / cfg.tau_u
    paK = cfg.p_a * cfg.K
    if paK == 0.0 or prelog == 0.0:
        return BoundResult(0.0, "Ra")
    moments = analytic_moments(model)
    n_mc = _expectation_samples(model)
    val, err = expect_beta(
        model,
        lambda b0: np.log2(1.0 + sinra(b0, moments, cfg.tau_p, paK, cfg.M)),
        seed=cfg.seed,
        return_err=True,
    )
    return BoundResult(prelog * paK * val, "Ra", mc_samples=n_mc, mc_std_err=prelog * paK * err)


def per_device_rate(
    cfg: "SystemConfig",
    model: LargeScaleModel,
    beta_0: float,
    mc: McConfig | None = None,
) -> float:
    """Rate a single device with known gain beta_0 can count on (bits/symbol).

    The per-device analog of r1_bar: the same activation/collision average
    with the reference gain pinned, scaled by 1/K.
    """
    mc = mc or McConfig()
    if beta_0 <= 0:
        raise ValueError("beta_0 must be positive")
    value, _, _ = _averaged_bound(cfg, model, mc, fixed_beta0=beta_0)
    return value / cfg.K
