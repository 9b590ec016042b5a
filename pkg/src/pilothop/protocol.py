"""Slot-level simulation of the pilot-hopping random access uplink.

Each active device holds a pseudo-random pilot-hopping pattern known to the
base station. Per slot the receiver correlates the pilot block against every
sequence, thresholds the correlation energy to find the pilots in use,
estimates the per-pilot sum power through channel hardening, forms a scaled
channel estimate, and applies maximum ratio combining to the data block.
Across slots the detected pilot sets are matched against the hopping
patterns to identify which devices transmitted.

A genie side channel (true channels and gains, never visible to the
receiver path) decomposes every combiner output into signal, contamination,
estimation-error, residual-interference and noise powers, yielding the
per-slot effective SINR that the analytic bounds are validated against.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .access import ActivationLaw, sample_active_set
from .channels import LargeScaleModel, sample_beta, sample_channels
from .config import SystemConfig

_TRACE_MAGIC = b"PHTR"
_TRACE_VERSION = 1


@dataclass(frozen=True)
class DetectionThreshold:
    """Pilot-activity threshold: detect when the correlation energy per
    antenna exceeds 1 + zeta*sqrt(2/M); zeta controls the false-alarm rate
    of the unit-mean noise-only statistic."""

    zeta: float = 5.0

    def __post_init__(self):
        if self.zeta <= 0:
            raise ValueError("zeta must be positive")

    def value(self, M: int) -> float:
        return 1.0 + self.zeta * np.sqrt(2.0 / M)


def pilot_sequences(tau_p: int, kind: str = "dft") -> np.ndarray:
    """Orthonormal pilot book: columns are the tau_p sequences."""
    if tau_p < 1:
        raise ValueError("tau_p must be >= 1")
    if kind == "identity":
        return np.eye(tau_p, dtype=complex)
    if kind == "dft":
        j, k = np.meshgrid(np.arange(tau_p), np.arange(tau_p), indexing="ij")
        return np.exp(-2j * np.pi * j * k / tau_p) / np.sqrt(tau_p)
    raise ValueError(f"unknown pilot book {kind!r}; expected 'dft' or 'identity'")


def hopping_pattern(device: int, frame: int, n_slots: int, tau_p: int, root_seed: int) -> np.ndarray:
    """Pilot index per slot for one device; a counter-mode function of
    (root seed, frame, device) so both sides can regenerate it."""
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence((root_seed, frame, device))))
    return rng.integers(0, tau_p, n_slots)


def all_patterns(K: int, frame: int, n_slots: int, tau_p: int, root_seed: int) -> np.ndarray:
    """(K, n_slots) hopping patterns of the whole device population."""
    return np.vstack([hopping_pattern(k, frame, n_slots, tau_p, root_seed) for k in range(K)])


@dataclass(frozen=True)
class FramePlan:
    """One frame's transmission plan: who is active and which pilots they hop."""

    n_slots: int
    hopping_patterns: np.ndarray  # (K, n_slots)
    active_set: np.ndarray

    def __post_init__(self):
        if self.n_slots < 1:
            raise ValueError("n_slots must be >= 1")
        if self.hopping_patterns.shape[1] != self.n_slots:
            raise ValueError("patterns must cover every slot")


def plan_frame(
    cfg: SystemConfig,
    n_slots: int,
    rng: np.random.Generator,
    *,
    frame_index: int = 0,
    patterns: np.ndarray | None = None,
    active: np.ndarray | None = None,
) -> FramePlan:
    """Draw the active set and lay out hopping patterns for one frame."""
    if cfg.tau_p is None or cfg.p_a is None:
        raise ValueError("frame planning needs tau_p and p_a set")
    if active is None:
        active = sample_active_set(ActivationLaw(cfg.K, cfg.p_a), rng)
    if patterns is None:
        patterns = all_patterns(cfg.K, frame_index, n_slots, cfg.tau_p, cfg.seed)
    return FramePlan(n_slots, np.asarray(patterns), np.asarray(active))


def detect_pilots(Y_p: np.ndarray, pilots: np.ndarray, threshold: DetectionThreshold | None = None) -> np.ndarray:
    """Indices of pilot sequences whose correlation energy clears the threshold."""
    threshold = threshold or DetectionThreshold()
    M = Y_p.shape[0]
    corr = Y_p @ pilots.conj()
    stats = np.einsum("ij,ij->j", corr.real, corr.real) + np.einsum("ij,ij->j", corr.imag, corr.imag)
    return np.flatnonzero(stats / M > threshold.value(M))


def estimate_sum_power(y_p: np.ndarray, tau_p: int) -> float:
    """Channel-hardening estimate of the summed gain on one pilot.

    ``y_p`` is the correlated observation for that pilot; the noise floor
    contributes exactly 1 per antenna, hence the subtraction.
    """
    M = y_p.shape[0]
    stat = float(np.vdot(y_p, y_p).real) / M
    return max(0.0, (stat - 1.0) / tau_p)


def estimate_channel(y_p: np.ndarray, tau_p: int, beta_sum_estimate: float) -> np.ndarray:
    """Receiver-side scaled channel estimate used as the MRC combiner.

    Needs only the estimated sum power on the pilot, not any per-device
    gain, so it is available before devices are identified.
    """
    return (np.sqrt(tau_p) / (tau_p * beta_sum_estimate + 1.0)) * y_p


def genie_mmse_estimate(y_p: np.ndarray, tau_p: int, beta_0: float, member_beta_sum: float) -> np.ndarray:
    """True MMSE estimate given exact gains (validation side channel).

    ``member_beta_sum`` sums the gains of every device on the pilot,
    including the device being estimated.
    """
    return (np.sqrt(tau_p) * beta_0 / (tau_p * member_beta_sum + 1.0)) * y_p


@dataclass
class SlotOutcome:
    """Receiver outputs plus the genie SINR for one slot."""

    detected: np.ndarray
    pilot_of_device: np.ndarray
    est_sum_power: dict
    mrc_outputs: dict
    device_sinr: np.ndarray
    estimates: dict = field(default_factory=dict)


def _crandn(rng: np.random.Generator, *shape) -> np.ndarray:
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2.0)


def mrc_and_measure(
    G: np.ndarray,
    betas: np.ndarray,
    assignment: np.ndarray,
    corr: np.ndarray,
    detected: np.ndarray,
    Y_d: np.ndarray,
    tau_p: int,
) -> tuple[dict, np.ndarray]:
    """Combine the data block per detected pilot and measure per-device SINR.

    Returns (mrc outputs keyed by pilot, genie SINR per active device). The
    SINR decomposition uses the correlated observation direction, so it is
    invariant to any positive rescaling of the combiner.
    """
    mrc = {}
    for j in detected:
        y = corr[:, j]
        est = estimate_sum_power(y, tau_p)
        w = estimate_channel(y, tau_p, est)
        mrc[int(j)] = w.conj() @ Y_d

    K_a = betas.size
    sinr = np.zeros(K_a)
    for j in np.unique(assignment):
        members = np.flatnonzero(assignment == j)
        y = corr[:, j]
        yn2 = float(np.vdot(y, y).real)
        total = float(betas[members].sum())
        scale = np.sqrt(tau_p) * betas[members] / (tau_p * total + 1.0)
        ghat_dot = scale * yn2  # y^H ghat_m, real by construction
        u = y.conj() @ G  # y^H g_k for every active device
        eps_dot = ghat_dot - u[members]
        out = np.delete(np.abs(u) ** 2, members)
        ee = float(np.sum(np.abs(eps_dot) ** 2))
        oi = float(out.sum())
        gd2 = np.abs(ghat_dot) ** 2
        gd2_tot = float(gd2.sum())
        for idx, k in enumerate(members):
            sig = gd2[idx]
            pc = gd2_tot - sig
            sinr[k] = sig / (pc + ee + oi + yn2)
    return mrc, sinr


def simulate_slot(
    betas: np.ndarray,
    assignment: np.ndarray,
    tau_p: int,
    M: int,
    rng: np.random.Generator,
    *,
    n_data: int,
    pilots: np.ndarray | None = None,
    threshold: DetectionThreshold | None = None,
) -> SlotOutcome:
    """One coherence slot: training, detection, estimation, MRC, genie SINR."""
    pilots = pilots if pilots is not None else pilot_sequences(tau_p)
    threshold = threshold or DetectionThreshold()
    betas = np.asarray(betas, dtype=float)
    assignment = np.asarray(assignment, dtype=int)

    G = sample_channels(betas, M, rng) if betas.size else np.zeros((M, 0), dtype=complex)
    N_p = _crandn(rng, M, tau_p)
    if betas.size:
        P = pilots.T[assignment]  # rows are the transposed sequences in use
        Y_p = np.sqrt(tau_p) * (G @ P) + N_p
    else:
        Y_p = N_p
    corr = Y_p @ pilots.conj()
    stats = (np.abs(corr) ** 2).sum(axis=0) / M
    detected = np.flatnonzero(stats > threshold.value(M))

    X = _crandn(rng, betas.size, n_data)
    N_d = _crandn(rng, M, n_data)
    Y_d = (G @ X if betas.size else 0.0) + N_d

    mrc, sinr = mrc_and_measure(G, betas, assignment, corr, detected, Y_d, tau_p)
    est_power = {int(j): max(0.0, (float(stats[j]) - 1.0) / tau_p) for j in detected}
    estimates = {j: estimate_channel(corr[:, j], tau_p, p) for j, p in est_power.items()}
    return SlotOutcome(
        detected=detected,
        pilot_of_device=assignment,
        est_sum_power=est_power,
        mrc_outputs=mrc,
        device_sinr=sinr,
        estimates=estimates,
    )


@dataclass(frozen=True)
class IdentificationReport:
    identified: np.ndarray
    match_fraction: np.ndarray
    missed: np.ndarray
    false: np.ndarray


def match_patterns(
    detected_sets: Sequence[np.ndarray],
    patterns: np.ndarray,
    tau_p: int,
    rho: float = 0.9,
    active: np.ndarray | None = None,
) -> IdentificationReport:
    """Declare a device active when its pattern hits the detected pilot set
    in at least a rho fraction of slots.

    With a single observed slot this degenerates to per-slot pilot
    ambiguity: every device whose pilot was detected matches.
    """
    if not 0.0 < rho <= 1.0:
        raise ValueError("rho must lie in (0, 1]")
    L = len(detected_sets)
    if L < 1:
        raise ValueError("need at least one observed slot")
    D = np.zeros((L, tau_p), dtype=bool)
    for l, det in enumerate(detected_sets):
        D[l, np.asarray(det, dtype=int)] = True
    hits = D[np.arange(L)[None, :], patterns[:, :L]]
    frac = hits.mean(axis=1)
    identified = np.flatnonzero(frac >= rho)
    if active is None:
        active = np.array([], dtype=int)
    missed = np.setdiff1d(active, identified)
    false = np.setdiff1d(identified, active)
    return IdentificationReport(identified, frac, missed, false)


@dataclass
class FrameResult:
    """Per-frame simulation summary; rates are aligned with ``active``."""

    M: int
    K: int
    tau_u: int
    tau_p: int
    seed: int
    n_slots: int
    active: np.ndarray
    betas: np.ndarray
    rates: np.ndarray
    sum_rate: float
    identification: IdentificationReport
    soft_weights: dict
    slots: list | None = None


def run_frame(
    cfg: SystemConfig,
    model: LargeScaleModel,
    n_slots: int,
    rng,
    *,
    frame_index: int = 0,
    patterns: np.ndarray | None = None,
    active: np.ndarray | None = None,
    betas: np.ndarray | None = None,
    threshold: DetectionThreshold | None = None,
    rho: float = 0.9,
    pilot_kind: str = "dft",
    beta_knowledge_error: float = 1.0,
    collect_slots: bool = False,
    keep_estimates: bool = False,
) -> FrameResult:
    """Simulate one transmission frame of ``n_slots`` coherence slots.

    Per-device empirical rates average log2(1 + SINR) over the slots in
    which the device's pilot was detected (undetected slots contribute
    zero), scaled by the training-overhead prelog. ``beta_knowledge_error``
    multiplies the gain the receiver assumes when soft-combining; it scales
    the decoder-facing weights only and provably cannot move any SINR.
    ``collect_slots`` retains the per-slot outcomes (for traces); channel
    estimates are dropped from retained slots unless ``keep_estimates``.
    """
    if isinstance(rng, (int, np.integer)):
        rng = np.random.default_rng(int(rng))
    if cfg.tau_p is None:
        raise ValueError("run_frame needs tau_p set")
    tau_p, tau_u, M = cfg.tau_p, cfg.tau_u, cfg.M
    n_data = tau_u - tau_p
    plan = plan_frame(cfg, n_slots, rng, frame_index=frame_index, patterns=patterns, active=active)
    active = plan.active_set
    if betas is None:
        betas = np.atleast_1d(sample_beta(model, rng, active.size))
    betas = np.asarray(betas, dtype=float)
    pilots = pilot_sequences(tau_p, pilot_kind)
    threshold = threshold or DetectionThreshold()

    bits = np.zeros(active.size)
    detected_sets = []
    slots = [] if collect_slots else None
    for l in range(n_slots):
        assignment = plan.hopping_patterns[active, l] if active.size else np.array([], dtype=int)
        out = simulate_slot(
            betas, assignment, tau_p, M, rng,
            n_data=max(n_data, 1), pilots=pilots, threshold=threshold,
        )
        detected_sets.append(out.detected)
        if active.size:
            seen = np.isin(assignment, out.detected)
            bits[seen] += np.log2(1.0 + out.device_sinr[seen])
        if collect_slots:
            if not keep_estimates:
                out.estimates = {}  # M-vector per pilot per slot adds up fast
            slots.append(out)

    prelog = (tau_u - tau_p) / tau_u
    rates = prelog * bits / n_slots
    ident = match_patterns(detected_sets, plan.hopping_patterns, tau_p, rho, active=active)
    found = set(ident.identified.tolist())
    soft = {int(k): beta_knowledge_error * float(b) for k, b in zip(active, betas) if k in found}
    return FrameResult(
        M=M, K=cfg.K, tau_u=tau_u, tau_p=tau_p, seed=cfg.seed, n_slots=n_slots,
        active=active, betas=betas, rates=rates, sum_rate=float(rates.sum()),
        identification=ident, soft_weights=soft, slots=slots,
    )


def write_trace(path, frame: FrameResult) -> None:
    """Columnar binary dump of a frame's slot outcomes (versioned header)."""
    if frame.slots is None:
        raise ValueError("run the frame with collect_slots=True to dump a trace")
    with open(path, "wb") as fh:
        fh.write(_TRACE_MAGIC)
        fh.write(struct.pack("<IIIIIQI", _TRACE_VERSION, frame.M, frame.K, frame.tau_u,
                             frame.tau_p, frame.seed, frame.n_slots))
        fh.write(struct.pack("<I", frame.active.size))
        fh.write(frame.active.astype("<u4").tobytes())
        fh.write(frame.betas.astype("<f8").tobytes())
        for out in frame.slots:
            det = out.detected.astype("<u2")
            fh.write(struct.pack("<H", det.size))
            fh.write(det.tobytes())
            powers = np.array([out.est_sum_power[int(j)] for j in out.detected], dtype="<f8")
            fh.write(powers.tobytes())
            fh.write(out.device_sinr.astype("<f8").tobytes())


def read_trace(path) -> tuple[dict, list[dict]]:
    """Read back a trace written by :func:`write_trace`."""
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != _TRACE_MAGIC:
            raise ValueError(f"not a trace file (magic {magic!r})")
        version, M, K, tau_u, tau_p, seed, n_slots = struct.unpack("<IIIIIQI", fh.read(32))
        if version != _TRACE_VERSION:
            raise ValueError(f"unsupported trace version {version}")
        (n_active,) = struct.unpack("<I", fh.read(4))
        active = np.frombuffer(fh.read(4 * n_active), dtype="<u4")
        betas = np.frombuffer(fh.read(8 * n_active), dtype="<f8")
        header = {"version": version, "M": M, "K": K, "tau_u": tau_u, "tau_p": tau_p,
                  "seed": seed, "n_slots": n_slots, "active": active, "betas": betas}
        slots = []
        for _ in range(n_slots):
            (n_det,) = struct.unpack("<H", fh.read(2))
            detected = np.frombuffer(fh.read(2 * n_det), dtype="<u2")
            powers = np.frombuffer(fh.read(8 * n_det), dtype="<f8")
            sinr = np.frombuffer(fh.read(8 * n_active), dtype="<f8")
            slots.append({"detected": detected, "est_sum_power": powers, "device_sinr": sinr})
    return header, slots
