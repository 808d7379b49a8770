"""Particle filter over the 6-DoF lumped-error state.

Weights live in log space with max-shift normalization; resampling is
systematic (single uniform offset) and triggered by the harness on effective
sample size. Randomness comes from counter-based Philox streams keyed by
(seed, purpose, frame), so runs are reproducible regardless of evaluation
order, and per-frame noise blocks are drawn in one vectorized call.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .cylinder import CylinderSpec, _polar_arrays, _silhouette_arrays
from .geometry import (
    CameraIntrinsics,
    KinematicChain,
    LumpedErrorParams,
    Pose,
    canonicalize_axis_angle,
    forward_kinematics,
    rotation_from_axis_angle,
)
from .observation import (
    FrameEvidence,
    IntensityObsParams,
    PolarObsParams,
    evidence_log_likelihood_batch,
)

STREAM_INIT = 0
STREAM_PREDICT = 1
STREAM_RESAMPLE = 2
STREAM_WALK = 3
STREAM_DETECTOR = 4


class AllParticlesInvalid(RuntimeError):
    """Every particle's shaft projection violated a precondition."""


class DegenerateWeights(RuntimeError):
    """All particle log-weights are -inf."""


def rng_stream(seed: int, *key: int) -> np.random.Generator:
    """Deterministic generator for a (seed, purpose, index...) key."""
    seq = np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(int(k) for k in key))
    return np.random.Generator(np.random.Philox(seed=seq))


@dataclass(frozen=True)
class Particle:
    params: LumpedErrorParams
    log_weight: float


@dataclass(frozen=True)
class ParticleSet:
    """Weighted samples over the stacked (b, w) 6-vector."""

    states: np.ndarray
    log_weights: np.ndarray

    def __post_init__(self):
        states = np.asarray(self.states, dtype=float).reshape(-1, 6)
        logw = np.asarray(self.log_weights, dtype=float).reshape(-1)
        if len(states) != len(logw) or len(states) == 0:
            raise ValueError("states and log_weights must align and be nonempty")
        if np.any(np.isnan(logw)) or np.any(logw == np.inf):
            raise ValueError("log-weights must be finite or -inf")
        object.__setattr__(self, "states", states)
        object.__setattr__(self, "log_weights", logw)

    def __len__(self) -> int:
        return len(self.states)

    def particle(self, i: int) -> Particle:
        return Particle(LumpedErrorParams.from_vector(self.states[i]), float(self.log_weights[i]))


@dataclass(frozen=True)
class MotionParams:
    """Additive zero-mean Gaussian step noise on (b, w)."""

    cov: np.ndarray

    def __post_init__(self):
        cov = np.asarray(self.cov, dtype=float).reshape(6, 6)
        if np.max(np.abs(cov - cov.T)) > 1e-12:
            raise ValueError("covariance must be symmetric within 1e-12")
        if np.min(np.linalg.eigvalsh(cov)) < -1e-12:
            raise ValueError("covariance must be positive semi-definite")
        object.__setattr__(self, "cov", cov)


def diagonal_motion(b_var: float, w_var: float) -> MotionParams:
    return MotionParams(np.diag([b_var] * 3 + [w_var] * 3))


@dataclass(frozen=True)
class FilterConfig:
    n_particles: int = 500
    resample_ess_fraction: float = 0.5
    seed: int = 0
    init_mean: LumpedErrorParams = field(
        default_factory=lambda: LumpedErrorParams(np.zeros(3), np.zeros(3))
    )
    init_cov: np.ndarray = field(default_factory=lambda: np.diag([1e-4] * 6))

    def __post_init__(self):
        if self.n_particles < 1:
            raise ValueError("need at least one particle")
        if not 0.0 < self.resample_ess_fraction <= 1.0:
            raise ValueError("resample fraction must lie in (0, 1]")
        cov = np.asarray(self.init_cov, dtype=float).reshape(6, 6)
        if np.max(np.abs(cov - cov.T)) > 1e-12:
            raise ValueError("init covariance must be symmetric")
        if np.min(np.linalg.eigvalsh(cov)) < -1e-12:
            raise ValueError("init covariance must be positive semi-definite")
        object.__setattr__(self, "init_cov", cov)


def _canonicalize_rows(states: np.ndarray) -> np.ndarray:
    angles = np.linalg.norm(states[:, 3:], axis=1)
    for i in np.flatnonzero(angles >= np.pi):
        states[i, 3:] = canonicalize_axis_angle(states[i, 3:])
    return states


def initialize(cfg: FilterConfig) -> ParticleSet:
    """Gaussian particle cloud around the initial mean, uniform weights."""
    rng = rng_stream(cfg.seed, STREAM_INIT)
    mean = cfg.init_mean.as_vector()
    states = rng.multivariate_normal(mean, cfg.init_cov, size=cfg.n_particles, method="svd")
    return ParticleSet(_canonicalize_rows(states), np.zeros(cfg.n_particles))


def predict(ps: ParticleSet, mp: MotionParams, rng: np.random.Generator) -> ParticleSet:
    """Add one motion-noise draw per particle; weights are untouched."""
    noise = rng.multivariate_normal(np.zeros(6), mp.cov, size=len(ps), method="svd")
    return ParticleSet(_canonicalize_rows(ps.states + noise), ps.log_weights.copy())


def project_particles(
    states: np.ndarray,
    q,
    chain: KinematicChain,
    shaft: CylinderSpec,
    shaft_joint_index: int,
    k: CameraIntrinsics,
):
    """Pixel-space polar silhouette lines for every particle state.

    Returns (theta, rho, valid): (n, 2) line parameters and a validity mask
    (False where the particle's shaft is degenerate or behind the camera).
    """
    parent = forward_kinematics(
        chain, q, Pose.identity(), upto_joint=shaft_joint_index
    )
    r_err = rotation_from_axis_angle(states[:, 3:])
    rot = np.einsum("nij,jk->nik", r_err, parent.rotation)
    trans = np.einsum("nij,j->ni", r_err, parent.translation) + states[:, :3]
    p0_cam = np.einsum("nij,j->ni", rot, shaft.p0) + trans
    d_cam = np.einsum("nij,j->ni", rot, shaft.d)

    lines, theta, rho, inside, behind = _silhouette_arrays(p0_cam, d_cam, shaft.r)
    valid = ~(inside | behind)
    theta, rho = _pixel_polar_arrays(lines, theta, rho, k)
    return theta, rho, valid


def _pixel_polar_arrays(lines: np.ndarray, theta: np.ndarray, rho: np.ndarray, k: CameraIntrinsics):
    """Map unit-camera polar parameters (n, 2) into pixel space."""
    if k.isotropic:
        rho_px = k.fx * rho + np.cos(theta) * k.cu + np.sin(theta) * k.cv
        return theta, rho_px
    # anisotropic: rebuild each line from two mapped points
    c, s = np.cos(theta), np.sin(theta)
    p1x, p1y = rho * c, rho * s
    p2x, p2y = p1x - s, p1y + c
    u1, v1 = p1x * k.fx + k.cu, p1y * k.fy + k.cv
    u2, v2 = p2x * k.fx + k.cu, p2y * k.fy + k.cv
    du, dv = u2 - u1, v2 - v1
    abc = np.stack([-dv, du, dv * u1 - du * v1], axis=-1)
    theta_px, rho_px = _polar_arrays(abc.reshape(-1, 3))
    return theta_px.reshape(theta.shape), rho_px.reshape(rho.shape)


def update(
    ps: ParticleSet,
    q,
    evidence: FrameEvidence,
    chain: KinematicChain,
    shaft: CylinderSpec,
    shaft_joint_index: int,
    k: CameraIntrinsics,
    pp: PolarObsParams,
    ip: IntensityObsParams,
) -> ParticleSet:
    """Weight particles by the frame evidence; positions are untouched.

    Empty evidence skips the update entirely (a missing detection carries no
    information). Particles whose shaft projection is invalid get -inf
    log-weight; log-weights are max-shifted to zero afterwards.
    """
    if evidence.is_empty:
        return ps
    theta, rho, valid = project_particles(
        ps.states, q, chain, shaft, shaft_joint_index, k
    )
    logw = np.full(len(ps), -np.inf)
    if np.any(valid):
        loglik = evidence_log_likelihood_batch(
            evidence, theta[valid], rho[valid], pp, ip
        )
        logw[valid] = ps.log_weights[valid] + loglik
    peak = np.max(logw)
    if peak == -np.inf:
        raise AllParticlesInvalid("every particle projected invalidly")
    return ParticleSet(ps.states.copy(), logw - peak)


def normalized_weights(ps: ParticleSet) -> np.ndarray:
    peak = np.max(ps.log_weights)
    if peak == -np.inf:
        raise DegenerateWeights("all log-weights are -inf")
    w = np.exp(ps.log_weights - peak)
    return w / w.sum()


def effective_sample_size(ps: ParticleSet) -> float:
    """1 / sum of squared normalized weights."""
    w = normalized_weights(ps)
    return float(1.0 / np.sum(w**2))


def resample_systematic(ps: ParticleSet, rng: np.random.Generator) -> ParticleSet:
    """Low-variance resampling with a single uniform offset.

    Copy counts obey floor(n w) <= count <= ceil(n w); uniform weights come
    back as an exact identity copy.
    """
    w = normalized_weights(ps)
    n = len(ps)
    positions = (np.arange(n) + rng.uniform()) / n
    cumulative = np.cumsum(w)
    cumulative[-1] = 1.0
    idx = np.searchsorted(cumulative, positions, side="right")
    return ParticleSet(ps.states[idx], np.zeros(n))


def estimate(ps: ParticleSet) -> LumpedErrorParams:
    """Weighted mean in the chart aligned to the strongest particle.

    Rotation samples close to the antipodal representation of the reference
    are flipped (w -> w (1 - 2 pi / |w|)) before averaging; valid because
    tracked posteriors are far tighter than the chart radius.
    """
    w = normalized_weights(ps)
    b_mean = w @ ps.states[:, :3]
    ref = ps.states[int(np.argmax(ps.log_weights)), 3:]
    rot = ps.states[:, 3:].copy()
    norms = np.linalg.norm(rot, axis=1)
    nonzero = norms > 0.0
    flipped = np.zeros_like(rot)
    flipped[nonzero] = rot[nonzero] * (1.0 - 2.0 * np.pi / norms[nonzero, None])
    use_flip = nonzero & (
        np.linalg.norm(flipped - ref, axis=1) < np.linalg.norm(rot - ref, axis=1)
    )
    rot[use_flip] = flipped[use_flip]
    return LumpedErrorParams(b_mean, w @ rot)
