"""Per-particle log-likelihoods of a detection frame given projected lines.

Five models are supported. Three compare detected and projected lines in
normal-polar parameters with a Laplace-style kernel per matched pair; two
score raw heatmap pixels through the signed line residual

    R(x, y | theta, rho) = cos(theta) x + sin(theta) y - rho,

whose noise variance equals the pixel noise variance regardless of line
angle (cos^2 + sin^2 = 1), so no pixel-to-pixel association is needed.

Line fitting (sequential RANSAC) depends only on the frame, so callers
extract a FrameEvidence once per frame and reuse it across particles.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

from .cylinder import PolarLine, line_through_points
from .detection import (
    DetectionFrame,
    ExtractionParams,
    InsufficientPoints,
    RansacParams,
    endpoint_point_set,
    line_point_set,
    sequential_ransac_two_lines,
    thresholded_heatmap,
)


class NoDetections(ValueError):
    """No detected lines are available for a polar-space update."""


class NoPoints(ValueError):
    """The evidence point set is empty."""


class ObservationModelKind(enum.Enum):
    ENDPOINT_TO_POLAR = "endpoint_to_polar"
    ENDPOINT_INTENSITIES_TO_POLAR = "endpoint_intensities_to_polar"
    LINE_INTENSITIES_TO_POLAR = "line_intensities_to_polar"
    ENDPOINT_INTENSITIES = "endpoint_intensities"
    LINE_INTENSITIES = "line_intensities"

    @property
    def is_polar(self) -> bool:
        return self in (
            ObservationModelKind.ENDPOINT_TO_POLAR,
            ObservationModelKind.ENDPOINT_INTENSITIES_TO_POLAR,
            ObservationModelKind.LINE_INTENSITIES_TO_POLAR,
        )

    @staticmethod
    def from_name(name: str) -> "ObservationModelKind":
        try:
            return ObservationModelKind(name)
        except ValueError:
            valid = ", ".join(k.value for k in ObservationModelKind)
            raise ValueError(f"unknown model {name!r}; expected one of: {valid}")


ALL_MODEL_KINDS = tuple(ObservationModelKind)


@dataclass(frozen=True)
class PolarObsParams:
    """Inverse scales of the line-parameter kernels (per px, per rad)."""

    gamma_rho: float = 0.1
    gamma_theta: float = 20.0

    def __post_init__(self):
        if self.gamma_rho <= 0 or self.gamma_theta <= 0:
            raise ValueError("kernel scales must be positive")


@dataclass(frozen=True)
class IntensityObsParams:
    """Pixel noise scale (px) of the line-residual Gaussian."""

    sigma: float = 2.0

    def __post_init__(self):
        if self.sigma <= 0:
            raise ValueError("sigma must be positive")


def residual_r(point, line: PolarLine) -> float:
    """Signed perpendicular offset of a pixel from a normal-form line."""
    x, y = float(point[0]), float(point[1])
    return float(np.cos(line.theta) * x + np.sin(line.theta) * y - line.rho)


def theta_distance(a: float, b: float) -> float:
    """Absolute line-angle difference folded into [0, pi/2]."""
    return abs(float((a - b + np.pi / 2) % np.pi - np.pi / 2))


def _pair_cost(det: PolarLine, proj: PolarLine, pp: PolarObsParams) -> float:
    return pp.gamma_rho * abs(det.rho - proj.rho) + pp.gamma_theta * theta_distance(
        det.theta, proj.theta
    )


def polar_log_likelihood(detected, projected, pp: PolarObsParams) -> float:
    """Log of the summed Laplace kernels over cost-minimally matched pairs.

    Detected lines are associated to the two projected lines by whichever
    assignment (both permutations, or the better single match when only one
    detection exists) minimizes the total kernel cost.
    """
    detected = list(detected)
    if not detected:
        raise NoDetections("polar update needs at least one detected line")
    if len(detected) > 2:
        raise ValueError("at most two detected lines are supported")
    proj = list(projected)
    if len(detected) == 1:
        cost = min(_pair_cost(detected[0], p, pp) for p in proj)
        return -cost
    straight = (
        _pair_cost(detected[0], proj[0], pp),
        _pair_cost(detected[1], proj[1], pp),
    )
    crossed = (
        _pair_cost(detected[0], proj[1], pp),
        _pair_cost(detected[1], proj[0], pp),
    )
    ll_straight = float(np.logaddexp(-straight[0], -straight[1]))
    ll_crossed = float(np.logaddexp(-crossed[0], -crossed[1]))
    if sum(straight) < sum(crossed):
        return ll_straight
    if sum(crossed) < sum(straight):
        return ll_crossed
    # tied totals: the likelihood-maximizing pairing is order-free
    return max(ll_straight, ll_crossed)


def intensity_log_likelihood(points, projected, ip: IntensityObsParams) -> float:
    """Mean Gaussian log-density of each pixel's residual to its nearest line.

    Each pixel is assigned to the projected line minimizing |residual|; the
    mean (not sum) keeps likelihood sharpness independent of how many pixels
    a frame happens to carry.
    """
    pts = np.asarray(points, dtype=float).reshape(-1, 2)
    if len(pts) == 0:
        raise NoPoints("intensity update needs at least one pixel")
    res = np.stack([_signed_residuals(pts, line) for line in projected])
    nearest_sq = np.min(res**2, axis=0)
    return float(
        -0.5 * np.log(2.0 * np.pi * ip.sigma**2)
        - np.mean(nearest_sq) / (2.0 * ip.sigma**2)
    )


def _signed_residuals(points: np.ndarray, line: PolarLine) -> np.ndarray:
    return np.cos(line.theta) * points[:, 0] + np.sin(line.theta) * points[:, 1] - line.rho


@dataclass(frozen=True)
class FrameEvidence:
    """Per-frame, particle-independent detector evidence for one model."""

    kind: ObservationModelKind
    detected_lines: tuple = ()
    points: np.ndarray = field(default_factory=lambda: np.empty((0, 2)))

    @property
    def is_empty(self) -> bool:
        if self.kind.is_polar:
            return len(self.detected_lines) == 0
        return len(self.points) == 0


def _unique_points(chunks) -> np.ndarray:
    stacked = [np.asarray(c, dtype=float).reshape(-1, 2) for c in chunks if len(c)]
    if not stacked:
        return np.empty((0, 2))
    return np.unique(np.vstack(stacked), axis=0)


def _endpoint_union(frame: DetectionFrame, ep: ExtractionParams) -> np.ndarray:
    sets = []
    for seg in frame.segments:
        sets.append(endpoint_point_set(frame, seg[0], ep))
        sets.append(endpoint_point_set(frame, seg[1], ep))
    return _unique_points(sets)


def _line_union(frame: DetectionFrame, ep: ExtractionParams) -> np.ndarray:
    sets = [line_point_set(frame, seg[0], seg[1], ep) for seg in frame.segments]
    return _unique_points(sets)


def _ransac_fits(points: np.ndarray, rp: RansacParams) -> list:
    if len(points) < rp.min_samples:
        return []
    try:
        return sequential_ransac_two_lines(points, rp)
    except InsufficientPoints:
        return []


def _ransac_lines(points: np.ndarray, rp: RansacParams) -> tuple:
    return tuple(line for line, _ in _ransac_fits(points, rp))


def _heatmap_support(frame: DetectionFrame, ep: ExtractionParams, rp: RansacParams) -> np.ndarray:
    """Line-shaped heatmap pixels, recovered without any segment gating.

    RANSAC picks out the consensus structure of the thresholded heatmap so
    stray outlier pixels (whose quadratic residual cost would otherwise
    dominate the Gaussian model) stay out of the evidence; only the inlier
    pixels are kept, never the fitted line parameters.
    """
    return _unique_points([inliers for _, inliers in _ransac_fits(thresholded_heatmap(frame, ep.beta), rp)])


def extract_evidence(
    frame: DetectionFrame,
    kind: ObservationModelKind,
    ep: ExtractionParams,
    rp: RansacParams,
) -> FrameEvidence:
    """Run extraction (and RANSAC, for polar models) once for a frame.

    The endpoint-pair baseline takes each detected segment's own endpoints
    as its line; intensity models that find no gated pixels fall back to the
    heatmap's RANSAC-consensus support, which is how pixel evidence outlives
    endpoint dropout.
    """
    if kind is ObservationModelKind.ENDPOINT_TO_POLAR:
        lines = tuple(
            line_through_points(seg[0], seg[1])
            for seg in frame.segments
            if not np.array_equal(seg[0], seg[1])
        )
        return FrameEvidence(kind, detected_lines=lines[:2])
    if kind is ObservationModelKind.ENDPOINT_INTENSITIES_TO_POLAR:
        return FrameEvidence(kind, detected_lines=_ransac_lines(_endpoint_union(frame, ep), rp))
    if kind is ObservationModelKind.LINE_INTENSITIES_TO_POLAR:
        return FrameEvidence(kind, detected_lines=_ransac_lines(_line_union(frame, ep), rp))
    if kind is ObservationModelKind.ENDPOINT_INTENSITIES:
        points = _endpoint_union(frame, ep)
    else:
        points = _line_union(frame, ep)
    if len(points) == 0:
        points = _heatmap_support(frame, ep, rp)
    return FrameEvidence(kind, points=points)


def evidence_log_likelihood(
    evidence: FrameEvidence,
    projected,
    pp: PolarObsParams,
    ip: IntensityObsParams,
) -> float:
    """Score one particle's projected lines; 0.0 means skip (no evidence)."""
    if evidence.is_empty:
        return 0.0
    if evidence.kind.is_polar:
        return polar_log_likelihood(evidence.detected_lines, projected, pp)
    return intensity_log_likelihood(evidence.points, projected, ip)


def evaluate_model(
    kind: ObservationModelKind,
    frame: DetectionFrame,
    projected,
    ep: ExtractionParams,
    rp: RansacParams,
    pp: PolarObsParams,
    ip: IntensityObsParams,
) -> float:
    """One-shot evidence extraction plus scoring for a single particle."""
    return evidence_log_likelihood(extract_evidence(frame, kind, ep, rp), projected, pp, ip)


# -- batched scoring across particles -----------------------------------------

def polar_log_likelihood_batch(
    detected, theta: np.ndarray, rho: np.ndarray, pp: PolarObsParams
) -> np.ndarray:
    """polar_log_likelihood for per-particle projected lines (n, 2) arrays."""
    detected = list(detected)
    det_theta = np.array([line.theta for line in detected])
    det_rho = np.array([line.rho for line in detected])
    # cost[i, n, j] of matching detection i to projected line j
    dtheta = np.abs(
        (det_theta[:, None, None] - theta[None, :, :] + np.pi / 2) % np.pi - np.pi / 2
    )
    drho = np.abs(det_rho[:, None, None] - rho[None, :, :])
    cost = pp.gamma_rho * drho + pp.gamma_theta * dtheta
    if len(detected) == 1:
        return -np.min(cost[0], axis=1)
    straight = cost[0, :, 0] + cost[1, :, 1]
    crossed = cost[0, :, 1] + cost[1, :, 0]
    ll_straight = np.logaddexp(-cost[0, :, 0], -cost[1, :, 1])
    ll_crossed = np.logaddexp(-cost[0, :, 1], -cost[1, :, 0])
    use_straight = (straight < crossed) | (
        (straight == crossed) & (ll_straight >= ll_crossed)
    )
    return np.where(use_straight, ll_straight, ll_crossed)


def intensity_log_likelihood_batch(
    points: np.ndarray, theta: np.ndarray, rho: np.ndarray, ip: IntensityObsParams
) -> np.ndarray:
    """intensity_log_likelihood for per-particle projected lines (n, 2)."""
    pts = np.asarray(points, dtype=float).reshape(-1, 2)
    res = (
        np.cos(theta)[:, :, None] * pts[None, None, :, 0]
        + np.sin(theta)[:, :, None] * pts[None, None, :, 1]
        - rho[:, :, None]
    )
    nearest_sq = np.min(res**2, axis=1)
    return -0.5 * np.log(2.0 * np.pi * ip.sigma**2) - nearest_sq.mean(axis=1) / (
        2.0 * ip.sigma**2
    )


def evidence_log_likelihood_batch(
    evidence: FrameEvidence,
    theta: np.ndarray,
    rho: np.ndarray,
    pp: PolarObsParams,
    ip: IntensityObsParams,
) -> np.ndarray:
    """Vectorized evidence_log_likelihood over particles; zeros on skip."""
    n = len(theta)
    if evidence.is_empty:
        return np.zeros(n)
    if evidence.kind.is_polar:
        return polar_log_likelihood_batch(evidence.detected_lines, theta, rho, pp)
    return intensity_log_likelihood_batch(evidence.points, theta, rho, ip)
