"""Line-detector output handling: frames, point-set extraction, RANSAC.

A detector frame carries up to two shaft-edge endpoint pairs and a sparse
heatmap of line-pixel intensities. A seeded synthetic detector stands in for
a real network; a JSON Lines reader/writer replays recorded frames.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .cylinder import PolarLine, fit_line_tls


class DegenerateSegment(ValueError):
    """Segment endpoints coincide."""


class InsufficientPoints(ValueError):
    """Too few points to attempt the first RANSAC pass."""


class ParseError(ValueError):
    """A dataset line is not valid JSON or holds malformed values."""

    def __init__(self, line: int, message: str):
        super().__init__(f"line {line}: {message}")
        self.line = line


class SchemaError(ValueError):
    """A dataset record is missing a required field."""

    def __init__(self, line: int, fieldname: str):
        super().__init__(f"line {line}: missing field {fieldname!r}")
        self.line = line
        self.fieldname = fieldname


@dataclass(frozen=True)
class DetectionFrame:
    """Detector output: endpoint pairs plus a sparse intensity heatmap.

    segments holds 0-2 arrays of shape (2, 2) (rows are the endpoints, in
    pixels); heatmap_pixels is (k, 2) integer, one entry per pixel;
    heatmap_intensities is (k,) in [0, 1]; image_size is (width, height).
    """

    segments: tuple
    heatmap_pixels: np.ndarray
    heatmap_intensities: np.ndarray
    image_size: tuple

    def __post_init__(self):
        width, height = self.image_size
        segments = tuple(np.asarray(s, dtype=float).reshape(2, 2) for s in self.segments)
        if len(segments) > 2:
            raise ValueError("a frame holds at most two segments")
        for seg in segments:
            if np.any(seg < 0) or np.any(seg[:, 0] > width) or np.any(seg[:, 1] > height):
                raise ValueError("segment endpoint outside image bounds")
        pixels = np.asarray(self.heatmap_pixels, dtype=int).reshape(-1, 2)
        intens = np.asarray(self.heatmap_intensities, dtype=float).reshape(-1)
        if len(pixels) != len(intens):
            raise ValueError("heatmap pixel/intensity length mismatch")
        if len(pixels):
            if pixels[:, 0].min() < 0 or pixels[:, 0].max() >= width:
                raise ValueError("heatmap pixel outside image bounds")
            if pixels[:, 1].min() < 0 or pixels[:, 1].max() >= height:
                raise ValueError("heatmap pixel outside image bounds")
            if np.min(intens) < 0.0 or np.max(intens) > 1.0:
                raise ValueError("heatmap intensity outside [0, 1]")
            if len(np.unique(pixels, axis=0)) != len(pixels):
                raise ValueError("duplicate heatmap pixel entries")
        object.__setattr__(self, "segments", segments)
        object.__setattr__(self, "heatmap_pixels", pixels)
        object.__setattr__(self, "heatmap_intensities", intens)
        object.__setattr__(self, "image_size", (int(width), int(height)))


@dataclass(frozen=True)
class ExtractionParams:
    """Search radii (pixels) and heatmap threshold for point-set extraction."""

    alpha_e: float = 10.0
    alpha_l: float = 10.0
    beta: float = 0.90

    def __post_init__(self):
        if self.alpha_e < 0 or self.alpha_l < 0:
            raise ValueError("search radii must be nonnegative")
        if not 0.0 <= self.beta <= 1.0:
            raise ValueError("beta must lie in [0, 1]")


@dataclass(frozen=True)
class RansacParams:
    passes: int = 5
    min_samples: int = 3
    residual_threshold: float = 0.75
    max_trials: int = 100
    seed: int = 0

    def __post_init__(self):
        if self.passes < 1 or self.min_samples < 2:
            raise ValueError("need passes >= 1 and min_samples >= 2")
        if self.residual_threshold <= 0 or self.max_trials < 1:
            raise ValueError("need residual_threshold > 0 and max_trials >= 1")


@dataclass(frozen=True)
class SyntheticDetectorParams:
    """Noise and failure-mode knobs for the synthetic line detector."""

    pixel_noise_sigma: float = 1.0
    outlier_count: int = 5
    endpoint_dropout_prob: float = 0.1
    segment_extent: float = 1.0
    heatmap_radius: float = 2.0
    outlier_min_intensity: float = 0.90

    def __post_init__(self):
        if self.pixel_noise_sigma < 0 or self.outlier_count < 0:
            raise ValueError("noise sigma and outlier count must be nonnegative")
        if not 0.0 <= self.endpoint_dropout_prob <= 1.0:
            raise ValueError("dropout probability must lie in [0, 1]")
        if not 0.0 < self.segment_extent <= 1.0:
            raise ValueError("segment extent must lie in (0, 1]")
        if self.heatmap_radius <= 0:
            raise ValueError("heatmap radius must be positive")
        if not 0.0 <= self.outlier_min_intensity <= 1.0:
            raise ValueError("outlier intensity floor must lie in [0, 1]")


def endpoint_point_set(
    frame: DetectionFrame, endpoint, params: ExtractionParams
) -> np.ndarray:
    """Heatmap pixels within alpha_e of the endpoint and at or above beta."""
    e = np.asarray(endpoint, dtype=float)
    if len(frame.heatmap_pixels) == 0:
        return np.empty((0, 2))
    px = frame.heatmap_pixels.astype(float)
    dist = np.hypot(px[:, 0] - e[0], px[:, 1] - e[1])
    mask = (dist <= params.alpha_e) & (frame.heatmap_intensities >= params.beta)
    return px[mask]


def segment_distance(points: np.ndarray, e_a, e_b) -> np.ndarray:
    """Exact Euclidean distance from each point to the segment [e_a, e_b]."""
    p = np.asarray(points, dtype=float).reshape(-1, 2)
    a = np.asarray(e_a, dtype=float)
    b = np.asarray(e_b, dtype=float)
    ab = b - a
    denom = float(ab @ ab)
    if denom == 0.0:
        raise DegenerateSegment("segment endpoints coincide")
    t = np.clip(((p - a) @ ab) / denom, 0.0, 1.0)
    closest = a + t[:, None] * ab
    return np.hypot(p[:, 0] - closest[:, 0], p[:, 1] - closest[:, 1])


def line_point_set(
    frame: DetectionFrame, e_a, e_b, params: ExtractionParams
) -> np.ndarray:
    """Heatmap pixels within alpha_l of the segment and at or above beta."""
    if np.array_equal(np.asarray(e_a, dtype=float), np.asarray(e_b, dtype=float)):
        raise DegenerateSegment("segment endpoints coincide")
    if len(frame.heatmap_pixels) == 0:
        return np.empty((0, 2))
    px = frame.heatmap_pixels.astype(float)
    dist = segment_distance(px, e_a, e_b)
    mask = (dist <= params.alpha_l) & (frame.heatmap_intensities >= params.beta)
    return px[mask]


def thresholded_heatmap(frame: DetectionFrame, beta: float) -> np.ndarray:
    """All heatmap pixels at or above the intensity threshold."""
    if len(frame.heatmap_pixels) == 0:
        return np.empty((0, 2))
    return frame.heatmap_pixels[frame.heatmap_intensities >= beta].astype(float)


def _tls_batch(samples: np.ndarray):
    """Closed-form TLS lines for point batches of shape (m, s, 2).

    Returns (theta, rho, ok): ok is False where the sample scatter is
    degenerate (coincident points).
    """
    centroid = samples.mean(axis=1, keepdims=True)
    centered = samples - centroid
    sxx = (centered[..., 0] ** 2).sum(axis=1)
    syy = (centered[..., 1] ** 2).sum(axis=1)
    sxy = (centered[..., 0] * centered[..., 1]).sum(axis=1)
    ok = (sxx + syy) >= 1e-24
    theta = 0.5 * np.arctan2(2.0 * sxy, sxx - syy) + np.pi / 2.0
    rho = np.cos(theta) * centroid[:, 0, 0] + np.sin(theta) * centroid[:, 0, 1]
    wrap = theta >= np.pi
    theta = np.where(wrap, theta - np.pi, theta)
    rho = np.where(wrap, -rho, rho)
    return theta, rho, ok


def _single_ransac_pass(points: np.ndarray, rp: RansacParams, rng):
    """Best-consensus TLS line over seeded trials, or None without consensus."""
    n = len(points)
    order = rng.random((rp.max_trials, n)).argsort(axis=1)[:, : rp.min_samples]
    samples = points[order]
    theta, rho, ok = _tls_batch(samples)
    residual = (
        np.cos(theta)[:, None] * points[None, :, 0]
        + np.sin(theta)[:, None] * points[None, :, 1]
        - rho[:, None]
    )
    inlier = np.abs(residual) <= rp.residual_threshold
    counts = np.where(ok, inlier.sum(axis=1), -1)
    best = int(np.argmax(counts))
    if counts[best] < rp.min_samples:
        return None
    mask = inlier[best]
    refit = fit_line_tls(points[mask])
    final = (
        np.abs(
            np.cos(refit.theta) * points[:, 0]
            + np.sin(refit.theta) * points[:, 1]
            - refit.rho
        )
        <= rp.residual_threshold
    )
    if final.sum() < rp.min_samples:
        final = mask
    return fit_line_tls(points[final]), final


def sequential_ransac_two_lines(
    points: np.ndarray, rp: RansacParams
) -> list[tuple[PolarLine, np.ndarray]]:
    """Fit up to two lines by repeated RANSAC with inlier removal.

    Each returned line is the total-least-squares refit of its inlier set;
    results are ordered by inlier count descending. Deterministic for a
    fixed seed.
    """
    pts = np.asarray(points, dtype=float).reshape(-1, 2)
    if len(pts) < rp.min_samples:
        raise InsufficientPoints(
            f"need at least {rp.min_samples} points, got {len(pts)}"
        )
    rng = np.random.default_rng(rp.seed)
    results: list[tuple[PolarLine, np.ndarray]] = []
    remaining = pts
    for _ in range(rp.passes):
        if len(results) == 2 or len(remaining) < rp.min_samples:
            break
        found = _single_ransac_pass(remaining, rp, rng)
        if found is None:
            break
        line, mask = found
        results.append((line, remaining[mask]))
        remaining = remaining[~mask]
    results.sort(key=lambda item: -len(item[1]))
    return results


def synthesize_detection(
    gt_lines: tuple[PolarLine, PolarLine],
    visible_span,
    sp: SyntheticDetectorParams,
    seed: int,
    image_size: tuple,
) -> DetectionFrame:
    """Emulate the line detector on two known pixel-space edge lines.

    visible_span holds one (2, 2) endpoint pair per edge line, on the line.
    Endpoints get isotropic Gaussian noise and may drop out together with
    their segment (heatmap pixels survive dropout). Heatmap samples walk
    along each edge, displaced perpendicular to it; their intensity encodes
    the displacement, exp(-d^2 / (2 radius^2)). Uniform outlier pixels are
    appended with intensities drawn at or above the configured floor.
    """
    rng = np.random.default_rng(seed)
    width, height = image_size
    sigma = sp.pixel_noise_sigma

    segments = []
    entries: dict[tuple, float] = {}
    for line, span in zip(gt_lines, visible_span):
        span = np.asarray(span, dtype=float).reshape(2, 2)
        noisy = span + rng.normal(0.0, sigma, (2, 2)) if sigma > 0 else span.copy()
        noisy[:, 0] = np.clip(noisy[:, 0], 0.0, width)
        noisy[:, 1] = np.clip(noisy[:, 1], 0.0, height)
        dropped = rng.random() < sp.endpoint_dropout_prob
        if not dropped:
            segments.append(noisy)

        length = float(np.linalg.norm(span[1] - span[0]))
        count = max(2, int(round(length * sp.segment_extent)))
        t = np.linspace(
            0.5 - sp.segment_extent / 2.0, 0.5 + sp.segment_extent / 2.0, count
        )
        base = span[0][None, :] + t[:, None] * (span[1] - span[0])[None, :]
        offset = rng.normal(0.0, sigma, count) if sigma > 0 else np.zeros(count)
        pts = base + offset[:, None] * line.normal()[None, :]
        intensity = np.exp(-(offset**2) / (2.0 * sp.heatmap_radius**2))
        pixels = np.rint(pts).astype(int)
        inside = (
            (pixels[:, 0] >= 0)
            & (pixels[:, 0] < width)
            & (pixels[:, 1] >= 0)
            & (pixels[:, 1] < height)
        )
        for (u, v), val in zip(pixels[inside], intensity[inside]):
            key = (int(u), int(v))
            entries[key] = max(entries.get(key, 0.0), float(val))

    for _ in range(sp.outlier_count):
        u = int(rng.integers(0, width))
        v = int(rng.integers(0, height))
        val = float(rng.uniform(sp.outlier_min_intensity, 1.0))
        entries[(u, v)] = max(entries.get((u, v), 0.0), val)

    keys = sorted(entries)
    pixels = np.array(keys, dtype=int).reshape(-1, 2)
    intens = np.array([entries[k] for k in keys])
    return DetectionFrame(tuple(segments), pixels, intens, (width, height))


# -- dataset serialization ----------------------------------------------------

@dataclass(frozen=True)
class GroundTruth:
    b: np.ndarray
    w: np.ndarray
    tip_px: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "b", np.asarray(self.b, dtype=float).reshape(3))
        object.__setattr__(self, "w", np.asarray(self.w, dtype=float).reshape(3))
        object.__setattr__(self, "tip_px", np.asarray(self.tip_px, dtype=float).reshape(2))


@dataclass(frozen=True)
class FrameRecord:
    t: int
    q: tuple
    frame: DetectionFrame
    gt: GroundTruth | None = field(default=None)

    def to_dict(self) -> dict:
        doc = {
            "t": self.t,
            "q": list(self.q),
            "segments": [seg.tolist() for seg in self.frame.segments],
            "heatmap": [
                [int(u), int(v), float(val)]
                for (u, v), val in zip(
                    self.frame.heatmap_pixels, self.frame.heatmap_intensities
                )
            ],
            "gt": None
            if self.gt is None
            else {
                "b": self.gt.b.tolist(),
                "w": self.gt.w.tolist(),
                "tip_px": self.gt.tip_px.tolist(),
            },
        }
        return doc


def write_frames(path, records) -> None:
    """Write frame records as JSON Lines."""
    with open(path, "w") as f:
        for record in records:
            f.write(json.dumps(record.to_dict(), separators=(",", ":")))
            f.write("\n")


def _record_from_dict(doc: dict, line_no: int, image_size: tuple) -> FrameRecord:
    for key in ("t", "q", "segments", "heatmap"):
        if key not in doc:
            raise SchemaError(line_no, key)
    heatmap = doc["heatmap"]
    pixels = [[entry[0], entry[1]] for entry in heatmap]
    intens = [entry[2] for entry in heatmap]
    frame = DetectionFrame(
        tuple(np.asarray(seg, dtype=float) for seg in doc["segments"]),
        np.asarray(pixels, dtype=int).reshape(-1, 2),
        np.asarray(intens, dtype=float),
        image_size,
    )
    gt_doc = doc.get("gt")
    gt = None
    if gt_doc is not None:
        for key in ("b", "w", "tip_px"):
            if key not in gt_doc:
                raise SchemaError(line_no, f"gt.{key}")
        gt = GroundTruth(gt_doc["b"], gt_doc["w"], gt_doc["tip_px"])
    return FrameRecord(int(doc["t"]), tuple(float(v) for v in doc["q"]), frame, gt)


def load_frames(path, image_size: tuple):
    """Stream frame records from a JSON Lines dataset in file order.

    The file schema carries no image dimensions, so callers supply them
    (normally from the camera intrinsics).
    """
    with open(path) as f:
        for line_no, raw in enumerate(f, start=1):
            raw = raw.strip()
            if not raw:
                continue
            try:
                doc = json.loads(raw)
            except json.JSONDecodeError as err:
                raise ParseError(line_no, f"invalid JSON ({err.msg})") from err
            try:
                yield _record_from_dict(doc, line_no, image_size)
            except SchemaError:
                raise
            except (ValueError, TypeError, IndexError, KeyError) as err:
                raise ParseError(line_no, str(err)) from err
