"""Shared test utilities: planted-line generators and wrap-aware comparisons."""

from __future__ import annotations

import numpy as np

from shafttrack.cylinder import PolarLine


def polar_error(got: PolarLine, want: PolarLine) -> tuple[float, float]:
    """(|dtheta|, |drho|) with theta folded mod pi and rho flipped to match."""
    dtheta = got.theta - want.theta
    wrapped = (dtheta + np.pi / 2) % np.pi - np.pi / 2
    rho_want = want.rho if abs(dtheta) <= np.pi / 2 else -want.rho
    return abs(float(wrapped)), abs(got.rho - rho_want)


def points_on_line(line: PolarLine, offsets, noise=None) -> np.ndarray:
    """Points at the given tangential offsets, optionally displaced along the normal."""
    offsets = np.asarray(offsets, dtype=float)
    pts = line.point_on_line()[None, :] + offsets[:, None] * line.direction()[None, :]
    if noise is not None:
        pts = pts + np.asarray(noise, dtype=float)[:, None] * line.normal()[None, :]
    return pts


def planted_two_lines(
    rng,
    n_per_line: int = 20,
    n_outliers: int = 0,
    noise_sigma: float = 0.0,
    region: float = 200.0,
):
    """Two well-separated planted lines plus inliers and uniform outliers."""
    theta1 = rng.uniform(0.2, np.pi - 0.2)
    theta2 = theta1 + rng.uniform(-0.15, 0.15)
    rho1 = rng.uniform(0.2 * region, 0.5 * region)
    rho2 = rho1 + rng.uniform(20.0, 40.0) * rng.choice([-1.0, 1.0])
    lines = [PolarLine(theta1, rho1), PolarLine(theta2, rho2)]

    chunks = []
    for line in lines:
        offsets = rng.uniform(-region / 2, region / 2, n_per_line)
        noise = rng.normal(0.0, noise_sigma, n_per_line) if noise_sigma > 0 else np.zeros(n_per_line)
        chunks.append(points_on_line(line, offsets, noise))
    if n_outliers:
        chunks.append(rng.uniform(-region, region, (n_outliers, 2)))
    points = np.vstack(chunks)
    return lines, points


def match_lines(found, planted):
    """Pair each planted line with its closest found line by (theta, rho) cost."""
    pairs = []
    for want in planted:
        best = min(found, key=lambda got: sum(polar_error(got, want)))
        pairs.append((best, want))
    return pairs
