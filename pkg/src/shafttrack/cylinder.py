"""Cylinder-to-image-line projection and polar/implicit line handling.

A cylinder seen from the origin of an ideal pinhole camera projects to two
silhouette lines on the unit image plane. With axis point p0, unit axis
direction d, and radius r, each silhouette plane through the origin has
normal

    m = r * n / sqrt(|p0|^2 - (p0.d)^2 - r^2)  +/-  (p0 x d),
    n = p0 - (p0.d) d,

and the image line is m_x * X + m_y * Y + m_z = 0. The square root argument
is |n|^2 - r^2: positive exactly when the camera sits outside the cylinder.
A brute-force silhouette oracle (cross-section sampling plus extremal-point
line fits) provides an independent check of the closed form.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .geometry import CameraIntrinsics, Pose, unit_to_pixel

DISCRIMINANT_TOL = 1e-12


class CameraInsideCylinder(ValueError):
    """Camera origin is inside (or on) the cylinder surface."""


class BehindCamera(ValueError):
    """Nearest axis point is not in front of the camera."""


@dataclass(frozen=True)
class CylinderSpec:
    """Infinite cylinder: point on the center-line, unit direction, radius."""

    p0: np.ndarray
    d: np.ndarray
    r: float

    def __post_init__(self):
        p0 = np.asarray(self.p0, dtype=float).reshape(3)
        d = np.asarray(self.d, dtype=float).reshape(3)
        if abs(np.linalg.norm(d) - 1.0) > 1e-9:
            raise ValueError("cylinder direction must be unit length within 1e-9")
        if self.r <= 0:
            raise ValueError("cylinder radius must be positive")
        object.__setattr__(self, "p0", p0)
        object.__setattr__(self, "d", d)


@dataclass(frozen=True)
class ImplicitLine:
    """Line a*X + b*Y + c = 0, stored with a^2 + b^2 = 1 and the first
    nonzero of (a, b) positive."""

    a: float
    b: float
    c: float

    def __post_init__(self):
        norm = float(np.hypot(self.a, self.b))
        if norm == 0.0:
            raise ValueError("(a, b) must be nonzero")
        a, b, c = self.a / norm, self.b / norm, self.c / norm
        if a < 0.0 or (a == 0.0 and b < 0.0):
            a, b, c = -a, -b, -c
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "b", b)
        object.__setattr__(self, "c", c)


@dataclass(frozen=True)
class PolarLine:
    """Normal-form line cos(theta)*X + sin(theta)*Y = rho, theta in [0, pi).

    rho is the signed distance from the origin; units (unit-camera or pixels)
    follow from context. Constructed angles outside [0, pi) are folded,
    flipping rho's sign.
    """

    theta: float
    rho: float
    mapped_via_points: bool = field(default=False, compare=False)

    def __post_init__(self):
        theta, rho = float(self.theta), float(self.rho)
        while theta < 0.0:
            theta += np.pi
            rho = -rho
        while theta >= np.pi:
            theta -= np.pi
            rho = -rho
        object.__setattr__(self, "theta", theta)
        object.__setattr__(self, "rho", rho)

    def normal(self) -> np.ndarray:
        return np.array([np.cos(self.theta), np.sin(self.theta)])

    def point_on_line(self) -> np.ndarray:
        return self.rho * self.normal()

    def direction(self) -> np.ndarray:
        return np.array([-np.sin(self.theta), np.cos(self.theta)])


def implicit_to_polar(line: ImplicitLine) -> PolarLine:
    """Convert a*X + b*Y + c = 0 to normal form (theta, rho)."""
    return PolarLine(float(np.arctan2(line.b, line.a)), -line.c)


def polar_to_implicit(line: PolarLine) -> ImplicitLine:
    return ImplicitLine(np.cos(line.theta), np.sin(line.theta), -line.rho)


def line_through_points(p, q) -> PolarLine:
    """Normal-form line through two distinct 2D points."""
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    delta = q - p
    if np.hypot(*delta) == 0.0:
        raise ValueError("points coincide; line undefined")
    theta = float(np.arctan2(delta[0], -delta[1]))  # normal angle of (-dy, dx)
    rho = float(np.cos(theta) * p[0] + np.sin(theta) * p[1])
    return PolarLine(theta, rho)


def fit_line_tls(points: np.ndarray) -> PolarLine:
    """Total-least-squares line fit (perpendicular residuals).

    The normal direction is the minor principal axis of the centered point
    scatter, obtained in closed form from the 2x2 second moments.
    """
    pts = np.asarray(points, dtype=float).reshape(-1, 2)
    if len(pts) < 2:
        raise ValueError("need at least two points to fit a line")
    centroid = pts.mean(axis=0)
    centered = pts - centroid
    sxx, syy = (centered**2).sum(axis=0)
    sxy = float((centered[:, 0] * centered[:, 1]).sum())
    if sxx + syy < 1e-24:
        raise ValueError("points are coincident; line fit is degenerate")
    direction_angle = 0.5 * np.arctan2(2.0 * sxy, sxx - syy)
    theta = direction_angle + np.pi / 2.0
    rho = float(np.cos(theta) * centroid[0] + np.sin(theta) * centroid[1])
    return PolarLine(float(theta), rho)


def transform_cylinder(t: Pose, cyl: CylinderSpec) -> CylinderSpec:
    """Map the cylinder through a rigid transform (radius unchanged)."""
    return CylinderSpec(t.apply(cyl.p0), t.rotate(cyl.d), cyl.r)


def _silhouette_arrays(p0: np.ndarray, d: np.ndarray, r: float):
    """Vectorized silhouette lines for axis data of shape (n, 3).

    Returns (lines, theta, rho, inside, behind): lines is (n, 2, 3) of
    implicit coefficients ordered by (theta, rho); theta/rho are the matching
    (n, 2) polar forms; inside/behind are validity masks. Rows for invalid
    entries are unusable placeholders.
    """
    dot = np.einsum("ij,ij->i", p0, d)
    nvec = p0 - dot[:, None] * d
    disc = np.einsum("ij,ij->i", p0, p0) - dot**2 - r**2
    inside = disc <= DISCRIMINANT_TOL
    behind = nvec[:, 2] <= 0.0

    sq = np.sqrt(np.where(inside, 1.0, disc))
    radial = (r / sq)[:, None] * nvec
    axial = np.cross(p0, d)
    lines = np.stack([radial + axial, radial - axial], axis=1)

    theta, rho = _polar_arrays(lines.reshape(-1, 3))
    theta = theta.reshape(-1, 2)
    rho = rho.reshape(-1, 2)
    swap = (theta[:, 0] > theta[:, 1]) | (
        (theta[:, 0] == theta[:, 1]) & (rho[:, 0] > rho[:, 1])
    )
    lines[swap] = lines[swap][:, ::-1]
    theta[swap] = theta[swap][:, ::-1]
    rho[swap] = rho[swap][:, ::-1]
    return lines, theta, rho, inside, behind


def _polar_arrays(abc: np.ndarray):
    """(theta, rho) folded into [0, pi) for implicit rows (n, 3)."""
    norm = np.hypot(abc[:, 0], abc[:, 1])
    norm = np.where(norm == 0.0, np.nan, norm)
    theta = np.arctan2(abc[:, 1], abc[:, 0])
    rho = -abc[:, 2] / norm
    flip = theta < 0.0
    theta = np.where(flip, theta + np.pi, theta)
    rho = np.where(flip, -rho, rho)
    wrap = theta >= np.pi
    theta = np.where(wrap, theta - np.pi, theta)
    rho = np.where(wrap, -rho, rho)
    return theta, rho


def project_cylinder(cyl_cam: CylinderSpec) -> tuple[ImplicitLine, ImplicitLine]:
    """Both silhouette lines on the unit camera, smaller theta first."""
    lines, _, _, inside, behind = _silhouette_arrays(
        cyl_cam.p0[None, :], cyl_cam.d[None, :], cyl_cam.r
    )
    if inside[0]:
        raise CameraInsideCylinder(
            "axis distance does not exceed the radius; no silhouette exists"
        )
    if behind[0]:
        raise BehindCamera("nearest axis point has non-positive depth")
    first, second = lines[0]
    return ImplicitLine(*first), ImplicitLine(*second)


def project_cylinder_polar(cyl_cam: CylinderSpec) -> tuple[PolarLine, PolarLine]:
    one, two = project_cylinder(cyl_cam)
    return implicit_to_polar(one), implicit_to_polar(two)


def silhouette_oracle(
    cyl_cam: CylinderSpec, n_sections: int = 32, n_circle: int = 512
) -> tuple[PolarLine, PolarLine]:
    """Brute-force silhouette estimate, independent of the closed form.

    Samples cross-section circles along the axis, projects every sample, and
    takes the extremal points (by signed distance to the projected
    center-line) on each side; one TLS line per side. Ordering matches
    project_cylinder.
    """
    if n_sections < 16 or n_circle < 256:
        raise ValueError("need n_sections >= 16 and n_circle >= 256")
    p0, d, r = cyl_cam.p0, cyl_cam.d, cyl_cam.r

    lam_near = -float(p0 @ d)
    nearest = p0 + lam_near * d
    dist = float(np.linalg.norm(nearest))
    if dist**2 - r**2 <= DISCRIMINANT_TOL:
        raise CameraInsideCylinder(
            "axis distance does not exceed the radius; no silhouette exists"
        )
    if nearest[2] <= 0.0:
        raise BehindCamera("nearest axis point has non-positive depth")

    # Keep every sampled surface point strictly in front of the camera.
    half_span = 0.4 * dist
    for _ in range(80):
        lam = lam_near + np.linspace(-half_span, half_span, n_sections)
        centers = p0[None, :] + lam[:, None] * d[None, :]
        if np.all(centers[:, 2] > r + 1e-9):
            break
        half_span *= 0.5
    else:
        raise BehindCamera("no forward-facing axis span found")

    seed = np.array([1.0, 0.0, 0.0]) if abs(d[0]) < 0.9 else np.array([0.0, 1.0, 0.0])
    u = np.cross(d, seed)
    u /= np.linalg.norm(u)
    v = np.cross(d, u)

    phi = np.linspace(0.0, 2.0 * np.pi, n_circle, endpoint=False)
    ring = r * (np.cos(phi)[:, None] * u[None, :] + np.sin(phi)[:, None] * v[None, :])
    pts = centers[:, None, :] + ring[None, :, :]
    proj = pts[..., :2] / pts[..., 2:3]

    center_proj = centers[:, :2] / centers[:, 2:3]
    axis_line = fit_line_tls(center_proj)
    axis_mid = center_proj.mean(axis=0)
    residual = (
        np.cos(axis_line.theta) * proj[..., 0]
        + np.sin(axis_line.theta) * proj[..., 1]
        - axis_line.rho
    )
    rows = np.arange(n_sections)
    line_hi = fit_line_tls(proj[rows, residual.argmax(axis=1)])
    line_lo = fit_line_tls(proj[rows, residual.argmin(axis=1)])

    # Re-select extrema against the fitted lines themselves: picking by
    # distance to the axis line is biased wherever the silhouette is not
    # parallel to it, because the farthest sample then slides away from the
    # tangency point along the cross-section boundary.
    def resharpen(line: PolarLine) -> PolarLine:
        res = np.cos(line.theta) * proj[..., 0] + np.sin(line.theta) * proj[..., 1] - line.rho
        interior = np.cos(line.theta) * axis_mid[0] + np.sin(line.theta) * axis_mid[1] - line.rho
        outward = res if interior <= 0.0 else -res
        return fit_line_tls(proj[rows, outward.argmax(axis=1)])

    for _ in range(3):
        line_hi = resharpen(line_hi)
        line_lo = resharpen(line_lo)

    first, second = sorted(
        (line_hi, line_lo), key=lambda line: (line.theta, line.rho)
    )
    return first, second


def silhouette_tangency_points(cyl_cam: CylinderSpec, lam: float = 0.0) -> tuple:
    """Unit-camera projections of the two silhouette touch points at axis
    parameter lam, ordered to match project_cylinder.

    Each silhouette plane touches the lam cross-section circle at exactly one
    point, whose projection lies on the corresponding image line; these are
    the natural endpoints of a finite shaft's visible edges.
    """
    lines, _, _, inside, behind = _silhouette_arrays(
        cyl_cam.p0[None, :], cyl_cam.d[None, :], cyl_cam.r
    )
    if inside[0]:
        raise CameraInsideCylinder(
            "axis distance does not exceed the radius; no silhouette exists"
        )
    if behind[0]:
        raise BehindCamera("nearest axis point has non-positive depth")
    center = cyl_cam.p0 + lam * cyl_cam.d
    points = []
    for coeffs in lines[0]:
        normal = coeffs / np.linalg.norm(coeffs)
        touch = center - (normal @ center) * normal
        if touch[2] <= 0.0:
            raise BehindCamera("silhouette touch point has non-positive depth")
        points.append(touch[:2] / touch[2])
    return tuple(points)


def polar_unit_to_pixel(line: PolarLine, k: CameraIntrinsics) -> PolarLine:
    """Express a unit-camera polar line in pixel coordinates.

    With isotropic intrinsics the normal form maps by direct substitution.
    Anisotropic intrinsics break that substitution, so the line is rebuilt
    from two mapped points and the result is flagged.
    """
    if k.isotropic:
        c, s = np.cos(line.theta), np.sin(line.theta)
        return PolarLine(line.theta, k.fx * line.rho + c * k.cu + s * k.cv)
    p1 = line.point_on_line()
    p2 = p1 + line.direction()
    mapped = line_through_points(unit_to_pixel(p1, k), unit_to_pixel(p2, k))
    return PolarLine(mapped.theta, mapped.rho, mapped_via_points=True)


def polar_pixel_to_unit(line: PolarLine, k: CameraIntrinsics) -> PolarLine:
    """Inverse of polar_unit_to_pixel for isotropic intrinsics."""
    if k.isotropic:
        c, s = np.cos(line.theta), np.sin(line.theta)
        return PolarLine(line.theta, (line.rho - c * k.cu - s * k.cv) / k.fx)
    from .geometry import pixel_to_unit

    p1 = line.point_on_line()
    p2 = p1 + line.direction()
    mapped = line_through_points(pixel_to_unit(p1, k), pixel_to_unit(p2, k))
    return PolarLine(mapped.theta, mapped.rho, mapped_via_points=True)


def clip_to_rect(
    line: PolarLine, width: float, height: float
) -> tuple[np.ndarray, np.ndarray] | None:
    """Segment of a pixel-space line inside [0, width] x [0, height].

    Returns the two boundary intersection points, or None when the line
    misses the rectangle.
    """
    origin = line.point_on_line()
    direction = line.direction()
    eps = 1e-9
    hits: list[float] = []
    for axis, bound in ((0, width), (1, height)):
        if abs(direction[axis]) < 1e-15:
            continue
        for value in (0.0, bound):
            s = (value - origin[axis]) / direction[axis]
            other = origin[1 - axis] + s * direction[1 - axis]
            limit = height if axis == 0 else width
            if -eps <= other <= limit + eps:
                hits.append(float(s))
    if len(hits) < 2:
        return None
    lo, hi = min(hits), max(hits)
    if hi - lo < eps:
        return None
    return origin + lo * direction, origin + hi * direction
