"""Tests for frame handling, point-set extraction, RANSAC, and dataset IO."""

from __future__ import annotations

import numpy as np
import pytest
from helpers import match_lines, planted_two_lines, polar_error

from shafttrack.cylinder import PolarLine, clip_to_rect, fit_line_tls
from shafttrack.detection import (
    DegenerateSegment,
    DetectionFrame,
    ExtractionParams,
    FrameRecord,
    GroundTruth,
    InsufficientPoints,
    ParseError,
    RansacParams,
    SchemaError,
    SyntheticDetectorParams,
    endpoint_point_set,
    line_point_set,
    load_frames,
    segment_distance,
    sequential_ransac_two_lines,
    synthesize_detection,
    thresholded_heatmap,
    write_frames,
)

IMAGE = (1920, 1080)


def make_frame(entries, segments=(), image_size=IMAGE) -> DetectionFrame:
    pixels = np.array([[u, v] for u, v, _ in entries], dtype=int).reshape(-1, 2)
    intens = np.array([val for _, _, val in entries], dtype=float)
    return DetectionFrame(tuple(segments), pixels, intens, image_size)


def scan_endpoint_oracle(frame, e, alpha, beta):
    """Exhaustive loop over heatmap entries (independent of the vector path)."""
    out = []
    for (u, v), val in zip(frame.heatmap_pixels, frame.heatmap_intensities):
        if np.hypot(u - e[0], v - e[1]) <= alpha and val >= beta:
            out.append((u, v))
    return set(out)


def scan_segment_oracle(frame, e_a, e_b, alpha, beta):
    out = []
    a, b = np.asarray(e_a, float), np.asarray(e_b, float)
    ab = b - a
    for (u, v), val in zip(frame.heatmap_pixels, frame.heatmap_intensities):
        p = np.array([u, v], dtype=float)
        t = float(np.clip((p - a) @ ab / (ab @ ab), 0.0, 1.0))
        if np.linalg.norm(p - (a + t * ab)) <= alpha and val >= beta:
            out.append((u, v))
    return set(out)


def as_set(points) -> set:
    return {(float(u), float(v)) for u, v in points}


def random_frame(rng, n_entries=120) -> DetectionFrame:
    pixels = np.unique(
        np.stack(
            [rng.integers(0, 200, n_entries), rng.integers(0, 200, n_entries)], axis=1
        ),
        axis=0,
    )
    intens = rng.uniform(0.0, 1.0, len(pixels))
    return DetectionFrame((), pixels, intens, (200, 200))


class TestFrameInvariants:
    def test_rejects_out_of_bounds_pixel(self):
        with pytest.raises(ValueError):
            make_frame([(2000, 10, 0.5)])

    def test_rejects_duplicate_pixels(self):
        with pytest.raises(ValueError):
            make_frame([(5, 5, 0.5), (5, 5, 0.7)])

    def test_rejects_bad_intensity(self):
        with pytest.raises(ValueError):
            make_frame([(5, 5, 1.5)])

    def test_rejects_three_segments(self):
        seg = np.array([[0.0, 0.0], [10.0, 10.0]])
        with pytest.raises(ValueError):
            make_frame([], segments=(seg, seg, seg))


class TestEndpointPointSet:
    def test_spec_example(self):
        frame = make_frame([(10, 11, 0.95), (13, 10, 0.99), (10, 10, 0.5)])
        got = endpoint_point_set(frame, (10.0, 10.0), ExtractionParams(alpha_e=2.0, beta=0.9))
        assert as_set(got) == {(10.0, 11.0)}

    def test_zero_radius_keeps_exact_pixel_only(self):
        frame = make_frame([(10, 10, 0.95), (10, 11, 0.99)])
        got = endpoint_point_set(frame, (10.0, 10.0), ExtractionParams(alpha_e=0.0, beta=0.9))
        assert as_set(got) == {(10.0, 10.0)}
        got = endpoint_point_set(frame, (10.2, 10.0), ExtractionParams(alpha_e=0.0, beta=0.9))
        assert len(got) == 0

    def test_matches_exhaustive_scan(self):
        rng = np.random.default_rng(40)
        for _ in range(20):
            frame = random_frame(rng)
            e = rng.uniform(0, 200, 2)
            alpha = rng.uniform(0, 30)
            beta = rng.uniform(0.0, 1.0)
            got = endpoint_point_set(frame, e, ExtractionParams(alpha_e=alpha, beta=beta))
            assert as_set(got) == scan_endpoint_oracle(frame, e, alpha, beta)


class TestLinePointSet:
    def test_midpoint_included(self):
        frame = make_frame([(50, 50, 1.0)])
        got = line_point_set(
            frame, (40.0, 50.0), (60.0, 50.0), ExtractionParams(alpha_l=1.0, beta=0.9)
        )
        assert as_set(got) == {(50.0, 50.0)}

    def test_boundary_excluded(self):
        # pixel 10.5 px above the segment, radius 10
        frame = make_frame([(50, 61, 1.0)])
        got = line_point_set(
            frame, (40.0, 50.5), (60.0, 50.5), ExtractionParams(alpha_l=10.0, beta=0.9)
        )
        assert len(got) == 0

    def test_degenerate_segment(self):
        frame = make_frame([(50, 50, 1.0)])
        with pytest.raises(DegenerateSegment):
            line_point_set(frame, (10.0, 10.0), (10.0, 10.0), ExtractionParams())

    def test_matches_exhaustive_scan(self):
        rng = np.random.default_rng(41)
        for _ in range(20):
            frame = random_frame(rng)
            e_a = rng.uniform(0, 200, 2)
            e_b = e_a + rng.uniform(5, 100, 2)
            alpha = rng.uniform(0, 25)
            beta = rng.uniform(0.0, 1.0)
            got = line_point_set(frame, e_a, e_b, ExtractionParams(alpha_l=alpha, beta=beta))
            assert as_set(got) == scan_segment_oracle(frame, e_a, e_b, alpha, beta)

    def test_endpoint_set_subset_of_line_set(self):
        rng = np.random.default_rng(42)
        for _ in range(20):
            frame = random_frame(rng)
            e_a = rng.uniform(20, 180, 2)
            e_b = e_a + rng.uniform(5, 50, 2)
            params = ExtractionParams(alpha_e=12.0, alpha_l=12.0, beta=0.3)
            endpoint = as_set(endpoint_point_set(frame, e_a, params))
            full = as_set(line_point_set(frame, e_a, e_b, params))
            assert endpoint <= full

    def test_segment_distance_exact(self):
        d = segment_distance(np.array([[5.0, 3.0]]), (0.0, 0.0), (10.0, 0.0))
        assert d[0] == pytest.approx(3.0)
        d = segment_distance(np.array([[-4.0, 3.0]]), (0.0, 0.0), (10.0, 0.0))
        assert d[0] == pytest.approx(5.0)


class TestSequentialRansac:
    def test_zero_noise_exact_recovery(self):
        rng = np.random.default_rng(43)
        lines, points = planted_two_lines(rng, n_per_line=20)
        found = sequential_ransac_two_lines(points, RansacParams(seed=7))
        assert len(found) == 2
        for got, want in match_lines([line for line, _ in found], lines):
            dtheta, drho = polar_error(got, want)
            assert dtheta < 1e-9
            assert drho < 1e-9

    def test_noisy_recovery_with_outliers(self):
        hits = 0
        for seed in range(40):
            rng = np.random.default_rng(1000 + seed)
            lines, points = planted_two_lines(
                rng, n_per_line=20, n_outliers=8, noise_sigma=0.3
            )
            found = sequential_ransac_two_lines(points, RansacParams(seed=seed))
            if len(found) < 2:
                continue
            ok = True
            for got, want in match_lines([line for line, _ in found], lines):
                dtheta, drho = polar_error(got, want)
                ok = ok and dtheta <= 0.01 and drho <= 0.5
            hits += ok
        assert hits >= 38

    def test_insufficient_points(self):
        with pytest.raises(InsufficientPoints):
            sequential_ransac_two_lines(np.zeros((2, 2)), RansacParams(min_samples=3))

    def test_deterministic_given_seed(self):
        rng = np.random.default_rng(44)
        _, points = planted_two_lines(rng, n_per_line=15, n_outliers=5, noise_sigma=0.2)
        a = sequential_ransac_two_lines(points, RansacParams(seed=3))
        b = sequential_ransac_two_lines(points, RansacParams(seed=3))
        assert len(a) == len(b)
        for (la, pa), (lb, pb) in zip(a, b):
            assert la.theta == lb.theta and la.rho == lb.rho
            np.testing.assert_array_equal(pa, pb)

    def test_ordered_by_inlier_count(self):
        rng = np.random.default_rng(45)
        line1 = PolarLine(0.4, 50.0)
        line2 = PolarLine(0.5, 90.0)
        from helpers import points_on_line

        pts = np.vstack(
            [
                points_on_line(line1, rng.uniform(-80, 80, 12)),
                points_on_line(line2, rng.uniform(-80, 80, 30)),
            ]
        )
        found = sequential_ransac_two_lines(pts, RansacParams(seed=11))
        assert len(found) == 2
        assert len(found[0][1]) >= len(found[1][1])
        dtheta, _ = polar_error(found[0][0], line2)
        assert dtheta < 1e-6


class TestSynthesizeDetection:
    GT = (PolarLine(np.pi / 2, 300.0), PolarLine(np.pi / 2, 340.0))
    SPANS = (
        np.array([[200.0, 300.0], [900.0, 300.0]]),
        np.array([[200.0, 340.0], [900.0, 340.0]]),
    )

    def test_noiseless_frame(self):
        sp = SyntheticDetectorParams(
            pixel_noise_sigma=0.0, outlier_count=0, endpoint_dropout_prob=0.0
        )
        frame = synthesize_detection(self.GT, self.SPANS, sp, seed=1, image_size=IMAGE)
        assert len(frame.segments) == 2
        for seg, line in zip(frame.segments, self.GT):
            res = np.cos(line.theta) * seg[:, 0] + np.sin(line.theta) * seg[:, 1] - line.rho
            np.testing.assert_allclose(res, 0.0, atol=1e-12)
        np.testing.assert_allclose(frame.heatmap_intensities, 1.0, atol=0)

    def test_full_dropout_keeps_heatmap(self):
        sp = SyntheticDetectorParams(
            pixel_noise_sigma=0.0, outlier_count=0, endpoint_dropout_prob=1.0
        )
        frame = synthesize_detection(self.GT, self.SPANS, sp, seed=2, image_size=IMAGE)
        assert frame.segments == ()
        assert len(frame.heatmap_pixels) > 0

    def test_refit_recovers_planted_lines(self):
        sp = SyntheticDetectorParams(
            pixel_noise_sigma=0.5, outlier_count=0, endpoint_dropout_prob=0.0
        )
        spans = (
            np.array([[200.0, 300.0], [1600.0, 300.0]]),
            np.array([[200.0, 340.0], [1600.0, 340.0]]),
        )
        worst = 0.0
        for seed in range(100):
            frame = synthesize_detection(self.GT, spans, sp, seed=seed, image_size=IMAGE)
            pts = frame.heatmap_pixels.astype(float)
            for line in self.GT:
                res = np.cos(line.theta) * pts[:, 0] + np.sin(line.theta) * pts[:, 1] - line.rho
                mine = pts[np.abs(res) < 10.0]
                refit = fit_line_tls(mine)
                _, drho = polar_error(refit, line)
                worst = max(worst, drho)
        assert worst < 0.2

    def test_deterministic(self):
        sp = SyntheticDetectorParams()
        a = synthesize_detection(self.GT, self.SPANS, sp, seed=9, image_size=IMAGE)
        b = synthesize_detection(self.GT, self.SPANS, sp, seed=9, image_size=IMAGE)
        np.testing.assert_array_equal(a.heatmap_pixels, b.heatmap_pixels)
        np.testing.assert_array_equal(a.heatmap_intensities, b.heatmap_intensities)
        assert len(a.segments) == len(b.segments)

    def test_outliers_pass_threshold(self):
        sp = SyntheticDetectorParams(
            pixel_noise_sigma=0.0, outlier_count=25, endpoint_dropout_prob=0.0
        )
        frame = synthesize_detection(self.GT, self.SPANS, sp, seed=3, image_size=IMAGE)
        assert np.all(frame.heatmap_intensities >= 0.9)
        assert len(thresholded_heatmap(frame, 0.9)) == len(frame.heatmap_pixels)


class TestDatasetIO:
    def _records(self):
        frame = make_frame(
            [(10, 11, 0.95), (13, 10, 0.99)],
            segments=(np.array([[1.5, 2.5], [100.25, 200.75]]),),
        )
        gt = GroundTruth([0.001, -0.002, 0.0], [0.0, 0.01, 0.0], [960.5, 540.25])
        return [
            FrameRecord(0, (0.1, -0.2, 0.05), frame, gt),
            FrameRecord(1, (0.11, -0.19, 0.05), frame, None),
        ]

    def test_round_trip_bit_equal(self, tmp_path):
        path = tmp_path / "frames.jsonl"
        records = self._records()
        write_frames(path, records)
        loaded = list(load_frames(path, IMAGE))
        assert len(loaded) == 2
        for got, want in zip(loaded, records):
            assert got.t == want.t
            assert got.q == want.q
            np.testing.assert_array_equal(got.frame.heatmap_pixels, want.frame.heatmap_pixels)
            np.testing.assert_array_equal(
                got.frame.heatmap_intensities, want.frame.heatmap_intensities
            )
            for sa, sb in zip(got.frame.segments, want.frame.segments):
                np.testing.assert_array_equal(sa, sb)
        assert loaded[0].gt is not None
        np.testing.assert_array_equal(loaded[0].gt.tip_px, records[0].gt.tip_px)
        assert loaded[1].gt is None

    def test_empty_file(self, tmp_path):
        path = tmp_path / "empty.jsonl"
        path.write_text("")
        assert list(load_frames(path, IMAGE)) == []

    def test_parse_error_reports_line(self, tmp_path):
        path = tmp_path / "bad.jsonl"
        good = '{"t":0,"q":[0.0],"segments":[],"heatmap":[],"gt":null}'
        path.write_text(good + "\n" + good + "\n{oops\n")
        with pytest.raises(ParseError) as err:
            list(load_frames(path, IMAGE))
        assert err.value.line == 3

    def test_schema_error_names_field(self, tmp_path):
        path = tmp_path / "missing.jsonl"
        path.write_text('{"t":0,"segments":[],"heatmap":[],"gt":null}\n')
        with pytest.raises(SchemaError) as err:
            list(load_frames(path, IMAGE))
        assert err.value.fieldname == "q"


class TestClipSpansStayOnLine:
    def test_clip_produces_valid_spans(self):
        line = PolarLine(1.1, 400.0)
        seg = clip_to_rect(line, *IMAGE)
        assert seg is not None
        for pt in seg:
            res = np.cos(line.theta) * pt[0] + np.sin(line.theta) * pt[1] - line.rho
            assert abs(res) < 1e-9
