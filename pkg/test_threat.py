import math

import numpy as np
import pytest

from core_types import ImageTensor
from synth_vision import ROAD, SegmentedImage, segment_oracle
from threat import (
    FusionShapeError,
    NegativeDistanceError,
    ThreatConfig,
    ThreatScore,
    ThreatSource,
    fuse,
    pixel_threat_value,
    threat_from_radar,
    threat_heatmap,
    threat_pixel,
    threat_radar,
    write_heatmap_csv,
)
from world_sim import HazardKind, RadarDetection, RadarReading


def test_radar_golden_values():
    assert threat_radar(3000, 185).t_f == pytest.approx(0.5, abs=1e-9)
    assert threat_radar(6000, 370).t_f == 0.0
    assert threat_radar(0, 0).t_f == pytest.approx(1.0, abs=1e-12)


@pytest.mark.parametrize("l_x, l_y", [(6000.01, 0), (0, 370.01), (10000, 10000)])
def test_radar_gate_returns_exact_zero(l_x, l_y):
    assert threat_radar(l_x, l_y).t_f == 0.0


def test_radar_rejects_negative_distance():
    with pytest.raises(NegativeDistanceError):
        threat_radar(-1, 0)


def test_radar_custom_range():
    cfg = ThreatConfig(l_x_max=1000.0, l_y_max=100.0)
    assert threat_radar(500, 50, cfg).t_f == pytest.approx(0.5)


def test_radar_reading_takes_most_threatening():
    reading = RadarReading((RadarDetection(3, 5000.0, 300.0), RadarDetection(4, 1000.0, 20.0)))
    score = threat_from_radar(reading)
    assert score.hazard_id == 4
    assert score.source is ThreatSource.RADAR
    assert score.t_f == pytest.approx(threat_radar(1000.0, 20.0).t_f)
    assert threat_from_radar(RadarReading()).t_f == 0.0


def _single_pixel(h, w, row, col):
    labels = np.full((h, w), ROAD, dtype=np.uint8)
    labels[row, col] = HazardKind.OIL_BARREL.color_id
    return SegmentedImage(labels)


def test_pixel_golden_value():
    assert threat_pixel(_single_pixel(400, 600, 200, 300)).t_f == pytest.approx(0.6, abs=1e-9)
    assert pixel_threat_value(400, 300, 400, 600) == pytest.approx(1.0)
    assert pixel_threat_value(0, 0, 400, 600) == pytest.approx(0.0)


def test_pixel_uses_nearest_hazard_pixel():
    labels = np.full((400, 600), ROAD, dtype=np.uint8)
    labels[10, 10] = HazardKind.ROCK.color_id
    labels[200, 300] = HazardKind.ROCK.color_id
    assert threat_pixel(SegmentedImage(labels)).t_f == pytest.approx(0.6, abs=1e-9)


def test_pixel_without_hazard_is_zero():
    score = threat_pixel(SegmentedImage(np.full((40, 60), ROAD, dtype=np.uint8)))
    assert score.t_f == 0.0
    assert score.source is ThreatSource.PIXEL
    assert score.hazard_id is None


def test_threat_score_range_checked():
    with pytest.raises(ValueError):
        ThreatScore(1.2, ThreatSource.PIXEL)


def _random_pair(rng, h=12, w=16):
    frame = ImageTensor(rng.integers(0, 256, (h, w, 3)).astype(np.float32))
    labels = rng.choice(np.array([1, 2, 3, 10, 11, 12, 13, 14], dtype=np.uint8), size=(h, w))
    return frame, SegmentedImage(labels)


def test_fusion_endpoints_are_bit_identical(np_rng):
    for _ in range(100):
        frame, seg = _random_pair(np_rng)
        zero = fuse(frame, seg, ThreatScore(0.0, ThreatSource.RADAR))
        one = fuse(frame, seg, ThreatScore(1.0, ThreatSource.RADAR))
        assert np.array_equal(zero.data, frame.data)
        assert np.array_equal(one.data, seg.image.data)


def test_fusion_midpoint_is_mean(np_rng):
    for _ in range(100):
        frame, seg = _random_pair(np_rng)
        half = fuse(frame, seg, ThreatScore(0.5, ThreatSource.PIXEL))
        expected = (frame.data.astype(np.float64) + seg.image.data.astype(np.float64)) / 2
        assert np.max(np.abs(half.data - expected)) <= 1e-12


@pytest.mark.parametrize("t_f", [0.3, 0.5, 0.77])
def test_fusion_is_exactly_linear(np_rng, t_f):
    for scaled in (False, True):
        frame, seg = _random_pair(np_rng)
        if scaled:
            # 亮度缩放后的画面像素不再是整数
            frame = ImageTensor(np.clip(frame.data * np.float32(1.13), 0, 255))
        fused = fuse(frame, seg, ThreatScore(t_f, ThreatSource.RADAR))
        a = frame.data.astype(np.float64)
        b = seg.image.data.astype(np.float64)
        assert fused.dtype == "float64"
        assert fused.data.dtype == np.float64
        assert np.max(np.abs(fused.data - ((1.0 - t_f) * a + t_f * b))) <= 1e-12


def test_fusion_shape_mismatch(np_rng):
    frame, _ = _random_pair(np_rng, 12, 16)
    _, seg = _random_pair(np_rng, 10, 16)
    with pytest.raises(FusionShapeError):
        fuse(frame, seg, ThreatScore(0.3, ThreatSource.RADAR))


def test_fusion_on_rendered_hazard(rock_ahead, small_rig):
    seg = segment_oracle(rock_ahead, small_rig)
    assert 0.0 < threat_pixel(seg).t_f < 1.0


def _grid(frame, resolution):
    return frame["t_f"].to_numpy().reshape(resolution, resolution)


def test_radar_heatmap_monotone_and_corner():
    frame = threat_heatmap("radar", 50)
    assert list(frame.columns) == ["coord1", "coord2", "t_f"]
    assert len(frame) == 2500
    grid = _grid(frame, 50)
    # 最大威胁点在 (0, 0)，沿两个坐标方向都不增
    assert np.all(np.diff(grid, axis=0) <= 1e-12)
    assert np.all(np.diff(grid, axis=1) <= 1e-12)
    corner = frame[(frame.coord1 == 6000.0) & (frame.coord2 == 370.0)]
    assert corner.t_f.tolist() == [0.0]


def test_pixel_heatmap_monotone():
    frame = threat_heatmap("pixel", 50, height=400, width=600)
    grid = _grid(frame, 50)
    # 最大威胁点在 (h, w/2)，即网格的最后一行最后一列
    assert grid[-1, -1] == pytest.approx(1.0)
    assert np.all(np.diff(grid, axis=0) >= -1e-12)
    assert np.all(np.diff(grid, axis=1) >= -1e-12)


def test_monotone_along_rays_from_peak():
    h, w = 400, 600
    for angle in np.linspace(0.0, math.pi, 9):
        r = np.linspace(0, 500, 60)
        x = h - r * math.sin(angle)
        y = w / 2 + r * math.cos(angle)
        values = pixel_threat_value(x, y, h, w)
        assert np.all(np.diff(values) <= 1e-12)


def test_heatmap_errors():
    with pytest.raises(ValueError):
        threat_heatmap("sonar")
    with pytest.raises(ValueError):
        threat_heatmap("radar", resolution=1)


def test_heatmap_csv(tmp_path):
    path = tmp_path / "h.csv"
    write_heatmap_csv(threat_heatmap("radar", 5), path)
    lines = path.read_text().splitlines()
    assert lines[0] == "coord1,coord2,t_f"
    assert len(lines) == 26


def test_radar_heatmap_span():
    frame = threat_heatmap("radar", 21, span=2.0)
    assert frame.coord1.min() == 0.0 and frame.coord2.min() == 0.0
    assert frame.coord1.max() == 12000.0
    assert frame.coord2.max() == 740.0
    outside = frame[(frame.coord1 > 6000.0) | (frame.coord2 > 370.0)]
    assert len(outside) > 0
    assert (outside.t_f == 0.0).all()
    grid = _grid(frame, 21)
    assert np.all(np.diff(grid, axis=0) <= 1e-12)
    assert np.all(np.diff(grid, axis=1) <= 1e-12)
    # 像素网格不受 span 影响
    pixel = threat_heatmap("pixel", 5, height=40, width=60, span=3.0)
    assert pixel.coord1.max() == 40.0 and pixel.coord2.max() == 30.0
    with pytest.raises(ValueError):
        threat_heatmap("radar", 5, span=0.0)


def test_radar_monotone_on_random_pairs(np_rng):
    cfg = ThreatConfig()
    for _ in range(500):
        a = np_rng.uniform([0.0, 0.0], [cfg.l_x_max, cfg.l_y_max])
        b = a + np_rng.uniform([0.0, 0.0], [cfg.l_x_max, cfg.l_y_max]) * np_rng.uniform(0, 1)
        b = np.minimum(b, [cfg.l_x_max, cfg.l_y_max])
        assert threat_radar(*a, cfg).t_f >= threat_radar(*b, cfg).t_f
    assert threat_radar(3000, 185).t_f > threat_radar(4500, 277.5).t_f
