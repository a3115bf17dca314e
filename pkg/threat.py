import logging
import math
from dataclasses import dataclass
from enum import Enum

import numpy as np
import pandas as pd

from core_types import HazNavError, ImageTensor

# 配置日志
logger = logging.getLogger(__name__)

HEATMAP_COLUMNS = ["coord1", "coord2", "t_f"]


class NegativeDistanceError(HazNavError, ValueError):
    pass


class FusionShapeError(HazNavError, ValueError):
    pass


class ThreatSource(Enum):
    RADAR = "radar"
    PIXEL = "pixel"


@dataclass(frozen=True)
class ThreatScore:
    t_f: float
    source: ThreatSource
    hazard_id: int | None = None

    def __post_init__(self):
        value = float(self.t_f)
        if not 0.0 <= value <= 1.0:
            raise ValueError(f"威胁值必须在 [0, 1] 内: {self.t_f}")
        object.__setattr__(self, "t_f", value)


@dataclass(frozen=True)
class ThreatConfig:
    """雷达威胁模型参数；距离单位为厘米"""

    l_x_max: float = 6000.0
    l_y_max: float = 370.0
    t_min: float = 0.0
    t_max: float = math.sqrt(2.0)

    def __post_init__(self):
        if not (self.l_x_max > 0 and self.l_y_max > 0):
            raise ValueError(f"量程必须为正: l_x_max={self.l_x_max}, l_y_max={self.l_y_max}")
        if not self.t_max > self.t_min:
            raise ValueError(f"归一化区间无效: [{self.t_min}, {self.t_max}]")

    def to_dict(self):
        return {"l_x_max": self.l_x_max, "l_y_max": self.l_y_max, "t_min": self.t_min, "t_max": self.t_max}


def _clamp01(value):
    return min(1.0, max(0.0, value))


def threat_radar(l_x, l_y, cfg=None, hazard_id=None):
    """
    距离传感器威胁值

    T = sqrt(((l_x_max - l_x) / l_x_max)^2 + ((l_y_max - l_y) / l_y_max)^2)，
    再按 [t_min, t_max] 做最小-最大归一化；超出量程的一律为 0。
    """
    cfg = cfg or ThreatConfig()
    if l_x < 0 or l_y < 0:
        raise NegativeDistanceError(f"距离不能为负: l_x={l_x}, l_y={l_y}")
    if l_x > cfg.l_x_max or l_y > cfg.l_y_max:
        return ThreatScore(0.0, ThreatSource.RADAR, hazard_id)
    t = math.hypot((cfg.l_x_max - l_x) / cfg.l_x_max, (cfg.l_y_max - l_y) / cfg.l_y_max)
    return ThreatScore(_clamp01((t - cfg.t_min) / (cfg.t_max - cfg.t_min)), ThreatSource.RADAR, hazard_id)


def threat_from_radar(reading, cfg=None):
    """多个目标时取威胁值最大者；没有目标时为 0"""
    best = ThreatScore(0.0, ThreatSource.RADAR)
    for det in reading:
        score = threat_radar(det.l_x_cm, det.l_y_cm, cfg, det.hazard_id)
        if score.t_f > best.t_f:
            best = score
    return best


def pixel_threat_value(x, y, h, w):
    """按行坐标 x、列坐标 y 计算像素威胁值，参考点为底部中心 (h, w/2)"""
    dist = np.hypot(np.asarray(x, dtype=float) - h, np.asarray(y, dtype=float) - w / 2)
    return np.clip(1.0 - dist / math.hypot(h, w / 2), 0.0, 1.0)


def threat_pixel(seg):
    """分割图威胁值：取离底部中心最近的障碍物像素代入公式；没有障碍物像素时为 0"""
    mask = seg.hazard_mask()
    rows, cols = np.nonzero(mask)
    if rows.size == 0:
        return ThreatScore(0.0, ThreatSource.PIXEL)
    h, w = mask.shape
    dist_sq = (rows - h) ** 2 + (cols - w / 2) ** 2
    i = int(np.argmin(dist_sq))
    return ThreatScore(float(pixel_threat_value(rows[i], cols[i], h, w)), ThreatSource.PIXEL)


def fuse(original, segmented, t):
    """
    I = (1 - T_f) * I_original + T_f * I_segmented

    T_f 为 0 或 1 时直接返回对应的输入图像；其余情况按 float64 计算并保存结果。
    """
    seg_img = segmented.image if hasattr(segmented, "labels") else segmented
    if original.shape != seg_img.shape:
        raise FusionShapeError(f"图像尺寸不一致: {original.shape} vs {seg_img.shape}")
    if original.value_range != seg_img.value_range:
        raise FusionShapeError("两幅图像的取值范围标记不一致")
    t_f = t.t_f
    if t_f == 0.0:
        return original
    if t_f == 1.0:
        return seg_img
    blended = (1.0 - t_f) * original.data.astype(np.float64) + t_f * seg_img.data.astype(np.float64)
    return ImageTensor(blended, original.value_range, "float64")


def threat_heatmap(procedure, resolution=50, cfg=None, height=400, width=600, span=1.0):
    """
    在规则网格上计算威胁值，输出 (coord1, coord2, t_f) 表

    雷达网格：l_x ∈ [0, span·l_x_max]，l_y ∈ [0, span·l_y_max]，span > 1 时能看到量程外的零值区；
    像素网格：x ∈ [0, h]，y ∈ [0, w/2]，左右对称所以只取一半。
    """
    cfg = cfg or ThreatConfig()
    if resolution < 2:
        raise ValueError(f"网格分辨率至少为 2: {resolution}")
    if not span > 0:
        raise ValueError(f"网格范围倍数必须为正: {span}")
    source = ThreatSource(procedure)
    if source is ThreatSource.RADAR:
        c1 = np.linspace(0.0, span * cfg.l_x_max, resolution)
        c2 = np.linspace(0.0, span * cfg.l_y_max, resolution)
        values = [threat_radar(a, b, cfg).t_f for a in c1 for b in c2]
    else:
        c1 = np.linspace(0.0, float(height), resolution)
        c2 = np.linspace(0.0, width / 2, resolution)
        grid_x, grid_y = np.meshgrid(c1, c2, indexing="ij")
        values = pixel_threat_value(grid_x, grid_y, height, width).ravel()
    g1, g2 = np.meshgrid(c1, c2, indexing="ij")
    logger.debug(f"生成 {source.value} 威胁热力图，网格 {resolution}x{resolution}")
    return pd.DataFrame({"coord1": g1.ravel(), "coord2": g2.ravel(), "t_f": values}, columns=HEATMAP_COLUMNS)


def write_heatmap_csv(frame, path):
    frame.to_csv(path, index=False, lineterminator="\n")
