import logging
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from functools import cached_property

import numpy as np
import pandas as pd
from scipy import ndimage

from core_types import (
    HazNavError,
    ImageRangeError,
    ImageTensor,
    NORMALIZED,
    RAW,
    SteeringAngle,
    write_json,
    write_ppm,
)
from world_sim import HAZARD_COLOR_BASE, HazardKind, radar_scan, rollout

# 配置日志
logger = logging.getLogger(__name__)

SKY = 0
OFF_ROAD = 1
ROAD = 2
LANE_MARKING = 3
HAZARD_LABELS = tuple(k.color_id for k in HazardKind)
CLASS_NAMES = {SKY: "sky", OFF_ROAD: "off_road", ROAD: "road", LANE_MARKING: "lane_marking"}
CLASS_NAMES.update({k.color_id: f"hazard:{k.value}" for k in HazardKind})

MARKING_HALF_WIDTH_M = 0.12
DASH_PERIOD_M = 9.0
DASH_LENGTH_M = 3.0

RENDER_COLORS = {
    SKY: (135, 206, 235),
    OFF_ROAD: (76, 140, 60),
    ROAD: (90, 90, 90),
    LANE_MARKING: (235, 235, 235),
    HazardKind.ROCK.color_id: (128, 118, 105),
    HazardKind.WOODEN_BOX.color_id: (160, 110, 60),
    HazardKind.OIL_BARREL.color_id: (200, 60, 40),
    HazardKind.WOODEN_PALLET.color_id: (190, 160, 110),
    HazardKind.PIPE_SECTION.color_id: (170, 170, 190),
}

# 分割调色板里天空归为背景(非道路)
SEGMENT_COLORS = {
    SKY: (0, 0, 0),
    OFF_ROAD: (0, 0, 0),
    ROAD: (128, 64, 128),
    LANE_MARKING: (255, 255, 255),
    HazardKind.ROCK.color_id: (255, 0, 0),
    HazardKind.WOODEN_BOX.color_id: (255, 128, 0),
    HazardKind.OIL_BARREL.color_id: (255, 255, 0),
    HazardKind.WOODEN_PALLET.color_id: (0, 255, 0),
    HazardKind.PIPE_SECTION.color_id: (0, 0, 255),
}

SPLITS = ("train", "validation", "test")


class CropError(HazNavError, ValueError):
    pass


class SegmentationError(HazNavError, ValueError):
    pass


class DatasetError(HazNavError, ValueError):
    pass


class EmptyRolloutError(DatasetError):
    pass


def _lut(colors):
    table = np.zeros((256, 3), dtype=np.float32)
    for label, rgb in colors.items():
        table[label] = rgb
    return table


_RENDER_LUT = _lut(RENDER_COLORS)
_SEGMENT_LUT = _lut(SEGMENT_COLORS)


@dataclass(frozen=True)
class CameraSpec:
    name: str
    lateral_m: float
    yaw_rad: float


@dataclass(frozen=True)
class CameraRig:
    """三摄像头支架：中间摄像头在车辆中线，左右对称外偏"""

    height: int = 100
    width: int = 150
    hfov_deg: float = 60.0
    mount_height_m: float = 1.4
    side_offset_m: float = 0.8
    side_yaw_deg: float = 5.0
    max_ground_m: float = 250.0

    def __post_init__(self):
        if self.height < 2 or self.width < 2:
            raise ValueError(f"画面尺寸过小: {self.height}x{self.width}")
        if not 0 < self.hfov_deg < 180:
            raise ValueError(f"水平视场角无效: {self.hfov_deg}")
        if not self.mount_height_m > 0:
            raise ValueError(f"摄像头安装高度必须为正: {self.mount_height_m}")

    @property
    def focal_px(self):
        return (self.width / 2) / math.tan(math.radians(self.hfov_deg) / 2)

    @property
    def cameras(self):
        yaw = math.radians(self.side_yaw_deg)
        return {
            "left": CameraSpec("left", self.side_offset_m, -yaw),
            "center": CameraSpec("center", 0.0, 0.0),
            "right": CameraSpec("right", -self.side_offset_m, yaw),
        }

    def camera(self, cam):
        try:
            return self.cameras[cam]
        except KeyError:
            raise ValueError(f"未配置的摄像头: {cam}") from None

    def to_dict(self):
        return {
            "height": self.height,
            "width": self.width,
            "hfov_deg": self.hfov_deg,
            "mount_height_m": self.mount_height_m,
            "side_offset_m": self.side_offset_m,
            "side_yaw_deg": self.side_yaw_deg,
            "max_ground_m": self.max_ground_m,
        }


def _surface_labels(road, xy):
    station, lateral = road.project(xy)
    labels = np.full(station.shape, ROAD, dtype=np.uint8)
    lane = np.rint(lateral / road.lane_width)
    near_line = np.abs(lateral - lane * road.lane_width) <= MARKING_HALF_WIDTH_M
    solid = (np.abs(lane) == road.lanes_per_direction) | (lane == 0)
    dashed = np.mod(station, DASH_PERIOD_M) < DASH_LENGTH_M
    labels[near_line & (solid | dashed)] = LANE_MARKING
    off = (np.abs(lateral) > road.half_width) | (station < 0) | (station > road.total_length)
    labels[off] = OFF_ROAD
    return labels


def _slab(origin, direction, extent):
    with np.errstate(divide="ignore", invalid="ignore"):
        t1 = (-extent - origin) / direction
        t2 = (extent - origin) / direction
    lo = np.minimum(t1, t2)
    hi = np.maximum(t1, t2)
    parallel = direction == 0
    inside = abs(origin) <= extent
    lo = np.where(parallel, np.where(inside, -np.inf, np.inf), lo)
    hi = np.where(parallel, np.where(inside, np.inf, -np.inf), hi)
    return lo, hi


def label_raster(world, rig, cam="center"):
    """
    逐像素光线投射，得到类别标签图；渲染和分割共用这一结果

    光线参数 t 为沿摄像头前向的距离；地面交点 t = 安装高度 / v，
    障碍物为立方体，与光线求交后取最近者，遮挡地面。
    """
    spec = rig.camera(cam)
    height, width = rig.height, rig.width
    f = rig.focal_px
    mh = rig.mount_height_m
    u = (np.arange(width) + 0.5 - width / 2) / f
    v = (np.arange(height) + 0.5 - height / 2) / f

    veh = world.vehicle
    lx, ly = veh.left
    cx = veh.x + spec.lateral_m * lx
    cy = veh.y + spec.lateral_m * ly
    heading = veh.heading + spec.yaw_rad
    fwd = np.array([math.cos(heading), math.sin(heading)])
    right = np.array([-math.sin(heading), math.cos(heading)])
    dir_x = fwd[0] + u * right[0]
    dir_y = fwd[1] + u * right[1]

    labels = np.full((height, width), SKY, dtype=np.uint8)
    rows = np.nonzero(v > 0)[0]
    if rows.size == 0:
        return labels
    t_ground = mh / v[rows]
    visible = t_ground <= rig.max_ground_m
    labels[rows[~visible], :] = OFF_ROAD
    near_rows = rows[visible]
    if near_rows.size:
        tg = t_ground[visible][:, None]
        xy = np.stack([cx + tg * dir_x[None, :], cy + tg * dir_y[None, :]], axis=-1)
        labels[near_rows] = _surface_labels(world.road, xy)

    depth = np.full((rows.size, width), np.inf)
    v_rows = v[rows][:, None]
    for hazard in world.hazards:
        if math.hypot(hazard.x - cx, hazard.y - cy) > rig.max_ground_m:
            continue
        ou, od = hazard.to_local((cx, cy))
        c, s = math.cos(hazard.heading), math.sin(hazard.heading)
        du = dir_x * c + dir_y * s
        dd = dir_x * s - dir_y * c
        lo_u, hi_u = _slab(float(ou), du, hazard.half_length)
        lo_d, hi_d = _slab(float(od), dd, hazard.half_width)
        t_in = np.maximum(lo_u, lo_d)[None, :]
        t_out = np.minimum(hi_u, hi_d)[None, :]
        enter = np.maximum(np.maximum(t_in, (mh - hazard.height) / v_rows), 0.0)
        leave = np.minimum(t_out, mh / v_rows)
        hit = (enter <= leave) & (leave > 0) & (enter < depth)
        depth = np.where(hit, enter, depth)
        sub = labels[rows]
        sub[hit] = hazard.color_id
        labels[rows] = sub
    return labels


@dataclass(frozen=True, eq=False)
class SegmentedImage:
    """类别标签图；image 属性给出调色板着色后的图像"""

    labels: np.ndarray

    def __post_init__(self):
        arr = np.array(self.labels, dtype=np.uint8)
        if arr.ndim != 2:
            raise SegmentationError(f"标签图必须是二维数组: {arr.shape}")
        known = np.isin(arr, list(SEGMENT_COLORS))
        if not np.all(known):
            raise SegmentationError(f"标签图含有未知类别: {sorted(set(arr[~known].tolist()))}")
        arr.setflags(write=False)
        object.__setattr__(self, "labels", arr)

    @property
    def height(self):
        return self.labels.shape[0]

    @property
    def width(self):
        return self.labels.shape[1]

    @cached_property
    def image(self):
        return ImageTensor(_SEGMENT_LUT[self.labels], RAW)

    def hazard_mask(self):
        return self.labels >= HAZARD_COLOR_BASE

    def hazard_pixel_count(self):
        return int(np.count_nonzero(self.hazard_mask()))

    @classmethod
    def from_image(cls, img):
        """从调色板图像还原标签；黑色统一视为非道路"""
        data = np.rint(img.data).astype(np.int64)
        codes = (data[..., 0] << 16) | (data[..., 1] << 8) | data[..., 2]
        labels = np.full(codes.shape, 255, dtype=np.uint8)
        for label in sorted(SEGMENT_COLORS, reverse=True):
            r, g, b = SEGMENT_COLORS[label]
            labels[codes == ((r << 16) | (g << 8) | b)] = label
        if np.any(labels == 255):
            raise SegmentationError("图像中存在不属于调色板的颜色")
        return cls(labels)


def render(w, cam="center", rig=None):
    """平面着色的透视渲染"""
    rig = rig or CameraRig()
    return ImageTensor(_RENDER_LUT[label_raster(w, rig, cam)], RAW)


def segment_oracle(w, rig=None, cam="center"):
    """由仿真几何直接得到的分割结果，与 render(center) 使用同一投影"""
    rig = rig or CameraRig()
    return SegmentedImage(label_raster(w, rig, cam))


def render_with_segmentation(w, rig=None, cam="center"):
    """一次光线投射同时得到渲染画面和分割图"""
    rig = rig or CameraRig()
    labels = label_raster(w, rig, cam)
    return ImageTensor(_RENDER_LUT[labels], RAW), SegmentedImage(labels)


def normalize_image(img, crop_top=None):
    """
    裁掉顶部 crop_top 行(默认为高度的一半)，再把 [0,255] 线性映射到 [-1,1]
    """
    if img.value_range != RAW:
        raise ImageRangeError("归一化的输入必须是原始范围图像")
    if crop_top is None:
        crop_top = img.height // 2
    if img.height <= crop_top:
        raise CropError(f"图像高度 {img.height} 不足以裁掉顶部 {crop_top} 行")
    real = img.data.dtype.type
    return ImageTensor(img.data[crop_top:] / real(127.5) - real(1.0), NORMALIZED, img.dtype)


def denormalize_image(img):
    if img.value_range != NORMALIZED:
        raise ImageRangeError("反归一化的输入必须是归一化图像")
    real = img.data.dtype.type
    return ImageTensor(np.clip((img.data + real(1.0)) * real(127.5), 0, 255), RAW, img.dtype)


@dataclass(frozen=True, eq=False)
class Sample:
    center: ImageTensor
    segmented: SegmentedImage
    label: SteeringAngle
    radar: object
    timestamp_ms: int
    left: ImageTensor | None = None
    right: ImageTensor | None = None
    world_id: str = "world"
    augmentation: str = "none"

    def __post_init__(self):
        shape = self.center.shape
        if (self.segmented.height, self.segmented.width) != shape[:2]:
            raise DatasetError(f"分割图尺寸与画面不一致: {self.segmented.labels.shape} vs {shape}")
        for side in (self.left, self.right):
            if side is not None and side.shape != shape:
                raise DatasetError(f"侧摄像头画面尺寸不一致: {side.shape} vs {shape}")


@dataclass(frozen=True)
class AugmentConfig:
    modes: tuple = ("rotate", "brightness", "flip")
    max_rotation_deg: float = 5.0
    brightness_low: float = 0.8
    brightness_high: float = 1.2

    def __post_init__(self):
        object.__setattr__(self, "modes", tuple(self.modes))
        unknown = [m for m in self.modes if m not in ("rotate", "brightness", "flip")]
        if unknown or not self.modes:
            raise ValueError(f"增强方式无效: {self.modes}")
        if not 0 < self.brightness_low <= self.brightness_high:
            raise ValueError(f"亮度区间无效: [{self.brightness_low}, {self.brightness_high}]")


def _flip_image(img):
    return None if img is None else ImageTensor(img.data[:, ::-1], img.value_range, img.dtype)


def flip_sample(s):
    """水平翻转：列倒序，左右摄像头互换，转向标签取反"""
    return replace(
        s,
        center=_flip_image(s.center),
        left=_flip_image(s.right),
        right=_flip_image(s.left),
        segmented=SegmentedImage(s.segmented.labels[:, ::-1]),
        label=s.label.negated(),
        augmentation="flip" if s.augmentation == "none" else f"{s.augmentation}+flip",
    )


def _rotate_image(img, angle_deg):
    if img is None:
        return None
    out = ndimage.rotate(img.data, angle_deg, axes=(1, 0), reshape=False, order=1, mode="nearest")
    return ImageTensor(np.clip(out, 0, 255), img.value_range, img.dtype)


def rotate_sample(s, angle_deg):
    labels = ndimage.rotate(s.segmented.labels, angle_deg, axes=(1, 0), reshape=False,
                            order=0, mode="nearest")
    return replace(
        s,
        center=_rotate_image(s.center, angle_deg),
        left=_rotate_image(s.left, angle_deg),
        right=_rotate_image(s.right, angle_deg),
        segmented=SegmentedImage(labels),
        augmentation=f"rotate:{angle_deg:+.4f}",
    )


def _brighten_image(img, k):
    if img is None:
        return None
    return ImageTensor(np.clip(img.data * img.data.dtype.type(k), 0, 255), img.value_range, img.dtype)


def brighten_sample(s, k):
    # 分割图不参与亮度变化
    return replace(
        s,
        center=_brighten_image(s.center, k),
        left=_brighten_image(s.left, k),
        right=_brighten_image(s.right, k),
        augmentation=f"brightness:{k:.4f}",
    )


def augment(s, rng, cfg=None):
    """随机选一种变换：旋转、亮度或水平翻转；只有翻转会改变标签"""
    cfg = cfg or AugmentConfig()
    mode = cfg.modes[int(rng.integers(0, len(cfg.modes)))]
    if mode == "rotate":
        return rotate_sample(s, float(rng.uniform(-cfg.max_rotation_deg, cfg.max_rotation_deg)))
    if mode == "brightness":
        return brighten_sample(s, float(rng.uniform(cfg.brightness_low, cfg.brightness_high)))
    return flip_sample(s)


@dataclass(frozen=True)
class DatasetConfig:
    collect_count: int = 940
    record_period_ms: int = 100
    augment: bool = True
    train_fraction: float = 0.8
    test_collect_count: int = 52
    test_hazard_count: int = 6
    test_record_period_ms: int = 100
    min_hazard_pixels: int = 4
    record_side_cameras: bool = True
    side_camera_correction: float = 0.0
    export_frames: bool = True
    augmentation: AugmentConfig = field(default_factory=AugmentConfig)

    def __post_init__(self):
        if self.collect_count < 1:
            raise ValueError(f"采集数量至少为 1: {self.collect_count}")
        if not 0 < self.train_fraction < 1:
            raise ValueError(f"训练集比例必须在 (0, 1) 内: {self.train_fraction}")
        if self.record_period_ms <= 0 or self.test_record_period_ms <= 0:
            raise ValueError("采样周期必须为正")
        if self.test_collect_count < 0 or self.test_hazard_count < 0 or self.min_hazard_pixels < 1:
            raise ValueError("测试集数量不能为负，障碍物像素阈值至少为 1")
        if self.side_camera_correction < 0:
            raise ValueError(f"侧摄像头修正量不能为负: {self.side_camera_correction}")


@dataclass(frozen=True, eq=False)
class Dataset:
    samples: tuple
    split_tags: tuple

    def __post_init__(self):
        if len(self.samples) != len(self.split_tags):
            raise DatasetError("样本数量与划分标记数量不一致")
        bad = set(self.split_tags) - set(SPLITS)
        if bad:
            raise DatasetError(f"未知的数据划分: {sorted(bad)}")

    def __len__(self):
        return len(self.samples)

    def split(self, name):
        return [s for s, tag in zip(self.samples, self.split_tags) if tag == name]

    def counts(self):
        counts = {name: self.split_tags.count(name) for name in SPLITS}
        counts["total"] = counts["train"] + counts["validation"]
        return counts


@dataclass(frozen=True)
class _Capture:
    t_ms: int
    world: object
    steering: SteeringAngle


def _collect(world, policy, period_ms, dt_ms, limit):
    if period_ms % dt_ms != 0:
        raise DatasetError(f"采样周期 {period_ms} ms 必须是仿真步长 {dt_ms} ms 的整数倍")
    captures = []

    def observer(t_ms, state, steering):
        if t_ms % period_ms == 0 and len(captures) < limit:
            captures.append(_Capture(t_ms, state, steering))

    rollout(world, policy, limit * period_ms, dt_ms, observer=observer)
    return captures


def _full_road_limit(world, period_ms):
    speed = world.vehicle.speed
    if speed <= 0:
        raise DatasetError("车速为 0 时无法沿道路采集")
    return int(math.ceil(world.road.total_length / speed * 1000.0 / period_ms))


def _render_capture(capture, rig, record_side, side_correction):
    views = ("left", "center", "right") if (record_side or side_correction > 0) else ("center",)
    labels = {cam: label_raster(capture.world, rig, cam) for cam in views}
    frames = {cam: ImageTensor(_RENDER_LUT[lab], RAW) for cam, lab in labels.items()}
    radar = radar_scan(capture.world)
    sample = Sample(
        center=frames["center"],
        segmented=SegmentedImage(labels["center"]),
        label=capture.steering,
        radar=radar,
        timestamp_ms=capture.t_ms,
        left=frames.get("left") if record_side else None,
        right=frames.get("right") if record_side else None,
        world_id=capture.world.world_id,
    )
    extra = []
    if side_correction > 0:
        # 左摄像头相当于车辆偏左，应向右修正
        for cam, sign in (("left", 1.0), ("right", -1.0)):
            extra.append(Sample(
                center=frames[cam],
                segmented=SegmentedImage(labels[cam]),
                label=SteeringAngle(capture.steering.normalized + sign * side_correction),
                radar=radar,
                timestamp_ms=capture.t_ms,
                world_id=capture.world.world_id,
                augmentation=f"side:{cam}",
            ))
    return sample, extra


def _parallel_map(fn, items, threads):
    if threads <= 1 or len(items) <= 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=threads) as executor:
        return list(executor.map(fn, items))


def _evenly_spaced(items, count):
    if count >= len(items):
        return list(items)
    idx = np.unique(np.rint(np.linspace(0, len(items) - 1, count)).astype(int))
    return [items[i] for i in idx]


def build_dataset(worlds, policy, cfg, rig, rng, test_world=None, dt_ms=50, threads=1):
    """
    用专家策略驾驶，按固定周期采样，先按 80/20 划分训练/验证集再分别增强；
    另一个只含本车道障碍物的世界提供测试集

    Args:
        worlds (list): 训练世界，按顺序采集直到达到 collect_count
        policy (callable): 专家转向策略
        cfg (DatasetConfig): 数据集配置
        rig (CameraRig): 摄像头配置
        rng (Rng): 增强与划分使用的随机数发生器
        test_world (WorldState): 可选的测试世界
        dt_ms (int): 仿真步长
        threads (int): 渲染线程数

    Returns:
        Dataset: 带划分标记的样本集合
    """
    worlds = list(worlds)
    if not worlds:
        raise DatasetError("至少需要一个世界")
    captures = []
    for world in worlds:
        remaining = cfg.collect_count - len(captures)
        if remaining <= 0:
            break
        captures.extend(_collect(world, policy, cfg.record_period_ms, dt_ms, remaining))
    if not captures:
        raise EmptyRolloutError("专家驾驶没有产生任何样本")
    if len(captures) < cfg.collect_count:
        logger.warning(f"采集样本不足：需要 {cfg.collect_count}，实际 {len(captures)}")
    logger.info(f"采集到 {len(captures)} 个样本，开始渲染")

    rendered = _parallel_map(
        lambda c: _render_capture(c, rig, cfg.record_side_cameras, cfg.side_camera_correction),
        captures, threads,
    )
    # 先划分再增强，同一次采集的变换副本和侧摄像头画面只会留在它所在的划分里
    order = rng.child("split").permutation(len(rendered))
    n_train = int(round(cfg.train_fraction * len(rendered)))
    in_train = np.zeros(len(rendered), dtype=bool)
    in_train[order[:n_train]] = True

    aug_rng = rng.child("augment")
    samples, tags = [], []
    for split, keep in (("train", True), ("validation", False)):
        part = [sample for (sample, _), flag in zip(rendered, in_train) if flag == keep]
        if cfg.augment:
            part = part + [augment(s, aug_rng, cfg.augmentation) for s in part]
        samples.extend(part)
        tags.extend([split] * len(part))
    side_rows = [extra for (_, rows), flag in zip(rendered, in_train) if flag for extra in rows]
    samples += side_rows
    tags += ["train"] * len(side_rows)

    if test_world is not None and cfg.test_collect_count > 0:
        test_samples = _build_test_split(test_world, policy, cfg, rig, aug_rng, dt_ms, threads)
        samples += test_samples
        tags += ["test"] * len(test_samples)

    dataset = Dataset(tuple(samples), tuple(tags))
    logger.info(f"数据集构建完成: {dataset.counts()}")
    return dataset


def _build_test_split(world, policy, cfg, rig, rng, dt_ms, threads):
    limit = _full_road_limit(world, cfg.test_record_period_ms)
    captures = _collect(world, policy, cfg.test_record_period_ms, dt_ms, limit)
    counts = _parallel_map(
        lambda c: int(np.count_nonzero(label_raster(c.world, rig, "center") >= HAZARD_COLOR_BASE)),
        captures, threads,
    )
    candidates = [c for c, n in zip(captures, counts) if n >= cfg.min_hazard_pixels]
    if len(candidates) < cfg.test_collect_count:
        logger.warning(
            f"测试世界中含障碍物的画面不足：需要 {cfg.test_collect_count}，实际 {len(candidates)}"
        )
    if not candidates:
        raise EmptyRolloutError("测试世界中没有任何含障碍物的画面")
    chosen = _evenly_spaced(candidates, cfg.test_collect_count)
    rendered = _parallel_map(lambda c: _render_capture(c, rig, False, 0.0)[0], chosen, threads)
    if not cfg.augment:
        return rendered
    augmented = []
    for s in rendered:
        a = augment(s, rng, cfg.augmentation)
        if a.segmented.hazard_pixel_count() < 1:
            a = flip_sample(s)
        augmented.append(a)
    return rendered + augmented


def write_dataset(dataset, out_dir, export_frames=True):
    """写出清单 JSON、标签 CSV 以及(可选)逐帧 PPM"""
    frames_dir = os.path.join(out_dir, "frames")
    if export_frames:
        os.makedirs(frames_dir, exist_ok=True)
    entries = []
    for i, (s, tag) in enumerate(zip(dataset.samples, dataset.split_tags)):
        entry = {
            "index": i,
            "split": tag,
            "label": s.label.normalized,
            "timestamp_ms": int(s.timestamp_ms),
            "world_id": s.world_id,
            "augmentation": s.augmentation,
            "hazard_pixels": s.segmented.hazard_pixel_count(),
        }
        if export_frames:
            views = {"center": s.center, "segmented": s.segmented.image, "left": s.left, "right": s.right}
            for view, img in views.items():
                if img is None:
                    continue
                name = f"{i:05d}_{view}.ppm"
                write_ppm(os.path.join(frames_dir, name), img)
                entry[view] = f"frames/{name}"
        entries.append(entry)
    manifest = {"counts": dataset.counts(), "samples": entries}
    write_json(os.path.join(out_dir, "manifest.json"), manifest)
    columns = ["index", "split", "label", "timestamp_ms", "world_id", "augmentation", "hazard_pixels"]
    labels = pd.DataFrame([{k: e[k] for k in columns} for e in entries], columns=columns)
    labels.to_csv(os.path.join(out_dir, "labels.csv"), index=False, lineterminator="\n")
    logger.info(f"数据集已写出到 {out_dir}: {manifest['counts']}")
    return manifest
