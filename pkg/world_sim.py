import logging
import math
from dataclasses import dataclass, field, replace
from enum import Enum
from functools import cached_property

import numpy as np
import pandas as pd
from scipy.spatial import cKDTree

from core_types import (
    HazNavError,
    SteeringAngle,
    THETA_MAX_RAD,
    normalize_steering,
    steering_to_direction,
)

# 配置日志
logger = logging.getLogger(__name__)

# 坐标系约定：x 向东，y 向南，航向角顺时针为正；
# 因此正(向右)转向使航向角增大，横向偏移以左为正。

RADAR_RANGE_CM = 6000.0
RADAR_HALF_FOV_DEG = 45.0
SAMPLE_STEP_M = 0.25
TRAJECTORY_COLUMNS = ["t_ms", "lateral_m", "station_m", "direction_deg"]


class WorldConfigError(HazNavError, ValueError):
    pass


class InfeasiblePlacementError(WorldConfigError):
    def __init__(self, required_spacing_m, available_m, hazard_count):
        self.required_spacing_m = required_spacing_m
        self.available_m = available_m
        self.hazard_count = hazard_count
        super().__init__(
            f"无法放置 {hazard_count} 个障碍物：按最小间距需要 {required_spacing_m:.1f} m，"
            f"可用路段只有 {available_m:.1f} m"
        )


class RolloutError(HazNavError, ValueError):
    pass


class HazardKind(Enum):
    ROCK = "rock"
    WOODEN_BOX = "wooden_box"
    OIL_BARREL = "oil_barrel"
    WOODEN_PALLET = "wooden_pallet"
    PIPE_SECTION = "pipe_section"

    @property
    def color_id(self):
        return HAZARD_COLOR_BASE + list(HazardKind).index(self)

    @classmethod
    def from_color_id(cls, color_id):
        return list(cls)[color_id - HAZARD_COLOR_BASE]


HAZARD_COLOR_BASE = 10

# (沿朝向半长, 横向半宽, 高度)，单位米；高度都低于摄像头安装高度
HAZARD_GEOMETRY = {
    HazardKind.ROCK: (0.5, 0.5, 0.6),
    HazardKind.WOODEN_BOX: (0.6, 0.6, 0.8),
    HazardKind.OIL_BARREL: (0.45, 0.45, 1.0),
    HazardKind.WOODEN_PALLET: (0.8, 0.6, 0.2),
    HazardKind.PIPE_SECTION: (1.2, 0.35, 0.5),
}


@dataclass(frozen=True)
class RoadSegment:
    """直线段 curvature=0；圆弧段 curvature=±1/R，正值向右弯"""

    length: float
    curvature: float = 0.0

    def __post_init__(self):
        if not self.length > 0:
            raise WorldConfigError(f"路段长度必须为正: {self.length}")

    @classmethod
    def line(cls, length):
        return cls(float(length), 0.0)

    @classmethod
    def arc(cls, radius, angle_deg, direction="right"):
        if not radius > 0 or not angle_deg > 0:
            raise WorldConfigError(f"圆弧半径和转角必须为正: R={radius}, angle={angle_deg}")
        if direction not in ("left", "right"):
            raise WorldConfigError(f"圆弧方向只能是 left 或 right: {direction}")
        sign = 1.0 if direction == "right" else -1.0
        return cls(radius * math.radians(angle_deg), sign / radius)

    @classmethod
    def from_dict(cls, data):
        kind = data.get("kind")
        try:
            if kind == "line":
                return cls.line(data["length"])
            if kind == "arc":
                # length + curvature 优先，保证导出的配置能精确还原
                if "curvature" in data and "length" in data:
                    if data["curvature"] == 0:
                        raise WorldConfigError("圆弧段曲率不能为 0")
                    return cls(float(data["length"]), float(data["curvature"]))
                return cls.arc(data["radius"], data["angle_deg"], data.get("direction", "right"))
        except KeyError as e:
            raise WorldConfigError(f"路段缺少字段: {e}") from None
        raise WorldConfigError(f"未知的路段类型: {kind}")

    def to_dict(self):
        if self.curvature == 0.0:
            return {"kind": "line", "length": self.length}
        radius = 1.0 / abs(self.curvature)
        return {
            "kind": "arc",
            "length": self.length,
            "curvature": self.curvature,
            "radius": radius,
            "angle_deg": math.degrees(self.length / radius),
            "direction": "right" if self.curvature > 0 else "left",
        }


def default_segments(total_length=1663.0, curves=16, radius=60.0,
                     angles_deg=(45.0, 60.0, 90.0, 60.0)):
    """默认路线：16 段圆弧，转角循环取 45/60/90/60 度并交替方向，中间用等长直线连接"""
    arcs = [
        RoadSegment.arc(radius, angles_deg[i % len(angles_deg)], "right" if i % 2 == 0 else "left")
        for i in range(curves)
    ]
    straight = (total_length - sum(a.length for a in arcs)) / (curves + 1)
    if straight <= 0:
        raise WorldConfigError(f"路线长度 {total_length} m 容纳不下 {curves} 段圆弧")
    segments = [RoadSegment.line(straight)]
    for arc in arcs:
        segments.extend([arc, RoadSegment.line(straight)])
    return tuple(segments)


@dataclass(frozen=True)
class RoadSpec:
    segments: tuple
    lane_width: float = 3.70
    lanes_per_direction: int = 2
    origin: tuple = (0.0, 0.0, 0.0)

    def __post_init__(self):
        if not self.segments:
            raise WorldConfigError("道路至少需要一个路段")
        if not self.lane_width > 0:
            raise WorldConfigError(f"车道宽度必须为正: {self.lane_width}")
        if self.lanes_per_direction < 1:
            raise WorldConfigError(f"每方向车道数至少为 1: {self.lanes_per_direction}")
        object.__setattr__(self, "segments", tuple(self.segments))

    @property
    def total_length(self):
        return float(sum(s.length for s in self.segments))

    @property
    def half_width(self):
        return self.lanes_per_direction * self.lane_width

    @property
    def ego_lane_offset(self):
        """本车道(最外侧右车道)中心相对道路中线的横向偏移"""
        return -(self.lanes_per_direction - 0.5) * self.lane_width

    def lane_center(self, lane_index):
        """同向车道中心，0 为最靠近中线的车道"""
        return -(lane_index + 0.5) * self.lane_width

    @cached_property
    def _samples(self):
        x0, y0, h0 = self.origin
        xs, ys, hs, ss = [], [], [], []
        station = 0.0
        for seg in self.segments:
            n = max(1, int(math.ceil(seg.length / SAMPLE_STEP_M)))
            s = np.linspace(0.0, seg.length, n + 1)[:-1]
            k = seg.curvature
            h = h0 + k * s
            if k == 0.0:
                x = x0 + s * math.cos(h0)
                y = y0 + s * math.sin(h0)
            else:
                x = x0 + (np.sin(h) - math.sin(h0)) / k
                y = y0 + (math.cos(h0) - np.cos(h)) / k
            xs.append(x)
            ys.append(y)
            hs.append(h)
            ss.append(station + s)
            # 段末位姿，作为下一段起点（切线连续）
            h1 = h0 + k * seg.length
            if k == 0.0:
                x0, y0 = x0 + seg.length * math.cos(h0), y0 + seg.length * math.sin(h0)
            else:
                x0, y0 = x0 + (math.sin(h1) - math.sin(h0)) / k, y0 + (math.cos(h0) - math.cos(h1)) / k
            h0 = h1
            station += seg.length
        xs.append(np.array([x0]))
        ys.append(np.array([y0]))
        hs.append(np.array([h0]))
        ss.append(np.array([station]))
        points = np.column_stack([np.concatenate(xs), np.concatenate(ys)])
        return points, np.concatenate(hs), np.concatenate(ss)

    @cached_property
    def _tree(self):
        return cKDTree(self._samples[0])

    def project(self, points):
        """
        将世界坐标投影到道路坐标

        Args:
            points (array): (..., 2) 世界坐标

        Returns:
            tuple: (station, lateral)，横向偏移以左为正
        """
        pts = np.asarray(points, dtype=float)
        flat = pts.reshape(-1, 2)
        centers, headings, stations = self._samples
        _, idx = self._tree.query(flat)
        delta = flat - centers[idx]
        cos_h, sin_h = np.cos(headings[idx]), np.sin(headings[idx])
        along = delta[:, 0] * cos_h + delta[:, 1] * sin_h
        lateral = delta[:, 0] * sin_h - delta[:, 1] * cos_h
        shape = pts.shape[:-1]
        return (stations[idx] + along).reshape(shape), lateral.reshape(shape)

    def pose_at(self, station, lateral=0.0):
        """给定里程和横向偏移，返回 (x, y, heading)"""
        centers, headings, stations = self._samples
        s = float(np.clip(station, 0.0, stations[-1]))
        x = np.interp(s, stations, centers[:, 0])
        y = np.interp(s, stations, centers[:, 1])
        h = np.interp(s, stations, headings)
        return (
            float(x + lateral * math.sin(h)),
            float(y - lateral * math.cos(h)),
            float(h),
        )

    def to_dict(self):
        return {
            "segments": [s.to_dict() for s in self.segments],
            "lane_width": self.lane_width,
            "lanes_per_direction": self.lanes_per_direction,
            "origin": list(self.origin),
        }

    @classmethod
    def from_dict(cls, data):
        return cls(
            segments=tuple(RoadSegment.from_dict(s) for s in data["segments"]),
            lane_width=data.get("lane_width", 3.70),
            lanes_per_direction=data.get("lanes_per_direction", 2),
            origin=tuple(data.get("origin", (0.0, 0.0, 0.0))),
        )


@dataclass(frozen=True)
class HazardObject:
    hazard_id: int
    kind: HazardKind
    x: float
    y: float
    heading: float
    half_length: float
    half_width: float
    height: float

    def __post_init__(self):
        if not (self.half_length > 0 and self.half_width > 0 and self.height > 0):
            raise WorldConfigError(f"障碍物 {self.hazard_id} 的尺寸必须为正")

    @property
    def color_id(self):
        return self.kind.color_id

    @property
    def footprint(self):
        return (self.half_length, self.half_width)

    @classmethod
    def of_kind(cls, hazard_id, kind, x, y, heading):
        half_length, half_width, height = HAZARD_GEOMETRY[kind]
        return cls(hazard_id, kind, float(x), float(y), float(heading), half_length, half_width, height)

    def to_local(self, points):
        """世界坐标 → 障碍物自身坐标 (沿朝向, 向左)"""
        pts = np.asarray(points, dtype=float)
        dx, dy = pts[..., 0] - self.x, pts[..., 1] - self.y
        c, s = math.cos(self.heading), math.sin(self.heading)
        return dx * c + dy * s, dx * s - dy * c

    def to_dict(self):
        return {
            "hazard_id": self.hazard_id,
            "kind": self.kind.value,
            "x": self.x,
            "y": self.y,
            "heading": self.heading,
            "half_length": self.half_length,
            "half_width": self.half_width,
            "height": self.height,
        }

    @classmethod
    def from_dict(cls, data):
        return cls(
            data["hazard_id"], HazardKind(data["kind"]), data["x"], data["y"], data["heading"],
            data["half_length"], data["half_width"], data["height"],
        )


@dataclass(frozen=True)
class VehicleState:
    x: float
    y: float
    heading: float
    speed: float
    wheelbase: float = 2.5
    steering: SteeringAngle = field(default_factory=lambda: SteeringAngle(0.0))

    def __post_init__(self):
        if not self.speed >= 0:
            raise WorldConfigError(f"车速不能为负: {self.speed}")
        if not self.wheelbase > 0:
            raise WorldConfigError(f"轴距必须为正: {self.wheelbase}")

    @property
    def forward(self):
        return math.cos(self.heading), math.sin(self.heading)

    @property
    def left(self):
        return math.sin(self.heading), -math.cos(self.heading)

    def to_dict(self):
        return {
            "x": self.x, "y": self.y, "heading": self.heading, "speed": self.speed,
            "wheelbase": self.wheelbase, "steering": self.steering.normalized,
        }


@dataclass(frozen=True)
class WorldState:
    road: RoadSpec
    hazards: tuple
    vehicle: VehicleState
    world_id: str = "world"

    def with_vehicle(self, vehicle):
        return replace(self, vehicle=vehicle)

    def vehicle_frenet(self):
        station, lateral = self.road.project((self.vehicle.x, self.vehicle.y))
        return float(station), float(lateral)

    def hazard_frenet(self):
        if not self.hazards:
            return np.empty(0), np.empty(0)
        pts = np.array([(h.x, h.y) for h in self.hazards])
        return self.road.project(pts)

    def to_dict(self):
        return {
            "world_id": self.world_id,
            "road": self.road.to_dict(),
            "hazards": [h.to_dict() for h in self.hazards],
            "vehicle": self.vehicle.to_dict(),
        }

    @classmethod
    def from_dict(cls, data):
        v = data["vehicle"]
        vehicle = VehicleState(
            v["x"], v["y"], v["heading"], v["speed"], v["wheelbase"], SteeringAngle(v["steering"])
        )
        return cls(
            RoadSpec.from_dict(data["road"]),
            tuple(HazardObject.from_dict(h) for h in data["hazards"]),
            vehicle,
            data.get("world_id", "world"),
        )


@dataclass(frozen=True)
class WorldConfig:
    segments: tuple = field(default_factory=default_segments)
    lane_width: float = 3.70
    lanes_per_direction: int = 2
    hazard_count: int = 12
    min_spacing_m: float = 30.0
    hazard_start_m: float = 60.0
    hazard_end_margin_m: float = 20.0
    # random_lane: 训练世界，任意同向车道并带横向抖动；ego_center: 本车道中心
    hazard_placement: str = "random_lane"
    lateral_jitter_m: float = 0.5
    yaw_jitter_deg: float = 15.0
    speed_mps: float = 10.0
    wheelbase_m: float = 2.5
    dt_ms: int = 50
    start_station_m: float = 2.0
    vehicle_radius_m: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "segments", tuple(
            s if isinstance(s, RoadSegment) else RoadSegment.from_dict(s) for s in self.segments
        ))
        if self.hazard_count < 0:
            raise WorldConfigError(f"障碍物数量不能为负: {self.hazard_count}")
        if self.hazard_placement not in ("random_lane", "ego_center"):
            raise WorldConfigError(f"未知的障碍物放置方式: {self.hazard_placement}")
        if not self.min_spacing_m > 0:
            raise WorldConfigError(f"最小间距必须为正: {self.min_spacing_m}")
        if not self.speed_mps >= 0:
            raise WorldConfigError(f"车速不能为负: {self.speed_mps}")
        if not self.wheelbase_m > 0:
            raise WorldConfigError(f"轴距必须为正: {self.wheelbase_m}")
        if not self.dt_ms > 0:
            raise WorldConfigError(f"仿真步长必须为正: {self.dt_ms}")

    def road_spec(self):
        return RoadSpec(self.segments, self.lane_width, self.lanes_per_direction)

    def to_dict(self):
        return {
            "segments": [s.to_dict() for s in self.segments],
            "lane_width": self.lane_width,
            "lanes_per_direction": self.lanes_per_direction,
            "hazard_count": self.hazard_count,
            "min_spacing_m": self.min_spacing_m,
            "hazard_start_m": self.hazard_start_m,
            "hazard_end_margin_m": self.hazard_end_margin_m,
            "hazard_placement": self.hazard_placement,
            "lateral_jitter_m": self.lateral_jitter_m,
            "yaw_jitter_deg": self.yaw_jitter_deg,
            "speed_mps": self.speed_mps,
            "wheelbase_m": self.wheelbase_m,
            "dt_ms": self.dt_ms,
            "start_station_m": self.start_station_m,
            "vehicle_radius_m": self.vehicle_radius_m,
        }


def place_vehicle(road, station, lateral=None, speed=10.0, wheelbase=2.5):
    """把车辆放在指定里程处，默认位于本车道中心并与道路同向"""
    if lateral is None:
        lateral = road.ego_lane_offset
    x, y, h = road.pose_at(station, lateral)
    return VehicleState(x, y, h, speed, wheelbase)


def make_hazard(road, hazard_id, kind, station, lateral=None, yaw=0.0):
    if lateral is None:
        lateral = road.ego_lane_offset
    x, y, h = road.pose_at(station, lateral)
    return HazardObject.of_kind(hazard_id, kind, x, y, h + yaw)


def build_world(rng, spec, world_id="world"):
    """
    生成确定性的仿真世界

    障碍物里程 = 排序后的均匀抽样 + i × 最小间距，保证相邻障碍物间距不小于最小间距。

    Args:
        rng (Rng): 随机数发生器（由调用方按种子创建）
        spec (WorldConfig): 世界配置
        world_id (str): 世界标识

    Returns:
        WorldState: 不可变的世界状态
    """
    road = spec.road_spec()
    total = road.total_length
    n = spec.hazard_count
    hazards = []
    if n > 0:
        lo = spec.hazard_start_m
        available = total - spec.hazard_end_margin_m - lo
        required = (n - 1) * spec.min_spacing_m
        if available <= 0 or required > available:
            raise InfeasiblePlacementError(required, max(available, 0.0), n)
        offsets = np.sort(rng.uniform(0.0, available - required, n))
        stations = lo + offsets + spec.min_spacing_m * np.arange(n)
        kinds = list(HazardKind)
        for i, station in enumerate(stations):
            kind = kinds[int(rng.integers(0, len(kinds)))]
            if spec.hazard_placement == "ego_center":
                lateral = road.ego_lane_offset
                yaw = 0.0
            else:
                lane = int(rng.integers(0, spec.lanes_per_direction))
                lateral = road.lane_center(lane) + rng.uniform(-spec.lateral_jitter_m, spec.lateral_jitter_m)
                yaw = math.radians(rng.uniform(-spec.yaw_jitter_deg, spec.yaw_jitter_deg))
            hazards.append(make_hazard(road, i, kind, float(station), float(lateral), float(yaw)))
    vehicle = place_vehicle(road, spec.start_station_m, speed=spec.speed_mps, wheelbase=spec.wheelbase_m)
    logger.debug(f"生成世界 {world_id}: 道路 {total:.1f} m, 障碍物 {len(hazards)} 个")
    return WorldState(road, tuple(hazards), vehicle, world_id)


def step_vehicle(v, dt):
    """运动学自行车模型前进一步，dt 单位为秒，速度保持不变"""
    if not dt > 0:
        raise RolloutError(f"仿真步长必须为正: {dt}")
    delta = steering_to_direction(v.steering).radians
    fx, fy = v.forward
    distance = v.speed * dt
    return replace(
        v,
        x=v.x + distance * fx,
        y=v.y + distance * fy,
        heading=v.heading + (distance / v.wheelbase) * math.tan(delta),
    )


@dataclass(frozen=True)
class RadarDetection:
    hazard_id: int
    l_x_cm: float
    l_y_cm: float


@dataclass(frozen=True)
class RadarReading:
    detections: tuple = ()

    def __len__(self):
        return len(self.detections)

    def __iter__(self):
        return iter(self.detections)

    def hazard_ids(self):
        return [d.hazard_id for d in self.detections]


def radar_scan(w, max_range_cm=RADAR_RANGE_CM, half_fov_deg=RADAR_HALF_FOV_DEG):
    """中距模式雷达：在车辆坐标系下返回量程和视场内障碍物的纵向/横向距离(cm)"""
    v = w.vehicle
    fx, fy = v.forward
    lx_, ly_ = v.left
    half_fov = math.radians(half_fov_deg)
    detections = []
    for h in w.hazards:
        dx, dy = h.x - v.x, h.y - v.y
        longitudinal = dx * fx + dy * fy
        lateral = dx * lx_ + dy * ly_
        bearing = math.atan2(lateral, longitudinal)
        l_x = longitudinal * 100.0
        if l_x <= max_range_cm and abs(bearing) <= half_fov:
            detections.append(RadarDetection(h.hazard_id, max(l_x, 0.0), abs(lateral) * 100.0))
    return RadarReading(tuple(detections))


def collides(vehicle, hazard, radius=1.0):
    """车辆圆盘与障碍物矩形是否接触"""
    u, d = hazard.to_local((vehicle.x, vehicle.y))
    nu = min(max(float(u), -hazard.half_length), hazard.half_length)
    nd = min(max(float(d), -hazard.half_width), hazard.half_width)
    return math.hypot(float(u) - nu, float(d) - nd) <= radius


@dataclass(frozen=True, eq=False)
class Trajectory:
    t_ms: np.ndarray
    lateral_m: np.ndarray
    station_m: np.ndarray
    direction_deg: np.ndarray
    dt_ms: int
    terminated_early: bool = False
    left_road: bool = False
    reached_end: bool = False
    collisions: tuple = ()
    min_hazard_distance_m: tuple = ()

    def __len__(self):
        return len(self.t_ms)

    def to_frame(self):
        return pd.DataFrame({
            "t_ms": self.t_ms.astype(np.int64),
            "lateral_m": self.lateral_m,
            "station_m": self.station_m,
            "direction_deg": self.direction_deg,
        }, columns=TRAJECTORY_COLUMNS)

    @classmethod
    def from_frame(cls, df):
        missing = [c for c in TRAJECTORY_COLUMNS if c not in df.columns]
        if missing:
            raise RolloutError(f"轨迹 CSV 缺少列: {missing}")
        t = df["t_ms"].to_numpy(dtype=np.int64)
        dt = int(t[1] - t[0]) if len(t) > 1 else 0
        if len(t) > 1 and not np.all(np.diff(t) == dt):
            raise RolloutError("轨迹时间戳不是等间隔序列")
        return cls(
            t, df["lateral_m"].to_numpy(float), df["station_m"].to_numpy(float),
            df["direction_deg"].to_numpy(float), dt,
        )


def write_trajectory_csv(traj, path):
    traj.to_frame().to_csv(path, index=False, lineterminator="\n")


def read_trajectory_csv(path):
    return Trajectory.from_frame(pd.read_csv(path))


def rollout(w, controller, duration_ms, dt_ms, observer=None, collision_radius=1.0):
    """
    闭环仿真：策略输出转向 → 运动学步进，每步记录一个轨迹样本

    Args:
        w (WorldState): 初始世界
        controller (callable): 转向策略，输入 WorldState 返回 SteeringAngle
        duration_ms (int): 仿真时长
        dt_ms (int): 步长，必须整除时长
        observer (callable): 可选，每步调用 observer(t_ms, world, steering)

    Returns:
        Trajectory: 车辆驶出道路或到达终点时提前结束并标记
    """
    duration_ms, dt_ms = int(duration_ms), int(dt_ms)
    if dt_ms <= 0 or duration_ms <= 0:
        raise RolloutError(f"时长和步长必须为正: duration={duration_ms}, dt={dt_ms}")
    if duration_ms % dt_ms != 0:
        raise RolloutError(f"步长 {dt_ms} ms 不能整除时长 {duration_ms} ms")
    road = w.road
    ego = road.ego_lane_offset
    end_station = road.total_length - 1.0
    t_list, lat_list, sta_list, dir_list = [], [], [], []
    collisions = set()
    min_dist = [math.inf] * len(w.hazards)
    left_road = reached_end = False
    world = w
    for k in range(duration_ms // dt_ms):
        t_ms = k * dt_ms
        station, lateral = world.vehicle_frenet()
        steering = controller(world)
        t_list.append(t_ms)
        lat_list.append(lateral - ego)
        sta_list.append(station)
        dir_list.append(steering_to_direction(steering).degrees)
        if observer is not None:
            observer(t_ms, world, steering)
        vehicle = step_vehicle(replace(world.vehicle, steering=steering), dt_ms / 1000.0)
        world = world.with_vehicle(vehicle)
        for i, h in enumerate(world.hazards):
            min_dist[i] = min(min_dist[i], math.hypot(h.x - vehicle.x, h.y - vehicle.y))
            if collides(vehicle, h, collision_radius):
                collisions.add(h.hazard_id)
        station, lateral = world.vehicle_frenet()
        if abs(lateral) > road.half_width:
            left_road = True
            logger.info(f"车辆在 {t_ms + dt_ms} ms 驶出道路 (横向 {lateral:.2f} m)，提前结束")
            break
        if station >= end_station:
            reached_end = True
            logger.debug(f"车辆在 {t_ms + dt_ms} ms 到达道路终点")
            break
    return Trajectory(
        np.asarray(t_list, dtype=np.int64),
        np.asarray(lat_list, dtype=float),
        np.asarray(sta_list, dtype=float),
        np.asarray(dir_list, dtype=float),
        dt_ms,
        terminated_early=left_road or reached_end,
        left_road=left_road,
        reached_end=reached_end,
        collisions=tuple(sorted(collisions)),
        min_hazard_distance_m=tuple(min_dist),
    )


class ExpertPolicy:
    """
    脚本化的专家驾驶员：纯跟踪(pure pursuit)跟随本车道中心线

    本车道内有障碍物位于前方 bypass_ahead_m 到后方 bypass_behind_m 之间时，
    目标横向位置向左偏移 bypass_lanes 个车道宽度。
    """

    def __init__(self, lookahead_min_m=6.0, lookahead_gain_s=0.8, bypass_lanes=1.5,
                 bypass_ahead_m=40.0, bypass_behind_m=10.0, theta_max_rad=THETA_MAX_RAD):
        self.lookahead_min_m = lookahead_min_m
        self.lookahead_gain_s = lookahead_gain_s
        self.bypass_lanes = bypass_lanes
        self.bypass_ahead_m = bypass_ahead_m
        self.bypass_behind_m = bypass_behind_m
        self.theta_max_rad = theta_max_rad

    def target_offset(self, world, station):
        road = world.road
        ego = road.ego_lane_offset
        h_station, h_lateral = world.hazard_frenet()
        for s_h, d_h in zip(h_station, h_lateral):
            in_lane = abs(d_h - ego) <= road.lane_width / 2
            if in_lane and -self.bypass_behind_m <= s_h - station <= self.bypass_ahead_m:
                return ego + self.bypass_lanes * road.lane_width
        return ego

    def __call__(self, world):
        v = world.vehicle
        station, _ = world.vehicle_frenet()
        lookahead = max(self.lookahead_min_m, self.lookahead_gain_s * v.speed)
        tx, ty, _ = world.road.pose_at(station + lookahead, self.target_offset(world, station))
        dx, dy = tx - v.x, ty - v.y
        lx_, ly_ = v.left
        right = -(dx * lx_ + dy * ly_)
        dist_sq = max(dx * dx + dy * dy, 1e-9)
        delta = math.atan(v.wheelbase * 2.0 * right / dist_sq)
        return normalize_steering(delta, -self.theta_max_rad, self.theta_max_rad)


def zero_policy(world):
    return SteeringAngle(0.0)
