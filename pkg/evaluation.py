import logging
import math
from contextlib import contextmanager
from dataclasses import dataclass, field, replace
from enum import Enum

import numpy as np
import pandas as pd
from scipy.special import betainc

from controller import TrainingData, init_net, predict, predict_steering, train
from core_types import HazNavError, Rng, derive_seed
from synth_vision import build_dataset, normalize_image, render_with_segmentation
from threat import fuse, threat_from_radar, threat_pixel
from world_sim import ExpertPolicy, build_world, place_vehicle, radar_scan, rollout

# 配置日志
logger = logging.getLogger(__name__)

CASE_COLUMNS = [
    "case", "rmse", "mae", "improvement_pct", "improvement_direction", "trajectory_rmse",
    "t_stat", "df", "p_value", "reject", "collisions", "left_road", "closed_loop_status",
    "best_epoch", "epochs_run",
]

# 闭环比较状态
CLOSED_LOOP_OK = "ok"
CLOSED_LOOP_INCOMPLETE = "incomplete_window"
CLOSED_LOOP_NO_T_TEST = "t_test_undefined"


class SequenceLengthError(HazNavError, ValueError):
    pass


class ZeroBaselineError(HazNavError, ValueError):
    pass


class ZeroVarianceError(HazNavError, ValueError):
    pass


class TrajectoryOverlapError(HazNavError, ValueError):
    pass


class StageError(HazNavError):
    def __init__(self, stage, cause):
        self.stage = stage
        self.cause = cause
        super().__init__(f"[{stage}] {type(cause).__name__}: {cause}")


class CaseId(Enum):
    CASE1 = 1  # 只用原始画面
    CASE2 = 2  # 雷达威胁值 + 分割融合
    CASE3 = 3  # 像素威胁值 + 分割融合

    @property
    def label(self):
        return f"case{self.value}"

    @classmethod
    def from_value(cls, value):
        try:
            return cls(int(value))
        except (ValueError, TypeError):
            raise ValueError(f"工况编号只能是 1、2、3: {value}") from None


@contextmanager
def stage(name):
    """把阶段内的异常包装成带阶段标记的 StageError"""
    logger.info(f"开始阶段: {name}")
    try:
        yield
    except StageError:
        raise
    except Exception as e:
        logger.error(f"阶段 {name} 失败: {str(e)}", exc_info=True)
        raise StageError(name, e) from e


def case_threat(case, segmented, radar, threat_cfg=None):
    if case is CaseId.CASE2:
        return threat_from_radar(radar, threat_cfg)
    if case is CaseId.CASE3:
        return threat_pixel(segmented)
    return None


def prepare_input(case, frame, segmented, radar, threat_cfg=None, crop_top=None):
    """按工况组装网络输入：工况 2/3 先按威胁值融合分割图，再裁剪归一化"""
    t = case_threat(case, segmented, radar, threat_cfg)
    if t is not None:
        frame = fuse(frame, segmented, t)
    return normalize_image(frame, crop_top)


def prepare_sample(case, sample, threat_cfg=None, crop_top=None):
    return prepare_input(case, sample.center, sample.segmented, sample.radar, threat_cfg, crop_top)


def case_arrays(case, samples, threat_cfg=None, crop_top=None):
    if not samples:
        return None, np.empty(0)
    # 训练数组统一按 float32 存放
    x = np.stack([prepare_sample(case, s, threat_cfg, crop_top).data for s in samples], dtype=np.float32)
    y = np.array([s.label.normalized for s in samples], dtype=np.float64)
    return x, y


def training_arrays(case, dataset, threat_cfg=None, crop_top=None):
    train_x, train_y = case_arrays(case, dataset.split("train"), threat_cfg, crop_top)
    val_x, val_y = case_arrays(case, dataset.split("validation"), threat_cfg, crop_top)
    return TrainingData(train_x, train_y, val_x, val_y)


class ControllerPolicy:
    """把训练好的网络包装成闭环转向策略：渲染 → 组装输入 → 预测"""

    def __init__(self, net, case, rig, threat_cfg=None, crop_top=None):
        self.net = net
        self.case = case
        self.rig = rig
        self.threat_cfg = threat_cfg
        self.crop_top = crop_top

    def __call__(self, world):
        frame, segmented = render_with_segmentation(world, self.rig, "center")
        x = prepare_input(self.case, frame, segmented, radar_scan(world), self.threat_cfg, self.crop_top)
        return predict_steering(self.net, x)


def _paired(ground, pred):
    g = np.asarray(ground, dtype=np.float64).reshape(-1)
    p = np.asarray(pred, dtype=np.float64).reshape(-1)
    if g.size == 0 or g.size != p.size:
        raise SequenceLengthError(f"序列长度必须相同且不为 0: {g.size} vs {p.size}")
    return g, p


def rmse(ground, pred):
    g, p = _paired(ground, pred)
    return float(math.sqrt(np.mean((g - p) ** 2)))


def mae(ground, pred):
    g, p = _paired(ground, pred)
    return float(np.mean(np.abs(g - p)))


def improvement(rmse_case, rmse_case1):
    """相对工况 1 的改进百分比 |RMSE - RMSE_case1| / RMSE_case1 × 100，方向另行报告"""
    if not rmse_case1 > 0:
        raise ZeroBaselineError(f"基准 RMSE 必须为正: {rmse_case1}")
    return abs(rmse_case - rmse_case1) / rmse_case1 * 100.0


def improvement_direction(rmse_case, rmse_case1):
    if rmse_case < rmse_case1:
        return "better"
    if rmse_case > rmse_case1:
        return "worse"
    return "same"


def aligned_lateral(ground, test, window_ms=None):
    """
    把测试轨迹按线性插值对齐到真值的时间网格上

    比较区间是真值轨迹落在窗口内的那一段，测试轨迹必须完整覆盖它；
    提前结束(例如驶出道路)而没有覆盖到的，抛出 TrajectoryOverlapError。

    Returns:
        tuple: (真值横向偏移, 测试横向偏移)
    """
    if len(ground) == 0 or len(test) == 0:
        raise TrajectoryOverlapError("轨迹为空")
    keep = np.ones(len(ground), dtype=bool)
    if window_ms is not None:
        keep = (ground.t_ms >= window_ms[0]) & (ground.t_ms <= window_ms[1])
    if not np.any(keep):
        raise TrajectoryOverlapError(f"真值轨迹与比较窗口没有重叠: {window_ms}")
    t = ground.t_ms[keep]
    if test.t_ms[0] > t[0] or test.t_ms[-1] < t[-1]:
        raise TrajectoryOverlapError(
            f"测试轨迹 [{test.t_ms[0]}, {test.t_ms[-1]}] ms 没有覆盖比较区间 [{t[0]}, {t[-1]}] ms"
        )
    return ground.lateral_m[keep], np.interp(t, test.t_ms, test.lateral_m)


def trajectory_rmse(ground, test, window_ms=None):
    g, c = aligned_lateral(ground, test, window_ms)
    return rmse(g, c)


@dataclass(frozen=True)
class TTestResult:
    t: float
    df: int
    p: float
    reject: bool


def paired_t_test(ground, case, alpha=0.05):
    """
    配对 t 检验，d = case - ground，双侧 p 值由正则化不完全 beta 函数给出：
    p = I_{df/(df+t^2)}(df/2, 1/2)
    """
    g, c = _paired(ground, case)
    n = g.size
    if n < 2:
        raise SequenceLengthError(f"配对 t 检验至少需要 2 个样本: {n}")
    d = c - g
    sd = float(np.std(d, ddof=1))
    if sd == 0.0:
        raise ZeroVarianceError("差值方差为 0，t 统计量无定义")
    t = float(np.mean(d)) / (sd / math.sqrt(n))
    df = n - 1
    p = float(betainc(df / 2.0, 0.5, df / (df + t * t)))
    return TTestResult(t, df, p, p < alpha)


@dataclass(frozen=True)
class EvalConfig:
    window_before_ms: int = 5000
    window_after_ms: int = 5000
    alpha: float = 0.05
    hazard_count: int = 3
    lead_in_m: float = 100.0
    duration_ms: int = 20000

    def __post_init__(self):
        if self.window_before_ms < 0 or self.window_after_ms < 0:
            raise ValueError("比较窗口不能为负")
        if not 0 < self.alpha < 1:
            raise ValueError(f"显著性水平必须在 (0, 1) 内: {self.alpha}")
        if self.hazard_count < 1:
            raise ValueError(f"评估世界至少需要 1 个障碍物: {self.hazard_count}")
        if self.duration_ms <= 0 or self.lead_in_m < 0:
            raise ValueError("评估时长必须为正，引入距离不能为负")

    def to_dict(self):
        return {
            "window_before_ms": self.window_before_ms,
            "window_after_ms": self.window_after_ms,
            "alpha": self.alpha,
            "hazard_count": self.hazard_count,
            "lead_in_m": self.lead_in_m,
            "duration_ms": self.duration_ms,
        }


@dataclass
class CaseResult:
    case: str
    rmse: float
    mae: float
    improvement_pct: float
    improvement_direction: str
    trajectory_rmse: float | None = None
    t_stat: float | None = None
    df: int | None = None
    p_value: float | None = None
    reject: bool | None = None
    collisions: list = field(default_factory=list)
    left_road: bool = False
    closed_loop_status: str = CLOSED_LOOP_OK
    best_epoch: int | None = None
    epochs_run: int = 0

    def to_dict(self):
        return {c: getattr(self, c) for c in CASE_COLUMNS}


@dataclass
class EvalReport:
    seed: int
    counts: dict
    window_ms: list
    cases: list
    ground_truth: dict
    trajectories: dict = field(default_factory=dict)
    histories: dict = field(default_factory=dict)

    def to_dict(self):
        return {
            "seed": self.seed,
            "counts": self.counts,
            "window_ms": self.window_ms,
            "cases": [c.to_dict() for c in self.cases],
            "ground_truth": self.ground_truth,
        }

    def case_frame(self):
        return pd.DataFrame([c.to_dict() for c in self.cases], columns=CASE_COLUMNS)

    def case(self, label):
        for c in self.cases:
            if c.case == label:
                return c
        raise KeyError(label)


def _derived_world(cfg, placement, hazard_count):
    return replace(cfg.world, hazard_placement=placement, hazard_count=hazard_count)


def _eval_start(world, cfg):
    stations, _ = world.hazard_frenet()
    first = float(np.min(stations))
    start = max(0.0, first - cfg.eval.lead_in_m)
    vehicle = place_vehicle(world.road, start, speed=cfg.world.speed_mps, wheelbase=cfg.world.wheelbase_m)
    return world.with_vehicle(vehicle), first


def _comparison_window(ground, hazard_station, cfg):
    t_star = int(ground.t_ms[int(np.argmin(np.abs(ground.station_m - hazard_station)))])
    return [max(0, t_star - cfg.eval.window_before_ms), t_star + cfg.eval.window_after_ms]


def experiment_worlds(cfg):
    """
    由主种子派生训练世界、测试世界和闭环评估世界

    第一个训练世界的种子名为 "world"，之后依次为 "world:1"、"world:2"……；
    测试与评估世界的障碍物都放在本车道中心。
    """
    master = cfg.seed
    train_worlds = [
        build_world(Rng(derive_seed(master, "world" if i == 0 else f"world:{i}")), cfg.world, f"train{i}")
        for i in range(cfg.training_world_count)
    ]
    test_world = build_world(
        Rng(derive_seed(master, "test_world")),
        _derived_world(cfg, "ego_center", cfg.dataset.test_hazard_count), "test",
    )
    eval_world = build_world(
        Rng(derive_seed(master, "eval_world")),
        _derived_world(cfg, "ego_center", cfg.eval.hazard_count), "eval",
    )
    return train_worlds, test_world, eval_world


def experiment_dataset(cfg, train_worlds, test_world, keep_side_frames=True):
    dataset_cfg = cfg.dataset if keep_side_frames else replace(cfg.dataset, record_side_cameras=False)
    return build_dataset(
        train_worlds, ExpertPolicy(), dataset_cfg, cfg.camera, Rng(derive_seed(cfg.seed, "dataset")),
        test_world, dt_ms=cfg.world.dt_ms, threads=cfg.threads,
    )


def train_case(cfg, case, dataset):
    """三个工况共用同一个初始化种子，只有输入组装方式不同"""
    data = training_arrays(case, dataset, cfg.threat, cfg.camera.height // 2)
    net = init_net(cfg.schedule(), Rng(derive_seed(cfg.seed, "init")))
    result = train(net, data, cfg.train, Rng(derive_seed(cfg.seed, f"train_{case.label}")))
    logger.info(f"{case.label} 训练完成，最优轮次 {result.best_epoch}")
    return result


def compare_closed_loop(result, ground, traj, window, alpha=0.05):
    """
    在比较窗口内对比工况轨迹与真值轨迹，结果写回 result

    轨迹没有覆盖窗口时不计算轨迹 RMSE；差值方差为 0 时只有 t 检验留空。
    closed_loop_status 记录是哪一种情况，并出现在汇总表里。
    """
    try:
        g, c = aligned_lateral(ground, traj, window)
    except TrajectoryOverlapError as e:
        result.closed_loop_status = CLOSED_LOOP_INCOMPLETE
        logger.warning(f"{result.case} 闭环轨迹没有覆盖比较窗口，不计算轨迹 RMSE: {str(e)}")
        return result
    result.trajectory_rmse = rmse(g, c)
    try:
        tt = paired_t_test(g, c, alpha)
    except (SequenceLengthError, ZeroVarianceError) as e:
        result.closed_loop_status = CLOSED_LOOP_NO_T_TEST
        logger.warning(f"{result.case} 无法做配对 t 检验: {str(e)}")
        return result
    result.t_stat, result.df, result.p_value, result.reject = tt.t, tt.df, tt.p, tt.reject
    result.closed_loop_status = CLOSED_LOOP_OK
    return result


def run_cases(cfg):
    """
    完整的三工况实验：构建数据集，分别训练三个控制器，
    在测试集上做开环评估，在新的障碍物世界中做闭环评估

    Args:
        cfg (ExperimentConfig): 实验配置，主种子派生所有子种子

    Returns:
        EvalReport: 不含时间戳的确定性报告
    """
    master = cfg.seed
    crop_top = cfg.camera.height // 2
    expert = ExpertPolicy()

    with stage("world"):
        train_worlds, test_world, eval_world = experiment_worlds(cfg)

    with stage("dataset"):
        dataset = experiment_dataset(cfg, train_worlds, test_world, keep_side_frames=False)
        test_samples = dataset.split("test")
        if not test_samples:
            raise SequenceLengthError("测试集为空")
        ground_labels = np.array([s.label.normalized for s in test_samples])

    nets, histories, cases = {}, {}, []
    for case in CaseId:
        with stage(f"train:{case.label}"):
            result = train_case(cfg, case, dataset)
            nets[case] = result.net
            histories[case.label] = result.history

    with stage("open_loop"):
        open_loop = {}
        for case in CaseId:
            x, _ = case_arrays(case, test_samples, cfg.threat, crop_top)
            pred = np.clip(predict(nets[case], x), -0.5, 0.5)
            open_loop[case] = (rmse(ground_labels, pred), mae(ground_labels, pred))
        baseline = open_loop[CaseId.CASE1][0]
        for case in CaseId:
            r, m = open_loop[case]
            history = histories[case.label]
            best = next((h.epoch for h in history if h.best_flag), None)
            cases.append(CaseResult(
                case.label, r, m, improvement(r, baseline), improvement_direction(r, baseline),
                best_epoch=best, epochs_run=len(history),
            ))

    with stage("closed_loop"):
        world, first_station = _eval_start(eval_world, cfg)
        duration = cfg.eval.duration_ms
        ground = rollout(world, expert, duration, cfg.world.dt_ms)
        window = _comparison_window(ground, first_station, cfg)
        trajectories = {"ground_truth": ground}
        for result, case in zip(cases, CaseId):
            policy = ControllerPolicy(nets[case], case, cfg.camera, cfg.threat, crop_top)
            traj = rollout(world, policy, duration, cfg.world.dt_ms)
            trajectories[case.label] = traj
            result.collisions = list(traj.collisions)
            result.left_road = traj.left_road
            compare_closed_loop(result, ground, traj, window, cfg.eval.alpha)

    report = EvalReport(
        seed=master,
        counts=dataset.counts(),
        window_ms=window,
        cases=cases,
        ground_truth={"collisions": list(ground.collisions), "left_road": ground.left_road,
                      "samples": len(ground)},
        trajectories=trajectories,
        histories=histories,
    )
    logger.info("三工况评估完成")
    return report


def run_seeds(seeds, cfg):
    """多个主种子下重复实验，返回各自的报告和中位数汇总"""
    reports = [run_cases(replace(cfg, seed=int(s))) for s in seeds]
    rows = [dict(c.to_dict(), seed=r.seed) for r in reports for c in r.cases]
    frame = pd.DataFrame(rows)
    metrics = ["rmse", "mae", "trajectory_rmse"]
    frame[metrics] = frame[metrics].apply(pd.to_numeric)
    medians = frame.groupby("case")[metrics].median()
    # 轨迹没有覆盖比较窗口的种子不参与轨迹 RMSE 中位数，单独计数
    medians["incomplete_runs"] = frame.groupby("case")["closed_loop_status"].agg(
        lambda s: int((s == CLOSED_LOOP_INCOMPLETE).sum())
    )
    return reports, medians

