import copy
import dataclasses
import logging
import os
from dataclasses import dataclass, field

from dotenv import load_dotenv

from controller import ConvSpec, DAVE2_DENSE, LayerSchedule, TrainConfig
from core_types import HazNavError, JsonPayloadError, read_json, write_json
from evaluation import EvalConfig
from synth_vision import AugmentConfig, CameraRig, DatasetConfig
from threat import ThreatConfig
from world_sim import RoadSegment, WorldConfig

# 加载环境变量
load_dotenv()

# 配置日志
logger = logging.getLogger(__name__)

EFFECTIVE_CONFIG_NAME = "effective_config.json"


class ConfigValidationError(HazNavError, ValueError):
    def __init__(self, errors):
        self.errors = list(errors)
        super().__init__("配置校验失败:\n" + "\n".join(f"  - {e}" for e in self.errors))


def _default_conv():
    return (
        ConvSpec(24, 5, 2, 0),
        ConvSpec(36, 5, 2, 0),
        ConvSpec(48, 5, 2, 0),
        ConvSpec(64, 3, 1, 1),
        ConvSpec(64, 3, 1, 1),
    )


@dataclass(frozen=True)
class ControllerConfig:
    """卷积层 (filters, kernel, stride, padding) 和全连接层宽度；输入尺寸由画面尺寸决定"""

    conv: tuple = field(default_factory=_default_conv)
    dense: tuple = DAVE2_DENSE

    def __post_init__(self):
        object.__setattr__(self, "conv", tuple(
            c if isinstance(c, ConvSpec) else ConvSpec(*c) for c in self.conv
        ))
        object.__setattr__(self, "dense", tuple(int(d) for d in self.dense))

    def to_dict(self):
        return {
            "conv": [[c.filters, c.kernel, c.stride, c.padding] for c in self.conv],
            "dense": list(self.dense),
        }


def _env_threads():
    return os.getenv("HAZNAV_THREADS", "1")


@dataclass(frozen=True)
class ExperimentConfig:
    seed: int = 7
    out: str = "out"
    training_world_count: int = 2
    threads: int = 1
    world: WorldConfig = field(default_factory=WorldConfig)
    camera: CameraRig = field(default_factory=CameraRig)
    threat: ThreatConfig = field(default_factory=ThreatConfig)
    controller: ControllerConfig = field(default_factory=ControllerConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    dataset: DatasetConfig = field(default_factory=DatasetConfig)
    eval: EvalConfig = field(default_factory=EvalConfig)

    @property
    def crop_top(self):
        return self.camera.height // 2

    def schedule(self):
        """网络输入为裁掉上半部分后的画面"""
        return LayerSchedule(
            input_height=self.camera.height - self.crop_top,
            input_width=self.camera.width,
            input_channels=3,
            crop_top=self.crop_top,
            conv=self.controller.conv,
            dense=self.controller.dense,
        )


SECTIONS = {
    "world": WorldConfig,
    "camera": CameraRig,
    "threat": ThreatConfig,
    "controller": ControllerConfig,
    "train": TrainConfig,
    "dataset": DatasetConfig,
    "eval": EvalConfig,
}

SCALARS = ("seed", "out", "training_world_count", "threads")


def _section_to_dict(obj):
    if hasattr(obj, "to_dict"):
        return obj.to_dict()
    data = {}
    for f in dataclasses.fields(obj):
        value = getattr(obj, f.name)
        if dataclasses.is_dataclass(value):
            value = _section_to_dict(value)
        elif isinstance(value, tuple):
            value = list(value)
        data[f.name] = value
    return data


def config_to_dict(cfg):
    data = {name: getattr(cfg, name) for name in SCALARS}
    for name in SECTIONS:
        data[name] = _section_to_dict(getattr(cfg, name))
    return data


def _type_error(value, default):
    if isinstance(default, bool):
        return None if isinstance(value, bool) else "应为布尔值"
    if isinstance(default, int):
        return None if isinstance(value, int) and not isinstance(value, bool) else "应为整数"
    if isinstance(default, float):
        ok = isinstance(value, (int, float)) and not isinstance(value, bool)
        return None if ok else "应为数值"
    if isinstance(default, str):
        return None if isinstance(value, str) else "应为字符串"
    if isinstance(default, tuple):
        return None if isinstance(value, (list, tuple)) else "应为列表"
    return None


def _convert(cls, key, value):
    if cls is DatasetConfig and key == "augmentation" and isinstance(value, dict):
        return _build_section(AugmentConfig, value, "dataset.augmentation", None)
    if cls is WorldConfig and key == "segments":
        return tuple(RoadSegment.from_dict(s) for s in value)
    if cls is ControllerConfig and key == "conv":
        return tuple(ConvSpec(*c) for c in value)
    if isinstance(value, list):
        return tuple(value)
    if isinstance(getattr(cls(), key), float) and isinstance(value, int):
        return float(value)
    return value


def _build_section(cls, data, path, errors):
    """
    逐字段校验并构造配置段

    每个字段单独代入默认配置检查一次，使所有出错字段都能被列出。
    """
    own_errors = [] if errors is None else errors
    if not isinstance(data, dict):
        own_errors.append(f"{path}: 应为对象")
        if errors is None:
            raise ConfigValidationError(own_errors)
        return None
    defaults = cls()
    names = {f.name for f in dataclasses.fields(cls)}
    kwargs = {}
    failed = False
    for key, value in data.items():
        if key not in names:
            own_errors.append(f"{path}.{key}: 未知字段")
            failed = True
            continue
        problem = _type_error(value, getattr(defaults, key))
        if problem:
            own_errors.append(f"{path}.{key}: {problem}，实际为 {value!r}")
            failed = True
            continue
        try:
            converted = _convert(cls, key, value)
            cls(**{key: converted})
        except (HazNavError, ValueError, TypeError, KeyError, AttributeError) as e:
            own_errors.append(f"{path}.{key}: {str(e)}")
            failed = True
            continue
        kwargs[key] = converted
    result = None
    if not failed:
        try:
            result = cls(**kwargs)
        except (HazNavError, ValueError, TypeError) as e:
            own_errors.append(f"{path}: {str(e)}")
    if errors is None and own_errors:
        raise ConfigValidationError(own_errors)
    return result


def _deep_merge(base, override):
    merged = copy.deepcopy(base)
    for key, value in override.items():
        if isinstance(value, dict) and isinstance(merged.get(key), dict):
            merged[key] = _deep_merge(merged[key], value)
        else:
            merged[key] = copy.deepcopy(value)
    return merged


def config_from_dict(data):
    """从字典构造实验配置，出错时一次列出所有违规字段"""
    errors = []
    if not isinstance(data, dict):
        raise ConfigValidationError(["配置根节点应为对象"])
    unknown = set(data) - set(SCALARS) - set(SECTIONS)
    errors.extend(f"{key}: 未知字段" for key in sorted(unknown))

    kwargs = {}
    threads = data.get("threads", _env_threads())
    try:
        kwargs["threads"] = int(threads)
        if kwargs["threads"] < 1:
            errors.append(f"threads: 至少为 1，实际为 {threads}")
    except (TypeError, ValueError):
        errors.append(f"threads: 应为整数，实际为 {threads!r}")
    if "seed" in data:
        seed = data["seed"]
        if not isinstance(seed, int) or isinstance(seed, bool) or seed < 0:
            errors.append(f"seed: 应为非负整数，实际为 {seed!r}")
        else:
            kwargs["seed"] = seed
    if "out" in data:
        if isinstance(data["out"], str) and data["out"]:
            kwargs["out"] = data["out"]
        else:
            errors.append(f"out: 应为非空字符串，实际为 {data['out']!r}")
    if "training_world_count" in data:
        count = data["training_world_count"]
        if isinstance(count, int) and not isinstance(count, bool) and count >= 1:
            kwargs["training_world_count"] = count
        else:
            errors.append(f"training_world_count: 应为正整数，实际为 {count!r}")

    for name, cls in SECTIONS.items():
        if name in data:
            section = _build_section(cls, data[name], name, errors)
            if section is not None:
                kwargs[name] = section

    if errors:
        raise ConfigValidationError(errors)
    return ExperimentConfig(**kwargs)


def validate_schedule(cfg):
    """
    按画面尺寸构造网络结构并检查每层输出尺寸

    只有要训练或运行网络的命令才调用；画面太小时报配置错误。
    """
    try:
        return cfg.schedule()
    except (HazNavError, ValueError) as e:
        raise ConfigValidationError([f"controller: {str(e)}"]) from e


def load_config(path=None, overrides=None):
    """
    解析实验配置，优先级：命令行参数 > 配置文件 > 环境变量 > 内置默认值

    Args:
        path (str): 可选的 JSON 配置文件
        overrides (dict): 命令行覆盖项，结构与配置文件相同

    Returns:
        ExperimentConfig: 校验后的配置
    """
    data = {}
    if path:
        try:
            data = read_json(path)
        except FileNotFoundError:
            raise ConfigValidationError([f"{path}: 配置文件不存在"]) from None
        except JsonPayloadError as e:
            raise ConfigValidationError([f"{path}: {str(e)}"]) from e
        logger.info(f"读取配置文件: {path}")
    merged = _deep_merge(data, overrides or {})
    return config_from_dict(merged)


def write_effective_config(cfg, out_dir):
    os.makedirs(out_dir, exist_ok=True)
    path = os.path.join(out_dir, EFFECTIVE_CONFIG_NAME)
    write_json(path, config_to_dict(cfg))
    return path
