import hashlib
import json
import logging
import math
from dataclasses import dataclass

import numpy as np

# 配置日志
logger = logging.getLogger(__name__)

RAW = "raw"
NORMALIZED = "normalized"
VALUE_RANGES = {RAW: (0.0, 255.0), NORMALIZED: (-1.0, 1.0)}
STORAGE_DTYPES = {"float32": np.float32, "float64": np.float64}

STEERING_LIMIT = 0.5
DIRECTION_SCALE_DEG = 50.0
# 原始转向角的默认归一化区间：±25°
THETA_MIN_RAD = math.radians(-25.0)
THETA_MAX_RAD = math.radians(25.0)

PPM_MAGIC = b"P6"
PPM_MAXVAL = 255
MAX_IMAGE_DIMENSION = 16384
_PPM_WHITESPACE = b" \t\r\n\x0b\x0c"

MASK64 = (1 << 64) - 1


class HazNavError(Exception):
    """项目内所有可预期错误的基类"""


class ImageRangeError(HazNavError, ValueError):
    pass


class ImageCodecError(HazNavError, ValueError):
    pass


class MalformedHeaderError(ImageCodecError):
    pass


class TruncatedPayloadError(ImageCodecError):
    pass


class DimensionOverflowError(ImageCodecError):
    pass


class JsonPayloadError(HazNavError, ValueError):
    pass


@dataclass(frozen=True)
class ImageTensor:
    """
    H×W×3 图像，构造后只读

    渲染帧默认按 float32 存储；融合结果按 float64 存储，线性组合不再经过一次舍入。
    """

    data: np.ndarray
    value_range: str = RAW
    dtype: str = "float32"

    def __post_init__(self):
        if self.value_range not in VALUE_RANGES:
            raise ImageRangeError(f"未知的取值范围标记: {self.value_range}")
        if self.dtype not in STORAGE_DTYPES:
            raise ImageRangeError(f"不支持的存储精度: {self.dtype}")
        arr = np.array(self.data, dtype=STORAGE_DTYPES[self.dtype])
        if arr.ndim != 3 or arr.shape[2] != 3:
            raise ImageRangeError(f"图像形状必须为 (H, W, 3)，实际为 {arr.shape}")
        if arr.shape[0] < 1 or arr.shape[1] < 1:
            raise ImageRangeError(f"图像尺寸必须为正: {arr.shape}")
        lo, hi = VALUE_RANGES[self.value_range]
        if not np.all(np.isfinite(arr)) or arr.min() < lo or arr.max() > hi:
            raise ImageRangeError(
                f"像素值超出声明范围 {self.value_range} [{lo}, {hi}]"
            )
        arr.setflags(write=False)
        object.__setattr__(self, "data", arr)

    @property
    def height(self):
        return self.data.shape[0]

    @property
    def width(self):
        return self.data.shape[1]

    @property
    def channels(self):
        return self.data.shape[2]

    @property
    def shape(self):
        return self.data.shape

    @classmethod
    def filled(cls, height, width, value=0.0, value_range=RAW):
        return cls(np.full((height, width, 3), value, dtype=np.float32), value_range)

    def same_pixels(self, other):
        return (
            self.value_range == other.value_range
            and self.shape == other.shape
            and np.array_equal(self.data, other.data)
        )


@dataclass(frozen=True)
class SteeringAngle:
    """归一化转向值，正值向右，构造时截断到 [-0.5, +0.5]"""

    normalized: float
    raw: float | None = None

    def __post_init__(self):
        value = float(self.normalized)
        if not math.isfinite(value):
            raise ValueError(f"转向值必须是有限数: {self.normalized}")
        object.__setattr__(
            self, "normalized", min(STEERING_LIMIT, max(-STEERING_LIMIT, value))
        )
        if self.raw is not None:
            object.__setattr__(self, "raw", float(self.raw))

    @classmethod
    def from_raw(cls, raw_rad, theta_min=THETA_MIN_RAD, theta_max=THETA_MAX_RAD):
        return normalize_steering(raw_rad, theta_min, theta_max)

    def negated(self):
        raw = None if self.raw is None else -self.raw
        return SteeringAngle(-self.normalized, raw)


@dataclass(frozen=True)
class DrivingDirection:
    degrees: float

    def __post_init__(self):
        value = float(self.degrees)
        limit = STEERING_LIMIT * DIRECTION_SCALE_DEG
        if not math.isfinite(value) or abs(value) > limit:
            raise ValueError(f"行驶方向必须在 [-{limit}, {limit}] 度之间: {self.degrees}")
        object.__setattr__(self, "degrees", value)

    @property
    def radians(self):
        return math.radians(self.degrees)


def normalize_steering(raw_rad, theta_min=THETA_MIN_RAD, theta_max=THETA_MAX_RAD):
    """
    将原始转向角(弧度)线性映射到 [-0.5, +0.5]

    Args:
        raw_rad (float): 仿真中记录的原始转向角
        theta_min (float): 映射区间下界
        theta_max (float): 映射区间上界

    Returns:
        SteeringAngle: 截断后的归一化转向值，raw 保留输入
    """
    if not theta_max > theta_min:
        raise ValueError(f"转向区间无效: [{theta_min}, {theta_max}]")
    ratio = (float(raw_rad) - theta_min) / (theta_max - theta_min)
    return SteeringAngle(-STEERING_LIMIT + max(0.0, min(1.0, ratio)), raw=raw_rad)


def steering_to_direction(s):
    return DrivingDirection(DIRECTION_SCALE_DEG * s.normalized)


def direction_to_steering(direction):
    return SteeringAngle(direction.degrees / DIRECTION_SCALE_DEG)


def derive_seed(master, name):
    """子模块种子 = blake2b("{master}:{name}") 前 8 字节（小端）"""
    digest = hashlib.blake2b(f"{int(master)}:{name}".encode("utf-8"), digest_size=8)
    return int.from_bytes(digest.digest(), "little")


class Rng:
    """
    可复现的随机数发生器

    底层是 numpy 的 Philox4x64-10 计数器型发生器，密钥直接取 64 位种子，
    计数器从 0 开始；相同种子在任何平台上产生相同的序列。
    """

    def __init__(self, seed):
        self.seed = int(seed) & MASK64
        self._generator = np.random.Generator(np.random.Philox(key=self.seed))

    def child(self, name):
        return Rng(derive_seed(self.seed, name))

    def random(self, size=None):
        return self._generator.random(size)

    def uniform(self, low=0.0, high=1.0, size=None):
        return self._generator.uniform(low, high, size)

    def integers(self, low, high=None, size=None):
        return self._generator.integers(low, high, size)

    def normal(self, loc=0.0, scale=1.0, size=None):
        return self._generator.normal(loc, scale, size)

    def permutation(self, n):
        return self._generator.permutation(n)

    def __repr__(self):
        return f"Rng(seed={self.seed})"


def quantize(img):
    """量化到 8 位：四舍六入五成双后截断到 [0, 255]"""
    if img.value_range != RAW:
        raise ImageRangeError("只有原始范围的图像才能量化")
    return np.clip(np.rint(img.data), 0, 255).astype(np.uint8)


def encode_image(img):
    """将图像编码为 P6 格式的字节串"""
    pixels = quantize(img)
    header = f"P6\n{img.width} {img.height}\n{PPM_MAXVAL}\n".encode("ascii")
    return header + pixels.tobytes()


def _read_header_tokens(buf, count):
    tokens = []
    pos = 0
    n = len(buf)
    while len(tokens) < count:
        # 跳过空白和注释
        while pos < n:
            ch = buf[pos:pos + 1]
            if ch in _PPM_WHITESPACE:
                pos += 1
            elif ch == b"#":
                end = buf.find(b"\n", pos)
                pos = n if end < 0 else end + 1
            else:
                break
        if pos >= n:
            raise MalformedHeaderError(f"文件头不完整，只读到 {len(tokens)} 个字段")
        start = pos
        while pos < n and buf[pos:pos + 1] not in _PPM_WHITESPACE and buf[pos:pos + 1] != b"#":
            pos += 1
        tokens.append(buf[start:pos])
    # 最大值后面必须紧跟一个空白字符
    if pos >= n or buf[pos:pos + 1] not in _PPM_WHITESPACE:
        raise MalformedHeaderError("文件头结束处缺少分隔空白")
    return tokens, pos + 1


def decode_image(buf):
    """
    解析 P6 字节串

    Returns:
        ImageTensor: 原始范围的图像
    """
    buf = bytes(buf)
    tokens, offset = _read_header_tokens(buf, 4)
    magic, *fields = tokens
    if magic != PPM_MAGIC:
        raise MalformedHeaderError(f"不支持的格式标记: {magic!r}")
    if not all(f.isdigit() for f in fields):
        raise MalformedHeaderError(f"文件头字段不是十进制整数: {fields}")
    width, height, maxval = (int(f) for f in fields)
    if maxval != PPM_MAXVAL:
        raise MalformedHeaderError(f"最大值必须为 {PPM_MAXVAL}，实际为 {maxval}")
    if width > MAX_IMAGE_DIMENSION or height > MAX_IMAGE_DIMENSION:
        raise DimensionOverflowError(
            f"图像尺寸 {width}x{height} 超过上限 {MAX_IMAGE_DIMENSION}"
        )
    if width < 1 or height < 1:
        raise MalformedHeaderError(f"图像尺寸必须为正: {width}x{height}")
    expected = width * height * 3
    payload = buf[offset:offset + expected]
    if len(payload) < expected:
        raise TruncatedPayloadError(f"像素数据不足：需要 {expected} 字节，实际 {len(payload)}")
    if len(buf) > offset + expected:
        logger.debug(f"忽略文件尾部多余的 {len(buf) - offset - expected} 字节")
    pixels = np.frombuffer(payload, dtype=np.uint8).reshape(height, width, 3)
    return ImageTensor(pixels.astype(np.float32), RAW)


def write_ppm(path, img):
    with open(path, "wb") as f:
        f.write(encode_image(img))


def read_ppm(path):
    with open(path, "rb") as f:
        return decode_image(f.read())


def _reject_constant(token):
    raise JsonPayloadError(f"JSON 中不允许出现非有限数值: {token}")


def dump_json(obj, indent=2):
    return json.dumps(obj, sort_keys=True, indent=indent, ensure_ascii=False, allow_nan=False) + "\n"


def load_json(text):
    """解析 JSON，拒绝 NaN/Infinity"""
    try:
        return json.loads(text, parse_constant=_reject_constant)
    except json.JSONDecodeError as e:
        raise JsonPayloadError(f"JSON 解析失败: {str(e)}") from e


def write_json(path, obj, indent=2):
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write(dump_json(obj, indent))


def read_json(path):
    with open(path, "r", encoding="utf-8") as f:
        return load_json(f.read())
