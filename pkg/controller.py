import logging
import math
from dataclasses import dataclass, field, replace

import numpy as np
import pandas as pd
from numpy.lib.stride_tricks import sliding_window_view

from core_types import (
    HazNavError,
    ImageTensor,
    JsonPayloadError,
    NORMALIZED,
    SteeringAngle,
    dump_json,
    load_json,
)

# 配置日志
logger = logging.getLogger(__name__)

WEIGHT_FORMAT = "haznav-controller-weights"
WEIGHT_VERSION = 1
ACTIVATIONS = ("relu", "linear")
HISTORY_COLUMNS = ["epoch", "train_loss", "val_loss", "best_flag"]


class ScheduleError(HazNavError, ValueError):
    pass


class DimensionMismatchError(HazNavError, ValueError):
    pass


class NonFiniteActivationError(HazNavError, ArithmeticError):
    def __init__(self, layer_index):
        self.layer_index = layer_index
        super().__init__(f"第 {layer_index} 层输出出现非有限值")


class NonFiniteGradientError(HazNavError, ArithmeticError):
    pass


class TrainingDivergedError(HazNavError):
    def __init__(self, message, history):
        self.history = list(history)
        super().__init__(message)


class WeightFileError(HazNavError, ValueError):
    pass


class ScheduleMismatchError(WeightFileError):
    pass


class EmptySplitError(HazNavError, ValueError):
    pass


@dataclass(frozen=True)
class ConvSpec:
    filters: int
    kernel: int
    stride: int
    padding: int = 0

    def __post_init__(self):
        if self.filters < 1 or self.kernel < 1 or self.stride < 1 or self.padding < 0:
            raise ScheduleError(f"卷积层参数无效: {self}")


@dataclass(frozen=True)
class LayerSchedule:
    """
    网络结构：若干卷积层(NHWC) + 全连接层，最后一层宽度为 1

    crop_top 记录输入前在数据管线中裁掉的行数，网络本身不做裁剪。
    """

    input_height: int
    input_width: int
    input_channels: int = 3
    crop_top: int = 0
    conv: tuple = ()
    dense: tuple = (1,)
    activations: tuple = ()

    def __post_init__(self):
        conv = tuple(c if isinstance(c, ConvSpec) else ConvSpec(*c) for c in self.conv)
        object.__setattr__(self, "conv", conv)
        object.__setattr__(self, "dense", tuple(int(d) for d in self.dense))
        n_layers = len(conv) + len(self.dense)
        if not self.dense or self.dense[-1] != 1:
            raise ScheduleError(f"最后一个全连接层宽度必须为 1: {self.dense}")
        if any(d < 1 for d in self.dense):
            raise ScheduleError(f"全连接层宽度必须为正: {self.dense}")
        if not self.activations:
            object.__setattr__(self, "activations", ("relu",) * (n_layers - 1) + ("linear",))
        else:
            object.__setattr__(self, "activations", tuple(self.activations))
        if len(self.activations) != n_layers:
            raise ScheduleError(f"激活函数数量 {len(self.activations)} 与层数 {n_layers} 不一致")
        bad = [a for a in self.activations if a not in ACTIVATIONS]
        if bad:
            raise ScheduleError(f"未知的激活函数: {bad}")
        if min(self.input_height, self.input_width, self.input_channels) < 1:
            raise ScheduleError("输入尺寸必须为正")
        self.conv_shapes()

    @property
    def input_shape(self):
        return (self.input_height, self.input_width, self.input_channels)

    def conv_shapes(self):
        """每个卷积层的输出形状 (h, w, c)"""
        h, w, c = self.input_shape
        shapes = []
        for i, spec in enumerate(self.conv):
            h = (h + 2 * spec.padding - spec.kernel) // spec.stride + 1
            w = (w + 2 * spec.padding - spec.kernel) // spec.stride + 1
            c = spec.filters
            if h < 1 or w < 1:
                raise ScheduleError(f"第 {i} 个卷积层输出尺寸不为正: {h}x{w}")
            shapes.append((h, w, c))
        return shapes

    @property
    def flat_size(self):
        shapes = self.conv_shapes()
        h, w, c = shapes[-1] if shapes else self.input_shape
        return h * w * c

    def parameter_shapes(self):
        shapes = []
        c_in = self.input_channels
        for spec in self.conv:
            shapes.append(((spec.kernel, spec.kernel, c_in, spec.filters), (spec.filters,)))
            c_in = spec.filters
        n_in = self.flat_size
        for width in self.dense:
            shapes.append(((n_in, width), (width,)))
            n_in = width
        return shapes

    def to_dict(self):
        return {
            "input_height": self.input_height,
            "input_width": self.input_width,
            "input_channels": self.input_channels,
            "crop_top": self.crop_top,
            "conv": [[c.filters, c.kernel, c.stride, c.padding] for c in self.conv],
            "dense": list(self.dense),
            "activations": list(self.activations),
        }

    @classmethod
    def from_dict(cls, data):
        try:
            return cls(
                input_height=int(data["input_height"]),
                input_width=int(data["input_width"]),
                input_channels=int(data.get("input_channels", 3)),
                crop_top=int(data.get("crop_top", 0)),
                conv=tuple(ConvSpec(*c) for c in data.get("conv", [])),
                dense=tuple(data.get("dense", [1])),
                activations=tuple(data.get("activations", [])),
            )
        except (KeyError, TypeError) as e:
            raise ScheduleError(f"网络结构描述不完整: {str(e)}") from e


DAVE2_FILTERS = (24, 36, 48, 64, 64)
DAVE2_DENSE = (100, 50, 10, 1)


def dave2_schedule(height=50, width=150, crop_top=50, padding_3x3=1,
                   filters=DAVE2_FILTERS, dense=DAVE2_DENSE):
    """三层 5×5/步长 2 卷积 + 两层 3×3/步长 1 卷积，再接四层全连接"""
    conv = tuple(ConvSpec(f, 5, 2, 0) for f in filters[:3]) + tuple(
        ConvSpec(f, 3, 1, padding_3x3) for f in filters[3:]
    )
    return LayerSchedule(height, width, 3, crop_top, conv, tuple(dense))


def full_frame_schedule():
    # 400×600 画面裁掉顶部 200 行，3×3 卷积不补零
    return dave2_schedule(200, 600, crop_top=200, padding_3x3=0)


def param_count(schedule):
    total = 0
    for w_shape, b_shape in schedule.parameter_shapes():
        total += int(np.prod(w_shape)) + int(np.prod(b_shape))
    return total


@dataclass
class ControllerNet:
    schedule: LayerSchedule
    weights: list
    biases: list

    def __post_init__(self):
        shapes = self.schedule.parameter_shapes()
        if len(shapes) != len(self.weights) or len(shapes) != len(self.biases):
            raise ScheduleMismatchError("参数层数与网络结构不一致")
        for i, ((ws, bs), w, b) in enumerate(zip(shapes, self.weights, self.biases)):
            if tuple(w.shape) != ws or tuple(b.shape) != bs:
                raise ScheduleMismatchError(
                    f"第 {i} 层参数形状 {w.shape}/{b.shape} 与结构 {ws}/{bs} 不一致"
                )

    @property
    def param_count(self):
        return sum(w.size + b.size for w, b in zip(self.weights, self.biases))

    def parameters(self):
        params = []
        for w, b in zip(self.weights, self.biases):
            params.extend([w, b])
        return params

    def copy(self):
        return ControllerNet(
            self.schedule, [w.copy() for w in self.weights], [b.copy() for b in self.biases]
        )

    def all_finite(self):
        return all(np.all(np.isfinite(p)) for p in self.parameters())


def init_net(schedule, rng):
    """按扇入做均匀初始化 U(-sqrt(6/fan_in), sqrt(6/fan_in))，偏置为 0"""
    weights, biases = [], []
    for w_shape, b_shape in schedule.parameter_shapes():
        fan_in = int(np.prod(w_shape[:-1]))
        limit = math.sqrt(6.0 / fan_in)
        weights.append(np.asarray(rng.uniform(-limit, limit, w_shape), dtype=np.float64))
        biases.append(np.zeros(b_shape))
    return ControllerNet(schedule, weights, biases)


def zero_net(schedule):
    weights = [np.zeros(ws) for ws, _ in schedule.parameter_shapes()]
    biases = [np.zeros(bs) for _, bs in schedule.parameter_shapes()]
    return ControllerNet(schedule, weights, biases)


def conv_forward(x, w, b, stride, pad):
    """
    NHWC 卷积，im2col 由滑动窗口视图实现

    x: (N, H, W, C)；w: (k, k, C, F)；返回 (N, H', W', F) 和反向传播缓存
    """
    if pad:
        x = np.pad(x, ((0, 0), (pad, pad), (pad, pad), (0, 0)))
    k = w.shape[0]
    windows = sliding_window_view(x, (k, k), axis=(1, 2))[:, ::stride, ::stride]
    out = np.tensordot(windows, w, axes=([4, 5, 3], [0, 1, 2])) + b
    return out, (x.shape, windows, w, stride, pad)


def conv_backward(dout, cache):
    padded_shape, windows, w, stride, pad = cache
    k = w.shape[0]
    dw = np.tensordot(windows, dout, axes=([0, 1, 2], [0, 1, 2])).transpose(1, 2, 0, 3)
    db = dout.sum(axis=(0, 1, 2))
    _, ho, wo, _ = dout.shape
    dx = np.zeros(padded_shape)
    for i in range(k):
        for j in range(k):
            dx[:, i:i + stride * (ho - 1) + 1:stride, j:j + stride * (wo - 1) + 1:stride, :] += dout @ w[i, j].T
    if pad:
        dx = dx[:, pad:-pad, pad:-pad, :]
    return dx, dw, db


def _as_batch(net, images):
    if isinstance(images, ImageTensor):
        images = [images]
    if isinstance(images, (list, tuple)):
        for img in images:
            if isinstance(img, ImageTensor) and img.value_range != NORMALIZED:
                raise DimensionMismatchError("网络输入必须是归一化图像")
        images = np.stack([img.data if isinstance(img, ImageTensor) else img for img in images])
    x = np.asarray(images, dtype=np.float64)
    if x.ndim == 3:
        x = x[None]
    if x.ndim != 4 or x.shape[1:] != net.schedule.input_shape:
        raise DimensionMismatchError(
            f"输入形状 {x.shape[1:] if x.ndim == 4 else x.shape} 与网络结构 {net.schedule.input_shape} 不一致"
        )
    return x


def _check_finite(values, layer_index):
    if not np.all(np.isfinite(values)):
        raise NonFiniteActivationError(layer_index)


def _forward(net, x, mode, rng, dropout):
    if mode not in ("train", "infer"):
        raise ValueError(f"未知的运行模式: {mode}")
    drop = dropout if mode == "train" else 0.0
    if drop > 0 and rng is None:
        raise ValueError("训练模式下使用 dropout 需要提供随机数发生器")
    schedule = net.schedule
    caches = []
    layer = 0
    for spec, w, b in zip(schedule.conv, net.weights, net.biases):
        z, conv_cache = conv_forward(x, w, b, spec.stride, spec.padding)
        _check_finite(z, layer)
        x = np.maximum(z, 0.0) if schedule.activations[layer] == "relu" else z
        caches.append(("conv", conv_cache, z))
        layer += 1
    x = x.reshape(x.shape[0], -1)
    n_conv = len(schedule.conv)
    for w, b in zip(net.weights[n_conv:], net.biases[n_conv:]):
        mask = None
        if drop > 0:
            # 反向 dropout：保留的激活放大 1/(1-p)
            mask = (rng.random(x.shape) >= drop) / (1.0 - drop)
            x = x * mask
        z = x @ w + b
        _check_finite(z, layer)
        caches.append(("dense", (x, w, mask), z))
        x = np.maximum(z, 0.0) if schedule.activations[layer] == "relu" else z
        layer += 1
    return x[:, 0], caches


def forward_batch(net, images, mode="infer", rng=None, dropout=0.5):
    out, _ = _forward(net, _as_batch(net, images), mode, rng, dropout)
    return out


def forward(net, img, mode="infer", rng=None, dropout=0.5):
    """单幅图像的转向预测(未截断的实数)"""
    return float(forward_batch(net, img, mode, rng, dropout)[0])


def predict_steering(net, img):
    return SteeringAngle(forward(net, img, "infer"))


def predict(net, images, chunk=128):
    """推理模式下的批量预测"""
    x = np.asarray(images)
    if x.shape[0] == 0:
        return np.empty(0)
    return np.concatenate([
        forward_batch(net, x[i:i + chunk], "infer") for i in range(0, x.shape[0], chunk)
    ])


def backward(net, images, labels, l2=0.0, mode="train", rng=None, dropout=0.5):
    """
    均方误差 + L2(只作用于权重) 的反向传播

    Returns:
        tuple: (grads, loss)，grads 与 net.parameters() 顺序一致
    """
    x = _as_batch(net, images)
    y = np.asarray(labels, dtype=np.float64).reshape(-1)
    if x.shape[0] == 0:
        raise EmptySplitError("批次不能为空")
    if y.shape[0] != x.shape[0]:
        raise DimensionMismatchError(f"标签数量 {y.shape[0]} 与样本数量 {x.shape[0]} 不一致")
    pred, caches = _forward(net, x, mode, rng, dropout)
    n = x.shape[0]
    loss = float(np.mean((y - pred) ** 2)) + l2 * sum(float(np.sum(w * w)) for w in net.weights)

    schedule = net.schedule
    grads_w = [None] * len(net.weights)
    grads_b = [None] * len(net.biases)
    dx = (2.0 / n) * (pred - y)[:, None]
    for layer in range(len(caches) - 1, -1, -1):
        kind, cache, z = caches[layer]
        if schedule.activations[layer] == "relu":
            dx = dx * (z > 0)
        if kind == "dense":
            inp, w, mask = cache
            grads_w[layer] = inp.T @ dx
            grads_b[layer] = dx.sum(axis=0)
            dx = dx @ w.T
            if mask is not None:
                dx = dx * mask
            if layer == len(schedule.conv):
                h, w_, c = schedule.conv_shapes()[-1] if schedule.conv else schedule.input_shape
                dx = dx.reshape(n, h, w_, c)
        else:
            dx, grads_w[layer], grads_b[layer] = conv_backward(dx, cache)

    grads = []
    for w, gw, gb in zip(net.weights, grads_w, grads_b):
        gw = gw + 2.0 * l2 * w
        if not (np.all(np.isfinite(gw)) and np.all(np.isfinite(gb))):
            raise NonFiniteGradientError("梯度出现非有限值")
        grads.extend([gw, gb])
    return grads, loss


class Adam:
    """自适应矩估计优化器，按参数列表原地更新"""

    def __init__(self, learning_rate=1e-3, beta1=0.9, beta2=0.999, epsilon=1e-8):
        self.t = 0
        self.m = None
        self.v = None
        self.beta1 = beta1
        self.beta2 = beta2
        self.beta1_t = 1.0
        self.beta2_t = 1.0
        self.alpha = learning_rate
        self.eps = epsilon

    def apply_gradient(self, params, grads):
        if self.m is None:
            self.m = [np.zeros_like(p) for p in params]
            self.v = [np.zeros_like(p) for p in params]
        self.t += 1
        self.beta1_t *= self.beta1
        self.beta2_t *= self.beta2
        for p, g, m, v in zip(params, grads, self.m, self.v):
            m *= self.beta1
            m += (1 - self.beta1) * g
            v *= self.beta2
            v += (1 - self.beta2) * (g ** 2)
            m_hat = m / (1 - self.beta1_t)
            v_hat = v / (1 - self.beta2_t)
            p -= self.alpha * m_hat / (np.sqrt(v_hat) + self.eps)


class EarlyStopping:
    """验证损失严格下降才算改进；连续 patience 轮没有改进就停止"""

    def __init__(self, patience=3):
        if patience < 1:
            raise ValueError(f"patience 至少为 1: {patience}")
        self.patience = patience
        self.best_loss = math.inf
        self.best_epoch = None
        self.wait = 0

    def update(self, epoch, val_loss):
        if val_loss < self.best_loss:
            self.best_loss = val_loss
            self.best_epoch = epoch
            self.wait = 0
            return True
        self.wait += 1
        return False

    @property
    def should_stop(self):
        return self.wait >= self.patience


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    dropout: float = 0.5
    l2: float = 1e-5
    batch_size: int = 32
    max_epochs: int = 30
    patience: int = 3

    def __post_init__(self):
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError(f"dropout 必须在 [0, 1) 内: {self.dropout}")
        # 学习率允许为 0，便于检查训练流程本身不改动权重
        if not self.learning_rate >= 0:
            raise ValueError(f"学习率不能为负: {self.learning_rate}")
        if self.l2 < 0:
            raise ValueError(f"L2 系数不能为负: {self.l2}")
        if self.batch_size < 1 or self.max_epochs < 1 or self.patience < 1:
            raise ValueError("batch_size、max_epochs、patience 都必须为正")
        if not (0 <= self.beta1 < 1 and 0 <= self.beta2 < 1 and self.epsilon > 0):
            raise ValueError("Adam 超参数无效")

    def to_dict(self):
        return {
            "learning_rate": self.learning_rate,
            "beta1": self.beta1,
            "beta2": self.beta2,
            "epsilon": self.epsilon,
            "dropout": self.dropout,
            "l2": self.l2,
            "batch_size": self.batch_size,
            "max_epochs": self.max_epochs,
            "patience": self.patience,
        }


@dataclass(frozen=True, eq=False)
class TrainingData:
    train_x: np.ndarray
    train_y: np.ndarray
    val_x: np.ndarray
    val_y: np.ndarray

    def __post_init__(self):
        if len(self.train_y) == 0 or len(self.val_y) == 0:
            raise EmptySplitError(
                f"训练集和验证集都不能为空: train={len(self.train_y)}, validation={len(self.val_y)}"
            )
        if len(self.train_x) != len(self.train_y) or len(self.val_x) != len(self.val_y):
            raise DimensionMismatchError("样本数量与标签数量不一致")


@dataclass(frozen=True)
class EpochRecord:
    epoch: int
    train_loss: float
    val_loss: float
    best_flag: bool = False


@dataclass
class TrainResult:
    net: ControllerNet
    history: list = field(default_factory=list)
    best_epoch: int | None = None
    stopped_early: bool = False


def validation_loss(net, x, y):
    pred = predict(net, x)
    return float(np.mean((np.asarray(y, dtype=np.float64) - pred) ** 2))


def train(net, dataset, cfg, rng):
    """
    小批量 Adam 训练，每轮记录训练/验证损失，保留验证损失最好的一轮权重

    Args:
        net (ControllerNet): 初始网络(不会被修改)
        dataset (TrainingData): 已按工况准备好的训练/验证数组
        cfg (TrainConfig): 训练配置
        rng (Rng): 负责打乱顺序和 dropout

    Returns:
        TrainResult: 最优网络、逐轮历史、最优轮次、是否提前停止
    """
    net = net.copy()
    best = net.copy()
    optimizer = Adam(cfg.learning_rate, cfg.beta1, cfg.beta2, cfg.epsilon)
    stopper = EarlyStopping(cfg.patience)
    history = []
    stopped_early = False
    n = len(dataset.train_y)
    train_y = np.asarray(dataset.train_y, dtype=np.float64)
    for epoch in range(1, cfg.max_epochs + 1):
        order = rng.permutation(n)
        total = 0.0
        try:
            for start in range(0, n, cfg.batch_size):
                idx = order[start:start + cfg.batch_size]
                grads, loss = backward(
                    net, dataset.train_x[idx], train_y[idx], cfg.l2, "train", rng, cfg.dropout
                )
                optimizer.apply_gradient(net.parameters(), grads)
                total += loss * len(idx)
            val_loss = validation_loss(net, dataset.val_x, dataset.val_y)
        except (NonFiniteActivationError, NonFiniteGradientError) as e:
            raise TrainingDivergedError(f"第 {epoch} 轮训练发散: {str(e)}", history) from e
        train_loss = total / n
        if not (math.isfinite(val_loss) and math.isfinite(train_loss)):
            raise TrainingDivergedError(f"第 {epoch} 轮验证损失为非有限值", history)
        if stopper.update(epoch, val_loss):
            best = net.copy()
        history.append(EpochRecord(epoch, train_loss, val_loss))
        logger.info(f"第 {epoch} 轮: train_loss={train_loss:.6f}, val_loss={val_loss:.6f}")
        if stopper.should_stop:
            stopped_early = True
            logger.info(f"验证损失连续 {cfg.patience} 轮没有下降，停止训练；最优轮次 {stopper.best_epoch}")
            break
    history = [replace(r, best_flag=r.epoch == stopper.best_epoch) for r in history]
    return TrainResult(best, history, stopper.best_epoch, stopped_early)


def history_frame(history):
    return pd.DataFrame(
        [{"epoch": r.epoch, "train_loss": r.train_loss, "val_loss": r.val_loss, "best_flag": r.best_flag}
         for r in history],
        columns=HISTORY_COLUMNS,
    )


def weights_to_dict(net):
    layers = []
    n_conv = len(net.schedule.conv)
    for i, (w, b) in enumerate(zip(net.weights, net.biases)):
        layers.append({
            "kind": "conv" if i < n_conv else "dense",
            "weight_shape": list(w.shape),
            "weight": w.ravel().tolist(),
            "bias": b.tolist(),
        })
    return {
        "format": WEIGHT_FORMAT,
        "version": WEIGHT_VERSION,
        "schedule": net.schedule.to_dict(),
        "param_count": net.param_count,
        "layers": layers,
    }


def save_weights(net, path):
    """权重文件：结构头 + 逐层按行优先展开的数组"""
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write(dump_json(weights_to_dict(net), indent=None))


def weights_from_dict(data, expected_schedule=None):
    if not isinstance(data, dict) or data.get("format") != WEIGHT_FORMAT:
        raise WeightFileError("不是有效的权重文件")
    schedule = LayerSchedule.from_dict(data.get("schedule", {}))
    if expected_schedule is not None and schedule != expected_schedule:
        raise ScheduleMismatchError("权重文件中的网络结构与期望结构不一致")
    shapes = schedule.parameter_shapes()
    layers = data.get("layers", [])
    if len(layers) != len(shapes):
        raise ScheduleMismatchError(f"权重层数 {len(layers)} 与结构层数 {len(shapes)} 不一致")
    weights, biases = [], []
    for i, (layer, (ws, bs)) in enumerate(zip(layers, shapes)):
        w = np.asarray(layer.get("weight", []), dtype=np.float64)
        b = np.asarray(layer.get("bias", []), dtype=np.float64)
        if w.size != int(np.prod(ws)) or b.shape != bs:
            raise ScheduleMismatchError(f"第 {i} 层参数数量与结构不一致")
        if not (np.all(np.isfinite(w)) and np.all(np.isfinite(b))):
            raise WeightFileError(f"第 {i} 层包含非有限数值")
        weights.append(w.reshape(ws))
        biases.append(b)
    return ControllerNet(schedule, weights, biases)


def load_weights(path, expected_schedule=None):
    with open(path, "r", encoding="utf-8") as f:
        text = f.read()
    try:
        data = load_json(text)
    except JsonPayloadError as e:
        raise WeightFileError(f"权重文件解析失败: {str(e)}") from e
    return weights_from_dict(data, expected_schedule)


def check_gradients(net, images, labels, rng, l2=0.0, checks=100, eps=1e-5):
    """
    随机抽取参数做中心差分，与解析梯度对比

    Returns:
        list: (参数序号, 展开下标, 解析值, 数值)
    """
    net = net.copy()
    grads, _ = backward(net, images, labels, l2, mode="infer")
    params = net.parameters()
    results = []
    for _ in range(checks):
        p_index = int(rng.integers(0, len(params)))
        param = params[p_index]
        flat_index = int(rng.integers(0, param.size))
        view = param.reshape(-1)
        original = view[flat_index]
        view[flat_index] = original + eps
        _, plus = backward(net, images, labels, l2, mode="infer")
        view[flat_index] = original - eps
        _, minus = backward(net, images, labels, l2, mode="infer")
        view[flat_index] = original
        numeric = (plus - minus) / (2 * eps)
        results.append((p_index, flat_index, float(grads[p_index].reshape(-1)[flat_index]), numeric))
    return results
