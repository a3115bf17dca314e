import argparse
import logging
import logging.handlers
import os
import sys

from dotenv import load_dotenv

from controller import history_frame, save_weights
from core_types import HazNavError, Rng, derive_seed, dump_json, write_json, write_ppm
from evaluation import (
    CaseId, StageError, experiment_dataset, experiment_worlds, run_cases, run_seeds, stage, train_case,
)
from experiment_config import ConfigValidationError, load_config, validate_schedule, write_effective_config
from report_writer import write_csv, write_eval_report, write_seed_summary
from synth_vision import render_with_segmentation, write_dataset
from threat import threat_heatmap, write_heatmap_csv
from world_sim import build_world

# 加载环境变量
load_dotenv()

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_RUNTIME = 1
EXIT_CONFIG = 2

# 热力图默认画面尺寸
HEATMAP_FRAME = (400, 600)


def setup_logging(log_dir=None, level=None):
    """文件日志记录全部 DEBUG 信息，控制台只输出 INFO 及以上；日志写到 stderr，不干扰 stdout 上的状态行"""
    log_dir = log_dir or os.getenv("HAZNAV_LOG_DIR", "logs")
    level = level or os.getenv("HAZNAV_LOG_LEVEL", "INFO")
    # 创建logs目录（如果不存在）
    os.makedirs(log_dir, exist_ok=True)

    root = logging.getLogger()
    root.setLevel(logging.DEBUG)
    for handler in list(root.handlers):
        if getattr(handler, "_haznav", False):
            root.removeHandler(handler)
            handler.close()

    # 创建文件处理器
    file_handler = logging.handlers.RotatingFileHandler(
        os.path.join(log_dir, "app.log"),
        maxBytes=1024 * 1024,  # 1MB
        backupCount=5,
        encoding="utf-8",
    )
    file_handler.setLevel(logging.DEBUG)

    # 创建控制台处理器
    console_handler = logging.StreamHandler(sys.stderr)
    console_handler.setLevel(level.upper())

    # 创建格式化器
    formatter = logging.Formatter('%(asctime)s - %(name)s - %(levelname)s - %(message)s')
    for handler in (file_handler, console_handler):
        handler.setFormatter(formatter)
        handler._haznav = True
        root.addHandler(handler)


def parse_frames(text):
    """解析 HxW 形式的画面尺寸"""
    try:
        h, w = (int(v) for v in text.lower().split("x"))
    except ValueError:
        raise argparse.ArgumentTypeError(f"画面尺寸应为 HxW 形式: {text}") from None
    if h < 2 or w < 2:
        raise argparse.ArgumentTypeError(f"画面尺寸过小: {text}")
    return h, w


def parse_seeds(text):
    try:
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"种子列表应为逗号分隔的整数: {text}") from None


def build_overrides(args):
    """命令行参数转换成与配置文件同结构的覆盖项"""
    overrides = {}
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.out is not None:
        overrides["out"] = args.out
    if args.frames is not None:
        overrides["camera"] = {"height": args.frames[0], "width": args.frames[1]}
    return overrides


def cmd_world(cfg, out):
    with stage("world"):
        world = build_world(Rng(derive_seed(cfg.seed, "world")), cfg.world, "train0")
    with stage("write"):
        world_path = os.path.join(out, "world.json")
        write_json(world_path, world.to_dict())
        frame, segmented = render_with_segmentation(world, cfg.camera, "center")
        preview = os.path.join(out, "preview.ppm")
        preview_seg = os.path.join(out, "preview_segmented.ppm")
        write_ppm(preview, frame)
        write_ppm(preview_seg, segmented.image)
    logger.info(f"世界已生成: {len(world.hazards)} 个障碍物，道路长 {world.road.total_length:.1f} m")
    return {
        "files": [world_path, preview, preview_seg],
        "hazards": len(world.hazards),
        "road_length_m": world.road.total_length,
    }


def cmd_dataset(cfg, out):
    with stage("world"):
        train_worlds, test_world, _ = experiment_worlds(cfg)
    with stage("dataset"):
        dataset = experiment_dataset(cfg, train_worlds, test_world)
    with stage("write"):
        manifest = write_dataset(dataset, out, cfg.dataset.export_frames)
    return {
        "files": [os.path.join(out, "manifest.json"), os.path.join(out, "labels.csv")],
        "counts": manifest["counts"],
    }


def cmd_train(cfg, case, out):
    with stage("world"):
        train_worlds, test_world, _ = experiment_worlds(cfg)
    with stage("dataset"):
        dataset = experiment_dataset(cfg, train_worlds, test_world, keep_side_frames=False)
    with stage(f"train:{case.label}"):
        result = train_case(cfg, case, dataset)
    with stage("write"):
        weights_path = os.path.join(out, f"weights_{case.label}.json")
        save_weights(result.net, weights_path)
        history_path = write_csv(history_frame(result.history), os.path.join(out, f"history_{case.label}.csv"))
    return {
        "files": [weights_path, history_path],
        "case": case.label,
        "best_epoch": result.best_epoch,
        "epochs_run": len(result.history),
        "stopped_early": result.stopped_early,
    }


def cmd_eval(cfg, out, seeds=None):
    if seeds:
        reports, medians = run_seeds(seeds, cfg)
        with stage("write"):
            files = []
            for report in reports:
                files.extend(write_eval_report(report, os.path.join(out, f"seed_{report.seed}")))
            files.extend(write_seed_summary(reports, medians, out))
        return {"files": files, "seeds": [r.seed for r in reports]}
    report = run_cases(cfg)
    with stage("write"):
        files = write_eval_report(report, out)
    return {
        "files": files,
        "cases": {c.case: {"rmse": c.rmse, "trajectory_rmse": c.trajectory_rmse} for c in report.cases},
    }


def cmd_heatmap(cfg, procedure, out, resolution=50, frames=None, span=1.0):
    height, width = frames or HEATMAP_FRAME
    with stage("heatmap"):
        frame = threat_heatmap(procedure, resolution, cfg.threat, height, width, span)
    with stage("write"):
        path = os.path.join(out, f"heatmap_{procedure}.csv")
        write_heatmap_csv(frame, path)
    return {"files": [path], "procedure": procedure, "cells": len(frame), "span": span}


class Command:
    """子命令基类：解析配置、准备输出目录、执行并返回 (状态, 退出码)"""

    name = None
    # 需要构造网络的命令在配置阶段就检查网络结构与画面尺寸是否匹配
    needs_controller = False

    def run(self, cfg, out, args):
        raise NotImplementedError

    def execute(self, args):
        try:
            cfg = load_config(args.config, build_overrides(args))
            if self.needs_controller:
                validate_schedule(cfg)
        except ConfigValidationError as e:
            logger.error(str(e))
            return {"command": self.name, "status": "error", "stage": "config", "errors": e.errors}, EXIT_CONFIG
        out = cfg.out
        try:
            os.makedirs(out, exist_ok=True)
            write_effective_config(cfg, out)
            logger.info(f"执行 {self.name}，主种子 {cfg.seed}，输出目录 {out}")
            payload = self.run(cfg, out, args)
            return dict(payload, command=self.name, status="ok", out=out, seed=cfg.seed), EXIT_OK
        except StageError as e:
            return {"command": self.name, "status": "error", "stage": e.stage, "error": str(e)}, EXIT_RUNTIME
        except (HazNavError, OSError) as e:
            logger.error(f"{self.name} 执行失败: {str(e)}", exc_info=True)
            return {"command": self.name, "status": "error", "stage": "setup", "error": str(e)}, EXIT_RUNTIME
        except Exception as e:
            logger.error(f"{self.name} 发生未预期的错误: {str(e)}", exc_info=True)
            return {"command": self.name, "status": "error", "stage": "unknown", "error": str(e)}, EXIT_RUNTIME


class World(Command):
    name = "world"

    def run(self, cfg, out, args):
        return cmd_world(cfg, out)


class DatasetCommand(Command):
    name = "dataset"
    needs_controller = True

    def run(self, cfg, out, args):
        return cmd_dataset(cfg, out)


class Train(Command):
    name = "train"
    needs_controller = True

    def run(self, cfg, out, args):
        return cmd_train(cfg, CaseId.from_value(args.case), out)


class Eval(Command):
    name = "eval"
    needs_controller = True

    def run(self, cfg, out, args):
        return cmd_eval(cfg, out, args.seeds)


class Heatmap(Command):
    name = "heatmap"

    def run(self, cfg, out, args):
        return cmd_heatmap(cfg, args.procedure, out, args.resolution, args.frames, args.span)


COMMANDS = {}


def add_command(command_cls):
    COMMANDS[command_cls.name] = command_cls()


add_command(World)
add_command(DatasetCommand)
add_command(Train)
add_command(Eval)
add_command(Heatmap)


def build_parser():
    parser = argparse.ArgumentParser(prog="haznav", description="障碍物感知的端到端驾驶仿真实验")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", help="JSON 配置文件")
        p.add_argument("--seed", type=int, help="主种子")
        p.add_argument("--out", help="输出目录")
        p.add_argument("--frames", type=parse_frames, help="画面尺寸 HxW")
        if name == "train":
            p.add_argument("--case", type=int, choices=[1, 2, 3], default=1)
        if name == "eval":
            p.add_argument("--seeds", type=parse_seeds, help="逗号分隔的多个主种子")
        if name == "heatmap":
            p.add_argument("--procedure", choices=["radar", "pixel"], default="radar")
            p.add_argument("--resolution", type=int, default=50)
            p.add_argument("--span", type=float, default=1.0, help="雷达网格范围相对量程的倍数")
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    setup_logging()
    payload, code = COMMANDS[args.command].execute(args)
    print(dump_json(payload, indent=None).strip())
    return code


if __name__ == '__main__':
    sys.exit(main())
