import logging
import os

import pandas as pd

from controller import history_frame
from core_types import write_json
from world_sim import write_trajectory_csv

# 配置日志
logger = logging.getLogger(__name__)

REPORT_NAME = "eval_report.json"
SUMMARY_NAME = "eval_summary.txt"
SUMMARY_COLUMNS = ["case", "rmse", "mae", "improvement_pct", "improvement_direction",
                   "trajectory_rmse", "p_value", "reject", "collisions", "left_road", "closed_loop_status"]


def write_csv(frame, path):
    frame.to_csv(path, index=False, lineterminator="\n")
    return path


def write_history_csv(history, path):
    return write_csv(history_frame(history), path)


def _trajectory_name(label):
    return "ground" if label == "ground_truth" else label


def write_plot_csvs(trajectories, out_dir):
    """逐时刻的行驶方向与横向偏移，供外部绘图"""
    paths = []
    for label, traj in trajectories.items():
        frame = traj.to_frame()
        name = _trajectory_name(label)
        paths.append(write_csv(frame[["t_ms", "direction_deg"]], os.path.join(out_dir, f"direction_{name}.csv")))
        paths.append(write_csv(frame[["t_ms", "lateral_m"]], os.path.join(out_dir, f"lateral_{name}.csv")))
        paths.append(os.path.join(out_dir, f"trajectory_{name}.csv"))
        write_trajectory_csv(traj, paths[-1])
    return paths


def summary_text(report):
    frame = report.case_frame()[SUMMARY_COLUMNS]
    lines = [
        f"master seed: {report.seed}",
        f"dataset: total={report.counts['total']} train={report.counts['train']} "
        f"validation={report.counts['validation']} test={report.counts['test']}",
        f"comparison window (ms): {report.window_ms[0]} - {report.window_ms[1]}",
        f"ground truth: collisions={report.ground_truth['collisions']} "
        f"left_road={report.ground_truth['left_road']}",
        "",
        frame.to_string(index=False, float_format=lambda v: f"{v:.6f}"),
    ]
    return "\n".join(lines) + "\n"


def write_eval_report(report, out_dir):
    """
    写出评估报告

    Args:
        report (EvalReport): run_cases 的结果
        out_dir (str): 输出目录

    Returns:
        list: 写出的文件路径
    """
    os.makedirs(out_dir, exist_ok=True)
    report_path = os.path.join(out_dir, REPORT_NAME)
    write_json(report_path, report.to_dict())
    summary_path = os.path.join(out_dir, SUMMARY_NAME)
    with open(summary_path, "w", encoding="utf-8", newline="\n") as f:
        f.write(summary_text(report))
    paths = [report_path, summary_path]
    paths.extend(write_plot_csvs(report.trajectories, out_dir))
    for label, history in report.histories.items():
        paths.append(write_history_csv(history, os.path.join(out_dir, f"history_{label}.csv")))
    logger.info(f"评估报告已写出到 {out_dir}，共 {len(paths)} 个文件")
    return paths


def write_seed_summary(reports, medians, out_dir):
    """多种子汇总：每个种子一行，再加中位数表"""
    os.makedirs(out_dir, exist_ok=True)
    rows = [dict(c.to_dict(), seed=r.seed) for r in reports for c in r.cases]
    per_seed = pd.DataFrame(rows)
    per_seed["collisions"] = per_seed["collisions"].map(lambda ids: " ".join(str(i) for i in ids))
    seeds_path = write_csv(per_seed, os.path.join(out_dir, "seed_cases.csv"))
    medians_path = write_csv(medians.reset_index(), os.path.join(out_dir, "seed_medians.csv"))
    return [seeds_path, medians_path]
