import numpy as np
import pytest

from controller import ConvSpec, LayerSchedule
from core_types import Rng
from synth_vision import CameraRig
from world_sim import HazardKind, RoadSegment, WorldConfig, WorldState, make_hazard, place_vehicle


@pytest.fixture
def small_rig():
    return CameraRig(height=48, width=64)


@pytest.fixture
def tiny_rig():
    return CameraRig(height=24, width=32)


@pytest.fixture
def straight_config():
    """200 m 直路，两个障碍物"""
    return WorldConfig(
        segments=(RoadSegment.line(200.0),),
        hazard_count=2,
        hazard_start_m=40.0,
        min_spacing_m=30.0,
        hazard_end_margin_m=20.0,
    )


@pytest.fixture
def straight_road(straight_config):
    return straight_config.road_spec()


def world_with_hazards(road, hazards, station=2.0, speed=10.0):
    vehicle = place_vehicle(road, station, speed=speed)
    return WorldState(road, tuple(hazards), vehicle, "fixture")


@pytest.fixture
def rock_ahead(straight_road):
    """本车道正前方 8 m 处有一块石头"""
    rock = make_hazard(straight_road, 0, HazardKind.ROCK, 10.0)
    return world_with_hazards(straight_road, [rock])


@pytest.fixture
def clean_world(straight_road):
    return world_with_hazards(straight_road, [])


@pytest.fixture
def toy_schedule():
    return LayerSchedule(8, 12, 3, 0, (ConvSpec(4, 3, 1, 0), ConvSpec(6, 3, 2, 0)), (16, 1))


@pytest.fixture
def rng():
    return Rng(20240601)


@pytest.fixture
def np_rng():
    return np.random.default_rng(12345)


def tiny_experiment_dict(out):
    """几秒钟内能跑完的完整实验配置"""
    return {
        "seed": 7,
        "out": str(out),
        "training_world_count": 1,
        "camera": {"height": 24, "width": 32},
        "world": {
            "segments": [{"kind": "line", "length": 300.0}],
            "hazard_count": 3,
            "hazard_start_m": 60.0,
        },
        "controller": {"conv": [[8, 3, 2, 0], [8, 3, 1, 1]], "dense": [16, 1]},
        "dataset": {
            "collect_count": 40,
            "test_collect_count": 4,
            "test_hazard_count": 3,
            "min_hazard_pixels": 1,
            "record_side_cameras": False,
            "export_frames": False,
        },
        "train": {"batch_size": 16, "max_epochs": 2, "dropout": 0.0},
        "eval": {
            "hazard_count": 1,
            "lead_in_m": 20.0,
            "duration_ms": 4000,
            "window_before_ms": 1000,
            "window_after_ms": 1000,
        },
    }
