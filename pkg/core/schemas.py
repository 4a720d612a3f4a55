"""Pydantic configuration models for every stage of the lane pipeline."""

from __future__ import annotations

import json
import math
try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib
from collections.abc import Mapping
from pathlib import Path
from typing import Any, Literal

import numpy as np
import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from config.constants import (
    ANCHOR_PITCHES_DEG,
    ANCHOR_X_INTERVAL,
    ANCHOR_YAWS_DEG,
    Y_SAMPLING_PRESETS,
)

from .exceptions import ConfigError

DEFAULT_CHANNELS: tuple[str, ...] = (
    "lateral_distance",
    "presence",
    "heading_sin",
    "heading_cos",
    "ground_height",
)
EXTRA_CHANNELS: tuple[str, ...] = ("column_offset", "lane_category")


class _Config(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid", validate_by_name=True)


class AnchorGridConfig(_Config):
    """3D anchor 网格参数。

    Args:
        x_interval: 起点 x_s 的间隔 (m)。
        x_range: x_s 扫描范围 (min, max)。
        yaws: 偏航角列表 (deg)，配置键 `yaws_deg`。
        pitches: 俯仰角列表 (deg)，配置键 `pitches_deg`。
        z_s: anchor 起点高度 (m)，ONCE 风格相机坐标下取 -1.5。
        y_samples: 可选的 y 采样覆盖，None 时使用 `y_preset`。
        y_preset: y 采样预设名。
    """

    x_interval: float = Field(ANCHOR_X_INTERVAL, gt=0, description="x_s 间隔 (m)")
    x_range: tuple[float, float] = Field((-10.0, 10.0), description="x_s 范围 (m)")
    yaws: tuple[float, ...] = Field(ANCHOR_YAWS_DEG, alias="yaws_deg")
    pitches: tuple[float, ...] = Field(ANCHOR_PITCHES_DEG, alias="pitches_deg")
    z_s: float = Field(0.0, description="起点高度 (m)")
    y_samples: tuple[float, ...] | None = Field(None, description="y 采样 (m)")
    y_preset: str = Field("apollosim", description="y 采样预设")

    @model_validator(mode="after")
    def _check(self) -> AnchorGridConfig:
        lo, hi = self.x_range
        if not lo < hi:
            raise ValueError(f"x_range min must be below max, got {self.x_range}")
        for name, values in (("yaws", self.yaws), ("pitches", self.pitches)):
            if any(abs(v) >= 90 for v in values):
                raise ValueError(f"{name} must stay within (-90, 90) degrees: {values}")
            if len(set(values)) != len(values):
                raise ValueError(f"{name} contains duplicate values: {values}")
        if self.y_samples is None and self.y_preset not in Y_SAMPLING_PRESETS:
            raise ValueError(f"Unknown y_preset '{self.y_preset}', choose from {sorted(Y_SAMPLING_PRESETS)}")
        return self

    def y_values(self) -> tuple[float, ...]:
        if self.y_samples is not None:
            return tuple(float(y) for y in self.y_samples)
        return tuple(float(y) for y in Y_SAMPLING_PRESETS[self.y_preset])


class HeadConfig(_Config):
    hidden_width: int = Field(64, ge=1, description="隐藏层宽度 H_hid")
    num_classes: int = Field(2, ge=2, description="类别数 L，含背景类 0")


class TrainConfig(_Config):
    """训练超参数，默认值对应公开的训练设置。

    Args:
        lambda_cls: 分类损失权重。
        lambda_reg: 回归损失权重。
        focal_alpha: focal loss 的 alpha。
        focal_gamma: focal loss 的 gamma。
        learning_rate: 初始学习率。
        weight_decay: 解耦权重衰减。
        n_positives: 每条真值车道分配的正样本 anchor 数。
        seed: 随机种子。
        epochs: 训练轮数，每轮遍历一次训练场景。
        lr_decay_step: 第几个 step 起学习率乘以 lr_decay_factor，None 表示不衰减。
        iterations: 迭代回归的轮次数。
        share_heads: 所有迭代共用一个头。
    """

    lambda_cls: float = Field(1.0, ge=0)
    lambda_reg: float = Field(1.0, ge=0)
    focal_alpha: float = Field(0.5, gt=0)
    focal_gamma: float = Field(2.0, ge=0)
    learning_rate: float = Field(1e-4, ge=0)
    weight_decay: float = Field(1e-4, ge=0)
    beta1: float = Field(0.9, ge=0, lt=1)
    beta2: float = Field(0.999, ge=0, lt=1)
    adam_eps: float = Field(1e-8, gt=0)
    n_positives: int = Field(3, ge=1)
    seed: int = 0
    epochs: int = Field(20, ge=0)
    lr_decay_step: int | None = Field(None, ge=1)
    lr_decay_factor: float = Field(0.1, gt=0, le=1)
    iterations: int = Field(1, ge=1)
    share_heads: bool = False


class FusionConfig(_Config):
    """时序融合：enabled 为 False 时只用单帧特征。"""

    enabled: bool = False
    strategy: str = Field("weighted_sum", description="weighted_sum 或 linear")
    max_frame_gap: int = Field(5, ge=1)


class InferenceConfig(_Config):
    score_threshold: float = Field(0.05, ge=0, le=1)
    nms_threshold: float = Field(2.0, gt=0, description="NMS 距离阈值 (m)")
    vis_threshold: float = Field(0.5, ge=0, le=1)
    max_lanes: int = Field(20, ge=1)
    iterations: int = Field(1, ge=1)


class EwcConfig(_Config):
    alpha: float = Field(0.1, ge=0, description="调整量正则权重")
    steps: int = Field(200, ge=0)
    step_size: float = Field(1e-2, gt=0)
    fork_slope_threshold: float = Field(0.05, ge=0, description="分叉判定斜率 (m/m)")
    min_common_points: int = Field(3, ge=1)
    max_halvings: int = Field(30, ge=0)


class EvalConfig(_Config):
    tp_point_frac: float = Field(0.75, gt=0, le=1)
    tp_dist: float = Field(1.5, gt=0)
    close_range: tuple[float, float] = (0.0, 40.0)
    far_range: tuple[float, float] = (40.0, 100.0)
    squared_cost: bool = False
    strict: bool = Field(False, description="空真值时抛出 EmptyGroundTruth")


class OnceEvalConfig(_Config):
    tau_cd: float = Field(0.3, gt=0)
    iou_threshold: float = Field(0.3, gt=0, le=1)
    half_width: float = Field(0.5, gt=0)
    resolution: float = Field(0.1, gt=0)


class RenderConfig(_Config):
    """合成特征图的渲染参数。"""

    image_height: int = Field(360, ge=1)
    image_width: int = Field(480, ge=1)
    feature_height: int = Field(45, ge=1)
    feature_width: int = Field(60, ge=1)
    focal_length: float = Field(420.0, gt=0, description="像素焦距")
    channels: tuple[str, ...] = DEFAULT_CHANNELS
    presence_radius: float = Field(0.25, gt=0, description="地面命中点到车道的存在半径 (m)")
    presence_radius_cells: float = Field(0.0, ge=0, description="车道投影到网格中心的存在半径 (特征格)")
    lateral_clamp: float = Field(5.0, gt=0)
    column_clamp: float = Field(4.0, gt=0)
    max_range: float = Field(200.0, gt=0, description="射线最远求交距离 (m)")
    num_classes: int = Field(2, ge=2, description="lane_category 通道的归一化类别数 L")
    occlude_features: bool = False
    feature_noise: float = Field(0.0, ge=0)

    @model_validator(mode="after")
    def _check_channels(self) -> RenderConfig:
        known = set(DEFAULT_CHANNELS) | set(EXTRA_CHANNELS)
        unknown = [c for c in self.channels if c not in known]
        if unknown or not self.channels:
            raise ValueError(f"Unknown or empty render channels: {unknown or self.channels}")
        if len(set(self.channels)) != len(self.channels):
            raise ValueError(f"Duplicate render channels: {self.channels}")
        return self


class GroundSpec(_Config):
    """Parametric road surface z = g(y)."""

    kind: Literal["flat", "uphill", "downhill", "hill"] = "flat"
    grade: float = Field(0.0, ge=0)
    amplitude: float = 0.0
    wavelength: float = Field(80.0, gt=0)

    def height(self, y: Any) -> Any:
        y = np.asarray(y, dtype=np.float64)
        match self.kind:
            case "flat":
                z = np.zeros_like(y)
            case "uphill":
                z = self.grade * y
            case "downhill":
                z = -self.grade * y
            case "hill":
                z = self.amplitude * np.sin(2.0 * math.pi * y / self.wavelength)
        return z

    def slope(self, y: Any) -> Any:
        y = np.asarray(y, dtype=np.float64)
        match self.kind:
            case "flat":
                dz = np.zeros_like(y)
            case "uphill":
                dz = np.full_like(y, self.grade)
            case "downhill":
                dz = np.full_like(y, -self.grade)
            case "hill":
                k = 2.0 * math.pi / self.wavelength
                dz = self.amplitude * k * np.cos(k * y)
        return dz


class SceneSpec(_Config):
    """One synthetic road.

    Args:
        num_lanes: 车道线条数。
        lane_spacing: 相邻车道线间距 (m)。
        curvature: 横向二次系数 c，x = offset + c * y^2。
        ground: 路面形状。
        camera_height: 相机高度 (m)。
        camera_pitch: 相机俯仰角 (deg)，正值向下看。
        categories: 每条车道线的类别，None 时全部为 1。
        occlusion_spans: 每条车道线被遮挡的 y 区间列表。
        tags: 场景标签，原样透传到车道线。
    """

    num_lanes: int = Field(4, ge=1)
    lane_spacing: float = Field(3.5, gt=0)
    curvature: float = 0.0
    ground: GroundSpec = Field(default_factory=GroundSpec)
    camera_height: float = Field(1.5, gt=0)
    camera_pitch: float = Field(2.0, gt=-45, lt=45)
    categories: tuple[int, ...] | None = None
    occlusion_spans: tuple[tuple[tuple[float, float], ...], ...] | None = None
    tags: tuple[str, ...] = ()

    @model_validator(mode="after")
    def _check(self) -> SceneSpec:
        if self.categories is not None:
            if len(self.categories) != self.num_lanes:
                raise ValueError(f"categories needs {self.num_lanes} entries, got {len(self.categories)}")
            if any(c < 1 for c in self.categories):
                raise ValueError("lane categories start at 1, 0 is background")
        if self.occlusion_spans is not None:
            if len(self.occlusion_spans) != self.num_lanes:
                raise ValueError(f"occlusion_spans needs {self.num_lanes} entries")
            for spans in self.occlusion_spans:
                for lo, hi in spans:
                    if not lo < hi:
                        raise ValueError(f"occlusion span must be increasing: {(lo, hi)}")
        return self

    def lane_offsets(self) -> list[float]:
        center = (self.num_lanes - 1) / 2.0
        return [(i - center) * self.lane_spacing for i in range(self.num_lanes)]

    def lane_categories(self) -> tuple[int, ...]:
        return self.categories if self.categories is not None else (1,) * self.num_lanes


class SynthConfig(_Config):
    """随机场景分布，`sample_spec` 从这里抽样 SceneSpec。"""

    scenes: int = Field(50, ge=1)
    seed: int = 7
    frames: int = Field(1, ge=1, description="每个场景的序列帧数，>1 时生成时序序列")
    ego_speed: float = Field(5.0, ge=0)
    num_lanes_range: tuple[int, int] = (2, 4)
    lane_spacing_range: tuple[float, float] = (3.3, 3.7)
    curvature_max: float = Field(4e-4, ge=0)
    grounds: tuple[Literal["flat", "uphill", "downhill", "hill"], ...] = ("flat",)
    grade_max: float = Field(0.08, ge=0)
    hill_amplitude_max: float = Field(1.0, ge=0)
    hill_wavelength: float = Field(80.0, gt=0)
    camera_height_range: tuple[float, float] = (1.4, 1.6)
    camera_pitch_range: tuple[float, float] = (0.0, 4.0)
    occlusion_prob: float = Field(0.0, ge=0, le=1)
    num_categories: int = Field(1, ge=1, description="非背景类别数，即 L - 1")
    train_fraction: float = Field(0.8, gt=0, le=1)

    @model_validator(mode="after")
    def _check(self) -> SynthConfig:
        for name in ("num_lanes_range", "lane_spacing_range", "camera_height_range", "camera_pitch_range"):
            lo, hi = getattr(self, name)
            if lo > hi:
                raise ValueError(f"{name} must be (low, high), got {(lo, hi)}")
        if self.num_lanes_range[0] < 1:
            raise ValueError("num_lanes_range must start at 1 or more")
        if not self.grounds:
            raise ValueError("grounds must name at least one surface kind")
        return self


class RunConfig(_Config):
    """Everything a CLI run needs; flags > config file > defaults."""

    dataset_dir: Path | None = None
    checkpoint: Path | None = None
    output_dir: Path | None = None
    seed: int = 0
    anchor: AnchorGridConfig = Field(default_factory=AnchorGridConfig)
    head: HeadConfig = Field(default_factory=HeadConfig)
    train: TrainConfig = Field(default_factory=TrainConfig)
    fusion: FusionConfig = Field(default_factory=FusionConfig)
    inference: InferenceConfig = Field(default_factory=InferenceConfig)
    ewc: EwcConfig = Field(default_factory=EwcConfig)
    evaluation: EvalConfig = Field(default_factory=EvalConfig)
    once: OnceEvalConfig = Field(default_factory=OnceEvalConfig)
    render: RenderConfig = Field(default_factory=RenderConfig)
    synth: SynthConfig = Field(default_factory=SynthConfig)

    @classmethod
    def load(cls, path: Path | str | None) -> RunConfig:
        """读取 YAML / JSON / TOML 配置文件，None 时返回默认配置。

        Raises:
            ConfigError: 文件不存在、无法解析或字段非法时抛出。
        """
        if path is None:
            return cls()
        path = Path(path)
        if not path.is_file():
            raise ConfigError(f"Config file not found: {path}")
        text = path.read_text(encoding="utf-8")
        try:
            match path.suffix.lower():
                case ".json":
                    payload = json.loads(text)
                case ".toml":
                    payload = tomllib.loads(text)
                case _:
                    payload = yaml.safe_load(text)
        except (json.JSONDecodeError, tomllib.TOMLDecodeError, yaml.YAMLError) as exc:
            raise ConfigError(f"Cannot parse config {path}: {exc}") from exc
        return cls.from_mapping(payload or {}, source=str(path))

    @classmethod
    def from_mapping(cls, payload: Mapping[str, Any], *, source: str = "<mapping>") -> RunConfig:
        if not isinstance(payload, Mapping):
            raise ConfigError(f"Config root in {source} must be a mapping, got {type(payload).__name__}")
        try:
            return cls.model_validate(dict(payload))
        except ValidationError as exc:
            raise ConfigError(f"Invalid config {source}: {exc}") from exc

    def with_overrides(self, overrides: Mapping[str, Any]) -> RunConfig:
        """Deep-merge dotted or nested overrides, skipping None values."""
        merged = self.model_dump(mode="json", by_alias=True)
        for key, value in overrides.items():
            if value is None:
                continue
            node = merged
            *parents, leaf = key.split(".")
            for part in parents:
                node = node.setdefault(part, {})
            if isinstance(value, Mapping) and isinstance(node.get(leaf), dict):
                node[leaf] = {**node[leaf], **value}
            else:
                node[leaf] = str(value) if isinstance(value, Path) else value
        return self.from_mapping(merged, source="overrides")

    def to_yaml(self) -> str:
        return yaml.safe_dump(self.model_dump(mode="json", by_alias=True), sort_keys=False, allow_unicode=True)
