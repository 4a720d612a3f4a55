from __future__ import annotations

from pydantic import BaseModel, ConfigDict, Field

from config.constants import EVAL_SCHEMA_VERSION


class MetricsReport(BaseModel):
    """标准评测协议的结果。

    Args:
        f1: 所有分数阈值下的最大 F1。
        ap: 精确率-召回率曲线下面积。
        x_err_close / x_err_far: 近处 (0, 40] m 与远处 (40, 100] m 的 x 误差 (m)。
        z_err_close / z_err_far: 同上的 z 误差 (m)。
        category_accuracy: 真阳性中类别预测正确的比例。
        score_threshold: 取得最大 F1 的分数阈值。
        per_tag_f1: 按场景标签拆分的最大 F1。
    """

    model_config = ConfigDict(frozen=True)

    schema_version: str = EVAL_SCHEMA_VERSION
    protocol: str = "standard"
    f1: float = Field(0.0, ge=0, le=1)
    ap: float = Field(0.0, ge=0, le=1)
    precision: float = Field(0.0, ge=0, le=1)
    recall: float = Field(0.0, ge=0, le=1)
    x_err_close: float = Field(0.0, ge=0)
    x_err_far: float = Field(0.0, ge=0)
    z_err_close: float = Field(0.0, ge=0)
    z_err_far: float = Field(0.0, ge=0)
    category_accuracy: float = Field(0.0, ge=0, le=1)
    score_threshold: float | None = None
    num_predictions: int = 0
    num_ground_truth: int = 0
    true_positives: int = 0
    per_tag_f1: dict[str, float] = Field(default_factory=dict)


class OnceReport(BaseModel):
    """ONCE 风格协议：俯视 IoU 门限 + 单向 Chamfer 距离。"""

    model_config = ConfigDict(frozen=True)

    schema_version: str = EVAL_SCHEMA_VERSION
    protocol: str = "once"
    f1: float = Field(0.0, ge=0, le=1)
    precision: float = Field(0.0, ge=0, le=1)
    recall: float = Field(0.0, ge=0, le=1)
    cd_error: float = Field(0.0, ge=0)
    tau_cd: float = Field(0.3, gt=0)
    num_predictions: int = 0
    num_ground_truth: int = 0
    true_positives: int = 0
