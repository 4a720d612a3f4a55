from __future__ import annotations

from collections.abc import Mapping
from pathlib import Path
from typing import Any

import numpy as np
from pydantic import BaseModel


def to_jsonable(value: object) -> object:
    """把报告、numpy 标量/数组、Path 等转换为可直接 json.dumps 的结构。"""
    if isinstance(value, BaseModel):
        return to_jsonable(value.model_dump(mode="json"))
    if isinstance(value, Mapping):
        return {str(key): to_jsonable(item) for key, item in value.items()}
    if isinstance(value, list | tuple):
        return [to_jsonable(item) for item in value]
    if isinstance(value, np.ndarray):
        return to_jsonable(value.tolist())
    if isinstance(value, np.integer):
        return int(value)
    if isinstance(value, np.floating | float):
        return float(value) if np.isfinite(value) else None
    if isinstance(value, Path):
        return str(value)
    return value


def flatten_record(value: Mapping[str, Any], prefix: str = "") -> dict[str, Any]:
    """嵌套字典展平为一行 CSV 记录，键用 "." 连接。

    Args:
        value: 报告字典。
        prefix: 递归时的键前缀。
    """
    flat: dict[str, Any] = {}
    for key, item in value.items():
        name = f"{prefix}{key}"
        if isinstance(item, Mapping):
            flat.update(flatten_record(item, prefix=f"{name}."))
        else:
            flat[name] = to_jsonable(item)
    return flat
