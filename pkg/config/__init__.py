from .constants import EVAL_SCHEMA_VERSION, Y_SAMPLING_PRESETS
from .settings import setting

__all__ = ["EVAL_SCHEMA_VERSION", "Y_SAMPLING_PRESETS", "setting"]
