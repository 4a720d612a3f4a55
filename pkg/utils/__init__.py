from .json_utils import flatten_record, to_jsonable

__all__ = ["flatten_record", "to_jsonable"]
