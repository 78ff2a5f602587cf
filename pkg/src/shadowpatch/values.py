"""Runtime value helpers for the handler language.

Values are plain Python objects: None (null), int, bool, str, dict (record)
and list. Declared types are {int, bool, str, record, list, any}; null
inhabits every declared type.
"""

from __future__ import annotations

import copy
import json

DEFAULTS = {"int": 0, "str": "", "bool": False, "record": {}, "list": []}


def deep_copy(value):
    return copy.deepcopy(value)


def type_name(value) -> str:
    if value is None:
        return "null"
    if isinstance(value, bool):
        return "bool"
    if isinstance(value, int):
        return "int"
    if isinstance(value, str):
        return "str"
    if isinstance(value, dict):
        return "record"
    if isinstance(value, list):
        return "list"
    raise TypeError(f"not a handler-language value: {value!r}")


def compatible(dtype: str, other: str) -> bool:
    """Exact declared-type match; `any` is compatible with everything."""
    return dtype == "any" or other == "any" or dtype == other


def value_matches(dtype: str, value) -> bool:
    if dtype == "any" or value is None:
        return True
    return type_name(value) == dtype


def to_text(value) -> str:
    """Canonical rendering used by the str() builtin and respond bodies."""
    if value is None:
        return "null"
    if value is True:
        return "true"
    if value is False:
        return "false"
    if isinstance(value, int):
        return str(value)
    if isinstance(value, str):
        return value
    if isinstance(value, dict):
        inner = ", ".join(f"{k}: {to_text(v)}" for k, v in value.items())
        return "{" + inner + "}"
    if isinstance(value, list):
        return "[" + ", ".join(to_text(v) for v in value) + "]"
    raise TypeError(f"not a handler-language value: {value!r}")


def to_json(value) -> str:
    """Deterministic JSON used for digests and snapshots."""
    return json.dumps(value, sort_keys=True, separators=(",", ":"))
