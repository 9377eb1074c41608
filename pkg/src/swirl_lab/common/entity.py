#!/usr/bin/env python3
from __future__ import annotations

from abc import ABCMeta
from typing import Any

from attrs import define, evolve
from cattrs import Converter
from cattrs.preconf.json import make_converter

__all__ = [
    "BaseEntity",
    "json_converter",
    "parse_bool",
    "parse_float_tuple",
    "precise_converter",
    "text_converter"
]

TRUE_WORDS = ("1", "true", "yes", "on")
FALSE_WORDS = ("0", "false", "no", "off")
NONE_WORDS = ("", "none", "null")


@define
class BaseEntity(metaclass=ABCMeta):
    def __copy__(self):
        return evolve(self)

    def copy(self, **changes):
        return evolve(self, **changes)


def parse_bool(value: Any) -> bool:
    if isinstance(value, bool):
        return value
    word = str(value).strip().lower()
    if word in TRUE_WORDS:
        return True
    if word in FALSE_WORDS:
        return False
    raise ValueError(f"'{value}' is not a boolean")


def parse_float_tuple(value: Any) -> tuple[float, ...]:
    if isinstance(value, str):
        value = [v for v in (p.strip() for p in value.split(",")) if v]
    return tuple(float(v) for v in value)


def _parse_optional_int(value: Any, _type: type) -> int | None:
    if value is None or (isinstance(value, str) and value.strip().lower() in NONE_WORDS):
        return None
    return int(value)


def _make_text_converter() -> Converter:
    converter = Converter()
    converter.register_structure_hook(bool, lambda v, _: parse_bool(v))
    converter.register_structure_hook(int, lambda v, _: int(str(v).strip()))
    converter.register_structure_hook(float, lambda v, _: float(str(v).strip()))
    converter.register_structure_hook_func(lambda t: t == tuple[float, ...], lambda v, _: parse_float_tuple(v))
    converter.register_structure_hook_func(lambda t: t == (int | None), _parse_optional_int)
    return converter


def _make_precise_converter():
    converter = make_converter()
    converter.register_unstructure_hook(float, lambda v: format(v, ".17g"))
    converter.register_structure_hook(float, lambda v, _: float(v))
    return converter


json_converter = make_converter(omit_if_default=True)
# key=value config text
text_converter = _make_text_converter()
# floats as 17 significant digits so checkpoint headers round-trip bitwise
precise_converter = _make_precise_converter()
