"""
keyvalue_config.py
------------------

Flat key-value block files.

    # comment
    [run]
    input = cohort.csv
    seed = 7

    [event]
    name = Christmas
    date = 2016-12-25

Sections are declared with the keys they accept; some may repeat ([event],
[effect]). Unknown sections and keys are rejected with the line they appear
on. Values may be quoted, and a `#` preceded by whitespace starts a comment.

Classes:
- ConfigBlock: One [section] with its raw values and line numbers

Functions:
- parse_config_text / read_config_file: text or file -> blocks
- bind_dataclass: typed construction of a dataclass from a block
- event_from_block: EventSpec from an [event] block
- load_simulation_spec: [cohort] + [effect] blocks -> CohortSpec, effects
"""

from __future__ import annotations
import re
from dataclasses import MISSING, dataclass, field, fields
from datetime import date
from pathlib import Path
from typing import Dict, Iterable, List, Mapping, Optional, Tuple

from activity_types import EventSpec
from cohort_simulator import CohortSpec, EventEffect
from error_handling import ConfigError, MetricConfig

_SECTION_RE = re.compile(r"^\[\s*([A-Za-z_][A-Za-z0-9_]*)\s*\]$")
_TRUE = {"1", "true", "yes", "on"}
_FALSE = {"0", "false", "no", "off"}

EVENT_KEYS = ("name", "date", "alpha_days")


@dataclass
class ConfigBlock:
    """Raw string values of one section, with the line each key came from."""
    section: str
    line: int
    values: Dict[str, str] = field(default_factory=dict)
    lines: Dict[str, int] = field(default_factory=dict)
    source: str = "<config>"

    def __contains__(self, key: str) -> bool:
        return key in self.values

    def where(self, key: str) -> str:
        return f"{self.source}:{self.lines.get(key, self.line)}"

    def _fail(self, key: str, message: str) -> ConfigError:
        return ConfigError(f"{self.where(key)}: [{self.section}] {key}: {message}")

    def get_str(self, key: str, default: Optional[str] = None) -> Optional[str]:
        return self.values.get(key, default)

    def get_int(self, key: str, default: Optional[int] = None) -> Optional[int]:
        if key not in self.values:
            return default
        try:
            return int(self.values[key])
        except ValueError:
            raise self._fail(key, f"expected an integer, got '{self.values[key]}'")

    def get_float(self, key: str, default: Optional[float] = None) -> Optional[float]:
        if key not in self.values:
            return default
        try:
            return float(self.values[key])
        except ValueError:
            raise self._fail(key, f"expected a number, got '{self.values[key]}'")

    def get_bool(self, key: str, default: Optional[bool] = None) -> Optional[bool]:
        if key not in self.values:
            return default
        text = self.values[key].lower()
        if text in _TRUE:
            return True
        if text in _FALSE:
            return False
        raise self._fail(key, f"expected true/false, got '{self.values[key]}'")

    def get_date(self, key: str, default: Optional[date] = None) -> Optional[date]:
        if key not in self.values:
            return default
        try:
            return date.fromisoformat(self.values[key])
        except ValueError:
            raise self._fail(key, f"expected a YYYY-MM-DD date, got '{self.values[key]}'")

    def get_list(self, key: str, default: Optional[List[str]] = None) -> Optional[List[str]]:
        if key not in self.values:
            return default
        return [item.strip() for item in self.values[key].split(",") if item.strip()]

    def require(self, key: str) -> str:
        if key not in self.values:
            raise ConfigError(f"{self.source}:{self.line}: [{self.section}] is missing required key '{key}'")
        return self.values[key]


def _parse_value(raw: str) -> str:
    value = raw.strip()
    if len(value) >= 2 and value[0] == value[-1] and value[0] in "\"'":
        return value[1:-1]
    return re.split(r"\s+#", value, maxsplit=1)[0].strip()


def parse_config_text(text: str, schema: Mapping[str, Iterable[str]], repeatable: Iterable[str] = (),
                      source: str = "<config>") -> List[ConfigBlock]:
    """
    Parse block text against a schema {section: allowed keys}.

    Raises:
        ConfigError: unknown section/key, duplicate key or section, stray line
    """
    allowed = {name: set(keys) for name, keys in schema.items()}
    repeatable = set(repeatable)
    blocks: List[ConfigBlock] = []
    seen = set()
    current: Optional[ConfigBlock] = None
    for number, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        header = _SECTION_RE.match(line)
        if header:
            name = header.group(1).lower()
            if name not in allowed:
                raise ConfigError(f"{source}:{number}: unknown section [{name}] "
                                  f"(expected one of {sorted(allowed)})")
            if name in seen and name not in repeatable:
                raise ConfigError(f"{source}:{number}: section [{name}] may appear only once")
            seen.add(name)
            current = ConfigBlock(section=name, line=number, source=source)
            blocks.append(current)
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{number}: expected 'key = value', got '{line}'")
        if current is None:
            raise ConfigError(f"{source}:{number}: key outside of any [section]")
        key, value = line.split("=", 1)
        key = key.strip().lower()
        if key not in allowed[current.section]:
            raise ConfigError(f"{source}:{number}: unknown key '{key}' in [{current.section}]")
        if key in current.values:
            raise ConfigError(f"{source}:{number}: duplicate key '{key}' in [{current.section}]")
        current.values[key] = _parse_value(value)
        current.lines[key] = number
    return blocks


def read_config_file(path, schema: Mapping[str, Iterable[str]], repeatable: Iterable[str] = ()) -> List[ConfigBlock]:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    return parse_config_text(path.read_text(encoding="utf-8"), schema, repeatable, source=str(path))


# -------------------------
# Typed binding
# -------------------------
def dataclass_keys(cls) -> Tuple[str, ...]:
    return tuple(f.name for f in fields(cls) if f.init)


def _convert(block: ConfigBlock, key: str, type_name: str):
    optional = type_name.startswith("Optional[")
    base = type_name[len("Optional["):-1] if optional else type_name
    if optional and block.values[key].lower() in ("", "none"):
        return None
    if base == "int":
        return block.get_int(key)
    if base == "float":
        return block.get_float(key)
    if base == "bool":
        return block.get_bool(key)
    if base == "date":
        return block.get_date(key)
    return block.get_str(key)


def bind_dataclass(cls, block: ConfigBlock, **overrides):
    """
    Build cls from a block, converting values by the field annotations.

    Keys missing from the block keep the dataclass defaults; fields without a
    default must be present.
    """
    kwargs = {}
    for f in fields(cls):
        if not f.init:
            continue
        if f.name in overrides:
            kwargs[f.name] = overrides[f.name]
        elif f.name in block:
            type_name = f.type if isinstance(f.type, str) else getattr(f.type, "__name__", str(f.type))
            kwargs[f.name] = _convert(block, f.name, type_name)
        elif f.default is MISSING and f.default_factory is MISSING:
            block.require(f.name)
    try:
        return cls(**kwargs)
    except ConfigError as e:
        raise ConfigError(f"{block.source}:{block.line}: [{block.section}] {e}")


def event_from_block(block: ConfigBlock, default_alpha: int = MetricConfig.DEFAULT_ALPHA_DAYS) -> EventSpec:
    name = block.require("name")
    block.require("date")
    try:
        return EventSpec(name=name, event_date=block.get_date("date"),
                         alpha_days=block.get_int("alpha_days", default_alpha))
    except ConfigError as e:
        raise ConfigError(f"{block.source}:{block.line}: [event] {e}")


def load_simulation_spec(path, seed: Optional[int] = None) -> Tuple[CohortSpec, List[EventEffect]]:
    """
    [cohort] (once, optional) and [effect] (repeated) blocks.

    seed overrides the file's cohort seed.
    """
    schema = {"cohort": dataclass_keys(CohortSpec), "effect": dataclass_keys(EventEffect)}
    blocks = read_config_file(path, schema, repeatable=("effect",))
    overrides = {} if seed is None else {"seed": int(seed)}
    cohort_blocks = [b for b in blocks if b.section == "cohort"]
    cohort_block = cohort_blocks[0] if cohort_blocks else ConfigBlock("cohort", 0, source=str(path))
    spec = bind_dataclass(CohortSpec, cohort_block, **overrides)
    effects = [bind_dataclass(EventEffect, b) for b in blocks if b.section == "effect"]
    return spec, effects
