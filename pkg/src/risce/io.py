"""Plain-text config parsing and CSV/JSON result serialization."""

from __future__ import annotations

import csv
import dataclasses
import io
import json
import math

from .harness import AggregateResult, ResultRow
from .system_model import SystemConfig

__all__ = [
    "CSV_HEADER",
    "ConfigError",
    "parse_config_text",
    "load_config",
    "apply_overrides",
    "to_csv",
    "to_json",
    "from_csv",
    "from_json",
    "dumps",
    "loads",
]

CSV_HEADER = (
    "sweep_axis",
    "sweep_value",
    "algorithm",
    "nmse_H",
    "nmse_G",
    "nmse_E",
    "mean_iterations",
    "flops",
    "runtime_s",
    "runs",
    "non_converged",
)
_INT_FIELDS = ("runs", "non_converged")
_FLOAT_FIELDS = ("nmse_H", "nmse_G", "nmse_E", "mean_iterations", "flops", "runtime_s")

_CONFIG_TYPES = {f.name: f.type for f in dataclasses.fields(SystemConfig)}
_ALIASES = {"runs": "omega"}


class ConfigError(ValueError):
    """Invalid configuration; ``key`` names the offending entry when known."""

    def __init__(self, message, key=None):
        super().__init__(message)
        self.key = key


def _coerce(key, raw):
    kind = _CONFIG_TYPES[key]
    text = raw.strip()
    try:
        if kind == "int":
            value = float(text)
            if not value.is_integer():
                raise ValueError
            return int(value)
        if kind == "float":
            return float(text)
    except ValueError:
        raise ConfigError(f"invalid value for {key!r}: {raw!r}", key) from None
    return text


def _parse_pairs(pairs, origin):
    values = {}
    for lineno, item in pairs:
        if "=" not in item:
            raise ConfigError(f"{origin}{lineno}: expected key=value, got {item!r}")
        key, raw = item.split("=", 1)
        key = key.strip()
        key = _ALIASES.get(key, key)
        if key not in _CONFIG_TYPES:
            valid = ", ".join(sorted(set(_CONFIG_TYPES) | set(_ALIASES)))
            raise ConfigError(f"unknown config key {key!r} (valid keys: {valid})", key)
        values[key] = _coerce(key, raw)
    return values


def parse_config_text(text: str, origin: str = "line ") -> dict:
    """Parse ``key = value`` lines; ``#`` starts a comment."""
    pairs = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if line:
            pairs.append((lineno, line))
    return _parse_pairs(pairs, origin)


def load_config(path) -> dict:
    with open(path, encoding="utf-8") as fh:
        return parse_config_text(fh.read(), origin=f"{path}:")


def apply_overrides(base: SystemConfig, file_values=None, overrides=()) -> SystemConfig:
    """Layer config-file values, then ``key=value`` overrides, onto ``base``."""
    values = dict(file_values or {})
    values.update(_parse_pairs([("", o) for o in overrides], "--set "))
    try:
        return base.replace(**values)
    except ValueError as exc:
        # the dataclass validators name the field first
        key = str(exc).split(" ", 1)[0]
        raise ConfigError(str(exc), key if key in _CONFIG_TYPES else None) from None


# -- results -----------------------------------------------------------------


def _fmt(value):
    if value is None:
        return ""
    if isinstance(value, str):
        return value
    if isinstance(value, bool):
        return str(int(value))
    if isinstance(value, int):
        return str(value)
    return format(float(value), ".17g")


def _row_values(row: ResultRow):
    return [getattr(row, name) for name in CSV_HEADER]


def to_csv(result: AggregateResult) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_HEADER)
    for row in result.rows:
        writer.writerow([_fmt(v) for v in _row_values(row)])
    return buf.getvalue()


def _json_value(name, value):
    if name in ("sweep_axis", "algorithm"):
        return json.dumps(value)
    if value is None:
        return "null"
    if isinstance(value, int):
        return str(value)
    value = float(value)
    if not math.isfinite(value):
        # JSON has no literal for these; strings parse back through float()
        return json.dumps(str(value))
    return format(value, ".17g")


def to_json(result: AggregateResult) -> str:
    objs = []
    for row in result.rows:
        body = ", ".join(f"{json.dumps(name)}: {_json_value(name, getattr(row, name))}" for name in CSV_HEADER)
        objs.append("  {" + body + "}")
    if not objs:
        return "[]\n"
    return "[\n" + ",\n".join(objs) + "\n]\n"


def _sweep_value(axis, value):
    if value is None or value == "":
        return None
    if axis in ("N", "K"):
        return int(float(value))
    return float(value)


def _build_row(raw) -> ResultRow:
    missing = [name for name in CSV_HEADER if name not in raw]
    if missing:
        raise ValueError(f"result row is missing fields {missing}")
    kwargs = {"sweep_axis": raw["sweep_axis"], "algorithm": raw["algorithm"]}
    kwargs["sweep_value"] = _sweep_value(raw["sweep_axis"], raw["sweep_value"])
    for name in _FLOAT_FIELDS:
        v = raw[name]
        kwargs[name] = None if v is None or v == "" else float(v)
    for name in _INT_FIELDS:
        kwargs[name] = int(raw[name])
    return ResultRow(**kwargs)


def from_csv(text: str) -> AggregateResult:
    reader = csv.DictReader(io.StringIO(text))
    if tuple(reader.fieldnames or ()) != CSV_HEADER:
        raise ValueError(f"unexpected CSV header {reader.fieldnames}")
    return AggregateResult(rows=[_build_row(r) for r in reader])


def from_json(text: str) -> AggregateResult:
    data = json.loads(text)
    if not isinstance(data, list):
        raise ValueError("JSON results must be an array of row objects")
    return AggregateResult(rows=[_build_row(r) for r in data])


def dumps(result: AggregateResult, fmt: str = "csv") -> str:
    if fmt == "csv":
        return to_csv(result)
    if fmt == "json":
        return to_json(result)
    raise ValueError(f"unknown output format {fmt!r}")


def loads(text: str, fmt: str = "csv") -> AggregateResult:
    if fmt == "csv":
        return from_csv(text)
    if fmt == "json":
        return from_json(text)
    raise ValueError(f"unknown output format {fmt!r}")
