"""Key/value configuration grammar shared by parameter and scenario files.

One entry per line::

    section.key = value [unit]   # comment

Values are floats, integers, bare words, or comma-separated lists of those.
The optional bracketed unit is converted to the key's canonical SI unit;
only pressure and temperature admit non-SI units.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from pathlib import Path

__all__ = [
    "ConfigError",
    "ParseError",
    "ValidationError",
    "Entry",
    "parse_text",
    "parse_file",
    "parse_override",
    "convert_unit",
    "format_value",
]


class ConfigError(ValueError):
    """Base class for configuration problems."""


class ParseError(ConfigError):
    pass


class ValidationError(ConfigError):
    """A value violates a physical or structural invariant.

    ``key`` names the offending ``section.key``.
    """

    def __init__(self, key: str, message: str):
        self.key = key
        super().__init__(f"{key}: {message}")


@dataclass(frozen=True)
class Entry:
    section: str
    key: str
    raw: str
    unit: str | None
    source: str = "<string>"
    line: int = 0

    @property
    def name(self) -> str:
        return f"{self.section}.{self.key}"


_LINE = re.compile(
    r"""^(?P<section>[A-Za-z_]\w*)\.(?P<key>[A-Za-z_]\w*)\s*=\s*
        (?P<value>[^\[]*?)\s*(?:\[(?P<unit>[^\]]*)\])?\s*$""",
    re.VERBOSE,
)


def _parse_line(line: str, source: str, lineno: int) -> Entry | None:
    text = line.split("#", 1)[0].strip()
    if not text:
        return None
    m = _LINE.match(text)
    if m is None or not m.group("value"):
        raise ParseError(f"{source}:{lineno}: cannot parse {line.strip()!r}")
    unit = m.group("unit")
    return Entry(
        m.group("section"),
        m.group("key"),
        m.group("value"),
        unit.strip() if unit is not None else None,
        source,
        lineno,
    )


def parse_text(text: str, source: str = "<string>") -> dict[str, Entry]:
    """Parse configuration text into ``{"section.key": Entry}`` in file order."""
    entries: dict[str, Entry] = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        entry = _parse_line(line, source, lineno)
        if entry is None:
            continue
        if entry.name in entries:
            first = entries[entry.name]
            raise ParseError(
                f"{source}:{lineno}: duplicate key {entry.name} (first at line {first.line})"
            )
        entries[entry.name] = entry
    return entries


def parse_file(path: str | Path) -> dict[str, Entry]:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from exc
    return parse_text(text, source=str(path))


def parse_override(spec: str) -> Entry:
    """Parse a command-line ``section.key=value [unit]`` override."""
    entry = _parse_line(spec, "--override", 0)
    if entry is None:
        raise ParseError(f"--override: empty override {spec!r}")
    return entry


# canonical unit -> {accepted unit: (scale, offset)}; SI = value*scale + offset
_CONVERSIONS: dict[str, dict[str, tuple[float, float]]] = {
    "Pa": {"Pa": (1.0, 0.0), "kPa": (1e3, 0.0), "bar": (1e5, 0.0), "atm": (101325.0, 0.0)},
    "K": {"K": (1.0, 0.0), "degC": (1.0, 273.15), "C": (1.0, 273.15), "°C": (1.0, 273.15)},
}


def _normalize(unit: str) -> str:
    return unit.replace(" ", "").replace("·", "*")


def convert_unit(value: float, unit: str | None, canonical: str, name: str) -> float:
    """Convert ``value`` given in ``unit`` to the canonical unit of ``name``."""
    if unit is None or _normalize(unit) == _normalize(canonical):
        return value
    table = _CONVERSIONS.get(canonical)
    if table is None or unit not in table:
        raise ValidationError(name, f"unit [{unit}] is not convertible to [{canonical}]")
    scale, offset = table[unit]
    return value * scale + offset


def format_value(value) -> str:
    """Render a value so that parsing it back is bitwise exact."""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, (list, tuple)):
        return ", ".join(format_value(v) for v in value)
    return str(value)
