"""Flat `key = value` config files.

Grammar (one assignment per line; a TOML-compatible subset):

    # comment lines and blank lines are ignored
    key = value          # trailing comments allowed
    key ::= [A-Za-z_][A-Za-z0-9_]*
    value ::= "quoted string" | true | false | integer | float
            | (number, number, ...)   # tuple of numbers
            | bare-string              # anything else, taken verbatim

Precedence when assembling a run: built-in defaults < config file < command
line flags.
"""

from __future__ import annotations

import re

from .errors import ConfigError

_KEY_RE = re.compile(r"[A-Za-z_][A-Za-z0-9_]*$")
_INT_RE = re.compile(r"[+-]?\d+$")
_FLOAT_RE = re.compile(r"[+-]?(\d+\.\d*|\.\d+|\d+)([eE][+-]?\d+)?$")


def _strip_comment(line: str) -> str:
    out = []
    in_quote = False
    for ch in line:
        if ch == '"':
            in_quote = not in_quote
        elif ch == "#" and not in_quote:
            break
        out.append(ch)
    return "".join(out)


def _parse_number(raw: str, where: str):
    if _INT_RE.match(raw):
        return int(raw)
    if _FLOAT_RE.match(raw):
        return float(raw)
    raise ConfigError(f"{where}: expected a number, got {raw!r}")


def _parse_value(raw: str, where: str):
    raw = raw.strip()
    if not raw:
        raise ConfigError(f"{where}: empty value")
    if raw.startswith('"'):
        if not raw.endswith('"') or len(raw) < 2:
            raise ConfigError(f"{where}: unterminated string {raw!r}")
        return raw[1:-1]
    if raw.startswith("("):
        if not raw.endswith(")"):
            raise ConfigError(f"{where}: unterminated tuple {raw!r}")
        items = [s.strip() for s in raw[1:-1].split(",") if s.strip()]
        return tuple(_parse_number(s, where) for s in items)
    if raw in ("true", "false"):
        return raw == "true"
    if _INT_RE.match(raw):
        return int(raw)
    if _FLOAT_RE.match(raw):
        return float(raw)
    return raw  # bare string


def parse_flat(text: str) -> dict:
    """Parse flat config text into {key: typed value}."""
    values: dict = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = _strip_comment(line).strip()
        if not stripped:
            continue
        if "=" not in stripped:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {line!r}")
        key, _, raw = stripped.partition("=")
        key = key.strip()
        if not _KEY_RE.match(key):
            raise ConfigError(f"line {lineno}: invalid key {key!r}")
        values[key] = _parse_value(raw, f"line {lineno}")
    return values


def load_flat(path) -> dict:
    try:
        with open(path) as fh:
            return parse_flat(fh.read())
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from exc


def format_flat(values: dict) -> str:
    """Render a dict back to the flat grammar (sorted keys, lossless)."""
    lines = []
    for key, value in sorted(values.items()):
        if isinstance(value, bool):
            rendered = "true" if value else "false"
        elif isinstance(value, tuple):
            rendered = "(" + ", ".join(repr(v) if isinstance(v, float) else str(v) for v in value) + ")"
        elif isinstance(value, str):
            rendered = f'"{value}"'
        elif isinstance(value, float):
            rendered = repr(value)
        else:
            rendered = str(value)
        lines.append(f"{key} = {rendered}")
    return "\n".join(lines) + "\n"
