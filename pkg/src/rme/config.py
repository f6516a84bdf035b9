"""Plain-text experiment configuration.

The on-disk format is flat `key = value` lines with `#` comments.  Dotted
keys group settings (`model.num_heads = 4`); values are typed on read:
booleans, ints, floats, comma-separated tuples, and everything else a
string.  Double quotes force a value to stay a string.  The same syntax is
accepted on the command line as `--set key=value` overrides, so a config
file and a flag pile into one dict with the flag winning.
"""

from __future__ import annotations

import re

from .errors import ConfigurationError

_INT_RE = re.compile(r"[+-]?\d+")

Value = bool | int | float | str | tuple


def parse_scalar(text: str):
    text = text.strip()
    if len(text) >= 2 and text[0] == '"' and text[-1] == '"':
        return text[1:-1]
    if text == "true":
        return True
    if text == "false":
        return False
    if _INT_RE.fullmatch(text):
        return int(text)
    try:
        return float(text)
    except ValueError:
        return text


def parse_value(text: str) -> Value:
    text = text.strip()
    if text == "":
        raise ConfigurationError("empty value")
    # a quoted value is one string even if it contains commas
    if len(text) >= 2 and text[0] == '"' and text[-1] == '"':
        return text[1:-1]
    if "," in text:
        parts = [p.strip() for p in text.split(",")]
        if any(p == "" for p in parts):
            raise ConfigurationError(f"empty element in list value {text!r}")
        return tuple(parse_scalar(p) for p in parts)
    return parse_scalar(text)


_KEY_RE = re.compile(r"[A-Za-z_][A-Za-z0-9_]*(\.[A-Za-z_][A-Za-z0-9_]*)*")


def parse_config_text(text: str, source: str = "<config>") -> dict[str, Value]:
    out: dict[str, Value] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigurationError(f"{source}:{lineno}: expected key = value, got {raw!r}")
        key, _, value = line.partition("=")
        key = key.strip()
        if not _KEY_RE.fullmatch(key):
            raise ConfigurationError(f"{source}:{lineno}: bad key {key!r}")
        if key in out:
            raise ConfigurationError(f"{source}:{lineno}: duplicate key {key!r}")
        try:
            out[key] = parse_value(value)
        except ConfigurationError as exc:
            raise ConfigurationError(f"{source}:{lineno}: {exc}") from None
    return out


def load_config(path) -> dict[str, Value]:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigurationError(f"cannot read config {path}: {exc}") from None
    return parse_config_text(text, source=str(path))


def apply_overrides(cfg: dict[str, Value], pairs: list[str]) -> dict[str, Value]:
    """Overlay `key=value` strings (from --set flags) onto a config dict."""
    merged = dict(cfg)
    for pair in pairs:
        if "=" not in pair:
            raise ConfigurationError(f"override must look like key=value, got {pair!r}")
        key, _, value = pair.partition("=")
        key = key.strip()
        if not _KEY_RE.fullmatch(key):
            raise ConfigurationError(f"bad override key {key!r}")
        merged[key] = parse_value(value)
    return merged


def take(cfg: dict[str, Value], key: str, default=None, kind=None):
    """Read one typed setting, with int -> float widening.

    `kind` is the expected python type; a missing key returns `default`.
    """
    if key not in cfg:
        return default
    value = cfg[key]
    if kind is None:
        return value
    if kind is float and isinstance(value, int) and not isinstance(value, bool):
        return float(value)
    if kind is tuple and not isinstance(value, tuple):
        # a single-element list has no comma in the file; wrap it
        value = (value,)
    if not isinstance(value, kind) or (kind is int and isinstance(value, bool)):
        raise ConfigurationError(
            f"config key {key!r} should be {kind.__name__}, got {value!r}")
    return value
