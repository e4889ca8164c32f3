"""Declarative run configuration: a flat-plus-sections key=value format.

Grammar (one statement per line):

    # comment                 blank lines and #-to-eol comments are skipped
    key = value               top-level key
    [section]                 single-level section header
    key = value               key inside the current section

Values: double-quoted strings ("..." with \\" and \\\\ escapes), booleans
(true/false), integers, floats (anything int() rejects and float() accepts).
Keys are addressed throughout as dotted paths ("train.total_steps"); the
resolved configuration echoes back in the same grammar via format_config.
Precedence: file < --set overrides.
"""

from __future__ import annotations

import re

from .errors import ConfigError

_KEY_RE = re.compile(r"^[A-Za-z_][A-Za-z0-9_]*$")


def parse_scalar(text: str, where: str = "value"):
    text = text.strip()
    if not text:
        raise ConfigError(f"{where}: empty value")
    if text.startswith('"'):
        if not text.endswith('"') or len(text) < 2:
            raise ConfigError(f"{where}: unterminated string {text!r}")
        body = text[1:-1]
        out = []
        i = 0
        while i < len(body):
            ch = body[i]
            if ch == "\\":
                if i + 1 >= len(body) or body[i + 1] not in '"\\':
                    raise ConfigError(f"{where}: bad escape in {text!r}")
                out.append(body[i + 1])
                i += 2
            elif ch == '"':
                raise ConfigError(f"{where}: stray quote in {text!r}")
            else:
                out.append(ch)
                i += 1
        return "".join(out)
    if text == "true":
        return True
    if text == "false":
        return False
    try:
        return int(text)
    except ValueError:
        pass
    try:
        return float(text)
    except ValueError:
        raise ConfigError(f"{where}: cannot parse value {text!r}") from None


def parse_config_text(text: str) -> dict:
    """Parse to a flat dict keyed by dotted paths."""
    out: dict = {}
    section = ""
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if line.startswith("["):
            if not line.endswith("]"):
                raise ConfigError(f"line {lineno}: malformed section header {line!r}")
            name = line[1:-1].strip()
            if not _KEY_RE.match(name):
                raise ConfigError(f"line {lineno}: bad section name {name!r}")
            section = name
            continue
        key, eq, value = line.partition("=")
        if not eq:
            raise ConfigError(f"line {lineno}: expected key = value, got {line!r}")
        key = key.strip()
        if not _KEY_RE.match(key):
            raise ConfigError(f"line {lineno}: bad key {key!r}")
        # strip a trailing comment outside strings
        value = value.strip()
        if not value.startswith('"') and "#" in value:
            value = value.split("#", 1)[0].strip()
        dotted = f"{section}.{key}" if section else key
        if dotted in out:
            raise ConfigError(f"line {lineno}: duplicate key {dotted}")
        out[dotted] = parse_scalar(value, f"line {lineno}")
    return out


def parse_config_file(path) -> dict:
    try:
        text = open(path, encoding="utf-8").read()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return parse_config_text(text)


def apply_overrides(config: dict, overrides) -> dict:
    """Apply --set key=value pairs. A bare key (no dot) matches a top-level
    key or, failing that, a unique key across sections."""
    out = dict(config)
    for item in overrides:
        key, eq, value = item.partition("=")
        if not eq:
            raise ConfigError(f"--set needs key=value, got {item!r}")
        key = key.strip()
        if "." not in key and key not in out:
            matches = [k for k in out if k.endswith("." + key)]
            if len(matches) > 1:
                raise ConfigError(f"--set {key}: ambiguous across {matches}")
            if matches:
                key = matches[0]
        out[key] = parse_scalar(value, f"--set {key}")
    return out


def _format_value(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, str):
        escaped = v.replace("\\", "\\\\").replace('"', '\\"')
        return f'"{escaped}"'
    if isinstance(v, float):
        return repr(v)
    return str(v)


def format_config(config: dict) -> str:
    """Render a flat dotted-key dict back to the file grammar."""
    top = {k: v for k, v in config.items() if "." not in k}
    sections: dict[str, dict] = {}
    for k, v in config.items():
        if "." in k:
            sec, _, name = k.partition(".")
            sections.setdefault(sec, {})[name] = v
    lines = [f"{k} = {_format_value(top[k])}" for k in sorted(top)]
    for sec in sorted(sections):
        lines.append("")
        lines.append(f"[{sec}]")
        lines.extend(f"{k} = {_format_value(v)}" for k, v in sorted(sections[sec].items()))
    return "\n".join(lines) + "\n"


def get(config: dict, key: str, default=None, required: bool = False):
    if key in config:
        return config[key]
    if required:
        raise ConfigError(f"config is missing required key {key!r}")
    return default
