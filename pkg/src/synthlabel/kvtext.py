"""Canonical key-value text: the one serialization used for hashing.

Flat mapping form: sorted ``key = value`` lines.  Sectioned form: sorted
``[section]`` headers, each followed by its sorted keys.  Values are plain
strings; typed parsing is the caller's job.  Canonical bytes are stable, so
SHA-256 over them identifies a configuration.
"""

from __future__ import annotations

import hashlib

from .errors import FormatError


def dumps_flat(mapping: dict[str, str]) -> str:
    lines = []
    for key in sorted(mapping):
        _check_key(key)
        lines.append(f"{key} = {_check_value(mapping[key])}")
    return "\n".join(lines) + "\n" if lines else ""


def dumps_sections(sections: dict[str, dict[str, str]]) -> str:
    chunks = []
    for name in sorted(sections):
        _check_key(name)
        chunks.append(f"[{name}]")
        body = dumps_flat(sections[name])
        if body:
            chunks.append(body.rstrip("\n"))
    return "\n".join(chunks) + "\n" if chunks else ""


def loads_flat(text: str) -> dict[str, str]:
    out: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise FormatError(f"line {lineno}: expected 'key = value', got {raw!r}")
        key, value = line.split("=", 1)
        key = key.strip()
        _check_key(key)
        if key in out:
            raise FormatError(f"line {lineno}: duplicate key {key!r}")
        out[key] = value.strip()
    return out


def loads_sections(text: str) -> dict[str, dict[str, str]]:
    sections: dict[str, dict[str, str]] = {}
    current: dict[str, str] | None = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if line.startswith("[") and line.endswith("]"):
            name = line[1:-1].strip()
            _check_key(name)
            if name in sections:
                raise FormatError(f"line {lineno}: duplicate section [{name}]")
            current = {}
            sections[name] = current
            continue
        if current is None:
            raise FormatError(f"line {lineno}: key outside any [section]")
        if "=" not in line:
            raise FormatError(f"line {lineno}: expected 'key = value', got {raw!r}")
        key, value = line.split("=", 1)
        key = key.strip()
        _check_key(key)
        if key in current:
            raise FormatError(f"line {lineno}: duplicate key {key!r}")
        current[key] = value.strip()
    return sections


def sha256_text(text: str) -> str:
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


def _check_key(key: str) -> None:
    if not key or any(ch in key for ch in "[]=#\n") or key != key.strip():
        raise FormatError(f"invalid key {key!r}")


def _check_value(value: str) -> str:
    if "\n" in value or "#" in value:
        raise FormatError(f"invalid value {value!r}")
    return value.strip()
