"""
Plain-text key=value manifests.

Written line by line, read back with python-dotenv so the same parser serves
config files and manifests.
"""
import os
from typing import Any, Dict, Mapping

from dotenv import dotenv_values


def _format_value(value: Any) -> str:
    if isinstance(value, (list, tuple)):
        return ",".join(_format_value(v) for v in value)
    if isinstance(value, float):
        return repr(value)
    return str(value).replace("\n", " ")


def write_manifest(path: str, entries: Mapping[str, Any]) -> str:
    """Write ``entries`` as sorted key=value lines; returns the path."""
    directory = os.path.dirname(path)
    if directory:
        os.makedirs(directory, exist_ok=True)
    with open(path, "w", encoding="utf-8") as handle:
        for key in sorted(entries):
            handle.write(f"{key}={_format_value(entries[key])}\n")
    return path


def read_manifest(path: str) -> Dict[str, str]:
    """Read a key=value file into a dict of strings."""
    if not os.path.exists(path):
        raise FileNotFoundError(path)
    return {key: ("" if value is None else value) for key, value in dotenv_values(path).items()}


def flatten(entries: Mapping[str, Any], prefix: str = "") -> Dict[str, Any]:
    """Nested mappings -> dotted keys (``{"a": {"b": 1}}`` -> ``{"a.b": 1}``)."""
    flat: Dict[str, Any] = {}
    for key, value in entries.items():
        name = f"{prefix}{key}"
        if isinstance(value, Mapping):
            flat.update(flatten(value, f"{name}."))
        elif value is not None:
            flat[name] = value
    return flat
