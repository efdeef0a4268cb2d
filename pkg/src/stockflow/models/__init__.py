"""Bundled demonstration models and environment configs.

Model sources written as ``builtin:<name>`` resolve into this package,
so configs stay portable across installs.
"""
from __future__ import annotations

from importlib import resources
from pathlib import Path

from ..errors import ConfigError


def _dir() -> Path:
    return Path(resources.files(__package__))


def model_names() -> list[str]:
    return sorted(p.stem for p in _dir().glob("*.xmile"))


def config_names() -> list[str]:
    return sorted(p.stem for p in _dir().glob("*.json"))


def model_path(name: str) -> Path:
    path = _dir() / f"{name}.xmile"
    if not path.is_file():
        raise ConfigError(
            f"unknown bundled model '{name}' (have: {', '.join(model_names())})")
    return path


def config_path(name: str) -> Path:
    path = _dir() / f"{name}.json"
    if not path.is_file():
        raise ConfigError(
            f"unknown bundled config '{name}' (have: {', '.join(config_names())})")
    return path
