"""Scene configs: text parsing, rendering, programmatic building, placement."""

from __future__ import annotations

import os

from qpsim.config.builder import SceneBuilder
from qpsim.config.errors import ConfigError, CyclicJointGraph, ParseError, ValidationError
from qpsim.config.placement import anchor_separation, default_angles, default_qp, traversal
from qpsim.config.schema import config_to_document, degrees_exact, document_to_config
from qpsim.config.textformat import ConfigDocument, parse_document, render_document
from qpsim.physics.types import SystemConfig


def parse_config(text: str):
    """Text in the scene format to a validated :class:`SystemConfig`."""
    return document_to_config(parse_document(text))


def render_config(cfg) -> str:
    """Inverse of :func:`parse_config`: ``parse_config(render_config(c)) == c``."""
    return render_document(config_to_document(cfg)) + "\n"


def load_config(path) -> SystemConfig:
    with open(path, encoding="utf-8") as fh:
        return parse_config(fh.read())


SCENE_DIR = os.path.join(os.path.dirname(os.path.dirname(__file__)), "envs", "scenes")


def scene_path(name: str) -> str:
    """Path of a bundled ``.bxc`` scene file."""
    return os.path.join(SCENE_DIR, name if name.endswith(".bxc") else name + ".bxc")


__all__ = [
    "ConfigDocument", "ConfigError", "CyclicJointGraph", "ParseError", "SceneBuilder", "ValidationError",
    "anchor_separation", "config_to_document", "default_angles", "default_qp", "degrees_exact",
    "document_to_config", "load_config", "parse_config", "parse_document", "render_config",
    "render_document", "scene_path", "traversal",
]
