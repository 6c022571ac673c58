"""Inference service: rendering engine, defocus specs, session store, HTTP API."""

from .engine import RenderEngine
from .specs import DefocusSpec, build_defocus_map, DEFAULT_MAX_RADIUS
from .store import Session, SessionStore
from .app import create_app

__all__ = [
    "RenderEngine", "DefocusSpec", "build_defocus_map", "DEFAULT_MAX_RADIUS",
    "Session", "SessionStore", "create_app",
]
