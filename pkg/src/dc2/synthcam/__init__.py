"""Synthetic dual-camera capture: scenes, defocus rendering, dataset IO."""

from .rig import CameraRig, default_rig
from .scenes import Layer, SceneConfig, SceneRGBD, generate_scene, compose_view
from .render import (
    DualCapture,
    FocusStack,
    disc_kernel,
    render_defocused,
    render_dual_capture,
    generate_stack,
    focus_stack_merge,
    merge_by_sharpness,
)
from .dataset import build_dataset, write_scene, load_scene, list_scenes, LoadedScene

__all__ = [
    "CameraRig", "default_rig",
    "Layer", "SceneConfig", "SceneRGBD", "generate_scene", "compose_view",
    "DualCapture", "FocusStack", "disc_kernel", "render_defocused",
    "render_dual_capture", "generate_stack", "focus_stack_merge", "merge_by_sharpness",
    "build_dataset", "write_scene", "load_scene", "list_scenes", "LoadedScene",
]
