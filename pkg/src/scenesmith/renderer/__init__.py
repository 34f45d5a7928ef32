from .bvh import Bvh, build_bvh
from .render import (
    RenderContext,
    RenderFrame,
    RenderSettings,
    apply_photometric_jitter,
    object_transform,
    object_vertices,
    render,
)

__all__ = [
    "Bvh", "build_bvh", "RenderContext", "RenderFrame", "RenderSettings",
    "apply_photometric_jitter", "object_transform", "object_vertices", "render",
]
