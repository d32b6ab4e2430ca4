"""Desk-scale scenes and gradient integrators."""

from .image import GradientImage, ImageError, read_pfm, write_image, write_image_csv, write_pfm
from .integrators import (MAX_DEPTH, SampleBatch, VarianceReport, carrier_index, declared_rays,
                          render_gradient_direct, render_gradient_gi, render_radiance,
                          render_samples, variance_benchmark)
from .scene import (Camera, EnvironmentLight, Material, ParamTexture, QuadLight, Scene,
                    SceneError, SceneObject, load_obj, load_scene, save_scene, scene_from_dict)

__all__ = [
    "GradientImage", "ImageError", "read_pfm", "write_image", "write_image_csv", "write_pfm",
    "MAX_DEPTH", "SampleBatch", "VarianceReport", "carrier_index", "declared_rays",
    "render_gradient_direct", "render_gradient_gi", "render_radiance", "render_samples",
    "variance_benchmark", "Camera", "EnvironmentLight", "Material", "ParamTexture", "QuadLight",
    "Scene", "SceneError", "SceneObject", "load_obj", "load_scene", "save_scene",
    "scene_from_dict",
]
