from .envmap import EnvironmentMap, constant_env, direction_to_texel, generate_env
from .halton import halton, halton_sequence, sample_viewpoint
from .imageio import read_image, read_pfm, tonemap, write_pfm, write_png
from .scene import (CATEGORY_RANGES, PRIMITIVES, AlbedoTexture, IntrinsicTriple, Material,
                    SceneSpec, make_scene, render_scene, sample_material, sample_object)
from .shading import shade_diffuse, shade_specular, specular_contributions

__all__ = [
    "EnvironmentMap", "constant_env", "direction_to_texel", "generate_env",
    "halton", "halton_sequence", "sample_viewpoint",
    "read_image", "read_pfm", "tonemap", "write_pfm", "write_png",
    "CATEGORY_RANGES", "PRIMITIVES", "AlbedoTexture", "IntrinsicTriple", "Material",
    "SceneSpec", "make_scene", "render_scene", "sample_material", "sample_object",
    "shade_diffuse", "shade_specular", "specular_contributions",
]
