"""Intrinsic decomposition of non-Lambertian objects into albedo, shading and specular layers."""

__version__ = "0.1.0"
