"""Procedural objects, materials and the intrinsic-layer renderer."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .envmap import EnvironmentMap
from .halton import sample_viewpoint
from .shading import shade_diffuse, shade_specular

PRIMITIVES = ("sphere", "box", "torus")
TEXTURE_KINDS = ("solid", "checker", "noise")
KS_RANGE = (0.0, 0.3)
NS_RANGE = (0.0, 300.0)
BACKGROUND = 0.0


@dataclass
class AlbedoTexture:
    """Solid-space RGB texture evaluated at object-space points."""

    kind: str
    colors: np.ndarray                 # (2, 3) in [0, 1]
    frequency: float = 1.0
    waves: np.ndarray = field(default_factory=lambda: np.zeros((0, 3)))
    phases: np.ndarray = field(default_factory=lambda: np.zeros(0))

    def __call__(self, points: np.ndarray) -> np.ndarray:
        p = np.asarray(points, dtype=np.float64)
        c0, c1 = np.asarray(self.colors, dtype=np.float64)
        if self.kind == "solid":
            t = np.zeros(len(p))
        elif self.kind == "checker":
            cells = np.floor(p * self.frequency).astype(np.int64).sum(axis=1)
            t = (cells % 2).astype(np.float64)
        elif self.kind == "noise":
            s = np.sin(p @ self.waves.T * self.frequency + self.phases).mean(axis=1)
            t = 0.5 + 0.5 * s
        else:
            raise ValueError(f"unknown texture kind {self.kind!r}")
        return np.clip(c0 + t[:, None] * (c1 - c0), 0.0, 1.0)

    def to_dict(self) -> dict:
        return {"kind": self.kind, "colors": np.asarray(self.colors).tolist(),
                "frequency": float(self.frequency), "waves": np.asarray(self.waves).tolist(),
                "phases": np.asarray(self.phases).tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "AlbedoTexture":
        return cls(d["kind"], np.array(d["colors"]), d["frequency"],
                   np.array(d["waves"]).reshape(-1, 3), np.array(d["phases"]))


@dataclass
class Material:
    albedo: AlbedoTexture
    ks: float
    ns: float

    def __post_init__(self):
        # ks == 0 is admitted as the pure-diffuse limit; sampled materials stay inside (0, 0.3)
        if not KS_RANGE[0] <= self.ks < KS_RANGE[1]:
            raise ValueError(f"specular albedo ks must lie in [0, 0.3), got {self.ks}")
        if not NS_RANGE[0] < self.ns < NS_RANGE[1]:
            raise ValueError(f"Phong exponent ns must lie in (0, 300), got {self.ns}")

    def to_dict(self) -> dict:
        return {"albedo": self.albedo.to_dict(), "ks": float(self.ks), "ns": float(self.ns)}

    @classmethod
    def from_dict(cls, d: dict) -> "Material":
        return cls(AlbedoTexture.from_dict(d["albedo"]), d["ks"], d["ns"])


@dataclass
class SceneSpec:
    primitive: str
    size: tuple                 # sphere (r,), box (hx, hy, hz), torus (R, r)
    material: Material
    view_dir: np.ndarray
    env_id: str = ""
    category: str = ""
    seed: int = 0

    def __post_init__(self):
        if self.primitive not in PRIMITIVES:
            raise ValueError(f"unknown primitive {self.primitive!r}; expected one of {PRIMITIVES}")
        v = np.asarray(self.view_dir, dtype=np.float64)
        if abs(np.linalg.norm(v) - 1.0) > 1e-6:
            raise ValueError(f"view_dir must be a unit vector, |v| = {np.linalg.norm(v)}")
        if v[2] < 0:
            raise ValueError("view_dir must lie on the upper hemisphere (z >= 0)")
        self.view_dir = v
        self.size = tuple(float(s) for s in self.size)
        expected = {"sphere": 1, "box": 3, "torus": 2}[self.primitive]
        if len(self.size) != expected:
            raise ValueError(f"{self.primitive} takes {expected} size parameters, got {len(self.size)}")
        if min(self.size) <= 0:
            raise ValueError(f"degenerate {self.primitive}: sizes must be positive, got {self.size}")
        if self.primitive == "torus" and self.size[1] >= self.size[0]:
            raise ValueError("torus tube radius must be smaller than its ring radius")

    def to_dict(self) -> dict:
        return {"primitive": self.primitive, "size": list(self.size),
                "material": self.material.to_dict(), "view_dir": self.view_dir.tolist(),
                "env_id": self.env_id, "category": self.category, "seed": int(self.seed)}

    @classmethod
    def from_dict(cls, d: dict) -> "SceneSpec":
        return cls(d["primitive"], tuple(d["size"]), Material.from_dict(d["material"]),
                   np.array(d["view_dir"]), d.get("env_id", ""), d.get("category", ""),
                   d.get("seed", 0))


@dataclass
class IntrinsicTriple:
    """Aligned HDR layers ``(H, W, 3)`` float32 and a boolean mask ``(H, W)``."""

    image: np.ndarray
    albedo: np.ndarray
    shading: np.ndarray
    specular: np.ndarray
    mask: np.ndarray

    def compositing_error(self) -> float:
        m = self.mask.astype(bool)
        if not m.any():
            return 0.0
        recon = self.albedo.astype(np.float64) * self.shading + self.specular
        return float(np.abs(self.image[m] - recon[m]).max())


# -- geometry ------------------------------------------------------------------

def camera_rays(view_dir: np.ndarray, resolution: int, extent: float = 1.0):
    """Orthographic rays over ``[-extent, extent]^2`` looking along ``-view_dir``."""
    w = np.asarray(view_dir, dtype=np.float64)
    hint = np.array([0.0, 0.0, 1.0]) if abs(w[2]) < 0.999 else np.array([0.0, 1.0, 0.0])
    u = np.cross(hint, w)
    u /= np.linalg.norm(u)
    t = np.cross(w, u)
    coords = (np.arange(resolution) + 0.5) / resolution * 2 - 1
    xs = coords[None, :] * extent
    ys = -coords[:, None] * extent
    origins = xs[..., None] * u + ys[..., None] * t + 3.0 * w
    directions = np.broadcast_to(-w, origins.shape)
    return origins.reshape(-1, 3), np.ascontiguousarray(directions.reshape(-1, 3))


def _intersect_sphere(o, d, radius):
    b = np.sum(o * d, axis=1)
    c = np.sum(o * o, axis=1) - radius ** 2
    disc = b * b - c
    hit = disc >= 0
    s = -b - np.sqrt(np.where(hit, disc, 0.0))
    hit &= s > 0
    p = o + s[:, None] * d
    normals = p / radius
    return hit, p, normals


def _intersect_box(o, d, half):
    half = np.asarray(half, dtype=np.float64)
    with np.errstate(divide="ignore", invalid="ignore"):
        inv = 1.0 / d
        t0 = (-half - o) * inv
        t1 = (half - o) * inv
    tmin = np.nanmax(np.minimum(t0, t1), axis=1)
    tmax = np.nanmin(np.maximum(t0, t1), axis=1)
    hit = (tmax >= tmin) & (tmin > 0)
    p = o + tmin[:, None] * d
    rel = np.abs(p) / half
    axis = np.argmax(rel, axis=1)
    normals = np.zeros_like(p)
    normals[np.arange(len(p)), axis] = np.sign(p[np.arange(len(p)), axis])
    return hit, p, normals


def _intersect_torus(o, d, major, minor):
    """First positive root of the ring-torus quartic (axis +z)."""
    b = np.sum(o * d, axis=1)
    k = np.sum(o * o, axis=1) + major ** 2 - minor ** 2
    dxy = d[:, 0] ** 2 + d[:, 1] ** 2
    oxy = o[:, 0] * d[:, 0] + o[:, 1] * d[:, 1]
    rxy = o[:, 0] ** 2 + o[:, 1] ** 2
    R4 = 4 * major ** 2
    c3 = 4 * b
    c2 = 4 * b * b + 2 * k - R4 * dxy
    c1 = 4 * b * k - 2 * R4 * oxy
    c0 = k * k - R4 * rxy
    comp = np.zeros((len(o), 4, 4))
    comp[:, 1, 0] = comp[:, 2, 1] = comp[:, 3, 2] = 1.0
    comp[:, 0, 0], comp[:, 0, 1], comp[:, 0, 2], comp[:, 0, 3] = -c3, -c2, -c1, -c0
    roots = np.linalg.eigvals(comp)
    real = np.abs(roots.imag) < 1e-6 * (1 + np.abs(roots.real))
    cand = np.where(real & (roots.real > 1e-9), roots.real, np.inf)
    s = cand.min(axis=1)
    hit = np.isfinite(s)
    s = np.where(hit, s, 0.0)
    # two Newton polish steps on the quartic
    for _ in range(2):
        f = (((s + c3) * s + c2) * s + c1) * s + c0
        df = ((4 * s + 3 * c3) * s + 2 * c2) * s + c1
        s = np.where(hit & (np.abs(df) > 1e-12), s - f / np.where(df == 0, 1, df), s)
    p = o + s[:, None] * d
    ring = np.sqrt(p[:, 0] ** 2 + p[:, 1] ** 2)
    ring = np.where(ring > 1e-12, ring, 1.0)
    centre = np.stack([p[:, 0] / ring * major, p[:, 1] / ring * major, np.zeros(len(p))], axis=1)
    normals = p - centre
    normals /= np.linalg.norm(normals, axis=1, keepdims=True)
    return hit, p, normals


def cast(scene: SceneSpec, resolution: int):
    """Per-pixel hit mask, object-space points and unit normals (flattened)."""
    o, d = camera_rays(scene.view_dir, resolution)
    if scene.primitive == "sphere":
        hit, p, n = _intersect_sphere(o, d, scene.size[0])
        scale = scene.size[0]
    elif scene.primitive == "box":
        hit, p, n = _intersect_box(o, d, scene.size)
        scale = max(scene.size)
    else:
        hit, p, n = _intersect_torus(o, d, *scene.size)
        scale = scene.size[0] + scene.size[1]
    hit &= np.all(np.isfinite(n), axis=1) & np.all(np.isfinite(p), axis=1)
    n = np.where(hit[:, None], n, [0.0, 0.0, 1.0])
    p = np.where(hit[:, None], p, 0.0)
    n = n / np.linalg.norm(n, axis=1, keepdims=True)
    front = np.sum(n * scene.view_dir, axis=1) > 0
    return hit & front, p / scale, n


def render_scene(scene: SceneSpec, env: EnvironmentMap, resolution: int = 64) -> IntrinsicTriple:
    """Render albedo, shading, specular and mask, then composite the image.

    Layers are evaluated in float64, stored as float32, and the image is
    composited from the stored layers so the identity holds to rounding.
    """
    if resolution < 1 or resolution & (resolution - 1):
        raise ValueError(f"resolution must be a power of two, got {resolution}")
    mask, points, normals = cast(scene, resolution)
    npx = resolution * resolution
    A = np.zeros((npx, 3))
    S = np.zeros((npx, 3))
    R = np.zeros((npx, 3))
    if mask.any():
        A[mask] = scene.material.albedo(points[mask])
        S[mask] = shade_diffuse(normals[mask], env)
        if scene.material.ks > 0:
            R[mask] = scene.material.ks * shade_specular(normals[mask], scene.view_dir, env,
                                                          scene.material.ns)
    shape = (resolution, resolution, 3)
    A = A.reshape(shape).astype(np.float32)
    S = S.reshape(shape).astype(np.float32)
    R = R.reshape(shape).astype(np.float32)
    I = A * S + R
    m = mask.reshape(resolution, resolution)
    I[~m] = BACKGROUND
    return IntrinsicTriple(I, A, S, R, m)


# -- sampling --------------------------------------------------------------------

def sample_texture(rng: np.random.Generator, frequency_range=(2.0, 6.0)) -> AlbedoTexture:
    kind = TEXTURE_KINDS[rng.integers(len(TEXTURE_KINDS))]
    colors = rng.uniform(0.05, 0.95, size=(2, 3))
    freq = rng.uniform(*frequency_range)
    waves = rng.normal(size=(3, 3))
    waves /= np.linalg.norm(waves, axis=1, keepdims=True)
    phases = rng.uniform(0, 2 * np.pi, size=3)
    if kind == "solid":
        colors[1] = colors[0]
    return AlbedoTexture(kind, colors, freq, waves, phases)


def sample_material(rng: np.random.Generator, frequency_range=(2.0, 6.0)) -> Material:
    """Random material: ks in (0, 0.3), ns in (0, 300), procedural albedo."""
    texture = sample_texture(rng, frequency_range)
    ks = rng.uniform(*KS_RANGE)
    while ks <= KS_RANGE[0]:
        ks = rng.uniform(*KS_RANGE)
    ns = rng.uniform(*NS_RANGE)
    while ns <= NS_RANGE[0]:
        ns = rng.uniform(*NS_RANGE)
    return Material(texture, float(ks), float(ns))


# Size and texture ranges per category; the torus family varies the most.
CATEGORY_RANGES = {
    "sphere": {"size": [(0.55, 0.85)], "freq": (2.0, 4.0)},
    "box": {"size": [(0.3, 0.6)] * 3, "freq": (2.0, 4.0)},
    "torus": {"size": [(0.35, 0.65), (0.08, 0.3)], "freq": (1.5, 7.0)},
}


def sample_shape(category: str, rng: np.random.Generator) -> tuple:
    if category not in CATEGORY_RANGES:
        raise ValueError(f"unknown category {category!r}; expected one of {tuple(CATEGORY_RANGES)}")
    return tuple(float(rng.uniform(lo, hi)) for lo, hi in CATEGORY_RANGES[category]["size"])


def sample_object(category: str, rng: np.random.Generator) -> tuple[tuple, Material]:
    """Shape parameters and material for one object of ``category``."""
    size = sample_shape(category, rng)
    material = sample_material(rng, CATEGORY_RANGES[category]["freq"])
    return size, material


def make_scene(category: str, size: tuple, material: Material, view_index: int,
               env_id: str = "", seed: int = 0) -> SceneSpec:
    return SceneSpec(category, size, material, sample_viewpoint(view_index), env_id,
                     category, seed)
