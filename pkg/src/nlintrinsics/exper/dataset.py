"""Rendered datasets: object-level splits, layer files and a JSON-lines manifest."""
from __future__ import annotations

import json
import os
import zlib
from dataclasses import dataclass, field

import numpy as np

from ..fileio import atomic_write_text
from ..render import generate_env, read_pfm, render_scene, write_pfm
from ..render.envmap import EnvironmentMap
from ..render.imageio import montage, write_png
from ..render.scene import make_scene, sample_object

MANIFEST_NAME = "manifest.jsonl"
INFO_NAME = "dataset.json"
LAYERS = ("image", "albedo", "shading", "specular", "mask")
TRAIN_FRACTION = 0.8


def _stable_hash(text: str) -> int:
    return zlib.crc32(text.encode("utf-8"))


def derive_rng(seed: int, key: str) -> np.random.Generator:
    """Generator keyed by (dataset seed, identifier); independent of call order."""
    return np.random.default_rng([int(seed), _stable_hash(key)])


def split_objects(object_ids: list[str], seed: int, key: str,
                  train_fraction: float = TRAIN_FRACTION) -> dict[str, str]:
    n_train = int(round(train_fraction * len(object_ids)))
    order = derive_rng(seed, "split/" + key).permutation(len(object_ids))
    return {object_ids[i]: ("train" if rank < n_train else "test") for rank, i in enumerate(order)}


@dataclass
class DatasetManifest:
    records: list = field(default_factory=list)
    seed: int = 0
    params: dict = field(default_factory=dict)
    root: str = ""

    def select(self, split: str | None = None, categories=None) -> list[dict]:
        cats = None if categories is None else set(categories)
        return [r for r in self.records
                if (split is None or r["split"] == split)
                and (cats is None or r["category"] in cats)]

    @property
    def categories(self) -> list[str]:
        seen = []
        for r in self.records:
            if r["category"] not in seen:
                seen.append(r["category"])
        return seen

    @property
    def resolution(self) -> int:
        return int(self.params.get("resolution", 0))

    def object_ids(self, split: str) -> set:
        return {r["object_id"] for r in self.records if r["split"] == split}

    def path(self, record: dict, layer: str) -> str:
        return os.path.join(self.root, record["paths"][layer])

    def to_jsonl(self) -> str:
        return "".join(json.dumps(r, sort_keys=True) + "\n" for r in self.records)

    def info(self) -> dict:
        return {"seed": self.seed, "params": self.params, "n_records": len(self.records)}


def load_manifest(path) -> DatasetManifest:
    """Read ``manifest.jsonl`` (or a directory containing it)."""
    path = os.fspath(path)
    if os.path.isdir(path):
        path = os.path.join(path, MANIFEST_NAME)
    if not os.path.exists(path):
        raise FileNotFoundError(f"manifest not found: {path}")
    root = os.path.dirname(os.path.abspath(path))
    with open(path, encoding="utf-8") as f:
        records = [json.loads(line) for line in f if line.strip()]
    info_path = os.path.join(root, INFO_NAME)
    seed, params = 0, {}
    if os.path.exists(info_path):
        with open(info_path, encoding="utf-8") as f:
            info = json.load(f)
        seed, params = info["seed"], info["params"]
    return DatasetManifest(records, seed, params, root)


def build_dataset(categories, objects_per_category: int, envs_per_object: int, out_dir,
                  seed: int = 0, resolution: int = 64, n_envs: int = 16,
                  env_size: tuple = (64, 32), n_lobes: int = 3, previews: bool = True,
                  overwrite: bool = False) -> DatasetManifest:
    """Render a dataset and write layers, previews and the manifest.

    Each category's objects are split 80/20 before anything is rendered.
    Training objects are rendered under ``envs_per_object`` distinct maps from
    a shared pool; test objects get a single image.  Viewpoints walk the
    Halton sequence in sample order.
    """
    categories = list(categories)
    if objects_per_category < 1 or envs_per_object < 1:
        raise ValueError("need at least one object per category and one environment per object")
    if envs_per_object > n_envs:
        raise ValueError(f"envs_per_object ({envs_per_object}) exceeds the pool size ({n_envs})")
    out_dir = os.fspath(out_dir)
    manifest_path = os.path.join(out_dir, MANIFEST_NAME)
    if os.path.exists(manifest_path) and not overwrite:
        raise FileExistsError(f"{manifest_path} exists; pass overwrite=True (--force) to replace it")
    os.makedirs(out_dir, exist_ok=True)

    envs = []
    for e in range(n_envs):
        env = generate_env(derive_rng(seed, f"env/{e}"), env_size[0], env_size[1], n_lobes)
        rel = os.path.join("envs", f"env-{e:03d}.pfm")
        write_pfm(os.path.join(out_dir, rel), env.radiance)
        envs.append(env)

    params = {"categories": categories, "objects_per_category": objects_per_category,
              "envs_per_object": envs_per_object, "resolution": resolution, "n_envs": n_envs,
              "env_size": list(env_size), "n_lobes": n_lobes,
              "train_fraction": TRAIN_FRACTION}
    records = []
    view_index = 1
    for cat in categories:
        object_ids = [f"{cat}-{i:04d}" for i in range(objects_per_category)]
        splits = split_objects(object_ids, seed, cat)
        for oid in object_ids:
            size, material = sample_object(cat, derive_rng(seed, "object/" + oid))
            split = splits[oid]
            n_views = envs_per_object if split == "train" else 1
            env_choice = derive_rng(seed, "envs/" + oid).choice(n_envs, size=n_views, replace=False)
            for v, e in enumerate(env_choice):
                sid = f"{oid}-v{v:02d}"
                sample_seed = int(derive_rng(seed, "sample/" + sid).integers(2 ** 31))
                env_id = f"env-{int(e):03d}"
                scene = make_scene(cat, size, material, view_index, env_id, sample_seed)
                view_index += 1
                triple = render_scene(scene, envs[int(e)], resolution)
                paths = {}
                for layer in LAYERS:
                    rel = os.path.join("samples", sid, f"{layer}.pfm")
                    data = getattr(triple, layer)
                    write_pfm(os.path.join(out_dir, rel), data.astype(np.float32))
                    paths[layer] = rel
                if previews:
                    rel = os.path.join("samples", sid, "preview.png")
                    write_png(os.path.join(out_dir, rel),
                              montage([[triple.image, triple.albedo, triple.shading, triple.specular]]))
                    paths["preview"] = rel
                records.append({"sample_id": sid, "object_id": oid, "category": cat,
                                "env_id": env_id, "seed": sample_seed, "split": split,
                                "paths": paths, "scene": scene.to_dict()})
    manifest = DatasetManifest(records, seed, params, out_dir)
    atomic_write_text(os.path.join(out_dir, INFO_NAME),
                      json.dumps(manifest.info(), indent=2, sort_keys=True) + "\n")
    atomic_write_text(manifest_path, manifest.to_jsonl())
    return manifest


@dataclass
class SampleSet:
    """Stacked arrays for a selection of samples (NCHW float32, masks NHW bool)."""

    ids: list
    categories: list
    object_ids: list
    image: np.ndarray
    albedo: np.ndarray
    shading: np.ndarray
    specular: np.ndarray
    mask: np.ndarray

    def __len__(self) -> int:
        return len(self.ids)

    def subset(self, index) -> "SampleSet":
        index = np.asarray(index, dtype=np.int64)
        return SampleSet([self.ids[i] for i in index], [self.categories[i] for i in index],
                         [self.object_ids[i] for i in index], self.image[index],
                         self.albedo[index], self.shading[index], self.specular[index],
                         self.mask[index])

    def where_category(self, categories) -> "SampleSet":
        cats = set(categories)
        return self.subset([i for i, c in enumerate(self.categories) if c in cats])

    def targets(self, index=None) -> tuple:
        if index is None:
            return self.albedo, self.shading, self.specular
        return self.albedo[index], self.shading[index], self.specular[index]


def _to_chw(a: np.ndarray) -> np.ndarray:
    return np.ascontiguousarray(a.transpose(2, 0, 1))


def load_split(manifest: DatasetManifest, split: str | None = None, categories=None) -> SampleSet:
    recs = manifest.select(split, categories)
    if not recs:
        raise ValueError(f"no samples for split={split!r}, categories={categories!r}")
    layers = {name: [] for name in LAYERS}
    for r in recs:
        for name in LAYERS:
            layers[name].append(read_pfm(manifest.path(r, name)))
    stack = {name: np.stack([_to_chw(a) for a in layers[name]]) for name in LAYERS[:-1]}
    mask = np.stack([a[..., 0] > 0.5 for a in layers["mask"]])
    return SampleSet([r["sample_id"] for r in recs], [r["category"] for r in recs],
                     [r["object_id"] for r in recs], stack["image"], stack["albedo"],
                     stack["shading"], stack["specular"], mask)


def load_env(manifest: DatasetManifest, env_id: str) -> EnvironmentMap:
    return EnvironmentMap(read_pfm(os.path.join(manifest.root, "envs", env_id + ".pfm")))
