import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from nlintrinsics.render import (AlbedoTexture, EnvironmentMap, Material, SceneSpec, constant_env,
                                 direction_to_texel, generate_env, halton, halton_sequence,
                                 read_image, read_pfm, render_scene, sample_material,
                                 sample_object, sample_viewpoint, shade_diffuse, shade_specular,
                                 specular_contributions, write_pfm, write_png)
from nlintrinsics.render.imageio import montage, parse_pfm, pfm_bytes, tonemap
from nlintrinsics.render.shading import reflect


def white(kind="solid"):
    return AlbedoTexture(kind, np.ones((2, 3)))


def diffuse_scene(primitive="sphere", size=(0.7,), view=(0.0, 0.0, 1.0), ks=0.0, ns=10.0,
                  texture=None):
    return SceneSpec(primitive, size, Material(texture or white(), ks, ns), np.array(view))


# -- Halton ---------------------------------------------------------------------------

def test_halton_values():
    assert halton(1, 2) == 0.5
    assert halton(2, 2) == 0.25
    assert halton(3, 2) == 0.75
    assert halton(1, 3) == pytest.approx(1 / 3)
    assert halton(5, 3) == pytest.approx(2 / 3 + 1 / 9)


def test_halton_rejects_bad_arguments():
    with pytest.raises(ValueError):
        halton(0, 2)
    with pytest.raises(ValueError):
        halton(1, 1)


@pytest.mark.parametrize("k", [1, 3, 6])
def test_halton_base2_is_permutation_of_grid(k):
    vals = halton_sequence(2 ** k - 1, 2)
    grid = np.sort(np.concatenate([[0.0], vals]))
    np.testing.assert_allclose(grid, np.arange(2 ** k) / 2 ** k)
    assert np.all((vals >= 0) & (vals < 1))


def test_viewpoints_on_upper_hemisphere():
    dirs = np.array([sample_viewpoint(i) for i in range(1, 1001)])
    np.testing.assert_allclose(np.linalg.norm(dirs, axis=1), 1.0, atol=1e-6)
    assert dirs[:, 2].min() >= 0


def test_viewpoint_mean_z_is_half():
    z = np.array([sample_viewpoint(i)[2] for i in range(1, 10001)])
    assert abs(z.mean() - 0.5) < 0.01


# -- environment maps ----------------------------------------------------------------------

def test_solid_angles_sum_to_4pi():
    for w, h in [(64, 32), (128, 64), (256, 128)]:
        env = constant_env(1.0, w, h)
        assert abs(env.solid_angles.sum() / (4 * np.pi) - 1) < 1e-3


def test_env_rejects_negative_and_nan():
    with pytest.raises(ValueError):
        EnvironmentMap(-np.ones((4, 8, 3)))
    bad = np.ones((4, 8, 3))
    bad[0, 0, 0] = np.nan
    with pytest.raises(ValueError):
        EnvironmentMap(bad)


def test_row_zero_is_zenith():
    env = constant_env(1.0, 16, 8)
    d = env.directions.reshape(8, 16, 3)
    assert d[0, :, 2].min() > 0.9
    assert d[-1, :, 2].max() < -0.9
    assert direction_to_texel(np.array([0, 0, 1.0]), 16, 8)[0] == 0


def test_generate_env_ambient_only_is_constant():
    env = generate_env(np.random.default_rng(0), 16, 8, n_lobes=0, ambient=0.1)
    np.testing.assert_allclose(env.radiance, 0.1)


def test_generate_env_deterministic():
    a = generate_env(np.random.default_rng(3)).radiance
    b = generate_env(np.random.default_rng(3)).radiance
    assert a.tobytes() == b.tobytes()
    assert a.min() >= 0


def test_generate_env_bright_lobe_dominates():
    env = generate_env(np.random.default_rng(1), n_lobes=1, ambient=0.1, peak_range=(50, 50))
    lum = env.radiance.mean(axis=2)
    assert lum.max() >= 10 * lum.mean()


# -- shading --------------------------------------------------------------------------------

def test_diffuse_zero_env():
    env = constant_env(0.0)
    np.testing.assert_array_equal(shade_diffuse(np.array([0, 0, 1.0]), env), 0.0)


def test_diffuse_furnace_random_normals():
    rng = np.random.default_rng(0)
    n = rng.normal(size=(200, 3))
    n /= np.linalg.norm(n, axis=1, keepdims=True)
    s = shade_diffuse(n, constant_env(1.0))
    assert np.abs(s - 1).max() < 0.01


def test_diffuse_single_texel():
    w, h = 64, 32
    rad = np.zeros((h, w, 3))
    env0 = constant_env(0.0, w, h)
    normal = np.array([0.0, 0.0, 1.0])
    # pick a texel whose direction has N.w close to 0.5
    t = int(np.argmin(np.abs(env0.directions @ normal - 0.5)))
    rad.reshape(-1, 3)[t] = 7.0
    env = EnvironmentMap(rad)
    cos = env.directions[t] @ normal
    expected = 7.0 * cos * env.solid_angles[t] / np.pi
    np.testing.assert_allclose(shade_diffuse(normal, env), expected, rtol=1e-12)


def test_reflect_mirror():
    n = np.array([0.0, 0.0, 1.0])
    v = np.array([1.0, 0.0, 1.0]) / np.sqrt(2)
    np.testing.assert_allclose(reflect(v, n)[0], [-v[0], 0, v[2]])


def test_specular_zero_env():
    n = np.array([0.0, 0.0, 1.0])
    np.testing.assert_array_equal(shade_specular(n, n, constant_env(0.0), 50), 0.0)


def _phong_dense(ns, n_theta=20000):
    theta = (np.arange(n_theta) + 0.5) * (np.pi / 2) / n_theta
    dtheta = (np.pi / 2) / n_theta
    # mirror direction along the normal; integrate over the hemisphere analytically in phi
    integrand = np.cos(theta) ** ns * np.cos(theta) * np.sin(theta) * 2 * np.pi
    return (ns + 2) / (2 * np.pi) * (integrand * dtheta).sum()


def test_specular_mirror_aligned_matches_dense_quadrature():
    n = np.array([0.0, 0.0, 1.0])
    s = shade_specular(n, n, constant_env(1.0), 50.0)
    ref = _phong_dense(50.0)
    assert np.abs(s / ref - 1).max() < 0.03


@pytest.mark.parametrize("ns", [1.0, 10.0, 50.0, 150.0, 299.0])
def test_specular_energy_bound(ns):
    # fine map: narrow lobes need texels well below the lobe width
    env = constant_env(1.0, 256, 128)
    rng = np.random.default_rng(int(ns))
    for _ in range(5):
        n = rng.normal(size=3)
        n /= np.linalg.norm(n)
        v = rng.normal(size=3)
        v /= np.linalg.norm(v)
        if v @ n < 0:
            v = -v
        ks = 0.29
        s = ks * shade_specular(n, v, env, ns)
        assert np.all(s <= ks * (ns + 2) / (ns + 1) + 0.01)


def test_specular_narrow_lobe_concentrates_on_bright_texel():
    w, h = 64, 32
    env0 = constant_env(0.0, w, h)
    n = np.array([0.3, 0.2, 1.0])
    n /= np.linalg.norm(n)
    v = np.array([0.0, 0.0, 1.0])
    mirror = reflect(v, n)[0]
    t = int(np.argmax(env0.directions @ mirror))
    rad = np.full((h, w, 3), 0.05)
    rad.reshape(-1, 3)[t] = 1000.0
    env = EnvironmentMap(rad)
    terms = specular_contributions(n, v, env, 300.0)[:, 0]
    cone = env.directions @ mirror >= np.cos(np.radians(5.0))
    assert terms[cone].sum() >= 0.95 * terms.sum()


# -- scenes ---------------------------------------------------------------------------------

@pytest.mark.parametrize("primitive,size", [("sphere", (0.7,)), ("box", (0.4, 0.5, 0.3)),
                                            ("torus", (0.55, 0.2))])
def test_furnace_every_primitive(primitive, size):
    view = sample_viewpoint(7)
    tri = render_scene(diffuse_scene(primitive, size, view), constant_env(1.0), 32)
    assert tri.mask.any()
    assert abs(tri.shading[tri.mask].mean() - 1.0) < 0.01
    np.testing.assert_array_equal(tri.specular, 0.0)
    np.testing.assert_array_equal(tri.image, tri.albedo * tri.shading)


def test_unmasked_pixels_are_background():
    scene = SceneSpec("sphere", (0.5,), sample_material(np.random.default_rng(0)),
                      sample_viewpoint(3))
    tri = render_scene(scene, generate_env(np.random.default_rng(0)), 32)
    off = ~tri.mask
    assert off.any()
    for layer in (tri.image, tri.albedo, tri.shading, tri.specular):
        np.testing.assert_array_equal(layer[off], 0.0)


def test_layer_ranges_and_identity():
    rng = np.random.default_rng(4)
    for cat in ("sphere", "box", "torus"):
        size, mat = sample_object(cat, rng)
        tri = render_scene(SceneSpec(cat, size, mat, sample_viewpoint(11)),
                           generate_env(rng), 32)
        assert tri.albedo.min() >= 0 and tri.albedo.max() <= 1
        assert tri.shading.min() >= 0 and tri.specular.min() >= 0 and tri.image.min() >= 0
        assert tri.compositing_error() <= 1e-6


def test_doubling_radiance_doubles_shading_and_specular():
    rng = np.random.default_rng(5)
    size, mat = sample_object("torus", rng)
    scene = SceneSpec("torus", size, mat, sample_viewpoint(2))
    env = generate_env(rng)
    a = render_scene(scene, env, 16)
    b = render_scene(scene, env.scaled(2.0), 16)
    np.testing.assert_array_equal(b.albedo, a.albedo)
    np.testing.assert_array_equal(b.shading, 2 * a.shading)
    np.testing.assert_array_equal(b.specular, 2 * a.specular)


def test_render_rejects_bad_inputs():
    with pytest.raises(ValueError):
        render_scene(diffuse_scene(), constant_env(1.0), 30)
    with pytest.raises(ValueError):
        diffuse_scene("sphere", (0.0,))
    with pytest.raises(ValueError):
        diffuse_scene("torus", (0.2, 0.3))
    with pytest.raises(ValueError):
        diffuse_scene(view=(0.0, 0.0, -1.0))
    with pytest.raises(ValueError):
        diffuse_scene(view=(0.0, 0.5, 0.5))


def test_scene_dict_roundtrip():
    rng = np.random.default_rng(6)
    size, mat = sample_object("box", rng)
    scene = SceneSpec("box", size, mat, sample_viewpoint(5), "env-001", "box", 9)
    again = SceneSpec.from_dict(scene.to_dict())
    env = generate_env(rng)
    assert render_scene(scene, env, 16).image.tobytes() == render_scene(again, env, 16).image.tobytes()


def test_material_sampler_ranges():
    rng = np.random.default_rng(0)
    draws = [sample_material(rng) for _ in range(10000)]
    ks = np.array([m.ks for m in draws])
    ns = np.array([m.ns for m in draws])
    assert ks.min() > 0 and ks.max() < 0.3
    assert ns.min() > 0 and ns.max() < 300


def test_material_sampler_deterministic():
    a = sample_material(np.random.default_rng(8)).to_dict()
    b = sample_material(np.random.default_rng(8)).to_dict()
    assert a == b


def test_material_rejects_out_of_range():
    with pytest.raises(ValueError):
        Material(white(), 0.3, 10.0)
    with pytest.raises(ValueError):
        Material(white(), 0.1, 0.0)


def test_textures_stay_in_unit_range():
    rng = np.random.default_rng(2)
    pts = rng.uniform(-1, 1, size=(500, 3))
    for kind in ("solid", "checker", "noise"):
        tex = AlbedoTexture(kind, rng.uniform(0, 1, (2, 3)), 3.0, rng.normal(size=(3, 3)),
                            rng.uniform(0, 6, 3))
        vals = tex(pts)
        assert vals.min() >= 0 and vals.max() <= 1


# -- image files ------------------------------------------------------------------------------

@given(st.integers(1, 6), st.integers(1, 6), st.integers(0, 2 ** 16))
@settings(max_examples=20, deadline=None)
def test_pfm_roundtrip_bit_exact(h, w, seed):
    img = (np.random.default_rng(seed).standard_normal((h, w, 3)) * 100).astype(np.float32)
    assert parse_pfm(pfm_bytes(img)).tobytes() == img.tobytes()


def test_pfm_file_roundtrip_and_layout(tmp_path):
    img = np.zeros((2, 3, 3), np.float32)
    img[0, 0] = [1, 2, 3]
    path = tmp_path / "a.pfm"
    write_pfm(path, img)
    blob = path.read_bytes()
    assert blob.startswith(b"PF\n3 2\n-1.0\n")
    # first stored row is the bottom image row
    body = np.frombuffer(blob[len(b"PF\n3 2\n-1.0\n"):], "<f4").reshape(2, 3, 3)
    np.testing.assert_array_equal(body[1, 0], [1, 2, 3])
    assert read_pfm(path).tobytes() == img.tobytes()


def test_pfm_big_endian_and_grey():
    data = np.arange(6, dtype=">f4").reshape(2, 3)
    blob = b"Pf\n3 2\n1.0\n" + data[::-1].tobytes()
    np.testing.assert_array_equal(parse_pfm(blob), data.astype(np.float32))
    with pytest.raises(ValueError):
        parse_pfm(b"P6\n1 1\n255\n\x00\x00\x00")


def test_png_preview_and_montage(tmp_path):
    img = np.linspace(0, 2, 4 * 4 * 3).reshape(4, 4, 3)
    tm = tonemap(img)
    assert tm.dtype == np.uint8 and tm.max() == 255 and tm.min() == 0
    grid = montage([[img, img, img, img]], pad=2)
    assert grid.shape == (4 + 4, 4 * 4 + 5 * 2, 3)
    path = tmp_path / "m.png"
    write_png(path, grid)
    back = read_image(path)
    assert back.shape == grid.shape
