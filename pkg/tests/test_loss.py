import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from nlintrinsics.loss import (LossConfig, edge_weights, head_losses, loss_diffuse, loss_specular,
                               loss_terms, optimal_scale, smse, total_loss, weighted_mse)
from nlintrinsics.numerics import Tensor, backward, check_gradients


def rand(shape, seed=0, lo=0.0, hi=1.0):
    return np.random.default_rng(seed).uniform(lo, hi, shape)


def ones_w(h=4, w=4):
    return np.ones((h, w))


# -- optimal scale and smse ------------------------------------------------------------------

def test_scale_identity_and_half():
    g = rand((3, 4, 4), 1, 0.1, 1)
    assert float(optimal_scale(g, g, ones_w()).data) == pytest.approx(1.0)
    assert float(optimal_scale(2 * g, g, ones_w()).data) == pytest.approx(0.5)


def test_scale_degenerate_falls_back_to_one():
    g = rand((3, 4, 4), 2)
    assert float(optimal_scale(np.zeros_like(g), g, ones_w()).data) == 1.0
    assert float(smse(np.zeros_like(g), g, ones_w()).data) == pytest.approx(
        float(weighted_mse(np.zeros_like(g), g, ones_w()).data))


@pytest.mark.parametrize("seed", range(5))
def test_scale_matches_dense_scan(seed):
    x = rand((1, 1, 2, 2), seed, 0.05, 1)
    g = rand((1, 1, 2, 2), seed + 100, 0.05, 1)
    w = rand((2, 2), seed + 200, 0.5, 2)
    alphas = np.arange(0, 10 + 1e-9, 1e-5)
    errs = ((alphas[:, None] * x.reshape(1, -1) - g.reshape(1, -1)) ** 2 * w.reshape(1, -1)).sum(1)
    best = alphas[np.argmin(errs)]
    assert abs(float(optimal_scale(x, g, w).data) - best) < 1e-4


def test_smse_two_vector():
    x = np.array([1.0, 0.0]).reshape(1, 1, 2)
    g = np.array([0.0, 1.0]).reshape(1, 1, 2)
    w = np.ones((1, 2))
    assert float(optimal_scale(x, g, w).data) == 0.0
    assert float(smse(x, g, w).data) == pytest.approx(0.5)


@pytest.mark.parametrize("k", [0.1, 1.0, 10.0, 3.7])
def test_smse_scale_invariance(k):
    x, g = rand((3, 8, 8), 3), rand((3, 8, 8), 4)
    w = rand((8, 8), 5, 0.5, 1.5)
    assert abs(float(smse(k * x, g, w).data) - float(smse(x, g, w).data)) < 1e-10
    assert float(smse(k * g, g, w).data) < 1e-20


def test_smse_batch_has_one_alpha_per_sample():
    x = np.stack([rand((3, 4, 4), 6), 2 * rand((3, 4, 4), 7)])
    g = np.stack([rand((3, 4, 4), 6), rand((3, 4, 4), 7)])
    alpha = optimal_scale(x, g, np.ones((2, 4, 4))).data
    np.testing.assert_allclose(alpha, [1.0, 0.5])


# -- edge weights ------------------------------------------------------------------------------

def test_edge_weights_constant_image():
    w = edge_weights(np.full((3, 5, 5), 0.3), np.ones((5, 5)), 4.0)
    np.testing.assert_allclose(w, 1.0)


def test_edge_weights_step_table():
    img = np.zeros((3, 4, 4))
    img[:, :, 2:] = 1.0
    w = edge_weights(img, np.ones((4, 4)), 4.0)[0]
    # luminance gradient by central differences: 0, 0.5, 0.5, 0 per row -> raw 1, 3, 3, 1
    np.testing.assert_allclose(w, np.tile([0.5, 1.5, 1.5, 0.5], (4, 1)))


@given(st.integers(0, 2 ** 16), st.floats(0.0, 10.0))
@settings(max_examples=30, deadline=None)
def test_edge_weights_masked_mean_one(seed, lam):
    rng = np.random.default_rng(seed)
    img = rng.uniform(0, 2, (3, 6, 6))
    mask = rng.random((6, 6)) > 0.3
    mask[0, 0] = True
    w = edge_weights(img, mask, lam)[0]
    assert abs(w[mask].mean() - 1) < 1e-6
    assert np.all(w[~mask] == 0) and np.all(w >= 0)


def test_edge_lambda_zero_is_uniform():
    img = rand((3, 6, 6), 1)
    mask = rand((6, 6), 2) > 0.4
    w = edge_weights(img, mask, 0.0)[0]
    np.testing.assert_array_equal(w, mask.astype(float))


def test_edge_weights_ignore_unmasked_pixels():
    img = rand((3, 6, 6), 3)
    mask = np.zeros((6, 6), bool)
    mask[1:5, 1:5] = True
    other = img.copy()
    other[:, ~mask] = 99.0
    assert edge_weights(img, mask).tobytes() == edge_weights(other, mask).tobytes()


# -- head losses ----------------------------------------------------------------------------------

def test_loss_diffuse_cases():
    g = rand((3, 4, 4), 8, 0.1, 1)
    w = ones_w()
    assert float(loss_diffuse(g, g, w).data) == 0.0
    two = float(loss_diffuse(2 * g, g, w).data)
    assert two == pytest.approx(0.05 * float(weighted_mse(2 * g, g, w).data), rel=1e-12, abs=1e-15)


def test_loss_diffuse_recombines():
    x, g = rand((3, 5, 5), 9), rand((3, 5, 5), 10)
    w = rand((5, 5), 11, 0.2, 2)
    parts = 0.95 * float(smse(x, g, w).data) + 0.05 * float(weighted_mse(x, g, w).data)
    assert abs(float(loss_diffuse(x, g, w).data) - parts) < 1e-7


def test_loss_specular_cases():
    g = rand((3, 4, 4), 12, 0.1, 1)
    w = ones_w()
    assert float(loss_specular(g, g, w).data) == 0.0
    assert float(loss_specular(2 * g, g, w).data) > 0
    assert float(loss_specular(g + 0.3, g, w).data) == pytest.approx(0.09)


def test_loss_config_validation():
    with pytest.raises(ValueError):
        LossConfig(w_smse=0.9, w_mse=0.2)
    with pytest.raises(ValueError):
        LossConfig(edge_lambda=-1)


# -- total loss --------------------------------------------------------------------------------------

def batch(seed=0, n=2, h=6):
    rng = np.random.default_rng(seed)
    image = rng.uniform(0, 1, (n, 3, h, h))
    targets = [rng.uniform(0, 1, (n, 3, h, h)) for _ in range(3)]
    preds = [rng.uniform(0, 1, (n, 3, h, h)) for _ in range(3)]
    mask = rng.random((n, h, h)) > 0.3
    return image, targets, preds, mask


def test_total_loss_perfect_is_zero():
    image, targets, _, mask = batch()
    assert float(total_loss(targets, targets, mask, image).data) < 1e-20


def test_total_loss_is_sum_of_heads():
    image, targets, preds, mask = batch(1)
    heads = loss_terms(preds, targets, mask, image)
    total = float(total_loss(preds, targets, mask, image).data)
    assert total == pytest.approx(sum(heads.values()), rel=1e-12)


def test_total_loss_gradient_zero_outside_mask():
    image, targets, preds, mask = batch(2)
    ts = [Tensor(p, requires_grad=True) for p in preds]
    backward(total_loss(ts, targets, mask, image))
    for t in ts:
        assert np.all(t.grad.transpose(0, 2, 3, 1)[~mask] == 0)


def test_total_loss_ignores_unmasked_values():
    image, targets, preds, mask = batch(3)
    noisy = [p.copy() for p in preds]
    noisy_t = [t.copy() for t in targets]
    for arr in noisy + noisy_t:
        arr.transpose(0, 2, 3, 1)[~mask] = 123.0
    a = total_loss(preds, targets, mask, image).data
    b = total_loss(noisy, noisy_t, mask, image).data
    assert a.tobytes() == b.tobytes()


def test_total_loss_finite_differences():
    image, targets, preds, mask = batch(4)
    ts = [Tensor(p, requires_grad=True) for p in preds]
    err = check_gradients(lambda: total_loss(ts, targets, mask, image), ts, n_samples=20,
                          rng=np.random.default_rng(0))
    assert err < 1e-3


def test_empty_mask_sample_skipped_with_warning():
    image, targets, preds, mask = batch(5)
    mask[1] = False
    with pytest.warns(RuntimeWarning, match="empty mask"):
        both = float(total_loss(preds, targets, mask, image).data)
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        first = float(total_loss([p[:1] for p in preds], [t[:1] for t in targets], mask[:1],
                                 image[:1]).data)
    assert both == pytest.approx(first, rel=1e-12)
    with pytest.warns(RuntimeWarning):
        none = head_losses(preds, targets, np.zeros_like(mask), image)
    assert all(float(v.data) == 0.0 for v in none.values())


def test_losses_nonnegative():
    for seed in range(5):
        image, targets, preds, mask = batch(seed)
        for v in loss_terms(preds, targets, mask, image).values():
            assert v >= 0


def test_scale_never_negative():
    g = rand((3, 4, 4), 13, 0.1, 1)
    assert float(optimal_scale(-g, g, ones_w()).data) == 0.0
    # a sign-flipped prediction is no better than predicting nothing
    assert float(smse(-g, g, ones_w()).data) == pytest.approx(float((g ** 2).mean()))


@given(st.integers(0, 2 ** 16))
@settings(max_examples=30, deadline=None)
def test_scale_is_nonnegative_minimiser(seed):
    rng = np.random.default_rng(seed)
    x, g = rng.normal(0, 1, (1, 3, 3, 3)), rng.uniform(0, 1, (1, 3, 3, 3))
    w = np.ones((1, 3, 3))
    a = float(optimal_scale(x, g, w).data)
    assert a >= 0
    best = min(((s * x - g) ** 2).mean() for s in np.linspace(0, 5, 5001))
    assert float(smse(x, g, w).data) <= best + 1e-12
