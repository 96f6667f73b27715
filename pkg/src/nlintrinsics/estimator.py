"""Scikit-learn style wrapper around network training and inference."""
from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.exceptions import NotFittedError

from .exper.dataset import SampleSet
from .exper.training import TrainConfig, evaluate, predict, train
from .loss import LossConfig
from .network import NetworkConfig, build
from .validation import check_images, check_mask, check_targets


class IntrinsicDecomposer(BaseEstimator):
    """Fit on images with known layers, predict ``(albedo, shading, specular)``.

    Arrays may be NCHW or NHWC; predictions come back in the input layout.
    ``score`` returns minus the mean DSSIM over the three layers, so larger
    is better.
    """

    def __init__(self, variant: str = "mirror_link", levels: int = 5, base_channels: int = 16,
                 max_channels: int = 128, epochs: int = 30, batch_size: int = 8, lr: float = 1e-3,
                 max_steps: int | None = None, edge_lambda: float = 4.0, random_state: int = 0):
        self.variant = variant
        self.levels = levels
        self.base_channels = base_channels
        self.max_channels = max_channels
        self.epochs = epochs
        self.batch_size = batch_size
        self.lr = lr
        self.max_steps = max_steps
        self.edge_lambda = edge_lambda
        self.random_state = random_state

    def _config(self, resolution: int) -> TrainConfig:
        net = NetworkConfig(resolution=resolution, levels=self.levels,
                            base_channels=self.base_channels, max_channels=self.max_channels,
                            variant=self.variant)
        return TrainConfig(epochs=self.epochs, batch_size=self.batch_size, lr=self.lr,
                           seed=self.random_state, loss=LossConfig(edge_lambda=self.edge_lambda),
                           network=net, max_steps=self.max_steps)

    @staticmethod
    def _samples(X, y, mask) -> SampleSet:
        images = check_images(X)
        A, S, R = check_targets(y, images)
        m = check_mask(mask, len(images), images.shape[2:])
        ids = [f"sample-{i:05d}" for i in range(len(images))]
        return SampleSet(ids, [""] * len(ids), ids, images, A, S, R, m)

    def fit(self, X, y, mask=None):
        samples = self._samples(X, y, mask)
        config = self._config(samples.image.shape[2])
        result = train(build(config.network, seed=self.random_state), samples, config)
        self.network_ = result.net
        self.history_ = result.history
        self.n_steps_ = result.steps
        self.resolution_ = config.network.resolution
        return self

    def _check_fitted(self):
        if not hasattr(self, "network_"):
            raise NotFittedError("IntrinsicDecomposer is not fitted yet; call fit first")

    def predict(self, X) -> tuple:
        self._check_fitted()
        channels_last = np.ndim(X) >= 3 and np.shape(X)[-1] == 3 and np.shape(X)[-3] != 3
        images = check_images(X, self.resolution_)
        out = predict(self.network_, images)
        if channels_last:
            out = tuple(np.ascontiguousarray(o.transpose(0, 2, 3, 1)) for o in out)
        if np.ndim(X) == 3:
            out = tuple(o[0] for o in out)
        return out

    def score(self, X, y, mask=None) -> float:
        self._check_fitted()
        samples = self._samples(X, y, mask)
        agg = evaluate(self.network_, samples).aggregate()
        return -float(np.mean([agg["albedo.dssim"], agg["shading.dssim"], agg["specular.dssim"]]))
