"""Training loop, batched inference and test-set evaluation."""
from __future__ import annotations

import csv
import io
import os
from dataclasses import asdict, dataclass, field

import numpy as np

from ..fileio import atomic_write_text
from ..loss import HEADS, LossConfig, head_losses
from ..metrics import MetricReport, evaluate_triple
from ..network import MirrorLinkNet, NetworkConfig
from ..numerics import Adam, AdamState, backward, no_grad
from ..render.scene import IntrinsicTriple
from .dataset import DatasetManifest, SampleSet, load_split

HISTORY_FIELDS = ("epoch", "step", "loss") + HEADS


class TrainingDiverged(RuntimeError):
    def __init__(self, step: int, epoch: int, value: float):
        super().__init__(f"loss became non-finite ({value}) at step {step} (epoch {epoch})")
        self.step, self.epoch, self.value = step, epoch, value


@dataclass
class TrainConfig:
    epochs: int = 30
    batch_size: int = 8
    lr: float = 1e-3
    seed: int = 0
    loss: LossConfig = field(default_factory=LossConfig)
    network: NetworkConfig = field(default_factory=NetworkConfig)
    categories: list | None = None
    max_steps: int | None = None    # fixed optimizer-step budget; overrides epochs

    def __post_init__(self):
        if isinstance(self.loss, dict):
            self.loss = LossConfig(**self.loss)
        if isinstance(self.network, dict):
            self.network = NetworkConfig(**self.network)
        self.validate()

    def validate(self) -> "TrainConfig":
        if self.batch_size < 2:
            raise ValueError(f"batch_size must be at least 2 (batch norm), got {self.batch_size}")
        if self.epochs < 1:
            raise ValueError(f"epochs must be positive, got {self.epochs}")
        if self.lr <= 0:
            raise ValueError(f"lr must be positive, got {self.lr}")
        if self.max_steps is not None and self.max_steps < 1:
            raise ValueError(f"max_steps must be positive, got {self.max_steps}")
        self.network.validate()
        return self

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        known = {k: v for k, v in d.items() if k in cls.__dataclass_fields__}
        return cls(**known)

    def replace(self, **changes) -> "TrainConfig":
        d = self.to_dict()
        d.update(changes)
        return TrainConfig.from_dict(d)


@dataclass
class TrainResult:
    net: MirrorLinkNet
    history: list              # one dict per optimizer step
    optimizer: AdamState

    @property
    def steps(self) -> int:
        return len(self.history)

    def epoch_losses(self) -> list[float]:
        by_epoch: dict[int, list[float]] = {}
        for row in self.history:
            by_epoch.setdefault(row["epoch"], []).append(row["loss"])
        return [float(np.mean(by_epoch[e])) for e in sorted(by_epoch)]

    def history_csv(self) -> str:
        return history_csv(self.history)


def history_csv(history: list) -> str:
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=HISTORY_FIELDS, lineterminator="\n")
    writer.writeheader()
    for row in history:
        writer.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in row.items()})
    return buf.getvalue()


def write_history(path, history: list) -> None:
    atomic_write_text(path, history_csv(history))


def resolve_samples(data, split: str, categories=None) -> SampleSet:
    if isinstance(data, SampleSet):
        return data if categories is None else data.where_category(categories)
    if isinstance(data, DatasetManifest):
        return load_split(data, split, categories)
    raise TypeError(f"expected a DatasetManifest or SampleSet, got {type(data).__name__}")


def batches(n: int, batch_size: int, rng: np.random.Generator) -> list[np.ndarray]:
    """Shuffled minibatch indices; a trailing single sample is dropped (batch norm)."""
    order = rng.permutation(n)
    out = [order[i:i + batch_size] for i in range(0, n, batch_size)]
    if out and len(out[-1]) < 2:
        out.pop()
    return out


def train(net: MirrorLinkNet, data, config: TrainConfig, log=None) -> TrainResult:
    """Adam on the total loss over seeded, shuffled minibatches of the train split.

    With ``config.max_steps`` set the loop runs exactly that many steps,
    cycling through epochs as needed; otherwise it runs ``config.epochs``.
    """
    samples = resolve_samples(data, "train", config.categories)
    if len(samples) < 2:
        raise ValueError(f"need at least 2 training samples, got {len(samples)}")
    res = net.config.resolution
    if samples.image.shape[2:] != (res, res):
        raise ValueError(f"data resolution {samples.image.shape[2]} does not match network {res}")
    dtype = np.dtype(net.dtype)
    rng = np.random.default_rng(config.seed)
    opt = Adam(net.parameters(), lr=config.lr)
    history = []
    step, epoch = 0, 0
    budget = config.max_steps
    while (step < budget) if budget is not None else (epoch < config.epochs):
        for idx in batches(len(samples), config.batch_size, rng):
            if budget is not None and step >= budget:
                break
            images = samples.image[idx].astype(dtype)
            preds = net(images, training=True)
            heads = head_losses(preds, samples.targets(idx), samples.mask[idx], images, config.loss)
            total = heads["albedo"] + heads["shading"] + heads["specular"]
            value = float(total.data)
            if not np.isfinite(value):
                raise TrainingDiverged(step, epoch, value)
            opt.zero_grad()
            backward(total)
            opt.step()
            row = {"epoch": epoch, "step": step, "loss": value}
            row.update({k: float(v.data) for k, v in heads.items()})
            history.append(row)
            step += 1
        if log is not None:
            epoch_rows = [r["loss"] for r in history if r["epoch"] == epoch]
            if epoch_rows:
                log(f"epoch {epoch}: loss {np.mean(epoch_rows):.5f} ({step} steps)")
        epoch += 1
    return TrainResult(net, history, opt.state)


def predict(net: MirrorLinkNet, images: np.ndarray, batch_size: int = 16) -> tuple:
    """Eval-mode forward in batches; returns three ``(N, 3, H, W)`` float32 arrays."""
    images = np.asarray(images, dtype=net.dtype)
    outs = ([], [], [])
    with no_grad():
        for i in range(0, len(images), batch_size):
            for store, t in zip(outs, net(images[i:i + batch_size], training=False)):
                store.append(t.data.astype(np.float32))
    return tuple(np.concatenate(o) for o in outs)


def _hwc(a: np.ndarray) -> np.ndarray:
    return np.ascontiguousarray(a.transpose(1, 2, 0))


def evaluate(predictor, data, split: str = "test", categories=None, label: str = "") -> MetricReport:
    """Metric report over the selected samples.

    ``predictor`` is a network (eval-mode forward) or any callable mapping an
    ``(N, 3, H, W)`` batch to an ``(albedo, shading, specular)`` triple.
    """
    samples = resolve_samples(data, split, categories)
    if len(samples) == 0:
        raise ValueError("evaluation selection is empty")
    if isinstance(predictor, MirrorLinkNet):
        res = predictor.config.resolution
        if samples.image.shape[2:] != (res, res):
            raise ValueError(f"data resolution {samples.image.shape[2]} does not match network {res}")
        A, S, R = predict(predictor, samples.image)
    else:
        A, S, R = (np.asarray(a) for a in predictor(samples.image))
    report = MetricReport(label=label)
    for i, sid in enumerate(samples.ids):
        gt = IntrinsicTriple(_hwc(samples.image[i]), _hwc(samples.albedo[i]),
                             _hwc(samples.shading[i]), _hwc(samples.specular[i]), samples.mask[i])
        report.add(sid, evaluate_triple((_hwc(A[i]), _hwc(S[i]), _hwc(R[i])), gt))
    return report


def baseline_predictor(images: np.ndarray) -> tuple:
    """Albedo = input, shading = 1, specular = 0 (batched)."""
    images = np.asarray(images, dtype=np.float32)
    return images.copy(), np.ones_like(images), np.zeros_like(images)


def oracle_predictor(samples: SampleSet):
    """Returns ground truth for the given samples; a test stub for :func:`evaluate`."""
    def predict_fn(images):
        if images.shape != samples.image.shape or not np.array_equal(images, samples.image):
            raise ValueError("oracle predictor called on different images")
        return samples.albedo, samples.shading, samples.specular
    return predict_fn


def save_report(path, report: MetricReport) -> None:
    atomic_write_text(os.fspath(path), report.to_json() + "\n")
