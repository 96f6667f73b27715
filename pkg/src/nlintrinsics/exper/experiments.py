"""Multi-model experiments: cross-category matrix, decoder fine-tuning, variant sweep.

Every training inside one experiment gets the same seed and the same fixed
optimizer-step budget, regardless of how much data it sees.
"""
from __future__ import annotations

import copy
import json
import os
from dataclasses import dataclass, field

import numpy as np

from ..fileio import atomic_write_text
from ..metrics import COMPONENTS, MetricReport, format_table
from ..network import VARIANTS, build, encoder_checksum, freeze_encoder
from .dataset import SampleSet
from .training import TrainConfig, TrainResult, evaluate, resolve_samples, train

ALL = "ALL"


def default_budget(config: TrainConfig, n_train: int) -> int:
    """Steps that ``config.epochs`` would take on ``n_train`` samples."""
    per_epoch = n_train // config.batch_size + (1 if n_train % config.batch_size >= 2 else 0)
    return max(per_epoch, 1) * config.epochs


class ExperimentAborted(RuntimeError):
    def __init__(self, message: str, partial):
        super().__init__(message)
        self.partial = partial


@dataclass
class CrossCategoryReport:
    categories: list
    matrices: dict = field(default_factory=dict)     # component -> rows x cols DSSIM means
    rows: list = field(default_factory=list)          # ALL first, then the categories
    steps: dict = field(default_factory=dict)         # row -> optimizer steps taken

    def cell(self, component: str, row: str, col: str) -> float:
        return self.matrices[component][self.rows.index(row)][self.categories.index(col)]

    def diagonal_trend(self, component: str = "albedo") -> tuple[float, float]:
        """(mean of the per-category diagonal, mean of the off-diagonal cells)."""
        diag, off = [], []
        for r in self.categories:
            for c in self.categories:
                (diag if r == c else off).append(self.cell(component, r, c))
        return float(np.mean(diag)), float(np.mean(off))

    def to_dict(self) -> dict:
        return {"categories": self.categories, "rows": self.rows,
                "matrices": self.matrices, "steps": self.steps}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    @classmethod
    def from_dict(cls, d: dict) -> "CrossCategoryReport":
        return cls(list(d["categories"]), {k: [list(r) for r in v] for k, v in d["matrices"].items()},
                   list(d["rows"]), dict(d["steps"]))

    def format(self) -> str:
        width = max(len(r) for r in self.rows + self.categories + ["train\\test"]) + 2
        lines = []
        for comp in COMPONENTS:
            lines.append(f"{comp} DSSIM")
            lines.append("train\\test".ljust(width) + "".join(c.ljust(width) for c in self.categories))
            for i, r in enumerate(self.rows):
                cells = self.matrices[comp][i]
                lines.append(r.ljust(width) + "".join(f"{v:.4f}".ljust(width) for v in cells))
            lines.append("")
        return "\n".join(lines).rstrip() + "\n"


def _save(path, obj) -> None:
    if path is not None:
        atomic_write_text(os.fspath(path), obj.to_json() + "\n")


def cross_category(train_data, test_data, categories, config: TrainConfig,
                   max_steps: int | None = None, out_path=None, log=None) -> CrossCategoryReport:
    """Train one model per category plus one on all of them; DSSIM on every test split.

    ``train_data``/``test_data`` are manifests or preloaded sample sets.  The
    step budget defaults to ``config.epochs`` passes over the pooled data.  If a
    training fails the rows finished so far are written to ``out_path`` and
    :class:`ExperimentAborted` carries them.
    """
    categories = list(categories)
    if len(categories) < 2:
        raise ValueError("cross_category needs at least two categories")
    train_all = resolve_samples(train_data, "train", categories)
    test_sets = {c: resolve_samples(test_data, "test", [c]) for c in categories}
    budget = max_steps or config.max_steps or default_budget(config, len(train_all))
    report = CrossCategoryReport(categories, {c: [] for c in COMPONENTS})
    for row in [ALL] + categories:
        subset = train_all if row == ALL else train_all.where_category([row])
        try:
            result = train(build(config.network, seed=config.seed), subset,
                           config.replace(categories=None, max_steps=budget))
        except Exception as exc:
            _save(out_path, report)
            raise ExperimentAborted(f"training row {row!r} failed: {exc}", report) from exc
        report.rows.append(row)
        report.steps[row] = result.steps
        for comp in COMPONENTS:
            report.matrices[comp].append(
                [evaluate(result.net, test_sets[c])[f"{comp}.dssim"] for c in categories])
        if log is not None:
            log(f"row {row}: albedo DSSIM " + " ".join(
                f"{v:.4f}" for v in report.matrices["albedo"][-1]))
        _save(out_path, report)
    return report


def finetune_decoder(net, data, target: str, config: TrainConfig, source: str = "",
                     max_steps: int | None = None) -> TrainResult:
    """Copy ``net``, freeze its encoder and train the decoders on ``target``'s train split.

    The returned network carries the label ``"<source>-<target>"`` in ``extra``.
    """
    tuned = freeze_encoder(copy.deepcopy(net))
    before = encoder_checksum(tuned)
    result = train(tuned, resolve_samples(data, "train", [target]),
                   config.replace(categories=None, max_steps=max_steps or config.max_steps))
    if encoder_checksum(tuned) != before:
        raise RuntimeError("encoder changed during decoder fine-tuning")
    tuned.extra["label"] = f"{source}-{target}" if source else target
    return result


@dataclass
class FinetuneReport:
    """Rows ``X``, ``X-Y``, ``Y``, ``Y-X``; columns the two test categories."""

    categories: list
    rows: dict = field(default_factory=dict)     # label -> {category -> aggregate dict}
    checksums: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"categories": self.categories, "rows": self.rows, "checksums": self.checksums}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def format(self) -> str:
        width = max(len(r) for r in self.rows) + 2
        head = "model".ljust(width) + "".join(
            f"{c}:{comp[:4]}".ljust(14) for c in self.categories for comp in COMPONENTS)
        lines = [head.rstrip()]
        for label, cols in self.rows.items():
            cells = [f"{cols[c][f'{comp}.dssim']:.4f}" for c in self.categories for comp in COMPONENTS]
            lines.append(label.ljust(width) + "".join(v.ljust(14) for v in cells).rstrip())
        return "\n".join(lines) + "\n"


def finetune_table(train_data, test_data, pair, config: TrainConfig,
                   max_steps: int | None = None, finetune_steps: int | None = None) -> FinetuneReport:
    """Train on X and on Y, then cross fine-tune the decoders; DSSIM on both test splits."""
    x, y = pair
    budget = max_steps or config.max_steps
    tune_budget = finetune_steps or budget
    tests = {c: resolve_samples(test_data, "test", [c]) for c in (x, y)}
    report = FinetuneReport([x, y])
    base = {}
    for c in (x, y):
        base[c] = train(build(config.network, seed=config.seed),
                        resolve_samples(train_data, "train", [c]),
                        config.replace(categories=None, max_steps=budget)).net
    for label, net in ((x, base[x]), (f"{x}-{y}", None), (y, base[y]), (f"{y}-{x}", None)):
        if net is None:
            src, dst = label.split("-")
            before = encoder_checksum(base[src])
            net = finetune_decoder(base[src], train_data, dst, config, src, tune_budget).net
            report.checksums[label] = {"before": before, "after": encoder_checksum(net)}
        report.rows[label] = {c: evaluate(net, tests[c]).aggregate() for c in (x, y)}
    return report


@dataclass
class AblationReport:
    reports: dict = field(default_factory=dict)   # variant -> MetricReport
    steps: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"steps": self.steps, "reports": {k: v.to_dict() for k, v in self.reports.items()}}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def format(self) -> str:
        return format_table(self.reports) + "\n"


def ablate(variants, train_data, test_data, config: TrainConfig,
           max_steps: int | None = None, log=None) -> AblationReport:
    """One model per variant; same data, seed and step budget for each."""
    variants = list(variants)
    if len(variants) < 2:
        raise ValueError("ablate needs at least two variants")
    unknown = [v for v in variants if v not in VARIANTS]
    if unknown:
        raise ValueError(f"unknown variant(s) {unknown}; choose from {list(VARIANTS)}")
    train_set = resolve_samples(train_data, "train", config.categories)
    test_set = resolve_samples(test_data, "test", config.categories)
    budget = max_steps or config.max_steps or default_budget(config, len(train_set))
    out = AblationReport()
    for variant in variants:
        cfg = config.replace(categories=None, max_steps=budget,
                             network=dict(config.network.__dict__, variant=variant))
        result = train(build(cfg.network, seed=cfg.seed), train_set, cfg)
        out.steps[variant] = result.steps
        out.reports[variant] = evaluate(result.net, test_set, label=variant)
        if log is not None:
            log(f"{variant}: albedo DSSIM {out.reports[variant]['albedo.dssim']:.4f}")
    return out


def reload_report(text: str):
    d = json.loads(text)
    if "matrices" in d:
        return CrossCategoryReport.from_dict(d)
    return MetricReport.from_dict(d)


__all__ = ["ALL", "AblationReport", "CrossCategoryReport", "ExperimentAborted", "FinetuneReport",
           "SampleSet", "ablate", "cross_category", "default_budget", "finetune_decoder",
           "finetune_table", "reload_report"]
