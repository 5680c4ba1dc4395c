"""Class-weighted training over repeated stratified shuffle splits.

Traces are split 80:20 with per-kind stratification, one fresh model is
trained per split (one graph per gradient step), and per-class metrics are
pooled over each split's held-out points, then averaged across splits.
"""
from __future__ import annotations

import multiprocessing
from dataclasses import dataclass, asdict
from pathlib import Path

import numpy as np

from . import tensor_core as tc
from .gat_model import GatModel, PreparedGraph, build_model, count_parameters, \
    model_forward, prepare_graph
from .inject import LabeledTrace
from .metrics import EvalReport, SplitMetrics, aggregate, split_metrics
from .mtf_graph import transform
from .seeds import derive_seed
from .tensor_core import Tensor
from .trace import DEFAULT_SCHEMA, TraceSchema


class SplitError(Exception):
    pass


class TrainingError(Exception):
    def __init__(self, message: str, epoch: int | None = None):
        super().__init__(message)
        self.epoch = epoch


@dataclass(frozen=True)
class TrainConfig:
    n_splits: int = 10
    test_fraction: float = 0.2
    epochs: int = 50
    learning_rate: float = 3e-3
    optimizer: str = "adam"
    seed: int = 0
    threshold: float = 0.5

    def __post_init__(self):
        if not 0 < self.test_fraction < 1:
            raise SplitError("test_fraction must be in (0, 1)")
        if self.epochs < 1:
            raise TrainingError("epochs must be >= 1")
        if self.optimizer not in ("adam", "sgd"):
            raise TrainingError(f"unknown optimizer {self.optimizer!r}")

    @classmethod
    def from_file(cls, path) -> "TrainConfig":
        """Flat key=value text; unknown keys are rejected."""
        values = {}
        fields = cls.__dataclass_fields__
        for line_no, line in enumerate(Path(path).read_text().splitlines(), 1):
            text = line.strip()
            if not text or text.startswith("#"):
                continue
            if "=" not in text:
                raise TrainingError(f"config line {line_no}: expected key=value")
            key, _, raw = text.partition("=")
            key, raw = key.strip(), raw.strip()
            if key not in fields:
                raise TrainingError(f"config line {line_no}: unknown key {key!r}")
            kind = fields[key].type
            values[key] = raw if kind == "str" else int(raw) if kind == "int" else float(raw)
        return cls(**values)

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class ClassWeights:
    w_anomalous: float
    w_normal: float


def stratified_shuffle_split(dataset: list[LabeledTrace],
                             cfg: TrainConfig) -> list[tuple[np.ndarray, np.ndarray]]:
    """n_splits independent shuffled 80:20 partitions, stratified by the
    trace-level anomaly kind. Deterministic for a fixed config seed."""
    strata: dict[str, list[int]] = {}
    for i, item in enumerate(dataset):
        strata.setdefault(item.kind.value, []).append(i)
    for kind, members in strata.items():
        if len(members) < 2:
            raise SplitError(f"stratum {kind!r} has fewer than 2 traces")
    splits = []
    for s in range(cfg.n_splits):
        rng = np.random.default_rng([cfg.seed, 2654435769, s])
        train: list[int] = []
        test: list[int] = []
        for kind in sorted(strata):
            members = np.asarray(strata[kind])
            perm = rng.permutation(members)
            n_test = int(round(len(members) * cfg.test_fraction))
            n_test = min(max(n_test, 1), len(members) - 1)
            test.extend(perm[:n_test])
            train.extend(perm[n_test:])
        splits.append((np.sort(np.asarray(train)), np.sort(np.asarray(test))))
    return splits


def class_weights(train_traces: list[LabeledTrace]) -> ClassWeights:
    """Inverse class proportions over training points:
    w_c = total / (2 * points_of_class_c)."""
    n_anom = sum(int(t.labels.sum()) for t in train_traces)
    total = sum(t.trace.length for t in train_traces)
    n_norm = total - n_anom
    if n_anom == 0 or n_norm == 0:
        raise SplitError("both classes must appear among training points")
    return ClassWeights(w_anomalous=total / (2.0 * n_anom),
                        w_normal=total / (2.0 * n_norm))


def weighted_bce(probabilities: Tensor, labels: np.ndarray,
                 weights: ClassWeights) -> Tensor:
    """Mean binary cross-entropy with per-class weights; log arguments are
    clamped at 1e-12."""
    labels = np.asarray(labels, dtype=np.float64)
    n = labels.size
    if probabilities.data.size != n:
        raise tc.ShapeError(f"{probabilities.data.size} probabilities for {n} labels")
    y = labels.reshape(probabilities.data.shape)
    pos = tc.constant(weights.w_anomalous * y)
    neg = tc.constant(weights.w_normal * (1.0 - y))
    log_p = tc.log(probabilities, floor=1e-12)
    log_q = tc.log(tc.sub(tc.constant(np.ones_like(y)), probabilities), floor=1e-12)
    total = tc.sum_all(tc.add(tc.mul(pos, log_p), tc.mul(neg, log_q)))
    return tc.scale(total, -1.0 / n)


class AdamOptimizer:
    def __init__(self, params: dict[str, Tensor], lr: float,
                 beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.params = params
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.t = 0
        self.m = {name: np.zeros_like(t.data) for name, t in params.items()}
        self.v = {name: np.zeros_like(t.data) for name, t in params.items()}

    def step(self, grads: dict[Tensor, np.ndarray]) -> None:
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        scale = self.lr * np.sqrt(1 - b2 ** self.t) / (1 - b1 ** self.t)
        for name, p in self.params.items():
            g = grads.get(p)
            if g is None:
                continue
            m = self.m[name]
            v = self.v[name]
            m *= b1
            m += (1 - b1) * g
            v *= b2
            v += (1 - b2) * g * g
            p.data -= scale * m / (np.sqrt(v) + self.eps)


class SgdOptimizer:
    def __init__(self, params: dict[str, Tensor], lr: float):
        self.params = params
        self.lr = lr

    def step(self, grads: dict[Tensor, np.ndarray]) -> None:
        for p in self.params.values():
            g = grads.get(p)
            if g is not None:
                p.data -= self.lr * g


def _make_optimizer(cfg: TrainConfig, params: dict[str, Tensor]):
    if cfg.optimizer == "adam":
        return AdamOptimizer(params, lr=cfg.learning_rate)
    return SgdOptimizer(params, lr=cfg.learning_rate)


def prepare_dataset(dataset: list[LabeledTrace],
                    schema: TraceSchema = DEFAULT_SCHEMA,
                    n_bins: int | None = None) -> list[PreparedGraph]:
    return [prepare_graph(transform(item.trace, schema, n_bins))
            for item in dataset]


@dataclass
class FitResult:
    model: GatModel
    loss_curve: list[float]
    weights: ClassWeights
    steps: int = 0


def fit(dataset: list[LabeledTrace], model_seed: int, cfg: TrainConfig,
        prepared: list[PreparedGraph] | None = None,
        weights: ClassWeights | None = None,
        schema: TraceSchema = DEFAULT_SCHEMA) -> FitResult:
    """Train one model on the given traces, one graph per gradient step.

    Deterministic for fixed (dataset, model_seed, cfg). Raises TrainingError
    with the epoch index if the loss leaves the finite range.
    """
    if not dataset:
        raise TrainingError("dataset is empty")
    if prepared is None:
        prepared = prepare_dataset(dataset, schema)
    if weights is None:
        weights = class_weights(dataset)
    model = build_model(seed=model_seed)
    optimizer = _make_optimizer(cfg, model.params)
    order_rng = np.random.default_rng([cfg.seed, 1162261467, model_seed])
    loss_curve: list[float] = []
    steps = 0
    for epoch in range(cfg.epochs):
        order = order_rng.permutation(len(dataset))
        epoch_loss = 0.0
        for i in order:
            with tc.Tape() as tape:
                try:
                    probs = model_forward(prepared[i], model)
                    loss = weighted_bce(probs, dataset[i].labels, weights)
                except tc.NonFiniteError as exc:
                    raise TrainingError(f"training diverged: {exc}",
                                        epoch=epoch) from exc
                grads = tc.backward(loss, tape)
            value = float(loss.data)
            if not np.isfinite(value):
                raise TrainingError("training diverged: non-finite loss",
                                    epoch=epoch)
            optimizer.step(grads)
            steps += 1
            epoch_loss += value
        loss_curve.append(epoch_loss / len(dataset))
    return FitResult(model=model, loss_curve=loss_curve, weights=weights,
                     steps=steps)


def evaluate_split(model: GatModel, dataset: list[LabeledTrace],
                   prepared: list[PreparedGraph], indices: np.ndarray,
                   threshold: float = 0.5) -> SplitMetrics:
    """Pool predictions over every point of the given traces."""
    preds, truths = [], []
    for i in indices:
        probs = model_forward(prepared[i], model).data[:, 0]
        preds.append(probs >= threshold)
        truths.append(dataset[i].labels.astype(bool))
    return split_metrics(np.concatenate(preds), np.concatenate(truths))


@dataclass
class CrossValResult:
    report: EvalReport
    models: list[GatModel]
    loss_curves: list[list[float]]
    splits: list[tuple[np.ndarray, np.ndarray]]


def _run_single_split(args) -> tuple[int, SplitMetrics, GatModel, list[float]]:
    k, dataset, prepared, train_idx, test_idx, cfg = args
    train_subset = [dataset[i] for i in train_idx]
    result = fit(train_subset, model_seed=derive_seed(cfg.seed, "model", k),
                 cfg=cfg, prepared=[prepared[i] for i in train_idx],
                 weights=class_weights(train_subset))
    metrics = evaluate_split(result.model, dataset, prepared, test_idx,
                             threshold=cfg.threshold)
    return k, metrics, result.model, result.loss_curve


def run_cross_validation(dataset: list[LabeledTrace], cfg: TrainConfig,
                         schema: TraceSchema = DEFAULT_SCHEMA,
                         prepared: list[PreparedGraph] | None = None,
                         workers: int = 1) -> CrossValResult:
    """Train one model per stratified shuffle split and aggregate metrics."""
    if prepared is None:
        prepared = prepare_dataset(dataset, schema)
    splits = stratified_shuffle_split(dataset, cfg)
    payloads = [(k, dataset, prepared, train_idx, test_idx, cfg)
                for k, (train_idx, test_idx) in enumerate(splits)]
    if workers > 1:
        with multiprocessing.Pool(workers) as pool:
            results = pool.map(_run_single_split, payloads)
    else:
        results = [_run_single_split(p) for p in payloads]
    results.sort(key=lambda r: r[0])
    per_split = [r[1] for r in results]
    models = [r[2] for r in results]
    curves = [r[3] for r in results]
    report = aggregate(per_split, parameter_count=count_parameters(models[0]),
                       config=cfg.to_dict())
    return CrossValResult(report=report, models=models, loss_curves=curves,
                          splits=splits)


def cross_validate(dataset: list[LabeledTrace], cfg: TrainConfig,
                   schema: TraceSchema = DEFAULT_SCHEMA) -> EvalReport:
    return run_cross_validation(dataset, cfg, schema).report


def loss_curves_to_csv(curves: list[list[float]]) -> str:
    lines = ["split,epoch,loss"]
    for split_idx, curve in enumerate(curves):
        for epoch, value in enumerate(curve):
            lines.append(f"{split_idx},{epoch},{value!r}")
    return "\n".join(lines) + "\n"
