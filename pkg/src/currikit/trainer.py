"""Desk-scale classifier trained through a staged curriculum.

The model is a linear softmax classifier or a one-hidden-layer MLP over the
feature vectors; the variable under test is the training schedule, not the
architecture. Optimization is plain SGD with momentum 0.9 and weight decay
1e-4 by default, learning rates from the stage plan. Per-sample losses are
multiplied by their subset-level weight and then averaged over the batch
size; momentum carries across stage boundaries. Runs are single-threaded and
fully deterministic for a given seed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .curriculum import CurriculumDesign
from .data import FeatureSet, NOISE_CLEAN, SyntheticTruth
from .schedule import CurriculumSampler, StageSpec, lr_at
from .seeding import component_rng

LOG_EPS = 1e-12
ARCHITECTURES = ("linear", "mlp")


class TrainingDiverged(RuntimeError):
    """Loss became non-finite during training."""


def softmax(logits: np.ndarray) -> np.ndarray:
    """Row-wise stable softmax; rows sum to 1."""
    z = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def weighted_ce_loss(
    probs: np.ndarray, label: int, weight: float
) -> tuple[float, np.ndarray]:
    """Weighted cross-entropy for one sample.

    Returns (loss, gradient w.r.t. the logits): loss is
    -weight * log(probs[label]) with the probability clamped at 1e-12, and
    the gradient is weight * (probs - onehot(label)), exactly linear in the
    weight.
    """
    probs = np.asarray(probs, dtype=np.float64)
    if weight <= 0:
        raise ValueError("weight must be positive")
    loss = -weight * math.log(max(float(probs[label]), LOG_EPS))
    grad = weight * probs.copy()
    grad[label] -= weight
    return loss, grad


def _batch_ce_and_grad(
    logits: np.ndarray, labels: np.ndarray, weights: np.ndarray
) -> tuple[float, np.ndarray]:
    """Mean weighted cross-entropy over a batch and its logit gradient."""
    b = logits.shape[0]
    probs = softmax(logits)
    picked = probs[np.arange(b), labels]
    loss = float((-weights * np.log(np.maximum(picked, LOG_EPS))).sum() / b)
    grad = probs * weights[:, None]
    grad[np.arange(b), labels] -= weights
    return loss, grad / b


def _mean_weighted_ce(logits: np.ndarray, labels: np.ndarray, weights: np.ndarray) -> float:
    probs = softmax(logits)
    picked = probs[np.arange(logits.shape[0]), labels]
    return float((-weights * np.log(np.maximum(picked, LOG_EPS))).mean())


@dataclass
class ClassifierModel:
    """Linear or one-hidden-layer softmax classifier over feature vectors.

    Inputs are standardized with the per-dimension mean/std captured at
    initialization (from the training features), so the learning rates of
    the stage plan behave the same regardless of raw feature scale.
    """

    arch: str
    input_dim: int
    n_classes: int
    params: dict[str, np.ndarray]
    input_mean: np.ndarray
    input_std: np.ndarray

    @staticmethod
    def initialize(
        arch: str,
        input_dim: int,
        n_classes: int,
        rng: np.random.Generator,
        hidden_dim: int = 32,
        train_features: np.ndarray | None = None,
    ) -> "ClassifierModel":
        """Weights from a Gaussian with variance 2 / fan_in, zero biases."""
        if arch not in ARCHITECTURES:
            raise ValueError(f"unknown architecture {arch!r}")
        def gauss(fan_in: int, shape) -> np.ndarray:
            return rng.standard_normal(shape) * math.sqrt(2.0 / fan_in)
        if arch == "linear":
            params = {
                "W": gauss(input_dim, (input_dim, n_classes)),
                "b": np.zeros(n_classes),
            }
        else:
            params = {
                "W1": gauss(input_dim, (input_dim, hidden_dim)),
                "b1": np.zeros(hidden_dim),
                "W2": gauss(hidden_dim, (hidden_dim, n_classes)),
                "b2": np.zeros(n_classes),
            }
        if train_features is None:
            mean = np.zeros(input_dim)
            std = np.ones(input_dim)
        else:
            feats = np.asarray(train_features, dtype=np.float64)
            mean = feats.mean(axis=0)
            std = np.maximum(feats.std(axis=0), 1e-8)
        return ClassifierModel(
            arch=arch, input_dim=input_dim, n_classes=n_classes, params=params,
            input_mean=mean, input_std=std,
        )

    def _standardize(self, x: np.ndarray) -> np.ndarray:
        return (np.asarray(x, dtype=np.float64) - self.input_mean) / self.input_std

    def logits(self, x: np.ndarray) -> np.ndarray:
        x = self._standardize(x)
        if self.arch == "linear":
            return x @ self.params["W"] + self.params["b"]
        hidden = np.maximum(x @ self.params["W1"] + self.params["b1"], 0.0)
        return hidden @ self.params["W2"] + self.params["b2"]

    def forward(self, x: np.ndarray) -> np.ndarray:
        """Class probabilities, rows summing to 1."""
        return softmax(self.logits(x))

    def loss_and_grads(
        self, x: np.ndarray, labels: np.ndarray, weights: np.ndarray
    ) -> tuple[float, dict[str, np.ndarray]]:
        x = self._standardize(x)
        if self.arch == "linear":
            logits = x @ self.params["W"] + self.params["b"]
            loss, g = _batch_ce_and_grad(logits, labels, weights)
            return loss, {"W": x.T @ g, "b": g.sum(axis=0)}
        pre = x @ self.params["W1"] + self.params["b1"]
        hidden = np.maximum(pre, 0.0)
        logits = hidden @ self.params["W2"] + self.params["b2"]
        loss, g = _batch_ce_and_grad(logits, labels, weights)
        g_hidden = (g @ self.params["W2"].T) * (pre > 0.0)
        return loss, {
            "W1": x.T @ g_hidden,
            "b1": g_hidden.sum(axis=0),
            "W2": hidden.T @ g,
            "b2": g.sum(axis=0),
        }


@dataclass(frozen=True)
class OptimizerConfig:
    momentum: float = 0.9
    weight_decay: float = 1e-4


@dataclass(frozen=True)
class EvalPoint:
    iteration: int
    stage: int
    train_loss: float
    test_top1: float
    test_topk: float


@dataclass
class RunMetrics:
    """Error traces of one training run.

    ``per_category_top1`` / ``per_category_topk`` are the final-eval
    per-category test accuracies (fractions correct).
    """

    strategy: str
    seed: int
    topk: int
    points: list[EvalPoint] = field(default_factory=list)
    final_top1: float = math.nan
    final_topk: float = math.nan
    per_category_top1: np.ndarray | None = None
    per_category_topk: np.ndarray | None = None

    def to_dict(self) -> dict:
        return {
            "strategy": self.strategy,
            "seed": self.seed,
            "topk": self.topk,
            "final_top1": self.final_top1,
            "final_topk": self.final_topk,
            "per_category_top1": [float(x) for x in self.per_category_top1],
            "per_category_topk": [float(x) for x in self.per_category_topk],
            "points": [
                {
                    "iteration": p.iteration,
                    "stage": p.stage,
                    "train_loss": p.train_loss,
                    "test_top1": p.test_top1,
                    "test_topk": p.test_topk,
                }
                for p in self.points
            ],
        }

    @staticmethod
    def from_dict(doc: dict) -> "RunMetrics":
        return RunMetrics(
            strategy=doc["strategy"],
            seed=int(doc["seed"]),
            topk=int(doc["topk"]),
            points=[
                EvalPoint(
                    iteration=int(p["iteration"]),
                    stage=int(p["stage"]),
                    train_loss=float(p["train_loss"]),
                    test_top1=float(p["test_top1"]),
                    test_topk=float(p["test_topk"]),
                )
                for p in doc["points"]
            ],
            final_top1=float(doc["final_top1"]),
            final_topk=float(doc["final_topk"]),
            per_category_top1=np.array(doc["per_category_top1"], dtype=np.float64),
            per_category_topk=np.array(doc["per_category_topk"], dtype=np.float64),
        )


def top_k_predictions(probs: np.ndarray, k: int) -> np.ndarray:
    """The k most probable classes per row, probability ties broken by the
    smaller class index (stable sort), so results are fully deterministic."""
    order = np.argsort(-probs, axis=1, kind="stable")
    return order[:, :k]


def evaluate(model: ClassifierModel, fs_test: FeatureSet, topk: int = 5) -> tuple[float, float]:
    """(top-1 error, top-k error) on the test set."""
    if fs_test.n_samples == 0:
        raise ValueError("empty test set")
    if topk > model.n_classes:
        raise ValueError("topk exceeds the number of classes")
    probs = model.forward(fs_test.features.astype(np.float64))
    ranked = top_k_predictions(probs, topk)
    labels = fs_test.labels
    top1_err = float((ranked[:, 0] != labels).mean())
    topk_err = float((ranked != labels[:, None]).all(axis=1).mean())
    return top1_err, topk_err


def per_category_accuracy(
    model: ClassifierModel, fs_test: FeatureSet, topk: int
) -> tuple[np.ndarray, np.ndarray]:
    """Per-category (top-1, top-k) test accuracies; nan for absent categories."""
    probs = model.forward(fs_test.features.astype(np.float64))
    ranked = top_k_predictions(probs, topk)
    labels = fs_test.labels
    hit1 = ranked[:, 0] == labels
    hitk = (ranked == labels[:, None]).any(axis=1)
    c = fs_test.n_categories
    acc1 = np.full(c, math.nan)
    acck = np.full(c, math.nan)
    for cat in range(c):
        mask = labels == cat
        if mask.any():
            acc1[cat] = float(hit1[mask].mean())
            acck[cat] = float(hitk[mask].mean())
    return acc1, acck


def _stage_pool_loss(
    model: ClassifierModel,
    fs: FeatureSet,
    levels: np.ndarray,
    include: np.ndarray,
    stage: StageSpec,
) -> float:
    pool = np.flatnonzero((levels <= stage.stage_index) & include)
    if not pool.size:
        return math.nan
    logits = model.logits(fs.features[pool].astype(np.float64))
    if stage.batch_composition is None:
        weights = np.ones(pool.size)
    else:
        weights = np.array([stage.loss_weights[lv] for lv in levels[pool]])
    return _mean_weighted_ce(logits, fs.labels[pool], weights)


def train(
    strategy_tag: str,
    fs_train: FeatureSet,
    fs_test: FeatureSet,
    cd: CurriculumDesign,
    schedule: list[StageSpec],
    seed: int,
    *,
    arch: str = "linear",
    hidden_dim: int = 32,
    topk: int = 5,
    optimizer: OptimizerConfig = OptimizerConfig(),
    eval_every: int | None = None,
    batch_log: list | None = None,
    include_mask: np.ndarray | None = None,
) -> tuple[ClassifierModel, RunMetrics]:
    """Run the staged schedule and return the model with its metrics.

    Stages run in order, the model and optimizer state carrying over between
    them. Evaluation happens at iteration 0, every `eval_every` iterations
    (default: a tenth of the run) and at the final iteration; each point
    records the mean weighted loss over the current stage's sample pool and
    the test errors. If `batch_log` is a list, a (iteration, stage,
    level_counts, weights) tuple is appended per batch. `include_mask`
    removes samples from the sampling pools without changing the dataset
    (and therefore without changing input standardization).
    """
    sampler = CurriculumSampler(cd, fs_train, include_mask)
    model = ClassifierModel.initialize(
        arch, fs_train.n_features, fs_train.n_categories,
        component_rng(seed, "model-init"), hidden_dim,
        train_features=fs_train.features,
    )
    rng = component_rng(seed, "batches")
    velocity = {k: np.zeros_like(v) for k, v in model.params.items()}
    total = sum(s.iterations for s in schedule)
    if eval_every is None:
        eval_every = max(1, total // 10)

    metrics = RunMetrics(strategy=strategy_tag, seed=seed, topk=topk)
    n_levels = sampler.n_levels
    train_x = fs_train.features.astype(np.float64)
    train_y = fs_train.labels

    def record(iteration: int, stage: StageSpec) -> None:
        top1, topk_err = evaluate(model, fs_test, topk)
        metrics.points.append(
            EvalPoint(
                iteration=iteration,
                stage=stage.stage_index,
                train_loss=_stage_pool_loss(
                    model, fs_train, sampler.levels, sampler.include, stage
                ),
                test_top1=top1,
                test_topk=topk_err,
            )
        )

    record(0, schedule[0])
    iteration = 0
    for stage in schedule:
        for _ in range(stage.iterations):
            lr = lr_at(stage.lr_plan, iteration)
            batch = sampler.next_batch(stage, rng)
            if batch_log is not None:
                batch_log.append(
                    (iteration, stage.stage_index, batch.level_counts(n_levels),
                     tuple(float(w) for w in batch.weights))
                )
            loss, grads = model.loss_and_grads(
                train_x[batch.indices], train_y[batch.indices], batch.weights
            )
            if not math.isfinite(loss):
                raise TrainingDiverged(
                    f"{strategy_tag} seed {seed}: non-finite loss at iteration "
                    f"{iteration} (stage {stage.stage_index}, lr {lr})"
                )
            for name in sorted(model.params):
                g = grads[name] + optimizer.weight_decay * model.params[name]
                velocity[name] = optimizer.momentum * velocity[name] - lr * g
                model.params[name] += velocity[name]
            iteration += 1
            if iteration % eval_every == 0 or iteration == total:
                record(iteration, stage)

    if metrics.points[-1].iteration != iteration:
        record(iteration, schedule[-1])
    metrics.final_top1 = metrics.points[-1].test_top1
    metrics.final_topk = metrics.points[-1].test_topk
    acc1, acck = per_category_accuracy(model, fs_test, topk)
    metrics.per_category_top1 = acc1
    metrics.per_category_topk = acck
    return model, metrics


def holdout_split(
    fs: FeatureSet, truth: SyntheticTruth, test_frac: float = 0.2, seed: int = 0
) -> tuple[FeatureSet, SyntheticTruth, FeatureSet]:
    """Split off a clean test set; the remainder (all noise kinds) trains.

    Per category, `test_frac` of the samples whose labels are actually
    correct (noise kind "clean") are held out, so test labels are ground
    truth by construction, mirroring evaluation on a verified validation
    set. Returns (train features, train truth, test features).
    """
    if not 0.0 < test_frac < 1.0:
        raise ValueError("test_frac must be in (0, 1)")
    rng = component_rng(seed, "holdout")
    kinds = np.array([k == NOISE_CLEAN for k in truth.noise_kind])
    test_mask = np.zeros(fs.n_samples, dtype=bool)
    for c in range(fs.n_categories):
        clean_idx = np.flatnonzero(kinds & (fs.labels == c))
        n_test = int(math.floor(test_frac * clean_idx.size + 0.5))
        if clean_idx.size and n_test == clean_idx.size:
            n_test -= 1  # keep at least one clean training sample
        if n_test:
            test_mask[rng.choice(clean_idx, size=n_test, replace=False)] = True
    train_mask = ~test_mask
    return fs.take(train_mask), truth.take(train_mask), fs.take(test_mask)
