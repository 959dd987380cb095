"""Stage schedules and two-level balanced batch sampling.

The reference plan trains in three stages with per-batch subset-level
compositions (256, 0, 0), (128, 128, 0) and (128, 64, 64) at batch size 256,
loss weights (1.0, 0.5, 0.5), an initial learning rate of 0.1 decaying by 10x
at iterations 300k / 500k / 600k / 650k of a 700k-iteration run, and stage
transitions at the first two decay points. ``default_schedule`` scales both
the composition (to any batch size divisible by 4) and the iteration axis
(by a factor in (0, 1]) so the same plan runs at desk scale.

Batches apply two balancing rules: the level-0 (clean) portion draws that
many distinct categories uniformly and then one uniformly random clean sample
from each (category-level balance); higher-level portions are plain uniform
draws with replacement from their subsets, deliberately without category
balance.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .curriculum import CurriculumDesign
from .data import FeatureSet

logger = logging.getLogger(__name__)

BASE_BATCH = 256
BASE_COMPOSITIONS = ((256, 0, 0), (128, 128, 0), (128, 64, 64))
BASE_TOTAL_ITERS = 700_000
BASE_LR = 0.1
LR_DECAY_FACTOR = 10.0
BASE_LR_DECAY_ITERS = (300_000, 500_000, 600_000, 650_000)
# Stage transitions coincide with the first two decay points.
BASE_STAGE_BOUNDS = (300_000, 500_000)

DEFAULT_LOSS_WEIGHTS = (1.0, 0.5, 0.5)


@dataclass(frozen=True)
class StageSpec:
    """One training stage.

    ``batch_composition`` gives per-level sample counts per batch; ``None``
    means unrestricted uniform sampling over all levels up to ``stage_index``
    (used by the plain-training baseline). ``lr_plan`` is a tuple of
    (global iteration, learning rate) breakpoints; a rate applies from its
    iteration until the next breakpoint.
    """

    stage_index: int
    batch_size: int
    batch_composition: tuple[int, ...] | None
    loss_weights: tuple[float, ...]
    iterations: int
    lr_plan: tuple[tuple[int, float], ...]

    def __post_init__(self) -> None:
        if self.batch_composition is not None:
            if any(c < 0 for c in self.batch_composition):
                raise ValueError("batch composition counts must be >= 0")
            if sum(self.batch_composition) != self.batch_size:
                raise ValueError("batch composition must sum to the batch size")
            for level, count in enumerate(self.batch_composition):
                if level > self.stage_index and count > 0:
                    raise ValueError(
                        f"stage {self.stage_index} cannot draw from level {level}"
                    )
        if self.iterations < 0:
            raise ValueError("iterations must be >= 0")
        if not self.lr_plan:
            raise ValueError("lr_plan must have at least one breakpoint")


@dataclass(frozen=True)
class Batch:
    """Sampled mini-batch: dataset row indices with per-sample loss weights."""

    indices: np.ndarray
    weights: np.ndarray
    levels: np.ndarray

    @property
    def size(self) -> int:
        return self.indices.shape[0]

    def level_counts(self, n_levels: int) -> tuple[int, ...]:
        return tuple(int(x) for x in np.bincount(self.levels, minlength=n_levels))


def _scale_iteration(base: int, scale: float) -> int:
    return int(round(base * scale))


def lr_at(lr_plan: tuple[tuple[int, float], ...], iteration: int) -> float:
    """Learning rate in effect at a global iteration."""
    rate = lr_plan[0][1]
    for start, lr in lr_plan:
        if iteration >= start:
            rate = lr
        else:
            break
    return rate


def full_lr_plan(scale: float = 1.0) -> tuple[tuple[int, float], ...]:
    """The whole-run learning-rate plan: 0.1 decaying by 10x at each scaled
    decay iteration."""
    plan = [(0, BASE_LR)]
    lr = BASE_LR
    for base_it in BASE_LR_DECAY_ITERS:
        lr /= LR_DECAY_FACTOR
        plan.append((_scale_iteration(base_it, scale), lr))
    return tuple(plan)


def _plan_slice(
    plan: tuple[tuple[int, float], ...], start: int, stop: int
) -> tuple[tuple[int, float], ...]:
    segment = [(start, lr_at(plan, start))]
    for it, lr in plan:
        if start < it < stop:
            segment.append((it, lr))
    return tuple(segment)


def _scaled_composition(base: tuple[int, ...], batch_size: int) -> tuple[int, ...]:
    return tuple(c * batch_size // BASE_BATCH for c in base)


def _check_schedule_args(batch_size: int, scale: float) -> None:
    if batch_size < 4 or batch_size % 4 != 0:
        raise ValueError("batch_size must be a positive multiple of 4")
    if not 0.0 < scale <= 1.0:
        raise ValueError("scale must be in (0, 1]")


def default_schedule(batch_size: int = BASE_BATCH, scale: float = 1.0) -> list[StageSpec]:
    """The three-stage plan, composition scaled to `batch_size` and the
    iteration axis scaled by `scale`."""
    _check_schedule_args(batch_size, scale)
    plan = full_lr_plan(scale)
    b1 = _scale_iteration(BASE_STAGE_BOUNDS[0], scale)
    b2 = _scale_iteration(BASE_STAGE_BOUNDS[1], scale)
    total = _scale_iteration(BASE_TOTAL_ITERS, scale)
    bounds = ((0, b1), (b1, b2), (b2, total))
    stages = []
    for s, (start, stop) in enumerate(bounds):
        stages.append(
            StageSpec(
                stage_index=s,
                batch_size=batch_size,
                batch_composition=_scaled_composition(BASE_COMPOSITIONS[s], batch_size),
                loss_weights=DEFAULT_LOSS_WEIGHTS,
                iterations=stop - start,
                lr_plan=_plan_slice(plan, start, stop),
            )
        )
    return stages


def two_stage_schedule(
    batch_size: int = BASE_BATCH, scale: float = 1.0, n_levels: int = 3
) -> list[StageSpec]:
    """Two-stage curriculum plan: the clean-only stage, then clean+noisy for
    the remainder of the run. Levels above 1 (e.g. the highly-noisy subset
    of a 3-level curriculum) are never sampled."""
    _check_schedule_args(batch_size, scale)
    if n_levels < 2:
        raise ValueError("a two-stage plan needs at least 2 levels")
    plan = full_lr_plan(scale)
    b1 = _scale_iteration(BASE_STAGE_BOUNDS[0], scale)
    total = _scale_iteration(BASE_TOTAL_ITERS, scale)
    half = batch_size // 2
    weights = DEFAULT_LOSS_WEIGHTS[:n_levels] + (0.5,) * max(0, n_levels - 3)
    pad = (0,) * (n_levels - 2)
    return [
        StageSpec(
            stage_index=0,
            batch_size=batch_size,
            batch_composition=(batch_size, 0) + pad,
            loss_weights=weights,
            iterations=b1,
            lr_plan=_plan_slice(plan, 0, b1),
        ),
        StageSpec(
            stage_index=1,
            batch_size=batch_size,
            batch_composition=(half, half) + pad,
            loss_weights=weights,
            iterations=total - b1,
            lr_plan=_plan_slice(plan, b1, total),
        ),
    ]


def single_stage_schedule(
    batch_size: int = BASE_BATCH,
    scale: float = 1.0,
    *,
    clean_only: bool,
    n_levels: int = 3,
) -> list[StageSpec]:
    """One stage for the full budget: either clean-only batches with the
    category-level balance, or unrestricted unweighted sampling over all
    levels (the plain-training baseline)."""
    _check_schedule_args(batch_size, scale)
    plan = full_lr_plan(scale)
    total = _scale_iteration(BASE_TOTAL_ITERS, scale)
    if clean_only:
        composition: tuple[int, ...] | None = (batch_size,) + (0,) * (n_levels - 1)
        weights = DEFAULT_LOSS_WEIGHTS[:n_levels]
        stage_index = 0
    else:
        composition = None
        weights = (1.0,) * n_levels
        stage_index = n_levels - 1
    return [
        StageSpec(
            stage_index=stage_index,
            batch_size=batch_size,
            batch_composition=composition,
            loss_weights=weights,
            iterations=total,
            lr_plan=_plan_slice(plan, 0, total),
        )
    ]


# ---------------------------------------------------------------------------
# sampling


class CurriculumSampler:
    """Draws stage batches from a curriculum bound to a FeatureSet.

    The sampler is a pure function of the generator passed to
    :meth:`next_batch`; two identically seeded generators yield identical
    batches. If a required subset is empty dataset-wide, its count shifts to
    the nearest lower non-empty level (logged once per stage/level pair).
    `include` masks samples out of every pool without touching the dataset
    (used by the highly-noisy-fraction sweep).
    """

    def __init__(
        self,
        cd: CurriculumDesign,
        fs: FeatureSet,
        include: np.ndarray | None = None,
    ):
        self.fs = fs
        self.levels = cd.levels_for(fs)
        self.n_levels = cd.n_subsets
        if include is None:
            self.include = np.ones(fs.n_samples, dtype=bool)
        else:
            self.include = np.asarray(include, dtype=bool)
            if self.include.shape != (fs.n_samples,):
                raise ValueError("include mask length does not match the dataset")
        self.by_level = [
            np.flatnonzero((self.levels == s) & self.include)
            for s in range(self.n_levels)
        ]
        self.clean_by_category = [
            np.flatnonzero((self.levels == 0) & self.include & (fs.labels == c))
            for c in range(fs.n_categories)
        ]
        self.categories_with_clean = np.array(
            [c for c, idx in enumerate(self.clean_by_category) if idx.size],
            dtype=np.int64,
        )
        self._warned: set[tuple[int, int]] = set()

    def _effective_composition(self, stage: StageSpec) -> list[int]:
        counts = list(stage.batch_composition)
        if len(counts) > self.n_levels:
            raise ValueError(
                f"stage composition spans {len(counts)} levels but the "
                f"curriculum has {self.n_levels}"
            )
        counts += [0] * (self.n_levels - len(counts))
        for level in range(len(counts) - 1, 0, -1):
            if counts[level] and not self.by_level[level].size:
                target = level - 1
                while target > 0 and not self.by_level[target].size:
                    target -= 1
                if (stage.stage_index, level) not in self._warned:
                    logger.warning(
                        "stage %d: level %d subset is empty; moving %d picks to level %d",
                        stage.stage_index, level, counts[level], target,
                    )
                    self._warned.add((stage.stage_index, level))
                counts[target] += counts[level]
                counts[level] = 0
        if counts[0] and not self.by_level[0].size:
            raise ValueError("level 0 subset is empty; cannot build a batch")
        return counts

    def _draw_clean(self, count: int, rng: np.random.Generator) -> np.ndarray:
        cats = self.categories_with_clean
        replace = cats.size < count
        picked = rng.choice(cats, size=count, replace=replace)
        out = np.empty(count, dtype=np.int64)
        for i, c in enumerate(picked):
            pool = self.clean_by_category[c]
            out[i] = pool[rng.integers(0, pool.size)]
        return out

    def next_batch(self, stage: StageSpec, rng: np.random.Generator) -> Batch:
        if stage.batch_composition is None:
            pool = np.flatnonzero((self.levels <= stage.stage_index) & self.include)
            if not pool.size:
                raise ValueError("no samples available for an unrestricted stage")
            indices = pool[rng.integers(0, pool.size, size=stage.batch_size)]
        else:
            counts = self._effective_composition(stage)
            parts = []
            if counts[0]:
                parts.append(self._draw_clean(counts[0], rng))
            for level in range(1, len(counts)):
                if counts[level]:
                    pool = self.by_level[level]
                    parts.append(pool[rng.integers(0, pool.size, size=counts[level])])
            indices = np.concatenate(parts) if parts else np.empty(0, dtype=np.int64)
        levels = self.levels[indices]
        weights = np.array([stage.loss_weights[lv] for lv in levels], dtype=np.float64)
        return Batch(indices=indices, weights=weights, levels=levels)


def next_batch(
    stage: StageSpec,
    cd: CurriculumDesign,
    fs: FeatureSet,
    rng: np.random.Generator,
) -> Batch:
    """One-shot convenience wrapper; build a CurriculumSampler for loops."""
    return CurriculumSampler(cd, fs).next_batch(stage, rng)
