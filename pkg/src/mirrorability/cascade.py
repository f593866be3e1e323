"""Cascaded linear shape regression over shape-indexed probe features.

Each stage is a ridge-regularized linear map from probe features sampled
around the current landmark estimates to a shape update. Updates live in a
frame normalized by the current shape's box size, so one stage applies to
objects of any placement and scale.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np

from .errors import InsufficientData, LengthMismatch, SingularSystem
from .seeding import stream
from .shape_model import ShapeModel, fit_shape_model
from .shapes import BoundingBox, as_shape
from .synthetic import Scene, mirror_scene


def ring_layout(n_ring: int = 8, radius: float = 0.15, center: bool = True) -> np.ndarray:
    """Probe offsets: optionally the landmark itself, then ``n_ring`` points on a circle."""
    angles = 2 * np.pi * np.arange(n_ring) / n_ring
    ring = radius * np.stack([np.cos(angles), np.sin(angles)], axis=1)
    # exact zeros keep reflected offsets bit-identical to their partners
    ring[np.abs(ring) < 1e-12] = 0.0
    return np.vstack([np.zeros((1, 2)), ring]) if center else ring


DEFAULT_PROBES = ring_layout()


def reflection_permutation(offsets: np.ndarray, tol: float = 1e-9) -> np.ndarray:
    """Index ``j -> j'`` such that offset ``j'`` is offset ``j`` reflected about the vertical axis."""
    reflected = offsets * np.array([-1.0, 1.0])
    d = np.abs(reflected[:, None, :] - offsets[None, :, :]).max(axis=-1)
    perm = d.argmin(axis=1)
    if np.any(d[np.arange(len(offsets)), perm] > tol):
        raise ValueError("probe layout is not mirror symmetric")
    return perm


@dataclass(frozen=True)
class InitConfig:
    n_inits: int = 5
    translation: float = 0.10  # fraction of box size, uniform +-
    scale: float = 0.10  # multiplicative, uniform in [1 - scale, 1 + scale]
    rotation: float = 0.10  # radians, uniform +-
    seed: int = 0

    def __post_init__(self):
        if self.n_inits < 1:
            raise ValueError("n_inits must be at least 1")
        if min(self.translation, self.scale, self.rotation) < 0:
            raise ValueError("perturbation ranges must be non-negative")


class Stage(NamedTuple):
    weights: np.ndarray  # (D, 2K)
    intercept: np.ndarray  # (2K,)


@dataclass(frozen=True)
class CascadeModel:
    shape_model: ShapeModel
    stages: tuple
    probe_offsets: np.ndarray
    ridge: float
    seed: int = 0
    augment_mirror: bool = True
    train_errors: tuple = field(default=(), compare=False)

    @property
    def n_stages(self) -> int:
        return len(self.stages)

    @property
    def num_points(self) -> int:
        return self.shape_model.num_points


@dataclass(frozen=True)
class CascadeConfig:
    n_stages: int = 10
    ridge: float = 1.0
    probe_offsets: np.ndarray = field(default_factory=lambda: DEFAULT_PROBES.copy())
    init: InitConfig = field(default_factory=InitConfig)
    augment_mirror: bool = True
    n_components: int = 6
    seed: int = 0


def _sizes(shapes: np.ndarray) -> np.ndarray:
    return np.max(shapes.max(axis=-2) - shapes.min(axis=-2), axis=-1)


def extract_features(scene: Scene, shape, probe_offsets: np.ndarray = DEFAULT_PROBES) -> np.ndarray:
    """Probe the scene around each landmark; returns ``(..., K * P)`` features.

    ``shape`` may be one ``(K, 2)`` shape or a stack ``(n, K, 2)``. Offsets are
    scaled by each shape's box size. Features are ordered landmark-major.
    """
    shape = np.asarray(shape, dtype=np.float64)
    sizes = _sizes(shape)[..., None, None, None]
    pts = shape[..., :, None, :] + sizes * probe_offsets  # (..., K, P, 2)
    k = shape.shape[-2]
    channels = np.broadcast_to(np.arange(k)[:, None], pts.shape[:-1])
    vals = scene.probe(pts, channels)
    return vals.reshape(*shape.shape[:-2], k * len(probe_offsets))


def place_mean_shape(shape_model: ShapeModel, box: BoundingBox) -> np.ndarray:
    """Mean shape scaled to ``box.size()`` and centered on the box center."""
    mean = shape_model.mean_shape
    lo, hi = mean.min(axis=0), mean.max(axis=0)
    unit = (mean - (lo + hi) / 2) / np.max(hi - lo)
    return unit * box.size() + box.center


def draw_inits(shape_model: ShapeModel, box: BoundingBox, init: InitConfig, rng: np.random.Generator, n: int | None = None) -> np.ndarray:
    """Randomly perturbed similarity placements of the mean shape in ``box``: ``(n, K, 2)``."""
    n = init.n_inits if n is None else n
    base = place_mean_shape(shape_model, box)
    center = box.center
    size = box.size()
    theta = rng.uniform(-init.rotation, init.rotation, n)
    scale = rng.uniform(1 - init.scale, 1 + init.scale, n)
    shift = rng.uniform(-init.translation, init.translation, (n, 2)) * size
    c, s = np.cos(theta), np.sin(theta)
    rot = np.stack([np.stack([c, -s], -1), np.stack([s, c], -1)], -2)  # (n, 2, 2)
    rel = base - center
    return np.einsum("nij,kj->nki", rot, rel) * scale[:, None, None] + center + shift[:, None, :]


def apply_stage(stage: Stage, scene: Scene, shapes: np.ndarray, probe_offsets: np.ndarray) -> np.ndarray:
    feats = extract_features(scene, shapes, probe_offsets)
    delta = feats @ stage.weights + stage.intercept
    return shapes + _sizes(shapes)[..., None, None] * delta.reshape(shapes.shape)


def run_stages(model: CascadeModel, scene: Scene, shapes: np.ndarray, start: int = 0, stop: int | None = None) -> np.ndarray:
    for stage in model.stages[start:stop]:
        shapes = apply_stage(stage, scene, shapes, model.probe_offsets)
    return shapes


def run_cascade(model: CascadeModel, scene: Scene, init_shape) -> np.ndarray:
    init_shape = as_shape(init_shape)
    if len(init_shape) != model.num_points:
        raise LengthMismatch(f"init shape has {len(init_shape)} points, model expects {model.num_points}")
    return run_stages(model, scene, init_shape[None])[0]


def ridge_fit(features: np.ndarray, targets: np.ndarray, ridge: float) -> Stage:
    """Ridge regression with an unpenalized intercept.

    Solves ``min |Y - X W - b|^2 + ridge |W|^2`` by centering and the normal
    equations. With ``ridge == 0`` a rank-deficient design raises
    :class:`SingularSystem` instead of being silently regularized.
    """
    if ridge < 0:
        raise ValueError("ridge strength must be non-negative")
    x_mean = features.mean(axis=0)
    y_mean = targets.mean(axis=0)
    xc = features - x_mean
    yc = targets - y_mean
    gram = xc.T @ xc
    if ridge == 0:
        if np.linalg.matrix_rank(gram) < gram.shape[0]:
            raise SingularSystem("features are rank deficient and ridge strength is 0")
    else:
        gram[np.diag_indices_from(gram)] += ridge
    try:
        weights = np.linalg.solve(gram, xc.T @ yc)
    except np.linalg.LinAlgError as exc:
        raise SingularSystem(str(exc)) from exc
    return Stage(weights, y_mean - x_mean @ weights)


def _training_error(current: np.ndarray, gts: np.ndarray) -> float:
    return float(np.mean(np.sqrt(((current - gts) ** 2).sum(-1)).mean(-1) / _sizes(gts)))


def train_cascade(scenes: Sequence[Scene], config: CascadeConfig | None = None) -> CascadeModel:
    """Fit the stages one after another on perturbed placements of the mean shape.

    Initial shapes are drawn once per (scene, view) and every stage advances
    all of them; ``train_errors`` records the mean box-normalized error before
    stage 1 and after each stage.
    """
    config = config or CascadeConfig()
    if len(scenes) < 10:
        raise InsufficientData("training needs at least 10 scenes")
    ks = {s.num_points for s in scenes}
    if len(ks) != 1:
        raise LengthMismatch("training scenes disagree on landmark count")
    views = list(scenes)
    if config.augment_mirror:
        views += [mirror_scene(s) for s in scenes]
    gts = np.stack([v.ground_truth for v in views])
    shape_model = fit_shape_model(list(gts), config.n_components)

    n = config.init.n_inits
    current = np.concatenate(
        [
            draw_inits(shape_model, v.detection_box, config.init, stream(config.seed, "train", v.sample_id, int(v.flipped)))
            for v in views
        ]
    )
    gt_rep = np.repeat(gts, n, axis=0)
    offsets = np.asarray(config.probe_offsets, dtype=np.float64)
    history = [_training_error(current, gt_rep)]
    stages = []
    for _ in range(config.n_stages):
        feats = np.concatenate([extract_features(v, current[i * n : (i + 1) * n], offsets) for i, v in enumerate(views)])
        sizes = _sizes(current)[:, None, None]
        targets = ((gt_rep - current) / sizes).reshape(len(current), -1)
        stage = ridge_fit(feats, targets, config.ridge)
        stages.append(stage)
        current = current + sizes * (feats @ stage.weights + stage.intercept).reshape(current.shape)
        history.append(_training_error(current, gt_rep))
    return CascadeModel(shape_model, tuple(stages), offsets, float(config.ridge), config.seed, config.augment_mirror, tuple(history))


class MultiInitResult(NamedTuple):
    shape: np.ndarray
    per_init_shapes: np.ndarray
    init_shapes: np.ndarray


def init_stream(init: InitConfig, scene: Scene, round_index: int = 0, view: int = 0) -> np.random.Generator:
    return stream(init.seed, "init", scene.sample_id, round_index, view)


def run_multi_init(model: CascadeModel, scene: Scene, init: InitConfig | None = None, round_index: int = 0, view: int = 0) -> MultiInitResult:
    """Run the cascade from several perturbed inits and take the per-coordinate median."""
    init = init or InitConfig()
    starts = draw_inits(model.shape_model, scene.detection_box, init, init_stream(init, scene, round_index, view))
    finals = run_stages(model, scene, starts)
    return MultiInitResult(np.median(finals, axis=0), finals, starts)


def init_spread(shapes: np.ndarray, box: BoundingBox) -> float:
    """Mean over landmarks of the positional standard deviation across inits, in box units.

    The positional standard deviation of a landmark is ``sqrt(var_x + var_y)``
    with population variances.
    """
    var = shapes.var(axis=0).sum(axis=-1)
    return float(np.sqrt(var).mean() / box.size())


@dataclass(frozen=True)
class VarianceRestartConfig:
    n_inits: int = 5
    head_fraction: float = 0.1
    var_threshold: float = math.inf
    max_rounds: int = 3
    seed: int = 0
    translation: float = 0.10
    scale: float = 0.10
    rotation: float = 0.10

    def __post_init__(self):
        if not 0 < self.head_fraction <= 1:
            raise ValueError("head_fraction must lie in (0, 1]")
        if self.max_rounds < 1:
            raise ValueError("max_rounds must be at least 1")

    def init_config(self) -> InitConfig:
        return InitConfig(self.n_inits, self.translation, self.scale, self.rotation, self.seed)


class VarianceRestartOutcome(NamedTuple):
    shape: np.ndarray
    restarted: bool
    rounds: int
    spreads: tuple


def variance_restart_run(model: CascadeModel, scene: Scene, config: VarianceRestartConfig) -> VarianceRestartOutcome:
    """Restart baseline: check the spread of the inits after the head of the cascade.

    When the spread exceeds ``var_threshold`` the inits are redrawn; the last
    permitted round is always completed, and only its result is kept.
    """
    init = config.init_config()
    head = min(model.n_stages, math.ceil(config.head_fraction * model.n_stages))
    spreads = []
    for r in range(config.max_rounds):
        starts = draw_inits(model.shape_model, scene.detection_box, init, init_stream(init, scene, r, 0))
        partial = run_stages(model, scene, starts, 0, head)
        spreads.append(init_spread(partial, scene.detection_box))
        if spreads[-1] <= config.var_threshold or r == config.max_rounds - 1:
            finals = run_stages(model, scene, partial, head)
            return VarianceRestartOutcome(np.median(finals, axis=0), r > 0, r + 1, tuple(spreads))
    raise AssertionError("unreachable")
