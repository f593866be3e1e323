"""Synthetic scenes and simulated detectors.

A :class:`Scene` stands in for an image. It carries one smooth scalar field
per landmark: channel ``k`` has a Gaussian bump at ground-truth landmark
``k``, ``round(10 * difficulty)`` weak distractor bumps scattered around the
object, and ``round(3 * difficulty)`` decoys. A decoy is a shifted copy of
the whole shape present in every channel, so a cascade started on the wrong
side of it converges to a coherent but misplaced shape. Mirroring a scene
reflects the field horizontally and swaps the channels of left/right
landmarks, so the mirrored scene is exactly as informative as the original.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from functools import lru_cache

import numpy as np

from .errors import OutlierUnsupported
from .seeding import stream
from .shape_model import ShapeModel, fit_shape_model
from .shapes import (
    BoundingBox,
    ImageMeta,
    SymmetryMap,
    bounding_box,
    box_size,
    mirror_shape,
    preset_symmetry,
)

# Image-left landmark first in every pair; see shapes.PRESET_MAPS["face16"].
FACE16_TEMPLATE = np.array(
    [
        [-0.25, -0.36], [0.25, -0.36],  # brows
        [-0.32, -0.18], [0.32, -0.18],  # outer eye corners
        [-0.11, -0.17], [0.11, -0.17],  # inner eye corners
        [-0.09, 0.10], [0.09, 0.10],  # nostrils
        [0.00, 0.05],  # nose tip
        [-0.19, 0.29], [0.19, 0.29],  # mouth corners
        [-0.44, 0.12], [0.44, 0.12],  # jaw
        [0.00, 0.56],  # chin
        [0.00, 0.24], [0.00, 0.35],  # upper / lower lip
    ]
)


@lru_cache(maxsize=8)
def face_population_model(seed: int = 0, n_shapes: int = 400, n_components: int = 6) -> ShapeModel:
    """Shape model fitted to randomly deformed copies of the 16-point face template."""
    rng = stream(seed, "face-population")
    shapes = []
    for _ in range(n_shapes):
        s = FACE16_TEMPLATE.copy()
        s[:, 0] *= 1.0 + 0.08 * rng.standard_normal()
        s[:, 1] *= 1.0 + 0.05 * rng.standard_normal()
        s[[13, 15], 1] += 0.03 * rng.standard_normal()  # jaw drop
        s[:, 0] += 0.04 * rng.standard_normal() * s[:, 1]  # shear / slight yaw
        s += 0.012 * rng.standard_normal(s.shape)
        shapes.append(s)
    return fit_shape_model(shapes, n_components)


@dataclass(frozen=True)
class BumpField:
    """Per-channel sums of isotropic Gaussian bumps (zero-amplitude padding allowed)."""

    centers: np.ndarray  # (K, B, 2)
    amplitudes: np.ndarray  # (K, B)
    width: float

    def values(self, points: np.ndarray, channels: np.ndarray) -> np.ndarray:
        c = self.centers[channels]
        d2 = ((points[..., None, :] - c) ** 2).sum(axis=-1)
        return (self.amplitudes[channels] * np.exp(d2 * (-0.5 / self.width**2))).sum(axis=-1)


@dataclass(frozen=True)
class SceneConfig:
    width: float = 256.0
    height: float = 256.0
    size_range: tuple = (0.35, 0.6)  # object box size as a fraction of min(width, height)
    rotation: float = 0.15  # radians, uniform +-
    shape_spread: float = 1.0
    bump_width: float = 0.1  # fraction of object size
    distractors_per_difficulty: float = 10.0
    distractor_amplitude: tuple = (0.1, 0.2)
    distractor_extent: float = 0.7  # half-width of the scatter square, fraction of object size
    decoys_per_difficulty: float = 3.0
    decoy_offset: tuple = (0.25, 0.4)  # fraction of object size
    decoy_amplitude: tuple = (0.8, 1.1)
    box_jitter: float = 0.1
    margin: float = 0.05


@dataclass(frozen=True)
class Scene:
    sample_id: str
    base_ground_truth: np.ndarray
    meta: ImageMeta
    base_detection_box: BoundingBox
    difficulty: float
    bumps: BumpField = field(repr=False)
    symmetry: SymmetryMap = field(repr=False)
    flipped: bool = False

    @property
    def ground_truth(self) -> np.ndarray:
        if self.flipped:
            return mirror_shape(self.base_ground_truth, self.meta, self.symmetry)
        return self.base_ground_truth

    @property
    def detection_box(self) -> BoundingBox:
        if self.flipped:
            return self.base_detection_box.mirrored(self.meta.width)
        return self.base_detection_box

    @property
    def num_points(self) -> int:
        return len(self.base_ground_truth)

    def probe(self, points, channels) -> np.ndarray:
        """Field value of ``channels`` at ``points`` (broadcast over leading axes)."""
        points = np.asarray(points, dtype=np.float64)
        channels = np.asarray(channels, dtype=np.intp)
        if self.flipped:
            points = points.copy()
            points[..., 0] = self.meta.width - points[..., 0]
            channels = self.symmetry.index[channels]
        return self.bumps.values(points, channels)


def mirror_scene(scene: Scene) -> Scene:
    return replace(scene, flipped=not scene.flipped)


def _similarity(shape: np.ndarray, scale: float, angle: float, center) -> np.ndarray:
    c, s = math.cos(angle), math.sin(angle)
    rot = np.array([[c, -s], [s, c]])
    return (shape * scale) @ rot.T + np.asarray(center)


def generate_scene(
    shape_model: ShapeModel,
    difficulty: float,
    width: float | None = None,
    height: float | None = None,
    seed: int = 0,
    sample_id: str | None = None,
    symmetry: SymmetryMap | None = None,
    config: SceneConfig | None = None,
) -> Scene:
    """Draw a ground-truth shape, place it on the canvas, and build its field."""
    config = config or SceneConfig()
    width = config.width if width is None else width
    height = config.height if height is None else height
    if not (width > 0 and height > 0):
        raise ValueError("scene width and height must be positive")
    if difficulty < 0:
        raise ValueError("difficulty must be non-negative")
    sample_id = f"scene-{seed}" if sample_id is None else sample_id
    symmetry = symmetry or preset_symmetry("face16")
    rng = stream(seed, "scene", sample_id)

    canonical = shape_model.sample(rng, config.shape_spread)
    canonical = canonical / box_size(canonical)
    size = rng.uniform(*config.size_range) * min(width, height)
    angle = rng.uniform(-config.rotation, config.rotation)
    placed = _similarity(canonical, size, angle, (0.0, 0.0))
    margin = config.margin * min(width, height)
    lo, hi = placed.min(axis=0), placed.max(axis=0)
    tx = rng.uniform(margin - lo[0], width - margin - hi[0])
    ty = rng.uniform(margin - lo[1], height - margin - hi[1])
    gt = placed + np.array([tx, ty])

    s = box_size(gt)
    gt_box = bounding_box(gt)
    centre = gt_box.center + rng.uniform(-config.box_jitter, config.box_jitter, 2) * s
    half = 0.5 * np.array([gt_box.width, gt_box.height]) * rng.uniform(1 - config.box_jitter, 1 + config.box_jitter)
    det_box = BoundingBox(centre[0] - half[0], centre[1] - half[1], centre[0] + half[0], centre[1] + half[1])

    k = len(gt)
    n_scatter = int(round(config.distractors_per_difficulty * difficulty))
    n_decoys = int(round(config.decoys_per_difficulty * difficulty))
    centers = np.empty((k, 1 + n_scatter + n_decoys, 2))
    amps = np.empty((k, 1 + n_scatter + n_decoys))
    centers[:, 0] = gt
    amps[:, 0] = 1.0
    if n_scatter:
        spread = rng.uniform(-1, 1, (k, n_scatter, 2)) * config.distractor_extent * s
        centers[:, 1 : 1 + n_scatter] = gt_box.center + spread
        amps[:, 1 : 1 + n_scatter] = rng.uniform(*config.distractor_amplitude, (k, n_scatter))
    if n_decoys:
        # whole-shape decoys: a shifted copy of the object in every channel
        r = rng.uniform(*config.decoy_offset, n_decoys) * s
        theta = rng.uniform(0, 2 * math.pi, n_decoys)
        shift = np.stack([r * np.cos(theta), r * np.sin(theta)], axis=-1)
        centers[:, 1 + n_scatter :] = gt[:, None, :] + shift[None]
        amps[:, 1 + n_scatter :] = rng.uniform(*config.decoy_amplitude, n_decoys)[None]
    bumps = BumpField(centers, amps, config.bump_width * s)
    return Scene(sample_id, gt, ImageMeta(sample_id, float(width), float(height)), det_box, float(difficulty), bumps, symmetry)


def generate_scenes(
    shape_model: ShapeModel,
    n: int,
    seed: int,
    difficulty=(0.0, 1.0),
    prefix: str = "s",
    symmetry: SymmetryMap | None = None,
    config: SceneConfig | None = None,
) -> list[Scene]:
    """``n`` scenes with ids ``{prefix}00000...``; ``difficulty`` is a constant or a uniform ``(lo, hi)`` range."""
    rng = stream(seed, "difficulties", prefix)
    if np.isscalar(difficulty):
        ds = np.full(n, float(difficulty))
    else:
        ds = rng.uniform(difficulty[0], difficulty[1], n)
    return [
        generate_scene(shape_model, float(d), seed=seed, sample_id=f"{prefix}{i:05d}", symmetry=symmetry, config=config)
        for i, d in enumerate(ds)
    ]


@dataclass(frozen=True)
class SimDetectorConfig:
    sigma0: float = 0.01
    sigma1: float = 0.10
    outlier_rate: float = 0.0
    outlier_offset: float = 0.5
    seed: int = 0

    def __post_init__(self):
        if min(self.sigma0, self.sigma1, self.outlier_rate) < 0 or self.outlier_rate > 1:
            raise ValueError("detector noise parameters must be non-negative and outlier_rate <= 1")

    def noise_scale(self, difficulty: float) -> float:
        return self.sigma0 + self.sigma1 * difficulty


def _noisy(gt: np.ndarray, scale: float, config: SimDetectorConfig, rng: np.random.Generator) -> np.ndarray:
    det = gt + rng.standard_normal(gt.shape) * scale
    if config.outlier_rate > 0:
        hit = rng.random(len(gt)) < config.outlier_rate
        theta = rng.uniform(0, 2 * math.pi, len(gt))
        offset = config.outlier_offset * np.stack([np.cos(theta), np.sin(theta)], axis=1)
        det = det + hit[:, None] * offset
    return det


def simulate_detector(scene: Scene, config: SimDetectorConfig) -> tuple[np.ndarray, np.ndarray]:
    """Noisy detections on the scene and on its mirror (independent draws, same difficulty)."""
    s = scene.detection_box.size()
    scale = config.noise_scale(scene.difficulty) * s
    # _noisy works in image units, so hand it the outlier offset already scaled
    cfg = replace(config, outlier_offset=config.outlier_offset * s)
    det_o = _noisy(scene.ground_truth, scale, cfg, stream(config.seed, "detector", scene.sample_id, 0))
    det_m = _noisy(mirror_scene(scene).ground_truth, scale, cfg, stream(config.seed, "detector", scene.sample_id, 1))
    return det_o, det_m


def expected_error_oracle(config: SimDetectorConfig, difficulty: float) -> float:
    """Expected per-point alignment error (in detection-box units): ``sigma * sqrt(pi / 2)``."""
    if config.outlier_rate > 0:
        raise OutlierUnsupported("the closed form assumes no outliers")
    return config.noise_scale(difficulty) * math.sqrt(math.pi / 2)


def expected_mirror_error_oracle(config: SimDetectorConfig, difficulty: float) -> float:
    """Expected per-point mirror error for independent draws: the difference has ``sqrt(2)`` times the spread."""
    return math.sqrt(2.0) * expected_error_oracle(config, difficulty)
