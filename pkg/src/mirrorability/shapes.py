"""Shapes, symmetry maps, and the mirror transform.

A shape is a ``(K, 2)`` float array of landmark coordinates ``(x, y)`` in
continuous image units. The mirror of a point in an image of width ``W`` is
``W - x``; mirroring a shape also re-indexes its landmarks through the
dataset's left/right symmetry map.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .errors import (
    EmptyShape,
    LengthMismatch,
    NonFiniteShape,
    NotAPermutation,
    NotInvolutive,
    ZeroSize,
)


def as_shape(points) -> np.ndarray:
    """Coerce ``points`` to a finite ``(K, 2)`` float64 array."""
    arr = np.asarray(points, dtype=np.float64)
    if arr.size == 0:
        raise EmptyShape("shape has no points")
    if arr.ndim == 1 and arr.size % 2 == 0:
        arr = arr.reshape(-1, 2)
    if arr.ndim != 2 or arr.shape[1] != 2:
        raise LengthMismatch(f"expected (K, 2) coordinates, got array of shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise NonFiniteShape("shape contains non-finite coordinates")
    return arr


def check_same_k(*shapes: np.ndarray) -> int:
    ks = {len(s) for s in shapes}
    if len(ks) != 1:
        raise LengthMismatch(f"shapes disagree on landmark count: {sorted(ks)}")
    return ks.pop()


@dataclass(frozen=True)
class SymmetryMap:
    """Involutive landmark permutation: ``mapping[k]`` is the mirror partner of ``k``.

    Construction validates the mapping; self-paired (midline) landmarks are
    allowed.
    """

    mapping: tuple

    def __post_init__(self):
        mapping = tuple(int(v) for v in self.mapping)
        object.__setattr__(self, "mapping", mapping)
        k = len(mapping)
        if k == 0:
            raise NotAPermutation("symmetry map is empty")
        if any(v < 0 or v >= k for v in mapping):
            raise NotAPermutation(f"symmetry map has targets outside 0..{k - 1}")
        if len(set(mapping)) != k:
            raise NotAPermutation("symmetry map has duplicate targets")
        bad = [i for i, v in enumerate(mapping) if mapping[v] != i]
        if bad:
            raise NotInvolutive(f"mapping is not an involution at indices {bad[:5]}")

    @property
    def num_points(self) -> int:
        return len(self.mapping)

    @property
    def index(self) -> np.ndarray:
        return np.asarray(self.mapping, dtype=np.intp)

    def pairs(self) -> list[tuple[int, int]]:
        return [(i, j) for i, j in enumerate(self.mapping) if i < j]

    def self_paired(self) -> list[int]:
        return [i for i, j in enumerate(self.mapping) if i == j]

    @classmethod
    def identity(cls, num_points: int) -> "SymmetryMap":
        return cls(tuple(range(num_points)))

    @classmethod
    def from_pairs(
        cls, num_points: int, pairs: Iterable[Sequence[int]], self_indices: Iterable[int] = ()
    ) -> "SymmetryMap":
        """Build from explicit pairs; every index must appear exactly once overall."""
        mapping = [-1] * num_points
        seen = []
        for i, j in pairs:
            i, j = int(i), int(j)
            seen += [i, j]
            if not (0 <= i < num_points and 0 <= j < num_points) or i == j:
                raise NotAPermutation(f"invalid pair ({i}, {j}) for {num_points} points")
            mapping[i], mapping[j] = j, i
        for s in self_indices:
            s = int(s)
            seen.append(s)
            if not 0 <= s < num_points:
                raise NotAPermutation(f"self index {s} out of range")
            mapping[s] = s
        if sorted(seen) != list(range(num_points)):
            raise NotAPermutation("pairs and self indices must cover every index exactly once")
        return cls(tuple(mapping))

    def to_dict(self) -> dict:
        return {
            "num_points": self.num_points,
            "pairs": [list(p) for p in self.pairs()],
            "self": self.self_paired(),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "SymmetryMap":
        return cls.from_pairs(int(data["num_points"]), data.get("pairs", []), data.get("self", []))


def validate_symmetry_map(mapping) -> SymmetryMap:
    """Return a validated :class:`SymmetryMap` for a raw sequence or an existing map."""
    if isinstance(mapping, SymmetryMap):
        return SymmetryMap(mapping.mapping)
    return SymmetryMap(tuple(mapping))


@dataclass(frozen=True)
class ImageMeta:
    sample_id: str
    width: float
    height: float | None = None

    def __post_init__(self):
        if not (math.isfinite(self.width) and self.width > 0):
            raise ValueError(f"image width must be positive, got {self.width}")
        if self.height is not None and not (math.isfinite(self.height) and self.height > 0):
            raise ValueError(f"image height must be positive, got {self.height}")


@dataclass(frozen=True)
class BoundingBox:
    x_min: float
    y_min: float
    x_max: float
    y_max: float

    def __post_init__(self):
        if self.x_max < self.x_min or self.y_max < self.y_min:
            raise ValueError("bounding box has negative extent")

    @property
    def width(self) -> float:
        return self.x_max - self.x_min

    @property
    def height(self) -> float:
        return self.y_max - self.y_min

    @property
    def center(self) -> np.ndarray:
        return np.array([(self.x_min + self.x_max) / 2.0, (self.y_min + self.y_max) / 2.0])

    def size(self) -> float:
        return max(self.width, self.height)

    def mirrored(self, width: float) -> "BoundingBox":
        return BoundingBox(width - self.x_max, self.y_min, width - self.x_min, self.y_max)


def mirror_point(x, width):
    """Reflect a horizontal coordinate about the vertical midline of the image."""
    return width - x


def mirror_shape(shape, meta, symmetry: SymmetryMap) -> np.ndarray:
    """Mirror ``shape`` into the flipped image: point k becomes ``(W - x[pi(k)], y[pi(k)])``.

    The same operation maps a detection made on the mirror image back onto the
    original image.

    Parameters
    ----------
    shape : array_like, (K, 2)
    meta : ImageMeta or float
        Image metadata, or the image width directly.
    symmetry : SymmetryMap
    """
    shape = as_shape(shape)
    width = meta.width if isinstance(meta, ImageMeta) else float(meta)
    if len(shape) != symmetry.num_points:
        raise LengthMismatch(
            f"shape has {len(shape)} points but symmetry map covers {symmetry.num_points}"
        )
    out = shape[symmetry.index].copy()
    out[:, 0] = width - out[:, 0]
    return out


def bounding_box(shape) -> BoundingBox:
    shape = as_shape(shape)
    lo = shape.min(axis=0)
    hi = shape.max(axis=0)
    return BoundingBox(float(lo[0]), float(lo[1]), float(hi[0]), float(hi[1]))


def box_size(shape) -> float:
    """``max(h, w)`` of the tight box around ``shape``."""
    return bounding_box(shape).size()


@dataclass(frozen=True)
class NormalizationSpec:
    """How to turn an absolute landmark error into a size-relative one.

    ``mode`` is ``"bbox"`` (max side of the tight box), ``"interocular"``
    (distance between landmarks ``pair``), or ``"fixed"`` (constant ``value``).
    """

    mode: str = "bbox"
    pair: tuple | None = None
    value: float | None = None

    def __post_init__(self):
        if self.mode not in ("bbox", "interocular", "fixed"):
            raise ValueError(f"unknown normalization mode {self.mode!r}")
        if self.mode == "interocular":
            if self.pair is None or len(self.pair) != 2:
                raise ValueError("interocular normalization needs a landmark pair")
            object.__setattr__(self, "pair", (int(self.pair[0]), int(self.pair[1])))
        if self.mode == "fixed":
            if self.value is None:
                raise ValueError("fixed normalization needs a value")
            object.__setattr__(self, "value", float(self.value))

    @classmethod
    def bbox(cls) -> "NormalizationSpec":
        return cls("bbox")

    @classmethod
    def interocular(cls, i: int, j: int) -> "NormalizationSpec":
        return cls("interocular", pair=(i, j))

    @classmethod
    def fixed(cls, value: float) -> "NormalizationSpec":
        return cls("fixed", value=value)

    @classmethod
    def parse(cls, text: str) -> "NormalizationSpec":
        """Parse ``bbox``, ``interocular:i,j`` or ``fixed:v``."""
        head, _, rest = text.strip().partition(":")
        if head == "bbox" and not rest:
            return cls.bbox()
        if head == "interocular":
            parts = rest.split(",")
            if len(parts) != 2:
                raise ValueError(f"bad interocular spec {text!r}")
            return cls.interocular(int(parts[0]), int(parts[1]))
        if head == "fixed":
            return cls.fixed(float(rest))
        raise ValueError(f"bad normalization spec {text!r}")

    def __str__(self):
        if self.mode == "interocular":
            return f"interocular:{self.pair[0]},{self.pair[1]}"
        if self.mode == "fixed":
            return f"fixed:{self.value!r}"
        return "bbox"

    def is_mirror_invariant(self, symmetry: SymmetryMap) -> bool:
        if self.mode != "interocular":
            return True
        i, j = self.pair
        return {symmetry.mapping[i], symmetry.mapping[j]} == {i, j}


def normalization_size(shape, spec: NormalizationSpec) -> float:
    shape = as_shape(shape)
    if spec.mode == "bbox":
        s = box_size(shape)
    elif spec.mode == "interocular":
        i, j = spec.pair
        k = len(shape)
        if not (0 <= i < k and 0 <= j < k):
            raise LengthMismatch(f"interocular pair {spec.pair} out of range for K={k}")
        s = float(np.hypot(*(shape[i] - shape[j])))
    else:
        s = spec.value
    if not (math.isfinite(s) and s > 0):
        raise ZeroSize(f"normalization size is {s} under mode {spec.mode}")
    return s


# -- presets ---------------------------------------------------------------

def _face68() -> SymmetryMap:
    pairs = [(i, 16 - i) for i in range(8)]  # jaw line
    pairs += [(17, 26), (18, 25), (19, 24), (20, 23), (21, 22)]  # brows
    pairs += [(31, 35), (32, 34)]  # nostrils
    pairs += [(36, 45), (37, 44), (38, 43), (39, 42), (40, 47), (41, 46)]  # eyes
    pairs += [(48, 54), (49, 53), (50, 52), (55, 59), (56, 58)]  # outer lip
    pairs += [(60, 64), (61, 63), (65, 67)]  # inner lip
    self_idx = [8, 27, 28, 29, 30, 33, 51, 57, 62, 66]
    return SymmetryMap.from_pairs(68, pairs, self_idx)


def _body14() -> SymmetryMap:
    # LSP joint order: R ankle, R knee, R hip, L hip, L knee, L ankle,
    # R wrist, R elbow, R shoulder, L shoulder, L elbow, L wrist, neck, head top
    pairs = [(0, 5), (1, 4), (2, 3), (6, 11), (7, 10), (8, 9)]
    return SymmetryMap.from_pairs(14, pairs, [12, 13])


def _face16() -> SymmetryMap:
    # Order matches synthetic.FACE16_TEMPLATE.
    pairs = [(0, 1), (2, 3), (4, 5), (6, 7), (9, 10), (11, 12)]
    return SymmetryMap.from_pairs(16, pairs, [8, 13, 14, 15])


PRESET_MAPS = {
    "face68": _face68,
    "body14": _body14,
    "face16": _face16,
}

# Default inter-ocular pair (outer eye corners) for the face presets.
PRESET_INTEROCULAR = {"face68": (36, 45), "face16": (2, 3)}


def preset_symmetry(name: str) -> SymmetryMap:
    try:
        return PRESET_MAPS[name]()
    except KeyError:
        raise KeyError(f"unknown symmetry preset {name!r}; choose from {sorted(PRESET_MAPS)}") from None
