"""Mirror error, alignment error, PCK and correlation statistics."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import NamedTuple, Sequence

import numpy as np
from scipy.stats import rankdata

from .errors import (
    ConstantInput,
    InsufficientData,
    LengthMismatch,
    MirrorabilityError,
    MissingError,
)
from .shapes import (
    ImageMeta,
    NormalizationSpec,
    SymmetryMap,
    as_shape,
    check_same_k,
    mirror_shape,
    normalization_size,
)


def point_distances(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return np.sqrt(((a - b) ** 2).sum(axis=1))


def per_point_mirror_errors(det_original, det_mirror, meta, symmetry, norm) -> np.ndarray:
    """Normalized per-landmark distances between ``det_original`` and the back-mapped mirror detection."""
    det_original = as_shape(det_original)
    det_mirror = as_shape(det_mirror)
    check_same_k(det_original, det_mirror)
    s = normalization_size(det_original, norm)
    back = mirror_shape(det_mirror, meta, symmetry)
    return point_distances(det_original, back) / s


def mirror_error(det_original, det_mirror, meta, symmetry: SymmetryMap, norm: NormalizationSpec) -> float:
    """Sample-wise mirror error.

    Mean over landmarks of ``|q_k - m_k| / s`` where ``m`` is the detection on
    the mirror image mapped back onto the original image, and ``s`` is the
    normalization size of ``det_original`` (no ground truth needed).
    """
    return float(per_point_mirror_errors(det_original, det_mirror, meta, symmetry, norm).mean())


def per_point_alignment_errors(det, gt, norm) -> np.ndarray:
    det = as_shape(det)
    gt = as_shape(gt)
    check_same_k(det, gt)
    return point_distances(det, gt) / normalization_size(gt, norm)


def alignment_error(det, gt, norm: NormalizationSpec) -> float:
    """Mean landmark distance to ground truth, normalized by the size of ``gt``."""
    return float(per_point_alignment_errors(det, gt, norm).mean())


@dataclass(frozen=True)
class SampleRecord:
    sample_id: str
    det_original: np.ndarray
    det_mirror: np.ndarray
    meta: ImageMeta
    ground_truth: np.ndarray | None = None
    e_m: float | None = None
    e_a: float | None = None
    e_a_mirror: float | None = None
    point_e_m: np.ndarray | None = field(default=None, repr=False)
    point_e_a: np.ndarray | None = field(default=None, repr=False)


class SkippedSample(NamedTuple):
    sample_id: str
    category: str
    message: str


class BatchResult(NamedTuple):
    records: list
    skipped: list


def evaluate_record(record: SampleRecord, symmetry: SymmetryMap, norm: NormalizationSpec) -> SampleRecord:
    det_o = as_shape(record.det_original)
    det_m = as_shape(record.det_mirror)
    check_same_k(det_o, det_m)
    if symmetry.num_points != len(det_o):
        raise LengthMismatch(
            f"detections have {len(det_o)} points but symmetry map covers {symmetry.num_points}"
        )
    pe_m = per_point_mirror_errors(det_o, det_m, record.meta, symmetry, norm)
    updates = dict(e_m=float(pe_m.mean()), point_e_m=pe_m)
    if record.ground_truth is not None:
        gt = as_shape(record.ground_truth)
        pe_a = per_point_alignment_errors(det_o, gt, norm)
        gt_mirror = mirror_shape(gt, record.meta, symmetry)
        updates.update(
            e_a=float(pe_a.mean()),
            point_e_a=pe_a,
            e_a_mirror=alignment_error(det_m, gt_mirror, norm),
        )
    return replace(record, **updates)


def evaluate_records(records: Sequence[SampleRecord], symmetry, norm) -> BatchResult:
    """Fill ``e_m`` (and ``e_a``/``e_a_mirror`` where ground truth exists) for every record.

    Failing samples are collected in ``skipped`` instead of aborting the batch;
    the order of surviving records is preserved.
    """
    done, skipped = [], []
    for rec in records:
        try:
            done.append(evaluate_record(rec, symmetry, norm))
        except (MirrorabilityError, ValueError) as exc:
            category = getattr(exc, "category", type(exc).__name__)
            skipped.append(SkippedSample(rec.sample_id, category, str(exc)))
    return BatchResult(done, skipped)


@dataclass(frozen=True)
class PerPointStats:
    """Per-landmark summaries; ``std`` uses the population convention (divide by n)."""

    mirror_mean: np.ndarray
    mirror_std: np.ndarray
    alignment_mean: np.ndarray | None
    n_samples: int


def per_point_stats(records: Sequence[SampleRecord]) -> PerPointStats:
    rows = [r.point_e_m for r in records if r.point_e_m is not None]
    if len(rows) < 2:
        raise InsufficientData("per-point statistics need at least two evaluated records")
    em = np.vstack(rows)
    ea_rows = [r.point_e_a for r in records if r.point_e_a is not None]
    ea_mean = np.vstack(ea_rows).mean(axis=0) if len(ea_rows) == len(rows) else None
    return PerPointStats(em.mean(axis=0), em.std(axis=0), ea_mean, len(rows))


def pck(dets: Sequence, gts: Sequence, alpha: float):
    """Percentage of correct keypoints.

    A landmark is correct when its distance to ground truth is at most
    ``alpha * max(h, w)`` of the tight ground-truth box.

    Returns
    -------
    per_point : ndarray, (K,)
        Fraction of samples in which each landmark is correct.
    average : float
        Mean of ``per_point``.
    """
    if len(dets) != len(gts):
        raise LengthMismatch(f"{len(dets)} detections vs {len(gts)} ground truths")
    if len(dets) == 0:
        raise InsufficientData("pck needs at least one sample")
    if not alpha > 0:
        raise ValueError("alpha must be positive")
    correct = []
    for det, gt in zip(dets, gts):
        det, gt = as_shape(det), as_shape(gt)
        check_same_k(det, gt)
        s = normalization_size(gt, NormalizationSpec.bbox())
        correct.append(point_distances(det, gt) <= alpha * s)
    if len({len(c) for c in correct}) != 1:
        raise LengthMismatch("samples disagree on landmark count")
    per_point = np.mean(np.vstack(correct), axis=0)
    return per_point, float(per_point.mean())


def pearson(xs, ys) -> float:
    x = np.asarray(xs, dtype=np.float64)
    y = np.asarray(ys, dtype=np.float64)
    if x.shape != y.shape or x.ndim != 1:
        raise LengthMismatch(f"pearson inputs have shapes {x.shape} and {y.shape}")
    if len(x) < 2:
        raise InsufficientData("pearson needs at least two pairs")
    dx = x - x.mean()
    dy = y - y.mean()
    sxx = float(dx @ dx)
    syy = float(dy @ dy)
    if sxx == 0.0 or syy == 0.0:
        raise ConstantInput("pearson correlation is undefined for constant input")
    r = float(dx @ dy) / math.sqrt(sxx * syy)
    return min(1.0, max(-1.0, r))


def spearman(xs, ys) -> float:
    """Rank correlation (average ranks for ties)."""
    x = np.asarray(xs, dtype=np.float64)
    y = np.asarray(ys, dtype=np.float64)
    if x.shape != y.shape:
        raise LengthMismatch(f"spearman inputs have shapes {x.shape} and {y.shape}")
    return pearson(rankdata(x), rankdata(y))


CORRELATIONS = {"pearson": pearson, "spearman": spearman}


class CurveRow(NamedTuple):
    rank: int
    sample_id: str
    e_a: float
    e_m: float


def sorted_error_curve(records: Sequence[SampleRecord]) -> list[CurveRow]:
    """Rows ordered by ascending alignment error (ties by sample id), paired with mirror error."""
    for r in records:
        if r.e_a is None or r.e_m is None:
            raise MissingError(f"record {r.sample_id!r} lacks e_a or e_m")
    ordered = sorted(records, key=lambda r: (r.e_a, r.sample_id))
    return [CurveRow(i + 1, r.sample_id, r.e_a, r.e_m) for i, r in enumerate(ordered)]
