"""Mirror-error feedback around the cascade, and its evaluation against the variance restart."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, NamedTuple, Sequence

import numpy as np

from .cascade import (
    CascadeModel,
    InitConfig,
    VarianceRestartConfig,
    draw_inits,
    init_spread,
    init_stream,
    run_multi_init,
    run_stages,
    variance_restart_run,
)
from .errors import NoBadLabels, NoPositives, Unachievable
from .metrics import alignment_error, mirror_error
from .shapes import NormalizationSpec, SymmetryMap
from .synthetic import Scene, mirror_scene

GOOD, BAD = "good", "bad"
DEFAULT_BAD_THRESHOLD = 0.10


@dataclass(frozen=True)
class FeedbackConfig:
    mirror_threshold: float = math.inf
    max_rounds: int = 3
    n_inits: int = 5
    seed: int = 0
    translation: float = 0.10
    scale: float = 0.10
    rotation: float = 0.10

    def __post_init__(self):
        if not self.mirror_threshold > 0:
            raise ValueError("mirror_threshold must be positive")
        if self.max_rounds < 1:
            raise ValueError("max_rounds must be at least 1")

    def init_config(self) -> InitConfig:
        return InitConfig(self.n_inits, self.translation, self.scale, self.rotation, self.seed)


class RoundResult(NamedTuple):
    e_m: float
    shape: np.ndarray
    mirror_shape: np.ndarray


class FeedbackOutcome(NamedTuple):
    shape: np.ndarray
    mirror_shape: np.ndarray
    best_e_m: float
    best_round: int
    rounds_used: int
    triggered: bool
    per_round: tuple


def feedback_loop(run_round: Callable[[int], RoundResult], threshold: float, max_rounds: int) -> FeedbackOutcome:
    """Restart until a round's mirror error is at most ``threshold``; return the best round.

    The best round is the one with the smallest mirror error (earliest on
    ties), never simply the last one.
    """
    rounds = []
    for r in range(max_rounds):
        rounds.append(run_round(r))
        if rounds[-1].e_m <= threshold:
            break
    best = min(range(len(rounds)), key=lambda i: rounds[i].e_m)
    chosen = rounds[best]
    return FeedbackOutcome(
        chosen.shape, chosen.mirror_shape, chosen.e_m, best, len(rounds), len(rounds) > 1 or rounds[0].e_m > threshold, tuple(rounds)
    )


def mirror_feedback_run(
    model: CascadeModel, scene: Scene, symmetry: SymmetryMap, norm: NormalizationSpec, config: FeedbackConfig
) -> FeedbackOutcome:
    """Run the multi-init cascade on the scene and its mirror each round, gated by mirror error."""
    init = config.init_config()
    flipped = mirror_scene(scene)

    def run_round(r: int) -> RoundResult:
        orig = run_multi_init(model, scene, init, round_index=r, view=0).shape
        mirr = run_multi_init(model, flipped, init, round_index=r, view=1).shape
        return RoundResult(mirror_error(orig, mirr, scene.meta, symmetry, norm), orig, mirr)

    return feedback_loop(run_round, config.mirror_threshold, config.max_rounds)


def classify_good_bad(e_a: float, threshold: float = DEFAULT_BAD_THRESHOLD) -> str:
    """``"good"`` when the normalized alignment error is strictly below ``threshold``."""
    return GOOD if e_a < threshold else BAD


def _is_bad(label) -> bool:
    if isinstance(label, str):
        if label not in (GOOD, BAD):
            raise ValueError(f"unknown label {label!r}")
        return label == BAD
    return bool(label)


def precision_recall(triggers: Sequence[bool], labels: Sequence) -> tuple[float, float]:
    """Precision and recall of restart triggers as detectors of bad results.

    ``labels`` holds ``"good"``/``"bad"`` strings or booleans (True = bad).
    """
    if len(triggers) != len(labels):
        raise ValueError("triggers and labels differ in length")
    trig = np.asarray(triggers, dtype=bool)
    bad = np.array([_is_bad(x) for x in labels], dtype=bool)
    if not bad.any():
        raise NoBadLabels("recall is undefined without bad samples")
    if not trig.any():
        raise NoPositives("precision is undefined when nothing is triggered")
    tp = int(np.sum(trig & bad))
    return tp / int(trig.sum()), tp / int(bad.sum())


def safe_precision_recall(triggers, labels) -> tuple[float | None, float | None]:
    """Like :func:`precision_recall` but reports undefined values as ``None``."""
    bad = [_is_bad(x) for x in labels]
    if not any(bad):
        return None, None
    if not any(triggers):
        return None, 0.0
    return precision_recall(triggers, labels)


def calibrate_threshold(scores: Sequence[float], labels: Sequence, target_recall: float) -> float:
    """Largest threshold whose trigger rule ``score > threshold`` reaches ``target_recall``.

    Candidates sweep the distinct scores from the top down; a candidate score
    ``v`` yields the threshold just below ``v`` (one ulp), so every sample
    scoring at least ``v`` triggers.
    """
    if not 0 < target_recall <= 1:
        raise Unachievable(f"target recall {target_recall} is outside (0, 1]")
    scores = np.asarray(scores, dtype=np.float64)
    bad = np.array([_is_bad(x) for x in labels], dtype=bool)
    if len(scores) != len(bad):
        raise ValueError("scores and labels differ in length")
    n_bad = int(bad.sum())
    if n_bad == 0:
        raise Unachievable("no bad samples to recall")
    for v in np.unique(scores)[::-1]:
        if np.sum(bad & (scores >= v)) / n_bad >= target_recall:
            return float(np.nextafter(v, -np.inf))
    raise Unachievable(f"no threshold reaches recall {target_recall}")


# -- comparison protocol -----------------------------------------------------


class FirstRound(NamedTuple):
    """Round-0 statistics for one scene: the gating scores and the label they should predict."""

    sample_id: str
    e_m: float
    spread: float
    e_a: float


def first_round_stats(
    model: CascadeModel, scene: Scene, symmetry: SymmetryMap, norm: NormalizationSpec, init: InitConfig, head_fraction: float = 0.1
) -> FirstRound:
    """Mirror error, head spread and final alignment error of the first round of inits."""
    head = min(model.n_stages, math.ceil(head_fraction * model.n_stages))
    starts = draw_inits(model.shape_model, scene.detection_box, init, init_stream(init, scene, 0, 0))
    partial = run_stages(model, scene, starts, 0, head)
    spread = init_spread(partial, scene.detection_box)
    orig = np.median(run_stages(model, scene, partial, head), axis=0)
    mirr = run_multi_init(model, mirror_scene(scene), init, round_index=0, view=1).shape
    return FirstRound(
        scene.sample_id,
        mirror_error(orig, mirr, scene.meta, symmetry, norm),
        spread,
        alignment_error(orig, scene.ground_truth, norm),
    )


class Thresholds(NamedTuple):
    mirror: float
    variance: float


def calibrate_matched_recall(stats: Sequence[FirstRound], target_recall: float, bad_threshold: float = DEFAULT_BAD_THRESHOLD) -> Thresholds:
    labels = [classify_good_bad(s.e_a, bad_threshold) for s in stats]
    return Thresholds(
        calibrate_threshold([s.e_m for s in stats], labels, target_recall),
        calibrate_threshold([s.spread for s in stats], labels, target_recall),
    )


@dataclass(frozen=True)
class CompareConfig:
    mirror_threshold: float = math.inf
    var_threshold: float = math.inf
    seed: int = 0
    head_fraction: float = 0.1
    bad_threshold: float = DEFAULT_BAD_THRESHOLD
    baseline_inits: int = 5
    baseline_rounds: int = 3
    f1: tuple = (5, 3)  # (inits, rounds); rounds = 1 + restarts
    f2: tuple = (10, 5)
    target_recall: float = 0.63


def gating_at_matched_recall(e_m, spread, labels, target_recall: float) -> dict:
    """Precision/recall of both restart gates, each calibrated on these samples to ``target_recall``."""
    out = {"target_recall": target_recall}
    for name, scores in (("mirror", e_m), ("variance", spread)):
        try:
            thr = calibrate_threshold(scores, labels, target_recall)
        except Unachievable:
            out[name] = {"threshold": None, "precision": None, "recall": None}
            continue
        precision, recall = safe_precision_recall([x > thr for x in scores], labels)
        out[name] = {"threshold": thr, "precision": precision, "recall": recall}
    return out


def compare_feedback_vs_baseline(
    scenes: Sequence[Scene], model: CascadeModel, symmetry: SymmetryMap, norm: NormalizationSpec, config: CompareConfig
) -> dict:
    """Mean alignment error of four restart policies plus gating precision/recall.

    Rows: ``no_restart`` (plain multi-init), ``variance_restart``,
    ``feedback_f1`` and ``feedback_f2``. Each row's precision/recall compares
    the policy's first-round trigger (at the configured thresholds) with the
    good/bad label of its own first round. ``matched_recall`` re-calibrates
    both gates on the evaluated samples so they are compared at equal recall.
    """
    base_init = InitConfig(config.baseline_inits, seed=config.seed)
    var_cfg = VarianceRestartConfig(
        config.baseline_inits, config.head_fraction, config.var_threshold, config.baseline_rounds, config.seed
    )
    fb = {
        name: FeedbackConfig(config.mirror_threshold, rounds, inits, config.seed)
        for name, (inits, rounds) in (("feedback_f1", config.f1), ("feedback_f2", config.f2))
    }
    errors = {k: [] for k in ("no_restart", "variance_restart", "feedback_f1", "feedback_f2")}
    triggers = {k: [] for k in errors}
    labels = {k: [] for k in errors}
    restarts = {k: [] for k in errors}
    per_sample = []
    keep_best_ok = True
    for scene in scenes:
        gt = scene.ground_truth
        o = run_multi_init(model, scene, base_init).shape
        o_ea = alignment_error(o, gt, norm)
        errors["no_restart"].append(o_ea)
        triggers["no_restart"].append(False)
        labels["no_restart"].append(classify_good_bad(o_ea, config.bad_threshold))
        restarts["no_restart"].append(0)

        v = variance_restart_run(model, scene, var_cfg)
        errors["variance_restart"].append(alignment_error(v.shape, gt, norm))
        triggers["variance_restart"].append(v.spreads[0] > config.var_threshold)
        labels["variance_restart"].append(classify_good_bad(o_ea, config.bad_threshold))
        restarts["variance_restart"].append(v.rounds - 1)

        row = {"sample_id": scene.sample_id, "difficulty": scene.difficulty, "no_restart": o_ea,
               "variance_restart": errors["variance_restart"][-1], "spread": v.spreads[0]}
        for name, cfg in fb.items():
            out = mirror_feedback_run(model, scene, symmetry, norm, cfg)
            keep_best_ok &= out.best_e_m == min(r.e_m for r in out.per_round)
            errors[name].append(alignment_error(out.shape, gt, norm))
            first_ea = alignment_error(out.per_round[0].shape, gt, norm)
            triggers[name].append(out.per_round[0].e_m > config.mirror_threshold)
            labels[name].append(classify_good_bad(first_ea, config.bad_threshold))
            restarts[name].append(out.rounds_used - 1)
            row[name] = errors[name][-1]
            row[f"{name}_e_m"] = out.per_round[0].e_m
        per_sample.append(row)

    rows = []
    for name in errors:
        precision, recall = (None, None) if name == "no_restart" else safe_precision_recall(triggers[name], labels[name])
        rows.append(
            {
                "method": name,
                "mean_e_a": float(np.mean(errors[name])),
                "bad_rate": float(np.mean([e >= config.bad_threshold for e in errors[name]])),
                "mean_restarts": float(np.mean(restarts[name])),
                "precision": precision,
                "recall": recall,
            }
        )
    matched = gating_at_matched_recall(
        [r["feedback_f1_e_m"] for r in per_sample],
        [r["spread"] for r in per_sample],
        labels["no_restart"],
        config.target_recall,
    )
    return {
        "rows": rows,
        "matched_recall": matched,
        "per_sample": per_sample,
        "keep_best_holds": bool(keep_best_ok),
        "n_samples": len(scenes),
    }
