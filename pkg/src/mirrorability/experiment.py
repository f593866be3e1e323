"""Experiment configs and the batch studies behind the CLI.

An experiment config is a JSON object; every section is optional and falls
back to the library defaults. Unknown keys are rejected so that typos do not
silently run a different experiment.
"""

from __future__ import annotations

import dataclasses
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .cascade import CascadeConfig, CascadeModel, InitConfig, ring_layout, train_cascade
from .errors import ConfigError
from .feedback import CompareConfig, calibrate_matched_recall, compare_feedback_vs_baseline, first_round_stats
from .metrics import CORRELATIONS, SampleRecord, evaluate_records
from .selection import consistency_matrix
from .shapes import PRESET_INTEROCULAR, NormalizationSpec, preset_symmetry
from .synthetic import SceneConfig, SimDetectorConfig, face_population_model, generate_scenes, simulate_detector

LANDMARKS = "face16"


def _build(cls, data, section: str, **converters):
    if data is None:
        return cls()
    if not isinstance(data, dict):
        raise ConfigError(f"section {section!r} must be an object")
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = sorted(set(data) - names)
    if unknown:
        raise ConfigError(f"unknown keys in {section!r}: {', '.join(unknown)}")
    kwargs = {k: converters.get(k, lambda v: v)(v) for k, v in data.items()}
    try:
        return cls(**kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad {section!r} section: {exc}") from None


def _pair(v):
    return tuple(float(x) for x in v)


def _difficulty(v):
    return float(v) if np.isscalar(v) else _pair(v)


@dataclass(frozen=True)
class PopulationSection:
    seed: int = 0
    n_shapes: int = 400
    n_components: int = 6


@dataclass(frozen=True)
class TrainSection:
    n_scenes: int = 500
    difficulty: object = (0.0, 1.0)


@dataclass(frozen=True)
class CascadeSection:
    n_stages: int = 10
    ridge: float = 1.0
    n_ring: int = 8
    probe_radius: float = 0.15
    augment_mirror: bool = True
    n_components: int = 6


@dataclass(frozen=True)
class EvalSection:
    n_validation: int = 300
    n_test: int = 300
    difficulty: object = (0.0, 1.0)
    target_recall: float = 0.63
    head_fraction: float = 0.1
    bad_threshold: float = 0.10
    mirror_threshold: float | None = None  # None: calibrate on the validation scenes
    var_threshold: float | None = None
    baseline_inits: int = 5
    baseline_rounds: int = 3
    f1: tuple = (5, 3)
    f2: tuple = (10, 5)


@dataclass(frozen=True)
class ExperimentConfig:
    seed: int = 0
    population: PopulationSection = field(default_factory=PopulationSection)
    scene: SceneConfig = field(default_factory=SceneConfig)
    train: TrainSection = field(default_factory=TrainSection)
    cascade: CascadeSection = field(default_factory=CascadeSection)
    init: InitConfig = field(default_factory=InitConfig)
    eval: EvalSection = field(default_factory=EvalSection)

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        if not isinstance(data, dict):
            raise ConfigError("experiment config must be a JSON object")
        sections = {"seed", "population", "scene", "train", "cascade", "init", "eval"}
        unknown = sorted(set(data) - sections)
        if unknown:
            raise ConfigError(f"unknown config sections: {', '.join(unknown)}")
        seed = data.get("seed", 0)
        if not isinstance(seed, int) or isinstance(seed, bool):
            raise ConfigError("seed must be an integer")
        scene_pairs = {k: _pair for k in ("size_range", "distractor_amplitude", "decoy_offset", "decoy_amplitude")}
        init = _build(InitConfig, data.get("init"), "init")
        return cls(
            seed=seed,
            population=_build(PopulationSection, data.get("population"), "population"),
            scene=_build(SceneConfig, data.get("scene"), "scene", **scene_pairs),
            train=_build(TrainSection, data.get("train"), "train", difficulty=_difficulty),
            cascade=_build(CascadeSection, data.get("cascade"), "cascade"),
            # the init seed always follows the experiment seed
            init=dataclasses.replace(init, seed=seed),
            eval=_build(EvalSection, data.get("eval"), "eval", difficulty=_difficulty, f1=tuple, f2=tuple),
        )

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        try:
            data = json.loads(Path(path).read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: {exc}") from None
        return cls.from_dict(data)

    def cascade_config(self) -> CascadeConfig:
        c = self.cascade
        return CascadeConfig(
            n_stages=c.n_stages,
            ridge=c.ridge,
            probe_offsets=ring_layout(c.n_ring, c.probe_radius),
            init=self.init,
            augment_mirror=c.augment_mirror,
            n_components=c.n_components,
            seed=self.seed,
        )


def experiment_norm() -> NormalizationSpec:
    return NormalizationSpec.interocular(*PRESET_INTEROCULAR[LANDMARKS])


def population(cfg: ExperimentConfig):
    p = cfg.population
    return face_population_model(p.seed, p.n_shapes, p.n_components)


def scenes_for(cfg: ExperimentConfig, split: str, n: int, difficulty):
    return generate_scenes(population(cfg), n, cfg.seed, difficulty, prefix=split, symmetry=preset_symmetry(LANDMARKS), config=cfg.scene)


def train_from_config(cfg: ExperimentConfig) -> CascadeModel:
    return train_cascade(scenes_for(cfg, "train", cfg.train.n_scenes, cfg.train.difficulty), cfg.cascade_config())


def feedback_eval(model: CascadeModel, cfg: ExperimentConfig) -> dict:
    """Calibrate both restart gates on validation scenes, then compare all policies on test scenes."""
    ev = cfg.eval
    symmetry = preset_symmetry(LANDMARKS)
    norm = experiment_norm()
    mirror_thr, var_thr = ev.mirror_threshold, ev.var_threshold
    calibrated = None
    if mirror_thr is None or var_thr is None:
        val = scenes_for(cfg, "val", ev.n_validation, ev.difficulty)
        init = dataclasses.replace(cfg.init, n_inits=ev.baseline_inits)
        stats = [first_round_stats(model, s, symmetry, norm, init, ev.head_fraction) for s in val]
        calibrated = calibrate_matched_recall(stats, ev.target_recall, ev.bad_threshold)
        mirror_thr = calibrated.mirror if mirror_thr is None else mirror_thr
        var_thr = calibrated.variance if var_thr is None else var_thr
    compare = CompareConfig(
        mirror_threshold=mirror_thr,
        var_threshold=var_thr,
        seed=cfg.seed,
        head_fraction=ev.head_fraction,
        bad_threshold=ev.bad_threshold,
        baseline_inits=ev.baseline_inits,
        baseline_rounds=ev.baseline_rounds,
        f1=tuple(ev.f1),
        f2=tuple(ev.f2),
        target_recall=ev.target_recall,
    )
    report = compare_feedback_vs_baseline(scenes_for(cfg, "test", ev.n_test, ev.difficulty), model, symmetry, norm, compare)
    report["thresholds"] = {"mirror": mirror_thr, "variance": var_thr, "calibrated": calibrated is not None}
    return report


# -- simulated-detector study --------------------------------------------------


@dataclass(frozen=True)
class DetectorSection:
    name: str = "detector"
    sigma0: float = 0.01
    sigma1: float = 0.10
    outlier_rate: float = 0.0
    outlier_offset: float = 0.5
    seed: int = 1

    def detector_config(self) -> SimDetectorConfig:
        return SimDetectorConfig(self.sigma0, self.sigma1, self.outlier_rate, self.outlier_offset, self.seed)


@dataclass(frozen=True)
class SimConfig:
    seed: int = 0
    n_samples: int = 1000
    difficulty: object = (0.0, 1.0)
    norm: str = "bbox"
    correlation: str = "pearson"
    top_m: int = 150
    scene: SceneConfig = field(default_factory=SceneConfig)
    detectors: tuple = (DetectorSection(),)

    @classmethod
    def from_dict(cls, data: dict) -> "SimConfig":
        if not isinstance(data, dict):
            raise ConfigError("simulation config must be a JSON object")
        data = dict(data)
        scene = _build(SceneConfig, data.pop("scene", None), "scene", size_range=_pair, distractor_amplitude=_pair, decoy_offset=_pair, decoy_amplitude=_pair)
        dets = data.pop("detectors", None)
        if dets is not None:
            if not isinstance(dets, list) or not dets:
                raise ConfigError("detectors must be a non-empty list")
            dets = tuple(_build(DetectorSection, d, f"detectors[{i}]") for i, d in enumerate(dets))
            names = [d.name for d in dets]
            if len(set(names)) != len(names):
                raise ConfigError("detector names must be unique")
        out = _build(cls, data, "simulation", difficulty=_difficulty)
        out = dataclasses.replace(out, scene=scene, detectors=dets or out.detectors)
        if out.correlation not in CORRELATIONS:
            raise ConfigError(f"unknown correlation {out.correlation!r}")
        NormalizationSpec.parse(out.norm)
        return out

    @classmethod
    def load(cls, path) -> "SimConfig":
        try:
            data = json.loads(Path(path).read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: {exc}") from None
        return cls.from_dict(data)


def simulate_study(cfg: SimConfig) -> dict:
    """Scenes plus simulated detections and their evaluated records, per detector."""
    symmetry = preset_symmetry(LANDMARKS)
    norm = NormalizationSpec.parse(cfg.norm)
    scenes = generate_scenes(face_population_model(), cfg.n_samples, cfg.seed, cfg.difficulty, prefix="sim", symmetry=symmetry, config=cfg.scene)
    results = {}
    for det in cfg.detectors:
        records = []
        for scene in scenes:
            det_o, det_m = simulate_detector(scene, det.detector_config())
            records.append(SampleRecord(scene.sample_id, det_o, det_m, scene.meta, scene.ground_truth))
        results[det.name] = evaluate_records(records, symmetry, norm)
    corr = CORRELATIONS[cfg.correlation]
    summary = {"n_samples": cfg.n_samples, "norm": str(norm), "correlation": cfg.correlation, "detectors": {}}
    for name, batch in results.items():
        em = [r.e_m for r in batch.records]
        ea = [r.e_a for r in batch.records]
        summary["detectors"][name] = {
            "mean_e_m": float(np.mean(em)),
            "mean_e_a": float(np.mean(ea)),
            "r": corr(em, ea),
            "n_skipped": len(batch.skipped),
        }
    methods = [(name, batch.records) for name, batch in results.items()]
    m = min(cfg.top_m, cfg.n_samples)
    summary["top_m"] = m
    summary["chance_rate"] = m / cfg.n_samples
    summary["consistency"] = {mode: consistency_matrix(methods, mode, m).tolist() for mode in ("em_vs_ea", "em_vs_em", "ea_vs_ea")}
    return {"scenes": scenes, "results": results, "summary": summary}


def finite_or_none(x):
    return None if x is None or not math.isfinite(x) else x
