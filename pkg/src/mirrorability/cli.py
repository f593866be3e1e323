"""Command-line entry point: ``mirrorability <command> ...``."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import io
from .errors import ConfigError, MirrorabilityError
from .experiment import ExperimentConfig, SimConfig, feedback_eval, finite_or_none, simulate_study, train_from_config
from .metrics import CORRELATIONS, SampleRecord, evaluate_records, per_point_stats, sorted_error_curve
from .selection import MODES, consistency_matrix, select_top_m
from .shapes import ImageMeta, NormalizationSpec

MODE_FLAGS = {"em-ea": "em_vs_ea", "em-em": "em_vs_em", "ea-ea": "ea_vs_ea"}


def _mean(values):
    return float(np.mean(values)) if values else None


def _summary(records, skipped, symmetry, norm, correlation: str) -> dict:
    with_gt = bool(records) and all(r.e_a is not None for r in records)
    em = [r.e_m for r in records]
    out = {
        "tool": io.TOOL,
        "norm": str(norm),
        "num_points": symmetry.num_points,
        "n_samples": len(records),
        "n_skipped": len(skipped),
        "mean_e_m": _mean(em),
    }
    if with_gt:
        ea = [r.e_a for r in records]
        out["mean_e_a"] = _mean(ea)
        out["mean_e_a_mirror"] = _mean([r.e_a_mirror for r in records])
        out["correlation"] = correlation
        out["r"] = CORRELATIONS[correlation](em, ea) if len(records) >= 2 else None
    if records:
        stats = per_point_stats(records)
        out["per_point_mirror_mean"] = stats.mirror_mean.tolist()
        out["per_point_mirror_std"] = stats.mirror_std.tolist()
        if with_gt:
            out["per_point_alignment_mean"] = stats.alignment_mean.tolist()
    return out


def write_evaluation(out: Path, records, skipped, symmetry, norm, correlation: str, seed=None) -> dict:
    """Per-sample table, summary, sorted-error curve (with ground truth) and skipped list."""
    out.mkdir(parents=True, exist_ok=True)
    with_gt = bool(records) and all(r.e_a is not None for r in records)
    meta = {"seed": "none" if seed is None else seed, "norm": str(norm)}
    if with_gt:
        io.write_table(out / "per_sample.csv", ["sample_id", "e_m", "e_a", "e_a_mirror"],
                       ([r.sample_id, r.e_m, r.e_a, r.e_a_mirror] for r in records), **meta)
        io.write_table(out / "sorted_curve.csv", ["rank", "sample_id", "e_a", "e_m"], sorted_error_curve(records), **meta)
    else:
        io.write_table(out / "per_sample.csv", ["sample_id", "e_m"], ([r.sample_id, r.e_m] for r in records), **meta)
    io.write_table(out / "skipped.csv", ["sample_id", "category", "message"], skipped, **meta)
    summary = _summary(records, skipped, symmetry, norm, correlation)
    summary["seed"] = seed
    io.write_json(out / "summary.json", summary)
    return summary


def cmd_evaluate(args) -> None:
    symmetry = io.load_symmetry(args.symmetry)
    norm = NormalizationSpec.parse(args.norm)
    original = io.parse_landmarks(args.original)
    k = len(original[0][1]) if original else None
    mirror = dict(io.parse_landmarks(args.mirror, k))
    gt = dict(io.parse_landmarks(args.gt, k)) if args.gt else None
    widths = io.parse_widths(args.widths)
    records, skipped = [], []
    for sid, det in original:
        missing = [name for name, table in (("mirror", mirror), ("width", widths), ("gt", gt)) if table is not None and sid not in table]
        if missing:
            skipped.append((sid, "MissingInput", f"no {' / '.join(missing)} entry"))
            continue
        width, height = widths[sid]
        records.append(SampleRecord(sid, det, mirror[sid], ImageMeta(sid, width, height), gt[sid] if gt else None))
    batch = evaluate_records(records, symmetry, norm)
    skipped += [tuple(s) for s in batch.skipped]
    skipped.sort()
    write_evaluation(Path(args.out), batch.records, skipped, symmetry, norm, args.correlation)


def _read_errors(path: Path) -> list[dict]:
    _, rows = io.read_table(path)
    out = []
    for row in rows:
        rec = {"sample_id": row["sample_id"]}
        for key in ("e_m", "e_a"):
            value = row.get(key, "")
            rec[key] = float(value) if value not in ("", None) else None
        out.append(rec)
    return out


def cmd_select(args) -> None:
    path = Path(args.errors)
    if path.is_dir():
        path = path / "per_sample.csv"
    chosen = select_top_m(_read_errors(path), args.key, args.top, str(path))
    lines = io.header_lines(key=args.key, top=args.top, source=path.name) + list(chosen.sample_ids)
    Path(args.out).write_text("\n".join(lines) + "\n", encoding="utf-8")


def cmd_consistency(args) -> None:
    methods = [(Path(d).name or str(d), _read_errors(Path(d) / "per_sample.csv")) for d in args.sets]
    mode = MODE_FLAGS[args.mode]
    matrix = consistency_matrix(methods, mode, args.top)
    names = [m for m, _ in methods]
    rows = ([names[i]] + list(matrix[i]) for i in range(len(names)))
    io.write_table(args.out, ["method"] + names, rows, mode=args.mode, top=args.top, chance_rate=args.top / len(methods[0][1]))


def cmd_train(args) -> None:
    cfg = ExperimentConfig.load(args.config)
    io.save_model(args.out, train_from_config(cfg))


def cmd_feedback_eval(args) -> None:
    cfg = ExperimentConfig.load(args.config)
    model = io.load_model(args.model)
    report = feedback_eval(model, cfg)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    meta = {"seed": cfg.seed, "norm": "interocular:2,3"}
    columns = ["method", "mean_e_a", "bad_rate", "mean_restarts", "precision", "recall"]
    io.write_table(out / "comparison.csv", columns, ([r[c] for c in columns] for r in report["rows"]), **meta)
    per = report["per_sample"]
    per_cols = list(per[0]) if per else ["sample_id"]
    io.write_table(out / "per_sample.csv", per_cols, ([row[c] for c in per_cols] for row in per), **meta)
    summary = {
        "tool": io.TOOL,
        "seed": cfg.seed,
        "norm": meta["norm"],
        "n_samples": report["n_samples"],
        "keep_best_holds": report["keep_best_holds"],
        "thresholds": {k: finite_or_none(v) if isinstance(v, float) else v for k, v in report["thresholds"].items()},
        "matched_recall": report["matched_recall"],
        "rows": report["rows"],
    }
    io.write_json(out / "summary.json", summary)


def cmd_simulate(args) -> None:
    cfg = SimConfig.load(args.config)
    study = simulate_study(cfg)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    scenes = study["scenes"]
    symmetry = scenes[0].symmetry if scenes else None
    norm = NormalizationSpec.parse(cfg.norm)
    io.write_landmarks(out / "gt.csv", [(s.sample_id, s.ground_truth) for s in scenes])
    io.write_widths(out / "widths.csv", [(sc.sample_id, sc.meta.width, sc.meta.height) for sc in scenes])
    io.save_symmetry(out / "symmetry.json", symmetry)
    for det in cfg.detectors:
        batch = study["results"][det.name]
        sub = out / det.name
        sub.mkdir(exist_ok=True)
        io.write_landmarks(sub / "original.csv", [(r.sample_id, r.det_original) for r in batch.records])
        io.write_landmarks(sub / "mirror.csv", [(r.sample_id, r.det_mirror) for r in batch.records])
        write_evaluation(sub, batch.records, [tuple(s) for s in batch.skipped], symmetry, norm, cfg.correlation, det.seed)
    summary = dict(study["summary"], tool=io.TOOL, seed=cfg.seed)
    io.write_json(out / "summary.json", summary)


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="mirrorability", description="Mirror-error evaluation and feedback experiments.")
    p.add_argument("--version", action="version", version=io.TOOL)
    sub = p.add_subparsers(dest="command", required=True)

    e = sub.add_parser("evaluate", help="mirror (and alignment) error for detections on images and their mirrors")
    e.add_argument("--original", required=True)
    e.add_argument("--mirror", required=True)
    e.add_argument("--widths", required=True)
    e.add_argument("--gt")
    e.add_argument("--symmetry", required=True, help="symmetry JSON file or preset name")
    e.add_argument("--norm", default="bbox", help="bbox | interocular:i,j | fixed:v")
    e.add_argument("--correlation", choices=sorted(CORRELATIONS), default="pearson")
    e.add_argument("--out", required=True)
    e.set_defaults(func=cmd_evaluate)

    s = sub.add_parser("select-difficult", help="top-M samples by mirror or alignment error")
    s.add_argument("--errors", required=True)
    s.add_argument("--key", choices=["em", "ea"], default="em")
    s.add_argument("--top", type=int, default=150)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_select)

    c = sub.add_parser("consistency", help="pairwise consistency of top-M selections")
    c.add_argument("--sets", nargs="+", required=True)
    c.add_argument("--mode", choices=sorted(MODE_FLAGS), default="em-em")
    c.add_argument("--top", type=int, default=150)
    c.add_argument("--out", required=True)
    c.set_defaults(func=cmd_consistency)

    t = sub.add_parser("train-cascade", help="train the cascaded regressor on synthetic scenes")
    t.add_argument("--config", required=True)
    t.add_argument("--out", required=True)
    t.set_defaults(func=cmd_train)

    f = sub.add_parser("feedback-eval", help="compare mirror feedback with the restart baselines")
    f.add_argument("--model", required=True)
    f.add_argument("--config", required=True)
    f.add_argument("--out", required=True)
    f.set_defaults(func=cmd_feedback_eval)

    m = sub.add_parser("simulate", help="simulated-detector correlation study")
    m.add_argument("--config", required=True)
    m.add_argument("--out", required=True)
    m.set_defaults(func=cmd_simulate)
    assert set(MODE_FLAGS.values()) == set(MODES)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        args.func(args)
    except MirrorabilityError as exc:
        print(f"{exc.category}: {exc}".replace("\n", " "), file=sys.stderr)
        return 2
    except (OSError, json.JSONDecodeError) as exc:
        category = "IOError" if isinstance(exc, OSError) else ConfigError.category
        print(f"{category}: {exc}".replace("\n", " "), file=sys.stderr)
        return 2
    except ValueError as exc:
        print(f"InvalidArgument: {exc}".replace("\n", " "), file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
