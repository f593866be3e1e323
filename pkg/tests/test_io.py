import json

import numpy as np
import pytest
from hypothesis import HealthCheck, given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from mirrorability.errors import ConfigError, DuplicateId, InconsistentK, MalformedRow, ModelFormatError
from mirrorability.experiment import ExperimentConfig, SimConfig
from mirrorability.io import (
    MODEL_MAGIC,
    dump_model,
    fmt,
    load_model,
    load_model_bytes,
    load_symmetry,
    parse_landmarks,
    parse_widths,
    read_table,
    save_model,
    save_symmetry,
    write_landmarks,
    write_table,
    write_widths,
)
from mirrorability.shapes import SymmetryMap, preset_symmetry

coords = st.floats(-1e6, 1e6, allow_nan=False, allow_infinity=False)


@settings(suppress_health_check=[HealthCheck.function_scoped_fixture])
@given(st.integers(1, 5), st.data())
def test_landmark_roundtrip_is_exact(tmp_path, k, data):
    n = data.draw(st.integers(1, 6))
    shapes = [data.draw(arrays(np.float64, (k, 2), elements=coords)) for _ in range(n)]
    items = [(f"img{i}", s) for i, s in enumerate(shapes)]
    path = tmp_path / "lm.csv"
    write_landmarks(path, items)
    back = parse_landmarks(path)
    assert [sid for sid, _ in back] == [sid for sid, _ in items]
    for (_, a), (_, b) in zip(back, items):
        assert np.array_equal(a, b)


def test_fmt():
    assert fmt(None) == "" and fmt(True) == "1" and fmt(np.int64(3)) == "3"
    assert float(fmt(0.1)) == 0.1 and fmt("x") == "x"


def _write(tmp_path, text, name="f.csv"):
    p = tmp_path / name
    p.write_text(text)
    return p


def test_comments_and_header_skipped(tmp_path):
    p = _write(tmp_path, "# made by hand\nsample_id,x0,y0\na,1,2\n\nb,3,4\n")
    rows = parse_landmarks(p)
    assert [r[0] for r in rows] == ["a", "b"] and rows[1][1].tolist() == [[3.0, 4.0]]


@pytest.mark.parametrize(
    "text,exc,line",
    [
        ("a,1,2\nb,1\n", MalformedRow, 2),
        ("a,1,2\nb,1,zz\n", MalformedRow, 2),
        ("a,1,2\nb,1,nan\n", MalformedRow, 2),
        ("a,1,2\n# c\nb,1,2,3,4\n", InconsistentK, 3),
        ("a,1,2\na,1,2\n", DuplicateId, 2),
    ],
)
def test_landmark_errors_report_line(tmp_path, text, exc, line):
    with pytest.raises(exc) as info:
        parse_landmarks(_write(tmp_path, text))
    assert info.value.line == line and f"line {line}" in str(info.value)


def test_expected_k(tmp_path):
    with pytest.raises(InconsistentK):
        parse_landmarks(_write(tmp_path, "a,1,2\n"), expected_k=2)


def test_widths(tmp_path):
    p = tmp_path / "w.csv"
    write_widths(p, [("a", 100.0, None), ("b", 50.5, 20.0)])
    assert parse_widths(p) == {"a": (100.0, None), "b": (50.5, 20.0)}
    with pytest.raises(MalformedRow):
        parse_widths(_write(tmp_path, "a,0\n", "bad.csv"))
    with pytest.raises(DuplicateId):
        parse_widths(_write(tmp_path, "a,1\na,2\n", "dup.csv"))


def test_symmetry_presets_and_files(tmp_path):
    assert load_symmetry("face68") == preset_symmetry("face68")
    sym = SymmetryMap((1, 0, 2))
    save_symmetry(tmp_path / "s.json", sym)
    assert load_symmetry(str(tmp_path / "s.json")) == sym
    with pytest.raises(FileNotFoundError):
        load_symmetry("no-such-preset")


def test_table_roundtrip(tmp_path):
    p = tmp_path / "t.csv"
    write_table(p, ["id", "v"], [("a", 0.25), ("b", None)], seed=3)
    meta, rows = read_table(p)
    assert meta["seed"] == "3" and meta["tool"].startswith("mirrorability")
    assert rows == [{"id": "a", "v": "0.25"}, {"id": "b", "v": ""}]


def test_model_roundtrip_bit_exact(small_model, tmp_path):
    blob = dump_model(small_model)
    assert blob.startswith(MODEL_MAGIC)
    back = load_model_bytes(blob)
    assert dump_model(back) == blob
    for a, b in zip(small_model.stages, back.stages):
        assert np.array_equal(a.weights, b.weights) and np.array_equal(a.intercept, b.intercept)
    assert back.train_errors == small_model.train_errors
    save_model(tmp_path / "m.bin", small_model)
    assert dump_model(load_model(tmp_path / "m.bin")) == blob


def test_model_format_errors(small_model):
    blob = dump_model(small_model)
    with pytest.raises(ModelFormatError):
        load_model_bytes(b"NOPE" + blob[4:])
    with pytest.raises(ModelFormatError):
        load_model_bytes(blob + b"\0")
    with pytest.raises(ModelFormatError):
        load_model_bytes(blob[:-8])


def test_experiment_config(tmp_path):
    cfg = ExperimentConfig.from_dict({"seed": 4, "init": {"seed": 99}, "eval": {"f1": [2, 2]}})
    assert cfg.init.seed == 4 and cfg.eval.f1 == (2, 2)
    with pytest.raises(ConfigError):
        ExperimentConfig.from_dict({"bogus": 1})
    with pytest.raises(ConfigError):
        ExperimentConfig.from_dict({"cascade": {"n_stage": 3}})
    with pytest.raises(ConfigError):
        ExperimentConfig.from_dict({"seed": "0"})
    bad = tmp_path / "c.json"
    bad.write_text("{")
    with pytest.raises(ConfigError):
        ExperimentConfig.load(bad)


def test_sim_config():
    cfg = SimConfig.from_dict({"n_samples": 20, "detectors": [{"name": "a"}, {"name": "b", "sigma1": 0.0}]})
    assert [d.name for d in cfg.detectors] == ["a", "b"]
    with pytest.raises(ConfigError):
        SimConfig.from_dict({"detectors": [{"name": "a"}, {"name": "a"}]})
    with pytest.raises(ConfigError):
        SimConfig.from_dict({"correlation": "kendall"})
    with pytest.raises(ConfigError):
        SimConfig.from_dict({"detectors": [{"name": "a", "noise": 1}]})
    json.dumps(cfg.detectors[0].__dict__)
