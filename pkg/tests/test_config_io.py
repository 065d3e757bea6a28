import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from tidelevy.config import ConfigError, RunConfig, config_from_dict, dump_config, parse_config
from tidelevy.io import (
    MAGIC,
    FormatError,
    field_to_tdf1_layout,
    read_csv,
    read_json,
    read_tdf1,
    tdf1_to_field,
    write_csv,
    write_json,
    write_tdf1,
)


def test_defaults_fill_minimal_config(tmp_path):
    f = tmp_path / "c.json"
    f.write_text("{}")
    cfg = parse_config(f)
    assert cfg.model.alpha == 0.05 and cfg.domain.modes_x1 == 8 and cfg.sim.n_paths == 16
    assert cfg.build_noise().K > 0


def test_round_trip(tmp_path):
    cfg = config_from_dict({"model": {"alpha": 0.2, "depth": {"kind": "constant", "value": 2.0}},
                            "jumps": None, "sim": {"seed": 9}})
    f = tmp_path / "c.json"
    dump_config(cfg, f)
    assert parse_config(f) == cfg


def test_all_violations_reported_with_paths():
    with pytest.raises(ConfigError) as err:
        config_from_dict({"model": {"alpha": -1, "extra": 1}, "sim": {"dt": 0}, "bogus": {}})
    probs = err.value.problems
    assert any(p.startswith("model.alpha") for p in probs)
    assert any(p.startswith("model.extra") for p in probs)
    assert any(p.startswith("sim.dt") for p in probs)
    assert any(p.startswith("bogus") for p in probs)


def test_zero_depth_named():
    with pytest.raises(ConfigError) as err:
        config_from_dict({"model": {"depth": {"kind": "linear", "base": 0.0, "slope_x1": 1.0}}})
    assert any("depth.min > 0" in p for p in err.value.problems)


def test_dealiasing_rule():
    with pytest.raises(ConfigError) as err:
        config_from_dict({"domain": {"modes_x1": 8, "grid_x1": 16}})
    assert any("grid_x1 >= 2*modes_x1+1" in p for p in err.value.problems)


def test_cross_section_problems_are_listed_separately():
    with pytest.raises(ConfigError) as err:
        config_from_dict({"sim": {"dt": 0.3}, "control": {"control_modes": 100},
                          "initial": {"u0": {"kind": "mode", "j": 9}}})
    assert len(err.value.problems) == 3


def test_file_errors(tmp_path):
    with pytest.raises(ConfigError, match="cannot read"):
        parse_config(tmp_path / "missing.json")
    bad = tmp_path / "bad.json"
    bad.write_text("{ nope")
    with pytest.raises(ConfigError, match="malformed"):
        parse_config(bad)


def test_manifest_is_accepted_as_config(tmp_path):
    cfg = config_from_dict({"sim": {"seed": 4}})
    f = tmp_path / "manifest.json"
    f.write_text(json.dumps({"master_seed": 4, "config": cfg.model_dump(mode="json")}))
    assert parse_config(f) == cfg


def test_config_is_frozen():
    cfg = RunConfig()
    with pytest.raises(Exception):
        cfg.sim.seed = 3


def test_tdf1_zero_field_size(tmp_path):
    f = write_tdf1(tmp_path / "z.tdf", np.zeros((17, 9, 2)))
    data = f.read_bytes()
    assert len(data) == 4 + 12 + 8 * 17 * 9 * 2
    assert data[:4] == MAGIC
    assert np.frombuffer(data[4:16], "<u4").tolist() == [17, 9, 2]
    assert not any(data[16:])


@settings(max_examples=30, deadline=None)
@given(arrays(np.float64, st.tuples(st.integers(1, 6), st.integers(1, 6), st.integers(1, 3)),
              elements=st.floats(allow_nan=False, width=64)))
def test_tdf1_round_trip_bitwise(tmp_path_factory, a):
    f = write_tdf1(tmp_path_factory.mktemp("t") / "a.tdf", a)
    assert read_tdf1(f).tobytes() == np.ascontiguousarray(a).tobytes()


def test_tdf1_layout_and_errors(tmp_path):
    v = np.arange(2 * 3 * 4, dtype=float).reshape(2, 3, 4)
    lay = field_to_tdf1_layout(v)
    assert lay.shape == (3, 4, 2) and lay[1, 2, 1] == v[1, 1, 2]
    assert np.array_equal(tdf1_to_field(lay), v)
    f = tmp_path / "bad.tdf"
    f.write_bytes(b"XXXX" + bytes(12))
    with pytest.raises(FormatError, match="magic"):
        read_tdf1(f)
    write_tdf1(f, np.zeros((2, 2)))
    f.write_bytes(f.read_bytes()[:-1])
    with pytest.raises(FormatError, match="payload"):
        read_tdf1(f)


@settings(max_examples=30, deadline=None)
@given(st.lists(st.floats(allow_nan=False), min_size=1, max_size=20))
def test_csv_exact_round_trip(tmp_path_factory, xs):
    f = write_csv(tmp_path_factory.mktemp("c") / "a.csv", {"time": range(len(xs)), "x": xs})
    back = read_csv(f)
    assert back["x"].tobytes() == np.array(xs, dtype=float).tobytes()
    assert f.read_text().splitlines()[0] == "time,x"


def test_csv_rejects_ragged(tmp_path):
    with pytest.raises(FormatError):
        write_csv(tmp_path / "a.csv", {"a": [1, 2], "b": [1]})


def test_json_handles_numpy_and_inf(tmp_path):
    f = write_json(tmp_path / "r.json", {"a": np.arange(3), "b": np.float64(np.inf), "c": np.int64(2)})
    assert read_json(f) == {"a": [0, 1, 2], "b": float("inf"), "c": 2}
