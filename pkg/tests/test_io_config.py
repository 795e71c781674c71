import json

import numpy as np
import pytest

from roughflow.config import (initial_value, load_config, make_driver, make_nonlinearity,
                              make_operator, parse_config, parse_levels, rng_for, substream)
from roughflow.controlled import ControlledPath
from roughflow.driver import TimeGrid, build_bm_lift, chen_defect
from roughflow.errors import ConfigError, InvalidInput
from roughflow.io import (controlled_from_csv, controlled_to_csv, driver_from_csv, driver_to_csv,
                          driver_to_json, load_driver, to_jsonable, write_manifest)


def test_driver_csv_round_trip_is_bit_exact(tmp_path):
    p = build_bm_lift(3, TimeGrid(0.0, 1.0, 33), 2)
    driver_to_csv(p, tmp_path / "w.csv", tmp_path / "w_w2.csv")
    q = load_driver(tmp_path / "w.csv", p.gamma)
    assert np.array_equal(p.w, q.w) and np.array_equal(p.w2, q.w2)
    assert np.array_equal(p.times, q.times)


def test_driver_json_round_trip_is_bit_exact(tmp_path):
    p = build_bm_lift(4, TimeGrid(-1.0, 1.0, 17), 2)
    driver_to_json(p, tmp_path / "d.json")
    q = load_driver(tmp_path / "d.json")
    assert np.array_equal(p.w, q.w) and np.array_equal(p.w2, q.w2) and q.gamma == p.gamma


def test_truncated_second_level_is_rejected(tmp_path):
    p = build_bm_lift(3, TimeGrid(0.0, 1.0, 9), 1)
    driver_to_csv(p, tmp_path / "w.csv", tmp_path / "w_w2.csv")
    lines = (tmp_path / "w_w2.csv").read_text().splitlines()
    (tmp_path / "w_w2.csv").write_text("\n".join(lines[:-3]) + "\n")
    with pytest.raises(InvalidInput):
        driver_from_csv(tmp_path / "w.csv", tmp_path / "w_w2.csv", 0.45)


def test_controlled_round_trip(tmp_path):
    rng = np.random.default_rng(0)
    grid = TimeGrid(0.0, 1.0, 11)
    cp = ControlledPath(grid, rng.standard_normal((11, 3)), rng.standard_normal((11, 3, 2)))
    controlled_to_csv(cp, tmp_path / "c.csv")
    back = controlled_from_csv(tmp_path / "c.csv", 3)
    assert np.array_equal(back.y, cp.y) and np.array_equal(back.yp, cp.yp)


def test_jsonable_handles_numpy_and_nonfinite():
    doc = to_jsonable({"a": np.arange(3), "b": np.float64(0.1), "c": np.nan, 1: np.bool_(True)})
    assert json.loads(json.dumps(doc)) == {"a": [0, 1, 2], "b": 0.1, "c": "nan", "1": True}


def test_manifest_contents(tmp_path):
    write_manifest(tmp_path, "driver", "[run]\nseed = 1\n", 1, [tmp_path / "b.csv", tmp_path / "a.csv"])
    doc = json.loads((tmp_path / "manifest.json").read_text())
    assert doc["files"] == ["a.csv", "b.csv"] and doc["seed"] == 1
    assert len(doc["config_sha256"]) == 64 and doc["version"]


def test_defaults_load():
    cfg = load_config()
    assert cfg.seed == 0 and cfg["driver"]["kind"] == "bm"
    assert make_operator(cfg).n_modes == 6


@pytest.mark.parametrize("text,line,word", [
    ("[run]\nseed = 1\n\n[bogus]\nx = 1\n", 4, "unknown section"),
    ("[driver]\nkind = bm\nwidth = 3\n", 3, "unknown key"),
    ("[solver]\n# comment\npicard_tol = tiny\n", 3, "bad value"),
    ("[driver]\ngamma = 0.3\n", 2, "gamma"),
    ("[run]\nformat = xml\n", 2, "format"),
    ("[manifold]\nalpha = 1\nbeta = 2\n", 2, "alpha"),
])
def test_config_errors_carry_line_numbers(text, line, word):
    with pytest.raises(ConfigError, match=rf"<string>:{line}: .*{word}"):
        parse_config(text)


def test_shipped_configs_parse():
    from importlib.resources import files
    names = [p.name for p in files("roughflow").joinpath("configs").iterdir()
             if p.name.endswith(".ini")]
    assert len(names) >= 5
    for name in names:
        load_config(files("roughflow").joinpath("configs", name))


def test_substreams_are_independent_of_each_other():
    a = rng_for(7, "driver").standard_normal(4)
    assert np.array_equal(a, rng_for(7, "driver").standard_normal(4))
    assert not np.array_equal(a, rng_for(7, "mesh").standard_normal(4))
    assert substream(7, "driver") != substream(8, "driver")


def test_driver_kinds_from_config():
    for kind in ("bm", "smooth", "pure-area"):
        cfg = parse_config(f"[driver]\nkind = {kind}\nd = 2\nn_points = 33\n")
        p = make_driver(cfg)
        assert p.d == 2 and p.n == 33 and chen_defect(p) <= 1e-12


def test_symmetric_area_rejected():
    cfg = parse_config("[driver]\nkind = pure-area\nd = 2\narea = 0,1;1,0\n")
    with pytest.raises(ConfigError):
        make_driver(cfg)


def test_nonlinearity_specs():
    assert make_nonlinearity("linear:1,2,3", 3, [1.0], True, 2).value(np.ones(3)).shape == (3, 2)
    assert make_nonlinearity("zero", 4, [1.0], False).value(np.ones(4)).shape == (4,)
    with pytest.raises(ConfigError):
        make_nonlinearity("coupled-quadratic", 3, [1.0], False)
    with pytest.raises(ConfigError):
        make_nonlinearity("mystery", 3, [1.0], False)


def test_initial_value_pads_and_truncates():
    cfg = parse_config("[solver]\nxi = 1, 2\n")
    assert initial_value(cfg, 4).tolist() == [1.0, 2.0, 0.0, 0.0]
    assert initial_value(cfg, 1).tolist() == [1.0]


def test_levels():
    assert list(parse_levels("2-5")) == [2, 3, 4, 5]
    with pytest.raises(ConfigError):
        parse_levels("3")
