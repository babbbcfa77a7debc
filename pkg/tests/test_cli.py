import json

import numpy as np
import pytest

from omegalab.cli import load_config, main
from omegalab.errors import ConfigError


def _read(path):
    lines = path.read_text().splitlines()
    meta = [l for l in lines if l.startswith("#")]
    body = [l for l in lines if not l.startswith("#")]
    header = body[0].split(",")
    rows = [l.split(",") for l in body[1:]]
    return meta, header, rows


def test_load_config_defaults_and_presets():
    cfg = load_config(None, None)
    assert cfg["q"] == 0.05
    cfg = load_config(None, "step-sweep")
    assert cfg["sweep"]["family"] == "step"
    with pytest.raises(ConfigError):
        load_config(None, "no-such-preset")


def test_unknown_keys_rejected(tmp_path):
    p = tmp_path / "c.json"
    p.write_text(json.dumps({"modle": {"mu": 0.1}}))
    with pytest.raises(ConfigError):
        load_config(str(p), None)
    p.write_text(json.dumps({"solver": {"grid_stepp": 0.1}}))
    with pytest.raises(ConfigError):
        load_config(str(p), None)


def test_cmd_scale_output(tmp_path):
    out = tmp_path / "run_"
    rc = main(["scale", "--out", str(out)])
    assert rc == 0
    meta, header, rows = _read(tmp_path / "run_scale.csv")
    assert header == ["x", "W", "W1", "Z", "lt_resid"]
    xs = np.array([float(r[0]) for r in rows])
    wv = np.array([float(r[1]) for r in rows])
    zv = np.array([float(r[3]) for r in rows])
    # W vanishes at and below 0; Z(0) = 1
    assert wv[xs < 0].max(initial=0.0) == 0.0
    i0 = int(np.argmin(np.abs(xs)))
    assert zv[i0] == pytest.approx(1.0, abs=1e-12)
    assert all(float(r[4]) < 1e-6 for r in rows)


def test_cmd_omega_parisian_matches_scale_z(tmp_path):
    out = tmp_path / "o_"
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({
        "solver": {"grid_step": 5e-3, "x_max": 2.0},
    }))
    rc = main(["omega", "--config", str(cfg), "--out", str(out)])
    assert rc == 0
    meta, header, rows = _read(tmp_path / "o_omega.csv")
    assert header == ["x", "H", "H1", "H2"]
    xs = np.array([float(r[0]) for r in rows])
    hs = np.array([float(r[1]) for r in rows])
    # first row is x = a with H = 1 (a = 0 for the flat rate)
    assert xs[0] == 0.0
    assert hs[0] == pytest.approx(1.0, abs=1e-12)
    assert any("iterations" in m for m in meta)


def test_cmd_omega_h_matches_scale_z(tmp_path):
    # for the flat (Parisian) rate, the solved H and the Z column of the
    # scale command agree wherever their grids intersect
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({
        "solver": {"grid_step": 5e-3, "x_max": 2.0},
        "grid": {"x_min": -1.0, "x_max": 2.0, "step": 0.01},
    }))
    assert main(["omega", "--config", str(cfg), "--out", str(tmp_path / "s_")]) == 0
    assert main(["scale", "--config", str(cfg), "--out", str(tmp_path / "s_")]) == 0
    _, _, orows = _read(tmp_path / "s_omega.csv")
    _, _, srows = _read(tmp_path / "s_scale.csv")
    h = {round(float(r[0]), 9): float(r[1]) for r in orows}
    z = {round(float(r[0]), 9): float(r[3]) for r in srows}
    common = sorted(set(h) & set(z))
    assert len(common) > 100
    for x in common:
        assert h[x] == pytest.approx(z[x], rel=1e-9)


def test_cmd_omega_p_independence(tmp_path):
    outs = []
    for p in (0.0, 0.05):
        cfg = tmp_path / f"cfg{p}.json"
        cfg.write_text(json.dumps({
            "solver": {"grid_step": 2e-4, "x_max": 1.0, "p": p},
        }))
        out = tmp_path / f"run{p}_"
        assert main(["omega", "--config", str(cfg), "--out", str(out)]) == 0
        _, _, rows = _read(tmp_path / f"run{p}_omega.csv")
        outs.append(np.array([float(r[1]) for r in rows]))
    sup = np.max(np.abs(outs[0] - outs[1]))
    assert sup < 1e-7 * np.max(outs[1])


def test_cmd_barrier_step_sweep(tmp_path, capsys):
    out = tmp_path / "b_"
    rc = main(["barrier", "--preset", "step-sweep", "--out", str(out),
               "--grid-step", "2e-3", "--x-max", "2.0"])
    assert rc == 0
    _, header, rows = _read(tmp_path / "b_barrier.csv")
    assert header[:2] == ["omega", "b_star"]
    assert [r[0] for r in rows] == [f"step_n{n}" for n in range(6)]
    bs = [float(r[1]) for r in rows]
    assert all(b2 <= b1 + 1e-9 for b1, b2 in zip(bs, bs[1:]))


def test_cmd_barrier_affine_sweep(tmp_path):
    out = tmp_path / "a_"
    rc = main(["barrier", "--preset", "affine-sweep", "--out", str(out),
               "--grid-step", "2e-3", "--x-max", "2.0"])
    assert rc == 0
    _, _, rows = _read(tmp_path / "a_barrier.csv")
    bs = [float(r[1]) for r in rows]
    assert all(b1 <= b2 + 1e-9 for b1, b2 in zip(bs, bs[1:]))


def test_cmd_value_columns(tmp_path):
    out = tmp_path / "v_"
    rc = main(["value", "--preset", "affine-sweep", "--out", str(out),
               "--grid-step", "2e-3", "--x-max", "2.0"])
    assert rc == 0
    _, header, rows = _read(tmp_path / "v_value.csv")
    assert header[0] == "x"
    assert len(header) == 5
    vals = np.array([[float(c) for c in r[1:]] for r in rows])
    assert np.all(np.diff(vals, axis=0) >= -1e-12)


def test_cmd_mc_runs_small(tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({
        "solver": {"grid_step": 2e-3, "x_max": 2.0},
        "mc": {"n_paths": 500, "dt": 5e-3, "x0": [0.0], "seed": 7},
    }))
    out = tmp_path / "m_"
    rc = main(["mc", "--config", str(cfg), "--out", str(out)])
    assert rc == 0
    _, header, rows = _read(tmp_path / "m_mc.csv")
    assert header[:6] == ["omega", "estimator", "b", "x0", "mean", "stderr"]
    assert len(rows) == 1
    assert float(rows[0][4]) > 0.0


def test_reruns_byte_identical(tmp_path):
    texts = []
    for tag in ("one", "two"):
        out = tmp_path / f"{tag}_"
        assert main(["scale", "--out", str(out),
                     "--grid-step", "5e-3"]) == 0
        texts.append((tmp_path / f"{tag}_scale.csv").read_bytes())
    assert texts[0] == texts[1]


def test_exit_code_config_error(tmp_path):
    p = tmp_path / "bad.json"
    p.write_text("{not json")
    assert main(["scale", "--config", str(p)]) == 2
    p2 = tmp_path / "bad2.json"
    p2.write_text(json.dumps({"omega": {"family": "mystery"}}))
    assert main(["omega", "--config", str(p2)]) == 2


def test_exit_code_numeric_error(tmp_path):
    # model validation failures are config errors (exit 2); solver-level
    # failures surface as numeric errors (exit 3)
    p = tmp_path / "bad3.json"
    p.write_text(json.dumps({"model": {"mu": 0.075, "sigma": -1.0,
                                       "lambda": 0.5,
                                       "jump_mix": [[1.0, 9.0]]}}))
    assert main(["omega", "--config", str(p)]) == 2
    p4 = tmp_path / "bad4.json"
    p4.write_text(json.dumps({"solver": {"x_max": -2.0}}))
    assert main(["omega", "--config", str(p4)]) == 3


def test_jobs_parallel_sweep(tmp_path):
    out1 = tmp_path / "j1_"
    out2 = tmp_path / "j2_"
    args = ["barrier", "--preset", "step-sweep",
            "--grid-step", "4e-3", "--x-max", "1.5"]
    assert main(args + ["--out", str(out1)]) == 0
    assert main(args + ["--out", str(out2), "--jobs", "3"]) == 0
    a = (tmp_path / "j1_barrier.csv").read_text()
    b = (tmp_path / "j2_barrier.csv").read_text()
    assert a == b


def test_stdout_output(capsys):
    assert main(["scale", "--grid-step", "5e-3"]) == 0
    captured = capsys.readouterr()
    assert captured.out.startswith("# omegalab-csv v1")
