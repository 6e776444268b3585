import json
import os

import numpy as np
import pytest

from sosroa import cli, powersys, roa, shaping

DATA = os.path.join(os.path.dirname(__file__), "data")


def run(argv):
    return cli.main(argv)


def read_csv(path):
    with open(path, encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    assert lines[0].startswith("# seed=")
    header = lines[1].split(",")
    rows = [[float(v) for v in line.split(",")] for line in lines[2:]]
    return header, rows, lines


class TestSimulate:
    def test_outputs_and_row_counts(self, tmp_path, smib_config):
        rc = run(["simulate", "--config", smib_config, "--out",
                  str(tmp_path), "--fault-duration", "0.3", "--seed", "5"])
        assert rc == 0
        hx, rx, _ = read_csv(tmp_path / "trajectory_x.csv")
        hz, rz, _ = read_csv(tmp_path / "trajectory_z.csv")
        assert hx == ["t", "delta_rel_1", "omega_rel_1"]
        assert hz == ["t", "z1", "z2", "z3"]
        assert len(rx) == len(rz) == 31
        manifest = json.loads((tmp_path / "manifest.json").read_text())
        assert manifest["seed"] == 5
        assert manifest["command"] == "simulate"

    def test_zero_duration_single_row(self, tmp_path, smib_config):
        rc = run(["simulate", "--config", smib_config, "--out",
                  str(tmp_path), "--fault-duration", "0"])
        assert rc == 0
        _, rows, _ = read_csv(tmp_path / "trajectory_x.csv")
        assert len(rows) == 1

    def test_z_rows_satisfy_circle_constraint(self, tmp_path, smib_config):
        run(["simulate", "--config", smib_config, "--out", str(tmp_path),
             "--fault-duration", "0.4"])
        _, rows, _ = read_csv(tmp_path / "trajectory_z.csv")
        for row in rows:
            _t, _w, zs, zc = row
            assert abs(zs * zs + zc * zc - 2 * zc) < 1e-8

    def test_byte_identical_reruns(self, tmp_path, smib_config):
        a = tmp_path / "a"
        b = tmp_path / "b"
        for out in (a, b):
            run(["simulate", "--config", smib_config, "--out", str(out),
                 "--fault-duration", "0.2", "--seed", "9"])
        for name in ("trajectory_x.csv", "trajectory_z.csv"):
            assert (a / name).read_bytes() == (b / name).read_bytes()

    def test_seventeen_digit_round_trip(self, tmp_path, smib_config):
        run(["simulate", "--config", smib_config, "--out", str(tmp_path),
             "--fault-duration", "0.2"])
        _, _, lines = read_csv(tmp_path / "trajectory_x.csv")
        for line in lines[2:]:
            for tok in line.split(","):
                assert format(float(tok), ".17g") == tok

    def test_bad_config_exits_2(self, tmp_path):
        rc = run(["simulate", "--config", str(tmp_path / "missing.json"),
                  "--out", str(tmp_path), "--fault-duration", "0.1"])
        assert rc == 2


class TestEstimate:
    def test_outputs(self, smib_estimate_dir):
        est = roa.load_estimate(smib_estimate_dir / "estimate.json")
        assert est.V.evaluate([0.0, 0.0, 0.0]) == 0.0
        assert est.beta > 0
        header, rows, _ = read_csv(smib_estimate_dir / "contour.csv")
        assert header == ["axis1", "axis2", "V"]
        assert len(rows) == 11 * 11

    def test_contour_min_near_sep(self, smib_estimate_dir, smib_config):
        nets, _ = powersys.load_config(smib_config)
        sep = powersys.find_sep(nets["postfault"])
        _, rows, _ = read_csv(smib_estimate_dir / "contour.csv")
        best = min(rows, key=lambda r: r[2])
        assert abs(best[0] - sep[0]) < 0.4
        assert abs(best[1] - sep[1]) < 0.4

    def test_sphere_equals_identity_file(self, tmp_path, smib_config,
                                         smib_estimate_dir):
        shape_path = tmp_path / "identity.json"
        shaping.save_shape(shaping.sphere_shape(3), shape_path)
        out = tmp_path / "out"
        rc = run(["estimate", "--config", smib_config, "--out", str(out),
                  "--seed", "3", "--max-outer", "1", "--resolution", "11",
                  "--shape", f"file:{shape_path}"])
        assert rc == 0
        a = roa.load_estimate(smib_estimate_dir / "estimate.json")
        b = roa.load_estimate(out / "estimate.json")
        assert a.V == b.V
        assert a.beta == b.beta

    def test_bad_slice_exits_2(self, tmp_path, smib_config):
        for bad in ("0", "0,0", "0,7", "a,b"):
            rc = run(["estimate", "--config", smib_config, "--out",
                      str(tmp_path), "--slice", bad])
            assert rc == 2, bad

    def test_unknown_shape_exits_2(self, tmp_path, smib_config):
        rc = run(["estimate", "--config", smib_config, "--out",
                  str(tmp_path), "--shape", "banana"])
        assert rc == 2

    def test_wrong_dimension_shape_file_exits_2(self, tmp_path, smib_config):
        shape_path = tmp_path / "wrong.json"
        shaping.save_shape(shaping.sphere_shape(5), shape_path)
        rc = run(["estimate", "--config", smib_config, "--out",
                  str(tmp_path), "--shape", f"file:{shape_path}"])
        assert rc == 2


class TestCct:
    def test_report_contents(self, tmp_path, smib_config, smib_estimate_file):
        rc = run(["cct", "--config", smib_config, "--out", str(tmp_path),
                  "--estimate", smib_estimate_file, "--seed", "11"])
        assert rc == 0
        rep = json.loads((tmp_path / "cct_report.json").read_text())
        assert rep["seed"] == 11
        assert "cct_bisection_s" in rep["tolerances"]
        assert rep["true_cct"] is not None
        # conservativeness against the time-domain oracle
        assert rep["cct_lyapunov"] <= rep["true_cct"] + 1e-3
        _, rows, _ = read_csv(tmp_path / "v_trace.csv")
        assert rows[0][1] < 1.0   # trace starts inside the estimate

    def test_dimension_mismatch_exits_2(self, tmp_path, smib_estimate_file):
        rc = run(["cct", "--config", os.path.join(DATA,
                                                  "threemachine_f1.json"),
                  "--out", str(tmp_path), "--estimate", smib_estimate_file])
        assert rc == 2


class TestVerify:
    def test_zero_samples_empty_report(self, tmp_path, smib_config,
                                       smib_estimate_file):
        rc = run(["verify", "--config", smib_config, "--out", str(tmp_path),
                  "--estimate", smib_estimate_file, "--samples", "0"])
        assert rc == 0
        rep = json.loads((tmp_path / "verify_report.json").read_text())
        assert rep["samples"] == 0
        assert rep["counterexamples"] == []

    def test_small_batch_all_converge(self, tmp_path, smib_config,
                                      smib_estimate_file):
        rc = run(["verify", "--config", smib_config, "--out", str(tmp_path),
                  "--estimate", smib_estimate_file, "--samples", "25",
                  "--seed", "2"])
        assert rc == 0
        rep = json.loads((tmp_path / "verify_report.json").read_text())
        assert rep["fraction"] == 1.0
        assert rep["counterexamples"] == []

    def test_deterministic_reports(self, tmp_path, smib_config,
                                   smib_estimate_file):
        outs = []
        for name in ("a", "b"):
            out = tmp_path / name
            run(["verify", "--config", smib_config, "--out", str(out),
                 "--estimate", smib_estimate_file, "--samples", "10",
                 "--seed", "4"])
            outs.append((out / "verify_report.json").read_bytes())
        assert outs[0] == outs[1]

    def test_missing_estimate_exits_2(self, tmp_path, smib_config):
        rc = run(["verify", "--config", smib_config, "--out", str(tmp_path),
                  "--estimate", str(tmp_path / "nope.json"),
                  "--samples", "1"])
        assert rc == 2
