"""Command line: configs, reports and exit codes."""
from __future__ import annotations

import json

import numpy as np
import pytest

from pasting import GridSpec, VectorGrid
from pasting.cli import DEFAULTS, main
from pasting.io import write_field
from pasting.scenarios import constant_pair


def _run(tmp_path, command, cfg=None, name="out"):
    args = [command, "--out", str(tmp_path / name), "--quiet"]
    if cfg is not None:
        path = tmp_path / f"{name}.json"
        path.write_text(json.dumps(cfg))
        args += ["--config", str(path)]
    status = main(args)
    return status, json.loads((tmp_path / name / "report.json").read_text())


class TestCommands:
    def test_paste_small_grid(self, tmp_path):
        status, rep = _run(tmp_path, "paste", {"n": 64})
        assert status == 0 and rep["ok"]
        assert set(rep["hard_certificates"]) >= {"z_equals_y_on_v", "z_equals_x_outside_w", "div_residual_ok"}

    def test_paste_identical_files(self, tmp_path):
        X, _ = constant_pair(64, 0.0)
        write_field(X, tmp_path / "x.vf")
        write_field(X, tmp_path / "y.vf")
        status, rep = _run(tmp_path, "paste", {"X": str(tmp_path / "x.vf"), "Y": str(tmp_path / "y.vf")})
        assert status == 0 and rep["estimates"]["distance"]["c1"] == 0.0

    def test_csv_dump(self, tmp_path):
        status, _ = _run(tmp_path, "paste", {"n": 32, "radii": [0.5, 1.5, 2.3], "csv": True})
        assert status == 0
        assert (tmp_path / "out" / "Z.csv").exists() and (tmp_path / "out" / "Z.vf").exists()

    def test_mollify(self, tmp_path):
        status, rep = _run(tmp_path, "mollify", {"n": 64, "eps": 0.2})
        assert status == 0 and rep["estimates"]["commutation_defect"] < 1e-12

    def test_classify_matrix(self, tmp_path):
        status, rep = _run(tmp_path, "classify", {"matrix": [[3, 0, 0], [0, -2, 0], [0, 0, -1]]})
        assert status == 0 and rep["estimates"]["tag"] == "lorenz_like_contracting"

    def test_dominate(self, tmp_path):
        status, rep = _run(tmp_path, "dominate", {"length": 25})
        assert status == 0
        assert rep["estimates"]["lam"] == pytest.approx((3 - 5**0.5) / (3 + 5**0.5), rel=0.05)

    def test_floquet_cat(self, tmp_path):
        status, rep = _run(tmp_path, "floquet", {"scenario": "cat-suspension"})
        assert status == 0 and rep["hard_certificates"]["liouville_ok"]

    def test_failed_certificate_exits_one(self, tmp_path):
        status, rep = _run(tmp_path, "moser", {"n": 32, "steps": 2, "tol": 1e-14})
        assert status == 1 and not rep["ok"]

    def test_reports_are_deterministic(self, tmp_path):
        cfg = {"n": 32, "eps": 0.3}
        _run(tmp_path, "mollify", cfg, "a")
        _run(tmp_path, "mollify", cfg, "b")
        assert (tmp_path / "a" / "report.json").read_bytes() == (tmp_path / "b" / "report.json").read_bytes()

    def test_every_command_has_defaults(self):
        assert set(DEFAULTS) == {"paste", "paste-support", "smooth", "mollify", "map-paste", "moser",
                                 "symplectic-blend", "classify", "floquet", "dominate", "norms"}


class TestErrors:
    def test_unknown_key(self, tmp_path):
        status, rep = _run(tmp_path, "paste", {"grid": 64})
        assert status == 2 and rep["error"]["code"] == "config_invalid"

    def test_bad_enum(self, tmp_path):
        status, rep = _run(tmp_path, "floquet", {"scenario": "pendulum"})
        assert status == 2 and rep["error"]["code"] == "config_invalid"

    def test_unreadable_config(self, tmp_path):
        bad = tmp_path / "bad.json"
        bad.write_text("{not json")
        assert main(["norms", "--out", str(tmp_path / "o"), "--config", str(bad)]) == 2

    def test_spec_mismatch(self, tmp_path):
        write_field(VectorGrid.constant(GridSpec(2, 32), [1.0, 0.0]), tmp_path / "x.vf")
        write_field(VectorGrid.constant(GridSpec(2, 64), [1.0, 0.0]), tmp_path / "y.vf")
        status, rep = _run(tmp_path, "paste", {"X": str(tmp_path / "x.vf"), "Y": str(tmp_path / "y.vf")})
        assert status == 2 and rep["error"]["code"] == "spec_mismatch"

    def test_same_path_twice(self, tmp_path):
        status, rep = _run(tmp_path, "paste", {"X": "a.vf", "Y": "a.vf"})
        assert status == 2 and rep["error"]["code"] == "config_invalid"

    def test_non_trace_free_matrix(self, tmp_path):
        status, rep = _run(tmp_path, "classify", {"matrix": np.eye(3).tolist()})
        assert status == 2 and rep["error"]["code"] == "trace_violation"

    def test_divergent_input(self, tmp_path):
        spec = GridSpec(2, 32)
        rng = np.random.default_rng(0)
        write_field(VectorGrid(spec, rng.normal(size=(2, 32, 32))), tmp_path / "x.vf")
        write_field(VectorGrid.constant(spec, [1.0, 0.0]), tmp_path / "y.vf")
        status, rep = _run(tmp_path, "paste", {"X": str(tmp_path / "x.vf"), "Y": str(tmp_path / "y.vf")})
        assert status == 2 and rep["error"]["code"] == "not_divergence_free"
