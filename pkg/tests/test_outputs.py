import json
import os

import numpy as np

from weighted_integrability.functional import FtleRecord
from weighted_integrability.integrate import Trajectory
from weighted_integrability.outputs import (
    atomic_write_text, fmt, ftle_csv_text, read_csv_params, read_csv_rows, trajectory_csv_text)


def test_fmt_round_trips():
    for x in (0.1, 1 / 3, 1e-300, -2.5e17):
        assert float(fmt(x)) == x
    assert fmt(True) == "1" and fmt(False) == "0" and fmt(7) == "7"


def test_ftle_csv_layout(tmp_path):
    recs = [FtleRecord(0, np.array([0.1, 0.2, 0.7, 0.0]), 1.27, 0.004, False, 1),
            FtleRecord(1, np.array([0.9, 0.9, 0.7, 0.0]), 2.055, 0.3, True, 0)]
    path = tmp_path / "f.csv"
    atomic_write_text(str(path), ftle_csv_text(recs, ["x1", "y1", "x2", "y2"], {"alpha": 0.1}))
    lines = path.read_text().splitlines()
    assert lines[2] == "index,x1_0,y1_0,x2_0,y2_0,rho0,lambda_max,escaped,regular"
    rows = read_csv_rows(str(path))
    assert rows[1]["escaped"] == "1" and rows[1]["regular"] == "0"
    assert float(rows[0]["lambda_max"]) == 0.004
    assert read_csv_params(str(path)) == {"alpha": 0.1}


def test_trajectory_csv(tmp_path):
    traj = Trajectory(np.array([0.0, 0.1]), np.array([[1.0, 2.0], [3.0, 4.0]]))
    text = trajectory_csv_text(traj, ["a", "b"], {})
    assert text.splitlines()[2:] == ["t,a,b", "0,1,2", "0.10000000000000001,3,4"]


def test_atomic_write_leaves_no_temp_files(tmp_path):
    p = tmp_path / "sub" / "x.json"
    atomic_write_text(str(p), json.dumps({"a": 1}))
    atomic_write_text(str(p), json.dumps({"a": 2}))
    assert json.loads(p.read_text()) == {"a": 2}
    assert os.listdir(p.parent) == ["x.json"]
