import csv

import numpy as np
import pytest

from trtlab.cli.config import SCHEMA, default_config, parse_config
from trtlab.cli.io import read_field_csv, write_field_csv
from trtlab.cli.main import main
from trtlab.errors import ConfigError
from trtlab.fields import VoxelField, VoxelGrid
from trtlab.metric import Domain

SMALL = """\
grid.resolution = 4
sampling.boundary_count = 4
sampling.direction_count = 3
"""


def read_rows(path):
    with open(path, newline="", encoding="utf-8") as fh:
        return list(csv.reader(fh))


def test_defaults():
    cfg = default_config()
    assert cfg["domain.n"] == 3
    assert cfg["domain.rho_ext"] == 1.5
    assert set(cfg.defaulted) == set(SCHEMA)


def test_constraint_error_names_both_keys():
    with pytest.raises(ConfigError) as info:
        parse_config("domain.rho = 1.0\ndomain.rho_ext = 0.5\n")
    msg = str(info.value)
    assert "domain.rho_ext (line 2)" in msg and "domain.rho (line 1)" in msg


def test_duplicate_key_names_both_lines():
    with pytest.raises(ConfigError) as info:
        parse_config("ode.h = 0.01\n# comment\node.h = 0.02\n")
    assert "line 3" in str(info.value) and "line 1" in str(info.value)


def test_all_errors_collected():
    with pytest.raises(ConfigError) as info:
        parse_config("bogus.key = 1\nsolver.tol = -1\ngrid.resolution = two\nno equals sign\n")
    errs = info.value.errors
    assert len(errs) == 4
    assert [e.split(":")[0] for e in errs] == ["line 1", "line 2", "line 3", "line 4"]


def test_round_trip():
    cfg = parse_config("metric.kind = conformal\nfamily.apex_angles = 1.0, 0.25\nseed = 7\n")
    again = parse_config(cfg.serialize())
    assert again == cfg
    assert again.serialize() == cfg.serialize()


def test_field_csv_round_trip(tmp_path):
    dom = Domain(3, 1.0, 1.5)
    grid = VoxelGrid.covering(dom, 4)
    f = VoxelField(dom, grid, np.random.default_rng(0).standard_normal((grid.size, 6)))
    write_field_csv(tmp_path / "f.csv", f)
    g = read_field_csv(tmp_path / "f.csv", dom, grid)
    assert np.array_equal(f.components, g.components)


def test_spanning_command(tmp_path, capsys):
    assert main(["spanning", "--out", str(tmp_path)]) == 0
    rows = read_rows(tmp_path / "spanning.csv")
    assert len(rows) == 1 + 6
    eig = [float(r[1]) for r in read_rows(tmp_path / "gram_eigenvalues.csv")[1:]]
    assert len(eig) == 6 and min(eig) > 0
    assert main(["spanning", "--n", "5", "--out", str(tmp_path / "n5")]) == 0
    assert len(read_rows(tmp_path / "n5" / "spanning.csv")) == 1 + 15
    assert "wall_seconds" in capsys.readouterr().out


def test_forward_zero_field(tmp_path):
    dom = Domain(3, 1.0, 1.5)
    grid = VoxelGrid.covering(dom, 4)
    write_field_csv(tmp_path / "zero.csv", VoxelField.zeros(dom, grid))
    cfg = tmp_path / "run.cfg"
    cfg.write_text(SMALL + f"io.field = {tmp_path / 'zero.csv'}\n")
    assert main(["forward", "--config", str(cfg), "--out", str(tmp_path / "out")]) == 0
    values = {r[2] for r in read_rows(tmp_path / "out" / "data.csv")[1:]}
    assert values == {"0"}


def test_forward_deterministic(tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text(SMALL)
    for d in ("a", "b"):
        assert main(["forward", "--config", str(cfg), "--seed", "3", "--out", str(tmp_path / d)]) == 0
    for name in ("data.csv", "report.csv"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_report_echoes_defaults_and_thresholds(tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("ode.h = 0.02\n")
    main(["spanning", "--config", str(cfg), "--out", str(tmp_path)])
    rows = {r[0]: r for r in read_rows(tmp_path / "report.csv")}
    assert "default:ode.h" not in rows and "default:seed" in rows
    assert rows["recovery_error"][2] and rows["recovery_error"][4] == "true"


def test_exit_codes(tmp_path, capsys):
    bad = tmp_path / "bad.cfg"
    bad.write_text("domain.rho_ext = 0.5\n")
    assert main(["spanning", "--config", str(bad), "--out", str(tmp_path)]) == 2
    assert "domain.rho_ext" in capsys.readouterr().err
    assert main(["spanning", "--config", str(tmp_path / "missing.cfg")]) == 1
    with pytest.raises(SystemExit):
        main(["no-such-command"])


def test_failed_check_exits_nonzero(tmp_path):
    cfg = tmp_path / "strict.cfg"
    cfg.write_text(SMALL + "solver.duality_tol = 1e-12\n")
    assert main(["adjoint-test", "--config", str(cfg), "--out", str(tmp_path)]) == 1
    rows = {r[0]: r for r in read_rows(tmp_path / "report.csv")}
    assert rows["all_passed"][1] == "false"
