import pytest

from conftest import stationary
from mttsp import bench
from mttsp.cli import main
from mttsp.instance import load, save
from mttsp.tour import parse_tour


@pytest.fixture
def inst_file(tmp_path):
    path = tmp_path / "one.mttsp"
    save(stationary([(10, 0)]), path)
    return path


def test_generate(tmp_path, capsys):
    out = tmp_path / "gen"
    assert main(["generate", "--n", "3", "--seed", "4", "--count", "2", "--out-dir", str(out)]) == 0
    files = sorted(out.iterdir())
    assert len(files) == 6
    insts = [load(f) for f in files]
    assert all(i.n == 3 for i in insts)


def test_solve_and_check(inst_file, tmp_path, capsys):
    tour_file = tmp_path / "tour.txt"
    log_file = tmp_path / "log.csv"
    dump_file = tmp_path / "dump.txt"
    code = main(["solve", str(inst_file), "--formulation", "bigm", "--deterministic",
                 "--tour-out", str(tour_file), "--log", str(log_file), "--dump", str(dump_file)])
    assert code == 0
    out = capsys.readouterr().out
    assert "status optimal" in out and "sequence 0 1 2" in out
    assert parse_tour(tour_file.read_text()).cost == pytest.approx(20.0, abs=1e-6)
    assert log_file.read_text().startswith("nodes,z_P,z_D")
    assert "l_tilde" in dump_file.read_text()
    assert main(["check", str(inst_file), str(tour_file)]) == 0


def test_check_flags_bad_tour(inst_file, tmp_path, capsys):
    bad = tmp_path / "bad.txt"
    bad.write_text("mttsp-tour 1\nvisit 0 0 0 0\nvisit 1 1 10 0\nvisit 2 2 0 0\n")
    assert main(["check", str(inst_file), str(bad)]) == 1
    assert "speed" in capsys.readouterr().out


def test_relax(inst_file, capsys):
    assert main(["relax", str(inst_file)]) == 0
    assert "status optimal" in capsys.readouterr().out


def test_oracle(inst_file, tmp_path, capsys):
    assert main(["oracle", str(inst_file), "--tour-out", str(tmp_path / "t.txt")]) == 0
    assert "cost 20" in capsys.readouterr().out


def test_infeasible_exit_code(tmp_path):
    path = tmp_path / "bad.mttsp"
    save(stationary([(40, 0)], windows=[(0, 1)]), path)
    assert main(["solve", str(path)]) == 1
    assert main(["oracle", str(path)]) == 1


def test_limit_without_incumbent(tmp_path):
    path = tmp_path / "six.mttsp"
    save(bench.make_instances(6, 3, [25])[25.0], path)
    assert main(["solve", str(path), "--time-limit", "0"]) == 2


@pytest.mark.parametrize("argv", [
    [], ["solve"], ["solve", "missing.mttsp"], ["solve", "x", "--formulation", "lp"],
    ["bench", "missing.cfg"], ["solve", "x", "--threads", "0"],
])
def test_usage_errors(argv):
    with pytest.raises(SystemExit) as exc:
        raise SystemExit(main(argv))
    assert exc.value.code == 3


def test_malformed_instance(tmp_path, capsys):
    path = tmp_path / "broken.mttsp"
    path.write_text("mttsp-instance 1\nS 100\n")
    assert main(["solve", str(path)]) == 3
    assert "missing required field" in capsys.readouterr().err


def test_bench(tmp_path):
    cfg = tmp_path / "cfg.txt"
    cfg.write_text("mttsp-bench 1\ntarget_counts 2\ninstances_per_count 1\ntw_durations 25\n"
                   "vmax 4\ntime_limit 20\nformulations gcs\n")
    out = tmp_path / "out"
    assert main(["bench", str(cfg), "--out-dir", str(out)]) == 0
    assert (out / "gap_results.csv").exists() and (out / "plot_Tw25.csv").exists()
