import csv

import pytest
from hypothesis import given, settings, strategies as st

from mttsp import bench
from mttsp.bench import ExperimentConfig
from mttsp.instance import InstanceError


def tiny(**kw):
    base = dict(target_counts=[3], instances_per_count=2, tw_durations=[25, 75], vmax_values=[4, 8],
                time_limit=30, base_seed=7, formulations=["gcs", "bigm"])
    base.update(kw)
    return ExperimentConfig(**base)


configs = st.builds(
    ExperimentConfig,
    target_counts=st.lists(st.integers(1, 20), min_size=1, max_size=4),
    instances_per_count=st.integers(1, 30),
    tw_durations=st.lists(st.sampled_from([10.0, 25.0, 50.0, 75.0]), min_size=1, max_size=3,
                          unique=True),
    vmax_values=st.lists(st.sampled_from([4.0, 6.0, 8.0]), min_size=1, max_size=3, unique=True),
    time_limit=st.sampled_from([1.0, 60.0, 1800.0]),
    base_seed=st.integers(0, 10_000),
    formulations=st.sampled_from([["gcs"], ["bigm"], ["gcs", "bigm"]]),
)


@given(configs)
@settings(max_examples=40, deadline=None)
def test_config_round_trip(config):
    assert bench.parse_config(bench.serialize_config(config)) == config


def test_config_defaults():
    cfg = ExperimentConfig()
    assert cfg.target_counts == [5, 8, 10] and cfg.instances_per_count == 10
    assert cfg.time_limit == 120
    assert [s[0] for s in cfg.settings()] == ["Tw25", "Tw50", "Tw75", "Spd6", "Spd8"]
    assert cfg.settings()[3] == ("Spd6", 50.0, 6.0)


@pytest.mark.parametrize("text", [
    "mttsp-bench 2\n",
    "mttsp-bench 1\ntarget_counts\n",
    "mttsp-bench 1\ntime_limit -1\n",
    "mttsp-bench 1\ncolour red\n",
    "mttsp-bench 1\nformulations simplex\n",
    "mttsp-bench 1\nexperiments Tw99\n",
    "mttsp-bench 1\ninstances_per_count 2\ninstances_per_count 3\n",
])
def test_config_errors(text):
    with pytest.raises(InstanceError):
        bench.parse_config(text)


def test_experiment_instances_nested_and_seeded():
    cfg = tiny()
    items = list(bench.experiment_instances(cfg))
    assert [(lbl, n, k) for lbl, n, k, _, _ in items] == [
        ("Tw25", 3, 0), ("Tw75", 3, 0), ("Spd8", 3, 0),
        ("Tw25", 3, 1), ("Tw75", 3, 1), ("Spd8", 3, 1)]
    assert items[0][3] == bench.instance_seed(cfg, 3, 0) == 7 + 3000
    a, b = items[0][4], items[1][4]
    for i in range(1, 4):
        assert b.target(i).window[0] <= a.target(i).window[0]
        assert a.target(i).window[1] <= b.target(i).window[1]
    assert items[2][4].v_max == 8.0


@pytest.fixture(scope="module")
def study():
    cfg = tiny()
    gap = bench.run_gap_study(cfg)
    relaxed = bench.run_relaxation_study(cfg, gap)
    return cfg, gap, relaxed


def test_gap_study_solves_everything(study):
    _, gap, _ = study
    assert {r.formulation for r in gap} == {"gcs", "bigm"}
    for row in gap:
        assert len(row.records) == 2
        assert row.mean_gap == pytest.approx(0.0, abs=1e-4)
        for rec in row.records:
            assert rec.status == "optimal"


def test_formulations_agree_per_instance(study):
    _, gap, _ = study
    by = {}
    for row in gap:
        for r in row.records:
            by.setdefault((r.label, r.index), {})[r.formulation] = r.z_P
    for vals in by.values():
        assert vals["gcs"] == pytest.approx(vals["bigm"], rel=1e-4)


def test_relaxation_ratios(study):
    _, _, relaxed = study
    for row in relaxed:
        for r in row.records:
            assert r.ratio is not None
            if row.formulation == "relaxed-bigm":
                assert abs(r.ratio) <= 1e-6
            else:
                assert 0 < r.ratio <= 1 + 1e-6
    table = bench.ratio_table(relaxed)
    assert set(table) == {"Tw25", "Tw75", "Spd8"}
    assert set(table["Tw25"]) == {3}


def read(path):
    with open(path) as fh:
        return list(csv.reader(fh))


def test_outputs_are_deterministic(study, tmp_path):
    cfg, gap, _ = study
    first = bench.write_results(gap, tmp_path / "a")
    second = bench.write_results(bench.run_gap_study(cfg), tmp_path / "b")
    assert first[0].name == "gap_results.csv"
    assert first[0].read_text() == second[0].read_text()


def test_plot_data(study, tmp_path):
    _, gap, _ = study
    paths = bench.emit_plot_data(gap, tmp_path)
    assert sorted(p.name for p in paths) == ["plot_Spd8.csv", "plot_Tw25.csv", "plot_Tw75.csv"]
    rows = read(paths[0])
    assert rows[0] == ["n", "formulation", "mean_gap", "mean_runtime"]
    assert len(rows) == 3
    before = [p.read_text() for p in paths]
    bench.emit_plot_data(gap, tmp_path)
    assert [p.read_text() for p in paths] == before


def test_failures_are_recorded():
    rec = bench.solve_record(bench.make_instances(3, 1, [25])[25.0], "nope", 10.0)
    assert rec.status == "error" and rec.gap_percent == bench.NO_INCUMBENT_GAP
    assert "KeyError" in rec.error


def test_run_bench_writes_everything(tmp_path):
    cfg = tiny(target_counts=[2], instances_per_count=1, formulations=["gcs"], experiments=["Tw25"])
    bench.run_bench(cfg, tmp_path)
    names = sorted(p.name for p in tmp_path.iterdir())
    assert "gap_results.csv" in names and "relaxation_results.csv" in names
    assert "plot_Tw25.csv" in names and "config.txt" in names
    assert bench.load_config(tmp_path / "config.txt") == cfg
