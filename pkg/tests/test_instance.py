import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from mttsp.instance import (
    Instance,
    InstanceError,
    Target,
    assign_windows,
    earliest_intercept,
    generate,
    generating_tour,
    parse,
    serialize,
    target_position,
)
from mttsp.oracle import brute_force


def tgt(ref, vel=(0.0, 0.0), window=(0.0, 100.0), tid=1):
    return Target(tid, ref, vel, window)


@pytest.mark.parametrize("ref, vel, t, expected", [
    ((3, 4), (0, 0), 77, (3, 4)),
    ((0, 0), (1, 2), 5, (5, 10)),
    ((10, 0), (-1, 0), 10, (0, 0)),
])
def test_target_position(ref, vel, t, expected):
    np.testing.assert_allclose(target_position(tgt(ref, vel), t), expected)


def test_earliest_intercept_stationary():
    assert earliest_intercept((0, 0), 0.0, tgt((3, 4)), 1.0) == pytest.approx(5.0)


def test_earliest_intercept_closing():
    t = earliest_intercept((0, 0), 0.0, tgt((10, 0), (-1, 0)), 1.0)
    assert t == pytest.approx(5.0)
    np.testing.assert_allclose(target_position(tgt((10, 0), (-1, 0)), t), (5, 0), atol=1e-12)


def test_earliest_intercept_window_too_short():
    assert earliest_intercept((0, 0), 0.0, tgt((3, 4), window=(0, 3)), 1.0) is None


def test_earliest_intercept_waits_for_window():
    assert earliest_intercept((0, 0), 0.0, tgt((3, 4), window=(8, 9)), 1.0) == 8.0


@given(x=st.floats(-50, 50), y=st.floats(-50, 50), vx=st.floats(-1, 1), vy=st.floats(-1, 1),
       t0=st.floats(0, 20), v=st.floats(2, 8))
@settings(max_examples=60, deadline=None)
def test_earliest_intercept_is_reachable_and_tight(x, y, vx, vy, t0, v):
    target = tgt((x, y), (vx, vy), window=(0.0, 1e4))
    t = earliest_intercept((1.0, -2.0), t0, target, v)
    assert t is not None
    gap = np.linalg.norm(target_position(target, t) - (1.0, -2.0))
    assert gap <= v * (t - t0) + 1e-7 * max(1.0, gap)
    if t > t0 + 1e-6:
        # slightly earlier is out of reach
        early = t - 1e-4 * (t - t0)
        assert np.linalg.norm(target_position(target, early) - (1.0, -2.0)) > v * (early - t0)


def test_generate_deterministic():
    assert serialize(generate(5, 1)) == serialize(generate(5, 1))
    assert serialize(generate(5, 1)) != serialize(generate(5, 2))


def test_generate_speeds():
    inst = generate(20, 7)
    assert inst.n == 20
    for tg in inst.targets:
        assert 0.5 <= tg.speed <= 1.0


def test_generate_stays_in_square():
    inst = generate(5, 3)
    for tg in inst.targets:
        for t in range(0, 151):
            assert np.all(np.abs(tg.position(t)) <= 50.0 + 1e-9)


@pytest.mark.parametrize("kwargs", [dict(n=0), dict(n=3, speed_range=(1.0, 0.5)),
                                    dict(n=3, S=-1.0)])
def test_generate_rejects_bad_parameters(kwargs):
    n = kwargs.pop("n")
    with pytest.raises(InstanceError):
        generate(n, 0, **kwargs)


def test_generate_defaults():
    inst = generate(3, 0)
    assert (inst.S, inst.T, inst.v_max, inst.depot) == (100.0, 150.0, 4.0, (0.0, 0.0))
    assert inst.R == pytest.approx(math.sqrt(2) * 100)


@pytest.fixture(scope="module")
def windowed():
    base = generate(5, 11)
    return base, assign_windows(base, [25, 50, 75], v_min_agent=4.0, seed=11)


def test_assign_windows_nested(windowed):
    _, (a, b, c) = windowed
    for i in range(1, a.n + 1):
        for small, big in ((a, b), (b, c)):
            lo, hi = small.target(i).window
            lo2, hi2 = big.target(i).window
            assert lo2 <= lo and hi <= hi2


def test_assign_windows_lengths_and_visit_times(windowed):
    base, insts = windowed
    for d, inst in zip([25, 50, 75], insts):
        for tg in inst.targets:
            lo, hi = tg.window
            assert hi - lo == pytest.approx(min(d, inst.T))
            assert 0 <= lo <= hi <= inst.T
    # the generating tour meets every window of every duration
    rng = np.random.default_rng(11)
    seq = [int(i) for i in rng.permutation(np.arange(1, base.n + 1))]
    times, _ = generating_tour(base, seq, 4.0)
    for inst in insts:
        for tid, t in times.items():
            lo, hi = inst.target(tid).window
            assert lo - 1e-9 <= t <= hi + 1e-9


def test_assign_windows_oracle_feasible(windowed):
    _, insts = windowed
    tour = brute_force(insts[0].with_vmax(4.0))
    assert tour is not None and math.isfinite(tour.cost)


def test_assign_windows_rejects_unsorted():
    with pytest.raises(InstanceError):
        assign_windows(generate(3, 0), [50, 25])


def test_assign_windows_is_deterministic():
    base = generate(4, 2)
    a = assign_windows(base, [25, 50], seed=5)
    b = assign_windows(base, [25, 50], seed=5)
    assert [serialize(x) for x in a] == [serialize(x) for x in b]


instances = st.builds(
    lambda n, seed: generate(n, seed).with_vmax(5.5),
    st.integers(1, 6), st.integers(0, 10_000))


@given(instances)
@settings(max_examples=40, deadline=None)
def test_round_trip(inst):
    assert parse(serialize(inst)) == inst


def test_parse_missing_vmax_names_field():
    text = serialize(generate(2, 0)).replace("vmax 4\n", "")
    with pytest.raises(InstanceError) as exc:
        parse(text)
    assert exc.value.field == "vmax"
    assert "vmax" in str(exc.value)


def test_parse_reversed_window_names_line():
    text = serialize(generate(2, 0)).replace("window 0 150", "window 90 10", 1)
    with pytest.raises(InstanceError) as exc:
        parse(text)
    assert exc.value.field == "window"
    assert exc.value.line == 7


@pytest.mark.parametrize("edit", [
    lambda s: s.replace("mttsp-instance 1", "mttsp-instance 9"),
    lambda s: s.replace("targets 2", "targets 3"),
    lambda s: s.replace("S 100", "S abc"),
    lambda s: s + "colour red\n",
    lambda s: "",
])
def test_parse_errors(edit):
    with pytest.raises(InstanceError):
        parse(edit(serialize(generate(2, 0))))


def test_validate_rejects_fast_target():
    inst = Instance(100.0, 150.0, 0.1, targets=(tgt((0, 0), (1, 0), (0, 10)),))
    with pytest.raises(InstanceError):
        inst.validate()


def test_validate_rejects_window_past_horizon():
    inst = Instance(100.0, 150.0, 4.0, targets=(tgt((0, 0), (0, 0), (0, 200)),))
    with pytest.raises(InstanceError):
        inst.validate()
