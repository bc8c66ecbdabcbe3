import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from hri_engagement import kernels
from hri_engagement.behaviors import (
    BEHAVIORS,
    BehaviorCategory as B,
    GaussianParams,
    default_parameter_set,
    reference_parameter_set,
)
from hri_engagement.engine import (
    CompiledDataset,
    effective_slope,
    estimate_duration,
    gaussian_product,
    read_trace,
    trajectory,
    write_trace,
)

from helpers import integrated_product_moments, make_session, split_interval
from strategies import sessions


def params_with(**slopes):
    """Default parameters with some behaviors overridden as (mean, variance)."""
    p = default_parameter_set()
    per = dict(p.per_behavior)
    for name, (m, v) in slopes.items():
        per[B.from_name(name)] = GaussianParams(m, v)
    return type(p)(per, p.alpha, p.t_max)


def all_slopes(mean, variance=0.1):
    return params_with(**{b.value: (mean, variance) for b in BEHAVIORS})


factor = st.tuples(st.floats(-1.0, 1.0), st.floats(1e-6, 1.0))


def test_product_single_factor_identity():
    g = GaussianParams(-0.3, 0.02)
    assert gaussian_product([g]) == g


def test_product_three_identical():
    g = gaussian_product([GaussianParams(0.25, 0.3)] * 3)
    assert g.mean == pytest.approx(0.25, rel=1e-15)
    assert g.variance == pytest.approx(0.1, rel=1e-15)


def test_product_two_factor_example():
    g = gaussian_product([GaussianParams(-0.02, 1e-4), GaussianParams(0.0, 1e-4)])
    mu, var = integrated_product_moments([(-0.02, 1e-4), (0.0, 1e-4)])
    assert abs(mu - (-0.01)) <= 1e-8 and abs(var - 5e-5) <= 1e-8
    assert g.mean == pytest.approx(-0.01, abs=1e-15)
    assert g.variance == pytest.approx(5e-5, rel=1e-12)


def test_product_empty():
    with pytest.raises(ValueError):
        gaussian_product([])


@settings(max_examples=200, deadline=None)
@given(st.lists(factor, min_size=1, max_size=5))
def test_product_matches_quadrature(factors):
    g = gaussian_product([GaussianParams(m, v) for m, v in factors])
    mu, var = integrated_product_moments(factors)
    scale = max(abs(mu), math.sqrt(var))
    assert abs(g.mean - mu) <= 1e-6 * scale
    assert abs(g.variance - var) <= 1e-6 * var


def test_effective_slope_independent_target_unchanged():
    ref = reference_parameter_set()
    assert effective_slope(B.GAZE, [B.TALK_TO_ROBOT], ref) == GaussianParams(-0.008, 0.0018)
    assert effective_slope(B.PROWL, [], ref) == ref[B.PROWL]


def test_effective_slope_dependent_target_coupled():
    p = params_with(LookAround=(-0.02, 1e-4), TalkToRobot=(0.0, 1e-4))
    g = effective_slope(B.LOOK_AROUND, [B.TALK_TO_ROBOT], p)
    assert g.mean == pytest.approx(-0.01, abs=1e-15)
    assert g.variance == pytest.approx(5e-5, rel=1e-12)


def test_effective_slope_one_level_only():
    # a dependent co-behavior contributes its raw distribution
    p = params_with(Prowl=(-0.02, 1e-4), LookAround=(0.0, 1e-4), Gaze=(0.5, 1e-8))
    g = effective_slope(B.PROWL, [B.LOOK_AROUND], p)
    assert g.mean == pytest.approx(-0.01, abs=1e-15)


def test_single_section_crossing():
    s = make_session({"A": [("Gaze", 0, 40)]})
    tr = trajectory(s, "A", all_slopes(-0.01))
    assert tr.estimated_duration == 100.0
    assert not tr.capped
    assert tr.breakpoints[0] == (0.0, 1.0)
    assert tr.breakpoints[-1] == (100.0, 0.0)


def test_gaze_reference_125():
    s = make_session({"A": [("Gaze", 0, 60)]})
    assert estimate_duration(s, "A", reference_parameter_set()) == pytest.approx(125.0, abs=1e-12)


def test_zero_slope_capped():
    s = make_session({"A": [("Gaze", 0, 60), ("Touch", 60, 90)]})
    tr = trajectory(s, "A", all_slopes(0.0))
    assert tr.estimated_duration == 1800.0 and tr.capped
    assert tr.breakpoints[-1] == (1800.0, 1.0)


def test_positive_slope_capped_trace_ends_at_cap():
    s = make_session({"A": [("Gaze", 10, 60), ("Touch", 60, 90)]})
    tr = trajectory(s, "A", params_with(Gaze=(0.01, 0.1), Touch=(-1e-4, 0.1)))
    assert tr.capped
    t_end, el_end = tr.breakpoints[-1]
    assert t_end == 10 + 1800
    assert el_end == pytest.approx(1.0 + 0.5 - 1e-4 * (1800 - 50))


def test_crossing_inside_early_section_ignores_later_behaviors():
    s = make_session({"A": [("Gaze", 0, 60), ("Touch", 60, 300)]})
    p = params_with(Gaze=(-0.05, 0.1), Touch=(0.5, 0.1))
    assert estimate_duration(s, "A", p) == pytest.approx(20.0)


def test_multi_section_crossing_and_extrapolation():
    # EL after Gaze 0-50 at -0.01: 0.5; then Touch at -0.002 until 100 -> 0.4;
    # tail frozen at Touch: crosses 200 s later
    s = make_session({"A": [("Gaze", 0, 50), ("Touch", 50, 100)]})
    p = params_with(Gaze=(-0.01, 0.1), Touch=(-0.002, 0.1))
    tr = trajectory(s, "A", p)
    assert tr.estimated_duration == pytest.approx(300.0, rel=1e-14)
    # the open-ended last section gets no breakpoint at its annotated end
    assert [b[0] for b in tr.breakpoints] == [0.0, 50.0, pytest.approx(300.0)]
    assert tr.engagement_at(100.0) == pytest.approx(0.4)


def test_dependence_changes_dependent_target():
    s = make_session({"A": [("LookAround", 0, 60)], "B": [("TalkToRobot", 0, 60)]})
    p = params_with(LookAround=(-0.02, 1e-4), TalkToRobot=(0.0, 1e-4))
    assert estimate_duration(s, "A", p, dependence=True) == pytest.approx(100.0)
    assert estimate_duration(s, "A", p, dependence=False) == pytest.approx(50.0)


def test_independence_neutrality():
    p = params_with(Gaze=(-0.01, 1e-3), Prowl=(0.3, 1e-8))
    alone = make_session({"A": [("Gaze", 0, 50)]})
    crowd = make_session({"A": [("Gaze", 0, 50)], "B": [("Prowl", 0, 20), ("Touch", 20, 80)]})
    assert estimate_duration(alone, "A", p) == estimate_duration(crowd, "A", p)


def test_sampled_mode():
    s = make_session({"A": [("Gaze", 0, 30), ("Touch", 30, 60)]})
    p = reference_parameter_set()
    a = trajectory(s, "A", p, mode="sampled", seed=7)
    b = trajectory(s, "A", p, mode="sampled", seed=7)
    c = trajectory(s, "A", p, mode="sampled", seed=8)
    assert a == b
    assert a.section_slopes[0].applied != c.section_slopes[0].applied
    with pytest.raises(ValueError):
        trajectory(s, "A", p, mode="sampled")
    with pytest.raises(ValueError):
        trajectory(s, "A", p, mode="fuzzy")


def test_trace_csv_round_trip(tmp_path):
    s = make_session({"A": [("Gaze", 5, 30), ("Touch", 30, 60)], "B": [("Prowl", 0, 40)]})
    tr = trajectory(s, "A", reference_parameter_set())
    write_trace(tr, tmp_path / "t.csv")
    rows = read_trace(tmp_path / "t.csv")
    assert (rows[0]["time"], rows[0]["engagement"]) == (5.0, 1.0)
    assert [(r["time"], r["engagement"]) for r in rows] == list(tr.breakpoints)
    assert rows[0]["behavior"] == "Gaze"


def direct_el(session, target, params, t):
    """EL at absolute time t from the section formula, no breakpoints."""
    from hri_engagement.timeline import segment

    el = 1.0
    for sec in segment(session, target):
        a = effective_slope(sec.target_behavior, sec.co_behaviors, params).mean
        end = math.inf if sec.open_ended else sec.end
        el += a * max(0.0, min(t, end) - sec.start)
    return el


random_params = st.builds(
    lambda ms, vs: __import__("hri_engagement").ParameterSet.from_arrays(ms, vs),
    st.lists(st.floats(-0.05, 0.01), min_size=8, max_size=8),
    st.lists(st.floats(1e-6, 1e-2), min_size=8, max_size=8),
)


@settings(max_examples=50, deadline=None)
@given(sessions(), random_params, st.data())
def test_trace_matches_direct_formula(session, params, data):
    u = session.users[data.draw(st.integers(0, len(session.users) - 1))]
    tr = trajectory(session, u.user_id, params)
    t0, t1 = tr.breakpoints[0][0], tr.breakpoints[-1][0]
    rng = np.random.default_rng(data.draw(st.integers(0, 2**32 - 1)))
    for t in rng.uniform(t0, t1, 1000):
        assert abs(tr.engagement_at(t) - direct_el(session, u.user_id, params, t)) <= 1e-12


@settings(max_examples=50, deadline=None)
@given(sessions(), random_params)
def test_trace_invariants(session, params):
    for u in session.users:
        tr = trajectory(session, u.user_id, params)
        assert tr.breakpoints[0] == (u.arrival, 1.0)
        times = [b[0] for b in tr.breakpoints]
        assert times == sorted(times)
        # chaining: each interior breakpoint's value is the previous section's closing value
        for (ta, ea), (tb, eb), ss in zip(tr.breakpoints, tr.breakpoints[1:], tr.section_slopes):
            if tb - ta > 0 and not (tr.capped and tb == tr.breakpoints[-1][0]):
                assert eb == pytest.approx(ea + ss.applied * (tb - ta), abs=1e-12)
        if tr.capped:
            assert tr.estimated_duration == params.t_max
        else:
            assert tr.breakpoints[-1][1] == 0.0
            assert all(e > 0 for _, e in tr.breakpoints[:-1])
        assert trajectory(session, u.user_id, params) == tr


@settings(max_examples=60, deadline=None)
@given(sessions(), random_params, st.data())
def test_over_segmentation_invariance(session, params, data):
    ui = data.draw(st.integers(0, len(session.users) - 1))
    ii = data.draw(st.integers(0, len(session.users[ui].intervals) - 1))
    refined = split_interval(session, ui, ii, data.draw(st.floats(0.1, 0.9)))
    for u in session.users:
        a = estimate_duration(session, u.user_id, params)
        b = estimate_duration(refined, u.user_id, params)
        assert abs(a - b) <= 1e-9


@settings(max_examples=40, deadline=None)
@given(st.lists(sessions(), min_size=1, max_size=4), random_params, st.booleans())
def test_compiled_dataset_matches_trajectory(corpus, params, dependence):
    corpus = [type(s)(f"s{i}", s.users) for i, s in enumerate(corpus)]
    data = CompiledDataset(corpus)
    t_hat, capped = data.estimate_params(params, dependence)
    i = 0
    for s in corpus:
        for u in s.users:
            tr = trajectory(s, u.user_id, params, dependence=dependence)
            assert t_hat[i] == pytest.approx(tr.estimated_duration, rel=1e-12)
            assert bool(capped[i]) == tr.capped
            i += 1


@pytest.mark.skipif("compiled" not in kernels.available_backends(), reason="extension not built")
@settings(max_examples=50, deadline=None)
@given(
    st.lists(st.lists(st.tuples(st.floats(0.01, 100.0), st.floats(-0.2, 0.05)), min_size=1, max_size=6), min_size=1, max_size=10),
    st.floats(10.0, 2000.0),
)
def test_backends_bit_identical(users, t_max):
    offsets = np.cumsum([0] + [len(u) for u in users])
    durations = np.array([d for u in users for d, _ in u])
    slopes = np.array([a for u in users for _, a in u])
    py = kernels.crossing_times(offsets, durations, slopes, t_max, backend="python")
    c = kernels.crossing_times(offsets, durations, slopes, t_max, backend="compiled")
    assert np.array_equal(py[0], c[0]) and np.array_equal(py[1], c[1])


def test_backend_selection():
    assert "python" in kernels.available_backends()
    old = kernels.get_backend()
    try:
        kernels.set_backend("python")
        assert kernels.get_backend() == "python"
        with pytest.raises(ValueError):
            kernels.set_backend("fortran")
    finally:
        kernels.set_backend(old)


def test_fallback_when_extension_missing(monkeypatch):
    import importlib
    import sys

    import hri_engagement

    monkeypatch.setitem(sys.modules, "hri_engagement._ckernels", None)
    monkeypatch.delattr(hri_engagement, "_ckernels", raising=False)
    fresh = importlib.reload(kernels)
    try:
        assert fresh.available_backends() == ["python"]
        assert fresh.get_backend() == "python"
        out, capped = fresh.crossing_times([0, 1], [10.0], [-0.01], 1800.0)
        assert out[0] == 100.0 and not capped[0]
    finally:
        monkeypatch.undo()
        importlib.reload(kernels)


def test_python_backend_end_to_end():
    s = make_session({"A": [("Gaze", 0, 60)], "B": [("Prowl", 0, 30), ("Touch", 30, 90)]})
    data = CompiledDataset([s])
    p = reference_parameter_set()
    py = kernels.crossing_times(data.offsets, data.durations, data.slopes(p.means(), p.variances(), True), p.t_max, backend="python")
    assert py[0].tolist() == data.estimate_params(p, True)[0].tolist()
