import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from saddlemap import dynamics, gallery
from saddlemap.dynamics import (
    NesterovSchedule, SearchConfig, accelerate_heavyball, bb2_step, hisd_search, nesterov_gamma, reflect, sd_search,
    theta_step,
)
from saddlemap.system import build_from_energy, build_from_force

from oracles import mb_stationary_points

SADDLE_QUAD = "-0.5*x1**2 + 0.5*x2**2"


def butterfly_cfg(**kw):
    base = dict(saddle_index=2, time_step=1e-2, max_iter=10000, eigen_method="euler", eigen_max_iter=1)
    base.update(kw)
    return SearchConfig(**base)


def test_butterfly_index2_seed(butterfly_spec):
    out = hisd_search(butterfly_spec, butterfly_cfg(), [0.1, 0.1], np.eye(2))
    assert out.converged and out.morse_index == 2
    assert out.gnorm_history[-1] < 1e-6
    assert 650 <= out.iterations <= 2600


def test_quadratic_saddle_converges_to_origin():
    spec = build_from_energy(SADDLE_QUAD, 2)
    out = hisd_search(spec, SearchConfig(time_step=0.1, max_iter=2000), [0.3, 0.4], np.array([[1.0], [0.0]]))
    assert out.converged and out.morse_index == 1
    assert np.linalg.norm(out.x_final) < 1e-5


def test_constant_field_diverges():
    spec = build_from_force(lambda x: np.array([1.0, 0.0]), 2, True, symmetry_check=False)
    out = sd_search(spec, SearchConfig(saddle_index=0, search_area=0.1, time_step=0.01, max_iter=1000), [0.0, 0.0])
    assert out.status == "diverged"


def test_max_iter_reported():
    spec = build_from_energy("x1**2 + x2**2", 2)
    out = sd_search(spec, SearchConfig(saddle_index=0, time_step=1e-3, max_iter=5), [1.0, 1.0])
    assert out.status == "max_iter_no_convergence" and not out.converged


def test_sd_search_quadratic_without_hvps():
    spec = build_from_energy("x1**2 + x2**2", 2)
    out = sd_search(spec, SearchConfig(saddle_index=0, time_step=0.1, max_iter=200), [1.0, 1.0])
    assert out.converged and out.iterations <= 200
    assert np.linalg.norm(out.x_final) < 1e-6
    assert out.loop_hvp_evals == 0
    assert out.morse_index == 0


def test_sd_search_cubic_nearest_well():
    out = sd_search(gallery.cubic(3).build(), SearchConfig(saddle_index=0, time_step=0.02, max_iter=5000),
                    [0.9, 1.1, 0.95])
    np.testing.assert_allclose(out.x_final, np.ones(3), atol=1e-6)
    assert out.morse_index == 0


def test_sd_search_mueller_brown_minimum(mb_spec):
    out = sd_search(mb_spec, SearchConfig(saddle_index=0, time_step=1e-4, max_iter=20000), [0.62, 0.03])
    assert out.converged and out.gnorm_history[-1] < 1e-6
    minima = [p for p, idx in mb_stationary_points() if idx == 0]
    assert min(np.linalg.norm(out.x_final - m) for m in minima) < 1e-6


def test_bb2_examples():
    assert bb2_step([1, 0], [2, 0], [1e-6, 0], 0.5) == 0.5
    assert bb2_step([1, 0], [-2, 0], [10, 0], 0.5) == pytest.approx(0.05)
    assert bb2_step([1, 0], [0, 2], [1, 0], 0.5, fallback=0.01) == 0.01
    assert bb2_step([1, 0], [0, 0], [1, 0], 0.5, fallback=0.02) == 0.02
    with pytest.raises(ValueError):
        bb2_step([1, 0], [0, 0], [1, 0], 0.5)


def test_heavyball_examples():
    x, xp, r = np.array([1.0, 2.0]), np.array([0.5, 1.0]), np.array([-1.0, 3.0])
    np.testing.assert_array_equal(accelerate_heavyball(x, xp, r, 0.1, 0.0), x + 0.1 * r)
    np.testing.assert_array_equal(accelerate_heavyball(x, x, r, 0.1, 0.8), x + 0.1 * r)


def test_nesterov_schedules():
    assert nesterov_gamma(1) == pytest.approx(0.25)
    theta1, gamma = theta_step(1.0)
    assert theta1 == pytest.approx((1 + 5**0.5) / 2) and gamma == 0.0
    assert nesterov_gamma(200, 1, 200) == pytest.approx(200 / 203)
    assert nesterov_gamma(201, 1, 200) == pytest.approx(0.25)
    assert nesterov_gamma(0) == 0.0
    sched = NesterovSchedule(2, restart=3)
    first = [sched.gamma(n) for n in (1,)]
    for n in (1, 2, 3):
        if n > 1:
            sched.gamma(n)
        sched.after_step(n)
    assert sched.gamma(4) == pytest.approx(first[0])


def test_reflected_field_on_quadratic_saddle():
    spec = build_from_energy(SADDLE_QUAD, 2)
    v = np.array([[1.0], [0.0]])
    for x in np.random.default_rng(3).uniform(-1, 1, (10, 2)):
        g = spec.force(x)
        r = -reflect(g, v)
        assert r[0] == pytest.approx(g[0], abs=1e-12)
        assert r[1] == pytest.approx(-g[1], abs=1e-12)


def test_stationary_point_is_fixed():
    spec = build_from_energy("-0.5*x1**2 + 2*x2**2 + x1*x2", 2)
    x_hat = np.zeros(2)
    r = -reflect(spec.force(x_hat), np.linalg.eigh(np.array([[-1.0, 1.0], [1.0, 4.0]]))[1][:, :1])
    np.testing.assert_array_equal(x_hat + 0.1 * r, x_hat)


def test_trajectory_and_history_shapes(butterfly_spec):
    out = hisd_search(butterfly_spec, butterfly_cfg(), [0.1, 0.1], np.eye(2))
    t = out.trajectory
    assert len(t.points) == len(t.times) == out.iterations + 1
    assert t.times[0] == 0.0 and np.all(np.diff(t.times) >= 0)
    assert len(out.gnorm_history) == out.iterations + 1


def test_bb_steps_respect_cap(mb_spec):
    seen = []
    real = dynamics.bb2_step

    def spy(*a, **k):
        dt = real(*a, **k)
        seen.append((dt, np.linalg.norm(a[2]), a[3]))
        return dt

    dynamics.bb2_step = spy
    try:
        out = sd_search(mb_spec, SearchConfig(saddle_index=0, time_step=1e-4, max_iter=5000, bb_step=True), [0.6, 0.1])
    finally:
        dynamics.bb2_step = real
    assert out.converged and seen
    assert all(dt * gn <= tau + 1e-12 for dt, gn, tau in seen)


def test_reruns_bit_identical(butterfly_spec):
    a = hisd_search(butterfly_spec, butterfly_cfg(max_iter=300), [0.1, 0.1], np.eye(2))
    b = hisd_search(butterfly_spec, butterfly_cfg(max_iter=300), [0.1, 0.1], np.eye(2))
    assert a.gnorm_history == b.gnorm_history


def test_verbose_report_format(butterfly_spec, capsys):
    hisd_search(butterfly_spec, butterfly_cfg(max_iter=250, verbose=True, report_interval=100), [0.1, 0.1], np.eye(2))
    lines = capsys.readouterr().out.strip().splitlines()
    assert lines[0].startswith("Iteration: 100|| Norm of gradient: ")
    assert len(lines[0].split(": ")[-1].split(".")[-1]) == 6


def test_salvage_after_max_iter(monkeypatch):
    spec = build_from_energy(SADDLE_QUAD, 2)
    monkeypatch.setattr(dynamics.eigen, "check_index_k", lambda *a, **k: False)
    real = dynamics.update_subspace
    monkeypatch.setattr(dynamics, "update_subspace", lambda *a, **k: (real(*a, **k)[0], False))
    out = hisd_search(spec, SearchConfig(time_step=0.1, max_iter=400), [0.3, 0.4], np.array([[1.0], [0.0]]))
    assert out.converged and out.note and out.morse_index == 1


def test_lobpcg_refused_for_nongradient():
    spec = build_from_force(lambda x: np.array([x[1], -x[0]]), 2, False, symmetry_check=False)
    with pytest.raises(ValueError):
        hisd_search(spec, SearchConfig(eigen_method="lobpcg"), [0.1, 0.1], np.eye(2)[:, :1])


@pytest.mark.parametrize("bad", [dict(time_step=-1.0), dict(momentum=1.0), dict(tolerance=0.0),
                                 dict(report_interval=0), dict(acceleration="adam")])
def test_config_validation(bad):
    with pytest.raises(ValueError):
        SearchConfig(**bad)


@settings(max_examples=20, deadline=None)
@given(st.floats(0.05, 0.6), st.floats(-0.5, 0.5), st.sampled_from(["none", "heavyball", "nesterov"]))
def test_converged_outcomes_meet_tolerance(x1, x2, acc):
    spec = build_from_energy(SADDLE_QUAD, 2)
    cfg = SearchConfig(time_step=0.05, max_iter=3000, acceleration=acc, momentum=0.3 if acc == "heavyball" else 0.0)
    out = hisd_search(spec, cfg, [x1, x2], np.array([[1.0], [0.0]]))
    assert out.converged
    assert out.gnorm_history[-1] < cfg.tolerance
