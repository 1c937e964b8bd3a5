import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from saddlemap import gallery
from saddlemap.config import validate_config

from oracles import mb_stationary_points


@pytest.mark.parametrize("name", sorted(gallery.GALLERY))
def test_configs_validate(name):
    g = gallery.get(name) if name != "phase_field" else gallery.get(name, n_grid=8)
    spec = validate_config(g.config).build_system()
    assert spec.dim == len(g.config["initial_point"])


def test_unknown_name():
    with pytest.raises(KeyError):
        gallery.get("teapot")


def test_mueller_brown_oracle_points_are_stationary(mb_spec):
    o = gallery.mueller_brown().oracle
    for p in o["minima"] + o["index1"]:
        assert np.linalg.norm(mb_spec.force(np.array(p))) < 5e-3
    assert len(mb_stationary_points()) == 5
    for p, _ in mb_stationary_points():
        assert np.linalg.norm(mb_spec.force(p)) < 1e-10


@pytest.mark.parametrize("n", [2, 3, 4])
def test_cubic_oracle(n):
    g = gallery.cubic(n)
    spec = g.build()
    pts = g.oracle["stationary"]
    assert len(pts) == 3**n and sum(g.oracle["counts"].values()) == 3**n
    for p, idx in pts:
        assert np.linalg.norm(spec.force(p)) < 1e-10
        hess = np.diag([j * (12 * v * v - 4) for j, v in enumerate(p, start=1)])
        assert int(np.sum(np.diag(hess) < 0)) == idx


def test_cubic_projection_is_injective_on_grid():
    P = gallery.cubic_projection()
    pts = np.array([p for p, _ in gallery.cubic_stationary_points(3)]) @ P.T
    assert len({tuple(np.round(q, 9)) for q in pts}) == 27


def test_butterfly_seed_is_stationary(butterfly_spec):
    assert np.linalg.norm(butterfly_spec.force(np.array([0.0, 0.5]))) < 1e-12


@pytest.mark.parametrize("value", [-1.0, 0.0, 1.0])
def test_phase_field_uniform_states_are_stationary(value):
    n = 8
    force = gallery.phase_field_force(n, 0.05)
    assert np.linalg.norm(force(np.full(n * n, value))) < 1e-12


def test_phase_field_zero_state_spectrum():
    n, kappa = 8, 0.05
    H = gallery.phase_field_hessian(np.zeros(n * n), n, kappa)
    ev = np.sort(np.linalg.eigvalsh(H))
    assert ev[0] == pytest.approx(-1.0, abs=1e-12)
    # Fourier symbol of the five-point Laplacian
    k = np.arange(n)
    sym = (4 - 2 * np.cos(2 * np.pi * k / n)[:, None] - 2 * np.cos(2 * np.pi * k / n)[None, :]) * n * n
    np.testing.assert_allclose(ev, np.sort((kappa * sym - 1.0).reshape(-1)), atol=1e-9)


def test_phase_field_energy_gradient_consistent():
    n, kappa = 6, 0.05
    rng = np.random.default_rng(4)
    x = rng.standard_normal(n * n) * 0.3
    E = gallery.phase_field_energy(n, kappa)
    force = gallery.phase_field_force(n, kappa)
    h = 1e-6
    num = np.array([(E(x + h * e) - E(x - h * e)) / (2 * h) for e in np.eye(n * n)])
    # force is the per-cell field; the energy sums cells with weight 1
    np.testing.assert_allclose(num, force(x), rtol=1e-5, atol=1e-6)


def test_phase_field_hessian_matches_field_derivative():
    n, kappa = 5, 0.05
    x = np.random.default_rng(1).standard_normal(n * n) * 0.5
    force = gallery.phase_field_force(n, kappa)
    h = 1e-6
    num = np.column_stack([(force(x + h * e) - force(x - h * e)) / (2 * h) for e in np.eye(n * n)])
    np.testing.assert_allclose(num, gallery.phase_field_hessian(x, n, kappa), atol=1e-4)


def random_pair(rng, n, shifted):
    a = rng.standard_normal((n, n))
    if shifted:
        b = np.roll(a, tuple(rng.integers(0, n, 2)), axis=(0, 1)) + 1e-3 * rng.standard_normal((n, n))
    else:
        b = rng.standard_normal((n, n))
    return a.reshape(-1), b.reshape(-1)


def test_loop_and_fft_predicates_agree():
    n = 6
    rng = np.random.default_rng(11)
    loop = gallery.translation_match((n, n), 0.05)
    fft = gallery.translation_match_fft((n, n), 0.99)
    for i in range(100):
        a, b = random_pair(rng, n, shifted=i % 2 == 0)
        assert loop(a, b) == fft(a, b) == (i % 2 == 0)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**31), st.integers(0, 5), st.integers(0, 5))
def test_translation_predicates_reflexive_symmetric(seed, s0, s1):
    n = 6
    rng = np.random.default_rng(seed)
    a = rng.standard_normal((n, n))
    b = np.roll(a, (s0, s1), axis=(0, 1))
    for same in (gallery.translation_match((n, n)), gallery.translation_match_fft((n, n))):
        assert same(a.reshape(-1), a.reshape(-1))
        assert same(a.reshape(-1), b.reshape(-1)) and same(b.reshape(-1), a.reshape(-1))
