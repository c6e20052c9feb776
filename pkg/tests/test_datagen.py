import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from graphpde import datagen
from graphpde.errors import ShapeMismatch, TimeNotOnGrid


def small(kind, r=16, **kw):
    return datagen.EquationSpec.default(kind, gt_grid=r, **kw)


def test_defaults():
    cd = datagen.EquationSpec.default("convdiff")
    assert (cd.D, cd.v, cd.bc, cd.gt_grid) == (0.25, (5.0, 2.0), "periodic", 128)
    assert cd.domain == (0.0, 0.0, 2 * math.pi, 2 * math.pi)
    heat = datagen.EquationSpec.default("heat")
    assert (heat.D, heat.bc, heat.domain) == (0.2, "dirichlet", (0.0, 0.0, 1.0, 1.0))
    assert datagen.EquationSpec.default("burgers").state_dim == 2
    with pytest.raises(ValueError):
        datagen.EquationSpec.default("wave")
    with pytest.raises(ValueError):
        datagen.EquationSpec("burgers", 0.1, bc="dirichlet")
    with pytest.raises(ValueError):
        datagen.EquationSpec("heat", -1.0)


def test_axes():
    xs, _ = small("convdiff", r=4).axes()
    np.testing.assert_allclose(xs, [0, math.pi / 2, math.pi, 3 * math.pi / 2])
    xs, _ = small("heat", r=5).axes()
    np.testing.assert_allclose(xs, [0, 0.25, 0.5, 0.75, 1.0])


def test_initial_condition_matches_direct_sum():
    spec = small("convdiff", r=8, fourier_N=2)
    u = datagen.sample_initial_condition(spec, 3)
    rng = np.random.default_rng(3)
    lam = rng.standard_normal((5, 5))
    gam = rng.standard_normal((5, 5))
    xs, ys = spec.axes()
    ref = np.zeros((8, 8))
    for a, k in enumerate(range(-2, 3)):
        for b, l in enumerate(range(-2, 3)):
            ph = k * xs[:, None] + l * ys[None, :]
            ref += lam[a, b] * np.cos(ph) + gam[a, b] * np.sin(ph)
    ref = (ref - ref.min()) / (ref.max() - ref.min())
    np.testing.assert_allclose(u[:, :, 0], ref, atol=1e-12)


@pytest.mark.parametrize("kind,lo,hi", [("heat", 0, 1), ("convdiff", 0, 1), ("burgers", -3, 3)])
def test_initial_condition_range(kind, lo, hi):
    spec = small(kind)
    u = datagen.sample_initial_condition(spec, 0)
    assert u.shape == (16, 16, spec.state_dim)
    for c in range(spec.state_dim):
        assert u[:, :, c].min() == pytest.approx(lo, abs=1e-12)
        assert u[:, :, c].max() == pytest.approx(hi, abs=1e-12)
    assert np.array_equal(u, datagen.sample_initial_condition(spec, 0))


def test_discrete_operators_on_fourier_modes():
    spec = small("convdiff", r=32)
    lap, dx, dy = datagen.grid_operators(spec)
    xs, ys = spec.axes()
    h = xs[1] - xs[0]
    k, l = 2, 3
    f = (np.sin(k * xs)[:, None] * np.cos(l * ys)[None, :]).ravel()
    sym = -(4 / h ** 2) * (math.sin(k * h / 2) ** 2 + math.sin(l * h / 2) ** 2)
    np.testing.assert_allclose(lap @ f, sym * f, atol=1e-10)
    fx = (np.cos(k * xs)[:, None] * np.cos(l * ys)[None, :]).ravel() * math.sin(k * h) / h
    np.testing.assert_allclose(dx @ f, fx, atol=1e-12)
    fy = -(np.sin(k * xs)[:, None] * np.sin(l * ys)[None, :]).ravel() * math.sin(l * h) / h
    np.testing.assert_allclose(dy @ f, fy, atol=1e-12)


def test_periodic_mass_conservation():
    spec = small("convdiff", r=24)
    u0 = datagen.sample_initial_condition(spec, 1)
    tr = datagen.solve_ground_truth(spec, u0, 0.01)
    mass = tr.states.reshape(tr.states.shape[0], -1).mean(axis=1)
    np.testing.assert_allclose(mass, mass[0], rtol=1e-8)


def test_heat_boundary_and_maximum_principle():
    spec = small("heat", r=20, gt_dt=1e-3)
    u0 = datagen.sample_initial_condition(spec, 2)
    tr = datagen.solve_ground_truth(spec, u0, 0.02, keep=[0.0, 0.01, 0.02])
    assert tr.steps.tolist() == [0, 10, 20]
    last = tr.states[-1, :, :, 0]
    ring = np.ones((20, 20), bool)
    ring[1:-1, 1:-1] = False
    assert np.array_equal(last[ring], u0[:, :, 0][ring])
    assert last.min() >= -1e-9 and last.max() <= 1 + 1e-9


def test_burgers_runs_and_stays_bounded():
    spec = small("burgers", r=16)
    u0 = datagen.sample_initial_condition(spec, 0)
    tr = datagen.solve_ground_truth(spec, u0, 0.016, keep=[0.016])
    assert tr.states.shape == (1, 16, 16, 2)
    assert np.abs(tr.states).max() <= 3.0 + 1e-6


def test_ground_truth_errors():
    spec = small("convdiff")
    with pytest.raises(ShapeMismatch):
        datagen.solve_ground_truth(spec, np.zeros((8, 8)), 0.01)
    with pytest.raises(TimeNotOnGrid):
        datagen.solve_ground_truth(spec, np.zeros((16, 16)), 0.01, keep=[0.00005])
    with pytest.raises(ValueError):
        datagen.solve_ground_truth(spec, np.zeros((16, 16)), 0.0)


def test_downsample_excludes_dirichlet_boundary():
    spec = small("heat", r=8, gt_dt=1e-3)
    u0 = datagen.sample_initial_condition(spec, 0)
    tr = datagen.solve_ground_truth(spec, u0, 0.002)
    pool = datagen.eligible_nodes(spec)
    assert pool.size == 36
    rec = datagen.downsample(tr, 36, [0.0, 0.002], 5)
    assert rec.coords.min() > 0 and rec.coords.max() < 1
    xs, ys = spec.axes()
    ix = np.rint(rec.coords[:, 0] / xs[1]).astype(int)
    iy = np.rint(rec.coords[:, 1] / ys[1]).astype(int)
    assert np.array_equal(rec.states[0, :, 0], u0[ix, iy, 0])
    assert np.array_equal(rec.states[1, :, 0], tr.states[2, ix, iy, 0])
    with pytest.raises(ValueError):
        datagen.downsample(tr, 37, [0.0], 5)
    with pytest.raises(TimeNotOnGrid):
        datagen.downsample(tr, 5, [0.0015], 5)


@given(st.integers(0, 2**32 - 1), st.floats(0.0, 0.05))
def test_perturbed_times_properties(seed, sigma):
    t = np.linspace(0, 0.2, 11)
    out = datagen.perturb_times(t, sigma, seed, gt_dt=2e-4)
    assert out[0] == 0.0 and out[-1] == 0.2
    assert np.all(np.diff(out) >= 2e-4 - 1e-12)
    steps = out / 2e-4
    assert np.allclose(steps, np.rint(steps), atol=1e-6)
    assert np.array_equal(out, datagen.perturb_times(t, sigma, seed, gt_dt=2e-4))


def test_perturb_times_rejects_crowding():
    with pytest.raises(ValueError):
        datagen.perturb_times(np.linspace(0, 1e-3, 20), 0.1, 0)


def test_add_noise_statistics():
    rec = datagen.SimulationRecord(np.zeros((2000, 2)), [0.0, 1.0], np.zeros((2, 2000, 1)))
    noisy = datagen.add_noise(rec, 0.02, 4)
    assert abs(noisy.states.std() - 0.02) < 0.001
    assert not rec.states.any()
    assert np.array_equal(datagen.add_noise(rec, 0.0, 4).states, rec.states)


def test_regular_times():
    np.testing.assert_allclose(datagen.regular_times(0, 0.2, 0.02), np.linspace(0, 0.2, 11), atol=1e-15)
    with pytest.raises(ValueError):
        datagen.regular_times(0, 0.2, 0.03)


def test_record_validation():
    with pytest.raises(ShapeMismatch):
        datagen.SimulationRecord(np.zeros((3, 2)), [0.0, 1.0], np.zeros((2, 4, 1)))
    with pytest.raises(ValueError):
        datagen.SimulationRecord(np.zeros((3, 2)), [1.0, 0.0], np.zeros((2, 3, 1)))
    rec = datagen.SimulationRecord(np.zeros((3, 2)), [0.0, 1.0], np.zeros((2, 3)))
    assert rec.state_dim == 1


def test_generate_dataset_is_prefix_stable_and_deterministic():
    spec = small("convdiff", r=16)
    t = datagen.regular_times(0.0, 0.004, 0.002)
    a = datagen.generate_dataset(spec, 2, 20, t, seed=9)
    b = datagen.generate_dataset(spec, 3, 20, t, seed=9)
    for ra, rb in zip(a.simulations, b.simulations):
        assert np.array_equal(ra.coords, rb.coords)
        assert np.array_equal(ra.states, rb.states)
    assert not np.array_equal(b.simulations[0].coords, b.simulations[1].coords)
    assert a.metadata["seed"] == "9" and a.metadata["gt_grid"] == "16"


def test_generate_dataset_irregular_times_differ_per_simulation():
    spec = small("convdiff", r=16)
    t = datagen.regular_times(0.0, 0.01, 0.002)
    ds = datagen.generate_dataset(spec, 2, 10, t, seed=1, noise=0.01, time_sigma=0.001)
    t0, t1 = ds.simulations[0].times, ds.simulations[1].times
    assert t0[0] == 0.0 and t0[-1] == 0.01
    assert not np.array_equal(t0, t1)
