import numpy as np
import pytest

from graphpde import datagen, mpnn, odeint, train_eval as te
from graphpde.errors import ShapeMismatch, TimeMisalignment, ZeroReference

EULER = odeint.SolverConfig(method="euler", h_init=0.02)


@pytest.fixture(scope="module")
def tiny():
    spec = datagen.EquationSpec.default("convdiff", gt_grid=16)
    ds = datagen.generate_dataset(spec, 2, 15, datagen.regular_times(0, 0.04, 0.02), seed=3)
    cfg = mpnn.SurrogateConfig(hidden_width=8, message_dim=6)
    return ds, mpnn.Model.init(cfg, 0)


def test_relative_error_hand_values():
    obs = np.array([[[1.0], [0.0]], [[3.0], [4.0]]])
    pred = np.array([[[1.0], [0.0]], [[3.0], [3.0]]])
    assert te.relative_error(pred, obs, 1) == pytest.approx(0.2)
    assert te.relative_error(pred, obs, 0) == 0.0
    vec_o = np.array([[[3.0, 4.0]]])
    vec_p = np.array([[[4.0, 3.0]]])
    assert te.relative_error(vec_p, vec_o, 0, magnitude=True) == 0.0
    assert te.relative_error(vec_p, vec_o, 0) == pytest.approx(np.sqrt(2) / 5)
    with pytest.raises(ZeroReference):
        te.relative_error(obs, np.zeros_like(obs), 0)
    with pytest.raises(ShapeMismatch):
        te.relative_error(obs[:, :1], obs, 0)


def test_mse_loss_skips_initial_time(tiny):
    ds, _ = tiny
    rec = ds.simulations[0]
    states = rec.states.copy()
    states[0] += 10.0
    states[2] += 0.5
    pred = odeint.Trajectory(rec.times, states)
    assert te.mse_loss(pred, rec) == pytest.approx(0.25 * rec.n_nodes / 3)
    with pytest.raises(TimeMisalignment):
        te.mse_loss(odeint.Trajectory(rec.times + 1e-3, states), rec)


def test_train_config_validation():
    with pytest.raises(ValueError):
        te.TrainConfig(iterations=0)
    with pytest.raises(ValueError):
        te.TrainConfig(grad_mode="backprop")
    with pytest.raises(ValueError):
        te.TrainConfig(grad_mode="magic")
    echo = te.TrainConfig(solver=EULER, grad_mode="backprop").echo()
    assert echo["solver_method"] == "'euler'" and echo["iterations"] == "5000"


def test_training_reduces_loss_and_is_deterministic(tiny):
    ds, model = tiny
    tcfg = te.TrainConfig(iterations=40, solver=EULER, grad_mode="backprop")
    seen = []
    m1, r1 = te.train(ds, model, tcfg, callback=lambda i, loss: seen.append(i))
    m2, r2 = te.train(ds, model, tcfg)
    assert r1.n_iterations == 40 and seen == list(range(40))
    assert r1.losses[-1] < r1.losses[0]
    assert np.array_equal(m1.params, m2.params)
    assert r1.losses == r2.losses
    assert not np.array_equal(m1.params, model.params)
    assert m1.metadata["train_iterations_run"] == "40"
    lines = r1.to_csv().splitlines()
    assert lines[0] == "iteration,loss,wall_ms" and len(lines) == 41


def test_training_threads_match_serial(tiny):
    ds, model = tiny
    a = te.TrainConfig(iterations=5, solver=EULER, grad_mode="backprop")
    b = te.TrainConfig(iterations=5, solver=EULER, grad_mode="backprop", n_workers=2)
    assert np.array_equal(te.train(ds, model, a)[0].params, te.train(ds, model, b)[0].params)


def test_adjoint_training_step(tiny):
    ds, model = tiny
    tcfg = te.TrainConfig(iterations=2, solver=odeint.SolverConfig(rtol=1e-5, atol=1e-5))
    _, rep = te.train(ds, model, tcfg)
    assert rep.n_iterations == 2 and np.isfinite(rep.losses).all()


def test_early_stopping(tiny):
    ds, model = tiny
    tcfg = te.TrainConfig(iterations=50, solver=EULER, grad_mode="backprop", patience=3,
                          min_improvement=1e9)
    _, rep = te.train(ds, model, tcfg)
    assert rep.stopped_early and rep.n_iterations == 4


def test_batches(tiny):
    ds, model = tiny
    only0 = te.TrainConfig(iterations=3, solver=EULER, grad_mode="backprop", batch=(0,))
    sub = datagen.Dataset(ds.equation, ds.simulations[:1])
    full = te.TrainConfig(iterations=3, solver=EULER, grad_mode="backprop")
    assert np.array_equal(te.train(ds, model, only0)[0].params, te.train(sub, model, full)[0].params)
    sized = te.TrainConfig(iterations=3, solver=EULER, grad_mode="backprop", batch_size=1, seed=4)
    assert te.train(ds, model, sized)[1].n_iterations == 3
    with pytest.raises(ValueError):
        te.train(ds, model, te.TrainConfig(iterations=1, solver=EULER, grad_mode="backprop", batch=(5,)))


def test_state_dimension_mismatch(tiny):
    ds, _ = tiny
    with pytest.raises(ShapeMismatch):
        te.train(ds, mpnn.Model.init(mpnn.SurrogateConfig(state_dim=2, hidden_width=4, message_dim=3), 0),
                 te.TrainConfig(iterations=1))


def test_evaluate_and_reports(tiny):
    ds, model = tiny
    rep = te.evaluate(ds, model, EULER)
    assert len(rep.errors) == 2 and rep.errors[0].shape == (2,)
    traj = te.predict(model, ds.simulations[1], EULER)
    want = te.relative_error(traj.states, ds.simulations[1].states, 2)
    assert rep.errors[1][1] == want
    assert rep.mean == pytest.approx(np.mean(rep.sim_means))
    assert rep.max_time_mean.shape == (2,)
    lines = rep.to_csv().splitlines()
    assert lines[0] == "sim_id,t,rel_err" and len(lines) == 5
    assert lines[1].startswith("0,0.02")
    assert "mean relative error" in rep.summary()


def test_cross_grid_matrix(tiny):
    ds, model = tiny
    other = mpnn.Model.init(model.cfg, 1)
    mat = te.cross_grid_eval([model, other], [ds], EULER)
    assert mat.shape == (1, 2)
    assert mat[0, 0] == te.evaluate(ds, model, EULER).mean
    csv = te.matrix_csv(mat, ["a"], ["m0", "m1"])
    assert csv.splitlines()[0] == "grid\\model,m0,m1"


def test_run_ablation_small():
    spec = datagen.EquationSpec.default("convdiff", gt_grid=16)
    base = te.AblationConfig(equation=spec, n_train=1, n_test=1, n_nodes=12, t_end=0.04, n_times=3,
                             model=mpnn.SurrogateConfig(hidden_width=4, message_dim=3),
                             train=te.TrainConfig(iterations=2, solver=EULER, grad_mode="backprop"))
    rep = te.run_ablation("edge_features", base)
    assert rep.settings == [True, False]
    assert len(rep.models) == 2 and rep.test_sets[0] is rep.test_sets[1]
    assert rep.models[1].cfg.use_edge_features is False
    assert rep.summary_csv().splitlines()[0] == "setting,mean_rel_err,std_rel_err,final_train_loss"
    grid = te.run_ablation("grid_size", base, values=[12, 6])
    assert [d.simulations[0].n_nodes for d in grid.test_sets] == [12, 6]
    with pytest.raises(ValueError):
        te.run_ablation("depth", base)
