"""Loss, error metrics, the training loop and the experiment runners."""

from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, replace
import io
import math
import time

import numpy as np

from . import datagen, nn, odeint
from .errors import ShapeMismatch, TimeMisalignment, ZeroReference
from .geometry import graph_from_coords
from .mpnn import Model, SurrogateConfig, plan_for

GRAD_MODES = ("adjoint", "backprop")


# -- metrics -------------------------------------------------------------


def mse_loss(pred, obs):
    """Mean over the ``M + 1`` observation times of the squared state error.

    ``pred`` is an :class:`~graphpde.odeint.Trajectory` and ``obs`` a
    :class:`~graphpde.datagen.SimulationRecord`; the ``t_0`` term is skipped
    since the prediction starts from the observation.
    """
    if pred.times.shape != obs.times.shape or np.any(np.abs(pred.times - obs.times) > 1e-9):
        raise TimeMisalignment("prediction and observation times differ")
    p = np.asarray(pred.states, dtype=np.float64).reshape(obs.states.shape)
    r = p[1:] - obs.states[1:]
    return float(np.sum(r * r)) / obs.times.size


def _error_field(states, vector_magnitude):
    s = np.asarray(states, dtype=np.float64)
    if vector_magnitude:
        return np.sqrt(np.sum(s * s, axis=-1))
    return s


def relative_error(pred_states, obs_states, t_index, magnitude=False):
    """``||y(t_i) - u(t_i)|| / ||y(t_i)||`` over all node and state entries.

    With ``magnitude=True`` (used for Burgers) both fields are first reduced
    to their per-node vector magnitude.
    """
    p = np.asarray(pred_states, dtype=np.float64)
    o = np.asarray(obs_states, dtype=np.float64)
    if p.shape != o.shape:
        raise ShapeMismatch(f"prediction shape {p.shape} differs from observation shape {o.shape}")
    y = _error_field(o[t_index], magnitude)
    u = _error_field(p[t_index], magnitude)
    denom = np.linalg.norm(y.ravel())
    if denom == 0.0:
        raise ZeroReference(f"observed state at index {t_index} is identically zero")
    return float(np.linalg.norm((y - u).ravel()) / denom)


# -- training ------------------------------------------------------------


@dataclass(frozen=True)
class TrainConfig:
    """Training settings.

    ``batch`` lists simulation indices (default all).  With ``batch_size``
    set, each iteration draws that many of them without replacement.
    Training stops early once the loss has not improved by at least
    ``min_improvement`` for ``patience`` iterations.
    """

    iterations: int = 5000
    batch: tuple = None
    batch_size: int = None
    solver: odeint.SolverConfig = odeint.SolverConfig()
    grad_mode: str = "adjoint"
    seed: int = 0
    patience: int = 500
    min_improvement: float = 1e-10
    step_init: float = 1e-6
    step_min: float = 1e-9
    step_max: float = 1e-3
    eta_plus: float = 1.2
    eta_minus: float = 0.5
    n_workers: int = 1

    def __post_init__(self):
        if self.iterations <= 0:
            raise ValueError("iterations must be positive")
        if self.grad_mode not in GRAD_MODES:
            raise ValueError(f"grad_mode must be one of {GRAD_MODES}")
        if self.grad_mode == "backprop" and self.solver.method == "dopri5":
            raise ValueError("backprop gradients need a fixed-step solver")
        if self.batch is not None and len(self.batch) == 0:
            raise ValueError("batch must not be empty")
        if self.batch_size is not None and self.batch_size <= 0:
            raise ValueError("batch_size must be positive")

    def echo(self):
        """Flat ``key=value`` description, solver settings prefixed ``solver_``."""
        out = {}
        for k, v in asdict(self).items():
            if k == "solver":
                out.update({f"solver_{sk}": repr(sv) for sk, sv in v.items()})
            else:
                out[k] = repr(v)
        return out


@dataclass
class TrainReport:
    losses: list = field(default_factory=list)
    wall_ms: list = field(default_factory=list)
    stopped_early: bool = False
    config: dict = field(default_factory=dict)

    @property
    def n_iterations(self):
        return len(self.losses)

    def to_csv(self):
        buf = io.StringIO()
        buf.write("iteration,loss,wall_ms\n")
        for i, (loss, ms) in enumerate(zip(self.losses, self.wall_ms)):
            buf.write(f"{i},{loss!r},{ms:.3f}\n")
        return buf.getvalue()


def simulation_graphs(dataset):
    """One neighbour graph per simulation, with the evaluation plan prebuilt."""
    return [graph_from_coords(s.coords) for s in dataset.simulations]


def simulation_gradient(graph, cfg, params, record, solver, grad_mode):
    """``(loss, grad)`` of one simulation's trajectory loss."""
    y = record.states
    if grad_mode == "adjoint":
        return odeint.adjoint_gradient(graph, cfg, params, y[0], record.times, y, solver)
    return odeint.discrete_gradient(graph, cfg, params, y[0], record.times, y, solver)


def train(dataset, model, tcfg, graphs=None, callback=None):
    """Fit ``model`` to ``dataset`` with iRprop-.

    Each iteration sums the per-simulation gradients in index order and takes
    one Rprop step.  The recorded loss is the batch mean at the parameters
    before the step.  Returns ``(Model, TrainReport)``; the input model is
    not modified.

    ``callback(iteration, loss)`` is called after every iteration when given.
    """
    if dataset.state_dim != model.cfg.state_dim:
        raise ShapeMismatch("model and dataset state dimensions differ")
    batch = list(range(len(dataset))) if tcfg.batch is None else list(tcfg.batch)
    if not batch or min(batch) < 0 or max(batch) >= len(dataset):
        raise ValueError("batch indices out of range")
    if graphs is None:
        graphs = simulation_graphs(dataset)
    for g in graphs:
        plan_for(g, model.cfg)
    rng = np.random.default_rng(tcfg.seed)
    state = nn.RpropState.create(model.params.size, tcfg.step_init, tcfg.eta_plus, tcfg.eta_minus,
                                 tcfg.step_min, tcfg.step_max)
    params = model.params.copy()
    report = TrainReport(config=tcfg.echo())
    best = math.inf
    stale = 0
    pool = ThreadPoolExecutor(tcfg.n_workers) if tcfg.n_workers > 1 else None
    try:
        for it in range(tcfg.iterations):
            t0 = time.perf_counter()
            chosen = batch
            if tcfg.batch_size is not None and tcfg.batch_size < len(batch):
                chosen = sorted(rng.choice(batch, size=tcfg.batch_size, replace=False).tolist())

            def work(i, p=params):
                return simulation_gradient(graphs[i], model.cfg, p, dataset.simulations[i],
                                           tcfg.solver, tcfg.grad_mode)

            results = list(pool.map(work, chosen)) if pool else [work(i) for i in chosen]
            grad = np.zeros_like(params)
            loss = 0.0
            for li, gi in results:
                grad += gi
                loss += li
            loss /= len(chosen)
            params = nn.rprop_step(state, params, grad)
            report.losses.append(loss)
            report.wall_ms.append((time.perf_counter() - t0) * 1e3)
            if callback is not None:
                callback(it, loss)
            if loss < best - tcfg.min_improvement:
                best = loss
                stale = 0
            else:
                stale += 1
                if stale >= tcfg.patience:
                    report.stopped_early = True
                    break
    finally:
        if pool is not None:
            pool.shutdown()
    meta = dict(model.metadata)
    meta.update({f"train_{k}": v for k, v in report.config.items()})
    meta["train_iterations_run"] = str(report.n_iterations)
    return Model(model.cfg, params, meta), report


# -- evaluation ----------------------------------------------------------


@dataclass
class EvalReport:
    """Per-simulation relative errors at every observation time after ``t_0``."""

    times: list
    errors: list
    wall_s: list

    @property
    def sim_means(self):
        return np.array([float(np.mean(e)) for e in self.errors])

    @property
    def mean(self):
        return float(np.mean(np.concatenate(self.errors)))

    @property
    def std(self):
        """Standard deviation of the per-simulation time-averaged errors."""
        return float(np.std(self.sim_means))

    @property
    def max_time_mean(self):
        """Mean error over simulations at each time index."""
        return np.mean(np.stack(self.errors), axis=0)

    def to_csv(self):
        buf = io.StringIO()
        buf.write("sim_id,t,rel_err\n")
        for s, (ts, es) in enumerate(zip(self.times, self.errors)):
            for t, e in zip(ts, es):
                buf.write(f"{s},{float(t)!r},{float(e)!r}\n")
        return buf.getvalue()

    def summary(self):
        return f"mean relative error {self.mean:.6g} +- {self.std:.3g} over {len(self.errors)} simulations"


def predict(model, record, solver, graph=None):
    """Roll the model out from ``record``'s first state across its times."""
    if graph is None:
        graph = graph_from_coords(record.coords)
    return odeint.integrate(model.surrogate(graph), record.states[0], record.times, solver)


def evaluate(dataset, model, solver, graphs=None):
    if dataset.state_dim != model.cfg.state_dim:
        raise ShapeMismatch("model and dataset state dimensions differ")
    magnitude = dataset.equation.kind == "burgers"
    times, errors, wall = [], [], []
    for i, rec in enumerate(dataset.simulations):
        t0 = time.perf_counter()
        g = graphs[i] if graphs is not None else None
        traj = predict(model, rec, solver, g)
        errs = [relative_error(traj.states, rec.states, k, magnitude) for k in range(1, rec.times.size)]
        times.append(rec.times[1:].copy())
        errors.append(np.array(errs))
        wall.append(time.perf_counter() - t0)
    return EvalReport(times, errors, wall)


def cross_grid_eval(models, datasets, solver):
    """Matrix of mean errors; entry ``[g, m]`` is model ``m`` on dataset ``g``."""
    dims = {m.cfg.state_dim for m in models}
    if len(dims) > 1:
        raise ShapeMismatch("models have different state dimensions")
    out = np.empty((len(datasets), len(models)))
    for gi, ds in enumerate(datasets):
        graphs = simulation_graphs(ds)
        for mi, m in enumerate(models):
            out[gi, mi] = evaluate(ds, m, solver, graphs).mean
    return out


def matrix_csv(matrix, row_labels, col_labels, corner="grid\\model"):
    buf = io.StringIO()
    buf.write(",".join([corner] + [str(c) for c in col_labels]) + "\n")
    for lab, row in zip(row_labels, matrix):
        buf.write(",".join([str(lab)] + [repr(float(v)) for v in row]) + "\n")
    return buf.getvalue()


# -- ablations -----------------------------------------------------------

ABLATIONS = ("grid_size", "time_step", "irregular_time", "data_amount", "noise", "edge_features")

DEFAULT_AXES = {
    "grid_size": (500, 250, 125),
    "time_step": (11, 4, 2),
    "irregular_time": (0.0, 0.02 / 6),
    "data_amount": (8, 4, 1),
    "noise": (0.0, 0.01, 0.02, 0.04),
    "edge_features": (True, False),
}


@dataclass(frozen=True)
class AblationConfig:
    """Base experiment that each ablation setting modifies along one axis."""

    equation: datagen.EquationSpec = field(default_factory=lambda: datagen.EquationSpec.default("convdiff"))
    n_train: int = 8
    n_test: int = 10
    n_nodes: int = 250
    t_end: float = 0.2
    n_times: int = 11
    test_t_end: float = None
    test_n_times: int = None
    model: SurrogateConfig = SurrogateConfig()
    train: TrainConfig = TrainConfig()
    eval_solver: odeint.SolverConfig = None
    seed: int = 0
    init_seed: int = 0


@dataclass
class AblationReport:
    kind: str
    settings: list
    reports: list
    train_reports: list
    models: list = field(default_factory=list)
    test_sets: list = field(default_factory=list)

    @property
    def means(self):
        return [r.mean for r in self.reports]

    def to_csv(self):
        buf = io.StringIO()
        buf.write("setting,sim_id,t,rel_err\n")
        for s, rep in zip(self.settings, self.reports):
            for sid, (ts, es) in enumerate(zip(rep.times, rep.errors)):
                for t, e in zip(ts, es):
                    buf.write(f"{s},{sid},{float(t)!r},{float(e)!r}\n")
        return buf.getvalue()

    def summary_csv(self):
        buf = io.StringIO()
        buf.write("setting,mean_rel_err,std_rel_err,final_train_loss\n")
        for s, rep, tr in zip(self.settings, self.reports, self.train_reports):
            buf.write(f"{s},{rep.mean!r},{rep.std!r},{float(tr.losses[-1])!r}\n")
        return buf.getvalue()


def _times(t_end, n_times):
    return np.linspace(0.0, t_end, n_times)


def _snap(spec, t):
    return np.rint(np.asarray(t) / spec.gt_dt) * spec.gt_dt


def run_ablation(kind, base=AblationConfig(), values=None, progress=None):
    """Train and evaluate one model per setting along ``kind``.

    Training and test simulations use disjoint seed streams.  Unless the axis
    changes them, every setting sees the same training initial conditions,
    node sets and test set, and starts from the same initial parameters.
    """
    if kind not in ABLATIONS:
        raise ValueError(f"unknown ablation {kind!r}; expected one of {ABLATIONS}")
    values = DEFAULT_AXES[kind] if values is None else tuple(values)
    spec = base.equation
    train_seed, test_seed = np.random.SeedSequence(base.seed).spawn(2)
    t_train = _snap(spec, _times(base.t_end, base.n_times))
    test_t_end = base.t_end if base.test_t_end is None else base.test_t_end
    test_n = base.n_times if base.test_n_times is None else base.test_n_times
    t_test = _snap(spec, _times(test_t_end, test_n))
    solver = base.eval_solver or base.train.solver

    shared_test = None
    out = AblationReport(kind, [], [], [])
    for value in values:
        n_nodes, n_train, times, noise, sigma_t = base.n_nodes, base.n_train, t_train, 0.0, 0.0
        cfg = base.model
        if kind == "grid_size":
            n_nodes = int(value)
        elif kind == "time_step":
            times = _snap(spec, _times(base.t_end, int(value)))
        elif kind == "irregular_time":
            sigma_t = float(value)
        elif kind == "data_amount":
            n_train = int(value)
        elif kind == "noise":
            noise = float(value)
        else:
            cfg = replace(cfg, use_edge_features=bool(value))
        train_ds = datagen.generate_dataset(spec, n_train, n_nodes, times, train_seed,
                                            noise=noise, time_sigma=sigma_t)
        if kind == "grid_size":
            test_ds = datagen.generate_dataset(spec, base.n_test, n_nodes, t_test, test_seed)
        else:
            if shared_test is None:
                shared_test = datagen.generate_dataset(spec, base.n_test, base.n_nodes, t_test, test_seed)
            test_ds = shared_test
        model = Model.init(cfg, base.init_seed)
        trained, trep = train(train_ds, model, base.train)
        rep = evaluate(test_ds, trained, solver)
        out.settings.append(value)
        out.reports.append(rep)
        out.train_reports.append(trep)
        out.models.append(trained)
        out.test_sets.append(test_ds)
        if progress is not None:
            progress(kind, value, rep, trep)
    return out
