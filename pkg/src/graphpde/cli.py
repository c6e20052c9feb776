"""Command line front end: ``graphpde {generate,train,eval,plot,export,ablate}``.

Exit codes: 0 success, 1 runtime failure, 2 usage error.  Failures print a
single ``error: <code>: <message>`` line on standard error.
"""

import argparse
import csv
import io
import os
import shlex
import sys

import numpy as np

from . import __version__, datagen, fileio, odeint, render
from .errors import GraphPDEError, ShapeMismatch
from .geometry import graph_from_coords
from .mpnn import Model, SurrogateConfig
from .train_eval import (ABLATIONS, AblationConfig, TrainConfig, cross_grid_eval, evaluate,
                         matrix_csv, predict, relative_error, run_ablation, train)


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _float_list(text):
    try:
        return [float(s) for s in text.split(",") if s.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from exc


def _provenance(argv):
    return {"command": "graphpde " + shlex.join(argv), "graphpde_version": __version__}


def _solver_args(p, method=None, rtol=None, atol=None):
    p.add_argument("--solver", choices=odeint.METHODS, default=method)
    p.add_argument("--rtol", type=float, default=rtol)
    p.add_argument("--atol", type=float, default=atol)
    p.add_argument("--h-init", type=float, default=None,
                   help="initial step (dopri5) or maximum fixed step (euler, rk4)")


def _solver_from(args, fallback=None):
    base = fallback or odeint.SolverConfig()
    kw = {}
    if args.solver is not None:
        kw["method"] = args.solver
    if args.rtol is not None:
        kw["rtol"] = args.rtol
    if args.atol is not None:
        kw["atol"] = args.atol
    if args.h_init is not None:
        kw["h_init"] = args.h_init
    try:
        return odeint.SolverConfig(**{**base.__dict__, **kw})
    except ValueError as exc:
        raise UsageError(str(exc)) from exc


def _solver_from_metadata(meta):
    try:
        return odeint.SolverConfig(
            method=eval_literal(meta["train_solver_method"]),
            rtol=float(meta["train_solver_rtol"]), atol=float(meta["train_solver_atol"]),
            h_init=float(meta["train_solver_h_init"]), h_min=float(meta["train_solver_h_min"]),
            h_max=float(meta["train_solver_h_max"]), max_steps=int(meta["train_solver_max_steps"]))
    except (KeyError, ValueError):
        return None


def eval_literal(text):
    return text[1:-1] if len(text) >= 2 and text[0] == text[-1] and text[0] in "'\"" else text


def build_parser():
    p = _Parser(prog="graphpde", description="Learn PDE dynamics on Delaunay graphs.")
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    g = sub.add_parser("generate", help="simulate ground truth and write a dataset")
    g.add_argument("--equation", choices=datagen.KINDS, required=True)
    g.add_argument("--sims", type=int, required=True)
    g.add_argument("--nodes", type=int, required=True)
    g.add_argument("--t0", type=float, default=0.0)
    g.add_argument("--t1", type=float)
    g.add_argument("--dt", type=float)
    g.add_argument("--times", type=_float_list)
    g.add_argument("--seed", type=int, required=True)
    g.add_argument("--out", required=True)
    g.add_argument("--noise", type=float, default=0.0)
    g.add_argument("--perturb-times", type=float, default=0.0)
    g.add_argument("--gt-grid", type=int)
    g.add_argument("--gt-dt", type=float)

    t = sub.add_parser("train", help="fit a model to a dataset")
    t.add_argument("--data", required=True)
    t.add_argument("--out", required=True)
    t.add_argument("--loss-csv", help="loss history path (default: <out>.loss.csv)")
    t.add_argument("--iters", type=int, default=5000)
    _solver_args(t, "dopri5", 1e-7, 1e-7)
    t.add_argument("--grad", choices=("adjoint", "backprop"), default="adjoint")
    t.add_argument("--seed", type=int, default=0)
    t.add_argument("--no-edge-features", action="store_true")
    t.add_argument("--hidden", type=int, default=60)
    t.add_argument("--message", type=int, default=40)
    t.add_argument("--workers", type=int, default=1)

    e = sub.add_parser("eval", help="relative errors of models on datasets")
    e.add_argument("--model", nargs="+", required=True)
    e.add_argument("--data", nargs="+", required=True)
    e.add_argument("--out", required=True)
    e.add_argument("--cross-grid", action="store_true")
    _solver_args(e)

    pl = sub.add_parser("plot", help="heatmaps of true and predicted fields")
    pl.add_argument("--data", required=True)
    pl.add_argument("--model")
    pl.add_argument("--sim", type=int, required=True)
    pl.add_argument("--times", type=_float_list, required=True)
    pl.add_argument("--out", required=True)
    _solver_args(pl)

    x = sub.add_parser("export", help="dump a dataset as CSV")
    x.add_argument("--data", required=True)
    x.add_argument("--csv", required=True)

    a = sub.add_parser("ablate", help="run one ablation study")
    a.add_argument("--kind", choices=ABLATIONS, required=True)
    a.add_argument("--values", type=_float_list)
    a.add_argument("--equation", choices=datagen.KINDS, default="convdiff")
    a.add_argument("--sims", type=int, default=8)
    a.add_argument("--test-sims", type=int, default=10)
    a.add_argument("--nodes", type=int, default=250)
    a.add_argument("--iters", type=int, default=1000)
    a.add_argument("--seed", type=int, default=0)
    a.add_argument("--grad", choices=("adjoint", "backprop"), default="backprop")
    _solver_args(a, "euler", 1e-7, 1e-7)
    a.add_argument("--out", required=True)
    return p


def _write_text(path, text):
    fileio.write_atomic(path, text.encode("utf-8"))


def cmd_generate(args, argv):
    if args.times is not None:
        times = np.asarray(args.times, dtype=np.float64)
    elif args.t1 is not None and args.dt is not None:
        try:
            times = datagen.regular_times(args.t0, args.t1, args.dt)
        except ValueError as exc:
            raise UsageError(str(exc)) from exc
    else:
        raise UsageError("give either --times or both --t1 and --dt")
    if args.sims < 1 or args.nodes < 3:
        raise UsageError("--sims must be >= 1 and --nodes >= 3")
    if args.noise < 0 or args.perturb_times < 0:
        raise UsageError("--noise and --perturb-times must be non-negative")
    overrides = {}
    if args.gt_grid is not None:
        overrides["gt_grid"] = args.gt_grid
    if args.gt_dt is not None:
        overrides["gt_dt"] = args.gt_dt
    try:
        spec = datagen.EquationSpec.default(args.equation, **overrides)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    ds = datagen.generate_dataset(spec, args.sims, args.nodes, times, args.seed,
                                  noise=args.noise, time_sigma=args.perturb_times)
    ds.metadata.update(_provenance(argv))
    fileio.write_dataset(args.out, ds)
    print(f"generated {args.sims} simulations x {args.nodes} nodes x {times.size} times "
          f"(equation {args.equation}, seed {args.seed}) -> {args.out}")


def cmd_train(args, argv):
    ds = fileio.read_dataset(args.data)
    cfg = SurrogateConfig(state_dim=ds.state_dim, hidden_width=args.hidden, message_dim=args.message,
                          use_edge_features=not args.no_edge_features)
    solver = _solver_from(args)
    try:
        tcfg = TrainConfig(iterations=args.iters, solver=solver, grad_mode=args.grad, seed=args.seed,
                           n_workers=max(1, args.workers))
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    print(f"config: hidden={cfg.hidden_width} message={cfg.message_dim} "
          f"edge_features={cfg.use_edge_features} params={cfg.n_params} solver={solver.method} "
          f"rtol={solver.rtol:g} atol={solver.atol:g} grad={args.grad} iters={args.iters} seed={args.seed}")
    model = Model.init(cfg, args.seed)
    trained, report = train(ds, model, tcfg)
    trained.metadata.update(_provenance(argv))
    trained.metadata["data"] = os.path.basename(args.data)
    fileio.write_model(args.out, trained)
    _write_text(args.loss_csv or args.out + ".loss.csv", report.to_csv())
    stop = " (early stop)" if report.stopped_early else ""
    print(f"trained {report.n_iterations} iterations{stop}; final loss {report.losses[-1]:.6g} -> {args.out}")


def cmd_eval(args, argv):
    models = [fileio.read_model(p) for p in args.model]
    datasets = [fileio.read_dataset(p) for p in args.data]
    solver = _solver_from(args, _solver_from_metadata(models[0].metadata))
    for m in models:
        for d in datasets:
            if m.cfg.state_dim != d.state_dim:
                raise ShapeMismatch(f"model state dimension {m.cfg.state_dim} differs from data {d.state_dim}")
    if args.cross_grid:
        mat = cross_grid_eval(models, datasets, solver)
        labels_d = [os.path.basename(p) for p in args.data]
        labels_m = [os.path.basename(p) for p in args.model]
        _write_text(args.out, matrix_csv(mat, labels_d, labels_m))
        for lab, row in zip(labels_d, mat):
            print(lab + ": " + " ".join(f"{v:.6g}" for v in row))
        return
    if len(models) != 1 or len(datasets) != 1:
        raise UsageError("without --cross-grid give exactly one --model and one --data")
    rep = evaluate(datasets[0], models[0], solver)
    _write_text(args.out, rep.to_csv())
    print(rep.summary())


def _time_indices(record, times):
    idx = []
    for t in times:
        hit = np.nonzero(np.abs(record.times - t) <= 1e-9)[0]
        if hit.size == 0:
            raise GraphPDEError(f"time {t} is not an observation time of this simulation")
        idx.append(int(hit[0]))
    return idx


def cmd_plot(args, argv):
    ds = fileio.read_dataset(args.data)
    if not 0 <= args.sim < len(ds):
        raise GraphPDEError(f"simulation {args.sim} out of range [0, {len(ds)})")
    rec = ds.simulations[args.sim]
    idx = _time_indices(rec, args.times)
    magnitude = ds.equation.kind == "burgers"
    truth = np.sqrt(np.sum(rec.states ** 2, axis=-1)) if magnitude else rec.states[:, :, 0]
    pred = None
    if args.model:
        model = fileio.read_model(args.model)
        if model.cfg.state_dim != ds.state_dim:
            raise ShapeMismatch("model and data state dimensions differ")
        solver = _solver_from(args, _solver_from_metadata(model.metadata))
        traj = predict(model, rec, solver, graph_from_coords(rec.coords))
        p = traj.states.reshape(rec.states.shape)
        pred = np.sqrt(np.sum(p ** 2, axis=-1)) if magnitude else p[:, :, 0]
    os.makedirs(args.out, exist_ok=True)
    owner = render.pixel_owner(rec.coords, ds.equation.domain)
    written = 0
    for k in idx:
        t = rec.times[k]
        lo, hi = float(truth[k].min()), float(truth[k].max())
        tag = f"sim{args.sim:03d}_t{t:.6f}"
        fileio.write_atomic(os.path.join(args.out, f"true_{tag}.ppm"),
                            render.ppm_bytes(render.heatmap(truth[k], owner, lo, hi)))
        written += 1
        if pred is not None:
            diff = np.abs(pred[k] - truth[k])
            fileio.write_atomic(os.path.join(args.out, f"pred_{tag}.ppm"),
                                render.ppm_bytes(render.heatmap(pred[k], owner, lo, hi)))
            fileio.write_atomic(os.path.join(args.out, f"diff_{tag}.ppm"),
                                render.ppm_bytes(render.heatmap(diff, owner, 0.0, float(diff.max()))))
            written += 2
    if pred is not None:
        lines = ["sim_id,t,rel_err"]
        full = traj.states.reshape(rec.states.shape)
        for k in range(1, rec.times.size):
            lines.append(f"{args.sim},{rec.times[k]!r},{relative_error(full, rec.states, k, magnitude)!r}")
        _write_text(os.path.join(args.out, f"errors_sim{args.sim:03d}.csv"), "\n".join(lines) + "\n")
    print(f"wrote {written} images to {args.out}")


def cmd_export(args, argv):
    ds = fileio.read_dataset(args.data)
    d = ds.state_dim
    rows = []
    for s, rec in enumerate(ds.simulations):
        for k, t in enumerate(rec.times):
            for i in range(rec.n_nodes):
                rows.append([s, repr(float(t)), i, repr(float(rec.coords[i, 0])), repr(float(rec.coords[i, 1]))]
                            + [repr(float(v)) for v in rec.states[k, i]])
    header = ["sim_id", "t", "node", "x", "y"] + [f"u{c}" for c in range(d)]
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    _write_text(args.csv, buf.getvalue())
    print(f"exported {len(ds)} simulations -> {args.csv}")


def cmd_ablate(args, argv):
    solver = _solver_from(args, odeint.SolverConfig(method="euler", h_init=0.02))
    try:
        tcfg = TrainConfig(iterations=args.iters, solver=solver, grad_mode=args.grad, seed=args.seed)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    spec = datagen.EquationSpec.default(args.equation)
    base = AblationConfig(equation=spec, n_train=args.sims, n_test=args.test_sims, n_nodes=args.nodes,
                          model=SurrogateConfig(state_dim=spec.state_dim), train=tcfg, seed=args.seed)
    values = None
    if args.values is not None:
        values = [bool(v) for v in args.values] if args.kind == "edge_features" else args.values
        if args.kind in ("grid_size", "time_step", "data_amount"):
            values = [int(v) for v in args.values]

    def progress(kind, value, rep, trep):
        print(f"{kind}={value}: {rep.summary()}", flush=True)

    report = run_ablation(args.kind, base, values, progress)
    os.makedirs(args.out, exist_ok=True)
    _write_text(os.path.join(args.out, f"{args.kind}.csv"), report.to_csv())
    _write_text(os.path.join(args.out, f"{args.kind}_summary.csv"), report.summary_csv())


COMMANDS = {"generate": cmd_generate, "train": cmd_train, "eval": cmd_eval, "plot": cmd_plot,
            "export": cmd_export, "ablate": cmd_ablate}


def _one_line(exc):
    return " ".join(str(exc).split())


def main(argv=None):
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        args = build_parser().parse_args(argv)
        COMMANDS[args.command](args, argv)
    except UsageError as exc:
        print(f"error: usage: {_one_line(exc)}", file=sys.stderr)
        return 2
    except GraphPDEError as exc:
        print(f"error: {exc.code}: {_one_line(exc)}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error: io: {_one_line(exc)}", file=sys.stderr)
        return 1
    except ValueError as exc:
        print(f"error: invalid-value: {_one_line(exc)}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
