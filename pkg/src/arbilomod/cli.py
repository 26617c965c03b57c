"""Command line driver reproducing the benchmark experiments.

Exit codes: 0 success, 2 invalid input, 3 non-convergence.  All tables are
written as CSV with a leading ``# arbilomod <name> v1`` schema comment.
"""

import argparse
import csv
import sys
import time
from importlib import resources
from pathlib import Path

import numpy as np

from .enrichment import EnrichmentConfig, run_to_convergence
from .errors import ArbiLoModError
from .estimator import EstimatorConstants
from .geometry import benchmark_geometry, load_geometry
from .greedy import CellGreedyConfig, local_greedy
from .pipeline import Model
from .session import Session, SessionConfig, field_payload, run_sequence
from .training import TrainingConfig, default_parameter_set, train_face

BENCH_NAMES = {f"bench{k}": k for k in range(1, 6)}


def _load_named_geometry(name):
    if name in BENCH_NAMES:
        path = resources.files("arbilomod").joinpath(f"geometries/{name}.json")
        with resources.as_file(path) as p:
            return load_geometry(p)
    return load_geometry(name)


def _onoff(value):
    if value not in ("on", "off"):
        raise argparse.ArgumentTypeError("expected 'on' or 'off'")
    return value == "on"


def _common_options(p, geometry=True):
    if geometry:
        p.add_argument("--geometry", default="bench1",
                       help="bench1..bench5 or a geometry JSON file")
    p.add_argument("--n", type=int, default=200, help="mesh cells per side")
    p.add_argument("--domains", type=int, default=8, help="domains per side")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--eps-train", type=float, default=1e-4)
    p.add_argument("--eps-greedy", type=float, default=1e-3)
    p.add_argument("--samples", type=int, default=60, help="random samples M per parameter")
    p.add_argument("--tol", type=float, default=1e-2,
                   help="enrichment threshold on the residual dual norm")
    p.add_argument("--fraction", type=float, default=0.5, help="marking fraction d")
    p.add_argument("--max-iter", type=int, default=100)
    p.add_argument("--training", type=_onoff, default=True, metavar="on|off")
    p.add_argument("--reuse", type=_onoff, default=True, metavar="on|off")
    p.add_argument("--oracle", action="store_true",
                   help="compute true errors against full solves")
    p.add_argument("--threads", type=int, default=0,
                   help="worker threads (0 = available parallelism)")
    p.add_argument("--out", default=".", help="output directory for CSV files")


def _session_config(args):
    import os
    threads = args.threads if args.threads > 0 else (os.cpu_count() or 1)
    training = TrainingConfig(samples=args.samples, eps_train=args.eps_train,
                              seed=args.seed)
    greedy = CellGreedyConfig(eps_greedy=args.eps_greedy)
    return SessionConfig(n=args.n, domains=args.domains, training=training,
                         greedy=greedy, training_enabled=args.training,
                         reuse_enabled=args.reuse, threads=threads)


def _outdir(args):
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write_csv(path, schema, header, rows):
    with open(path, "w", newline="", encoding="utf-8") as f:
        f.write(f"# arbilomod {schema} v1\n")
        w = csv.writer(f)
        w.writerow(header)
        w.writerows(rows)


def cmd_solve(args):
    geom = _load_named_geometry(args.geometry)
    config = _session_config(args)
    session = Session(geom, config)
    result = session.solve(args.mu, tol=args.tol, fraction=args.fraction,
                           max_iter=args.max_iter)
    out = _outdir(args)
    with open(out / "field.bin", "wb") as f:
        f.write(field_payload(session.model.mesh, result["field"]))
    report = {
        "mu": result["mu"],
        "reduced_dim": result["reduced_dim"],
        "iterations": result["iterations"],
        "residual_norm": result["residual_norm"],
        "estimate_rel": result["estimate_rel"],
        "estimate_rel_loc": result["estimate_rel_loc"],
    }
    if args.oracle:
        exact = session.model.full_solve(args.mu)
        err = session.model.system.v_norm(result["field"] - exact)
        report["true_rel_error"] = err / session.model.system.v_norm(exact)
    _write_csv(out / "solve.csv", "solve", list(report), [list(report.values())])
    for key, val in report.items():
        print(f"{key}: {val}")
    if result["converged"] is False:
        print("enrichment did not reach tolerance", file=sys.stderr)
        return 3
    return 0


def cmd_sequence(args):
    config = _session_config(args)
    out = _outdir(args)
    geometries = [benchmark_geometry(k) for k in range(1, args.geometries + 1)]
    session, results = run_sequence(geometries, config, tol=args.tol,
                                    fraction=args.fraction, max_iter=args.max_iter,
                                    oracle=args.oracle, log_dir=str(out))
    rows = []
    for r in results:
        rows.append([r["geometry"], r["iterations"], int(r["converged"]),
                     r["reduced_dim"],
                     r["change"].get("trainings", 0), r["change"].get("greedys", 0),
                     r["change"].get("vertices", 0), f"{r['final_residual']:.6e}",
                     "" if not args.oracle else f"{r['log'].records[-1].true_rel_error:.6e}"])
    _write_csv(out / "sequence.csv", "sequence",
               ["geometry", "iterations", "converged", "reduced_dim",
                "trainings_rerun", "greedys_rerun", "vertices_rebuilt",
                "final_residual", "true_rel_error"], rows)
    print(f"iterations per geometry: {[r['iterations'] for r in results]}")
    if not all(r["converged"] for r in results):
        return 3
    return 0


def cmd_tolerance_sweep(args):
    out = _outdir(args)
    eps_train_values = [float(v) for v in args.eps_train_values.split(",")]
    eps_greedy_values = [float(v) for v in args.eps_greedy_values.split(",")]
    geom = _load_named_geometry(args.geometry)
    rows = []
    for et in eps_train_values:
        for eg in eps_greedy_values:
            model = Model(geom, n=args.n, domains=args.domains,
                          training=TrainingConfig(samples=args.samples, eps_train=et,
                                                  seed=args.seed),
                          greedy=CellGreedyConfig(eps_greedy=eg),
                          threads=max(args.threads, 1))
            model.build_initial(training_enabled=args.training)
            err = model.max_relative_error()
            rows.append([et, eg, model.reduced_dim(), f"{err:.6e}"])
            print(f"eps_train={et:g} eps_greedy={eg:g} dim={model.reduced_dim()} "
                  f"err={err:.3e}")
    _write_csv(out / "tolerance_sweep.csv", "tolerance-sweep",
               ["eps_train", "eps_greedy", "reduced_dim", "max_rel_error"], rows)
    return 0


def cmd_estimator_performance(args):
    config = _session_config(args)
    out = _outdir(args)
    geometries = [benchmark_geometry(k) for k in range(1, args.geometries + 1)]
    session, results = run_sequence(geometries, config, tol=args.tol,
                                    fraction=args.fraction, max_iter=args.max_iter,
                                    oracle=True, log_dir=str(out))
    rows = []
    for r in results:
        for rec in r["log"].records:
            rows.append([r["geometry"], rec.iteration, f"{rec.delta_rel:.6e}",
                         f"{rec.delta_rel_loc:.6e}", f"{rec.true_rel_error:.6e}",
                         rec.reduced_dim])
    _write_csv(out / "estimator_performance.csv", "estimator-performance",
               ["geometry", "iteration", "delta_rel", "delta_rel_loc",
                "true_rel_error", "reduced_dim"], rows)
    if not all(r["converged"] for r in results):
        return 3
    return 0


def _timed_initial_build(geom, n, domains, training_cfg, greedy_cfg, mu):
    """Serial instrumented pipeline; returns the model and phase timings."""
    model = Model(geom, n=n, domains=domains, training=training_cfg,
                  greedy=greedy_cfg, threads=1)
    t0 = time.perf_counter()
    u = model.full_solve(mu)
    t_full = time.perf_counter() - t0
    model.build_vertex_bases()
    t_train = []
    for fcid in model.decomp.faces:
        t0 = time.perf_counter()
        model.bases[fcid] = train_face(fcid, model.training, model.system,
                                       model.decomp, model.extender,
                                       revision=model.revision)
        t_train.append(time.perf_counter() - t0)
    t_greedy = []
    for ccid in model.decomp.cells:
        t0 = time.perf_counter()
        model.bases[ccid] = local_greedy(model.system, model.decomp, ccid,
                                         model.bases, model.greedy, model.parameters,
                                         cache=model.factor_cache,
                                         revision=model.revision)
        t_greedy.append(time.perf_counter() - t0)
    model.refresh_reduced(None)
    t0 = time.perf_counter()
    model.solve_reduced(mu)
    t_red = time.perf_counter() - t0
    return model, t_full, np.array(t_train), np.array(t_greedy), t_red


def _interior_counts(model):
    D = model.decomp.domains_per_side
    mid = D // 2
    cell = model.decomp.classes[model.decomp.cells[mid * D + mid]]
    interior_faces = [model.decomp.classes[c] for c in model.decomp.faces]
    patch = max(len(f.training_dofs) + len(f.coupling_dofs) for f in interior_faces)
    return patch, cell.ndofs


def cmd_timings(args):
    out = _outdir(args)
    rows = []
    mu = args.mu
    for n in [int(v) for v in args.n_values.split(",")]:
        geom = _load_named_geometry(args.geometry)
        model, t_full, t_train, t_greedy, t_red = _timed_initial_build(
            geom, n, args.domains,
            TrainingConfig(samples=args.samples, eps_train=args.eps_train,
                           seed=args.seed),
            CellGreedyConfig(eps_greedy=args.eps_greedy), mu)
        patch, cell = _interior_counts(model)
        err = model.max_relative_error()
        rows.append([n, model.mesh.num_nodes, f"{t_full:.3f}", patch,
                     f"{t_train.mean():.3f}", cell, f"{t_greedy.max():.3f}",
                     model.reduced_dim(), f"{t_red * 1e3:.1f}", f"{err * 1e3:.3f}"])
        print(f"n={n}: dofs={model.mesh.num_nodes} dim={model.reduced_dim()} "
              f"err={err:.3e}")
    _write_csv(out / "timings.csv", "timings",
               ["n", "global_dofs", "full_solve_s", "training_patch_dofs",
                "training_avg_s", "cell_dofs", "greedy_max_s", "reduced_dim",
                "reduced_solve_ms", "max_error_permille"], rows)
    return 0


def cmd_h_study(args):
    out = _outdir(args)
    rows = []
    dims = []
    for D in [int(v) for v in args.domains_values.split(",")]:
        geom = _load_named_geometry(args.geometry)
        model, t_full, t_train, t_greedy, t_red = _timed_initial_build(
            geom, args.n, D,
            TrainingConfig(samples=args.samples, eps_train=args.eps_train,
                           seed=args.seed),
            CellGreedyConfig(eps_greedy=args.eps_greedy), args.mu)
        patch, cell = _interior_counts(model)
        err = model.max_relative_error()
        dims.append(model.reduced_dim())
        rows.append([D, patch, f"{t_train.mean():.3f}", f"{t_train.max():.3f}",
                     cell, f"{t_greedy.mean():.3f}", f"{t_greedy.max():.3f}",
                     model.reduced_dim(), f"{t_red * 1e3:.1f}", f"{err * 1e3:.4f}"])
        print(f"1/H={D}: patch={patch} cell={cell} dim={model.reduced_dim()} "
              f"err={err:.3e}")
    _write_csv(out / "h_study.csv", "h-study",
               ["inv_H", "training_patch_dofs", "training_mean_s", "training_max_s",
                "cell_dofs", "greedy_mean_s", "greedy_max_s", "reduced_dim",
                "reduced_solve_ms", "max_error_permille"], rows)
    return 0


def cmd_serve(args):
    import uvicorn

    from .service import create_app

    geom = _load_named_geometry(args.geometry)
    config = _session_config(args)
    app = create_app(Session(geom, config))
    uvicorn.run(app, host=args.host, port=args.port, log_level="info")
    return 0


def build_parser():
    parser = argparse.ArgumentParser(prog="arbilomod",
                                     description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("solve", help="solve at one parameter value")
    _common_options(p)
    p.add_argument("--mu", type=float, required=True)
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("sequence", help="benchmark geometry sequence with reuse")
    _common_options(p, geometry=False)
    p.add_argument("--geometries", type=int, default=5, choices=range(1, 6),
                   metavar="K", help="run geometries 1..K")
    p.set_defaults(func=cmd_sequence)

    p = sub.add_parser("tolerance-sweep",
                       help="initial reduction error over tolerance grid")
    _common_options(p)
    p.add_argument("--eps-train-values", default="1e-2,1e-3,1e-4")
    p.add_argument("--eps-greedy-values", default="1e-1,1e-2,1e-3")
    p.set_defaults(func=cmd_tolerance_sweep)

    p = sub.add_parser("estimator-performance",
                       help="estimators vs true error over enrichment iterations")
    _common_options(p, geometry=False)
    p.add_argument("--geometries", type=int, default=5, choices=range(1, 6),
                   metavar="K")
    p.set_defaults(func=cmd_estimator_performance)

    p = sub.add_parser("timings", help="wall times and dimensions over mesh sizes")
    _common_options(p)
    p.add_argument("--mu", type=float, default=1e5)
    p.add_argument("--n-values", default="200,400")
    p.set_defaults(func=cmd_timings)

    p = sub.add_parser("h-study", help="influence of the domain size H")
    _common_options(p)
    p.add_argument("--mu", type=float, default=1e5)
    p.add_argument("--domains-values", default="4,5,8,10,20")
    p.set_defaults(func=cmd_h_study)

    p = sub.add_parser("serve", help="run the interactive HTTP service")
    _common_options(p)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8642)
    p.set_defaults(func=cmd_serve)

    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ArbiLoModError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
