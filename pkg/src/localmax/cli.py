"""Command-line driver: ``localmax {norm,train,evaluate,simulate,gridsearch,split}``.

Exit codes: 0 success, 2 input error, 3 numerical non-convergence,
4 infeasible configuration.
"""
from __future__ import annotations

import argparse
import csv
import logging
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .data import (IdMap, SampleSet, empirical_marginals, load_ratings, read_matrix,
                   split_ratings, write_ratings)
from .experiments import (FAST_LAMS, FAST_ZETAS, FULL_LAMS, FULL_ZETAS, ExperimentGrid,
                          grid_search, resolve_threads, simulation_study, summarize)
from .normcore import local_max_norm
from .trainer import FactorModel, TrainConfig, TrainingDiverged, evaluate, train
from .weights import (InfeasibleError, MarginalDist, capped_exponent, capped_multiplicative,
                      full_simplex, lower_bounded, singleton, smoothed, smoothing_segment,
                      uniform_cap)

logger = logging.getLogger("localmax")

EXIT_OK, EXIT_INPUT, EXIT_NONCONVERGED, EXIT_INFEASIBLE = 0, 2, 3, 4
FAMILIES = ("singleton", "smoothed", "max", "uniform-cap", "multiplicative", "exponent",
            "lower-bounded", "segment")


class InputError(Exception):
    pass


class NonConvergence(Exception):
    pass


def fmt(x) -> str:
    return f"{x:.10g}"


# -- weight sets from flags -------------------------------------------------

def build_set(args, p: MarginalDist):
    n = p.n
    fam = args.family
    if fam == "singleton":
        return singleton(p)
    if fam == "smoothed":
        return smoothed(p, args.zeta)
    if fam == "max":
        return full_simplex(n)
    if fam == "uniform-cap":
        eps = args.eps if args.eps is not None else 1.0 / n
        return uniform_cap(n, eps)
    if fam == "multiplicative":
        return capped_multiplicative(p, args.zeta, args.gamma)
    if fam == "exponent":
        return capped_exponent(p, args.zeta, args.tau)
    if fam == "lower-bounded":
        return lower_bounded(n, args.t)
    if fam == "segment":
        return smoothing_segment(p)
    raise InputError(f"unknown family {fam}")


def read_marginals(path, n, m):
    """Two comma-separated lines: row marginals, then column marginals."""
    try:
        lines = [ln for ln in Path(path).read_text().splitlines() if ln.strip()]
        rows = np.array([float(x) for x in lines[0].split(",")])
        cols = np.array([float(x) for x in lines[1].split(",")])
    except (OSError, IndexError, ValueError) as exc:
        raise InputError(f"cannot read marginals from {path}: {exc}") from exc
    if rows.size != n or cols.size != m:
        raise InputError(f"marginals file has lengths {rows.size},{cols.size}; expected {n},{m}")
    return MarginalDist(rows), MarginalDist(cols)


def marginals_for(args, n, m, observed: SampleSet | None):
    src = args.marginals
    if src == "uniform":
        return MarginalDist.uniform(n), MarginalDist.uniform(m)
    if src == "file":
        if not args.marginals_file:
            raise InputError("--marginals file needs --marginals-file")
        return read_marginals(args.marginals_file, n, m)
    if observed is None:
        raise InputError("empirical marginals need observed entries")
    return empirical_marginals(observed)


def add_set_flags(p, default_marginals):
    p.add_argument("--family", choices=FAMILIES, default="exponent")
    p.add_argument("--zeta", type=float, default=0.0)
    p.add_argument("--tau", type=float, default=0.0)
    p.add_argument("--gamma", type=float, default=2.0)
    p.add_argument("--eps", type=float, default=None)
    p.add_argument("--t", type=float, default=0.5, help="lower-bound parameter")
    p.add_argument("--marginals", choices=("uniform", "empirical", "file"),
                   default=default_marginals)
    p.add_argument("--marginals-file")


def add_grid_flags(p):
    p.add_argument("--fast", action="store_true", help="coarse grid for quick runs")
    p.add_argument("--zetas", type=_floats)
    p.add_argument("--taus", type=_floats)
    p.add_argument("--lams", type=_floats)


def _floats(text):
    try:
        return tuple(float(x) for x in text.split(","))
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers: {text}") from exc


def grid_from(args) -> ExperimentGrid:
    zetas = FAST_ZETAS if args.fast else FULL_ZETAS
    lams = FAST_LAMS if args.fast else FULL_LAMS
    return ExperimentGrid(args.zetas or zetas, args.taus or zetas, args.lams or lams)


def write_config(path: Path, args):
    path = path.with_name(path.stem + ".config.txt")
    skip = {"func"}
    with path.open("w") as fh:
        for k, v in sorted(vars(args).items()):
            if k not in skip:
                fh.write(f"{k}={','.join(map(str, v)) if isinstance(v, tuple) else v}\n")
    return path


def write_csv(path, header, rows):
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in rows:
            w.writerow([fmt(x) if isinstance(x, float) else x for x in row])


# -- commands ---------------------------------------------------------------

def cmd_norm(args):
    try:
        X = read_matrix(args.matrix)
    except (OSError, ValueError) as exc:
        raise InputError(f"cannot read matrix {args.matrix}: {exc}") from exc
    n, m = X.shape
    nz = np.nonzero(X)
    observed = SampleSet(n, m, nz[0], nz[1], X[nz]) if nz[0].size else None
    p, q = marginals_for(args, n, m, observed)
    cert = local_max_norm(X, build_set(args, p), build_set(args, q), tol=args.tol,
                          max_iter=args.max_iter, method=args.method)
    print(f"value={fmt(cert.value)}")
    print(f"gap={fmt(cert.gap)}")
    print(f"converged={cert.converged}")
    if args.show_weights:
        print("r=" + ",".join(fmt(x) for x in cert.r_star))
        print("c=" + ",".join(fmt(x) for x in cert.c_star))
    if not cert.converged:
        raise NonConvergence(f"gap {cert.gap:.3g} above tolerance after {cert.iterations} iterations")


def _load_splits(args):
    rmap, cmap = IdMap(), IdMap()
    loaded = []
    for path, role in ((args.train, "train"), (args.val, "validation"), (args.test, "test")):
        if path is None:
            loaded.append(None)
            continue
        try:
            s, diags = load_ratings(path, args.format, rmap, cmap, role)
        except OSError as exc:
            raise InputError(f"cannot read {path}: {exc}") from exc
        for d in diags:
            print(d, file=sys.stderr)
        loaded.append(s)
    n, m = len(rmap), len(cmap)
    out = [s.resized(n, m) if s is not None else None for s in loaded]
    for s in out:
        if s is not None:
            s.row_ids, s.col_ids = rmap.ids(), cmap.ids()
    return out


def cmd_train(args):
    tr, va, te = _load_splits(args)
    mean = float(tr.values.mean())
    p, q = marginals_for(args, tr.n, tr.m, tr)
    cfg = TrainConfig(rank=args.rank, lam=args.lam, rset=build_set(args, p),
                      cset=build_set(args, q), loss=args.loss, epochs=args.epochs,
                      seed=args.seed, solver=args.solver)
    model, hist = train(tr.shifted(-mean), cfg)
    rows = [("train", fmt(evaluate(model, tr.shifted(-mean), args.metric)))]
    for s in (va, te):
        if s is not None:
            rows.append((s.role, fmt(evaluate(model, s.shifted(-mean), args.metric))))
    for role, v in rows:
        print(f"{role}_{args.metric.lower()}={v}")
    print(f"objective={fmt(hist.best[-1])}")
    if args.model_out:
        np.savez(args.model_out, A=model.A, B=model.B, a=model.a, b=model.b, center=mean,
                 row_ids=np.array(tr.row_ids), col_ids=np.array(tr.col_ids))
    if args.output:
        out = Path(args.output)
        write_csv(out, ["split", "metric", "value"],
                  [(role, args.metric, v) for role, v in rows])
        write_config(out, args)


def cmd_evaluate(args):
    try:
        saved = np.load(args.model)
    except (OSError, ValueError) as exc:
        raise InputError(f"cannot read model {args.model}: {exc}") from exc
    rmap = IdMap({k: i for i, k in enumerate(saved["row_ids"].tolist())})
    cmap = IdMap({k: i for i, k in enumerate(saved["col_ids"].tolist())})
    n, m = len(rmap), len(cmap)
    try:
        s, diags = load_ratings(args.ratings, args.format, rmap, cmap, "test")
    except OSError as exc:
        raise InputError(f"cannot read {args.ratings}: {exc}") from exc
    for d in diags:
        print(d, file=sys.stderr)
    # unseen users or items get zero factors, i.e. the training mean
    A = np.vstack([saved["A"], np.zeros((len(rmap) - n, saved["A"].shape[1]))])
    B = np.vstack([saved["B"], np.zeros((len(cmap) - m, saved["B"].shape[1]))])
    model = FactorModel(A, B, float(saved["a"]), float(saved["b"]))
    value = evaluate(model, s.resized(len(rmap), len(cmap)).shifted(-float(saved["center"])),
                     args.metric)
    print(f"{args.metric.lower()}={fmt(value)}")


def cmd_simulate(args):
    grid = grid_from(args)
    rows = simulation_study(args.n, args.k, args.trials, seed=args.seed, sigma=args.sigma,
                            grid=grid, rank=args.rank, epochs=args.epochs,
                            threads=resolve_threads(args.threads))
    header = ["trial", "n", "k", "method", "zeta", "tau", "lam", "val_mse", "test_mse"]
    out = Path(args.output)
    write_csv(out, header, [[r[h] for h in header] for r in rows])
    write_config(out, args)
    for method, (mean, se) in summarize(rows).items():
        print(f"{method}: test_mse={fmt(mean)} se={fmt(se)}")


def cmd_gridsearch(args):
    tr, va, te = _load_splits(args)
    if va is None or te is None:
        raise InputError("gridsearch needs --train, --val and --test")
    grid = grid_from(args)
    marg = None
    if args.marginals != "empirical":
        marg = marginals_for(args, tr.n, tr.m, tr)
    res = grid_search(tr, va, te, grid, rank=args.rank, epochs=args.epochs, seed=args.seed,
                      threads=resolve_threads(args.threads), marginals=marg)
    out = Path(args.output)
    write_csv(out, ["zeta", "tau", "lam", "val_rmse", "test_rmse"],
              [(r.zeta, r.tau, r.lam, r.val_error, r.test_error) for r in res.cells])
    table = out.with_name(out.stem + ".table.csv")
    write_csv(table, ["zeta"] + [fmt(t) for t in grid.taus],
              [[z] + [res.table[(z, t)].test_error for t in grid.taus] for z in grid.zetas])
    summary = out.with_name(out.stem + ".summary.csv")
    write_csv(summary, ["method", "zeta", "tau", "lam", "val_rmse", "test_rmse"],
              [(mth, r.zeta, r.tau, r.lam, r.val_error, r.test_error)
               for mth, r in res.summary.items()])
    write_config(out, args)
    for mth, r in res.summary.items():
        print(f"{mth}: test_rmse={fmt(r.test_error)} zeta={fmt(r.zeta)} tau={fmt(r.tau)} "
              f"lam={fmt(r.lam)}")


def cmd_split(args):
    try:
        s, diags = load_ratings(args.ratings, args.format)
    except OSError as exc:
        raise InputError(f"cannot read {args.ratings}: {exc}") from exc
    for d in diags:
        print(d, file=sys.stderr)
    parts = split_ratings(s, args.sizes, seed=args.seed)
    for part, suffix in zip(parts, ("train", "val", "test")):
        write_ratings(part, f"{args.prefix}.{suffix}", fmt=args.format or "tab")


# -- parser -----------------------------------------------------------------

def build_parser():
    ap = argparse.ArgumentParser(prog="localmax", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("norm", help="evaluate a local max norm of a dense CSV matrix")
    p.add_argument("--matrix", required=True)
    add_set_flags(p, "uniform")
    p.add_argument("--tol", type=float, default=1e-6)
    p.add_argument("--max-iter", type=int, default=500)
    p.add_argument("--method", choices=("newton", "frank-wolfe"), default="newton")
    p.add_argument("--show-weights", action="store_true")
    p.set_defaults(func=cmd_norm)

    def ratings_flags(p, need_all):
        p.add_argument("--train", required=True)
        p.add_argument("--val", required=need_all)
        p.add_argument("--test", required=need_all)
        p.add_argument("--format", choices=("tab", "double-colon", "comma"))
        p.add_argument("--rank", type=int, default=8)
        p.add_argument("--epochs", type=int, default=500)
        p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("train", help="fit one regularized model to ratings")
    ratings_flags(p, False)
    add_set_flags(p, "empirical")
    p.add_argument("--lam", type=float, default=1.0)
    p.add_argument("--loss", choices=("squared", "absolute"), default="squared")
    p.add_argument("--solver", choices=("block", "subgradient"))
    p.add_argument("--metric", choices=("MSE", "RMSE", "MAE"), default="RMSE")
    p.add_argument("--model-out")
    p.add_argument("--output")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("evaluate", help="score a saved model on a ratings file")
    p.add_argument("--model", required=True)
    p.add_argument("--ratings", required=True)
    p.add_argument("--format", choices=("tab", "double-colon", "comma"))
    p.add_argument("--metric", choices=("MSE", "RMSE", "MAE"), default="RMSE")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("simulate", help="simulation study on noisy low-rank matrices")
    p.add_argument("--n", type=int, default=30)
    p.add_argument("--k", type=int, default=2)
    p.add_argument("--trials", type=int, default=10)
    p.add_argument("--sigma", type=float, default=0.3)
    p.add_argument("--rank", type=int, default=8)
    p.add_argument("--epochs", type=int, default=500)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--threads", type=int)
    p.add_argument("--output", required=True)
    add_grid_flags(p)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("gridsearch", help="(zeta, tau, lam) grid on ratings splits")
    ratings_flags(p, True)
    p.add_argument("--threads", type=int)
    p.add_argument("--marginals", choices=("uniform", "empirical", "file"), default="empirical")
    p.add_argument("--marginals-file")
    p.add_argument("--output", required=True)
    add_grid_flags(p)
    p.set_defaults(func=cmd_gridsearch)

    p = sub.add_parser("split", help="random train/validation/test split of a ratings file")
    p.add_argument("--ratings", required=True)
    p.add_argument("--format", choices=("tab", "double-colon", "comma"))
    p.add_argument("--sizes", type=lambda s: tuple(int(x) for x in s.split(",")), required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--prefix", required=True)
    p.set_defaults(func=cmd_split)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return EXIT_INPUT if exc.code else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        args.func(args)
    except InfeasibleError as exc:
        print(f"error: infeasible configuration: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except (NonConvergence, TrainingDiverged) as exc:
        print(f"error: did not converge: {exc}", file=sys.stderr)
        return EXIT_NONCONVERGED
    except (InputError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
