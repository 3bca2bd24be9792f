"""Grid experiments: the low-rank simulation study and the ratings grid search.

Every cell of a ``(zeta, tau, lam)`` grid is fit independently with the
exponent family of weight sets built from training marginals.  Each method
picks its best cell on the validation split, subject to the constraints
below, and is scored on the test split.

=====================  ====================  ============
method                 fixed                 free
=====================  ====================  ============
max-norm               tau = 1               lam
uniform-trace          zeta = 1, tau = 0     lam
empirical-trace        zeta = 0, tau = 0     lam
smoothed-trace         tau = 0               zeta, lam
local-max              none                  zeta, tau, lam
=====================  ====================  ============
"""
from __future__ import annotations

import logging
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .data import SampleSet, SimulationSpec, empirical_marginals, simulate
from .trainer import TrainConfig, evaluate, train
from .weights import MarginalDist, capped_exponent

logger = logging.getLogger(__name__)

METHODS = {
    "max-norm": lambda z, t: t == 1,
    "uniform-trace": lambda z, t: z == 1 and t == 0,
    "empirical-trace": lambda z, t: z == 0 and t == 0,
    "smoothed-trace": lambda z, t: t == 0,
    "local-max": lambda z, t: True,
}

FULL_ZETAS = tuple(np.round(np.linspace(0, 1, 11), 10))
FULL_LAMS = tuple(2.0 ** np.arange(1, 11))
FAST_ZETAS = (0.0, 0.5, 1.0)
FAST_LAMS = (4.0, 32.0, 256.0)


@dataclass(frozen=True)
class ExperimentGrid:
    """Values of ``zeta``, ``tau`` and ``lam`` to fit."""

    zetas: tuple = FULL_ZETAS
    taus: tuple = FULL_ZETAS
    lams: tuple = FULL_LAMS

    def __post_init__(self):
        for name in ("zetas", "taus", "lams"):
            vals = tuple(float(v) for v in getattr(self, name))
            if not vals:
                raise ValueError(f"{name} must be nonempty")
            object.__setattr__(self, name, vals)
        if any(not 0 <= v <= 1 for v in self.zetas + self.taus):
            raise ValueError("zeta and tau values must lie in [0, 1]")
        if any(v < 0 for v in self.lams):
            raise ValueError("lam values must be nonnegative")

    @classmethod
    def fast(cls) -> "ExperimentGrid":
        return cls(FAST_ZETAS, FAST_ZETAS, FAST_LAMS)

    def cells(self):
        return [(z, t, lam) for z in self.zetas for t in self.taus for lam in self.lams]

    def methods(self):
        """Methods whose constraints some grid cell satisfies."""
        return [m for m, ok in METHODS.items()
                if any(ok(z, t) for z in self.zetas for t in self.taus)]


@dataclass
class CellResult:
    zeta: float
    tau: float
    lam: float
    val_error: float
    test_error: float
    epochs: int


def resolve_threads(threads=None) -> int:
    if threads is None:
        threads = os.environ.get("LOCALMAX_THREADS", 1)
    threads = int(threads)
    if threads < 1:
        raise ValueError("threads must be at least 1")
    return threads


def _pool_map(fn, jobs, threads):
    # results come back in submission order whatever the completion order
    if threads <= 1 or len(jobs) <= 1:
        return [fn(*job) for job in jobs]
    with ProcessPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, *zip(*jobs)))


def fit_cell(train_set, val_set, test_set, marginals, zeta, tau, lam, base_config, metric):
    p, q = marginals
    cfg = TrainConfig(**{**base_config, "lam": lam,
                         "rset": capped_exponent(p, zeta, tau),
                         "cset": capped_exponent(q, zeta, tau)})
    model, hist = train(train_set, cfg)
    return CellResult(zeta, tau, lam, evaluate(model, val_set, metric),
                      evaluate(model, test_set, metric), len(hist.objective))


def run_grid(train_set, val_set, test_set, grid: ExperimentGrid, base_config: dict,
             marginals=None, metric="MSE", threads=1, share_equal_sets=False):
    """Fit every grid cell; results in grid order.

    With ``share_equal_sets`` cells whose weight sets coincide (``tau = 1``
    for every ``zeta``) are fit once.
    """
    if marginals is None:
        marginals = empirical_marginals(train_set)
    cells = grid.cells()
    key = [(z if t < 1 else None, t, lam) if share_equal_sets else (z, t, lam)
           for z, t, lam in cells]
    unique = list(dict.fromkeys(key))
    first = {k: cells[key.index(k)] for k in unique}
    jobs = [(train_set, val_set, test_set, marginals, *first[k], base_config, metric)
            for k in unique]
    fitted = dict(zip(unique, _pool_map(fit_cell, jobs, threads)))
    out = []
    for (z, t, lam), k in zip(cells, key):
        r = fitted[k]
        out.append(CellResult(z, t, lam, r.val_error, r.test_error, r.epochs))
    return out


def select(results, method):
    """Validation-best cell among those allowed for ``method``; ties go to the first."""
    ok = METHODS[method]
    allowed = [r for r in results if ok(r.zeta, r.tau)]
    if not allowed:
        raise ValueError(f"no grid cell satisfies the {method} constraints")
    return min(allowed, key=lambda r: r.val_error)


def _trial_seed(seed, trial):
    return int(np.random.SeedSequence([seed, trial]).generate_state(1)[0])


def simulation_trial(n, k, trial, seed, sigma, grid, base_config, threads=1):
    """One simulated matrix: fit the grid and score every method by test MSE."""
    tseed = _trial_seed(seed, trial)
    _, (tr, va, te) = simulate(SimulationSpec(n, k, sigma, tseed))
    cfg = {**base_config, "seed": tseed}
    results = run_grid(tr, va, te, grid, cfg, metric="MSE", threads=threads,
                       share_equal_sets=True)
    rows = []
    for method in grid.methods():
        r = select(results, method)
        rows.append(dict(trial=trial, n=n, k=k, method=method, zeta=r.zeta, tau=r.tau,
                         lam=r.lam, val_mse=r.val_error, test_mse=r.test_error))
    return rows


def simulation_study(n, k, trials, seed=0, sigma=0.3, grid=None, rank=8, epochs=500,
                     threads=1):
    """Rows of ``(trial, method, selected cell, validation and test MSE)``."""
    grid = grid or ExperimentGrid()
    base = dict(rank=rank, epochs=epochs)
    rows = []
    for trial in range(trials):
        rows.extend(simulation_trial(n, k, trial, seed, sigma, grid, base, threads))
        logger.info("trial %d/%d done", trial + 1, trials)
    return rows


def summarize(rows, key="test_mse"):
    """Mean and standard error per method."""
    out = {}
    for method in dict.fromkeys(r["method"] for r in rows):
        vals = np.array([r[key] for r in rows if r["method"] == method])
        se = vals.std(ddof=1) / math.sqrt(vals.size) if vals.size > 1 else 0.0
        out[method] = (float(vals.mean()), float(se))
    return out


@dataclass
class GridSearchResult:
    cells: list
    table: dict = field(default_factory=dict)
    summary: dict = field(default_factory=dict)
    center: float = 0.0


def grid_search(train_set: SampleSet, val_set: SampleSet, test_set: SampleSet,
                grid: ExperimentGrid, rank=8, epochs=500, seed=0, threads=1,
                marginals=None, center=True) -> GridSearchResult:
    """RMSE of every ``(zeta, tau, lam)`` fit on ratings data.

    Ratings are centered by the training mean before fitting (RMSE is
    unchanged by the shift).  ``table[(zeta, tau)]`` is the test RMSE at the
    validation-best ``lam`` of that cell; ``summary[method]`` is the
    validation-selected result of each method.
    """
    mean = float(train_set.values.mean()) if center else 0.0
    tr, va, te = (s.shifted(-mean) for s in (train_set, val_set, test_set))
    cells = run_grid(tr, va, te, grid, dict(rank=rank, epochs=epochs, seed=seed),
                     marginals=marginals, metric="RMSE", threads=threads)
    table = {}
    for z in grid.zetas:
        for t in grid.taus:
            group = [r for r in cells if r.zeta == z and r.tau == t]
            table[(z, t)] = min(group, key=lambda r: r.val_error)
    summary = {m: select(cells, m) for m in grid.methods()}
    return GridSearchResult(cells, table, summary, mean)


def uniform_marginals(n, m):
    return MarginalDist.uniform(n), MarginalDist.uniform(m)
