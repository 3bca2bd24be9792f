"""Regularized low-rank matrix completion with a local max norm penalty.

The norm is evaluated through its factorized form,

    ||X||_(R,C) = min_{X = A B^T} (sup_r sum r_i |A_i|^2 + sup_c sum c_j |B_j|^2) / 2,

so fitting ``X = A B^T`` with rank ``k`` only needs the two linear
maximizations per evaluation.  For cap-form sets each supremum is also a
hinge minimization over a scalar offset, which gives the offsets ``a, b``
stored on the model.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy import optimize, sparse

from .weights import SegmentSet, WeightSet, dual_offset, linmax, singleton

logger = logging.getLogger(__name__)

LOSSES = ("squared", "absolute")
METRICS = ("MSE", "RMSE", "MAE")
SOLVERS = ("block", "subgradient")


class TrainingDiverged(FloatingPointError):
    """The objective became non-finite."""


def rowsq(A) -> np.ndarray:
    A = np.asarray(A, dtype=float)
    return np.einsum("ij,ij->i", A, A)


@dataclass
class FactorModel:
    """Rank-k factors with the hinge offsets of the penalty.

    Predictions are ``A[i] @ B[j]``; the offsets only certify the penalty.
    """

    A: np.ndarray
    B: np.ndarray
    a: float = 0.0
    b: float = 0.0

    def __post_init__(self):
        self.A = np.asarray(self.A, dtype=float)
        self.B = np.asarray(self.B, dtype=float)
        if self.A.ndim != 2 or self.B.ndim != 2 or self.A.shape[1] != self.B.shape[1]:
            raise ValueError("A and B must be 2-d with the same number of columns")
        if self.A.shape[1] < 1:
            raise ValueError("rank must be at least 1")
        if not (np.all(np.isfinite(self.A)) and np.all(np.isfinite(self.B))):
            raise ValueError("factors have non-finite entries")

    @property
    def rank(self) -> int:
        return self.A.shape[1]

    @property
    def shape(self):
        return self.A.shape[0], self.B.shape[0]

    def matrix(self) -> np.ndarray:
        return self.A @ self.B.T

    def copy(self) -> "FactorModel":
        return FactorModel(self.A.copy(), self.B.copy(), self.a, self.b)


@dataclass
class TrainConfig:
    """Settings for :func:`train`.

    ``rset``/``cset`` default to the uniform singletons (trace norm).
    ``solver`` defaults to ``"block"`` for the squared loss and
    ``"subgradient"`` otherwise.  The subgradient step at epoch ``t`` is
    ``step / t**decay`` in units of the inverse per-row loss curvature.
    """

    rank: int = 8
    lam: float = 1.0
    rset: object = None
    cset: object = None
    loss: str = "squared"
    epochs: int = 500
    step: float = 0.5
    decay: float = 0.5
    seed: int = 0
    track_best: bool = True
    solver: str | None = None
    tol: float = 1e-6

    def __post_init__(self):
        if self.rank < 1:
            raise ValueError("rank must be at least 1")
        if not self.lam >= 0:
            raise ValueError("lam must be nonnegative")
        if self.epochs < 1:
            raise ValueError("epochs must be at least 1")
        if self.loss not in LOSSES:
            raise ValueError(f"loss must be one of {LOSSES}")
        if not self.step > 0:
            raise ValueError("step must be positive")
        if self.solver not in (None,) + SOLVERS:
            raise ValueError(f"solver must be one of {SOLVERS}")


# -- penalty ----------------------------------------------------------------

def penalty_value(A, B, rset, cset) -> float:
    """``(sup_r sum r_i |A_i|^2 + sup_c sum c_j |B_j|^2) / 2``."""
    ra, rb = rowsq(A), rowsq(B)
    return 0.5 * (linmax(rset, ra)[0] + linmax(cset, rb)[0])


def _hinge_sup(wset, v) -> float:
    if isinstance(wset, SegmentSet):
        # two vertices, no cap form
        return float(np.max(wset.vertices @ v))
    return float(wset.base @ v) + wset.scale * dual_offset(wset.caps, v)[1]


def hinge_penalty(A, B, rset, cset) -> float:
    """Same quantity as :func:`penalty_value`, through the hinge (dual) form."""
    return 0.5 * (_hinge_sup(rset, rowsq(A)) + _hinge_sup(cset, rowsq(B)))


def optimal_offsets(A, B, rset, cset):
    """Minimizing offsets ``(a, b)`` of ``a + sum caps_i (|A_i|^2 - a)_+`` and the column analogue.

    Segment sets have no offset; ``nan`` is returned for them.
    """
    def one(wset, v):
        if isinstance(wset, SegmentSet):
            return math.nan
        return dual_offset(wset.caps, v)[0]
    return one(rset, rowsq(A)), one(cset, rowsq(B))


def penalty_subgradient(A, B, rset, cset):
    """Subgradient ``(rho_i A_i, kappa_j B_j)`` of :func:`penalty_value`.

    ``rho`` and ``kappa`` are the maximizing weights, which at hinge ties
    is a valid selection from the subdifferential.
    """
    A = np.asarray(A, dtype=float)
    B = np.asarray(B, dtype=float)
    rho = linmax(rset, rowsq(A))[1]
    kappa = linmax(cset, rowsq(B))[1]
    return rho[:, None] * A, kappa[:, None] * B


# -- losses -----------------------------------------------------------------

def _loss(res, kind):
    return float(res @ res) if kind == "squared" else float(np.abs(res).sum())


def _dloss(res, kind):
    return 2.0 * res if kind == "squared" else np.sign(res)


def predict(model: FactorModel, i, j):
    """Prediction at one entry or at arrays of entries."""
    i = np.asarray(i)
    j = np.asarray(j)
    n, m = model.shape
    if np.any((i < 0) | (i >= n)) or np.any((j < 0) | (j >= m)):
        raise IndexError("entry index out of range")
    out = np.einsum("...k,...k->...", model.A[i], model.B[j])
    return float(out) if out.ndim == 0 else out


def evaluate(model: FactorModel, samples, metric: str = "RMSE") -> float:
    """Average error of ``model`` on a sample set."""
    if metric not in METRICS:
        raise ValueError(f"metric must be one of {METRICS}")
    if len(samples) == 0:
        raise ValueError("empty sample set")
    res = predict(model, samples.rows, samples.cols) - samples.values
    if metric == "MAE":
        return float(np.mean(np.abs(res)))
    mse = float(np.mean(res * res))
    return math.sqrt(mse) if metric == "RMSE" else mse


def objective(model: FactorModel, samples, config: TrainConfig) -> float:
    res = predict(model, samples.rows, samples.cols) - samples.values
    rset, cset = _sets(config, *model.shape)
    return _loss(res, config.loss) + config.lam * penalty_value(model.A, model.B, rset, cset)


def _sets(config, n, m):
    rset = config.rset if config.rset is not None else singleton(np.full(n, 1.0 / n))
    cset = config.cset if config.cset is not None else singleton(np.full(m, 1.0 / m))
    if rset.n != n or cset.n != m:
        raise ValueError("weight sets do not match the data dimensions")
    return rset, cset


@dataclass
class History:
    objective: list = field(default_factory=list)
    best: list = field(default_factory=list)
    best_epoch: int = 0


def init_model(n, m, rank, seed) -> FactorModel:
    rng = np.random.default_rng(seed)
    sd = 1.0 / math.sqrt(rank)
    return FactorModel(rng.normal(0.0, sd, (n, rank)), rng.normal(0.0, sd, (m, rank)))


class _RowProblem:
    """Rows of ``min_F sum_i (F_i K_i F_i - 2 h_i F_i) + lam/2 sup_r sum r_i |F_i|^2``.

    With weights ``w`` fixed, row ``i`` is a ridge problem whose solution
    has squared norm ``sum_l c_l^2 / (e_l + lam w_i / 2)^2`` in the
    eigenbasis of ``K_i``, decreasing and log-convex in ``w_i``.
    """

    def __init__(self, K, h, lam):
        k = K.shape[-1]
        jitter = 1e-9 * (1.0 + np.trace(K, axis1=1, axis2=2) / k)
        E, self.Q = np.linalg.eigh(K)
        # tiny relative ridge keeps unweighted rows with few samples solvable
        self.E = np.maximum(E, 0.0) + jitter[:, None]
        self.c = np.einsum("nkl,nk->nl", self.Q, h)
        self.c2 = self.c * self.c
        self.K, self.h, self.half = K, h, 0.5 * lam

    def sqnorm(self, w, rows=slice(None)):
        return np.sum(self.c2[rows] / (self.E[rows] + self.half * w[:, None]) ** 2, axis=1)

    def solve(self, w):
        return np.einsum("nkl,nl->nk", self.Q, self.c / (self.E + self.half * w[:, None]))

    def value(self, w):
        F = self.solve(w)
        quad = np.einsum("nk,nkl,nl->", F, self.K, F) - 2.0 * np.einsum("nk,nk->", self.h, F)
        return quad + self.half * float(w @ rowsq(F))

    def level_weights(self, lo, hi, level, rows):
        """Weights in ``[lo, hi]`` at which the row norms equal ``level``, and the norm slopes."""
        w = lo.copy()
        E, c2 = self.E[rows], self.c2[rows]
        target = math.log(level)
        for _ in range(60):
            d = E + self.half * w[:, None]
            t2 = c2 / d ** 2
            nrm = t2.sum(axis=1)
            slope = -2.0 * self.half * (t2 / d).sum(axis=1)
            # Newton on the log norm, monotone from the left by log-convexity
            step = -(np.log(nrm) - target) * nrm / slope
            w = np.minimum(w + step, hi)
            if step.max() <= 1e-13 * (1.0 + w.max()):
                break
        d = E + self.half * w[:, None]
        return w, -2.0 * self.half * (c2 / d ** 3).sum(axis=1)


def _block_capped(P: _RowProblem, wset: WeightSet, a_start):
    """Exact minimization over ``F`` for a cap-form set, through its hinge form.

    For a fixed offset ``a`` each row's weight lies in ``[base_i, base_i +
    scale caps_i]``: the low end if its ridge solution is inside the ball
    ``|F_i|^2 <= a``, the high end if it stays outside even then, and in
    between the weight that puts it on the sphere.  The optimal offset makes
    the fractional hinge activations carry cap mass one.
    """
    w0 = wset.base
    w1 = wset.base + wset.scale * wset.caps
    n0, n1 = P.sqnorm(w0), P.sqnorm(w1)
    caps = wset.caps
    knots = np.unique(np.concatenate([n0, n1]))

    def excess(a):
        w = np.where(n0 <= a, w0, w1)
        mid = np.flatnonzero((n0 > a) & (n1 < a))
        slope = 0.0
        if mid.size:
            wm, dn = P.level_weights(w0[mid], w1[mid], a, mid)
            w[mid] = wm
            slope = float(np.sum(1.0 / (wset.scale * dn)))
        theta = np.divide(w - w0, w1 - w0, out=np.zeros_like(w), where=w1 > w0)
        return caps @ theta - 1.0, slope, w

    g, _, w = excess(0.0)
    if g <= 0:
        return 0.0, w
    lo, hi = 0.0, float(n0.max())
    a = min(max(a_start, lo), hi) if a_start is not None else 0.5 * hi
    for _ in range(200):
        g, slope, w = excess(a)
        if g > 0:
            lo = a
        else:
            hi = a
        if abs(g) <= 1e-12 or hi - lo <= 1e-13 * hi:
            break
        if slope < 0:
            nxt = a - g / slope
        else:
            # flat piece: the root lies past the next knot
            side = knots[knots > a] if g > 0 else knots[knots < a]
            nxt = (side[0] if g > 0 else side[-1]) if side.size else math.nan
        a = nxt if lo < nxt < hi else 0.5 * (lo + hi)
    return a, w


def _block_segment(P: _RowProblem, wset: SegmentSet):
    """Exact minimization over ``F`` for the smoothing segment.

    ``min_F max_theta`` of a function linear in the mixing weight: the
    saddle point is found by maximizing the concave dual over ``[0, 1]``.
    """
    V = wset.vertices
    res = optimize.minimize_scalar(lambda th: -P.value(th * V[0] + (1 - th) * V[1]),
                                   bounds=(0.0, 1.0), method="bounded",
                                   options={"xatol": 1e-10})
    return res.x * V[0] + (1 - res.x) * V[1]


def _block_rows(K, h, wset, lam, a_start=None):
    P = _RowProblem(K, h, lam)
    if lam == 0 or wset.is_singleton:
        w = wset.center()
        return P.solve(w), a_start
    if isinstance(wset, SegmentSet):
        return P.solve(_block_segment(P, wset)), a_start
    a, w = _block_capped(P, wset, a_start)
    return P.solve(w), a


def train(samples, config: TrainConfig, init: FactorModel | None = None):
    """Fit ``min sum loss(Y_ij, A_i . B_j) + lam * penalty_value(A, B)``.

    ``solver="block"`` (squared loss only) alternates exact minimization
    over ``A`` with ``B`` fixed and over ``B`` with ``A`` fixed; each block
    is convex, so the objective never increases.  It stops early once an
    epoch improves the objective by less than ``tol`` relative.

    ``solver="subgradient"`` takes a step per row scaled by the inverse of
    its loss curvature bound ``2 sum_j |B_j|^2``, using the maximizing
    weights ``rho`` and treating the quadratic penalty implicitly,

        A_i <- (A_i - eta_i g_i) / (1 + eta_i lam rho_i),

    which stays stable for any ``lam``.  Offsets are recomputed exactly for
    the returned model.

    Returns
    -------
    model : FactorModel
        The best-objective iterate (or the last one if ``track_best`` is off).
    history : History
    """
    if len(samples) == 0:
        raise ValueError("empty training set")
    n, m = samples.n, samples.m
    rset, cset = _sets(config, n, m)
    model = init.copy() if init is not None else init_model(n, m, config.rank, config.seed)
    if model.shape != (n, m):
        raise ValueError("initial model does not match the data dimensions")
    solver = config.solver or ("block" if config.loss == "squared" else "subgradient")
    if solver == "block" and config.loss != "squared":
        raise ValueError("the block solver needs the squared loss")
    rows, cols, y = samples.rows, samples.cols, samples.values
    lam, kind, k = config.lam, config.loss, model.rank
    T = len(y)
    # incidence of samples on rows / columns
    Sr = sparse.csr_matrix((np.ones(T), (rows, np.arange(T))), shape=(n, T))
    Sc = sparse.csr_matrix((np.ones(T), (cols, np.arange(T))), shape=(m, T))
    A, B = model.A.copy(), model.B.copy()
    hist = History()
    best = (math.inf, A, B)
    a_row = a_col = None

    def record(A, B, t):
        nonlocal best
        res = np.einsum("tk,tk->t", A[rows], B[cols]) - y
        obj = _loss(res, kind) + lam * penalty_value(A, B, rset, cset)
        if not math.isfinite(obj):
            raise TrainingDiverged(f"objective is {obj} at epoch {t}; lower the step size")
        hist.objective.append(obj)
        if obj < best[0]:
            best = (obj, A.copy(), B.copy())
            hist.best_epoch = t
        hist.best.append(best[0])
        return res

    def normal_eqs(S, other, idx):
        Go = other[idx]
        K = (S @ (Go[:, :, None] * Go[:, None, :]).reshape(T, k * k)).reshape(-1, k, k)
        return K, S @ (y[:, None] * Go)

    for t in range(1, config.epochs + 1):
        res = record(A, B, t)
        if solver == "block":
            if t > 2 and hist.objective[-2] - hist.objective[-1] <= config.tol * hist.objective[-1]:
                break
            K, h = normal_eqs(Sr, B, cols)
            A, a_row = _block_rows(K, h, rset, lam, a_row)
            K, h = normal_eqs(Sc, A, rows)
            B, a_col = _block_rows(K, h, cset, lam, a_col)
            continue
        eta = config.step / t ** config.decay
        G = sparse.csr_matrix((_dloss(res, kind), (rows, cols)), shape=(n, m))
        curv = 2.0 * (Sr @ rowsq(B)[cols]) + 1e-12
        rho = linmax(rset, rowsq(A))[1]
        eta_r = eta / curv
        A = (A - eta_r[:, None] * (G @ B)) / (1.0 + eta_r * lam * rho)[:, None]
        res = np.einsum("tk,tk->t", A[rows], B[cols]) - y
        G = sparse.csr_matrix((_dloss(res, kind), (rows, cols)), shape=(n, m))
        curv = 2.0 * (Sc @ rowsq(A)[rows]) + 1e-12
        kappa = linmax(cset, rowsq(B))[1]
        eta_c = eta / curv
        B = (B - eta_c[:, None] * (G.T @ A)) / (1.0 + eta_c * lam * kappa)[:, None]
    else:
        record(A, B, config.epochs + 1)

    if config.track_best:
        A, B = best[1], best[2]
    a, b = optimal_offsets(A, B, rset, cset)
    return FactorModel(A, B, a, b), hist


def with_sets(config: TrainConfig, rset, cset) -> TrainConfig:
    return replace(config, rset=rset, cset=cset)
