"""Brute-force references and structural witnesses for the norm code.

Nothing here shares maximization code with :mod:`weights` or
:mod:`normcore`: weight sets are enumerated on lattices, and matrix norms
on products of lattices.  All of it is meant for tiny sizes.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np
from scipy import optimize

from .normcore import local_max_norm
from .weights import SegmentSet, WeightSet, vec_norm

GROTHENDIECK_BOUND = 1.79


@dataclass(frozen=True)
class GridSpec:
    """Lattice ``{s : s_i in step * Z, sum s = 1}`` for enumeration."""

    step: float = 0.01
    max_dim: int = 4
    max_points: int = 10 ** 7

    def __post_init__(self):
        if not 0 < self.step <= 0.5:
            raise ValueError("step must lie in (0, 0.5]")
        if abs(round(1 / self.step) * self.step - 1) > 1e-9:
            raise ValueError("step must divide 1")

    @property
    def units(self) -> int:
        return int(round(1 / self.step))

    def count(self, n) -> int:
        return math.comb(self.units + n - 1, n - 1)

    def check(self, n, factor=1):
        if n > self.max_dim:
            raise ValueError(f"dimension {n} above the oracle cap {self.max_dim}")
        if self.count(n) * factor > self.max_points:
            raise ValueError(f"{self.count(n) * factor} lattice points exceed the guard "
                             f"{self.max_points}")


def simplex_lattice(n, grid: GridSpec) -> np.ndarray:
    """All lattice points of the simplex in ``R^n``, by stars and bars."""
    grid.check(n)
    N = grid.units
    pts = []
    for bars in itertools.combinations(range(N + n - 1), n - 1):
        edges = (-1,) + bars + (N + n - 1,)
        pts.append([edges[i + 1] - edges[i] - 1 for i in range(n)])
    return np.array(pts, dtype=float).reshape(-1, n) / N


def member_lattice(wset, grid: GridSpec) -> np.ndarray:
    """Lattice points of a weight set's parametrization, mapped to weights."""
    if isinstance(wset, SegmentSet):
        z = np.linspace(0.0, 1.0, grid.units + 1)[:, None]
        return (1 - z) * wset.p + z / wset.n
    S = simplex_lattice(wset.n, grid)
    S = S[np.all(S <= wset.caps + 1e-12, axis=1)]
    if S.size == 0:
        raise ValueError("no lattice point inside the caps; refine the step")
    return wset.base + wset.scale * S


def brute_linmax(wset, v, grid: GridSpec = GridSpec()) -> float:
    """Max of ``r . v`` over the lattice members of ``wset``."""
    if isinstance(wset, WeightSet) and wset.scale == 0:
        return float(wset.base @ np.asarray(v, dtype=float))
    return float(np.max(member_lattice(wset, grid) @ np.asarray(v, dtype=float)))


def brute_local_max_norm(X, rset, cset, grid: GridSpec = GridSpec()):
    """Max of the weighted trace norm over the product lattice.

    Returns
    -------
    value : float
        A lower bound on the norm.
    tolerance : float
        ``(2 sqrt(step) + step) * ||X||_*``: moving every weight by at most
        ``step`` changes each square-root weight by at most ``sqrt(step)``.
    """
    X = np.asarray(X, dtype=float)
    Rs = member_lattice(rset, grid) if not _fixed(rset) else rset.base[None]
    Cs = member_lattice(cset, grid) if not _fixed(cset) else cset.base[None]
    if Rs.shape[0] * Cs.shape[0] > grid.max_points:
        raise ValueError("product lattice exceeds the enumeration guard")
    best = 0.0
    sr = np.sqrt(Rs)
    for chunk in np.array_split(np.sqrt(Cs), max(1, Cs.shape[0] // 256)):
        M = sr[:, None, :, None] * X[None, None] * chunk[None, :, None, :]
        d = np.linalg.svd(M.reshape(-1, *X.shape), compute_uv=False)
        best = max(best, float(d.sum(axis=1).max()))
    tol = (2 * math.sqrt(grid.step) + grid.step) * float(np.linalg.svd(X, compute_uv=False).sum())
    return best, tol


def _fixed(wset):
    return isinstance(wset, WeightSet) and wset.scale == 0


# -- semidefinite witnesses -------------------------------------------------

def psd_witness(A, B):
    """Gram block ``[[A A^T, A B^T], [B A^T, B B^T]]`` and its least eigenvalue."""
    A = np.asarray(A, dtype=float)
    B = np.asarray(B, dtype=float)
    F = np.vstack([A, B])
    M = F @ F.T
    return M, float(np.linalg.eigvalsh(M)[0])


def factor_from_block(M, n, tol=1e-10):
    """Recover ``(A, B)`` from a PSD block matrix whose upper-right block is ``X``.

    Uses a Cholesky factor when ``M`` is positive definite and a
    square-root eigendecomposition otherwise, so ``A A^T`` and ``B B^T``
    reproduce the diagonal blocks and ``A B^T`` the off-diagonal one.
    """
    M = np.asarray(M, dtype=float)
    if M.ndim != 2 or M.shape[0] != M.shape[1] or not 0 < n < M.shape[0]:
        raise ValueError("M must be square with both blocks nonempty")
    M = 0.5 * (M + M.T)
    scale = max(1.0, float(np.abs(M).max()))
    try:
        L = np.linalg.cholesky(M)
    except np.linalg.LinAlgError:
        w, V = np.linalg.eigh(M)
        if w[0] < -tol * scale:
            raise ValueError(f"block matrix is not PSD (least eigenvalue {w[0]:.3g})")
        keep = w > tol * scale
        L = V[:, keep] * np.sqrt(w[keep])
        # deterministic signs: largest entry of each column positive
        flip = np.sign(L[np.argmax(np.abs(L), axis=0), np.arange(L.shape[1])])
        L = L * np.where(flip == 0, 1.0, flip)
    return L[:n], L[n:]


# -- hull inclusion ---------------------------------------------------------

@dataclass
class HullReport:
    trials: int
    max_norm: float
    min_norm: float
    tol: float

    @property
    def ok(self) -> bool:
        return self.max_norm <= 1 + self.tol


def hull_check(rset, cset, trials=100, seed=None, tol=1e-5) -> HullReport:
    """Norms of ``u v^T`` with ``|u|_R = |v|_C = 1``; all must be at most one.

    The certificate's upper bound (value plus gap) is used, so a pass is
    not an artifact of stopping the ascent early.
    """
    rng = np.random.default_rng(seed)
    vals = []
    for _ in range(trials):
        u = rng.standard_normal(rset.n)
        v = rng.standard_normal(cset.n)
        u /= vec_norm(rset, u)
        v /= vec_norm(cset, v)
        cert = local_max_norm(np.outer(u, v), rset, cset, tol=tol * 1e-2)
        vals.append(cert.value + cert.gap)
    return HullReport(trials, max(vals), min(vals), tol)


def sign_bilinear_sup(Y) -> float:
    """``max u^T Y v`` over ``|u|_inf, |v|_inf <= 1``: enumerate sign vectors of ``u``."""
    Y = np.asarray(Y, dtype=float)
    if Y.shape[0] > 16:
        raise ValueError("too many rows to enumerate")
    best = -math.inf
    for signs in itertools.product((-1.0, 1.0), repeat=Y.shape[0]):
        best = max(best, float(np.abs(np.asarray(signs) @ Y).sum()))
    return best


def vector_bilinear_sup(Y, dim=None, starts=20, seed=None) -> float:
    """``max sum Y_ij <a_i, b_j>`` over unit vectors, by multi-start local ascent.

    This is the dual max norm of ``Y``; the estimate is a lower bound.
    """
    Y = np.asarray(Y, dtype=float)
    n, m = Y.shape
    dim = dim or n + m
    rng = np.random.default_rng(seed)

    def unpack(z):
        F = z.reshape(n + m, dim)
        F = F / np.maximum(np.linalg.norm(F, axis=1, keepdims=True), 1e-300)
        return F[:n], F[n:]

    def neg(z):
        a, b = unpack(z)
        return -float(np.sum(Y * (a @ b.T)))

    best = -math.inf
    for _ in range(starts):
        res = optimize.minimize(neg, rng.standard_normal((n + m) * dim), method="BFGS")
        best = max(best, -res.fun)
    return best
