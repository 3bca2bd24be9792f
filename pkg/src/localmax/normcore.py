"""Exact evaluation of weighted trace norms and local max norms.

The local max norm is ``sup_{r in R, c in C} f(r, c)`` with
``f(r, c) = ||diag(r)^1/2 X diag(c)^1/2||_*``.  ``f`` is concave (an
infimum over factorizations of functions linear in ``(r, c)``), and the
optimal factorization at ``(r, c)`` supplies a supergradient
``(|A_i|^2 / 2, |B_j|^2 / 2)``.  Plugging the same factorization into the
factorized form of the norm gives an upper bound, so every iterate carries
a duality-gap certificate that coincides with the Frank-Wolfe gap.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .weights import (MarginalDist, SegmentSet, WeightSet, capped_multiplicative,
                      linmax, lower_bounded, vec_norm)

logger = logging.getLogger(__name__)

DEFAULT_TOL = 1e-6
DEFAULT_MAX_ITER = 500
WEIGHT_FLOOR = 1e-10


def _check_matrix(X) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    if X.ndim != 2 or X.size == 0:
        raise ValueError("X must be a nonempty 2-d array")
    if not np.all(np.isfinite(X)):
        raise ValueError("X has non-finite entries")
    return X


def _scaled_svd(X, r, c):
    M = np.sqrt(r)[:, None] * X * np.sqrt(c)[None, :]
    return np.linalg.svd(M, full_matrices=False)


def weighted_trace_norm(X, r, c) -> float:
    """Trace norm of ``diag(r)^1/2 X diag(c)^1/2``."""
    X = _check_matrix(X)
    r = np.asarray(r, dtype=float)
    c = np.asarray(c, dtype=float)
    if r.shape != (X.shape[0],) or c.shape != (X.shape[1],):
        raise ValueError("weight vectors do not match the matrix shape")
    if np.any(r < 0) or np.any(c < 0):
        raise ValueError("weights must be nonnegative")
    return float(_scaled_svd(X, r, c)[1].sum())


def optimal_factorization(X, r, c, floor: float = WEIGHT_FLOOR):
    """Factorization ``A B^T = X`` attaining the (r, c)-weighted trace norm.

    With ``U D V^T`` the SVD of ``diag(r)^1/2 X diag(c)^1/2``,
    ``A = diag(r)^-1/2 U D^1/2`` and ``B = diag(c)^-1/2 V D^1/2``.  Weights
    below ``floor`` are raised to it before inverting, so rows with zero
    weight are not reconstructed.  Numerically zero singular values are
    dropped, so ``A`` has as many columns as the numerical rank.
    """
    X = _check_matrix(X)
    r = np.asarray(r, dtype=float)
    c = np.asarray(c, dtype=float)
    U, d, Vt = _scaled_svd(X, r, c)
    keep = d > max(X.shape) * np.finfo(float).eps * (d[0] if d.size else 0.0)
    keep[0] = True
    root = np.sqrt(d[keep])
    A = U[:, keep] * root / np.sqrt(np.maximum(r, floor))[:, None]
    B = Vt[keep].T * root / np.sqrt(np.maximum(c, floor))[:, None]
    return A, B


def factorized_penalty(A, B, rset, cset) -> float:
    """``(sup_r sum r_i |A_i|^2 + sup_c sum c_j |B_j|^2) / 2``."""
    ra = np.einsum("ij,ij->i", A, A)
    rb = np.einsum("ij,ij->i", B, B)
    return 0.5 * (linmax(rset, ra)[0] + linmax(cset, rb)[0])


@dataclass
class NormCertificate:
    """Value of a local max norm with the weights and factors proving it.

    ``value`` is ``f(r_star, c_star)``, a lower bound on the norm; the
    factorized penalty of ``factors`` is an upper bound, ``value + gap``.
    """

    value: float
    r_star: np.ndarray
    c_star: np.ndarray
    factors: tuple
    gap: float
    converged: bool = True
    iterations: int = 0

    @property
    def upper(self) -> float:
        return self.value + self.gap


class _Block:
    """One side (rows or columns) of the ascent, in capped-simplex coordinates."""

    def __init__(self, wset):
        self.wset = wset
        if isinstance(wset, SegmentSet):
            self.base = np.zeros(wset.n)
            self.scale = 1.0
            self.vertices = wset.vertices
            self.caps = np.ones(2)
        elif isinstance(wset, WeightSet):
            self.base = wset.base
            self.scale = wset.scale
            self.vertices = None
            self.caps = np.where(wset.caps > 1e-12, wset.caps, 0.0)
        else:
            raise TypeError(f"unsupported weight set {type(wset).__name__}")
        self.start = self.caps / self.caps.sum()
        fixed = wset.is_singleton or np.count_nonzero(self.caps) <= 1
        self.free = np.zeros(self.caps.size, bool) if fixed else self.caps > 0

    def weights(self, s):
        mix = s @ self.vertices if self.vertices is not None else s
        return self.base + self.scale * mix

    def pull(self, g):
        """Chain rule from weight space back to simplex coordinates."""
        return self.scale * (self.vertices @ g.T).T if self.vertices is not None else self.scale * g


class _Problem:
    def __init__(self, X, rset, cset):
        self.X = X
        self.rows = _Block(rset)
        self.cols = _Block(cset)
        self.kr = self.rows.caps.size
        self.caps = np.concatenate([self.rows.caps, self.cols.caps])
        self.free = np.flatnonzero(np.concatenate([self.rows.free, self.cols.free]))
        owner = np.r_[np.zeros(self.kr, int), np.ones(self.cols.caps.size, int)][self.free]
        E = np.zeros((self.free.size, 2))
        E[np.arange(self.free.size), owner] = 1.0
        self.E = E[:, E.sum(axis=0) > 0]
        self.evals = 0

    def start(self):
        return np.concatenate([self.rows.start, self.cols.start])

    def split(self, z):
        return z[..., :self.kr], z[..., self.kr:]

    def weights(self, z):
        a, b = self.split(z)
        return self.rows.weights(a), self.cols.weights(b)

    def evaluate(self, Z):
        """Value and supergradient pieces for one point or a stack of points."""
        single = Z.ndim == 1
        Z = np.atleast_2d(Z)
        r, c = self.weights(Z)
        self.evals += Z.shape[0]
        M = np.sqrt(r)[:, :, None] * self.X[None] * np.sqrt(c)[:, None, :]
        U, d, Vt = np.linalg.svd(M, full_matrices=False)
        f = d.sum(axis=1)
        with np.errstate(divide="ignore", invalid="ignore"):
            ra = np.where(r > 0, np.einsum("bip,bp->bi", U * U, d) / r, 0.0)
            rb = np.where(c > 0, np.einsum("bpj,bp->bj", Vt * Vt, d) / c, 0.0)
        # d f / d z = (scale/2) * pulled squared row norms
        grad = 0.5 * np.concatenate([self.rows.pull(ra), self.cols.pull(rb)], axis=1)
        if single:
            return f[0], grad[0], r[0], c[0], ra[0], rb[0]
        return f, grad, r, c, ra, rb

    def fw_gap(self, r, c, ra, rb):
        gr = linmax(self.rows.wset, ra)[0] - r @ ra
        gc = linmax(self.cols.wset, rb)[0] - c @ rb
        return 0.5 * (max(gr, 0.0) + max(gc, 0.0))


def _newton_ascent(prob: _Problem, tol, max_iter):
    """Log-barrier Newton ascent over the product of capped simplices.

    Hessians come from central differences of the analytic supergradient,
    evaluated in one batched SVD call.  Iterates stay strictly interior, so
    the optimal factorization at every iterate reconstructs ``X``.
    """
    z = prob.start()
    F, caps = prob.free, prob.caps
    nf = F.size
    f, grad, r, c, ra, rb = prob.evaluate(z)
    gap = prob.fw_gap(r, c, ra, rb)
    mu = 0.1 * f / max(nf, 1)
    it = 0
    best = (f, gap, z)

    def barrier(zf):
        return np.log(zf).sum() + np.log(caps[F] - zf).sum()

    while gap > tol * f and nf and it < max_iter:
        it += 1
        zf = z[F]
        room = caps[F] - zf
        phi = f + mu * barrier(zf)
        g = grad[F] + mu * (1.0 / zf - 1.0 / room)

        h = 1e-6 * np.minimum(zf, room)
        P = np.repeat(z[None], 2 * nf, axis=0)
        P[np.arange(nf), F] += h
        P[nf + np.arange(nf), F] -= h
        G = prob.evaluate(P)[1][:, F]
        H = (G[:nf] - G[nf:]).T / (2 * h)
        H = 0.5 * (H + H.T) - mu * np.diag(1.0 / zf ** 2 + 1.0 / room ** 2)

        ne = prob.E.shape[1]
        K = np.block([[H, prob.E], [prob.E.T, np.zeros((ne, ne))]])
        rhs = np.concatenate([-g, np.zeros(ne)])
        d = np.linalg.lstsq(K, rhs, rcond=None)[0][:nf]
        decrement = -d @ H @ d

        with np.errstate(divide="ignore"):
            t_max = min(np.min(np.where(d < 0, -zf / d, np.inf)),
                        np.min(np.where(d > 0, room / d, np.inf)))
        t = min(1.0, 0.99 * t_max)
        slope = g @ d
        while True:
            zn = z.copy()
            zn[F] = zf + t * d
            fn, gradn, rn, cn, ran, rbn = prob.evaluate(zn)
            if fn + mu * barrier(zn[F]) >= phi + 0.25 * t * slope or t < 1e-14:
                break
            t *= 0.5
        z, f, grad, r, c, ra, rb = zn, fn, gradn, rn, cn, ran, rbn
        gap = prob.fw_gap(r, c, ra, rb)
        if gap / f < best[1] / best[0]:
            best = (f, gap, z)
        if decrement < 1e-9 * mu * nf or t * np.abs(d).max() < 1e-15:
            mu *= 0.1
    f, gap, z = best
    return z, gap <= tol * f or nf == 0, it


def _frank_wolfe(prob: _Problem, tol, max_iter):
    """Plain conditional-gradient ascent with a bisection line search."""
    z = prob.start()
    f, grad, r, c, ra, rb = prob.evaluate(z)
    it = 0
    while prob.fw_gap(r, c, ra, rb) > tol * f and prob.free.size and it < max_iter:
        it += 1
        vr = linmax(prob.rows.wset, ra)[1]
        vc = linmax(prob.cols.wset, rb)[1]
        # vertex in simplex coordinates
        target = np.concatenate([_coords(prob.rows, vr), _coords(prob.cols, vc)])
        d = target - z

        def slope(t):
            return prob.evaluate(z + t * d)[1] @ d

        lo, hi = 0.0, 1.0 - 1e-12
        if slope(hi) >= 0:
            t = hi
        else:
            for _ in range(50):
                mid = 0.5 * (lo + hi)
                if slope(mid) > 0:
                    lo = mid
                else:
                    hi = mid
            t = lo
        z = z + t * d
        f, grad, r, c, ra, rb = prob.evaluate(z)
    return z, prob.fw_gap(r, c, ra, rb) <= tol * f, it


def _coords(block: _Block, w):
    if block.vertices is None:
        return (w - block.base) / block.scale if block.scale > 0 else block.start
    # segment vertex: whichever endpoint w equals
    return np.array([1.0, 0.0]) if np.allclose(w, block.vertices[0]) else np.array([0.0, 1.0])


def local_max_norm(X, rset, cset, tol: float = DEFAULT_TOL,
                   max_iter: int = DEFAULT_MAX_ITER, method: str = "newton") -> NormCertificate:
    """Evaluate ``sup_{r in R, c in C} ||diag(r)^1/2 X diag(c)^1/2||_*``.

    Parameters
    ----------
    X : array_like of shape (n, m)
    rset, cset : WeightSet or SegmentSet
        Row and column weight sets.
    tol : float
        Stop once the duality gap is at most ``tol`` times the value.
    max_iter : int
        Iteration budget; on exhaustion the best iterate is returned with
        ``converged=False``.
    method : {"newton", "frank-wolfe"}
        ``"newton"`` is a log-barrier Newton ascent and converges fast;
        ``"frank-wolfe"`` is the plain conditional-gradient scheme, only
        sublinearly convergent.
    """
    X = _check_matrix(X)
    if tol <= 0:
        raise ValueError("tol must be positive")
    if rset.n != X.shape[0] or cset.n != X.shape[1]:
        raise ValueError("weight sets do not match the matrix shape")
    prob = _Problem(X, rset, cset)
    if method == "newton":
        z, converged, it = _newton_ascent(prob, tol, max_iter)
    elif method == "frank-wolfe":
        z, converged, it = _frank_wolfe(prob, tol, max_iter)
    else:
        raise ValueError(f"unknown method {method!r}")
    r, c = prob.weights(z)
    value = weighted_trace_norm(X, r, c)
    A, B = optimal_factorization(X, r, c)
    # the certificate gap is nonnegative in exact arithmetic; clip rounding
    gap = max(factorized_penalty(A, B, rset, cset) - value, 0.0)
    if not converged:
        logger.warning("local max norm did not converge: gap %.3g at value %.6g", gap, value)
    return NormCertificate(value, r, c, (A, B), gap, converged, it + 1)


# -- (beta, tau) penalty ----------------------------------------------------

def penalty_alpha_profile(X, alpha: float, tol: float = DEFAULT_TOL) -> float:
    """``(alpha + 1/alpha) * ||X||_(R_t, C_t) / omega_t`` with ``t = 1 / (1 + alpha^2)``.

    The (beta, tau) penalty is the minimum of this profile over
    ``alpha in [1, sqrt(max(n, m))]``.
    """
    X = _check_matrix(X)
    n, m = X.shape
    t = 1.0 / (1.0 + alpha * alpha)
    omega = 1.0 / math.sqrt((1 + (n - 1) * t) * (1 + (m - 1) * t))
    cert = local_max_norm(X, lower_bounded(n, t), lower_bounded(m, t), tol=tol)
    if not cert.converged:
        raise RuntimeError(f"norm evaluation did not converge at alpha={alpha}")
    return (alpha + 1.0 / alpha) * cert.value / omega


def penalty_beta_tau(X, tol: float = DEFAULT_TOL, scan_points: int = 9,
                     alpha_tol: float = 1e-6) -> float:
    """Minimum over factorizations of ``sqrt(maxrow(A) + maxrow(B)) * sqrt(sum(A^2) + sum(B^2))``.

    Computed through the lower-bounded local max norms: a coarse scan of the
    alpha profile picks a bracket, and golden-section search refines it.
    """
    X = _check_matrix(X)
    if not np.any(X):
        return 0.0
    hi = math.sqrt(max(X.shape))
    if hi == 1.0:
        return penalty_alpha_profile(X, 1.0, tol)
    grid = np.linspace(1.0, hi, scan_points)
    vals = [penalty_alpha_profile(X, a, tol) for a in grid]
    k = int(np.argmin(vals))
    lo, up = grid[max(k - 1, 0)], grid[min(k + 1, scan_points - 1)]

    invphi = (math.sqrt(5) - 1) / 2
    x1, x2 = up - invphi * (up - lo), lo + invphi * (up - lo)
    f1, f2 = penalty_alpha_profile(X, x1, tol), penalty_alpha_profile(X, x2, tol)
    while up - lo > alpha_tol * hi:
        if f1 <= f2:
            up, x2, f2 = x2, x1, f1
            x1 = up - invphi * (up - lo)
            f1 = penalty_alpha_profile(X, x1, tol)
        else:
            lo, x1, f1 = x1, x2, f2
            x2 = lo + invphi * (up - lo)
            f2 = penalty_alpha_profile(X, x2, tol)
    return float(min(min(vals), f1, f2))


# -- vector decomposition ---------------------------------------------------

@dataclass
class Decomposition:
    """``u = u_prime + u_doubleprime`` with a bounded sup-norm part and a weighted-l2 part.

    ``u_doubleprime`` holds the ``count - 1`` largest entries of ``u`` in full
    and ``sqrt(fraction)`` times the ``count``-th largest.
    """

    u_prime: np.ndarray
    u_doubleprime: np.ndarray
    count: int
    fraction: float
    smoothed: np.ndarray = field(repr=False)


def decompose_vector(u, p, gamma: float) -> Decomposition:
    """Split ``u`` against the half-smoothed marginals of ``p``.

    Entries are ranked by magnitude; with ``q = (p + 1/n) / 2``, ``count``
    and ``fraction`` solve ``sum_{i<count} q_i + fraction * q_count = 1/gamma``
    along that ranking.  If ``u`` has unit norm for
    ``capped_multiplicative(p, 1/2, gamma)`` then ``|u'|_inf <= 1`` and
    ``sum_i q_i u''_i^2 <= 1/gamma``.
    """
    if gamma < 1:
        raise ValueError("gamma must be at least 1")
    u = np.asarray(u, dtype=float)
    p = p.weights if isinstance(p, MarginalDist) else MarginalDist(p).weights
    if u.shape != p.shape:
        raise ValueError("u and p must have the same length")
    n = u.size
    q = 0.5 * p + 0.5 / n
    order = np.argsort(-np.abs(u), kind="stable")
    cum = np.cumsum(q[order])
    target = 1.0 / gamma
    count = min(int(np.searchsorted(cum, target * (1 - 1e-12))) + 1, n)
    before = cum[count - 2] if count > 1 else 0.0
    last = order[count - 1]
    fraction = float(np.clip((target - before) / q[last], np.finfo(float).tiny, 1.0))
    udd = np.zeros_like(u)
    head = order[:count - 1]
    udd[head] = u[head]
    udd[last] = math.sqrt(fraction) * u[last]
    return Decomposition(u - udd, udd, count, fraction, q)


def capped_unit(u, p, gamma: float) -> np.ndarray:
    """Rescale ``u`` to unit norm for ``capped_multiplicative(p, 1/2, gamma)``."""
    return np.asarray(u, dtype=float) / vec_norm(capped_multiplicative(p, 0.5, gamma), u)
