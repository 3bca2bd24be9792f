"""Weight sets over the simplex and exact linear maximization over them.

Every set used by the local max norms is stored in one canonical form,

    R = { base + scale * s : s in Delta_n, s_i <= caps_i },

i.e. a shifted and shrunk copy of a capped simplex.  Singletons, the
upper-capped interpolation sets and the lower-bounded sets all fit this
form.  The segment of smoothed marginals does not, and gets its own small
class with a two-vertex representation.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

SUM_TOL = 1e-12
ZERO_WEIGHT = 1e-15


class InfeasibleError(ValueError):
    """A configuration with no feasible point (empty set, impossible split)."""


@dataclass(frozen=True)
class MarginalDist:
    """A probability vector over rows (or columns)."""

    weights: np.ndarray

    def __post_init__(self):
        w = np.array(self.weights, dtype=float).ravel()
        if w.size == 0:
            raise ValueError("empty distribution")
        if not np.all(np.isfinite(w)) or np.any(w < 0):
            raise ValueError("marginal weights must be finite and nonnegative")
        if abs(w.sum() - 1.0) > SUM_TOL * max(1, w.size):
            raise ValueError(f"marginal weights sum to {w.sum():.17g}, not 1")
        w.setflags(write=False)
        object.__setattr__(self, "weights", w)

    @property
    def n(self) -> int:
        return self.weights.size

    @classmethod
    def uniform(cls, n: int) -> "MarginalDist":
        return cls(np.full(n, 1.0 / n))

    @classmethod
    def from_counts(cls, counts) -> "MarginalDist":
        counts = np.asarray(counts, dtype=float)
        total = counts.sum()
        if total <= 0:
            raise ValueError("no observations to normalize")
        w = counts / total
        # push the rounding residual into the largest entry so fsum(w) == 1
        w[np.argmax(w)] += 1.0 - math.fsum(w)
        return cls(w)


def _as_dist(p) -> np.ndarray:
    if isinstance(p, MarginalDist):
        return p.weights
    return MarginalDist(p).weights


def _smooth(p, zeta: float) -> np.ndarray:
    if not 0.0 <= zeta <= 1.0:
        raise ValueError(f"smoothing parameter zeta={zeta} outside [0, 1]")
    p = _as_dist(p)
    return (1.0 - zeta) * p + zeta / p.size


@dataclass(frozen=True)
class WeightSet:
    """Convex weight set ``{base + scale * s}`` with ``s`` in a capped simplex.

    Attributes
    ----------
    base : ndarray of shape (n,)
        Nonnegative offset shared by every member.
    scale : float
        Mass carried by the capped-simplex part; ``sum(base) + scale == 1``.
    caps : ndarray of shape (n,)
        Upper bounds in ``[0, 1]`` on the capped-simplex coordinates.
    """

    base: np.ndarray
    scale: float
    caps: np.ndarray

    def __post_init__(self):
        base = np.array(self.base, dtype=float).ravel()
        caps = np.array(self.caps, dtype=float).ravel()
        scale = float(self.scale)
        if base.shape != caps.shape or base.size == 0:
            raise ValueError("base and caps must be nonempty vectors of equal length")
        if np.any(base < 0) or scale < 0:
            raise ValueError("base and scale must be nonnegative")
        if np.any(caps < 0) or np.any(caps > 1 + SUM_TOL):
            raise ValueError("caps must lie in [0, 1]")
        caps = np.clip(caps, 0.0, 1.0)
        if abs(base.sum() + scale - 1.0) > SUM_TOL * max(1, base.size):
            raise ValueError(f"sum(base) + scale = {base.sum() + scale:.17g}, not 1")
        if scale > 0 and caps.sum() < 1 - SUM_TOL:
            raise InfeasibleError(f"empty weight set: caps sum to {caps.sum():.6g} < 1")
        for arr in (base, caps):
            arr.setflags(write=False)
        object.__setattr__(self, "base", base)
        object.__setattr__(self, "caps", caps)
        object.__setattr__(self, "scale", scale)

    @property
    def n(self) -> int:
        return self.base.size

    @property
    def is_singleton(self) -> bool:
        # caps summing to exactly one pin the capped simplex to a point
        return self.scale == 0.0 or self.caps.sum() <= 1 + SUM_TOL

    def center(self) -> np.ndarray:
        """The member ``base + scale * caps / sum(caps)``."""
        return self.base + self.scale * self.caps / self.caps.sum()

    def trivial_indices(self) -> np.ndarray:
        """Indices that receive zero weight from every member.

        A set with trivial indices only gives a seminorm.
        """
        reach = self.base + (self.scale > 0) * self.caps
        return np.flatnonzero(reach <= ZERO_WEIGHT)

    def contains(self, r, tol: float = 1e-9) -> bool:
        r = np.asarray(r, dtype=float)
        if r.shape != self.base.shape or abs(r.sum() - 1) > tol:
            return False
        if self.scale == 0:
            return bool(np.all(np.abs(r - self.base) <= tol))
        s = (r - self.base) / self.scale
        return bool(np.all(s >= -tol / self.scale) and np.all(s <= self.caps + tol / self.scale))


@dataclass(frozen=True)
class SegmentSet:
    """The segment ``{(1 - zeta) p + zeta / n : zeta in [0, 1]}``."""

    p: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "p", _as_dist(self.p))

    @property
    def n(self) -> int:
        return self.p.size

    @property
    def vertices(self) -> np.ndarray:
        return np.vstack([self.p, np.full(self.n, 1.0 / self.n)])

    @property
    def is_singleton(self) -> bool:
        return bool(np.allclose(self.p, 1.0 / self.n, rtol=0, atol=1e-15))

    def center(self) -> np.ndarray:
        return self.vertices.mean(axis=0)

    def trivial_indices(self) -> np.ndarray:
        # the uniform endpoint is always strictly positive
        return np.array([], dtype=int)

    def contains(self, r, tol: float = 1e-9) -> bool:
        r = np.asarray(r, dtype=float)
        d = self.vertices[1] - self.p
        if not np.any(d):
            return bool(np.all(np.abs(r - self.p) <= tol))
        zeta = float(d @ (r - self.p) / (d @ d))
        return -tol <= zeta <= 1 + tol and bool(
            np.all(np.abs(self.p + zeta * d - r) <= tol))


# -- constructors -----------------------------------------------------------

def singleton(r) -> WeightSet:
    """The one-point set ``{r}`` (weighted trace norm)."""
    r = _as_dist(r)
    return WeightSet(r, 0.0, np.ones_like(r))


def smoothed(p, zeta: float) -> WeightSet:
    """Singleton at the smoothed marginals ``(1 - zeta) p + zeta / n``."""
    return singleton(_renormalize(_smooth(p, zeta)))


def full_simplex(n: int) -> WeightSet:
    """The whole simplex; the resulting norm is the max norm."""
    if n < 1:
        raise ValueError("dimension must be positive")
    return WeightSet(np.zeros(n), 1.0, np.ones(n))


def uniform_cap(n: int, eps: float) -> WeightSet:
    """Simplex members with every coordinate at most ``eps``."""
    if not 1.0 / n - SUM_TOL <= eps <= 1.0:
        raise InfeasibleError(f"eps={eps} outside [1/n, 1] for n={n}")
    return WeightSet(np.zeros(n), 1.0, np.full(n, min(eps, 1.0)))


def capped_multiplicative(p, zeta: float, gamma: float) -> WeightSet:
    """Caps ``min(1, gamma * smoothed_i)``; gamma=1 is the smoothed singleton."""
    if not gamma > 0:
        raise ValueError("gamma must be positive")
    q = _smooth(p, zeta)
    caps = np.minimum(1.0, gamma * q)
    if caps.sum() < 1 - SUM_TOL:
        raise InfeasibleError(f"gamma={gamma} leaves caps summing to {caps.sum():.6g} < 1")
    return WeightSet(np.zeros(q.size), 1.0, caps)


def capped_exponent(p, zeta: float, tau: float) -> WeightSet:
    """Caps ``smoothed_i ** (1 - tau)``; tau=0 is the smoothed singleton, tau=1 the simplex."""
    if not 0.0 <= tau <= 1.0:
        raise ValueError(f"tau={tau} outside [0, 1]")
    q = _smooth(p, zeta)
    caps = np.minimum(1.0, q ** (1.0 - tau))
    return WeightSet(np.zeros(q.size), 1.0, caps)


def lower_bounded(n: int, t: float) -> WeightSet:
    """Simplex members with every coordinate at least ``t / (1 + (n - 1) t)``."""
    if not 0.0 <= t <= 1.0:
        raise ValueError(f"t={t} outside [0, 1]")
    denom = 1.0 + (n - 1) * t
    return WeightSet(np.full(n, t / denom), (1.0 - t) / denom, np.ones(n))


def smoothing_segment(p) -> SegmentSet:
    return SegmentSet(p)


def _renormalize(w: np.ndarray) -> np.ndarray:
    # smoothing can drift the sum by an ulp; fold it back into the largest entry
    w = w.copy()
    w[np.argmax(w)] += 1.0 - w.sum()
    return w


# -- linear maximization ----------------------------------------------------

def greedy_fill(caps, v) -> np.ndarray:
    """Maximizer of ``<s, v>`` over ``{0 <= s <= caps, sum(s) = 1}``.

    Indices are visited by decreasing ``v`` (ties by index) and filled to
    their cap until the unit mass is used up.
    """
    caps = np.asarray(caps, dtype=float)
    v = np.asarray(v, dtype=float)
    order = np.argsort(-v, kind="stable")
    c = caps[order]
    before = np.concatenate(([0.0], np.cumsum(c)[:-1]))
    take = np.clip(1.0 - before, 0.0, c)
    s = np.zeros_like(v)
    s[order] = take
    return s


def linmax(wset, v):
    """Maximize ``<r, v>`` over a weight set.

    Parameters
    ----------
    wset : WeightSet or SegmentSet
    v : array_like of shape (n,)
        Objective, nonnegative in all uses here (squared row norms).

    Returns
    -------
    value : float
    argmax : ndarray of shape (n,)
        A maximizing member; ``argmax @ v == value``.
    """
    v = np.asarray(v, dtype=float)
    if v.shape != (wset.n,):
        raise ValueError(f"objective has shape {v.shape}, expected ({wset.n},)")
    if isinstance(wset, SegmentSet):
        ends = wset.vertices
        r = ends[int(np.argmax(ends @ v))]
    else:
        r = wset.base + wset.scale * greedy_fill(wset.caps, v)
    return float(r @ v), r


def dual_offset(caps, v):
    """Minimize ``a + sum_i caps_i * (v_i - a)_+`` over scalar ``a``.

    This is the LP dual of maximizing ``<s, v>`` over the capped simplex,
    so the minimum equals that maximum.  The minimizers form an interval;
    the smallest one is returned: the smallest entry of ``v`` whose
    strictly larger entries carry cap mass at most one.

    Returns
    -------
    a : float
    value : float
    """
    caps = np.asarray(caps, dtype=float)
    v = np.asarray(v, dtype=float)
    if caps.shape != v.shape:
        raise ValueError("caps and v must have the same shape")
    if caps.sum() < 1 - SUM_TOL:
        raise ValueError("caps sum below 1: the dual is unbounded below")
    order = np.argsort(-v, kind="stable")
    vs = v[order]
    first = np.flatnonzero(np.r_[True, vs[1:] < vs[:-1]])
    # cap mass strictly above each distinct level
    above = np.concatenate(([0.0], np.cumsum(caps[order])))[first]
    ok = np.flatnonzero(above <= 1 + SUM_TOL)
    a = float(vs[first[ok[-1]]])
    value = a + float(caps @ np.maximum(v - a, 0.0))
    return a, value


def vec_norm(wset, u) -> float:
    """``sqrt(sup_r sum_i r_i u_i^2)``, between the l2 (scaled) and l-inf norms."""
    u = np.asarray(u, dtype=float)
    return float(np.sqrt(linmax(wset, u * u)[0]))
