"""Observed-entry containers, the low-rank simulation, and ratings files."""
from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .weights import InfeasibleError, MarginalDist

logger = logging.getLogger(__name__)

ROLES = ("train", "validation", "test", "all")
SEPARATORS = {"tab": "\t", "double-colon": "::", "comma": ","}


@dataclass
class SampleSet:
    """Observed entries ``(rows[t], cols[t], values[t])`` of an ``n x m`` matrix.

    ``row_ids``/``col_ids`` hold the external ids of ratings data, in index order.
    """

    n: int
    m: int
    rows: np.ndarray
    cols: np.ndarray
    values: np.ndarray
    role: str = "all"
    row_ids: list | None = None
    col_ids: list | None = None

    def __post_init__(self):
        self.rows = np.asarray(self.rows, dtype=np.intp).ravel()
        self.cols = np.asarray(self.cols, dtype=np.intp).ravel()
        self.values = np.asarray(self.values, dtype=float).ravel()
        if not self.rows.size == self.cols.size == self.values.size:
            raise ValueError("rows, cols and values must have equal length")
        if self.n < 1 or self.m < 1:
            raise ValueError("matrix dimensions must be positive")
        if self.rows.size and (self.rows.min() < 0 or self.rows.max() >= self.n
                               or self.cols.min() < 0 or self.cols.max() >= self.m):
            raise ValueError("entry index out of range")
        if self.role not in ROLES:
            raise ValueError(f"role must be one of {ROLES}")

    def __len__(self) -> int:
        return self.values.size

    def triples(self):
        return list(zip(self.rows.tolist(), self.cols.tolist(), self.values.tolist()))

    def subset(self, idx, role=None) -> "SampleSet":
        idx = np.asarray(idx, dtype=np.intp)
        return replace(self, rows=self.rows[idx], cols=self.cols[idx],
                       values=self.values[idx], role=role or self.role)

    def resized(self, n, m) -> "SampleSet":
        return replace(self, n=n, m=m)

    def shifted(self, offset: float) -> "SampleSet":
        return replace(self, values=self.values + offset)


@dataclass(frozen=True)
class SimulationSpec:
    """Signal ``U V^T`` with unit-norm rows in ``R^k``, plus ``sigma`` Gaussian noise."""

    n: int
    k: int
    sigma: float = 0.3
    seed: int = 0

    def __post_init__(self):
        if not self.n >= self.k >= 1:
            raise InfeasibleError("need n >= k >= 1")
        if self.sigma < 0:
            raise ValueError("sigma must be nonnegative")

    @property
    def split_sizes(self):
        s = 3 * self.k * self.n
        return s, s, self.n * self.n - 2 * s


def unit_rows(rng, n, k) -> np.ndarray:
    """``n`` points drawn uniformly from the unit sphere in ``R^k``."""
    G = rng.standard_normal((n, k))
    norms = np.linalg.norm(G, axis=1, keepdims=True)
    while np.any(norms == 0):
        bad = norms[:, 0] == 0
        G[bad] = rng.standard_normal((bad.sum(), k))
        norms = np.linalg.norm(G, axis=1, keepdims=True)
    return G / norms


def simulate(spec: SimulationSpec):
    """Draw ``Y = U V^T + sigma Z`` and split its entries into train, validation and test.

    Entries are assigned to the three splits uniformly at random without
    replacement, with sizes ``3kn``, ``3kn`` and the rest.

    Returns
    -------
    Y : ndarray of shape (n, n)
    splits : tuple of three SampleSet
    """
    n, k = spec.n, spec.k
    s = 3 * k * n
    if 2 * s >= n * n:
        raise InfeasibleError(f"infeasible split: 2 * 3kn = {2 * s} >= n^2 = {n * n}")
    rng = np.random.default_rng(spec.seed)
    U = unit_rows(rng, n, k)
    V = unit_rows(rng, n, k)
    Y = U @ V.T + spec.sigma * rng.standard_normal((n, n))
    full = dense_samples(Y)
    return Y, split_ratings(full, spec.split_sizes, seed=rng)


def dense_samples(Y, role="all") -> SampleSet:
    Y = np.asarray(Y, dtype=float)
    n, m = Y.shape
    ii, jj = np.divmod(np.arange(n * m), m)
    return SampleSet(n, m, ii, jj, Y.ravel(), role)


def sample_iid(Y, size, p_rows=None, p_cols=None, seed=None) -> SampleSet:
    """``size`` entries drawn i.i.d. (with replacement) from a product distribution."""
    Y = np.asarray(Y, dtype=float)
    n, m = Y.shape
    rng = np.random.default_rng(seed)
    pr = MarginalDist(p_rows).weights if p_rows is not None else None
    pc = MarginalDist(p_cols).weights if p_cols is not None else None
    rows = rng.choice(n, size=size, p=pr)
    cols = rng.choice(m, size=size, p=pc)
    return SampleSet(n, m, rows, cols, Y[rows, cols], "train")


def empirical_marginals(samples: SampleSet):
    """Row and column frequencies of the observed entries."""
    if len(samples) == 0:
        raise ValueError("empty sample set")
    rc = np.bincount(samples.rows, minlength=samples.n)
    cc = np.bincount(samples.cols, minlength=samples.m)
    # integer counts over an integer total: exact up to one rounding per entry
    return MarginalDist.from_counts(rc), MarginalDist.from_counts(cc)


def split_ratings(samples: SampleSet, sizes, seed=None):
    """Disjoint uniform random split into (train, validation, test)."""
    sizes = [int(s) for s in sizes]
    if len(sizes) != 3 or min(sizes) < 0:
        raise ValueError("sizes must be three nonnegative integers")
    if sum(sizes) > len(samples):
        raise InfeasibleError(f"split sizes {sizes} exceed the {len(samples)} available entries")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    perm = rng.permutation(len(samples))
    cut = np.cumsum(sizes)
    parts = (perm[:cut[0]], perm[cut[0]:cut[1]], perm[cut[1]:cut[2]])
    return tuple(samples.subset(idx, role) for idx, role in zip(parts, ROLES[:3]))


# -- ratings files ----------------------------------------------------------

class RatingsFormatError(ValueError):
    """No usable lines in a ratings file."""


@dataclass
class IdMap:
    """First-seen dense indexing of external ids."""

    index: dict = field(default_factory=dict)

    def __call__(self, key) -> int:
        return self.index.setdefault(key, len(self.index))

    def __len__(self):
        return len(self.index)

    def ids(self):
        return list(self.index)


def _detect(line):
    if "::" in line:
        return "double-colon"
    if "\t" in line:
        return "tab"
    return "comma"


def load_ratings(path, fmt: str | None = None, row_map: IdMap | None = None,
                 col_map: IdMap | None = None, role: str = "all"):
    """Read ``user SEP item SEP rating [SEP timestamp]`` lines.

    Parameters
    ----------
    path : path-like
    fmt : {"tab", "double-colon", "comma"}, optional
        Detected from the first nonblank line when omitted.
    row_map, col_map : IdMap, optional
        Shared maps when several files index the same matrix; extended in place.

    Returns
    -------
    samples : SampleSet
        With ``row_ids``/``col_ids`` listing the external ids.
    diagnostics : list of str
        One message per skipped line, with its line number.
    """
    path = Path(path)
    if fmt is not None and fmt not in SEPARATORS:
        raise ValueError(f"unknown ratings format {fmt!r}")
    row_map = row_map if row_map is not None else IdMap()
    col_map = col_map if col_map is not None else IdMap()
    rows, cols, vals, diagnostics = [], [], [], []
    with path.open(encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if fmt is None:
                fmt = _detect(line)
            parts = [p.strip() for p in line.split(SEPARATORS[fmt])]
            if len(parts) not in (3, 4) or not parts[0] or not parts[1]:
                diagnostics.append(f"{path}:{lineno}: expected 3 or 4 fields, got {len(parts)}")
                continue
            try:
                value = float(parts[2])
            except ValueError:
                diagnostics.append(f"{path}:{lineno}: rating {parts[2]!r} is not a number")
                continue
            if not math.isfinite(value):
                diagnostics.append(f"{path}:{lineno}: rating {parts[2]!r} is not finite")
                continue
            rows.append(row_map(parts[0]))
            cols.append(col_map(parts[1]))
            vals.append(value)
    for msg in diagnostics:
        logger.warning(msg)
    if not vals:
        raise RatingsFormatError(f"{path}: no valid lines")
    out = SampleSet(len(row_map), len(col_map), rows, cols, vals, role,
                    row_map.ids(), col_map.ids())
    return out, diagnostics


def synthetic_ratings(n_users, n_items, n_ratings, rank=3, skew=1.0, noise=0.5, seed=None):
    """MovieLens-like ratings on the half-star scale 0.5 to 5 with Zipf-like marginals.

    Users and items are drawn with probabilities proportional to
    ``(index + 1) ** -skew``; the ratings follow a rank ``rank`` signal
    plus Gaussian noise.  Locations are distinct.
    """
    if n_ratings > n_users * n_items:
        raise InfeasibleError("more ratings than matrix entries")
    rng = np.random.default_rng(seed)
    pu = (np.arange(n_users) + 1.0) ** -skew
    pi = (np.arange(n_items) + 1.0) ** -skew
    w = np.outer(pu / pu.sum(), pi / pi.sum()).ravel()
    # weighted sampling of distinct cells via exponential keys
    keys = rng.exponential(size=w.size) / w
    cells = np.sort(np.argpartition(keys, n_ratings - 1)[:n_ratings])
    rows, cols = np.divmod(cells, n_items)
    U = rng.standard_normal((n_users, rank)) / math.sqrt(rank)
    V = rng.standard_normal((n_items, rank))
    bias = rng.normal(0.0, 0.3, n_items)
    raw = 3.5 + bias[cols] + np.einsum("tk,tk->t", U[rows], V[cols]) + noise * rng.standard_normal(n_ratings)
    vals = np.clip(np.round(raw * 2) / 2, 0.5, 5.0)
    order = rng.permutation(n_ratings)
    return SampleSet(n_users, n_items, rows[order], cols[order], vals[order],
                     row_ids=[str(i + 1) for i in range(n_users)],
                     col_ids=[str(j + 1) for j in range(n_items)])


def write_ratings(samples: SampleSet, path, fmt: str = "tab", timestamps: bool = False):
    sep = SEPARATORS[fmt]
    rid = samples.row_ids or [str(i + 1) for i in range(samples.n)]
    cid = samples.col_ids or [str(j + 1) for j in range(samples.m)]
    with Path(path).open("w", encoding="utf-8") as fh:
        for t, (i, j, v) in enumerate(zip(samples.rows, samples.cols, samples.values)):
            tail = f"{sep}{978300000 + t}" if timestamps else ""
            fh.write(f"{rid[i]}{sep}{cid[j]}{sep}{v:.6g}{tail}\n")


# -- dense matrices and split files -----------------------------------------

def read_matrix(path) -> np.ndarray:
    """Dense comma-separated matrix without a header."""
    X = np.loadtxt(path, delimiter=",", ndmin=2)
    if X.size == 0:
        raise ValueError(f"{path}: empty matrix")
    if not np.all(np.isfinite(X)):
        raise ValueError(f"{path}: non-finite entries")
    return X


def write_matrix(X, path):
    np.savetxt(path, np.asarray(X, dtype=float), delimiter=",", fmt="%.17g")


def write_splits(splits, path):
    """``i,j,value,role`` rows for every split."""
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["i", "j", "value", "role"])
        for s in splits:
            for i, j, v in zip(s.rows, s.cols, s.values):
                w.writerow([int(i), int(j), repr(float(v)), s.role])
