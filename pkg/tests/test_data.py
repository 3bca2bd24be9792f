import math
from collections import Counter

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from localmax.data import (IdMap, RatingsFormatError, SampleSet, SimulationSpec, dense_samples,
                           empirical_marginals, load_ratings, read_matrix, sample_iid, simulate,
                           split_ratings, synthetic_ratings, unit_rows, write_matrix,
                           write_ratings, write_splits)
from localmax.weights import InfeasibleError


def cells(s):
    return set(zip(s.rows.tolist(), s.cols.tolist()))


# -- simulation -----------------------------------------------------------------

def test_split_sizes_small():
    _, (tr, va, te) = simulate(SimulationSpec(30, 2, seed=0))
    assert (len(tr), len(va), len(te)) == (180, 180, 540)
    assert (tr.role, va.role, te.role) == ("train", "validation", "test")


def test_splits_partition_the_matrix():
    Y, splits = simulate(SimulationSpec(20, 1, seed=3))
    sets = [cells(s) for s in splits]
    assert sum(len(s) for s in sets) == 400
    assert set.union(*sets) == {(i, j) for i in range(20) for j in range(20)}
    for s in splits:
        np.testing.assert_array_equal(s.values, Y[s.rows, s.cols])


def test_noiseless_is_low_rank():
    Y, _ = simulate(SimulationSpec(30, 3, sigma=0.0, seed=1))
    d = np.linalg.svd(Y, compute_uv=False)
    assert d[3] / d[0] <= 1e-12
    assert np.abs(Y).max() <= 1 + 1e-12


def test_unit_rows(rng):
    U = unit_rows(rng, 50, 4)
    np.testing.assert_allclose(np.linalg.norm(U, axis=1), 1.0, atol=1e-12)


def test_simulation_reproducible():
    a = simulate(SimulationSpec(15, 2, seed=9))
    b = simulate(SimulationSpec(15, 2, seed=9))
    np.testing.assert_array_equal(a[0], b[0])
    for s, t in zip(a[1], b[1]):
        np.testing.assert_array_equal(s.rows, t.rows)
        np.testing.assert_array_equal(s.cols, t.cols)
    c = simulate(SimulationSpec(15, 2, seed=10))
    assert not np.array_equal(a[0], c[0])


def test_simulation_infeasible():
    with pytest.raises(InfeasibleError):
        simulate(SimulationSpec(6, 1))  # 2 * 18 >= 36
    with pytest.raises(InfeasibleError):
        SimulationSpec(2, 3)
    with pytest.raises(ValueError):
        SimulationSpec(5, 1, sigma=-1)


# -- marginals ------------------------------------------------------------------

def test_marginals_examples():
    full = dense_samples(np.zeros((3, 4)))
    p, q = empirical_marginals(full)
    np.testing.assert_allclose(p.weights, np.full(3, 1 / 3))
    np.testing.assert_allclose(q.weights, np.full(4, 1 / 4))
    row3 = SampleSet(4, 2, [2, 2, 2], [0, 1, 0], [1, 2, 3])
    np.testing.assert_array_equal(empirical_marginals(row3)[0].weights, [0, 0, 1, 0])
    s = SampleSet(3, 2, [0, 0, 1, 2], [0, 1, 0, 1], np.ones(4))
    np.testing.assert_allclose(empirical_marginals(s)[0].weights, [0.5, 0.25, 0.25])


@given(st.lists(st.integers(0, 9), min_size=1, max_size=300))
def test_marginals_sum_exactly_one(rows):
    s = SampleSet(10, 1, rows, np.zeros(len(rows), int), np.zeros(len(rows)))
    p, q = empirical_marginals(s)
    assert math.fsum(p.weights) == 1.0
    assert np.all(p.weights >= 0)
    counts = np.bincount(rows, minlength=10)
    np.testing.assert_allclose(p.weights, counts / len(rows), atol=1e-15)


def test_marginals_empty():
    with pytest.raises(ValueError):
        empirical_marginals(SampleSet(2, 2, [], [], []))


# -- splits ---------------------------------------------------------------------

def test_split_exact_partition(rng):
    s = dense_samples(rng.standard_normal((5, 4)))
    parts = split_ratings(s, (10, 6, 4), seed=0)
    assert [len(p) for p in parts] == [10, 6, 4]
    assert set.union(*map(cells, parts)) == cells(s)
    again = split_ratings(s, (10, 6, 4), seed=0)
    for a, b in zip(parts, again):
        np.testing.assert_array_equal(a.values, b.values)


def test_split_covers_all_partitions():
    s = SampleSet(1, 4, np.zeros(4, int), np.arange(4), np.arange(4.0))
    seen = set()
    for seed in range(400):
        tr, va, te = split_ratings(s, (2, 1, 1), seed=seed)
        seen.add((frozenset(tr.values), va.values[0], te.values[0]))
    assert len(seen) == math.factorial(4) // (math.factorial(2))


def test_split_errors():
    s = dense_samples(np.zeros((2, 2)))
    with pytest.raises(InfeasibleError):
        split_ratings(s, (3, 1, 1))
    with pytest.raises(ValueError):
        split_ratings(s, (1, 1))


def test_iid_sampler_uses_marginals():
    Y = np.arange(12.0).reshape(3, 4)
    s = sample_iid(Y, 500, p_rows=[0, 1, 0], seed=1)
    assert set(s.rows.tolist()) == {1}
    np.testing.assert_array_equal(s.values, Y[s.rows, s.cols])


def test_sample_set_validation():
    with pytest.raises(ValueError):
        SampleSet(2, 2, [0, 2], [0, 0], [1, 1])
    with pytest.raises(ValueError):
        SampleSet(2, 2, [0], [0, 1], [1])
    with pytest.raises(ValueError):
        SampleSet(2, 2, [0], [0], [1], role="holdout")


# -- ratings files ----------------------------------------------------------------

def test_double_colon_example(tmp_path):
    f = tmp_path / "r.dat"
    f.write_text("1::32::4.5::978300760\n")
    s, diag = load_ratings(f)
    assert s.triples() == [(0, 0, 4.5)]
    assert s.row_ids == ["1"] and s.col_ids == ["32"]
    assert diag == []


def test_empty_file(tmp_path):
    f = tmp_path / "empty.tsv"
    f.write_text("")
    with pytest.raises(RatingsFormatError, match="no valid lines"):
        load_ratings(f)


def test_malformed_line_reported(tmp_path):
    f = tmp_path / "r.csv"
    f.write_text("1,10,3\n2,oops\n2,10,4.0\n")
    s, diag = load_ratings(f)
    assert len(s) == 2 and len(diag) == 1
    assert diag[0].endswith(":2: expected 3 or 4 fields, got 2")
    assert s.triples() == [(0, 0, 3.0), (1, 0, 4.0)]


def test_bad_rating_value(tmp_path):
    f = tmp_path / "r.tsv"
    f.write_text("1\t2\tfive\n1\t3\tnan\n1\t4\t2\n")
    s, diag = load_ratings(f, fmt="tab")
    assert len(s) == 1 and len(diag) == 2
    assert ":1:" in diag[0] and ":2:" in diag[1]


def test_shared_id_maps(tmp_path):
    a, b = tmp_path / "a.tsv", tmp_path / "b.tsv"
    a.write_text("u1\ti1\t1\nu2\ti2\t2\n")
    b.write_text("u2\ti1\t3\nu3\ti3\t4\n")
    rm, cm = IdMap(), IdMap()
    sa, _ = load_ratings(a, row_map=rm, col_map=cm)
    sb, _ = load_ratings(b, row_map=rm, col_map=cm)
    assert sb.triples() == [(1, 0, 3.0), (2, 2, 4.0)]
    assert (sb.n, sb.m) == (3, 3) and (sa.n, sa.m) == (2, 2)


@pytest.mark.parametrize("fmt", ["tab", "double-colon", "comma"])
def test_ratings_round_trip(tmp_path, fmt):
    s = synthetic_ratings(20, 15, 60, seed=2)
    f = tmp_path / "r.txt"
    write_ratings(s, f, fmt, timestamps=fmt == "double-colon")
    back, diag = load_ratings(f)
    assert diag == [] and len(back) == 60
    orig = {(s.row_ids[i], s.col_ids[j]): v for i, j, v in s.triples()}
    got = {(back.row_ids[i], back.col_ids[j]): v for i, j, v in back.triples()}
    assert orig == got


def test_unknown_format(tmp_path):
    f = tmp_path / "r.txt"
    f.write_text("1,2,3\n")
    with pytest.raises(ValueError):
        load_ratings(f, fmt="json")


def test_synthetic_ratings_shape():
    s = synthetic_ratings(300, 200, 5000, seed=1)
    assert len(s) == 5000 and len(cells(s)) == 5000
    assert set(np.unique(s.values)) <= set(np.arange(1, 11) / 2)
    p, _ = empirical_marginals(s)
    # skewed marginals: the top user is far above the uniform share
    assert p.weights.max() > 5 / 300
    counts = Counter(s.rows.tolist())
    assert counts[0] > counts[299]


def test_matrix_and_split_files(tmp_path, rng):
    Y = rng.standard_normal((3, 4))
    write_matrix(Y, tmp_path / "Y.csv")
    np.testing.assert_array_equal(read_matrix(tmp_path / "Y.csv"), Y)
    _, splits = simulate(SimulationSpec(12, 1, seed=0))
    write_splits(splits, tmp_path / "s.csv")
    lines = (tmp_path / "s.csv").read_text().splitlines()
    assert lines[0] == "i,j,value,role" and len(lines) == 145
    assert Counter(line.rsplit(",", 1)[1] for line in lines[1:]) == {
        "train": 36, "validation": 36, "test": 72}


def test_read_matrix_rejects_nonfinite(tmp_path):
    (tmp_path / "bad.csv").write_text("1,nan\n2,3\n")
    with pytest.raises(ValueError):
        read_matrix(tmp_path / "bad.csv")
