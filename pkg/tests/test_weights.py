import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from localmax.oracle import GridSpec, brute_linmax
from localmax.weights import (InfeasibleError, MarginalDist, SegmentSet, WeightSet,
                              capped_exponent, capped_multiplicative, dual_offset, full_simplex,
                              greedy_fill, linmax, lower_bounded, singleton, smoothed,
                              smoothing_segment, uniform_cap, vec_norm)

from conftest import cap_sets, random_dist

vectors = st.lists(st.floats(0, 10, allow_nan=False), min_size=4, max_size=4)


# -- constructors -------------------------------------------------------------

def test_uniform_singleton_is_averaging():
    s = singleton(np.full(4, 0.25))
    assert s.is_singleton
    assert linmax(s, [1, 2, 3, 6])[0] == pytest.approx(3.0)


def test_singleton_linmax_is_dot(rng):
    r = random_dist(rng, 5)
    v = rng.uniform(0, 3, 5)
    val, arg = linmax(singleton(r), v)
    assert val == pytest.approx(r @ v, abs=1e-14)
    np.testing.assert_allclose(arg, r)


def test_smoothed_endpoints():
    p = np.array([0.7, 0.2, 0.1])
    np.testing.assert_allclose(smoothed(p, 1).base, np.full(3, 1 / 3), atol=1e-15)
    np.testing.assert_allclose(smoothed(p, 0).base, p)


def test_smoothed_half():
    s = smoothed([0.5, 0.3, 0.2], 0.5)
    np.testing.assert_allclose(s.base, [0.416667, 0.316667, 0.266667], atol=1e-6)


def test_smoothed_rejects_bad_zeta():
    with pytest.raises(ValueError):
        smoothed([0.5, 0.5], 1.5)


def test_full_simplex_picks_max():
    val, arg = linmax(full_simplex(3), [2, 5, 3])
    assert val == 5
    np.testing.assert_array_equal(arg, [0, 1, 0])


def test_full_simplex_vec_norm_is_linf():
    assert vec_norm(full_simplex(3), [1, -7, 2]) == pytest.approx(7)


def test_full_simplex_dimension_one():
    s = full_simplex(1)
    assert s.is_singleton
    assert s.contains([1.0])


def test_uniform_cap_lower_end_is_uniform_singleton():
    s = uniform_cap(4, 0.25)
    assert s.is_singleton
    np.testing.assert_allclose(s.center(), np.full(4, 0.25))


def test_uniform_cap_upper_end_is_simplex(rng):
    v = rng.uniform(0, 1, 5)
    assert linmax(uniform_cap(5, 1.0), v)[0] == linmax(full_simplex(5), v)[0]


def test_uniform_cap_half():
    assert linmax(uniform_cap(4, 0.5), [4, 1, 0, 0])[0] == pytest.approx(2.5)


def test_uniform_cap_rejects_empty():
    with pytest.raises(InfeasibleError):
        uniform_cap(4, 0.2)
    with pytest.raises(ValueError):
        uniform_cap(4, 1.5)


def test_multiplicative_gamma_one_is_singleton():
    p = np.array([0.5, 0.3, 0.2])
    s = capped_multiplicative(p, 0.3, 1.0)
    assert s.is_singleton
    np.testing.assert_allclose(s.center(), 0.7 * p + 0.1, atol=1e-15)


def test_multiplicative_large_gamma_is_simplex():
    s = capped_multiplicative([0.5, 0.3, 0.2], 0.0, 1e6)
    np.testing.assert_array_equal(s.caps, 1.0)


def test_multiplicative_uniform_matches_uniform_cap():
    s = capped_multiplicative(np.full(4, 0.25), 0.4, 2.0)
    np.testing.assert_allclose(s.caps, uniform_cap(4, 0.5).caps)


def test_multiplicative_rejects_small_gamma():
    with pytest.raises(InfeasibleError):
        capped_multiplicative([0.9, 0.1], 0.0, 0.5)


def test_exponent_tau_zero_is_smoothed_singleton():
    p = np.array([0.6, 0.3, 0.1])
    s = capped_exponent(p, 0.2, 0.0)
    assert s.is_singleton
    np.testing.assert_allclose(s.center(), 0.8 * p + 0.2 / 3, atol=1e-15)


def test_exponent_tau_one_is_simplex():
    s = capped_exponent([0.6, 0.4, 0.0], 0.0, 1.0)
    np.testing.assert_array_equal(s.caps, 1.0)


def test_exponent_square_root_caps():
    np.testing.assert_allclose(capped_exponent([0.64, 0.36], 0, 0.5).caps, [0.8, 0.6])


def test_exponent_rejects_bad_tau():
    with pytest.raises(ValueError):
        capped_exponent([0.5, 0.5], 0, -0.1)


def test_lower_bounded_endpoints():
    assert lower_bounded(3, 1.0).is_singleton
    np.testing.assert_allclose(lower_bounded(3, 1.0).base, np.full(3, 1 / 3))
    s = lower_bounded(3, 0.0)
    assert s.scale == 1 and not s.base.any()


def test_lower_bounded_members_respect_floor(rng):
    s = lower_bounded(3, 0.5)
    assert s.base == pytest.approx([0.25] * 3) and s.scale == pytest.approx(0.25)
    for _ in range(200):
        r = s.base + s.scale * rng.dirichlet(np.ones(3))
        assert s.contains(r)
        assert r.min() >= 0.25 - 1e-15


def test_segment_linmax_endpoints(rng):
    p = random_dist(rng, 5)
    v = rng.uniform(0, 2, 5)
    seg = smoothing_segment(p)
    assert linmax(seg, v)[0] == pytest.approx(max(p @ v, v.mean()))


def test_segment_example_and_dense_grid():
    seg = smoothing_segment([0.9, 0.1])
    v = np.array([1.0, 3.0])
    assert linmax(seg, v)[0] == pytest.approx(2.0)
    zetas = np.linspace(0, 1, 1001)
    dense = max(((1 - z) * np.array([0.9, 0.1]) + z / 2) @ v for z in zetas)
    assert linmax(seg, v)[0] == pytest.approx(dense)


def test_segment_uniform_degenerates():
    assert smoothing_segment(np.full(3, 1 / 3)).is_singleton


def test_marginal_validation():
    with pytest.raises(ValueError):
        MarginalDist([0.5, 0.6])
    with pytest.raises(ValueError):
        MarginalDist([-0.1, 1.1])
    assert MarginalDist.from_counts([1, 1, 2]).weights == pytest.approx([0.25, 0.25, 0.5])


def test_weightset_invariants():
    with pytest.raises(ValueError):
        WeightSet([0.5, 0.5], 0.5, [1, 1])
    with pytest.raises(InfeasibleError):
        WeightSet([0, 0, 0], 1.0, [0.3, 0.3, 0.3])


def test_trivial_indices():
    s = capped_exponent([0.5, 0.5, 0.0], 0.0, 0.0)
    assert s.trivial_indices().tolist() == [2]
    assert capped_exponent([0.5, 0.5, 0.0], 0.1, 0.0).trivial_indices().size == 0


# -- linear maximization ------------------------------------------------------

def test_linmax_capped_example():
    s = WeightSet(np.zeros(3), 1.0, [0.6, 0.6, 0.6])
    val, arg = linmax(s, [3, 2, 1])
    assert val == pytest.approx(2.6)
    np.testing.assert_allclose(arg, [0.6, 0.4, 0.0])
    assert brute_linmax(s, [3, 2, 1], GridSpec(0.01)) == pytest.approx(2.6)


def test_linmax_half_caps_example():
    s = WeightSet(np.zeros(2), 1.0, [0.5, 0.5])
    val, arg = linmax(s, [4, 2])
    assert val == pytest.approx(3.0)
    np.testing.assert_allclose(arg, [0.5, 0.5])


def test_linmax_ties_break_by_index():
    arg = linmax(full_simplex(3), [1, 2, 2])[1]
    np.testing.assert_array_equal(arg, [0, 1, 0])
    np.testing.assert_allclose(greedy_fill([0.6, 0.6, 0.6], [2, 2, 2]), [0.6, 0.4, 0])


def test_linmax_dimension_mismatch():
    with pytest.raises(ValueError):
        linmax(full_simplex(3), [1, 2])


def test_dual_offset_examples():
    a, val = dual_offset(np.ones(3), [3, 1, 2])
    assert val == pytest.approx(3.0)
    a, val = dual_offset([0.6, 0.6, 0.6], [3, 2, 1])
    assert (a, val) == (2.0, pytest.approx(2.6))
    a, val = dual_offset([0.5, 0.7, 0.9], [1.5, 1.5, 1.5])
    assert (a, val) == (1.5, 1.5)


def test_dual_offset_rejects_small_caps():
    with pytest.raises(ValueError):
        dual_offset([0.3, 0.3], [1, 2])


def test_dual_offset_returns_smallest_minimizer(rng):
    for _ in range(50):
        n = rng.integers(2, 7)
        caps = np.clip(rng.uniform(0.1, 1, n), 0, 1)
        if caps.sum() < 1:
            caps = np.ones(n)
        v = rng.integers(0, 4, n).astype(float)
        a, val = dual_offset(caps, v)
        objective = lambda b: b + caps @ np.maximum(v - b, 0)
        assert objective(a) == pytest.approx(val, abs=1e-12)
        grid = np.linspace(v.min() - 1, v.max() + 1, 2001)
        assert min(objective(b) for b in grid) >= val - 1e-12
        # moving below a strictly loses unless a is already the smallest entry
        assert objective(a - 1e-3) > val + 1e-6 or a == v.min()


@given(cap_sets(), vectors)
def test_linmax_matches_lattice_oracle(wset, v):
    v = np.asarray(v[:wset.n])
    step = 0.01 if wset.n <= 3 else 0.02
    try:
        brute = brute_linmax(wset, v, GridSpec(step))
    except ValueError:
        return  # caps admit no lattice point at this step
    val = linmax(wset, v)[0]
    assert brute <= val + 1e-12
    assert val <= brute + max(v.max(initial=0), 1e-12) * step * wset.n + 1e-12


@given(cap_sets(), vectors)
def test_dual_route_matches_greedy(wset, v):
    v = np.asarray(v[:wset.n])
    val, arg = linmax(wset, v)
    hinge = wset.base @ v + wset.scale * dual_offset(wset.caps, v)[1]
    assert hinge == pytest.approx(val, abs=1e-10 * (1 + val))
    assert arg @ v == pytest.approx(val, abs=1e-12 * (1 + val))
    assert wset.contains(arg)


@given(st.integers(1, 5), st.integers(0, 2 ** 32 - 1), vectors)
def test_caps_monotone(n, seed, v):
    rng = np.random.default_rng(seed)
    caps1 = rng.uniform(0, 1, n)
    if caps1.sum() < 1:
        caps1 = np.ones(n)
    caps2 = np.minimum(caps1 + rng.uniform(0, 0.5, n), 1)
    v = np.asarray((v * 2)[:n])
    s1 = WeightSet(np.zeros(n), 1.0, caps1)
    s2 = WeightSet(np.zeros(n), 1.0, caps2)
    assert linmax(s1, v)[0] <= linmax(s2, v)[0] + 1e-12


@given(cap_sets(n_min=4), vectors, vectors, st.floats(0, 10))
def test_linmax_sublinear(wset, v, w, c):
    v, w = np.asarray(v), np.asarray(w)
    assert linmax(wset, c * v)[0] == pytest.approx(c * linmax(wset, v)[0], abs=1e-9)
    assert linmax(wset, v + w)[0] <= linmax(wset, v)[0] + linmax(wset, w)[0] + 1e-9


@given(st.integers(0, 2 ** 32 - 1))
def test_vec_norm_axioms(seed):
    rng = np.random.default_rng(seed)
    n = 5
    p = random_dist(rng, n, floor=0.01)
    wset = capped_exponent(p, rng.uniform(0, 1), rng.uniform(0, 1))
    u, v = rng.standard_normal((2, n))
    c = rng.uniform(-3, 3)
    assert vec_norm(wset, u + v) <= vec_norm(wset, u) + vec_norm(wset, v) + 1e-12
    assert vec_norm(wset, c * u) == pytest.approx(abs(c) * vec_norm(wset, u))
    assert vec_norm(wset, u) > 0


def test_vec_norm_examples():
    assert vec_norm(uniform_cap(4, 0.5), [3, 4, 0, 0]) == pytest.approx(3.535534, abs=1e-6)
    assert vec_norm(singleton([0.5, 0.5]), [3, 4]) == pytest.approx(np.sqrt(12.5))


def test_vec_norm_between_l2_and_linf(rng):
    u = rng.standard_normal(6)
    p = random_dist(rng, 6)
    s = capped_exponent(p, 1.0, 0.5)
    rms = np.sqrt(np.mean(u * u))
    assert rms - 1e-12 <= vec_norm(s, u) <= np.abs(u).max() + 1e-12


@given(st.integers(0, 2 ** 32 - 1), vectors)
def test_exponent_monotone_in_tau(seed, v):
    rng = np.random.default_rng(seed)
    p = random_dist(rng, 4)
    zeta = rng.uniform(0, 1)
    taus = np.sort(rng.uniform(0, 1, 5))
    vals = [linmax(capped_exponent(p, zeta, t), np.asarray(v))[0] for t in taus]
    assert all(a <= b + 1e-12 for a, b in zip(vals, vals[1:]))


def test_segment_contains():
    seg = SegmentSet([0.8, 0.2])
    assert seg.contains([0.65, 0.35])
    assert not seg.contains([0.9, 0.1])
