import math
from fractions import Fraction as F

import pytest
from hypothesis import given, strategies as st
from scipy import stats

from progeq.rand_streams import (DeltaSchedule, PrivateStream, SharedStream, combine_seeds, derive_seed,
                                 reparameterize_first, sample_time_step)

seeds = st.integers(0, 2 ** 64 - 1)


@given(seeds, st.integers(0, 10 ** 6))
def test_elements_are_pure_functions_of_seed_and_index(seed, m):
    a, b = SharedStream(seed), SharedStream(seed)
    assert a.element(m) == b.element(m)
    assert 0.0 <= a.element(m) < 1.0


def test_huge_indices_are_supported():
    s = SharedStream(7)
    x = s.element(2 ** 70 + 3)
    assert 0.0 <= x < 1.0
    assert x == SharedStream(7).element(2 ** 70 + 3)


def test_derive_seed_separates_labels():
    seen = {derive_seed(1, "trial", k) for k in range(2000)}
    assert len(seen) == 2000
    assert derive_seed(1, "a") != derive_seed(2, "a")


@given(seeds, st.integers(0, 50), st.integers(0, 50), st.integers(0, 50))
def test_suffix_composes(seed, j, k, m):
    v = SharedStream(seed).view()
    assert v.suffix(j).suffix(k).element(m) == v.suffix(j + k).element(m) == v.element(j + k + m)


@given(seeds, st.integers(1, 6), st.data())
def test_partitions_are_disjoint_and_skip_element_zero(seed, k, data):
    v = SharedStream(seed).view()
    i = data.draw(st.integers(1, k))
    m = data.draw(st.integers(0, 40))
    assert v.partition(i, k).element(m) == v.element(m * k + i + 1)
    idx = {v.partition(a, k).raw_index(m2) for a in range(1, k + 1) for m2 in range(5)}
    assert len(idx) == 5 * k
    assert 0 not in idx


@given(seeds, st.floats(0.05, 0.9))
def test_first_below_is_the_first_hit(seed, eps):
    v = SharedStream(seed).view()
    t = v.first_below(eps)
    assert v.element(t) < eps
    assert all(v.element(s) >= eps for s in range(t))


def test_time_step_is_geometric():
    eps = 0.2
    n = 20000
    ts = [SharedStream(derive_seed(3, k)).view().first_below(eps) for k in range(n)]
    top = 15
    obs = [sum(1 for t in ts if t == s) for s in range(top)] + [sum(1 for t in ts if t >= top)]
    exp = [n * eps * (1 - eps) ** s for s in range(top)] + [n * (1 - eps) ** top]
    assert stats.chisquare(obs, exp).pvalue > 0.001


def test_uniformity_ks():
    xs = [SharedStream(11).element(m) for m in range(20000)]
    assert stats.kstest(xs, "uniform").pvalue > 0.001


def test_private_stream_reports_reads():
    reads = []
    p = PrivateStream(5, 0, lambda: reads.append(1))
    p.element(0)
    p.element(3)
    assert len(reads) == 2


def test_combine_seeds_is_xor():
    a, b = bytes([1, 2, 3]), bytes([255, 0, 3])
    assert combine_seeds([a, b]) == bytes([254, 2, 0])
    assert combine_seeds([a, a]) == bytes(3)
    with pytest.raises(ValueError):
        combine_seeds([a, b"\x00"])


# schedules --------------------------------------------------------------------

schedules = st.one_of(
    st.fractions(F(1, 50), 1, max_denominator=50).map(DeltaSchedule.geometric),
    st.integers(0, 6).map(DeltaSchedule.point),
    st.lists(st.integers(0, 5), min_size=1, max_size=5).filter(lambda w: sum(w) > 0)
      .map(lambda w: DeltaSchedule.finite([F(x, sum(w)) for x in w])),
    st.tuples(st.lists(st.integers(0, 4), min_size=1, max_size=3), st.integers(1, 4),
              st.fractions(0, F(19, 20), max_denominator=20))
      .map(lambda t: DeltaSchedule(tuple(F(x, sum(t[0]) + t[1]) for x in t[0]), F(t[1], sum(t[0]) + t[1]), t[2])),
)


@given(schedules, st.integers(0, 40))
def test_schedule_cdf_sums_probabilities(s, t):
    assert s.cdf(t) == sum((s.prob(k) for k in range(t + 1)), F(0))
    assert s.survival(t) == 1 - s.cdf(t - 1)
    assert abs(s.cdf_float(t) - float(s.cdf(t))) < 1e-12


@given(schedules, st.floats(0, 1, exclude_max=True))
def test_sample_is_the_cumulative_inverse(s, r0):
    t = s.sample(r0)
    assert s.prob(t) > 0
    assert s.cdf_float(t) > r0
    assert t == 0 or s.cdf_float(t - 1) <= r0


def test_geometric_schedule_matches_first_below():
    eps = F(1, 5)
    s = DeltaSchedule.geometric(eps)
    for t in range(10):
        assert s.prob(t) == eps * (1 - eps) ** t


@given(schedules, st.floats(1e-12, 1e-3))
def test_tail_horizon_is_minimal(s, tol):
    h = s.tail_horizon(tol)
    assert s.survival_float(h) < tol
    assert h == 0 or s.survival_float(h - 1) >= tol


def test_schedule_validation():
    with pytest.raises(ValueError):
        DeltaSchedule((F(1, 2),))
    with pytest.raises(ValueError):
        DeltaSchedule((), F(1), F(1))
    with pytest.raises(ValueError):
        DeltaSchedule.geometric(0)


@given(schedules, seeds, st.data())
def test_reparameterize_first_lands_in_the_bucket(s, seed, data):
    support = [t for t in range(8) if s.prob(t) > 0]
    if not support:
        return
    t = data.draw(st.sampled_from(support))
    v = reparameterize_first(SharedStream(seed).view(), t, s)
    assert sample_time_step(v, s) == t
    assert v.element(1) == SharedStream(seed).element(1)
