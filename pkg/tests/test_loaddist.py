import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from dpsac.loaddist import (add_app, load_distribution, p_full, point_mass, remove_app, tail,
                            transition_matrix)
from oracles import markov_step, subset_pmf

apps_st = st.lists(st.tuples(st.integers(1, 8), st.floats(0, 1)), min_size=0, max_size=7)


def test_small_examples():
    assert load_distribution([(1, 0.5)]).pmf.tolist() == [0.5, 0.5]
    assert load_distribution([(1, 0.5), (2, 0.5)]).pmf.tolist() == [0.25] * 4
    d = load_distribution([(7, 0.0)])
    assert d.pmf[0] == 1 and d.pmf[1:].sum() == 0
    assert add_app(point_mass(), (1, 0.5)).pmf.tolist() == [0.5, 0.5]
    padded = add_app(load_distribution([(1, 0.3)]), (4, 0.0))
    assert padded.pmf.tolist() == [0.7, 0.3, 0, 0, 0, 0]


def test_remove_examples():
    assert remove_app(load_distribution([(1, 0.5)]), (1, 0.5)).pmf.tolist() == [1.0]
    np.testing.assert_allclose(remove_app(load_distribution([(1, 0.5), (2, 0.5)]), (2, 0.5)).pmf, [0.5, 0.5])
    with pytest.raises(KeyError):
        remove_app(load_distribution([(1, 0.5)]), (3, 0.5))


@settings(max_examples=100, deadline=None)
@given(apps_st)
def test_matches_enumeration(apps):
    d = load_distribution(apps)
    np.testing.assert_allclose(d.pmf, subset_pmf(apps), atol=1e-12)
    assert d.mean() == pytest.approx(sum(B * P for B, P in apps), abs=1e-9)
    assert d.pmf.sum() == pytest.approx(1.0)


@settings(max_examples=100, deadline=None)
@given(st.lists(st.tuples(st.integers(1, 8), st.floats(0, 0.99)), min_size=1, max_size=6),
       st.tuples(st.integers(1, 8), st.floats(0, 0.99)))
def test_add_remove_roundtrip(apps, extra):
    base = load_distribution(apps)
    back = remove_app(add_app(base, extra), extra)
    np.testing.assert_allclose(back.pmf, base.pmf, atol=1e-9)
    # removing a member from the middle matches a rebuild without it
    mid = remove_app(base, apps[0])
    np.testing.assert_allclose(mid.pmf, load_distribution(apps[1:]).pmf, atol=1e-9)


def test_remove_near_certain_app_rebuilds():
    d = load_distribution([(2, 0.3), (3, 1.0)])
    np.testing.assert_allclose(remove_app(d, (3, 1.0)).pmf, [0.7, 0, 0.3])


def test_pmf_is_read_only():
    d = load_distribution([(1, 0.5)])
    with pytest.raises(ValueError):
        d.pmf[0] = 3


@pytest.mark.parametrize("bad", [(0, 0.5), (1.5, 0.5), (2, -0.1), (2, 1.1)])
def test_bad_apps(bad):
    with pytest.raises(ValueError):
        load_distribution([bad])


def test_tail():
    d = load_distribution([(1, 0.5), (2, 0.5)])
    assert tail(d, 2) == 0.5
    assert tail(d, 0) == 1.0
    assert tail(d, 4) == 0.0
    assert tail(d, 1.5) == 0.5  # fractional thresholds round up


def test_transition_examples():
    M = transition_matrix(point_mass(), 2, 1)
    np.testing.assert_array_equal(M, [[1, 0, 0], [1, 0, 0], [0, 1, 0]])
    d = load_distribution([(2, 0.5)])
    M = transition_matrix(d, 2, 1)
    assert M[1].tolist() == [0.5, 0, 0.5]
    with pytest.raises(ValueError):
        transition_matrix(d, -1, 0)


@settings(max_examples=60, deadline=None)
@given(apps_st, st.integers(0, 30), st.integers(0, 20))
def test_transition_rows(apps, cap, drain):
    d = load_distribution(apps)
    M = transition_matrix(d, cap, drain)
    np.testing.assert_allclose(M.sum(axis=1), 1.0, atol=1e-9)
    m = cap // 2
    np.testing.assert_allclose(M[m], markov_step(list(d.pmf), cap, drain, m), atol=1e-12)


def test_p_full():
    d = load_distribution([(2, 0.5)])
    assert p_full(d, 1, 2, 1) == 0.5
    assert p_full(load_distribution([(3, 0.4), (2, 0.9)]), 0, 5, 1) == 0.0
    five = load_distribution([(5, 1.0)])
    assert p_full(five, 4, 4, 0) == 1.0
    with pytest.raises(ValueError):
        p_full(d, 3, 2, 1)
