import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from symcorr.correlation import AffineMap, ScProjector
from symcorr.exceptions import ContractError
from symcorr.pruning import (
    PruneConfig,
    brute_force_prune,
    greedy_prune,
    greedy_select,
    jensen_gap_report,
    multilayer_prune,
    multilayer_terms,
    score_table,
    theta_term,
    topk_prune,
)


def unit_init(d):
    return ScProjector.from_query_map(AffineMap.identity(d))


def test_theta_self_term_unit_init(rng):
    x = rng.normal(size=(5, 4))
    m = x.mean(axis=0)
    assert theta_term(x, x, unit_init(4)) == pytest.approx(m @ m / 4, rel=1e-14)


def test_theta_orthogonal_under_direction_only():
    d = 3
    p = ScProjector(AffineMap.constant(d), AffineMap.identity(d))
    s = np.array([[1.0, 0, 0], [3.0, 0, 0]])
    q = np.array([[0, 2.0, 0], [0, 0, 0.0], [0, 1.0, 0]])
    assert theta_term(s, q, p) == 0.0


def test_theta_against_raw_recomputation(rng):
    d = 5
    p = ScProjector.random(d, rng)
    s, q = rng.normal(size=(6, d)), rng.normal(size=(4, d))

    def f(t):
        a = p.f1.weight @ t + p.f1.bias
        b = p.f2.weight @ t + p.f2.bias
        return a * b / math.sqrt(b @ b)

    expect = float(f(s.mean(axis=0)) @ f(q.mean(axis=0)))
    assert abs(theta_term(s, q, p) - expect) <= 1e-12


def test_greedy_on_known_terms():
    r = greedy_select([0.9, 0.1, 0.5], 2)
    assert r.selected_ids == [0, 2]
    assert r.objective_value == pytest.approx(1.4)


def test_greedy_exhaustion_orders_descending(rng):
    terms = rng.normal(size=6)
    assert greedy_select(terms, 6).selected_ids == list(np.argsort(-terms))


def test_topk_examples():
    assert set(topk_prune([0.9, 0.1, 0.5], 2).selected_ids) == {0, 2}
    assert topk_prune([0.3] * 5, 3).selected_ids == [0, 1, 2]
    assert greedy_select([0.3] * 5, 3).selected_ids == [0, 1, 2]


@pytest.mark.parametrize("bad", [0, 4, 1.5])
def test_n_prime_range(bad):
    with pytest.raises(ContractError):
        greedy_select([1.0, 2.0, 3.0], bad)
    with pytest.raises(ContractError):
        topk_prune([1.0, 2.0, 3.0], bad)


def random_pool(rng, n, d=4):
    return [rng.normal(size=(int(rng.integers(1, 6)), d)) + rng.normal(size=d) for _ in range(n)]


def test_greedy_topk_brute_agree_on_random_pools():
    for seed in range(100):
        rng = np.random.default_rng(seed)
        n = int(rng.integers(1, 11))
        n_prime = int(rng.integers(1, min(4, n) + 1))
        pool, query = random_pool(rng, n), rng.normal(size=(5, 4))
        p = ScProjector.random(4, rng)
        g = greedy_prune(pool, query, p, n_prime)
        table = score_table(pool, query, p)
        t = topk_prune(table, n_prime)
        b = brute_force_prune(table.per_support_theta_term, n_prime)
        assert set(g.selected_ids) == set(t.selected_ids) == set(b.selected_ids)
        assert g.objective_value == pytest.approx(b.objective_value, abs=1e-12)
        assert g.evaluations <= n_prime * n
        assert b.evaluations == math.comb(n, n_prime)


@settings(max_examples=100)
@given(st.lists(st.floats(-10, 10), min_size=2, max_size=12), st.data())
def test_additivity(terms, data):
    n = len(terms)
    ids = data.draw(st.permutations(range(n)))
    cut = data.draw(st.integers(0, n))
    left, right = ids[:cut], ids[cut:]
    t = np.array(terms)
    assert math.fsum(t[left + right]) == pytest.approx(math.fsum(t[left]) + math.fsum(t[right]), abs=1e-12)


def test_permutation_equivariance(rng):
    terms = rng.normal(size=9)
    perm = rng.permutation(9)
    base = greedy_select(terms, 4).selected_ids
    moved = greedy_select(terms[perm], 4).selected_ids
    inverse = np.argsort(perm)
    assert sorted(moved) == sorted(int(inverse[i]) for i in base)


def test_prune_config_threshold():
    c = PruneConfig()
    assert (c.threshold, c.keep) == (30, 30)
    assert not c.active(30) and c.active(31)
    assert not PruneConfig(enabled=False).active(100)


def test_multilayer_single_layer_equals_greedy(rng):
    pool, query = random_pool(rng, 7), rng.normal(size=(4, 4))
    p = ScProjector.random(4, rng)
    a = multilayer_prune([pool], [query], [p], 3)
    b = greedy_prune(pool, query, p, 3)
    assert a.selected_ids == b.selected_ids


def test_multilayer_average_tie_goes_low():
    terms = np.mean([[0.2, 0.8], [0.8, 0.2]], axis=0)
    assert terms[0] == terms[1]
    assert greedy_select(terms, 1).selected_ids == [0]


def test_multilayer_against_manual_average(rng):
    pools = [random_pool(rng, 8) for _ in range(3)]
    queries = [rng.normal(size=(4, 4)) for _ in range(3)]
    ps = [ScProjector.random(4, rng) for _ in range(3)]
    manual = np.mean([score_table(pools[l], queries[l], ps[l]).per_support_theta_term
                      for l in range(3)], axis=0)
    np.testing.assert_array_equal(multilayer_terms(pools, queries, ps), manual)
    assert set(multilayer_prune(pools, queries, ps, 3).selected_ids) == set(topk_prune(manual, 3).selected_ids)


def test_multilayer_rejects_ragged(rng):
    with pytest.raises(ContractError):
        multilayer_terms([random_pool(rng, 3), random_pool(rng, 2)], [rng.normal(size=(2, 4))] * 2,
                         [unit_init(4)] * 2)


def test_jensen_gap_single_copy(rng):
    x = rng.normal(size=(1, 3))
    p = ScProjector.random(3, rng)
    (row,) = jensen_gap_report([x], x, p)
    assert row.delta == 1.0
    assert row.gap == pytest.approx(1.0 - row.theta_term)


def test_jensen_gap_report_length_and_summary(rng):
    gaps = []
    for seed in range(100):
        r = np.random.default_rng(seed)
        pool = random_pool(r, int(r.integers(1, 6)))
        rep = jensen_gap_report(pool, r.normal(size=(3, 4)), ScProjector.random(4, r))
        assert len(rep) == len(pool)
        gaps += [g.gap for g in rep]
    # documented, not asserted: the sign of the gap varies
    assert np.all(np.isfinite(gaps))
    print(f"jensen gap min {min(gaps):.3f} mean {np.mean(gaps):.3f} max {max(gaps):.3f}")


def test_pruning_uses_mean_tokens_only(rng, monkeypatch):
    import symcorr.pruning as pruning

    def boom(*a, **k):
        raise AssertionError("token-level attention formed during pruning")

    monkeypatch.setattr(pruning, "multi_head_sc", boom)
    pool, query = random_pool(rng, 12), rng.normal(size=(4, 4))
    greedy_prune(pool, query, ScProjector.random(4, rng), 4)


def test_brute_force_is_exhaustive():
    terms = [1.0, 5.0, -2.0, 4.0]
    r = brute_force_prune(terms, 2)
    assert sorted(r.selected_ids) == [1, 3]
    assert r.evaluations == len(list(itertools.combinations(range(4), 2)))
