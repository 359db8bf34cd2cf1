import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from negstream.core import Rng, TooFewNegatives, normalize
from negstream.negatives import IdModel
from negstream.scoring import (
    Grouping,
    ScoreConfig,
    classify,
    group_activations,
    group_score,
    make_grouping,
    neglabel_score,
    zero_shot_probabilities,
)

from conftest import random_model, unit_rows
from oracles import group_mp, neglabel_mp

seeds = st.integers(0, 2**32 - 1)


def equal_sim_setup(C, n, d=4):
    """Every ID and negative feature has the same cosine with v."""
    v = np.eye(d)[0]
    angles = np.linspace(0.1, 2.0, C + n)
    rows = np.stack([normalize([0.3, math.cos(a), math.sin(a), 0.0]) for a in angles])
    return v, IdModel(rows[:C], rows[:C]), rows[C:]


def test_zero_shot_examples():
    v, m, _ = equal_sim_setup(4, 0)
    np.testing.assert_allclose(zero_shot_probabilities(v, m, 0.01), [0.25] * 4)
    m1 = IdModel(np.eye(3)[:1], np.eye(3)[:1])
    np.testing.assert_allclose(zero_shot_probabilities(np.eye(3)[1], m1, 0.01), [1.0])
    # two classes with similarities 0.8 and 0.2
    t = np.stack([normalize([0.8, 0.6, 0.0]), normalize([0.2, 0.0, math.sqrt(0.96)])])
    p = zero_shot_probabilities(np.eye(3)[0], IdModel(t, t), 0.01)
    want = 1.0 / (1.0 + math.exp(-60.0))
    assert p[0] == pytest.approx(want, rel=1e-12)
    assert p.sum() == pytest.approx(1.0, abs=1e-9)


def test_neglabel_examples():
    v, m, neg = equal_sim_setup(2, 2)
    assert neglabel_score(v, m, np.zeros((0, 4)), 0.01) == 1.0
    assert neglabel_score(v, m, neg, 0.01) == pytest.approx(0.5, abs=1e-12)


def test_neglabel_matches_high_precision(gen):
    for _ in range(50):
        m = random_model(gen, 2, 8)
        v, neg = unit_rows(gen, 1, 8)[0], unit_rows(gen, 3, 8)
        want = neglabel_mp(v, m.class_text_features, neg, 0.01)
        assert neglabel_score(v, m, neg, 0.01) == pytest.approx(want, rel=1e-9)


def test_large_logits_do_not_overflow():
    v = np.eye(2)[0]
    m = IdModel(np.eye(2)[:1], np.eye(2)[:1])
    s = neglabel_score(v, m, np.array([[1.0, 0.0]]), 1e-4)
    assert s == pytest.approx(0.5)


def test_grouping_examples():
    r = Rng(0)
    assert [b - a for a, b in make_grouping(10, 5, r).boundaries] == [2] * 5
    assert sorted(b - a for a, b in make_grouping(11, 5, r).boundaries) == [2, 2, 2, 2, 3]
    assert [b - a for a, b in make_grouping(7, 7, r).boundaries] == [1] * 7
    with pytest.raises(TooFewNegatives):
        make_grouping(4, 5, r)


@given(st.integers(1, 200), st.integers(1, 20), seeds)
def test_grouping_is_balanced_bijection(n, G, seed):
    if n < G:
        return
    g = make_grouping(n, G, Rng(seed))
    assert sorted(g.permutation.tolist()) == list(range(n))
    sizes = [b - a for a, b in g.boundaries]
    assert max(sizes) - min(sizes) <= 1 and sum(sizes) == n


def test_group_score_examples():
    # one ID class and C_scale = 1 make P equal to every A_g
    v, m, neg = equal_sim_setup(1, 6)
    for G in (1, 2, 3, 6):
        g = make_grouping(6, G, Rng(G))
        assert group_score(v, m, neg, g, ScoreConfig(G=G, C_scale=1.0)) == pytest.approx(0.5, abs=1e-12)
    # with C classes the default C_scale = C restores the balance
    v, m, neg = equal_sim_setup(3, 6)
    g = make_grouping(6, 2, Rng(0))
    assert group_score(v, m, neg, g, ScoreConfig(G=2)) == pytest.approx(0.5, abs=1e-12)


@given(seeds, st.integers(1, 10), st.integers(1, 50), st.sampled_from([0.01, 0.1, 1.0]))
def test_group_score_matches_high_precision(seed, C, n, tau):
    g = np.random.default_rng(seed)
    m = random_model(g, C, 8)
    v, neg = unit_rows(g, 1, 8)[0], unit_rows(g, n, 8)
    G = int(g.integers(1, n + 1))
    grouping = make_grouping(n, G, Rng(seed))
    cfg = ScoreConfig(tau=tau, G=G)
    want = group_mp(v, m.class_text_features, neg, grouping.groups(), tau, C)
    assert group_score(v, m, neg, grouping, cfg) == pytest.approx(want, rel=1e-9)


@given(seeds, st.integers(1, 10))
def test_reduction_to_neglabel(seed, C):
    g = np.random.default_rng(seed)
    m = random_model(g, C, 8)
    v, neg = unit_rows(g, 1, 8)[0], unit_rows(g, C, 8)
    grouping = make_grouping(C, 1, Rng(seed))
    gs = group_score(v, m, neg, grouping, ScoreConfig(tau=0.01, G=1))
    assert abs(gs - neglabel_score(v, m, neg, 0.01)) < 1e-9


@given(seeds)
def test_scores_strictly_inside_unit_interval(seed):
    g = np.random.default_rng(seed)
    m = random_model(g, 3, 8)
    v, neg = unit_rows(g, 1, 8)[0], unit_rows(g, 6, 8)
    grouping = make_grouping(6, 3, Rng(seed))
    for tau in (0.1, 1.0):
        assert 0 < neglabel_score(v, m, neg, tau) < 1
        assert 0 < group_score(v, m, neg, grouping, ScoreConfig(tau=tau, G=3)) < 1


@given(seeds, st.integers(0, 5))
def test_monotone_in_negative_similarity(seed, j):
    g = np.random.default_rng(seed)
    m = random_model(g, 3, 8)
    v, neg = unit_rows(g, 1, 8)[0], unit_rows(g, 6, 8)
    closer = neg.copy()
    closer[j] = normalize(neg[j] + 0.5 * v)
    if closer[j] @ v <= neg[j] @ v + 1e-6:
        return
    grouping = make_grouping(6, 3, Rng(seed))
    cfg = ScoreConfig(tau=0.1, G=3)
    assert neglabel_score(v, m, closer, 0.1) < neglabel_score(v, m, neg, 0.1)
    assert group_score(v, m, closer, grouping, cfg) < group_score(v, m, neg, grouping, cfg)


@given(seeds)
def test_monotone_in_id_similarity(seed):
    g = np.random.default_rng(seed)
    m = random_model(g, 3, 8)
    v, neg = unit_rows(g, 1, 8)[0], unit_rows(g, 6, 8)
    text = m.class_text_features.copy()
    text[0] = normalize(text[0] + 0.5 * v)
    if text[0] @ v <= m.class_text_features[0] @ v + 1e-6:
        return
    m2 = IdModel(text, m.prototypes)
    grouping = make_grouping(6, 3, Rng(seed))
    cfg = ScoreConfig(tau=0.1, G=3)
    assert neglabel_score(v, m2, neg, 0.1) > neglabel_score(v, m, neg, 0.1)
    assert group_score(v, m2, neg, grouping, cfg) > group_score(v, m, neg, grouping, cfg)


@given(seeds)
def test_within_group_order_irrelevant(seed):
    g = np.random.default_rng(seed)
    m = random_model(g, 3, 8)
    v, neg = unit_rows(g, 1, 8)[0], unit_rows(g, 12, 8)
    grouping = make_grouping(12, 3, Rng(seed))
    shuffled = np.concatenate([g.permutation(grp) for grp in grouping.groups()])
    other = Grouping(shuffled, grouping.boundaries)
    cfg = ScoreConfig(tau=0.01, G=3)
    assert abs(group_score(v, m, neg, grouping, cfg) - group_score(v, m, neg, other, cfg)) <= 1e-12


@given(seeds)
def test_duplicated_members_leave_activation_unchanged(seed):
    g = np.random.default_rng(seed)
    m = random_model(g, 3, 8)
    v, neg = unit_rows(g, 1, 8)[0], unit_rows(g, 4, 8)
    one = Grouping(np.arange(4), [(0, 4)])
    doubled = Grouping(np.arange(8), [(0, 8)])
    cfg = ScoreConfig(tau=0.05, G=1)
    P1, A1, m1 = group_activations(v, m, neg, one, cfg)
    P2, A2, m2 = group_activations(v, m, np.vstack([neg, neg]), doubled, cfg)
    assert m1 == m2
    assert abs(A1[0] - A2[0]) <= 1e-12 * max(1.0, A1[0])


def test_classify_boundary():
    assert classify(0.5, 0.5) == "ID"
    assert classify(0.49, 0.5) == "OOD"
    assert classify(1.0, 0.0) == "ID"
