import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from renal import InsufficientDataError, InvalidInputError
from renal import generators as gen
from renal.baselines import (
    MmdConfig,
    ewd_bins,
    median_bandwidth,
    mmd2_unbiased,
    mmd_test,
    mmd_windows_test,
    rbf_gram,
    scott_bin_count,
    scott_bins,
    scott_rule,
    split_windows,
)
from renal.gof import assign_bins

SMALL = MmdConfig(n_subsequences=10, n_permutations=100)


def brute_mmd_from_gram(K, n0):
    n = K.shape[0]
    xs, ys = range(n0), range(n0, n)
    sxx = math.fsum(K[i, j] for i in xs for j in xs if i != j) / (n0 * (n0 - 1))
    syy = math.fsum(K[i, j] for i in ys for j in ys if i != j) / ((n - n0) * (n - n0 - 1))
    sxy = math.fsum(K[i, j] for i in xs for j in ys) / (n0 * (n - n0))
    return sxx + syy - 2.0 * sxy


def brute_mmd_raw(w0, w1):
    pooled = np.vstack([w0, w1])
    d2 = [float(np.sum((a - b) ** 2)) for i, a in enumerate(pooled) for b in pooled[i + 1:]]
    bw = float(np.median(d2))
    k = lambda a, b: math.exp(-float(np.sum((a - b) ** 2)) / bw)
    m, n = len(w0), len(w1)
    sxx = sum(k(w0[i], w0[j]) for i in range(m) for j in range(m) if i != j) / (m * (m - 1))
    syy = sum(k(w1[i], w1[j]) for i in range(n) for j in range(n) if i != j) / (n * (n - 1))
    sxy = sum(k(a, b) for a in w0 for b in w1) / (m * n)
    return sxx + syy - 2 * sxy


def test_mmd_matches_brute_force(rng):
    for m, n in ((5, 5), (4, 6), (10, 10)):
        w0, w1 = rng.standard_normal((m, 3)), rng.standard_normal((n, 3)) + 0.5
        pooled = np.vstack([w0, w1])
        K = rbf_gram(pooled, median_bandwidth(pooled))
        assert mmd2_unbiased(K, m) == brute_mmd_from_gram(K, m)
        rep = mmd_windows_test(w0, w1, SMALL, seed=0)
        assert rep.statistic == pytest.approx(brute_mmd_raw(w0, w1), rel=1e-12, abs=1e-15)


def test_mmd_symmetric_exactly(rng):
    a = gen.PROCESSES["arma1"](1, 500)
    b = gen.PROCESSES["garch"](2, 500)
    assert mmd_test(a, b, SMALL, 3).statistic == mmd_test(b, a, SMALL, 3).statistic


@given(st.integers(0, 2**32 - 1))
def test_mmd_symmetric_property(seed):
    r = np.random.default_rng(seed)
    w0, w1 = r.standard_normal((6, 2)), r.standard_normal((7, 2))
    pooled = np.vstack([w0, w1])
    swapped = np.vstack([w1, w0])
    bw = median_bandwidth(pooled)
    assert mmd2_unbiased(rbf_gram(pooled, bw), 6) == mmd2_unbiased(rbf_gram(swapped, bw), 7)


def test_identical_inputs_accepted():
    accepted = 0
    for s in range(30):
        d = gen.PROCESSES["arma1"](s, 500)
        rep = mmd_test(d, d, MmdConfig(), seed=s)
        assert abs(rep.statistic) < 0.05
        accepted += not rep.reject
    assert accepted >= 0.9 * 30


def test_separated_windows_rejected(rng):
    rejected = 0
    for s in range(20):
        r = np.random.default_rng(s)
        rep = mmd_windows_test(r.standard_normal((50, 10)), 3 + r.standard_normal((50, 10)), MmdConfig(), s)
        rejected += rep.reject
        assert rep.p_value == pytest.approx(1 / 201)
    assert rejected >= 0.95 * 20


def test_pvalues_super_uniform():
    hits = 0
    trials = 500
    for s in range(trials):
        r = np.random.default_rng(10_000 + s)
        rep = mmd_windows_test(r.standard_normal((10, 4)), r.standard_normal((10, 4)), SMALL, s)
        assert 1 / 101 <= rep.p_value <= 1
        hits += rep.p_value <= 0.05
    assert hits / trials <= 0.05 + 0.03


def test_mmd_seeded():
    a, b = gen.PROCESSES["arma1"](1, 500), gen.PROCESSES["arma2"](1, 500)
    assert mmd_test(a, b, SMALL, 4) == mmd_test(a, b, SMALL, 4)
    s = mmd_test(a, b, SMALL, 4).summary()
    assert s["dof"] is None and set(s) == {"statistic", "dof", "p_value", "reject"}


def test_split_windows_drops_tail():
    x = np.arange(23.0)
    w = split_windows(x, 5)
    assert w.shape == (5, 4)
    np.testing.assert_array_equal(w[1], [4, 5, 6, 7])
    w2 = split_windows(np.arange(20.0).reshape(10, 2), 5)
    np.testing.assert_array_equal(w2[0], [0, 1, 2, 3])
    with pytest.raises(InsufficientDataError):
        split_windows(np.arange(4.0), 5)


def test_unequal_lengths_truncate():
    a, b = gen.PROCESSES["arma1"](1, 500), gen.PROCESSES["arma1"](2, 620)
    assert math.isfinite(mmd_test(a, b, SMALL, 0).statistic)


def test_mmd_config_validation():
    with pytest.raises(InvalidInputError):
        MmdConfig(n_subsequences=1)
    with pytest.raises(InvalidInputError):
        MmdConfig(n_permutations=50)
    with pytest.raises(InvalidInputError):
        MmdConfig(alpha=0.0)
    with pytest.raises(InvalidInputError):
        mmd_windows_test(np.zeros((3, 2)), np.zeros((3, 3)), SMALL, 0)


def test_ewd_examples():
    g = ewd_bins(np.array([0.0, 0.3, 1.0]), 2)
    np.testing.assert_array_equal(g.edges(0), [0.0, 0.5, 1.0])
    g = ewd_bins(np.random.default_rng(0).random((30, 2)), 4)
    assert g.n_states == 16
    with pytest.raises(InvalidInputError):
        ewd_bins(np.arange(4.0), 1)


def test_ewd_degenerate_dimension():
    e = np.column_stack([np.linspace(0, 1, 10), np.full(10, 2.0)])
    g = ewd_bins(e, 5)
    assert g.bins_per_dim == (5, 1) and g.degenerate_dims == (1,)
    assert assign_bins(e, g).max() == 4


def test_scott_examples():
    assert scott_rule(7.0, 1.0, 1000) == 20
    assert scott_bin_count(np.full(50, 3.3)) == 1
    x = np.random.default_rng(1).standard_normal(400)
    assert scott_bin_count(2 * x) == scott_bin_count(x)
    with pytest.raises(InsufficientDataError):
        scott_bin_count([1.0])


def test_scott_formula_directly():
    x = np.random.default_rng(2).standard_normal(777)
    expect = math.ceil((x.max() - x.min()) / (3.5 * x.std() * 777 ** (-1 / 3)))
    assert scott_bin_count(x) == expect


@given(st.integers(0, 2**32 - 1), st.floats(-1e3, 1e3), st.sampled_from([0.25, 2.0, 8.0]))
def test_scott_translation_and_power_of_two_scale(seed, shift, scale):
    x = np.random.default_rng(seed).standard_normal((200, 2))
    g = scott_bins(x)
    # powers of two scale exactly; translation by a moderate shift is checked on the counts
    assert scott_bins(x * scale).bins_per_dim == g.bins_per_dim
    assert scott_bins(x + shift).bins_per_dim == g.bins_per_dim


def test_scott_bins_differ_per_dimension():
    r = np.random.default_rng(3)
    x = np.column_stack([r.standard_normal(1000), r.uniform(0, 1, 1000)])
    g = scott_bins(x)
    assert g.bins_per_dim[0] != g.bins_per_dim[1]
    assert scott_bins(np.column_stack([x[:, 0], np.ones(1000)])).degenerate_dims == (1,)


@pytest.mark.slow
@pytest.mark.xfail(strict=False, reason="on desk-scale SE data the EWD type-I accuracy is flat in m")
def test_ewd_accuracy_non_monotone_in_m():
    from renal.embedding import embed_sequence
    from renal.gof import test_with_grid
    from renal.harness import ExperimentConfig, _train_reference, draw

    cfg = ExperimentConfig.preset("tpp", "se", "sc", trials=20)
    ms = (2, 4, 10, 20)
    acc = {m: 0 for m in ms}
    for t in range(cfg.trials):
        d0, dh = draw("se", cfg, t, "null"), draw("se", cfg, t, "null_test")
        model = _train_reference(d0, cfg, t)
        e0, eh = embed_sequence(model, d0), embed_sequence(model, dh)
        for m in ms:
            acc[m] += not test_with_grid(e0, eh, ewd_bins(np.vstack([e0, eh]), m)).reject
    seq = [acc[m] for m in ms]
    diffs = np.sign(np.diff(seq))
    assert np.any(diffs > 0) and np.any(diffs < 0)
