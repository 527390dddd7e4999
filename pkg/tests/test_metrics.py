"""Tests for engagement summaries, accuracy, bootstrap, and screening."""

import numpy as np
import pytest
from scipy import stats
from scipy.special import logit

from conftest import synthetic_dataset
from rlhmmddm import fit, metrics, sim
from rlhmmddm.fit import FitConfig
from rlhmmddm.hmm import Posteriors
from rlhmmddm.metrics import BootstrapError


def result_with_gamma(dataset, gamma1_rows):
    gammas = [np.column_stack([1 - g, g]) for g in gamma1_rows]
    post = Posteriors(
        gamma=gammas,
        xi=[np.zeros((g.shape[0] - 1, 2, 2)) for g in gammas],
        loglik=np.zeros(len(gammas)),
    )
    return fit.FitResult(
        model="rl-hmm-ddm", params=None, loglik_trace=np.array([0.0]),
        converged=True, iterations=1, posteriors=post,
    )


# ------------------------------------------------------------------
# engagement summaries
# ------------------------------------------------------------------

def test_engagement_summary_tied_gamma():
    rng = np.random.default_rng(0)
    ds = synthetic_dataset(rng, n=1, J=10)
    res = result_with_gamma(ds, [np.full(10, 0.5)])
    summ = metrics.engagement_summary(res, ds)
    assert summ.score[0] == 0.0  # logit(1/2)
    assert np.all(summ.u_hat[0] == 1)  # ties count as engaged
    assert np.isnan(summ.rt_lapsed[0])
    assert summ.rt_engaged[0] == pytest.approx(ds.subjects[0].t.mean())


def test_engagement_summary_clipping():
    rng = np.random.default_rng(1)
    ds = synthetic_dataset(rng, n=1, J=5)
    res = result_with_gamma(ds, [np.ones(5)])
    summ = metrics.engagement_summary(res, ds)
    assert summ.score[0] == pytest.approx(logit(1 - 1e-8), rel=1e-9)
    assert summ.score[0] == pytest.approx(18.42, abs=0.01)


def test_engagement_summary_rt_means_by_state():
    rng = np.random.default_rng(2)
    ds = synthetic_dataset(rng, n=1, J=6)
    g = np.array([0.9, 0.1, 0.8, 0.2, 0.7, 0.3])
    summ = metrics.engagement_summary(result_with_gamma(ds, [g]), ds)
    t = ds.subjects[0].t
    assert summ.rt_engaged[0] == pytest.approx(t[[0, 2, 4]].mean())
    assert summ.rt_lapsed[0] == pytest.approx(t[[1, 3, 5]].mean())


def test_group_rate_is_columnwise_mean():
    rng = np.random.default_rng(3)
    ds = synthetic_dataset(rng, n=4, J=7)
    rows = [rng.uniform(0, 1, 7) for _ in range(4)]
    summ = metrics.engagement_summary(result_with_gamma(ds, rows), ds)
    assert np.allclose(summ.group_rate, np.vstack(rows).mean(axis=0), atol=1e-12)


# ------------------------------------------------------------------
# classification accuracy
# ------------------------------------------------------------------

def test_accuracy_perfect():
    truth = [np.array([0, 1, 1]), np.array([1, 0, 0])]
    per, agg = metrics.classification_accuracy(truth, truth)
    assert np.allclose(per, 1.0)
    assert agg == 1.0


def test_accuracy_masked_and_window():
    pred = [np.array([1, 1, 1, 1])]
    truth = [np.array([1, 0, 1, 0])]
    mask = [np.array([1, 1, 0, 0])]
    per, agg = metrics.classification_accuracy(pred, truth, window=2, mask=mask)
    assert per[0] == 1.0 and per[1] == 0.0
    assert np.isnan(per[2]) and np.isnan(per[3])
    assert agg == 0.5


def test_accuracy_random_predictions_near_half():
    rng = np.random.default_rng(4)
    pred = [rng.integers(0, 2, 200) for _ in range(50)]
    truth = [rng.integers(0, 2, 200) for _ in range(50)]
    _, agg = metrics.classification_accuracy(pred, truth)
    assert abs(agg - 0.5) < 3 * np.sqrt(0.25 / (200 * 50))


# ------------------------------------------------------------------
# bootstrap
# ------------------------------------------------------------------

@pytest.fixture(scope="module")
def tiny_fit():
    out = sim.generate(sim.SimConfig(n=8, J=30, seed=51))
    cfg = FitConfig(restarts=1, seed=0, analytic_gradients=True, inner_max_iter=10,
                    max_iter=60, init=sim.default_true_params())
    return out.dataset, fit.fit_rl_hmm_ddm(out.dataset, cfg)


def test_bootstrap_single_subject_degenerate(tiny_fit):
    from rlhmmddm.data import Dataset

    ds, _ = tiny_fit
    one = Dataset(ds.subjects[:1])
    cfg = FitConfig(restarts=1, seed=0, analytic_gradients=True, inner_max_iter=10,
                    max_iter=300, init=sim.default_true_params())
    res1 = fit.fit_rl_hmm_ddm(one, cfg)
    boot = metrics.bootstrap(one, res1, B=4, config=cfg, rng=np.random.default_rng(0))
    assert np.allclose(boot.bse, 0.0, atol=1e-12)
    assert boot.n_dropped == 0


def test_bootstrap_reproducible(tiny_fit):
    ds, res = tiny_fit
    cfg = FitConfig(restarts=1, seed=0, analytic_gradients=True, inner_max_iter=10,
                    max_iter=300)
    b1 = metrics.bootstrap(ds, res, B=5, config=cfg, rng=np.random.default_rng(42))
    b2 = metrics.bootstrap(ds, res, B=5, config=cfg, rng=np.random.default_rng(42))
    assert np.array_equal(b1.replicates, b2.replicates)
    assert np.array_equal(b1.bse, b2.bse)


def test_bootstrap_ci_structure(tiny_fit):
    ds, res = tiny_fit
    cfg = FitConfig(restarts=1, seed=0, analytic_gradients=True, inner_max_iter=10,
                    max_iter=300)
    boot = metrics.bootstrap(ds, res, B=6, config=cfg, rng=np.random.default_rng(1))
    names = boot.names
    assert names[:6] == ["alpha0", "alpha1", "b", "c", "tau", "beta"]
    for k, name in enumerate(names):
        if name == "pi1":
            # logit-scale interval stays inside (0, 1)
            assert 0.0 < boot.ci_lo[k] < boot.ci_hi[k] < 1.0
        else:
            assert boot.ci_lo[k] == pytest.approx(boot.estimate[k] - 1.96 * boot.bse[k])
            assert boot.ci_hi[k] == pytest.approx(boot.estimate[k] + 1.96 * boot.bse[k])


def test_bootstrap_requires_two_replicates(tiny_fit):
    ds, res = tiny_fit
    with pytest.raises(Exception):
        metrics.bootstrap(ds, res, B=1, config=FitConfig(), rng=np.random.default_rng(0))


# ------------------------------------------------------------------
# BH q-values and association screening
# ------------------------------------------------------------------

def bh_oracle(p):
    """Literal step-up definition: q_i = min over j with p_(j) >= p_i of
    p_(j) * m / rank(j), monotonized from the largest p downward."""
    p = np.asarray(p, dtype=float)
    m = len(p)
    order = np.argsort(p, kind="stable")
    q = np.empty(m)
    prev = np.inf
    for rank in range(m, 0, -1):
        idx = order[rank - 1]
        val = min(prev, p[idx] * m / rank)
        q[idx] = min(val, 1.0)
        prev = val
    return q


def test_bh_hand_example():
    q = metrics.bh_qvalues([0.01, 0.02, 0.03])
    assert np.allclose(q, [0.03, 0.03, 0.03])


def test_bh_matches_oracle_on_random_vectors():
    rng = np.random.default_rng(5)
    for _ in range(100):
        m = int(rng.integers(1, 40))
        p = rng.uniform(0, 1, m)
        if rng.random() < 0.3:
            p[rng.integers(0, m)] = p[rng.integers(0, m)]  # ties
        assert np.array_equal(metrics.bh_qvalues(p), bh_oracle(p))


def test_bh_rejection_set_matches_classic_rule():
    rng = np.random.default_rng(6)
    for _ in range(50):
        m = int(rng.integers(2, 30))
        p = rng.uniform(0, 1, m)
        alpha = rng.uniform(0.02, 0.3)
        q = metrics.bh_qvalues(p)
        srt = np.sort(p)
        k = 0
        for i in range(m):
            if srt[i] <= alpha * (i + 1) / m:
                k = i + 1
        classic = p <= (srt[k - 1] if k else -1.0)
        assert np.array_equal(q <= alpha, classic)


def test_assoc_identical_variable():
    rng = np.random.default_rng(7)
    scores = rng.normal(size=30)
    res = metrics.assoc(scores, scores[:, None], labels=["self"])
    assert res.r[0] == pytest.approx(1.0)
    assert res.p[0] == 0.0


def test_assoc_pvalues_match_scipy():
    rng = np.random.default_rng(8)
    scores = rng.normal(size=40)
    vars_ = rng.normal(size=(40, 3))
    res = metrics.assoc(scores, vars_)
    for j in range(3):
        r_ref, p_ref = stats.pearsonr(scores, vars_[:, j])
        assert res.r[j] == pytest.approx(r_ref, abs=1e-12)
        assert res.p[j] == pytest.approx(p_ref, rel=1e-9)


def test_assoc_zero_variance_skipped():
    rng = np.random.default_rng(9)
    scores = rng.normal(size=20)
    vars_ = np.column_stack([np.ones(20), rng.normal(size=20)])
    res = metrics.assoc(scores, vars_, labels=["const", "ok"])
    assert res.skipped == ["const"]
    assert res.labels == ["ok"]


def test_assoc_listwise_deletion():
    rng = np.random.default_rng(10)
    scores = rng.normal(size=25)
    v = rng.normal(size=25)
    v[:5] = np.nan
    res = metrics.assoc(scores, v[:, None])
    assert res.n[0] == 20
    r_ref, p_ref = stats.pearsonr(scores[5:], v[5:])
    assert res.r[0] == pytest.approx(r_ref, abs=1e-12)
