"""Tests for transitions, emissions, forward-backward, and action posteriors.

The smoothing oracle enumerates all 2^J latent paths explicitly.
"""

import numpy as np
import pytest
from scipy.special import expit

from conftest import enumerate_smoother
from rlhmmddm import hmm, rl, wfpt
from rlhmmddm.data import SubjectData
from rlhmmddm.fit import ModelParams
from rlhmmddm.hmm import ChainParams
from rlhmmddm.rl import DataError


def default_theta(**kw):
    args = dict(
        alpha0=1.0,
        alpha1=1.5,
        b=0.6,
        c=2.0,
        tau=0.1,
        beta=0.05,
        chain=ChainParams(0.8, np.array([-0.5, -0.5]), np.array([1.0, 1.0])),
    )
    args.update(kw)
    return ModelParams(**args)


def random_subject(rng, J=8):
    return SubjectData(
        id="s",
        covariates=[float(rng.integers(0, 2))],
        s=rng.integers(0, 2, J),
        a=rng.integers(0, 2, J),
        t=0.1 + rng.uniform(0.05, 1.5, J),
        r=rng.uniform(0, 1, J),
    )


# ------------------------------------------------------------------
# transition_matrix
# ------------------------------------------------------------------

def test_transition_matrix_zero_coefficients():
    chain = ChainParams(0.5, np.zeros(2), np.zeros(2))
    P = hmm.transition_matrix(chain, [1.0])
    assert np.allclose(P, 0.5)


def test_transition_matrix_closed_form():
    chain = ChainParams(0.5, np.zeros(2), np.array([1.0, 1.0]))
    P = hmm.transition_matrix(chain, [1.0])
    assert P[1, 1] == pytest.approx(expit(2.0), abs=1e-9)
    assert P[1, 1] == pytest.approx(0.880797, abs=1e-6)


def test_transition_matrix_rows_sum_to_one():
    rng = np.random.default_rng(0)
    for _ in range(20):
        chain = ChainParams(0.5, rng.normal(size=3), rng.normal(size=3))
        P = hmm.transition_matrix(chain, rng.normal(size=2))
        assert np.allclose(P.sum(axis=1), 1.0)
        assert np.all(P >= 0)


def test_transition_matrix_dimension_mismatch():
    chain = ChainParams(0.5, np.zeros(2), np.zeros(2))
    with pytest.raises(DataError):
        hmm.transition_matrix(chain, [1.0, 2.0])


def test_chain_params_validation():
    with pytest.raises(wfpt.DomainError):
        ChainParams(0.0, np.zeros(2), np.zeros(2))
    with pytest.raises(wfpt.DomainError):
        ChainParams(0.5, np.array([np.inf, 0.0]), np.zeros(2))
    with pytest.raises(wfpt.DomainError):
        ChainParams(0.5, np.zeros(2), np.zeros(3))


# ------------------------------------------------------------------
# emissions
# ------------------------------------------------------------------

def test_lapsed_column_ignores_action():
    theta = default_theta()
    rng = np.random.default_rng(1)
    sub = random_subject(rng, J=12)
    eta = hmm.emissions(sub, theta)
    flipped = SubjectData(
        id="s", covariates=sub.covariates, s=sub.s, a=1 - sub.a, t=sub.t, r=sub.r
    )
    eta_flipped = hmm.emissions(flipped, theta)
    assert np.allclose(eta[:, 0], eta_flipped[:, 0], rtol=1e-12)


def test_emissions_floor_when_rt_below_tau():
    theta = default_theta(tau=0.5)
    sub = SubjectData(
        id="s", covariates=[0.0], s=[1, 1], a=[1, 0], t=[0.2, 0.8], r=[1.0, 0.0]
    )
    eta = hmm.emissions(sub, theta)
    assert np.all(eta[0] == np.exp(wfpt.LOG_FLOOR))
    assert np.all(eta[0] >= wfpt.DENSITY_FLOOR)
    assert np.all(eta[1] > 1e-250)


def test_engaged_column_with_zero_scaling_is_plain_ddm():
    theta = default_theta(c=1e-12)
    rng = np.random.default_rng(2)
    sub = random_subject(rng, J=10)
    eta = hmm.emissions(sub, theta)
    ref = np.array(
        [
            wfpt.joint_density(
                t, a, wfpt.DdmParams(theta.alpha1, theta.b, 0.0, theta.tau)
            )
            for t, a in zip(sub.t, sub.a)
        ]
    )
    assert np.allclose(eta[:, 1], ref, rtol=1e-9)


# ------------------------------------------------------------------
# forward_backward
# ------------------------------------------------------------------

def test_forward_backward_single_trial():
    eta = np.array([[0.3, 0.9]])
    pi = np.array([0.2, 0.8])
    P = np.array([[0.7, 0.3], [0.1, 0.9]])
    gamma, xi, ll = hmm.forward_backward(eta, pi, P)
    denom = 0.2 * 0.3 + 0.8 * 0.9
    assert np.allclose(gamma[0], [0.2 * 0.3 / denom, 0.8 * 0.9 / denom])
    assert xi.shape == (0, 2, 2)
    assert ll == pytest.approx(np.log(denom))


def test_forward_backward_matches_enumeration():
    rng = np.random.default_rng(123)
    for _ in range(25):
        J = int(rng.integers(2, 11))
        eta = rng.uniform(0.05, 3.0, (J, 2))
        p0, p1 = rng.uniform(0.05, 0.95, 2)
        P = np.array([[1 - p0, p0], [1 - p1, p1]])
        pi1 = rng.uniform(0.05, 0.95)
        pi = np.array([1 - pi1, pi1])
        gamma, xi, ll = hmm.forward_backward(eta, pi, P)
        g_ref, x_ref, ll_ref = enumerate_smoother(eta, pi, P)
        assert np.allclose(gamma, g_ref, atol=1e-10)
        assert np.allclose(xi, x_ref, atol=1e-10)
        assert abs(ll - ll_ref) < 1e-10


def test_forward_backward_posterior_identities():
    rng = np.random.default_rng(7)
    J = 60
    eta = rng.uniform(1e-4, 5.0, (J, 2))
    P = np.array([[0.6, 0.4], [0.2, 0.8]])
    pi = np.array([0.3, 0.7])
    gamma, xi, _ = hmm.forward_backward(eta, pi, P)
    assert np.allclose(gamma.sum(axis=1), 1.0, atol=1e-10)
    assert np.allclose(xi.sum(axis=(1, 2)), 1.0, atol=1e-10)
    assert np.allclose(xi.sum(axis=2), gamma[:-1], atol=1e-10)


def test_forward_backward_uninformative_emissions():
    # identical columns carry no information: gamma follows the chain marginals
    J = 20
    eta = np.ones((J, 2)) * 0.37
    P = np.array([[0.6, 0.4], [0.2, 0.8]])
    pi = np.array([0.3, 0.7])
    gamma, _, _ = hmm.forward_backward(eta, pi, P)
    marg = pi.copy()
    for j in range(J):
        assert np.allclose(gamma[j], marg, atol=1e-12)
        marg = marg @ P


def test_forward_backward_row_scaling_shifts_loglik_only():
    rng = np.random.default_rng(11)
    J = 15
    eta = rng.uniform(0.1, 2.0, (J, 2))
    P = np.array([[0.5, 0.5], [0.3, 0.7]])
    pi = np.array([0.5, 0.5])
    gamma, xi, ll = hmm.forward_backward(eta, pi, P)
    scale = rng.uniform(0.5, 2.0, J)
    gamma2, xi2, ll2 = hmm.forward_backward(eta * scale[:, None], pi, P)
    assert np.allclose(gamma, gamma2, atol=1e-12)
    assert np.allclose(xi, xi2, atol=1e-12)
    assert ll2 == pytest.approx(ll + np.log(scale).sum(), abs=1e-10)


def test_forward_backward_survives_floored_rows():
    eta = np.full((5, 2), wfpt.DENSITY_FLOOR)
    P = np.array([[0.6, 0.4], [0.2, 0.8]])
    pi = np.array([0.3, 0.7])
    gamma, xi, ll = hmm.forward_backward(eta, pi, P)
    assert np.all(np.isfinite(gamma))
    assert np.isfinite(ll)
    assert ll == pytest.approx(5 * np.log(wfpt.DENSITY_FLOOR), rel=1e-6)


def test_forward_backward_empty_input():
    with pytest.raises(DataError):
        hmm.forward_backward(np.empty((0, 2)), np.array([0.5, 0.5]), np.eye(2))


# ------------------------------------------------------------------
# posterior_action
# ------------------------------------------------------------------

def test_posterior_action_lapsed_is_coin_flip():
    theta = default_theta()
    q = rl.init_q()
    for t in (0.2, 0.5, 1.0, 3.0):
        probs, degenerate = hmm.posterior_action(t, 0, 1, q, theta)
        assert np.allclose(probs, 0.5)
        assert not degenerate


def test_posterior_action_positive_contrast_favors_upper():
    theta = default_theta(b=0.5)
    q = rl.QTable(np.array([[0.1, 0.1], [0.8, 0.8]]))  # Z = 0.7 > 0
    probs, _ = hmm.posterior_action(0.6, 1, 1, q, theta)
    assert probs[1] > 0.5
    assert probs.sum() == pytest.approx(1.0)


def test_posterior_action_matches_density_ratio():
    theta = default_theta()
    q = rl.QTable(np.array([[0.2, 0.4], [0.9, 0.1]]))
    for t in (0.3, 0.8, 1.5):
        for s in (0, 1):
            z = rl.contrast(q, s)
            p = wfpt.DdmParams(theta.alpha1, theta.b, theta.c * z, theta.tau)
            f0 = wfpt.joint_density(t, 0, p)
            f1 = wfpt.joint_density(t, 1, p)
            probs, _ = hmm.posterior_action(t, 1, s, q, theta)
            assert probs[1] == pytest.approx(f1 / (f0 + f1), abs=1e-12)


def test_posterior_action_degenerate_flag():
    theta = default_theta(tau=0.5)
    probs, degenerate = hmm.posterior_action(0.2, 1, 1, rl.init_q(), theta)
    assert degenerate
    assert np.allclose(probs, 0.5)
