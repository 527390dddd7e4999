"""Parameter estimation for the switching and baseline models.

fit_rl_hmm_ddm runs a generalized EM: the E-step smooths latent strategies
with forward-backward, the M-step improves (not necessarily maximizes) each
block of the expected complete-data objective with BFGS on transformed
parameters. fit_rl_ddm maximizes the single-state likelihood directly, and
fit_rl_hmm runs the same EM with softmax (choice-only) emissions. A
per-subject softmax fit supports learning-rate screening.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np
from numba import njit
from scipy.optimize import minimize
from scipy.special import expit, logit

from . import hmm, rl, wfpt
from .data import Dataset
from .hmm import ChainParams, Posteriors
from .rl import DataError
from .wfpt import DomainError, LOG_FLOOR

THETA_FIELDS = ("alpha0", "alpha1", "b", "c", "tau", "beta")

PI_CLIP = 1e-8
GAMMA_CLIP = 1e-8


@dataclass(frozen=True)
class ModelParams:
    """Full parameter set of the switching diffusion model.

    alpha0/alpha1: lapsed/engaged boundary separations; b: engaged relative
    bias; c: drift scaling; tau: non-decision time; beta: learning rate;
    chain: switching parameters (None in degenerate always-engaged fits).
    """

    alpha0: float
    alpha1: float
    b: float
    c: float
    tau: float
    beta: float
    chain: Optional[ChainParams]

    def __post_init__(self):
        for name in ("alpha0", "alpha1", "c"):
            val = getattr(self, name)
            if not (np.isfinite(val) and val > 0):
                raise DomainError(f"{name} must be positive, got {val}")
        for name in ("b", "beta"):
            val = getattr(self, name)
            if not (np.isfinite(val) and 0.0 < val < 1.0):
                raise DomainError(f"{name} must lie in (0, 1), got {val}")
        if not (np.isfinite(self.tau) and self.tau > 0):
            raise DomainError(f"tau must be positive, got {self.tau}")

    def theta_tilde(self) -> np.ndarray:
        return np.array([getattr(self, f) for f in THETA_FIELDS])


@dataclass(frozen=True)
class RlDdmParams:
    """Single-state (always engaged) diffusion parameters."""

    alpha1: float
    b: float
    c: float
    tau: float
    beta: float


@dataclass(frozen=True)
class RlHmmParams:
    """Softmax-emission switching model: reward sensitivity rho plus the
    learning rate and chain."""

    rho: float
    beta: float
    chain: Optional[ChainParams]


@dataclass
class FitConfig:
    max_iter: int = 500
    tol: float = 1e-6
    inner_max_iter: int = 100
    inner_gtol: float = 1e-8
    restarts: int = 5
    seed: int = 0
    analytic_gradients: bool = False
    fd_step: float = 1e-6
    init: object = None
    freeze_chain: bool = False

    def __post_init__(self):
        if self.max_iter < 1 or self.inner_max_iter < 1 or self.restarts < 1:
            raise DomainError("iteration and restart counts must be positive")
        if self.tol <= 0 or self.inner_gtol <= 0 or self.fd_step <= 0:
            raise DomainError("tolerances must be positive")


@dataclass
class FitResult:
    model: str
    params: object
    loglik_trace: np.ndarray
    converged: bool
    iterations: int
    posteriors: Optional[Posteriors]
    warnings: list = field(default_factory=list)

    @property
    def loglik(self) -> float:
        return float(self.loglik_trace[-1])


# ------------------------------------------------------------------
# parameter transforms
# ------------------------------------------------------------------

def transform(theta, tau_max):
    """Map (alpha0, alpha1, b, c, tau, beta) to the real line.

    log for the positive parameters, logit for the unit-interval ones, and
    a scaled logit mapping (0, tau_max) for tau. Boundary values are domain
    errors.
    """
    th = np.asarray(theta, dtype=float)
    if th.shape != (6,):
        raise DomainError("theta must have 6 components")
    a0, a1, b, c, tau, beta = th
    if min(a0, a1, c) <= 0:
        raise DomainError("alpha0, alpha1, c must be positive")
    if not (0.0 < b < 1.0 and 0.0 < beta < 1.0):
        raise DomainError("b and beta must lie strictly in (0, 1)")
    if not (0.0 < tau < tau_max):
        raise DomainError(f"tau must lie strictly in (0, {tau_max})")
    return np.array([np.log(a0), np.log(a1), logit(b), np.log(c), logit(tau / tau_max), logit(beta)])


def untransform(u, tau_max):
    """Inverse of transform."""
    u = np.asarray(u, dtype=float)
    if u.shape != (6,):
        raise DomainError("u must have 6 components")
    return np.array(
        [np.exp(u[0]), np.exp(u[1]), expit(u[2]), np.exp(u[3]), tau_max * expit(u[4]), expit(u[5])]
    )


def _untransform_safe(u, tau_max):
    # optimizer-internal: clip so extreme line-search proposals stay finite
    return untransform(np.clip(u, -400.0, 400.0), tau_max)


# ------------------------------------------------------------------
# stacked per-trial workspace
# ------------------------------------------------------------------

@njit(cache=True)
def _contrast_stacked(s, a, r, offsets, beta, with_grad):
    n = offsets.shape[0] - 1
    z = np.empty(s.shape[0])
    dz = np.zeros(s.shape[0])
    for i in range(n):
        q = np.zeros((2, 2))
        dq = np.zeros((2, 2))
        for j in range(offsets[i], offsets[i + 1]):
            sj = s[j]
            aj = a[j]
            z[j] = q[1, sj] - q[0, sj]
            if with_grad:
                dz[j] = dq[1, sj] - dq[0, sj]
                dq[aj, sj] = (1.0 - beta) * dq[aj, sj] + (r[j] - q[aj, sj])
            q[aj, sj] = (1.0 - beta) * q[aj, sj] + beta * r[j]
    return z, dz


class _Stacked:
    """Trials of all subjects concatenated, with per-subject offsets."""

    def __init__(self, dataset: Dataset):
        if dataset.n == 0:
            raise DataError("dataset has no subjects")
        self.n = dataset.n
        self.t = np.concatenate([sub.t for sub in dataset.subjects])
        self.a = np.concatenate([sub.a for sub in dataset.subjects])
        self.s = np.ascontiguousarray(
            np.concatenate([sub.s for sub in dataset.subjects]), dtype=np.int64
        )
        self.r = np.concatenate([sub.r for sub in dataset.subjects])
        lengths = [sub.n_trials for sub in dataset.subjects]
        self.offsets = np.concatenate([[0], np.cumsum(lengths)]).astype(np.int64)
        self.X = dataset.covariate_matrix()
        self._z_cache = {}

    def contrasts(self, beta, with_grad=True):
        key = float(beta)
        hit = self._z_cache.get(key)
        if hit is None:
            hit = _contrast_stacked(self.s, self.a, self.r, self.offsets, key, True)
            self._z_cache = {key: hit}  # keep only the latest beta
        return hit

    def split(self, arr):
        return [arr[self.offsets[i]: self.offsets[i + 1]] for i in range(self.n)]


# ------------------------------------------------------------------
# E-step
# ------------------------------------------------------------------

FROZEN_PI = np.array([0.0, 1.0])
FROZEN_P = np.array([[0.0, 1.0], [0.0, 1.0]])


@njit(cache=True)
def _fb_stacked(eta, offsets, pi_all, P_all):
    """Scaled forward-backward over all subjects' stacked emission rows.

    Same recursions as hmm.forward_backward; xi rows for each subject's
    last trial are left at zero.
    """
    n = offsets.shape[0] - 1
    N = eta.shape[0]
    gamma = np.empty((N, 2))
    xi = np.zeros((N, 2, 2))
    rho = np.empty((N, 2))
    cs = np.empty(N)
    ll = np.empty(n)
    for i in range(n):
        lo, hi = offsets[i], offsets[i + 1]
        p00, p01 = P_all[i, 0, 0], P_all[i, 0, 1]
        p10, p11 = P_all[i, 1, 0], P_all[i, 1, 1]
        f0 = pi_all[i, 0] * eta[lo, 0]
        f1 = pi_all[i, 1] * eta[lo, 1]
        c = f0 + f1
        rho[lo, 0] = f0 / c
        rho[lo, 1] = f1 / c
        cs[lo] = c
        lli = np.log(c)
        for j in range(lo + 1, hi):
            r0 = rho[j - 1, 0]
            r1 = rho[j - 1, 1]
            f0 = eta[j, 0] * (r0 * p00 + r1 * p10)
            f1 = eta[j, 1] * (r0 * p01 + r1 * p11)
            c = f0 + f1
            rho[j, 0] = f0 / c
            rho[j, 1] = f1 / c
            cs[j] = c
            lli += np.log(c)
        b0 = 1.0
        b1 = 1.0
        gamma[hi - 1, 0] = rho[hi - 1, 0]
        gamma[hi - 1, 1] = rho[hi - 1, 1]
        for j in range(hi - 2, lo - 1, -1):
            cn = cs[j + 1]
            e0 = eta[j + 1, 0] * b0 / cn
            e1 = eta[j + 1, 1] * b1 / cn
            xi[j, 0, 0] = rho[j, 0] * p00 * e0
            xi[j, 0, 1] = rho[j, 0] * p01 * e1
            xi[j, 1, 0] = rho[j, 1] * p10 * e0
            xi[j, 1, 1] = rho[j, 1] * p11 * e1
            b0 = p00 * e0 + p01 * e1
            b1 = p10 * e0 + p11 * e1
            gamma[j, 0] = rho[j, 0] * b0
            gamma[j, 1] = rho[j, 1] * b1
        ll[i] = lli
    return gamma, xi, ll


class _StackedPosteriors:
    """EM-internal view of the smoothing output, aligned with a _Stacked."""

    def __init__(self, stacked, gamma, xi, loglik):
        self.stacked = stacked
        self.gamma = gamma  # (N, 2)
        self.xi = xi  # (N, 2, 2), zero rows at subject ends
        self.loglik = loglik  # (n,)

    @property
    def total_loglik(self):
        return float(self.loglik.sum())

    def first_trial_gamma1(self):
        return self.gamma[self.stacked.offsets[:-1], 1]

    def xi_subject_sums(self, k):
        """Per-subject sums of xi[:, k, :] over the within-subject trials."""
        w1 = np.add.reduceat(self.xi[:, k, 1], self.stacked.offsets[:-1])
        wt = np.add.reduceat(self.xi[:, k, 0] + self.xi[:, k, 1], self.stacked.offsets[:-1])
        return w1, wt

    def to_posteriors(self) -> Posteriors:
        off = self.stacked.offsets
        gammas = [self.gamma[off[i]: off[i + 1]] for i in range(self.stacked.n)]
        xis = [self.xi[off[i]: off[i + 1] - 1] for i in range(self.stacked.n)]
        return Posteriors(gammas, xis, self.loglik.copy())


def _chain_matrices(stacked, chain):
    n = stacked.n
    if chain is None:
        pi_all = np.tile(FROZEN_PI, (n, 1))
        P_all = np.tile(FROZEN_P, (n, 1, 1))
        return pi_all, P_all
    if stacked.X.shape[1] != chain.n_covariates:
        raise DataError("covariate dimension does not match chain coefficients")
    lin0 = chain.zeta0[0] + stacked.X @ chain.zeta0[1:]
    lin1 = chain.zeta1[0] + stacked.X @ chain.zeta1[1:]
    p0 = expit(lin0)
    p1 = expit(lin1)
    pi_all = np.tile(chain.initial, (n, 1))
    P_all = np.empty((n, 2, 2))
    P_all[:, 0, 0] = 1.0 - p0
    P_all[:, 0, 1] = p0
    P_all[:, 1, 0] = 1.0 - p1
    P_all[:, 1, 1] = p1
    return pi_all, P_all


def _stacked_log_emissions(stacked, theta6):
    a0, a1, b, c, tau, beta = theta6
    z, _ = stacked.contrasts(beta)
    lf0 = wfpt._log_joint(stacked.t, stacked.a, a0, 0.5, 0.0, tau)
    lf1 = wfpt._log_joint(stacked.t, stacked.a, a1, b, c * z, tau)
    return lf0, lf1


def _posteriors(stacked, theta6, chain) -> _StackedPosteriors:
    lf0, lf1 = _stacked_log_emissions(stacked, theta6)
    eta_all = np.exp(np.column_stack([lf0, lf1]))
    pi_all, P_all = _chain_matrices(stacked, chain)
    gamma, xi, ll = _fb_stacked(eta_all, stacked.offsets, pi_all, P_all)
    return _StackedPosteriors(stacked, gamma, xi, ll)


def e_step(dataset: Dataset, theta: ModelParams) -> Posteriors:
    """Smoothed state posteriors and per-subject log-likelihoods at theta."""
    return _posteriors(_Stacked(dataset), theta.theta_tilde(), theta.chain).to_posteriors()


def observed_loglik(dataset: Dataset, theta: ModelParams) -> float:
    """Observed-data log-likelihood (theta-dependent part), summed over
    subjects in ascending index order."""
    return e_step(dataset, theta).total_loglik


# ------------------------------------------------------------------
# M-steps
# ------------------------------------------------------------------

def m_step_pi(posteriors) -> float:
    """Mean first-trial engaged marginal, clipped away from {0, 1}."""
    if isinstance(posteriors, Posteriors):
        g1 = np.array([g[0, 1] for g in posteriors.gamma])
    else:
        g1 = posteriors.first_trial_gamma1()
    return float(np.clip(g1.mean(), PI_CLIP, 1.0 - PI_CLIP))


def _zeta_objective(zeta, X, w1, wt):
    lin = zeta[0] + X @ zeta[1:]
    val = float(-(w1 * lin).sum() + (wt * np.logaddexp(0.0, lin)).sum())
    d = -w1 + wt * expit(lin)
    grad = np.concatenate([[d.sum()], X.T @ d])
    return val, grad


def m_step_zeta(posteriors, X, k, zeta_init, config: FitConfig):
    """Improve the transition coefficients for origin state k.

    Minimizes the expected negative complete-data term for row k, a weighted
    logistic loss with per-subject weights from the pairwise posteriors.
    Returns (zeta, warn): on optimizer failure the init comes back with
    warn=True, which keeps the outer EM monotone.
    """
    zeta_init = np.asarray(zeta_init, dtype=float)
    if isinstance(posteriors, Posteriors):
        w1 = np.array([x[:, k, 1].sum() for x in posteriors.xi])
        wt = np.array([x[:, k, :].sum() for x in posteriors.xi])
    else:
        w1, wt = posteriors.xi_subject_sums(k)
    if wt.sum() <= 0.0:
        return zeta_init, True  # no observed transitions to learn from
    f0, _ = _zeta_objective(zeta_init, X, w1, wt)
    res = minimize(
        _zeta_objective,
        zeta_init,
        args=(X, w1, wt),
        jac=True,
        method="BFGS",
        options={"maxiter": config.inner_max_iter, "gtol": config.inner_gtol},
    )
    if np.isfinite(res.fun) and res.fun <= f0:
        return res.x, False
    return zeta_init, True


class _ThetaObjective:
    """Expected negative complete-data emission term as a function of the
    transformed theta vector.

    w0/w1 are the stacked lapsed/engaged posterior weights; w0=None drops
    the lapsed component entirely (single-state fits). free_idx selects
    which transformed coordinates the optimizer sees.
    """

    def __init__(self, stacked, w0, w1, tau_max, base_theta6=None, free_idx=None):
        self.stacked = stacked
        self.w0 = w0
        self.w1 = w1
        self.tau_max = tau_max
        self.free_idx = np.arange(6) if free_idx is None else np.asarray(free_idx)
        if base_theta6 is None:
            base_theta6 = np.array([1.0, 1.0, 0.5, 1.0, tau_max / 2, 0.1])
        self.base_u = transform(base_theta6, tau_max)

    def _full_u(self, u_free):
        u = self.base_u.copy()
        u[self.free_idx] = u_free
        return u

    def value(self, u_free):
        a0, a1, b, c, tau, beta = _untransform_safe(self._full_u(u_free), self.tau_max)
        st = self.stacked
        z, _ = st.contrasts(beta)
        val = 0.0
        if self.w0 is not None:
            lf0 = wfpt._log_joint(st.t, st.a, a0, 0.5, 0.0, tau)
            val -= float(self.w0 @ lf0)
        lf1 = wfpt._log_joint(st.t, st.a, a1, b, c * z, tau)
        val -= float(self.w1 @ lf1)
        return val

    def value_and_grad(self, u_free):
        theta6 = _untransform_safe(self._full_u(u_free), self.tau_max)
        a0, a1, b, c, tau, beta = theta6
        st = self.stacked
        z, dz = st.contrasts(beta, with_grad=True)
        val = 0.0
        g = np.zeros(6)  # gradient in natural coordinates
        if self.w0 is not None:
            lf0, da, _, _, dtau = wfpt._log_joint(
                st.t, st.a, a0, 0.5, 0.0, tau, grad=True
            )
            val -= float(self.w0 @ lf0)
            g[0] -= float(self.w0 @ da)
            g[4] -= float(self.w0 @ dtau)
        lf1, da, db, dv, dtau = wfpt._log_joint(
            st.t, st.a, a1, b, c * z, tau, grad=True
        )
        val -= float(self.w1 @ lf1)
        g[1] -= float(self.w1 @ da)
        g[2] -= float(self.w1 @ db)
        g[3] -= float(self.w1 @ (dv * z))
        g[5] -= float(self.w1 @ (dv * c * dz))
        g[4] -= float(self.w1 @ dtau)
        # chain rule onto the transformed scale
        sig_tau = tau / self.tau_max
        jac = np.array(
            [a0, a1, b * (1.0 - b), c, self.tau_max * sig_tau * (1.0 - sig_tau), beta * (1.0 - beta)]
        )
        return val, (g * jac)[self.free_idx]

    def fd_grad(self, u_free, h=1e-6):
        g = np.empty(u_free.shape[0])
        for i in range(u_free.shape[0]):
            up = u_free.copy()
            up[i] += h
            dn = u_free.copy()
            dn[i] -= h
            g[i] = (self.value(up) - self.value(dn)) / (2.0 * h)
        return g


def _improve(objective, u0, config: FitConfig):
    """Run BFGS from u0; return (u, value, warn) never worse than the start."""
    f0 = objective.value(u0)
    if config.analytic_gradients:
        res = minimize(
            objective.value_and_grad,
            u0,
            jac=True,
            method="BFGS",
            options={"maxiter": config.inner_max_iter, "gtol": config.inner_gtol},
        )
    else:
        res = minimize(
            objective.value,
            u0,
            jac=lambda u: objective.fd_grad(u, config.fd_step),
            method="BFGS",
            options={"maxiter": config.inner_max_iter, "gtol": config.inner_gtol},
        )
    if np.isfinite(res.fun) and res.fun <= f0:
        return res.x, float(res.fun), False
    return u0, f0, True


def m_step_theta(dataset, posteriors, theta_init, config: FitConfig = None, tau_max=None):
    """Improve (alpha0, alpha1, b, c, tau, beta) given fixed posteriors.

    theta_init may be a ModelParams or a 6-vector. Returns (theta6, warn).
    """
    config = config or FitConfig()
    stacked = dataset if isinstance(dataset, _Stacked) else _Stacked(dataset)
    if tau_max is None:
        tau_max = stacked.t.min() - 1e-4
    if isinstance(theta_init, ModelParams):
        theta_init = theta_init.theta_tilde()
    if isinstance(posteriors, Posteriors):
        w = np.vstack([g for g in posteriors.gamma])
    elif isinstance(posteriors, _StackedPosteriors):
        w = posteriors.gamma
    else:
        w = np.asarray(posteriors)
    obj = _ThetaObjective(stacked, w[:, 0], w[:, 1], tau_max)
    u0 = transform(np.asarray(theta_init, dtype=float), tau_max)
    u, _, warn = _improve(obj, u0, config)
    return untransform(u, tau_max), warn


# ------------------------------------------------------------------
# random initialization
# ------------------------------------------------------------------

def _random_init(rng, n_covariates, min_rt) -> ModelParams:
    return ModelParams(
        alpha0=rng.uniform(0.5, 2.5),
        alpha1=rng.uniform(0.5, 2.5),
        b=rng.uniform(0.4, 0.6),
        c=rng.uniform(0.5, 4.0),
        tau=rng.uniform(0.2, 0.8) * min_rt,
        beta=rng.uniform(0.01, 0.2),
        chain=ChainParams(
            pi1=rng.uniform(0.7, 0.99),
            zeta0=np.concatenate([rng.normal(size=1), np.zeros(n_covariates)]),
            zeta1=np.concatenate([rng.normal(size=1), np.zeros(n_covariates)]),
        ),
    )


# ------------------------------------------------------------------
# full switching-model fit
# ------------------------------------------------------------------

def _run_em(stacked, params0: ModelParams, config: FitConfig, tau_max):
    theta6 = params0.theta_tilde()
    chain = None if config.freeze_chain else params0.chain
    if chain is None and not config.freeze_chain:
        raise DomainError("initialization must carry chain parameters unless the chain is frozen")
    trace = []
    warns = []
    converged = False
    for it in range(config.max_iter):
        post = _posteriors(stacked, theta6, chain)
        ll = post.total_loglik
        trace.append(ll)
        if it > 0 and abs(ll - trace[-2]) / (abs(trace[-2]) + 1.0) < config.tol:
            converged = True
            break
        if not config.freeze_chain:
            pi1 = m_step_pi(post)
            zeta0, w0 = m_step_zeta(post, stacked.X, 0, chain.zeta0, config)
            zeta1, w1 = m_step_zeta(post, stacked.X, 1, chain.zeta1, config)
            if w0 or w1:
                warns.append(f"iteration {it}: transition update kept at current value")
            chain = ChainParams(pi1, zeta0, zeta1)
        obj = _ThetaObjective(stacked, post.gamma[:, 0], post.gamma[:, 1], tau_max)
        u, _, warn_t = _improve(obj, transform(theta6, tau_max), config)
        if warn_t:
            warns.append(f"iteration {it}: emission update kept at current value")
        theta6 = untransform(u, tau_max)
    else:
        post = _posteriors(stacked, theta6, chain)
        trace.append(post.total_loglik)
    params = ModelParams(*theta6, chain=chain)
    return FitResult(
        model="rl-hmm-ddm",
        params=params,
        loglik_trace=np.array(trace),
        converged=converged,
        iterations=len(trace) - 1,
        posteriors=post.to_posteriors(),
        warnings=warns,
    )


def fit_rl_hmm_ddm(dataset: Dataset, config: FitConfig = None) -> FitResult:
    """Generalized EM fit of the switching diffusion model.

    Runs config.restarts random initializations (the first replaced by
    config.init when provided) and returns the fit with the best final
    observed log-likelihood. Non-convergence within max_iter flags the
    result but still returns the best iterate.
    """
    config = config or FitConfig()
    stacked = _Stacked(dataset)
    tau_max = stacked.t.min() - 1e-4
    rng = np.random.default_rng(config.seed)
    best = None
    for ridx in range(config.restarts):
        init = _random_init(rng, stacked.X.shape[1], stacked.t.min())
        if ridx == 0 and config.init is not None:
            init = config.init
        result = _run_em(stacked, init, config, tau_max)
        if best is None or result.loglik > best.loglik:
            best = result
    if not best.converged:
        best.warnings.append("EM did not converge within max_iter")
    return best


# ------------------------------------------------------------------
# single-state baseline (no switching)
# ------------------------------------------------------------------

RL_DDM_IDX = np.array([1, 2, 3, 4, 5])  # alpha1, b, c, tau, beta


def fit_rl_ddm(dataset: Dataset, config: FitConfig = None) -> FitResult:
    """Direct maximum likelihood for the always-engaged diffusion model."""
    config = config or FitConfig()
    stacked = _Stacked(dataset)
    tau_max = stacked.t.min() - 1e-4
    rng = np.random.default_rng(config.seed)
    w1 = np.ones(stacked.t.shape[0])
    best = None
    for ridx in range(config.restarts):
        init = _random_init(rng, stacked.X.shape[1], stacked.t.min())
        if ridx == 0 and config.init is not None:
            ip = config.init
            init = ModelParams(1.0, ip.alpha1, ip.b, ip.c, ip.tau, ip.beta, chain=None)
        obj = _ThetaObjective(
            stacked, None, w1, tau_max, base_theta6=init.theta_tilde(), free_idx=RL_DDM_IDX
        )
        u0 = transform(init.theta_tilde(), tau_max)[RL_DDM_IDX]
        inner = replace(config, inner_max_iter=max(config.inner_max_iter, config.max_iter))
        u, fval, warn = _improve(obj, u0, inner)
        if best is None or -fval > best[1]:
            best = (u, -fval, warn, obj)
    u, ll, warn, obj = best
    theta6 = untransform(obj._full_u(u), tau_max)
    params = RlDdmParams(alpha1=theta6[1], b=theta6[2], c=theta6[3], tau=theta6[4], beta=theta6[5])
    gammas = [np.column_stack([np.zeros(j), np.ones(j)]) for j in
              (stacked.offsets[1:] - stacked.offsets[:-1])]
    post = Posteriors(
        gamma=gammas,
        xi=[np.zeros((g.shape[0] - 1, 2, 2)) for g in gammas],
        loglik=np.array([ll]),
    )
    warnings_list = ["optimizer made no progress from initialization"] if warn else []
    return FitResult(
        model="rl-ddm",
        params=params,
        loglik_trace=np.array([ll]),
        converged=not warn,
        iterations=1,
        posteriors=post,
        warnings=warnings_list,
    )


# ------------------------------------------------------------------
# softmax-emission baseline (no response times)
# ------------------------------------------------------------------

def _softmax_logliks(stacked, rho, z):
    # log Pr(a_j | z_j) = -softplus(-(2a-1) rho z)
    m = 2.0 * stacked.a - 1.0
    x = m * rho * z
    return -np.logaddexp(0.0, -x)


class _SoftmaxObjective:
    """Engaged-state Bernoulli term of the softmax model, over (logit beta, rho)."""

    def __init__(self, stacked, w1):
        self.stacked = stacked
        self.w1 = w1

    def value_and_grad(self, u):
        beta = expit(np.clip(u[0], -400.0, 400.0))
        rho = u[1]
        st = self.stacked
        z, dz = st.contrasts(beta, with_grad=True)
        m = 2.0 * st.a - 1.0
        x = m * rho * z
        val = float(self.w1 @ np.logaddexp(0.0, -x))
        resid = self.w1 * expit(-x)  # w1 * (1 - p)
        d_rho = -float(resid @ (m * z))
        d_beta = -float(resid @ (m * rho * dz)) * beta * (1.0 - beta)
        return val, np.array([d_beta, d_rho])

    def value(self, u):
        return self.value_and_grad(u)[0]


def _posteriors_softmax(stacked, beta, rho, chain) -> _StackedPosteriors:
    z, _ = stacked.contrasts(beta)
    lp = _softmax_logliks(stacked, rho, z)
    eta_all = np.column_stack([np.full(lp.shape, 0.5), np.maximum(np.exp(lp), wfpt.DENSITY_FLOOR)])
    pi_all, P_all = _chain_matrices(stacked, chain)
    gamma, xi, ll = _fb_stacked(eta_all, stacked.offsets, pi_all, P_all)
    return _StackedPosteriors(stacked, gamma, xi, ll)


def fit_rl_hmm(dataset: Dataset, config: FitConfig = None) -> FitResult:
    """EM fit of the softmax switching model (choices only, no response
    times): engaged choices follow Pr(A=1) = logistic(rho * Z), lapses are
    fair coin flips."""
    config = config or FitConfig()
    stacked = _Stacked(dataset)
    rng = np.random.default_rng(config.seed)
    best = None
    for ridx in range(config.restarts):
        mp = _random_init(rng, stacked.X.shape[1], 1.0)
        beta, rho, chain = mp.beta, rng.uniform(0.5, 6.0), mp.chain
        if ridx == 0 and config.init is not None:
            ip = config.init
            beta, rho, chain = ip.beta, ip.rho, ip.chain
        trace = []
        warns = []
        converged = False
        for it in range(config.max_iter):
            post = _posteriors_softmax(stacked, beta, rho, chain)
            ll = post.total_loglik
            trace.append(ll)
            if it > 0 and abs(ll - trace[-2]) / (abs(trace[-2]) + 1.0) < config.tol:
                converged = True
                break
            pi1 = m_step_pi(post)
            zeta0, w0 = m_step_zeta(post, stacked.X, 0, chain.zeta0, config)
            zeta1, w1 = m_step_zeta(post, stacked.X, 1, chain.zeta1, config)
            if w0 or w1:
                warns.append(f"iteration {it}: transition update kept at current value")
            chain = ChainParams(pi1, zeta0, zeta1)
            obj = _SoftmaxObjective(stacked, post.gamma[:, 1])
            u0 = np.array([logit(beta), rho])
            f0 = obj.value(u0)
            res = minimize(
                obj.value_and_grad,
                u0,
                jac=True,
                method="BFGS",
                options={"maxiter": config.inner_max_iter, "gtol": config.inner_gtol},
            )
            if np.isfinite(res.fun) and res.fun <= f0:
                beta, rho = float(expit(res.x[0])), float(res.x[1])
            else:
                warns.append(f"iteration {it}: emission update kept at current value")
        else:
            post = _posteriors_softmax(stacked, beta, rho, chain)
            trace.append(post.total_loglik)
        result = FitResult(
            model="rl-hmm",
            params=RlHmmParams(rho=rho, beta=beta, chain=chain),
            loglik_trace=np.array(trace),
            converged=converged,
            iterations=len(trace) - 1,
            posteriors=post.to_posteriors(),
            warnings=warns,
        )
        if best is None or result.loglik > best.loglik:
            best = result
    if not best.converged:
        best.warnings.append("EM did not converge within max_iter")
    return best


# ------------------------------------------------------------------
# per-subject softmax screening fit
# ------------------------------------------------------------------

@dataclass
class SoftmaxFit:
    beta: float
    rho: float
    loglik: float
    boundary: bool


def softmax_loglik(subject, beta, rho):
    """Choice log-likelihood of the plain softmax model at (beta, rho).

    Defined for rho = 0 (coin-flip model, J * log 1/2).
    """
    z = rl.trajectory_contrasts(subject, beta)
    m = 2.0 * subject.a - 1.0
    return float(-np.logaddexp(0.0, -m * rho * z).sum())


class _OneSubjectView:
    """Adapts a single subject to the stacked-workspace interface."""

    def __init__(self, subject):
        self.a = np.asarray(subject.a, dtype=float)
        self._s = np.ascontiguousarray(subject.s, dtype=np.int64)
        self._a = np.ascontiguousarray(subject.a, dtype=np.int64)
        self._r = np.ascontiguousarray(subject.r, dtype=float)
        self._offsets = np.array([0, subject.n_trials], dtype=np.int64)

    def contrasts(self, beta, with_grad=True):
        return _contrast_stacked(self._s, self._a, self._r, self._offsets, float(beta), True)


def fit_rl_softmax_subject(subject, config: FitConfig = None) -> SoftmaxFit:
    """Maximum-likelihood (beta, rho) for one subject under the softmax
    model, used by the preprocessing screen.

    The boundary flag marks unidentifiable fits: constant actions, a flat
    contrast path, or a learning rate pinned to the edge of (0, 1).
    """
    stacked = _OneSubjectView(subject)
    obj = _SoftmaxObjective(stacked, np.ones(subject.n_trials))
    best = None
    for b0, r0 in [(0.05, 1.0), (0.05, 5.0), (0.2, 2.0), (0.01, 3.0), (0.5, 1.0)]:
        res = minimize(
            obj.value_and_grad,
            np.array([logit(b0), r0]),
            jac=True,
            method="BFGS",
            options={"maxiter": 300, "gtol": 1e-10},
        )
        if np.isfinite(res.fun) and (best is None or res.fun < best.fun):
            best = res
    beta = float(expit(np.clip(best.x[0], -400.0, 400.0)))
    rho = float(best.x[1])
    z, _ = stacked.contrasts(beta)
    boundary = bool(
        np.all(subject.a == subject.a[0])
        or np.std(z) < 1e-10
        or beta < 1e-6
        or beta > 1.0 - 1e-6
    )
    return SoftmaxFit(beta=beta, rho=rho, loglik=-float(best.fun), boundary=boundary)
