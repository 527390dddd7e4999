"""Two-state hidden Markov machinery for engaged/lapsed strategy switching.

State 1 ("engaged") emits (response time, choice) from the learning-driven
diffusion; state 0 ("lapsed") from a symmetric zero-drift diffusion.
Transitions are logistic in subject covariates and time-homogeneous within
a subject. Smoothing uses the scaled forward-backward recursions.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import rl, wfpt
from .rl import DataError
from .wfpt import DENSITY_FLOOR, LOG_FLOOR, DomainError


@dataclass(frozen=True)
class ChainParams:
    """Initial engaged probability and logistic transition coefficients.

    zeta0 governs transitions out of lapsed, zeta1 out of engaged; each is
    (intercept, slopes...) of length p+1 for p covariates.
    """

    pi1: float
    zeta0: np.ndarray
    zeta1: np.ndarray

    def __post_init__(self):
        if not (np.isfinite(self.pi1) and 0.0 < self.pi1 < 1.0):
            raise DomainError(f"pi1 must lie in (0, 1), got {self.pi1}")
        z0 = np.atleast_1d(np.asarray(self.zeta0, dtype=float))
        z1 = np.atleast_1d(np.asarray(self.zeta1, dtype=float))
        if not (np.all(np.isfinite(z0)) and np.all(np.isfinite(z1))):
            raise DomainError("transition coefficients must be finite")
        if z0.shape != z1.shape:
            raise DomainError("zeta0 and zeta1 must have equal length")
        object.__setattr__(self, "zeta0", z0)
        object.__setattr__(self, "zeta1", z1)

    @property
    def initial(self) -> np.ndarray:
        return np.array([1.0 - self.pi1, self.pi1])

    @property
    def n_covariates(self) -> int:
        return int(self.zeta0.shape[0] - 1)

    def __eq__(self, other):
        if not isinstance(other, ChainParams):
            return NotImplemented
        return (
            self.pi1 == other.pi1
            and np.array_equal(self.zeta0, other.zeta0)
            and np.array_equal(self.zeta1, other.zeta1)
        )


@dataclass
class Posteriors:
    """Smoothed per-subject state marginals, pairwise transition
    probabilities, and observed-data log-likelihoods.

    gamma[i] has shape (J_i, 2); xi[i] has shape (J_i - 1, 2, 2) with
    xi[i][j, k, l] = Pr(U_j = k, U_{j+1} = l | data)."""

    gamma: list
    xi: list
    loglik: np.ndarray

    @property
    def total_loglik(self) -> float:
        return float(self.loglik.sum())


def _logistic(x):
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def transition_matrix(chain: ChainParams, x) -> np.ndarray:
    """Row-stochastic 2x2 transition matrix for covariate vector x.

    Row k is [1 - p_k, p_k] with p_k = logistic(zeta_k0 + zeta_k1' x), the
    probability of being engaged next given current state k.
    """
    x = np.atleast_1d(np.asarray(x, dtype=float))
    if x.shape[0] != chain.n_covariates:
        raise DataError(
            f"covariate length {x.shape[0]} does not match coefficients "
            f"(expect {chain.n_covariates})"
        )
    p0 = _logistic(chain.zeta0[0] + chain.zeta0[1:] @ x)
    p1 = _logistic(chain.zeta1[0] + chain.zeta1[1:] @ x)
    return np.array([[1.0 - p0, p0], [1.0 - p1, p1]])


def emissions(subject, theta, z=None) -> np.ndarray:
    """Per-trial joint densities eta (J x 2) under each latent state.

    Column 0 evaluates the lapsed diffusion (alpha0, bias 1/2, zero drift);
    column 1 the engaged diffusion with drift c * Z_j. Entries are floored
    at 1e-300; both columns share the non-decision time tau.
    """
    if z is None:
        z = rl.trajectory_contrasts(subject, theta.beta)
    log_eta = log_emissions(subject, theta, z)
    return np.exp(log_eta)


def log_emissions(subject, theta, z) -> np.ndarray:
    t = subject.t
    a = subject.a
    out = np.empty((t.shape[0], 2))
    out[:, 0] = wfpt._log_joint(t, a, theta.alpha0, 0.5, 0.0, theta.tau)
    out[:, 1] = wfpt._log_joint(t, a, theta.alpha1, theta.b, theta.c * z, theta.tau)
    return out


def forward_backward(eta, pi, P):
    """Scaled forward-backward smoothing for one subject.

    eta: (J, 2) emission densities (> 0); pi: initial distribution;
    P: 2x2 row-stochastic transition matrix. Returns (gamma, xi, loglik)
    where loglik is the observed-data log-likelihood log sum over latent
    paths, accumulated as the sum of the per-trial normalizers.
    """
    eta = np.asarray(eta, dtype=float)
    if eta.ndim != 2 or eta.shape[1] != 2 or eta.shape[0] == 0:
        raise DataError("eta must be a non-empty (J, 2) array")
    pi = np.asarray(pi, dtype=float)
    P = np.asarray(P, dtype=float)
    J = eta.shape[0]

    rho = np.empty((J, 2))
    c = np.empty(J)
    f = pi * eta[0]
    c[0] = f.sum()
    rho[0] = f / c[0]
    for j in range(1, J):
        f = eta[j] * (rho[j - 1] @ P)
        c[j] = f.sum()
        rho[j] = f / c[j]

    varpi = np.empty((J, 2))
    varpi[J - 1] = 1.0
    for j in range(J - 2, -1, -1):
        varpi[j] = (P @ (eta[j + 1] * varpi[j + 1])) / c[j + 1]

    gamma = rho * varpi
    xi = (
        rho[:-1, :, None]
        * P[None, :, :]
        * (eta[1:, None, :] * varpi[1:, None, :])
        / c[1:, None, None]
    )
    return gamma, xi, float(np.log(c).sum())


def posterior_action(t, k, s, q: rl.QTable, theta):
    """Posterior over the action given the response time and latent state.

    Returns (probs, degenerate): probs[a] = Pr(A = a | T = t, U = k, ...),
    computed as the ratio of the state-k joint density at (t, a) to the sum
    over both actions. When both densities sit on the floor the trial is
    uninformative: probs = (1/2, 1/2) and degenerate is True.
    """
    if k == 0:
        params = (theta.alpha0, 0.5, 0.0)
    elif k == 1:
        z = rl.contrast(q, s)
        params = (theta.alpha1, theta.b, theta.c * z)
    else:
        raise DomainError(f"latent state must be 0 or 1, got {k}")
    logf = wfpt._log_joint(np.array([t, t]), np.array([0, 1]), *params, theta.tau)
    if np.all(logf <= LOG_FLOOR):
        return np.array([0.5, 0.5]), True
    f = np.exp(logf - logf.max())
    return f / f.sum(), False
