"""Synthetic data generation for the two simulation designs.

Subjects carry one Bernoulli(0.6) covariate; per trial the binary state is
a fair coin, the latent strategy follows the covariate-dependent chain (or
stays engaged when switching is off), the response time and choice come
from the state-appropriate diffusion, and the reward is Bernoulli
(setting 1) or Beta (setting 2) with rich/lean asymmetry. Ground-truth
latent states and contrast paths are retained for evaluation.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import hmm, wfpt
from .data import Dataset, SubjectData
from .fit import ModelParams
from .hmm import ChainParams
from .wfpt import DomainError, SamplingError

SETTINGS = ("bernoulli", "beta")

# reward distributions: rich stimulus (s=1) vs lean stimulus (s=0)
RICH_BERN_P = 0.75
LEAN_BERN_P = 0.30
RICH_BETA_AB = (3.0, 1.0)
LEAN_BETA_AB = (1.0, 3.0)

COVARIATE_P = 0.6
MAX_REDRAWS = 100


def default_true_params() -> ModelParams:
    """Default generating parameters for both simulation designs."""
    return ModelParams(
        alpha0=1.0,
        alpha1=1.5,
        b=0.6,
        c=2.0,
        tau=0.1,
        beta=0.05,
        chain=ChainParams(
            pi1=0.8, zeta0=np.array([-0.5, -0.5]), zeta1=np.array([1.0, 1.0])
        ),
    )


@dataclass
class SimConfig:
    n: int = 100
    J: int = 100
    setting: str = "bernoulli"
    switching: bool = True
    true_params: ModelParams = field(default_factory=default_true_params)
    seed: int = 0
    dt: float = 1e-4
    t_max: float = 60.0

    def __post_init__(self):
        if self.n < 1 or self.J < 1:
            raise DomainError("n and J must be at least 1")
        if self.setting not in SETTINGS:
            raise DomainError(f"setting must be one of {SETTINGS}, got {self.setting!r}")
        if self.true_params.chain is None:
            raise DomainError("true_params must include chain parameters")


@dataclass
class SimOutput:
    dataset: Dataset
    true_u: np.ndarray  # (n, J) latent strategy ground truth
    true_z: np.ndarray  # (n, J) contrast trajectory


def _draw_reward(rng, setting, s):
    if setting == "bernoulli":
        p = RICH_BERN_P if s == 1 else LEAN_BERN_P
        return float(rng.random() < p)
    a, b = RICH_BETA_AB if s == 1 else LEAN_BETA_AB
    return float(rng.beta(a, b))


def generate(config: SimConfig, rng=None) -> SimOutput:
    """Generate a full synthetic dataset plus ground-truth sidecar arrays.

    Each subject uses an independent spawned rng stream keyed by
    (seed, subject index), so output is reproducible and independent of
    how subjects might be parallelized.
    """
    theta = config.true_params
    chain = theta.chain
    streams = np.random.SeedSequence(config.seed).spawn(config.n)
    width = max(3, len(str(config.n)))

    subjects = []
    true_u = np.empty((config.n, config.J), dtype=np.int64)
    true_z = np.empty((config.n, config.J))
    for i in range(config.n):
        rng_i = np.random.default_rng(streams[i])
        x = float(rng_i.random() < COVARIATE_P)
        P = hmm.transition_matrix(chain, [x])
        q = np.zeros((2, 2))
        s_arr = np.empty(config.J, dtype=np.int64)
        a_arr = np.empty(config.J, dtype=np.int64)
        t_arr = np.empty(config.J)
        r_arr = np.empty(config.J)
        u = 1
        for j in range(config.J):
            s = int(rng_i.integers(0, 2))
            if config.switching:
                if j == 0:
                    u = int(rng_i.random() < chain.pi1)
                else:
                    u = int(rng_i.random() < P[u, 1])
            z = q[1, s] - q[0, s]
            if u == 1:
                alpha, bias, drift = theta.alpha1, theta.b, theta.c * z
            else:
                alpha, bias, drift = theta.alpha0, 0.5, 0.0
            for attempt in range(MAX_REDRAWS):
                t, a, n_failed = wfpt.sample_batch(
                    np.array([alpha]), bias, drift, theta.tau, rng_i,
                    dt=config.dt, t_max=config.t_max,
                )
                if n_failed == 0:
                    break
            else:
                raise SamplingError(
                    f"subject {i}, trial {j}: no absorption in {MAX_REDRAWS} re-draws"
                )
            a = int(a[0])
            r = 0.0 if a != s else _draw_reward(rng_i, config.setting, s)
            s_arr[j] = s
            a_arr[j] = a
            t_arr[j] = t[0]
            r_arr[j] = r
            true_u[i, j] = u
            true_z[i, j] = z
            q[a, s] = (1.0 - theta.beta) * q[a, s] + theta.beta * r
        subjects.append(
            SubjectData(
                id=f"s{i + 1:0{width}d}",
                covariates=[x],
                s=s_arr,
                a=a_arr,
                t=t_arr,
                r=r_arr,
            )
        )
    return SimOutput(dataset=Dataset(subjects), true_u=true_u, true_z=true_z)
