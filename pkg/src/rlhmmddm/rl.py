"""Rescorla-Wagner value learning over binary (action, state) pairs.

Tracks expected rewards Q(a, s) per subject and exposes the reward
contrast Z(s) = Q(1, s) - Q(0, s) that drives the engaged-state drift
rate. Learning runs on every trial, regardless of the latent strategy.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numba import njit


class DataError(ValueError):
    """Raised on malformed or inconsistent trial data."""


@dataclass(frozen=True)
class QTable:
    """Expected reward for each (action, state) pair; q has shape (2, 2)
    indexed q[a, s]."""

    q: np.ndarray

    def __post_init__(self):
        q = np.asarray(self.q, dtype=float)
        if q.shape != (2, 2) or not np.all(np.isfinite(q)):
            raise DataError("QTable requires a finite 2x2 array")
        object.__setattr__(self, "q", q)


def init_q(value=0.0) -> QTable:
    """Fresh table with every cell at the configured initial value."""
    return QTable(np.full((2, 2), float(value)))


def update(table: QTable, s, a, r, beta) -> QTable:
    """One learning step: the visited cell moves toward the reward.

    q'[a, s] = (1 - beta) * q[a, s] + beta * r; all other cells unchanged.
    """
    if not (0.0 < beta < 1.0):
        raise DataError(f"beta must lie in (0, 1), got {beta}")
    if not np.isfinite(r):
        raise DataError(f"reward must be finite, got {r}")
    q = table.q.copy()
    q[a, s] = (1.0 - beta) * q[a, s] + beta * r
    return QTable(q)


def contrast(table: QTable, s) -> float:
    """Reward contrast Z(s) = q[1, s] - q[0, s]."""
    return float(table.q[1, s] - table.q[0, s])


@njit(cache=True)
def _contrast_path(s, a, r, beta, q_init, with_grad):
    """Contrast trajectory and its beta-derivative for one trial sequence.

    z[j] is computed from the table state before trial j's update; the
    derivative recursion tracks dQ/dbeta alongside Q.
    """
    J = s.shape[0]
    z = np.empty(J)
    dz = np.empty(J)
    q = np.full((2, 2), q_init)
    dq = np.zeros((2, 2))
    for j in range(J):
        sj = s[j]
        aj = a[j]
        z[j] = q[1, sj] - q[0, sj]
        if with_grad:
            dz[j] = dq[1, sj] - dq[0, sj]
            dq[aj, sj] = (1.0 - beta) * dq[aj, sj] + (r[j] - q[aj, sj])
        q[aj, sj] = (1.0 - beta) * q[aj, sj] + beta * r[j]
    return z, dz


def trajectory_contrasts(subject, beta, q_init=0.0):
    """Per-trial reward contrasts Z_j for one subject, j = 1..J.

    Z_j uses the table state before trial j's update; the table is then
    updated with that trial's (s, a, r).
    """
    z, _ = contrasts_with_beta_grad(subject, beta, q_init=q_init, grad=False)
    return z


def contrasts_with_beta_grad(subject, beta, q_init=0.0, grad=True):
    """Contrast trajectory and (optionally) dZ_j/dbeta arrays."""
    if not (0.0 < beta < 1.0):
        raise DataError(f"beta must lie in (0, 1), got {beta}")
    s = np.ascontiguousarray(subject.s, dtype=np.int64)
    a = np.ascontiguousarray(subject.a, dtype=np.int64)
    r = np.ascontiguousarray(subject.r, dtype=np.float64)
    if not (s.shape == a.shape == r.shape) or s.ndim != 1:
        raise DataError("subject trial arrays must be 1-d and equal length")
    if s.shape[0] == 0:
        raise DataError("subject has no trials")
    if not np.all(np.isfinite(r)):
        raise DataError("rewards contain non-finite values")
    z, dz = _contrast_path(s, a, r, float(beta), float(q_init), grad)
    return z, (dz if grad else None)
