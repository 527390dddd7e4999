"""Shared test helpers: brute-force oracles and quick dataset builders."""

import itertools

import numpy as np

from rlhmmddm.data import Dataset, SubjectData


def enumerate_smoother(eta, pi, P):
    """Brute-force gamma, xi, loglik by summing over all 2^J latent paths."""
    J = eta.shape[0]
    gamma = np.zeros((J, 2))
    xi = np.zeros((J - 1, 2, 2))
    total = 0.0
    for path in itertools.product((0, 1), repeat=J):
        w = pi[path[0]] * eta[0, path[0]]
        for j in range(1, J):
            w *= P[path[j - 1], path[j]] * eta[j, path[j]]
        total += w
        for j in range(J):
            gamma[j, path[j]] += w
        for j in range(J - 1):
            xi[j, path[j], path[j + 1]] += w
    return gamma / total, xi / total, np.log(total)


def synthetic_dataset(rng, n=10, J=20, p=1):
    """Arbitrary (non-model) data with valid shapes, for plumbing tests."""
    subjects = []
    for i in range(n):
        subjects.append(
            SubjectData(
                id=f"s{i + 1:03d}",
                covariates=rng.integers(0, 2, p).astype(float),
                s=rng.integers(0, 2, J),
                a=rng.integers(0, 2, J),
                t=0.15 + rng.gamma(2.0, 0.2, J),
                r=rng.uniform(0, 1, J),
            )
        )
    return Dataset(subjects)
