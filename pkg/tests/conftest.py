"""Shared fixtures: the scalar two-layer workhorse and reference replicas."""

from __future__ import annotations

import numpy as np
import pytest

import koopcascade as kc


@pytest.fixture(scope="session")
def scalar_pair():
    """Scalar layers 0.5 / 0.9 with unit chain coupling; all correction
    quantities are hand-computable (Ctilde = 2.25, D = 2.5)."""
    return kc.CascadeSystem.build(
        [np.array([[0.5]]), np.array([[0.9]])],
        {(2, 1): np.array([[1.0]])},
    )


@pytest.fixture(scope="session")
def scalar_pair_pd(scalar_pair):
    return kc.compute_perturbation(scalar_pair)


def make_replica(seed: int, layers: int = 7):
    """Reference experiment system: random dims in 2..6, layer norms
    0.9^(layers+1-i), chain couplings uniform in [-1, 1]."""
    rng = np.random.default_rng(seed)
    dims = [int(d) for d in rng.integers(2, 7, layers)]
    norms = [0.9 ** (layers + 1 - i) for i in range(1, layers + 1)]
    system = kc.random_chained_cascade(dims, norms, rng)
    return system, rng


@pytest.fixture(scope="session")
def replica():
    system, rng = make_replica(45)
    x0 = system.random_state(rng)
    return system, kc.compute_perturbation(system), x0
