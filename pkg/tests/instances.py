"""Random instance generators shared by the test modules."""

import numpy as np

from tvpsur.model import NoiseSpec, SurDataset


def random_spd(rng, n, floor=0.3):
    A = rng.standard_normal((n, n))
    return A @ A.T / n + floor * np.eye(n)


def random_state_cov(rng, k, rank=None, scale=0.2):
    rank = k if rank is None else rank
    B = rng.standard_normal((k, rank)) * np.sqrt(scale)
    return B @ B.T


def random_noise(rng, k, kind="full"):
    """``kind`` is one of full, rankdef, zero, mixed."""
    G = len(k)
    Sigma_i = []
    for i, ki in enumerate(k):
        choice = kind if kind != "mixed" else ("full", "rankdef", "zero")[rng.integers(3)]
        if choice == "zero":
            Sigma_i.append(np.zeros((ki, ki)))
        elif choice == "rankdef":
            Sigma_i.append(random_state_cov(rng, ki, rank=max(ki - 1, 0)))
        else:
            Sigma_i.append(random_state_cov(rng, ki))
    return NoiseSpec(random_spd(rng, G), tuple(Sigma_i))


def random_data(rng, k, t):
    X = tuple(rng.standard_normal((t, ki)) for ki in k)
    return SurDataset(X, rng.standard_normal((len(k), t)))


def rel_err(a, b):
    a, b = np.asarray(a, dtype=float), np.asarray(b, dtype=float)
    return float(np.linalg.norm(a - b) / max(np.linalg.norm(b), 1e-300))
