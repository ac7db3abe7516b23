"""Seeded randomness.

All randomness in the package flows from one non-negative 64-bit integer seed
through numpy's PCG64 bit generator (``numpy.random.Generator(PCG64(seed))``).
Normal variates use numpy's ziggurat sampler. Results are therefore
reproducible for a fixed numpy major version.
"""

import numpy as np

SEED_MASK = (1 << 64) - 1


def make_rng(seed):
    """Return a fresh generator for ``seed`` (reduced modulo 2**64)."""
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.Generator(np.random.PCG64(int(seed) & SEED_MASK))


def random_orthogonal(d, rng):
    """Random orthogonal matrix from the QR factorization of a Gaussian matrix.

    The signs of the columns are fixed so that ``R`` has a positive diagonal,
    which makes the map from the Gaussian sample to ``Q`` deterministic (and the
    resulting ``Q`` Haar distributed).
    """
    g = rng.standard_normal((d, d))
    q, r = np.linalg.qr(g)
    signs = np.sign(np.diag(r))
    signs[signs == 0] = 1.0
    return q * signs


def random_unit_vector(d, rng):
    v = rng.standard_normal(d)
    nrm = np.linalg.norm(v)
    while nrm == 0.0:
        v = rng.standard_normal(d)
        nrm = np.linalg.norm(v)
    return v / nrm
