"""Dense real symmetric matrices: eigensolver, Loewner order, functional calculus.

Matrices are plain ``float64`` numpy arrays. Symmetric inputs are symmetrized on
entry (``(A + A.T) / 2``) so that later code may rely on exact symmetry.
"""

from dataclasses import dataclass
from functools import lru_cache
import math

import numpy as np

from .errors import DomainError, NumericalFailure, OrderError, ShapeError

JACOBI_TOL = 1e-12
JACOBI_MAX_SWEEPS = 100
LOEWNER_TOL = 1e-9
CLUSTER_TOL = 1e-8
CLAMP_TOL = 1e-8
# eigenvalues this close to 0 or 1 are snapped onto the endpoint before a
# scalar function is applied (f_k is not Lipschitz at 1)
SNAP_TOL = 1e-13
RANK_CUTOFF = 1e-10


def as_matrix(a):
    """Validate a square finite matrix and return it as a float64 array."""
    m = np.array(a, dtype=float)
    if m.ndim != 2 or m.shape[0] != m.shape[1] or m.shape[0] < 1:
        raise ShapeError(f"expected a non-empty square matrix, got shape {m.shape}")
    if not np.all(np.isfinite(m)):
        raise DomainError("matrix has non-finite entries")
    return m


def as_symmetric(a):
    m = as_matrix(a)
    return 0.5 * (m + m.T)


def _check_same_shape(a, b):
    if a.shape != b.shape:
        raise ShapeError(f"dimension mismatch: {a.shape} vs {b.shape}")


@dataclass(frozen=True)
class EigDecomp:
    """Eigenvalues in ascending order and the matching orthonormal columns."""

    eigenvalues: np.ndarray
    basis: np.ndarray

    @property
    def dim(self):
        return len(self.eigenvalues)

    def reconstruct(self, values=None):
        """Return ``Q diag(values) Q^T`` (the source matrix when ``values`` is None)."""
        lam = self.eigenvalues if values is None else np.asarray(values, dtype=float)
        q = self.basis
        out = (q * lam) @ q.T
        return 0.5 * (out + out.T)


@lru_cache(maxsize=None)
def _round_robin(n):
    """Pairings for one cyclic sweep in which every (p, q) appears exactly once."""
    m = n + (n % 2)
    players = list(range(m))
    rounds = []
    for _ in range(m - 1):
        pairs = []
        for i in range(m // 2):
            p, q = players[i], players[m - 1 - i]
            if p < n and q < n:
                pairs.append((min(p, q), max(p, q)))
        rounds.append(pairs)
        players = [players[0]] + [players[-1]] + players[1:-1]
    out = []
    for pairs in rounds:
        if pairs:
            p, q = np.array(pairs).T
            out.append((p, q))
    return out


def _rotation(app, aqq, apq):
    """Jacobi rotation (c, s) annihilating the (p, q) entries, elementwise."""
    zero = apq == 0.0
    # a subnormal apq overflows theta to inf, which gives the correct t = 0
    with np.errstate(over="ignore"):
        theta = (aqq - app) / np.where(zero, 1.0, 2.0 * apq)
        t = np.copysign(1.0, theta) / (np.abs(theta) + np.hypot(theta, 1.0))
    t[zero] = 0.0
    c = 1.0 / np.sqrt(1.0 + t * t)
    return c, t * c


def _eig2(a):
    app, apq, aqq = a[0, 0], a[0, 1], a[1, 1]
    if apq == 0.0:
        c, s = 1.0, 0.0
    else:
        theta = (aqq - app) / (2.0 * apq)
        t = math.copysign(1.0, theta) / (abs(theta) + math.hypot(theta, 1.0))
        c = 1.0 / math.sqrt(1.0 + t * t)
        s = t * c
        app, aqq = app - t * apq, aqq + t * apq
    vals = np.array([app, aqq])
    vecs = np.array([[c, s], [-s, c]])
    return vals, vecs


def sym_eig(a, tol=JACOBI_TOL, max_sweeps=JACOBI_MAX_SWEEPS):
    """Eigendecomposition of a symmetric matrix by cyclic Jacobi rotations.

    Each sweep visits every off-diagonal pair once, grouped in round-robin
    order so that the rotations of one round act on disjoint index pairs and
    can be applied together. Iteration stops when the off-diagonal Frobenius
    mass drops below ``tol * ||A||_F``.

    Raises
    ------
    NumericalFailure
        If ``max_sweeps`` sweeps do not reach the threshold.
    """
    a = as_symmetric(a)
    n = a.shape[0]
    if n == 1:
        return EigDecomp(a[0].copy(), np.ones((1, 1)))
    if n == 2:
        vals, vecs = _eig2(a)
    else:
        scale = np.linalg.norm(a)
        eye = np.eye(n)
        v = eye
        rounds = _round_robin(n)
        mask = ~np.eye(n, dtype=bool)
        for _ in range(max_sweeps):
            off = math.sqrt(float(np.sum(a[mask] ** 2)))
            if off <= tol * scale:
                break
            for p, q in rounds:
                c, s = _rotation(a[p, p], a[q, q], a[p, q])
                j = eye.copy()
                j[p, p] = c
                j[q, q] = c
                j[p, q] = s
                j[q, p] = -s
                a = j.T @ a @ j
                a = 0.5 * (a + a.T)
                v = v @ j
        else:
            off = math.sqrt(float(np.sum(a[mask] ** 2)))
            if off > tol * scale:
                raise NumericalFailure(
                    f"Jacobi did not converge in {max_sweeps} sweeps (off-diagonal mass {off:.3e})"
                )
        vals, vecs = np.diag(a).copy(), v
    order = np.argsort(vals, kind="stable")
    return EigDecomp(vals[order], vecs[:, order])


def min_eigenvalue(a):
    return float(sym_eig(a).eigenvalues[0])


def is_psd(a, tol=0.0):
    if tol < 0:
        raise DomainError("tol must be non-negative")
    return min_eigenvalue(a) >= -tol


def loewner_witness(a, b):
    """Smallest eigenvalue of ``B - A``; non-negative iff ``A <= B``."""
    a, b = as_symmetric(a), as_symmetric(b)
    _check_same_shape(a, b)
    return min_eigenvalue(b - a)


def loewner_leq(a, b, tol=LOEWNER_TOL):
    """``A <= B`` in the Loewner order, up to ``tol`` on the witness eigenvalue."""
    return loewner_witness(a, b) >= -tol


def spectral_map(a, f, eig=None):
    """``Q f(Lambda) Q^T`` without any domain restriction on the spectrum."""
    e = sym_eig(a) if eig is None else eig
    return e.reconstruct(f(e.eigenvalues))


def unit_interval_spectrum(eigenvalues, clamp_tol=CLAMP_TOL, snap_tol=SNAP_TOL):
    """Clamp a spectrum into [0, 1].

    Excursions outside the interval larger than ``clamp_tol`` are an error, and
    values within ``snap_tol`` of an endpoint are moved onto it.
    """
    lam = np.asarray(eigenvalues, dtype=float)
    if lam.size and (lam.min() < -clamp_tol or lam.max() > 1.0 + clamp_tol):
        raise DomainError(
            f"spectrum [{lam.min():.3e}, {lam.max():.3e}] leaves [0, 1] by more than {clamp_tol:g}"
        )
    lam = np.clip(lam, 0.0, 1.0)
    lam = np.where(lam <= snap_tol, 0.0, lam)
    lam = np.where(lam >= 1.0 - snap_tol, 1.0, lam)
    return lam


def apply_spectral_fn(a, f, clamp_tol=CLAMP_TOL, snap_tol=SNAP_TOL, eig=None):
    """Apply a scalar function on [0, 1] to a positive contraction.

    Parameters
    ----------
    a : array_like
        Symmetric matrix with spectrum in [0, 1] up to ``clamp_tol``.
    f : callable
        Vectorized scalar function defined on [0, 1].
    eig : EigDecomp, optional
        Precomputed decomposition of ``a``.

    Returns
    -------
    ndarray
        ``Q f(Lambda) Q^T``, symmetric.
    """
    e = sym_eig(a) if eig is None else eig
    lam = unit_interval_spectrum(e.eigenvalues, clamp_tol, snap_tol)
    return e.reconstruct(np.asarray(f(lam), dtype=float))


def psd_sqrt(a, eig=None):
    """Square root of a positive semidefinite matrix; round-off negatives become 0."""
    e = sym_eig(a) if eig is None else eig
    lam = e.eigenvalues
    floor = 64 * np.finfo(float).eps * max(1.0, float(np.max(np.abs(lam))))
    if lam.min() < -max(CLAMP_TOL, floor):
        raise DomainError(f"matrix is not positive semidefinite (eigenvalue {lam.min():.3e})")
    lam = np.where(lam <= floor, 0.0, lam)
    return e.reconstruct(np.sqrt(lam))


def spectral_projection_top(a, cluster_tol=CLUSTER_TOL, eig=None):
    """Orthogonal projection onto the eigenvectors with eigenvalue >= 1 - cluster_tol."""
    e = sym_eig(a) if eig is None else eig
    cols = e.basis[:, e.eigenvalues >= 1.0 - cluster_tol]
    p = cols @ cols.T
    return 0.5 * (p + p.T)


def range_projection(a, rank_cutoff=RANK_CUTOFF, eig=None):
    """Projection onto the span of eigenvectors above ``rank_cutoff * lambda_max``."""
    e = sym_eig(a) if eig is None else eig
    top = max(float(np.max(np.abs(e.eigenvalues))), 0.0)
    cols = e.basis[:, e.eigenvalues > rank_cutoff * top] if top > 0 else e.basis[:, :0]
    p = cols @ cols.T
    return 0.5 * (p + p.T)


def operator_norm(a):
    """Largest singular value, ``sqrt(lambda_max(A^T A))``."""
    m = as_matrix(a)
    lam = sym_eig(m.T @ m).eigenvalues[-1]
    return math.sqrt(max(float(lam), 0.0))


def clip_to_contraction(x):
    """Nearest operator-norm contraction: singular values above 1 are set to 1."""
    u, s, vt = np.linalg.svd(x)
    if s.size and s[0] <= 1.0:
        return x
    return (u * np.minimum(s, 1.0)) @ vt


def contraction_from_pair(s, t, tol=LOEWNER_TOL, rank_cutoff=RANK_CUTOFF):
    """Contraction ``x`` with ``x T^{1/2} = S^{1/2}``, given ``0 <= S <= T <= I``.

    ``x`` is ``S^{1/2}`` times the pseudo-inverse of ``T^{1/2}``; eigenvalues of
    ``T^{1/2}`` below ``rank_cutoff * lambda_max`` count as kernel, where ``x`` is
    zero. Round-off on nearly singular directions can push a singular value of
    the raw product above 1; such values are clipped back to 1.

    Raises
    ------
    OrderError
        If ``0 <= S <= T <= I`` fails by more than ``tol``.
    """
    s, t = as_symmetric(s), as_symmetric(t)
    _check_same_shape(s, t)
    n = s.shape[0]
    checks = (
        ("S >= 0", min_eigenvalue(s)),
        ("S <= T", loewner_witness(s, t)),
        ("T <= I", loewner_witness(t, np.eye(n))),
    )
    for name, witness in checks:
        if witness < -tol:
            raise OrderError(f"{name} violated (witness eigenvalue {witness:.3e})")
    et = sym_eig(t)
    root_t = np.sqrt(np.clip(et.eigenvalues, 0.0, None))
    top = float(root_t.max()) if root_t.size else 0.0
    keep = root_t > rank_cutoff * top if top > 0 else np.zeros(n, dtype=bool)
    if not np.any(keep):
        return np.zeros((n, n))
    q = et.basis[:, keep]
    pinv_root = (q / root_t[keep]) @ q.T
    x = psd_sqrt(s) @ pinv_root
    return clip_to_contraction(x)
