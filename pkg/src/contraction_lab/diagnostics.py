"""Quantitative checks on decreasing chains of positive contractions.

The functions ``f_k(t) = 1 - (1 - t)**(1/k)`` are operator monotone on [0, 1]
and increase to the indicator of {1} as ``k`` grows. Along the orbit
``xi_{n+1} = T_n xi_n`` of a decreasing chain the functional
``<f_k(T_n) xi_n, xi_n>`` never increases, and every step loses at least
``(1 - gamma**2) * mu_n([0, gamma))`` of squared norm, where ``gamma`` solves
``f_k(gamma) = 1/2`` and ``mu_n`` is the spectral measure of ``(T_n, xi_n)``.
Together these give an explicit number of steps after which
``||xi_n||**2 <= eps``.
"""

from dataclasses import dataclass
from fractions import Fraction
import math

import numpy as np

from .errors import ChainTooShort, DomainError, NoGap, RangeError
from .symmat import CLUSTER_TOL, as_symmetric, operator_norm, sym_eig

# eigenvalues within this distance above gamma count as lying below it
GAMMA_TIE_TOL = 1e-12
DISSIPATION_TOL = 1e-10
RATE_TOL = 1e-10
NORM_CONV_TOL = 1e-8


def f_k(t, k):
    """``1 - (1 - t)**(1/k)`` on [0, 1]; accepts scalars or arrays."""
    if k < 1 or int(k) != k:
        raise DomainError(f"k must be a positive integer, got {k!r}")
    arr = np.asarray(t, dtype=float)
    if np.any(~np.isfinite(arr)) or np.any(arr < 0.0) or np.any(arr > 1.0):
        raise DomainError("f_k is defined on [0, 1]")
    if k == 1:
        out = arr.copy()
    else:
        out = 1.0 - np.power(1.0 - arr, 1.0 / k)
    return float(out) if out.ndim == 0 else out


def f_k_fn(k):
    """``f_k`` as a one-argument callable, for :func:`symmat.apply_spectral_fn`."""
    return lambda t: f_k(t, k)


def gamma(k):
    """The point where ``f_k`` equals 1/2, namely ``1 - 2**-k``."""
    if k < 1 or int(k) != k:
        raise DomainError(f"k must be a positive integer, got {k!r}")
    return 1.0 - 2.0 ** (-int(k))


@dataclass(frozen=True)
class SpectralMass:
    """Atomic spectral measure of a pair (T, xi): atoms at the eigenvalues of T."""

    eigenvalues: np.ndarray
    weights: np.ndarray

    @property
    def total(self):
        return float(np.sum(self.weights))

    def mass(self, lo, hi, closed_lo=True, closed_hi=True):
        lam = self.eigenvalues
        inside = (lam >= lo) if closed_lo else (lam > lo)
        inside &= (lam <= hi) if closed_hi else (lam < hi)
        return float(np.sum(self.weights[inside]))

    def mass_below(self, level, tie_tol=GAMMA_TIE_TOL):
        """Mass of ``[0, level)``; atoms within ``tie_tol`` above ``level`` count as below."""
        return float(np.sum(self.weights[self.eigenvalues < level + tie_tol]))

    def integrate(self, g):
        return float(np.sum(np.asarray(g(self.eigenvalues), dtype=float) * self.weights))


def spectral_mass(t, xi, eig=None):
    e = sym_eig(t) if eig is None else eig
    xi = np.asarray(xi, dtype=float)
    if xi.shape != (e.dim,):
        raise DomainError(f"vector of length {xi.shape} does not match dimension {e.dim}")
    coeffs = e.basis.T @ xi
    return SpectralMass(e.eigenvalues.copy(), coeffs**2)


@dataclass(frozen=True)
class DissipationResult:
    lhs: float
    rhs: float
    ok: bool


def dissipation_check(t, xi, k, eig=None):
    """Check ``(1 - gamma**2) * mu([0, gamma)) <= ||xi||**2 - ||T xi||**2``."""
    t = as_symmetric(t)
    xi = np.asarray(xi, dtype=float)
    g = gamma(k)
    mu = spectral_mass(t, xi, eig=eig)
    lhs = (1.0 - g * g) * mu.mass_below(g)
    rhs = float(xi @ xi - np.sum((t @ xi) ** 2))
    return DissipationResult(lhs, rhs, lhs <= rhs + DISSIPATION_TOL)


def rate_bound(m, k, eps, xi_m_norm_sq):
    """First index ``m + ceil(2 ||xi_m||^2 / ((1 - gamma_k^2) eps))``.

    The arithmetic is exact (rational) so that integer-valued quotients are not
    pushed up by round-off.
    """
    if eps <= 0:
        raise DomainError("eps must be positive")
    if xi_m_norm_sq < 0:
        raise DomainError("squared norm must be non-negative")
    g = 1 - Fraction(1, 2 ** int(k)) if k >= 1 else None
    if g is None:
        raise DomainError("k must be a positive integer")
    steps = 2 * Fraction(xi_m_norm_sq) / ((1 - g * g) * Fraction(eps))
    return int(m) + math.ceil(steps)


@dataclass(frozen=True)
class RateVerdict:
    m: int
    k: int
    eps: float
    premise_value: float
    premise_holds: bool
    xi_m_norm_sq: float
    n_bound: int
    conclusion_value: float
    conclusion_holds: bool

    @property
    def ok(self):
        return (not self.premise_holds) or self.conclusion_holds


def rate_guarantee_check(chain, xi, m, k, eps, extend=False):
    """Run the rate guarantee on the orbit ``xi_1 = xi``, ``xi_{n+1} = T_n xi_n``.

    The premise is ``<f_k(T_m) xi_m, xi_m> <= eps / 4``; when it holds the
    conclusion ``||xi_N||^2 <= eps`` must follow at ``N = rate_bound(m, k, eps,
    ||xi_m||^2)``. With ``extend`` the chain continues with its last term.

    Raises
    ------
    ChainTooShort
        If the chain (not extended) has fewer than ``N - 1`` terms.
    """
    if m < 1:
        raise RangeError("m is a 1-based index")
    xi = np.asarray(xi, dtype=float)
    if m > len(chain) and not extend:
        raise ChainTooShort(f"m = {m} exceeds the chain length {len(chain)}")
    v = xi.copy()
    for j in range(1, m):
        v = chain.term(j, extend=extend) @ v
    xi_m_sq = float(v @ v)
    fm = chain.f_matrix(m, k, extend=extend)
    premise = float(v @ fm @ v)
    n_bound = rate_bound(m, k, eps, xi_m_sq)
    if n_bound - 1 > len(chain) and not extend:
        raise ChainTooShort(f"rate bound N = {n_bound} needs {n_bound - 1} terms, chain has {len(chain)}")
    for j in range(m, n_bound):
        v = chain.term(j, extend=extend) @ v
    concl = float(v @ v)
    return RateVerdict(
        m=int(m),
        k=int(k),
        eps=float(eps),
        premise_value=premise,
        premise_holds=premise <= eps / 4.0,
        xi_m_norm_sq=xi_m_sq,
        n_bound=n_bound,
        conclusion_value=concl,
        conclusion_holds=concl <= eps + RATE_TOL,
    )


def gap_of(t, one_tol=CLUSTER_TOL, eig=None):
    """Largest ``delta`` with no eigenvalue in ``(1 - delta, 1 - one_tol)``.

    Eigenvalues at or above ``1 - one_tol`` count as 1. A spectrum made only of
    such eigenvalues has gap 1 by convention.
    """
    e = sym_eig(t) if eig is None else eig
    below = e.eigenvalues[e.eigenvalues < 1.0 - one_tol]
    if below.size == 0:
        return 1.0
    return float(max(0.0, 1.0 - below.max()))


@dataclass(frozen=True)
class SummabilityReport:
    partial_sums: np.ndarray
    sup_estimate: float
    note: str = "limit replaced by the last chain term (finite horizon)"


def summability_report(chain):
    """Partial sums of ``||T - T_n||`` with T the chain's last term."""
    t = chain.limit_proxy
    norms = np.array([operator_norm(t - chain.terms[i]) for i in range(len(chain))])
    sums = np.cumsum(norms)
    return SummabilityReport(sums, float(sums[-1]) if sums.size else 0.0)


@dataclass(frozen=True)
class NormConvergenceResult:
    value: float
    bound: float
    delta: float
    k_power: int
    n: int
    tail_sum: float

    @property
    def ok(self):
        return self.value <= self.bound


def norm_convergence_check(chain, sigma, k_power, n=None, extend=False, min_gap=0.0):
    """Compare ``||S_n^sigma - P||`` with ``(1 - delta)**k + sum of the last k errors``.

    Here ``T`` is the chain's last term, ``delta = gap_of(T)`` and the tail sum
    is ``sum_{j = n-k+1}^{n} ||T_{sigma(j)} - T||``. ``n`` defaults to the map's
    horizon. Eigenvalues within the chain's cluster tolerance of 1 count as 1,
    so the computed gap is never below that tolerance; ``min_gap`` sets the
    smallest gap treated as isolating 1.

    Raises
    ------
    NoGap
        If the gap of the last term is at most ``min_gap``.
    """
    from .products import product_prefix

    n = sigma.horizon if n is None else int(n)
    if n is None or n < k_power:
        raise RangeError(f"need n >= k_power, got n = {n}, k = {k_power}")
    t = chain.limit_proxy
    delta = gap_of(t, eig=chain.eig(len(chain)))
    if delta <= min_gap:
        raise NoGap(f"gap {delta:.3e} of the limit does not exceed {min_gap:g}")
    s = product_prefix(chain, sigma, n, extend=extend)
    value = operator_norm(s - chain.proj_P)
    idx = sigma.indices(n)[n - k_power:]
    tail = sum(operator_norm(chain.term(int(i), extend=extend) - t) for i in idx)
    bound = (1.0 - delta) ** k_power + tail + NORM_CONV_TOL
    return NormConvergenceResult(value, bound, delta, int(k_power), n, float(tail))


def f_functional(chain, index, xi, k, extend=False):
    """``<f_k(T_index) xi, xi>``."""
    fm = chain.f_matrix(index, k, extend=extend)
    xi = np.asarray(xi, dtype=float)
    return float(xi @ fm @ xi)


__all__ = [
    "DissipationResult",
    "NormConvergenceResult",
    "RateVerdict",
    "SpectralMass",
    "SummabilityReport",
    "dissipation_check",
    "f_functional",
    "f_k",
    "f_k_fn",
    "gamma",
    "gap_of",
    "norm_convergence_check",
    "rate_bound",
    "rate_guarantee_check",
    "spectral_mass",
    "summability_report",
]
