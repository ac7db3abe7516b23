"""Decreasing chains ``I >= T_1 >= T_2 >= ... >= T_N >= 0`` and their factorization.

A finite chain stands in for an infinite decreasing sequence; its last term is
used as the limit ``T`` and ``P`` is the spectral projection of ``T`` for the
eigenvalue 1. Continuing a chain with copies of its last term (``extend=True``
in the accessors) is again a decreasing sequence with the same limit.
"""

from dataclasses import dataclass, field
import math

import numpy as np

from .errors import ConstructionError, DomainError, OrderError, RangeError
from .diagnostics import f_k_fn, gap_of
from .rng import make_rng, random_orthogonal, random_unit_vector
from .symmat import (
    CLUSTER_TOL,
    LOEWNER_TOL,
    apply_spectral_fn,
    as_symmetric,
    contraction_from_pair,
    loewner_leq,
    min_eigenvalue,
    psd_sqrt,
    spectral_projection_top,
    sym_eig,
)

COMMUTE_TOL = 1e-7
MAX_TERMS_SMALL = 100_000  # dim <= 8
MAX_TERMS_LARGE = 1_000  # dim <= 100


def check_length(dim, n):
    if dim < 1 or n < 1:
        raise DomainError("dim and N must be positive")
    cap = MAX_TERMS_SMALL if dim <= 8 else MAX_TERMS_LARGE if dim <= 100 else 0
    if n > cap:
        raise DomainError(f"N = {n} exceeds the materialization cap {cap} for dim {dim}")


@dataclass(frozen=True, eq=False)
class ContractionChain:
    """Finite decreasing chain of positive contractions.

    Terms are 1-based: ``term(1)`` is ``T_1``. The stack ``terms`` has shape
    ``(N, dim, dim)`` and is read-only.
    """

    terms: np.ndarray
    proj_P: np.ndarray
    meta: dict = field(default_factory=dict)
    cluster_tol: float = CLUSTER_TOL
    _cache: dict = field(default_factory=dict, repr=False)

    @classmethod
    def from_terms(cls, terms, meta=None, verify=True, tol=LOEWNER_TOL, cluster_tol=CLUSTER_TOL):
        """Build a chain, computing ``P`` from the last term.

        With ``verify`` the Loewner order and the commutation of ``P`` with
        every term are checked; failures raise :class:`OrderError` and
        :class:`ConstructionError` respectively.
        """
        stack = np.array([as_symmetric(t) for t in terms], dtype=float)
        if stack.ndim != 3 or stack.shape[0] < 1:
            raise DomainError("a chain needs at least one term")
        stack.setflags(write=False)
        last_eig = sym_eig(stack[-1])
        proj = spectral_projection_top(stack[-1], cluster_tol, eig=last_eig)
        proj.setflags(write=False)
        chain = cls(stack, proj, dict(meta or {}), cluster_tol)
        chain._cache[("eig", len(stack))] = last_eig
        if verify:
            report = verify_chain(chain, tol)
            if not report.accepted:
                raise OrderError(
                    f"not a decreasing chain of positive contractions (witness {report.witness:.3e})"
                )
            drift = chain.commutation_defect()
            if drift > COMMUTE_TOL:
                raise ConstructionError(f"P fails to commute with the chain (defect {drift:.3e})")
        return chain

    def __len__(self):
        return self.terms.shape[0]

    @property
    def dim(self):
        return self.terms.shape[1]

    @property
    def limit_proxy(self):
        return self.terms[-1]

    def _index(self, i, extend):
        i = int(i)
        if i < 1:
            raise RangeError(f"chain index {i} < 1")
        if i > len(self):
            if not extend:
                raise RangeError(f"chain index {i} exceeds length {len(self)}")
            i = len(self)
        return i

    def term(self, i, extend=False):
        return self.terms[self._index(i, extend) - 1]

    def eig(self, i, extend=False):
        i = self._index(i, extend)
        key = ("eig", i)
        if key not in self._cache:
            self._cache[key] = sym_eig(self.terms[i - 1])
        return self._cache[key]

    def f_matrix(self, i, k, extend=False):
        """``f_k(T_i)``, cached per (i, k)."""
        i = self._index(i, extend)
        key = ("f", i, int(k))
        if key not in self._cache:
            self._cache[key] = apply_spectral_fn(self.terms[i - 1], f_k_fn(k), eig=self.eig(i))
        return self._cache[key]

    def proj_at(self, i, extend=False):
        """``P_i``, the eigenvalue-1 projection of ``T_i``."""
        return spectral_projection_top(self.term(i, extend), self.cluster_tol, eig=self.eig(i, extend))

    def commutation_defect(self):
        p = self.proj_P
        return float(max(np.abs(p @ t - t @ p).max() for t in self.terms))


@dataclass(frozen=True)
class ChainReport:
    """Witness eigenvalues for a chain.

    ``diff_min_eigs[0]`` is the smallest eigenvalue of ``I - T_1`` and
    ``diff_min_eigs[k]`` that of ``T_k - T_{k+1}``.
    """

    diff_min_eigs: np.ndarray
    term_min_eigs: np.ndarray
    top_eig_T1: float
    gap: float
    tol: float

    @property
    def witness(self):
        return float(min(self.diff_min_eigs.min(), self.term_min_eigs.min()))

    @property
    def accepted(self):
        return self.witness >= -self.tol

    def to_dict(self):
        return {
            "accepted": bool(self.accepted),
            "witness": self.witness,
            "tol": self.tol,
            "top_eig_T1": self.top_eig_T1,
            "gap_of_limit": self.gap,
            "min_order_eig": float(self.diff_min_eigs.min()),
            "min_term_eig": float(self.term_min_eigs.min()),
            "length": int(len(self.term_min_eigs)),
        }


def verify_chain(chain, tol=LOEWNER_TOL):
    terms = chain.terms
    n, d = terms.shape[0], terms.shape[1]
    diffs = np.empty(n)
    mins = np.empty(n)
    diffs[0] = min_eigenvalue(np.eye(d) - terms[0])
    for i in range(n):
        mins[i] = chain.eig(i + 1).eigenvalues[0]
        if i + 1 < n:
            diffs[i + 1] = min_eigenvalue(terms[i] - terms[i + 1])
    top = float(chain.eig(1).eigenvalues[-1])
    gap = gap_of(chain.limit_proxy, chain.cluster_tol, eig=chain.eig(n))
    return ChainReport(diffs, mins, top, gap, float(tol))


def random_positive_contraction(dim, rng, n_ones=0, top=0.9):
    """``Q diag(1, ..., 1, u_1, ...) Q^T`` with ``n_ones`` exact ones and ``u_i`` uniform in [0, top]."""
    rng = make_rng(rng)
    q = random_orthogonal(dim, rng)
    vals = np.concatenate([np.ones(n_ones), rng.uniform(0.0, top, dim - n_ones)])
    return (q * vals) @ q.T


def _meta(name, seed, **params):
    return {"generator": name, "seed": None if seed is None else int(seed), "params": params}


def gen_constant(t, n, seed=None):
    t = as_symmetric(t)
    check_length(t.shape[0], n)
    if not (loewner_leq(np.zeros_like(t), t) and loewner_leq(t, np.eye(t.shape[0]))):
        raise OrderError("constant chain needs 0 <= T <= I")
    return ContractionChain.from_terms([t] * n, _meta("constant", seed, dim=t.shape[0], N=n))


def gen_constant_random(dim, n, seed, n_ones=None):
    """Constant chain of one seeded random positive contraction with ``n_ones`` exact ones."""
    rng = make_rng(seed)
    n_ones = max(1, dim // 2) if n_ones is None else n_ones
    t = random_positive_contraction(dim, rng, n_ones)
    chain = gen_constant(t, n, seed)
    chain.meta["params"]["n_ones"] = n_ones
    return chain


def gen_projection_chain(dim, n, seed, ranks=None):
    """Nested projections onto the leading columns of one random orthonormal frame."""
    check_length(dim, n)
    rng = make_rng(seed)
    q = random_orthogonal(dim, rng)
    if ranks is None:
        ranks = np.sort(rng.integers(0, dim + 1, n))[::-1]
        ranks[0] = dim
    ranks = [int(r) for r in ranks]
    if len(ranks) != n or any(r < 0 or r > dim for r in ranks) or any(a < b for a, b in zip(ranks, ranks[1:])):
        raise DomainError("ranks must be a nonincreasing list of N integers in [0, dim]")
    terms = [q[:, :r] @ q[:, :r].T for r in ranks]
    return ContractionChain.from_terms(terms, _meta("projections", seed, dim=dim, N=n, ranks=ranks))


def chain_from_diagonals(diagonals, basis=None, meta=None):
    """``T_n = Q diag(D_n) Q^T``; rows of ``diagonals`` must decrease entrywise."""
    diag = np.asarray(diagonals, dtype=float)
    if diag.ndim != 2:
        raise DomainError("diagonals must be an (N, dim) array")
    if np.any(diag < 0) or np.any(diag > 1) or np.any(np.diff(diag, axis=0) > 0):
        raise OrderError("diagonals must lie in [0, 1] and be entrywise nonincreasing")
    q = np.eye(diag.shape[1]) if basis is None else np.asarray(basis, dtype=float)
    terms = [(q * row) @ q.T for row in diag]
    return ContractionChain.from_terms(terms, meta)


def gen_commuting_diagonal(dim, n, seed, pinned=None):
    """Commuting chain in one random eigenbasis.

    The first ``pinned`` coordinates are exactly 1 in every term; coordinate
    ``i`` of the others decays geometrically from ``U_i`` towards ``L_i < 0.9``.
    """
    check_length(dim, n)
    rng = make_rng(seed)
    pinned = max(1, dim // 2) if pinned is None else int(pinned)
    if not 0 <= pinned <= dim:
        raise DomainError("pinned must lie in [0, dim]")
    q = random_orthogonal(dim, rng)
    free = dim - pinned
    lo = rng.uniform(0.0, 0.9, free)
    hi = lo + (1.0 - lo) * rng.uniform(0.0, 1.0, free)
    rate = rng.uniform(0.5, 0.95, free)
    steps = np.arange(n)[:, None]
    diag = np.hstack([np.ones((n, pinned)), lo + (hi - lo) * rate**steps])
    meta = _meta("commuting", seed, dim=dim, N=n, pinned=pinned)
    return chain_from_diagonals(diag, q, meta)


def _random_contraction(d, rng, shrink=(0.9, 1.0)):
    g = rng.standard_normal((d, d))
    return g * (rng.uniform(*shrink) / np.linalg.norm(g, 2))


def _random_contractions(dim, n, rng, fix_vector=False):
    """``n`` random contractions; with ``fix_vector`` all fix one common unit vector."""
    if not fix_vector:
        return [_random_contraction(dim, rng) for _ in range(n)]
    u = random_unit_vector(dim, rng)
    q = random_orthogonal(dim, rng)
    # orthonormal basis of the complement of u
    comp = np.linalg.qr(np.column_stack([u, q]))[0][:, 1:dim]
    xs = []
    for _ in range(n):
        c = _random_contraction(dim - 1, rng) if dim > 1 else np.zeros((0, 0))
        xs.append(np.outer(u, u) + comp @ c @ comp.T)
    return xs


def products_gram(xs):
    """``T_n = y_n^T y_n`` with ``y_n = x_n ... x_1``."""
    y = np.eye(np.asarray(xs[0]).shape[0])
    out = []
    for x in xs:
        y = np.asarray(x, dtype=float) @ y
        out.append(y.T @ y)
    return out


def chain_from_factors(xs, meta=None):
    return ContractionChain.from_terms(products_gram(xs), meta)


def gen_random_decreasing(dim, n, seed, fix_vector=False):
    """Chain ``T_n = y_n^T y_n`` from seeded random contractions ``x_n``.

    Each ``x_n`` is a Gaussian matrix rescaled to operator norm in [0.9, 1].
    With ``fix_vector`` every ``x_n`` fixes one common unit vector, which then
    spans the eigenvalue-1 space of every term.
    """
    check_length(dim, n)
    rng = make_rng(seed)
    xs = _random_contractions(dim, n, rng, fix_vector)
    chain = chain_from_factors(xs, _meta("random", seed, dim=dim, N=n, fix_vector=bool(fix_vector)))
    chain._cache["factors"] = xs
    return chain


def gen_proj_average(dim, n, seed, projections=None):
    """Chain from ``x_n = (e_n + I) / 2`` with seeded random orthogonal projections ``e_n``."""
    check_length(dim, n)
    rng = make_rng(seed)
    if projections is None:
        projections = []
        for _ in range(n):
            r = int(rng.integers(1, dim)) if dim > 1 else 1
            q = random_orthogonal(dim, rng)[:, :r]
            projections.append(q @ q.T)
    if len(projections) != n:
        raise DomainError("need exactly N projections")
    xs = [0.5 * (np.asarray(e, dtype=float) + np.eye(dim)) for e in projections]
    chain = chain_from_factors(xs, _meta("proj-average", seed, dim=dim, N=n))
    chain._cache["factors"] = xs
    return chain


def gen_gap_chain(dim, n, delta, seed, pinned=None, drop_at=None):
    """Decreasing chain whose terms all have spectrum in ``[0, 1 - delta] U {1}``.

    In a random orthonormal frame each term is block diagonal. The first block
    holds ``pinned`` coordinates equal to 1 until a seeded drop time (possibly
    never), after which they sit at a constant value ``<= 1 - delta``. The second
    block is ``(1 - delta) R_n`` with ``R_n`` a random non-commuting decreasing
    chain, so the eigenvalue-1 spaces are nested and shrink at the drop times.
    ``drop_at`` overrides the drop times (one per pinned coordinate; ``n + 1``
    means never) without changing the other random draws.
    """
    if not 0.0 < delta < 1.0:
        raise DomainError("delta must lie in (0, 1)")
    check_length(dim, n)
    rng = make_rng(seed)
    pinned = math.ceil(dim / 2) if pinned is None else int(pinned)
    if not 0 <= pinned <= dim:
        raise DomainError("pinned must lie in [0, dim]")
    q = random_orthogonal(dim, rng)
    drop = rng.integers(2, n + 2, pinned)
    never = rng.uniform(size=pinned) < 0.5
    drop[never] = n + 1
    if drop_at is not None:
        drop = np.asarray(drop_at, dtype=np.int64)
        if drop.shape != (pinned,) or np.any(drop < 1) or np.any(drop > n + 1):
            raise DomainError("drop_at needs one time in [1, N + 1] per pinned coordinate")
    after = (1.0 - delta) * rng.uniform(0.0, 1.0, pinned)
    rest = dim - pinned
    rest_terms = products_gram(_random_contractions(rest, n, rng)) if rest else [np.zeros((0, 0))] * n
    terms = []
    for j in range(1, n + 1):
        w = np.zeros((dim, dim))
        w[:pinned, :pinned] = np.diag(np.where(j < drop, 1.0, after))
        w[pinned:, pinned:] = (1.0 - delta) * rest_terms[j - 1]
        terms.append(q @ w @ q.T)
    meta = _meta("gap", seed, dim=dim, N=n, delta=float(delta), pinned=pinned)
    return ContractionChain.from_terms(terms, meta)


def gen_geometric(dim, n, seed, delta=0.3, rate=0.5):
    """Non-commuting chain with ``||T_n - T|| = O(rate**n)`` and gap ``delta`` in the limit.

    ``T`` has half its spectrum at 1 and the rest in ``[0, 1 - delta]``;
    ``M = T + (I - T)^{1/2} C (I - T)^{1/2}`` with a random ``0 <= C <= I`` lies
    between ``T`` and ``I``, and ``T_n = T + rate**(n-1) (M - T)``.
    """
    if not 0.0 < delta < 1.0 or not 0.0 < rate < 1.0:
        raise DomainError("delta and rate must lie in (0, 1)")
    check_length(dim, n)
    rng = make_rng(seed)
    t = random_positive_contraction(dim, rng, max(1, dim // 2), top=1.0 - delta)
    c = random_positive_contraction(dim, rng, 0, top=1.0)
    root = psd_sqrt(np.eye(dim) - t)
    m = t + root @ c @ root
    terms = [t + rate**j * (m - t) for j in range(n)]
    meta = _meta("geometric", seed, dim=dim, N=n, delta=float(delta), rate=float(rate))
    return ContractionChain.from_terms(terms, meta)


def factorize_chain(chain):
    """Contractions ``x_1 = T_1^{1/2}`` and ``x_{n+1}`` with ``x_{n+1} T_n^{1/2} = T_{n+1}^{1/2}``.

    Then ``T_n = y_n^T y_n`` with ``y_n = x_n ... x_1``.

    Raises
    ------
    OrderError
        If consecutive terms are not ordered.
    """
    terms = chain.terms
    xs = [psd_sqrt(terms[0], eig=chain.eig(1))]
    for i in range(1, len(terms)):
        xs.append(contraction_from_pair(terms[i], terms[i - 1]))
    return xs


def factorization_residual(chain, xs):
    """Largest ``|(y_n^T y_n - T_n)_{ij}|`` over all n."""
    rebuilt = products_gram(xs)
    return float(max(np.abs(r - t).max() for r, t in zip(rebuilt, chain.terms)))


GENERATOR_KINDS = ("constant", "projections", "commuting", "gap", "random", "proj-average", "geometric")


def generate(kind, dim, n, seed, delta=None, **options):
    """Dispatch on the generator name used by the command line and configs."""
    if kind == "constant":
        return gen_constant_random(dim, n, seed, **options)
    if kind == "projections":
        return gen_projection_chain(dim, n, seed, **options)
    if kind == "commuting":
        return gen_commuting_diagonal(dim, n, seed, **options)
    if kind == "gap":
        return gen_gap_chain(dim, n, 0.25 if delta is None else delta, seed, **options)
    if kind == "random":
        return gen_random_decreasing(dim, n, seed, **options)
    if kind == "proj-average":
        return gen_proj_average(dim, n, seed, **options)
    if kind == "geometric":
        return gen_geometric(dim, n, seed, 0.3 if delta is None else delta, **options)
    raise DomainError(f"unknown generator kind {kind!r}; expected one of {', '.join(GENERATOR_KINDS)}")
