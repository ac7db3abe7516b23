"""Reordered products ``S_n^sigma = T_{sigma(n)} ... T_{sigma(1)}`` and convergence traces."""

from dataclasses import dataclass, field
import math

import numpy as np

from .errors import DomainError, MissingData, ParseError, RangeError

SIGMA_KINDS = ("identity", "block_repeat", "interleave", "explicit")
NORM_SLACK = 1e-12


@dataclass(frozen=True)
class ProperMap:
    """A proper self-map of the positive integers, described by its kind.

    * ``identity``: ``sigma(n) = n``.
    * ``block_repeat`` (``param = B``): ``1, ..., 1, 2, ..., 2, ...`` with each
      value repeated ``B`` times.
    * ``interleave`` (``param = S``): writing ``n - 1 = qS + r`` with
      ``0 <= r < S``, ``sigma(n) = q + S - r``; for ``S = 2`` this is
      ``2, 1, 3, 2, 4, 3, ...``. Every value is hit at most ``S`` times.
    * ``explicit``: the listed ``prefix`` first, then ``tail(n - len(prefix))``
      shifted up by ``max(prefix)`` so the tail continues above the prefix.

    ``horizon`` bounds the admissible arguments (``None``: unbounded).
    """

    kind: str = "identity"
    param: int = 1
    prefix: tuple = ()
    tail: "ProperMap | None" = None
    horizon: "int | None" = None

    def __post_init__(self):
        if self.kind not in SIGMA_KINDS:
            raise DomainError(f"unknown sigma kind {self.kind!r}")
        if self.kind in ("block_repeat", "interleave") and self.param < 1:
            raise DomainError(f"{self.kind} needs a positive parameter")
        if self.kind == "explicit":
            if self.tail is None or self.tail.kind == "explicit":
                raise DomainError("explicit maps need a non-explicit tail")
            if any(int(i) < 1 for i in self.prefix):
                raise DomainError("prefix indices must be >= 1")
            object.__setattr__(self, "prefix", tuple(int(i) for i in self.prefix))
        if self.horizon is not None and self.horizon < 0:
            raise DomainError("horizon must be non-negative")

    @classmethod
    def identity(cls, horizon=None):
        return cls("identity", 1, horizon=horizon)

    @classmethod
    def block_repeat(cls, b, horizon=None):
        return cls("block_repeat", int(b), horizon=horizon)

    @classmethod
    def interleave(cls, stride, horizon=None):
        return cls("interleave", int(stride), horizon=horizon)

    @classmethod
    def explicit(cls, prefix, tail=None, horizon=None):
        return cls("explicit", 1, tuple(prefix), tail or cls.identity(), horizon)

    def with_horizon(self, horizon):
        return ProperMap(self.kind, self.param, self.prefix, self.tail, horizon)

    def __call__(self, n):
        return sigma_eval(self, n)

    def indices(self, n):
        """``sigma(1), ..., sigma(n)`` as an integer array."""
        if n < 0:
            raise RangeError("n must be non-negative")
        if self.horizon is not None and n > self.horizon:
            raise RangeError(f"n = {n} exceeds the horizon {self.horizon}")
        return _indices(self, np.arange(1, n + 1, dtype=np.int64))

    @property
    def repetition_bound(self):
        """``sup_k #sigma^{-1}({k})``."""
        if self.kind == "identity":
            return 1
        if self.kind in ("block_repeat", "interleave"):
            return self.param
        counts = {}
        for i in self.prefix:
            counts[i] = counts.get(i, 0) + 1
        return max(max(counts.values(), default=0), self.tail.repetition_bound)

    def describe(self):
        if self.kind == "identity":
            return "identity"
        if self.kind == "block_repeat":
            return f"blocks:{self.param}"
        if self.kind == "interleave":
            return f"interleave:{self.param}"
        return f"explicit:{list(self.prefix)}+{self.tail.describe()}"

    def to_dict(self):
        if self.kind != "explicit":
            raise DomainError("only explicit maps have a file form")
        return {"prefix": list(self.prefix), "tail": self.tail.describe()}


def _indices(sigma, n):
    if sigma.kind == "identity":
        return n
    if sigma.kind == "block_repeat":
        return (n - 1) // sigma.param + 1
    if sigma.kind == "interleave":
        q, r = np.divmod(n - 1, sigma.param)
        return q + sigma.param - r
    prefix = np.asarray(sigma.prefix, dtype=np.int64)
    m = len(prefix)
    shift = int(prefix.max()) if m else 0
    out = np.empty_like(n)
    head = n <= m
    out[head] = prefix[n[head] - 1]
    out[~head] = _indices(sigma.tail, n[~head] - m) + shift
    return out


def sigma_eval(sigma, n):
    """``sigma(n)`` for ``1 <= n <= horizon``.

    Raises
    ------
    RangeError
        Outside ``[1, horizon]``.
    """
    n = int(n)
    if n < 1 or (sigma.horizon is not None and n > sigma.horizon):
        raise RangeError(f"sigma argument {n} outside [1, {sigma.horizon}]")
    return int(_indices(sigma, np.array([n], dtype=np.int64))[0])


def parse_sigma(text, horizon=None):
    """Parse ``identity``, ``blocks:B``, ``interleave:S`` (``file:`` is handled by io)."""
    text = text.strip()
    if text == "identity":
        return ProperMap.identity(horizon)
    kind, _, arg = text.partition(":")
    try:
        value = int(arg)
    except ValueError:
        raise ParseError(f"cannot parse sigma spec {text!r}") from None
    if kind in ("blocks", "block_repeat"):
        return ProperMap.block_repeat(value, horizon)
    if kind == "interleave":
        return ProperMap.interleave(value, horizon)
    raise ParseError(f"cannot parse sigma spec {text!r}")


def sigma_from_dict(obj, horizon=None):
    if not isinstance(obj, dict) or set(obj) - {"prefix", "tail"} or "prefix" not in obj:
        raise ParseError('sigma file must be {"prefix": [...], "tail": "identity|blocks:B"}')
    tail = parse_sigma(obj.get("tail", "identity"))
    try:
        prefix = [int(i) for i in obj["prefix"]]
    except (TypeError, ValueError):
        raise ParseError("sigma prefix must be a list of integers") from None
    return ProperMap.explicit(prefix, tail, horizon)


def product_prefix(chain, sigma, n, extend=False):
    """``T_{sigma(n)} ... T_{sigma(1)}``, the identity for ``n = 0``."""
    s = np.eye(chain.dim)
    for i in sigma.indices(n):
        s = chain.term(int(i), extend=extend) @ s
    return s


def product_window(chain, sigma, start, length, extend=False):
    """``T_{sigma(start+length)} ... T_{sigma(start+1)}``."""
    idx = sigma.indices(start + length)[start:]
    s = np.eye(chain.dim)
    for i in idx:
        s = chain.term(int(i), extend=extend) @ s
    return s


@dataclass
class ConvergenceTrace:
    """Per-step record of ``xi_n = S_n^sigma xi``.

    Row ``n`` describes the state after ``n`` factors; row 0 is the input
    vector. ``f_functional[n]`` is ``<f_k(T_{sigma(n)}) xi_n, xi_n>`` (row 0 uses
    ``T_{sigma(1)}``). Columns that were not tracked hold NaN.
    """

    step: np.ndarray
    sigma_index: np.ndarray
    xi_norm: np.ndarray
    dist_to_P: np.ndarray
    adjoint_dist: np.ndarray
    f_functional: np.ndarray
    xi: np.ndarray
    p_xi: np.ndarray
    k: int
    sigma: ProperMap
    chain_meta: dict = field(default_factory=dict)
    vectors: "np.ndarray | None" = None
    stopped_early: bool = False

    COLUMNS = ("step", "sigma_index", "xi_norm", "dist_to_P", "adjoint_dist", "f_functional")

    def __len__(self):
        return len(self.step)

    @property
    def final_step(self):
        return int(self.step[-1])

    def steps_to(self, threshold):
        """First step with ``dist_to_P <= threshold``, or None."""
        hit = np.nonzero(self.dist_to_P <= threshold)[0]
        return int(self.step[hit[0]]) if hit.size else None

    def rows(self):
        for i in range(len(self.step)):
            yield (
                int(self.step[i]),
                int(self.sigma_index[i]),
                float(self.xi_norm[i]),
                float(self.dist_to_P[i]),
                float(self.adjoint_dist[i]),
                float(self.f_functional[i]),
            )


def trace_convergence(
    chain,
    sigma,
    xi,
    n,
    k=1,
    *,
    extend=False,
    adjoint=True,
    functional=True,
    retain=False,
    stop_below=None,
):
    """Iterate ``xi_{m+1} = T_{sigma(m+1)} xi_m`` for ``m < n`` and record diagnostics.

    Parameters
    ----------
    chain : ContractionChain
    sigma : ProperMap
    xi : array_like
        Start vector.
    n : int
        Number of factors.
    k : int
        Index of ``f_k`` in the functional column.
    extend : bool
        Continue the chain with its last term past its length.
    adjoint : bool
        Track ``||(S_n^sigma)^T xi - P xi||``; costs a matrix product per step.
    functional : bool
        Track the ``f_k`` functional.
    retain : bool
        Keep every ``xi_n`` (needed by :func:`stability_check`).
    stop_below : float, optional
        Stop at the first step where ``dist_to_P`` (and the adjoint distance,
        when tracked) are at most this value.

    Returns
    -------
    ConvergenceTrace
    """
    xi = np.asarray(xi, dtype=float)
    if xi.shape != (chain.dim,):
        raise DomainError(f"xi has shape {xi.shape}, expected ({chain.dim},)")
    if not np.all(np.isfinite(xi)):
        raise DomainError("xi has non-finite entries")
    if n < 0 or k < 1:
        raise DomainError("need n >= 0 and k >= 1")
    idx = sigma.indices(n)
    if not extend and idx.size and idx.max() > len(chain):
        raise RangeError(f"sigma reaches index {int(idx.max())} beyond the chain length {len(chain)}")
    p_xi = chain.proj_P @ xi
    nan = math.nan
    steps, sig, norms, dists, adjs, funcs = [], [], [], [], [], []
    vectors = [xi.copy()] if retain else None
    v = xi.copy()
    s = np.eye(chain.dim) if adjoint else None

    def record(m, index, first_next):
        steps.append(m)
        sig.append(index)
        norms.append(math.sqrt(float(v @ v)))
        dists.append(float(np.linalg.norm(v - p_xi)))
        adjs.append(float(np.linalg.norm(s.T @ xi - p_xi)) if adjoint else nan)
        if functional:
            j = index if index > 0 else first_next
            funcs.append(float(v @ chain.f_matrix(j, k, extend=True) @ v) if j > 0 else nan)
        else:
            funcs.append(nan)

    first = int(idx[0]) if idx.size else 1
    record(0, 0, first)
    stopped = False
    for m in range(1, n + 1):
        if stop_below is not None and dists[-1] <= stop_below and (not adjoint or adjs[-1] <= stop_below):
            stopped = True
            break
        i = int(idx[m - 1])
        t = chain.term(i, extend=extend)
        v = t @ v
        if adjoint:
            s = t @ s
        if retain:
            vectors.append(v.copy())
        record(m, i, i)
    return ConvergenceTrace(
        step=np.array(steps, dtype=np.int64),
        sigma_index=np.array(sig, dtype=np.int64),
        xi_norm=np.array(norms),
        dist_to_P=np.array(dists),
        adjoint_dist=np.array(adjs),
        f_functional=np.array(funcs),
        xi=xi.copy(),
        p_xi=p_xi,
        k=int(k),
        sigma=sigma,
        chain_meta=dict(chain.meta),
        vectors=np.array(vectors) if retain else None,
        stopped_early=stopped,
    )


def stability_check(trace, k_shift):
    """Largest ``||xi_{n+k} - xi_n||`` with ``n`` in the last quarter of the trace.

    Raises
    ------
    MissingData
        If the trace did not retain its vectors.
    """
    if trace.vectors is None:
        raise MissingData("trace was recorded without retain=True")
    if k_shift < 0:
        raise DomainError("k_shift must be non-negative")
    vecs = trace.vectors
    total = len(vecs)
    start = (3 * total) // 4
    stop = total - k_shift
    if stop <= start:
        start = max(0, stop - 1)
    if stop <= 0:
        return 0.0
    diffs = vecs[start + k_shift : stop + k_shift] - vecs[start:stop]
    return float(np.max(np.linalg.norm(diffs, axis=1)))


def xi_norm_monotone(trace, slack=NORM_SLACK):
    return bool(np.all(np.diff(trace.xi_norm) <= slack))
