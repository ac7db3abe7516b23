"""A decreasing chain of 2x2 positive contractions whose product rotates ``e_1``.

With ``D = 2 / delta``, ``eps_k = 1 / (D + n - k)`` and
``theta_k = theta / log(D + n - k)`` the chain is

    T_k = beta_0 ... beta_k (P_{eta_k} + (1 - eps_k) P_{eta_k}^perp),   k = 0, ..., n-1,

where ``eta_k`` is the unit vector at angle ``rho_k``. The angles follow
``phi_0 = 0``, ``rho_0 = theta_0``; one step of ``alpha_step`` moves the unit
vector at ``phi_k`` to ``alpha_{k+1}`` times the unit vector at ``phi_{k+1}``,
and ``rho_{k+1} = phi_{k+1} + theta_{k+1}``. ``beta_k`` is the largest constant
keeping ``T_k <= T_{k-1}``. Then

    T_{n-1} ... T_0 e_1 = (prod alpha_k) (prod beta_k^(n-k)) (cos phi_n, sin phi_n).

Each step turns the vector by roughly ``eps_k theta_k`` while losing only
``O(eps_k theta_k^2)`` of length, so the product of near-identity operators
can rotate by a fixed angle with length bounded below by ``exp(-34 B theta^2)``,
``B = 1 / log D``.
"""

from dataclasses import dataclass
from fractions import Fraction
import math

import numpy as np

from .errors import ConstructionError, DomainError, ThetaTooLarge, Unreachable
from .seqgen import ContractionChain, verify_chain

ALPHA_C = 10.0
BOUND_TOL = 1e-12
SUM_TOL = 1e-9
PHI_TOL = 1e-10
# rounding slack on the angle hypotheses; rho - phi loses a few ulp
ANGLE_TOL = 1e-12
# regime "strict": C theta_k^2 <= 1/2 and 1 - 18 eps_k theta_k^2 >= 1/2 for every k.
# regime "relaxed": only the hypotheses of the two one-step estimates
# (relative angles in [0, pi/3], eps_k <= 1/2).
REGIMES = ("strict", "relaxed")


@dataclass(frozen=True)
class RotationParams:
    delta: float
    n: int
    theta: float
    regime: str = "strict"

    def __post_init__(self):
        if not 0.0 < self.delta < 0.25:
            raise DomainError("delta must lie in (0, 1/4) so that D = 2/delta > 8")
        if self.n < 0 or int(self.n) != self.n:
            raise DomainError("n must be a non-negative integer")
        if not self.theta > 0.0:
            raise DomainError("theta must be positive")
        if self.regime not in REGIMES:
            raise DomainError(f"regime must be one of {REGIMES}")

    @property
    def D(self):
        return 2.0 / self.delta

    @property
    def B(self):
        return 1.0 / math.log(self.D)

    def eps(self):
        """``eps_k`` for ``k = 0, ..., n``."""
        return 1.0 / (self.D + self.n - np.arange(self.n + 1))

    def thetas(self):
        """``theta_k`` for ``k = 0, ..., n``."""
        return self.theta / np.log(self.D + self.n - np.arange(self.n + 1))


def alpha_step(phi, rho, eps):
    """Apply ``P_eta + (1 - eps) P_eta^perp`` to the unit vector at angle ``phi``.

    ``eta`` is the unit vector at angle ``rho``. Returns ``(alpha, phi_next)``
    with the image equal to ``alpha`` times the unit vector at ``phi_next``.
    Works elementwise on arrays.

    Raises
    ------
    DomainError
        Unless ``eps`` is in [0, 1/2] and ``rho - phi`` is in [0, pi/3].
    """
    phi, rho, eps = np.broadcast_arrays(*(np.asarray(x, dtype=float) for x in (phi, rho, eps)))
    rel = rho - phi
    if np.any(eps < 0) or np.any(eps > 0.5):
        raise DomainError("eps must lie in [0, 1/2]")
    if np.any(rel < -ANGLE_TOL) or np.any(rel > math.pi / 3 + ANGLE_TOL):
        raise DomainError("relative angle rho - phi must lie in [0, pi/3]")
    rel = np.clip(rel, 0.0, math.pi / 3)
    s, c = np.sin(rel), np.cos(rel)
    # in the frame of xi: image = (1 - eps s^2, eps c s)
    x = 1.0 - eps * s * s
    y = eps * c * s
    alpha = np.hypot(x, y)
    turn = np.arctan2(y, x)
    if alpha.ndim == 0:
        return float(alpha), float(phi + turn)
    return alpha, phi + turn


def beta_min(phi_rel, eps, kappa):
    """Largest ``beta`` with ``P_xi + (1-eps) P_xi^perp >= beta (P_zeta + (1-kappa) P_zeta^perp)``.

    ``xi`` and ``zeta`` are unit vectors at relative angle ``phi_rel``. The value
    is the smaller eigenvalue of ``K (I - eps P_zeta^perp) K`` with
    ``K = diag(1, (1 - kappa)^{-1/2})``, computed in closed form. Works
    elementwise on arrays.

    Raises
    ------
    DomainError
        Unless ``0 < eps``, ``eps + eps^2 < kappa < 1/2`` and ``phi_rel`` in [0, pi/3].
    """
    phi_rel, eps, kappa = np.broadcast_arrays(*(np.asarray(x, dtype=float) for x in (phi_rel, eps, kappa)))
    if np.any(eps <= 0) or np.any(eps + eps * eps >= kappa) or np.any(kappa >= 0.5):
        raise DomainError("need 0 < eps, eps + eps^2 < kappa < 1/2")
    if np.any(phi_rel < -ANGLE_TOL) or np.any(phi_rel > math.pi / 3 + ANGLE_TOL):
        raise DomainError("phi_rel must lie in [0, pi/3]")
    phi_rel = np.clip(phi_rel, 0.0, math.pi / 3)
    s, c = np.sin(phi_rel), np.cos(phi_rel)
    a = 1.0 - eps * s * s
    b = eps * c * s / np.sqrt(1.0 - kappa)
    d = (1.0 - eps * c * c) / (1.0 - kappa)
    beta = 0.5 * (a + d) - np.hypot(0.5 * (a - d), b)
    return float(beta) if beta.ndim == 0 else beta


@dataclass(frozen=True)
class RotationState:
    """Per-step quantities of the construction.

    ``eps``, ``theta``, ``phi`` and ``rho`` are indexed ``0..n``; ``alpha[j]`` is
    ``alpha_{j+1}`` (``j = 0..n-1``) and ``beta[k]`` is ``beta_k`` (``k = 0..n-1``,
    with ``beta_0 = 1``).
    """

    params: RotationParams
    eps: np.ndarray
    theta: np.ndarray
    phi: np.ndarray
    rho: np.ndarray
    alpha: np.ndarray
    beta: np.ndarray
    smallness_ok: bool

    @property
    def phi_n(self):
        return float(self.phi[-1])

    @property
    def log_alpha_prod(self):
        return float(np.sum(np.log(self.alpha)))

    @property
    def log_beta_weighted(self):
        n = self.params.n
        if n < 2:
            return 0.0
        k = np.arange(1, n)
        return float(np.sum((n - k) * np.log(self.beta[1:n])))

    @property
    def alpha_prod(self):
        return math.exp(self.log_alpha_prod)

    @property
    def beta_weighted_prod(self):
        return math.exp(self.log_beta_weighted)

    @property
    def lower_bound_exp(self):
        return math.exp(-34.0 * self.params.B * self.params.theta**2)

    def bounds(self):
        return check_bounds(self)


def smallness_conditions(params):
    """True when ``C theta_k^2 <= 1/2`` and ``1 - 18 eps_k theta_k^2 >= 1/2`` for all k < n."""
    if params.n == 0:
        return True
    eps, th = params.eps()[:-1], params.thetas()[:-1]
    return bool(np.all(ALPHA_C * th**3 <= 0.5 * th) and np.all(1.0 - 18.0 * eps * th**2 >= 0.5))


def eps_gap_exact(params):
    """Check ``eps_k - eps_{k-1} > eps_{k-1}^2`` for ``k = 1..n-1`` in exact rational arithmetic."""
    d = 2 / Fraction(params.delta)
    n = params.n
    prev = 1 / (d + n)
    for k in range(1, n):
        cur = 1 / (d + n - k)
        if not cur - prev > prev * prev:
            return False
        prev = cur
    return True


def _phi_increments(params):
    eps, th = params.eps(), params.thetas()
    # the relative angle rho_k - phi_k at step k equals theta_k by construction
    alpha, turn = alpha_step(np.zeros(params.n), th[: params.n], eps[: params.n])
    return alpha, turn


def phi_final(params):
    """``phi_n`` alone, without the regime check or the beta recursion."""
    if params.n == 0:
        return 0.0
    _, turn = _phi_increments(params)
    return math.fsum(turn)


def run_recursion(params):
    """Fill all per-step quantities.

    Raises
    ------
    ThetaTooLarge
        In the ``strict`` regime when the smallness conditions fail, and in
        either regime when a one-step estimate would leave its hypotheses.
    """
    small = smallness_conditions(params)
    if params.regime == "strict" and not small:
        raise ThetaTooLarge(
            f"theta = {params.theta:.6g} violates C theta_k^2 <= 1/2 or 1 - 18 eps_k theta_k^2 >= 1/2"
        )
    n = params.n
    eps, th = params.eps(), params.thetas()
    if n and th[:n].max() > math.pi / 3:
        raise ThetaTooLarge("theta_k exceeds pi/3")
    if n == 0:
        return RotationState(params, eps, th, np.zeros(1), th[:1].copy(), np.zeros(0), np.zeros(0), small)
    alpha, turn = _phi_increments(params)
    phi = np.concatenate([[0.0], np.cumsum(turn)])
    rho = phi + th
    beta = np.ones(n)
    if n > 1:
        jump = rho[1:n] - rho[: n - 1]
        if np.any(jump < 0) or np.any(jump > math.pi / 3):
            raise ThetaTooLarge("consecutive rho_k leave [0, pi/3]")
        beta[1:] = beta_min(jump, eps[: n - 1], eps[1:n])
    return RotationState(params, eps, th, phi, rho, alpha, beta, small)


def check_bounds(state):
    """Per-step and summed estimates, each as a boolean.

    * ``alpha``: ``alpha_{k+1} >= 1 - eps_k theta_k^2`` and
      ``|phi_{k+1} - phi_k - eps_k theta_k| <= 10 eps_k theta_k^3``.
    * ``beta``: ``1 - 2 (rho_k - rho_{k-1})^2 <= beta_k <= 1`` and
      ``beta_k >= 1 - 18 eps_{k-1}^2 theta_{k-1}^2``.
    * ``rho``: ``0 <= rho_{k+1} - rho_k <= 3 eps_k theta_k`` and
      ``0 <= theta_{k+1} - theta_k <= (3/2) eps_k theta_k``.
    * ``sums``: ``sum (1 - alpha_k) <= B theta^2`` and
      ``sum (1 - beta_k)(n - k) <= 18 B theta^2``.
    * ``eps_gap``: ``eps_k - eps_{k-1} > eps_{k-1}^2``, exactly.
    """
    p = state.params
    n = p.n
    eps, th, phi, rho = state.eps[:n], state.theta[:n], state.phi, state.rho
    bt = p.B * p.theta**2
    out = {}
    if n == 0:
        return {"alpha": True, "beta": True, "rho": True, "sums": True, "eps_gap": True}
    turn = np.diff(phi)
    out["alpha"] = bool(
        np.all(state.alpha >= 1.0 - eps * th**2 - BOUND_TOL)
        and np.all(np.abs(turn - eps * th) <= ALPHA_C * eps * th**3 + BOUND_TOL)
    )
    if n > 1:
        jump = rho[1:n] - rho[: n - 1]
        b = state.beta[1:]
        out["beta"] = bool(
            np.all(b <= 1.0 + BOUND_TOL)
            and np.all(b >= 1.0 - 2.0 * jump**2 - BOUND_TOL)
            and np.all(b >= 1.0 - 18.0 * eps[: n - 1] ** 2 * th[: n - 1] ** 2 - BOUND_TOL)
        )
    else:
        out["beta"] = True
    rho_jump = np.diff(rho)
    th_jump = np.diff(state.theta)
    out["rho"] = bool(
        np.all(rho_jump >= -BOUND_TOL)
        and np.all(rho_jump <= 3.0 * eps * th + BOUND_TOL)
        and np.all(th_jump >= -BOUND_TOL)
        and np.all(th_jump <= 1.5 * eps * th + BOUND_TOL)
    )
    k = np.arange(1, n)
    out["sums"] = bool(
        np.sum(1.0 - state.alpha) <= bt + SUM_TOL
        and np.sum((1.0 - state.beta[1:]) * (n - k)) <= 18.0 * bt + SUM_TOL
    )
    out["eps_gap"] = eps_gap_exact(p)
    return out


def max_admissible_theta(delta, n, regime="strict"):
    """Largest ``theta`` allowed by the regime (``theta_k`` is largest at ``k = n - 1``)."""
    d = 2.0 / delta
    top = math.log(d + 1.0)
    if regime == "strict":
        return top * math.sqrt(0.5 / ALPHA_C)
    return top * (math.pi / 3)


def solve_theta(delta, n, target, regime="strict"):
    """Bisection for ``theta`` with ``|phi_n(theta) - target| <= 1e-10``.

    Raises
    ------
    Unreachable
        If even the largest admissible ``theta`` does not reach ``target``.
    """
    if not 0.0 < target <= math.pi / 2:
        raise DomainError("target must lie in (0, pi/2]")
    if n < 1:
        raise Unreachable("n = 0 never rotates")
    hi = max_admissible_theta(delta, n, regime)
    phi_hi = phi_final(RotationParams(delta, n, hi, regime))
    if phi_hi < target:
        raise Unreachable(
            f"phi_n reaches only {phi_hi:.6g} < {target:.6g} at the largest admissible theta {hi:.6g}"
        )
    lo, phi_lo = 0.0, 0.0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        phi_mid = phi_final(RotationParams(delta, n, mid, regime))
        if not phi_lo <= phi_mid <= phi_hi:
            raise ConstructionError("phi_n is not monotone in theta on the bracket")
        if abs(phi_mid - target) <= PHI_TOL:
            return mid
        if phi_mid < target:
            lo, phi_lo = mid, phi_mid
        else:
            hi, phi_hi = mid, phi_mid
    raise ConstructionError("bisection did not reach the angle tolerance")


def chain_terms(state, lambda_scale=1.0):
    """``T_0, ..., T_{n-1}`` as an ``(n, 2, 2)`` array, the last one scaled."""
    n = state.params.n
    rho, eps = state.rho[:n], state.eps[:n]
    c, s = np.cos(rho), np.sin(rho)
    scale = np.cumprod(state.beta)
    terms = np.empty((n, 2, 2))
    # P_eta + (1 - eps) P_eta^perp = I - eps P_eta^perp, P_eta^perp = [[s^2, -cs], [-cs, c^2]]
    terms[:, 0, 0] = 1.0 - eps * s * s
    terms[:, 1, 1] = 1.0 - eps * c * c
    terms[:, 0, 1] = terms[:, 1, 0] = eps * c * s
    terms *= scale[:, None, None]
    if n:
        terms[-1] *= lambda_scale
    return terms


def build_chain(state, lambda_scale=1.0, tol=1e-9):
    """The decreasing chain ``T_0 >= ... >= T_{n-1}``, verified.

    Raises
    ------
    ConstructionError
        If the chain fails verification (theta outside the validity regime).
    """
    if not 0.0 < lambda_scale <= 1.0:
        raise DomainError("lambda_scale must lie in (0, 1]")
    if state.params.n < 1:
        raise DomainError("n must be at least 1 to build a chain")
    p = state.params
    meta = {
        "generator": "rotation2d",
        "seed": None,
        "params": {"delta": p.delta, "n": p.n, "theta": p.theta, "lambda": lambda_scale, "regime": p.regime},
        "indexing": "terms are T_0..T_{n-1}; chain position j holds T_{j-1}",
    }
    chain = ContractionChain.from_terms(chain_terms(state, lambda_scale), meta, verify=False, tol=tol)
    report = verify_chain(chain, tol)
    if not report.accepted:
        raise ConstructionError(f"rotation chain is not decreasing (witness {report.witness:.3e})")
    return chain


def evaluate_product(chain):
    """``T_{n-1} ... T_0 e_1``, accumulated with scalar 2x2 arithmetic."""
    x, y = 1.0, 0.0
    for t in chain.terms:
        x, y = t[0, 0] * x + t[0, 1] * y, t[1, 0] * x + t[1, 1] * y
    return np.array([x, y])


def predicted_product(state, lambda_scale=1.0):
    """``r (cos phi_n, sin phi_n)`` with ``r = lambda prod alpha prod beta^(n-k)``."""
    r = lambda_scale * math.exp(state.log_alpha_prod + state.log_beta_weighted)
    return r * np.array([math.cos(state.phi_n), math.sin(state.phi_n)])


def lambda_for_target(state, delta_prime):
    """Scale putting the final length at ``1 - delta_prime``; needs ``r >= 1 - delta_prime``."""
    r = math.exp(state.log_alpha_prod + state.log_beta_weighted)
    if r < 1.0 - delta_prime:
        raise Unreachable(f"product length {r:.6g} is below 1 - delta' = {1 - delta_prime:.6g}")
    return (1.0 - delta_prime) / r


def analyze(delta, target=math.pi / 2):
    """Parameters the estimates would require for a full ``target`` rotation at length ``>= 1 - delta``.

    ``theta`` must satisfy ``exp(-34 B theta^2) >= 1 - delta`` and the strict
    smallness bound; ``n`` then follows from ``phi_n ~ theta log(log(D+n) / log D)``,
    i.e. ``n ~ D**exp(target / theta) - D``. The result is reported through
    ``log10(n)`` because ``n`` is doubly exponential in ``1 / theta``.
    """
    if not 0.0 < delta < 0.25:
        raise DomainError("delta must lie in (0, 1/4)")
    d = 2.0 / delta
    b = 1.0 / math.log(d)
    theta_length = math.sqrt(-math.log(1.0 - delta) / (34.0 * b))
    theta_small = max_admissible_theta(delta, 1, "strict")
    theta = min(theta_length, theta_small)
    # log(D + n) = log D * exp(target / theta)
    log_d_plus_n = math.log(d) * math.exp(target / theta)
    log10_n = log_d_plus_n / math.log(10.0)
    return {
        "delta": delta,
        "D": d,
        "B": b,
        "target": target,
        "theta": theta,
        "theta_length_bound": theta_length,
        "theta_smallness_bound": theta_small,
        "log10_n": log10_n,
        "lower_bound_exp": math.exp(-34.0 * b * theta**2),
        "note": "n from the leading-order estimate phi_n ~ theta*log(log(D+n)/log D); not built",
    }


def report(state, chain=None, lambda_scale=1.0):
    """Report dictionary (JSON-ready) for a run."""
    bounds = check_bounds(state)
    out = {
        "phi_n": state.phi_n,
        "theta": state.params.theta,
        "delta": state.params.delta,
        "n": state.params.n,
        "regime": state.params.regime,
        "smallness_ok": state.smallness_ok,
        "B": state.params.B,
        "alpha_prod": state.alpha_prod,
        "beta_weighted_prod": state.beta_weighted_prod,
        "lower_bound_exp": state.lower_bound_exp,
        "lambda": lambda_scale,
        "predicted_vector": predicted_product(state, lambda_scale).tolist(),
        "bounds_ok": {
            "alpha": bounds["alpha"],
            "beta": bounds["beta"],
            "sums": bounds["sums"],
            "rho": bounds["rho"],
            "eps_gap": bounds["eps_gap"],
        },
        "indexing": "terms are T_0..T_{n-1}; 1-based chain position j holds T_{j-1}",
    }
    if chain is not None:
        vec = evaluate_product(chain)
        pred = predicted_product(state, lambda_scale)
        out["product_vector"] = vec.tolist()
        out["product_rel_error"] = float(np.linalg.norm(vec - pred) / np.linalg.norm(pred))
    return out
