"""Acceptance suite: one test per criterion, each at its stated tolerance.

Every test reports a PASS/FAIL line through the ``criterion`` fixture; the
lines are repeated in the terminal summary.
"""

import json
import math
import time

import numpy as np
import pytest

from contraction_lab.diagnostics import (
    dissipation_check,
    f_k_fn,
    norm_convergence_check,
    rate_bound,
    rate_guarantee_check,
)
from contraction_lab.experiment import SweepManifest, run_sweep
from contraction_lab.io import parse_xi
from contraction_lab.products import ProperMap, product_prefix, trace_convergence
from contraction_lab.rng import make_rng, random_orthogonal, random_unit_vector
from contraction_lab.rotation2d import (
    RotationParams,
    analyze,
    build_chain,
    check_bounds,
    evaluate_product,
    predicted_product,
    run_recursion,
    solve_theta,
)
from contraction_lab.seqgen import (
    factorization_residual,
    factorize_chain,
    gen_constant,
    gen_gap_chain,
    gen_geometric,
    gen_projection_chain,
    generate,
    verify_chain,
)
from contraction_lab.symmat import apply_spectral_fn, loewner_witness, operator_norm, psd_sqrt

CORPUS = ("constant", "projections", "commuting", "gap", "random", "proj-average")
DIMS = (2, 5, 20)
SEEDS = range(10)
CHAIN_LEN = 30


BUILD_SECONDS = {}


@pytest.fixture(scope="module")
def corpus():
    """Every corpus chain, keyed by (kind, dim, seed); construction time is kept for criterion 1."""
    t0 = time.perf_counter()
    chains = {(k, d, s): generate(k, d, CHAIN_LEN, s) for k in CORPUS for d in DIMS for s in SEEDS}
    BUILD_SECONDS["corpus"] = time.perf_counter() - t0
    return chains


def test_criterion_01_convergence_suite(corpus, criterion):
    t0 = time.perf_counter()
    failures, worst = [], 0
    for (kind, dim, seed), chain in corpus.items():
        xi = parse_xi(f"random:{seed}", dim)
        horizon = 10 * rate_bound(0, 4, 1e-4, float(xi @ xi))
        tr = trace_convergence(
            chain, ProperMap.identity(), xi, horizon, extend=True, adjoint=False, functional=False, stop_below=1e-4
        )
        hit = tr.steps_to(1e-4)
        if hit is None or hit > horizon:
            failures.append((kind, dim, seed))
        else:
            worst = max(worst, hit)
    elapsed = time.perf_counter() - t0 + BUILD_SECONDS["corpus"]
    ok = not failures and elapsed < 120
    criterion(1, ok, f"{len(corpus)} runs, {len(failures)} failures, slowest {worst} steps, {elapsed:.1f}s including chain construction")
    assert ok, failures


def _rate_tuples(count):
    """Seeded (chain, xi, m, k, eps) with the eps/4 premise holding by choice of eps."""
    rng = make_rng(2024)
    kinds = ("random", "gap", "commuting", "proj-average", "constant")
    out = []
    i = 0
    while len(out) < count:
        dim = DIMS[i % 3]
        kind = kinds[i % len(kinds)]
        chain = generate(kind, dim, 12 if dim == 20 else 25, seed=1000 + i)
        xi = random_unit_vector(dim, rng)
        m = int(rng.integers(1, 8))
        k = int(rng.integers(1, 7))
        v = xi.copy()
        for j in range(1, m):
            v = chain.term(j, extend=True) @ v
        premise = float(v @ chain.f_matrix(m, k, extend=True) @ v)
        eps = max(4.0 * premise * float(rng.uniform(1.0, 2.0)), 1e-6)
        out.append((chain, xi, m, k, eps))
        i += 1
    return out


def test_criterion_02_rate_bound(criterion):
    tuples = _rate_tuples(100)
    bad, tight = [], 0.0
    for chain, xi, m, k, eps in tuples:
        v = rate_guarantee_check(chain, xi, m, k, eps, extend=True)
        assert v.premise_holds
        if not v.conclusion_holds:
            bad.append((m, k, eps, v.conclusion_value))
        tight = max(tight, v.conclusion_value / eps)
    ok = not bad
    criterion(2, ok, f"100 tuples with premise, {len(bad)} violations, max ||xi_N||^2/eps = {tight:.3g}")
    assert ok, bad


def _adversarial_contraction(dim, rng, k):
    """Random positive contraction; some eigenvalues placed on 1, 0 or exactly at gamma_k."""
    q = random_orthogonal(dim, rng)
    vals = rng.uniform(0, 1, dim)
    mode = rng.integers(0, 4)
    if mode == 1:
        vals[0] = 1.0
    elif mode == 2:
        vals[rng.integers(0, dim)] = 1.0 - 2.0**-k
    elif mode == 3:
        vals[0] = 0.0
    return (q * vals) @ q.T


def test_criterion_03_dissipation(criterion):
    rng = make_rng(3)
    bad, margin = 0, math.inf
    for _ in range(200):
        dim = int(rng.choice([1, 2, 3, 5, 8, 20]))
        k = int(rng.integers(1, 7))
        t = _adversarial_contraction(dim, rng, k)
        xi = rng.standard_normal(dim) * rng.uniform(0.1, 3.0)
        r = dissipation_check(t, xi, k)
        bad += not r.ok
        margin = min(margin, r.rhs - r.lhs)
    ok = bad == 0
    criterion(3, ok, f"200 triples, {bad} failures, smallest rhs - lhs = {margin:.3e}")
    assert ok


def _ordered_pair(dim, rng):
    """(A, B) with 0 <= A <= B <= I; A = B^{1/2} C B^{1/2} with 0 <= C <= I.

    Half of the pairs take C within 10^-u of I (u up to 8) so that A nearly equals B.
    """
    q = random_orthogonal(dim, rng)
    vals = rng.uniform(0, 1, dim)
    if rng.uniform() < 0.3:
        vals[: max(1, dim // 3)] = 1.0
    b = (q * vals) @ q.T
    q2 = random_orthogonal(dim, rng)
    if rng.uniform() < 0.5:
        c_vals = 1.0 - 10.0 ** -rng.uniform(1, 8) * rng.uniform(0, 1, dim)
    else:
        c_vals = rng.uniform(0, 1, dim)
    c = (q2 * c_vals) @ q2.T
    r = psd_sqrt(b)
    a = r @ c @ r
    return 0.5 * (a + a.T), b


def test_criterion_04_operator_monotone(criterion):
    rng = make_rng(4)
    worst, bad = math.inf, 0
    for k in range(1, 7):
        f = f_k_fn(k)
        for _ in range(100):
            dim = int(rng.choice([2, 3, 5, 8]))
            a, b = _ordered_pair(dim, rng)
            w = loewner_witness(apply_spectral_fn(a, f), apply_spectral_fn(b, f))
            worst = min(worst, w)
            bad += w < -1e-8
    ok = bad == 0
    criterion(4, ok, f"600 pairs (k = 1..6), {bad} failures, worst witness {worst:.3e}")
    assert ok


def test_criterion_05_rotation(criterion):
    t0 = time.perf_counter()
    delta, n = 0.2, 10_000
    theta = solve_theta(delta, n, 0.3)
    state = run_recursion(RotationParams(delta, n, theta))
    chain = build_chain(state)
    accepted = verify_chain(chain, 1e-9).accepted
    bounds = check_bounds(state)
    vec = evaluate_product(chain)
    pred = predicted_product(state)
    rel = float(np.linalg.norm(vec - pred) / np.linalg.norm(pred))
    r = float(np.linalg.norm(pred))
    small = accepted and all(bounds.values()) and rel <= 1e-8 and r >= state.lower_bound_exp

    plan = analyze(delta)
    plan_ok = plan["log10_n"] > 6 and plan["lower_bound_exp"] >= 1 - delta - 1e-12

    # quarter turn at n = 1e5: only reachable once theta_k may exceed the strict smallness bound
    big_n = 100_000
    theta_q = solve_theta(delta, big_n, math.pi / 2, regime="relaxed")
    state_q = run_recursion(RotationParams(delta, big_n, theta_q, regime="relaxed"))
    bounds_q = check_bounds(state_q)
    vec_q = evaluate_product(build_chain(state_q))
    direction = float(vec_q[0])
    quarter = all(bounds_q.values()) and direction <= 1e-6
    elapsed = time.perf_counter() - t0
    ok = small and plan_ok and quarter and elapsed < 60
    criterion(
        5,
        ok,
        f"theta={theta:.4f} r={r:.4f}>=exp(-34B theta^2)={state.lower_bound_exp:.4f} rel.err={rel:.1e}; "
        f"analyze log10 n={plan['log10_n']:.3g}; pi/2 at n=1e5 <product,e1>={direction:.1e}; {elapsed:.1f}s",
    )
    assert ok, (bounds, rel, bounds_q, direction)


HORIZON_6 = 2000
SIGMAS_6 = (ProperMap.identity(), ProperMap.block_repeat(3), ProperMap.interleave(2))


def test_criterion_06_generalized_products(corpus, criterion):
    bad_dist, bad_adj, runs = [], [], 0
    for (kind, dim, seed), chain in corpus.items():
        xi = parse_xi(f"random:{seed}", dim)
        for sigma in SIGMAS_6:
            tr = trace_convergence(chain, sigma, xi, HORIZON_6, extend=True, adjoint=True, functional=False)
            runs += 1
            if kind == "gap" and tr.dist_to_P[-1] > 1e-4:
                bad_dist.append((kind, dim, seed, sigma.describe()))
            if tr.adjoint_dist[-1] > 1e-4:
                bad_adj.append((kind, dim, seed, sigma.describe()))
    ok = not bad_dist and not bad_adj
    criterion(6, ok, f"{runs} traces to step {HORIZON_6}; gap dist failures {len(bad_dist)}, adjoint failures {len(bad_adj)}")
    assert ok, (bad_dist, bad_adj)


def test_criterion_07_norm_convergence(criterion):
    bad, slack = [], math.inf
    sigmas = (ProperMap.identity(), ProperMap.block_repeat(2), ProperMap.interleave(3))
    for seed in range(50):
        dim = DIMS[seed % 3]
        delta = 0.15 + 0.05 * (seed % 5)
        chain = gen_geometric(dim, 25, seed, delta=delta, rate=0.6)
        sigma = sigmas[seed % 3]
        n = 40 + seed
        k = 5 + seed % 20
        r = norm_convergence_check(chain, sigma, k, n=n, extend=True)
        slack = min(slack, r.bound - r.value)
        if not r.ok:
            bad.append((seed, r.value, r.bound))
    ok = not bad
    criterion(7, ok, f"50 runs, {len(bad)} violations, smallest bound - value = {slack:.3e}")
    assert ok, bad


def test_criterion_08_factorization(criterion):
    kinds = ("random", "gap", "projections", "commuting", "proj-average")
    worst_res, worst_norm, bad = 0.0, 0.0, 0
    for seed in range(50):
        dim = DIMS[seed % 3]
        chain = generate(kinds[seed % len(kinds)], dim, 20, seed=500 + seed)
        xs = factorize_chain(chain)
        res = factorization_residual(chain, xs)
        norm = max(operator_norm(x) for x in xs)
        worst_res, worst_norm = max(worst_res, res), max(worst_norm, norm)
        bad += res > 1e-6 or norm > 1 + 1e-8
    ok = bad == 0
    criterion(8, ok, f"50 chains, {bad} failures, max residual {worst_res:.2e}, max ||x_j|| {worst_norm:.12f}")
    assert ok


def test_criterion_09_easy_cases(criterion):
    half = gen_constant(np.diag([1.0, 0.5]), 60)
    err_const = 0.0
    for xi in ([0.6, 0.8], [1.0, 1.0], [0.0, -2.5], [3.0, 1e-3]):
        xi = np.array(xi)
        tr = trace_convergence(half, ProperMap.identity(), xi, 60, adjoint=False, functional=False)
        expected = 0.5 ** np.arange(61) * abs(xi[1])
        err_const = max(err_const, float(np.max(np.abs(tr.dist_to_P - expected))))

    err_proj = 0.0
    for seed in range(10):
        chain = gen_projection_chain(DIMS[seed % 3], 12, seed)
        for n in range(1, 13):
            err_proj = max(err_proj, float(np.abs(product_prefix(chain, ProperMap.identity(), n) - chain.terms[n - 1]).max()))

    excess = -math.inf
    for seed in range(10):
        dim = DIMS[seed % 3]
        n0 = 4
        pinned = math.ceil(dim / 2)
        # every pinned coordinate drops at n0, so ||T_n0|| <= 1 - delta < 1
        chain = gen_gap_chain(dim, 20, 0.3, seed, drop_at=[n0] * pinned)
        t_norm = operator_norm(chain.terms[n0 - 1])
        assert t_norm < 1
        for k in range(1, 15):
            s = product_prefix(chain, ProperMap.identity(), n0 + k - 1)
            excess = max(excess, operator_norm(s) - t_norm**k)
    ok = err_const <= 1e-12 and err_proj <= 1e-9 and excess <= 1e-10
    criterion(9, ok, f"constant err {err_const:.1e}, projection err {err_proj:.1e}, norm-power excess {excess:.1e}")
    assert ok


def _determinism_manifest(out_dir):
    return SweepManifest.from_dict(
        {
            "grid": {
                "kinds": ["random", "gap", "proj-average", "commuting"],
                "sigmas": ["identity", "blocks:3", "interleave:2"],
                "seeds": [0, 1, 2],
                "dims": [2, 5],
                "len": 15,
            },
            "workers": 4,
        },
        output_dir=str(out_dir),
    )


def test_criterion_10_determinism(tmp_path, criterion):
    a, b = tmp_path / "a", tmp_path / "b"
    a.mkdir()
    b.mkdir()
    sa, _ = run_sweep(_determinism_manifest(a))
    sb, _ = run_sweep(_determinism_manifest(b))
    csvs = sorted(p.name for p in a.glob("*.csv"))
    same = [(a / n).read_bytes() == (b / n).read_bytes() for n in csvs]
    summaries = (a / "summary.json").read_bytes() == (b / "summary.json").read_bytes()
    ok = len(csvs) == sa["count"] == 72 and all(same) and summaries and json.dumps(sa) == json.dumps(sb)
    criterion(10, ok, f"{len(csvs)} CSV traces byte-identical across two sweeps: {all(same)}; summary identical: {summaries}")
    assert ok
