import numpy as np
import pytest

from contraction_lab.errors import DomainError, OrderError, RangeError
from contraction_lab.seqgen import (
    GENERATOR_KINDS,
    ContractionChain,
    chain_from_diagonals,
    chain_from_factors,
    check_length,
    factorization_residual,
    factorize_chain,
    gen_commuting_diagonal,
    gen_constant,
    gen_gap_chain,
    gen_geometric,
    gen_proj_average,
    gen_projection_chain,
    gen_random_decreasing,
    generate,
    products_gram,
    verify_chain,
)

from conftest import rotation


def test_verify_constant_chain():
    t = np.diag([1.0, 0.5])
    rep = verify_chain(ContractionChain.from_terms([t, t, t], verify=False))
    assert rep.accepted
    assert np.allclose(rep.diff_min_eigs[1:], 0, atol=1e-15)


def test_verify_halving():
    rep = verify_chain(ContractionChain.from_terms([np.eye(2), 0.5 * np.eye(2)], verify=False))
    assert rep.accepted
    assert rep.diff_min_eigs[1] == pytest.approx(0.5)


def test_verify_rejects_increase():
    rep = verify_chain(ContractionChain.from_terms([0.5 * np.eye(2), 0.6 * np.eye(2)], verify=False))
    assert not rep.accepted
    assert rep.witness == pytest.approx(-0.1, abs=1e-14)
    with pytest.raises(OrderError):
        ContractionChain.from_terms([0.5 * np.eye(2), 0.6 * np.eye(2)])


def test_verify_rejects_non_contraction_and_negative():
    assert not verify_chain(ContractionChain.from_terms([1.1 * np.eye(2)], verify=False)).accepted
    assert not verify_chain(ContractionChain.from_terms([np.diag([0.5, -0.1])], verify=False)).accepted


def test_gen_constant_examples():
    c = gen_constant(np.diag([1.0, 0.5]), 3)
    assert len(c) == 3 and np.allclose(c.proj_P, np.diag([1, 0]))
    assert np.allclose(gen_constant(np.eye(2), 2).proj_P, np.eye(2))
    r = rotation(0.4)
    c = gen_constant(r @ np.diag([1, 0.3]) @ r.T, 2)
    assert np.allclose(c.proj_P, r @ np.diag([1, 0]) @ r.T, atol=1e-14)


def test_gen_constant_rejects_non_contraction():
    with pytest.raises(OrderError):
        gen_constant(np.diag([1.2, 0.5]), 2)


def test_projection_chain_forced_ranks():
    c = gen_projection_chain(3, 3, seed=0, ranks=[3, 2, 1])
    traces = [np.trace(t) for t in c.terms]
    assert np.allclose(traces, [3, 2, 1], atol=1e-12)


def test_projection_chain_single_term():
    c = gen_projection_chain(4, 1, seed=2)
    assert np.allclose(c.proj_P, c.terms[0], atol=1e-12)


def test_projection_chain_seed7_idempotent():
    c = gen_projection_chain(4, 12, seed=7)
    assert verify_chain(c).accepted
    for t in c.terms:
        assert np.abs(t @ t - t).max() <= 1e-9


def test_projection_chain_bad_ranks():
    with pytest.raises(DomainError):
        gen_projection_chain(3, 3, seed=0, ranks=[1, 2, 3])


def test_diagonal_chain_closed_form():
    n = np.arange(1, 9)
    diags = np.column_stack([np.ones(8), 2.0 ** -n])
    c = chain_from_diagonals(diags)
    assert np.allclose(c.terms[2], np.diag([1, 0.125]))
    assert np.allclose(c.proj_P, np.diag([1, 0]))


def test_diagonal_chain_constant_rows():
    c = chain_from_diagonals(np.tile([1.0, 0.3], (4, 1)))
    assert np.allclose(c.terms, c.terms[0])


def test_diagonal_chain_rejects_increase():
    with pytest.raises(OrderError):
        chain_from_diagonals([[0.5, 0.5], [0.6, 0.5]])


def test_commuting_pinned_trace():
    c = gen_commuting_diagonal(5, 20, seed=3, pinned=2)
    assert np.trace(c.proj_P) == pytest.approx(2.0, abs=1e-10)
    assert c.commutation_defect() <= 1e-12
    # all terms share an eigenbasis
    t0, t1 = c.terms[0], c.terms[5]
    assert np.abs(t0 @ t1 - t1 @ t0).max() <= 1e-12


def test_gap_chain_forced_drop():
    c = gen_gap_chain(2, 2, 0.5, seed=0, pinned=1, drop_at=[2])
    ev1 = np.linalg.eigvalsh(c.terms[0])
    ev2 = np.linalg.eigvalsh(c.terms[1])
    assert ev1[1] == pytest.approx(1.0, abs=1e-14) and ev1[0] <= 0.5
    assert ev2.max() <= 0.5


@pytest.mark.parametrize("seed", range(5))
def test_gap_chain_spectrum_avoids_gap(seed):
    delta = 0.3
    c = gen_gap_chain(6, 15, delta, seed)
    for t in c.terms:
        ev = np.linalg.eigvalsh(t)
        assert not np.any((ev > 1 - delta + 1e-12) & (ev < 1 - 1e-10))


def test_gap_chain_single_term():
    c = gen_gap_chain(3, 1, 0.2, seed=1)
    assert verify_chain(c).gap >= 0.2 - 1e-12


def test_factors_orthogonal_give_identity():
    q1, q2 = rotation(0.3), rotation(1.1)
    for t in products_gram([q1, q2]):
        assert np.allclose(t, np.eye(2), atol=1e-15)


def test_factors_closed_form():
    c = chain_from_factors([np.diag([1.0, 0.5]), np.eye(2)])
    assert np.allclose(c.terms[0], np.diag([1, 0.25]))
    assert np.allclose(c.terms[1], np.diag([1, 0.25]))


def test_random_decreasing_large():
    c = gen_random_decreasing(20, 200, seed=11)
    assert verify_chain(c, 1e-9).accepted


def test_random_decreasing_fixed_vector():
    c = gen_random_decreasing(4, 30, seed=2, fix_vector=True)
    assert np.trace(c.proj_P) == pytest.approx(1.0, abs=1e-9)


def test_proj_average_identity_projections():
    c = gen_proj_average(3, 4, seed=0, projections=[np.eye(3)] * 4)
    assert np.allclose(c.terms, np.eye(3))


def test_proj_average_single():
    c = gen_proj_average(2, 1, seed=0, projections=[np.diag([1.0, 0.0])])
    assert np.allclose(c.terms[0], np.diag([1, 0.25]))


def test_proj_average_factor_spectrum():
    c = gen_proj_average(10, 50, seed=5)
    for x in c._cache["factors"]:
        assert np.linalg.eigvalsh(x).min() == pytest.approx(0.5, abs=1e-12)


def test_factorize_constant_chain():
    t = np.diag([0.64, 0.0, 1.0])
    xs = factorize_chain(gen_constant(t, 3))
    assert np.allclose(xs[0], np.diag([0.8, 0, 1]), atol=1e-14)
    for x in xs[1:]:
        assert np.allclose(x, np.diag([1, 0, 1]), atol=1e-12)


def test_factorize_scaled_identity():
    xs = factorize_chain(ContractionChain.from_terms([np.eye(2), 0.25 * np.eye(2)]))
    assert np.allclose(xs[0], np.eye(2))
    assert np.allclose(xs[1], 0.5 * np.eye(2))


def test_factorize_random_roundtrip():
    c = gen_random_decreasing(5, 10, seed=4)
    xs = factorize_chain(c)
    assert factorization_residual(c, xs) <= 1e-6


def test_geometric_decay_rate():
    c = gen_geometric(6, 12, seed=1, delta=0.3, rate=0.5)
    t = c.terms[-1]
    norms = [np.linalg.norm(c.terms[i] - t, 2) for i in range(len(c) - 1)]
    ratios = np.array(norms[1:]) / np.array(norms[:-1])
    # ||T_n - T|| = (rate^(n-1) - rate^(N-1)) ||M - T||
    n = np.arange(len(c) - 1)
    expected = (0.5**n - 0.5 ** (len(c) - 1)) / (1 - 0.5 ** (len(c) - 1))
    assert np.allclose(np.array(norms) / norms[0], expected, atol=1e-10)
    assert np.all(ratios <= 0.5 + 1e-12)


@pytest.mark.parametrize("kind", GENERATOR_KINDS)
def test_generate_dispatch_deterministic(kind):
    a = generate(kind, 4, 8, seed=9)
    b = generate(kind, 4, 8, seed=9)
    assert a.meta["generator"] == kind
    assert np.array_equal(a.terms, b.terms)
    assert verify_chain(a).accepted


def test_generate_unknown_kind():
    with pytest.raises(DomainError):
        generate("nope", 2, 2, 0)


def test_length_cap():
    with pytest.raises(DomainError):
        check_length(20, 2000)
    check_length(8, 100_000)


def test_chain_accessors():
    c = gen_constant(np.diag([1.0, 0.5]), 3)
    assert c.term(1) is not None
    with pytest.raises(RangeError):
        c.term(4)
    with pytest.raises(RangeError):
        c.term(0)
    assert np.allclose(c.term(10, extend=True), c.terms[-1])
    assert np.allclose(c.f_matrix(2, 2), np.diag([1, 1 - np.sqrt(0.5)]))
    with pytest.raises(ValueError):
        c.terms[0, 0, 0] = 3.0
