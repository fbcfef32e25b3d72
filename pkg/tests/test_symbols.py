"""Unit tests for the truncated Weyl-symbol algebra."""

import math

import numpy as np
import pytest
import sympy as sp

from qbnf.symbols import (
    FormalSymbol,
    IterationCapError,
    ModelDegeneracyError,
    PhaseSpec,
    SpecMismatchError,
    TauSeries,
    homological_solve,
    lie_transform,
    moyal_commutator,
    moyal_star,
    poisson_bracket,
    resonant_project,
    star_conjugate,
    substitute_pair,
)

from conftest import random_symbol, symbols_close

SPEC = PhaseSpec.cylinder(8, 8)


def mono(coef, **kw):
    return FormalSymbol.monomial(SPEC, coef, **kw)


# --------------------------------------------------------------------------
# sympy oracle: build the symbol as an expression and differentiate directly
# --------------------------------------------------------------------------

_T, _TAU, _X, _XI = sp.symbols("t tau x xi")


def to_sympy(sym):
    expr = sp.Integer(0)
    h = sp.Symbol("h")
    for (m2, a, alpha, beta, j), c in sym.terms.items():
        expr += (
            sp.nsimplify(c, rational=False)
            * sp.exp(sp.I * sp.Rational(m2, 2) * _T)
            * _TAU**a * _X ** alpha[0] * _XI ** beta[0] * h**j
        )
    return expr


def sympy_bracket(ea, eb):
    return (
        sp.diff(ea, _XI) * sp.diff(eb, _X)
        - sp.diff(ea, _X) * sp.diff(eb, _XI)
        + sp.diff(ea, _TAU) * sp.diff(eb, _T)
        - sp.diff(ea, _T) * sp.diff(eb, _TAU)
    )


def sympy_equal(expr, sym, n_points=6):
    """Compare a sympy expression with a FormalSymbol at random points."""
    rng = np.random.default_rng(7)
    f = sp.lambdify((_T, _TAU, _X, _XI, sp.Symbol("h")), expr, "numpy")
    for _ in range(n_points):
        t, tau, x, xi, h = rng.uniform(0.2, 1.0, size=5)
        lhs = complex(f(t, tau, x, xi, h))
        rhs = sym.evaluate(t=t, tau=tau, pairs=((x, xi),), h=h)
        if abs(lhs - rhs) > 1e-9 * max(1.0, abs(lhs)):
            return False
    return True


# --------------------------------------------------------------------------
# Poisson bracket
# --------------------------------------------------------------------------

def test_bracket_canonical_pair():
    assert poisson_bracket(mono(1, beta=1), mono(1, alpha=1)).terms == {
        (0, 0, (0,), (0,), 0): 1 + 0j
    }


def test_bracket_scaling_field():
    # {x xi, x} = x: the hyperbolic scaling field x d_x - xi d_xi
    out = poisson_bracket(mono(1, alpha=1, beta=1), mono(1, alpha=1))
    assert out.terms == {(0, 0, (1,), (0,), 0): 1 + 0j}


def test_bracket_cylinder_example_vs_sympy():
    p = mono(1, a=1) + mono(1, alpha=1, beta=1)  # tau + x xi
    v = mono(1, m=1, alpha=2, beta=1)            # e^{it} x^2 xi
    out = poisson_bracket(p, v)
    expected = mono(1 + 1j, m=1, alpha=2, beta=1)
    assert symbols_close(out, expected)
    assert sympy_equal(sympy_bracket(to_sympy(p), to_sympy(v)), out)


def test_bracket_bilinear_antisymmetric(rng):
    a = random_symbol(SPEC, rng)
    b = random_symbol(SPEC, rng)
    assert symbols_close(poisson_bracket(a, b), -poisson_bracket(b, a))
    c = random_symbol(SPEC, rng)
    lhs = poisson_bracket(a + 2.5 * b, c)
    rhs = poisson_bracket(a, c) + 2.5 * poisson_bracket(b, c)
    assert symbols_close(lhs, rhs)


def test_bracket_random_vs_sympy(rng):
    for _ in range(10):
        a = random_symbol(SPEC, rng, n_terms=3, classical=True)
        b = random_symbol(SPEC, rng, n_terms=3, classical=True)
        out = poisson_bracket(a, b)
        assert sympy_equal(sympy_bracket(to_sympy(a), to_sympy(b)), out)


def test_bracket_jacobi(rng):
    spec = PhaseSpec.cylinder(14, 14)
    for _ in range(10):
        a = random_symbol(spec, rng, n_terms=3, classical=True)
        b = random_symbol(spec, rng, n_terms=3, classical=True)
        c = random_symbol(spec, rng, n_terms=3, classical=True)
        s = (
            poisson_bracket(a, poisson_bracket(b, c))
            + poisson_bracket(b, poisson_bracket(c, a))
            + poisson_bracket(c, poisson_bracket(a, b))
        )
        scale = max(a.max_abs() * b.max_abs() * c.max_abs(), 1.0)
        assert s.max_abs() <= 1e-12 * scale


def test_bracket_leibniz(rng):
    spec = PhaseSpec.cylinder(16, 16)
    for _ in range(10):
        a = random_symbol(spec, rng, n_terms=3, classical=True)
        b = random_symbol(spec, rng, n_terms=2, classical=True)
        c = random_symbol(spec, rng, n_terms=2, classical=True)
        lhs = poisson_bracket(a, b * c)
        rhs = poisson_bracket(a, b) * c + b * poisson_bracket(a, c)
        assert symbols_close(lhs, rhs, 1e-11)


def test_bracket_spec_mismatch():
    other = PhaseSpec.cylinder(6, 6)
    with pytest.raises(SpecMismatchError):
        poisson_bracket(mono(1, alpha=1), FormalSymbol.monomial(other, 1, alpha=1))


# --------------------------------------------------------------------------
# Moyal star product
# --------------------------------------------------------------------------

def test_star_canonical():
    out = moyal_star(mono(1, alpha=1), mono(1, beta=1))
    assert out.terms == {(0, 0, (1,), (1,), 0): 1 + 0j, (0, 0, (0,), (0,), 1): 0.5j}


def test_star_commutation():
    x, xi = mono(1, alpha=1), mono(1, beta=1)
    comm = moyal_star(x, xi) - moyal_star(xi, x)
    assert comm.terms == {(0, 0, (0,), (0,), 1): 1j}
    assert symbols_close(moyal_commutator(x, xi), comm)


def test_star_midpoint_shift():
    # tau * e^{imt} = (tau + m h / 2) e^{imt}
    for m in (1, -2, 3):
        out = moyal_star(mono(1, a=1), mono(1, m=m))
        expected = mono(1, m=m, a=1) + mono(0.5 * m, m=m, j=1)
        assert symbols_close(out, expected)


def test_star_associative(rng):
    spec = PhaseSpec.cylinder(18, 18)
    for _ in range(8):
        a = random_symbol(spec, rng, n_terms=3)
        b = random_symbol(spec, rng, n_terms=3)
        c = random_symbol(spec, rng, n_terms=3)
        lhs = moyal_star(moyal_star(a, b), c)
        rhs = moyal_star(a, moyal_star(b, c))
        assert symbols_close(lhs, rhs, 1e-11)


def test_star_leading_terms(rng):
    # a*b = ab + (h/2i){a,b} + higher h
    a = random_symbol(SPEC, rng, n_terms=3, classical=True)
    b = random_symbol(SPEC, rng, n_terms=3, classical=True)
    star = moyal_star(a, b)
    prod = a * b
    br = poisson_bracket(a, b)
    diff = star - prod
    lead = {k: c for k, c in diff.terms.items() if k[4] == 1}
    expect = {
        (m2, t, al, be, 1): -0.5j * c for (m2, t, al, be, j), c in br.terms.items()
        if sum(al) + sum(be) + 2 <= SPEC.grade_max
    }
    assert symbols_close(
        FormalSymbol(SPEC, lead), FormalSymbol(SPEC, expect), 1e-11
    )


def test_commutator_bracket_consistency(rng):
    # (a*b - b*a) - (h/i){a,b} consists of h^{>=3} corrections only, at
    # joint grade no lower than the h-shifted bracket (h carries grade 2,
    # so the h-order gain does not show up as a joint-grade gain when the
    # extra derivations all hit transverse variables)
    spec = PhaseSpec.cylinder(14, 14)
    for _ in range(8):
        a = random_symbol(spec, rng, n_terms=3, classical=True)
        b = random_symbol(spec, rng, n_terms=3, classical=True)
        comm = moyal_commutator(a, b)
        br = poisson_bracket(a, b)
        shifted = FormalSymbol(
            spec,
            {(m2, t, al, be, j + 1): -1j * c for (m2, t, al, be, j), c in br.terms.items()},
        )
        diff = comm - shifted
        if not diff:
            continue
        hmin = min(k[4] for k in diff.terms)
        assert hmin >= 3
        if br:
            br_grade = min(spec.grade(k) for k in br.terms) + 2
            assert min(spec.grade(k) for k in diff.terms) >= br_grade


# --------------------------------------------------------------------------
# resonant projection
# --------------------------------------------------------------------------

def test_resonant_project_examples():
    v1 = mono(1, m=1, alpha=1, beta=1)
    res, non = resonant_project(v1)
    assert not res and symbols_close(non, v1)

    v2 = mono(2, alpha=1, beta=1) + mono(0.5, m=1, alpha=1, beta=1) + mono(
        0.5, m=-1, alpha=1, beta=1
    )  # (2 + cos t) x xi
    res, non = resonant_project(v2)
    assert symbols_close(res, mono(2, alpha=1, beta=1))
    assert symbols_close(res + non, v2)

    v3 = mono(1, alpha=2, beta=1)
    res, non = resonant_project(v3)
    assert not res and symbols_close(non, v3)


def test_resonant_project_idempotent(rng):
    v = random_symbol(SPEC, rng, n_terms=8)
    res, non = resonant_project(v)
    assert symbols_close(res + non, v)
    res2, non2 = resonant_project(res)
    assert symbols_close(res2, res) and not non2


# --------------------------------------------------------------------------
# homological solve
# --------------------------------------------------------------------------

def apply_transport(u, f, mu):
    """Independent transport operator f' d_t u + mu (x d_x - xi d_xi) u."""
    spec = u.spec
    K = spec.tau_max
    fp = f.resized(K).derivative()
    mu = mu.resized(K)
    out = FormalSymbol.zero(spec)
    for (m2, a, alpha, beta, j), c in u.terms.items():
        base = FormalSymbol(spec, {(m2, a, alpha, beta, j): c})
        factor = (0.5j * m2) * fp + (alpha[0] - beta[0]) * mu
        out = out + FormalSymbol.from_tau_series(spec, factor) * base
    return out


F = TauSeries([0.0, 1.0], 8)
MU = TauSeries([1.0], 8)


def test_homological_example_cubic():
    v = mono(1, m=1, alpha=3)
    u, res = homological_solve(v, F, MU)
    assert not res
    assert symbols_close(u, mono(1.0 / (1j + 3), m=1, alpha=3))
    assert symbols_close(apply_transport(u, F, MU), v)


def test_homological_resonant_passthrough():
    v = mono(1, alpha=1, beta=1)
    u, res = homological_solve(v, F, MU)
    assert not u and symbols_close(res, v)


def test_homological_halfmode():
    spec = PhaseSpec.cylinder(8, 8, orientable=False)
    v = FormalSymbol.monomial(spec, 1.0, m=0.5, alpha=1)
    u, res = homological_solve(v, F, MU)
    assert not res
    expected = FormalSymbol.monomial(spec, 1.0 / (0.5j + 1), m=0.5, alpha=1)
    assert symbols_close(u, expected)
    assert symbols_close(apply_transport(u, F, MU), v)


def test_homological_exactness_random(rng):
    f = TauSeries([0.0, 1.0, -0.2, 0.05], 8)
    mu = TauSeries([1.3, 0.4], 8)
    for _ in range(10):
        v = random_symbol(SPEC, rng, n_terms=8, max_tau=4)
        u, res = homological_solve(v, f, mu)
        assert symbols_close(res, resonant_project(v)[0])
        assert symbols_close(apply_transport(u, f, mu) + res, v, 1e-11)


def test_homological_degenerate_rate():
    bad = TauSeries([0.0], 8)  # mu(0) = 0 is out of contract
    with pytest.raises(ModelDegeneracyError):
        homological_solve(mono(1, m=1, alpha=1), F, bad)


# --------------------------------------------------------------------------
# Lie transform
# --------------------------------------------------------------------------

def test_lie_constant_generator_noop():
    # grade-2 generator with no dynamic content: G = c x xi acts on x xi by zero
    G = mono(0.4, alpha=1, beta=1)
    p = mono(1, alpha=1, beta=1) + mono(2, a=1)
    assert symbols_close(lie_transform(p, G), p)


def test_lie_scaling_exponential():
    lam = 0.37
    G = mono(lam, alpha=1, beta=1)
    out = lie_transform(mono(1, alpha=1), G)
    assert symbols_close(out, mono(math.exp(lam), alpha=1))
    out2 = lie_transform(mono(1, beta=1), G)
    assert symbols_close(out2, mono(math.exp(-lam), beta=1))


def test_lie_grading():
    G = mono(0.3, m=1, alpha=3)
    p = mono(1, a=1) + mono(1, alpha=1, beta=1)
    diff = lie_transform(p, G) - p
    assert diff and min(SPEC.grade(k) for k in diff.terms) >= 3


def test_lie_rejects_low_grade():
    with pytest.raises(ValueError):
        lie_transform(mono(1, alpha=1), mono(1, m=1))  # grade-0 generator


def test_lie_cap_errors_on_wild_rotation():
    # strong rotation generator: the series converges only far beyond the cap
    G = mono(50.0, alpha=2) + mono(50.0, beta=2)
    with pytest.raises(IterationCapError):
        lie_transform(mono(1, alpha=1), G)


def test_lie_reality_preserved(rng):
    for _ in range(6):
        p = random_symbol(SPEC, rng, n_terms=5, classical=True, real=True)
        Gr = random_symbol(SPEC, rng, n_terms=3, classical=True, real=True)
        G = FormalSymbol(
            SPEC, {k: c for k, c in Gr.terms.items() if SPEC.grade(k) >= 3}
        )
        out = lie_transform(p, G)
        assert out.h_split()[0].is_real(1e-10)


# --------------------------------------------------------------------------
# star conjugation
# --------------------------------------------------------------------------

def test_conjugate_central_scalar():
    p = mono(1, a=1) + mono(1, alpha=1, beta=1)
    A = mono(3.7, j=1)
    assert symbols_close(star_conjugate(p, A), p)


def test_conjugate_leading_order():
    # A = h a(t, tau): the h^1 layer changes by {p, a}
    p = mono(1, a=1) + mono(1, alpha=1, beta=1)
    p1 = mono(0.3, m=1, j=1)
    A = mono(0.7, m=1, a=1, j=1)
    out = star_conjugate(p + p1, A)
    a_cl = mono(0.7, m=1, a=1)
    br = poisson_bracket(p, a_cl)
    expected_h1 = p1 + FormalSymbol(
        SPEC, {(m2, t, al, be, 1): c for (m2, t, al, be, j), c in br.terms.items()}
    )
    got_h1 = FormalSymbol(
        SPEC, {k: c for k, c in out.terms.items() if k[4] == 1}
    )
    assert symbols_close(got_h1, expected_h1)


def test_conjugate_preserves_h0(rng):
    p = random_symbol(SPEC, rng, n_terms=6)
    A = FormalSymbol(
        SPEC,
        {(m2, a, al, be, j): c
         for (m2, a, al, be, j), c in random_symbol(SPEC, rng, n_terms=4).terms.items()
         if j >= 1},
    )
    if not A:
        A = mono(0.2, m=1, j=1)
    out = star_conjugate(p, A)
    assert symbols_close(out.h_split()[0], p.h_split()[0], 1e-11)


def test_conjugate_rejects_classical_generator():
    with pytest.raises(ValueError):
        star_conjugate(mono(1, a=1), mono(1, m=1, alpha=3))


# --------------------------------------------------------------------------
# parity, pruning, substitution
# --------------------------------------------------------------------------

def test_nonorientable_parity_enforced():
    spec = PhaseSpec.cylinder(6, 6, orientable=False)
    with pytest.raises(ValueError):
        FormalSymbol.monomial(spec, 1.0, m=1, alpha=1)  # 2m=2 even, deg odd
    ok = FormalSymbol.monomial(spec, 1.0, m=0.5, alpha=1)
    assert ok


def test_nonorientable_parity_preserved_by_ops(rng):
    spec = PhaseSpec.cylinder(10, 10, orientable=False)
    for _ in range(8):
        a = random_symbol(spec, rng, n_terms=4)
        b = random_symbol(spec, rng, n_terms=4)
        for sym in (a * b, poisson_bracket(a, b), moyal_star(a, b)):
            for (m2, _, alpha, beta, _) in sym.terms:
                assert (m2 - (sum(alpha) - sum(beta))) % 2 == 0


def test_pruning_threshold(rng):
    big = mono(1.0, alpha=1)
    tiny = mono(1e-17, beta=1)
    s = big + tiny
    assert (0, 0, (0,), (1,), 0) not in s.terms


def test_substitute_pair_identity(rng):
    a = random_symbol(SPEC, rng, n_terms=5)
    assert symbols_close(substitute_pair(a, 0, (1.0, 0.0), (0.0, 1.0)), a)


def test_evaluate_matches_sympy(rng):
    a = random_symbol(SPEC, rng, n_terms=5)
    assert sympy_equal(to_sympy(a), a)


# --------------------------------------------------------------------------
# TauSeries basics
# --------------------------------------------------------------------------

def test_tau_series_inverse_roundtrip():
    g = TauSeries([2.0, -0.3, 0.7, 0.1], 6)
    one = g * g.inverse()
    assert abs(one.coeffs[0] - 1.0) < 1e-14
    assert np.max(np.abs(one.coeffs[1:])) < 1e-13


def test_tau_series_newton_solve():
    f = TauSeries([0.0, 1.0, 1.0], 6)  # tau + tau^2
    tau = f.solve(0.11)
    assert abs(tau - 0.1) < 1e-12
