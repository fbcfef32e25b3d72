"""Degree-by-degree Birkhoff normal forms, classical and quantum.

Two pipelines share one elimination loop over the joint grade
d = |alpha| + |beta| + 2j:

* ``closed_orbit_bnf`` reduces a cylinder model f(tau) + mu(tau) x xi +
  perturbation around a hyperbolic closed orbit.  Non-resonant classical
  terms are removed by canonical transformations generated through the
  transport equation; non-resonant h-terms by unitary conjugation in the
  star algebra.  What survives depends only on (tau, x xi, h).

* ``equilibrium_bnf`` reduces a saddle model after the pi/4 complex
  scaling of the unstable axis.  A per-axis linear canonical change puts
  the quadratic part into nu_1 x1 xi1 + nu_2 x2 xi2 with nu = (lam1,
  i lam2); the non-real ratio nu_1/nu_2 kills every small denominator, so
  the loop never meets a resonance away from alpha == beta.

The resulting resonant Weyl symbol is finally rewritten as a function of
the harmonic actions (the form the quantization rules evaluate): powers
of an action acquire even-h corrections when passed from Weyl-symbol
multiplication to the functional calculus, computed here from star powers
of the action itself, independently of any matrix code.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import NamedTuple

import numpy as np

from .symbols import (
    FormalSymbol,
    ModelDegeneracyError,
    PhaseSpec,
    TauSeries,
    homological_solve,
    lie_transform,
    moyal_star,
    resonant_project,
    star_conjugate,
    substitute_pair,
)

__all__ = [
    "ModelValidationError",
    "CylinderModel",
    "SaddleModel",
    "NormalFormPoly",
    "GeneratorChain",
    "average_rate",
    "closed_orbit_bnf",
    "birkhoff_coordinates",
    "equilibrium_bnf",
    "orbit_diagnostics",
    "OrbitDiagnostics",
    "content_grade",
    "content_tau_order",
    "cylinder_symbol",
    "saddle_symbol",
    "replay_chain",
]


class ModelValidationError(ValueError):
    """A model violates its structural invariants."""


# --------------------------------------------------------------------------
# models
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class CylinderModel:
    """Hyperbolic closed-orbit model f(tau) + mu(tau) x xi + perturbation.

    Parameters
    ----------
    energy : TauSeries
        f(tau), the energy along the orbit family; f'(0) > 0 and f(0) is
        the reference energy.
    rate : TauSeries
        mu(tau) > 0, the hyperbolic expansion rate per unit time.
    perturbation : FormalSymbol or None
        Higher terms: classical terms of grade >= 3 plus h-order >= 1
        lower-order symbols.  A classical grade-2 term proportional to
        x xi with nonzero Fourier mode is also accepted and removed by the
        angle-averaging step.
    orientable : bool
        Sign of the Poincare eigenvalues; False switches on half-integer
        Fourier modes with the anti-periodicity parity constraint.
    action : float
        Loop action S of the orbit, entering quantization as -S/(2 pi).
    energy0 : float or None
        Window reference energy; defaults to f(0).
    """

    energy: TauSeries
    rate: TauSeries
    perturbation: FormalSymbol | None = None
    orientable: bool = True
    action: float = 0.0
    energy0: float | None = None

    def __post_init__(self):
        if not self.energy.is_real() or not self.rate.is_real():
            raise ModelValidationError("energy and rate series must be real")
        fp0 = self.energy.derivative().coeffs[0].real
        if fp0 <= 0:
            raise ModelValidationError(f"energy'(0) must be positive, got {fp0}")
        if self.rate.coeffs[0].real <= 0:
            raise ModelValidationError(
                f"rate(0) must be positive, got {self.rate.coeffs[0].real}"
            )
        if self.perturbation is not None:
            sp = self.perturbation.spec
            if not (sp.has_angle and sp.num_pairs == 1):
                raise ModelValidationError("perturbation must be a cylinder symbol")
            if sp.orientable != self.orientable:
                raise ModelValidationError(
                    "perturbation orientability flag does not match the model"
                )
            for (m2, a, alpha, beta, j), _ in self.perturbation.terms.items():
                deg = alpha[0] + beta[0]
                if j == 0 and deg + 2 * j < 3:
                    if deg == 2 and alpha == beta and m2 != 0:
                        continue  # angle-dependent rate term, handled by averaging
                    raise ModelValidationError(
                        "classical perturbation terms must have grade >= 3 "
                        f"(offending key m={m2/2}, a={a}, alpha={alpha}, beta={beta})"
                    )

    @property
    def reference_energy(self) -> float:
        if self.energy0 is not None:
            return self.energy0
        return float(self.energy.coeffs[0].real)


@dataclass(frozen=True)
class SaddleModel:
    """Saddle-point model around a critical energy.

    The quadratic part is lam1/2 (xi1^2 - x1^2) + lam2/2 (xi2^2 + x2^2)
    in the prepared coordinates; ``higher`` holds classical terms of
    degree >= 3 and h-order >= 1 symbols on two pairs, before scaling.
    """

    energy0: float
    unstable_rate: float  # lam1 > 0, unstable-axis expansion rate
    stable_freq: float    # lam2 > 0, stable-axis frequency
    higher: FormalSymbol | None = None

    def __post_init__(self):
        if self.unstable_rate <= 0 or self.stable_freq <= 0:
            raise ModelValidationError("both quadratic coefficients must be positive")
        if self.higher is not None:
            sp = self.higher.spec
            if sp.has_angle or sp.num_pairs != 2:
                raise ModelValidationError("higher terms must live on two plain pairs")
            for (m2, a, alpha, beta, j), _ in self.higher.terms.items():
                if j == 0 and sum(alpha) + sum(beta) < 3:
                    raise ModelValidationError(
                        "classical higher terms must have degree >= 3 "
                        f"(offending alpha={alpha}, beta={beta})"
                    )


# --------------------------------------------------------------------------
# normal form container
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class NormalFormPoly:
    """Normal form as the function the quantization rules evaluate.

    For ``kind == 'closed_orbit'`` coefficients map (a, b, j) to the
    coefficient of tau^a zeta^b h^j, where zeta is the slot that receives
    (l + 1/2) h / i.  For ``kind == 'equilibrium'`` they map (b1, b2, j)
    to the coefficient of iota1^b1 iota2^b2 h^j with iota_i filled by
    (k + 1/2) h and (l + 1/2) h.
    """

    kind: str  # 'closed_orbit' | 'equilibrium'
    coeffs: dict
    order: int
    action: float = 0.0
    energy0: float = 0.0
    orientable: bool = True

    def __post_init__(self):
        if self.kind not in ("closed_orbit", "equilibrium"):
            raise ValueError(f"unknown normal form kind {self.kind!r}")

    def evaluate(self, arg1, arg2, h) -> complex:
        """Value at (tau, zeta, h) or (iota1, iota2, h)."""
        total = 0j
        for (i1, i2, j), c in self.coeffs.items():
            total += c * arg1**i1 * arg2**i2 * h**j
        return complex(total)

    def h_layer(self, j) -> dict:
        """Coefficients of h^j as a polynomial in the two slot variables."""
        return {(i1, i2): c for (i1, i2, jj), c in self.coeffs.items() if jj == j}

    def h_orders(self):
        return sorted({j for (_, _, j) in self.coeffs})

    def evaluate_layer(self, j, arg1, arg2) -> complex:
        total = 0j
        for (i1, i2), c in self.h_layer(j).items():
            total += c * arg1**i1 * arg2**i2
        return complex(total)

    def scale(self) -> float:
        return max((abs(c) for c in self.coeffs.values()), default=0.0)

    def leading_series(self, slot=0) -> TauSeries:
        """Closed-orbit helper: the tau series multiplying zeta^slot at h^0."""
        if self.kind != "closed_orbit":
            raise ValueError("leading_series applies to closed-orbit forms")
        amax = max((a for (a, b, j) in self.coeffs if b == slot and j == 0), default=0)
        c = np.zeros(amax + 1, dtype=complex)
        for (a, b, j), v in self.coeffs.items():
            if b == slot and j == 0:
                c[a] = v
        return TauSeries(c)


@dataclass
class GeneratorChain:
    """Record of the transformations that produced a normal form.

    ``steps`` is the ordered list of (method, grade, generator) with
    method 'average', 'lie' or 'star'.  ``normalized_symbol`` is the
    resonant Weyl symbol the loop converged to, kept for replay checks;
    ``remainder`` holds the terms of grade > order seen when the chain is
    replayed at a higher truncation.
    """

    kind: str
    order: int
    steps: list = field(default_factory=list)
    normalized_symbol: FormalSymbol | None = None
    remainder: FormalSymbol | None = None


# --------------------------------------------------------------------------
# model symbols
# --------------------------------------------------------------------------

def content_grade(model) -> int:
    """Largest joint grade carried by the model's own symbol data.

    The direct quantization route must keep every model term regardless
    of the normal-form truncation order, so assembly specs are sized by
    this value.
    """
    if isinstance(model, CylinderModel):
        extra = model.perturbation
    else:
        extra = model.higher
    if extra is None:
        return 2
    sp = extra.spec
    return max(2, max((sp.grade(k) for k in extra.terms), default=2))


def content_tau_order(model: CylinderModel) -> int:
    """Largest tau power carried by the model's series and perturbation."""
    deg = max(model.energy.order, model.rate.order)
    if model.perturbation is not None:
        deg = max(deg, max((k[1] for k in model.perturbation.terms), default=0))
    return deg


def cylinder_symbol(model: CylinderModel, spec: PhaseSpec) -> FormalSymbol:
    """Full Weyl symbol of a cylinder model on the given working spec."""
    p = FormalSymbol.from_tau_series(spec, model.energy.resized(spec.tau_max))
    p = p + FormalSymbol.from_tau_series(
        spec, model.rate.resized(spec.tau_max), alpha=1, beta=1
    )
    if model.perturbation is not None:
        p = p + model.perturbation.reembedded(spec)
    return p


def saddle_symbol(model: SaddleModel, spec: PhaseSpec) -> FormalSymbol:
    """Full Weyl symbol of a saddle model (unscaled coordinates)."""
    l1, l2 = model.unstable_rate, model.stable_freq
    p = FormalSymbol.constant(spec, model.energy0)
    p = p + FormalSymbol.monomial(spec, 0.5 * l1, beta=(2, 0))
    p = p + FormalSymbol.monomial(spec, -0.5 * l1, alpha=(2, 0))
    p = p + FormalSymbol.monomial(spec, 0.5 * l2, beta=(0, 2))
    p = p + FormalSymbol.monomial(spec, 0.5 * l2, alpha=(0, 2))
    if model.higher is not None:
        p = p + model.higher.reembedded(spec)
    return p


# --------------------------------------------------------------------------
# angle averaging of the grade-2 coefficient
# --------------------------------------------------------------------------

def average_rate(energy: TauSeries, rate_sym: FormalSymbol) -> tuple[FormalSymbol, TauSeries]:
    """Remove the angle dependence of the transverse rate coefficient.

    Given mu(t, tau) as a scalar symbol (no x, xi, h content), returns the
    generator coefficient lam(t, tau) with f'(tau) d_t lam = mu - <mu> and
    the angle average <mu> as a TauSeries.  Applying ``lie_transform``
    with G = lam * x xi replaces mu(t, tau) by <mu>(tau) in the grade-2
    part of the model symbol.
    """
    spec = rate_sym.spec
    if not spec.has_angle:
        raise ValueError("angle averaging requires the cylinder model")
    K = spec.tau_max
    fp = energy.resized(K).derivative()
    avg = np.zeros(K + 1, dtype=complex)
    groups: dict[int, np.ndarray] = {}
    for (m2, a, alpha, beta, j), c in rate_sym.terms.items():
        if alpha != (0,) * spec.num_pairs or beta != alpha or j != 0:
            raise ValueError("rate coefficient must be a scalar classical symbol")
        if m2 == 0:
            avg[a] += c
        else:
            groups.setdefault(m2, np.zeros(K + 1, dtype=complex))[a] += c
    lam_terms = {}
    for m2, poly in groups.items():
        inv = ((0.5j * m2) * fp).inverse()
        lam_poly = np.convolve(poly, inv.coeffs)[: K + 1]
        for a, c in enumerate(lam_poly):
            if c != 0:
                lam_terms[(m2, a, (0,) * spec.num_pairs, (0,) * spec.num_pairs, 0)] = c
    return FormalSymbol(spec, lam_terms), TauSeries(avg)


# --------------------------------------------------------------------------
# functional-calculus conversion for action powers
# --------------------------------------------------------------------------

@lru_cache(maxsize=None)
def _action_power_corrections(bmax: int) -> tuple[tuple[float, ...], ...]:
    """Coefficients v[b][r] with iota^b = sum_r v[b][r] h^{2r} iota^{*(b-2r)}.

    Here iota = (x^2 + xi^2)/2 on a single pair and * denotes the star
    product, so the Weyl quantization of the symbol iota^b acts as
    sum_r v[b][r] h^{2r} I^(b-2r) in the functional calculus of the
    harmonic action operator I.  Computed by expanding star powers of
    iota and inverting the triangular relation; no matrix code involved.
    """
    spec = PhaseSpec(False, 1, max(2 * bmax, 2), 0)
    iota = FormalSymbol.monomial(spec, 0.5, alpha=2) + FormalSymbol.monomial(
        spec, 0.5, beta=2
    )
    powers = [FormalSymbol.constant(spec, 1.0)]
    for _ in range(bmax):
        powers.append(moyal_star(powers[-1], iota))
    # star powers are radial: S_b = sum_r w[b][r] iota^(b-2r) h^(2r);
    # read w off the pure-x coefficients, iota^p having x^(2p) weight 2^-p
    w = []
    for b in range(bmax + 1):
        wb = np.zeros(b // 2 + 1)
        for (m2, a, alpha, beta, j), c in powers[b].terms.items():
            if beta == (0,) and j % 2 == 0:
                p = alpha[0] // 2
                r = j // 2
                if p == b - 2 * r:
                    wb[r] = (c * 2**p).real
        w.append(wb)
    v = []
    for b in range(bmax + 1):
        vb = np.zeros(b // 2 + 1)
        vb[0] = 1.0
        for u in range(1, b // 2 + 1):
            acc = 0.0
            for r in range(u):
                acc += vb[r] * w[b - 2 * r][u - r]
            vb[u] = -acc
        v.append(tuple(vb))
    return tuple(v)


def _functional_closed_orbit(sym: FormalSymbol, order, action, energy0, orientable):
    """Resonant cylinder Weyl symbol -> functional normal form."""
    bmax = max((k[2][0] for k in sym.terms), default=0)
    v = _action_power_corrections(bmax)
    coeffs: dict = {}
    for (m2, a, alpha, beta, j), c in sym.terms.items():
        b = alpha[0]
        for r in range(b // 2 + 1):
            val = c * ((-1.0) ** r) * v[b][r]
            if val != 0:
                key = (a, b - 2 * r, j + 2 * r)
                coeffs[key] = coeffs.get(key, 0.0) + val
    coeffs = {k: c for k, c in coeffs.items() if c != 0}
    return NormalFormPoly("closed_orbit", coeffs, order, action, energy0, orientable)


def _functional_equilibrium(sym: FormalSymbol, order, energy0):
    """Resonant saddle Weyl symbol (Birkhoff coordinates) -> functional form.

    A resonant monomial (x1 xi1)^b1 (x2 xi2)^b2 equals (iota1/i)^b1
    (iota2/i)^b2 as a symbol; each action power is then converted to the
    functional calculus independently per axis.  Unlike the closed-orbit
    case the lattice fills these slots with real action values, so the
    conversion coefficients enter without alternating signs.
    """
    bmax = max((max(k[2]) for k in sym.terms), default=0)
    v = _action_power_corrections(bmax)
    coeffs: dict = {}
    for (m2, a, alpha, beta, j), c in sym.terms.items():
        b1, b2 = alpha
        base = c * (-1j) ** (b1 + b2)
        for r1 in range(b1 // 2 + 1):
            for r2 in range(b2 // 2 + 1):
                val = base * v[b1][r1] * v[b2][r2]
                if val != 0:
                    key = (b1 - 2 * r1, b2 - 2 * r2, j + 2 * (r1 + r2))
                    coeffs[key] = coeffs.get(key, 0.0) + val
    coeffs = {k: c for k, c in coeffs.items() if c != 0}
    return NormalFormPoly("equilibrium", coeffs, order, 0.0, energy0)


# --------------------------------------------------------------------------
# closed-orbit pipeline
# --------------------------------------------------------------------------

def _effective_rate(p: FormalSymbol) -> TauSeries:
    """tau series multiplying x xi in the angle-averaged grade-2 part."""
    K = p.spec.tau_max
    c = np.zeros(K + 1, dtype=complex)
    for (m2, a, alpha, beta, j), coef in p.terms.items():
        if m2 == 0 and j == 0 and alpha == (1,) and beta == (1,):
            c[a] += coef
    return TauSeries(c)


def closed_orbit_bnf(
    model: CylinderModel, order: int, tau_order: int | None = None
) -> tuple[NormalFormPoly, GeneratorChain]:
    """Quantum Birkhoff normal form around a hyperbolic closed orbit.

    Runs the unified elimination loop over joint grades up to ``order``
    and returns the normal form as a function of (tau, zeta, h) together
    with the generator chain.  Coefficients of grade <= N are stable when
    N increases.
    """
    if order < 2:
        raise ValueError("order must be at least 2")
    if tau_order is None:
        tau_order = _default_tau_order(model, order)
    spec = PhaseSpec.cylinder(order, tau_order, model.orientable)
    p = cylinder_symbol(model, spec)
    chain = GeneratorChain("closed_orbit", order)

    f = model.energy.resized(tau_order)

    # grade-2 classical: average away any angle dependence of the rate
    g2_cl = p.grade_part(2).h_split()[0]
    _, g2_nonres = resonant_project(g2_cl)
    if g2_nonres:
        rate_coeff = FormalSymbol(
            spec,
            {(m2, a, (0,), (0,), 0): c for (m2, a, al, be, j), c in g2_nonres.terms.items()},
        )
        lam, _ = average_rate(f, rate_coeff)
        G2 = lam * FormalSymbol.monomial(spec, 1.0, alpha=1, beta=1)
        p = lie_transform(p, G2)
        chain.steps.append(("average", 2, G2))

    for d in range(2, order + 1):
        mu_eff = _effective_rate(p)
        v = p.grade_part(d)
        _, nonres = resonant_project(v)
        if not nonres:
            continue
        cl, qu = nonres.h_split()
        if cl and d >= 3:
            G, _ = homological_solve(cl, f, mu_eff)
            p = lie_transform(p, G)
            chain.steps.append(("lie", d, G))
        elif cl:
            raise ModelDegeneracyError(
                "unexpected non-resonant classical grade-2 content after averaging"
            )
        if qu:
            u, _ = homological_solve(qu, f, mu_eff)
            A = -u
            p = star_conjugate(p, A)
            chain.steps.append(("star", d, A))

    res, dust = resonant_project(p)
    scale = max(p.max_abs(), 1.0)
    if dust.max_abs() > 1e-10 * scale:
        raise ArithmeticError(
            f"normalization left non-resonant residue {dust.max_abs():.3e}"
        )
    chain.normalized_symbol = res
    chain.remainder = _chain_remainder(model, chain, spec)
    nf = _functional_closed_orbit(
        res, order, model.action, model.reference_energy, model.orientable
    )
    return nf, chain


def _default_tau_order(model: CylinderModel, order: int) -> int:
    deg = max(model.energy.order, model.rate.order)
    if model.perturbation is not None:
        deg = max(deg, max((k[1] for k in model.perturbation.terms), default=0))
    return max(order, deg)


# --------------------------------------------------------------------------
# saddle pipeline
# --------------------------------------------------------------------------

def birkhoff_coordinates(symbol: FormalSymbol) -> FormalSymbol:
    """Per-axis linear canonical change diagonalizing a scaled saddle.

    Substitutes, on every pair, x -> (x + i xi)/sqrt(2) and
    xi -> (i x + xi)/sqrt(2), a canonical map under which
    (x^2 + xi^2)/2 -> i x xi.  Applied to the pi/4-scaled saddle
    quadratic part it produces lam1 x1 xi1 + i lam2 x2 xi2.
    """
    s = 1.0 / math.sqrt(2.0)
    out = symbol
    for i in range(symbol.spec.num_pairs):
        out = substitute_pair(out, i, (s, 1j * s), (1j * s, s))
    return out


def _equilibrium_solve(v: FormalSymbol, nu) -> FormalSymbol:
    """Per-term division by the saddle denominators nu . (alpha - beta)."""
    floor = min(abs(nu[0]), abs(nu[1]))
    out = {}
    for (m2, a, alpha, beta, j), c in v.terms.items():
        D = sum(n * (al - be) for n, al, be in zip(nu, alpha, beta))
        if abs(D) < 0.5 * floor:
            raise ModelDegeneracyError(
                f"saddle denominator too small on alpha={alpha}, beta={beta}: {D}"
            )
        out[(m2, a, alpha, beta, j)] = c / D
    return FormalSymbol(v.spec, out, _raw=True)


def equilibrium_bnf(model: SaddleModel, order: int) -> tuple[NormalFormPoly, GeneratorChain]:
    """Quantum Birkhoff normal form of the complex-scaled saddle.

    Returns the normal form in the harmonic actions (iota1, iota2, h),
    with leading part E0 + (lam1/i) iota1 + lam2 iota2, and the chain of
    generators.  Denominators nu . (alpha - beta) with nu = (lam1,
    i lam2) are bounded below by min(lam1, lam2) off the resonant set,
    which is asserted during the run.
    """
    from .quantize import complex_scale  # local import; no cycle at module load

    if order < 2:
        raise ValueError("order must be at least 2")
    spec = PhaseSpec.saddle(order)
    p = birkhoff_coordinates(complex_scale(saddle_symbol(model, spec)))
    nu = (complex(model.unstable_rate), 1j * model.stable_freq)

    # trust but verify the prepared quadratic part
    q2 = p.grade_part(2).h_split()[0]
    expect = FormalSymbol.monomial(spec, nu[0], alpha=(1, 0), beta=(1, 0)) + (
        FormalSymbol.monomial(spec, nu[1], alpha=(0, 1), beta=(0, 1))
    )
    if (q2 - expect).max_abs() > 1e-10 * max(abs(nu[0]), abs(nu[1])):
        raise ModelValidationError("quadratic part is not in the prepared saddle form")

    chain = GeneratorChain("equilibrium", order)
    for d in range(3, order + 1):
        v = p.grade_part(d)
        _, nonres = resonant_project(v)
        if not nonres:
            continue
        for (m2, a, alpha, beta, j) in nonres.terms:
            D = sum(n * (al - be) for n, al, be in zip(nu, alpha, beta))
            if abs(D) < min(model.unstable_rate, model.stable_freq) * (1 - 1e-12):
                raise ModelDegeneracyError(
                    f"resonance bound violated at alpha={alpha}, beta={beta}"
                )
        cl, qu = nonres.h_split()
        if cl:
            G = _equilibrium_solve(cl, nu)
            p = lie_transform(p, G)
            chain.steps.append(("lie", d, G))
        if qu:
            A = -_equilibrium_solve(qu, nu)
            p = star_conjugate(p, A)
            chain.steps.append(("star", d, A))

    res, dust = resonant_project(p)
    if dust.max_abs() > 1e-10 * max(p.max_abs(), 1.0):
        raise ArithmeticError(
            f"normalization left non-resonant residue {dust.max_abs():.3e}"
        )
    chain.normalized_symbol = res
    chain.remainder = _chain_remainder(model, chain, spec)
    nf = _functional_equilibrium(res, order, model.energy0)
    return nf, chain


# --------------------------------------------------------------------------
# replay and diagnostics
# --------------------------------------------------------------------------

def replay_chain(model, chain: GeneratorChain, grade_max: int | None = None) -> FormalSymbol:
    """Re-apply a generator chain to its model at a chosen truncation.

    With ``grade_max`` above the chain order, the result reproduces the
    normalized symbol up to terms of grade > order (the remainder).
    """
    if grade_max is None:
        grade_max = chain.order
    if chain.kind == "closed_orbit":
        base = chain.steps[0][2].spec if chain.steps else None
        tau_order = base.tau_max if base is not None else grade_max
        spec = PhaseSpec.cylinder(grade_max, tau_order, model.orientable)
        p = cylinder_symbol(model, spec)
    else:
        from .quantize import complex_scale

        spec = PhaseSpec.saddle(grade_max)
        p = birkhoff_coordinates(complex_scale(saddle_symbol(model, spec)))
    for method, _, gen in chain.steps:
        gen = gen.reembedded(spec)
        if method in ("lie", "average"):
            p = lie_transform(p, gen)
        elif method == "star":
            p = star_conjugate(p, gen)
        else:
            raise ValueError(f"unknown chain step {method!r}")
    return p


def _chain_remainder(model, chain: GeneratorChain, spec: PhaseSpec) -> FormalSymbol:
    """Terms of grade > order produced when replaying two grades higher."""
    wide = replay_chain(model, chain, grade_max=chain.order + 2)
    tail = {
        k: c for k, c in wide.terms.items() if wide.spec.grade(k) > chain.order
    }
    return FormalSymbol(wide.spec, tail, _raw=True)


class OrbitDiagnostics(NamedTuple):
    period: float
    multiplier: float  # |Poincare eigenvalue| = exp(period * rate)


def orbit_diagnostics(energy: TauSeries, rate: TauSeries, E: float) -> OrbitDiagnostics:
    """Period and Poincare multiplier of the orbit at energy E.

    Inverts tau -> energy(tau) by Newton iteration on the truncated
    series; T(E) = 2 pi / energy'(tau_E) and the multiplier modulus is
    exp(T(E) rate(tau_E)).
    """
    tau_E = energy.solve(E)
    fp = energy.derivative()(tau_E)
    if abs(np.imag(fp)) > 1e-10 or np.real(fp) <= 0:
        raise ValueError("energy profile is not invertible at this energy")
    period = 2.0 * math.pi / float(np.real(fp))
    try:
        mult = math.exp(period * float(np.real(rate(tau_E))))
    except OverflowError:
        mult = math.inf
    return OrbitDiagnostics(period, mult)
