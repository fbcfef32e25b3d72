"""Truncated Weyl-symbol algebra on the model phase spaces.

Symbols live either on the cylinder T*(S^1 x R), with coordinates
(t, tau, x, xi) where t is the angle along the orbit and tau its conjugate
action, or on T*R^2 with two symplectic pairs (x1, xi1), (x2, xi2).
A symbol is a finite complex combination of monomials

    exp(i*m*t) * tau**a * x**alpha * xi**beta * h**j

stored sparsely and truncated by the joint grade

    grade = |alpha| + |beta| + 2*j  <=  grade_max

together with the tau power a <= tau_max.  The semiclassical parameter h
is kept formal (it carries grade 2, matching the scale h ~ (x, xi)^2 of
the quantization rules).  Half-integer Fourier modes m encode transverse
coordinates that are anti-periodic around a non-orientable orbit; keys
store 2*m as an integer so no floating modes ever appear.

Sign conventions, fixed once here and pinned by the matrix tests in the
suite:

* Poisson bracket
      {a, b} = sum_i (d_xi_i a * d_x_i b - d_x_i a * d_xi_i b)
               + d_tau a * d_t b - d_t a * d_tau b,
  so {xi, x} = 1, {tau, t} = 1, and {x*xi, .} = x d_x - xi d_xi.

* Moyal product
      a * b = sum_k (1/k!) (h/2i)^k B_k(a, b),  B_1 = {a, b},
  giving x * xi = x xi + i h / 2 and the commutator x*xi - xi*x = i h.

* Operator conjugation exp(-iA/h) P exp(iA/h) is realised on symbols by
  ``star_conjugate``; its leading effect is P -> P + {P, A}/h-shifted,
  i.e. an A with h-order one changes the h^1 coefficient by {p, a}.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping

import numpy as np

__all__ = [
    "PRUNE_REL",
    "PhaseSpec",
    "TauSeries",
    "FormalSymbol",
    "SpecMismatchError",
    "ModelDegeneracyError",
    "IterationCapError",
    "poisson_bracket",
    "moyal_star",
    "moyal_commutator",
    "substitute_pair",
    "resonant_project",
    "homological_solve",
    "lie_transform",
    "star_conjugate",
]

#: relative coefficient pruning threshold applied after every operation
PRUNE_REL = 1e-15


class SpecMismatchError(ValueError):
    """Operands do not share the same PhaseSpec."""


class ModelDegeneracyError(ArithmeticError):
    """A homological denominator vanished on a non-resonant term."""


class IterationCapError(ArithmeticError):
    """A Lie/conjugation series did not settle within the iteration cap."""


# --------------------------------------------------------------------------
# phase space description
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class PhaseSpec:
    """Shape and truncation of the symbol algebra.

    Parameters
    ----------
    has_angle : bool
        True for the cylinder model (angle t with conjugate tau).
    num_pairs : int
        Number of symplectic pairs (1 for the cylinder, 2 for the saddle).
    grade_max : int
        Truncation of the joint grade |alpha| + |beta| + 2j.
    tau_max : int
        Truncation of the tau Taylor expansion (cylinder only).
    orientable : bool
        Cylinder only; False allows half-integer Fourier modes under the
        anti-periodicity parity constraint 2m = |alpha| - |beta| (mod 2).
    """

    has_angle: bool
    num_pairs: int
    grade_max: int
    tau_max: int = 0
    orientable: bool = True

    def __post_init__(self):
        if self.num_pairs not in (1, 2):
            raise ValueError("num_pairs must be 1 or 2")
        if self.has_angle and self.num_pairs != 1:
            raise ValueError("the cylinder model has exactly one transverse pair")
        if self.grade_max < 2:
            raise ValueError("grade_max must be at least 2")
        if self.tau_max < 0:
            raise ValueError("tau_max must be nonnegative")
        if not self.has_angle and self.tau_max != 0:
            raise ValueError("tau_max is meaningful only with an angle variable")

    @classmethod
    def cylinder(cls, grade_max, tau_max=None, orientable=True):
        if tau_max is None:
            tau_max = grade_max
        return cls(True, 1, grade_max, tau_max, orientable)

    @classmethod
    def saddle(cls, grade_max):
        return cls(False, 2, grade_max, 0, True)

    def grade(self, key) -> int:
        _, _, alpha, beta, j = key
        return sum(alpha) + sum(beta) + 2 * j

    def key_ok(self, key) -> bool:
        """True when the key fits inside the truncation bounds."""
        m2, a, alpha, beta, j = key
        if a > self.tau_max or self.grade(key) > self.grade_max:
            return False
        return True

    def validate_key(self, key):
        m2, a, alpha, beta, j = key
        if len(alpha) != self.num_pairs or len(beta) != self.num_pairs:
            raise ValueError(f"exponent vectors must have length {self.num_pairs}")
        if a < 0 or j < 0 or min(alpha, default=0) < 0 or min(beta, default=0) < 0:
            raise ValueError("negative exponent in symbol key")
        if not self.has_angle and (m2 != 0 or a != 0):
            raise ValueError("no angle variable: Fourier mode and tau power must vanish")
        if self.has_angle:
            if self.orientable:
                if m2 % 2:
                    raise ValueError("orientable model requires integer Fourier modes")
            elif (m2 - (sum(alpha) - sum(beta))) % 2:
                raise ValueError(
                    "anti-periodicity violated: need 2m = |alpha|-|beta| (mod 2), "
                    f"got m={m2/2}, alpha={alpha}, beta={beta}"
                )


# --------------------------------------------------------------------------
# truncated power series in tau
# --------------------------------------------------------------------------

class TauSeries:
    """Truncated power series g(tau) = sum_a c_a tau^a of fixed order."""

    __slots__ = ("coeffs",)

    def __init__(self, coeffs, order=None):
        c = np.asarray(coeffs, dtype=complex).ravel()
        if order is not None:
            if len(c) > order + 1:
                c = c[: order + 1]
            elif len(c) < order + 1:
                c = np.concatenate([c, np.zeros(order + 1 - len(c), dtype=complex)])
        if len(c) == 0:
            c = np.zeros(1, dtype=complex)
        self.coeffs = c

    @property
    def order(self) -> int:
        return len(self.coeffs) - 1

    def resized(self, order) -> "TauSeries":
        return TauSeries(self.coeffs, order)

    def __add__(self, other):
        other = other if isinstance(other, TauSeries) else TauSeries([other])
        n = max(self.order, other.order)
        return TauSeries(self.resized(n).coeffs + other.resized(n).coeffs)

    __radd__ = __add__

    def __sub__(self, other):
        other = other if isinstance(other, TauSeries) else TauSeries([other])
        return self + (-1.0) * other

    def __mul__(self, other):
        if isinstance(other, TauSeries):
            n = max(self.order, other.order)
            out = np.convolve(self.coeffs, other.coeffs)[: n + 1]
            return TauSeries(out, n)
        return TauSeries(self.coeffs * other)

    __rmul__ = __mul__

    def derivative(self) -> "TauSeries":
        c = self.coeffs
        if len(c) == 1:
            return TauSeries([0.0], self.order)
        d = c[1:] * np.arange(1, len(c))
        return TauSeries(d, self.order)

    def inverse(self) -> "TauSeries":
        """Truncated multiplicative inverse; requires nonzero constant term."""
        c = self.coeffs
        if c[0] == 0:
            raise ZeroDivisionError("series has vanishing constant term")
        inv = np.zeros_like(c)
        inv[0] = 1.0 / c[0]
        for k in range(1, len(c)):
            inv[k] = -np.dot(c[1 : k + 1], inv[k - 1 :: -1]) / c[0]
        return TauSeries(inv)

    def __call__(self, tau):
        # Horner evaluation, vector friendly
        acc = np.zeros_like(np.asarray(tau, dtype=complex))
        for c in self.coeffs[::-1]:
            acc = acc * tau + c
        return acc if np.ndim(tau) else complex(acc)

    def is_real(self, tol=1e-12) -> bool:
        scale = max(1.0, float(np.max(np.abs(self.coeffs))))
        return bool(np.max(np.abs(self.coeffs.imag)) <= tol * scale)

    def solve(self, target, x0=0.0, tol=1e-13, max_iter=50):
        """Solve g(tau) = target by Newton iteration on the truncated series."""
        d = self.derivative()
        tau = complex(x0)
        scale = max(1.0, abs(target))
        for _ in range(max_iter):
            val = self(tau) - target
            if abs(val) <= tol * scale:
                return tau.real if abs(tau.imag) < 1e-12 else tau
            dv = d(tau)
            if dv == 0:
                break
            tau = tau - val / dv
        raise ValueError(f"Newton iteration failed to invert series at target {target}")

    def __repr__(self):
        return f"TauSeries({np.array2string(self.coeffs, precision=6)})"


# --------------------------------------------------------------------------
# the symbol container
# --------------------------------------------------------------------------

def _prune(terms: dict) -> dict:
    if not terms:
        return {}
    top = max(abs(c) for c in terms.values())
    if top == 0.0:
        return {}
    floor = PRUNE_REL * top
    return {k: c for k, c in terms.items() if abs(c) > floor}


class FormalSymbol:
    """Sparse truncated Weyl symbol.

    Terms map keys ``(2m, a, alpha, beta, j)`` to complex coefficients,
    where m is the Fourier mode, a the tau power, alpha/beta the per-pair
    monomial exponents and j the h power.  Instances are immutable; all
    operations return fresh symbols, pruned at ``PRUNE_REL`` relative to
    the largest coefficient.
    """

    __slots__ = ("spec", "_terms")

    def __init__(self, spec: PhaseSpec, terms: Mapping | None = None, *, _raw=False):
        self.spec = spec
        if terms is None:
            self._terms = {}
        elif _raw:
            self._terms = dict(terms)
        else:
            cleaned = {}
            for key, coef in terms.items():
                key = (int(key[0]), int(key[1]), tuple(key[2]), tuple(key[3]), int(key[4]))
                spec.validate_key(key)
                if not spec.key_ok(key) or coef == 0:
                    continue
                cleaned[key] = cleaned.get(key, 0.0) + complex(coef)
            self._terms = _prune(cleaned)

    # -- constructors ------------------------------------------------------

    @classmethod
    def zero(cls, spec):
        return cls(spec)

    @classmethod
    def constant(cls, spec, value):
        zeros = (0,) * spec.num_pairs
        return cls(spec, {(0, 0, zeros, zeros, 0): value})

    @classmethod
    def monomial(cls, spec, coef, *, m=0, a=0, alpha=None, beta=None, j=0):
        """Single term coef * e^{imt} tau^a x^alpha xi^beta h^j.

        ``m`` may be integer or half-integer; scalar alpha/beta are
        promoted to the single-pair exponent tuple.
        """
        m2 = 2 * m
        if abs(m2 - round(m2)) > 1e-12:
            raise ValueError("Fourier mode must be integer or half-integer")
        if alpha is None:
            alpha = (0,) * spec.num_pairs
        elif isinstance(alpha, int):
            alpha = (alpha,) + (0,) * (spec.num_pairs - 1)
        if beta is None:
            beta = (0,) * spec.num_pairs
        elif isinstance(beta, int):
            beta = (beta,) + (0,) * (spec.num_pairs - 1)
        return cls(spec, {(int(round(m2)), a, tuple(alpha), tuple(beta), j): coef})

    @classmethod
    def from_tau_series(cls, spec, series: TauSeries, *, m=0, alpha=None, beta=None, j=0):
        """Symbol e^{imt} g(tau) x^alpha xi^beta h^j from a TauSeries g."""
        out = cls.zero(spec)
        for a, c in enumerate(series.coeffs):
            if c != 0:
                out = out + cls.monomial(spec, c, m=m, a=a, alpha=alpha, beta=beta, j=j)
        return out

    # -- inspection --------------------------------------------------------

    @property
    def terms(self) -> dict:
        return dict(self._terms)

    def __len__(self):
        return len(self._terms)

    def __bool__(self):
        return bool(self._terms)

    def coefficient(self, m=0, a=0, alpha=None, beta=None, j=0) -> complex:
        if alpha is None:
            alpha = (0,) * self.spec.num_pairs
        elif isinstance(alpha, int):
            alpha = (alpha,) + (0,) * (self.spec.num_pairs - 1)
        if beta is None:
            beta = (0,) * self.spec.num_pairs
        elif isinstance(beta, int):
            beta = (beta,) + (0,) * (self.spec.num_pairs - 1)
        return self._terms.get((int(round(2 * m)), a, tuple(alpha), tuple(beta), j), 0j)

    def max_abs(self) -> float:
        return max((abs(c) for c in self._terms.values()), default=0.0)

    def min_grade(self) -> int:
        return min((self.spec.grade(k) for k in self._terms), default=self.spec.grade_max + 1)

    def max_fourier(self) -> float:
        return max((abs(k[0]) for k in self._terms), default=0) / 2.0

    def grade_part(self, d) -> "FormalSymbol":
        keep = {k: c for k, c in self._terms.items() if self.spec.grade(k) == d}
        return FormalSymbol(self.spec, keep, _raw=True)

    def h_split(self) -> tuple["FormalSymbol", "FormalSymbol"]:
        """Split into the classical (j = 0) and quantum (j >= 1) parts."""
        cl = {k: c for k, c in self._terms.items() if k[4] == 0}
        qu = {k: c for k, c in self._terms.items() if k[4] >= 1}
        return FormalSymbol(self.spec, cl, _raw=True), FormalSymbol(self.spec, qu, _raw=True)

    def min_h_order(self) -> int:
        return min((k[4] for k in self._terms), default=0)

    def conjugate(self) -> "FormalSymbol":
        out = {}
        for (m2, a, alpha, beta, j), c in self._terms.items():
            out[(-m2, a, alpha, beta, j)] = out.get((-m2, a, alpha, beta, j), 0.0) + c.conjugate()
        return FormalSymbol(self.spec, out, _raw=True)

    def is_real(self, tol=1e-12) -> bool:
        """Pointwise reality: coefficient(-m, ...) == conj(coefficient(m, ...))."""
        diff = self - self.conjugate()
        scale = max(self.max_abs(), 1e-300)
        return diff.max_abs() <= tol * scale

    def reembedded(self, spec: PhaseSpec) -> "FormalSymbol":
        """Same terms on another compatible spec; out-of-bound terms drop."""
        if spec.num_pairs != self.spec.num_pairs or spec.has_angle != self.spec.has_angle:
            raise SpecMismatchError("cannot reembed between different phase geometries")
        return FormalSymbol(spec, self._terms)

    def evaluate(self, *, t=0.0, tau=0.0, pairs=None, h=0.0) -> complex:
        """Numeric evaluation at a phase-space point (pairs = ((x, xi), ...))."""
        if pairs is None:
            pairs = ((0.0, 0.0),) * self.spec.num_pairs
        total = 0j
        for (m2, a, alpha, beta, j), c in self._terms.items():
            val = c * np.exp(0.5j * m2 * t)
            if a:
                val *= tau**a
            for i in range(self.spec.num_pairs):
                if alpha[i]:
                    val *= pairs[i][0] ** alpha[i]
                if beta[i]:
                    val *= pairs[i][1] ** beta[i]
            if j:
                val *= h**j
            total += val
        return complex(total)

    def fingerprint(self) -> str:
        import hashlib

        blob = ";".join(
            f"{k}:{c.real:.17e},{c.imag:.17e}" for k, c in sorted(self._terms.items())
        )
        return hashlib.sha256(blob.encode()).hexdigest()[:16]

    def __repr__(self):
        n = len(self._terms)
        return f"FormalSymbol({n} terms, grade<={self.spec.grade_max})"

    # -- ring operations ----------------------------------------------------

    def _check(self, other):
        if self.spec != other.spec:
            raise SpecMismatchError("operands live on different PhaseSpecs")

    def __add__(self, other):
        if isinstance(other, (int, float, complex)):
            other = FormalSymbol.constant(self.spec, other)
        self._check(other)
        out = dict(self._terms)
        for k, c in other._terms.items():
            out[k] = out.get(k, 0.0) + c
        return FormalSymbol(self.spec, _prune(out), _raw=True)

    __radd__ = __add__

    def __neg__(self):
        return FormalSymbol(self.spec, {k: -c for k, c in self._terms.items()}, _raw=True)

    def __sub__(self, other):
        if isinstance(other, (int, float, complex)):
            other = FormalSymbol.constant(self.spec, other)
        return self + (-other)

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        if isinstance(other, (int, float, complex)):
            return FormalSymbol(
                self.spec, {k: c * other for k, c in self._terms.items()}, _raw=True
            )
        self._check(other)
        spec = self.spec
        out = {}
        for (m2a, aa, ala, bea, ja), ca in self._terms.items():
            for (m2b, ab, alb, beb, jb), cb in other._terms.items():
                a = aa + ab
                if a > spec.tau_max:
                    continue
                alpha = tuple(x + y for x, y in zip(ala, alb))
                beta = tuple(x + y for x, y in zip(bea, beb))
                j = ja + jb
                if sum(alpha) + sum(beta) + 2 * j > spec.grade_max:
                    continue
                key = (m2a + m2b, a, alpha, beta, j)
                out[key] = out.get(key, 0.0) + ca * cb
        return FormalSymbol(spec, _prune(out), _raw=True)

    __rmul__ = __mul__


# --------------------------------------------------------------------------
# bidifferential machinery shared by the bracket and the star product
# --------------------------------------------------------------------------

# channel = (left derivative, right derivative, sign); derivative codes are
# "tau", "t" or ("x"|"xi", pair index)

def _channels(spec: PhaseSpec):
    ch = []
    if spec.has_angle:
        ch.append(("tau", "t", 1.0))
        ch.append(("t", "tau", -1.0))
    for i in range(spec.num_pairs):
        ch.append((("xi", i), ("x", i), 1.0))
        ch.append((("x", i), ("xi", i), -1.0))
    return ch


def _capacity(code, m2, a, alpha, beta):
    if code == "t":
        return 10**9 if m2 else 0
    if code == "tau":
        return a
    kind, i = code
    return alpha[i] if kind == "x" else beta[i]


def _apply_derivative(code, count, m2, a, alpha, beta):
    """Apply d^count; returns (factor, a, alpha, beta) or None when it kills."""
    if count == 0:
        return 1.0, a, alpha, beta
    if code == "t":
        return (0.5j * m2) ** count, a, alpha, beta
    if code == "tau":
        if a < count:
            return None
        f = 1.0
        for r in range(count):
            f *= a - r
        return f, a - count, alpha, beta
    kind, i = code
    e = alpha[i] if kind == "x" else beta[i]
    if e < count:
        return None
    f = 1.0
    for r in range(count):
        f *= e - r
    if kind == "x":
        alpha = alpha[:i] + (e - count,) + alpha[i + 1 :]
    else:
        beta = beta[:i] + (e - count,) + beta[i + 1 :]
    return f, a, alpha, beta


def _bidifferential(spec, chs, ka, ca, kb, cb, emit):
    """Enumerate all channel multiplicity vectors for one term pair.

    Calls ``emit(k_total, factor, left_state, right_state)`` for every
    multiset of elementary derivations, where factor already contains
    the coefficient product, per-channel signs, falling factorials and
    1/kappa! weights.  States are (m2, a, alpha, beta); h powers are the
    caller's business.
    """

    def rec(idx, k_tot, factor, la, lal, lbe, ra, ral, rbe):
        if idx == len(chs):
            emit(k_tot, factor, la, lal, lbe, ra, ral, rbe)
            return
        left, right, sign = chs[idx]
        cap = min(
            _capacity(left, ka[0], la, lal, lbe),
            _capacity(right, kb[0], ra, ral, rbe),
        )
        kappa_factor = 1.0
        for kappa in range(cap + 1):
            if kappa:
                kappa_factor *= sign / kappa
                dl = _apply_derivative(left, kappa, ka[0], la, lal, lbe)
                dr = _apply_derivative(right, kappa, kb[0], ra, ral, rbe)
                if dl is None or dr is None:
                    break
                fl, na, nal, nbe = dl
                fr, ma, mal, mbe = dr
                f2 = factor * kappa_factor * fl * fr
                if f2 != 0:
                    rec(idx + 1, k_tot + kappa, f2, na, nal, nbe, ma, mal, mbe)
            else:
                rec(idx + 1, k_tot, factor, la, lal, lbe, ra, ral, rbe)

    rec(0, 0, ca * cb, ka[1], ka[2], ka[3], kb[1], kb[2], kb[3])


def poisson_bracket(a: FormalSymbol, b: FormalSymbol) -> FormalSymbol:
    """Exact Poisson bracket {a, b}, truncated to the common spec."""
    a._check(b)
    spec = a.spec
    out = {}
    for (m2a, aa, ala, bea, ja), ca in a._terms.items():
        for (m2b, ab, alb, beb, jb), cb in b._terms.items():
            j = ja + jb
            m2 = m2a + m2b
            if spec.has_angle:
                # d_tau a * d_t b
                if aa and m2b:
                    key = (m2, aa - 1 + ab, tuple(map(sum, zip(ala, alb))),
                           tuple(map(sum, zip(bea, beb))), j)
                    if spec.key_ok(key):
                        out[key] = out.get(key, 0.0) + ca * cb * aa * (0.5j * m2b)
                # - d_t a * d_tau b
                if m2a and ab:
                    key = (m2, aa + ab - 1, tuple(map(sum, zip(ala, alb))),
                           tuple(map(sum, zip(bea, beb))), j)
                    if spec.key_ok(key):
                        out[key] = out.get(key, 0.0) - ca * cb * (0.5j * m2a) * ab
            for i in range(spec.num_pairs):
                # d_xi_i a * d_x_i b
                if bea[i] and alb[i]:
                    alpha = tuple(x + y - (1 if p == i else 0) for p, (x, y) in enumerate(zip(ala, alb)))
                    beta = tuple(x + y - (1 if p == i else 0) for p, (x, y) in enumerate(zip(bea, beb)))
                    key = (m2, aa + ab, alpha, beta, j)
                    if spec.key_ok(key):
                        out[key] = out.get(key, 0.0) + ca * cb * bea[i] * alb[i]
                # - d_x_i a * d_xi_i b
                if ala[i] and beb[i]:
                    alpha = tuple(x + y - (1 if p == i else 0) for p, (x, y) in enumerate(zip(ala, alb)))
                    beta = tuple(x + y - (1 if p == i else 0) for p, (x, y) in enumerate(zip(bea, beb)))
                    key = (m2, aa + ab, alpha, beta, j)
                    if spec.key_ok(key):
                        out[key] = out.get(key, 0.0) - ca * cb * ala[i] * beb[i]
    return FormalSymbol(spec, _prune(out), _raw=True)


def moyal_star(a: FormalSymbol, b: FormalSymbol) -> FormalSymbol:
    """Weyl composition a # b = sum_k (1/k!) (h/2i)^k B_k(a, b)."""
    a._check(b)
    spec = a.spec
    chs = _channels(spec)
    out = {}

    for ka, ca in a._terms.items():
        for kb, cb in b._terms.items():
            j_base = ka[4] + kb[4]

            def emit(k_tot, factor, la, lal, lbe, ra, ral, rbe):
                j = j_base + k_tot
                aa = la + ra
                if aa > spec.tau_max:
                    return
                alpha = tuple(x + y for x, y in zip(lal, ral))
                beta = tuple(x + y for x, y in zip(lbe, rbe))
                if sum(alpha) + sum(beta) + 2 * j > spec.grade_max:
                    return
                coef = factor * (-0.5j) ** k_tot
                key = (ka[0] + kb[0], aa, alpha, beta, j)
                out[key] = out.get(key, 0.0) + coef

            _bidifferential(spec, chs, ka, ca, kb, cb, emit)
    return FormalSymbol(spec, _prune(out), _raw=True)


def moyal_commutator(a: FormalSymbol, b: FormalSymbol) -> FormalSymbol:
    """Star commutator a # b - b # a, via the odd bidifferential orders only."""
    a._check(b)
    spec = a.spec
    chs = _channels(spec)
    out = {}
    for ka, ca in a._terms.items():
        for kb, cb in b._terms.items():
            j_base = ka[4] + kb[4]

            def emit(k_tot, factor, la, lal, lbe, ra, ral, rbe):
                if k_tot % 2 == 0:
                    return
                j = j_base + k_tot
                aa = la + ra
                if aa > spec.tau_max:
                    return
                alpha = tuple(x + y for x, y in zip(lal, ral))
                beta = tuple(x + y for x, y in zip(lbe, rbe))
                if sum(alpha) + sum(beta) + 2 * j > spec.grade_max:
                    return
                coef = 2.0 * factor * (-0.5j) ** k_tot
                key = (ka[0] + kb[0], aa, alpha, beta, j)
                out[key] = out.get(key, 0.0) + coef

            _bidifferential(spec, chs, ka, ca, kb, cb, emit)
    return FormalSymbol(spec, _prune(out), _raw=True)


def _ad_step(A: FormalSymbol, w: FormalSymbol) -> FormalSymbol:
    """One application of -(i/h) ad_A in the star algebra.

    Every term of the star commutator carries at least one power of h
    (B_k comes with h^k, k >= 1), so dividing by h is exact: the h power
    of each contribution is shifted down by one before truncation.
    """
    spec = A.spec
    chs = _channels(spec)
    out = {}
    for ka, ca in A._terms.items():
        for kb, cb in w._terms.items():
            j_base = ka[4] + kb[4]

            def emit(k_tot, factor, la, lal, lbe, ra, ral, rbe):
                if k_tot % 2 == 0:
                    return
                j = j_base + k_tot - 1
                aa = la + ra
                if aa > spec.tau_max:
                    return
                alpha = tuple(x + y for x, y in zip(lal, ral))
                beta = tuple(x + y for x, y in zip(lbe, rbe))
                if sum(alpha) + sum(beta) + 2 * j > spec.grade_max:
                    return
                coef = -2.0j * factor * (-0.5j) ** k_tot
                key = (ka[0] + kb[0], aa, alpha, beta, j)
                out[key] = out.get(key, 0.0) + coef

            _bidifferential(spec, chs, ka, ca, kb, cb, emit)
    return FormalSymbol(spec, _prune(out), _raw=True)


# --------------------------------------------------------------------------
# normal-form primitives
# --------------------------------------------------------------------------

def substitute_pair(symbol: FormalSymbol, pair: int, x_row, xi_row) -> FormalSymbol:
    """Linear change of one symplectic pair.

    Replaces x_pair -> x_row[0]*x + x_row[1]*xi and xi_pair -> xi_row[0]*x
    + xi_row[1]*xi by binomial expansion.  The caller is responsible for
    the substitution being canonical if bracket relations are to survive.
    """
    spec = symbol.spec
    out = FormalSymbol.zero(spec)
    cxx, cxxi = x_row
    cix, cixi = xi_row
    for (m2, a, alpha, beta, j), c in symbol._terms.items():
        p, q = alpha[pair], beta[pair]
        expansion: dict[tuple[int, int], complex] = {}
        for r in range(p + 1):
            fx = math.comb(p, r) * cxx**r * cxxi ** (p - r)
            for s in range(q + 1):
                fxi = math.comb(q, s) * cix**s * cixi ** (q - s)
                key = (r + s, (p - r) + (q - s))
                expansion[key] = expansion.get(key, 0.0) + fx * fxi
        terms = {}
        for (na, nb), fac in expansion.items():
            alpha2 = alpha[:pair] + (na,) + alpha[pair + 1 :]
            beta2 = beta[:pair] + (nb,) + beta[pair + 1 :]
            key = (m2, a, alpha2, beta2, j)
            terms[key] = terms.get(key, 0.0) + c * fac
        out = out + FormalSymbol(spec, terms, _raw=True)
    return FormalSymbol(spec, _prune(out._terms), _raw=True)


def resonant_project(v: FormalSymbol) -> tuple[FormalSymbol, FormalSymbol]:
    """Split v into (resonant, nonresonant).

    Resonant terms depend only on the actions: Fourier mode zero and
    alpha == beta, i.e. functions of (tau, x xi, h) on the cylinder and of
    the pair products on the saddle.
    """
    res, non = {}, {}
    for key, c in v._terms.items():
        m2, _, alpha, beta, _ = key
        (res if (m2 == 0 and alpha == beta) else non)[key] = c
    return (
        FormalSymbol(v.spec, res, _raw=True),
        FormalSymbol(v.spec, non, _raw=True),
    )


def homological_solve(
    v: FormalSymbol, f: TauSeries, mu: TauSeries
) -> tuple[FormalSymbol, FormalSymbol]:
    """Solve the transport equation of the cylinder normal form.

    Finds u with (f'(tau) d_t + mu(tau)(x d_x - xi d_xi)) u = v - [v],
    term by term: u_{m, alpha, beta} = v_{m, alpha, beta} / D with
    D(tau) = i m f'(tau) + mu(tau) (|alpha| - |beta|), dividing tau series
    by the truncated inverse of D.  The resonant part [v] is returned as
    the residual, untouched.
    """
    spec = v.spec
    if not spec.has_angle:
        raise SpecMismatchError("transport solve requires the cylinder model")
    K = spec.tau_max
    fp = f.resized(K).derivative()
    mu = mu.resized(K)
    if abs(fp.coeffs[0].imag) > 1e-12 * max(1.0, abs(fp.coeffs[0])) or fp.coeffs[0] == 0:
        raise ModelDegeneracyError("f'(0) must be real and nonzero")
    if mu.coeffs[0].real <= 0 or abs(mu.coeffs[0].imag) > 1e-12 * abs(mu.coeffs[0]):
        raise ModelDegeneracyError("mu(0) must be real and positive")

    groups: dict[tuple, np.ndarray] = {}
    residual: dict = {}
    for (m2, a, alpha, beta, j), c in v._terms.items():
        if m2 == 0 and alpha == beta:
            residual[(m2, a, alpha, beta, j)] = c
            continue
        g = groups.setdefault((m2, alpha, beta, j), np.zeros(K + 1, dtype=complex))
        g[a] += c

    inv_cache: dict[tuple, TauSeries] = {}
    scale = abs(fp.coeffs[0]) + abs(mu.coeffs[0])
    u_terms: dict = {}
    for (m2, alpha, beta, j), poly in groups.items():
        diff = sum(alpha) - sum(beta)
        ck = (m2, diff)
        if ck not in inv_cache:
            D = (0.5j * m2) * fp + diff * mu
            if abs(D.coeffs[0]) <= 1e-14 * scale:
                raise ModelDegeneracyError(
                    f"transport denominator vanishes on non-resonant term m={m2/2}, "
                    f"alpha-beta={diff}"
                )
            inv_cache[ck] = D.inverse()
        u_poly = np.convolve(poly, inv_cache[ck].coeffs)[: K + 1]
        for a, c in enumerate(u_poly):
            if c != 0:
                key = (m2, a, alpha, beta, j)
                u_terms[key] = u_terms.get(key, 0.0) + c
    return (
        FormalSymbol(spec, _prune(u_terms), _raw=True),
        FormalSymbol(spec, residual, _raw=True),
    )


def lie_transform(p: FormalSymbol, G: FormalSymbol, *, cap=None) -> FormalSymbol:
    """Classical canonical push-forward p o exp(H_G) = sum_k H_G^k p / k!.

    The Hamilton field acts as H_G q = {G, q}.  Generators of grade >= 3
    terminate within the grade truncation; grade-2 generators are allowed
    but guarded by an iteration cap with a tail check, since they act
    tangentially to the grade filtration.
    """
    p._check(G)
    if not G:
        return p
    gmin = G.min_grade()
    if gmin < 2:
        raise ValueError("every generator term must have grade >= 2")
    if cap is None:
        cap = 2 * p.spec.grade_max + 2
    acc = p
    w = p
    for k in range(1, cap + 1):
        w = poisson_bracket(G, w) * (1.0 / k)
        if not w:
            return acc
        acc = acc + w
    tail = w.max_abs()
    if tail > PRUNE_REL * max(acc.max_abs(), 1.0) * 10.0:
        raise IterationCapError(
            f"Lie series did not settle after {cap} iterations (tail {tail:.3e})"
        )
    return acc


def star_conjugate(P: FormalSymbol, A: FormalSymbol, *, cap=None) -> FormalSymbol:
    """Unitary conjugation exp(-iA/h) P exp(iA/h) at the symbol level.

    Computed as sum_k C^k P / k! with C = -(i/h) ad_A realised through the
    star commutator; the leading effect of A = h a is P + h {p, a} + ... .
    A must have h-order at least one so that every application of C raises
    the grade and the series terminates within the truncation.
    """
    P._check(A)
    if not A:
        return P
    if A.min_h_order() < 1:
        raise ValueError("conjugation generator must have h-order >= 1")
    if cap is None:
        cap = 2 * P.spec.grade_max + 2
    acc = P
    w = P
    for k in range(1, cap + 1):
        w = _ad_step(A, w) * (1.0 / k)
        if not w:
            return acc
        acc = acc + w
    tail = w.max_abs()
    if tail > PRUNE_REL * max(acc.max_abs(), 1.0) * 10.0:
        raise IterationCapError(
            f"conjugation series did not settle after {cap} iterations (tail {tail:.3e})"
        )
    return acc
