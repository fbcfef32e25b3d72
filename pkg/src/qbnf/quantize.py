"""Exact matrix assembly of model operators in spectral bases.

The cylinder operator acts on the Floquet space of functions with
u(t - 2 pi, x) = e^{iS/h} u(t, +-x); its basis is indexed by a Fourier
mode k and a Hermite level l.  The action of hD_t on the basis vector
(k, l) is tau_{k,l} = h k - S/2pi in the orientable case and
h (k + l/2) - S/2pi in the non-orientable one.  The saddle operator acts
on a two-axis Hermite basis.

Matrix elements are exact:

* a factor e^{imt} g(tau) contributes g evaluated at the midpoint of the
  two tau eigenvalues it connects (the Weyl midpoint rule, exact for any
  polynomial g);
* a transverse monomial is quantized through the symmetrization rule
  W(y s) = (Y W(s) + W(s) Y)/2 with the ladder matrices
  Y = sqrt(h/2)(A* + A), H = i sqrt(h/2)(A* - A), which is exact for
  Weyl quantization with linear factors.  Products are computed on an
  enlarged level range and cropped, so every retained entry equals the
  infinite-basis matrix element.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .symbols import FormalSymbol, substitute_pair

__all__ = [
    "DimensionCapError",
    "DIM_CAP",
    "CylinderBasis",
    "SaddleBasis",
    "OperatorMatrix",
    "complex_scale",
    "metaplectic_substitute",
    "ladder_position",
    "ladder_momentum",
    "weyl_monomial_matrix",
    "assemble_cylinder",
    "assemble_saddle",
    "direct_spectrum",
]

#: default cap on assembled matrix dimension
DIM_CAP = 5000


class DimensionCapError(ValueError):
    """Requested basis exceeds the configured dimension cap."""


# --------------------------------------------------------------------------
# bases
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class CylinderBasis:
    """Floquet-Fourier x Hermite basis for the cylinder operator."""

    k_min: int
    k_max: int
    levels: int  # highest Hermite level L; levels + 1 states per k
    h: float
    action: float = 0.0
    orientable: bool = True
    dim_cap: int = DIM_CAP

    def __post_init__(self):
        if self.k_max < self.k_min:
            raise ValueError("empty Fourier range")
        if self.levels < 0:
            raise ValueError("levels must be nonnegative")
        if self.h <= 0:
            raise ValueError("h must be positive")
        if self.dim > self.dim_cap:
            raise DimensionCapError(
                f"basis dimension {self.dim} exceeds cap {self.dim_cap}"
            )

    @property
    def num_k(self) -> int:
        return self.k_max - self.k_min + 1

    @property
    def dim(self) -> int:
        return self.num_k * (self.levels + 1)

    def index(self, k, l) -> int:
        return (k - self.k_min) * (self.levels + 1) + l

    def labels(self):
        return [
            (k, l)
            for k in range(self.k_min, self.k_max + 1)
            for l in range(self.levels + 1)
        ]

    def tau_value(self, k, l) -> float:
        base = k + 0.5 * l if not self.orientable else k
        return self.h * base - self.action / (2.0 * math.pi)

    def widened(self, extra_k=5, extra_levels=10) -> "CylinderBasis":
        return CylinderBasis(
            self.k_min - extra_k,
            self.k_max + extra_k,
            self.levels + extra_levels,
            self.h,
            self.action,
            self.orientable,
            self.dim_cap,
        )


@dataclass(frozen=True)
class SaddleBasis:
    """Two-axis Hermite basis for the scaled saddle operator."""

    levels1: int
    levels2: int
    h: float
    dim_cap: int = DIM_CAP

    def __post_init__(self):
        if self.levels1 < 0 or self.levels2 < 0:
            raise ValueError("levels must be nonnegative")
        if self.h <= 0:
            raise ValueError("h must be positive")
        if self.dim > self.dim_cap:
            raise DimensionCapError(
                f"basis dimension {self.dim} exceeds cap {self.dim_cap}"
            )

    @property
    def dim(self) -> int:
        return (self.levels1 + 1) * (self.levels2 + 1)

    def index(self, k, l) -> int:
        return k * (self.levels2 + 1) + l

    def labels(self):
        return [(k, l) for k in range(self.levels1 + 1) for l in range(self.levels2 + 1)]

    def widened(self, extra=10) -> "SaddleBasis":
        return SaddleBasis(
            self.levels1 + extra, self.levels2 + extra, self.h, self.dim_cap
        )


@dataclass
class OperatorMatrix:
    """Dense complex matrix together with its basis and symbol fingerprint."""

    matrix: np.ndarray
    basis: CylinderBasis | SaddleBasis
    symbol_fingerprint: str

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]


# --------------------------------------------------------------------------
# symbol-side canonical identifications
# --------------------------------------------------------------------------

def complex_scale(symbol: FormalSymbol) -> FormalSymbol:
    """Rotate the first axis: x1 -> e^{i pi/4} x1, xi1 -> e^{-i pi/4} xi1.

    Each term picks up the phase e^{i pi (alpha1 - beta1)/4}; bracket
    relations are preserved.  Turns the hyperbolic axis of a saddle into
    a damped oscillator axis with coefficient lam1/(2i).
    """
    out = {}
    for (m2, a, alpha, beta, j), c in symbol.terms.items():
        phase = np.exp(0.25j * math.pi * (alpha[0] - beta[0]))
        out[(m2, a, alpha, beta, j)] = c * phase
    return FormalSymbol(symbol.spec, out, _raw=True)


def metaplectic_substitute(symbol: FormalSymbol) -> FormalSymbol:
    """Identify the hyperbolic pair with an oscillator pair.

    The canonical substitution x -> (y - i eta)/sqrt(2),
    xi -> (-i y + eta)/sqrt(2) sends x xi to (y^2 + eta^2)/(2i); the
    output symbol is written in (y, eta), stored in the same pair slot.
    """
    spec = symbol.spec
    if not (spec.has_angle and spec.num_pairs == 1):
        raise ValueError("metaplectic identification applies to cylinder symbols")
    s = 1.0 / math.sqrt(2.0)
    return substitute_pair(symbol, 0, (s, -1j * s), (-1j * s, s))


# --------------------------------------------------------------------------
# ladder matrices and Weyl monomials
# --------------------------------------------------------------------------

def ladder_position(n: int, h: float) -> np.ndarray:
    """Matrix of y on Hermite levels 0..n-1: sqrt(h/2)(A* + A)."""
    r = np.sqrt(0.5 * h * np.arange(1, n))
    M = np.zeros((n, n), dtype=complex)
    M[np.arange(1, n), np.arange(n - 1)] = r
    M[np.arange(n - 1), np.arange(1, n)] = r
    return M


def ladder_momentum(n: int, h: float) -> np.ndarray:
    """Matrix of eta = hD_y on Hermite levels 0..n-1: i sqrt(h/2)(A* - A)."""
    r = np.sqrt(0.5 * h * np.arange(1, n))
    M = np.zeros((n, n), dtype=complex)
    M[np.arange(1, n), np.arange(n - 1)] = 1j * r
    M[np.arange(n - 1), np.arange(1, n)] = -1j * r
    return M


def weyl_monomial_matrix(p: int, q: int, levels: int, h: float) -> np.ndarray:
    """Exact Weyl quantization of y^p eta^q on levels 0..levels.

    Built by the symmetrization recursion on an enlarged level range so
    that every returned entry equals the infinite-basis matrix element.
    """
    n = levels + 1 + p + q
    Y = ladder_position(n, h)
    E = ladder_momentum(n, h)
    M = np.eye(n, dtype=complex)
    for _ in range(q):
        M = 0.5 * (E @ M + M @ E)
    for _ in range(p):
        M = 0.5 * (Y @ M + M @ Y)
    return M[: levels + 1, : levels + 1]


# --------------------------------------------------------------------------
# assembly
# --------------------------------------------------------------------------

def assemble_cylinder(symbol: FormalSymbol, basis: CylinderBasis) -> OperatorMatrix:
    """Matrix of the Weyl quantization of a cylinder symbol.

    The symbol must already be in oscillator coordinates (after
    ``metaplectic_substitute``).  Entries are exact; couplings leaving
    the Fourier window or the level range are dropped, which affects the
    spectrum only through the usual basis-truncation error.
    """
    spec = symbol.spec
    if not (spec.has_angle and spec.num_pairs == 1):
        raise ValueError("assemble_cylinder expects a cylinder symbol")
    if spec.orientable != basis.orientable:
        raise ValueError("symbol and basis orientability flags disagree")
    L = basis.levels
    nk = basis.num_k
    dim = basis.dim
    M = np.zeros((dim, dim), dtype=complex)

    ks = np.arange(basis.k_min, basis.k_max + 1)
    offset = basis.action / (2.0 * math.pi)
    wm_cache: dict[tuple[int, int], np.ndarray] = {}

    for (m2, a, alpha, beta, j), c in symbol.terms.items():
        pq = (alpha[0], beta[0])
        if pq not in wm_cache:
            wm_cache[pq] = weyl_monomial_matrix(pq[0], pq[1], L, basis.h)
        W = wm_cache[pq]
        if basis.orientable:
            if m2 % 2:
                raise ValueError("half-integer mode in an orientable assembly")
            m = m2 // 2
        else:
            if (m2 - (alpha[0] - beta[0])) % 2:
                raise ValueError(
                    "assembly rejected a term violating the anti-periodicity parity"
                )
        base = c * basis.h**j
        for l in range(L + 1):
            col_tau = basis.h * (ks + (0.5 * l if not basis.orientable else 0.0)) - offset
            mid = col_tau + 0.25 * m2 * basis.h
            weight = base * mid**a if a else base * np.ones_like(mid)
            for lp in range(L + 1):
                w = W[lp, l]
                if w == 0:
                    continue
                if basis.orientable:
                    kp = ks + m2 // 2
                else:
                    num = m2 + (l - lp)
                    if num % 2:
                        continue  # parity-forbidden level transition
                    kp = ks + num // 2
                sel = (kp >= basis.k_min) & (kp <= basis.k_max)
                if not np.any(sel):
                    continue
                rows = (kp[sel] - basis.k_min) * (L + 1) + lp
                cols = (ks[sel] - basis.k_min) * (L + 1) + l
                np.add.at(M, (rows, cols), weight[sel] * w)
    return OperatorMatrix(M, basis, symbol.fingerprint())


def assemble_saddle(symbol: FormalSymbol, basis: SaddleBasis) -> OperatorMatrix:
    """Matrix of the Weyl quantization of a two-pair polynomial symbol."""
    spec = symbol.spec
    if spec.has_angle or spec.num_pairs != 2:
        raise ValueError("assemble_saddle expects a two-pair symbol")
    M = np.zeros((basis.dim, basis.dim), dtype=complex)
    cache1: dict[tuple[int, int], np.ndarray] = {}
    cache2: dict[tuple[int, int], np.ndarray] = {}
    for (m2, a, alpha, beta, j), c in symbol.terms.items():
        k1 = (alpha[0], beta[0])
        k2 = (alpha[1], beta[1])
        if k1 not in cache1:
            cache1[k1] = weyl_monomial_matrix(k1[0], k1[1], basis.levels1, basis.h)
        if k2 not in cache2:
            cache2[k2] = weyl_monomial_matrix(k2[0], k2[1], basis.levels2, basis.h)
        M += (c * basis.h**j) * np.kron(cache1[k1], cache2[k2])
    return OperatorMatrix(M, basis, symbol.fingerprint())


# --------------------------------------------------------------------------
# direct spectra with truncation-stability control
# --------------------------------------------------------------------------

def direct_spectrum(
    symbol: FormalSymbol,
    basis: CylinderBasis | SaddleBasis,
    window=None,
    *,
    stability_check=True,
    stability_tol=1e-6,
    extra_levels=10,
    extra_k=5,
):
    """Windowed eigenvalues of the assembled operator, spurious ones flagged.

    Solves the dense problem on ``basis`` and, when ``stability_check``
    is set, again on a widened basis; eigenvalues that move more than
    ``stability_tol`` under the widening are flagged as truncation
    artifacts rather than silently dropped.

    Returns
    -------
    accepted : list of (eigenvalue, residual)
    flagged : list of eigenvalue
    spectrum : Spectrum
        Full certified spectrum of the base matrix.
    """
    from .eigensolve import eigenvalues

    if isinstance(basis, CylinderBasis):
        op = assemble_cylinder(symbol, basis)
        wide_basis = basis.widened(extra_k, extra_levels) if stability_check else None
        wide_op = assemble_cylinder(symbol, wide_basis) if stability_check else None
    else:
        op = assemble_saddle(symbol, basis)
        wide_basis = basis.widened(extra_levels) if stability_check else None
        wide_op = assemble_saddle(symbol, wide_basis) if stability_check else None

    spec = eigenvalues(op)
    if window is not None:
        keep = [i for i, z in enumerate(spec.eigenvalues) if window.contains(z)]
    else:
        keep = list(range(len(spec.eigenvalues)))

    if not stability_check:
        return (
            [(spec.eigenvalues[i], spec.residuals[i]) for i in keep],
            [],
            spec,
        )

    wide = eigenvalues(wide_op)
    accepted, flagged = [], []
    for i in keep:
        z = spec.eigenvalues[i]
        if np.min(np.abs(wide.eigenvalues - z)) <= stability_tol:
            accepted.append((z, spec.residuals[i]))
        else:
            flagged.append(z)
    return accepted, flagged, spec
