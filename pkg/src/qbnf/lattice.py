"""Resonance lattices: quantization rules evaluated on a normal form.

A closed-orbit normal form F(tau, zeta; h) yields the lattice

    z_{k,l} = F(h k - S/2pi, (l + 1/2) h / i; h)          (orientable)
    z_{k,l} = F(h (k + l/2) - S/2pi, (l + 1/2) h / i; h)  (non-orientable)

and an equilibrium normal form F(iota1, iota2; h) yields

    z_{k,l} = F((k + 1/2) h, (l + 1/2) h; h).

Lattices are enumerated inside a complex window (an energy interval times
a decay-depth strip); candidate ranges come from the linear part of the
normal form with a safety margin and are then filtered exactly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import NamedTuple

import numpy as np

from .normal_form import NormalFormPoly

__all__ = [
    "Window",
    "LatticeEntry",
    "ResonanceLattice",
    "closed_orbit_lattice",
    "saddle_lattice",
    "homogeneity_check",
    "lattice_rescaling_check",
]


@dataclass(frozen=True)
class Window:
    """Complex acceptance rectangle (E0 - w, E0 + w) - i [0, depth)."""

    center: float
    half_width: float
    depth: float
    im_slack: float = 1e-10

    def __post_init__(self):
        if self.half_width <= 0 or self.depth <= 0:
            raise ValueError("window half_width and depth must be positive")

    def contains(self, z: complex) -> bool:
        return (
            self.center - self.half_width < z.real < self.center + self.half_width
            and -self.depth < z.imag <= self.im_slack
        )

    def inflated(self, delta: float) -> "Window":
        return replace(
            self,
            half_width=self.half_width + delta,
            depth=self.depth + delta,
            im_slack=self.im_slack + delta,
        )


class LatticeEntry(NamedTuple):
    k: int
    l: int
    z: complex


@dataclass
class ResonanceLattice:
    entries: list
    window: Window
    h: float
    provenance: str = ""

    def __len__(self):
        return len(self.entries)

    def values(self) -> np.ndarray:
        return np.array([e.z for e in self.entries], dtype=complex)

    def min_separation(self) -> float:
        zs = self.values()
        if len(zs) < 2:
            return math.inf
        d = np.abs(zs[:, None] - zs[None, :])
        np.fill_diagonal(d, np.inf)
        return float(d.min())


_MARGIN = 1.2  # enumeration safety margin before exact filtering


def closed_orbit_lattice(
    nf: NormalFormPoly, h: float, window: Window, *, l_cap: int | None = None
) -> ResonanceLattice:
    """Windowed closed-orbit lattice with quantum numbers (k, l)."""
    if nf.kind != "closed_orbit":
        raise ValueError("normal form is not of closed-orbit kind")
    if h <= 0:
        raise ValueError("h must be positive")
    offset = nf.action / (2.0 * math.pi)

    f = nf.leading_series(0)
    # tau range from the energy profile, with margin
    lo = _invert_monotone(f, window.center - _MARGIN * window.half_width)
    hi = _invert_monotone(f, window.center + _MARGIN * window.half_width)
    tau_lo, tau_hi = min(lo, hi), max(lo, hi)

    # depth cap on (l + 1/2) h from the decay-rate coefficient
    rate = nf.leading_series(1)
    taus = np.linspace(tau_lo, tau_hi, 16)
    rmin = float(np.min(np.abs(rate(taus)))) if rate.coeffs.any() else 0.0
    if rmin <= 0:
        sigma_cap = window.depth * _MARGIN / h  # degenerate; enumerate generously
    else:
        sigma_cap = window.depth * _MARGIN / rmin
    lmax = max(0, int(math.ceil(sigma_cap / h - 0.5)) + 1)
    if l_cap is not None:
        lmax = min(lmax, l_cap)

    entries = []
    for l in range(lmax + 1):
        zeta = (l + 0.5) * h / 1j
        shift = 0.0 if nf.orientable else 0.5 * l
        k_lo = int(math.floor((tau_lo + offset) / h - shift)) - 1
        k_hi = int(math.ceil((tau_hi + offset) / h - shift)) + 1
        for k in range(k_lo, k_hi + 1):
            tau = h * (k + shift) - offset
            z = nf.evaluate(tau, zeta, h)
            if window.contains(z):
                entries.append(LatticeEntry(k, l, z))
    entries.sort(key=lambda e: (e.k, e.l))
    return ResonanceLattice(entries, window, h, provenance=f"closed_orbit:N={nf.order}")


def saddle_lattice(
    nf: NormalFormPoly, h: float, window: Window, *, k_cap=None, l_cap=None
) -> ResonanceLattice:
    """Windowed saddle lattice; k counts the scaled axis, l the stable one."""
    if nf.kind != "equilibrium":
        raise ValueError("normal form is not of equilibrium kind")
    if h <= 0:
        raise ValueError("h must be positive")
    c10 = nf.coeffs.get((1, 0, 0), 0.0)
    c01 = nf.coeffs.get((0, 1, 0), 0.0)
    if c10 == 0 or c01 == 0:
        raise ValueError("normal form lacks its linear action coefficients")
    kmax = int(math.ceil(_MARGIN * window.depth / (abs(c10) * h))) + 1
    lmax = int(math.ceil(_MARGIN * window.half_width / (abs(c01) * h))) + 1
    if k_cap is not None:
        kmax = min(kmax, k_cap)
    if l_cap is not None:
        lmax = min(lmax, l_cap)
    entries = []
    for k in range(kmax + 1):
        for l in range(lmax + 1):
            z = nf.evaluate((k + 0.5) * h, (l + 0.5) * h, h)
            if window.contains(z):
                entries.append(LatticeEntry(k, l, z))
    entries.sort(key=lambda e: (e.k, e.l))
    return ResonanceLattice(entries, window, h, provenance=f"equilibrium:N={nf.order}")


def _invert_monotone(series, target):
    try:
        val = series.solve(target)
        return float(np.real(val))
    except ValueError:
        # fall back to the linear part when the window leaves the
        # invertible range of the truncated series
        c = series.coeffs
        slope = c[1].real if len(c) > 1 and c[1] != 0 else 1.0
        return float((target - c[0].real) / slope)


# --------------------------------------------------------------------------
# scaling identities
# --------------------------------------------------------------------------

def homogeneity_check(
    nf: NormalFormPoly, mu: float, eps: float, samples: int, *, seed: int = 0
) -> float:
    """Max relative defect of the rescaling identity of the h-layers.

    With g_j(u, v, eps) := p_j(eps u, eps v) eps^j built from the stored
    layer polynomials p_j, the identity g_j(u/mu, v/mu, mu eps) =
    mu^j g_j(u, v, eps) holds exactly for polynomials; the return value
    is the largest relative deviation over random sample points, i.e.
    floating-point rounding only.
    """
    if not (0.25 <= mu <= 4.0):
        raise ValueError("rescaling factor should be of order one")
    rng = np.random.default_rng(seed)
    scale = max(nf.scale(), 1e-300)
    worst = 0.0
    for _ in range(samples):
        u = rng.uniform(-1.0, 1.0)
        v = rng.uniform(0.1, 1.0)
        for j in nf.h_orders():
            lhs = nf.evaluate_layer(j, eps * mu * (u / mu), eps * mu * (v / mu)) * (
                mu * eps
            ) ** j / mu**j
            rhs = nf.evaluate_layer(j, eps * u, eps * v) * eps**j
            denom = max(abs(lhs), abs(rhs), 1e-12 * scale)
            worst = max(worst, abs(lhs - rhs) / denom)
    return worst


def lattice_rescaling_check(
    nf: NormalFormPoly, h: float, eps: float, labels
) -> float:
    """Max relative defect of the rescaled lattice evaluation.

    Evaluating the h-layers at arguments divided by eps with weights
    (h/eps)^j must reproduce the plain evaluation with weights h^j; this
    is the lattice form of the homogeneity identity.
    """
    offset = nf.action / (2.0 * math.pi)
    worst = 0.0
    scale = max(nf.scale(), 1e-300)
    for k, l in labels:
        if nf.kind == "closed_orbit":
            shift = 0.0 if nf.orientable else 0.5 * l
            u = h * (k + shift) - offset
            v = (l + 0.5) * h / 1j
        else:
            u = (k + 0.5) * h
            v = (l + 0.5) * h
        plain = 0j
        rescaled = 0j
        for j in nf.h_orders():
            plain += nf.evaluate_layer(j, u, v) * h**j
            rescaled += (
                nf.evaluate_layer(j, eps * (u / eps), eps * (v / eps))
                * eps**j
                * (h / eps) ** j
            )
        denom = max(abs(plain), abs(rescaled), 1e-12 * scale)
        worst = max(worst, abs(plain - rescaled) / denom)
    return worst
