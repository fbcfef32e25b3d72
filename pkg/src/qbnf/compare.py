"""Matching of predicted lattices against computed spectra.

``match_lattices`` pairs lattice points with eigenvalues by mutual
nearest neighbors inside a radius; ``convergence_sweep`` runs the whole
prediction/direct pipeline over a list of h values and fits the decay
order of the matched error.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .lattice import ResonanceLattice, Window, closed_orbit_lattice, saddle_lattice
from .normal_form import (
    CylinderModel,
    SaddleModel,
    closed_orbit_bnf,
    content_grade,
    content_tau_order,
    cylinder_symbol,
    equilibrium_bnf,
    saddle_symbol,
)
from .quantize import (
    CylinderBasis,
    SaddleBasis,
    complex_scale,
    direct_spectrum,
    metaplectic_substitute,
)
from .symbols import PhaseSpec

__all__ = [
    "MatchedPair",
    "MatchReport",
    "match_lattices",
    "SweepResult",
    "convergence_sweep",
    "cylinder_auto_basis",
    "saddle_auto_basis",
]


class MatchedPair(NamedTuple):
    k: int
    l: int
    predicted: complex
    computed: complex
    error: float


@dataclass
class MatchReport:
    pairs: list
    unmatched_predicted: list
    unmatched_computed: list
    max_err: float
    mean_err: float
    h: float
    order: int | None = None
    radius: float = 0.0

    @property
    def all_matched(self) -> bool:
        return not self.unmatched_predicted

    def max_err_over(self, label_cap: int) -> float:
        errs = [
            p.error for p in self.pairs if abs(p.k) <= label_cap and p.l <= label_cap
        ]
        return max(errs, default=0.0)


def _computed_values(computed) -> np.ndarray:
    vals = getattr(computed, "eigenvalues", computed)
    if len(vals) and isinstance(vals[0], tuple):
        vals = [v[0] for v in vals]
    return np.asarray(vals, dtype=complex)


def match_lattices(
    pred: ResonanceLattice, computed, radius: float | None = None, order=None
) -> MatchReport:
    """Mutual-nearest-neighbor pairing of a lattice with eigenvalues.

    ``computed`` may be a Spectrum, an array of eigenvalues, or the
    accepted list of ``direct_spectrum``.  The default radius is 0.45
    times the minimum separation of the predicted lattice, which keeps
    the pairing injective for simple lattices.
    """
    zs = _computed_values(computed)
    if radius is None:
        sep = pred.min_separation()
        radius = 0.45 * sep if math.isfinite(sep) else math.inf
    pairs, un_pred = [], []
    taken: dict[int, tuple[float, int]] = {}
    if len(zs) == 0:
        return MatchReport(
            [], list(pred.entries), [], 0.0, 0.0, pred.h, order, radius
        )
    for idx, entry in enumerate(pred.entries):
        d = np.abs(zs - entry.z)
        jbest = int(np.argmin(d))
        best = float(d[jbest])
        if best > radius:
            un_pred.append(entry)
            continue
        # mutual check: is this entry the closest lattice point to zs[jbest]?
        dl = [abs(e.z - zs[jbest]) for e in pred.entries]
        if int(np.argmin(dl)) != idx:
            un_pred.append(entry)
            continue
        if jbest in taken and taken[jbest][0] <= best:
            un_pred.append(entry)
            continue
        taken[jbest] = (best, len(pairs))
        pairs.append(MatchedPair(entry.k, entry.l, entry.z, complex(zs[jbest]), best))
    matched_js = set(taken.keys())
    un_comp = [complex(z) for j, z in enumerate(zs) if j not in matched_js]
    errs = [p.error for p in pairs]
    return MatchReport(
        pairs,
        un_pred,
        un_comp,
        max(errs, default=0.0),
        float(np.mean(errs)) if errs else 0.0,
        pred.h,
        order,
        radius,
    )


# --------------------------------------------------------------------------
# basis auto-sizing
# --------------------------------------------------------------------------

def cylinder_auto_basis(model: CylinderModel, window: Window, h, *, pad_k=6, pad_l=8,
                        dim_cap=None) -> CylinderBasis:
    """Fourier range and level count covering a window with headroom."""
    fp0 = model.energy.derivative().coeffs[0].real
    mu0 = model.rate.coeffs[0].real
    offset = model.action / (2.0 * math.pi)
    tau_hw = 1.3 * window.half_width / fp0
    tau0 = model.energy.solve(window.center).real if window.center else 0.0
    k_lo = int(math.floor((tau0 - tau_hw + offset) / h)) - pad_k
    k_hi = int(math.ceil((tau0 + tau_hw + offset) / h)) + pad_k
    levels = int(math.ceil(1.4 * window.depth / (mu0 * h))) + pad_l
    kw = {} if dim_cap is None else {"dim_cap": dim_cap}
    return CylinderBasis(k_lo, k_hi, levels, h, model.action, model.orientable, **kw)


def saddle_auto_basis(model: SaddleModel, window: Window, h, *, pad=8, dim_cap=None) -> SaddleBasis:
    """Per-axis level counts covering a window with headroom."""
    l1 = int(math.ceil(1.4 * window.depth / (model.unstable_rate * h))) + pad
    l2 = int(math.ceil(1.4 * window.half_width / (model.stable_freq * h))) + pad
    kw = {} if dim_cap is None else {"dim_cap": dim_cap}
    return SaddleBasis(l1, l2, h, **kw)


# --------------------------------------------------------------------------
# convergence sweeps
# --------------------------------------------------------------------------

@dataclass
class SweepResult:
    slope: float | None
    errors: dict
    exact: bool
    discarded: list = field(default_factory=list)
    reports: dict = field(default_factory=dict)

    #: below this matched error the fit is meaningless and flagged exact
    EXACT_FLOOR = 1e-11


def convergence_sweep(
    model,
    order: int,
    h_values,
    *,
    window: Window,
    label_cap: int = 3,
    stability_check: bool = True,
    match_window_pad: float = 0.02,
) -> SweepResult:
    """Fit the decay order of the lattice-versus-direct error in h.

    For each h the predicted lattice inside ``window`` is matched against
    the directly computed spectrum (windowed with a small pad so that
    partners of boundary points are not lost); the fitted quantity is
    log(max matched error over quantum numbers up to ``label_cap``)
    against log h.  The largest h is discarded when its fit residual
    exceeds three times the RMS of the others.  Runs whose errors sit at
    rounding level are flagged exact instead of fitted.
    """
    h_values = sorted(h_values, reverse=True)
    if len(h_values) < 3:
        raise ValueError("need at least three h values for a slope fit")
    if isinstance(model, CylinderModel):
        nf, _ = closed_orbit_bnf(model, order)
    else:
        nf, _ = equilibrium_bnf(model, order)

    # the direct route quantizes the full model, whatever the BNF order
    g = content_grade(model)
    if isinstance(model, CylinderModel):
        spec = PhaseSpec.cylinder(
            g, max(g, content_tau_order(model)), model.orientable
        )
        sym = metaplectic_substitute(cylinder_symbol(model, spec))
    else:
        spec = PhaseSpec.saddle(g)
        sym = complex_scale(saddle_symbol(model, spec))

    errors: dict[float, float] = {}
    reports: dict[float, MatchReport] = {}
    for h in h_values:
        if isinstance(model, CylinderModel):
            pred = closed_orbit_lattice(nf, h, window)
            basis = cylinder_auto_basis(model, window, h)
        else:
            pred = saddle_lattice(nf, h, window)
            basis = saddle_auto_basis(model, window, h)
        accepted, _, _ = direct_spectrum(
            sym, basis, window.inflated(match_window_pad),
            stability_check=stability_check,
        )
        rep = match_lattices(pred, accepted, order=order)
        reports[h] = rep
        in_cap = [p for p in rep.pairs if abs(p.k) <= label_cap and p.l <= label_cap]
        if not in_cap:
            raise ArithmeticError(
                f"no lattice point with quantum numbers <= {label_cap} matched at h={h}"
            )
        errors[h] = rep.max_err_over(label_cap)

    if max(errors.values()) < SweepResult.EXACT_FLOOR:
        return SweepResult(None, errors, True, [], reports)

    hs = [h for h in h_values if errors[h] > 0]
    slope, discarded = _fit_slope(hs, [errors[h] for h in hs])
    return SweepResult(slope, errors, False, discarded, reports)


def _fit_slope(hs, errs):
    x = np.log(np.asarray(hs, dtype=float))
    y = np.log(np.asarray(errs, dtype=float))
    coef = np.polyfit(x, y, 1)
    resid = y - np.polyval(coef, x)
    rms = float(np.sqrt(np.mean(resid**2)))
    discarded = []
    # largest h is the first entry after the descending sort
    if len(hs) > 3 and rms > 0 and abs(resid[0]) > 3.0 * rms:
        discarded.append(hs[0])
        coef = np.polyfit(x[1:], y[1:], 1)
    return float(coef[0]), discarded
