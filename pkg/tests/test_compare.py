"""Matching and convergence-order tests."""

import math

import pytest

from qbnf.compare import convergence_sweep, match_lattices
from qbnf.lattice import LatticeEntry, ResonanceLattice, Window
from qbnf.normal_form import SaddleModel
from qbnf.symbols import FormalSymbol, PhaseSpec


def lattice_of(points, h=0.1):
    entries = [LatticeEntry(k, l, z) for (k, l), z in points.items()]
    return ResonanceLattice(entries, Window(0.0, 10.0, 10.0), h)


POINTS = {(0, 0): 0.1 - 0.05j, (1, 0): 0.2 - 0.05j, (0, 1): 0.1 - 0.15j}


def test_match_identical():
    lat = lattice_of(POINTS)
    rep = match_lattices(lat, list(POINTS.values()))
    assert rep.all_matched and not rep.unmatched_computed
    assert rep.max_err == 0.0


def test_match_uniform_shift():
    lat = lattice_of(POINTS)
    shifted = [z + 1e-6 for z in POINTS.values()]
    rep = match_lattices(lat, shifted, radius=1e-3)
    assert rep.all_matched
    assert abs(rep.max_err - 1e-6) < 1e-9
    assert abs(rep.mean_err - 1e-6) < 1e-9


def test_match_spurious_computed():
    lat = lattice_of(POINTS)
    comp = list(POINTS.values()) + [5.0 - 5.0j]
    rep = match_lattices(lat, comp, radius=1e-3)
    assert rep.all_matched
    assert rep.unmatched_computed == [5.0 - 5.0j]


def test_match_missing_computed():
    lat = lattice_of(POINTS)
    comp = [POINTS[(0, 0)], POINTS[(1, 0)]]
    rep = match_lattices(lat, comp, radius=1e-3)
    assert len(rep.pairs) == 2
    assert [(e.k, e.l) for e in rep.unmatched_predicted] == [(0, 1)]


def test_match_default_radius():
    lat = lattice_of(POINTS)
    rep = match_lattices(lat, list(POINTS.values()))
    assert abs(rep.radius - 0.45 * lat.min_separation()) < 1e-12


def test_match_swap_symmetry():
    # swapping roles relabels but pairs the same values
    lat = lattice_of(POINTS)
    comp = [z + 2e-7 for z in POINTS.values()]
    rep = match_lattices(lat, comp, radius=1e-3)
    lat2 = lattice_of({kl: z + 2e-7 for kl, z in POINTS.items()})
    rep2 = match_lattices(lat2, list(POINTS.values()), radius=1e-3)
    key = lambda t: (t[0].real, t[0].imag)
    pairs1 = sorted(((p.predicted, p.computed) for p in rep.pairs), key=key)
    pairs2 = sorted(((p.computed, p.predicted) for p in rep2.pairs), key=key)
    assert all(abs(a - c) < 1e-12 and abs(b - d) < 1e-12
               for (a, b), (c, d) in zip(pairs1, pairs2))


def test_match_deterministic():
    lat = lattice_of(POINTS)
    comp = [z + 1e-8 for z in POINTS.values()]
    r1 = match_lattices(lat, comp, radius=1e-3)
    r2 = match_lattices(lat, comp, radius=1e-3)
    assert [(p.k, p.l, p.computed) for p in r1.pairs] == [
        (p.k, p.l, p.computed) for p in r2.pairs
    ]


def test_sweep_exact_for_quadratic_saddle():
    model = SaddleModel(0.0, 1.0, math.sqrt(2.0))
    res = convergence_sweep(
        model, 2, [0.2, 0.1, 0.05], window=Window(0.0, 0.5, 0.4),
        stability_check=False,
    )
    assert res.exact and res.slope is None


def test_sweep_order_improves_with_n():
    spec = PhaseSpec.saddle(6)
    model = SaddleModel(
        0.0, 1.0, math.sqrt(2.0),
        FormalSymbol.monomial(spec, 0.2, alpha=(2, 2)),
    )
    win = Window(0.0, 0.6, 0.45)
    r2 = convergence_sweep(model, 2, [0.2, 0.1, 0.05], window=win,
                           label_cap=2, stability_check=False)
    r4 = convergence_sweep(model, 4, [0.2, 0.1, 0.05], window=win,
                           label_cap=2, stability_check=False)
    assert r2.slope is not None and r4.slope is not None
    assert r4.slope > r2.slope
    for h in (0.1, 0.05):
        assert r4.errors[h] <= r2.errors[h] * 1.1


def test_sweep_needs_three_h():
    model = SaddleModel(0.0, 1.0, 2.0)
    with pytest.raises(ValueError):
        convergence_sweep(model, 2, [0.1, 0.05], window=Window(0.0, 0.5, 0.5))


def test_sweep_cylinder_cubic_slope():
    # cubic angle-dependent perturbation at order 4: the error decays
    # quadratically in h.  The classical elimination steps act on symbols
    # (not by star conjugation), which leaves a resonant h^2 layer of
    # size about 5e-3 h^2 for this model; the measured fit is therefore
    # pinned at two, approached from just below.
    from qbnf.normal_form import CylinderModel
    from qbnf.symbols import TauSeries

    spec = PhaseSpec.cylinder(8, 8)
    pert = FormalSymbol.monomial(spec, 0.1, m=1, alpha=3) + (
        FormalSymbol.monomial(spec, 0.1, m=-1, beta=3)
    )
    model = CylinderModel(TauSeries([0.0, 1.0]), TauSeries([1.0]), pert)
    res = convergence_sweep(
        model, 4, [0.1, 0.05, 0.025], window=Window(0.0, 0.25, 0.2),
        label_cap=3, stability_check=False,
    )
    assert not res.exact
    assert 1.95 <= res.slope <= 2.15
    # frozen from the direct-solver oracle: errors track 4.7e-3 h^2
    for h, err in res.errors.items():
        assert abs(err / (4.7e-3 * h * h) - 1.0) < 0.15, (h, err)
    hs = sorted(res.errors)
    assert res.errors[hs[0]] < res.errors[hs[-1]]
