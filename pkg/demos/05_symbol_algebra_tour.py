#!/usr/bin/env python3
"""A short tour of the truncated Weyl-symbol algebra.

Shows the bracket and star-product conventions on small examples, the
transport solve that drives the normal form, and the homogeneity identity
of the computed coefficients.
"""

import numpy as np

from qbnf import (
    TauSeries,
    homogeneity_check,
    homological_solve,
    lie_transform,
    moyal_star,
    poisson_bracket,
)
from qbnf.normal_form import SaddleModel, equilibrium_bnf
from qbnf.symbols import FormalSymbol, PhaseSpec


def show(label, sym):
    parts = []
    for (m2, a, alpha, beta, j), c in sorted(sym.terms.items()):
        factors = []
        if m2:
            factors.append(f"e^{{{m2 / 2:+g} i t}}")
        if a:
            factors.append(f"tau^{a}")
        for name, exps in (("x", alpha), ("xi", beta)):
            for i, e in enumerate(exps):
                if e:
                    suffix = str(i + 1) if len(exps) > 1 else ""
                    factors.append(f"{name}{suffix}^{e}")
        if j:
            factors.append(f"h^{j}")
        parts.append(f"({c:+.4g}) " + " ".join(factors or ["1"]))
    print(f"  {label} = " + (" + ".join(parts) if parts else "0"))


spec = PhaseSpec.cylinder(8, 8)
x = FormalSymbol.monomial(spec, 1.0, alpha=1)
xi = FormalSymbol.monomial(spec, 1.0, beta=1)
tau = FormalSymbol.monomial(spec, 1.0, a=1)
xxi = FormalSymbol.monomial(spec, 1.0, alpha=1, beta=1)

print("bracket conventions:")
show("{xi, x}", poisson_bracket(xi, x))
show("{x xi, x}", poisson_bracket(xxi, x))

print("\nstar product (Weyl composition):")
show("x * xi", moyal_star(x, xi))
show("x * xi - xi * x", moyal_star(x, xi) - moyal_star(xi, x))
show("tau * e^{it}", moyal_star(tau, FormalSymbol.monomial(spec, 1.0, m=1)))

print("\ntransport solve (one elimination step):")
v = FormalSymbol.monomial(spec, 1.0, m=1, alpha=3)
u, res = homological_solve(v, TauSeries([0.0, 1.0], 8), TauSeries([1.0], 8))
show("v", v)
show("u", u)

print("\nscaling flow of G = 0.3 x xi on x (exponential contraction):")
show("x o exp(H_G)", lie_transform(x, xxi * 0.3))

print("\nhomogeneity of a computed normal form:")
spec2 = PhaseSpec.saddle(6)
model = SaddleModel(0.0, 1.0, np.sqrt(2.0),
                    FormalSymbol.monomial(spec2, 0.2, alpha=(2, 2)))
nf, _ = equilibrium_bnf(model, 6)
defect = homogeneity_check(nf, mu=1.3, eps=0.05, samples=25)
print(f"  rescaling identity defect over 25 samples: {defect:.2e}")
