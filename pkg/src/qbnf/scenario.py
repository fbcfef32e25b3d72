"""Scenario configuration, batch orchestration and artifact emission.

A scenario is a JSON document (schema_version 1) with three blocks:

``model``
    kind: "cylinder" | "saddle".  Cylinder models carry orientable,
    action, energy_coeffs (f), rate_coeffs (mu) and a perturbation term
    list with entries {m, a, alpha, beta, j, re, im}.  Saddle models
    carry energy0, lambda_unstable, lambda_stable and a higher_terms list
    with entries {alpha, beta, j, re, im}.

``compute``
    order (normal-form truncation N), optional tau_order, h_values
    (positive, descending), window {half_width, depth}, optional basis
    overrides {k_min, k_max, levels} or {levels1, levels2}, flags
    stability_check / sweep / dump_matrices (debug dump of the assembled
    operator, column-major complex pairs), optional match_radius and
    label_cap.

``output``
    directory, formats, plot_data flag.

Artifacts are deterministic: CSV numbers are printed with 17 significant
digits, JSON keys are sorted, reruns are bit-identical.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .compare import (
    MatchReport,
    convergence_sweep,
    cylinder_auto_basis,
    match_lattices,
    saddle_auto_basis,
)
from .eigensolve import EigensolveError
from .lattice import (
    ResonanceLattice,
    Window,
    closed_orbit_lattice,
    saddle_lattice,
)
from .normal_form import (
    CylinderModel,
    ModelValidationError,
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
    DimensionCapError,
    SaddleBasis,
    assemble_cylinder,
    assemble_saddle,
    complex_scale,
    direct_spectrum,
    metaplectic_substitute,
)
from .symbols import FormalSymbol, PhaseSpec, TauSeries

__all__ = [
    "ConfigError",
    "ScenarioConfig",
    "ScenarioNumericError",
    "load_config",
    "bundled_scenarios",
    "run_scenario",
    "emit_plot_data",
    "dump_matrix",
    "assembled_operator",
    "compute_normal_form",
    "predicted_lattice",
    "computed_spectrum",
    "FLOAT_FMT",
]

SCHEMA_VERSION = 1

#: fixed CSV float formatting, 17 significant digits
FLOAT_FMT = ".17e"


class ConfigError(ValueError):
    """Configuration file is malformed or violates a model invariant."""


def _fmt(x: float) -> str:
    return format(float(x), FLOAT_FMT)


# --------------------------------------------------------------------------
# configuration
# --------------------------------------------------------------------------

@dataclass
class ScenarioConfig:
    raw: dict

    @property
    def kind(self) -> str:
        return self.raw["model"]["kind"]

    @property
    def compute(self) -> dict:
        return self.raw["compute"]

    @property
    def output(self) -> dict:
        return self.raw.get("output", {})

    @property
    def h_values(self):
        return list(self.compute["h_values"])

    @property
    def order(self) -> int:
        return int(self.compute["order"])

    def window(self) -> Window:
        w = self.compute["window"]
        center = self.raw["model"].get("energy0", None)
        if center is None and self.kind == "cylinder":
            center = float(np.real(self.model().energy.coeffs[0]))
        return Window(float(center or 0.0), float(w["half_width"]), float(w["depth"]))

    def model(self):
        return _build_model(self.raw["model"])

    def canonical(self) -> dict:
        """Canonical plain-dict form; load(canonical) is the identity."""
        return json.loads(json.dumps(self.raw, sort_keys=True))

    def basis_for(self, h: float):
        b = self.compute.get("basis")
        model = self.model()
        if b is None:
            if self.kind == "cylinder":
                return cylinder_auto_basis(model, self.window(), h)
            return saddle_auto_basis(model, self.window(), h)
        try:
            if self.kind == "cylinder":
                return CylinderBasis(
                    int(b["k_min"]), int(b["k_max"]), int(b["levels"]), h,
                    model.action, model.orientable,
                )
            return SaddleBasis(int(b["levels1"]), int(b["levels2"]), h)
        except KeyError as exc:
            raise ConfigError(f"basis block is missing field {exc}") from exc


def _build_tau_series(coeffs, what) -> TauSeries:
    if not isinstance(coeffs, list) or not coeffs:
        raise ConfigError(f"{what} must be a nonempty list of numbers")
    return TauSeries([float(c) for c in coeffs])


def _build_terms(spec: PhaseSpec, items, what) -> FormalSymbol | None:
    if not items:
        return None
    terms = {}
    for it in items:
        try:
            m = it.get("m", 0)
            a = int(it.get("a", 0))
            alpha = tuple(int(v) for v in it["alpha"])
            beta = tuple(int(v) for v in it["beta"])
            j = int(it.get("j", 0))
            coef = complex(float(it.get("re", 0.0)), float(it.get("im", 0.0)))
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"malformed {what} entry {it!r}: {exc}") from exc
        m2 = 2 * m
        if abs(m2 - round(m2)) > 1e-12:
            raise ConfigError(f"{what} Fourier mode must be integer or half-integer")
        key = (int(round(m2)), a, alpha, beta, j)
        try:
            spec.validate_key(key)
        except ValueError as exc:
            raise ConfigError(f"invalid {what} entry {it!r}: {exc}") from exc
        terms[key] = terms.get(key, 0.0) + coef
    return FormalSymbol(spec, terms)


def _build_model(m: dict):
    kind = m.get("kind")
    if kind == "cylinder":
        orientable = bool(m.get("orientable", True))
        energy = _build_tau_series(m["energy_coeffs"], "energy_coeffs")
        rate = _build_tau_series(m["rate_coeffs"], "rate_coeffs")
        K = max(8, energy.order, rate.order)
        spec = PhaseSpec.cylinder(12, K, orientable)
        pert = _build_terms(spec, m.get("perturbation", []), "perturbation")
        try:
            return CylinderModel(
                energy, rate, pert, orientable,
                float(m.get("action", 0.0)), m.get("energy0"),
            )
        except ModelValidationError as exc:
            raise ConfigError(str(exc)) from exc
    if kind == "saddle":
        spec = PhaseSpec.saddle(12)
        higher = _build_terms(spec, m.get("higher_terms", []), "higher_terms")
        try:
            return SaddleModel(
                float(m.get("energy0", 0.0)),
                float(m["lambda_unstable"]),
                float(m["lambda_stable"]),
                higher,
            )
        except ModelValidationError as exc:
            raise ConfigError(str(exc)) from exc
    raise ConfigError(f"model.kind must be 'cylinder' or 'saddle', got {kind!r}")


def _validate(raw: dict) -> None:
    if not isinstance(raw, dict):
        raise ConfigError("configuration root must be an object")
    if raw.get("schema_version") != SCHEMA_VERSION:
        raise ConfigError(
            f"schema_version must be {SCHEMA_VERSION}, got {raw.get('schema_version')!r}"
        )
    for block in ("model", "compute"):
        if block not in raw:
            raise ConfigError(f"missing required block {block!r}")
    comp = raw["compute"]
    if "order" not in comp or int(comp["order"]) < 2:
        raise ConfigError("compute.order must be an integer >= 2")
    hs = comp.get("h_values")
    if not hs or any(h <= 0 for h in hs):
        raise ConfigError("compute.h_values must be positive")
    if list(hs) != sorted(hs, reverse=True):
        raise ConfigError("compute.h_values must be in descending order")
    w = comp.get("window")
    if not w or w.get("half_width", 0) <= 0 or w.get("depth", 0) <= 0:
        raise ConfigError("compute.window needs positive half_width and depth")
    _build_model(raw["model"])  # raises ConfigError with the violated invariant


def load_config(source) -> ScenarioConfig:
    """Load a scenario from a path, a bundled name, or a dict."""
    if isinstance(source, dict):
        raw = source
    else:
        path = Path(source)
        if not path.exists():
            bundled = bundled_scenarios()
            if str(source) in bundled:
                path = bundled[str(source)]
            else:
                raise ConfigError(f"no such config file or bundled scenario: {source}")
        try:
            raw = json.loads(path.read_text())
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config is not valid JSON: {exc}") from exc
    _validate(raw)
    return ScenarioConfig(raw)


def bundled_scenarios() -> dict:
    """Names and paths of the scenario files shipped with the package."""
    root = Path(__file__).parent / "scenarios"
    return {p.stem: p for p in sorted(root.glob("*.json"))}


# --------------------------------------------------------------------------
# artifact writers
# --------------------------------------------------------------------------

def _write_lattice_csv(path: Path, lat: ResonanceLattice) -> None:
    lines = ["k,l,re_z,im_z"]
    for e in lat.entries:
        lines.append(f"{e.k},{e.l},{_fmt(e.z.real)},{_fmt(e.z.imag)}")
    path.write_text("\n".join(lines) + "\n")


def _write_spectrum_csv(path: Path, accepted) -> None:
    lines = ["re_z,im_z,residual"]
    for z, res in accepted:
        lines.append(f"{_fmt(z.real)},{_fmt(z.imag)},{_fmt(res)}")
    path.write_text("\n".join(lines) + "\n")


def _write_match_csv(path: Path, rep: MatchReport) -> None:
    lines = ["k,l,re_pred,im_pred,re_comp,im_comp,abs_err"]
    for p in rep.pairs:
        lines.append(
            ",".join(
                [str(p.k), str(p.l), _fmt(p.predicted.real), _fmt(p.predicted.imag),
                 _fmt(p.computed.real), _fmt(p.computed.imag), _fmt(p.error)]
            )
        )
    path.write_text("\n".join(lines) + "\n")


def _match_report_dict(rep: MatchReport) -> dict:
    return {
        "h": rep.h,
        "order": rep.order,
        "radius": rep.radius,
        "max_err": rep.max_err,
        "mean_err": rep.mean_err,
        "num_matched": len(rep.pairs),
        "pairs": [
            {"k": p.k, "l": p.l,
             "re_pred": p.predicted.real, "im_pred": p.predicted.imag,
             "re_comp": p.computed.real, "im_comp": p.computed.imag,
             "abs_err": p.error}
            for p in rep.pairs
        ],
        "unmatched_predicted": [
            {"k": e.k, "l": e.l, "re": e.z.real, "im": e.z.imag}
            for e in rep.unmatched_predicted
        ],
        "unmatched_computed": [
            {"re": z.real, "im": z.imag} for z in rep.unmatched_computed
        ],
    }


def _normal_form_dict(nf) -> dict:
    return {
        "kind": nf.kind,
        "order": nf.order,
        "action": nf.action,
        "energy0": nf.energy0,
        "orientable": nf.orientable,
        "coefficients": [
            {"indices": list(k), "re": c.real, "im": c.imag}
            for k, c in sorted(nf.coeffs.items())
        ],
    }


def _dump_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, sort_keys=True, indent=1) + "\n")


def dump_matrix(path: Path, op) -> None:
    """Debug dump of an assembled operator: column-major complex pairs.

    The file holds the dimension as a first line, then one line per
    entry in column-major order with the real and imaginary parts in the
    fixed CSV float format.
    """
    M = np.asarray(getattr(op, "matrix", op))
    lines = [str(M.shape[0])]
    for c in M.flatten(order="F"):
        lines.append(f"{_fmt(c.real)},{_fmt(c.imag)}")
    Path(path).write_text("\n".join(lines) + "\n")


def emit_plot_data(path: Path, lattice: ResonanceLattice | None, rep: MatchReport | None) -> None:
    """Two-series scatter file: re,im,k,l,source,pair columns.

    Predicted and computed points carry the source tag; matched pairs
    share a pair id so any plotting tool can draw connecting segments.
    """
    lines = ["re,im,k,l,source,pair"]
    pair_of_pred = {}
    if rep is not None:
        for i, p in enumerate(rep.pairs):
            pair_of_pred[(p.k, p.l)] = i
    if lattice is not None:
        for e in lattice.entries:
            pid = pair_of_pred.get((e.k, e.l), "")
            lines.append(f"{_fmt(e.z.real)},{_fmt(e.z.imag)},{e.k},{e.l},predicted,{pid}")
    if rep is not None:
        for i, p in enumerate(rep.pairs):
            lines.append(
                f"{_fmt(p.computed.real)},{_fmt(p.computed.imag)},{p.k},{p.l},computed,{i}"
            )
        for z in rep.unmatched_computed:
            lines.append(f"{_fmt(z.real)},{_fmt(z.imag)},,,computed,")
    Path(path).write_text("\n".join(lines) + "\n")


# --------------------------------------------------------------------------
# pipeline stages
# --------------------------------------------------------------------------

def _h_tag(h: float) -> str:
    return format(h, ".6g").replace(".", "p").replace("-", "m")


def compute_normal_form(config: ScenarioConfig):
    model = config.model()
    tau_order = config.compute.get("tau_order")
    if config.kind == "cylinder":
        return closed_orbit_bnf(model, config.order, tau_order)
    return equilibrium_bnf(model, config.order)


def predicted_lattice(config: ScenarioConfig, nf, h: float) -> ResonanceLattice:
    if nf.kind == "closed_orbit":
        return closed_orbit_lattice(nf, h, config.window(),
                                    l_cap=config.compute.get("l_cap"))
    return saddle_lattice(nf, h, config.window(),
                          k_cap=config.compute.get("k_cap"),
                          l_cap=config.compute.get("l_cap"))


def _model_operator_symbol(config: ScenarioConfig):
    model = config.model()
    g = content_grade(model)  # the direct route keeps every model term
    if config.kind == "cylinder":
        spec = PhaseSpec.cylinder(
            g, max(g, content_tau_order(model)), model.orientable
        )
        return metaplectic_substitute(cylinder_symbol(model, spec))
    return complex_scale(saddle_symbol(model, PhaseSpec.saddle(g)))


def assembled_operator(config: ScenarioConfig, h: float):
    """The model operator on the configured basis (debugging aid)."""
    sym = _model_operator_symbol(config)
    basis = config.basis_for(h)
    if config.kind == "cylinder":
        return assemble_cylinder(sym, basis)
    return assemble_saddle(sym, basis)


def computed_spectrum(config: ScenarioConfig, h: float, window_pad=0.02):
    sym = _model_operator_symbol(config)
    basis = config.basis_for(h)
    return direct_spectrum(
        sym, basis, config.window().inflated(window_pad),
        stability_check=bool(config.compute.get("stability_check", True)),
    )


def run_scenario(config: ScenarioConfig, out_dir) -> dict:
    """Full pipeline: normal form, lattices, direct spectra, matching, sweep.

    Writes the artifact set under ``out_dir`` and returns the run report
    dictionary.  Any numeric failure aborts the scenario; the report is
    still written, with the finished artifacts listed and the status
    marked incomplete.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    report: dict = {"status": "ok", "artifacts": [], "errors": []}
    t_start = time.time()

    _dump_json(out / "scenario_echo.json", config.canonical())
    report["artifacts"].append("scenario_echo.json")

    try:
        nf, chain = compute_normal_form(config)
        _dump_json(out / "normal_form.json", _normal_form_dict(nf))
        report["artifacts"].append("normal_form.json")

        match_radius = config.compute.get("match_radius")
        for h in config.h_values:
            tag = _h_tag(h)
            lat = predicted_lattice(config, nf, h)
            _write_lattice_csv(out / f"lattice_h{tag}.csv", lat)
            report["artifacts"].append(f"lattice_h{tag}.csv")

            if config.compute.get("direct", True):
                accepted, flagged, _ = computed_spectrum(config, h)
                _write_spectrum_csv(out / f"spectrum_h{tag}.csv", accepted)
                report["artifacts"].append(f"spectrum_h{tag}.csv")
                if config.compute.get("dump_matrices", False):
                    dump_matrix(out / f"matrix_h{tag}.csv",
                                assembled_operator(config, h))
                    report["artifacts"].append(f"matrix_h{tag}.csv")
                rep = match_lattices(lat, accepted, radius=match_radius,
                                     order=config.order)
                md = _match_report_dict(rep)
                md["flagged_unstable"] = [[z.real, z.imag] for z in flagged]
                _dump_json(out / f"match_h{tag}.json", md)
                _write_match_csv(out / f"match_h{tag}.csv", rep)
                report["artifacts"] += [f"match_h{tag}.json", f"match_h{tag}.csv"]
                if config.output.get("plot_data", True):
                    emit_plot_data(out / f"plot_h{tag}.csv", lat, rep)
                    report["artifacts"].append(f"plot_h{tag}.csv")

        if config.compute.get("sweep", False) and len(config.h_values) >= 3:
            res = convergence_sweep(
                config.model(), config.order, config.h_values,
                window=config.window(),
                label_cap=int(config.compute.get("label_cap", 3)),
                stability_check=bool(config.compute.get("stability_check", True)),
            )
            _dump_json(out / "convergence.json", {
                "slope": res.slope,
                "exact": res.exact,
                "errors": {format(h, ".6g"): e for h, e in res.errors.items()},
                "discarded_h": res.discarded,
            })
            report["artifacts"].append("convergence.json")
    except (EigensolveError, DimensionCapError, ArithmeticError) as exc:
        report["status"] = "incomplete"
        report["errors"].append({"stage": "numeric", "message": str(exc)})
    report["runtime_s"] = round(time.time() - t_start, 3)
    _dump_json(out / "run_report.json", report)
    if report["status"] != "ok":
        raise ScenarioNumericError(report["errors"][0]["message"])
    return report


class ScenarioNumericError(ArithmeticError):
    """Numeric failure while running a scenario; partial artifacts on disk."""
