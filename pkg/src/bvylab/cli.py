"""Declarative scenario runner.

`bvylab run config.json` executes one scenario and writes a JSON report plus
CSV/SVG artefacts into the configured output directory; `plot` re-renders a
curve CSV; `catalogue` lists the space and function descriptors the config
schema accepts.

Config document:

    {
      "scenario": "golden-1d | verify-bvy-euclidean | verify-bounds |
                   verify-optimality | verify-asymptotic | diagnose-space",
      "seed": 1234,
      "output_dir": "out/golden",
      "space":    {"kind": "...", "window": {"lo": [...], "hi": [...]}, ...},
      "function": {"formula_id": "...", "params": {...}, "support_box": {...}},
      "bvy":      {"p": 2.0, "lambdas": [...], "n_pairs": ..., "estimator": "auto", ...},
      "tolerances": {...},            # scenario specific, all have defaults
      "optimality": {"n_bars": [...]} # verify-optimality only
      "diagnostics": {...}            # budgets for diagnose/verify-bounds
    }

Exit codes: 0 all assertions pass, 1 an assertion failed, 2 config or
capability error.  The WORKERS environment variable sets parallelism and by
contract never changes any emitted byte; wall-clock time is printed to stdout
and deliberately kept out of the report files.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import math
import sys
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import diagnostics as diag
from .estimator import BVYConfig, K_norm, LimitFit, RescaledCurve, bound_check, grad_norm, k_const, k_const_mc, limit_fit, rescaled_curve
from .functions import TestFunction, function_from_json, function_to_json
from .plotting import CurveCSVError, emit_plot
from .spaces import CapabilityError, EuclideanBox, Space, SpaceError, space_from_json, space_to_json

EXIT_PASS = 0
EXIT_FAIL = 1
EXIT_CONFIG = 2

_SCENARIOS = (
    "golden-1d",
    "verify-bvy-euclidean",
    "verify-bounds",
    "verify-optimality",
    "verify-asymptotic",
    "diagnose-space",
)


class ConfigError(ValueError):
    pass


@dataclass
class ExperimentConfig:
    scenario: str
    seed: int
    output_dir: Path
    space: Space
    function: TestFunction | None
    bvy: BVYConfig | None
    tolerances: dict
    optimality: dict
    diagnostics: dict
    raw: dict


def load_config(path: str | Path) -> ExperimentConfig:
    try:
        raw = json.loads(Path(path).read_text())
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from exc
    try:
        scenario = raw["scenario"]
        if scenario not in _SCENARIOS:
            raise ConfigError(f"unknown scenario {scenario!r}; expected one of {_SCENARIOS}")
        if "seed" not in raw:
            raise ConfigError("seed is mandatory")
        seed = int(raw["seed"])
        space = space_from_json(raw["space"])
        function = None
        if raw.get("function") is not None:
            function = function_from_json(space, raw["function"])
        bvy = None
        if raw.get("bvy") is not None:
            bvy_doc = dict(raw["bvy"])
            bvy_doc.setdefault("seed", seed)
            bvy_doc["lambdas"] = tuple(bvy_doc["lambdas"])
            bvy = BVYConfig(**bvy_doc)
        out_dir = Path(raw.get("output_dir", "out"))
    except ConfigError:
        raise
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"malformed config: {exc}") from exc
    if scenario != "diagnose-space" and function is None:
        raise ConfigError(f"scenario {scenario!r} needs a function descriptor")
    if scenario != "diagnose-space" and bvy is None:
        raise ConfigError(f"scenario {scenario!r} needs a bvy block")
    return ExperimentConfig(
        scenario=scenario,
        seed=seed,
        output_dir=out_dir,
        space=space,
        function=function,
        bvy=bvy,
        tolerances=dict(raw.get("tolerances") or {}),
        optimality=dict(raw.get("optimality") or {}),
        diagnostics=dict(raw.get("diagnostics") or {}),
        raw=raw,
    )


# ---------------------------------------------------------------------------
# assertions and report assembly
# ---------------------------------------------------------------------------


def _a_close(name, value, target, rel_tol):
    scale = max(abs(target), 1e-300)
    margin = rel_tol * scale - abs(value - target)
    return {
        "name": name,
        "kind": "relative",
        "lhs": float(value),
        "rhs": float(target),
        "rel_tol": float(rel_tol),
        "margin": float(margin),
        "passed": bool(abs(value - target) <= rel_tol * scale),
    }


def _a_within_se(name, value, target, stderr, k=3.0):
    margin = k * stderr - abs(value - target)
    return {
        "name": name,
        "kind": "within_se",
        "lhs": float(value),
        "rhs": float(target),
        "stderr": float(stderr),
        "k_se": float(k),
        "margin": float(margin),
        "passed": bool(abs(value - target) <= k * stderr),
    }


def _a_le(name, lhs, rhs):
    return {
        "name": name,
        "kind": "le",
        "lhs": float(lhs),
        "rhs": float(rhs),
        "margin": float(rhs - lhs),
        "passed": bool(lhs <= rhs),
    }


def _a_true(name, flag, detail=""):
    return {"name": name, "kind": "flag", "lhs": bool(flag), "rhs": True,
            "detail": detail, "margin": 0.0 if flag else -1.0, "passed": bool(flag)}


def _curve_doc(curve: RescaledCurve) -> dict:
    return {
        "p": curve.p,
        "n_bar": curve.n_bar,
        "rows": [
            {
                "lambda": r.lam,
                "M_hat": r.estimate.value,
                "M_stderr": r.estimate.stderr,
                "rescaled": r.rescaled,
                "estimator": r.estimator,
                "n_outer": r.n_outer,
                "n_inner": r.n_inner,
                "seed": r.estimate.seed,
            }
            for r in curve.rows
        ],
    }


def _fit_doc(fit: LimitFit) -> dict:
    return {k: (None if isinstance(v, float) and math.isnan(v) else v)
            for k, v in dataclasses.asdict(fit).items()}


def _write_curve(outputs, out_dir: Path, name: str, curve: RescaledCurve):
    csv_path = out_dir / f"{name}.csv"
    csv_path.write_text(curve.to_csv())
    svg_path = out_dir / f"{name}.svg"
    emit_plot(csv_path, svg_path)
    outputs.extend([csv_path.name, svg_path.name])


# ---------------------------------------------------------------------------
# scenarios
# ---------------------------------------------------------------------------


def _golden_1d(cfg: ExperimentConfig, out_dir: Path):
    """Exact strip-formula regression for the cutoff-free 1-D linear function."""
    space, u, bvy = cfg.space, cfg.function, cfg.bvy
    tol = cfg.tolerances.get("limit_rel", 0.02)
    slope = float(np.asarray(u.params().get("direction", [1.0]))[0])
    n_bar = bvy.n_bar if bvy.n_bar is not None else space.hom_dim
    curve = rescaled_curve(space, u, bvy)
    fit = limit_fit(curve)
    mw = space.window_mass().value

    assertions = []
    oracle_rows = []
    for row in curve.rows:
        delta = (abs(slope) / row.lam) ** (bvy.p / n_bar)
        delta = min(delta, mw)
        exact = 2.0 * delta * mw - delta * delta
        oracle_rows.append({"lambda": row.lam, "exact": exact})
        assertions.append(
            _a_within_se(f"rung lambda={row.lam:g} matches the strip formula",
                         row.estimate.value, exact, row.estimate.stderr)
        )
    target = 2.0 * abs(slope) ** bvy.p
    assertions.append(_a_close("fitted limit matches the closed form", fit.limit, target, tol))

    outputs = []
    _write_curve(outputs, out_dir, "curve", curve)
    quantities = {
        "curve": _curve_doc(curve),
        "fit": _fit_doc(fit),
        "oracle": oracle_rows,
        "limit_target": target,
    }
    return quantities, assertions, outputs


def _verify_bvy_euclidean(cfg: ExperimentConfig, out_dir: Path):
    """Fitted limit against the spherical-constant form of the asymptotic formula."""
    space, u, bvy = cfg.space, cfg.function, cfg.bvy
    tol = cfg.tolerances.get("limit_rel", 0.05)
    n = int(space.hom_dim)
    k = k_const(bvy.p, n)
    k_mc = k_const_mc(bvy.p, n, seed=cfg.seed)
    gn = grad_norm(space, u, bvy.p, bvy)
    reference = k / n * gn.lip_p.value
    curve = rescaled_curve(space, u, bvy)
    fit = limit_fit(curve)

    assertions = [
        _a_close("spherical constant matches its MC oracle", k, k_mc, 0.005),
        _a_close("fitted limit matches k/N * grad-energy", fit.limit, reference, tol),
    ]
    outputs = []
    _write_curve(outputs, out_dir, "curve", curve)
    quantities = {
        "k_const": k,
        "k_const_mc": k_mc,
        "grad_norm_p": gn.lip_p.value,
        "grad_norm_p_stderr": gn.lip_p.stderr,
        "reference_limit": reference,
        "curve": _curve_doc(curve),
        "fit": _fit_doc(fit),
    }
    return quantities, assertions, outputs


def _diagnostics_bundle(cfg: ExperimentConfig):
    space = cfg.space
    d = cfg.diagnostics
    beta = diag.estimate_beta(
        space,
        n_points=int(d.get("n_points", 256)),
        r_ladder=d.get("r_ladder"),
        seed=cfg.seed,
    )
    density = diag.estimate_density_bounds(
        space,
        N=float(d.get("density_N", space.hom_dim)),
        n_points=int(d.get("n_density_points", 128)),
        r_ladder=d.get("density_ladder"),
        seed=cfg.seed,
    )
    return beta, density


def _verify_bounds(cfg: ExperimentConfig, out_dir: Path):
    """Two-sided sandwich with diagnostics-derived density bounds."""
    space, u, bvy = cfg.space, cfg.function, cfg.bvy
    beta, density = _diagnostics_bundle(cfg)
    sandwich = bound_check(space, u, bvy, a_hat=density.a_hat, b_hat=density.b_hat)
    assertions = [
        _a_le("lower bound below the fitted limit", sandwich.lower, sandwich.limit),
        _a_le("fitted limit below the upper bound", sandwich.limit, sandwich.upper),
    ]
    outputs = []
    _write_curve(outputs, out_dir, "curve", sandwich.curve)
    quantities = {
        "beta_hat": beta.beta_hat,
        "dimension_hat": beta.dimension_hat,
        "a_hat": density.a_hat,
        "b_hat": density.b_hat,
        "C1": sandwich.c_lower,
        "C2": sandwich.c_upper,
        "lower": sandwich.lower,
        "upper": sandwich.upper,
        "limit": sandwich.limit,
        "lip_p_integral": sandwich.lip_p,
        "lip_ratio_integral": sandwich.lip_ratio,
        "fit": _fit_doc(sandwich.fit),
        "curve": _curve_doc(sandwich.curve),
    }
    return quantities, assertions, outputs


def _verify_optimality(cfg: ExperimentConfig, out_dir: Path):
    """Log-log decay/growth rates when the set exponent is detuned."""
    space, u, bvy = cfg.space, cfg.function, cfg.bvy
    n_bars = cfg.optimality.get("n_bars")
    if not n_bars:
        raise ConfigError("verify-optimality needs optimality.n_bars")
    slope_tol = float(cfg.optimality.get("slope_tol", 0.1))
    N = float(space.hom_dim)
    assertions, outputs, runs = [], [], []
    for nb in n_bars:
        nb = float(nb)
        sub = dataclasses.replace(bvy, n_bar=nb)
        curve = rescaled_curve(space, u, sub)
        fit = limit_fit(curve)
        expected = bvy.p * (1.0 - N / nb)
        tag = f"nbar_{nb:g}".replace(".", "_")
        _write_curve(outputs, out_dir, f"curve_{tag}", curve)
        runs.append({"n_bar": nb, "expected_slope": expected,
                     "curve": _curve_doc(curve), "fit": _fit_doc(fit)})
        assertions.append(
            _a_close(f"slope at detuned exponent {nb:g} matches the rate law",
                     fit.slope, expected, rel_tol=0.0) | {
                "kind": "absolute",
                "abs_tol": slope_tol,
                "margin": slope_tol - abs(fit.slope - expected),
                "passed": bool(abs(fit.slope - expected) <= slope_tol),
            }
        )
        if nb != N:
            direction = "diverges" if nb > N else "decays"
            ok = fit.slope > 0 if nb > N else fit.slope < 0
            assertions.append(_a_true(f"rescaled curve {direction} for exponent {nb:g}", ok,
                                      detail=f"slope={fit.slope:.4f}"))
    return {"runs": runs, "N": N}, assertions, outputs


def _verify_asymptotic(cfg: ExperimentConfig, out_dir: Path):
    """Fitted limit against the tangent-space seminorm."""
    space, u, bvy = cfg.space, cfg.function, cfg.bvy
    tol = cfg.tolerances.get("limit_rel", 0.05)
    k_tol = cfg.tolerances.get("k_norm_rel")
    k_target = cfg.tolerances.get("k_norm_target")
    kn = K_norm(space, u, bvy.p, bvy)
    curve = rescaled_curve(space, u, bvy)
    fit = limit_fit(curve)
    assertions = [_a_close("fitted limit matches the tangent seminorm", fit.limit, kn.value, tol)]
    if k_target is not None:
        assertions.append(
            _a_close("tangent seminorm matches its closed form", kn.value, float(k_target),
                     float(k_tol if k_tol is not None else 0.02))
        )
    quantities = {
        "K_norm": kn.value,
        "K_norm_stderr": kn.stderr,
        "curve": _curve_doc(curve),
        "fit": _fit_doc(fit),
    }
    if isinstance(space, EuclideanBox):
        n = int(space.hom_dim)
        gate = k_const(bvy.p, n) / n * grad_norm(space, u, bvy.p, bvy).lip_p.value
        quantities["euclidean_gate"] = gate
        assertions.append(_a_close("tangent seminorm consistent with k/N * grad-energy",
                                   kn.value, gate, 0.02))
    outputs = []
    _write_curve(outputs, out_dir, "curve", curve)
    return quantities, assertions, outputs


def _diagnose_space(cfg: ExperimentConfig, out_dir: Path):
    """Doubling constant, dimension, density bounds, volume lower bound."""
    space = cfg.space
    d = cfg.diagnostics
    beta, density = _diagnostics_bundle(cfg)
    volume = diag.check_volume_lower(
        space,
        beta=beta.beta_hat,
        n_trials=int(d.get("n_volume_trials", 10_000)),
        seed=cfg.seed,
        r0_range=d.get("r0_range"),
    )
    assertions = [_a_true("volume lower bound holds on sampled tuples", volume.passed,
                          detail=f"min_slack={volume.min_slack:.4g}")]
    if d.get("expected_dimension") is not None:
        expected = float(d["expected_dimension"])
        dim_tol = float(d.get("dim_tol", 0.1))
        assertions.append(
            {
                "name": "doubling dimension near its nominal value",
                "kind": "absolute",
                "lhs": beta.dimension_hat,
                "rhs": expected,
                "abs_tol": dim_tol,
                "margin": dim_tol - abs(beta.dimension_hat - expected),
                "passed": bool(abs(beta.dimension_hat - expected) <= dim_tol),
            }
        )
    traces_path = out_dir / "density_traces.csv"
    traces_path.write_text(density.to_csv())
    quantities = {
        "doubling": dataclasses.asdict(beta),
        "density": {"N": density.N, "a_hat": density.a_hat, "b_hat": density.b_hat,
                    "r_ladder": list(density.r_ladder)},
        "volume_lemma": dataclasses.asdict(volume),
    }
    return quantities, assertions, [traces_path.name]


_RUNNERS = {
    "golden-1d": _golden_1d,
    "verify-bvy-euclidean": _verify_bvy_euclidean,
    "verify-bounds": _verify_bounds,
    "verify-optimality": _verify_optimality,
    "verify-asymptotic": _verify_asymptotic,
    "diagnose-space": _diagnose_space,
}


def run_scenario(cfg: ExperimentConfig) -> dict:
    """Execute one scenario; returns the report document (also written to disk)."""
    out_dir = cfg.output_dir
    out_dir.mkdir(parents=True, exist_ok=True)
    t0 = time.perf_counter()
    quantities, assertions, outputs = _RUNNERS[cfg.scenario](cfg, out_dir)
    elapsed = time.perf_counter() - t0
    report = {
        "scenario": cfg.scenario,
        "seed": cfg.seed,
        "space": space_to_json(cfg.space),
        "function": function_to_json(cfg.function) if cfg.function is not None else None,
        "bvy": None if cfg.bvy is None else {
            k: (list(v) if isinstance(v, tuple) else v)
            for k, v in dataclasses.asdict(cfg.bvy).items()
        },
        "quantities": quantities,
        "assertions": assertions,
        "verdict": "pass" if all(a["passed"] for a in assertions) else "fail",
        "outputs": sorted(set(outputs)) + ["report.json"],
    }
    (out_dir / "report.json").write_text(json.dumps(report, indent=2, sort_keys=True) + "\n")
    for a in assertions:
        status = "PASS" if a["passed"] else "FAIL"
        print(f"[{status}] {a['name']}: lhs={a['lhs']!r} rhs={a['rhs']!r} margin={a.get('margin')!r}")
    print(f"verdict: {report['verdict']} ({cfg.scenario}, {elapsed:.1f}s wall clock)")
    return report


# ---------------------------------------------------------------------------
# entry point
# ---------------------------------------------------------------------------

_CATALOGUE = """\
spaces (config key "space"):
  {"kind": "EuclideanBox",      "window": {"lo": [0,0], "hi": [1,1]}}
  {"kind": "WeightedEuclidean", "window": {...}, "params": {"weight": "sine" | "unit"}}
  {"kind": "BanachBox",         "window": {...}, "q": 1 | 2 | ... | null (= sup norm)}
  {"kind": "Heisenberg1",       "window": {"lo": [x,y,t], "hi": [x,y,t]}}
  {"kind": "FatCantor",         "window": {"lo": [0], "hi": [1]}, "depth": 12,
                                "params": {"removal_base": 0.25}}

functions (config key "function"):
  {"formula_id": "linear",       "params": {"direction": [...], "ramp_frac": 0.25}, "support_box": {...}}
  {"formula_id": "smooth_bump",  "params": {"height": 1.0, "ramp_frac": 0.5}, "support_box": {...}}
  {"formula_id": "cone",         "params": {"height": 0.2, "slope": 1.0}, "support_box": {...}}
  {"formula_id": "product_sine", "params": {"amplitude": 1.0}, "support_box": {...}}
  {"formula_id": "heis_coord",   "params": {"ramp_frac": 0.4}, "support_box": {...}}

scenarios: golden-1d, verify-bvy-euclidean, verify-bounds, verify-optimality,
           verify-asymptotic, diagnose-space
"""


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="bvylab", description=__doc__,
                                     formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = parser.add_subparsers(dest="command", required=True)
    p_run = sub.add_parser("run", help="run a scenario config")
    p_run.add_argument("config", help="path to the JSON experiment config")
    p_plot = sub.add_parser("plot", help="render a curve CSV as SVG")
    p_plot.add_argument("curve_csv")
    p_plot.add_argument("out_svg")
    sub.add_parser("catalogue", help="list space/function descriptors")
    args = parser.parse_args(argv)

    if args.command == "catalogue":
        print(_CATALOGUE, end="")
        return EXIT_PASS
    if args.command == "plot":
        try:
            emit_plot(args.curve_csv, args.out_svg)
        except (CurveCSVError, OSError) as exc:
            print(f"plot error: {exc}", file=sys.stderr)
            return EXIT_CONFIG
        return EXIT_PASS
    try:
        cfg = load_config(args.config)
        report = run_scenario(cfg)
    except (ConfigError, SpaceError, CapabilityError) as exc:
        print(f"config/capability error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    return EXIT_PASS if report["verdict"] == "pass" else EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
