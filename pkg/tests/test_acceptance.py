"""Acceptance gate: one test per criterion, each printing a PASS/FAIL line.

Budgets and tolerances are pinned here; run with `pytest tests/test_acceptance.py -s`
to see the per-criterion lines.
"""

import json
import math
import os
import subprocess
import sys
import time

import numpy as np
import pytest

import bvylab as bl
from bvylab.diagnostics import check_volume_lower, estimate_beta, estimate_density_bounds
from bvylab.estimator import (
    BVYConfig,
    K_norm,
    bound_check,
    grad_norm,
    k_const,
    k_const_mc,
    limit_fit,
    pair_measure_direct,
    pair_measure_localized,
    rescaled_curve,
)
from bvylab.functions import scaled
from bvylab.lipschitz import blowup_convergence, lip_ladder


def _report(criterion, ok, detail):
    print(f"\n[criterion {criterion:02d}] {'PASS' if ok else 'FAIL'}: {detail}")
    assert ok, f"criterion {criterion}: {detail}"


def _sine(space, lo, hi):
    return bl.ProductSine(space=space, support=bl.Box(lo, hi), amplitude=0.5)


@pytest.fixture(scope="module")
def heis_space():
    return bl.Heisenberg1(bl.Box((-1.2, -1.2, -0.6), (1.2, 1.2, 0.6)))


@pytest.fixture(scope="module")
def heis_u(heis_space):
    return bl.HeisCoordinate(space=heis_space, support=bl.Box((-0.8, -0.8, -0.4), (0.8, 0.8, 0.4)),
                             ramp_frac=0.4)


def test_criterion_01_golden_1d_exactness():
    t0 = time.perf_counter()
    space = bl.EuclideanBox(bl.Box((0.0,), (1.0,)))
    u = bl.LinearFunction(space=space, support=space.window, direction=(1.0,),
                          ramp_frac=0.0, center=(0.0,))
    cfg = BVYConfig(p=2.0, lambdas=tuple(np.geomspace(3.0, 16.0, 12)), n_bar=1.0,
                    n_pairs=1_000_000, seed=20240817, estimator="direct")
    curve = rescaled_curve(space, u, cfg)
    rung_ok = True
    worst = 0.0
    for row in curve.rows:
        exact = 2.0 * row.lam**-2 - row.lam**-4
        z = abs(row.estimate.value - exact) / row.estimate.stderr
        worst = max(worst, z)
        rung_ok &= z <= 3.0
    fit = limit_fit(curve)
    rel = abs(fit.limit - 2.0) / 2.0
    elapsed = time.perf_counter() - t0
    ok = rung_ok and rel <= 0.02 and elapsed < 30.0
    _report(1, ok, f"all rungs within 3 SE (worst z={worst:.2f}), "
                   f"limit={fit.limit:.4f} (target 2.000, rel err {rel:.3%}), {elapsed:.1f}s < 30s")


def test_criterion_02_euclidean_bvy_reproduction():
    t0 = time.perf_counter()
    space = bl.EuclideanBox(bl.Box((0.0, 0.0), (1.0, 1.0)))
    u = _sine(space, (0.15, 0.15), (0.85, 0.85))
    cfg = BVYConfig(p=2.0, lambdas=tuple(np.geomspace(1e2, 1e4, 6)),
                    n_outer=16_384, n_inner=256, n_grad=262_144, seed=42, estimator="localized")
    curve = rescaled_curve(space, u, cfg)
    fit = limit_fit(curve)
    reference = k_const(2.0, 2) / 2.0 * grad_norm(space, u, 2.0, cfg).lip_p.value
    rel = abs(fit.limit - reference) / reference
    elapsed = time.perf_counter() - t0
    ok = rel <= 0.05 and elapsed < 300.0
    _report(2, ok, f"limit={fit.limit:.4f} vs (pi/2)*grad-energy={reference:.4f} "
                   f"(rel err {rel:.3%} <= 5%), localized, {elapsed:.1f}s < 300s")


def test_criterion_03_spherical_constant_identity():
    worst = 0.0
    for p in (1.0, 2.0, 3.0):
        for n in (1, 2, 3):
            rel = abs(k_const(p, n) - k_const_mc(p, n, seed=12)) / k_const(p, n)
            worst = max(worst, rel)
    exact1 = all(k_const(p, 1) == 2.0 for p in (1.0, 2.0, 3.0))
    exact_pi = abs(k_const(2.0, 2) - math.pi) <= 1e-14
    ok = worst <= 0.005 and exact1 and exact_pi
    _report(3, ok, f"closed form vs sphere MC worst rel err {worst:.4%} <= 0.5%, "
                   f"k(p,1)=2 exactly, k(2,2)=pi to 1e-14")


def test_criterion_04_bound_sandwich_zero_failures(heis_space, heis_u):
    cases = []
    e1 = bl.EuclideanBox(bl.Box((0.0,), (1.0,)))
    cases.append((e1, bl.ProductSine(space=e1, support=bl.Box((0.2,), (0.8,)), amplitude=0.5),
                  BVYConfig(p=2.0, lambdas=tuple(np.geomspace(30.0, 1000.0, 5)),
                            n_outer=4096, n_inner=256, n_grad=65_536, seed=101)))
    e2 = bl.EuclideanBox(bl.Box((0.0, 0.0), (1.0, 1.0)))
    w2 = bl.WeightedEuclidean(bl.Box((0.0, 0.0), (1.0, 1.0)))
    b1 = bl.BanachBox(bl.Box((0.0, 0.0), (1.0, 1.0)), q=1.0)
    binf = bl.BanachBox(bl.Box((0.0, 0.0), (1.0, 1.0)), q=float("inf"))
    for k, sp in enumerate((e2, w2, b1, binf)):
        cases.append((sp, _sine(sp, (0.15, 0.15), (0.85, 0.85)),
                      BVYConfig(p=2.0, lambdas=tuple(np.geomspace(1e2, 1e4, 5)),
                                n_outer=4096, n_inner=256, n_grad=65_536, seed=102 + k)))
    cases.append((heis_space, heis_u,
                  BVYConfig(p=2.0, lambdas=tuple(np.geomspace(1e3, 1e5, 5)),
                            n_outer=4096, n_inner=1024, n_grad=65_536, seed=106)))
    failures = []
    lines = []
    for space, u, cfg in cases:
        density = estimate_density_bounds(space, N=space.hom_dim, n_points=64, seed=cfg.seed)
        rep = bound_check(space, u, cfg, a_hat=density.a_hat, b_hat=density.b_hat)
        lines.append(f"{space.kind}: {rep.lower:.3g} <= {rep.limit:.4g} <= {rep.upper:.4g}")
        if not rep.passed:
            failures.append(space.kind)
    ok = not failures
    _report(4, ok, f"sandwich on 6 pairs, failures={failures or 'none'}; " + "; ".join(lines))


def test_criterion_05_optimality_slope_law():
    runs = []
    s1 = bl.EuclideanBox(bl.Box((0.0,), (1.0,)))
    u1 = bl.LinearFunction(space=s1, support=s1.window, direction=(1.0,), ramp_frac=0.0, center=(0.0,))
    runs.append((s1, u1, 2.0, BVYConfig(p=2.0, lambdas=tuple(np.geomspace(30, 1000, 6)), n_bar=2.0,
                                        n_pairs=1_000_000, seed=31, estimator="direct")))
    s2 = bl.EuclideanBox(bl.Box((0.0, 0.0), (1.0, 1.0)))
    u2 = _sine(s2, (0.15, 0.15), (0.85, 0.85))
    runs.append((s2, u2, 1.0, BVYConfig(p=2.0, lambdas=tuple(np.geomspace(50, 400, 6)), n_bar=1.0,
                                        n_outer=8192, n_inner=512, seed=31)))
    runs.append((s2, u2, 4.0, BVYConfig(p=2.0, lambdas=tuple(np.geomspace(100, 10_000, 6)), n_bar=4.0,
                                        n_pairs=1_000_000, seed=31, estimator="direct")))
    details = []
    ok = True
    for space, u, n_bar, cfg in runs:
        fit = limit_fit(rescaled_curve(space, u, cfg))
        expected = cfg.p * (1.0 - space.hom_dim / n_bar)
        details.append(f"(N={space.hom_dim:g},Nb={n_bar:g}): slope={fit.slope:+.3f} expect={expected:+.1f}")
        ok &= abs(fit.slope - expected) <= 0.1
        ok &= (fit.slope > 0) == (n_bar > space.hom_dim)  # sign classifies the regime
    _report(5, ok, "; ".join(details))


def test_criterion_06_banach_tangent_formula():
    space = bl.BanachBox(bl.Box((0.0, 0.0), (2.0, 2.0)), q=float("inf"))
    u = bl.ConeFunction(space=space, support=bl.Box((0.5, 0.5), (1.5, 1.5)), height=0.5, slope=1.0)
    cfg = BVYConfig(p=1.0, lambdas=tuple(np.geomspace(30.0, 3e4, 7)),
                    n_outer=8192, n_inner=128, n_shell=8192, seed=55)
    kn = K_norm(space, u, 1.0, BVYConfig(p=1.0, lambdas=(1.0,), n_outer=32_768, n_shell=8192, seed=56))
    fit = limit_fit(rescaled_curve(space, u, cfg))
    rel_limit = abs(fit.limit - kn.value) / kn.value
    rel_exact = abs(kn.value - 3.0) / 3.0
    ok = rel_limit <= 0.05 and rel_exact <= 0.02
    _report(6, ok, f"limit={fit.limit:.4f} vs K={kn.value:.4f} (rel {rel_limit:.3%} <= 5%), "
                   f"K vs exact 3 (rel {rel_exact:.3%} <= 2%)")


def test_criterion_07_heisenberg_tangent_formula(heis_space, heis_u):
    cfg = BVYConfig(p=2.0, lambdas=tuple(np.geomspace(1e3, 1e6, 7)),
                    n_outer=8192, n_inner=512, seed=57)
    kn = K_norm(heis_space, heis_u, 2.0,
                BVYConfig(p=2.0, lambdas=(1.0,), n_outer=16_384, n_shell=16_384, seed=58))
    fit = limit_fit(rescaled_curve(heis_space, heis_u, cfg))
    rel = abs(fit.limit - kn.value) / kn.value
    ok = rel <= 0.08
    _report(7, ok, f"limit={fit.limit:.4f} vs shell-MC K={kn.value:.4f} (rel {rel:.3%} <= 8%), "
                   f"both sides independently estimated")


def test_criterion_08_diagnostics(heis_space):
    dims_ok = True
    details = []
    for n in (1, 2, 3):
        space = bl.EuclideanBox(bl.Box((0.0,) * n, (1.0,) * n))
        rep = estimate_beta(space, n_points=256, seed=8)
        dims_ok &= abs(rep.dimension_hat - n) <= 0.05
        details.append(f"E{n}: dim={rep.dimension_hat:.3f}")
    hrep = estimate_beta(heis_space, n_points=256, seed=8)
    dims_ok &= abs(hrep.dimension_hat - 4.0) <= 0.1
    details.append(f"H1: dim={hrep.dimension_hat:.3f}")

    spaces = [
        bl.EuclideanBox(bl.Box((0.0,), (1.0,))),
        bl.EuclideanBox(bl.Box((0.0, 0.0), (1.0, 1.0))),
        bl.EuclideanBox(bl.Box((0.0,) * 3, (1.0,) * 3)),
        bl.WeightedEuclidean(bl.Box((0.0, 0.0), (1.0, 1.0))),
        bl.BanachBox(bl.Box((0.0, 0.0), (1.0, 1.0)), q=1.0),
        bl.BanachBox(bl.Box((0.0, 0.0), (1.0, 1.0)), q=float("inf")),
        heis_space,
        bl.FatCantor(bl.Box((0.0,), (1.0,)), depth=12),
    ]
    violations = []
    for space in spaces:
        beta = estimate_beta(space, n_points=256, seed=8).beta_hat
        rep = check_volume_lower(space, beta, n_trials=10_000, seed=80)
        if not rep.passed:
            violations.append((space.kind, rep.witness))
    ok = dims_ok and not violations
    _report(8, ok, "; ".join(details) + f"; volume lemma: 10^4 tuples x {len(spaces)} spaces, "
                                        f"violations={violations or 'none'}")


def test_criterion_09_property_suite(heis_u):
    checks = []

    # monotonicity of the pair measure along the ladder
    s1 = bl.EuclideanBox(bl.Box((0.0,), (1.0,)))
    u1 = bl.LinearFunction(space=s1, support=s1.window, direction=(1.0,), ramp_frac=0.0, center=(0.0,))
    cfg = BVYConfig(p=2.0, lambdas=tuple(np.geomspace(3.0, 30.0, 8)), n_bar=1.0,
                    n_pairs=400_000, seed=91, estimator="direct")
    vals = [r.estimate.value for r in rescaled_curve(s1, u1, cfg).rows]
    checks.append(("monotone M(lambda)", all(a >= b for a, b in zip(vals, vals[1:]))))

    # scaling identity, bit-exact under a shared seed
    scale_ok = True
    for c in (2.0, 10.0):
        ca = BVYConfig(p=2.0, lambdas=(8.0,), n_bar=1.0, n_pairs=200_000, seed=92)
        cb = BVYConfig(p=2.0, lambdas=(8.0 / c,), n_bar=1.0, n_pairs=200_000, seed=92)
        a = pair_measure_direct(s1, scaled(u1, c), ca, 8.0)
        b = pair_measure_direct(s1, u1, cb, 8.0 / c)
        scale_ok &= (a.value == b.value)
    checks.append(("scaling identity bit-exact", scale_ok))

    # direct and localized estimators agree within 3 joint standard errors
    s3 = bl.EuclideanBox(bl.Box((0.0,), (3.0,)))
    tent = bl.ConeFunction(space=s3, support=bl.Box((0.9,), (2.1,)), height=0.4, slope=1.0)
    agree_ok = True
    for space, u, lam, cfg_kw in (
        (s3, tent, 100.0, dict(n_pairs=1_000_000, n_outer=4096, n_inner=244)),
        (bl.EuclideanBox(bl.Box((0.0, 0.0), (1.0, 1.0))), None, 1000.0,
         dict(n_pairs=4_000_000, n_outer=8192, n_inner=256)),
    ):
        if u is None:
            u = _sine(space, (0.15, 0.15), (0.85, 0.85))
        c = BVYConfig(p=2.0, lambdas=(lam,), seed=93, **cfg_kw)
        d = pair_measure_direct(space, u, c, lam)
        l = pair_measure_localized(space, u, c, lam)
        agree_ok &= abs(d.value - l.value) <= 3.0 * math.hypot(d.stderr, l.stderr)
    checks.append(("direct/localized agreement 3 SE", agree_ok))

    # lip <= Lip ladder ordering on smooth and non-smooth functions
    s2 = bl.EuclideanBox(bl.Box((0.0, 0.0), (1.0, 1.0)))
    ladder_ok = True
    for u, x in ((_sine(s2, (0.15, 0.15), (0.85, 0.85)), np.array([0.5, 0.45])),
                 (heis_u, np.array([0.05, -0.1, 0.02]))):
        lad = lip_ladder(u, x, (5e-2, 5e-3, 5e-4), n_per_radius=256, seed=94)
        ladder_ok &= all(l <= L for l, L in zip(lad.l_vals, lad.L_vals))
        ladder_ok &= all(a >= b for a, b in zip(lad.L_vals, lad.L_vals[1:]))
        ladder_ok &= all(a <= b for a, b in zip(lad.l_vals, lad.l_vals[1:]))
    checks.append(("lip <= Lip ladders", ladder_ok))

    # blow-up convergence, monotone within noise
    u2 = _sine(s2, (0.15, 0.15), (0.85, 0.85))
    blow_ok = True
    for u, x in ((u2, np.array([0.42, 0.57])), (heis_u, np.array([0.3, -0.2, 0.1]))):
        errs = blowup_convergence(u, x, deltas=(1e-1, 1e-2, 1e-3, 1e-4), seed=95)
        blow_ok &= errs[-1] <= 0.1 * errs[0] + 1e-12
        blow_ok &= all(b <= a * 1.5 + 1e-12 for a, b in zip(errs, errs[1:]))
    checks.append(("blow-up convergence monotone", blow_ok))

    failures = [name for name, good in checks if not good]
    _report(9, not failures, f"{len(checks)} property groups, failures={failures or 'none'}")


def test_criterion_10_workers_determinism(tmp_path):
    doc = {
        "scenario": "verify-asymptotic",
        "seed": 5,
        "space": {"kind": "BanachBox", "window": {"lo": [0.0, 0.0], "hi": [2.0, 2.0]}, "q": None},
        "function": {"formula_id": "cone", "params": {"height": 0.5, "slope": 1.0},
                     "support_box": {"lo": [0.5, 0.5], "hi": [1.5, 1.5]}},
        "bvy": {"p": 1.0, "lambdas": list(np.geomspace(100.0, 3000.0, 4)),
                "n_outer": 2048, "n_inner": 64, "n_shell": 4096, "n_chunks": 32},
        "tolerances": {"limit_rel": 0.10},
    }

    outputs = {}
    for workers in (1, 4, 16):
        env = dict(os.environ, WORKERS=str(workers))
        out_dir = tmp_path / f"w{workers}"
        d = dict(doc, output_dir=str(out_dir))
        p = tmp_path / f"cfg_w{workers}.json"
        p.write_text(json.dumps(d))
        r = subprocess.run([sys.executable, "-m", "bvylab.cli", "run", str(p)],
                           capture_output=True, text=True, env=env)
        assert r.returncode == 0, r.stdout + r.stderr
        outputs[workers] = {f.name: f.read_bytes() for f in sorted(out_dir.iterdir())}
    ok = outputs[1] == outputs[4] == outputs[16]
    names = sorted(outputs[1])
    _report(10, ok, f"byte-identical {names} across WORKERS in {{1, 4, 16}}")
