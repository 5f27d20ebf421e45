"""Monte Carlo ladders for pointwise Lipschitz constants.

The local slope at scale s is sup_{y in B_s(x)} |u(y)-u(x)| / s, estimated by
the max over sampled ball points.  Ladders take running extrema of the slope
over a log-spaced sub-ladder of scales, so the lower sequence is
nondecreasing and the upper one nonincreasing as the radius shrinks, by
construction.  A finite sample under-estimates a sup; at the default budget
(8 rungs x 512 samples) the final rungs sit within a few percent of the truth
on the smooth catalogue.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .functions import TestFunction
from .rng import substream
from .spaces import CapabilityError, FatCantor, SpaceError

__all__ = [
    "LipConfig",
    "LipLadder",
    "lip_ladder",
    "pointwise_lipschitz",
    "global_lip",
    "blowup_convergence",
]


@dataclass(frozen=True)
class LipConfig:
    radii: tuple = (1e-1, 1e-2, 1e-3)
    n_per_radius: int = 512
    rungs_per_radius: int = 8
    seed: int = 0
    force_estimator: bool = False  # ignore analytic gradients, exercise the MC path


@dataclass(frozen=True)
class LipLadder:
    radii: tuple
    l_vals: tuple
    L_vals: tuple

    def __post_init__(self):
        if any(l > L + 1e-12 for l, L in zip(self.l_vals, self.L_vals)):
            raise ValueError("ladder violates l <= L")

    @property
    def final(self) -> tuple:
        return self.l_vals[-1], self.L_vals[-1]


def _ball_points(u: TestFunction, x: np.ndarray, s: float, rng, n: int) -> np.ndarray:
    space = u.space
    if isinstance(space, FatCantor):
        # window-filtered fallback; ball sampling is not a FatCantor capability
        out = []
        have = 0
        batch = max(4096, 8 * n)
        for _ in range(60):
            cand = space._sample_window_rng(rng, batch)
            keep = np.abs(cand[:, 0] - x[0]) <= s
            got = cand[keep]
            if got.shape[0]:
                out.append(got[: n - have])
                have += min(got.shape[0], n - have)
            if have >= n:
                return np.concatenate(out, axis=0)
            batch = min(batch * 4, 1 << 22)
        raise SpaceError("window-filtered ball sampling found too few points")
    pts, _ = space._sample_ball_rng(rng, x, s, n)
    return pts


def lip_ladder(u: TestFunction, x, radii, n_per_radius: int = 512, seed: int = 0,
               rungs_per_radius: int = 8) -> LipLadder:
    """Estimate the l_r / L_r ladder of local slopes at x over decreasing radii."""
    radii = tuple(float(r) for r in radii)
    if any(r <= 0 for r in radii) or any(a <= b for a, b in zip(radii, radii[1:])):
        raise SpaceError("radii must be positive and strictly decreasing")
    if n_per_radius < 16:
        raise SpaceError("need at least 16 samples per radius")
    x = np.asarray(x, dtype=float)
    space = u.space
    if not isinstance(space, FatCantor) and not space.ball_inside_window(x, radii[0]):
        raise SpaceError("largest ladder radius exceeds the window margin at x")

    ux = float(u(x[None, :])[0])
    per_radius_slopes = []
    rung_id = 0
    for i, r in enumerate(radii):
        nxt = radii[i + 1] if i + 1 < len(radii) else r / 10.0
        ratio = (nxt / r) ** (1.0 / rungs_per_radius)
        slopes = []
        for j in range(rungs_per_radius):
            s = r * ratio**j
            rng = substream(seed, 7, rung_id)
            rung_id += 1
            pts = _ball_points(u, x, s, rng, n_per_radius)
            vals = np.abs(u(pts) - ux) / s
            slopes.append(float(np.max(vals)) if vals.size else 0.0)
        per_radius_slopes.append(slopes)

    l_vals, L_vals = [], []
    run_min, run_max = np.inf, 0.0
    for slopes in reversed(per_radius_slopes):
        run_min = min(run_min, min(slopes))
        run_max = max(run_max, max(slopes))
        l_vals.append(run_min)
        L_vals.append(run_max)
    l_vals.reverse()
    L_vals.reverse()
    return LipLadder(radii=radii, l_vals=tuple(l_vals), L_vals=tuple(L_vals))


def pointwise_lipschitz(u: TestFunction, x, cfg: LipConfig = LipConfig()) -> tuple:
    """(lip, Lip) at x; analytic gradients short-circuit the MC ladder."""
    x = np.asarray(x, dtype=float)
    if u.has_analytic_grad and not cfg.force_estimator:
        g = float(u.pointwise_lip(x[None, :])[0])
        return g, g
    ladder = lip_ladder(u, x, cfg.radii, cfg.n_per_radius, cfg.seed, cfg.rungs_per_radius)
    return ladder.final


def global_lip(u: TestFunction, n_pairs: int = 100_000, seed: int = 0,
               force_estimator: bool = False) -> float:
    """Global Lipschitz bound: catalogue metadata, else inflated sampled max."""
    if not force_estimator:
        return u.lip_bound
    space = u.space
    best = 0.0
    chunk = 50_000
    done = 0
    k = 0
    while done < n_pairs:
        m = min(chunk, n_pairs - done)
        rng = substream(seed, 11, k)
        k += 1
        xs = space._sample_window_rng(rng, m)
        ys = space._sample_window_rng(rng, m)
        d = space._metric(xs, ys)
        ok = d > 0
        if np.any(ok):
            ratios = np.abs(u(xs[ok]) - u(ys[ok])) / d[ok]
            best = max(best, float(np.max(ratios)))
        done += m
    # sampled maxima under-estimate the sup; inflate, this only sizes radii
    return 1.1 * best


def blowup_convergence(u: TestFunction, x, deltas=(1e-1, 1e-2, 1e-3, 1e-4),
                       n_per_delta: int = 512, seed: int = 0) -> list:
    """Sup over sampled B_delta(x) of |rescaled u - blow-up of the chart image|."""
    x = np.asarray(x, dtype=float)
    space = u.space
    if not space.supports_dilation:
        raise CapabilityError(f"{space.kind} has no tangent-space blow-ups")
    u0 = u.blowup(x)
    ux = float(u(x[None, :])[0])
    errs = []
    for k, delta in enumerate(deltas):
        rng = substream(seed, 13, k)
        pts = _ball_points(u, x, float(delta), rng, n_per_delta)
        rescaled = (u(pts) - ux) / delta
        w = space.tangent_chart(x, pts, float(delta))
        errs.append(float(np.max(np.abs(rescaled - u0(w)))))
    return errs
