"""Empirical doubling constants, dimensions, density bounds, volume lemma.

Windowed spaces are only doubling away from the boundary in general, so all
samplers default to balls whose doubled radius stays inside the window; the
convex Euclidean boxes remain bounded by 2^N even with truncation and can be
probed with `interior_only=False`.  FatCantor radii are clamped below at a
quarter of the final-step gap, under which the finite construction is just a
union of intervals.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .rng import substream
from .spaces import FatCantor, Space, SpaceError

__all__ = [
    "DoublingReport",
    "DensityReport",
    "VolumeLowerReport",
    "default_radius_ladder",
    "estimate_beta",
    "estimate_density_bounds",
    "check_volume_lower",
]


@dataclass(frozen=True)
class DoublingReport:
    beta_hat: float
    dimension_hat: float
    samples: int
    skipped: int
    radius_range: tuple
    worst_point: tuple
    worst_radius: float

    def __post_init__(self):
        if self.beta_hat < 1.0:
            raise SpaceError("doubling constant must be >= 1")


@dataclass(frozen=True)
class DensityReport:
    N: float
    a_hat: float
    b_hat: float
    r_ladder: tuple
    traces: tuple  # (point_id, point, tuple of ratios along the ladder)

    def to_csv(self) -> str:
        lines = ["point_id,r,ratio"]
        for pid, _pt, ratios in self.traces:
            for r, ratio in zip(self.r_ladder, ratios):
                lines.append(f"{pid},{r!r},{ratio!r}")
        return "\n".join(lines) + "\n"


@dataclass(frozen=True)
class VolumeLowerReport:
    beta: float
    exponent: float
    n_checked: int
    n_skipped: int
    passed: bool
    min_slack: float
    witness: dict | None


def default_radius_ladder(space: Space, n_rungs: int = 4, largest_frac: float = 0.2,
                          smallest_frac: float = 0.02) -> tuple:
    """Log-spaced ball radii scaled to the window, decreasing."""
    h = float(np.min(space.window.halfwidths))
    ladder = np.geomspace(largest_frac * h, smallest_frac * h, n_rungs)
    if isinstance(space, FatCantor):
        floor = space.min_gap / 4.0
        ladder = ladder[ladder >= floor]
        if ladder.size == 0:
            raise SpaceError("all radii fall below the FatCantor resolution floor")
    return tuple(float(r) for r in ladder)


# MC budget per ball mass; exact paths ignore it, and the volume-lemma slack
# margins dwarf the resulting percent-level noise
_DIAG_MC = 16_384


def _mass(space: Space, rng, center, r: float) -> float:
    return space._ball_measure_rng(rng, center, r, _DIAG_MC).value


def _interior(space: Space, center, r: float) -> bool:
    return space.ball_bbox(np.asarray(center, dtype=float), r).inside(space.window)


def estimate_beta(space: Space, n_points: int = 256, r_ladder=None, seed: int = 0,
                  interior_only: bool = True) -> DoublingReport:
    """beta_hat = max over sampled (x, r) of m(B_2r(x))/m(B_r(x))."""
    r_ladder = tuple(r_ladder) if r_ladder is not None else default_radius_ladder(space)
    pts = space._sample_window_rng(substream(seed, 43), n_points)
    best = 1.0
    worst_point, worst_radius = tuple(pts[0]), r_ladder[0]
    used = skipped = 0
    for i, x in enumerate(pts):
        for j, r in enumerate(r_ladder):
            if interior_only and not _interior(space, x, 2.0 * r):
                skipped += 1
                continue
            rng = substream(seed, 47, i, j)
            inner = _mass(space, rng, x, r)
            if inner <= 0.0:
                skipped += 1
                continue
            outer = _mass(space, rng, x, 2.0 * r)
            ratio = outer / inner
            used += 1
            if ratio > best:
                best = ratio
                worst_point, worst_radius = tuple(float(v) for v in x), float(r)
    if used == 0:
        raise SpaceError("no admissible (point, radius) samples for the doubling estimate")
    return DoublingReport(
        beta_hat=best,
        dimension_hat=math.log(best) / math.log(2.0),
        samples=used,
        skipped=skipped,
        radius_range=(min(r_ladder), max(r_ladder)),
        worst_point=worst_point,
        worst_radius=worst_radius,
    )


def estimate_density_bounds(space: Space, N: float, n_points: int = 128, r_ladder=None,
                            seed: int = 0) -> DensityReport:
    """Traces r -> m(B_r(x))/r^N over a decreasing ladder; bounds from the last rung."""
    if N <= 0:
        raise SpaceError("density exponent must be positive")
    if r_ladder is None:
        r_ladder = default_radius_ladder(space, n_rungs=5, largest_frac=0.1, smallest_frac=0.005)
    r_ladder = tuple(r_ladder)
    if any(a <= b for a, b in zip(r_ladder, r_ladder[1:])):
        raise SpaceError("density ladder must be strictly decreasing")
    rng_pts = substream(seed, 53)
    traces = []
    finals = []
    pid = 0
    attempts = 0
    while len(traces) < n_points and attempts < 50 * n_points:
        x = space._sample_window_rng(rng_pts, 1)[0]
        attempts += 1
        if not _interior(space, x, r_ladder[0]):
            continue
        ratios = []
        for j, r in enumerate(r_ladder):
            m = _mass(space, substream(seed, 59, pid, j), x, r)
            ratios.append(m / r**N)
        traces.append((pid, tuple(float(v) for v in x), tuple(ratios)))
        finals.append(ratios[-1])
        pid += 1
    if not traces:
        raise SpaceError("no interior points found for density traces")
    return DensityReport(
        N=float(N),
        a_hat=float(np.min(finals)),
        b_hat=float(np.max(finals)),
        r_ladder=r_ladder,
        traces=tuple(traces),
    )


def _point_in_ball(space: Space, rng, center, r: float):
    if isinstance(space, FatCantor):
        for _ in range(80):
            cand = space._sample_window_rng(rng, 256)
            keep = np.abs(cand[:, 0] - center[0]) <= r
            if np.any(keep):
                return cand[keep][0]
        return None
    pts, _ = space._sample_ball_rng(rng, np.asarray(center, dtype=float), r, 1)
    return pts[0]


def check_volume_lower(space: Space, beta: float, n_trials: int = 10_000, seed: int = 0,
                       r0_range=None, interior_only: bool = True) -> VolumeLowerReport:
    """Sharp volume lower bound for beta-doubling measures:

    m(B_r(x)) / m(B_r0(x0)) >= beta^-2 (r/r0)^(log beta / log 2)
    for x in B_r0(x0) and r < r0.
    """
    if beta < 1.0:
        raise SpaceError("beta must be >= 1")
    exponent = math.log(beta) / math.log(2.0)
    if r0_range is None:
        ladder = default_radius_ladder(space)
        r0_range = (ladder[-1], ladder[0])
    lo, hi = float(r0_range[0]), float(r0_range[1])
    floor = space.min_gap / 4.0 if isinstance(space, FatCantor) else 0.0
    rng_pts = substream(seed, 61)
    min_slack = math.inf
    witness = None
    checked = skipped = 0
    attempts = 0
    while checked < n_trials and attempts < 50 * n_trials:
        attempts += 1
        x0 = space._sample_window_rng(rng_pts, 1)[0]
        r0 = float(np.exp(rng_pts.uniform(math.log(lo), math.log(hi))))
        if interior_only and not _interior(space, x0, 2.0 * r0):
            skipped += 1
            continue
        r_lo = max(r0 / 50.0, floor)
        if r_lo >= r0:
            skipped += 1
            continue
        x = _point_in_ball(space, rng_pts, x0, r0)
        if x is None:
            skipped += 1
            continue
        r = float(np.exp(rng_pts.uniform(math.log(r_lo), math.log(r0))))
        m0 = _mass(space, rng_pts, x0, r0)
        m1 = _mass(space, rng_pts, x, r)
        if m0 <= 0.0:
            skipped += 1
            continue
        lhs = m1 / m0
        rhs = (r / r0) ** exponent / beta**2
        slack = lhs - rhs
        checked += 1
        if slack < min_slack:
            min_slack = slack
            witness = {
                "x0": tuple(float(v) for v in x0),
                "r0": r0,
                "x": tuple(float(v) for v in x),
                "r": r,
                "lhs": lhs,
                "rhs": rhs,
            }
    if checked == 0:
        raise SpaceError("no admissible volume-lemma tuples sampled")
    return VolumeLowerReport(
        beta=float(beta),
        exponent=exponent,
        n_checked=checked,
        n_skipped=skipped,
        passed=bool(min_slack >= 0.0),
        min_slack=float(min_slack),
        witness=witness,
    )
