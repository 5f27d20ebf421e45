"""Metric measure space catalogue.

Five windowed space variants share one interface: a metric, a finite measure
on an axis-aligned window, seeded samplers for the window and for metric
balls, ball masses (exact where a closed form exists, Monte Carlo otherwise),
and dilations where the variant is homogeneous.

Conventions fixed here:

* BanachBox carries the l_q norm (q in [1, inf], q=2 recovers EuclideanBox).
* Heisenberg1 points are (x, y, t) with group law
  (x,y,t)*(x',y',t') = (x+x', y+y', t+t' + (x*y' - y*x')/2),
  gauge |(z,t)| = (|z|^4 + 16 t^2)^(1/4) and dilations (x,y,t) -> (sx, sy, s^2 t).
  This pairing makes the gauge an exact metric (checked to machine precision
  in the test suite), the Haar measure is Lebesgue, the homogeneous dimension
  is 4, and the unit ball has volume pi^2/8.
* FatCantor keeps the depth-D surviving intervals of an iterated
  middle-interval removal; its measure is Lebesgue restricted to them.

All samplers consume a dedicated Philox substream per call, so results are
deterministic for a given seed and independent of scheduling.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .rng import substream

__all__ = [
    "Box",
    "MassValue",
    "PointSet",
    "SpaceError",
    "CapabilityError",
    "SpaceMismatchError",
    "Space",
    "EuclideanBox",
    "WeightedEuclidean",
    "BanachBox",
    "Heisenberg1",
    "FatCantor",
    "space_from_json",
    "space_to_json",
    "KORANYI_UNIT_BALL_VOLUME",
]

# Volume of {(z,t): |z|^4 + 16 t^2 <= 1} under Lebesgue measure.
KORANYI_UNIT_BALL_VOLUME = math.pi**2 / 8.0

_MC_MASS_SAMPLES = 65_536


class SpaceError(ValueError):
    """Invalid space parameters or point data."""


class CapabilityError(SpaceError):
    """Operation not supported by this space variant."""


class SpaceMismatchError(SpaceError):
    """Points belong to a different space instance."""


@dataclass(frozen=True)
class Box:
    """Axis-aligned box given by per-coordinate bounds."""

    lo: tuple
    hi: tuple

    def __post_init__(self):
        if len(self.lo) != len(self.hi) or not self.lo:
            raise SpaceError("box bounds must be nonempty and of equal length")
        if any(h <= l for l, h in zip(self.lo, self.hi)):
            raise SpaceError("box must have positive width in every coordinate")

    @property
    def dim(self) -> int:
        return len(self.lo)

    @property
    def volume(self) -> float:
        return float(np.prod(np.asarray(self.hi) - np.asarray(self.lo)))

    @property
    def center(self) -> np.ndarray:
        return (np.asarray(self.lo) + np.asarray(self.hi)) / 2.0

    @property
    def halfwidths(self) -> np.ndarray:
        return (np.asarray(self.hi) - np.asarray(self.lo)) / 2.0

    def contains(self, pts: np.ndarray, atol: float = 0.0) -> np.ndarray:
        pts = np.atleast_2d(pts)
        lo = np.asarray(self.lo) - atol
        hi = np.asarray(self.hi) + atol
        return np.all((pts >= lo) & (pts <= hi), axis=-1)

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        return rng.uniform(self.lo, self.hi, size=(n, self.dim))

    def intersect(self, other: "Box") -> "Box | None":
        lo = np.maximum(self.lo, other.lo)
        hi = np.minimum(self.hi, other.hi)
        if np.any(hi <= lo):
            return None
        return Box(tuple(lo), tuple(hi))

    def inside(self, outer: "Box") -> bool:
        return bool(
            np.all(np.asarray(self.lo) >= np.asarray(outer.lo))
            and np.all(np.asarray(self.hi) <= np.asarray(outer.hi))
        )

    def coordinate_margins(self, inner: "Box") -> np.ndarray:
        """Per-coordinate distances from `inner` to this box's faces."""
        lo_m = np.asarray(inner.lo) - np.asarray(self.lo)
        hi_m = np.asarray(self.hi) - np.asarray(inner.hi)
        return np.minimum(lo_m, hi_m)

    def coordinate_distance(self, pts: np.ndarray) -> np.ndarray:
        """Per-coordinate clamp distances from points to this box, shape (n, dim)."""
        pts = np.atleast_2d(pts)
        lo = np.asarray(self.lo)
        hi = np.asarray(self.hi)
        return np.maximum(np.maximum(lo - pts, pts - hi), 0.0)


@dataclass(frozen=True)
class MassValue:
    """A measure value; `exact` marks analytic results, else stderr is the MC error."""

    value: float
    exact: bool
    stderr: float = 0.0

    def __post_init__(self):
        if self.value < 0 or self.stderr < 0:
            raise SpaceError("mass and stderr must be nonnegative")


@dataclass(frozen=True)
class PointSet:
    """A batch of points tagged with the id of the owning space."""

    space_id: str
    coords: np.ndarray

    def __len__(self) -> int:
        return self.coords.shape[0]


def _coords_of(space: "Space", pts) -> np.ndarray:
    if isinstance(pts, PointSet):
        if pts.space_id != space.space_id:
            raise SpaceMismatchError(
                f"points belong to {pts.space_id!r}, not {space.space_id!r}"
            )
        return pts.coords
    return np.asarray(pts, dtype=float)


def _lq_ball_volume(r: float, dim: int, q: float) -> float:
    if math.isinf(q):
        return (2.0 * r) ** dim
    return (2.0 * math.gamma(1.0 + 1.0 / q)) ** dim / math.gamma(1.0 + dim / q) * r**dim


def _rejection_fill(rng, n, propose, accept_mask, what):
    """Draw until n proposals pass accept_mask; deterministic given rng."""
    out = []
    have = 0
    batch = max(2048, 2 * n)
    for _ in range(200):
        cand = propose(rng, batch)
        keep = accept_mask(cand)
        got = cand[keep]
        if got.shape[0]:
            out.append(got[: n - have])
            have += min(got.shape[0], n - have)
        if have >= n:
            return np.concatenate(out, axis=0)
        batch = min(4 * batch, 1 << 22)
    raise SpaceError(f"rejection sampling for {what} failed to converge")


class Space:
    """Common interface of all catalogued metric measure spaces."""

    kind = ""
    supports_sample_ball = True
    supports_dilation = True

    def __init__(self, window: Box):
        self.window = window

    # -- identity ----------------------------------------------------------

    @property
    def topo_dim(self) -> int:
        return self.window.dim

    @property
    def hom_dim(self) -> float:
        return float(self.topo_dim)

    def _param_summary(self) -> str:
        return ""

    @property
    def space_id(self) -> str:
        w = ",".join(f"{l:g}:{h:g}" for l, h in zip(self.window.lo, self.window.hi))
        extra = self._param_summary()
        return f"{self.kind}[{w}]{extra}"

    def __repr__(self):
        return self.space_id

    # -- metric ------------------------------------------------------------

    def distance(self, x, y) -> np.ndarray | float:
        xc = _coords_of(self, x)
        yc = _coords_of(self, y)
        scalar = xc.ndim == 1 and yc.ndim == 1
        d = self._metric(np.atleast_2d(xc), np.atleast_2d(yc))
        return float(d[0]) if scalar else d

    def _metric(self, x: np.ndarray, y: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    # -- measure -----------------------------------------------------------

    def window_mass(self) -> MassValue:
        raise NotImplementedError

    def sample_window(self, seed: int, n: int):
        """Return (PointSet, window mass); points i.i.d. with law m|_W / m(W)."""
        if n < 1:
            raise SpaceError("n must be >= 1")
        pts = self._sample_window_rng(substream(seed, 0), n)
        return PointSet(self.space_id, pts), self.window_mass()

    def _sample_window_rng(self, rng, n: int) -> np.ndarray:
        raise NotImplementedError

    def sample_ball(self, center, r: float, seed: int, n: int):
        """Return (PointSet, mass of B_r(center) inter W); law m restricted there."""
        if not self.supports_sample_ball:
            raise CapabilityError(f"{self.kind} does not support ball sampling")
        if r <= 0 or n < 1:
            raise SpaceError("need r > 0 and n >= 1")
        c = _coords_of(self, center)
        pts, mass = self._sample_ball_rng(substream(seed, 1), c, float(r), n)
        return PointSet(self.space_id, pts), mass

    def _sample_ball_rng(self, rng, center, r, n):
        raise NotImplementedError

    def ball_measure(self, center, r: float, seed: int = 0, n_mc: int = _MC_MASS_SAMPLES) -> MassValue:
        if r <= 0:
            raise SpaceError("need r > 0")
        c = _coords_of(self, center)
        return self._ball_measure_rng(substream(seed, 2), c, float(r), n_mc)

    def _ball_measure_rng(self, rng, center, r, n_mc) -> MassValue:
        raise NotImplementedError

    # -- homogeneity ---------------------------------------------------------

    def dilate(self, base, x, s: float) -> np.ndarray:
        if not self.supports_dilation:
            raise CapabilityError(f"{self.kind} does not support dilations")
        if s <= 0:
            raise SpaceError("dilation factor must be positive")
        b = _coords_of(self, base)
        xc = _coords_of(self, x)
        if s == 1.0:
            return xc
        out = self._dilate(b, xc, float(s))
        return out[0] if xc.ndim == 1 and out.ndim == 2 and out.shape[0] == 1 else out

    def _dilate(self, base, x, s):
        raise NotImplementedError

    # -- gradient plumbing (used by the function catalogue) -------------------

    def lip_from_grad(self, pts: np.ndarray, grads: np.ndarray) -> np.ndarray:
        """Pointwise Lipschitz constant of a C^1 function from its coordinate gradient."""
        raise NotImplementedError

    def tangent_coeffs(self, pts: np.ndarray, grads: np.ndarray) -> np.ndarray:
        """Coefficient vectors of the blow-up functionals w -> <coeffs, w>."""
        raise NotImplementedError

    def blowup_apply(self, coeffs: np.ndarray, w: np.ndarray) -> np.ndarray:
        """Evaluate blow-ups: coeffs (n,k) applied to tangent points w (m,dim)."""
        raise NotImplementedError

    # -- tangent-space machinery (origin-centred, windowless) -----------------

    @property
    def tangent_dim(self) -> int:
        return self.topo_dim

    def tangent_norm(self, w: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def tangent_ball_volume(self, r: float) -> float:
        raise NotImplementedError

    def tangent_sample_ball(self, rng, r: float, n: int) -> np.ndarray:
        raise NotImplementedError

    def tangent_normalize(self, w: np.ndarray) -> np.ndarray:
        """Map tangent points to the unit sphere along the dilation flow."""
        raise NotImplementedError

    def tangent_chart(self, x: np.ndarray, y: np.ndarray, delta: float) -> np.ndarray:
        """Chart B_delta(x) -> tangent space used by the rescaling functions."""
        raise NotImplementedError

    # -- geometry helpers ------------------------------------------------------

    def ball_bbox(self, center: np.ndarray, r: float) -> Box:
        """A box containing B_r(center)."""
        raise NotImplementedError

    def ball_inside_window(self, center: np.ndarray, r: float) -> bool:
        return self.ball_bbox(center, r).inside(self.window)

    def metric_margin(self, inner: Box) -> float:
        """Lower bound on the metric distance from `inner` to the window complement."""
        raise NotImplementedError

    def dist_to_box_lower(self, pts: np.ndarray, box: Box) -> np.ndarray:
        """Per-point lower bound on the metric distance to `box`."""
        raise NotImplementedError


# ---------------------------------------------------------------------------
# l_q boxes (Euclidean and Banach)
# ---------------------------------------------------------------------------


class _LqBox(Space):
    """Lebesgue measure on a box with the l_q metric."""

    def __init__(self, window: Box, q: float):
        super().__init__(window)
        if q < 1:
            raise SpaceError("Banach exponent must satisfy q >= 1")
        self.q = float(q)

    def _param_summary(self) -> str:
        return "" if self.q == 2.0 else f"(q={self.q:g})"

    def _norm(self, v: np.ndarray) -> np.ndarray:
        if math.isinf(self.q):
            return np.max(np.abs(v), axis=-1)
        if self.q == 2.0:
            return np.sqrt(np.sum(v * v, axis=-1))
        if self.q == 1.0:
            return np.sum(np.abs(v), axis=-1)
        return np.sum(np.abs(v) ** self.q, axis=-1) ** (1.0 / self.q)

    @property
    def dual_q(self) -> float:
        if math.isinf(self.q):
            return 1.0
        if self.q == 1.0:
            return math.inf
        return self.q / (self.q - 1.0)

    def _dual_norm(self, v: np.ndarray) -> np.ndarray:
        qd = self.dual_q
        if math.isinf(qd):
            return np.max(np.abs(v), axis=-1)
        if qd == 2.0:
            return np.sqrt(np.sum(v * v, axis=-1))
        if qd == 1.0:
            return np.sum(np.abs(v), axis=-1)
        return np.sum(np.abs(v) ** qd, axis=-1) ** (1.0 / qd)

    def _metric(self, x, y):
        return self._norm(x - y)

    def window_mass(self) -> MassValue:
        return MassValue(self.window.volume, exact=True)

    def _sample_window_rng(self, rng, n):
        return self.window.sample(rng, n)

    def _unit_ball_offsets(self, rng, n):
        d = self.topo_dim
        if d == 1:
            return rng.uniform(-1.0, 1.0, size=(n, 1))
        if math.isinf(self.q):
            return rng.uniform(-1.0, 1.0, size=(n, d))
        if self.q == 2.0:
            g = rng.standard_normal((n, d))
            g /= np.linalg.norm(g, axis=1, keepdims=True)
            radii = rng.uniform(0.0, 1.0, size=(n, 1)) ** (1.0 / d)
            return g * radii
        return _rejection_fill(
            rng,
            n,
            lambda r_, m: r_.uniform(-1.0, 1.0, size=(m, d)),
            lambda c: self._norm(c) <= 1.0,
            f"l{self.q:g} ball",
        )

    def ball_bbox(self, center, r):
        c = np.asarray(center, dtype=float)
        return Box(tuple(c - r), tuple(c + r))

    def _ball_volume(self, r) -> float:
        return _lq_ball_volume(r, self.topo_dim, self.q)

    def _sample_ball_rng(self, rng, center, r, n):
        if self.ball_inside_window(center, r):
            pts = center + r * self._unit_ball_offsets(rng, n)
            return pts, MassValue(self._ball_volume(r), exact=True)
        if self.topo_dim == 1:
            lo = max(center[0] - r, self.window.lo[0])
            hi = min(center[0] + r, self.window.hi[0])
            if hi <= lo:
                raise SpaceError("ball does not meet the window")
            pts = rng.uniform(lo, hi, size=(n, 1))
            return pts, MassValue(hi - lo, exact=True)
        region = self.ball_bbox(center, r).intersect(self.window)
        if region is None:
            raise SpaceError("ball does not meet the window")
        mass = self._truncated_mass(rng, center, r, region, _MC_MASS_SAMPLES)
        pts = _rejection_fill(
            rng,
            n,
            lambda r_, m: region.sample(r_, m),
            lambda c: self._norm(c - center) <= r,
            "truncated ball",
        )
        return pts, mass

    def _truncated_mass(self, rng, center, r, region, n_mc) -> MassValue:
        cand = region.sample(rng, n_mc)
        hits = self._norm(cand - center) <= r
        p = float(np.mean(hits))
        vol = region.volume
        stderr = vol * math.sqrt(max(p * (1.0 - p), 0.0) / n_mc)
        return MassValue(vol * p, exact=False, stderr=stderr)

    def _ball_measure_rng(self, rng, center, r, n_mc):
        if self.ball_inside_window(center, r):
            return MassValue(self._ball_volume(r), exact=True)
        if self.topo_dim == 1:
            lo = max(center[0] - r, self.window.lo[0])
            hi = min(center[0] + r, self.window.hi[0])
            return MassValue(max(hi - lo, 0.0), exact=True)
        region = self.ball_bbox(center, r).intersect(self.window)
        if region is None:
            return MassValue(0.0, exact=True)
        return self._truncated_mass(rng, center, r, region, n_mc)

    def _dilate(self, base, x, s):
        return base + s * (x - base)

    # gradients and tangent space ------------------------------------------------

    def lip_from_grad(self, pts, grads):
        return self._dual_norm(grads)

    def tangent_coeffs(self, pts, grads):
        return np.atleast_2d(grads)

    def blowup_apply(self, coeffs, w):
        return np.atleast_2d(coeffs) @ np.atleast_2d(w).T

    def tangent_norm(self, w):
        return self._norm(w)

    def tangent_ball_volume(self, r):
        return self._ball_volume(r)

    def tangent_sample_ball(self, rng, r, n):
        return r * self._unit_ball_offsets(rng, n)

    def tangent_normalize(self, w):
        return w / self.tangent_norm(w)[..., None]

    def tangent_chart(self, x, y, delta):
        return (np.atleast_2d(y) - np.asarray(x)) / delta

    def metric_margin(self, inner: Box) -> float:
        return float(np.min(self.window.coordinate_margins(inner)))

    def dist_to_box_lower(self, pts, box):
        # exact l_q distance from points to an axis-aligned box
        return self._norm(box.coordinate_distance(pts))


class EuclideanBox(_LqBox):
    """Lebesgue measure on a box with the Euclidean metric."""

    kind = "EuclideanBox"

    def __init__(self, window: Box):
        super().__init__(window, q=2.0)


class BanachBox(_LqBox):
    """Lebesgue measure on a box with an l_q metric, q in [1, inf]."""

    kind = "BanachBox"

    def __init__(self, window: Box, q: float):
        super().__init__(window, q=q)


# ---------------------------------------------------------------------------
# weighted Euclidean box
# ---------------------------------------------------------------------------

_WEIGHTS = {
    # id -> (w(x), bounds (a_w, b_w), closed-form box integral or None)
    "unit": (lambda pts: np.ones(pts.shape[0]), (1.0, 1.0)),
    "sine": (lambda pts: 1.0 + 0.5 * np.sin(2.0 * math.pi * pts[..., 0]), (0.5, 1.5)),
}


class WeightedEuclidean(_LqBox):
    """dm = w(x) dx on a box, Euclidean metric; default weight 1 + sin(2 pi x1)/2."""

    kind = "WeightedEuclidean"

    def __init__(self, window: Box, weight_id: str = "sine"):
        super().__init__(window, q=2.0)
        if weight_id not in _WEIGHTS:
            raise SpaceError(f"unknown weight id {weight_id!r}")
        self.weight_id = weight_id
        self._weight, (self.a_w, self.b_w) = _WEIGHTS[weight_id]

    def _param_summary(self) -> str:
        return f"(w={self.weight_id})"

    def weight(self, pts) -> np.ndarray:
        return self._weight(np.atleast_2d(np.asarray(pts, dtype=float)))

    def window_mass(self) -> MassValue:
        lo, hi = self.window.lo, self.window.hi
        vol = self.window.volume
        if self.weight_id == "unit":
            return MassValue(vol, exact=True)
        # integral of sin(2 pi x1)/2 over the box, times the cross-section volume
        cross = vol / (hi[0] - lo[0])
        s = (math.cos(2 * math.pi * lo[0]) - math.cos(2 * math.pi * hi[0])) / (4 * math.pi)
        return MassValue(vol + cross * s, exact=True)

    def _thin_by_weight(self, rng, pts):
        u = rng.uniform(0.0, self.b_w, size=pts.shape[0])
        return pts[u < self._weight(pts)]

    def _sample_window_rng(self, rng, n):
        return _rejection_fill(
            rng,
            n,
            lambda r_, m: self._thin_by_weight(r_, self.window.sample(r_, m)),
            lambda c: np.ones(c.shape[0], dtype=bool),
            "weighted window",
        )

    def _weighted_mass(self, rng, center, r, region, n_mc) -> MassValue:
        """MC of the weighted mass of B_r(center) inter region via uniform candidates."""
        cand = region.sample(rng, n_mc)
        vals = self._weight(cand) * (self._norm(cand - center) <= r)
        vol = region.volume
        mean = float(np.mean(vals))
        stderr = vol * float(np.std(vals)) / math.sqrt(n_mc)
        return MassValue(vol * mean, exact=False, stderr=stderr)

    def _sample_ball_rng(self, rng, center, r, n):
        inside = self.ball_inside_window(center, r)
        if inside and self.weight_id == "unit":
            pts = center + r * self._unit_ball_offsets(rng, n)
            return pts, MassValue(self._ball_volume(r), exact=True)
        region = self.ball_bbox(center, r).intersect(self.window)
        if region is None:
            raise SpaceError("ball does not meet the window")
        mass = self._weighted_mass(rng, center, r, region, _MC_MASS_SAMPLES)

        def propose(r_, m):
            cand = region.sample(r_, m)
            cand = cand[self._norm(cand - center) <= r]
            return self._thin_by_weight(r_, cand)

        pts = _rejection_fill(rng, n, propose, lambda c: np.ones(c.shape[0], dtype=bool), "weighted ball")
        return pts, mass

    def _ball_measure_rng(self, rng, center, r, n_mc):
        if self.weight_id == "unit":
            return super()._ball_measure_rng(rng, center, r, n_mc)
        region = self.ball_bbox(center, r).intersect(self.window)
        if region is None:
            return MassValue(0.0, exact=True)
        return self._weighted_mass(rng, center, r, region, n_mc)

    def _dilate(self, base, x, s):
        raise CapabilityError("WeightedEuclidean does not support dilations")

    supports_dilation = False


# ---------------------------------------------------------------------------
# first Heisenberg group with the Koranyi gauge
# ---------------------------------------------------------------------------


def _heis_mul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    a = np.atleast_2d(a)
    b = np.atleast_2d(b)
    out = np.empty(np.broadcast_shapes(a.shape, b.shape))
    out[..., 0] = a[..., 0] + b[..., 0]
    out[..., 1] = a[..., 1] + b[..., 1]
    out[..., 2] = a[..., 2] + b[..., 2] + 0.5 * (a[..., 0] * b[..., 1] - a[..., 1] * b[..., 0])
    return out


def _heis_gauge(w: np.ndarray) -> np.ndarray:
    w = np.atleast_2d(w)
    z2 = w[..., 0] ** 2 + w[..., 1] ** 2
    return (z2 * z2 + 16.0 * w[..., 2] ** 2) ** 0.25


def _heis_dilate(w: np.ndarray, s) -> np.ndarray:
    w = np.atleast_2d(w)
    s = np.broadcast_to(np.asarray(s, dtype=float), w.shape[:-1])
    return np.stack([s * w[..., 0], s * w[..., 1], s * s * w[..., 2]], axis=-1)


class Heisenberg1(Space):
    """First Heisenberg group, Koranyi gauge metric, Haar (= Lebesgue) on a box."""

    kind = "Heisenberg1"

    def __init__(self, window: Box):
        if window.dim != 3:
            raise SpaceError("Heisenberg1 needs a 3-dimensional (x, y, t) window")
        super().__init__(window)

    @property
    def hom_dim(self) -> float:
        return 4.0

    def _metric(self, x, y):
        return _heis_gauge(_heis_mul(-y, x))

    def window_mass(self) -> MassValue:
        return MassValue(self.window.volume, exact=True)

    def _sample_window_rng(self, rng, n):
        return self.window.sample(rng, n)

    def _unit_ball_offsets(self, rng, n):
        def propose(r_, m):
            c = r_.uniform([-1.0, -1.0, -0.25], [1.0, 1.0, 0.25], size=(m, 3))
            return c

        return _rejection_fill(rng, n, propose, lambda c: _heis_gauge(c) <= 1.0, "Koranyi ball")

    def ball_bbox(self, center, r):
        c = np.asarray(center, dtype=float)
        ht = r * r / 4.0 + 0.5 * r * (abs(c[0]) + abs(c[1]))
        half = np.array([r, r, ht])
        return Box(tuple(c - half), tuple(c + half))

    def _ball_volume(self, r) -> float:
        return KORANYI_UNIT_BALL_VOLUME * r**4

    def _sample_ball_rng(self, rng, center, r, n):
        exact = self.ball_inside_window(center, r)
        if exact:
            w = _heis_dilate(self._unit_ball_offsets(rng, n), r)
            return _heis_mul(center, w), MassValue(self._ball_volume(r), exact=True)
        # truncated: hit-or-miss mass first, then rejection onto the window
        cand = _heis_mul(center, _heis_dilate(self._unit_ball_offsets(rng, _MC_MASS_SAMPLES), r))
        p = float(np.mean(self.window.contains(cand)))
        vol = self._ball_volume(r)
        mass = MassValue(vol * p, exact=False, stderr=vol * math.sqrt(max(p * (1 - p), 0.0) / _MC_MASS_SAMPLES))
        if mass.value == 0.0:
            raise SpaceError("ball does not meet the window")

        def propose(r_, m):
            return _heis_mul(center, _heis_dilate(self._unit_ball_offsets(r_, m), r))

        pts = _rejection_fill(rng, n, propose, self.window.contains, "truncated Koranyi ball")
        return pts, mass

    def _ball_measure_rng(self, rng, center, r, n_mc):
        if self.ball_inside_window(center, r):
            return MassValue(self._ball_volume(r), exact=True)
        cand = _heis_mul(center, _heis_dilate(self._unit_ball_offsets(rng, n_mc), r))
        p = float(np.mean(self.window.contains(cand)))
        vol = self._ball_volume(r)
        return MassValue(vol * p, exact=False, stderr=vol * math.sqrt(max(p * (1 - p), 0.0) / n_mc))

    def _dilate(self, base, x, s):
        return _heis_mul(base, _heis_dilate(_heis_mul(-base, x), s))

    # gradients -----------------------------------------------------------------

    def horizontal_grad(self, pts, grads):
        """Left-invariant horizontal components (X1 u, X2 u) from coordinate partials."""
        pts = np.atleast_2d(pts)
        grads = np.atleast_2d(grads)
        gx = grads[..., 0] - 0.5 * pts[..., 1] * grads[..., 2]
        gy = grads[..., 1] + 0.5 * pts[..., 0] * grads[..., 2]
        return np.stack([gx, gy], axis=-1)

    def lip_from_grad(self, pts, grads):
        h = self.horizontal_grad(pts, grads)
        return np.sqrt(np.sum(h * h, axis=-1))

    def tangent_coeffs(self, pts, grads):
        return self.horizontal_grad(pts, grads)

    def blowup_apply(self, coeffs, w):
        # Pansu differential: only the z-part of the tangent point enters
        return np.atleast_2d(coeffs) @ np.atleast_2d(w)[:, :2].T

    def tangent_norm(self, w):
        return _heis_gauge(w)

    def tangent_ball_volume(self, r):
        return self._ball_volume(r)

    def tangent_sample_ball(self, rng, r, n):
        return _heis_dilate(self._unit_ball_offsets(rng, n), r)

    def tangent_normalize(self, w):
        return _heis_dilate(w, 1.0 / _heis_gauge(w))

    def tangent_chart(self, x, y, delta):
        return _heis_dilate(_heis_mul(-np.asarray(x), np.atleast_2d(y)), 1.0 / delta)

    def metric_margin(self, inner: Box) -> float:
        margins = self.window.coordinate_margins(inner)
        z_max = float(
            np.max(np.abs([self.window.lo[0], self.window.hi[0]]))
            + np.max(np.abs([self.window.lo[1], self.window.hi[1]]))
        )
        # exit through a t-face at distance rho needs margin_t <= rho^2/4 + z_max*rho/2
        mt = float(margins[2])
        rho_t = 2.0 * (math.sqrt((z_max / 2.0) ** 2 + mt) - z_max / 2.0)
        return float(min(margins[0], margins[1], rho_t))

    def dist_to_box_lower(self, pts, box):
        d = box.coordinate_distance(pts)
        return np.sqrt(d[..., 0] ** 2 + d[..., 1] ** 2)


# ---------------------------------------------------------------------------
# fat Cantor set at finite construction depth
# ---------------------------------------------------------------------------


class FatCantor(Space):
    """Lebesgue measure restricted to a depth-D pre-Cantor subset of an interval.

    At step k (1-based) the open middle interval of length ratio_k * width(W)
    is removed from each surviving interval; the default schedule
    ratio_k = 4^-k keeps total length 1/2 + 2^-(D+1) of the window.
    """

    kind = "FatCantor"
    supports_sample_ball = False
    supports_dilation = False

    def __init__(self, window: Box, depth: int = 12, removal_base: float = 0.25):
        if window.dim != 1:
            raise SpaceError("FatCantor is one-dimensional")
        super().__init__(window)
        if depth < 1:
            raise SpaceError("construction depth must be >= 1")
        if not 0.0 < removal_base < 0.5:
            raise SpaceError("removal base must lie in (0, 1/2)")
        self.depth = int(depth)
        self.removal_base = float(removal_base)
        self.intervals = self._build()
        self._lengths = self.intervals[:, 1] - self.intervals[:, 0]
        self._total = float(np.sum(self._lengths))
        if self._total <= 0.0:
            raise SpaceError("construction removed all mass")
        self._cum = np.concatenate([[0.0], np.cumsum(self._lengths)])

    def _param_summary(self) -> str:
        return f"(depth={self.depth},base={self.removal_base:g})"

    def _build(self) -> np.ndarray:
        width = self.window.hi[0] - self.window.lo[0]
        segs = np.array([[self.window.lo[0], self.window.hi[0]]])
        for k in range(1, self.depth + 1):
            removed = width * self.removal_base**k
            lens = segs[:, 1] - segs[:, 0]
            if np.any(removed >= lens):
                raise SpaceError(f"removal at step {k} exceeds surviving intervals")
            mid = (segs[:, 0] + segs[:, 1]) / 2.0
            nxt = np.empty((2 * segs.shape[0], 2))
            nxt[0::2, 0] = segs[:, 0]
            nxt[0::2, 1] = mid - removed / 2.0
            nxt[1::2, 0] = mid + removed / 2.0
            nxt[1::2, 1] = segs[:, 1]
            segs = nxt
        return segs

    @property
    def min_gap(self) -> float:
        """Length of the smallest removed interval (the last-step removal)."""
        width = self.window.hi[0] - self.window.lo[0]
        return width * self.removal_base**self.depth

    def _metric(self, x, y):
        return np.abs(x[..., 0] - y[..., 0])

    def window_mass(self) -> MassValue:
        return MassValue(self._total, exact=True)

    def contains_points(self, pts) -> np.ndarray:
        x = np.atleast_2d(pts)[..., 0]
        idx = np.searchsorted(self.intervals[:, 0], x, side="right") - 1
        idx = np.clip(idx, 0, self.intervals.shape[0] - 1)
        return (x >= self.intervals[idx, 0]) & (x <= self.intervals[idx, 1])

    def _sample_window_rng(self, rng, n):
        u = rng.uniform(0.0, self._total, size=n)
        idx = np.clip(np.searchsorted(self._cum, u, side="right") - 1, 0, len(self._lengths) - 1)
        x = self.intervals[idx, 0] + (u - self._cum[idx])
        return x[:, None]

    def interval_mass(self, lo: float, hi: float) -> float:
        """Exact surviving length inside [lo, hi]."""
        a = np.clip(self.intervals[:, 0], lo, hi)
        b = np.clip(self.intervals[:, 1], lo, hi)
        return float(np.sum(np.maximum(b - a, 0.0)))

    def _ball_measure_rng(self, rng, center, r, n_mc):
        c = float(np.atleast_1d(center)[0])
        return MassValue(self.interval_mass(c - r, c + r), exact=True)

    def ball_bbox(self, center, r):
        c = np.asarray(center, dtype=float)
        return Box(tuple(c - r), tuple(c + r))

    def metric_margin(self, inner: Box) -> float:
        return float(np.min(self.window.coordinate_margins(inner)))

    def dist_to_box_lower(self, pts, box):
        return box.coordinate_distance(pts)[..., 0]

    def lip_from_grad(self, pts, grads):
        return np.abs(np.atleast_2d(grads)[..., 0])


# ---------------------------------------------------------------------------
# serialization
# ---------------------------------------------------------------------------


def space_to_json(space: Space) -> dict:
    doc = {
        "kind": space.kind,
        "window": {"lo": list(space.window.lo), "hi": list(space.window.hi)},
    }
    if isinstance(space, BanachBox):
        doc["q"] = None if math.isinf(space.q) else space.q
    if isinstance(space, WeightedEuclidean):
        doc["params"] = {"weight": space.weight_id}
    if isinstance(space, FatCantor):
        doc["depth"] = space.depth
        doc["params"] = {"removal_base": space.removal_base}
    return doc


def space_from_json(doc: dict) -> Space:
    try:
        kind = doc["kind"]
        window = Box(tuple(doc["window"]["lo"]), tuple(doc["window"]["hi"]))
    except (KeyError, TypeError) as exc:
        raise SpaceError(f"malformed space descriptor: {exc}") from exc
    params = doc.get("params") or {}
    if kind == "EuclideanBox":
        return EuclideanBox(window)
    if kind == "WeightedEuclidean":
        return WeightedEuclidean(window, weight_id=params.get("weight", "sine"))
    if kind == "BanachBox":
        q = doc.get("q")
        return BanachBox(window, q=math.inf if q in (None, "inf") else float(q))
    if kind == "Heisenberg1":
        return Heisenberg1(window)
    if kind == "FatCantor":
        return FatCantor(window, depth=int(doc.get("depth", 12)), removal_base=float(params.get("removal_base", 0.25)))
    raise SpaceError(f"unknown space kind {kind!r}")
