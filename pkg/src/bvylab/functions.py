"""Catalogue of Lipschitz test functions with analytic metadata.

Each function lives on one space instance, vanishes outside its support box,
and (except the cone apex / ridge sets, which have measure zero) carries a
closed-form coordinate gradient.  Pointwise Lipschitz constants come from the
space: the dual l_q* norm of the gradient on normed boxes, the Euclidean norm
of the horizontal components on the Heisenberg group.

Smooth tapering uses a per-coordinate quintic smoothstep plateau: identically
1 on an inner box, 0 outside the support, C^2 in between, so analytic
gradients stay available everywhere.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .spaces import (
    BanachBox,
    Box,
    CapabilityError,
    EuclideanBox,
    FatCantor,
    Heisenberg1,
    Space,
    SpaceError,
    WeightedEuclidean,
)

__all__ = [
    "TestFunction",
    "LinearFunction",
    "SmoothBump",
    "ConeFunction",
    "ProductSine",
    "HeisCoordinate",
    "ScaledFunction",
    "centered_support",
    "function_from_json",
    "function_to_json",
]

# Headroom turning a fine-grid max of a C^1 gradient field into a safe global bound.
_GRID_SAFETY = 1.25
# Certified comparison factor between the Carnot-Caratheodory metric (which is
# geodesic, so sup |grad_H u| bounds Lipschitz constants along it) and the
# Koranyi gauge used here: d_cc <= 2.4 d_gauge on the whole group.
_HEIS_GAUGE_FACTOR = 2.4

_GRID_SIZES = {1: 4097, 2: 193, 3: 49}


def centered_support(window: Box, margin_frac: float = 0.15) -> Box:
    """Sub-box of the window shrunk by margin_frac of each halfwidth."""
    c = window.center
    h = window.halfwidths * (1.0 - margin_frac)
    return Box(tuple(c - h), tuple(c + h))


def _smoothstep(t: np.ndarray) -> np.ndarray:
    t = np.clip(t, 0.0, 1.0)
    return t * t * t * (10.0 + t * (6.0 * t - 15.0))


def _smoothstep_deriv(t: np.ndarray) -> np.ndarray:
    inside = (t > 0.0) & (t < 1.0)
    tc = np.clip(t, 0.0, 1.0)
    return np.where(inside, 30.0 * tc * tc * (1.0 - tc) ** 2, 0.0)


class _Plateau:
    """Product of per-coordinate quintic ramps: 1 on the inner box, 0 outside."""

    def __init__(self, support: Box, ramp_frac: float):
        if not 0.0 <= ramp_frac <= 1.0:
            raise SpaceError("ramp fraction must lie in [0, 1]")
        self.support = support
        self.ramp_frac = float(ramp_frac)
        self.widths = support.halfwidths * self.ramp_frac

    def value_and_grad(self, pts: np.ndarray):
        pts = np.atleast_2d(pts)
        n, d = pts.shape
        if self.ramp_frac == 0.0:
            chi = self.support.contains(pts).astype(float)
            return chi, np.zeros((n, d))
        lo = np.asarray(self.support.lo)
        hi = np.asarray(self.support.hi)
        w = self.widths
        a = (pts - lo) / w
        b = (hi - pts) / w
        sa, sb = _smoothstep(a), _smoothstep(b)
        factors = sa * sb
        chi = np.prod(factors, axis=1)
        dchi = np.empty((n, d))
        for j in range(d):
            rest = np.prod(np.delete(factors, j, axis=1), axis=1) if d > 1 else 1.0
            dj = (_smoothstep_deriv(a[:, j]) * sb[:, j] - sa[:, j] * _smoothstep_deriv(b[:, j])) / w[j]
            dchi[:, j] = dj * rest
        return chi, dchi


@dataclass(frozen=True)
class TestFunction:
    """Base class; concrete formulas implement _core_value_grad on the support."""

    space: Space
    support: Box
    formula_id = "abstract"
    has_analytic_grad = True

    def __post_init__(self):
        if self.support.dim != self.space.topo_dim:
            raise SpaceError("support dimension does not match the space")
        if not self.support.inside(self.space.window):
            raise SpaceError("support box must lie inside the window")

    # concrete formulas return (values, coordinate gradients) for points
    # already known to lie inside the support
    def _inside_value_grad(self, pts: np.ndarray):
        raise NotImplementedError

    def __call__(self, pts) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        vals = np.zeros(pts.shape[0])
        mask = self.support.contains(pts)
        if np.any(mask):
            vals[mask] = self._inside_value_grad(pts[mask])[0]
        return vals

    def grad(self, pts) -> np.ndarray:
        """Coordinate gradient, defined a.e.; exactly zero outside the support."""
        if not self.has_analytic_grad:
            raise CapabilityError(f"{self.formula_id} carries no analytic gradient here")
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        out = np.zeros_like(pts)
        mask = self.support.contains(pts)
        if np.any(mask):
            out[mask] = self._inside_value_grad(pts[mask])[1]
        return out

    def pointwise_lip(self, pts) -> np.ndarray:
        """Analytic pointwise Lipschitz constant (dual/horizontal gradient norm)."""
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        return self.space.lip_from_grad(pts, self.grad(pts))

    def blowup_coeffs(self, pts) -> np.ndarray:
        """Coefficients of the tangent-space blow-ups at each point."""
        if not self.space.supports_dilation:
            raise CapabilityError(f"{self.space.kind} has no tangent-space blow-ups")
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        return self.space.tangent_coeffs(pts, self.grad(pts))

    def blowup(self, x):
        """The blow-up at one point, as a callable on tangent coordinates."""
        coeffs = self.blowup_coeffs(np.asarray(x, dtype=float))

        def u0(w):
            return self.space.blowup_apply(coeffs, np.atleast_2d(w))[0]

        return u0

    @property
    def margin(self) -> float:
        """Metric distance from the support to the window boundary (lower bound)."""
        return self.space.metric_margin(self.support)

    @cached_property
    def lip_bound(self) -> float:
        """Global Lipschitz bound, safe for sizing localization radii."""
        return self._lip_bound()

    def _lip_bound(self) -> float:
        grid = _support_grid(self.support)
        sup = float(np.max(self.pointwise_lip(grid)))
        bound = sup * _GRID_SAFETY
        if isinstance(self.space, Heisenberg1):
            bound *= _HEIS_GAUGE_FACTOR
        return bound

    def params(self) -> dict:
        return {}

    def label(self) -> str:
        return self.formula_id


def _support_grid(support: Box) -> np.ndarray:
    d = support.dim
    n = _GRID_SIZES.get(d, 17)
    axes = [np.linspace(lo, hi, n) for lo, hi in zip(support.lo, support.hi)]
    mesh = np.meshgrid(*axes, indexing="ij")
    return np.stack([m.ravel() for m in mesh], axis=1)


@dataclass(frozen=True)
class LinearFunction(TestFunction):
    """<direction, x - center>, tapered to zero by a plateau cutoff.

    The center defaults to the support center.  ramp_frac = 0 drops the
    cutoff entirely and is only legal when the support is the whole window
    (the function then need not vanish at the boundary).
    """

    direction: tuple = (1.0,)
    ramp_frac: float = 0.25
    center: tuple | None = None
    formula_id = "linear"

    def __post_init__(self):
        super().__post_init__()
        if len(self.direction) != self.space.topo_dim:
            raise SpaceError("direction length must match the space dimension")
        if self.center is not None and len(self.center) != self.space.topo_dim:
            raise SpaceError("center length must match the space dimension")
        if self.ramp_frac == 0.0 and not (
            self.support.inside(self.space.window) and self.space.window.inside(self.support)
        ):
            raise SpaceError("cutoff-free linear functions require support == window")

    @property
    def _center(self) -> np.ndarray:
        return self.support.center if self.center is None else np.asarray(self.center, dtype=float)

    @cached_property
    def _plateau(self) -> _Plateau:
        return _Plateau(self.support, self.ramp_frac)

    def _inside_value_grad(self, pts):
        g = np.asarray(self.direction, dtype=float)
        core = (pts - self._center) @ g
        if self.ramp_frac == 0.0:
            return core, np.broadcast_to(g, pts.shape).copy()
        chi, dchi = self._plateau.value_and_grad(pts)
        return core * chi, g[None, :] * chi[:, None] + core[:, None] * dchi

    def _lip_bound(self) -> float:
        if self.ramp_frac == 0.0:
            g = np.asarray(self.direction, dtype=float)
            return float(self.space.lip_from_grad(self.support.center[None, :], g[None, :])[0])
        return super()._lip_bound()

    def params(self):
        doc = {"direction": list(self.direction), "ramp_frac": self.ramp_frac}
        if self.center is not None:
            doc["center"] = list(self.center)
        return doc


@dataclass(frozen=True)
class SmoothBump(TestFunction):
    """height * plateau cutoff."""

    height: float = 1.0
    ramp_frac: float = 0.5
    formula_id = "smooth_bump"

    def __post_init__(self):
        super().__post_init__()
        if self.ramp_frac <= 0.0:
            raise SpaceError("a bump needs a positive ramp")

    @cached_property
    def _plateau(self) -> _Plateau:
        return _Plateau(self.support, self.ramp_frac)

    def _inside_value_grad(self, pts):
        chi, dchi = self._plateau.value_and_grad(pts)
        return self.height * chi, self.height * dchi

    def params(self):
        return {"height": self.height, "ramp_frac": self.ramp_frac}


@dataclass(frozen=True)
class ConeFunction(TestFunction):
    """max(0, height - slope * d(x, center)) in the space's own metric.

    The metric ball supporting the cone must fit inside the support box.  On
    the Heisenberg group the gauge-distance cone is Lipschitz but its
    pointwise constants are not a gradient norm, so no analytic gradient is
    exposed there.
    """

    height: float = 0.2
    slope: float = 1.0
    formula_id = "cone"

    def __post_init__(self):
        super().__post_init__()
        if self.height <= 0 or self.slope <= 0:
            raise SpaceError("cone height and slope must be positive")
        radius = self.height / self.slope
        bbox = self.space.ball_bbox(self.support.center, radius)
        if not bbox.inside(self.support):
            raise SpaceError("cone foot-ball must fit inside the support box")

    @property
    def has_analytic_grad(self) -> bool:  # type: ignore[override]
        return not isinstance(self.space, Heisenberg1)

    def _inside_value_grad(self, pts):
        c = self.support.center
        d = np.atleast_1d(self.space.distance(pts, np.broadcast_to(c, pts.shape)))
        vals = np.maximum(0.0, self.height - self.slope * d)
        grads = np.zeros_like(pts)
        inside = (vals > 0.0) & (d > 0.0)
        if np.any(inside) and self.has_analytic_grad:
            grads[inside] = -self.slope * self._metric_gradient(pts[inside] - c, d[inside])
        return vals, grads

    def _metric_gradient(self, v, d):
        q = getattr(self.space, "q", 2.0)
        if isinstance(self.space, FatCantor):
            return np.sign(v)
        if math.isinf(q):
            out = np.zeros_like(v)
            k = np.argmax(np.abs(v), axis=1)
            rows = np.arange(v.shape[0])
            out[rows, k] = np.sign(v[rows, k])
            return out
        if q == 1.0:
            return np.sign(v)
        return np.sign(v) * (np.abs(v) / d[:, None]) ** (q - 1.0)

    def _lip_bound(self) -> float:
        return self.slope

    def params(self):
        return {"height": self.height, "slope": self.slope}


@dataclass(frozen=True)
class ProductSine(TestFunction):
    """amplitude * prod_i sin(pi (x_i - lo_i) / width_i) on the support, 0 outside."""

    amplitude: float = 1.0
    formula_id = "product_sine"

    def _inside_value_grad(self, pts):
        lo = np.asarray(self.support.lo)
        widths = np.asarray(self.support.hi) - lo
        t = math.pi * (pts - lo) / widths
        s = np.sin(t)
        vals = self.amplitude * np.prod(s, axis=1)
        grads = np.empty_like(pts)
        d = pts.shape[1]
        for j in range(d):
            rest = np.prod(np.delete(s, j, axis=1), axis=1) if d > 1 else 1.0
            grads[:, j] = self.amplitude * (math.pi / widths[j]) * np.cos(t[:, j]) * rest
        return vals, grads

    def params(self):
        return {"amplitude": self.amplitude}


@dataclass(frozen=True)
class HeisCoordinate(TestFunction):
    """First horizontal coordinate times a plateau bump; Heisenberg1 only."""

    ramp_frac: float = 0.4
    formula_id = "heis_coord"

    def __post_init__(self):
        super().__post_init__()
        if not isinstance(self.space, Heisenberg1):
            raise SpaceError("heis_coord requires the Heisenberg1 space")

    @cached_property
    def _plateau(self) -> _Plateau:
        return _Plateau(self.support, self.ramp_frac)

    def _inside_value_grad(self, pts):
        core = pts[:, 0] - self.support.center[0]
        chi, dchi = self._plateau.value_and_grad(pts)
        grads = core[:, None] * dchi
        grads[:, 0] += chi
        return core * chi, grads

    def params(self):
        return {"ramp_frac": self.ramp_frac}


@dataclass(frozen=True)
class ScaledFunction(TestFunction):
    """c * u for a catalogued u; used by scaling-identity checks."""

    inner: TestFunction = None
    factor: float = 1.0
    formula_id = "scaled"

    def __post_init__(self):
        super().__post_init__()

    @property
    def has_analytic_grad(self) -> bool:  # type: ignore[override]
        return self.inner.has_analytic_grad

    def __call__(self, pts):
        return self.factor * self.inner(pts)

    def grad(self, pts):
        return self.factor * self.inner.grad(pts)

    def _lip_bound(self) -> float:
        return abs(self.factor) * self.inner.lip_bound

    def label(self):
        return f"{self.factor:g}*{self.inner.label()}"


def scaled(u: TestFunction, factor: float) -> ScaledFunction:
    return ScaledFunction(space=u.space, support=u.support, inner=u, factor=factor)


# ---------------------------------------------------------------------------
# serialization
# ---------------------------------------------------------------------------

_FORMULAS = {
    "linear": LinearFunction,
    "smooth_bump": SmoothBump,
    "cone": ConeFunction,
    "product_sine": ProductSine,
    "heis_coord": HeisCoordinate,
}


def function_to_json(u: TestFunction) -> dict:
    return {
        "formula_id": u.formula_id,
        "params": u.params(),
        "support_box": {"lo": list(u.support.lo), "hi": list(u.support.hi)},
    }


def function_from_json(space: Space, doc: dict) -> TestFunction:
    try:
        formula = doc["formula_id"]
        box = doc.get("support_box")
        params = dict(doc.get("params") or {})
    except (KeyError, TypeError) as exc:
        raise SpaceError(f"malformed function descriptor: {exc}") from exc
    if formula not in _FORMULAS:
        raise SpaceError(f"unknown formula id {formula!r}")
    support = Box(tuple(box["lo"]), tuple(box["hi"])) if box else centered_support(space.window)
    for key in ("direction", "center"):
        if params.get(key) is not None:
            params[key] = tuple(params[key])
    return _FORMULAS[formula](space=space, support=support, **params)
