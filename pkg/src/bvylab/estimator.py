"""Estimators for the superlevel-set functional lambda^p (m x m)(E).

E is the set of pairs (x, y), x != y, with |u(x) - u(y)| >= lambda d(x,y)^(nb/p+1),
where nb defaults to the space's homogeneous dimension.  Two pair-measure
routes are provided:

* direct: i.i.d. window pairs, hit fraction times m(W)^2.  One pair cloud is
  shared across ladder rungs (streams are keyed by chunk, not rung), so
  monotonicity in lambda holds sample-exactly and scaled functions reuse the
  identical predicate.
* localized: since |u(x)-u(y)| <= L d implies d <= ((L+eps)/lambda)^(p/nb),
  the inner integral over y runs over a metric ball of that radius around x.
  Inner points are Lebesgue/Haar-uniform ball offsets; multiplying by the
  ball volume and the density (window indicator times weight) keeps the
  two-stage estimator unbiased even for truncated or weighted balls.

Reference quantities: the spherical moment constant, Lipschitz-energy
integrals, Minkowski-shell boundary integrals over tangent unit spheres, and
the tangent-space seminorm they assemble into.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .functions import TestFunction
from .rng import parallel_map, substream
from .spaces import (
    CapabilityError,
    EuclideanBox,
    BanachBox,
    Heisenberg1,
    Space,
    SpaceError,
    WeightedEuclidean,
)

__all__ = [
    "BVYConfig",
    "MCEstimate",
    "CurveRow",
    "RescaledCurve",
    "LimitFit",
    "LocalizationError",
    "pair_in_E",
    "localization_radius",
    "pair_measure_direct",
    "pair_measure_localized",
    "rescaled_curve",
    "limit_fit",
    "k_const",
    "k_const_mc",
    "grad_norm",
    "GradNorms",
    "shell_integral",
    "K_norm",
    "bound_check",
    "BoundSandwich",
]


class LocalizationError(SpaceError):
    """Localized estimator precondition (radius < support margin) violated."""


@dataclass(frozen=True)
class BVYConfig:
    """Ladder, budgets and seed for one estimation run."""

    p: float
    lambdas: tuple
    n_bar: float | None = None  # None: use the space's homogeneous dimension
    n_pairs: int = 1_000_000
    n_outer: int = 4096
    n_inner: int = 256
    epsilon_loc_frac: float = 0.05
    seed: int = 0
    estimator: str = "auto"  # auto | direct | localized
    n_chunks: int = 64
    n_shell: int = 65_536
    shell_eps: float = 0.02
    n_grad: int = 65_536

    def __post_init__(self):
        if self.p < 1:
            raise SpaceError("p must be >= 1")
        lams = tuple(float(x) for x in self.lambdas)
        if len(lams) < 1 or any(l <= 0 for l in lams):
            raise SpaceError("lambda ladder must be positive")
        if any(a >= b for a, b in zip(lams, lams[1:])):
            raise SpaceError("lambda ladder must be strictly increasing")
        object.__setattr__(self, "lambdas", lams)
        if self.estimator not in ("auto", "direct", "localized"):
            raise SpaceError(f"unknown estimator {self.estimator!r}")
        if not 0.0 < self.shell_eps <= 0.05:
            raise SpaceError("shell width must lie in (0, 0.05]")


@dataclass(frozen=True)
class MCEstimate:
    value: float
    stderr: float
    n: int
    seed: int

    def __post_init__(self):
        object.__setattr__(self, "value", float(self.value))
        object.__setattr__(self, "stderr", float(self.stderr))


@dataclass(frozen=True)
class CurveRow:
    lam: float
    estimate: MCEstimate
    rescaled: float
    estimator: str
    n_outer: int
    n_inner: int

    def __post_init__(self):
        object.__setattr__(self, "lam", float(self.lam))
        object.__setattr__(self, "rescaled", float(self.rescaled))


@dataclass(frozen=True)
class RescaledCurve:
    p: float
    n_bar: float
    rows: tuple

    CSV_HEADER = "lambda,M_hat,M_stderr,rescaled,estimator,n_outer,n_inner,seed"

    def to_csv(self) -> str:
        lines = [self.CSV_HEADER]
        for r in self.rows:
            lines.append(
                f"{r.lam!r},{r.estimate.value!r},{r.estimate.stderr!r},{r.rescaled!r},"
                f"{r.estimator},{r.n_outer},{r.n_inner},{r.estimate.seed}"
            )
        return "\n".join(lines) + "\n"

    @property
    def lambdas(self):
        return tuple(r.lam for r in self.rows)

    @property
    def rescaled_values(self):
        return tuple(r.rescaled for r in self.rows)


@dataclass(frozen=True)
class LimitFit:
    limit: float
    slope: float
    slope_stderr: float
    method: str
    residual_rms: float
    diverged_to_zero: bool
    n_plateau: int


def _n_bar(space: Space, cfg: BVYConfig) -> float:
    return float(cfg.n_bar) if cfg.n_bar is not None else float(space.hom_dim)


def _check_owner(space: Space, u: TestFunction):
    if u.space is not space and u.space.space_id != space.space_id:
        raise SpaceError("function does not live on this space")


def pair_in_E(space: Space, u: TestFunction, p: float, n_bar: float, lam: float, x, y):
    """Membership of (x, y) in the superlevel pair set; vectorized over rows."""
    _check_owner(space, u)
    x = np.atleast_2d(np.asarray(x, dtype=float))
    y = np.atleast_2d(np.asarray(y, dtype=float))
    d = space._metric(x, y)
    du = np.abs(u(x) - u(y))
    hit = (d > 0.0) & (du >= lam * d ** (n_bar / p + 1.0))
    return hit if hit.size > 1 else bool(hit[0])


def localization_radius(u: TestFunction, p: float, n_bar: float, lam: float,
                        epsilon_frac: float = 0.05) -> float:
    """Containment radius: pairs in E are closer than ((L + eps)/lambda)^(p/nb)."""
    bound = u.lip_bound * (1.0 + epsilon_frac)
    return (bound / lam) ** (p / n_bar)


def _chunk_sizes(total: int, n_chunks: int):
    n_chunks = max(1, min(n_chunks, total))
    base, extra = divmod(total, n_chunks)
    return [base + (1 if i < extra else 0) for i in range(n_chunks)]


def _density(space: Space, pts: np.ndarray) -> np.ndarray:
    """Measure density against Lebesgue/Haar at pts: window indicator times weight."""
    dens = space.window.contains(pts).astype(float)
    if isinstance(space, WeightedEuclidean):
        dens *= space.weight(pts)
    return dens


def _ball_offsets(space: Space, rng, r: float, n: int) -> np.ndarray:
    return space.tangent_sample_ball(rng, r, n)


def _offsets_to_points(space: Space, centers: np.ndarray, offsets: np.ndarray) -> np.ndarray:
    # offsets shaped (n_centers, n_inner, dim)
    if isinstance(space, Heisenberg1):
        from .spaces import _heis_mul

        return _heis_mul(centers[:, None, :], offsets)
    return centers[:, None, :] + offsets


def _direct_many(space: Space, u: TestFunction, cfg: BVYConfig, lambdas) -> list:
    _check_owner(space, u)
    mw = space.window_mass().value
    lam_arr = np.asarray(lambdas, dtype=float)
    n_bar = _n_bar(space, cfg)
    expo = n_bar / cfg.p + 1.0
    sizes = _chunk_sizes(cfg.n_pairs, cfg.n_chunks)

    def work(i):
        rng = substream(cfg.seed, 17, i)
        m = sizes[i]
        xs = space._sample_window_rng(rng, m)
        ys = space._sample_window_rng(rng, m)
        d = space._metric(xs, ys)
        du = np.abs(u(xs) - u(ys))
        ok = d > 0.0
        thresh = d[ok] ** expo
        return np.array([np.count_nonzero(du[ok] >= lam * thresh) for lam in lam_arr])

    hits = np.sum(parallel_map(work, len(sizes)), axis=0)
    total = cfg.n_pairs
    out = []
    for lam, h in zip(lam_arr, hits):
        phat = h / total
        stderr = mw * mw * math.sqrt(max(phat * (1.0 - phat), 0.0) / total)
        out.append(MCEstimate(mw * mw * phat, stderr, total, cfg.seed))
    return out


def pair_measure_direct(space: Space, u: TestFunction, cfg: BVYConfig, lam: float) -> MCEstimate:
    """m(W)^2 times the hit fraction of i.i.d. window pairs."""
    return _direct_many(space, u, cfg, [lam])[0]


def _localized_preflight(space: Space, u: TestFunction, cfg: BVYConfig, lam: float):
    if not space.supports_sample_ball:
        raise CapabilityError(f"{space.kind} does not support the localized estimator")
    n_bar = _n_bar(space, cfg)
    radius = localization_radius(u, cfg.p, n_bar, lam, cfg.epsilon_loc_frac)
    margin = u.margin
    if not radius < margin:
        raise LocalizationError(
            f"localization radius {radius:.4g} at lambda={lam:g} is not below "
            f"the support margin {margin:.4g}"
        )
    return n_bar, radius


def _localized_one(space: Space, u: TestFunction, cfg: BVYConfig, lam: float,
                   rung_index: int) -> MCEstimate:
    n_bar, radius = _localized_preflight(space, u, cfg, lam)
    mw = space.window_mass().value
    expo = n_bar / cfg.p + 1.0
    ball_vol = space.tangent_ball_volume(radius)
    sizes = _chunk_sizes(cfg.n_outer, cfg.n_chunks)

    def work(i):
        rng_x = substream(cfg.seed, 19, i)
        xs = space._sample_window_rng(rng_x, sizes[i])
        z = np.zeros(xs.shape[0])
        # points provably farther than the containment radius contribute zero
        active = space.dist_to_box_lower(xs, u.support) <= radius
        if np.any(active):
            xa = xs[active]
            rng_y = substream(cfg.seed, 23, rung_index, i)
            offs = _ball_offsets(space, rng_y, radius, xa.shape[0] * cfg.n_inner)
            offs = offs.reshape(xa.shape[0], cfg.n_inner, -1)
            ys = _offsets_to_points(space, xa, offs)
            flat = ys.reshape(-1, ys.shape[-1])
            dens = _density(space, flat)
            du = np.abs(u(flat) - np.repeat(u(xa), cfg.n_inner))
            d = space._metric(np.repeat(xa, cfg.n_inner, axis=0), flat)
            good = d > 0.0
            contrib = np.zeros(flat.shape[0])
            contrib[good] = dens[good] * (du[good] >= lam * d[good] ** expo)
            z[active] = ball_vol * contrib.reshape(xa.shape[0], cfg.n_inner).mean(axis=1)
        return z

    zs = np.concatenate(parallel_map(work, len(sizes)))
    value = mw * float(np.mean(zs))
    stderr = mw * float(np.std(zs, ddof=1)) / math.sqrt(len(zs)) if len(zs) > 1 else 0.0
    return MCEstimate(value, stderr, cfg.n_outer * cfg.n_inner, cfg.seed)


def pair_measure_localized(space: Space, u: TestFunction, cfg: BVYConfig, lam: float) -> MCEstimate:
    """Two-stage near-diagonal estimator of the same pair measure."""
    if lam not in cfg.lambdas:
        raise SpaceError("lambda must be a ladder rung of the config")
    return _localized_one(space, u, cfg, lam, cfg.lambdas.index(lam))


def _rung_estimator(space: Space, u: TestFunction, cfg: BVYConfig, lam: float) -> str:
    if cfg.estimator == "direct":
        return "direct"
    try:
        _localized_preflight(space, u, cfg, lam)
        return "localized"
    except (CapabilityError, LocalizationError):
        if cfg.estimator == "localized":
            raise
        return "direct"


def rescaled_curve(space: Space, u: TestFunction, cfg: BVYConfig) -> RescaledCurve:
    """One row per ladder rung with the best available estimator."""
    n_bar = _n_bar(space, cfg)
    kinds = [_rung_estimator(space, u, cfg, lam) for lam in cfg.lambdas]
    direct_lams = [lam for lam, k in zip(cfg.lambdas, kinds) if k == "direct"]
    direct_vals = iter(_direct_many(space, u, cfg, direct_lams) if direct_lams else [])
    rows = []
    for idx, (lam, kind) in enumerate(zip(cfg.lambdas, kinds)):
        if kind == "direct":
            est = next(direct_vals)
            rows.append(CurveRow(lam, est, lam**cfg.p * est.value, "direct", cfg.n_pairs, 0))
        else:
            est = _localized_one(space, u, cfg, lam, idx)
            rows.append(CurveRow(lam, est, lam**cfg.p * est.value, "localized", cfg.n_outer, cfg.n_inner))
    return RescaledCurve(p=cfg.p, n_bar=n_bar, rows=tuple(rows))


def limit_fit(curve: RescaledCurve) -> LimitFit:
    """Plateau median of the top third plus a log-log least-squares slope."""
    vals = np.asarray(curve.rescaled_values, dtype=float)
    lams = np.asarray(curve.lambdas, dtype=float)
    k = len(vals)
    if k < 3:
        raise SpaceError("limit extraction needs at least 3 ladder rungs")
    n_plateau = math.ceil(k / 3)
    limit = float(np.median(vals[-n_plateau:]))
    if np.any(vals <= 0.0):
        return LimitFit(limit, math.nan, math.nan, "plateau_median",
                        math.nan, diverged_to_zero=True, n_plateau=n_plateau)
    x = np.log(lams)
    y = np.log(vals)
    A = np.stack([x, np.ones_like(x)], axis=1)
    coef, res, *_ = np.linalg.lstsq(A, y, rcond=None)
    slope = float(coef[0])
    rss = float(res[0]) if res.size else float(np.sum((y - A @ coef) ** 2))
    dof = max(k - 2, 1)
    sxx = float(np.sum((x - x.mean()) ** 2))
    slope_stderr = math.sqrt(rss / dof / sxx) if sxx > 0 else math.inf
    return LimitFit(limit, slope, slope_stderr, "plateau_median",
                    math.sqrt(rss / k), diverged_to_zero=False, n_plateau=n_plateau)


# ---------------------------------------------------------------------------
# reference quantities
# ---------------------------------------------------------------------------


def k_const(p: float, n_dim: int) -> float:
    """Spherical moment: integral of |e.w|^p over the Euclidean unit sphere."""
    if n_dim < 1 or int(n_dim) != n_dim:
        raise SpaceError("dimension must be a positive integer")
    n_dim = int(n_dim)
    return 2.0 * math.pi ** ((n_dim - 1) / 2.0) * math.gamma((p + 1) / 2.0) / math.gamma((n_dim + p) / 2.0)


def k_const_mc(p: float, n_dim: int, n: int = 400_000, seed: int = 0) -> float:
    """Sphere-MC oracle for k_const: surface area times the mean of |w_1|^p."""
    if n_dim == 1:
        return 2.0
    rng = substream(seed, 37)
    g = rng.standard_normal((n, n_dim))
    g /= np.linalg.norm(g, axis=1, keepdims=True)
    area = 2.0 * math.pi ** (n_dim / 2.0) / math.gamma(n_dim / 2.0)
    return area * float(np.mean(np.abs(g[:, 0]) ** p))


@dataclass(frozen=True)
class GradNorms:
    lip_p: MCEstimate       # integral of Lip(u)^p dm
    lip_ratio: MCEstimate   # integral of lip^(N+p)/Lip^N dm, 0/0 := 0


def grad_norm(space: Space, u: TestFunction, p: float, cfg: BVYConfig) -> GradNorms:
    """Window MC of the Lipschitz energy and of the lower-bound integrand."""
    _check_owner(space, u)
    if not u.has_analytic_grad:
        raise CapabilityError("grad_norm needs analytic pointwise constants")
    mw = space.window_mass().value
    N = float(space.hom_dim)
    sizes = _chunk_sizes(cfg.n_grad, cfg.n_chunks)

    def work(i):
        rng = substream(cfg.seed, 29, i)
        xs = space._sample_window_rng(rng, sizes[i])
        lip = u.pointwise_lip(xs)
        return lip

    lip = np.concatenate(parallel_map(work, len(sizes)))
    up = lip**p
    # smooth catalogue: lower and upper pointwise constants coincide, so the
    # ratio integrand lip^(N+p)/Lip^N reduces to lip^p (and 0/0 to 0)
    ratio = np.where(lip > 0.0, lip ** (N + p) / np.where(lip > 0.0, lip, 1.0) ** N, 0.0)
    n = len(lip)

    def agg(vals):
        return MCEstimate(mw * float(np.mean(vals)),
                          mw * float(np.std(vals, ddof=1)) / math.sqrt(n),
                          n, cfg.seed)

    return GradNorms(lip_p=agg(up), lip_ratio=agg(ratio))


def _require_tangent(space: Space):
    if isinstance(space, WeightedEuclidean) or not isinstance(space, (EuclideanBox, BanachBox, Heisenberg1)):
        raise CapabilityError(f"{space.kind} has no homogeneous tangent structure")


def _shell_directions(space: Space, rng, n: int) -> np.ndarray:
    """Unit-sphere points with the angular law of a uniform Minkowski shell.

    Radially projecting a volume-uniform ball point yields the same sphere
    distribution as projecting a uniform shell point (the radial and angular
    factors are independent), so every draw is usable.
    """
    pts = space.tangent_sample_ball(rng, 1.0, n)
    norms = space.tangent_norm(pts)
    keep = norms > 0.0
    return space.tangent_normalize(pts[keep])


def _shell_prefactor(space: Space, width: float) -> float:
    return (space.tangent_ball_volume(1.0 + width) - space.tangent_ball_volume(1.0)) / width


def shell_integral(space: Space, f, eps: float = 0.02, n: int = 65_536, seed: int = 0) -> float:
    """Boundary integral over the tangent unit sphere by Minkowski shells.

    Computes (1/eps) integral over B_(1+eps) \\ B_1 of f(radial projection),
    Richardson-extrapolated from widths eps and eps/2 to cancel the O(eps)
    shell-growth bias.  The shell integral factorizes into the exact shell
    volume times the mean of f under the projected angular law, which is what
    gets sampled.
    """
    _require_tangent(space)
    if not 0.0 < eps <= 0.05:
        raise SpaceError("shell width must lie in (0, 0.05]")

    def one(width, stream):
        rng = substream(seed, 31, stream)
        dirs = _shell_directions(space, rng, n)
        return _shell_prefactor(space, width) * float(np.mean(f(dirs)))

    return 2.0 * one(eps / 2.0, 1) - one(eps, 0)


def K_norm(space: Space, u: TestFunction, p: float, cfg: BVYConfig) -> MCEstimate:
    """Tangent seminorm: window MC of shell integrals of the blow-ups, over N."""
    _check_owner(space, u)
    _require_tangent(space)
    N = float(space.hom_dim)
    mw = space.window_mass().value

    shells = []
    for stream, width in ((0, cfg.shell_eps), (1, cfg.shell_eps / 2.0)):
        rng = substream(cfg.seed, 31, stream)
        dirs = _shell_directions(space, rng, cfg.n_shell)
        shells.append((dirs, _shell_prefactor(space, width)))

    sizes = _chunk_sizes(cfg.n_outer, cfg.n_chunks)

    def work(i):
        rng = substream(cfg.seed, 41, i)
        xs = space._sample_window_rng(rng, sizes[i])
        coeffs = u.blowup_coeffs(xs)
        per_eps = []
        for sphere, scale in shells:
            vals = np.abs(space.blowup_apply(coeffs, sphere)) ** p
            per_eps.append(scale * vals.mean(axis=1))
        # Richardson in the shell width, pointwise in x
        return (2.0 * per_eps[1] - per_eps[0]) / N

    v = np.concatenate(parallel_map(work, len(sizes)))
    value = mw * float(np.mean(v))
    stderr_outer = mw * float(np.std(v, ddof=1)) / math.sqrt(len(v)) if len(v) > 1 else 0.0
    return MCEstimate(value, stderr_outer, cfg.n_outer * cfg.n_shell, cfg.seed)


@dataclass(frozen=True)
class BoundSandwich:
    """Two-sided bound check report; never raises on a failed sandwich."""

    space_id: str
    function: str
    p: float
    N: float
    a_hat: float
    b_hat: float
    c_lower: float
    c_upper: float
    lower: float
    upper: float
    limit: float
    fit: LimitFit
    curve: RescaledCurve
    lip_p: float
    lip_ratio: float
    passed: bool


def bound_check(space: Space, u: TestFunction, cfg: BVYConfig,
                a_hat: float, b_hat: float) -> BoundSandwich:
    """Check C1 * lower-integrand <= fitted limit <= 2 b * Lipschitz energy."""
    N = float(space.hom_dim)
    cfg_n = replace(cfg, n_bar=N)
    curve = rescaled_curve(space, u, cfg_n)
    fit = limit_fit(curve)
    gn = grad_norm(space, u, cfg.p, cfg_n)
    c_lower = a_hat / (2.0 ** (5.0 * N) * 8.0**cfg.p)
    c_upper = 2.0 * b_hat
    lower = c_lower * gn.lip_ratio.value
    upper = c_upper * gn.lip_p.value
    passed = bool(lower <= fit.limit <= upper)
    return BoundSandwich(
        space_id=space.space_id,
        function=u.label(),
        p=cfg.p,
        N=N,
        a_hat=a_hat,
        b_hat=b_hat,
        c_lower=c_lower,
        c_upper=c_upper,
        lower=lower,
        upper=upper,
        limit=fit.limit,
        fit=fit,
        curve=curve,
        lip_p=gn.lip_p.value,
        lip_ratio=gn.lip_ratio.value,
        passed=passed,
    )
