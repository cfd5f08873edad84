"""Speeds and radii around an invaded critical point e, and the four-case classification.

All functions take the potential together with a CriticalPoint ``e``; values of
V are always used relative to V(e), so callers need not pre-normalize.
"""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.optimize import minimize, minimize_scalar

from .errors import ConfigError, InconsistentInputError, SearchBoxError
from .potential import CriticalPoint, PotentialSpec, c_lin_from_curvature

RADIUS_TOL = 1e-10
HULL_EXCLUDE = 1e-8


def lambda_pm(c: float, mu: float):
    """Roots (plus, minus) of lam^2 + c lam - mu = 0; complex conjugates when mu < -c^2/4."""
    if not c > 0:
        raise ConfigError("speed must be positive")
    disc = 0.25 * c * c + mu
    if disc >= 0:
        s = np.sqrt(disc)
        minus = -0.5 * c - s
        # plus = -c/2 + s written without cancellation
        plus = mu / (0.5 * c + s) if (0.5 * c + s) > 0 else 0.0
        return float(plus), float(minus)
    s = 1j * np.sqrt(-disc)
    return complex(-0.5 * c + s), complex(-0.5 * c - s)


def c_lin_of_mu(mu: float) -> float:
    return c_lin_from_curvature(mu)


# -- ray utilities ----------------------------------------------------------

def sphere_directions(dim: int, per_dim: int = 64) -> np.ndarray:
    """Deterministic unit directions: +-1 in d=1, per_dim angles per hyperspherical coordinate."""
    if dim == 1:
        return np.array([[1.0], [-1.0]])
    # azimuth over [0, 2pi), polar angles over (0, pi) including pi/2 so the coordinate axes appear
    az = 2 * np.pi * np.arange(per_dim) / per_dim
    pol = np.pi * np.arange(per_dim + 1)[1:-1] / per_dim
    grids = np.meshgrid(*([pol] * (dim - 2) + [az]), indexing="ij")
    angles = np.stack([g.ravel() for g in grids], axis=-1)
    n = angles.shape[0]
    out = np.ones((n, dim))
    for k in range(dim - 1):
        out[:, k] *= np.cos(angles[:, k])
        out[:, k + 1:] *= np.sin(angles[:, k])[:, None]
    # axes may be missed by the polar grid in d >= 3; add them explicitly
    axes = np.vstack([np.eye(dim), -np.eye(dim)])
    return np.vstack([out, axes])


def _first_violation_radius(pred, e: np.ndarray, dirs: np.ndarray, r_max: float, n_radial: int) -> float:
    """Smallest r along any ray with pred(e + r s) true; grid scan then bisection to RADIUS_TOL."""
    r = np.linspace(0.0, r_max, n_radial + 1)[1:]
    pts = e[None, None, :] + r[None, :, None] * dirs[:, None, :]
    viol = pred(pts.reshape(-1, e.size)).reshape(len(dirs), len(r))
    best = np.inf
    for i, s in enumerate(dirs):
        hit = np.nonzero(viol[i])[0]
        if hit.size == 0:
            continue
        j = hit[0]
        hi = r[j]
        if hi >= best:
            continue
        lo = r[j - 1] if j > 0 else 0.0
        while hi - lo > RADIUS_TOL:
            mid = 0.5 * (lo + hi)
            if pred((e + mid * s)[None, :])[0]:
                hi = mid
            else:
                lo = mid
        best = min(best, hi)
    return best


def _mu0(p: PotentialSpec, e: CriticalPoint, c0: float) -> float:
    if not c0 > e.c_lin:
        raise InconsistentInputError(f"c0 = {c0} must exceed c_lin = {e.c_lin}")
    return -0.25 * c0 * c0


def delta_stab(p: PotentialSpec, e: CriticalPoint, c0: float, r_max: float = 10.0,
               n_radial: int = 20000, per_dim: int = 64) -> float:
    """inf |u-e| over u with V(u)-V(e) < mu0 |u-e|^2 / 2, mu0 = -c0^2/4."""
    mu0 = _mu0(p, e, c0)
    loc = e.location

    def pred(u):
        dev = u - loc
        return p.value(u) - e.value < 0.5 * mu0 * np.sum(dev * dev, axis=-1)

    rad = _first_violation_radius(pred, loc, sphere_directions(p.dim, per_dim), r_max, n_radial)
    if not np.isfinite(rad):
        raise InconsistentInputError(
            f"no point violates the quadratic bound for c0 = {c0} within radius {r_max} (c0 >= c_quad_hull?)")
    return rad


def delta_hess(p: PotentialSpec, e: CriticalPoint, c0: float, r_max: float = 10.0,
               n_radial: int = 20000, per_dim: int = 64) -> float:
    """inf |u-e| over u where the least Hessian eigenvalue drops below mu0."""
    mu0 = _mu0(p, e, c0)
    rad = _first_violation_radius(lambda u: p.min_hessian_eig(u) < mu0, e.location,
                                  sphere_directions(p.dim, per_dim), r_max, n_radial)
    if not np.isfinite(rad):
        raise InconsistentInputError(f"Hessian never drops below mu0 for c0 = {c0} within radius {r_max}")
    return rad


def v_min_relative(p: PotentialSpec, e: CriticalPoint) -> float:
    if p.v_min is None:
        p = p.with_v_min()
    return float(p.v_min - e.value)


def c_upp(p: PotentialSpec, e: CriticalPoint, c0: float, d_stab: float | None = None) -> float:
    """Upper bound 2 sqrt|V_min| / delta_stab(c0) on the speed of any pushed front faster than c0."""
    if d_stab is None:
        d_stab = delta_stab(p, e, c0)
    return 2.0 * np.sqrt(abs(v_min_relative(p, e))) / d_stab


def c_upp_diag(p: PotentialSpec, e: CriticalPoint, c_quad: float, n_scan: int = 64,
               bisect_steps: int = 40) -> tuple[float | None, tuple[float, float] | None]:
    """sup{c0 in (c_lin, c_quad) : c0 <= c_upp(c0)} and the bracket it was located in.

    Returns (None, None) when the interval is empty or no c0 qualifies.
    """
    lo_c, hi_c = e.c_lin, c_quad
    if not hi_c > lo_c:
        return None, None
    grid = lo_c + (hi_c - lo_c) * np.arange(1, n_scan + 1) / (n_scan + 1)

    def ok(c0):
        try:
            return c0 <= c_upp(p, e, c0)
        except InconsistentInputError:
            return False

    flags = [ok(c0) for c0 in grid]
    if not flags[0]:
        return None, (lo_c, float(grid[0]))
    if all(flags):
        return float(hi_c), (float(grid[-1]), float(hi_c))
    j = flags.index(False)
    a, b = float(grid[j - 1]), float(grid[j])
    for _ in range(bisect_steps):
        m = 0.5 * (a + b)
        if ok(m):
            a = m
        else:
            b = m
    return a, (a, b)


# -- lower quadratic hull ---------------------------------------------------

def mu_quad_hull(p: PotentialSpec, e: CriticalPoint, box=(-3.0, 3.0), n_grid: int = 6001,
                 per_dim: int = 64) -> float:
    """inf over u != e of 2 (V(u)-V(e)) / |u-e|^2 on the search box, capped by mu_1.

    Raises SearchBoxError if the infimum sits on the box boundary.
    """
    loc = e.location
    mu1 = e.mu1
    lo, hi = map(float, box)
    if p.dim == 1:
        u = np.linspace(lo, hi, n_grid)
        u = u[np.abs(u - loc[0]) >= HULL_EXCLUDE]

        def ratio(x):
            x = np.asarray(x, dtype=float)
            return 2.0 * (p.value(x) - e.value) / (x - loc[0]) ** 2

        g = ratio(u)
        inner = g[1:-1]
        i = 1 + int(np.argmin(inner))
        # a boundary value only counts when it is strictly below the interior (flat ratios tie)
        if min(g[0], g[-1]) < inner.min() - 1e-12 * max(1.0, abs(inner.min())):
            raise SearchBoxError(f"quadratic-hull minimizer on the search box boundary {box}")
        # neighbours straddling e: infimum is the limit at e, i.e. mu_1
        if (u[i - 1] - loc[0]) * (u[i + 1] - loc[0]) < 0:
            return float(min(mu1, g[i]))
        try:
            res = minimize_scalar(lambda x: float(ratio(x)), bracket=(u[i - 1], u[i], u[i + 1]),
                                  method="golden", tol=1e-12)
        except ValueError:
            # flat ratio: no interior bracket, the grid value is already the infimum
            return float(min(mu1, g[i]))
        return float(min(mu1, res.fun, g[i]))
    dirs = sphere_directions(p.dim, per_dim)
    r_max = max(abs(lo), abs(hi))
    r = np.linspace(0.0, r_max, 801)[1:]
    pts = loc[None, None, :] + r[None, :, None] * dirs[:, None, :]
    vals = (p.value(pts.reshape(-1, p.dim)).reshape(len(dirs), len(r)) - e.value) * 2.0 / r[None, :] ** 2
    i, j = np.unravel_index(int(np.argmin(vals[:, :-1])), vals[:, :-1].shape)
    if vals[:, -1].min() < vals[i, j] - 1e-12 * max(1.0, abs(vals[i, j])):
        raise SearchBoxError(f"quadratic-hull minimizer on the search radius {r_max}")
    best = float(vals[i, j])

    def f(x):
        dev = x - loc
        n2 = float(dev @ dev)
        if n2 < HULL_EXCLUDE ** 2:
            return mu1
        return 2.0 * (float(p.value(x[None, :])[0]) - e.value) / n2

    res = minimize(f, pts[i, j], method="Nelder-Mead", options={"xatol": 1e-10, "fatol": 1e-14, "maxiter": 4000})
    return float(min(mu1, best, res.fun))


# -- atlas --------------------------------------------------------------------

@dataclass
class SpeedAtlas:
    c_lin: float
    mu_quad_hull: float
    c_quad_hull: float
    c_nonlin_lo: float | None = None
    c_nonlin_hi: float | None = None
    c_nonlin_method: str | None = None
    c_upp_diag: float | None = None
    c_upp_diag_bracket: tuple[float, float] | None = None
    case: int | None = None
    radii: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "c_lin": self.c_lin,
            "mu_quad_hull": self.mu_quad_hull,
            "c_quad_hull": self.c_quad_hull,
            "c_nonlin": {"lo": self.c_nonlin_lo, "hi": self.c_nonlin_hi, "method": self.c_nonlin_method},
            "c_upp_diag": self.c_upp_diag,
            "case": self.case,
            "radii": [dict(r) for r in self.radii],
        }

    def to_json(self, **kw) -> str:
        return json.dumps(self.to_dict(), **kw)

    def check_invariants(self, tol: float | None = None) -> list[str]:
        """Violated ordering invariants, as messages (empty list when consistent)."""
        tol = 1e-3 * self.c_quad_hull if tol is None else tol
        msgs = []
        if self.c_nonlin_lo is not None:
            if self.c_lin > self.c_nonlin_lo + tol:
                msgs.append("c_lin exceeds c_nonlin lower end")
            if self.c_nonlin_hi > self.c_quad_hull + tol:
                msgs.append("c_nonlin upper end exceeds c_quad_hull")
            if self.c_nonlin_lo > self.c_nonlin_hi:
                msgs.append("c_nonlin bracket reversed")
        for r in self.radii:
            if r["delta_hess"] > r["delta_stab"] + RADIUS_TOL:
                msgs.append(f"delta_hess > delta_stab at c0 = {r['c0']}")
        return msgs


def radii_row(p: PotentialSpec, e: CriticalPoint, c0: float) -> dict:
    ds = delta_stab(p, e, c0)
    dh = delta_hess(p, e, c0)
    return {"c0": float(c0), "delta_stab": ds, "delta_hess": dh, "c_upp": c_upp(p, e, c0, ds)}


def classify_case(atlas: SpeedAtlas, tol: float | None = None) -> int:
    """Case 1..4 from the equality/strictness pattern of (0, c_lin, c_nonlin, c_quad)."""
    if atlas.c_nonlin_lo is None or atlas.c_nonlin_hi is None:
        raise InconsistentInputError("atlas has no c_nonlin bracket")
    tol = 1e-3 * atlas.c_quad_hull if tol is None else tol
    cl, lo, hi, cq = atlas.c_lin, atlas.c_nonlin_lo, atlas.c_nonlin_hi, atlas.c_quad_hull
    lin_zero = cl <= tol
    lin_eq = hi - cl <= tol
    lin_lt = lo - cl > tol
    quad_eq = cq - lo <= tol
    quad_lt = cq - hi > tol
    if lin_zero and hi > tol and quad_lt:
        return 1
    if not lin_zero and lin_eq and quad_eq:
        return 2
    if not lin_zero and lin_eq and quad_lt:
        return 3
    if not lin_zero and lin_lt and quad_lt:
        return 4
    raise InconsistentInputError(
        f"speeds (c_lin={cl}, c_nonlin=[{lo}, {hi}], c_quad={cq}) match no case at tol={tol}")


def merge_nonlin_brackets(a: tuple[float, float], b: tuple[float, float], tol: float = 0.0) -> tuple[float, float]:
    """Intersect two c_nonlin brackets; disjoint brackets beyond tol are an error."""
    lo, hi = max(a[0], b[0]), min(a[1], b[1])
    if lo > hi + tol:
        raise InconsistentInputError(f"c_nonlin brackets {a} and {b} disagree")
    if lo > hi:
        lo = hi = 0.5 * (lo + hi)
    return lo, hi


def build_atlas(p: PotentialSpec, e: CriticalPoint, c0_list=(), box=(-3.0, 3.0),
                nonlin=None, with_upp_diag: bool = True) -> SpeedAtlas:
    """Populate every speed that can be computed from V alone; c_nonlin comes from the caller.

    ``nonlin`` is an optional (lo, hi, method) triple.
    """
    mu_q = mu_quad_hull(p, e, box)
    atlas = SpeedAtlas(c_lin=e.c_lin, mu_quad_hull=mu_q, c_quad_hull=c_lin_of_mu(mu_q))
    for c0 in c0_list:
        atlas.radii.append(radii_row(p, e, c0))
    if with_upp_diag and atlas.c_quad_hull > atlas.c_lin:
        atlas.c_upp_diag, atlas.c_upp_diag_bracket = c_upp_diag(p, e, atlas.c_quad_hull)
    if nonlin is not None:
        atlas.c_nonlin_lo, atlas.c_nonlin_hi, atlas.c_nonlin_method = nonlin
        atlas.case = classify_case(atlas)
    return atlas
