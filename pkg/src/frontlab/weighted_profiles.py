"""Uniform-grid profiles and exponentially weighted functionals.

Weighted integrals use the weight exp(c (x - xi_ref)) and are accumulated in
the log domain: each contribution is sign(f) * exp(c (x - xi_ref) + log|f|),
so large exponents are harmless wherever the integrand is tiny. Quadrature is
the trapezoid rule on nodes; derivatives are central differences, one-sided at
the ends, unless the profile carries an exact derivative.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, WeightOverflowError
from .potential import PotentialSpec
from .speed_atlas import lambda_pm

LOG_OVERFLOW = 700.0


@dataclass(frozen=True, eq=False)
class GridProfile:
    x0: float
    dx: float
    values: np.ndarray  # (N, d)
    e: np.ndarray  # (d,)
    deriv: np.ndarray | None = None  # exact first derivative, same shape as values

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=float)
        if vals.ndim == 1:
            vals = vals[:, None]
        e = np.atleast_1d(np.asarray(self.e, dtype=float))
        if not self.dx > 0:
            raise ConfigError("grid spacing must be positive")
        if vals.shape[0] < 8:
            raise ConfigError("a profile needs at least 8 nodes")
        if vals.shape[1] != e.size:
            raise ConfigError("reference point dimension does not match node values")
        object.__setattr__(self, "values", vals)
        object.__setattr__(self, "e", e)
        if self.deriv is not None:
            der = np.asarray(self.deriv, dtype=float).reshape(vals.shape)
            object.__setattr__(self, "deriv", der)

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def dim(self) -> int:
        return self.values.shape[1]

    @property
    def x(self) -> np.ndarray:
        return self.x0 + self.dx * np.arange(self.n)

    @property
    def x_end(self) -> float:
        return self.x0 + self.dx * (self.n - 1)

    def deviation(self) -> np.ndarray:
        return self.values - self.e[None, :]

    def derivative(self) -> np.ndarray:
        if self.deriv is not None:
            return self.deriv
        return np.gradient(self.values, self.dx, axis=0, edge_order=2)

    def second_derivative(self) -> np.ndarray:
        w, h = self.values, self.dx
        out = np.empty_like(w)
        out[1:-1] = (w[2:] - 2 * w[1:-1] + w[:-2]) / h ** 2
        out[0] = (2 * w[0] - 5 * w[1] + 4 * w[2] - w[3]) / h ** 2
        out[-1] = (2 * w[-1] - 5 * w[-2] + 4 * w[-3] - w[-4]) / h ** 2
        return out

    def shifted(self, k: int) -> "GridProfile":
        """Translate the profile right by k nodes, filling vacated nodes with e."""
        dev = self.deviation()
        if k > 0 and np.any(dev[-k:] != 0):
            raise ConfigError("shift would push a nonzero deviation off the grid")
        if k < 0 and np.any(dev[:-k] != 0):
            raise ConfigError("shift would push a nonzero deviation off the grid")
        out = np.broadcast_to(self.e, self.values.shape).copy()
        der = None if self.deriv is None else np.zeros_like(self.deriv)
        if k >= 0:
            out[k:] = self.values[:self.n - k]
            if der is not None:
                der[k:] = self.deriv[:self.n - k]
        else:
            out[:k] = self.values[-k:]
            if der is not None:
                der[:k] = self.deriv[-k:]
        return GridProfile(self.x0, self.dx, out, self.e, der)

    def restricted(self, i0: int, i1: int) -> "GridProfile":
        der = None if self.deriv is None else self.deriv[i0:i1]
        return GridProfile(self.x0 + i0 * self.dx, self.dx, self.values[i0:i1], self.e, der)


def profile_from_function(fn, x0: float, x1: float, dx: float, e, deriv=None) -> GridProfile:
    n = int(round((x1 - x0) / dx)) + 1
    x = x0 + dx * np.arange(n)
    vals = np.asarray(fn(x), dtype=float)
    der = None if deriv is None else np.asarray(deriv(x), dtype=float)
    return GridProfile(x0, dx, vals.reshape(n, -1), e, None if der is None else der.reshape(n, -1))


def trapezoid_weights(n: int, dx: float) -> np.ndarray:
    w = np.full(n, dx)
    w[0] = w[-1] = 0.5 * dx
    return w


def weighted_trapz(f: np.ndarray, x: np.ndarray, c: float, xi_ref: float, dx: float) -> float:
    """Trapezoid integral of exp(c (x - xi_ref)) f(x), evaluated in the log domain."""
    f = np.asarray(f, dtype=float)
    a = c * (x - xi_ref)
    nz = f != 0
    if not np.any(nz):
        return 0.0
    expo = np.full(f.shape, -np.inf)
    expo[nz] = a[nz] + np.log(np.abs(f[nz]))
    if np.max(expo) > LOG_OVERFLOW:
        raise WeightOverflowError(
            f"weight exponent {np.max(expo):.1f} overflows at c = {c}; choose a larger xi_ref")
    contrib = np.sign(f) * np.exp(expo)
    return float(np.dot(trapezoid_weights(len(f), dx), contrib))


@dataclass(frozen=True)
class WeightedEnergy:
    value: float
    kinetic: float
    potential: float
    xi_ref: float
    c: float

    def rereferenced(self, xi_ref: float) -> "WeightedEnergy":
        fac = float(np.exp(self.c * (self.xi_ref - xi_ref)))
        return WeightedEnergy(self.value * fac, self.kinetic * fac, self.potential * fac, xi_ref, self.c)

    def to_dict(self) -> dict:
        return {"c": self.c, "xi_ref": self.xi_ref, "value": self.value,
                "kinetic": self.kinetic, "potential": self.potential}


def _potential_rel(w: GridProfile, p: PotentialSpec) -> np.ndarray:
    return p.value(w.values) - float(p.value(w.e[None, :])[0])


def energy(w: GridProfile, c: float, p: PotentialSpec, xi_ref: float = 0.0) -> WeightedEnergy:
    """Weighted Lagrangian: trapezoid of exp(c(x - xi_ref)) (|w'|^2/2 + V(w) - V(e))."""
    x = w.x
    kin = weighted_trapz(0.5 * np.sum(w.derivative() ** 2, axis=1), x, c, xi_ref, w.dx)
    pot = weighted_trapz(_potential_rel(w, p), x, c, xi_ref, w.dx)
    return WeightedEnergy(kin + pot, kin, pot, float(xi_ref), float(c))


def weighted_h1_sq(w: GridProfile, c: float, xi_ref: float = 0.0) -> float:
    f = np.sum(w.deviation() ** 2, axis=1) + np.sum(w.derivative() ** 2, axis=1)
    return weighted_trapz(f, w.x, c, xi_ref, w.dx)


def kinetic_part(w: GridProfile, c: float, xi_ref: float = 0.0) -> float:
    return weighted_trapz(0.5 * np.sum(w.derivative() ** 2, axis=1), w.x, c, xi_ref, w.dx)


def dissipation_functional(w: GridProfile, c: float, p: PotentialSpec, xi_ref: float = 0.0) -> float:
    """Trapezoid of exp(c(x - xi_ref)) |-grad V(w) + c w' + w''|^2."""
    r = -p.gradient(w.values) + c * w.derivative() + w.second_derivative()
    return weighted_trapz(np.sum(r * r, axis=1), w.x, c, xi_ref, w.dx)


def dissipation_alternative(w: GridProfile, c: float, p: PotentialSpec, xi_ref: float = 0.0) -> float:
    """Same functional after integration by parts: |grad V|^2 + 2 D2V(w') . w' + |w''|^2."""
    g = p.gradient(w.values)
    h = p.hessian(w.values)
    wp = w.derivative()
    wpp = w.second_derivative()
    f = np.sum(g * g, axis=1) + 2 * np.einsum("ni,nij,nj->n", wp, h, wp) + np.sum(wpp * wpp, axis=1)
    return weighted_trapz(f, w.x, c, xi_ref, w.dx)


def _node_at(w: GridProfile, xi0: float) -> int:
    i = int(round((xi0 - w.x0) / w.dx))
    if i < 0 or i >= w.n - 1:
        raise ConfigError(f"xi0 = {xi0} is outside the grid")
    return i


def _check_right_support(w: GridProfile, margin: int = 2):
    if np.any(np.abs(w.deviation()[-margin:]) > 0):
        raise ConfigError("deviation from e touches the right boundary; support must be inside the grid")


def poincare_gap(w: GridProfile, c: float, xi0: float, lam: float) -> float:
    """LHS - RHS of the weighted Poincare inequality on [xi0, inf), weights referenced at xi0.

    xi0 is snapped to the nearest node.
    """
    if not lam > 0:
        raise ConfigError("lambda must be positive")
    _check_right_support(w)
    i = _node_at(w, xi0)
    x = w.x[i:]
    ref = x[0]
    wp = w.derivative()[i:]
    dev = w.deviation()[i:]
    lhs = weighted_trapz(np.sum(wp ** 2, axis=1), x, c, ref, w.dx)
    boundary = lam * float(np.sum(dev[0] ** 2))
    bulk = lam * (c - lam) * weighted_trapz(np.sum(dev ** 2, axis=1), x, c, ref, w.dx)
    return lhs - boundary - bulk


def poincare_polar_square(w: GridProfile, c: float, xi0: float, lam: float) -> float:
    """Trapezoid of exp(c(x - xi0)) |w' + lam (w - e)|^2 on [xi0, inf); equals the gap exactly
    in the continuum."""
    i = _node_at(w, xi0)
    x = w.x[i:]
    r = w.derivative()[i:] + lam * w.deviation()[i:]
    return weighted_trapz(np.sum(r * r, axis=1), x, c, x[0], w.dx)


def smooth_step(s: np.ndarray) -> np.ndarray:
    """C-infinity ramp: 1 for s <= 0, 0 for s >= 1, built from exp(-1/t)."""
    s = np.asarray(s, dtype=float)

    def psi(t):
        out = np.zeros_like(t)
        pos = t > 0
        out[pos] = np.exp(-1.0 / t[pos])
        return out

    a, b = psi(1.0 - s), psi(s)
    return a / (a + b)


def cutoff_truncate(w: GridProfile, x_cut: float, ramp_width: float) -> GridProfile:
    """e + chi(x - x_cut) (w - e) with chi a smooth ramp of the given width; exactly e right of it."""
    if not ramp_width > 0:
        raise ConfigError("ramp width must be positive")
    if x_cut < w.x0 or x_cut + ramp_width > w.x_end:
        raise ConfigError("cutoff ramp does not fit in the grid")
    chi = smooth_step((w.x - x_cut) / ramp_width)
    vals = w.e[None, :] + chi[:, None] * w.deviation()
    vals[chi == 0] = w.e
    der = None
    if w.deriv is not None:
        s = (w.x - x_cut) / ramp_width
        dchi = np.gradient(chi, w.dx)
        dchi[(s <= 0) | (s >= 1)] = 0.0
        der = chi[:, None] * w.deriv + dchi[:, None] * w.deviation()
    return GridProfile(w.x0, w.dx, vals, w.e, der)


def plateau_seed(p: PotentialSpec, e, u_minus, x0: float, x1: float, dx: float, x_cut: float,
                 ramp_width: float = 5.0) -> GridProfile:
    """Plateau at u_minus left of x_cut, smoothly ramped down to e."""
    n = int(round((x1 - x0) / dx)) + 1
    e = np.atleast_1d(np.asarray(e, dtype=float))
    um = np.atleast_1d(np.asarray(u_minus, dtype=float))
    plateau = GridProfile(x0, dx, np.broadcast_to(um, (n, e.size)).copy(), e)
    return cutoff_truncate(plateau, x_cut, ramp_width)


@dataclass
class VariationalScan:
    speed: float
    c_grid: np.ndarray
    energies: np.ndarray
    excluded: list = field(default_factory=list)
    bracket: tuple[float, float] | None = None

    def to_dict(self) -> dict:
        return {"speed": self.speed, "bracket": self.bracket, "excluded": list(self.excluded),
                "curve": [[float(c), float(v)] for c, v in zip(self.c_grid, self.energies)]}


def _support_ref(w: GridProfile) -> float:
    dev = np.linalg.norm(w.deviation(), axis=1)
    nz = np.nonzero(dev > 0)[0]
    return float(w.x[nz[-1]]) if nz.size else float(w.x0)


def variational_speed_scan(w: GridProfile, p: PotentialSpec, c_grid=None, c_max: float | None = None,
                           n_grid: int = 64, c_min: float = 0.05, bisect_steps: int = 40) -> VariationalScan:
    """Largest scanned speed with negative weighted energy, refined by bisection (0 if none)."""
    if c_grid is None:
        if c_max is None:
            raise ConfigError("give either c_grid or c_max")
        c_grid = np.linspace(c_min, c_max, n_grid)
    c_grid = np.asarray(c_grid, dtype=float)
    ref = _support_ref(w)
    vals = np.full(len(c_grid), np.nan)
    excluded = []
    for k, c in enumerate(c_grid):
        try:
            vals[k] = energy(w, c, p, ref).value
        except WeightOverflowError:
            excluded.append(float(c))
    neg = np.nonzero(vals < 0)[0]
    if neg.size == 0:
        return VariationalScan(0.0, c_grid, vals, excluded)
    j = int(neg[-1])
    if j == len(c_grid) - 1 or np.isnan(vals[j + 1]):
        return VariationalScan(float(c_grid[j]), c_grid, vals, excluded, (float(c_grid[j]), float(c_grid[j])))
    a, b = float(c_grid[j]), float(c_grid[j + 1])
    for _ in range(bisect_steps):
        m = 0.5 * (a + b)
        if energy(w, m, p, ref).value < 0:
            a = m
        else:
            b = m
    return VariationalScan(a, c_grid, vals, excluded, (a, b))


def invasion_condition(w: GridProfile, p: PotentialSpec) -> float:
    """min over left cut points x of the unweighted integral of |w'|^2/2 + V(w) over [x, right end]."""
    if np.any(np.abs(w.deviation()[-1]) > 1e-12):
        raise ConfigError("profile must equal e at the right boundary")
    f = 0.5 * np.sum(w.derivative() ** 2, axis=1) + _potential_rel(w, p)
    seg = 0.5 * w.dx * (f[1:] + f[:-1])
    tail = np.concatenate([np.cumsum(seg[::-1])[::-1], [0.0]])
    return float(tail.min())


def invasion_point(w: GridProfile, delta: float) -> float | None:
    """Rightmost x with |w(x) - e| > delta, linearly interpolated to the crossing; None if absent."""
    dev = np.linalg.norm(w.deviation(), axis=1)
    idx = np.nonzero(dev > delta)[0]
    if idx.size == 0:
        return None
    j = int(idx[-1])
    if j == w.n - 1:
        return float(w.x_end)
    return float(w.x[j] + (dev[j] - delta) / (dev[j] - dev[j + 1]) * w.dx)


def energy_lower_bound(w: GridProfile, p: PotentialSpec, v_min_rel: float, c: float, c0: float,
                       delta: float, xi_ref: float = 0.0) -> tuple[float, float]:
    """Lower bound on the weighted energy for c > c0 when |w - e| <= delta right of xi_bar.

    Returns (bound, xi_bar) with the bound referenced at xi_ref. xi_bar is the
    invasion point of w at radius delta (left end of the grid if none).
    """
    if not c > c0:
        raise ConfigError("bound requires c > c0")
    xb = invasion_point(w, delta)
    xb = w.x0 if xb is None else xb
    lam = abs(lambda_pm(c, -0.25 * c0 * c0)[1])
    dev = w.deviation()
    db = np.array([np.interp(xb, w.x, dev[:, k]) for k in range(w.dim)])
    val = np.exp(c * (xb - xi_ref)) * (-abs(v_min_rel) / c + 0.5 * lam * float(db @ db))
    return float(val), float(xb)


# -- CSV -------------------------------------------------------------------------

def fmt17(v: float) -> str:
    return format(float(v), ".17g")


def write_profile_csv(path, w: GridProfile) -> None:
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(["x"] + [f"u{k + 1}" for k in range(w.dim)])
        for xi, row in zip(w.x, w.values):
            wr.writerow([fmt17(xi)] + [fmt17(v) for v in row])


def read_profile_csv(path, e=None) -> GridProfile:
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    x, vals = data[:, 0], data[:, 1:]
    dx = (x[-1] - x[0]) / (len(x) - 1)
    if not np.allclose(np.diff(x), dx, rtol=1e-9, atol=1e-12):
        raise ConfigError("profile CSV grid is not uniform")
    e = vals[-1] if e is None else e
    return GridProfile(float(x[0]), float(dx), vals, e)
