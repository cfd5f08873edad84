"""Polynomial potentials V: R^d -> R with exact derivatives.

Every potential is stored as a table of monomials ``coef * prod_k u_k**p_k``;
gradient and Hessian tables are generated from it once at construction.
Evaluators accept arrays whose trailing axis has length d. For d = 1 a bare
scalar or an array whose last axis is not of length 1 is read as a batch of
scalar points, and gradients come back in the same shape.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np
from scipy.optimize import minimize

from .errors import ConfigError, ConvergenceError

Term = tuple[float, tuple[int, ...]]

FD_STEP = 1e-5


def _collect(terms: Iterable[Term]) -> tuple[Term, ...]:
    acc: dict[tuple[int, ...], float] = {}
    for coef, powers in terms:
        powers = tuple(int(p) for p in powers)
        if any(p < 0 for p in powers):
            raise ConfigError(f"negative exponent in monomial {powers}")
        acc[powers] = acc.get(powers, 0.0) + float(coef)
    return tuple((c, p) for p, c in sorted(acc.items()) if c != 0.0)


def _differentiate(terms: Sequence[Term], k: int) -> tuple[Term, ...]:
    out = []
    for coef, powers in terms:
        if powers[k] > 0:
            q = list(powers)
            q[k] -= 1
            out.append((coef * powers[k], tuple(q)))
    return _collect(out)


def _eval_terms(terms: Sequence[Term], u: np.ndarray, max_deg: int) -> np.ndarray:
    # u has shape (..., d)
    out = np.zeros(u.shape[:-1])
    if not terms:
        return out
    d = u.shape[-1]
    pw = [[np.ones(u.shape[:-1])] for _ in range(d)]
    for k in range(d):
        for _ in range(max_deg):
            pw[k].append(pw[k][-1] * u[..., k])
    for coef, powers in terms:
        mono = np.full(u.shape[:-1], coef)
        for k, p in enumerate(powers):
            if p:
                mono = mono * pw[k][p]
        out = out + mono
    return out


@dataclass(frozen=True, eq=False)
class PotentialSpec:
    """Immutable polynomial potential with family tag and optional known minimum value."""

    dim: int
    terms: tuple[Term, ...]
    family: str = "polynomial"
    params: dict = field(default_factory=dict)
    v_min: float | None = None
    v_min_at: tuple[float, ...] | None = None

    def __post_init__(self):
        if self.dim < 1:
            raise ConfigError("dimension must be a positive integer")
        terms = _collect(self.terms)
        for _, p in terms:
            if len(p) != self.dim:
                raise ConfigError(f"monomial {p} does not match dimension {self.dim}")
        object.__setattr__(self, "terms", terms)
        grad = tuple(_differentiate(terms, k) for k in range(self.dim))
        hess = tuple(tuple(_differentiate(grad[i], j) for j in range(self.dim)) for i in range(self.dim))
        object.__setattr__(self, "_grad_terms", grad)
        object.__setattr__(self, "_hess_terms", hess)
        deg = max((sum(p) for _, p in terms), default=0)
        object.__setattr__(self, "_max_deg", max(deg, 1))

    # -- evaluation -------------------------------------------------------
    def _points(self, u):
        u = np.asarray(u, dtype=float)
        scalar_mode = self.dim == 1 and (u.ndim == 0 or u.shape[-1] != 1)
        if scalar_mode:
            u = u[..., None]
        elif u.shape[-1] != self.dim:
            raise ConfigError(f"expected trailing axis of length {self.dim}, got shape {u.shape}")
        return u, scalar_mode

    def value(self, u) -> np.ndarray:
        u, _ = self._points(u)
        return _eval_terms(self.terms, u, self._max_deg)

    def gradient(self, u) -> np.ndarray:
        u, scalar_mode = self._points(u)
        g = np.stack([_eval_terms(t, u, self._max_deg) for t in self._grad_terms], axis=-1)
        return g[..., 0] if scalar_mode else g

    def hessian(self, u) -> np.ndarray:
        """Hessian with trailing shape (d, d); symmetric by construction."""
        u, _ = self._points(u)
        d = self.dim
        h = np.empty(u.shape[:-1] + (d, d))
        for i in range(d):
            for j in range(i, d):
                hij = _eval_terms(self._hess_terms[i][j], u, self._max_deg)
                h[..., i, j] = hij
                h[..., j, i] = hij
        return h

    def min_hessian_eig(self, u) -> np.ndarray:
        h = self.hessian(u)
        if self.dim == 1:
            return h[..., 0, 0]
        return np.linalg.eigvalsh(h)[..., 0]

    def __call__(self, u):
        return self.value(u)

    def scalar_derivative_coeffs(self) -> np.ndarray:
        """d = 1 only: coefficients of V' in increasing degree."""
        if self.dim != 1:
            raise ConfigError("scalar coefficients need d = 1")
        coeffs = np.zeros(self._max_deg + 1)
        for coef, (q,) in self._grad_terms[0]:
            coeffs[q] += coef
        return coeffs

    # -- derived potentials ----------------------------------------------
    def shifted(self, constant: float) -> "PotentialSpec":
        """V + constant (used to normalize V(e) = 0)."""
        zero = (0,) * self.dim
        vmin = None if self.v_min is None else self.v_min + constant
        return PotentialSpec(self.dim, self.terms + ((constant, zero),), self.family,
                             dict(self.params), vmin, self.v_min_at)

    def normalized_at(self, e) -> "PotentialSpec":
        e = np.atleast_1d(np.asarray(e, dtype=float))
        return self.shifted(-float(self.value(e[None, :])[0]))

    def with_v_min(self, box=(-3.0, 3.0), starts: int = 9) -> "PotentialSpec":
        """Return a copy with V_min filled, by multi-start local minimization if unknown."""
        if self.v_min is not None:
            return self
        val, at = multistart_minimum(self, box, starts)
        return PotentialSpec(self.dim, self.terms, self.family, dict(self.params), val, tuple(at))

    def describe(self) -> dict:
        return {
            "family": self.family,
            "dim": self.dim,
            "params": dict(self.params),
            "terms": [[c, list(p)] for c, p in self.terms],
            "v_min": self.v_min,
        }


# -- families ---------------------------------------------------------------

def make_fisher(nu: float) -> PotentialSpec:
    """Fisher-type potential with reaction u(1-u)(1+u/nu); critical points -nu, 0, 1."""
    nu = float(nu)
    if not nu > 0:
        raise ConfigError("Fisher parameter nu must be positive")
    terms = [(-0.5, (2,)), ((1.0 - 1.0 / nu) / 3.0, (3,)), (0.25 / nu, (4,))]
    v_one = -1.0 / 6.0 - 1.0 / (12.0 * nu)
    v_neg = -nu ** 2 / 6.0 - nu ** 3 / 12.0
    v_min, at = (v_one, 1.0) if v_one <= v_neg else (v_neg, -nu)
    return PotentialSpec(1, tuple(terms), "fisher", {"nu": nu}, v_min, (at,))


def make_quintic_gl(mu1: float) -> PotentialSpec:
    """Subcritical quintic Ginzburg-Landau: V = mu1 u^2/2 - u^4/4 + u^6/6."""
    mu1 = float(mu1)
    terms = [(0.5 * mu1, (2,)), (-0.25, (4,)), (1.0 / 6.0, (6,))]
    spec = PotentialSpec(1, tuple(terms), "quintic_gl", {"mu1": mu1})
    cands = [0.0]
    disc = 1.0 - 4.0 * mu1
    if disc >= 0:
        for s in (1.0, -1.0):
            r2 = 0.5 * (1.0 + s * np.sqrt(disc))
            if r2 > 0:
                cands += [np.sqrt(r2), -np.sqrt(r2)]
    vals = [float(spec.value(c)) for c in cands]
    i = int(np.argmin(vals))
    return PotentialSpec(1, spec.terms, spec.family, spec.params, vals[i], (cands[i],))


def make_quadratic(mu: float, dim: int = 1) -> PotentialSpec:
    """V = mu |u|^2 / 2."""
    terms = []
    for k in range(dim):
        p = [0] * dim
        p[k] = 2
        terms.append((0.5 * mu, tuple(p)))
    vmin = 0.0 if mu >= 0 else None
    return PotentialSpec(dim, tuple(terms), "quadratic", {"mu": float(mu)}, vmin,
                         (0.0,) * dim if mu >= 0 else None)


def make_polynomial(terms: Iterable, dim: int, v_min: float | None = None) -> PotentialSpec:
    """User polynomial from a coefficient table [[coef, [p_1, ..., p_d]], ...]."""
    table = []
    for entry in terms:
        coef, powers = entry
        powers = tuple(np.atleast_1d(powers).astype(int).tolist())
        table.append((float(coef), powers))
    return PotentialSpec(int(dim), tuple(table), "polynomial", {}, v_min)


def make_uncoupled(base: PotentialSpec, copies: int) -> PotentialSpec:
    """Sum of independent copies of a potential, one per block of coordinates."""
    d = base.dim
    terms = []
    for j in range(copies):
        for coef, p in base.terms:
            q = [0] * (d * copies)
            q[j * d:(j + 1) * d] = p
            terms.append((coef, tuple(q)))
    vmin = None if base.v_min is None else copies * base.v_min
    at = None if base.v_min_at is None else tuple(base.v_min_at) * copies
    return PotentialSpec(d * copies, tuple(terms), base.family + "_uncoupled",
                         {**base.params, "copies": copies}, vmin, at)


def from_config(block: dict) -> PotentialSpec:
    """Build a potential from a config block {family: ..., params...} or {terms, dim}."""
    if not isinstance(block, dict):
        raise ConfigError("potential block must be a mapping")
    fam = str(block.get("family", "polynomial")).lower()
    try:
        if fam == "fisher":
            return make_fisher(block["nu"])
        if fam in ("quintic_gl", "quintic"):
            return make_quintic_gl(block["mu1"])
        if fam == "quadratic":
            return make_quadratic(block["mu"], int(block.get("dim", 1)))
        if fam == "polynomial":
            return make_polynomial(block["terms"], int(block.get("dim", 1)), block.get("v_min"))
    except KeyError as exc:
        raise ConfigError(f"potential block for family {fam!r} missing key {exc}") from None
    raise ConfigError(f"unknown potential family {fam!r}")


# -- critical points --------------------------------------------------------

@dataclass(frozen=True, eq=False)
class CriticalPoint:
    location: np.ndarray
    residual: float
    curvatures: np.ndarray
    eigenvectors: np.ndarray  # columns
    c_lin: float
    value: float

    @property
    def mu1(self) -> float:
        return float(self.curvatures[0])

    def to_dict(self) -> dict:
        return {
            "location": self.location.tolist(),
            "residual": self.residual,
            "curvatures": self.curvatures.tolist(),
            "c_lin": self.c_lin,
            "value": self.value,
        }


def curvatures(p: PotentialSpec, e) -> tuple[np.ndarray, np.ndarray]:
    """Ascending eigenvalues and orthonormal eigenvectors (columns) of the Hessian at e."""
    e = np.atleast_1d(np.asarray(e, dtype=float))
    h = p.hessian(e[None, :])[0]
    w, v = np.linalg.eigh(h)
    # fix the sign of each eigenvector so its largest entry is positive
    for j in range(v.shape[1]):
        k = np.argmax(np.abs(v[:, j]))
        if v[k, j] < 0:
            v[:, j] = -v[:, j]
    return w, v


def c_lin_from_curvature(mu: float) -> float:
    return 2.0 * float(np.sqrt(-mu)) if mu < 0 else 0.0


def critical_point_at(p: PotentialSpec, e) -> CriticalPoint:
    e = np.atleast_1d(np.asarray(e, dtype=float))
    w, v = curvatures(p, e)
    res = float(np.linalg.norm(p.gradient(e[None, :])[0]))
    return CriticalPoint(e.copy(), res, w, v, c_lin_from_curvature(w[0]), float(p.value(e[None, :])[0]))


def find_critical_point(p: PotentialSpec, guess, tol: float = 1e-12, max_iter: int = 100) -> CriticalPoint:
    """Damped Newton on grad V. The step is halved until |grad V| decreases."""
    x = np.atleast_1d(np.asarray(guess, dtype=float)).copy()
    if x.shape != (p.dim,):
        raise ConfigError(f"guess must have {p.dim} components")
    g = p.gradient(x[None, :])[0]
    gn = np.linalg.norm(g)
    for _ in range(max_iter):
        if gn < tol:
            return critical_point_at(p, x)
        h = p.hessian(x[None, :])[0]
        if np.linalg.cond(h) > 1e14:
            raise ConvergenceError(f"singular Hessian at iterate {x.tolist()}")
        step = -np.linalg.solve(h, g)
        t = 1.0
        for _ in range(60):
            xn = x + t * step
            gnew = p.gradient(xn[None, :])[0]
            if np.linalg.norm(gnew) < gn:
                break
            t *= 0.5
        else:
            # no decrease possible: rounding floor reached
            if gn < 1e-10:
                return critical_point_at(p, x)
            raise ConvergenceError(f"Newton stalled at {x.tolist()} with |grad V| = {gn:.3e}")
        x, g = xn, gnew
        gn = np.linalg.norm(g)
    if gn < 1e-10:
        return critical_point_at(p, x)
    raise ConvergenceError(f"Newton did not converge in {max_iter} iterations (|grad V| = {gn:.3e})")


def local_minima(p: PotentialSpec, box=(-3.0, 3.0), starts: int = 9) -> list[CriticalPoint]:
    """Distinct local minima found by local minimization from a grid of starts."""
    found: list[CriticalPoint] = []
    for x0 in _start_grid(p.dim, box, starts):
        r = minimize(lambda z: float(p.value(z[None, :])[0]), x0,
                     jac=lambda z: p.gradient(z[None, :])[0], method="BFGS",
                     options={"gtol": 1e-10})
        try:
            cp = find_critical_point(p, r.x)
        except ConvergenceError:
            continue
        if cp.curvatures[0] <= 0:
            continue
        if all(np.linalg.norm(cp.location - q.location) > 1e-6 for q in found):
            found.append(cp)
    return sorted(found, key=lambda q: q.value)


def _start_grid(dim: int, box, starts: int) -> np.ndarray:
    lo, hi = box
    n = max(2, int(round(starts ** (1.0 / dim)))) if dim > 1 else starts
    axes = [np.linspace(lo, hi, n)] * dim
    return np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, dim)


def multistart_minimum(p: PotentialSpec, box=(-3.0, 3.0), starts: int = 9) -> tuple[float, np.ndarray]:
    best_val, best_at = np.inf, None
    for x0 in _start_grid(p.dim, box, starts):
        r = minimize(lambda z: float(p.value(z[None, :])[0]), x0,
                     jac=lambda z: p.gradient(z[None, :])[0], method="L-BFGS-B",
                     bounds=[box] * p.dim)
        if r.fun < best_val:
            best_val, best_at = float(r.fun), r.x
    return best_val, best_at


def check_coercivity(p: PotentialSpec, R: float, samples: int = 200, seed: int = 0) -> float:
    """Sampled infimum of u . grad V(u) / |u|^2 over |u| >= R (a finite-scale certificate only)."""
    if not R > 0:
        raise ConfigError("coercivity radius must be positive")
    radii = R * np.geomspace(1.0, 10.0, max(samples // 4, 2))
    if p.dim == 1:
        dirs = np.array([[1.0], [-1.0]])
    else:
        rng = np.random.default_rng(seed)
        dirs = rng.normal(size=(max(samples // len(radii), 4), p.dim))
        dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    pts = (radii[:, None, None] * dirs[None, :, :]).reshape(-1, p.dim)
    ratio = np.sum(pts * p.gradient(pts), axis=1) / np.sum(pts ** 2, axis=1)
    return float(ratio.min())


def fd_gradient(p: PotentialSpec, u, h: float = FD_STEP) -> np.ndarray:
    """Central-difference gradient of V at the points u (trailing axis d)."""
    u = np.asarray(u, dtype=float)
    out = np.empty_like(u)
    for k in range(p.dim):
        du = np.zeros(p.dim)
        du[k] = h
        out[..., k] = (p.value(u + du) - p.value(u - du)) / (2 * h)
    return out


def fd_hessian(p: PotentialSpec, u, h: float = FD_STEP) -> np.ndarray:
    u = np.asarray(u, dtype=float)
    out = np.empty(u.shape + (p.dim,))
    for k in range(p.dim):
        du = np.zeros(p.dim)
        du[k] = h
        out[..., :, k] = (p.gradient(u + du) - p.gradient(u - du)) / (2 * h)
    return out
