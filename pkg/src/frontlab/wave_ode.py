"""Travelling waves phi'' = -c phi' + grad V(phi) and pushed-front search by shooting.

Shots start on the first-order steep stable manifold of e and run backward in
xi. In d = 1 a shot is classified by whether it overshoots the invading
minimum u_- or turns back before reaching it; bisection in c on that sign
locates the pushed front. Near the connecting speed a backward shot passes
u_- at a distance that shrinks only like a small power of |c - c*|, so the
returned profile is assembled from two pieces: the backward steep branch cut
at a splice level near u_-, and the branch leaving u_- along its unstable
direction integrated forward to the same level. The mismatch of slopes at
the junction is reported as a residual.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import solve_ivp

from .errors import ConfigError, InconclusiveError, NoBracketError, NumericalFailure
from .potential import CriticalPoint, PotentialSpec, critical_point_at, local_minima
from .speed_atlas import delta_hess, lambda_pm, sphere_directions
from .weighted_profiles import GridProfile, WeightedEnergy, energy, fmt17, weighted_trapz

RTOL = 1e-11
ATOL = 1e-20
TOL_CONN = 1e-8
C_TOL = 1e-7
EPS_FACTOR = 1e-6

CONNECTED = "connected"
OVERSHOOT = "overshoot"
UNDERSHOOT = "undershoot"
ESCAPED = "escaped"
UNRESOLVED = "unresolved"


@dataclass
class Trajectory:
    xi: np.ndarray
    phi: np.ndarray  # (N, d)
    dphi: np.ndarray  # (N, d)
    c: float
    sol: object = None
    escaped: bool = False
    stop: str | None = None  # name of the terminal event, if any


def _rhs(p: PotentialSpec, c: float):
    d = p.dim
    if d == 1:
        # Horner on plain floats: this right-hand side dominates shooting cost
        co = [float(a) for a in p.scalar_derivative_coeffs()[::-1]]

        def f1(_, y):
            u = y[0]
            g = 0.0
            for a in co:
                g = g * u + a
            return np.array([y[1], -c * y[1] + g])

        return f1

    def f(_, y):
        phi, psi = y[:d], y[d:]
        return np.concatenate([psi, -c * psi + p.gradient(phi[None, :])[0]])

    return f


def steep_ic(p: PotentialSpec, e: CriticalPoint, c: float, eps: float, s) -> tuple[np.ndarray, np.ndarray]:
    """First-order point on the steep stable manifold: e + eps sum s_j u_j and its slope."""
    if not c > e.c_lin:
        raise ConfigError(f"steep branch needs c > c_lin = {e.c_lin}, got {c}")
    s = np.atleast_1d(np.asarray(s, dtype=float))
    if s.size != p.dim:
        raise ConfigError("direction must have d components")
    s = s / np.linalg.norm(s)
    lam = np.array([lambda_pm(c, mu)[1] for mu in e.curvatures])
    u = e.eigenvectors
    return e.location + eps * u @ s, eps * u @ (lam * s)


def integrate_profile(p: PotentialSpec, c: float, ic, xi_span, rtol: float = RTOL, atol: float = ATOL,
                      r_esc: float | None = None, events=(), t_eval=None, max_step: float = np.inf) -> Trajectory:
    """Adaptive RK45 on (phi, phi'); either xi direction. Stops early on escape past r_esc."""
    phi0, dphi0 = (np.atleast_1d(np.asarray(v, dtype=float)) for v in ic)
    d = p.dim
    evs = list(events)
    if r_esc is not None:
        def escape(_, y):
            return np.linalg.norm(y[:d]) - r_esc
        escape.terminal = True
        escape.__name__ = "escape"
        evs.append(escape)
    res = solve_ivp(_rhs(p, c), xi_span, np.concatenate([phi0, dphi0]), method="RK45", rtol=rtol,
                    atol=atol, events=evs or None, dense_output=True, t_eval=t_eval, max_step=max_step)
    if res.status == -1:
        raise NumericalFailure(f"profile integration failed at c = {c}: {res.message}")
    stop = None
    if res.status == 1:
        for ev, times in zip(evs, res.t_events):
            if len(times):
                stop = getattr(ev, "__name__", "event")
                break
    return Trajectory(res.t, res.y[:d].T.copy(), res.y[d:].T.copy(), c, res.sol, stop == "escape", stop)


def classify_shot(traj: Trajectory, targets, tol_conn: float = TOL_CONN, r_esc: float = np.inf,
                  e=None) -> str:
    """Status of a backward shot: connected, overshoot, undershoot, escaped or unresolved.

    Nodes are scanned in sweep order and the first decisive one wins. The
    over/undershoot rule needs d = 1 and a reference e; it is measured along
    the direction from e to the target.
    """
    targets = [np.atleast_1d(np.asarray(t, dtype=float)) for t in targets]
    phi, dphi = traj.phi, traj.dphi
    d = phi.shape[1]
    scalar = d == 1 and e is not None and len(targets) == 1
    if scalar:
        e0 = float(np.atleast_1d(e)[0])
        sig = np.sign(targets[0][0] - e0)
        y = sig * (phi[:, 0] - e0)
        yp = sig * dphi[:, 0]
        y_target = abs(targets[0][0] - e0)
    for k in range(len(traj.xi)):
        for t in targets:
            if np.hypot(np.linalg.norm(phi[k] - t), np.linalg.norm(dphi[k])) < tol_conn:
                return CONNECTED
        if scalar:
            last = k == len(traj.xi) - 1
            # event roots land on the thresholds up to rounding; trust the event tag there
            if (y[k] > y_target + tol_conn or (last and traj.stop == "over")) and yp[k] < 0:
                return OVERSHOOT
            turned = yp[k] >= 0 or (last and traj.stop == "turn")
            if turned and y[k] < y_target - tol_conn and k > 0:
                return UNDERSHOOT
        if np.linalg.norm(phi[k]) > r_esc:
            return ESCAPED
    return UNRESOLVED


@dataclass
class SteepnessFit:
    rate: float
    intercept: float
    window: tuple[float, float]
    n_points: int
    verdict: str  # pushed | not_pushed | ambiguous

    def to_dict(self) -> dict:
        return {"rate": self.rate, "window": list(self.window), "n_points": self.n_points, "verdict": self.verdict}


@dataclass
class FrontProfile:
    c: float
    xi: np.ndarray  # ascending, uniform spacing
    phi: np.ndarray
    dphi: np.ndarray
    e: np.ndarray
    u_minus: np.ndarray
    status: str
    eps: float
    s: np.ndarray
    delta: float
    bracket: tuple[float, float] | None = None
    steepness: SteepnessFit | None = None
    residuals: dict = field(default_factory=dict)
    # linear tail beyond the last node: phi - e = sum_j a_j exp(lam_j (xi - xi_right)) u_j
    tail_amp: np.ndarray | None = None
    tail_rates: np.ndarray | None = None
    tail_curv: np.ndarray | None = None
    tail_vecs: np.ndarray | None = None
    u_minus_value: float = 0.0  # V(u_-) - V(e)

    @property
    def dx(self) -> float:
        return float(self.xi[1] - self.xi[0])

    def to_grid(self) -> GridProfile:
        return GridProfile(float(self.xi[0]), self.dx, self.phi, self.e, self.dphi)

    def crossing(self, delta: float | None = None) -> float:
        """xi where |phi - e| first drops to delta coming from the right end (interpolated)."""
        delta = self.delta if delta is None else delta
        dev = np.linalg.norm(self.phi - self.e, axis=1)
        idx = np.nonzero(dev > delta)[0]
        if idx.size == 0:
            return float(self.xi[0])
        j = int(idx[-1])
        if j == len(dev) - 1:
            return float(self.xi[-1])
        return float(self.xi[j] + (dev[j] - delta) / (dev[j] - dev[j + 1]) * self.dx)

    def to_dict(self) -> dict:
        return {
            "c": self.c,
            "steepness": None if self.steepness is None else self.steepness.rate,
            "steepness_fit": None if self.steepness is None else self.steepness.to_dict(),
            "status": self.status,
            "bracket": None if self.bracket is None else list(self.bracket),
            "residuals": dict(self.residuals),
            "eps": self.eps,
            "direction": self.s.tolist(),
            "e": self.e.tolist(),
            "u_minus": self.u_minus.tolist(),
        }


# -- targets and defaults ----------------------------------------------------------

def invading_minima(p: PotentialSpec, e: CriticalPoint, box=(-3.0, 3.0)) -> list[CriticalPoint]:
    return [m for m in local_minima(p, box) if m.value < e.value and np.linalg.norm(m.location - e.location) > 1e-6]


def target_along(p: PotentialSpec, e: CriticalPoint, s, minima=None) -> CriticalPoint | None:
    """Nearest invading minimum on the side of e pointed to by s (d = 1)."""
    minima = invading_minima(p, e) if minima is None else minima
    sgn = np.sign(np.atleast_1d(s)[0])
    side = [m for m in minima if np.sign(m.location[0] - e.location[0]) == sgn]
    if not side:
        return None
    return min(side, key=lambda m: abs(m.location[0] - e.location[0]))


def escape_radius(points) -> float:
    return 10.0 * (1.0 + max(float(np.linalg.norm(q)) for q in points))


def default_eps(p: PotentialSpec, e: CriticalPoint, c0: float) -> tuple[float, float]:
    dh = delta_hess(p, e, c0)
    return EPS_FACTOR * dh, dh


# -- d = 1 shooting --------------------------------------------------------------

def _scalar_events(e0: float, sig: float, y_target: float, tol_conn: float):
    def turn(_, y):
        return sig * y[1]
    turn.terminal = True
    turn.direction = 1.0  # in integration order, i.e. as xi decreases

    def over(_, y):
        return sig * (y[0] - e0) - (y_target + tol_conn)
    over.terminal = True

    def connect(_, y):
        return np.hypot(y[0] - (e0 + sig * y_target), y[1]) - tol_conn
    connect.terminal = True
    connect.direction = -1.0
    return [connect, over, turn]


def shoot(p: PotentialSpec, e: CriticalPoint, c: float, target: CriticalPoint, eps: float, s=1.0,
          xi_max: float = 200.0, tol_conn: float = TOL_CONN, r_esc: float | None = None) -> tuple[str, Trajectory]:
    """One backward shot from the steep manifold; returns (status, trajectory)."""
    if p.dim != 1:
        raise ConfigError("scalar shooting needs d = 1")
    e0 = float(e.location[0])
    sig = float(np.sign(target.location[0] - e0))
    y_target = abs(float(target.location[0]) - e0)
    r_esc = escape_radius([e.location, target.location]) if r_esc is None else r_esc
    ic = steep_ic(p, e, c, eps, [sig * np.sign(e.eigenvectors[0, 0])])
    traj = integrate_profile(p, c, ic, (0.0, -xi_max), r_esc=r_esc,
                             events=_scalar_events(e0, sig, y_target, tol_conn))
    return classify_shot(traj, [target.location], tol_conn, r_esc, e.location), traj


def _final_unstable_branch(p, c, target: CriticalPoint, e0: float, sig: float, eta: float, level: float):
    """Branch leaving u_- toward e, integrated forward in xi until sig (phi - e) = level."""
    mu = float(target.curvatures[0])
    lam_plus = lambda_pm(c, mu)[0]
    if not lam_plus > 0:
        raise NumericalFailure("invading minimum is not a saddle of the travelling-wave system")
    u0 = float(target.location[0])

    def hit(_, y):
        return sig * (y[0] - e0) - level
    hit.terminal = True
    hit.direction = -1.0
    ic = (np.array([u0 - sig * eta]), np.array([-sig * eta * lam_plus]))
    span = 40.0 + np.log(max(abs(u0 - e0), 1.0) / eta) / lam_plus
    traj = integrate_profile(p, c, ic, (0.0, span), events=[hit])
    if traj.stop != "hit":
        raise NumericalFailure("branch from the invading minimum never reached the splice level")
    return traj, lam_plus


def _branch_to_level(p, e, c, target, eps, sig, level):
    e0 = float(e.location[0])

    def hit(_, y):
        return sig * (y[0] - e0) - level
    hit.terminal = True
    hit.direction = 1.0
    ic = steep_ic(p, e, c, eps, [sig * np.sign(e.eigenvectors[0, 0])])
    traj = integrate_profile(p, c, ic, (0.0, -200.0), events=[hit],
                             r_esc=escape_radius([e.location, target.location]))
    if traj.stop != "hit":
        raise NumericalFailure(f"steep branch at c = {c} never reached the splice level")
    return traj


def assemble_front(p: PotentialSpec, e: CriticalPoint, c: float, target: CriticalPoint, eps: float,
                   delta: float, sample_dx: float = 0.01, splice_frac: float = 0.05,
                   junction_tol: float = 1e-5) -> FrontProfile:
    """Splice the steep branch and the unstable branch of u_- into one sampled profile."""
    e0 = float(e.location[0])
    sig = float(np.sign(target.location[0] - e0))
    y_t = abs(float(target.location[0]) - e0)
    level = (1.0 - splice_frac) * y_t
    back = _branch_to_level(p, e, c, target, eps, sig, level)
    xi_cut = float(back.xi[-1])
    fwd, lam_plus = _final_unstable_branch(p, c, target, e0, sig, eps, level)
    shift = xi_cut - float(fwd.xi[-1])
    psi_b, psi_f = float(back.dphi[-1, 0]), float(fwd.dphi[-1, 0])
    mismatch = abs(psi_b - psi_f) / abs(psi_b)
    xi_left = float(fwd.xi[0]) + shift
    k_min = int(np.ceil(xi_left / sample_dx))
    xi = sample_dx * np.arange(k_min, 1)
    right = xi >= xi_cut
    y = np.empty((len(xi), 2))
    y[right] = back.sol(xi[right]).T
    y[~right] = fwd.sol(xi[~right] - shift).T
    lam_minus = lambda_pm(c, float(e.curvatures[0]))[1]
    status = CONNECTED if mismatch < junction_tol else UNRESOLVED
    # ODE residual of the sampled profile, from the dense interpolants
    chk = xi[:: max(1, len(xi) // 200)]
    h = 1e-3
    res = []
    for z in chk:
        sol, off = (back.sol, 0.0) if z - h >= xi_cut else (fwd.sol, shift)
        if z + h > 0 or (sol is fwd.sol and z + h - off > fwd.xi[-1]):
            continue
        ya, yb, y0 = sol(z - h - off), sol(z + h - off), sol(z - off)
        dpsi = (yb[1] - ya[1]) / (2 * h)
        g = float(p.gradient(np.array([[y0[0]]]))[0, 0])
        res.append(abs(dpsi + c * y0[1] - g) / (1.0 + abs(g)))
    prof = FrontProfile(
        c=float(c), xi=xi, phi=y[:, :1].copy(), dphi=y[:, 1:].copy(), e=e.location.copy(),
        u_minus=target.location.copy(), status=status, eps=eps, s=np.array([sig]), delta=delta,
        residuals={"junction": mismatch, "ode": float(max(res)) if res else 0.0,
                   "left_gap": eps, "splice_xi": xi_cut},
        tail_amp=np.array([sig * eps]) * np.sign(e.eigenvectors[0, 0]) * e.eigenvectors[0, 0],
        tail_rates=np.array([lam_minus]), tail_curv=np.array([float(e.curvatures[0])]),
        tail_vecs=e.eigenvectors.copy(), u_minus_value=float(target.value - e.value))
    prof.steepness = steepness(prof, c)
    return prof


def junction_mismatch(p: PotentialSpec, e: CriticalPoint, c: float, target: CriticalPoint, eps: float,
                      splice_frac: float = 0.05) -> float:
    """Signed slope difference of the two branches at the splice level (zero on a connection)."""
    e0 = float(e.location[0])
    sig = float(np.sign(target.location[0] - e0))
    level = (1.0 - splice_frac) * abs(float(target.location[0]) - e0)
    back = _branch_to_level(p, e, c, target, eps, sig, level)
    fwd, _ = _final_unstable_branch(p, c, target, e0, sig, eps, level)
    return float(back.dphi[-1, 0] - fwd.dphi[-1, 0])


def polish_speed(p, e, target, eps, a: float, b: float, steps: int = 6) -> float:
    """Secant iteration on the junction mismatch, kept inside the bisection bracket [a, b]."""
    x0, x1 = a, b
    try:
        f0, f1 = junction_mismatch(p, e, x0, target, eps), junction_mismatch(p, e, x1, target, eps)
    except NumericalFailure:
        return 0.5 * (a + b)
    best = min(((abs(f0), x0), (abs(f1), x1)))
    for _ in range(steps):
        if f1 == f0:
            break
        x2 = x1 - f1 * (x1 - x0) / (f1 - f0)
        if not a <= x2 <= b:
            break
        try:
            f2 = junction_mismatch(p, e, x2, target, eps)
        except NumericalFailure:
            break
        best = min(best, (abs(f2), x2))
        x0, f0, x1, f1 = x1, f1, x2, f2
        if abs(f2) < 1e-12:
            break
    return best[1]


def find_pushed_front(p: PotentialSpec, e: CriticalPoint, c_bracket, direction=None, c_tol: float = C_TOL,
                      tol_conn: float = TOL_CONN, eps: float | None = None, c0: float | None = None,
                      sample_dx: float = 0.01, max_iter: int = 200, polish: bool = True) -> FrontProfile:
    """Bisection in c on the shot classification, then splice the profile at the bracket midpoint."""
    if p.dim != 1:
        raise ConfigError("pushed-front bisection supports d = 1; use search_fronts_nd for d >= 2")
    lo, hi = map(float, c_bracket)
    if not e.c_lin < lo < hi:
        raise ConfigError(f"bracket must satisfy c_lin = {e.c_lin} < lo < hi")
    minima = invading_minima(p, e)
    dirs = [direction] if direction is not None else [1.0, -1.0]
    c0 = 0.5 * (lo + hi) if c0 is None else c0
    try:
        default, dh = default_eps(p, e, c0)
    except Exception:
        default, dh = default_eps(p, e, lo)
    eps = default if eps is None else eps
    last_err = None
    for s in dirs:
        tgt = target_along(p, e, s, minima)
        if tgt is None:
            continue
        s_lo, _ = shoot(p, e, lo, tgt, eps, s, tol_conn=tol_conn)
        s_hi, _ = shoot(p, e, hi, tgt, eps, s, tol_conn=tol_conn)
        signs = {OVERSHOOT, UNDERSHOOT}
        if s_lo == CONNECTED or s_hi == CONNECTED:
            c_star = lo if s_lo == CONNECTED else hi
            return assemble_front(p, e, c_star, tgt, eps, dh, sample_dx)
        if s_lo not in signs or s_hi not in signs or s_lo == s_hi:
            last_err = f"shots at bracket ends gave ({s_lo}, {s_hi})"
            continue
        a, b = lo, hi
        it = 0
        while b - a > c_tol and it < max_iter:
            m = 0.5 * (a + b)
            st, _ = shoot(p, e, m, tgt, eps, s, tol_conn=tol_conn)
            if st == CONNECTED:
                a = b = m
                break
            if st not in signs:
                raise InconclusiveError(f"ambiguous shot classification {st!r} at c = {m}")
            if st == s_lo:
                a = m
            else:
                b = m
            it += 1
        c_mid = polish_speed(p, e, tgt, eps, a, b) if polish else 0.5 * (a + b)
        prof = assemble_front(p, e, c_mid, tgt, eps, dh, sample_dx)
        prof.bracket = (a, b)
        return prof
    raise NoBracketError(f"no pushed front detected in bracket [{lo}, {hi}]"
                         + (f" ({last_err})" if last_err else ""))


# -- steepness, energies, monotone radius ------------------------------------------

def _xi_dev(profile):
    if isinstance(profile, FrontProfile):
        return profile.xi, np.linalg.norm(profile.phi - profile.e, axis=1)
    return profile.x, np.linalg.norm(profile.deviation(), axis=1)


def steepness(profile, c: float, fit_window=(1e-12, 1e-3), margin: float | None = None) -> SteepnessFit:
    """Least-squares slope of ln|phi - e| against xi on samples with |phi - e| in the window."""
    xi, dev = _xi_dev(profile)
    lo, hi = fit_window
    sel = (dev > lo) & (dev < hi)
    if sel.sum() < 2:
        raise ConfigError("steepness fit window contains fewer than two samples")
    slope, icpt = np.polyfit(xi[sel], np.log(dev[sel]), 1)
    margin = 0.01 * c if margin is None else margin
    if slope < -0.5 * c - margin:
        verdict = "pushed"
    elif slope > -0.5 * c + margin:
        verdict = "not_pushed"
    else:
        verdict = "ambiguous"
    return SteepnessFit(float(slope), float(icpt), (float(xi[sel].min()), float(xi[sel].max())),
                        int(sel.sum()), verdict)


def _tails(profile: FrontProfile, cp: float, xi_ref: float) -> tuple[float, float, float]:
    """Analytic tail contributions (kinetic, potential, |phi'|^2) outside the sampled range."""
    xr, xl = float(profile.xi[-1]), float(profile.xi[0])
    kin = pot = sq = 0.0
    for a, lam, mu in zip(profile.tail_amp, profile.tail_rates, profile.tail_curv):
        rate = cp + 2.0 * lam
        if rate >= 0:
            raise ConfigError(f"c' = {cp} outside the convergence window (0, {-2 * lam})")
        scale = a * a * np.exp(cp * (xr - xi_ref)) / (-rate)
        kin += 0.5 * lam * lam * scale
        pot += 0.5 * mu * scale
        sq += lam * lam * scale
    pot += profile.u_minus_value * np.exp(cp * (xl - xi_ref)) / cp
    return kin, pot, sq


def front_energy(profile: FrontProfile, cp: float, xi_ref: float | None = None,
                 p: PotentialSpec | None = None, pot_fn=None) -> WeightedEnergy:
    """Weighted energy of a front, sampled part plus analytic tails at both ends."""
    if p is None:
        raise ConfigError("front_energy needs the potential")
    xi_ref = profile.crossing() if xi_ref is None else xi_ref
    core = energy(profile.to_grid(), cp, p, xi_ref)
    kin, pot, _ = _tails(profile, cp, xi_ref)
    return WeightedEnergy(core.value + kin + pot, core.kinetic + kin, core.potential + pot, xi_ref, cp)


def front_slope_integral(profile: FrontProfile, cp: float, xi_ref: float | None = None) -> float:
    """Integral of exp(c'(xi - xi_ref)) |phi'|^2 including the steep tail."""
    xi_ref = profile.crossing() if xi_ref is None else xi_ref
    core = weighted_trapz(np.sum(profile.dphi ** 2, axis=1), profile.xi, cp, xi_ref, profile.dx)
    return core + _tails(profile, cp, xi_ref)[2]


def front_energy_identity(profile: FrontProfile, p: PotentialSpec, c: float, cp: float) -> dict:
    """Relative residual of E_{c'}[phi] = (1 - c/c') * int exp(c' xi) |phi'|^2."""
    if profile.status != CONNECTED:
        raise ConfigError("energy identity needs a connected profile")
    lam = profile.steepness.rate if profile.steepness is not None else float(profile.tail_rates.max())
    if not 0 < cp < 2 * abs(lam):
        raise ConfigError(f"c' = {cp} outside the convergence window (0, {2 * abs(lam)})")
    ref = profile.crossing()
    e_val = front_energy(profile, cp, ref, p).value
    integral = front_slope_integral(profile, cp, ref)
    rhs = (1.0 - c / cp) * integral
    return {"c_prime": cp, "energy": e_val, "predicted": rhs, "integral": integral,
            "residual": abs(e_val - rhs) / integral}


def monotone_radius_check(profile, delta: float) -> tuple[bool, float | None, float | None]:
    """Unique crossing of |phi - e| = delta and strict decrease of |phi - e| to its right.

    Returns (ok, violation_xi, crossing_xi).
    """
    xi, dev = _xi_dev(profile)
    above = dev > delta
    if not above.any():
        return True, None, None
    flips = np.nonzero(np.diff(above.astype(int)) != 0)[0]
    if len(flips) > 1:
        return False, float(xi[flips[1] + 1]), float(xi[flips[0] + 1])
    j = int(np.nonzero(above)[0][-1])
    x_hat = float(xi[j])
    if j + 1 < len(xi):
        x_hat = float(xi[j] + (dev[j] - delta) / (dev[j] - dev[j + 1]) * (xi[j + 1] - xi[j]))
    tail = dev[j + 1:]
    bad = np.nonzero(np.diff(tail) >= 0)[0]
    bad = bad[tail[bad + 1] > 0]  # exact zeros past the support are not violations
    if bad.size:
        return False, float(xi[j + 2 + bad[0]]), x_hat
    return True, None, x_hat


# -- d >= 2 helpers -------------------------------------------------------------

def forward_steep_validation(p: PotentialSpec, e: CriticalPoint, c: float, eps: float, s,
                             length: float = 10.0) -> dict:
    """Integrate forward from the steep point; report the fitted decay rate and the max excursion."""
    ic = steep_ic(p, e, c, eps, s)
    xs = np.linspace(0.0, length, 201)
    traj = integrate_profile(p, c, ic, (0.0, length), t_eval=xs)
    dev = np.linalg.norm(traj.phi - e.location, axis=1)
    rate = float(np.polyfit(traj.xi, np.log(dev), 1)[0])
    return {"rate": rate, "max_dev": float(dev.max()), "pushed_rate": rate < -0.5 * c}


def search_fronts_nd(p: PotentialSpec, e: CriticalPoint, c_grid, eps: float, per_dim: int = 16,
                     xi_max: float = 60.0, near: float = 1e-2) -> list[dict]:
    """Best-effort grid search over steep directions and speeds for near-connections (non-exhaustive)."""
    minima = invading_minima(p, e)
    if not minima:
        return []
    r_esc = escape_radius([e.location] + [m.location for m in minima])
    found = []
    for s in sphere_directions(p.dim, per_dim):
        for c in c_grid:
            traj = integrate_profile(p, c, steep_ic(p, e, c, eps, s), (0.0, -xi_max), rtol=1e-9,
                                     atol=1e-14, r_esc=r_esc)
            for m in minima:
                dist = np.hypot(np.linalg.norm(traj.phi - m.location, axis=1),
                                np.linalg.norm(traj.dphi, axis=1))
                if dist.min() < near:
                    found.append({"c": float(c), "direction": s.tolist(), "target": m.location.tolist(),
                                  "distance": float(dist.min())})
    return found


# -- IO ------------------------------------------------------------------------

def write_front(profile: FrontProfile, csv_path, json_path=None) -> None:
    d = profile.phi.shape[1]
    with open(csv_path, "w") as fh:
        fh.write(",".join(["xi"] + [f"phi_{k + 1}" for k in range(d)] + [f"dphi_{k + 1}" for k in range(d)]) + "\n")
        for z, a, b in zip(profile.xi, profile.phi, profile.dphi):
            fh.write(",".join([fmt17(z)] + [fmt17(v) for v in a] + [fmt17(v) for v in b]) + "\n")
    if json_path is not None:
        with open(json_path, "w") as fh:
            json.dump(profile.to_dict(), fh, indent=2, sort_keys=True)
