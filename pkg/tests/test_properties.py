"""Randomized property suites (each runs at least 100 cases)."""
import numpy as np
from hypothesis import HealthCheck, given, settings
from hypothesis import strategies as st

from frontlab.potential import critical_point_at, make_fisher, make_polynomial, make_quintic_gl
from frontlab.speed_atlas import delta_hess, delta_stab, lambda_pm
from frontlab.weighted_profiles import GridProfile, energy, poincare_gap

PROPERTY = settings(max_examples=100, deadline=None, suppress_health_check=[HealthCheck.too_slow])
RELAXED_PROPERTY = settings(max_examples=100, deadline=None, derandomize=True,
                            suppress_health_check=[HealthCheck.too_slow])


@PROPERTY
@given(c=st.floats(0.1, 10.0), mu=st.floats(-20.0, 20.0))
def test_lambda_roots_satisfy_characteristic_equation(c, mu):
    for lam in lambda_pm(c, mu):
        resid = lam * lam + c * lam - mu
        scale = max(1.0, abs(lam) ** 2, abs(c * lam), abs(mu))
        assert abs(resid) / scale < 1e-12


def _bump_profile(seed: int, n: int = 400, dx: float = 0.05):
    """Random smooth compactly supported deviation from e = 0 (zero on the last nodes)."""
    rng = np.random.default_rng(seed)
    x = np.arange(n) * dx
    vals = np.zeros(n)
    for _ in range(rng.integers(1, 4)):
        mid = rng.uniform(3, 14)
        width = rng.uniform(0.5, 3.0)
        amp = rng.uniform(-1, 1)
        s = (x - mid) / width
        bump = np.where(np.abs(s) < 1, np.exp(-1 / np.maximum(1 - s * s, 1e-300)), 0.0)
        vals += amp * bump
    return GridProfile(0.0, dx, vals[:, None], [0.0])


@PROPERTY
@given(seed=st.integers(0, 2 ** 31 - 1), c=st.floats(0.5, 3.0), frac=st.sampled_from([0.25, 0.5, 0.75]))
def test_poincare_gap_nonnegative(seed, c, frac):
    w = _bump_profile(seed)
    gap = poincare_gap(w, c, 0.0, frac * c)
    scale = np.sum(np.exp(c * w.x) * (w.deviation()[:, 0] ** 2 + w.derivative()[:, 0] ** 2)) * w.dx
    assert gap >= -1e-9 * scale


@PROPERTY
@given(seed=st.integers(0, 2 ** 31 - 1), c=st.floats(0.2, 3.0), k=st.integers(-40, 40))
def test_energy_translation_covariance(seed, c, k):
    p = make_fisher(0.25)
    n, dx = 400, 0.05
    w = _bump_profile(seed, n, dx)
    base = energy(w, c, p, 0.0).value
    shifted = GridProfile(w.x0 + k * dx, dx, w.values, w.e)
    moved = energy(shifted, c, p, 0.0).value
    expected = base * np.exp(c * k * dx)
    assert abs(moved - expected) <= 1e-12 * max(abs(expected), 1e-300) + 1e-300


POLYS = [
    make_fisher(0.25), make_fisher(0.7), make_quintic_gl(0.1),
    make_polynomial([[1.0, [2, 1]], [0.3, [1, 3]], [-0.5, [2, 0]], [0.25, [0, 4]], [0.25, [4, 0]]], 2),
    make_polynomial([[-0.5, [2, 0, 0]], [0.2, [1, 1, 1]], [0.25, [0, 0, 4]], [1.0, [0, 2, 0]]], 3),
]


@PROPERTY
@given(idx=st.integers(0, len(POLYS) - 1), data=st.data())
def test_gradient_hessian_match_finite_differences(idx, data):
    p = POLYS[idx]
    u = np.array(data.draw(st.lists(st.floats(-2, 2), min_size=p.dim, max_size=p.dim)))
    # consistency of gradient with V and of Hessian with the gradient, via central differences
    h = 1e-5
    g = p.gradient(u[None, :])[0]
    hs = p.hessian(u[None, :])[0]
    for k in range(p.dim):
        du = np.zeros(p.dim)
        du[k] = h
        fd_g = (p.value((u + du)[None, :])[0] - p.value((u - du)[None, :])[0]) / (2 * h)
        fd_h = (p.gradient((u + du)[None, :])[0] - p.gradient((u - du)[None, :])[0]) / (2 * h)
        assert abs(fd_g - g[k]) <= 1e-6 * max(1.0, abs(g[k]))
        assert np.all(np.abs(fd_h - hs[:, k]) <= 1e-6 * np.maximum(1.0, np.abs(hs[:, k])))


@RELAXED_PROPERTY
@given(nu=st.floats(0.05, 0.49), frac=st.floats(0.02, 0.98))
def test_delta_hess_below_delta_stab(nu, frac):
    p = make_fisher(nu)
    e = critical_point_at(p, [0.0])
    mu_q = -1 - (2.0 / 3.0 * (1 - 1 / nu)) ** 2 * nu / 2
    c_quad = 2 * np.sqrt(-mu_q)
    c0 = 2.0 + frac * (c_quad - 2.0)
    assert delta_hess(p, e, c0, n_radial=4000) <= delta_stab(p, e, c0, n_radial=4000) + 1e-10
