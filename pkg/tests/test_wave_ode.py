import json

import numpy as np
import pytest

from frontlab.errors import ConfigError, NoBracketError
from frontlab.potential import critical_point_at, make_fisher, make_polynomial
from frontlab.speed_atlas import c_upp_diag, mu_quad_hull
from frontlab.wave_ode import (CONNECTED, OVERSHOOT, UNDERSHOOT, find_pushed_front, front_energy,
                               front_energy_identity, integrate_profile, monotone_radius_check, shoot, steep_ic,
                               steepness, target_along, write_front)
from frontlab.weighted_profiles import GridProfile
from oracles import ansatz_speed, exact_front, exact_front_energy

C_STAR = 3 / np.sqrt(2)


def fisher(nu):
    p = make_fisher(nu)
    return p, critical_point_at(p, [0.0])


def test_quarter_front_speed(quarter_front):
    assert quarter_front.c == pytest.approx(C_STAR, abs=1e-6)
    assert quarter_front.status == CONNECTED
    assert quarter_front.residuals["junction"] < 1e-5


def test_quarter_front_matches_closed_form(quarter_front):
    f = quarter_front
    # the sampled profile is a translate of the exact front; align at the half-way point
    k = np.argmin(np.abs(f.phi[:, 0] - 0.5))
    x_half = f.xi[k] + (f.phi[k, 0] - 0.5) / -f.dphi[k, 0]
    sel = (f.phi[:, 0] > 1e-6) & (f.phi[:, 0] < 1 - 1e-6)
    err = np.abs(f.phi[sel, 0] - exact_front(f.xi[sel] - x_half))
    assert err.max() < 1e-5


@pytest.mark.parametrize("nu", [0.25, 0.4])
def test_shot_signs_flip_once(nu):
    p, e = fisher(nu)
    tgt = target_along(p, e, 1.0)
    c_star = ansatz_speed(nu)
    hull = 2 * np.sqrt(-mu_quad_hull(p, e))
    grid = np.linspace(2.0 + 1e-3, hull - 1e-3, 20)
    eps = 1e-7
    states = [shoot(p, e, c, tgt, eps)[0] for c in grid]
    assert set(states) <= {OVERSHOOT, UNDERSHOOT}
    below = {s for c, s in zip(grid, states) if c < c_star - 1e-3}
    above = {s for c, s in zip(grid, states) if c > c_star + 1e-3}
    assert len(below) == 1 and len(above) == 1 and below != above


def test_nu_point_four_speed():
    p, e = fisher(0.4)
    f = find_pushed_front(p, e, (2.001, 2.19))
    assert f.c == pytest.approx(ansatz_speed(0.4), abs=1e-6)
    assert f.c == pytest.approx(2.0124611797, abs=1e-6)


def test_pulled_regime_has_no_bracket():
    p, e = fisher(0.7)
    hull = 2 * np.sqrt(-mu_quad_hull(p, e))
    with pytest.raises(NoBracketError):
        find_pushed_front(p, e, (2.0001, max(hull, 2.05)))


def test_bracket_validation():
    p, e = fisher(0.25)
    with pytest.raises(ConfigError):
        find_pushed_front(p, e, (1.9, 2.3))
    with pytest.raises(ConfigError):
        steep_ic(p, e, 1.5, 1e-6, [1.0])


def test_steep_ic_ratio():
    p, e = fisher(0.25)
    phi, dphi = steep_ic(p, e, 2.2, 1e-6, [1.0])
    assert dphi[0] / phi[0] == pytest.approx(-1.1 - np.sqrt(0.21), rel=1e-14)


def test_integrator_on_linear_equation():
    # grad V = 0: phi'' = -phi', so phi = 1 - exp(-xi) from phi = 0, phi' = 1
    p = make_polynomial([[0.0, [2]]], 1)
    xs = np.linspace(0, 5, 51)
    traj = integrate_profile(p, 1.0, ([0.0], [1.0]), (0.0, 5.0), t_eval=xs)
    np.testing.assert_allclose(traj.phi[:, 0], 1 - np.exp(-xs), atol=1e-9)
    loose = integrate_profile(p, 1.0, ([0.0], [1.0]), (0.0, 5.0), t_eval=xs, rtol=1e-6, atol=1e-9)
    assert np.abs(loose.phi[:, 0] - (1 - np.exp(-xs))).max() > np.abs(traj.phi[:, 0] - (1 - np.exp(-xs))).max()


def test_steepness_examples(quarter_front):
    fit = steepness(quarter_front, quarter_front.c)
    assert fit.rate == pytest.approx(-np.sqrt(2), abs=1e-4)
    assert fit.verdict == "pushed"
    x = np.arange(0, 20, 0.01)
    slow = GridProfile(0.0, 0.01, 1e-4 * np.exp(-x), [0.0])
    assert steepness(slow, 2.0).verdict == "ambiguous"
    assert steepness(GridProfile(0.0, 0.01, 1e-4 * np.exp(-0.5 * x), [0.0]), 2.0).verdict == "not_pushed"
    with pytest.raises(ConfigError):
        steepness(GridProfile(0.0, 0.01, np.ones_like(x), [0.0]), 2.0)


def test_ode_residual_small(quarter_front):
    assert quarter_front.residuals["ode"] < 1e-6


@pytest.mark.parametrize("cp", [0.5, 1.5, 2.5])
def test_front_energy_matches_quadrature(quarter_front, cp):
    f = quarter_front
    k = np.argmin(np.abs(f.phi[:, 0] - 0.5))
    x_half = f.xi[k] + (f.phi[k, 0] - 0.5) / -f.dphi[k, 0]
    val = front_energy(f, cp, x_half, make_fisher(0.25)).value
    assert val == pytest.approx(exact_front_energy(cp, 0.25, 0.0), rel=1e-4)


@pytest.mark.parametrize("cp", [1.0, 2.0, 2.7])
def test_energy_identity(quarter_front, cp):
    r = front_energy_identity(quarter_front, make_fisher(0.25), quarter_front.c, cp)
    assert r["residual"] < 1e-4
    with pytest.raises(ConfigError):
        front_energy_identity(quarter_front, make_fisher(0.25), quarter_front.c, 3.0)


def test_monotone_radius_examples(quarter_front):
    ok, bad, x_hat = monotone_radius_check(quarter_front, 0.1)
    assert ok and bad is None
    assert exact_front(0.0) == 0.5 and x_hat is not None
    vals = np.array([1.0, 0.5, 0.05, 0.2, 0.01, 0.0, 0.0, 0.0])
    ok, bad, _ = monotone_radius_check(GridProfile(0.0, 1.0, vals, [0.0]), 0.1)
    assert not ok and bad is not None
    vals = np.array([1.0, 0.5, 0.05, 0.06, 0.01, 0.0, 0.0, 0.0])
    ok, bad, _ = monotone_radius_check(GridProfile(0.0, 1.0, vals, [0.0]), 0.1)
    assert not ok and bad == 3.0
    assert monotone_radius_check(GridProfile(0.0, 1.0, np.zeros(8), [0.0]), 0.1) == (True, None, None)


def test_pushed_speed_within_bounds(quarter_front):
    p, e = fisher(0.25)
    hull = 2 * np.sqrt(-mu_quad_hull(p, e))
    assert e.c_lin < quarter_front.c < hull
    assert quarter_front.c <= c_upp_diag(p, e, hull)[0] + 1e-12


def test_write_front(tmp_path, quarter_front):
    csv, js = tmp_path / "front.csv", tmp_path / "front.json"
    write_front(quarter_front, csv, js)
    lines = csv.read_text().splitlines()
    assert lines[0] == "xi,phi_1,dphi_1"
    assert len(lines) == len(quarter_front.xi) + 1
    row = [float(v) for v in lines[1].split(",")]
    assert row == [quarter_front.xi[0], quarter_front.phi[0, 0], quarter_front.dphi[0, 0]]
    meta = json.loads(js.read_text())
    assert meta["c"] == quarter_front.c and meta["status"] == CONNECTED
