import numpy as np
import pytest

from frontlab.errors import ConfigError, ConvergenceError
from frontlab.potential import (check_coercivity, critical_point_at, curvatures, fd_gradient, fd_hessian,
                                find_critical_point, from_config, local_minima, make_fisher, make_polynomial,
                                make_quadratic, make_quintic_gl, make_uncoupled)
from oracles import fisher_reaction, fisher_v


@pytest.mark.parametrize("nu,u,expected", [(1.0, 1.0, -0.25), (1.0, 0.0, 0.0), (0.25, 1.0, -0.5)])
def test_fisher_values(nu, u, expected):
    assert make_fisher(nu).value(u) == pytest.approx(expected, abs=1e-15)


@pytest.mark.parametrize("nu", [0.1, 0.25, 0.4, 0.7, 1.0, 3.0])
def test_fisher_matches_reaction_and_closed_form(nu):
    p = make_fisher(nu)
    u = np.linspace(-2, 2, 41)
    np.testing.assert_allclose(p.value(u), fisher_v(u, nu), atol=1e-13)
    np.testing.assert_allclose(-p.gradient(u), fisher_reaction(u, nu), atol=1e-12)


@pytest.mark.parametrize("nu", [0.1, 0.25, 1.0, 3.0])
def test_fisher_v_min_closed_form(nu):
    p = make_fisher(nu)
    vals = p.value(np.linspace(-4, 4, 80001))
    assert p.v_min == pytest.approx(vals.min(), abs=1e-8)


def test_fisher_origin_is_zero_critical():
    p = make_fisher(1.0)
    assert p.gradient(0.0) == 0.0


def test_newton_finds_origin_and_curvature():
    e = find_critical_point(make_fisher(1.0), [0.1])
    assert abs(e.location[0]) < 1e-12
    assert e.mu1 == pytest.approx(-1.0, abs=1e-12)
    assert e.c_lin == pytest.approx(2.0, abs=1e-12)
    assert e.residual < 1e-10


def test_newton_finds_local_minimum():
    e = find_critical_point(make_fisher(1.0), [0.9])
    assert e.location[0] == pytest.approx(1.0, abs=1e-12)
    assert e.mu1 > 0 and e.c_lin == 0.0


@pytest.mark.parametrize("guess", [-3.0, 0.4, 2.5])
def test_newton_quadratic(guess):
    e = find_critical_point(make_quadratic(-0.7), [guess])
    assert abs(e.location[0]) < 1e-12
    assert e.mu1 == pytest.approx(-0.7)


def test_newton_rejects_wrong_guess_shape():
    with pytest.raises(ConfigError):
        find_critical_point(make_fisher(1.0), [0.1, 0.2])


def test_newton_singular_hessian():
    # V = u^3 has a degenerate critical point; starting at it the Hessian is singular
    p = make_polynomial([[1.0, [3]], [1.0, [1]]], 1)
    with pytest.raises(ConvergenceError):
        find_critical_point(p, [0.0])


def test_curvatures_diagonal_and_quarter():
    p = make_polynomial([[-0.5, [2, 0]], [1.5, [0, 2]]], 2)
    w, v = curvatures(p, [0.0, 0.0])
    np.testing.assert_allclose(w, [-1.0, 3.0], atol=1e-14)
    np.testing.assert_allclose(v.T @ v, np.eye(2), atol=1e-10)
    q = make_fisher(0.25)
    assert curvatures(q, [0.0])[0][0] == pytest.approx(-1.0)
    assert curvatures(q, [0.5])[0][0] == pytest.approx(-1.0, abs=1e-13)


def test_hessian_symmetric_coupled():
    p = make_polynomial([[1.0, [2, 1]], [0.3, [1, 3]], [-0.5, [2, 0]]], 2)
    rng = np.random.default_rng(1)
    h = p.hessian(rng.uniform(-2, 2, size=(50, 2)))
    assert np.max(np.abs(h - np.swapaxes(h, -1, -2))) < 1e-12


def test_coercivity_examples():
    assert check_coercivity(make_fisher(1.0), 10.0) > 0
    assert check_coercivity(make_quadratic(1.0), 1.0) == pytest.approx(1.0)
    assert check_coercivity(make_quadratic(-1.0), 1.0) == pytest.approx(-1.0)
    assert check_coercivity(make_quadratic(-1.0, 3), 1.0) == pytest.approx(-1.0)
    with pytest.raises(ConfigError):
        check_coercivity(make_fisher(1.0), 0.0)


def test_quintic_gl_minimum():
    p = make_quintic_gl(0.1)
    vals = p.value(np.linspace(-3, 3, 60001))
    assert p.v_min == pytest.approx(vals.min(), abs=1e-8)
    assert p.v_min < 0


def test_uncoupled_copy():
    base = make_fisher(0.25)
    p = make_uncoupled(base, 2)
    u = np.array([[0.3, -0.2], [1.0, 1.0]])
    np.testing.assert_allclose(p.value(u), base.value(u[:, 0]) + base.value(u[:, 1]))
    assert p.v_min == pytest.approx(2 * base.v_min)


def test_local_minima_fisher():
    mins = local_minima(make_fisher(0.25))
    locs = sorted(m.location[0] for m in mins)
    np.testing.assert_allclose(locs, [-0.25, 1.0], atol=1e-9)


def test_from_config():
    assert from_config({"family": "fisher", "nu": 0.5}).params["nu"] == 0.5
    assert from_config({"family": "polynomial", "terms": [[1.0, [2]]], "dim": 1}).value(2.0) == 4.0
    with pytest.raises(ConfigError):
        from_config({"family": "fisher"})
    with pytest.raises(ConfigError):
        from_config({"family": "nope"})
    with pytest.raises(ConfigError):
        from_config([1, 2])


def test_monomial_dimension_mismatch():
    with pytest.raises(ConfigError):
        make_polynomial([[1.0, [2, 0]]], 1)


def test_fd_helpers_match_exact():
    p = make_polynomial([[1.0, [2, 1]], [0.3, [1, 3]], [-0.5, [2, 0]], [0.25, [0, 4]]], 2)
    u = np.array([[0.7, -1.1], [1.5, 0.2]])
    np.testing.assert_allclose(fd_gradient(p, u), p.gradient(u), rtol=1e-8)
    np.testing.assert_allclose(fd_hessian(p, u), p.hessian(u), rtol=1e-8)


def test_critical_point_at_reports_value():
    p = make_fisher(0.25)
    cp = critical_point_at(p, [1.0])
    assert cp.value == pytest.approx(-0.5)
    assert cp.to_dict()["location"] == [1.0]
