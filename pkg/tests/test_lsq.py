import numpy as np
import pytest
from scipy import optimize

from spincavity.fitkit import lorentzian_dip
from spincavity.lsq import RankDeficiencyError, least_squares, numerical_jacobian


def line(p, x):
    return p[0] + p[1] * x


def test_linear_exact():
    x = np.linspace(-3, 7, 21)
    y = 2.5 - 0.75 * x
    r = least_squares(line, x, y, [0.0, 0.0])
    assert np.allclose(r.params, [2.5, -0.75], atol=1e-10)
    assert r.converged and r.rss < 1e-20 and r.dof == 19


def test_quadratic_from_poor_start():
    x = np.linspace(-2, 2, 41)
    y = 1.0 + 3.0 * x - 4.0 * x**2
    r = least_squares(lambda p, t: p[0] + p[1] * t + p[2] * t**2, x, y, [100.0, -50.0, 20.0])
    assert np.allclose(r.params, [1.0, 3.0, -4.0], atol=1e-8)


def test_jacobian_central_difference():
    J = numerical_jacobian(lambda p: np.array([p[0] ** 2, p[0] * p[1]]), np.array([3.0, -2.0]))
    assert np.allclose(J, [[6.0, 0.0], [-2.0, 3.0]], rtol=1e-8)


def test_agrees_with_scipy_on_lorentzian():
    rng = np.random.default_rng(7)
    f = np.linspace(-30, 30, 121)
    truth = np.array([1.0, 4.0, 1.3, 6.0])
    y = lorentzian_dip(truth, f) + rng.normal(0, 0.01, f.size)
    p0 = [0.9, 3.0, 0.0, 4.0]
    ours = least_squares(lorentzian_dip, f, y, p0)
    ref = optimize.least_squares(lambda p: lorentzian_dip(p, f) - y, p0, xtol=1e-14, ftol=1e-14, gtol=1e-14)
    assert np.allclose(ours.params, ref.x, rtol=1e-6, atol=1e-8)
    J = ref.jac
    cov = np.linalg.inv(J.T @ J) * (2 * ref.cost) / (f.size - 4)
    assert np.allclose(ours.stderr, np.sqrt(np.diag(cov)), rtol=1e-3)


def test_lorentzian_coverage_monte_carlo():
    rng = np.random.default_rng(2024)
    f = np.linspace(-30, 30, 121)
    truth = np.array([1.0, 4.0, 1.3, 6.0])  # depth A/w = 0.667
    sigma = 0.01
    hits = 0
    for _ in range(100):
        y = lorentzian_dip(truth, f) + rng.normal(0, sigma, f.size)
        r = least_squares(lorentzian_dip, f, y, [0.95, 3.0, 0.0, 4.0])
        hits += all(abs(r.params - truth) <= 3 * r.stderr)
    assert hits >= 95


def test_bounds_are_respected():
    x = np.linspace(0, 1, 11)
    r = least_squares(line, x, 1 + 2 * x, [0.0, 0.0], bounds=([-np.inf, -np.inf], [np.inf, 1.5]))
    assert r.params[1] <= 1.5 + 1e-15
    with pytest.raises(ValueError, match="outside the bounds"):
        least_squares(line, x, x, [0.0, 5.0], bounds=([-1, -1], [1, 1]))


def test_rank_deficiency_names_parameter():
    x = np.linspace(0, 1, 11)
    with pytest.raises(RankDeficiencyError) as info:
        least_squares(lambda p, t: p[0] + p[1] * t + 0 * p[2], x, 2 * x, [0.0, 0.0, 0.0], names=("a", "b", "dead"))
    assert info.value.parameter == "dead"
    # two parameters that only enter as a sum
    with pytest.raises(RankDeficiencyError) as info:
        least_squares(lambda p, t: (p[0] + p[1]) * t, x, 2 * x, [0.3, 0.4], names=("u", "v"))
    assert info.value.parameter in ("u", "v")


def test_iteration_cap_flagged():
    x = np.linspace(-30, 30, 61)
    y = lorentzian_dip([1.0, 4.0, 1.3, 6.0], x)
    r = least_squares(lorentzian_dip, x, y, [0.5, 1.0, 10.0, 20.0], max_iter=2)
    assert not r.converged and r.n_iter == 2
    assert "cap" in r.message


def test_argument_checks():
    x = np.arange(3.0)
    with pytest.raises(ValueError):
        least_squares(line, x, [1.0, np.nan, 2.0], [0, 0])
    with pytest.raises(ValueError):
        least_squares(lambda p, t: p[0] + p[1] * t + p[2] * t**2 + p[3], x, x, [0, 0, 0, 0])
    with pytest.raises(ValueError):
        least_squares(line, x, x, [0, 0], names=("only",))


def test_sigma_weighting():
    x = np.linspace(0, 1, 20)
    y = 1 + x
    y[0] += 5.0
    sigma = np.ones_like(x)
    sigma[0] = 1e6
    r = least_squares(line, x, y, [0, 0], sigma=sigma)
    assert np.allclose(r.params, [1, 1], atol=1e-4)
    assert r.as_dict().keys() == {"p0", "p1"}
