import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from vortexcore import eval_profile, solve_profile
from vortexcore.errors import ProfileError


def _rk4_shoot(c, p, n=4000):
    """phi(1), phi'(1) for phi(0) = c with a fixed-step RK4 march."""
    r0 = 1e-4
    phi = c - c ** p * r0 ** 2 / 4
    dphi = -c ** p * r0 / 2
    h = (1.0 - r0) / n
    r = r0

    def f(r, y0, y1):
        return y1, -y1 / r - max(y0, 0.0) ** p

    for _ in range(n):
        k1 = f(r, phi, dphi)
        k2 = f(r + h / 2, phi + h / 2 * k1[0], dphi + h / 2 * k1[1])
        k3 = f(r + h / 2, phi + h / 2 * k2[0], dphi + h / 2 * k2[1])
        k4 = f(r + h, phi + h * k3[0], dphi + h * k3[1])
        phi += h / 6 * (k1[0] + 2 * k2[0] + 2 * k3[0] + k4[0])
        dphi += h / 6 * (k1[1] + 2 * k2[1] + 2 * k3[1] + k4[1])
        r += h
    return phi, dphi


def _bisection_slope(p):
    lo, hi = 1.0, 50.0          # phi(1) > 0 for small heights, < 0 for large ones
    for _ in range(60):
        mid = 0.5 * (lo + hi)
        if _rk4_shoot(mid, p)[0] > 0:
            lo = mid
        else:
            hi = mid
    return _rk4_shoot(0.5 * (lo + hi), p)[1]


def test_boundary_and_centre_conditions(profile2):
    assert profile2.phi[-1] == 0.0
    assert profile2.r[-1] == 1.0
    assert profile2.dphi[0] == 0.0
    assert profile2.phi0 > 0
    assert np.all(profile2.phi[:-1] > 0)
    assert profile2.phi_prime_1 < 0


def test_pohozaev_p2(profile2):
    assert profile2.I_p / (2 * np.pi * abs(profile2.phi_prime_1)) == pytest.approx(1.0, abs=1e-6)


@pytest.mark.parametrize("p", [1.5, 2.0, 3.0, 5.0])
def test_pohozaev_identities(p):
    res = solve_profile(p).pohozaev_residuals()
    assert res["I_p"] < 1e-6
    assert res["I_p1"] < 1e-6


def test_p3_slope_against_bisection_shooting():
    sol = solve_profile(3.0)
    assert sol.phi_prime_1 == pytest.approx(_bisection_slope(3.0), abs=1e-6)


def test_step_doubling(profile2):
    a = solve_profile(2.0, max_step=0.02)
    b = solve_profile(2.0, max_step=0.01)
    assert abs(a.phi_prime_1 - b.phi_prime_1) < 1e-8


@pytest.mark.parametrize("p", [1.5, 2.0, 3.0])
def test_equation_residual(p):
    sol = solve_profile(p)
    r, phi, dphi = sol.r, sol.phi, sol.dphi
    h = r[1] - r[0]
    # fourth-order central differences of the stored derivative
    d2 = (-dphi[4:] + 8 * dphi[3:-1] - 8 * dphi[1:-3] + dphi[:-4]) / (12 * h)
    rr = r[2:-2]
    res = d2 + dphi[2:-2] / rr + np.maximum(phi[2:-2], 0.0) ** p
    # for p < 2 phi^p has an unbounded fourth derivative at the zero, which
    # spoils the difference stencil (not the solution) in the last samples
    res = res[rr <= 0.99]
    assert np.abs(res).max() < 1e-6


def test_eval_profile_examples(profile2):
    s = profile2.phi_prime_1
    v, d = eval_profile(profile2, 1.0)
    assert v == pytest.approx(0.0, abs=1e-15)
    assert d == pytest.approx(s, rel=1e-12)
    v, d = eval_profile(profile2, np.e)
    assert v == pytest.approx(s, rel=1e-14)
    assert d == pytest.approx(s / np.e, rel=1e-14)


def test_eval_profile_c1_at_one(profile2):
    vi, di = eval_profile(profile2, 1.0 - 1e-12)
    vo, do = eval_profile(profile2, 1.0 + 1e-12)
    assert abs(vi - vo) < 1e-8
    assert abs(di - do) < 1e-8


def test_eval_profile_matches_samples(profile2):
    k = np.arange(0, len(profile2.r), 97)
    v, d = eval_profile(profile2, profile2.r[k])
    assert np.allclose(v, profile2.phi[k], atol=1e-14)
    assert np.allclose(d, profile2.dphi[k], atol=1e-12)


def test_eval_profile_negative_radius(profile2):
    with pytest.raises(ValueError):
        eval_profile(profile2, -0.1)


def test_profile_errors():
    with pytest.raises(ProfileError) as exc:
        solve_profile(1.0)
    assert exc.value.code == "P_OUT_OF_RANGE"
    with pytest.raises(ProfileError) as exc:
        solve_profile(2.0, tol=1e-3)
    assert exc.value.code == "TOL_OUT_OF_RANGE"


@settings(max_examples=15, deadline=None)
@given(st.floats(min_value=1.2, max_value=9.0))
def test_profile_invariants_over_p(p):
    sol = solve_profile(p)
    assert sol.phi_prime_1 < 0
    assert np.all(np.diff(sol.phi) <= 1e-14)
    assert max(sol.pohozaev_residuals().values()) < 1e-6
