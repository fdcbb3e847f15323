import copy

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.optimize import brentq

from vortexcore import (PotentialEvaluator, VortexConfig, eval_Phi, eval_W, find_critical, grad_W,
                        make_domain, solve_background, vn_preset)
from vortexcore.errors import AdmissibilityError, CriticalPointError, VortexCoreError
from vortexcore.routh import DiskMask, check_admissible, default_masks, multistart

from conftest import random_points


def _rot(Z, t):
    c, s = np.cos(t), np.sin(t)
    return Z @ np.array([[c, s], [-s, c]])


@pytest.fixture(scope="module")
def strain128(disk128, ev_disk):
    return solve_background(disk128, vn_preset(disk128, "sin2", 2.0), ev_disk)


@pytest.fixture(scope="module")
def annulus():
    dom = make_domain("annulus", {"inner": 0.4, "outer": 1.0}, 128)
    return dom, PotentialEvaluator(dom)


# -- W and Phi values ---------------------------------------------------------------

def test_W_single_vortex_at_centre(ev_disk, zero_flow, centered):
    assert eval_W(ev_disk, zero_flow, centered) == pytest.approx(0.0, abs=1e-15)
    assert np.abs(grad_W(ev_disk, zero_flow, centered)).max() < 1e-8
    assert np.abs(grad_W(ev_disk, zero_flow, centered, method="fd")).max() < 1e-8


def test_W_single_vortex_closed_form(ev_disk, zero_flow):
    for r in (0.1, 0.4, 0.7):
        cfg = VortexConfig([1.0], [[r, 0.0]])
        assert eval_W(ev_disk, zero_flow, cfg) == pytest.approx(np.log(1 - r * r) / (4 * np.pi), abs=1e-14)


def test_symmetric_pair_without_background_has_no_critical_point(ev_disk, zero_flow):
    # W(d) = (1/2pi) ln((1 - d^4) / (2d)) for unit strengths at (+-d, 0)
    d = np.linspace(0.05, 0.85, 161)
    W = np.array([eval_W(ev_disk, zero_flow, VortexConfig([1, 1], [[x, 0], [-x, 0]])) for x in d])
    assert np.allclose(W, np.log((1 - d ** 4) / (2 * d)) / (2 * np.pi), atol=1e-13)
    assert np.all(np.diff(W) < 0)
    with pytest.raises((CriticalPointError, AdmissibilityError)):
        find_critical(ev_disk, zero_flow, VortexConfig([1, 1], [[0.4, 0], [-0.4, 0]]))


def test_phi_single_vortex_centre(ev_disk, zero_flow, centered):
    expected = np.pi * (ev_disk.lnR + 2 * np.pi * ev_disk.h([[0.0, 0.0]], [0.0, 0.0])[0])
    assert eval_Phi(ev_disk, zero_flow, centered) == pytest.approx(expected, abs=1e-13)
    assert expected == pytest.approx(np.pi * np.log(3.0), abs=1e-14)


def test_phi_homogeneity(ev_disk, zero_flow):
    Z = [[0.2, -0.3], [-0.4, 0.1]]
    one = eval_Phi(ev_disk, zero_flow, VortexConfig([1.0, 0.5], Z))
    two = eval_Phi(ev_disk, zero_flow, VortexConfig([2.0, 1.0], Z))
    assert two == pytest.approx(4 * one, rel=1e-13)


def test_phi_W_identity_analytic(ev_disk, strain128):
    rng = np.random.default_rng(5)
    for m in (1, 2, 3):
        kappa = rng.uniform(0.5, 2.0, m)
        vals = []
        for _ in range(20):
            Z = random_points(rng, m, 0.75)
            if m > 1 and min(np.linalg.norm(Z[i] - Z[j]) for i in range(m) for j in range(i)) < 0.05:
                continue
            cfg = VortexConfig(kappa, Z)
            vals.append(eval_Phi(ev_disk, strain128, cfg) + 4 * np.pi ** 2 * eval_W(ev_disk, strain128, cfg))
        assert np.abs(np.array(vals) - np.sum(np.pi * kappa ** 2 * ev_disk.lnR)).max() < 1e-9


def test_R_enters_phi_only_as_a_constant(ev_disk, strain128):
    cfg = VortexConfig([1.0, 2.0], [[0.3, 0.1], [-0.2, -0.3]])
    other = copy.copy(ev_disk)
    other.R = 7.0
    other.lnR = float(np.log(7.0))
    assert eval_W(other, strain128, cfg) == eval_W(ev_disk, strain128, cfg)
    shift = eval_Phi(other, strain128, cfg) - eval_Phi(ev_disk, strain128, cfg)
    assert shift == pytest.approx(np.sum(np.pi * cfg.kappa ** 2) * np.log(7.0 / 3.0), rel=1e-12)


def test_rotational_equivariance(ev_disk, zero_flow):
    rng = np.random.default_rng(6)
    for _ in range(10):
        Z = random_points(rng, 3, 0.7)
        cfg = VortexConfig([1.0, 0.7, 1.4], Z)
        t = rng.uniform(0, 2 * np.pi)
        assert eval_W(ev_disk, zero_flow, cfg.with_positions(_rot(Z, t))) == pytest.approx(
            eval_W(ev_disk, zero_flow, cfg), abs=1e-12)


# -- gradients -----------------------------------------------------------------------

def test_analytic_gradient_second_order(ev_disk, strain128):
    rng = np.random.default_rng(7)
    for _ in range(3):
        Z = random_points(rng, 2, 0.6)
        cfg = VortexConfig([1.0, 2.0], Z)
        ga = grad_W(ev_disk, strain128, cfg, method="analytic")
        errs = [np.abs(grad_W(ev_disk, strain128, cfg, h_fd=h, method="fd") - ga).max()
                for h in (1e-2, 5e-3, 2.5e-3)]
        rates = np.log2(np.array(errs[:-1]) / np.array(errs[1:]))
        assert np.all(rates > 1.8)


def test_grid_backend_gradient_matches_analytic(disk128, ev_disk, ev_disk_grid):
    cfg = VortexConfig([1.0, 1.0], [[0.3, 0.1], [-0.2, -0.25]])
    ga = grad_W(ev_disk, None, cfg)
    gg = grad_W(ev_disk_grid, None, cfg)
    assert np.abs(gg - ga).max() < 2e-2


def test_gradient_stencil_must_stay_admissible(ev_disk):
    cfg = VortexConfig([1.0], [[0.0, 0.0]], rho=0.1)
    with pytest.raises(AdmissibilityError):
        grad_W(ev_disk, None, cfg, Z=[[0.899, 0.0]], h_fd=0.01, method="fd")


# -- critical points -----------------------------------------------------------------

def test_single_vortex_critical_point_disk(ev_disk, zero_flow):
    cp = find_critical(ev_disk, zero_flow, VortexConfig([1.0], [[0.3, 0.2]]))
    assert np.abs(cp.Z).max() < 1e-8
    # W = (1/4pi) ln(1 - |z|^2) is maximal at the centre
    assert cp.classification == "nondegenerate-max"
    assert np.allclose(cp.hessian_eigs, -1 / (2 * np.pi), rtol=1e-4)
    assert list(cp.hessian_eigs) == sorted(cp.hessian_eigs)


def _radial_scan(ev, r1, r2, n=400):
    f = lambda r: eval_W(ev, None, VortexConfig([1.0], [[r, 0.0]]), check=False)  # noqa: E731
    h = 1e-5
    df = lambda r: (f(r + h) - f(r - h)) / (2 * h)  # noqa: E731
    r = np.linspace(r1, r2, n)
    d = np.array([df(x) for x in r])
    k = np.nonzero(np.sign(d[:-1]) != np.sign(d[1:]))[0]
    assert len(k) == 1
    root = brentq(df, r[k[0]], r[k[0] + 1], xtol=1e-14)
    return root, f(root)


def test_annulus_critical_point_matches_radial_scan(annulus):
    dom, ev = annulus
    cp = find_critical(ev, None, VortexConfig([1.0], [[0.7, 0.1]]))
    r = np.linalg.norm(cp.Z)
    assert 0.4 < r < 1.0
    r_scan, w_scan = _radial_scan(ev, 0.45, 0.95)
    assert abs(r - r_scan) < 1e-6
    assert abs(cp.value - w_scan) < 1e-6
    assert cp.orbit_eig is not None and abs(cp.orbit_eig) < 1e-4
    assert cp.classification == "nondegenerate-max"


def _pair_scan(ev, flow):
    W = lambda d: eval_W(ev, flow, VortexConfig([1, 1], [[d, 0], [-d, 0]]), check=False)  # noqa: E731
    h = 1e-6
    dW = lambda d: (W(d + h) - W(d - h)) / (2 * h)  # noqa: E731
    d = np.linspace(0.05, 0.85, 321)
    v = np.array([dW(x) for x in d])
    k = np.nonzero(np.sign(v[:-1]) != np.sign(v[1:]))[0]
    assert len(k) == 1
    return brentq(dW, d[k[0]], d[k[0] + 1], xtol=1e-14)


def test_pair_critical_point_matches_scan(ev_disk, strain128):
    d_scan = _pair_scan(ev_disk, strain128)
    cp = find_critical(ev_disk, strain128, VortexConfig([1, 1], [[0.3, 0.0], [-0.3, 0.0]]))
    assert np.abs(cp.Z - [[d_scan, 0.0], [-d_scan, 0.0]]).max() < 1e-6
    assert cp.grad_norm < 1e-6
    cfg = VortexConfig([1, 1], [[d_scan, 0.0], [-d_scan, 0.0]])
    assert np.linalg.norm(grad_W(ev_disk, strain128, cfg)) < 1e-6
    assert cp.classification == "saddle"


def test_phi_and_W_share_critical_points(ev_disk, strain128):
    cfg = VortexConfig([1, 1], [[0.3, 0.05], [-0.3, -0.05]])
    a = find_critical(ev_disk, strain128, cfg, objective="W")
    b = find_critical(ev_disk, strain128, cfg, objective="Phi")
    assert np.abs(a.Z - b.Z).max() < 1e-6


def test_iterate_leaving_admissible_set(disk128, ev_disk):
    flow = solve_background(disk128, vn_preset(disk128, "cos"), ev_disk)
    with pytest.raises(AdmissibilityError) as exc:
        find_critical(ev_disk, flow, VortexConfig([1.0], [[0.3, 0.2]]))
    assert exc.value.details["constraint"] == "boundary_distance"


def test_check_admissible(disk128):
    check_admissible(disk128, [[0.0, 0.0], [0.5, 0.0]], 0.1)
    with pytest.raises(AdmissibilityError) as exc:
        check_admissible(disk128, [[0.0, 0.0], [0.005, 0.0]], 0.1)
    assert exc.value.details["constraint"] == "separation"
    with pytest.raises(AdmissibilityError) as exc:
        check_admissible(disk128, [[1.2, 0.0]], 0.1)
    assert exc.value.details["constraint"] == "inside"


def test_config_validation(disk128, ev_disk):
    with pytest.raises(VortexCoreError):
        VortexConfig([1.0, -1.0], [[0, 0], [0.5, 0]])
    with pytest.raises(VortexCoreError):
        VortexConfig([1.0, 2.0], [[0, 0], [0.5, 0]], use_masks=False)
    other = make_domain("disk", {"radius": 1.0}, 64)
    flow = solve_background(other, vn_preset(other, "zero"))
    with pytest.raises(VortexCoreError) as exc:
        eval_W(ev_disk, flow, VortexConfig([1.0], [[0.1, 0.0]]))
    assert exc.value.code == "DOMAIN_MISMATCH"


def test_default_masks_disjoint(disk128):
    Z = np.array([[0.3, 0.0], [-0.3, 0.0], [0.0, 0.5]])
    masks = default_masks(disk128, Z)
    for i, mi in enumerate(masks):
        assert mi.contains(Z[i])[0]
        for j, mj in enumerate(masks[:i]):
            gap = np.linalg.norm(np.subtract(mi.center, mj.center))
            assert gap >= mi.radius + mj.radius
    assert isinstance(masks[0], DiskMask)


def test_multistart_keeps_seed_order(ev_disk, strain128):
    cfg = VortexConfig([1, 1], [[0.3, 0.0], [-0.3, 0.0]])
    seeds = [[[0.3, 0.0], [-0.3, 0.0]], [[0.25, 0.02], [-0.25, -0.02]], [[0.95, 0.0], [-0.3, 0.0]]]
    serial = multistart(ev_disk, strain128, cfg, seeds, jobs=1)
    threaded = multistart(ev_disk, strain128, cfg, seeds, jobs=2)
    assert isinstance(serial[2], AdmissibilityError)
    for a, b in zip(serial[:2], threaded[:2]):
        assert np.array_equal(a.Z, b.Z)


@settings(max_examples=25, deadline=None)
@given(st.lists(st.floats(min_value=-0.6, max_value=0.6), min_size=4, max_size=4),
       st.floats(min_value=0.2, max_value=3.0), st.floats(min_value=0.2, max_value=3.0))
def test_identity_property(ev_disk, coords, k1, k2):
    Z = np.array(coords).reshape(2, 2)
    if np.linalg.norm(Z[0] - Z[1]) < 0.05:
        return
    cfg = VortexConfig([k1, k2], Z)
    total = eval_Phi(ev_disk, None, cfg) + 4 * np.pi ** 2 * eval_W(ev_disk, None, cfg)
    assert total == pytest.approx(np.pi * (k1 ** 2 + k2 ** 2) * ev_disk.lnR, abs=1e-9)
