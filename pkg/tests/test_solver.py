import numpy as np
import pytest
from scipy.optimize import newton_krylov

from vortexcore import (GridField, PotentialEvaluator, SolverOptions, VortexConfig, assemble_ansatz,
                        continue_in_eps, detect_cores, make_domain, newton_solve, residual,
                        solve_background, solve_params, vn_preset)
from vortexcore.errors import CoreError, SolveError, VortexCoreError
from vortexcore.routh import DiskMask
from vortexcore.solver import DiscreteProblem, ansatz_seed, split_cores, to_u, to_w

from conftest import SWEEP, scale


def _disk(n):
    dom = make_domain("disk", {"radius": 1.0}, n)
    ev = PotentialEvaluator(dom)
    return dom, ev, solve_background(dom, vn_preset(dom, "zero"), ev)


@pytest.fixture(scope="module")
def disk64():
    return _disk(64)


def _cell_loop_residual(values, grid, d2, level, p, mask):
    """Operator evaluated node by node on the unit disk, boundary crossings
    located with the exact circle intersection."""
    ny, nx = grid.shape
    h = grid.h
    out = np.full(grid.shape, np.nan)
    for iy in range(1, ny - 1):
        for ix in range(1, nx - 1):
            if not mask[iy, ix]:
                continue
            x, y = grid.xs[ix], grid.ys[iy]
            vc = values[iy, ix]
            lap = 0.0
            for dy, dx in ((0, 1), (0, -1), (1, 0), (-1, 0)):
                jy, jx = iy + dy, ix + dx
                if mask[jy, jx] and 0 < jy < ny - 1 and 0 < jx < nx - 1:
                    lap += (values[jy, jx] - vc) / h ** 2
                else:
                    # x + t h e on the unit circle, 0 < t <= 1
                    b = x * dx + y * dy
                    t = (-b + np.sqrt(b * b - (x * x + y * y - 1.0))) / h
                    t = max(min(t, 1.0), 1e-6)
                    lap += (0.0 - vc) / (t * h ** 2)
            out[iy, ix] = -d2 * lap - max(vc - level, 0.0) ** p
    return out


# -- residual ---------------------------------------------------------------------------

def test_residual_of_zero(disk64, centered):
    dom, ev, flow = disk64
    zero = GridField.from_domain(dom, np.where(dom.mask, 0.0, np.nan))
    r = residual(zero, ev, flow, centered, scale(0.05))
    assert np.nanmax(np.abs(r.values)) == 0.0


def test_residual_manufactured(disk64):
    dom, ev, flow = disk64
    cfg = VortexConfig([1.0], [[0.1, -0.05]], masks=[DiskMask((0.1, -0.05), 0.5)])
    sc = scale(0.05)
    X, Y = dom.grid.XY
    # smooth bump whose plus-part {v > 1} is a small disk inside the mask
    v = 1.3 * np.exp(-((X - 0.1) ** 2 + (Y + 0.05) ** 2) / 0.05) * (1 - X ** 2 - Y ** 2)
    field = GridField.from_domain(dom, np.where(dom.mask, v, np.nan))
    r = residual(field, ev, flow, cfg, sc)
    prob = DiscreteProblem(ev, flow, cfg, sc)
    mask = prob.st.index >= 0
    ref = _cell_loop_residual(np.where(mask, v, 0.0), dom.grid, sc.delta ** 2, 1.0, 2.0, mask)
    assert np.array_equal(np.isfinite(r.values), np.isfinite(ref))
    scale_ = np.nanmax(np.abs(ref))
    assert np.nanmax(np.abs(r.values - ref)) < 1e-14 * max(scale_, 1.0) * 10
    assert np.any((v > 1.0) & mask)


def test_residual_shape_mismatch(disk64, centered):
    dom, ev, flow = disk64
    with pytest.raises(VortexCoreError) as exc:
        residual(np.zeros((10, 10)), ev, flow, centered, scale(0.05))
    assert exc.value.code == "SHAPE_MISMATCH"


# -- Newton ------------------------------------------------------------------------------

def test_zero_seed_trivial_branch(disk64, centered):
    dom, ev, flow = disk64
    zero = GridField.from_domain(dom, np.where(dom.mask, 0.0, np.nan))
    w, rep = newton_solve(zero, ev, flow, centered, scale(0.05))
    assert rep.converged and rep.iterations == 1
    assert np.nanmax(np.abs(w.values)) == 0.0
    assert rep.cores == []


def test_disk_solution_centroid(disk_sweep, ev_disk256):
    h = ev_disk256.domain.grid.h
    for w, rep in disk_sweep:
        assert rep.converged
        assert rep.residual_norm <= 1e-10
        assert len(rep.cores) == 1
        assert np.linalg.norm(rep.cores[0].centroid) <= 2 * h


def test_newton_krylov_cross_check(disk64, centered, profile2):
    dom, ev, flow = disk64
    sc = scale(0.05)
    P, _ = ansatz_seed(ev, flow, centered, sc, profile2)
    w, rep = newton_solve(P, ev, flow, centered, sc)
    prob = DiscreteProblem(ev, flow, centered, sc)
    x = newton_krylov(prob.residual, prob.pack(P), f_tol=1e-11, method="lgmres", maxiter=100)
    assert np.abs(x - prob.pack(w)).max() < 1e-8


@pytest.mark.slow
def test_refinement_second_order(centered, profile2):
    sc = scale(0.05)
    r = np.linspace(0.45, 0.85, 9)
    pts = np.column_stack([r, np.zeros_like(r)])
    vals = []
    for n in (64, 128, 256):
        dom, ev, flow = _disk(n)
        P, _ = ansatz_seed(ev, flow, centered, sc, profile2)
        w, _ = newton_solve(P, ev, flow, centered, sc)
        vals.append(w.at(pts))
    e1 = np.abs(vals[0] - vals[1]).max()
    e2 = np.abs(vals[1] - vals[2]).max()
    assert e1 / e2 > 3.0


def test_maximum_principle(disk_sweep):
    for w, _ in disk_sweep:
        assert np.nanmin(w.values) >= -1e-12


def test_mask_equivalence(disk64, profile2):
    dom, ev, flow = disk64
    sc = scale(0.05)
    masked = VortexConfig([1.0], [[0.0, 0.0]], masks=[DiskMask((0.0, 0.0), 0.6)])
    global_ = VortexConfig([1.0], [[0.0, 0.0]], use_masks=False)
    P, _ = ansatz_seed(ev, flow, masked, sc, profile2)
    w1, _ = newton_solve(P, ev, flow, masked, sc)
    w2, _ = newton_solve(P, ev, flow, global_, sc)
    assert np.nanmax(np.abs(w1.values - w2.values)) < 1e-9


def test_vortex_collapse(disk64, centered):
    dom, ev, flow = disk64
    X, Y = dom.grid.XY
    low = GridField.from_domain(dom, np.where(dom.mask, 0.6 * (1 - X ** 2 - Y ** 2), np.nan))
    with pytest.raises(SolveError) as exc:
        newton_solve(low, ev, flow, centered, scale(0.05))
    assert exc.value.code == "VORTEX_COLLAPSED"


def test_core_contact(disk64, centered, profile2):
    dom, ev, flow = disk64
    sc = scale(0.05)
    P, _ = ansatz_seed(ev, flow, centered, sc, profile2)
    tight = VortexConfig([1.0], [[0.0, 0.0]], masks=[DiskMask((0.0, 0.0), 0.24)])
    with pytest.raises(SolveError) as exc:
        newton_solve(P, ev, flow, tight, sc)
    assert exc.value.code == "CORE_CONTACT"
    w, rep = newton_solve(P, ev, flow, tight, sc, SolverOptions(on_contact="flag"))
    assert rep.cores[0].touches_mask
    assert any("touches" in f for f in rep.flags)


def test_iteration_cap(disk64, centered, profile2):
    dom, ev, flow = disk64
    sc = scale(0.05)
    P, _ = ansatz_seed(ev, flow, centered, sc, profile2)
    with pytest.raises(SolveError) as exc:
        newton_solve(P, ev, flow, centered, sc, SolverOptions(max_iter=1))
    assert exc.value.code == "NONCONVERGENCE"


def test_u_w_rescaling(disk_sweep):
    w, rep = disk_sweep[-1]
    sc = scale(rep.eps)
    u = to_u(w, sc)
    assert u.tag == "u"
    assert np.nanmax(np.abs(to_w(u, sc).values - w.values)) < 1e-15


# -- continuation ----------------------------------------------------------------------------

def test_sweep_radius_decreases(disk_sweep):
    radii = [rep.cores[0].equivalent_radius for _, rep in disk_sweep]
    assert np.all(np.diff(radii) < 0)
    assert [rep.eps for _, rep in disk_sweep] == list(SWEEP)


def test_single_entry_continuation_equals_newton(disk64, centered, profile2):
    dom, ev, flow = disk64
    sc = scale(0.07)
    P, _ = ansatz_seed(ev, flow, centered, sc, profile2)
    w1, r1 = newton_solve(P, ev, flow, centered, sc)
    [(w2, r2)] = continue_in_eps(ev, flow, centered, profile2, [0.07])
    assert np.array_equal(w1.values, w2.values, equal_nan=True)
    assert r1.iterations == r2.iterations


def test_continuation_rejects_bad_lists(disk64, centered, profile2):
    dom, ev, flow = disk64
    for bad in ([], [0.05, 0.07], [0.3, 0.1], [0.1, 0.1]):
        with pytest.raises(VortexCoreError) as exc:
            continue_in_eps(ev, flow, centered, profile2, bad)
        assert exc.value.code == "CONFIG_INVALID"


def test_continuation_reports_failing_eps(disk64, profile2):
    dom, ev, flow = disk64
    with pytest.raises(VortexCoreError) as exc:
        continue_in_eps(ev, flow, VortexConfig([1.0], [[0.0, 0.0]]), profile2, [0.2, 0.1])
    assert exc.value.details["eps"] == 0.2
    with pytest.raises(SolveError) as exc:
        continue_in_eps(ev, flow, VortexConfig([1.0], [[0.0, 0.0]]), profile2, [0.07, 0.05],
                        SolverOptions(max_iter=1))
    assert exc.value.details["eps"] == 0.07


# -- cores -------------------------------------------------------------------------------------

def test_detect_cores_empty(disk64, centered):
    dom, ev, flow = disk64
    zero = GridField.from_domain(dom, np.where(dom.mask, 0.0, np.nan))
    assert detect_cores(zero, centered, scale(0.05), flow, ev=ev) == []


def test_detect_cores_on_ansatz(profile2):
    T, sigma = 10.0, 0.5
    dom = make_domain("disk", {"radius": 1.0}, 256)
    ev = PotentialEvaluator(dom)
    flow = solve_background(dom, vn_preset(dom, "sin2", 2.0), ev)
    cfg = VortexConfig([1, 1], [[0.45, 0.0], [-0.45, 0.0]],
                       masks=[DiskMask((0.45, 0.0), 0.44), DiskMask((-0.45, 0.0), 0.44)])
    for eps in (0.05, 0.01):
        sc = scale(eps)
        pr = solve_params(ev, flow, cfg, sc, profile2)
        P = assemble_ansatz(ev, flow, cfg, pr, sc, profile2)
        cores = detect_cores(P, cfg, sc, flow, ev=ev)
        assert sorted(c.vortex for c in cores) == [0, 1]
        for c in cores:
            s = pr.s[c.vortex]
            lo, hi = s * (1 - T * s), s * (1 + s ** sigma)
            # the circumscribed radius is measured on grid nodes
            assert lo - dom.grid.h <= c.radius <= hi + dom.grid.h


def test_detect_cores_missing_subdomain(disk_sweep, ev_disk256, zero_flow256):
    w, rep = disk_sweep[-1]
    pair = VortexConfig([1.0, 1.0], [[0.0, 0.0], [0.6, 0.0]],
                        masks=[DiskMask((0.0, 0.0), 0.4), DiskMask((0.6, 0.0), 0.15)])
    with pytest.raises(CoreError) as exc:
        detect_cores(w, pair, scale(rep.eps), zero_flow256, ev=ev_disk256)
    assert exc.value.code == "VORTEX_COLLAPSED"
    assert exc.value.details["vortices"] == [1]


def test_split_cores_helper():
    class C:
        def __init__(self, v):
            self.vortex = v
    assert split_cores([C(0), C(1), C(1)]) == [1]
    assert split_cores([C(0)]) == []


def test_radius_over_eps_stable(disk_sweep):
    ratios = np.array([rep.cores[0].radius / rep.eps for _, rep in disk_sweep])
    assert np.all(np.abs(ratios / ratios.mean() - 1) <= 0.2)


def test_jacobian_first_order(disk64, centered, profile2):
    dom, ev, flow = disk64
    sc = scale(0.05)
    P, _ = ansatz_seed(ev, flow, centered, sc, profile2)
    prob = DiscreteProblem(ev, flow, centered, sc)
    w = prob.pack(P)
    rng = np.random.default_rng(11)
    v = rng.standard_normal(len(w))
    Jv = prob.jacobian(w) @ v
    errs = []
    for t in (1e-4, 1e-5):
        fd = (prob.residual(w + t * v) - prob.residual(w)) / t
        errs.append(np.abs(fd - Jv).max())
    assert errs[1] < errs[0]
    assert errs[0] / errs[1] == pytest.approx(10.0, rel=0.3)
