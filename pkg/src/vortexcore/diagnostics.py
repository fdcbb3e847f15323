"""Checks on computed solutions: circulation, core geometry, the reduced
energy K(Z) and its expansion, and the reconstructed Euler flow."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field

import numpy as np
from numpy.polynomial.legendre import leggauss

from .ansatz import ansatz_at, check_cores, solve_params
from .errors import VortexCoreError
from .potential import TWO_PI
from .routh import eval_Phi
from .solver import DiscreteProblem, detect_cores, to_w

TABLE_COLUMNS = ("eps", "circulation_err", "core_radius_over_eps", "dist_to_Zstar", "energy_residual")


# ---------------------------------------------------------------------------
# circulation and grid energy
# ---------------------------------------------------------------------------

def vorticity_weight(scale):
    """omega = weight * (w - k - 2 pi q/|ln eps|)_+^p."""
    return (scale.lneps / TWO_PI) ** scale.p / scale.eps ** 2


def circulation(u, ev, flow, cfg, scale, problem=None):
    """(total, per-core) circulation of u by midpoint quadrature."""
    prob = problem or DiscreteProblem(ev, flow, cfg, scale)
    w = to_w(u, scale)
    wv = prob.pack(w)
    omega = vorticity_weight(scale) * prob.nonlinearity(wv)
    cell = prob.grid.h ** 2
    total = float(omega.sum() * cell)
    if total == 0.0:
        return 0.0, []
    cores = detect_cores(w, cfg, scale, flow, problem=prob)
    om_full = np.zeros(prob.grid.shape)
    om_full[prob.iy, prob.ix] = omega
    per = [float(om_full[c.cells[:, 0], c.cells[:, 1]].sum() * cell) for c in cores]
    return total, per


def energy(w, ev, flow, cfg, scale, method="centered", problem=None):
    """(delta^2/2) int |D_h w|^2 - sum_j 1/(p+1) int chi_j (w - level_j)_+^(p+1).

    ``centered`` uses centred differences on the zero-extended field;
    ``stencil`` uses -w . A_h w, which is exact for the discrete equation.
    """
    prob = problem or DiscreteProblem(ev, flow, cfg, scale)
    wv = prob.pack(w)
    cell = prob.grid.h ** 2
    if method == "stencil":
        dirichlet = -float(wv @ (prob.st.A @ wv)) * cell
    elif method == "centered":
        full = np.zeros(prob.grid.shape)
        full[prob.iy, prob.ix] = wv
        gy, gx = np.gradient(full, prob.grid.h)
        dirichlet = float(np.sum(gx * gx + gy * gy)) * cell
    else:
        raise VortexCoreError(f"unknown energy method {method!r}", code="CONFIG_INVALID")
    p = scale.p
    pot = float(np.sum(prob.excess(wv) ** (p + 1))) * cell / (p + 1)
    return 0.5 * prob.d2 * dirichlet - pot


# ---------------------------------------------------------------------------
# ansatz energy by polar quadrature
# ---------------------------------------------------------------------------

@dataclass
class QuadratureRule:
    n_inner: int = 160
    n_outer: int = 160
    n_theta: int = 192
    outer_factor: float = 2.0     # plus-part integrated out to this many core radii


def _polar_nodes(z, r0, r1, n_r, n_theta):
    x, wts = leggauss(n_r)
    r = 0.5 * (r1 - r0) * x + 0.5 * (r1 + r0)
    wr = 0.5 * (r1 - r0) * wts * r
    th = np.arange(n_theta) * (TWO_PI / n_theta)
    R_, T_ = np.meshgrid(r, th, indexing="ij")
    pts = np.column_stack([z[0] + (R_ * np.cos(T_)).ravel(), z[1] + (R_ * np.sin(T_)).ravel()])
    wt = np.repeat(wr, n_theta) * (TWO_PI / n_theta)
    return pts, wt, R_.ravel()


def ansatz_energy(ev, flow, cfg, scale, profile, params=None, rule=None, details=False):
    """K(Z) = I(P_{delta,Z}) evaluated with quadrature on polar grids.

    The Dirichlet part uses delta^2 int |D P|^2 = sum_j int_{B_sj} f_j P,
    with f_j = (delta/s_j)^(beta p) phi(r/s_j)^p, which holds because the
    projected profiles solve -delta^2 Lap P = sum_j f_j with P = 0 on the
    boundary. The plus-part is integrated on disks of radius
    ``outer_factor * s_j`` clipped to the subdomain.
    """
    rule = rule or QuadratureRule()
    params = params if params is not None else solve_params(ev, flow, cfg, scale, profile)
    check_cores(ev, cfg, params)
    p, b = scale.p, scale.beta
    masks = cfg.resolved_masks(ev.domain) if cfg.use_masks else None
    limits = ev.domain.distance_to_boundary(params.Z)
    dirichlet = 0.0
    pot = 0.0
    truncated = []
    for j, (z, s) in enumerate(zip(params.Z, params.s)):
        lim = limits[j]
        if masks is not None:
            mk = masks[j]
            lim = min(lim, mk.radius - np.linalg.norm(z - np.asarray(mk.center)))
        rho = min(rule.outer_factor * s, lim * (1 - 1e-9))
        p_in, w_in, r_in = _polar_nodes(z, 0.0, s, rule.n_inner, rule.n_theta)
        p_out, w_out, r_out = _polar_nodes(z, s, rho, rule.n_outer, rule.n_theta)
        pts = np.vstack([p_in, p_out])
        wts = np.concatenate([w_in, w_out])
        P = ansatz_at(ev, cfg, params, profile, pts)
        n_in = len(p_in)
        phi = np.maximum(profile.spline()(r_in / s), 0.0)
        f = (scale.delta / s) ** (b * p) * phi ** p
        dirichlet += float(np.sum(w_in * f * P[:n_in]))
        level = cfg.kappa[j]
        if flow is not None:
            level = level + TWO_PI * flow.level_q_at(pts) / scale.lneps
        exc = np.maximum(P - level, 0.0)
        if masks is not None:
            exc = np.where(masks[j].contains(pts), exc, 0.0)
        pot += float(np.sum(wts * exc ** (p + 1))) / (p + 1)
        ring = exc[-rule.n_theta:]
        if np.any(ring > 0):
            truncated.append(j)
    K = 0.5 * dirichlet - pot
    if details:
        return K, {"dirichlet": 0.5 * dirichlet, "potential": pot, "truncated": truncated,
                   "params": params}
    return K


def energy_expansion(ev, flow, cfg, scale, C=0.0):
    """Leading terms of K(Z) in powers of 1/ln(R/eps); C is the unknown constant."""
    d2 = scale.delta ** 2
    L = np.log(ev.R / scale.eps)
    k = cfg.kappa
    m = cfg.m
    lead = C * d2 / L + np.sum(np.pi * (scale.p - 1) * d2 * k * k / (4 * L * L))
    Z = cfg.Z
    gdiag = np.array([ev.g(z, z, check=False)[0] for z in Z])
    q = flow.level_q_at(Z) if flow is not None else np.zeros(m)
    val = np.sum(4 * np.pi ** 2 * d2 * k * q / (scale.lneps * L))
    val += np.sum(np.pi * d2 * k * k * gdiag / L ** 2)
    for i in range(m):
        for j in range(m):
            if i != j:
                val -= np.pi * d2 * k[i] * k[j] * ev.g_bar(Z[j], Z[i], check=False)[0] / L ** 2
    return lead + val


def fit_energy_constant(K, ev, flow, cfg, scale):
    """C making energy_expansion match a measured K at one eps."""
    rest = energy_expansion(ev, flow, cfg, scale, C=0.0)
    return (K - rest) * np.log(ev.R / scale.eps) / scale.delta ** 2


def energy_difference(ev, flow, cfg, scale, profile, Z1, Z2, rule=None):
    """(K(Z1) - K(Z2), delta^2/|ln eps|^2 (Phi(Z1) - Phi(Z2)), relative discrepancy)."""
    c1, c2 = cfg.with_positions(Z1), cfg.with_positions(Z2)
    dK = ansatz_energy(ev, flow, c1, scale, profile, rule=rule) - \
        ansatz_energy(ev, flow, c2, scale, profile, rule=rule)
    dPhi = scale.delta ** 2 / scale.lneps ** 2 * (eval_Phi(ev, flow, c1) - eval_Phi(ev, flow, c2))
    return dK, dPhi, abs(dK - dPhi) / abs(dPhi)


# ---------------------------------------------------------------------------
# gradient of K
# ---------------------------------------------------------------------------

def energy_gradient_closed(ev, flow, cfg, params):
    """Closed-form dK/dz_{i,h} in terms of a_i and ln(R/s_i), shape (m, 2)."""
    scale = params.scale
    d2 = scale.delta ** 2
    Z, a = params.Z, params.a
    L = np.log(params.R / params.s)
    out = np.zeros((cfg.m, 2))
    for i, z in enumerate(Z):
        if flow is not None:
            gq = -flow.grad_psi0_at(z)[0]
            out[i] += 4 * np.pi ** 2 * d2 * a[i] / (scale.lneps * L[i]) * gq
        dg = TWO_PI * ev.grad_regular_x(z[None, :], z)[0]
        out[i] += TWO_PI * d2 * a[i] ** 2 / L[i] ** 2 * dg
        for j, zj in enumerate(Z):
            if j == i:
                continue
            dx = z - zj
            dGb = -dx / (dx @ dx) - TWO_PI * ev.grad_regular_x(z[None, :], zj)[0]
            out[i] -= TWO_PI * d2 * a[i] * a[j] / (L[i] * L[j]) * dGb
    return out


@dataclass
class GradientCheck:
    eps: float
    fd: np.ndarray
    closed: np.ndarray
    residual: float
    scaled_residual: float
    cosine_to_minus_gradW: float | None = None

    def to_dict(self):
        return {"eps": self.eps, "fd": self.fd.tolist(), "closed": self.closed.tolist(),
                "residual": self.residual, "scaled_residual": self.scaled_residual,
                "cosine_to_minus_gradW": self.cosine_to_minus_gradW}


def energy_gradient_check(ev, flow, cfg, scale, profile, Z=None, h_fd=None, rule=None):
    """Central differences of K(Z) against the closed form."""
    from .routh import check_admissible, grad_W

    Z = cfg.Z if Z is None else np.asarray(Z, dtype=float).reshape(-1, 2)
    cfg = cfg.with_positions(Z)
    h = h_fd if h_fd is not None else 1e-4 * ev.domain.diameter
    rho = cfg.floor(ev.domain)
    try:
        check_admissible(ev.domain, Z, rho + 2 * h, cfg.Lbar)
    except VortexCoreError as exc:
        raise VortexCoreError("difference stencil leaves the admissible set", code="STENCIL_OUTSIDE",
                              **exc.details) from exc
    fd = np.zeros((cfg.m, 2))
    for i in range(cfg.m):
        for k in range(2):
            vals = []
            for sgn in (1.0, -1.0):
                Zs = Z.copy()
                Zs[i, k] += sgn * h
                vals.append(ansatz_energy(ev, flow, cfg.with_positions(Zs), scale, profile, rule=rule))
            fd[i, k] = (vals[0] - vals[1]) / (2 * h)
    params = solve_params(ev, flow, cfg, scale, profile)
    closed = energy_gradient_closed(ev, flow, cfg, params)
    res = float(np.abs(fd - closed).max())
    d2 = scale.delta ** 2
    scaled = res * scale.lneps ** 3 / (d2 * np.log(scale.lneps))
    gW = grad_W(ev, flow, cfg).ravel()
    cos = None
    if np.linalg.norm(gW) > 0 and np.linalg.norm(fd) > 0:
        cos = float(-(fd.ravel() @ gW) / (np.linalg.norm(fd) * np.linalg.norm(gW)))
    return GradientCheck(eps=scale.eps, fd=fd, closed=closed, residual=res,
                         scaled_residual=float(scaled), cosine_to_minus_gradW=cos)


# ---------------------------------------------------------------------------
# Euler flow
# ---------------------------------------------------------------------------

@dataclass
class FlowFields:
    velocity_x: object
    velocity_y: object
    pressure: object
    vorticity: object
    divergence: np.ndarray


def _interior_core(mask, depth):
    """Nodes whose neighbours up to ``depth`` steps away are all interior."""
    ok = mask.copy()
    for _ in range(depth):
        shrunk = ok.copy()
        shrunk[1:, :] &= ok[:-1, :]
        shrunk[:-1, :] &= ok[1:, :]
        shrunk[:, 1:] &= ok[:, :-1]
        shrunk[:, :-1] &= ok[:, 1:]
        shrunk[0, :] = shrunk[-1, :] = False
        shrunk[:, 0] = shrunk[:, -1] = False
        ok = shrunk
    return ok


def reconstruct_flow(u, flow, scale, cfg, ev=None, problem=None):
    """Velocity (D_h(u - q))^perp, vorticity and pressure on the grid.

    (a, b)^perp = (b, -a). The velocity lives on cell faces; its curl is the
    5-point Laplacian -Lap_h(u - q) and its divergence vanishes identically.
    Node velocities are face averages. Values are NaN where a stencil
    reaches outside the domain.
    """
    grid = u.grid
    h = grid.h
    if problem is None:
        if ev is None:
            raise VortexCoreError("reconstruct_flow needs an evaluator or a problem", code="CONFIG_INVALID")
        problem = DiscreteProblem(ev, flow, cfg, scale)
    mask = problem.st.index >= 0
    q = np.zeros(grid.shape) if flow is None else flow.q.filled(0.0)
    psi = np.where(mask, u.filled(0.0) - q, 0.0)
    # face values: vx = d psi/dy on horizontal faces, vy = -d psi/dx on vertical faces
    vx_f = np.diff(psi, axis=0) / h            # (ny-1, nx)
    vy_f = -np.diff(psi, axis=1) / h           # (ny, nx-1)
    vx = np.full(grid.shape, np.nan)
    vy = np.full(grid.shape, np.nan)
    vx[1:-1, :] = 0.5 * (vx_f[1:, :] + vx_f[:-1, :])
    vy[:, 1:-1] = 0.5 * (vy_f[:, 1:] + vy_f[:, :-1])
    vort = np.full(grid.shape, np.nan)
    vort[1:-1, 1:-1] = (np.diff(vy_f, axis=1)[1:-1, :] - np.diff(vx_f, axis=0)[:, 1:-1]) / h
    # divergence of the face field on the dual cells
    div = np.diff(vx_f, axis=1) / h + np.diff(vy_f, axis=0) / h     # (ny-1, nx-1)
    ok1 = _interior_core(mask, 1)
    wv = problem.pack(to_w(u, scale))
    exc = np.zeros(grid.shape)
    exc[problem.iy, problem.ix] = problem.excess(wv)
    # F(psi) for f(psi) = eps^-2 (psi - k|ln eps|/2 pi)_+^p, written in w-excess units
    F = (scale.lneps / TWO_PI) ** (scale.p + 1) * exc ** (scale.p + 1) / ((scale.p + 1) * scale.eps ** 2)
    pres = F - 0.5 * (vx * vx + vy * vy)

    def field_(vals, tag):
        return u.replace(values=np.where(ok1, vals, np.nan), tag=tag)

    cells = mask[:-1, :-1] & mask[1:, :-1] & mask[:-1, 1:] & mask[1:, 1:]
    return FlowFields(velocity_x=field_(vx, "velocity_x"), velocity_y=field_(vy, "velocity_y"),
                      pressure=field_(pres, "pressure"), vorticity=field_(vort, "vorticity"),
                      divergence=np.where(cells, div, np.nan))


def stationarity_residual(fields):
    """max|v . D_h omega| / (max|v| max|D_h omega|) over nodes where all are defined."""
    h = fields.vorticity.grid.h
    om = fields.vorticity.values
    dy, dx = np.gradient(np.nan_to_num(om), h)
    ok = np.isfinite(om)
    ok[1:, :] &= np.isfinite(om[:-1, :])
    ok[:-1, :] &= np.isfinite(om[1:, :])
    ok[:, 1:] &= np.isfinite(om[:, :-1])
    ok[:, :-1] &= np.isfinite(om[:, 1:])
    vx, vy = fields.velocity_x.values, fields.velocity_y.values
    adv = np.abs(vx * dx + vy * dy)[ok]
    vmag = np.hypot(vx, vy)[ok].max()
    gmag = np.hypot(dx, dy)[ok].max()
    if vmag == 0 or gmag == 0:
        return 0.0
    return float(adv.max() / (vmag * gmag))


# ---------------------------------------------------------------------------
# reports
# ---------------------------------------------------------------------------

@dataclass
class Criterion:
    name: str
    value: float
    tolerance: float
    comparison: str = "<"     # "<" | ">" | "<=" | ">=" | "true"

    @property
    def passed(self):
        v, t = self.value, self.tolerance
        if not np.isfinite(v):
            return False
        return {"<": v < t, "<=": v <= t, ">": v > t, ">=": v >= t, "true": bool(v)}[self.comparison]

    def to_dict(self):
        return {"name": self.name, "value": float(self.value), "tolerance": float(self.tolerance),
                "comparison": self.comparison, "passed": bool(self.passed)}


@dataclass
class VerificationReport:
    eps: float
    total_circulation: float
    per_core_circulation: list
    centroids: list
    radii: list
    dist_to_Zstar: list = field(default_factory=list)
    energy: float | None = None
    energy_residuals: dict = field(default_factory=dict)
    stationarity_residual: float | None = None
    criteria: list = field(default_factory=list)

    @property
    def passed(self):
        return all(c.passed for c in self.criteria)

    def to_dict(self):
        def clean(x):
            return None if x is None else float(x)
        return {"eps": self.eps, "total_circulation": self.total_circulation,
                "per_core_circulation": list(self.per_core_circulation),
                "centroids": [list(map(float, c)) for c in self.centroids],
                "radii": list(map(float, self.radii)),
                "dist_to_Zstar": list(map(float, self.dist_to_Zstar)),
                "energy": clean(self.energy), "energy_residuals": self.energy_residuals,
                "stationarity_residual": clean(self.stationarity_residual),
                "criteria": [c.to_dict() for c in self.criteria], "passed": self.passed}


def _assign(cores, Z_star):
    """Match each vortex index to its largest component."""
    best = {}
    for c in cores:
        if c.vortex not in best or c.area > best[c.vortex].area:
            best[c.vortex] = c
    return [best[j] for j in sorted(best)]


def verify_solution(u, ev, flow, cfg, scale, Z_star=None, tolerances=None):
    """Circulation, localisation and stationarity checks for one converged u."""
    tol = {"circulation_rel": 0.03, "centroid_cells": 2.0}
    tol.update(tolerances or {})
    prob = DiscreteProblem(ev, flow, cfg, scale)
    total, per = circulation(u, ev, flow, cfg, scale, problem=prob)
    cores = detect_cores(to_w(u, scale), cfg, scale, flow, problem=prob) if total > 0 else []
    main = _assign(cores, Z_star)
    Zs = cfg.Z if Z_star is None else np.asarray(Z_star, dtype=float).reshape(-1, 2)
    dist = [float(np.linalg.norm(c.centroid - Zs[c.vortex])) for c in main]
    fields = reconstruct_flow(u, flow, scale, cfg, problem=prob)
    stat = stationarity_residual(fields)
    crit = [Criterion("cores_found", float(len(main) == cfg.m and len(cores) == cfg.m), 1, "true"),
            Criterion("total_circulation_rel_err",
                      abs(total - cfg.kappa.sum()) / cfg.kappa.sum(), tol["circulation_rel"])]
    for c in main:
        k = cfg.kappa[c.vortex]
        cc = per[cores.index(c)]
        crit.append(Criterion(f"core_{c.vortex}_circulation_rel_err", abs(cc - k) / k,
                              tol["circulation_rel"]))
    for j, d in enumerate(dist):
        crit.append(Criterion(f"core_{j}_centroid_cells", d / u.grid.h, tol["centroid_cells"], "<="))
    return VerificationReport(eps=scale.eps, total_circulation=total, per_core_circulation=per,
                              centroids=[c.centroid for c in main], radii=[c.radius for c in main],
                              dist_to_Zstar=dist, energy=energy(to_w(u, scale), ev, flow, cfg, scale,
                                                                problem=prob),
                              stationarity_residual=stat, criteria=crit)


def convergence_study(reports, Z_star, kappa, circulations=None):
    """Table of eps against centroid distance, radius/eps and circulation error.

    ``reports`` are SolveReports (or their dicts) with detected cores;
    ``circulations`` the matching total circulations, if measured.
    """
    reps = [r.to_dict() if hasattr(r, "to_dict") else dict(r) for r in reports]
    if len(reps) < 3:
        raise VortexCoreError("a convergence study needs at least three eps values", code="CONFIG_INVALID")
    counts = {len(r["cores"]) for r in reps}
    if len(counts) != 1:
        raise VortexCoreError(f"inconsistent vortex counts across reports: {sorted(counts)}",
                              code="INCONSISTENT_REPORTS")
    Zs = np.asarray(Z_star, dtype=float).reshape(-1, 2)
    kappa = np.atleast_1d(np.asarray(kappa, dtype=float))
    rows = []
    for n, r in enumerate(reps):
        cores = r["cores"]
        dist = max(float(np.linalg.norm(np.asarray(c["centroid"]) - Zs[c["vortex"]])) for c in cores)
        ratio = max(c["radius"] for c in cores) / r["eps"]
        err = np.nan
        if circulations is not None:
            err = abs(circulations[n] - kappa.sum()) / kappa.sum()
        rows.append({"eps": r["eps"], "circulation_err": float(err), "core_radius_over_eps": ratio,
                     "dist_to_Zstar": dist, "energy_residual": float("nan")})
    rows.sort(key=lambda x: -x["eps"])
    ratios = np.array([x["core_radius_over_eps"] for x in rows])
    errs = np.array([x["circulation_err"] for x in rows])
    flags = {
        "radius_ratio_spread": float((ratios.max() - ratios.min()) / ratios.mean()),
        "radius_ratio_stable": bool(np.all(np.abs(ratios / ratios.mean() - 1) <= 0.2)),
        "circulation_err_decreasing": bool(np.all(np.diff(errs) < 0)) if circulations is not None else None,
        "dist_nonincreasing": bool(np.all(np.diff([x["dist_to_Zstar"] for x in rows]) <= 1e-12)),
    }
    return {"rows": rows, "flags": flags}


def table_csv(rows, path=None):
    buf = io.StringIO()
    wr = csv.DictWriter(buf, fieldnames=TABLE_COLUMNS, lineterminator="\n")
    wr.writeheader()
    for r in rows:
        wr.writerow({k: r.get(k, float("nan")) for k in TABLE_COLUMNS})
    text = buf.getvalue()
    if path is not None:
        with open(path, "w") as fh:
            fh.write(text)
    return text
