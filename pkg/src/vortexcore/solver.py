"""Newton solver for -delta^2 Lap w = sum_j chi_j (w - k_j - 2 pi q/|ln eps|)_+^p with w = 0 on the boundary."""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy import ndimage
from scipy.sparse.linalg import splu

from .ansatz import assemble_ansatz, solve_params
from .errors import CoreError, SolveError, VortexCoreError
from .grid import GridField


@dataclass
class SolverOptions:
    tol: float | None = None       # residual inf-norm; default 1e-10 * max(kappa)
    max_iter: int = 50
    min_step: float = 2.0 ** -12
    on_contact: str = "error"      # "error" | "flag"


@dataclass
class Core:
    vortex: int
    cells: np.ndarray              # (n, 2) grid indices (iy, ix)
    area: float
    centroid: np.ndarray
    radius: float                  # circumscribed about the centroid
    equivalent_radius: float       # sqrt(area / pi)
    touches_mask: bool = False

    def to_dict(self):
        return {"vortex": self.vortex, "n_cells": int(len(self.cells)), "area": self.area,
                "centroid": self.centroid.tolist(), "radius": self.radius,
                "equivalent_radius": self.equivalent_radius, "touches_mask": self.touches_mask}


@dataclass
class SolveReport:
    converged: bool
    iterations: int
    residual_norm: float
    eps: float
    delta: float
    p: float
    cores: list = field(default_factory=list)
    history: list = field(default_factory=list)
    flags: list = field(default_factory=list)
    wall_clock: float = 0.0

    def to_dict(self):
        return {"converged": self.converged, "iterations": self.iterations,
                "residual_norm": self.residual_norm, "eps": self.eps, "delta": self.delta,
                "p": self.p, "cores": [c.to_dict() for c in self.cores],
                "history": self.history, "flags": self.flags}


class DiscreteProblem:
    """Grid discretisation of the rescaled problem for one (config, eps)."""

    def __init__(self, ev, flow, cfg, scale):
        self.ev, self.flow, self.cfg, self.scale = ev, flow, cfg, scale
        self.domain = ev.domain
        self.st = ev.stencil
        self.grid = self.domain.grid
        self.d2 = scale.delta ** 2
        iy, ix = np.nonzero(self.st.index >= 0)
        self.iy, self.ix = iy, ix
        nodes = self.st.nodes
        q = np.zeros(len(nodes)) if flow is None else flow.level_q_grid()[iy, ix]
        self.level = np.full(len(nodes), np.inf)
        self.owner = -np.ones(len(nodes), dtype=int)
        if cfg.use_masks:
            self.masks = cfg.resolved_masks(self.domain)
            for j, mk in enumerate(self.masks):
                sel = mk.contains(nodes)
                if np.any(self.owner[sel] >= 0):
                    raise VortexCoreError("subdomain masks overlap", code="MASK_INVALID")
                self.owner[sel] = j
                self.level[sel] = cfg.kappa[j] + 2 * np.pi * q[sel] / scale.lneps
        else:
            self.masks = None
            self.owner[:] = 0
            self.level[:] = cfg.kappa[0] + 2 * np.pi * q / scale.lneps
        self.active_set = self.owner >= 0

    # -- field conversion -------------------------------------------------
    def pack(self, field_):
        v = field_.values if isinstance(field_, GridField) else np.asarray(field_)
        if v.shape != self.grid.shape:
            raise VortexCoreError(f"field shape {v.shape} does not match grid {self.grid.shape}",
                                  code="SHAPE_MISMATCH")
        return np.nan_to_num(v[self.iy, self.ix], nan=0.0)

    def unpack(self, w, tag="w", fill=0.0):
        full = np.full(self.grid.shape, fill)
        full[self.iy, self.ix] = w
        return GridField(self.grid, full, tag, self.scale.to_dict())

    # -- operator -----------------------------------------------------------
    def excess(self, w):
        e = np.zeros_like(w)
        a = self.active_set
        e[a] = np.maximum(w[a] - self.level[a], 0.0)
        return e

    def nonlinearity(self, w):
        return self.excess(w) ** self.scale.p

    def residual(self, w):
        return -self.d2 * (self.st.A @ w) - self.nonlinearity(w)

    def jacobian(self, w):
        p = self.scale.p
        dn = p * self.excess(w) ** (p - 1)
        return (-self.d2 * self.st.A - sp.diags(dn)).tocsc()


def residual(w, ev, flow, cfg, scale):
    prob = DiscreteProblem(ev, flow, cfg, scale)
    return prob.unpack(prob.residual(prob.pack(w)), "residual", fill=np.nan)


def newton_solve(seed, ev, flow, cfg, scale, opts=None, problem=None):
    """Damped Newton from ``seed``; returns (w, SolveReport)."""
    t0 = time.perf_counter()
    opts = opts or SolverOptions()
    prob = problem or DiscreteProblem(ev, flow, cfg, scale)
    tol = opts.tol if opts.tol is not None else 1e-10 * float(np.max(cfg.kappa))
    w = prob.pack(seed)
    kmin = float(np.min(cfg.kappa))
    vortex_seed = w.max(initial=0.0) >= 0.5 * kmin
    F = prob.residual(w)
    norm = float(np.abs(F).max(initial=0.0))
    history = [norm]
    flags = []
    frozen = None
    stalls = 0
    it = 0
    while it < opts.max_iter:
        it += 1
        if frozen is None:
            J = prob.jacobian(w)
        else:
            J = frozen
        try:
            dw = splu(J).solve(-F)
        except RuntimeError as exc:
            raise SolveError(f"singular Newton system at iteration {it}", code="SINGULAR_JACOBIAN",
                             eps=scale.eps) from exc
        t = 1.0
        while True:
            wt = w + t * dw
            Ft = prob.residual(wt)
            nt = float(np.abs(Ft).max(initial=0.0))
            if nt <= (1 - 1e-4 * t) * norm or nt <= tol:
                break
            t *= 0.5
            if t < opts.min_step:
                break
        if t < opts.min_step:
            stalls += 1
            if stalls >= 2 and frozen is None:
                # semismooth fallback: hold the active-set Jacobian fixed
                frozen = prob.jacobian(w)
                flags.append(f"active set frozen at iteration {it}")
                continue
            raise SolveError(f"line search stalled at residual {norm:.3e}", eps=scale.eps,
                             iterations=it, residual=norm)
        w, F, norm = wt, Ft, nt
        history.append(norm)
        if vortex_seed and w.max(initial=0.0) < 0.5 * kmin:
            raise SolveError("vortex collapsed to the trivial branch", code="VORTEX_COLLAPSED",
                             eps=scale.eps, iterations=it)
        if norm <= tol:
            break
    converged = norm <= tol
    wf = prob.unpack(w)
    report = SolveReport(converged=converged, iterations=it, residual_norm=norm, eps=scale.eps,
                         delta=scale.delta, p=scale.p, history=history, flags=flags)
    if not converged:
        report.wall_clock = time.perf_counter() - t0
        raise SolveError(f"no convergence in {opts.max_iter} iterations (residual {norm:.3e})",
                         eps=scale.eps, iterations=it, residual=norm)
    if w.max(initial=0.0) > 0:
        report.cores = detect_cores(wf, cfg, scale, flow, problem=prob)
        touching = [c.vortex for c in report.cores if c.touches_mask]
        if touching:
            msg = f"core of vortex {touching} touches the boundary of its subdomain"
            if opts.on_contact == "error":
                raise SolveError(msg, code="CORE_CONTACT", eps=scale.eps, vortices=touching)
            flags.append(msg)
    report.wall_clock = time.perf_counter() - t0
    return wf, report


def to_u(w, scale):
    """u = (|ln eps| / 2 pi) w."""
    return w.replace(values=w.values * scale.lneps / (2 * np.pi), tag="u")


def to_w(u, scale):
    return u.replace(values=u.values * 2 * np.pi / scale.lneps, tag="w")


def detect_cores(w, cfg, scale, flow=None, ev=None, problem=None):
    """Connected components of {w > k_j + 2 pi q/|ln eps|} inside each subdomain."""
    if problem is None:
        if ev is None:
            raise VortexCoreError("detect_cores needs an evaluator or a problem", code="CONFIG_INVALID")
        problem = DiscreteProblem(ev, flow, cfg, scale)
    prob = problem
    grid = prob.grid
    wv = prob.pack(w)
    exc = prob.excess(wv)
    weight = exc ** scale.p
    owner_full = -np.ones(grid.shape, dtype=int)
    owner_full[prob.iy, prob.ix] = prob.owner
    exc_full = np.zeros(grid.shape)
    exc_full[prob.iy, prob.ix] = exc
    wt_full = np.zeros(grid.shape)
    wt_full[prob.iy, prob.ix] = weight
    X, Y = grid.XY
    cores = []
    n_sub = cfg.m if cfg.use_masks else 1
    counts = []
    four = ndimage.generate_binary_structure(2, 1)
    for j in range(n_sub):
        inside_j = owner_full == j
        sup = (exc_full > 0) & inside_j
        lab, n = ndimage.label(sup, structure=four)
        counts.append(n)
        grown = ndimage.binary_dilation(sup, structure=four)
        for k in range(1, n + 1):
            comp = lab == k
            cells = np.argwhere(comp)
            wts = wt_full[comp]
            xs, ys = X[comp], Y[comp]
            c = np.array([np.sum(wts * xs), np.sum(wts * ys)]) / np.sum(wts)
            rad = float(np.sqrt((xs - c[0]) ** 2 + (ys - c[1]) ** 2).max())
            area = float(comp.sum() * grid.h ** 2)
            edge = ndimage.binary_dilation(comp, structure=four) & ~comp
            touches = bool(np.any(edge & ~inside_j)) if cfg.use_masks else bool(
                np.any(edge & (owner_full < 0)))
            cores.append(Core(vortex=j, cells=cells, area=area, centroid=c, radius=rad,
                              equivalent_radius=float(np.sqrt(area / np.pi)), touches_mask=touches))
        del grown
    if sum(counts) == 0:
        return []
    empty = [j for j, n in enumerate(counts) if n == 0]
    if empty:
        raise CoreError(f"no core in subdomain(s) {empty}: vortex collapsed",
                        code="VORTEX_COLLAPSED", vortices=empty)
    return cores


def split_cores(cores):
    """Vortex indices with more than one component (core split)."""
    seen = {}
    for c in cores:
        seen[c.vortex] = seen.get(c.vortex, 0) + 1
    return [j for j, n in seen.items() if n > 1]


def ansatz_seed(ev, flow, cfg, scale, profile):
    params = solve_params(ev, flow, cfg, scale, profile)
    return assemble_ansatz(ev, flow, cfg, params, scale, profile), params


def continue_in_eps(ev, flow, cfg, profile, eps_list, opts=None, seed_field=None):
    """Solve along a decreasing eps list, reseeding each step with the previous
    solution shifted by the change of the ansatz."""
    from .ansatz import ScaleParams
    eps_list = [float(e) for e in eps_list]
    if not eps_list:
        raise VortexCoreError("empty eps list", code="CONFIG_INVALID")
    if eps_list[0] > 0.2 or any(b >= a for a, b in zip(eps_list, eps_list[1:])):
        raise VortexCoreError("eps list must be strictly decreasing and start at or below 0.2",
                              code="CONFIG_INVALID")
    results = []
    prev_w = prev_P = None
    for eps in eps_list:
        scale = ScaleParams(eps, profile.p)
        try:
            P, _ = ansatz_seed(ev, flow, cfg, scale, profile)
            if prev_w is None:
                seed = seed_field if seed_field is not None else P
            else:
                seed = prev_w.replace(values=prev_w.values + np.nan_to_num(P.values - prev_P.values))
            w, rep = newton_solve(seed, ev, flow, cfg, scale, opts)
        except VortexCoreError as exc:
            exc.details["eps"] = eps
            raise
        results.append((w, rep))
        prev_w, prev_P = w, P
    return results
