"""Approximate vortex solutions: truncated profiles, their projection and the
parameter system fixing core radii s_i and plateau levels a_i."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq

from .errors import CoreError, ParameterError, VortexCoreError
from .grid import GridField
from .profile import eval_profile


@dataclass(frozen=True)
class ScaleParams:
    eps: float
    p: float

    def __post_init__(self):
        if not 0 < self.eps < 1:
            raise VortexCoreError("eps must lie in (0, 1)", code="CONFIG_INVALID")
        if not self.p > 1:
            raise VortexCoreError("p must exceed 1", code="CONFIG_INVALID")

    @property
    def lneps(self):
        """|ln eps|"""
        return -np.log(self.eps)

    @property
    def delta(self):
        return self.eps * (2 * np.pi / self.lneps) ** ((self.p - 1) / 2)

    @property
    def beta(self):
        return 2.0 / (self.p - 1)

    def lemma_bracket(self):
        d = self.delta
        L = abs(np.log(d))
        return d / L, d * L

    def to_dict(self):
        return {"eps": self.eps, "p": self.p, "delta": self.delta, "abs_ln_eps": self.lneps}


@dataclass
class AnsatzParams:
    s: np.ndarray
    a: np.ndarray
    scale: ScaleParams
    R: float
    Z: np.ndarray
    residual_26: np.ndarray
    residual_27: np.ndarray
    iterations: int
    flags: list = field(default_factory=list)

    @property
    def A(self):
        """Outer amplitude a_j / ln(R / s_j)."""
        return self.a / np.log(self.R / self.s)

    def to_dict(self):
        return {**self.scale.to_dict(), "R": self.R, "Z": self.Z.tolist(),
                "s": self.s.tolist(), "a": self.a.tolist(),
                "residual_26": self.residual_26.tolist(), "residual_27": self.residual_27.tolist(),
                "iterations": self.iterations, "flags": list(self.flags)}


def _core_limits(ev, cfg):
    """Largest admissible core radius per vortex (mask and boundary)."""
    dom = ev.domain
    dist = dom.distance_to_boundary(cfg.Z)
    if not cfg.use_masks:
        return dist
    masks = cfg.resolved_masks(dom)
    lim = np.empty(cfg.m)
    for j, (z, mk) in enumerate(zip(cfg.Z, masks)):
        lim[j] = min(dist[j], mk.radius - np.linalg.norm(z - np.asarray(mk.center)))
        if lim[j] <= 0:
            raise CoreError(f"z_{j} is not inside its subdomain", code="MASK_INVALID", index=j)
    return lim


def _coupling(ev, flow, cfg, scale):
    """g(z_i, z_i), gbar(z_i, z_j) and the right-hand side of the a-system."""
    Z = cfg.Z
    m = cfg.m
    gdiag = np.array([ev.g(z, z, check=False)[0] for z in Z])
    Gb = np.zeros((m, m))
    for i in range(m):
        for j in range(m):
            if i != j:
                Gb[i, j] = ev.g_bar(Z[i], Z[j], check=False)[0]
    q = flow.level_q_at(Z) if flow is not None else np.zeros(m)
    rhs = cfg.kappa + 2 * np.pi * q / scale.lneps
    return gdiag, Gb, rhs


def theta(s, a, scale, profile, R):
    """Root function of the C^1 matching condition for one core."""
    return s ** scale.beta / np.log(R / s) + profile.phi_prime_1 * scale.delta ** scale.beta / a


def solve_params(ev, flow, cfg, scale, profile, tol=1e-12, max_iter=200):
    """Alternate between the linear a-system and scalar s root finds."""
    if abs(profile.p - scale.p) > 1e-12:
        raise VortexCoreError("profile exponent does not match p", code="CONFIG_INVALID")
    R = ev.R
    gdiag, Gb, rhs = _coupling(ev, flow, cfg, scale)
    smax = _core_limits(ev, cfg)
    s_lo = 1e-300 ** (1 / scale.beta) if scale.beta < 1 else 1e-150
    s_lo = max(s_lo, 1e-14 * scale.delta)

    def solve_a(s):
        L = np.log(R / s)
        M = Gb / L[None, :]
        M[np.diag_indices_from(M)] = 1.0 - gdiag / L
        if not np.all(np.isfinite(M)) or abs(np.linalg.det(M)) < 1e-14:
            raise ParameterError("linear system for the plateau levels is singular", code="SINGULAR_SYSTEM")
        return np.linalg.solve(M, rhs), M

    def self_level(i, s):
        # plateau level of vortex i with interactions dropped
        return rhs[i] / (1.0 - gdiag[i] / np.log(R / s))

    def solve_s(a=None):
        out = np.empty(cfg.m)
        for i in range(cfg.m):
            if a is None:
                f = lambda s: theta(s, self_level(i, s), scale, profile, R)  # noqa: E731
                ai = self_level(i, smax[i])
            else:
                f = lambda s: theta(s, a[i], scale, profile, R)  # noqa: E731
                ai = a[i]
            if ai <= 0 or f(smax[i]) <= 0:
                raise ParameterError(
                    f"theta_{i} has no sign change below the admissible core radius "
                    f"{smax[i]:.3g} (eps = {scale.eps} too large)",
                    index=i, eps=scale.eps, s_max=float(smax[i]))
            out[i] = brentq(f, s_lo, smax[i], xtol=1e-300, rtol=4 * np.finfo(float).eps, maxiter=500)
        return out

    s = solve_s()
    a = np.array([self_level(i, s[i]) for i in range(cfg.m)])
    it = 0
    for it in range(1, max_iter + 1):
        a_new, M = solve_a(s)
        s_new = solve_s(a_new)
        change = max(np.max(np.abs(a_new - a) / np.abs(a_new)), np.max(np.abs(s_new - s) / s_new))
        a, s = a_new, s_new
        if change < tol * 1e-2:
            break
    a, M = solve_a(s)
    L = np.log(s / R)
    lhs26 = (scale.delta / s) ** scale.beta * profile.phi_prime_1
    res26 = np.abs(lhs26 - a / L) / np.abs(a / L)
    res27 = np.abs(M @ a - rhs) / np.abs(rhs)
    if max(res26.max(), res27.max()) > tol:
        raise ParameterError(f"parameter iteration stalled at residual "
                             f"{max(res26.max(), res27.max()):.2e}", code="NONCONVERGENCE")
    flags = []
    lo, hi = scale.lemma_bracket()
    for i in range(cfg.m):
        if not lo <= s[i] <= hi:
            flags.append(f"s_{i} = {s[i]:.4g} outside the asymptotic bracket [{lo:.3g}, {hi:.3g}]")
        if not 0.5 * cfg.kappa[i] <= a[i] <= 1.5 * cfg.kappa[i]:
            flags.append(f"a_{i} = {a[i]:.4g} outside [kappa/2, 3 kappa/2]")
    return AnsatzParams(s=s, a=a, scale=scale, R=R, Z=cfg.Z.copy(), residual_26=res26,
                        residual_27=res27, iterations=it, flags=flags)


def a_expansion(ev, flow, cfg, scale):
    """Leading terms of a_i in powers of 1/|ln eps|."""
    gdiag, Gb, rhs = _coupling(ev, flow, cfg, scale)
    LRe = np.log(ev.R / scale.eps)
    return rhs + (gdiag * cfg.kappa - Gb @ cfg.kappa) / LRe


def eval_wprofile(scale, s, a, profile, x_rel, R):
    """Truncated profile centred at the origin, evaluated at offsets x_rel."""
    if s <= 0 or a <= 0:
        raise VortexCoreError("s and a must be positive", code="CONFIG_INVALID")
    x = np.atleast_2d(np.asarray(x_rel, dtype=float))
    r = np.hypot(x[:, 0], x[:, 1])
    if np.any(r > R * (1 + 1e-14)):
        raise VortexCoreError("offset beyond the enclosing radius", code="OUTSIDE_DOMAIN")
    out = np.empty(len(r))
    inner = r <= s
    if inner.any():
        phi, _ = eval_profile(profile, r[inner] / s)
        out[inner] = a + (scale.delta / s) ** scale.beta * phi
    out[~inner] = a * np.log(r[~inner] / R) / np.log(s / R)
    return out


def radial_slopes(scale, s, a, profile, R):
    """(inner, outer) radial derivatives of the profile at r = s."""
    inner = (scale.delta / s) ** scale.beta * profile.phi_prime_1 / s
    outer = a / (s * np.log(s / R))
    return inner, outer


def check_cores(ev, cfg, params):
    """Each core disk must sit inside the domain and inside its subdomain."""
    lim = _core_limits(ev, cfg)
    for j, (s, L) in enumerate(zip(params.s, lim)):
        if s >= L:
            raise CoreError(f"core {j} of radius {s:.3g} meets the boundary of its subdomain",
                            code="CORE_CONTACT", index=j, radius=float(s), limit=float(L))


def ansatz_at(ev, cfg, params, profile, points):
    """P_{delta,Z} at arbitrary interior points."""
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    out = np.zeros(len(pts))
    for z, s, a, A in zip(params.Z, params.s, params.a, params.A):
        out += eval_wprofile(params.scale, s, a, profile, pts - z, params.R)
        out -= A * ev.g(pts, z, check=False)
    return out


def assemble_ansatz(ev, flow, cfg, params, scale, profile):
    """P_{delta,Z} on the nodes of the domain grid (NaN outside)."""
    check_cores(ev, cfg, params)
    dom = ev.domain
    X, Y = dom.grid.XY
    mask = dom.mask
    pts = np.column_stack([X[mask], Y[mask]])
    vals = np.zeros(len(pts))
    for z, s, a, A in zip(params.Z, params.s, params.a, params.A):
        vals += eval_wprofile(scale, s, a, profile, pts - z, params.R)
        vals -= A * ev.g_field(z)[mask]
    full = np.full(dom.grid.shape, np.nan)
    full[mask] = vals
    return GridField.from_domain(dom, full, "ansatz", **scale.to_dict())


def level_tilt(ev, flow, cfg, params, profile, scale):
    """Gradient of P - 2 pi q/|ln eps| at each core centre, shape (m, 2).

    The own profile is flat at its centre, so this is the drift felt by
    vortex i from the projection, the other vortices and the background:
    -A_i D_x g(z_i, z_i) + sum_{j!=i} A_j D_x gbar(z_i, z_j) - 2 pi Dq(z_i)/|ln eps|.
    """
    Z = params.Z
    A = params.A
    out = np.empty((cfg.m, 2))
    for i, z in enumerate(Z):
        t = -A[i] * 2 * np.pi * ev.grad_regular_x(z[None, :], z)[0]
        for j, zj in enumerate(Z):
            if j != i:
                d = z - zj
                t += A[j] * (-d / (d @ d) - 2 * np.pi * ev.grad_regular_x(z[None, :], zj)[0])
        if flow is not None:
            t += 2 * np.pi * flow.grad_psi0_at(z)[0] / scale.lneps
        out[i] = t
    return out


def balance_positions(ev, flow, cfg, scale, profile, Z0=None, tol=1e-10):
    """Positions where the ansatz feels no drift at the given eps.

    As eps -> 0 these tend to a critical point of W; at finite eps the
    outer amplitudes a_j/ln(R/s_j) exceed kappa_j/|ln eps| and the balance
    point moves. Used to seed the PDE solve when the asymptotic point is
    not yet in the basin of a solution.
    """
    from scipy.optimize import root

    Z0 = cfg.Z if Z0 is None else np.asarray(Z0, dtype=float).reshape(-1, 2)

    def fun(x):
        c = cfg.with_positions(x.reshape(-1, 2))
        pr = solve_params(ev, flow, c, scale, profile)
        return level_tilt(ev, flow, c, pr, profile, scale).ravel()

    sol = root(fun, Z0.ravel(), method="hybr", tol=tol, options={"factor": 0.1})
    if not sol.success or np.abs(sol.fun).max() > 1e3 * tol:
        raise ParameterError(f"no balanced configuration found: {sol.message}",
                             code="NONCONVERGENCE", residual=float(np.abs(sol.fun).max()),
                             eps=scale.eps)
    return sol.x.reshape(-1, 2)


def balance_path(ev, flow, cfg, scale, profile, eps_start=1e-30, steps=24, tol=1e-10):
    """Balanced positions at ``scale.eps`` by continuation from a small eps,
    where they sit next to the critical point ``cfg.Z`` of W."""
    Z = cfg.Z.copy()
    if eps_start >= scale.eps:
        return balance_positions(ev, flow, cfg, scale, profile, Z, tol)
    for eps in np.geomspace(eps_start, scale.eps, steps):
        Z = balance_positions(ev, flow, cfg, ScaleParams(float(eps), scale.p), profile, Z, tol)
    return Z
