"""Kirchhoff-Routh function W, the reduced function Phi and their critical points.

With ``reg`` the regular part in ``G = S - reg`` (see :mod:`potential`),

    W(Z)   = 1/2 sum_{i!=j} k_i k_j G(z_i, z_j) - 1/2 sum_i k_i^2 reg(z_i, z_i)
             + sum_i k_i psi0(z_i)
    Phi(Z) = sum_i 4 pi^2 k_i q(z_i) + sum_i pi k_i^2 g(z_i, z_i)
             - sum_{i!=j} pi k_i k_j gbar(z_j, z_i)

so that ``Phi + 4 pi^2 W = sum_i pi k_i^2 ln R`` identically. The Robin term
of W therefore carries the sign of the regular part written as ``G = S + H``.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import AdmissibilityError, CriticalPointError, VortexCoreError
from .potential import TWO_PI

CLASSES = ("nondegenerate-min", "nondegenerate-max", "saddle", "degenerate")


@dataclass(frozen=True)
class DiskMask:
    """Open disk used as a subdomain Omega_j."""

    center: tuple
    radius: float

    def contains(self, points):
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        return np.linalg.norm(pts - np.asarray(self.center), axis=1) < self.radius

    def to_dict(self):
        return {"center": [float(c) for c in self.center], "radius": float(self.radius)}


@dataclass(frozen=True)
class VortexConfig:
    kappa: np.ndarray
    Z: np.ndarray
    masks: tuple | None = None       # None: default disks around the current Z
    rho: float | None = None         # separation floor; None: 0.1 * inradius
    Lbar: float = 2.0
    use_masks: bool = True

    def __post_init__(self):
        k = np.atleast_1d(np.asarray(self.kappa, dtype=float))
        Z = np.asarray(self.Z, dtype=float).reshape(-1, 2)
        if len(k) != len(Z):
            raise VortexCoreError("kappa and Z have different lengths", code="CONFIG_INVALID")
        if np.any(k <= 0):
            raise VortexCoreError("strengths must be positive", code="CONFIG_INVALID")
        if not self.use_masks and np.ptp(k) > 0:
            raise VortexCoreError("use_masks = false needs equal strengths", code="CONFIG_INVALID")
        object.__setattr__(self, "kappa", k)
        object.__setattr__(self, "Z", Z)
        if self.masks is not None:
            object.__setattr__(self, "masks", tuple(self.masks))

    @property
    def m(self):
        return len(self.kappa)

    def with_positions(self, Z):
        return replace(self, Z=np.asarray(Z, dtype=float).reshape(-1, 2))

    def floor(self, domain):
        return self.rho if self.rho is not None else 0.1 * domain.inradius

    def resolved_masks(self, domain):
        return self.masks if self.masks is not None else default_masks(domain, self.Z)

    def to_dict(self):
        return {"kappa": self.kappa.tolist(), "Z": self.Z.tolist(),
                "masks": None if self.masks is None else [mk.to_dict() for mk in self.masks],
                "rho": self.rho, "Lbar": self.Lbar, "use_masks": self.use_masks}


def default_masks(domain, Z):
    """Disks of radius min(d(z_j, boundary), half the closest separation) / 2."""
    Z = np.asarray(Z, dtype=float).reshape(-1, 2)
    dist = domain.distance_to_boundary(Z)
    out = []
    for j, z in enumerate(Z):
        r = dist[j]
        if len(Z) > 1:
            sep = np.linalg.norm(np.delete(Z, j, axis=0) - z, axis=1).min()
            r = min(r, 0.5 * sep)
        out.append(DiskMask((float(z[0]), float(z[1])), 0.5 * float(r)))
    return tuple(out)


def check_admissible(domain, Z, rho, Lbar=2.0):
    """Raise unless d(z_j, boundary) >= rho and |z_i - z_j| >= rho**Lbar."""
    Z = np.asarray(Z, dtype=float).reshape(-1, 2)
    inside = domain.contains(Z)
    if not inside.all():
        raise AdmissibilityError("vortex outside the domain", constraint="inside",
                                 index=int(np.argmin(inside)))
    d = domain.distance_to_boundary(Z)
    if np.any(d < rho):
        j = int(np.argmin(d))
        raise AdmissibilityError(f"z_{j} is {d[j]:.3g} from the boundary (floor {rho:.3g})",
                                 constraint="boundary_distance", index=j, value=float(d[j]))
    for i in range(len(Z)):
        for j in range(i + 1, len(Z)):
            s = np.linalg.norm(Z[i] - Z[j])
            if s < rho ** Lbar:
                raise AdmissibilityError(f"|z_{i} - z_{j}| = {s:.3g} below {rho ** Lbar:.3g}",
                                         constraint="separation", index=[i, j], value=float(s))


def _prepare(ev, flow, cfg, Z, check):
    if flow is not None and flow.domain is not ev.domain:
        raise VortexCoreError("background flow belongs to another domain", code="DOMAIN_MISMATCH")
    Z = cfg.Z if Z is None else np.asarray(Z, dtype=float).reshape(-1, 2)
    if check:
        check_admissible(ev.domain, Z, cfg.floor(ev.domain), cfg.Lbar)
    return Z


def _pair_green(ev, Z):
    m = len(Z)
    Gm = np.zeros((m, m))
    for i in range(m):
        for j in range(i + 1, m):
            Gm[i, j] = Gm[j, i] = ev.green(Z[i], Z[j], check=False)[0]
    return Gm


def eval_W(ev, flow, cfg, Z=None, check=True):
    Z = _prepare(ev, flow, cfg, Z, check)
    k = cfg.kappa
    Gm = _pair_green(ev, Z)
    val = 0.5 * k @ Gm @ k - 0.5 * np.sum(k * k * ev.robin(Z, check=False))
    if flow is not None:
        val += np.sum(k * flow.psi0_at(Z))
    return float(val)


def eval_Phi(ev, flow, cfg, Z=None, check=True):
    Z = _prepare(ev, flow, cfg, Z, check)
    k = cfg.kappa
    val = np.pi * np.sum(k * k * (ev.lnR + TWO_PI * ev.robin(Z, check=False)))
    if flow is not None:
        val += 4 * np.pi ** 2 * np.sum(k * flow.q_at(Z))
    for i in range(len(Z)):
        for j in range(len(Z)):
            if i != j:
                val -= np.pi * k[i] * k[j] * ev.g_bar(Z[j], Z[i], check=False)[0]
    return float(val)


def fd_step(ev):
    """Central-difference step: two grid cells for the grid backend."""
    if ev.backend == "grid-harmonic":
        return 2.0 * ev.domain.grid.h
    if ev.backend == "analytic-annulus":
        return 1e-3 * max(1.0, ev.domain.diameter)
    return 1e-5 * max(1.0, ev.domain.diameter)


def default_tol(ev):
    return {"analytic-disk": 1e-10, "analytic-annulus": 1e-8}.get(ev.backend, 1e-6)


def fd_order(ev):
    # smooth analytic series take the 4th-order stencil; grid data stays 2nd order
    return 4 if ev.backend == "analytic-annulus" else 2


def _fd_gradient(fun, Z, h, order=2):
    x = Z.ravel()
    g = np.empty_like(x)
    for k in range(len(x)):
        e = np.zeros_like(x)
        e[k] = h
        f = lambda t: fun((x + t * e).reshape(-1, 2))  # noqa: E731
        if order == 4:
            g[k] = (8 * (f(1) - f(-1)) - (f(2) - f(-2))) / (12 * h)
        else:
            g[k] = (f(1) - f(-1)) / (2 * h)
    return g


def grad_W(ev, flow, cfg, Z=None, h_fd=None, method="auto"):
    """Gradient of W as a vector (dz_1x, dz_1y, ..., dz_mx, dz_my)."""
    Z = _prepare(ev, flow, cfg, Z, True)
    if method == "auto":
        method = "analytic" if ev.backend == "analytic-disk" else "fd"
    if method == "analytic":
        if ev.backend != "analytic-disk":
            raise VortexCoreError("analytic gradient needs the disk backend", code="CONFIG_INVALID")
        k = cfg.kappa
        g = -0.5 * (k * k)[:, None] * ev.grad_robin(Z)
        for i in range(len(Z)):
            for j in range(len(Z)):
                if i != j:
                    d = Z[i] - Z[j]
                    dS = -d / (TWO_PI * d @ d)
                    g[i] += k[i] * k[j] * (dS - ev.grad_regular_x(Z[i], Z[j])[0])
        if flow is not None:
            g += k[:, None] * flow.grad_psi0_at(Z)
        return g.ravel()
    h = h_fd or fd_step(ev)
    order = fd_order(ev)
    rho = cfg.floor(ev.domain)
    for s in (-order // 2 * h, order // 2 * h):
        for k in range(2):
            e = np.zeros(2)
            e[k] = s
            check_admissible(ev.domain, Z + e, rho, cfg.Lbar)
    return _fd_gradient(lambda Y: eval_W(ev, flow, cfg, Y, check=False), Z, h, order)


def grad_Phi(ev, flow, cfg, Z=None, h_fd=None):
    Z = _prepare(ev, flow, cfg, Z, True)
    h = h_fd or fd_step(ev)
    return _fd_gradient(lambda Y: eval_Phi(ev, flow, cfg, Y, check=False), Z, h, fd_order(ev))


def hessian(gradf, Z, h):
    """Symmetrised central-difference Jacobian of a gradient map."""
    x = Z.ravel()
    n = len(x)
    Hm = np.empty((n, n))
    for k in range(n):
        e = np.zeros(n)
        e[k] = h
        Hm[:, k] = (gradf((x + e).reshape(-1, 2)) - gradf((x - e).reshape(-1, 2))) / (2 * h)
    return 0.5 * (Hm + Hm.T)


@dataclass
class CriticalPoint:
    Z: np.ndarray
    value: float
    grad_norm: float
    hessian_eigs: np.ndarray
    classification: str
    iterations: int
    objective: str = "W"
    orbit_eig: float | None = None    # eigenvalue along a rotation orbit, excluded
    notes: list = field(default_factory=list)
    trajectory: list = field(default_factory=list)

    @property
    def stable(self):
        return self.classification != "degenerate"

    def to_dict(self):
        return {"Z_star": self.Z.tolist(), "value": self.value, "grad_norm": self.grad_norm,
                "hessian_eigs": self.hessian_eigs.tolist(), "class": self.classification,
                "stable": self.stable, "orbit_eig": self.orbit_eig,
                "iterations": self.iterations, "objective": self.objective, "notes": self.notes}


def _rotation_symmetric(ev, flow):
    return ev.domain.kind in ("disk", "annulus") and (flow is None or flow.is_zero)


def classify(eigs, vecs, Z, center=None, eig_tol=1e-6):
    """Classification from the Hessian spectrum; a rotation-orbit direction
    (given ``center``) is set aside before classifying transversally."""
    keep = np.ones(len(eigs), dtype=bool)
    orbit = None
    if center is not None:
        t = np.column_stack([-(Z[:, 1] - center[1]), Z[:, 0] - center[0]]).ravel()
        nt = np.linalg.norm(t)
        if nt > 1e-8:
            cos = np.abs(vecs.T @ (t / nt))
            j = int(np.argmax(cos))
            if cos[j] > 0.9:
                keep[j] = False
                orbit = float(eigs[j])
    rest = eigs[keep]
    scale = max(1.0, np.abs(eigs).max())
    if len(rest) == 0 or np.any(np.abs(rest) < eig_tol * scale):
        return "degenerate", orbit
    if np.all(rest > 0):
        return "nondegenerate-min", orbit
    if np.all(rest < 0):
        return "nondegenerate-max", orbit
    return "saddle", orbit


def find_critical(ev, flow, cfg, seed=None, tol=None, objective="W", max_iter=100, h_fd=None,
                  eig_tol=1e-6):
    """Damped Newton on the gradient with a Levenberg-Marquardt fallback."""
    domain = ev.domain
    analytic = ev.backend == "analytic-disk" and objective == "W"
    if tol is None:
        tol = default_tol(ev)
    if objective == "W":
        value = lambda Y: eval_W(ev, flow, cfg, Y, check=False)  # noqa: E731
        gfun = lambda Y: grad_W(ev, flow, cfg, Y, h_fd=h_fd)  # noqa: E731
    elif objective == "Phi":
        value = lambda Y: eval_Phi(ev, flow, cfg, Y, check=False)  # noqa: E731
        gfun = lambda Y: grad_Phi(ev, flow, cfg, Y, h_fd=h_fd)  # noqa: E731
    else:
        raise VortexCoreError(f"unknown objective {objective!r}", code="CONFIG_INVALID")
    hh = 1e-5 * max(1.0, domain.diameter) if analytic else (h_fd or fd_step(ev))

    Z = np.asarray(cfg.Z if seed is None else seed, dtype=float).reshape(-1, 2).copy()
    check_admissible(domain, Z, cfg.floor(domain), cfg.Lbar)
    radius = 0.25 * domain.inradius
    g = gfun(Z)
    traj = [(0, Z.ravel().tolist(), float(np.linalg.norm(g)), value(Z))]
    mu = 0.0
    it = 0
    stalls = 0
    while np.linalg.norm(g) > tol and it < max_iter:
        it += 1
        Hm = hessian(gfun, Z, hh)
        lam, V = np.linalg.eigh(Hm)
        gn = np.linalg.norm(g)
        accepted = False
        for attempt in range(8):
            if mu == 0.0:
                inv = np.where(np.abs(lam) > 1e-7 * np.abs(lam).max(), 1.0 / lam, 0.0)
                step = -V @ (inv * (V.T @ g))
            else:
                step = -V @ ((lam / (lam ** 2 + mu)) * (V.T @ g))
            sn = np.linalg.norm(step)
            if sn > radius:
                step *= radius / sn
            trial = Z + step.reshape(-1, 2)
            try:
                check_admissible(domain, trial, cfg.floor(domain), cfg.Lbar)
                gt = gfun(trial)
            except AdmissibilityError as exc:
                if attempt == 7:
                    raise AdmissibilityError(f"critical-point iterate left the admissible set: {exc}",
                                             iterate=it, **exc.details) from exc
                radius *= 0.5
                mu = max(mu * 10, 1e-6 * max(1.0, np.abs(lam).max() ** 2))
                continue
            if np.linalg.norm(gt) < gn:
                accepted = True
                Z, g = trial, gt
                mu = mu / 10 if mu > 1e-12 else 0.0
                radius = min(radius * 2, 0.25 * domain.inradius)
                break
            mu = max(mu * 10, 1e-6 * max(1.0, np.abs(lam).max() ** 2))
            radius *= 0.5
        traj.append((it, Z.ravel().tolist(), float(np.linalg.norm(g)), value(Z)))
        if not accepted:
            stalls += 1
            if stalls >= 3:
                break
        else:
            stalls = 0
    gn = float(np.linalg.norm(g))
    if gn > tol:
        raise CriticalPointError(f"gradient norm {gn:.3e} above tol {tol:.1e} after {it} iterations",
                                 grad_norm=gn, Z=Z.tolist())
    Hm = hessian(gfun, Z, hh)
    lam, V = np.linalg.eigh(Hm)
    center = None
    notes = ["stable := nondegenerate Hessian (both stability notions mapped to this)"]
    if _rotation_symmetric(ev, flow):
        center = np.asarray(domain.params["center"], dtype=float)
        if np.linalg.norm(Z - center) > 1e-6:
            notes.append("rotation orbit: the orbit-direction eigenvalue is excluded from the classification")
        else:
            center = None
    cls, orbit = classify(lam, V, Z, center, eig_tol)
    return CriticalPoint(Z=Z, value=value(Z), grad_norm=gn, hessian_eigs=lam, classification=cls,
                         iterations=it, objective=objective, orbit_eig=orbit, notes=notes,
                         trajectory=traj)


def multistart(ev, flow, cfg, seeds, jobs=1, **kw):
    """find_critical from several seeds; results keep the order of ``seeds``.
    Failed starts are returned as the raised exception."""
    def run(seed):
        try:
            return find_critical(ev, flow, cfg, seed=seed, **kw)
        except VortexCoreError as exc:
            return exc
    if jobs <= 1:
        return [run(s) for s in seeds]
    with ThreadPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(run, seeds))
