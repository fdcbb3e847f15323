"""Green, Robin and related potentials of planar domains; background flows.

Conventions. ``S(x, y) = (1/2pi) ln(1/|x-y|)`` is the fundamental solution
of ``-Delta``, ``G = S - reg`` the Dirichlet Green function and ``reg`` its
regular part (harmonic in x, equal to S on the boundary). ``robin(z)`` is
``reg(z, z)``; on the unit disk it equals ``-(1/2pi) ln(1 - |z|^2)``.

The functions entering the vortex ansatz are

    h(x, z)    = reg(x, z)
    g(x, z)    = ln R + 2 pi h(x, z)       (harmonic, = ln(R/|x-z|) on the boundary)
    gbar(x, z) = ln(R/|x-z|) - g(x, z)     (= 2 pi G(x, z))

so that ``h`` is minus the regular part written in the ``G = S + H`` form.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .domain import DomainDescriptor
from .errors import DomainError, FluxError, VortexCoreError
from .grid import GridField
from .laplace import LaplaceSolver, build_stencil

TWO_PI = 2.0 * np.pi

BACKENDS = ("analytic-disk", "analytic-annulus", "grid-harmonic")


def _pts(x):
    return np.atleast_2d(np.asarray(x, dtype=float))


def fundamental(x, y):
    """S(x, y) = (1/2pi) ln(1/|x - y|), vectorised over rows of ``x``."""
    d = np.linalg.norm(_pts(x) - np.asarray(y, dtype=float), axis=1)
    return -np.log(d) / TWO_PI


class _DiskKernel:
    """Image-formula regular part for a disk of radius r0 centred at c."""

    def __init__(self, center, radius):
        self.c = np.asarray(center, dtype=float)
        self.r0 = float(radius)

    def regular(self, x, y):
        xs = (_pts(x) - self.c) / self.r0
        ys = (np.asarray(y, dtype=float) - self.c) / self.r0
        arg = 1.0 - 2.0 * xs @ ys + (xs ** 2).sum(1) * (ys ** 2).sum()
        return -np.log(arg) / (2 * TWO_PI) - np.log(self.r0) / TWO_PI

    def grad_regular_x(self, x, y):
        """Gradient of reg(x, y) with respect to x."""
        xs = (_pts(x) - self.c) / self.r0
        ys = (np.asarray(y, dtype=float) - self.c) / self.r0
        arg = 1.0 - 2.0 * xs @ ys + (xs ** 2).sum(1) * (ys ** 2).sum()
        d = -2.0 * ys[None, :] + 2.0 * (ys ** 2).sum() * xs
        return -d / (2 * TWO_PI * arg[:, None]) / self.r0

    def grad_robin(self, z):
        zs = (_pts(z) - self.c) / self.r0
        rr = (zs ** 2).sum(1)
        return zs / (np.pi * (1.0 - rr))[:, None] / self.r0


class _AnnulusKernel:
    """Fourier-series regular part for the annulus r1 < |x - c| < r2."""

    def __init__(self, center, inner, outer, tol=1e-17, nmax=200000):
        self.c = np.asarray(center, dtype=float)
        self.r1 = float(inner)
        self.r2 = float(outer)
        self.tol = tol
        self.nmax = nmax

    def regular(self, x, y):
        xs = _pts(x) - self.c
        yv = np.asarray(y, dtype=float) - self.c
        rho = np.hypot(*yv)
        alpha = np.arctan2(yv[1], yv[0])
        r = np.hypot(xs[:, 0], xs[:, 1])
        phi = np.arctan2(xs[:, 1], xs[:, 0]) - alpha
        r1, r2 = self.r1, self.r2
        lr1, lr2, lrho = np.log(r1), np.log(r2), np.log(rho)
        d0 = (lr2 - lrho) / (lr2 - lr1)
        c0 = lr2 - d0 * lr2
        total = c0 + d0 * np.log(r)
        q = max(rho / r2, r1 / rho)
        nterms = int(min(self.nmax, np.ceil(np.log(self.tol) / np.log(q)) + 2))
        n = np.arange(1, nterms + 1, dtype=float)
        t = (r1 / r2) ** n
        e2 = -((rho / r2) ** n) / n
        e1 = -((r1 / rho) ** n) / n
        cn = (e2 - t * e1) / (1.0 - t * t)
        dn = (e1 - t * e2) / (1.0 - t * t)
        # chunk over points to bound memory
        for start in range(0, len(r), 256):
            sl = slice(start, start + 256)
            rr = r[sl, None]
            radial = cn * (rr / r2) ** n + dn * (r1 / rr) ** n
            total[sl] += (radial * np.cos(n * phi[sl, None])).sum(1)
        return -total / TWO_PI


class PotentialEvaluator:
    """Evaluates G, reg/robin, h, g and gbar for one domain.

    Backends: ``analytic-disk`` (image formula), ``analytic-annulus``
    (Fourier series) and ``grid-harmonic`` (harmonic remainder solved on the
    domain grid with boundary data S). The evaluator is read-only after
    construction apart from an internal per-source cache.
    """

    def __init__(self, domain: DomainDescriptor, backend="auto"):
        self.domain = domain
        if backend == "auto":
            backend = {"disk": "analytic-disk", "annulus": "analytic-annulus"}.get(
                domain.kind, "grid-harmonic")
        if backend not in BACKENDS:
            raise VortexCoreError(f"unknown backend {backend!r}", code="CONFIG_INVALID")
        if backend == "analytic-disk" and domain.kind != "disk":
            raise VortexCoreError("analytic-disk backend needs a disk domain", code="CONFIG_INVALID")
        if backend == "analytic-annulus" and domain.kind != "annulus":
            raise VortexCoreError("analytic-annulus backend needs an annulus", code="CONFIG_INVALID")
        self.backend = backend
        self.R = domain.enclosing_radius
        self.lnR = float(np.log(self.R))
        p = domain.params
        if backend == "analytic-disk":
            self._kernel = _DiskKernel(p["center"], p["radius"])
        elif backend == "analytic-annulus":
            self._kernel = _AnnulusKernel(p["center"], p["inner"], p["outer"])
        else:
            self._kernel = None
        self._stencil = None
        self._solver = None
        self._cache = {}

    # -- grid workspace -------------------------------------------------
    @property
    def stencil(self):
        if self._stencil is None:
            self._stencil = build_stencil(self.domain)
        return self._stencil

    @property
    def solver(self):
        if self._solver is None:
            self._solver = LaplaceSolver(self.stencil)
        return self._solver

    def _remainder(self, y):
        """Full-grid array of the discrete harmonic remainder for source y."""
        key = (round(float(y[0]), 13), round(float(y[1]), 13))
        field = self._cache.get(key)
        if field is None:
            st = self.stencil
            inner = self.solver.harmonic(fundamental(st.bpoints, y))
            X, Y = self.domain.grid.XY
            outside = np.column_stack([X.ravel(), Y.ravel()])
            with np.errstate(divide="ignore"):
                field = fundamental(outside, y).reshape(X.shape)
            field[st.index >= 0] = inner
            if len(self._cache) > 512:
                self._cache.clear()
            self._cache[key] = field
        return field

    # -- checks -----------------------------------------------------------
    def _check(self, x, y=None):
        self.domain.check_interior(x, "evaluation point")
        if y is not None:
            self.domain.check_interior(y, "source point")

    # -- potentials -------------------------------------------------------
    def regular(self, x, y, check=True):
        """Regular part reg(x, y) = S(x, y) - G(x, y); vectorised over x."""
        y = np.asarray(y, dtype=float)
        if check:
            self._check(x, y)
        if self._kernel is not None:
            return self._kernel.regular(x, y)
        return self.domain.grid.interp(self._remainder(y), _pts(x))

    def green(self, x, y, check=True):
        xs = _pts(x)
        y = np.asarray(y, dtype=float)
        if np.any(np.linalg.norm(xs - y, axis=1) == 0.0):
            raise DomainError("green is singular at x == y", code="SINGULAR_POINT")
        return fundamental(xs, y) - self.regular(xs, y, check=check)

    def robin(self, z, check=True):
        """reg(z, z) for each row of z."""
        zs = _pts(z)
        if check:
            self._check(zs)
        return np.array([self.regular(zz[None, :], zz, check=False)[0] for zz in zs])

    def h(self, x, z, check=True):
        return self.regular(x, z, check=check)

    def g(self, x, z, check=True):
        return self.lnR + TWO_PI * self.regular(x, z, check=check)

    def g_bar(self, x, z, check=True):
        xs = _pts(x)
        z = np.asarray(z, dtype=float)
        d = np.linalg.norm(xs - z, axis=1)
        if np.any(d == 0.0):
            raise DomainError("g_bar is singular at x == z", code="SINGULAR_POINT")
        return np.log(self.R / d) - self.g(xs, z, check=check)

    def g_field(self, z):
        """g(., z) on every grid node (exterior nodes carry ln(R/|x-z|))."""
        z = np.asarray(z, dtype=float)
        X, Y = self.domain.grid.XY
        if self._kernel is None:
            rem = self._remainder(z)
        else:
            pts = np.column_stack([X.ravel(), Y.ravel()])
            rem = np.empty(X.size)
            m = self.domain.mask.ravel()
            rem[m] = self._kernel.regular(pts[m], z)
            with np.errstate(divide="ignore"):
                rem[~m] = fundamental(pts[~m], z)
            rem = rem.reshape(X.shape)
        return self.lnR + TWO_PI * rem

    # -- derivatives used by the Routh module --------------------------------
    def grad_regular_x(self, x, y, step=None):
        if self.backend == "analytic-disk":
            return self._kernel.grad_regular_x(x, y)
        xs = _pts(x)
        hstep = step or self._fd_step()
        out = np.empty_like(xs)
        for k in range(2):
            e = np.zeros(2)
            e[k] = hstep
            out[:, k] = (self.regular(xs + e, y, check=False)
                         - self.regular(xs - e, y, check=False)) / (2 * hstep)
        return out

    def grad_robin(self, z, step=None):
        if self.backend == "analytic-disk":
            return self._kernel.grad_robin(z)
        zs = _pts(z)
        hstep = step or self._fd_step()
        out = np.empty_like(zs)
        for k in range(2):
            e = np.zeros(2)
            e[k] = hstep
            out[:, k] = (self.robin(zs + e, check=False) - self.robin(zs - e, check=False)) / (2 * hstep)
        return out

    def _fd_step(self):
        if self.backend == "grid-harmonic":
            return 2.0 * self.domain.grid.h
        return 1e-5 * max(1.0, self.domain.diameter)


# ---------------------------------------------------------------------------
# background flow
# ---------------------------------------------------------------------------

def _cumulative_periodic(vn, length):
    """psi(s_k) = -int_0^{s_k} vn, trapezoid on a uniform periodic sample."""
    ds = length / len(vn)
    ext = np.append(vn, vn[0])
    return -np.concatenate([[0.0], np.cumsum(0.5 * (ext[1:] + ext[:-1]) * ds)])


class _DiskExtension:
    """Exact harmonic extension of uniformly sampled circle data (FFT)."""

    def __init__(self, center, radius, values):
        self.c = np.asarray(center, dtype=float)
        self.r0 = float(radius)
        n = len(values)
        F = np.fft.rfft(values) / n
        m = np.arange(len(F))
        w = np.where(m == 0, 1.0, 2.0)
        if n % 2 == 0:
            w[-1] = 1.0
        coef = w * F
        # drop the negligible tail so high powers of |zeta| cannot overflow
        big = np.nonzero(np.abs(coef) > 1e-15 * max(np.abs(coef).max(), 1e-300))[0]
        keep = big[-1] + 1 if len(big) else 1
        self.coef = coef[:keep]
        self.m = m[:keep]

    def _zeta(self, points):
        p = (_pts(points) - self.c) / self.r0
        return p[:, 0] + 1j * p[:, 1]

    def value(self, points):
        zeta = self._zeta(points)
        return np.real(np.polynomial.polynomial.polyval(zeta, self.coef))

    def grad(self, points):
        zeta = self._zeta(points)
        dcoef = (self.coef * self.m)[1:]
        d = np.polynomial.polynomial.polyval(zeta, dcoef) / self.r0
        return np.column_stack([d.real, -d.imag])


class _AnnulusExtension:
    """Harmonic extension of circle data on both annulus boundaries."""

    def __init__(self, center, r1, r2, outer_vals, inner_vals):
        self.c = np.asarray(center, dtype=float)
        self.r1, self.r2 = float(r1), float(r2)
        n = len(outer_vals)
        # inner samples run clockwise from angle 0; reorder to counter-clockwise
        inner_ccw = np.concatenate([inner_vals[:1], inner_vals[1:][::-1]])
        Fo = np.fft.rfft(outer_vals) / n
        Fi = np.fft.rfft(inner_ccw) / len(inner_ccw)
        k = min(len(Fo), len(Fi))
        Fo, Fi = Fo[:k], Fi[:k]
        m = np.arange(k)
        w = np.where(m == 0, 1.0, 2.0)
        if n % 2 == 0:
            w[-1] = 1.0
        Fo, Fi = w * Fo, w * Fi
        l1, l2 = np.log(self.r1), np.log(self.r2)
        self.B0 = (Fo[0].real - Fi[0].real) / (l2 - l1)
        self.A0 = Fo[0].real - self.B0 * l2
        mm = m[1:].astype(float)
        t = (self.r1 / self.r2) ** mm
        # scaled unknowns: a_m r2^m and b_m r1^-m
        det = 1.0 - t * t
        self.sa = (Fo[1:] - t * Fi[1:]) / det
        self.sb = (Fi[1:] - t * Fo[1:]) / det
        self.m = mm

    def _polar(self, points):
        p = _pts(points) - self.c
        return p[:, 0] + 1j * p[:, 1]

    def value(self, points):
        zeta = self._polar(points)
        r = np.abs(zeta)
        out = self.A0 + self.B0 * np.log(r)
        for start in range(0, len(zeta), 512):
            z = zeta[start:start + 512, None]
            terms = self.sa * (z / self.r2) ** self.m + np.conj(self.sb) * (self.r1 / z) ** self.m
            out[start:start + 512] += terms.sum(1).real
        return out

    def grad(self, points):
        zeta = self._polar(points)
        out = np.empty((len(zeta), 2))
        for start in range(0, len(zeta), 512):
            z = zeta[start:start + 512, None]
            d = (self.sa * self.m * (z / self.r2) ** self.m / z
                 - np.conj(self.sb) * self.m * (self.r1 / z) ** self.m / z).sum(1)
            zz = zeta[start:start + 512]
            d = d + self.B0 / np.conj(zz)
            out[start:start + 512, 0] = d.real
            out[start:start + 512, 1] = -d.imag
        return out


@dataclass
class BackgroundFlow:
    """Harmonic stream function psi0 of the prescribed boundary flux, and q = -psi0."""

    domain: DomainDescriptor
    vn: list
    boundary_psi: list
    psi0: GridField
    q: GridField
    gauge: float = 0.0
    _ext: object = field(default=None, repr=False)
    _full: np.ndarray = field(default=None, repr=False)

    @property
    def is_zero(self):
        return all(np.all(v == 0) for v in self.vn) and self.gauge == 0.0

    def psi0_at(self, points):
        if self.is_zero:
            return np.zeros(len(_pts(points)))
        if all(np.all(v == 0) for v in self.vn):
            return np.full(len(_pts(points)), self.gauge)
        if self._ext is not None:
            return self._ext.value(points) + self.gauge
        return self.domain.grid.interp(self._full, _pts(points))

    def q_at(self, points):
        return -self.psi0_at(points)

    # The plateau levels use q in the canonical gauge (psi0 = 0 at the start of
    # the first boundary parametrisation); constants added by with_gauge are
    # removed here so solutions do not depend on them.
    def level_q_at(self, points):
        return self.q_at(points) + self.gauge

    def level_q_grid(self):
        return self.q.filled(0.0) + self.gauge

    def grad_psi0_at(self, points, step=None):
        pts = _pts(points)
        if self.is_zero:
            return np.zeros_like(pts)
        if self._ext is not None:
            return self._ext.grad(pts)
        hstep = step or 2.0 * self.domain.grid.h
        out = np.empty_like(pts)
        for k in range(2):
            e = np.zeros(2)
            e[k] = hstep
            out[:, k] = (self.psi0_at(pts + e) - self.psi0_at(pts - e)) / (2 * hstep)
        return out

    def with_gauge(self, constant):
        """Same flow with psi0 shifted by an additive constant."""
        psi = self.psi0.values + constant
        return BackgroundFlow(
            domain=self.domain, vn=self.vn,
            boundary_psi=[b + constant for b in self.boundary_psi],
            psi0=self.psi0.replace(values=psi), q=self.q.replace(values=-psi),
            gauge=self.gauge + constant, _ext=self._ext,
            _full=None if self._full is None else self._full + constant)


def _as_components(domain, vn_samples):
    if isinstance(vn_samples, (list, tuple)) and len(vn_samples) and np.ndim(vn_samples[0]) == 1:
        comps = [np.asarray(v, dtype=float) for v in vn_samples]
    else:
        comps = [np.asarray(vn_samples, dtype=float)]
    ncomp = len(domain.boundary)
    if len(comps) == 1 and ncomp > 1:
        n = len(comps[0])
        comps = comps + [np.zeros(n) for _ in range(ncomp - 1)]
    if len(comps) != ncomp:
        raise VortexCoreError(f"expected flux samples for {ncomp} boundary components",
                              code="SHAPE_MISMATCH")
    return comps


def solve_background(domain, vn_samples, evaluator=None, flux_rtol=1e-8):
    """Stream function of the harmonic field with outward boundary flux ``vn``.

    ``vn_samples`` are uniformly spaced in arclength along each boundary
    component, starting at the component's parametrization origin (the
    duplicated closing sample excluded). Boundary values are
    ``psi0(s) = -int_0^s vn`` (zero at the start) and the interior is the
    discrete harmonic extension.
    """
    comps = _as_components(domain, vn_samples)
    boundary_psi = []
    for vn, s in zip(comps, domain.arclength):
        length = s[-1]
        flux = vn.mean() * length
        scale = max(np.abs(vn).max(), 1e-300) * domain.perimeter
        if abs(flux) > flux_rtol * scale and np.abs(vn).max() > 0:
            raise FluxError(f"net boundary flux {flux:.3e} is not zero", flux=float(flux))
        boundary_psi.append(_cumulative_periodic(vn - flux / length, length))

    ev = evaluator if evaluator is not None else PotentialEvaluator(domain, "grid-harmonic")
    st = ev.stencil
    grid = domain.grid

    def boundary_values(points):
        comp, sval = domain.boundary_parameter(points)
        out = np.empty(len(points))
        for k, (bpsi, s) in enumerate(zip(boundary_psi, domain.arclength)):
            sel = comp == k
            grid_s = np.linspace(0.0, s[-1], len(bpsi))
            out[sel] = np.interp(sval[sel], grid_s, bpsi)
        return out

    zero = all(np.all(v == 0) for v in comps)
    if zero:
        interior = np.zeros(st.n)
    else:
        interior = ev.solver.harmonic(boundary_values(st.bpoints))
    vals = np.full(grid.shape, np.nan)
    vals[st.index >= 0] = interior
    psi0 = GridField.from_domain(domain, vals, "psi0")
    q = GridField.from_domain(domain, -vals, "q")

    ext = None
    full = None
    if not zero:
        p = domain.params
        if domain.kind == "disk":
            ext = _DiskExtension(p["center"], p["radius"], boundary_psi[0][:-1])
        elif domain.kind == "annulus":
            ext = _AnnulusExtension(p["center"], p["inner"], p["outer"],
                                    boundary_psi[0][:-1], boundary_psi[1][:-1])
        else:
            full = vals.copy()
            X, Y = grid.XY
            ext_nodes = st.index < 0
            full[ext_nodes] = boundary_values(np.column_stack([X[ext_nodes], Y[ext_nodes]]))
    return BackgroundFlow(domain=domain, vn=comps, boundary_psi=boundary_psi,
                          psi0=psi0, q=q, _ext=ext, _full=full)


def vn_preset(domain, name, amplitude=1.0, n=None):
    """Flux samples for a named preset, as a function of the boundary angle
    ``t = 2 pi s / |component|`` of the first (outer) component."""
    n = n or (len(domain.arclength[0]) - 1)
    t = 2 * np.pi * np.arange(n) / n
    table = {
        "zero": np.zeros(n),
        "cos": np.cos(t),
        "sin": np.sin(t),
        "cos2": np.cos(2 * t),
        "sin2": np.sin(2 * t),
        "mixed": np.sin(t) + np.cos(2 * t),
    }
    if name not in table:
        raise VortexCoreError(f"unknown flux preset {name!r}", code="CONFIG_INVALID")
    vals = amplitude * table[name]
    if len(domain.boundary) > 1:
        return [vals] + [np.zeros(len(a) - 1) for a in domain.arclength[1:]]
    return vals
