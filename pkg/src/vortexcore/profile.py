"""Radial ground state of -Delta phi = phi^p on the unit disk, phi = 0 on the circle."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.integrate import solve_ivp
from scipy.interpolate import CubicHermiteSpline

from .errors import ProfileError

R_MAX = 50.0
P_RANGE = (1.0, 10.0)
N_SAMPLES = 4001


@dataclass(frozen=True)
class ProfileSolution:
    p: float
    r: np.ndarray
    phi: np.ndarray
    dphi: np.ndarray
    phi_prime_1: float
    I_p: float            # int_{B_1} phi^p
    I_p1: float           # int_{B_1} phi^(p+1)
    r0: float             # first zero of the phi(0) = 1 solution
    nfev: int = 0

    @property
    def phi0(self):
        return float(self.phi[0])

    def pohozaev_residuals(self):
        s = self.phi_prime_1
        res_p1 = abs(self.I_p1 - np.pi * (self.p + 1) / 2 * s * s) / self.I_p1
        res_p = abs(self.I_p - 2 * np.pi * abs(s)) / self.I_p
        return {"I_p": float(res_p), "I_p1": float(res_p1)}

    def spline(self):
        sp = getattr(self, "_spline", None)
        if sp is None:
            sp = CubicHermiteSpline(self.r, self.phi, self.dphi)
            object.__setattr__(self, "_spline", sp)
        return sp

    def to_dict(self):
        return {"p": self.p, "phi_prime_1": self.phi_prime_1, "phi_0": self.phi0,
                "I_p": self.I_p, "I_p1": self.I_p1,
                "pohozaev_residuals": self.pohozaev_residuals()}


def _taylor(r, p):
    """Series of the phi(0) = 1 solution: 1 - r^2/4 + p r^4/64."""
    return 1.0 - r * r / 4 + p * r ** 4 / 64, -r / 2 + p * r ** 3 / 16


def _rhs(p):
    def f(r, y):
        phi, dphi = y[0], y[1]
        pos = max(phi, 0.0)
        fp = pos ** p
        return [dphi, -dphi / r - fp, 2 * np.pi * r * fp, 2 * np.pi * r * fp * pos]
    return f


def solve_profile(p, tol=1e-10, max_step=np.inf, n_samples=N_SAMPLES):
    """Shoot from phi(0) = 1, locate the first zero r0 and rescale it to r = 1."""
    p = float(p)
    if not p > 1:
        raise ProfileError("exponent must exceed 1", code="P_OUT_OF_RANGE")
    if not 0 < tol <= 1e-4:
        raise ProfileError("tol must lie in (0, 1e-4]", code="TOL_OUT_OF_RANGE")
    rtol = min(1e-12, tol * 1e-2)
    r_start = 1e-3
    phi_s, dphi_s = _taylor(r_start, p)
    y0 = [phi_s, dphi_s, np.pi * r_start ** 2, np.pi * r_start ** 2]

    def crossing(r, y):
        return y[0]
    crossing.terminal = True
    crossing.direction = -1

    sol = solve_ivp(_rhs(p), (r_start, R_MAX), y0, method="DOP853", rtol=rtol,
                    atol=rtol * 1e-3, events=crossing, dense_output=True, max_step=max_step)
    if sol.status != 1 or not len(sol.t_events[0]):
        raise ProfileError(f"no zero crossing before r = {R_MAX} (p = {p})", p=p)
    r0 = float(sol.t_events[0][0])
    yend = sol.y_events[0][0]

    # rescale phi(r) -> r0^(2/(p-1)) phi(r0 rho) so the zero sits at rho = 1
    alpha = 2.0 / (p - 1)
    scale = r0 ** alpha
    rho = np.linspace(0.0, 1.0, n_samples)
    r = rho * r0
    phi = np.empty(n_samples)
    dphi = np.empty(n_samples)
    small = r < r_start
    phi[small], dphi[small] = _taylor(r[small], p)
    dense = sol.sol(r[~small])
    phi[~small], dphi[~small] = dense[0], dense[1]
    phi[-1] = 0.0
    dphi[-1] = yend[1]
    phi *= scale
    dphi *= scale * r0
    s1 = float(yend[1] * scale * r0)
    I_p = float(yend[2] * r0 ** (alpha * p - 2))
    I_p1 = float(yend[3] * r0 ** (alpha * (p + 1) - 2))
    out = ProfileSolution(p=p, r=rho, phi=phi, dphi=dphi, phi_prime_1=s1, I_p=I_p,
                          I_p1=I_p1, r0=r0, nfev=int(sol.nfev))
    res = out.pohozaev_residuals()
    if max(res.values()) > max(tol, 1e-6) * 10:
        raise ProfileError("Pohozaev check failed; tolerance not met", code="TOL_NOT_MET", **res)
    return out


def eval_profile(sol: ProfileSolution, r):
    """(phi, phi') at radius r; for r > 1 the C^1 extension phi'(1) ln r."""
    r = np.asarray(r, dtype=float)
    scalar = r.ndim == 0
    r = np.atleast_1d(r)
    if np.any(r < 0):
        raise ValueError("radius must be non-negative")
    val = np.empty_like(r)
    der = np.empty_like(r)
    inner = r <= 1.0
    sp = sol.spline()
    val[inner] = sp(r[inner])
    der[inner] = sp(r[inner], 1)
    ro = r[~inner]
    val[~inner] = sol.phi_prime_1 * np.log(ro)
    der[~inner] = sol.phi_prime_1 / ro
    if scalar:
        return float(val[0]), float(der[0])
    return val, der
