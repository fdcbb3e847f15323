"""Planar domains, their Cartesian grids and boundary parametrizations."""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy.spatial import cKDTree

from .errors import DomainError, GeometryError

KINDS = ("disk", "ellipse", "rectangle", "annulus", "polygon")

# dense boundary sampling used for arclength projection and distances
_DENSE = 8192


@dataclass(frozen=True)
class Grid:
    """Uniform node grid; arrays are indexed ``[iy, ix]``."""

    nx: int
    ny: int
    x0: float
    y0: float
    h: float

    @property
    def shape(self):
        return (self.ny, self.nx)

    @cached_property
    def xs(self):
        return self.x0 + self.h * np.arange(self.nx)

    @cached_property
    def ys(self):
        return self.y0 + self.h * np.arange(self.ny)

    @cached_property
    def XY(self):
        return np.meshgrid(self.xs, self.ys)

    def nearest_index(self, point):
        ix = int(round((point[0] - self.x0) / self.h))
        iy = int(round((point[1] - self.y0) / self.h))
        return iy, ix

    def interp(self, values, points):
        """Local 4x4 Lagrange (bicubic) interpolation of a full-grid array."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        fx = (pts[:, 0] - self.x0) / self.h
        fy = (pts[:, 1] - self.y0) / self.h
        ix = np.clip(np.floor(fx).astype(int), 1, self.nx - 3)
        iy = np.clip(np.floor(fy).astype(int), 1, self.ny - 3)
        wx = _lagrange4(fx - ix)
        wy = _lagrange4(fy - iy)
        out = np.zeros(len(pts))
        for a in range(4):
            for b in range(4):
                out += wy[a] * wx[b] * values[iy - 1 + a, ix - 1 + b]
        return out


def _lagrange4(t):
    return (
        -t * (t - 1) * (t - 2) / 6,
        (t + 1) * (t - 1) * (t - 2) / 2,
        -(t + 1) * t * (t - 2) / 2,
        (t + 1) * t * (t - 1) / 6,
    )


def _resample_closed(curve, n):
    """Resample a closed polyline to ``n`` arclength-uniform points (closed: last == first)."""
    seg = np.linalg.norm(np.diff(curve, axis=0), axis=1)
    s = np.concatenate([[0.0], np.cumsum(seg)])
    t = np.linspace(0.0, s[-1], n + 1)
    pts = np.column_stack([np.interp(t, s, curve[:, 0]), np.interp(t, s, curve[:, 1])])
    pts[-1] = pts[0]
    return pts, t


def _point_in_polygon(x, y, verts):
    inside = np.zeros(np.shape(x), dtype=bool)
    n = len(verts)
    for k in range(n):
        xa, ya = verts[k]
        xb, yb = verts[(k + 1) % n]
        crosses = (ya > y) != (yb > y)
        with np.errstate(divide="ignore", invalid="ignore"):
            xint = xa + (y - ya) * (xb - xa) / (yb - ya)
        inside ^= crosses & (x < xint)
    return inside


def _polygon_area(verts):
    x, y = verts[:, 0], verts[:, 1]
    return 0.5 * (np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1)))


@dataclass
class DomainDescriptor:
    """A bounded planar domain discretised on a uniform grid.

    ``boundary`` holds one closed curve per boundary component, positively
    oriented (domain on the left), sampled uniformly in arclength with the
    first sample repeated at the end. ``enclosing_radius`` is the constant R
    with Omega compactly inside B_R(x) for every x in Omega.
    """

    kind: str
    params: dict
    grid: Grid
    boundary: list
    arclength: list
    diameter: float
    enclosing_radius: float
    area: float
    _inside: object = field(repr=False, default=None)

    def inside(self, x, y):
        return self._inside(np.asarray(x, dtype=float), np.asarray(y, dtype=float))

    def contains(self, points):
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        return self.inside(pts[:, 0], pts[:, 1])

    @cached_property
    def mask(self):
        X, Y = self.grid.XY
        return self.inside(X, Y)

    @cached_property
    def perimeter(self):
        return float(sum(s[-1] for s in self.arclength))

    @cached_property
    def _dense(self):
        curves = []
        for c in self.boundary:
            pts, _ = _resample_closed(c, _DENSE)
            curves.append(pts[:-1])
        pts = np.vstack(curves)
        return pts, cKDTree(pts)

    def distance_to_boundary(self, points):
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        if self.kind == "disk":
            c = np.asarray(self.params["center"])
            return np.abs(self.params["radius"] - np.linalg.norm(pts - c, axis=1))
        if self.kind == "annulus":
            r = np.linalg.norm(pts - np.asarray(self.params["center"]), axis=1)
            return np.minimum(np.abs(self.params["outer"] - r), np.abs(r - self.params["inner"]))
        d, _ = self._dense[1].query(pts)
        return d

    @cached_property
    def inradius(self):
        X, Y = self.grid.XY
        pts = np.column_stack([X[self.mask], Y[self.mask]])
        return float(self.distance_to_boundary(pts).max())

    def boundary_parameter(self, points):
        """Map points on (or next to) the boundary to (component, arclength)."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        comp = np.empty(len(pts), dtype=int)
        svals = np.empty(len(pts))
        best = np.full(len(pts), np.inf)
        for k, curve in enumerate(self.boundary):
            a = curve[:-1]
            b = curve[1:]
            ab = b - a
            L2 = np.einsum("ij,ij->i", ab, ab)
            tree = cKDTree(0.5 * (a + b))
            _, idx = tree.query(pts, k=4)
            for col in range(idx.shape[1]):
                j = idx[:, col]
                t = np.clip(np.einsum("ij,ij->i", pts - a[j], ab[j]) / L2[j], 0.0, 1.0)
                proj = a[j] + t[:, None] * ab[j]
                d = np.linalg.norm(pts - proj, axis=1)
                s = self.arclength[k][j] + t * np.sqrt(L2[j])
                better = d < best
                best[better] = d[better]
                comp[better] = k
                svals[better] = s[better]
        return comp, svals

    def check_interior(self, points, what="point"):
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        bad = ~self.contains(pts)
        if np.any(bad):
            raise DomainError(f"{what} outside the domain: {pts[bad].tolist()}")

    def to_dict(self):
        return {
            "kind": self.kind,
            "params": {k: (list(v) if isinstance(v, (tuple, list, np.ndarray)) else v)
                       for k, v in self.params.items()},
            "grid": {"nx": self.grid.nx, "ny": self.grid.ny, "x0": self.grid.x0,
                     "y0": self.grid.y0, "h": self.grid.h},
            "enclosing_radius": self.enclosing_radius,
            "diameter": self.diameter,
            "perimeter": self.perimeter,
        }


def _shape(kind, p):
    """Return (inside-function, boundary curves, area, bbox, feature size)."""
    theta = np.linspace(0.0, 2 * np.pi, 4 * _DENSE + 1)
    if kind == "disk":
        r = float(p["radius"])
        cx, cy = p["center"]
        if r <= 0:
            raise GeometryError("disk radius must be positive")
        inside = lambda x, y: (x - cx) ** 2 + (y - cy) ** 2 < r * r  # noqa: E731
        curves = [np.column_stack([cx + r * np.cos(theta), cy + r * np.sin(theta)])]
        return inside, curves, np.pi * r * r, (cx - r, cx + r, cy - r, cy + r), r
    if kind == "ellipse":
        a, b = float(p["a"]), float(p["b"])
        cx, cy = p["center"]
        if a <= 0 or b <= 0:
            raise GeometryError("ellipse semi-axes must be positive")
        inside = lambda x, y: ((x - cx) / a) ** 2 + ((y - cy) / b) ** 2 < 1.0  # noqa: E731
        curves = [np.column_stack([cx + a * np.cos(theta), cy + b * np.sin(theta)])]
        return inside, curves, np.pi * a * b, (cx - a, cx + a, cy - b, cy + b), min(a, b)
    if kind == "rectangle":
        w, hgt = float(p["width"]), float(p["height"])
        cx, cy = p["center"]
        if w <= 0 or hgt <= 0:
            raise GeometryError("rectangle sides must be positive")
        inside = lambda x, y: (np.abs(x - cx) < w / 2) & (np.abs(y - cy) < hgt / 2)  # noqa: E731
        # start at the midpoint of the right side, counter-clockwise
        verts = np.array([
            [cx + w / 2, cy], [cx + w / 2, cy + hgt / 2], [cx - w / 2, cy + hgt / 2],
            [cx - w / 2, cy - hgt / 2], [cx + w / 2, cy - hgt / 2], [cx + w / 2, cy],
        ])
        return inside, [verts], w * hgt, (cx - w / 2, cx + w / 2, cy - hgt / 2, cy + hgt / 2), min(w, hgt) / 2
    if kind == "annulus":
        r1, r2 = float(p["inner"]), float(p["outer"])
        cx, cy = p["center"]
        if not 0 < r1 < r2:
            raise GeometryError("annulus needs 0 < inner < outer")

        def inside(x, y):
            rr = (x - cx) ** 2 + (y - cy) ** 2
            return (rr > r1 * r1) & (rr < r2 * r2)

        outer = np.column_stack([cx + r2 * np.cos(theta), cy + r2 * np.sin(theta)])
        inner = np.column_stack([cx + r1 * np.cos(-theta), cy + r1 * np.sin(-theta)])
        return inside, [outer, inner], np.pi * (r2 ** 2 - r1 ** 2), (cx - r2, cx + r2, cy - r2, cy + r2), (r2 - r1) / 2
    if kind == "polygon":
        verts = np.asarray(p["vertices"], dtype=float)
        if len(verts) < 3:
            raise GeometryError("polygon needs at least three vertices")
        area = _polygon_area(verts)
        if abs(area) < 1e-14:
            raise GeometryError("polygon has zero area")
        if area < 0:
            verts = verts[::-1]
            area = -area
        inside = lambda x, y: _point_in_polygon(x, y, verts)  # noqa: E731
        closed = np.vstack([verts, verts[:1]])
        bbox = (verts[:, 0].min(), verts[:, 0].max(), verts[:, 1].min(), verts[:, 1].max())
        return inside, [closed], area, bbox, np.sqrt(area / np.pi)
    raise GeometryError(f"unknown domain kind {kind!r}; expected one of {KINDS}")


def _normalize_params(kind, shape_params):
    p = dict(shape_params)
    if kind != "polygon":
        p["center"] = tuple(float(c) for c in p.get("center", (0.0, 0.0)))
    for key, val in list(p.items()):
        if key not in ("center", "vertices"):
            p[key] = float(val)
    return p


def make_domain(kind, shape_params, grid_resolution=128, n_boundary=1024):
    """Build a :class:`DomainDescriptor`.

    ``grid_resolution`` is the node count along the longer side of the
    bounding box (one ghost layer included on each side).
    """
    if grid_resolution < 32:
        raise GeometryError("grid resolution must be at least 32 per side",
                            code="UNRESOLVED_GEOMETRY")
    p = _normalize_params(kind, shape_params)
    inside, curves, area, bbox, feature = _shape(kind, p)
    if area <= 0:
        raise GeometryError("domain has zero area")
    xmin, xmax, ymin, ymax = bbox
    width, height = xmax - xmin, ymax - ymin
    h = max(width, height) / (grid_resolution - 3)
    nx = int(np.ceil(width / h - 1e-9)) + 3
    ny = int(np.ceil(height / h - 1e-9)) + 3
    grid = Grid(nx, ny, 0.5 * (xmin + xmax) - 0.5 * (nx - 1) * h,
                0.5 * (ymin + ymax) - 0.5 * (ny - 1) * h, h)

    if feature < 4 * h or (kind == "annulus" and p["inner"] < 2 * h):
        raise GeometryError(f"{kind} features are not resolved at h={h:.3g}",
                            code="UNRESOLVED_GEOMETRY")

    boundary, arclength = [], []
    for c in curves:
        pts, s = _resample_closed(c, n_boundary)
        if np.linalg.norm(pts[0] - pts[-1]) > 1e-12:
            raise GeometryError("boundary curve is not closed")
        boundary.append(pts)
        arclength.append(s)

    allpts = np.vstack([b[:-1] for b in boundary])
    sub = allpts[:: max(1, len(allpts) // 1024)]
    diff = sub[:, None, :] - sub[None, :, :]
    diam = float(np.sqrt((diff ** 2).sum(-1)).max())
    if kind == "disk":
        diam = 2 * p["radius"]
    elif kind == "annulus":
        diam = 2 * p["outer"]

    dom = DomainDescriptor(kind=kind, params=p, grid=grid, boundary=boundary,
                           arclength=arclength, diameter=diam,
                           enclosing_radius=1.5 * diam, area=float(area), _inside=inside)
    if dom.mask.sum() < 16:
        raise GeometryError("too few interior grid nodes", code="UNRESOLVED_GEOMETRY")
    return dom
