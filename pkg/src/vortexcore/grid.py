"""Masked scalar fields on the domain grid and their CSV format.

CSV layout: a header line ``nx,ny,x0,y0,dx,dy``, one line with those six
numbers, then ``ny`` lines of ``nx`` values (row-major, y increasing),
exterior cells written as NaN.
"""

from __future__ import annotations

import dataclasses
import io
from dataclasses import dataclass, field

import numpy as np

from .domain import Grid
from .errors import VortexCoreError

HEADER = "nx,ny,x0,y0,dx,dy"
TAGS = ("w", "u", "psi0", "q", "vorticity", "velocity_x", "velocity_y", "pressure",
        "ansatz", "residual", "field")


@dataclass(frozen=True)
class GridField:
    grid: Grid
    values: np.ndarray                 # (ny, nx); NaN outside the domain
    tag: str = "field"
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.shape != self.grid.shape:
            raise VortexCoreError(f"field shape {v.shape} does not match grid {self.grid.shape}",
                                  code="SHAPE_MISMATCH")
        object.__setattr__(self, "values", v)

    @classmethod
    def from_domain(cls, domain, values, tag="field", **meta):
        return cls(domain.grid, values, tag, dict(meta))

    @classmethod
    def from_interior(cls, stencil, grid, u, tag="field", **meta):
        return cls(grid, stencil.to_grid(u, fill=np.nan), tag, dict(meta))

    @property
    def mask(self):
        return np.isfinite(self.values)

    def filled(self, fill=0.0):
        return np.where(self.mask, self.values, fill)

    def replace(self, **kw):
        return dataclasses.replace(self, **kw)

    def at(self, points):
        """Bicubic interpolation with exterior cells treated as zero."""
        return self.grid.interp(self.filled(0.0), np.atleast_2d(points))

    # -- I/O ----------------------------------------------------------------
    def to_csv(self, path=None):
        g = self.grid
        buf = io.StringIO()
        buf.write(HEADER + "\n")
        buf.write(",".join(repr(float(v)) for v in (g.nx, g.ny, g.x0, g.y0, g.h, g.h)) + "\n")
        np.savetxt(buf, self.values, delimiter=",", fmt="%.17g")
        text = buf.getvalue()
        if path is not None:
            with open(path, "w") as fh:
                fh.write(text)
        return text

    @classmethod
    def read_csv(cls, path, tag="field"):
        with open(path) as fh:
            head = fh.readline().strip()
            if head.replace(" ", "") != HEADER:
                raise VortexCoreError(f"{path}: bad grid CSV header {head!r}", code="SCHEMA_INVALID")
            nx, ny, x0, y0, dx, dy = (float(t) for t in fh.readline().split(","))
            values = np.loadtxt(fh, delimiter=",", ndmin=2)
        if abs(dx - dy) > 1e-12 * max(dx, 1.0):
            raise VortexCoreError("anisotropic grids are not supported", code="SCHEMA_INVALID")
        grid = Grid(int(nx), int(ny), x0, y0, dx)
        return cls(grid, values, tag)
