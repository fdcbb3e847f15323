"""Run configuration: an INI file with sections domain, flow, vortex, solver,
verify and output. Unknown sections or keys are rejected.

Lists use commas (``eps = 0.1, 0.07, 0.05``); point lists separate points
with semicolons (``z = 0.3, 0; -0.3, 0``).
"""

from __future__ import annotations

import configparser
import os
from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import ConfigError

ENV_OUT = "VORTEXCORE_OUT"

# key -> (default, help); None marks an optional key
SCHEMA = {
    "domain": {
        "kind": ("disk", "disk | ellipse | rectangle | annulus | polygon"),
        "center": ("0, 0", "centre of disk/ellipse/rectangle/annulus"),
        "radius": ("1.0", "disk radius"),
        "a": (None, "ellipse semi-axis along x"),
        "b": (None, "ellipse semi-axis along y"),
        "width": (None, "rectangle width"),
        "height": (None, "rectangle height"),
        "inner": (None, "annulus inner radius"),
        "outer": (None, "annulus outer radius"),
        "vertices": (None, "polygon vertices 'x, y; x, y; ...'"),
        "grid": ("128", "nodes along the longer side of the bounding box"),
        "backend": ("auto", "auto | analytic-disk | analytic-annulus | grid-harmonic"),
    },
    "flow": {
        "preset": ("zero", "zero | cos | sin | cos2 | sin2 | mixed"),
        "amplitude": ("1.0", "preset amplitude"),
        "file": (None, "CSV of boundary flux samples (one column per boundary component)"),
    },
    "vortex": {
        "kappa": ("1.0", "strengths"),
        "z": ("0, 0", "positions (seed of the critical-point search)"),
        "critical": ("true", "move z to the critical point of W found from the seed"),
        "masks": ("auto", "auto | 'cx, cy, r; ...' subdomain disks"),
        "use_masks": ("true", "false selects the single global nonlinearity (equal strengths)"),
        "rho": ("auto", "separation floor; auto = 0.1 * inradius"),
        "lbar": ("2.0", "separation exponent"),
        "seeds": (None, "extra critical-point seeds, one configuration per '|'"),
    },
    "solver": {
        "p": ("2.0", "nonlinearity exponent"),
        "eps": ("0.1, 0.07, 0.05", "strictly decreasing eps list"),
        "tol": ("auto", "residual inf-norm; auto = 1e-10 * max(kappa)"),
        "max_iter": ("50", "Newton iteration cap"),
        "seed": ("ansatz", "ansatz | balanced | zero | file"),
        "seed_file": (None, "grid CSV used when seed = file"),
        "on_contact": ("error", "error | flag when a core touches its subdomain"),
        "profile_tol": ("1e-10", "radial profile tolerance"),
    },
    "verify": {
        "circulation_rel": ("0.03", "relative tolerance of the total circulation at the smallest eps"),
        "centroid_cells": ("2.0", "allowed centroid offset from Z* in grid cells"),
        "radius_ratio": ("0.2", "allowed spread of core radius / eps about its mean"),
        "max_iterations": ("15", "Newton iterations allowed per eps"),
    },
    "output": {
        "dir": (None, f"output directory; default ${ENV_OUT} or ./vortexcore_out"),
    },
}


def _floats(text):
    text = text.strip()
    if not text:
        return []
    return [float(t) for t in text.replace(",", " ").split()]


def _points(text):
    pts = [_floats(chunk) for chunk in text.split(";") if chunk.strip()]
    if any(len(p) != 2 for p in pts):
        raise ConfigError(f"cannot read points from {text!r}")
    return np.array(pts, dtype=float).reshape(-1, 2)


def _bool(text):
    t = text.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"not a boolean: {text!r}")


def _auto_float(text):
    return None if text.strip().lower() == "auto" else float(text)


@dataclass
class DomainSection:
    kind: str
    shape: dict
    grid: int
    backend: str


@dataclass
class FlowSection:
    preset: str
    amplitude: float
    file: str | None


@dataclass
class VortexSection:
    kappa: list
    z: list
    critical: bool
    masks: list | None
    use_masks: bool
    rho: float | None
    lbar: float
    seeds: list = field(default_factory=list)


@dataclass
class SolverSection:
    p: float
    eps: list
    tol: float | None
    max_iter: int
    seed: str
    seed_file: str | None
    on_contact: str
    profile_tol: float


@dataclass
class VerifySection:
    circulation_rel: float
    centroid_cells: float
    radius_ratio: float
    max_iterations: int


@dataclass
class RunConfig:
    domain: DomainSection
    flow: FlowSection
    vortex: VortexSection
    solver: SolverSection
    verify: VerifySection
    output: str
    source: list = field(default_factory=list)

    def to_dict(self):
        d = asdict(self)
        d.pop("source")
        return d


def _section(cp, name):
    raw = dict(cp[name]) if cp.has_section(name) else {}
    allowed = SCHEMA[name]
    unknown = sorted(set(raw) - set(allowed))
    if unknown:
        raise ConfigError(f"unknown key(s) in [{name}]: {', '.join(unknown)}", section=name, keys=unknown)
    out = {k: d for k, (d, _) in allowed.items()}
    out.update(raw)
    return out


def load_config(paths, overrides=None):
    """Parse one or more INI files (later files win) into a RunConfig."""
    if isinstance(paths, (str, os.PathLike)):
        paths = [paths]
    cp = configparser.ConfigParser(interpolation=None, default_section="__defaults__")
    for path in paths:
        try:
            with open(path) as fh:
                cp.read_file(fh, source=str(path))
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}", path=str(path)) from exc
        except configparser.Error as exc:
            raise ConfigError(f"malformed config {path}: {exc}", path=str(path)) from exc
    for name, vals in (overrides or {}).items():
        if not cp.has_section(name):
            cp.add_section(name)
        for k, v in vals.items():
            cp.set(name, k, str(v))
    unknown = sorted(set(cp.sections()) - set(SCHEMA))
    if unknown:
        raise ConfigError(f"unknown section(s): {', '.join(unknown)}", sections=unknown)
    try:
        return _build(cp, [str(p) for p in paths])
    except ConfigError:
        raise
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"invalid config value: {exc}") from exc


def _build(cp, paths):
    d = _section(cp, "domain")
    kind = d["kind"].strip()
    shape = {}
    if kind == "polygon":
        if d["vertices"] is None:
            raise ConfigError("polygon needs 'vertices'")
        shape["vertices"] = _points(d["vertices"]).tolist()
    else:
        shape["center"] = tuple(_floats(d["center"]))
        keys = {"disk": ["radius"], "ellipse": ["a", "b"], "rectangle": ["width", "height"],
                "annulus": ["inner", "outer"]}.get(kind)
        if keys is None:
            raise ConfigError(f"unknown domain kind {kind!r}")
        for k in keys:
            if d[k] is None:
                raise ConfigError(f"{kind} needs '{k}'")
            shape[k] = float(d[k])
    domain = DomainSection(kind=kind, shape=shape, grid=int(d["grid"]), backend=d["backend"].strip())

    f = _section(cp, "flow")
    flow = FlowSection(preset=f["preset"].strip(), amplitude=float(f["amplitude"]), file=f["file"])

    v = _section(cp, "vortex")
    kappa = _floats(v["kappa"])
    z = _points(v["z"])
    masks = None
    if v["masks"].strip().lower() != "auto":
        mk = [_floats(c) for c in v["masks"].split(";") if c.strip()]
        if any(len(m) != 3 for m in mk):
            raise ConfigError("masks need 'cx, cy, r' triples")
        masks = mk
    seeds = []
    if v["seeds"]:
        seeds = [_points(s).tolist() for s in v["seeds"].split("|") if s.strip()]
    vortex = VortexSection(kappa=kappa, z=z.tolist(), critical=_bool(v["critical"]), masks=masks,
                           use_masks=_bool(v["use_masks"]), rho=_auto_float(v["rho"]),
                           lbar=float(v["lbar"]), seeds=seeds)
    if len(kappa) != len(z):
        raise ConfigError("kappa and z have different lengths")
    if masks is not None and len(masks) != len(kappa):
        raise ConfigError("one mask per vortex is required")

    s = _section(cp, "solver")
    seed = s["seed"].strip()
    if seed not in ("ansatz", "balanced", "zero", "file"):
        raise ConfigError(f"unknown seed {seed!r}")
    if seed == "file" and not s["seed_file"]:
        raise ConfigError("seed = file needs seed_file")
    on_contact = s["on_contact"].strip()
    if on_contact not in ("error", "flag"):
        raise ConfigError(f"on_contact must be error or flag, not {on_contact!r}")
    solver = SolverSection(p=float(s["p"]), eps=_floats(s["eps"]), tol=_auto_float(s["tol"]),
                           max_iter=int(s["max_iter"]), seed=seed, seed_file=s["seed_file"],
                           on_contact=on_contact, profile_tol=float(s["profile_tol"]))

    t = _section(cp, "verify")
    verify = VerifySection(circulation_rel=float(t["circulation_rel"]),
                           centroid_cells=float(t["centroid_cells"]),
                           radius_ratio=float(t["radius_ratio"]), max_iterations=int(t["max_iterations"]))

    o = _section(cp, "output")
    out = o["dir"] or os.environ.get(ENV_OUT) or "vortexcore_out"
    return RunConfig(domain=domain, flow=flow, vortex=vortex, solver=solver, verify=verify,
                     output=out, source=paths)


def describe_schema():
    """Help text listing every key with its default."""
    lines = []
    for sec, keys in SCHEMA.items():
        lines.append(f"[{sec}]")
        for k, (default, text) in keys.items():
            dv = "(none)" if default is None else default
            lines.append(f"  {k:<16} default {dv:<18} {text}")
    return "\n".join(lines)
