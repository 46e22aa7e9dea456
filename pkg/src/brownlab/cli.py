"""brownlab command line.

    brownlab density --config run.json --grid 201,201,-2,2,-2,2 --out run/zero
    brownlab simulate --t 1 --n 512 --seed 3
    brownlab compare a.csv b.csv

Config is one JSON file; flags override its fields.  Exit status is 0 on
success, 2 for bad configuration and 3 when a numerical routine fails.
"""

from __future__ import annotations

import csv
import json
import logging
import math
import os
import sys
from dataclasses import dataclass, field

import click
import numpy as np

from . import randmat_lab as rl
from .brown_circular import DensityGrid, density_grid
from .errors import BrownlabError, ConfigError, NumericalFailure
from .pushforward import EllipticParams, pushforward_density, pushforward_pointcloud
from .selfadjoint_case import biane_profile
from .spectral_core import (FiniteMatrix, HaarUnitary, PlanarAtomic, QuasiNilpotentDT, SelfAdjoint,
                            Zero, operator_from_json, operator_to_json)
from .special_operators import (RDiagonalProfile, dt_density, dt_disk_radius, haar_axes_gamma,
                                haar_cdf, haar_cdf_clipped, haar_radii, phi_rdiag)
from .subordination import in_xi_t_many

log = logging.getLogger("brownlab")

EXIT_CONFIG = 2
EXIT_NUMERIC = 3


# ----------------------------------------------------------------------------
# configuration
# ----------------------------------------------------------------------------

@dataclass
class RunConfig:
    operator: object
    t: float = 1.0
    gamma: complex = 0j
    grid: tuple = None  # (nx, ny, x_min, x_max, y_min, y_max)
    out: str = "brownlab"
    seed: int = 0
    n: int = 512
    eps: float = None
    threads: int = 1
    svg: bool = False
    extra: dict = field(default_factory=dict)

    def validate(self):
        if not self.t > 0:
            raise ConfigError("t must be > 0")
        if abs(self.gamma) > self.t + 1e-15:
            raise ConfigError("|gamma| must not exceed t")
        if self.eps is not None and not self.eps > 0:
            raise ConfigError("eps must be > 0")
        if self.n < 2:
            raise ConfigError("n must be >= 2")
        if self.threads < 1:
            raise ConfigError("threads must be >= 1")
        if self.grid is not None:
            nx, ny, x0, x1, y0, y1 = self.grid
            if nx < 2 or ny < 2:
                raise ConfigError("grid resolution must be at least 2 x 2")
            if not (x1 > x0 and y1 > y0):
                raise ConfigError("grid bounds must be increasing")
        return self

    @property
    def params(self):
        return EllipticParams(self.t, self.gamma)


def parse_grid(text):
    if isinstance(text, (list, tuple)):
        parts = list(text)
    else:
        parts = str(text).split(",")
    if len(parts) != 6:
        raise ConfigError("grid needs NX,NY,XMIN,XMAX,YMIN,YMAX")
    try:
        return (int(parts[0]), int(parts[1])) + tuple(float(p) for p in parts[2:])
    except ValueError as exc:
        raise ConfigError(f"bad grid: {exc}") from exc


def _load_config(path):
    if path is None:
        return {}
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    if not isinstance(doc, dict):
        raise ConfigError("config must be a JSON object")
    return doc


def build_config(opts) -> RunConfig:
    doc = _load_config(opts.get("config"))
    gamma = doc.get("gamma", 0)
    if isinstance(gamma, dict):
        gamma = complex(gamma.get("re", 0.0), gamma.get("im", 0.0))
    elif isinstance(gamma, (list, tuple)):
        gamma = complex(*gamma)
    try:
        gamma = complex(gamma)
        cfg = RunConfig(
            operator=operator_from_json(doc.get("operator", {"type": "zero"})),
            t=float(doc.get("t", 1.0)),
            gamma=gamma,
            grid=parse_grid(doc["grid"]) if doc.get("grid") is not None else None,
            out=str(doc.get("out", "brownlab")),
            seed=int(doc.get("seed", 0)),
            n=int(doc.get("n", 512)),
            eps=None if doc.get("eps") is None else float(doc["eps"]),
            threads=int(doc.get("threads", os.cpu_count() or 1)),
            svg=bool(doc.get("svg", False)),
            extra={k: v for k, v in doc.items() if k not in RunConfig.__dataclass_fields__},
        )
    except (TypeError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"bad config value: {exc}") from exc
    # flags win over the file
    if opts.get("t") is not None:
        cfg.t = opts["t"]
    if opts.get("gamma_re") is not None or opts.get("gamma_im") is not None:
        re = opts["gamma_re"] if opts.get("gamma_re") is not None else cfg.gamma.real
        im = opts["gamma_im"] if opts.get("gamma_im") is not None else cfg.gamma.imag
        cfg.gamma = complex(re, im)
    for key in ("out", "seed", "n", "eps", "threads"):
        if opts.get(key) is not None:
            setattr(cfg, key, opts[key])
    if opts.get("grid") is not None:
        cfg.grid = parse_grid(opts["grid"])
    if opts.get("svg"):
        cfg.svg = True
    return cfg.validate()


def default_grid(op, t, res=201):
    """A box that holds the Brown measure of x0 + c_t with a margin."""
    r = math.sqrt(t)
    if isinstance(op, SelfAdjoint):
        lo, hi = op.measure.support_bounds()
        return (res, res, lo - 2.5 * r, hi + 2.5 * r, -1.5 * r - 0.1, 1.5 * r + 0.1)
    if isinstance(op, (PlanarAtomic, FiniteMatrix)):
        pts = np.array([z for z, _ in op.points]) if isinstance(op, PlanarAtomic) else \
            np.linalg.eigvals(op.matrix)
        norm = 1.0 if isinstance(op, PlanarAtomic) else float(np.linalg.norm(op.matrix, 2))
        rad = float(np.max(np.abs(pts))) + norm + 2 * r
        return (res, res, -rad, rad, -rad, rad)
    if isinstance(op, HaarUnitary):
        rad = haar_radii(t)[1] * 1.1
    elif isinstance(op, QuasiNilpotentDT):
        rad = dt_disk_radius(t) * 1.1
    else:
        rad = 1.1 * r
    return (res, res, -rad, rad, -rad, rad)


def _grid_of(cfg):
    g = cfg.grid or default_grid(cfg.operator, cfg.t)
    nx, ny, x0, x1, y0, y1 = g
    return (x0, x1, y0, y1), (nx, ny)


# ----------------------------------------------------------------------------
# output helpers
# ----------------------------------------------------------------------------

def _path(cfg, suffix):
    d = os.path.dirname(cfg.out)
    if d:
        os.makedirs(d, exist_ok=True)
    return f"{cfg.out}_{suffix}"


def _fmt(x):
    return f"{x:.17g}"


def _write_rows(path, header, rows):
    with open(path, "w") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(_fmt(v) if isinstance(v, float) else str(v) for v in row) + "\n")
    return path


def _write_json(path, doc):
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return path


# viridis, sampled at nine stops and expanded to 256 steps at import
_VIRIDIS_STOPS = np.array([
    [68, 1, 84], [71, 44, 122], [59, 81, 139], [44, 113, 142], [33, 144, 141],
    [39, 173, 129], [92, 200, 99], [170, 220, 50], [253, 231, 37]], dtype=float)
VIRIDIS = np.stack([np.interp(np.linspace(0, 8, 256), np.arange(9), _VIRIDIS_STOPS[:, c])
                    for c in range(3)], axis=1).round().astype(int)


def write_svg(path, values, cell=4):
    """Heat map of an [ix, iy] array; NaN cells are left blank."""
    nx, ny = values.shape
    finite = values[np.isfinite(values)]
    lo, hi = (float(finite.min()), float(finite.max())) if finite.size else (0.0, 1.0)
    span = hi - lo if hi > lo else 1.0
    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{nx * cell}" height="{ny * cell}">']
    for ix in range(nx):
        for iy in range(ny):
            v = values[ix, iy]
            if not np.isfinite(v):
                continue
            r, g, b = VIRIDIS[int(round(255 * (v - lo) / span))]
            out.append(f'<rect x="{ix * cell}" y="{(ny - 1 - iy) * cell}" width="{cell}" '
                       f'height="{cell}" fill="#{r:02x}{g:02x}{b:02x}"/>')
    out.append("</svg>")
    with open(path, "w") as fh:
        fh.write("\n".join(out) + "\n")
    return path


def _report(files, **summary):
    click.echo(json.dumps({"files": files, **summary}, sort_keys=True))


# ----------------------------------------------------------------------------
# command bodies (plain functions so tests can call them)
# ----------------------------------------------------------------------------

def run_domain(cfg):
    bounds, res = _grid_of(cfg)
    shell = DensityGrid(*bounds, *res, None, None, cfg.t)
    pts = shell.points
    mask = in_xi_t_many(cfg.operator, pts, cfg.t)
    files = [_write_rows(_path(cfg, "domain.csv"), ["x", "y", "in_xi"],
                         ((float(p.real), float(p.imag), int(m))
                          for p, m in zip(pts.ravel(), mask.ravel())))]
    if isinstance(cfg.operator, SelfAdjoint):
        prof = biane_profile(cfg.operator.measure, cfg.t, cfg.gamma)
        path = _path(cfg, "vt.csv")
        prof.to_csv(path)
        files.append(path)
    if cfg.svg:
        files.append(write_svg(_path(cfg, "domain.svg"), mask.astype(float)))
    _report(files, fraction_inside=float(mask.mean()))
    return files


def run_density(cfg):
    bounds, res = _grid_of(cfg)
    grid = density_grid(cfg.operator, cfg.t, bounds, res, workers=cfg.threads)
    files = [_path(cfg, "density.csv")]
    grid.to_csv(files[0])
    summary = {"mass": grid.mass, "t": cfg.t, "nx": grid.nx, "ny": grid.ny,
               "cell_area": grid.cell_area, "bounds": list(bounds)}
    files.append(_write_json(_path(cfg, "density.json"), summary))
    if cfg.svg:
        files.append(write_svg(_path(cfg, "density.svg"), grid.values))
    _report(files, mass=grid.mass)
    return grid


def run_pushforward(cfg):
    bounds, res = _grid_of(cfg)
    grid = density_grid(cfg.operator, cfg.t, bounds, res, workers=cfg.threads)
    params = cfg.params
    field_ = None
    if cfg.eps is None:
        field_ = pushforward_density(cfg.operator, params, grid)
    if field_ is not None and not field_.flagged.any():
        path = _path(cfg, "pushforward.csv")
        field_.to_csv(path)
        _report([path], mode="density", source_mass=field_.source_mass,
                transported_mass=field_.transported_mass)
        return field_
    # Phi is singular somewhere (or eps requested): transport samples instead
    n = int(cfg.extra.get("samples", 100_000))
    z = pushforward_pointcloud(cfg.operator, params, n, cfg.seed, grid, eps=cfg.eps)
    path = _write_rows(_path(cfg, "cloud.csv"), ["re", "im"],
                       ((float(v.real), float(v.imag)) for v in z))
    _report([path], mode="pointcloud", samples=n)
    return z


def run_closed_form(cfg):
    op, t, gamma = cfg.operator, cfg.t, cfg.gamma
    files = []
    if isinstance(op, HaarUnitary):
        lo, hi = haar_radii(t)
        radii = np.linspace(lo, hi, 64)
        rows = []
        for r in radii:
            s = r * r - 1
            major, minor = haar_axes_gamma(s, t, gamma) if abs(gamma) > 0 else (r, r)
            rows.append((float(r), haar_cdf(r, t), major, minor))
        files.append(_write_rows(_path(cfg, "haar.csv"), ["r", "cdf", "major", "minor"], rows))
        summary = {"inner_radius": lo, "outer_radius": hi}
    elif isinstance(op, QuasiNilpotentDT):
        summary = {"radius": dt_disk_radius(t), "density": dt_density(t)}
        files.append(_write_rows(_path(cfg, "dt.csv"), ["t", "radius", "density"],
                                 [(float(t), summary["radius"], summary["density"])]))
    elif isinstance(op, Zero):
        prof = RDiagonalProfile.circular(t)
        radii = np.linspace(0, math.sqrt(t), 65)[1:]
        rows = [(float(r), *phi_rdiag(prof, r, gamma)) for r in radii]
        files.append(_write_rows(_path(cfg, "ellipse.csv"), ["r", "minor", "major"], rows))
        summary = {"major": rows[-1][2], "minor": rows[-1][1]}
    elif isinstance(op, SelfAdjoint):
        prof = biane_profile(op.measure, t, gamma)
        path = _path(cfg, "biane.csv")
        prof.to_csv(path)
        files.append(path)
        summary = {"points": int(prof.a.size)}
    else:
        raise ConfigError("closed forms exist for zero, haar_unitary, dt and selfadjoint operators")
    _report(files, **summary)
    return files


def operator_matrix(op, n, seed):
    """Deterministic (or Haar/DT random) n x n model of x0."""
    if isinstance(op, Zero):
        return rl.EnsembleSpec(n, "deterministic", seed, matrix=np.zeros((n, n), complex))
    if isinstance(op, HaarUnitary):
        return rl.EnsembleSpec(n, "haar_unitary", seed)
    if isinstance(op, QuasiNilpotentDT):
        return rl.EnsembleSpec(n, "dt_upper", seed)
    if isinstance(op, SelfAdjoint):
        if op.measure.pieces:
            raise ConfigError("simulate supports atomic selfadjoint operators only")
        return rl.EnsembleSpec(n, "deterministic", seed,
                               matrix=rl.three_atom_diagonal(n, op.measure.atoms))
    if isinstance(op, PlanarAtomic):
        return rl.EnsembleSpec(n, "deterministic", seed,
                               matrix=rl.three_atom_diagonal(n, op.points))
    k = op.n
    if n % k:
        raise ConfigError(f"n must be a multiple of the matrix size {k}")
    return rl.EnsembleSpec(n, "deterministic", seed, matrix=np.kron(np.eye(n // k), op.matrix))


def _theory(cfg, eigs):
    op, t = cfg.operator, cfg.t
    if cfg.gamma == 0:
        if isinstance(op, Zero):
            return rl.circular_law_cdf(t), True
        if isinstance(op, HaarUnitary):
            return (lambda r: haar_cdf_clipped(r, t)), True
        if isinstance(op, QuasiNilpotentDT):
            rad = dt_disk_radius(t)
            return (lambda r: min(r * r / (rad * rad), 1.0)), True
        bounds, res = _grid_of(cfg)
        return density_grid(op, t, bounds, res, workers=cfg.threads), False
    # elliptic noise: histogram a large transported cloud
    bounds, res = _grid_of(cfg)
    env = density_grid(op, t, bounds, res, workers=cfg.threads)
    z = pushforward_pointcloud(op, cfg.params, 400_000, cfg.seed + 1, env)
    reach = max(float(np.max(np.abs(z.real))), float(np.max(np.abs(eigs.real))))
    reach_y = max(float(np.max(np.abs(z.imag))), float(np.max(np.abs(eigs.imag))), 1e-3)
    return cloud_grid(z, (-reach, reach, -reach_y, reach_y), (200, 200), t), False


def cloud_grid(z, bounds, res, t=float("nan")) -> DensityGrid:
    x0, x1, y0, y1 = bounds
    h, _, _ = np.histogram2d(z.real, z.imag, bins=res, range=[[x0, x1], [y0, y1]])
    area = (x1 - x0) / res[0] * (y1 - y0) / res[1]
    vals = h / (z.size * area)
    return DensityGrid(x0, x1, y0, y1, res[0], res[1], vals, h > 0, t)


def run_simulate(cfg):
    n = cfg.n
    reps = int(cfg.extra.get("reps", 1))
    noise = rl.EnsembleSpec(n, "elliptic" if cfg.gamma != 0 else "ginibre", cfg.seed, cfg.t, cfg.gamma)
    specs = [operator_matrix(cfg.operator, n, cfg.seed), noise]
    eigs = np.concatenate(rl.ensemble_eigenvalues(specs, range(cfg.seed, cfg.seed + reps),
                                                  workers=cfg.threads))
    theory, radial = _theory(cfg, eigs)
    report = rl.esd_compare(eigs, theory, rotation_invariant=radial)
    files = [_path(cfg, "eigs.csv"), _path(cfg, "esd.json")]
    report.to_csv(files[0])
    _write_json(files[1], report.to_json())
    _report(files, **report.to_json())
    return report


def _read_csv(path):
    try:
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from exc
    if not rows:
        raise ConfigError(f"{path} is empty")
    header, body = rows[0], rows[1:]
    cols = {}
    for j, name in enumerate(header):
        vals = []
        for r in body:
            try:
                vals.append(float(r[j]) if r[j] != "" else math.nan)
            except (ValueError, IndexError):
                vals = None
                break
        if vals is not None:
            cols[name] = np.array(vals)
    return header, len(body), cols


def run_compare(cfg, path_a, path_b):
    ha, na, ca = _read_csv(path_a)
    hb, nb, cb = _read_csv(path_b)
    if na != nb:
        raise ConfigError(f"row counts differ: {na} vs {nb}")
    common = [c for c in ha if c in ca and c in cb]
    if not common:
        raise ConfigError("no shared numeric columns")
    metrics = {}
    for c in common:
        d = np.abs(ca[c] - cb[c])
        both_nan = np.isnan(ca[c]) & np.isnan(cb[c])
        d = np.where(both_nan, 0.0, d)
        metrics[c] = {"max_abs": float(np.max(d)) if d.size else 0.0,
                      "rms": float(np.sqrt(np.mean(d ** 2))) if d.size else 0.0}
    doc = {"a": path_a, "b": path_b, "rows": na, "columns": metrics}
    files = []
    if cfg.out != "brownlab" or cfg.extra.get("write", False):
        files.append(_write_json(_path(cfg, "compare.json"), doc))
    _report(files, **{"rows": na, "columns": metrics})
    return doc


# ----------------------------------------------------------------------------
# click wiring
# ----------------------------------------------------------------------------

def _common(func):
    opts = [
        click.option("--config", type=click.Path(dir_okay=False), default=None, help="JSON run config."),
        click.option("--out", default=None, help="Output path prefix."),
        click.option("--t", "t", type=float, default=None, help="Circular variance t."),
        click.option("--gamma-re", type=float, default=None),
        click.option("--gamma-im", type=float, default=None),
        click.option("--eps", type=float, default=None, help="Regularization for Phi_eps."),
        click.option("--grid", default=None, help="NX,NY,XMIN,XMAX,YMIN,YMAX"),
        click.option("--n", "n", type=int, default=None, help="Matrix size."),
        click.option("--seed", type=int, default=None),
        click.option("--threads", type=int, default=None),
        click.option("--svg", is_flag=True, default=False, help="Also write an SVG heat map."),
    ]
    for opt in reversed(opts):
        func = opt(func)
    return func


def _guarded(body):
    try:
        return body()
    except ConfigError as exc:
        click.echo(f"config error: {exc}", err=True)
        sys.exit(EXIT_CONFIG)
    except (NumericalFailure, FloatingPointError) as exc:
        click.echo(f"numerical failure: {type(exc).__name__}: {exc}", err=True)
        sys.exit(EXIT_NUMERIC)
    except BrownlabError as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(EXIT_NUMERIC)


@click.group()
def main():
    """Brown measures of x0 + c_t and x0 + g_{t,gamma}."""
    level = os.environ.get("BROWNLAB_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)


def _simple(name, body, help_text):
    @main.command(name, help=help_text)
    @_common
    def cmd(**opts):
        _guarded(lambda: body(build_config(opts)))
        log.info("%s done", name)

    return cmd


_simple("domain", run_domain, "Write the Xi_t mask (and the v_t profile for selfadjoint x0).")
_simple("density", run_density, "Density grid of x0 + c_t with a mass summary.")
_simple("pushforward", run_pushforward, "Transport the density through Phi, or a point cloud if Phi is singular.")
_simple("closed-form", run_closed_form, "Tabulate closed forms for the operator in the config.")
_simple("simulate", run_simulate, "Sample x0 + noise, diagonalize, and score the ESD against theory.")


@main.command("compare", help="Column-wise difference metrics between two CSV files.")
@click.argument("path_a", type=click.Path(dir_okay=False))
@click.argument("path_b", type=click.Path(dir_okay=False))
@_common
def compare_cmd(path_a, path_b, **opts):
    _guarded(lambda: run_compare(build_config(opts), path_a, path_b))


if __name__ == "__main__":
    main()
