"""Command-line driver: generate instances, run the pipeline, report, refinement studies.

Configuration precedence is: command-line flag > FBMS_SEED (seed only) >
config file > built-in default.  The config file is flat ``key = value`` text
in ``[run]`` and ``[solver]`` sections.
"""
from __future__ import annotations

import argparse
import configparser
import csv
import dataclasses
import json
import logging
import os
import platform
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from . import body as bodymod
from .errors import BadConfig, FBLabError, MissingArtifacts
from .fbms import SolverConfig, relax_cmc, relax_minimal
from .generate import disk_rings, orthogonal_cap_geometry, rings_for_vertices, rotation_x, spherical_cap_mesh
from .mesh import area, boundary_length, build_mesh
from .offio import read_off, write_off
from .spectral import solve_spectrum, assemble_index_form
from .verify import (
    check_corollary1_hypotheses,
    check_corollary2,
    check_corollary3,
    check_theorem1,
    check_theorem2,
)

log = logging.getLogger("fblab")

CHECKS = ("theorem1", "theorem2", "corollary1", "corollary2", "corollary3")
NEEDS_CONVEXITY = {"theorem1", "theorem2", "corollary1"}


@dataclass
class RunConfig:
    body: str = "ball:1"
    surface: str = "equatorial-disk"
    resolution: int = 10_000
    checks: tuple = ("theorem1", "corollary2", "corollary3")
    out: str = "fbms_out"
    seed: int = 42
    perturb: float = 1e-3
    refine: int = 0
    jobs: int = 1
    solver: SolverConfig = field(default_factory=SolverConfig)

    def __post_init__(self):
        if self.resolution < 50:
            raise BadConfig("resolution must be at least 50 vertices")
        bad = [c for c in self.checks if c not in CHECKS]
        if bad:
            raise BadConfig(f"unknown checks {bad}; choose from {CHECKS}")
        if self.perturb < 0 or self.refine < 0 or self.jobs < 1:
            raise BadConfig("perturb and refine must be >= 0, jobs >= 1")

    def to_ini(self):
        cp = configparser.ConfigParser()
        cp["run"] = {k: (",".join(v) if isinstance(v, tuple) else str(v))
                     for k, v in dataclasses.asdict(self).items() if k != "solver"}
        # the solver seed follows the run seed
        cp["solver"] = {k: str(v) for k, v in dataclasses.asdict(self.solver).items() if k != "seed"}
        lines = []
        for sec in cp.sections():
            lines.append(f"[{sec}]")
            lines += [f"{k} = {cp[sec][k]}" for k in sorted(cp[sec])]
            lines.append("")
        return "\n".join(lines)


RUN_KEYS = {"body": str, "surface": str, "resolution": int, "checks": str, "out": str,
            "seed": int, "perturb": float, "refine": int, "jobs": int}
SOLVER_KEYS = {f.name: f.type for f in dataclasses.fields(SolverConfig) if f.name != "seed"}


def _coerce(kind, text):
    if kind in ("float | None", "float|None"):
        return None if text in ("", "none", "None") else float(text)
    return {"int": int, "float": float, "str": str}.get(kind, kind if callable(kind) else str)(text)


def load_config(path=None, overrides=None, env=None) -> RunConfig:
    """Merge defaults, an optional config file, FBMS_SEED and explicit overrides."""
    run, solver = {}, {}
    if path is not None:
        cp = configparser.ConfigParser()
        if not cp.read(path):
            raise BadConfig(f"cannot read config file {path}")
        for sec in cp.sections():
            if sec not in ("run", "solver"):
                raise BadConfig(f"unknown config section [{sec}]")
        for k, v in cp["run"].items() if cp.has_section("run") else []:
            if k not in RUN_KEYS:
                raise BadConfig(f"unknown [run] key {k!r}")
            run[k] = RUN_KEYS[k](v)
        for k, v in cp["solver"].items() if cp.has_section("solver") else []:
            if k not in SOLVER_KEYS:
                raise BadConfig(f"unknown [solver] key {k!r}")
            solver[k] = _coerce(SOLVER_KEYS[k], v)
    env = os.environ if env is None else env
    if env.get("FBMS_SEED"):
        run["seed"] = int(env["FBMS_SEED"])
    for k, v in (overrides or {}).items():
        if v is None:
            continue
        if k in SOLVER_KEYS:
            solver[k] = v
        else:
            run[k] = v
    if isinstance(run.get("checks"), str):
        run["checks"] = tuple(c.strip() for c in run["checks"].split(",") if c.strip())
    try:
        scfg = SolverConfig(**solver)
        if "seed" in run:
            scfg.seed = run["seed"]
        return RunConfig(**run, solver=scfg)
    except (TypeError, ValueError) as exc:
        raise BadConfig(str(exc)) from exc


# -- generation --------------------------------------------------------------

def _parse_surface(spec):
    kind, _, arg = spec.partition(":")
    return kind, arg


def _radial_extent(body, directions):
    """Distance from the body centre to ∂Ω along each unit direction (bisection)."""
    c = np.asarray(body.center, float)
    lo = np.zeros(len(directions))
    hi = np.full(len(directions), 2 * body.bounding_radius)
    for _ in range(80):
        mid = 0.5 * (lo + hi)
        inside = body.psi(c + mid[:, None] * directions) < 0
        lo = np.where(inside, mid, lo)
        hi = np.where(inside, hi, mid)
    return 0.5 * (lo + hi)


def planar_disk_in_body(n_rings, body, angle=0.0):
    """Concentric-ring disk in a plane through the body centre, stretched radially to ∂Ω."""
    v, t = disk_rings(n_rings)
    R = rotation_x(angle)
    x = v @ R.T
    s = np.linalg.norm(x, axis=1)
    u = np.zeros_like(x)
    nz = s > 0
    u[nz] = x[nz] / s[nz, None]
    ext = np.ones(len(x))
    ext[nz] = _radial_extent(body, u[nz])
    y = np.asarray(body.center, float) + (s * ext)[:, None] * u
    mesh = build_mesh(y, t)
    y = np.array(mesh.vertices)
    bv = mesh.boundary_vertices
    y[bv] = bodymod.project_to_boundary(body, y[bv])
    return mesh.with_vertices(y)


def generate(config: RunConfig):
    """Initial mesh and body for a run configuration."""
    try:
        body = bodymod.parse_body(config.body)
    except ValueError as exc:
        raise BadConfig(str(exc)) from exc
    kind, arg = _parse_surface(config.surface)
    n = rings_for_vertices(config.resolution)
    try:
        if kind == "equatorial-disk":
            mesh = planar_disk_in_body(n, body)
        elif kind == "tilted-disk":
            mesh = planar_disk_in_body(n, body, np.radians(float(arg or 30)))
        elif kind == "spherical-cap":
            if body.kind != "ball":
                raise BadConfig("spherical caps are generated for ball bodies only")
            mesh = spherical_cap_mesh(n, float(arg or 1.0), body.params[0])
            x = np.array(mesh.vertices) + np.asarray(body.center)
            bv = mesh.boundary_vertices
            x[bv] = bodymod.project_to_boundary(body, x[bv])
            mesh = mesh.with_vertices(x)
        elif kind == "mesh-file":
            mesh = read_off(arg)
        else:
            raise BadConfig(f"unknown surface {config.surface!r}")
    except ValueError as exc:
        raise BadConfig(str(exc)) from exc
    return mesh, body


def perturb_interior(mesh, amplitude, seed):
    """Smooth seeded normal perturbation of the interior.

    The bump is a random cubic polynomial in the vertex coordinates times a
    weight vanishing on the boundary, scaled to ``amplitude``·√A at its peak.
    """
    if amplitude == 0:
        return mesh
    rng = np.random.default_rng(seed)
    x = mesh.vertices
    c = x.mean(0)
    u = (x - c) / np.sqrt(area(mesh))
    powers = [(i, j, k) for i in range(4) for j in range(4) for k in range(4) if i + j + k <= 3]
    coef = rng.standard_normal(len(powers))
    poly = sum(a * u[:, 0] ** i * u[:, 1] ** j * u[:, 2] ** k for a, (i, j, k) in zip(coef, powers))
    r2 = np.sum((x - c) ** 2, 1)
    bump = poly * (1 - r2 / r2.max())
    bump[mesh.boundary_vertices] = 0
    bump *= amplitude * np.sqrt(area(mesh)) / np.abs(bump).max()
    return mesh.with_vertices(x + bump[:, None] * mesh.vertex_normals)


# -- pipeline ----------------------------------------------------------------

def solve(config, mesh, body):
    kind, _ = _parse_surface(config.surface)
    start = perturb_interior(mesh, config.perturb, config.seed)
    if kind == "spherical-cap":
        from .fbms import EnclosedVolume
        cfg = dataclasses.replace(config.solver)
        if cfg.volume_target is None:
            cfg.volume_target = EnclosedVolume(mesh, body)(mesh)
        return relax_cmc(start, body, cfg)
    return relax_minimal(start, body, config.solver)


def certify(config, result, body):
    certs = {}
    for name in config.checks:
        if name == "theorem1":
            certs[name] = check_theorem1(result, body)
        elif name == "theorem2":
            certs[name] = check_theorem2(result, body)
        elif name == "corollary2":
            certs[name] = check_corollary2(result)
        elif name == "corollary3":
            certs[name] = check_corollary3(result, body)
        elif name == "corollary1":
            certs[name] = check_corollary1_hypotheses(body)
    return certs


def _verdict(c):
    return c.passed if hasattr(c, "passed") else True


def run_pipeline(config: RunConfig, write=True):
    """Generate, relax, certify; writes artifacts and returns the certificates."""
    t0 = time.time()
    body = bodymod.parse_body(config.body)
    if NEEDS_CONVEXITY & set(config.checks):
        # abort before any solving if the body hypothesis fails
        bodymod.require_convexity_at_least(body, 1.0, sample_count=2000)
    mesh, body = generate(config)
    result = solve(config, mesh, body)
    t1 = time.time()
    certs = certify(config, result, body)
    t2 = time.time()
    if write:
        out = Path(config.out)
        out.mkdir(parents=True, exist_ok=True)
        write_off(out / "initial.off", mesh)
        write_off(out / "surface.off", result.mesh)
        (out / "solve_log.jsonl").write_text(result.log_lines())
        (out / "config.ini").write_text(config.to_ini())
        for name, c in certs.items():
            text = c.to_json() if hasattr(c, "to_json") else json.dumps(c, sort_keys=True, indent=2) + "\n"
            (out / f"certificate_{name}.json").write_text(text)
        pair = assemble_index_form(result.mesh, body)
        spec = solve_spectrum(pair, count=12)
        with open(out / "spectrum.csv", "w", newline="") as fh:
            wr = csv.writer(fh)
            wr.writerow(["index", "eigenvalue"])
            for k, lam in enumerate(spec.eigenvalues):
                wr.writerow([k + 1, repr(float(lam))])
        meta = {"started": time.strftime("%Y-%m-%dT%H:%M:%S", time.localtime(t0)),
                "solve_seconds": t1 - t0, "certify_seconds": t2 - t1,
                "iterations": result.iterations, "fblab": __version__,
                "python": platform.python_version(), "numpy": np.__version__}
        (out / "metadata.json").write_text(json.dumps(meta, sort_keys=True, indent=2) + "\n")
    return result, certs


def _reference(config, body):
    """Exact (L, A) of the continuum solution when known, else None."""
    kind, arg = _parse_surface(config.surface)
    if body.kind != "ball":
        return None
    R = body.params[0]
    if kind in ("equatorial-disk", "tilted-disk"):
        return 2 * np.pi * R, np.pi * R * R
    if kind == "spherical-cap":
        g = orthogonal_cap_geometry(float(arg or 1.0), R)
        return g["boundary_length"], g["area"]
    return None


def _study_level(args):
    config, resolution = args
    cfg = dataclasses.replace(config, resolution=resolution, checks=(), refine=0)
    mesh, body = generate(cfg)
    res = solve(cfg, mesh, body)
    # CMC surfaces are judged by |H − H̄|, minimal ones by max|H|·scale
    cmc = _parse_surface(cfg.surface)[0] == "spherical-cap"
    key = "constant_h_residual" if cmc else "mean_curvature_residual"
    return {"resolution": resolution, "vertices": res.mesh.n_vertices,
            "h": float(np.mean(res.mesh.boundary_edge_lengths)),
            "L": boundary_length(res.mesh), "A": area(res.mesh),
            "curvature_residual": res.residuals[key],
            "free_boundary_angle_residual": res.residuals["free_boundary_angle_residual"]}


def refinement_study(config: RunConfig, levels: int):
    """Solve at ``levels`` resolutions (vertex count ×4 per level) and tabulate errors."""
    body = bodymod.parse_body(config.body)
    res = [max(50, int(config.resolution / 4 ** (levels - 1 - k))) for k in range(levels)]
    tasks = [(config, r) for r in res]
    if config.jobs > 1:
        with ProcessPoolExecutor(config.jobs) as ex:
            rows = list(ex.map(_study_level, tasks))
    else:
        rows = [_study_level(t) for t in tasks]
    ref = _reference(config, body)
    if ref is None:
        ref = (rows[-1]["L"], rows[-1]["A"])
    for row in rows:
        row["length_error"] = abs(row["L"] - ref[0])
        row["area_error"] = abs(row["A"] - ref[1])
    return rows


def write_study(rows, out):
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    keys = list(rows[0].keys())
    with open(out / "refinement.csv", "w", newline="") as fh:
        wr = csv.DictWriter(fh, fieldnames=keys)
        wr.writeheader()
        for r in rows:
            wr.writerow({k: repr(v) if isinstance(v, float) else v for k, v in r.items()})


def format_study(rows):
    head = f"{'vertices':>9} {'h':>10} {'|L-L*|':>11} {'|A-A*|':>11} {'H res':>10} {'fb angle':>10}"
    lines = [head]
    for r in rows:
        lines.append(f"{r['vertices']:>9d} {r['h']:>10.4g} {r['length_error']:>11.4g} {r['area_error']:>11.4g} "
                     f"{r['curvature_residual']:>10.3g} {r['free_boundary_angle_residual']:>10.3g}")
    return "\n".join(lines)


def monotone(rows, key):
    vals = [r[key] for r in rows]
    return all(b <= a for a, b in zip(vals, vals[1:]))


# -- report ------------------------------------------------------------------

def report(directory):
    """Table of all certificates under ``directory``; returns (text, any_fail)."""
    files = sorted(Path(directory).rglob("certificate_*.json"))
    if not files:
        raise MissingArtifacts(f"no certificates found under {directory}")
    head = f"   {'instance':<28} {'L(dS)':>9} {'2pi(g+r)':>9} {'index':>5} {'sigma1':>8} {'A':>8} {'bounds':<24} verdicts"
    lines, any_fail = [head], False
    for f in files:
        d = json.loads(f.read_text())
        if "theorem" not in d:
            continue
        q = d.get("quantities", {})
        g, r = q.get("g"), q.get("r")
        bound = 2 * np.pi * (g + r) if g is not None else float("nan")
        fails = sorted(k for k, v in d.get("verdicts", {}).items() if v != "PASS")
        any_fail |= bool(fails)
        mark = "!!" if fails else "  "
        bounds = ",".join(f"{k}={v:.4g}" for k, v in sorted(d.get("bounds", {}).items()) if k != "coarse_length")
        verdict = "FAIL: " + ",".join(fails) if fails else "PASS"
        inst = f"{f.parent.name}/{d['theorem']}"
        lines.append(f"{mark} {inst:<28} {q.get('L', float('nan')):>9.5f} {bound:>9.5f} "
                     f"{str(q.get('index', '-')):>5} {q.get('sigma1', float('nan')):>8.4f} "
                     f"{q.get('A', float('nan')):>8.5f} {bounds:<24} {verdict}")
    return "\n".join(lines), any_fail


# -- argument parsing --------------------------------------------------------

def _add_run_flags(p):
    p.add_argument("--config", help="key=value config file with [run] and [solver] sections")
    p.add_argument("--body", help="ball:R | ellipsoid:a,b,c | perturbed:R,eps,l")
    p.add_argument("--surface", help="equatorial-disk | tilted-disk:DEG | spherical-cap:RHO | mesh-file:PATH")
    p.add_argument("--resolution", type=int, help="target vertex count (>= 50)")
    p.add_argument("--check", dest="checks", help=f"comma-separated subset of {','.join(CHECKS)}")
    p.add_argument("--out", help="output directory")
    p.add_argument("--seed", type=int, help="random seed (default 42; FBMS_SEED overrides the file)")
    p.add_argument("--perturb", type=float, help="relative amplitude of the initial interior perturbation")
    p.add_argument("--refine", type=int, help="number of refinement levels to study (0 = off)")
    p.add_argument("--jobs", type=int, help="parallel worker processes for refinement studies")
    p.add_argument("--max-iter", dest="max_iter", type=int)
    p.add_argument("--grad-tol", dest="grad_tol", type=float)
    p.add_argument("--projection-tol", dest="projection_tol", type=float)
    p.add_argument("--volume-target", dest="volume_target", type=float)


def build_parser():
    ap = argparse.ArgumentParser(prog="fblab", description=__doc__.splitlines()[0])
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="verb", required=True)
    for verb, helptext in (("generate", "write the initial mesh"), ("run", "run the full pipeline"),
                           ("refine-study", "residual-vs-h table over refinement levels")):
        _add_run_flags(sub.add_parser(verb, help=helptext))
    rp = sub.add_parser("report", help="summarize certificates in a directory")
    rp.add_argument("directory")
    return ap


def _overrides(ns):
    keys = list(RUN_KEYS) + list(SOLVER_KEYS)
    return {k: getattr(ns, k) for k in keys if hasattr(ns, k)}


def main(argv=None):
    ns = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if ns.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        if ns.verb == "report":
            text, fail = report(ns.directory)
            print(text)
            return 1 if fail else 0
        config = load_config(ns.config, _overrides(ns))
        if ns.verb == "generate":
            mesh, body = generate(config)
            out = Path(config.out)
            out.mkdir(parents=True, exist_ok=True)
            write_off(out / "initial.off", mesh)
            (out / "body.json").write_text(json.dumps(body.describe(), sort_keys=True) + "\n")
            print(f"wrote {out / 'initial.off'}: {mesh.n_vertices} vertices, g={mesh.genus}, r={mesh.r}")
            return 0
        if ns.verb == "refine-study" or config.refine > 0:
            levels = config.refine or 3
            rows = refinement_study(config, levels)
            write_study(rows, config.out)
            print(format_study(rows))
            ok = monotone(rows, "length_error") and monotone(rows, "area_error")
            print("monotone decrease:", "PASS" if ok else "FAIL")
            if ns.verb == "refine-study":
                return 0 if ok else 1
            if not ok:
                return 1
        result, certs = run_pipeline(config)
        status = 0
        for name, c in certs.items():
            ok = _verdict(c)
            status |= 0 if ok else 1
            print(f"{name}: {'PASS' if ok else 'FAIL'}")
        return status
    except FBLabError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
