"""Command line driver: configuration files, solver runs and file exports.

A configuration is flat ``key = value`` text. The contour is either named
inline (``contour = rose3``) or described in a ``[contour]`` section::

    triangulation = T1
    strategy = bisect
    check_interval = 50

    [contour]
    type = builtin
    name = ellipse
    a = 2
    b = 1

Section types are ``builtin`` (``name`` plus numeric parameters),
``fourier`` (``cos_x``/``sin_x``, ``cos_y``/``sin_y`` and optionally
``cos_z``/``sin_z`` coefficient lists) and ``free_boundary`` (a Fourier arc
in R^3 with ``domain`` and a support plane ``plane_point``,
``plane_normal`` and optional ``plane_radius``).
"""

from __future__ import annotations

import argparse
import logging
import math
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Sequence

import numpy as np

from .geometry import (
    BUILTINS,
    Curve,
    FreeBoundaryContour,
    PlanarSurface,
    builtin,
    fourier_curve,
)
from .mesh import DiskMesh, generate_disk_mesh, save_mesh
from .relax import InvalidFixedPoints, RunState, SolverConfig, Strategy, Termination, run

log = logging.getLogger(__name__)

EXIT_CONVERGED, EXIT_NOT_CONVERGED, EXIT_CONFIG_ERROR = 0, 1, 2
LOG_COLUMNS = ("sweep", "dirichlet", "area", "conformality", "max_disp", "nodes", "insertions")
COORDS = ("x", "y", "z")


class ParseError(ValueError):
    """Malformed configuration text."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line is not None else message)


class ValidationError(ValueError):
    """Well-formed configuration with an invalid value."""

    def __init__(self, message: str, field: str, line: int | None = None):
        self.field = field
        self.line = line
        where = f"line {line}: " if line is not None else ""
        super().__init__(f"{where}{field}: {message}")


@dataclass
class RunConfig:
    """Everything needed to reproduce one run."""

    contour: Curve | FreeBoundaryContour
    contour_spec: dict[str, Any] = field(default_factory=dict)
    triangulation: str = "T1"
    solver: SolverConfig = field(default_factory=SolverConfig)
    out: Path | None = None
    export_mesh: bool = True
    export_boundary: bool = True
    export_log: bool = True
    seed: int | None = None  # reserved; the solver is deterministic


# parsing

_TOP_KEYS = {
    "contour", "triangulation", "strategy", "check_interval", "tau", "tol",
    "max_iter", "max_insertions", "fixed_points", "metric", "out",
    "export_mesh", "export_boundary", "export_log", "seed",
}
_BUILTIN_PARAMS = {"circle": ("radius",), "ellipse": ("a", "b"), "arc_on_plane": ("alpha",)}
_FLAGS = {"true": True, "yes": True, "on": True, "1": True,
          "false": False, "no": False, "off": False, "0": False}


def _split_lines(text: str) -> tuple[dict[str, tuple[str, int]], dict[str, tuple[str, int]] | None]:
    top: dict[str, tuple[str, int]] = {}
    section: dict[str, tuple[str, int]] | None = None
    current = top
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("["):
            if not line.endswith("]"):
                raise ParseError(f"unterminated section header {line!r}", lineno)
            name = line[1:-1].strip().lower()
            if name != "contour":
                raise ParseError(f"unknown section [{name}]", lineno)
            if section is not None:
                raise ParseError("duplicate [contour] section", lineno)
            section = current = {}
            continue
        if "=" not in line:
            raise ParseError(f"expected 'key = value', got {line!r}", lineno)
        key, value = (s.strip() for s in line.split("=", 1))
        key = key.lower()
        if not key:
            raise ParseError("empty key", lineno)
        if key in current:
            raise ParseError(f"duplicate key {key!r}", lineno)
        current[key] = (value, lineno)
    return top, section


def _float(value: str, name: str, line: int | None) -> float:
    try:
        x = float(value)
    except ValueError:
        raise ValidationError(f"expected a number, got {value!r}", name, line) from None
    if not math.isfinite(x):
        raise ValidationError(f"expected a finite number, got {value!r}", name, line)
    return x


def _int(value: str, name: str, line: int | None) -> int:
    try:
        return int(value)
    except ValueError:
        raise ValidationError(f"expected an integer, got {value!r}", name, line) from None


def _floats(value: str, name: str, line: int | None) -> list[float]:
    parts = [p for p in value.replace(",", " ").split()]
    if not parts:
        raise ValidationError("expected a list of numbers", name, line)
    return [_float(p, name, line) for p in parts]


def _flag(value: str, name: str, line: int | None) -> bool:
    try:
        return _FLAGS[value.lower()]
    except KeyError:
        raise ValidationError(f"expected true/false, got {value!r}", name, line) from None


def _fixed_points(value: str, line: int | None) -> list[tuple[int, float]]:
    """``"0:0.0, 16:2.1, 32:4.2"`` -> ``[(0, 0.0), (16, 2.1), (32, 4.2)]``."""
    pairs = []
    for item in value.split(","):
        item = item.strip()
        if ":" not in item:
            raise ValidationError(f"expected 'index:parameter', got {item!r}", "fixed_points", line)
        i, t = item.split(":", 1)
        pairs.append((_int(i.strip(), "fixed_points", line), _float(t.strip(), "fixed_points", line)))
    if len(pairs) != 3:
        raise ValidationError(f"need three fixed points, got {len(pairs)}", "fixed_points", line)
    return pairs


def _coefficient_tables(sec: dict[str, tuple[str, int]], dim: int) -> tuple[list, list]:
    cos_rows, sin_rows, lengths = [], [], {}
    for c in COORDS[:dim]:
        for kind, rows in (("cos", cos_rows), ("sin", sin_rows)):
            key = f"{kind}_{c}"
            if key not in sec:
                raise ValidationError("missing coefficient list", f"contour.{key}", None)
            value, line = sec[key]
            row = _floats(value, f"contour.{key}", line)
            lengths[key] = (len(row), line)
            rows.append(row)
    sizes = {n for n, _ in lengths.values()}
    if len(sizes) != 1:
        key, (n, line) = max(lengths.items(), key=lambda kv: kv[1][1])
        detail = ", ".join(f"{k}={v[0]}" for k, v in lengths.items())
        raise ValidationError(f"coefficient lists differ in length ({detail})", f"contour.{key}", line)
    return cos_rows, sin_rows


def _contour_from_section(sec: dict[str, tuple[str, int]]) -> tuple[Curve | FreeBoundaryContour, dict]:
    kind, kline = sec.get("type", ("builtin", None))
    kind = kind.lower()
    spec: dict[str, Any] = {"type": kind}
    if kind == "builtin":
        if "name" not in sec:
            raise ValidationError("builtin contour needs a name", "contour.name", kline)
        name, nline = sec["name"]
        if name.lower() not in BUILTINS:
            raise ValidationError(f"unknown contour {name!r}; choose from {', '.join(BUILTINS)}", "contour.name", nline)
        params = {}
        allowed = _BUILTIN_PARAMS.get(name.lower(), ())
        for key, (value, line) in sec.items():
            if key in ("type", "name"):
                continue
            if key not in allowed:
                raise ValidationError(f"not a parameter of {name.lower()}", f"contour.{key}", line)
            params[key] = _float(value, f"contour.{key}", line)
        spec.update(name=name.lower(), **params)
        try:
            return builtin(name, **params), spec
        except (ValueError, TypeError) as exc:
            raise ValidationError(str(exc), "contour", nline) from None
    if kind == "fourier":
        dim = 3 if "cos_z" in sec or "sin_z" in sec else 2
        ca, sa = _coefficient_tables(sec, dim)
        spec.update(cos=ca, sin=sa)
        return fourier_curve(ca, sa, name="fourier"), spec
    if kind == "free_boundary":
        ca, sa = _coefficient_tables(sec, 3)
        for key in ("domain", "plane_point", "plane_normal"):
            if key not in sec:
                raise ValidationError("required for a free-boundary contour", f"contour.{key}", kline)
        dom_v, dom_l = sec["domain"]
        domain = _floats(dom_v, "contour.domain", dom_l)
        if len(domain) != 2 or not domain[0] < domain[1]:
            raise ValidationError("expected two increasing numbers", "contour.domain", dom_l)
        vecs = {}
        for key in ("plane_point", "plane_normal"):
            value, line = sec[key]
            vecs[key] = _floats(value, f"contour.{key}", line)
            if len(vecs[key]) != 3:
                raise ValidationError("expected three numbers", f"contour.{key}", line)
        radius = None
        if "plane_radius" in sec:
            value, line = sec["plane_radius"]
            radius = _float(value, "contour.plane_radius", line)
        spec.update(cos=ca, sin=sa, domain=domain, radius=radius, **vecs)
        try:
            arc = fourier_curve(ca, sa, closed=False, domain=tuple(domain), name="arc")
            plane = PlanarSurface(np.array(vecs["plane_point"]), np.array(vecs["plane_normal"]), radius)
            return FreeBoundaryContour(arc, plane), spec
        except ValueError as exc:
            raise ValidationError(str(exc), "contour", kline) from None
    raise ValidationError(f"unknown contour type {kind!r}", "contour.type", kline)


def parse_config(text: str, overrides: dict[str, Any] | None = None) -> RunConfig:
    """Parse and validate configuration text; unspecified fields take solver defaults.

    ``overrides`` maps top-level keys to values that replace the file's;
    an overriding ``contour`` also replaces a ``[contour]`` section.

    Raises
    ------
    ParseError
        On malformed lines, unknown sections or duplicate keys.
    ValidationError
        On unknown keys, unknown contour names, out-of-range numbers or
        inconsistent coefficient tables. The message names the field and,
        where possible, the line.
    """
    top, section = _split_lines(text)
    for key, value in (overrides or {}).items():
        if value is None:
            continue
        top[key] = (str(value), None)
        if key == "contour":
            section = None
    for key, (_, line) in top.items():
        if key not in _TOP_KEYS:
            raise ValidationError("unknown key", key, line)

    if section is not None:
        if "contour" in top:
            raise ValidationError("give either 'contour =' or a [contour] section", "contour", top["contour"][1])
        contour, spec = _contour_from_section(section)
    elif "contour" in top:
        name, line = top["contour"]
        if name.lower() not in BUILTINS:
            raise ValidationError(f"unknown contour {name!r}; choose from {', '.join(BUILTINS)}", "contour", line)
        contour, spec = _contour_from_section({"type": ("builtin", None), "name": top["contour"]})
    else:
        raise ValidationError("no contour given", "contour", None)

    solver_kw: dict[str, Any] = {}
    if "strategy" in top:
        value, line = top["strategy"]
        try:
            solver_kw["strategy"] = Strategy(value.lower())
        except ValueError:
            raise ValidationError(
                f"expected one of {', '.join(s.value for s in Strategy)}, got {value!r}", "strategy", line
            ) from None
    for key, target, conv in (
        ("check_interval", "check_interval", _int),
        ("tau", "defect_threshold", _float),
        ("tol", "tol", _float),
        ("max_iter", "max_iter", _int),
        ("max_insertions", "max_insertions", _int),
    ):
        if key in top:
            value, line = top[key]
            solver_kw[target] = conv(value, key, line)
    if "metric" in top:
        solver_kw["metric"] = top["metric"][0].lower()
    if "fixed_points" in top:
        value, line = top["fixed_points"]
        solver_kw["fixed_points"] = _fixed_points(value, line)

    try:
        solver = SolverConfig(**solver_kw)
    except ValueError as exc:
        # attribute the message to the first key it mentions
        name = next((k for k in ("tol", "check_interval", "defect_threshold", "max_iter", "max_insertions", "metric")
                     if k in str(exc)), "solver")
        key = {"defect_threshold": "tau"}.get(name, name)
        raise ValidationError(str(exc), key, top.get(key, (None, None))[1]) from None

    cfg = RunConfig(contour, spec, solver=solver)
    if "triangulation" in top:
        value, line = top["triangulation"]
        try:
            _triangulation_count(value)
        except ValueError as exc:
            raise ValidationError(str(exc), "triangulation", line) from None
        cfg.triangulation = value
    if "out" in top:
        cfg.out = Path(top["out"][0])
    for key in ("export_mesh", "export_boundary", "export_log"):
        if key in top:
            value, line = top[key]
            setattr(cfg, key, _flag(value, key, line))
    if "seed" in top:
        value, line = top["seed"]
        cfg.seed = _int(value, "seed", line)
    return cfg


def _triangulation_count(preset: str) -> int:
    key = preset.strip().lower()
    if key in ("t1", "t2"):
        return 8 if key == "t1" else 11
    if key.startswith("rings"):
        rest = key[5:].lstrip(":").strip("()")
        try:
            n = int(rest)
        except ValueError:
            raise ValueError(f"unknown triangulation preset {preset!r}") from None
        if n < 1:
            raise ValueError("ring count must be >= 1")
        return n
    raise ValueError(f"unknown triangulation preset {preset!r}")


def load_config(path: str | Path) -> RunConfig:
    return parse_config(Path(path).read_text())


# running and exports

def execute(cfg: RunConfig) -> RunState:
    mesh = generate_disk_mesh(_triangulation_count(cfg.triangulation))
    return run(mesh, cfg.contour, cfg.solver)


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


def _write(path: Path, text: str) -> None:
    try:
        path.write_text(text)
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc.strerror or exc}") from exc


def surface_obj(mesh: DiskMesh, images: np.ndarray) -> str:
    """Wavefront OBJ text of the image surface; planar images get ``z = 0``."""
    pts = images if images.shape[1] == 3 else np.column_stack([images, np.zeros(len(images))])
    lines = ["# image surface: vertices are nodal images, faces the domain triangles"]
    lines += ["v " + " ".join(_fmt(c) for c in p) for p in pts]
    lines += ["f " + " ".join(str(int(v) + 1) for v in tri) for tri in mesh.elements]
    return "\n".join(lines) + "\n"


def boundary_csv(mesh: DiskMesh, images: np.ndarray) -> str:
    header = ",".join(COORDS[: images.shape[1]])
    rows = [",".join(_fmt(c) for c in images[node]) for node in mesh.boundary]
    return "\n".join([header, *rows]) + "\n"


def log_csv(state: RunState) -> str:
    rows = [",".join(LOG_COLUMNS)]
    for r in state.log:
        rows.append(",".join([
            str(r.sweep), _fmt(r.report.dirichlet), _fmt(r.report.area),
            _fmt(r.report.conformality_deficit), _fmt(r.max_disp), str(r.nodes), str(r.insertions),
        ]))
    return "\n".join(rows) + "\n"


def export_surface(
    state: RunState,
    path: str | Path,
    *,
    mesh: bool = True,
    boundary: bool = True,
    log_file: bool = True,
) -> list[Path]:
    """Write ``surface.obj`` and ``mesh.txt``, ``boundary.csv`` and ``log.csv`` into ``path``.

    Numbers use 17 significant digits, so equal states give byte-identical
    files. Returns the written paths.
    """
    out = Path(path)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise OSError(f"cannot create output directory {out}: {exc.strerror or exc}") from exc
    images = state.surface.images
    written = []
    if mesh:
        _write(out / "surface.obj", surface_obj(state.mesh, images))
        save_mesh(state.mesh, out / "mesh.txt")
        written += [out / "surface.obj", out / "mesh.txt"]
    if boundary:
        _write(out / "boundary.csv", boundary_csv(state.mesh, images))
        written.append(out / "boundary.csv")
    if log_file:
        _write(out / "log.csv", log_csv(state))
        written.append(out / "log.csv")
    return written


# command line

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="plateau-fem",
        description="Relax a P1 finite-element minimal surface spanning a contour.",
    )
    p.add_argument("config", nargs="?", help="configuration file; flags override its values")
    p.add_argument("--contour", help=f"builtin contour ({', '.join(BUILTINS)})")
    p.add_argument("--triangulation", help="T1, T2 or rings:n")
    p.add_argument("--strategy", choices=[s.value for s in Strategy])
    p.add_argument("--check-interval", type=int, dest="check_interval")
    p.add_argument("--tau", type=float)
    p.add_argument("--tol", type=float)
    p.add_argument("--max-iter", type=int, dest="max_iter")
    p.add_argument("--out", help="output directory for exports")
    p.add_argument("-v", "--verbose", action="count", default=0)
    return p


_OVERRIDES = ("contour", "triangulation", "strategy", "check_interval", "tau", "tol", "max_iter", "out")


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    try:
        text = Path(args.config).read_text() if args.config else ""
        cfg = parse_config(text, {key: getattr(args, key) for key in _OVERRIDES})
    except (ParseError, ValidationError, OSError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG_ERROR

    try:
        state = execute(cfg)
    except InvalidFixedPoints as exc:
        print(f"config error: fixed_points: {exc}", file=sys.stderr)
        return EXIT_CONFIG_ERROR

    r = state.log[-1].report
    print(
        f"{state.termination.value}: sweeps={state.sweep} dirichlet={r.dirichlet:.12g} "
        f"area={r.area:.12g} conformality={r.conformality_deficit:.6g} "
        f"insertions={state.insertions} nodes={state.mesh.n_nodes}"
    )
    if cfg.out is not None:
        for path in export_surface(
            state, cfg.out, mesh=cfg.export_mesh, boundary=cfg.export_boundary, log_file=cfg.export_log
        ):
            log.info("wrote %s", path)
    return EXIT_CONVERGED if state.termination is Termination.CONVERGED else EXIT_NOT_CONVERGED
