"""Bundled solver fixtures shared by the test modules.

Runs are cached per process so the acceptance suite and the property
suites reuse the same converged states.
"""

from __future__ import annotations

import math
from functools import lru_cache

from plateau_fem import SolverConfig, builtin, generate_disk_mesh, run
from plateau_fem.relax import RunState, Strategy

TWO_THIRDS_PI = 2.0 * math.pi / 3.0

# rose3 with the fixed images moved 0.2 off the lobe tips: the symmetric
# tip placement relaxes to a nearly uniform boundary and flags nothing
ROSE3_FIXED = ((0, 0.2), (16, TWO_THIRDS_PI + 0.2), (32, 2 * TWO_THIRDS_PI + 0.2))

FIXTURES = {
    "circle": (lambda: builtin("circle"), None),
    "ellipse": (lambda: builtin("ellipse", a=2.0, b=1.0), None),
    "rose3": (lambda: builtin("rose3"), ROSE3_FIXED),
    "curve3d": (lambda: builtin("curve3d"), None),
    "square": (lambda: builtin("square"), None),
    "arc_on_plane": (lambda: builtin("arc_on_plane", alpha=math.pi), None),
}
STRATEGIES = ("none", "bisect", "regular")


@lru_cache(maxsize=None)
def mesh(preset: str | int):
    return generate_disk_mesh(preset)


@lru_cache(maxsize=None)
def fixture_run(name: str, strategy: str = "none", preset: str | int = "T1", check_interval: int = 50) -> RunState:
    make, fixed = FIXTURES[name]
    cfg = SolverConfig(strategy=Strategy(strategy), fixed_points=fixed, check_interval=check_interval)
    return run(mesh(preset), make(), cfg)
