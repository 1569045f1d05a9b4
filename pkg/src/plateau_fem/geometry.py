"""Parametric contours, planar support surfaces and builtin test curves."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

TWO_PI = 2.0 * math.pi

Vector = np.ndarray


class OutOfDomain(ValueError):
    """Parameter outside the domain of an open arc."""


class UnknownName(KeyError):
    """Unknown builtin contour name."""


@dataclass(frozen=True)
class Curve:
    """A parametric curve ``t -> gamma(t)`` in R^d with two derivatives.

    Closed curves are 2*pi-periodic and reduce ``t`` modulo 2*pi. Open arcs
    live on ``domain = (t_a, t_b)`` and reject parameters outside it.
    """

    dim: int
    func: Callable[[float], Vector]
    d1: Callable[[float], Vector]
    d2: Callable[[float], Vector]
    closed: bool = True
    domain: tuple[float, float] = (0.0, TWO_PI)
    name: str = "curve"

    def reduce(self, t: float) -> float:
        if self.closed:
            return t % TWO_PI
        a, b = self.domain
        if t < a - 1e-12 or t > b + 1e-12:
            raise OutOfDomain(f"{self.name}: t={t!r} outside [{a}, {b}]")
        return min(max(t, a), b)

    def eval(self, t: float) -> Vector:
        return self.func(self.reduce(t))

    def eval_d1(self, t: float) -> Vector:
        return self.d1(self.reduce(t))

    def eval_d2(self, t: float) -> Vector:
        return self.d2(self.reduce(t))

    def sample(self, n: int) -> np.ndarray:
        a, b = self.domain
        ts = np.linspace(a, b, n, endpoint=not self.closed)
        return np.array([self.eval(t) for t in ts])


def fourier_curve(
    cos_coeffs: Sequence[Sequence[float]],
    sin_coeffs: Sequence[Sequence[float]],
    *,
    closed: bool = True,
    domain: tuple[float, float] = (0.0, TWO_PI),
    name: str = "fourier",
) -> Curve:
    """Curve given by a truncated Fourier series per coordinate.

    ``gamma_c(t) = sum_k cos_coeffs[c][k] cos(k t) + sin_coeffs[c][k] sin(k t)``
    for ``k = 0..K``; ``sin_coeffs[c][0]`` is ignored. All coordinates must
    use the same ``K``.
    """
    ca = np.asarray(cos_coeffs, dtype=float)
    sa = np.asarray(sin_coeffs, dtype=float)
    if ca.ndim != 2 or ca.shape != sa.shape:
        raise ValueError("cosine and sine tables must be equally shaped 2-D arrays")
    if ca.shape[0] < 2:
        raise ValueError("a contour needs at least two coordinates")
    k = np.arange(ca.shape[1], dtype=float)

    def func(t: float) -> Vector:
        return ca @ np.cos(k * t) + sa @ np.sin(k * t)

    def d1(t: float) -> Vector:
        return (sa * k) @ np.cos(k * t) - (ca * k) @ np.sin(k * t)

    def d2(t: float) -> Vector:
        k2 = k * k
        return -((ca * k2) @ np.cos(k * t) + (sa * k2) @ np.sin(k * t))

    return Curve(ca.shape[0], func, d1, d2, closed=closed, domain=domain, name=name)


def circle(radius: float = 1.0) -> Curve:
    r = float(radius)
    return Curve(
        2,
        lambda t: np.array([r * math.cos(t), r * math.sin(t)]),
        lambda t: np.array([-r * math.sin(t), r * math.cos(t)]),
        lambda t: np.array([-r * math.cos(t), -r * math.sin(t)]),
        name="circle",
    )


def ellipse(a: float, b: float) -> Curve:
    if a <= 0 or b <= 0:
        raise ValueError("ellipse semi-axes must be positive")
    return Curve(
        2,
        lambda t: np.array([a * math.cos(t), b * math.sin(t)]),
        lambda t: np.array([-a * math.sin(t), b * math.cos(t)]),
        lambda t: np.array([-a * math.cos(t), -b * math.sin(t)]),
        name=f"ellipse({a:g},{b:g})",
    )


def rose3() -> Curve:
    """Three-lobed planar curve with polar radius ``1 + 0.5 cos 3t``."""

    def func(t: float) -> Vector:
        r = 1.0 + 0.5 * math.cos(3 * t)
        return np.array([r * math.cos(t), r * math.sin(t)])

    def d1(t: float) -> Vector:
        r = 1.0 + 0.5 * math.cos(3 * t)
        dr = -1.5 * math.sin(3 * t)
        c, s = math.cos(t), math.sin(t)
        return np.array([dr * c - r * s, dr * s + r * c])

    def d2(t: float) -> Vector:
        r = 1.0 + 0.5 * math.cos(3 * t)
        dr = -1.5 * math.sin(3 * t)
        ddr = -4.5 * math.cos(3 * t)
        c, s = math.cos(t), math.sin(t)
        return np.array([ddr * c - 2 * dr * s - r * c, ddr * s + 2 * dr * c - r * s])

    return Curve(2, func, d1, d2, name="rose3")


def curve3d() -> Curve:
    """Space curve over the two-lobed radius ``1 + 0.5 sin 2t`` with height ``0.5 sin 3t``."""

    def func(t: float) -> Vector:
        r = 1.0 + 0.5 * math.sin(2 * t)
        return np.array([r * math.cos(t), r * math.sin(t), 0.5 * math.sin(3 * t)])

    def d1(t: float) -> Vector:
        r = 1.0 + 0.5 * math.sin(2 * t)
        dr = math.cos(2 * t)
        c, s = math.cos(t), math.sin(t)
        return np.array([dr * c - r * s, dr * s + r * c, 1.5 * math.cos(3 * t)])

    def d2(t: float) -> Vector:
        r = 1.0 + 0.5 * math.sin(2 * t)
        dr = math.cos(2 * t)
        ddr = -2.0 * math.sin(2 * t)
        c, s = math.cos(t), math.sin(t)
        return np.array(
            [
                ddr * c - 2 * dr * s - r * c,
                ddr * s + 2 * dr * c - r * s,
                -4.5 * math.sin(3 * t),
            ]
        )

    return Curve(3, func, d1, d2, name="curve3d")


# perimeter walk of [-1,1]^2 starting at (1,0): start point and direction per unit of arc length
_SQUARE_LEGS = (
    ((1.0, 0.0), (0.0, 1.0)),
    ((1.0, 1.0), (-1.0, 0.0)),
    ((-1.0, 1.0), (0.0, -1.0)),
    ((-1.0, -1.0), (1.0, 0.0)),
    ((1.0, -1.0), (0.0, 1.0)),
)
_SQUARE_LEG_START = (0.0, 1.0, 3.0, 5.0, 7.0)

#: Parameters of the square's corners (1,1), (-1,1), (-1,-1), (1,-1).
SQUARE_CORNERS = tuple(math.pi / 4 + k * math.pi / 2 for k in range(4))


def _square_leg(t: float) -> tuple[int, float]:
    s = t * 4.0 / math.pi
    if abs(s - round(s)) < 1e-12:
        s = float(round(s))
    s = min(max(s, 0.0), 8.0)
    leg = 4
    for k in range(4, -1, -1):
        if s >= _SQUARE_LEG_START[k]:
            leg = k
            break
    return leg, s - _SQUARE_LEG_START[leg]


def square() -> Curve:
    """Arc-length-uniform walk around ``[-1,1]^2`` starting at ``(1,0)``.

    Corners sit at ``t = pi/4 + k pi/2`` (see :data:`SQUARE_CORNERS`).
    Derivatives at a corner are the one-sided forward ones.
    """
    speed = 4.0 / math.pi

    def func(t: float) -> Vector:
        leg, ds = _square_leg(t)
        (x0, y0), (dx, dy) = _SQUARE_LEGS[leg]
        return np.array([x0 + ds * dx, y0 + ds * dy])

    def d1(t: float) -> Vector:
        leg, _ = _square_leg(t)
        dx, dy = _SQUARE_LEGS[leg][1]
        return np.array([speed * dx, speed * dy])

    return Curve(2, func, d1, lambda t: np.zeros(2), name="square")


@dataclass(frozen=True)
class PlanarSurface:
    """Plane through ``point`` with unit ``normal``; optionally only the disk of ``radius`` around ``point``."""

    point: np.ndarray
    normal: np.ndarray
    radius: float | None = None

    def __post_init__(self) -> None:
        p = np.asarray(self.point, dtype=float).ravel()
        nrm = np.asarray(self.normal, dtype=float).ravel()
        length = float(np.linalg.norm(nrm))
        if p.shape != (3,) or nrm.shape != (3,):
            raise ValueError("plane point and normal must be 3-vectors")
        if length == 0.0:
            raise ValueError("plane normal must be nonzero")
        if self.radius is not None and not self.radius > 0:
            raise ValueError("bounding radius must be positive")
        object.__setattr__(self, "point", _snap(p))
        object.__setattr__(self, "normal", _snap(nrm / length))

    def signed_distance(self, p: np.ndarray) -> float:
        return float((np.asarray(p, dtype=float) - self.point) @ self.normal)


def _snap(v: np.ndarray) -> np.ndarray:
    # cos(pi/2) and friends come out near 6e-17; keep axis-aligned data exact
    return np.where(np.abs(v) < 1e-15, 0.0, v)


def project_to_plane(surface: PlanarSurface, p: np.ndarray) -> np.ndarray:
    """Orthogonal projection onto the plane, clamped radially into the bounding disk."""
    p = np.asarray(p, dtype=float)
    out = p - ((p - surface.point) @ surface.normal) * surface.normal
    if surface.radius is not None:
        offset = out - surface.point
        dist = float(np.linalg.norm(offset))
        if dist > surface.radius:
            out = surface.point + offset * (surface.radius / dist)
    return out


@dataclass(frozen=True)
class FreeBoundaryContour:
    """An open arc whose two end points lie on a planar support surface."""

    arc: Curve
    surface: PlanarSurface

    def __post_init__(self) -> None:
        if self.arc.closed:
            raise ValueError("free-boundary contour needs an open arc")
        if self.arc.dim != 3:
            raise ValueError("free-boundary contours live in R^3")
        for label, q in (("q1", self.q1), ("q3", self.q3)):
            dist = abs(self.surface.signed_distance(q))
            if dist > 1e-10:
                raise ValueError(f"arc end point {label} is {dist:.3g} off the plane")

    @property
    def dim(self) -> int:
        return 3

    @property
    def t_start(self) -> float:
        return self.arc.domain[0]

    @property
    def t_end(self) -> float:
        return self.arc.domain[1]

    @property
    def q1(self) -> np.ndarray:
        return self.arc.eval(self.t_start)

    @property
    def q3(self) -> np.ndarray:
        return self.arc.eval(self.t_end)


def arc_on_plane(alpha: float = math.pi) -> FreeBoundaryContour:
    """Unit circular arc ``(cos t, 0, sin t)``, ``t in [0, alpha]``, spanning onto the plane through its chord.

    The plane contains the chord and the y axis direction; it is bounded by
    a disk centred on the chord midpoint whose radius is the chord length.
    """
    if not 0.0 < alpha < TWO_PI:
        raise ValueError("arc angle must lie in (0, 2*pi)")
    arc = Curve(
        3,
        lambda t: _snap(np.array([math.cos(t), 0.0, math.sin(t)])),
        lambda t: np.array([-math.sin(t), 0.0, math.cos(t)]),
        lambda t: np.array([-math.cos(t), 0.0, -math.sin(t)]),
        closed=False,
        domain=(0.0, float(alpha)),
        name=f"arc({alpha:g})",
    )
    q1 = np.array([1.0, 0.0, 0.0])
    q3 = _snap(np.array([math.cos(alpha), 0.0, math.sin(alpha)]))
    normal = np.array([math.cos(alpha / 2), 0.0, math.sin(alpha / 2)])
    chord = float(np.linalg.norm(q3 - q1))
    plane = PlanarSurface(0.5 * (q1 + q3), normal, radius=chord)
    return FreeBoundaryContour(arc, plane)


BUILTINS = ("circle", "ellipse", "rose3", "curve3d", "square", "arc_on_plane")


def builtin(name: str, **params: float) -> Curve | FreeBoundaryContour:
    """Look up a builtin contour by name.

    ``ellipse`` takes ``a`` and ``b`` (defaults 2 and 1); ``arc_on_plane``
    takes ``alpha`` (default pi); ``circle`` takes ``radius``.
    """
    key = name.strip().lower()
    if key == "circle":
        return circle(params.get("radius", 1.0))
    if key == "ellipse":
        return ellipse(params.get("a", 2.0), params.get("b", 1.0))
    if key == "rose3":
        return rose3()
    if key == "curve3d":
        return curve3d()
    if key == "square":
        return square()
    if key == "arc_on_plane":
        return arc_on_plane(params.get("alpha", math.pi))
    raise UnknownName(name)


def arc_midpoint(t_i: float, t_next: float, closed: bool = True) -> float:
    """Midpoint of the forward parameter arc from ``t_i`` to ``t_next``."""
    if not closed:
        return 0.5 * (t_i + t_next)
    gap = (t_next - t_i) % TWO_PI
    return (t_i + 0.5 * gap) % TWO_PI


def _segment_distances(points: np.ndarray, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Distance from each point to the nearest of the segments ``a[k] -> b[k]``."""
    ab = b - a
    ap = points[:, None, :] - a[None, :, :]
    denom = np.einsum("kd,kd->k", ab, ab)
    denom = np.where(denom == 0.0, 1.0, denom)
    s = np.clip(np.einsum("nkd,kd->nk", ap, ab) / denom, 0.0, 1.0)
    closest = a[None, :, :] + s[..., None] * ab[None, :, :]
    return np.linalg.norm(points[:, None, :] - closest, axis=-1).min(axis=1)


def hausdorff_to_curve(
    polyline: np.ndarray,
    curve: Curve,
    n_samples: int = 10_000,
    closed: bool = True,
    per_segment: int = 16,
) -> float:
    """Hausdorff distance between a polygon through ``polyline`` and a sampled curve."""
    pts = np.asarray(polyline, dtype=float)
    a = pts
    b = np.roll(pts, -1, axis=0) if closed else pts[1:]
    if not closed:
        a = pts[:-1]
    samples = curve.sample(n_samples)
    d_curve = 0.0
    for chunk in np.array_split(samples, max(1, len(samples) // 500)):
        d_curve = max(d_curve, float(_segment_distances(chunk, a, b).max()))
    s = np.linspace(0.0, 1.0, per_segment, endpoint=False)
    on_poly = (a[:, None, :] + s[None, :, None] * (b - a)[:, None, :]).reshape(-1, pts.shape[1])
    d_poly = 0.0
    for chunk in np.array_split(on_poly, max(1, len(on_poly) // 200)):
        dist = np.linalg.norm(chunk[:, None, :] - samples[None, :, :], axis=-1).min(axis=1)
        d_poly = max(d_poly, float(dist.max()))
    return max(d_curve, d_poly)
