"""Pipe-skeleton geometry: points, carriers, weighted line measures, junctions.

Everything the velocity construction hangs off is a vector-valued measure
supported on line segments and rays.  Coordinates and fluxes are kept as
exact rationals (`fractions.Fraction`) so that junction balance is an
identity, not an approximation; floats only appear in the cached arrays
used by the numerical evaluators.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Sequence

import numpy as np

F = Fraction
PointF = tuple[Fraction, Fraction, Fraction]

QUARTER_ANGLES = (0.0, 0.5 * math.pi, math.pi, 1.5 * math.pi)
J_SET = (-1, 1)


class GeometryError(ValueError):
    """A geometric precondition failed (invalid angle, invalid params...)."""


# ---------------------------------------------------------------------------
# exact vector helpers
# ---------------------------------------------------------------------------

def vec(x, y, z) -> PointF:
    return (F(x), F(y), F(z))


def vsub(a: PointF, b: PointF) -> PointF:
    return (a[0] - b[0], a[1] - b[1], a[2] - b[2])


def vadd(a: PointF, b: PointF) -> PointF:
    return (a[0] + b[0], a[1] + b[1], a[2] + b[2])


def vscale(c: Fraction, a: PointF) -> PointF:
    return (c * a[0], c * a[1], c * a[2])


def as_float(p: PointF) -> np.ndarray:
    return np.array([float(p[0]), float(p[1]), float(p[2])])


def _quarter_turns(theta: float) -> int:
    k = theta / (0.5 * math.pi)
    k_round = round(k)
    if abs(k - k_round) > 1e-12:
        raise GeometryError(f"invalid-angle: {theta} is not a multiple of pi/2")
    return k_round % 4


def rotate_point(p: PointF, theta: float) -> PointF:
    """Counterclockwise rotation in the xy-plane by a quarter-turn multiple."""
    k = _quarter_turns(theta)
    x, y, z = p
    if k == 0:
        return (x, y, z)
    if k == 1:
        return (-y, x, z)
    if k == 2:
        return (-x, -y, z)
    return (y, -x, z)


# ---------------------------------------------------------------------------
# carriers and measures
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Carrier:
    """A line segment or ray.  For rays, `b` fixes the direction only."""

    kind: str  # "segment" | "ray"
    a: PointF
    b: PointF
    name: str = ""

    def __post_init__(self):
        if self.kind not in ("segment", "ray"):
            raise GeometryError(f"bad carrier kind {self.kind!r}")
        if self.a == self.b:
            raise GeometryError(f"degenerate carrier {self.name!r}: a == b")

    @property
    def direction(self) -> PointF:
        return vsub(self.b, self.a)

    def length(self) -> float:
        if self.kind == "ray":
            return math.inf
        return float(np.linalg.norm(as_float(self.direction)))

    def unit(self) -> np.ndarray:
        d = as_float(self.direction)
        return d / np.linalg.norm(d)

    def rotated(self, theta: float, name: str | None = None) -> "Carrier":
        return Carrier(self.kind, rotate_point(self.a, theta), rotate_point(self.b, theta),
                       name if name is not None else self.name)

    def clipped(self, zmin: float = -1.0, zmax: float = 1.0) -> "Carrier":
        """Clip a ray to the slab zmin <= z <= zmax; segments pass through.

        Mollified fields are only ever evaluated well inside the slab, at
        distance > epsilon from the clip planes, so the removed tail is
        invisible to every kernel.
        """
        if self.kind == "segment":
            return self
        a = as_float(self.a)
        d = self.unit()
        if abs(d[2]) < 1e-15:
            raise GeometryError(f"cannot clip horizontal ray {self.name!r} by z")
        t_end = ((zmax if d[2] > 0 else zmin) - a[2]) / d[2]
        if t_end <= 0:
            raise GeometryError(f"ray {self.name!r} starts outside the clip slab")
        b = a + t_end * d
        bf = (F(b[0]).limit_denominator(10**12), F(b[1]).limit_denominator(10**12),
              F(b[2]).limit_denominator(10**12))
        return Carrier("segment", self.a, bf, self.name)


@dataclass(frozen=True)
class WeightedCarrier:
    """Carrier plus a weight vector parallel to it.

    The weight is stored as a signed rational flux along the carrier
    direction: weight = flux * (b - a)/|b - a|.  This keeps |weight| exact
    even when the unit vector is irrational (the diagonal feeders).
    """

    carrier: Carrier
    flux: Fraction

    def __post_init__(self):
        if self.flux == 0:
            raise GeometryError(f"zero weight on carrier {self.carrier.name!r}")

    @property
    def weight(self) -> np.ndarray:
        return float(self.flux) * self.carrier.unit()

    @property
    def magnitude(self) -> Fraction:
        return abs(self.flux)

    def rotated(self, theta: float, name: str | None = None) -> "WeightedCarrier":
        return WeightedCarrier(self.carrier.rotated(theta, name), self.flux)


def rotate(obj, theta: float):
    """Rotate a point, a weight vector, or a carrier by theta in {0, pi/2, pi, 3pi/2}."""
    if isinstance(obj, Carrier):
        return obj.rotated(theta)
    if isinstance(obj, WeightedCarrier):
        return obj.rotated(theta)
    if isinstance(obj, tuple) and len(obj) == 3:
        return rotate_point(obj, theta)
    arr = np.asarray(obj, dtype=float)
    if arr.shape == (3,):
        k = _quarter_turns(theta)
        x, y, z = arr
        return [np.array([x, y, z]), np.array([-y, x, z]),
                np.array([-x, -y, z]), np.array([y, -x, z])][k]
    raise GeometryError(f"cannot rotate object of type {type(obj)!r}")


@dataclass
class VectorMeasure:
    """A finite sum of weighted line carriers (a vector-valued Radon measure)."""

    carriers: list[WeightedCarrier]
    name: str = ""

    def __iter__(self):
        return iter(self.carriers)

    def __len__(self):
        return len(self.carriers)

    def __add__(self, other: "VectorMeasure") -> "VectorMeasure":
        return VectorMeasure(self.carriers + other.carriers,
                             f"{self.name}+{other.name}")

    def clipped(self, zmin: float = -1.0, zmax: float = 1.0) -> "VectorMeasure":
        return VectorMeasure(
            [WeightedCarrier(wc.carrier.clipped(zmin, zmax), wc.flux) for wc in self],
            self.name)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["kind", "ax", "ay", "az", "bx", "by", "bz", "wx", "wy", "wz"])
            for wc in self.carriers:
                c = wc.carrier
                w.writerow([c.kind,
                            *(f"{float(v):.17g}" for v in c.a),
                            *(f"{float(v):.17g}" for v in c.b),
                            *(f"{v:.17g}" for v in wc.weight)])


# ---------------------------------------------------------------------------
# Kirchhoff junction verification
# ---------------------------------------------------------------------------

@dataclass
class JunctionRecord:
    point: PointF
    residual: Fraction
    terms: list[tuple[str, Fraction]]
    is_port: bool  # a single undecomposed ray carrying flux to infinity

    @property
    def balanced(self) -> bool:
        return self.is_port or self.residual == 0


@dataclass
class JunctionReport:
    junctions: list[JunctionRecord]

    @property
    def balanced(self) -> bool:
        return all(j.balanced for j in self.junctions)

    @property
    def max_residual(self) -> Fraction:
        interior = [abs(j.residual) for j in self.junctions if not j.is_port]
        return max(interior, default=F(0))

    def failures(self) -> list[JunctionRecord]:
        return [j for j in self.junctions if not j.balanced]


def verify_kirchhoff(measure: VectorMeasure) -> JunctionReport:
    """Decompose segments into rays and check exact flux balance at every
    ray start ("Kirchhoff junction").

    Each carrier contributes signed flux `+flux` at its start point and,
    for segments, `-flux` at its end point.  A point touched by exactly one
    original ray is a flux port to infinity and is reported, not failed.
    """
    terms: dict[PointF, list[tuple[str, Fraction, bool]]] = {}

    def push(point: PointF, name: str, s: Fraction, from_ray: bool):
        terms.setdefault(point, []).append((name, s, from_ray))

    for wc in measure:
        c = wc.carrier
        if c.kind == "ray":
            push(c.a, c.name, wc.flux, True)
        else:
            push(c.a, c.name, wc.flux, False)
            push(c.b, c.name, -wc.flux, False)

    records = []
    for point, items in sorted(terms.items()):
        residual = sum(s for _, s, _ in items)
        is_port = len(items) == 1 and items[0][2]
        records.append(JunctionRecord(point, residual,
                                      [(n, s) for n, s, _ in items], is_port))
    return JunctionReport(records)


# ---------------------------------------------------------------------------
# distances
# ---------------------------------------------------------------------------

def carrier_arrays(carriers: Sequence[Carrier], zclip: float = 1.0):
    """Pack carriers (rays clipped) into arrays: starts (m,3), unit dirs (m,3), lengths (m,)."""
    a = np.empty((len(carriers), 3))
    u = np.empty((len(carriers), 3))
    L = np.empty(len(carriers))
    for i, c in enumerate(carriers):
        cc = c.clipped(-zclip, zclip) if c.kind == "ray" else c
        a[i] = as_float(cc.a)
        d = as_float(cc.b) - a[i]
        L[i] = np.linalg.norm(d)
        u[i] = d / L[i]
    return a, u, L


def distance_to_set(x, carriers: Sequence[Carrier], zclip: float = 1.0):
    """Euclidean distance from point(s) x to the union of carriers.

    Returns +inf for an empty carrier list; a scalar for a single point.
    """
    arr = np.asarray(x, dtype=float)
    single = arr.ndim == 1
    pts = np.atleast_2d(arr)
    if len(carriers) == 0:
        d = np.full(pts.shape[0], np.inf)
    else:
        from . import kernels
        a, u, L = carrier_arrays(carriers, zclip)
        d = kernels.segment_distances(pts, a, u, L).min(axis=1)
    return float(d[0]) if single else d


def _segseg_distance(p1, q1, p2, q2) -> float:
    """Minimum distance between segments [p1,q1] and [p2,q2] (floats)."""
    d1 = q1 - p1
    d2 = q2 - p2
    r = p1 - p2
    a = d1 @ d1
    e = d2 @ d2
    f = d2 @ r
    c = d1 @ r
    b = d1 @ d2
    denom = a * e - b * b
    s = np.clip((b * f - c * e) / denom, 0.0, 1.0) if denom > 1e-30 else 0.0
    t = (b * s + f) / e
    if t < 0.0:
        t = 0.0
        s = np.clip(-c / a, 0.0, 1.0)
    elif t > 1.0:
        t = 1.0
        s = np.clip((b - c) / a, 0.0, 1.0)
    closest1 = p1 + s * d1
    closest2 = p2 + t * d2
    return float(np.linalg.norm(closest1 - closest2))


def carrier_pair_distance(c1: Carrier, c2: Carrier, zclip: float = 2.0) -> float:
    c1 = c1.clipped(-zclip, zclip) if c1.kind == "ray" else c1
    c2 = c2.clipped(-zclip, zclip) if c2.kind == "ray" else c2
    return _segseg_distance(as_float(c1.a), as_float(c1.b), as_float(c2.a), as_float(c2.b))


# ---------------------------------------------------------------------------
# geometry parameters
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class GeometryParams:
    """Construction parameters, all in units of the plate gap.

    gamma: radius of the velocity pipes; lambda_: radius of the scalar
    pipes; delta: offset between up- and down-pipelines; h: height of the
    boundary-layer scalar skeleton.
    """

    gamma: Fraction
    lambda_: Fraction
    delta: Fraction
    h: Fraction
    name: str = "custom"

    @staticmethod
    def paper() -> "GeometryParams":
        return GeometryParams(F(1, 500), F(1, 100), F(1, 20), F(1, 16), "paper")

    @staticmethod
    def desk() -> "GeometryParams":
        # Coarsest round values satisfying every predicate below; see the
        # validate() docstring for why the radii cannot be much larger.
        return GeometryParams(F(1, 320), F(1, 80), F(1, 22), F(3, 64), "desk")

    @staticmethod
    def preset(name: str) -> "GeometryParams":
        if name == "paper":
            return GeometryParams.paper()
        if name == "desk":
            return GeometryParams.desk()
        raise GeometryError(f"unknown preset {name!r}")

    def predicate_report(self) -> list[tuple[str, bool, str]]:
        g, lam, d, h = self.gamma, self.lambda_, self.delta, self.h
        checks = [
            ("positive-radii", 0 < g < lam,
             f"need 0 < gamma < lambda, got gamma={g}, lambda={lam}"),
            ("plateau-covers-pipes", lam > 3 * g,
             f"need lambda > 3*gamma so the scalar plateau contains the velocity tubes "
             f"(lambda={lam}, 3*gamma={3 * g})"),
            ("gluing-margin", d + lam + g < F(1, 16),
             f"need delta+lambda+gamma < 1/16 for the half-size copies to match on "
             f"7/32 < z < 9/32 and across the mirror plane (got {d + lam + g})"),
            ("boundary-layer-window", F(1, 32) < h and h + lam + g < F(5, 64),
             f"need [h, h+lambda+gamma] inside (1/32, 5/64), got "
             f"[{h}, {h + lam + g}]"),
            ("horizontal-extent", F(1, 4) + d / 2 + lam + g < F(1, 3),
             f"tubes reach {F(1,4) + d/2 + lam + g} horizontally, must stay inside 1/3"),
        ]
        # pipeline separation: (lambda+gamma)-neighborhoods of S^u and S^d disjoint
        try:
            sk = build_parent_skeletons(self, validate=False)
        except GeometryError as exc:
            checks.append(("skeleton-constructible", False, str(exc)))
            return checks
        best = math.inf
        best_pair = ("", "")
        for cu in sk.S_u:
            for cd in sk.S_d:
                dist = carrier_pair_distance(cu, cd)
                if dist < best:
                    best = dist
                    best_pair = (cu.name, cd.name)
        sep_ok = best >= 2.0 * float(lam + g) * (1 - 1e-12)
        checks.append(
            ("pipeline-separation", sep_ok,
             f"closest S^u/S^d pair {best_pair[0]} vs {best_pair[1]} at distance "
             f"{best:.6g}, need >= 2(lambda+gamma) = {2 * float(lam + g):.6g}"))
        return checks

    def validate(self) -> "GeometryParams":
        """Raise GeometryError naming the first failing predicate.

        The pipe radii cannot be made much coarser than the paper's: the
        plateau condition lambda > 3*gamma, the separation requirement
        delta/sqrt(2) >= 2(lambda+gamma) and the gluing margin
        delta+lambda+gamma < 1/16 jointly force lambda+gamma below about
        1/61, hence gamma below about 1/245.
        """
        for name, ok, detail in self.predicate_report():
            if not ok:
                raise GeometryError(f"geometry-invalid [{name}]: {detail}")
        return self

    # convenience floats
    @property
    def gamma_f(self) -> float:
        return float(self.gamma)

    @property
    def lambda_f(self) -> float:
        return float(self.lambda_)

    @property
    def delta_f(self) -> float:
        return float(self.delta)

    @property
    def h_f(self) -> float:
        return float(self.h)


# ---------------------------------------------------------------------------
# the parent skeleton (Table 1)
# ---------------------------------------------------------------------------

@dataclass
class ParentSkeletons:
    nu_u: VectorMeasure
    nu_d: VectorMeasure
    nu_b: VectorMeasure
    S_u: list[Carrier]
    S_d: list[Carrier]
    S_b: list[Carrier]
    Sb_xi_u: list[Carrier]
    Sb_xi_d: list[Carrier]
    params: GeometryParams

    @property
    def S(self) -> list[Carrier]:
        return self.S_u + self.S_d


def build_parent_skeletons(params: GeometryParams, validate: bool = True) -> ParentSkeletons:
    """Construct the parent measures nu^u, nu^d, nu_b and skeleton sets."""
    if validate:
        params.validate()
    d = params.delta
    h = params.h

    p1 = vec(0, 0, 0)
    p2 = vec(0, 0, F(1, 8))
    p3 = vec(F(1, 4), 0, F(1, 8))
    p4 = vec(F(1, 4), 0, F(1, 4))
    p5 = vec(0, 0, h)
    q6 = (d, d, h)

    def q1(i, j):
        return (d, j * d, F(0))

    def q2(i, j):
        return (d, j * d, F(1, 8) - i * d)

    def q3(i, j):
        return (F(1, 4) + i * d / 2, j * d, F(1, 8) - i * d)

    def q4(i, j):
        return (F(1, 4) + i * d / 2, j * d / 2, F(1, 8) - i * d)

    def q5(i, j):
        return (F(1, 4) + i * d / 2, j * d / 2, F(1, 4))

    ell0 = Carrier("ray", p2, p1, "l0")
    nu_u_carriers = [WeightedCarrier(ell0, F(-1))]  # weight e_z, direction -e_z
    nu_d_carriers: list[WeightedCarrier] = []
    nu_b_carriers = [WeightedCarrier(ell0, F(-1))]

    for k, theta in enumerate(QUARTER_ANGLES):
        tag = f"t{k}"
        ell1 = Carrier("segment", p2, p3, f"l1,{tag}").rotated(theta, f"l1,{tag}")
        ell2 = Carrier("ray", p3, p4, f"l2,{tag}").rotated(theta, f"l2,{tag}")
        nu_u_carriers += [WeightedCarrier(ell1, F(1, 4)), WeightedCarrier(ell2, F(1, 4))]

        ell3 = Carrier("ray", q2(1, 1), q1(0, 1), f"l3,{tag}").rotated(theta, f"l3,{tag}")
        ell4 = Carrier("segment", q2(-1, 1), q2(1, 1), f"l4,{tag}").rotated(theta, f"l4,{tag}")
        nu_d_carriers += [WeightedCarrier(ell3, F(1, 4)), WeightedCarrier(ell4, F(1, 8))]
        for i in J_SET:
            for j in J_SET:
                sub = f"{tag},i{i},j{j}"
                ell5 = Carrier("segment", q2(i, j), q3(i, j), f"l5,{sub}").rotated(theta, f"l5,{sub}")
                ell6 = Carrier("segment", q3(i, j), q4(i, j), f"l6,{sub}").rotated(theta, f"l6,{sub}")
                ell7 = Carrier("ray", q4(i, j), q5(i, j), f"l7,{sub}").rotated(theta, f"l7,{sub}")
                nu_d_carriers += [WeightedCarrier(ell5, F(-1, 16)),
                                  WeightedCarrier(ell6, F(-1, 16)),
                                  WeightedCarrier(ell7, F(-1, 16))]

        ell8 = Carrier("ray", q2(0, 1), q1(0, 1), f"l8,{tag}").rotated(theta, f"l8,{tag}")
        ell9 = Carrier("segment", p2, q2(0, 1), f"l9,{tag}").rotated(theta, f"l9,{tag}")
        nu_b_carriers += [WeightedCarrier(ell8, F(1, 4)), WeightedCarrier(ell9, F(1, 4))]

    nu_u = VectorMeasure(nu_u_carriers, "nu_u")
    nu_d = VectorMeasure(nu_d_carriers, "nu_d")
    nu_b = VectorMeasure(nu_b_carriers, "nu_b")

    ell10 = Carrier("ray", p5, p1, "l10")
    xi_d = [Carrier("ray", q6, q1(0, 1), "l11,t0").rotated(theta, f"l11,t{k}")
            for k, theta in enumerate(QUARTER_ANGLES)]

    return ParentSkeletons(
        nu_u=nu_u, nu_d=nu_d, nu_b=nu_b,
        S_u=[wc.carrier for wc in nu_u_carriers],
        S_d=[wc.carrier for wc in nu_d_carriers],
        S_b=[wc.carrier for wc in nu_b_carriers],
        Sb_xi_u=[ell10],
        Sb_xi_d=xi_d,
        params=params,
    )


# ---------------------------------------------------------------------------
# nodal sets and layers
# ---------------------------------------------------------------------------

F_DIRECTIONS = ((1, 0), (-1, 0), (0, 1), (0, -1))


def layer_z(i: int) -> Fraction:
    """Interface height z_i = 1/2 - 2^{-(i+1)} for i >= 0."""
    if i < 0:
        raise GeometryError("invalid-level: need i >= 0")
    return F(1, 2) - F(1, 2 ** (i + 1))


def layer_bounds(i: int) -> tuple[Fraction, Fraction]:
    """The half-open layer Z_i = [z_{i-1}, z_i) for i >= 1."""
    if i < 1:
        raise GeometryError("invalid-level: need i >= 1")
    return layer_z(i - 1), layer_z(i)


@dataclass
class NodalSet:
    level: int
    points_exact: list[PointF]

    @property
    def points(self) -> np.ndarray:
        return np.array([[float(c) for c in p] for p in self.points_exact])

    def __len__(self):
        return len(self.points_exact)


def nodal_set(i: int) -> NodalSet:
    """The 4^i branching centers at height z_i (level 0 is the origin at z=0)."""
    if i < 0:
        raise GeometryError("invalid-level: need i >= 0")
    z = layer_z(i)
    if i == 0:
        return NodalSet(0, [(F(0), F(0), F(0))])
    pts: list[PointF] = []
    stack: list[tuple[Fraction, Fraction, int]] = [(F(0), F(0), 0)]
    while stack:
        x, y, depth = stack.pop()
        if depth == i:
            pts.append((x, y, z))
            continue
        scale = F(1, 2 ** (depth + 2))
        for (alpha, beta) in F_DIRECTIONS:
            stack.append((x + alpha * scale, y + beta * scale, depth + 1))
    return NodalSet(i, pts)
