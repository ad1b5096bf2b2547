"""Assembly of the N-level main copy and the periodic forest.

The main copy stacks dyadically dilated parent copies: layer i in {1..N}
holds 4^{i-1} copies of the parent dilated by 2^{i-1} at the level-(i-1)
nodal points, layer N+1 holds the boundary-layer construct at the level-N
nodal points, and the whole thing is mirrored through z = 0 with the
horizontal velocity components flipped.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np
from scipy.spatial import cKDTree

from .geometry import GeometryParams, GeometryError, layer_z, nodal_set
from .mollify import QuadratureSpec
from .parent import ParentBundle, get_bundle

__all__ = ["DomainSpec", "FieldPair", "main_copy", "mirror_extend", "forest",
           "advective_source", "support_report", "recursion_energy",
           "recursion_transport", "bl_support_interval"]


@dataclass(frozen=True)
class DomainSpec:
    kind: str  # "slab-D" | "torus"
    l_x: float = 1.0
    l_y: float = 1.0

    def __post_init__(self):
        if self.kind not in ("slab-D", "torus"):
            raise GeometryError(f"unknown domain kind {self.kind!r}")
        if self.kind == "torus" and not 0 < self.l_x <= self.l_y:
            raise GeometryError("need 0 < l_x <= l_y")

    @property
    def volume(self) -> float:
        return self.l_x * self.l_y if self.kind == "torus" else math.inf


class _Layer:
    """One dyadic layer: centers, dilation, and the parent it instantiates."""

    def __init__(self, level: int, scale: int, centers: np.ndarray, boundary: bool):
        self.level = level
        self.scale = float(scale)
        self.centers = centers
        self.boundary = boundary
        self.tree = cKDTree(centers[:, :2])

    def locals_for(self, x: np.ndarray):
        _, idx = self.tree.query(x[:, :2], k=1)
        centers = self.centers[idx]
        loc = (x - centers) * self.scale
        return loc, idx


class FieldPair:
    """Velocity/scalar evaluators for the assembled main copy on the slab D."""

    def __init__(self, bundle: ParentBundle, N: int):
        if N < 1:
            raise GeometryError("invalid: need N >= 1")
        self.bundle = bundle
        self.params = bundle.params
        self.N = N
        self.provenance = "main-copy"
        self.layers: list[_Layer] = []
        for i in range(1, N + 1):
            centers = nodal_set(i - 1).points
            self.layers.append(_Layer(i, 2 ** (i - 1), centers, False))
        self.layers.append(_Layer(N + 1, 2 ** N, nodal_set(N).points, True))
        self._z_edges = [float(layer_z(i)) for i in range(0, N + 2)]

    # -- layer bookkeeping ---------------------------------------------------

    def _classify(self, zpos: np.ndarray) -> np.ndarray:
        """Layer index 1..N+1 for 0 <= z, 0 for z beyond the support."""
        idx = np.searchsorted(self._z_edges, zpos, side="right")
        idx[zpos >= self._z_edges[-1]] = 0
        return idx

    def _eval(self, x, kind: str):
        x = np.atleast_2d(np.asarray(x, dtype=float))
        n = x.shape[0]
        flip = x[:, 2] < 0.0
        xm = x.copy()
        xm[flip, 2] = -xm[flip, 2]
        layer_of = self._classify(xm[:, 2])

        vel = np.zeros((n, 3)) if kind in ("velocity", "both") else None
        jac = np.zeros((n, 3, 3)) if kind == "jacobian" else None
        val = np.zeros(n) if kind in ("scalar", "both") else None
        grad = np.zeros((n, 3)) if kind in ("scalar", "both") else None
        div = np.zeros(n) if kind == "divergence" else None

        for layer in self.layers:
            sel = layer_of == layer.level
            if not sel.any():
                continue
            loc, _ = layer.locals_for(xm[sel])
            b = self.bundle
            if kind in ("velocity", "both"):
                v = b.boundary_velocity(loc) if layer.boundary else b.velocity(loc)
                vel[sel] = v
            if kind == "jacobian":
                J = (b.boundary_velocity_jacobian(loc) if layer.boundary
                     else b.velocity_jacobian(loc))
                jac[sel] = J * layer.scale
            if kind == "divergence":
                d = (b.u_b.divergence(loc) if layer.boundary
                     else b.velocity_divergence(loc))
                div[sel] = d * layer.scale
            if kind in ("scalar", "both"):
                s, g = (b.boundary_scalar(loc) if layer.boundary else b.scalar(loc))
                val[sel] = s
                grad[sel] = g * layer.scale

        # mirror: even scalar, flipped horizontal velocity
        if kind in ("velocity", "both"):
            vel[flip, 0] *= -1.0
            vel[flip, 1] *= -1.0
        if kind in ("scalar", "both"):
            grad[flip, 2] *= -1.0
        if kind == "jacobian":
            M = np.diag([-1.0, -1.0, 1.0])
            jac[flip] = M @ jac[flip] @ np.diag([1.0, 1.0, -1.0])
        if kind == "divergence":
            pass  # div(mirrored) = -div at the source point = 0 either way
        if kind == "velocity":
            return vel
        if kind == "jacobian":
            return jac
        if kind == "scalar":
            return val, grad
        if kind == "divergence":
            return div
        return vel, val, grad

    # -- public API ------------------------------------------------------------

    def velocity(self, x) -> np.ndarray:
        return self._eval(x, "velocity")

    def velocity_jacobian(self, x) -> np.ndarray:
        return self._eval(x, "jacobian")

    def divergence(self, x) -> np.ndarray:
        return self._eval(x, "divergence")

    def scalar(self, x):
        return self._eval(x, "scalar")

    def advective(self, x) -> np.ndarray:
        vel, _, grad = self._eval(x, "both")
        return (vel * grad).sum(axis=1)

    @property
    def z_support(self) -> float:
        return self._z_edges[-1]

    def copy_frames(self, boundary_only: bool = False):
        """(scale, center) for every placed parent copy, top half only."""
        frames = []
        for layer in self.layers:
            if boundary_only and not layer.boundary:
                continue
            for c in layer.centers:
                frames.append((layer.scale, c, layer.boundary))
        return frames


def main_copy(N: int, params: GeometryParams,
              quad: QuadratureSpec | None = None) -> FieldPair:
    return FieldPair(get_bundle(params, quad), N)


class MirroredField:
    """Even/odd mirror extension of a field given on z >= 0."""

    def __init__(self, velocity=None, scalar=None):
        self._vel = velocity
        self._scal = scalar

    def velocity(self, x):
        x = np.atleast_2d(np.asarray(x, dtype=float))
        flip = x[:, 2] < 0
        xm = x.copy()
        xm[flip, 2] *= -1
        v = self._vel(xm)
        v[flip, 0] *= -1
        v[flip, 1] *= -1
        return v

    def scalar(self, x):
        x = np.atleast_2d(np.asarray(x, dtype=float))
        flip = x[:, 2] < 0
        xm = x.copy()
        xm[flip, 2] *= -1
        val, grad = self._scal(xm)
        grad[flip, 2] *= -1
        return val, grad


def mirror_extend(velocity=None, scalar=None) -> MirroredField:
    """Extend fields supported in z >= 0 to the full slab: the velocity gets
    (u_x,u_y,u_z)(x,y,z) = (-u_x,-u_y,u_z)(x,y,-z), the scalar reflects evenly."""
    return MirroredField(velocity, scalar)


# ---------------------------------------------------------------------------
# forest tiling of the torus
# ---------------------------------------------------------------------------

class ForestPair:
    """Periodic tiling of a main copy over the torus, with the horizontal
    squeeze (d_x, d_y) and matching component compensation so the tiled
    field stays divergence-free."""

    def __init__(self, pair: FieldPair, domain: DomainSpec):
        if domain.kind != "torus":
            raise GeometryError("forest needs a torus domain")
        self.pair = pair
        self.domain = domain
        l_x, l_y = domain.l_x, domain.l_y
        if l_x >= 1.0:
            self.n_x = math.ceil(l_x)
            self.n_y = math.ceil(l_y)
        else:
            self.n_x = 1
            self.n_y = math.ceil(l_y / l_x)
        self.d_x = l_x / self.n_x
        self.d_y = l_y / self.n_y
        self.provenance = f"forest({self.n_x},{self.n_y},{self.d_x:.6g},{self.d_y:.6g})"

    def _to_local(self, x):
        x = np.atleast_2d(np.asarray(x, dtype=float))
        loc = x.copy()
        lx, ly = self.domain.l_x, self.domain.l_y
        # fold onto the torus, then into the cell
        loc[:, 0] = (loc[:, 0] + lx / 2) % lx
        loc[:, 1] = (loc[:, 1] + ly / 2) % ly
        loc[:, 0] = (loc[:, 0] % self.d_x - self.d_x / 2) / self.d_x
        loc[:, 1] = (loc[:, 1] % self.d_y - self.d_y / 2) / self.d_y
        return loc

    def velocity(self, x):
        loc = self._to_local(x)
        v = self.pair.velocity(loc)
        v[:, 0] *= self.d_x
        v[:, 1] *= self.d_y
        return v

    def scalar(self, x):
        loc = self._to_local(x)
        val, grad = self.pair.scalar(loc)
        grad = grad / np.array([self.d_x, self.d_y, 1.0])
        return val, grad

    def velocity_jacobian(self, x):
        loc = self._to_local(x)
        J = self.pair.velocity_jacobian(loc)
        scale = np.array([self.d_x, self.d_y, 1.0])
        return J * scale[None, :, None] / scale[None, None, :]

    def advective(self, x):
        # (d u) . (grad/d) telescopes to the parent's advective term exactly
        return self.pair.advective(self._to_local(x))


def forest(pair: FieldPair, domain: DomainSpec) -> ForestPair:
    return ForestPair(pair, domain)


def advective_source(pair):
    """Pointwise u . grad(xi) of an assembled pair."""
    return lambda x: pair.advective(x)


# ---------------------------------------------------------------------------
# closed-form layer recursions and support intervals
# ---------------------------------------------------------------------------

def recursion_energy(N: int, E_parent: float, E_boundary: float) -> float:
    """Integral over D of the dilated-copy sum: (sum_{i<N} 2^{i+1}) E_u + 2^{N+1} E_ub."""
    return sum(2.0 ** (i + 1) for i in range(N)) * E_parent + 2.0 ** (N + 1) * E_boundary


def recursion_transport(N: int, T_parent: float, T_boundary: float) -> float:
    return sum(2.0 ** (-i + 1) for i in range(N)) * T_parent + 2.0 ** (-N + 1) * T_boundary


def bl_support_interval(N: int, params: GeometryParams) -> tuple[float, float]:
    """Predicted z-interval of u . grad(xi): z_N + 2^{-N} [h, h+lambda+gamma]."""
    lo = float(layer_z(N)) + 2.0 ** (-N) * params.h_f
    hi = float(layer_z(N)) + 2.0 ** (-N) * (params.h_f + params.lambda_f + params.gamma_f)
    return lo, hi


def support_report(pair: FieldPair, n_z: int = 160, n_per_stratum: int = 40,
                   threshold: float = 1e-8, seed: int = 5):
    """Measured z-support intervals of u . grad(xi).

    Samples the advective source inside every placed copy's tube boxes and
    reports the minimal z-intervals containing all |values| above
    threshold * max|value| (upper half plus its mirror).
    """
    from .geometry import carrier_arrays
    rng = np.random.default_rng(np.random.Philox(key=seed))
    b = pair.bundle
    records_z = []
    records_v = []
    for scale, center, boundary in pair.copy_frames():
        carriers = b.sk.S_b if boundary else b.sk.S
        a, u, L = carrier_arrays(carriers)
        lam = b.params.lambda_f + b.params.gamma_f
        for k in range(a.shape[0]):
            ts = rng.uniform(0, 1, n_per_stratum) * L[k]
            off = rng.normal(size=(n_per_stratum, 3))
            off /= np.linalg.norm(off, axis=1)[:, None]
            locs = a[k] + ts[:, None] * u[k] + off * rng.uniform(
                0, lam, n_per_stratum)[:, None]
            pts = locs / scale + center
            keep = (pts[:, 2] >= 0) & (pts[:, 2] < pair.z_support)
            if not keep.any():
                continue
            vals = pair.advective(pts[keep])
            records_z.append(pts[keep, 2])
            records_v.append(np.abs(vals))
    zs = np.concatenate(records_z)
    vs = np.concatenate(records_v)
    vmax = vs.max()
    hot = zs[vs > threshold * vmax]
    if hot.size == 0:
        return {"max": 0.0, "intervals": []}
    lo, hi = hot.min(), hot.max()
    return {"max": float(vmax),
            "intervals": [(float(lo), float(hi)), (float(-hi), float(-lo))]}
