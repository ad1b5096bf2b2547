"""The parent constructs: stitched velocity/scalar building blocks.

The velocity parent is the mollified measure at radius gamma inside
|x|,|y| <= 1/8, at radius gamma/2 outside 1/8+gamma, and the streamfunction
reducer in the four transition slots.  The scalar parent is the mollified
lambda-tube indicator with an eta-blend of the two tube scales across each
slot.  The boundary-layer pair (u_b, xi_b) needs no stitching.

The reducers are anchored on the pipe axes: the up-pipe arms run at height
z = 1/8 and the down-pipe arms at z = 1/8 - i*delta, y = j*delta, so the
anchors are (1/8, 0, 1/8) and (1/8, j*delta, 1/8 - i*delta).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from . import reducer as red
from .geometry import (QUARTER_ANGLES, Carrier, GeometryParams, ParentSkeletons,
                       build_parent_skeletons, carrier_arrays)
from .mollify import QuadratureSpec, ScalarEvaluator, VelocityEvaluator, ToleranceFailure

__all__ = ["ParentBundle", "ParentIntegrals", "parent_velocity", "parent_scalar",
           "parent_boundary_velocity", "parent_boundary_scalar", "parent_integrals"]


_ROT = [np.array([[math.cos(t), -math.sin(t), 0.0],
                  [math.sin(t), math.cos(t), 0.0],
                  [0.0, 0.0, 1.0]]).round(12) for t in QUARTER_ANGLES]


def _region_masks(x: np.ndarray, gamma: float):
    ax, ay = np.abs(x[:, 0]), np.abs(x[:, 1])
    inner = (ax <= 0.125) & (ay <= 0.125)
    outer = (ax >= 0.125 + gamma) | (ay >= 0.125 + gamma)
    slots = []
    for k in range(4):
        xr = x @ _ROT[k]  # == rho_{-theta} applied to rows
        slots.append((xr[:, 0] > 0.125) & (xr[:, 0] < 0.125 + gamma) & ~inner & ~outer)
    return inner, outer, slots


@dataclass
class ParentIntegrals:
    """Reference integrals of the parent pair over the first layer."""

    E_u: float
    E_ub: float
    G_xi: float
    G_xib: float
    T: float
    T_b: float
    errors: dict

    @property
    def c3(self) -> float:
        return self.T


class ParentBundle:
    """Evaluators for (u, u_b, xi, xi_b) and their gradients."""

    def __init__(self, params: GeometryParams, quad: QuadratureSpec | None = None):
        self.params = params.validate()
        self.quad = quad or QuadratureSpec()
        self.sk: ParentSkeletons = build_parent_skeletons(params)
        g = params.gamma_f
        lam = params.lambda_f
        d = params.delta_f
        q = self.quad

        self.u1_u = VelocityEvaluator(self.sk.nu_u, g, q)
        self.u2_u = VelocityEvaluator(self.sk.nu_u, g / 2, q)
        self.u1_d = VelocityEvaluator(self.sk.nu_d, g, q)
        self.u2_d = VelocityEvaluator(self.sk.nu_d, g / 2, q)
        self.u_b = VelocityEvaluator(self.sk.nu_b, g, q)

        self.xi1_u = ScalarEvaluator(self.sk.S_u, lam, g, +1, q)
        self.xi2_u = ScalarEvaluator(self.sk.S_u, lam / 2, g / 2, +1, q)
        self.xi1_d = ScalarEvaluator(self.sk.S_d, lam, g, -1, q)
        self.xi2_d = ScalarEvaluator(self.sk.S_d, lam / 2, g / 2, -1, q)
        self.xib_u = ScalarEvaluator(self.sk.Sb_xi_u, lam, g, +1, q)
        self.xib_d = ScalarEvaluator(self.sk.Sb_xi_d, lam, g, -1, q)

        # reducer anchors on the pipe axes, canonical frame (theta = 0 slot)
        self._red_up = [(np.array([0.125, 0.0, 0.125]), 0.25)]
        self._red_dn = [(np.array([0.125, j * d, 0.125 - i * d]), -1.0 / 16.0)
                        for i in (-1, 1) for j in (-1, 1)]

    # -- velocity ----------------------------------------------------------

    def _reducer_field(self, x: np.ndarray, part: str, want_jac: bool):
        """Sum of anchored reducers in the canonical slot frame."""
        g = self.params.gamma_f
        anchors = []
        if part in ("both", "up"):
            anchors += self._red_up
        if part in ("both", "down"):
            anchors += self._red_dn
        u = np.zeros((x.shape[0], 3))
        J = np.zeros((x.shape[0], 3, 3)) if want_jac else None
        for anchor, scale in anchors:
            loc = x - anchor
            near = np.hypot(loc[:, 1], loc[:, 2]) <= g
            if not near.any():
                continue
            u[near] += scale * red.reducer_velocity(loc[near], g)
            if want_jac:
                J[near] += scale * red.reducer_jacobian(loc[near], g)
        return (u, J) if want_jac else u

    def velocity(self, x, part: str = "both") -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=float))
        out = np.zeros((x.shape[0], 3))
        inner, outer, slots = _region_masks(x, self.params.gamma_f)
        evs = {"both": ((self.u1_u, self.u1_d), (self.u2_u, self.u2_d)),
               "up": ((self.u1_u,), (self.u2_u,)),
               "down": ((self.u1_d,), (self.u2_d,))}[part]
        if inner.any():
            out[inner] = sum(ev.velocity(x[inner]) for ev in evs[0])
        if outer.any():
            out[outer] = sum(ev.velocity(x[outer]) for ev in evs[1])
        for k in range(4):
            m = slots[k]
            if not m.any():
                continue
            xr = x[m] @ _ROT[k]
            out[m] = self._reducer_field(xr, part, False) @ _ROT[k].T
        return out

    def velocity_jacobian(self, x, part: str = "both") -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=float))
        J = np.zeros((x.shape[0], 3, 3))
        inner, outer, slots = _region_masks(x, self.params.gamma_f)
        evs = {"both": ((self.u1_u, self.u1_d), (self.u2_u, self.u2_d)),
               "up": ((self.u1_u,), (self.u2_u,)),
               "down": ((self.u1_d,), (self.u2_d,))}[part]
        if inner.any():
            J[inner] = sum(ev.jacobian(x[inner]) for ev in evs[0])
        if outer.any():
            J[outer] = sum(ev.jacobian(x[outer]) for ev in evs[1])
        for k in range(4):
            m = slots[k]
            if not m.any():
                continue
            xr = x[m] @ _ROT[k]
            _, Jloc = self._reducer_field(xr, part, True)
            R = _ROT[k]
            J[m] = np.einsum("ab,nbc,dc->nad", R, Jloc, R)
        return J

    def velocity_divergence(self, x, part: str = "both") -> np.ndarray:
        """Telescoping endpoint form in measure regions, analytic trace in slots."""
        x = np.atleast_2d(np.asarray(x, dtype=float))
        out = np.zeros(x.shape[0])
        inner, outer, slots = _region_masks(x, self.params.gamma_f)
        evs = {"both": ((self.u1_u, self.u1_d), (self.u2_u, self.u2_d)),
               "up": ((self.u1_u,), (self.u2_u,)),
               "down": ((self.u1_d,), (self.u2_d,))}[part]
        if inner.any():
            out[inner] = sum(ev.divergence(x[inner]) for ev in evs[0])
        if outer.any():
            out[outer] = sum(ev.divergence(x[outer]) for ev in evs[1])
        for k in range(4):
            m = slots[k]
            if not m.any():
                continue
            xr = x[m] @ _ROT[k]
            _, Jloc = self._reducer_field(xr, part, True)
            out[m] = np.trace(Jloc, axis1=1, axis2=2)
        return out

    def boundary_velocity(self, x) -> np.ndarray:
        return self.u_b.velocity(x)

    def boundary_velocity_jacobian(self, x) -> np.ndarray:
        return self.u_b.jacobian(x)

    # -- scalar ------------------------------------------------------------

    def _scalar_part(self, x, ev1: ScalarEvaluator, ev2: ScalarEvaluator):
        """One pipeline's scalar: plateau tubes with the slot eta-blend."""
        n = x.shape[0]
        g = self.params.gamma_f
        vals = np.zeros(n)
        grads = np.zeros((n, 3))
        inner, outer, slots = _region_masks(x, g)
        if inner.any():
            v, gr = ev1.value_and_grad(x[inner])
            vals[inner], grads[inner] = v, gr
        if outer.any():
            v, gr = ev2.value_and_grad(x[outer])
            vals[outer], grads[outer] = v, gr
        for k in range(4):
            m = slots[k]
            if not m.any():
                continue
            xm = x[m]
            xr = xm @ _ROT[k]
            s = (xr[:, 0] - 0.125) / g
            eta = red.cutoff_eta(s)
            etad = red.cutoff_eta_deriv(s) / g
            v1, g1 = ev1.value_and_grad(xm)
            v2, g2 = ev2.value_and_grad(xm)
            vals[m] = (1.0 - eta) * v1 + eta * v2
            ex = _ROT[k][:, 0]  # gradient of the rotated-frame x coordinate
            grads[m] = ((1.0 - eta)[:, None] * g1 + eta[:, None] * g2
                        + (etad * (v2 - v1))[:, None] * ex[None, :])
        return vals, grads

    def scalar(self, x, part: str = "both"):
        """(value, gradient) of the parent scalar field."""
        x = np.atleast_2d(np.asarray(x, dtype=float))
        vals = np.zeros(x.shape[0])
        grads = np.zeros((x.shape[0], 3))
        if part in ("both", "up"):
            v, g = self._scalar_part(x, self.xi1_u, self.xi2_u)
            vals += v
            grads += g
        if part in ("both", "down"):
            v, g = self._scalar_part(x, self.xi1_d, self.xi2_d)
            vals += v
            grads += g
        return vals, grads

    def boundary_scalar(self, x):
        x = np.atleast_2d(np.asarray(x, dtype=float))
        v1, g1 = self.xib_u.value_and_grad(x)
        v2, g2 = self.xib_d.value_and_grad(x)
        return v1 + v2, g1 + g2

    # -- flux through a horizontal plane ------------------------------------

    def plane_flux(self, z: float, part: str = "up", order: int = 16) -> float:
        """2D Gauss-Legendre integral of u_z over the tube footprints at height z.

        Overlapping footprint boxes are deduplicated by winding count.
        """
        g = self.params.gamma_f
        lam = self.params.lambda_f
        carriers = {"up": self.sk.S_u, "down": self.sk.S_d,
                    "both": self.sk.S_u + self.sk.S_d, "boundary": self.sk.S_b}[part]
        a, u, L = carrier_arrays(carriers)
        pad = 1.5 * g
        boxes = []
        for k in range(a.shape[0]):
            z0, z1 = a[k, 2], a[k, 2] + L[k] * u[k, 2]
            zlo, zhi = min(z0, z1) - g, max(z0, z1) + g
            if not (zlo <= z <= zhi):
                continue
            # x,y extent of the carrier portion within |z' - z| <= gamma
            if abs(u[k, 2]) > 1e-12:
                t_at = lambda zz: np.clip((zz - a[k, 2]) / u[k, 2], 0.0, L[k])
                ts = [t_at(z - g), t_at(z + g)]
            else:
                ts = [0.0, L[k]]
            pts = np.array([a[k] + t * u[k] for t in ts])
            boxes.append([pts[:, 0].min() - pad, pts[:, 0].max() + pad,
                          pts[:, 1].min() - pad, pts[:, 1].max() + pad])
        if not boxes:
            return 0.0
        boxes = np.array(boxes)
        nodes, wts = np.polynomial.legendre.leggauss(order)

        def panel_axis(lo, hi):
            """Composite GL: panels no wider than ~gamma resolve the kernels."""
            n_panels = max(1, int(math.ceil((hi - lo) / (0.75 * g))))
            edges = np.linspace(lo, hi, n_panels + 1)
            mids = 0.5 * (edges[:-1] + edges[1:])
            halves = 0.5 * np.diff(edges)
            pts = (mids[:, None] + halves[:, None] * nodes[None, :]).ravel()
            ww = (halves[:, None] * wts[None, :]).ravel()
            return pts, ww

        total = 0.0
        for b in boxes:
            xm, wx = panel_axis(b[0], b[1])
            ym, wy = panel_axis(b[2], b[3])
            X, Y = np.meshgrid(xm, ym, indexing="ij")
            W = np.outer(wx, wy)
            pts = np.column_stack([X.ravel(), Y.ravel(), np.full(X.size, z)])
            inside = ((pts[:, 0:1] >= boxes[:, 0]) & (pts[:, 0:1] <= boxes[:, 1])
                      & (pts[:, 1:2] >= boxes[:, 2]) & (pts[:, 1:2] <= boxes[:, 3]))
            cover = inside.sum(axis=1).astype(float)
            if part == "boundary":
                uz = self.boundary_velocity(pts)[:, 2]
            else:
                uz = self.velocity(pts, part)[:, 2]
            total += float((uz / cover * W.ravel()).sum())
        return total


# module-level convenience wrappers with a small bundle cache --------------

_BUNDLES: dict = {}


def get_bundle(params: GeometryParams, quad: QuadratureSpec | None = None) -> ParentBundle:
    key = (params, quad)
    if key not in _BUNDLES:
        _BUNDLES[key] = ParentBundle(params, quad)
    return _BUNDLES[key]


def parent_velocity(x, params: GeometryParams) -> np.ndarray:
    return get_bundle(params).velocity(x)


def parent_boundary_velocity(x, params: GeometryParams) -> np.ndarray:
    return get_bundle(params).boundary_velocity(x)


def parent_scalar(x, params: GeometryParams):
    return get_bundle(params).scalar(x)


def parent_boundary_scalar(x, params: GeometryParams):
    return get_bundle(params).boundary_scalar(x)


# ---------------------------------------------------------------------------
# stratified integration over tube supports
# ---------------------------------------------------------------------------

def _sample_capped_cylinder(rng, a, b, r_out, n, r_in=0.0):
    """Uniform samples in {y : r_in <= dist(y, segment ab) <= r_out} by rejection."""
    lo = np.minimum(a, b) - r_out
    hi = np.maximum(a, b) + r_out
    d = b - a
    L = np.linalg.norm(d)
    u = d / L if L > 0 else np.array([0.0, 0.0, 1.0])
    out = np.empty((0, 3))
    # exact volume of the capped-cylinder shell
    vol = (math.pi * (r_out ** 2 - r_in ** 2) * L
           + 4.0 / 3.0 * math.pi * (r_out ** 3 - r_in ** 3))
    while out.shape[0] < n:
        cand = rng.uniform(lo, hi, size=(max(64, 2 * n), 3))
        rel = cand - a
        t = np.clip(rel @ u, 0.0, L)
        dist = np.linalg.norm(rel - t[:, None] * u, axis=1)
        keep = (dist <= r_out) & (dist >= r_in)
        out = np.concatenate([out, cand[keep]])
    return out[:n], vol


def _stratum_specs(carriers, r_out, r_in, z_window):
    """Clip carriers to the z-window padded by r_out; drop empty strata."""
    specs = []
    zlo, zhi = z_window
    for c in carriers:
        cc = c.clipped(zlo - r_out, zhi + r_out) if c.kind == "ray" else c
        a = np.array([float(v) for v in cc.a])
        b = np.array([float(v) for v in cc.b])
        # clip segments too
        if abs(b[2] - a[2]) > 1e-15:
            t0, t1 = sorted([(zlo - r_out - a[2]) / (b[2] - a[2]),
                             (zhi + r_out - a[2]) / (b[2] - a[2])])
            t0, t1 = max(0.0, t0), min(1.0, t1)
            if t1 <= t0:
                continue
            a, b = a + t0 * (b - a), a + t1 * (b - a)
        else:
            if not (zlo - r_out <= a[2] <= zhi + r_out):
                continue
        specs.append((a, b))
    return specs


def _stratified_integral(rng, specs, r_out, r_in, z_window, f, n_per):
    """Sum of per-stratum MC estimates of f over the shell union, with
    winding-count deduplication of overlaps; returns (value, stderr)."""
    if not specs:
        return 0.0, 0.0
    A = np.array([s[0] for s in specs])
    B = np.array([s[1] for s in specs])
    D = B - A
    Ls = np.linalg.norm(D, axis=1)
    U = D / np.where(Ls[:, None] > 0, Ls[:, None], 1.0)
    zlo, zhi = z_window
    total, var = 0.0, 0.0
    for (a, b) in specs:
        pts, vol = _sample_capped_cylinder(rng, a, b, r_out, n_per, r_in)
        inz = (pts[:, 2] >= zlo) & (pts[:, 2] < zhi)
        vals = np.zeros(len(pts))
        if inz.any():
            vals[inz] = f(pts[inz])
        rel = pts[:, None, :] - A[None, :, :]
        t = np.clip(np.einsum("nmk,mk->nm", rel, U), 0.0, Ls[None, :])
        dist = np.linalg.norm(rel - t[:, :, None] * U[None, :, :], axis=2)
        cover = ((dist <= r_out) & (dist >= r_in)).sum(axis=1).astype(float)
        w = vals / np.maximum(cover, 1.0)
        total += vol * w.mean()
        var += vol ** 2 * w.var(ddof=1) / len(w)
    return total, math.sqrt(var)


def parent_integrals(params: GeometryParams, quad: QuadratureSpec | None = None,
                     n_per_stratum: int = 600, rel_tol: float = 0.05,
                     check_tol: bool = True) -> ParentIntegrals:
    """Reference integrals over the first layer by stratified tube sampling.

    E_* are gradient energies on 0 <= z < 1/4, T the transport integral on
    (0, 1/4), T_b the boundary transport on (0, 1/8).
    """
    quad = quad or QuadratureSpec()
    bundle = get_bundle(params, quad)
    g = params.gamma_f
    lam = params.lambda_f
    rng = np.random.default_rng(np.random.Philox(key=quad.seed))
    Z1 = (0.0, 0.25)
    errors = {}

    def run(tag, carriers, r_out, r_in, window, f):
        specs = _stratum_specs(carriers, r_out, r_in, window)
        val, err = _stratified_integral(rng, specs, r_out, r_in, window, f, n_per_stratum)
        errors[tag] = err
        if check_tol and val != 0 and err > rel_tol * abs(val):
            raise ToleranceFailure(
                f"tolerance-failure: {tag} stderr {err:.3g} vs value {val:.6g}")
        return val

    E_u = run("E_u", bundle.sk.S, g, 0.0, Z1,
              lambda p: (bundle.velocity_jacobian(p) ** 2).sum(axis=(1, 2)))
    E_ub = run("E_ub", bundle.sk.S_b, g, 0.0, Z1,
               lambda p: (bundle.boundary_velocity_jacobian(p) ** 2).sum(axis=(1, 2)))
    # grad(xi) support: the [lam-g, lam+g] shell, extended inward to the
    # half-scale tube's shell inside the blend slots
    G_xi = run("G_xi", bundle.sk.S, lam + g, 0.45 * (lam - g), Z1,
               lambda p: (bundle.scalar(p)[1] ** 2).sum(axis=1))
    G_xib = run("G_xib", bundle.sk.Sb_xi_u + bundle.sk.Sb_xi_d,
                lam + g, 0.95 * (lam - g), Z1,
                lambda p: (bundle.boundary_scalar(p)[1] ** 2).sum(axis=1))
    T = run("T", bundle.sk.S, g, 0.0, Z1,
            lambda p: bundle.velocity(p)[:, 2] * bundle.scalar(p)[0])
    T_b = run("T_b", bundle.sk.S_b, g, 0.0, (0.0, 0.125),
              lambda p: bundle.boundary_velocity(p)[:, 2] * bundle.boundary_scalar(p)[0])
    return ParentIntegrals(E_u, E_ub, G_xi, G_xib, T, T_b, errors)
