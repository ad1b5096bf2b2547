"""Mollifiers and the two field evaluators built from them.

Velocity fields are convolutions phi_eps * (weighted line measure), computed
carrier-by-carrier with Gauss-Legendre quadrature restricted to the interval
where the kernel is active (|x - y(t)| <= eps, a quadratic in t).

Scalar fields are convolutions phi_eps * indicator(lambda-tube).  Away from
junctions a point sees a single straight carrier and the value reduces to a
precomputed radial profile; near junctions we fall back to symmetrized
low-discrepancy sampling of the ball (boundary counts as inside).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy.integrate import quad
from scipy.interpolate import CubicSpline
from scipy.stats import qmc

from . import kernels
from .geometry import Carrier, VectorMeasure, carrier_arrays

__all__ = [
    "Mollifier", "QuadratureSpec", "VelocityEvaluator", "ScalarEvaluator",
    "bump", "bump_constant", "mollify_measure", "mollify_tube", "profile_m",
]


class ToleranceFailure(RuntimeError):
    """Quadrature failed to reach the requested tolerance."""


class ConfigError(ValueError):
    pass


# ---------------------------------------------------------------------------
# the radial bump and its derived 1D/2D profiles
# ---------------------------------------------------------------------------

def _bump_unnorm(r):
    r = np.asarray(r, dtype=float)
    return kernels.bump_raw_s2(r * r)


@lru_cache(maxsize=1)
def bump_constant() -> float:
    """c such that the 3D integral of c*exp(1/(r^2-1)) over the unit ball is 1."""
    val, err = quad(lambda r: r * r * np.exp(1.0 / (r * r - 1.0)), 0.0, 1.0,
                    epsabs=1e-15, epsrel=1e-13)
    return 1.0 / (4.0 * math.pi * val)


def bump(r):
    """The normalized radial bump: c*exp(1/(r^2-1)) inside |r|<1, 0 outside."""
    return bump_constant() * _bump_unnorm(r)


@lru_cache(maxsize=1)
def _line_profile_spline():
    """M(s) = integral of bump(sqrt(t^2+s^2)) dt; smooth, supported on |s|<1."""
    s_grid = np.linspace(0.0, 1.0, 1025)
    vals = np.empty_like(s_grid)
    for i, s in enumerate(s_grid):
        if s >= 1.0:
            vals[i] = 0.0
            continue
        half = math.sqrt(1.0 - s * s)
        vals[i], _ = quad(lambda t, s=s: bump(math.hypot(t, s)), 0.0, half,
                          epsabs=1e-14, epsrel=1e-12)
        vals[i] *= 2.0
    return CubicSpline(s_grid, vals, bc_type="clamped")


def line_profile(s):
    """M(s): the bump integrated along a line at offset s (so m_eps(r)=M(r/eps)/eps^2)."""
    s = np.abs(np.asarray(s, dtype=float))
    out = np.zeros_like(s)
    inside = s < 1.0
    out[inside] = _line_profile_spline()(s[inside])
    return out


def line_profile_deriv(s):
    s_arr = np.asarray(s, dtype=float)
    sign = np.sign(s_arr)
    out = np.zeros_like(s_arr)
    inside = np.abs(s_arr) < 1.0
    out[inside] = _line_profile_spline().derivative()(np.abs(s_arr[inside])) * sign[inside]
    return out


def profile_m(r, gamma: float):
    """The pipe profile m(r) = (1/gamma^3) * integral of bump(sqrt(t^2+r^2)/gamma) dt."""
    if gamma <= 0:
        raise ConfigError("gamma must be positive")
    return line_profile(np.asarray(r, dtype=float) / gamma) / gamma ** 2


@lru_cache(maxsize=1)
def _plane_profile_spline():
    """P(s) = bump integrated over a plane at offset s; integral of P over R is 1."""
    s_grid = np.linspace(0.0, 1.0, 1025)
    vals = np.empty_like(s_grid)
    for i, s in enumerate(s_grid):
        if s >= 1.0:
            vals[i] = 0.0
            continue
        top = math.sqrt(1.0 - s * s)
        vals[i], _ = quad(lambda rho, s=s: rho * bump(math.hypot(rho, s)),
                          0.0, top, epsabs=1e-14, epsrel=1e-12)
        vals[i] *= 2.0 * math.pi
    return CubicSpline(s_grid, vals, bc_type="clamped")


@lru_cache(maxsize=1)
def _plane_profile_cdf():
    sp = _plane_profile_spline()
    anti = sp.antiderivative()

    def cdf(s):
        """integral of P from -1 to s."""
        s = np.clip(np.asarray(s, dtype=float), -1.0, 1.0)
        half = float(anti(1.0))
        return np.where(s >= 0.0, half + anti(np.abs(s)), half - anti(np.abs(s)))

    return cdf


@lru_cache(maxsize=4)
def _radial_moment_spline():
    """Q(s) = integral_0^s t*M(t) dt, so Psi_s(r) = Q(r/gamma); Q(1) = 1/(2*pi)."""
    sp = _line_profile_spline()
    s_grid = np.linspace(0.0, 1.0, 2049)
    integrand = s_grid * sp(s_grid)
    q = CubicSpline(s_grid, integrand).antiderivative()
    return CubicSpline(s_grid, q(s_grid), bc_type="natural")


def radial_moment(s):
    """Q(s) above, clamped to its terminal value for s >= 1."""
    s = np.abs(np.asarray(s, dtype=float))
    sp = _radial_moment_spline()
    return np.where(s >= 1.0, float(sp(1.0)), sp(np.minimum(s, 1.0)))


# tube profile: value of phi_eps * 1_{lambda-tube} at distance r from a long
# straight carrier, as a function of r; depends only on Lam = lambda/eps.

@lru_cache(maxsize=8)
def _tube_profile_splines(lam_over_eps: float):
    Lam = float(lam_over_eps)
    sp_M = _line_profile_spline()

    def xi_of(R):
        if R <= Lam - 1.0:
            return 1.0
        if R >= Lam + 1.0:
            return 0.0

        def integrand(rho):
            if rho == 0.0:
                inside = 1.0 if R <= Lam else 0.0
                return 0.0 * inside
            cstar = (Lam * Lam - R * R - rho * rho) / (2.0 * R * rho) if R > 0 else (
                1.0 if rho <= Lam else -1.0)
            cstar = min(1.0, max(-1.0, cstar))
            ang = 2.0 * (math.pi - math.acos(cstar))
            return sp_M(rho) * rho * ang

        val, _ = quad(integrand, 0.0, 1.0, epsabs=1e-13, epsrel=1e-11, limit=200)
        return val

    lo = max(0.0, Lam - 1.0)
    hi = Lam + 1.0
    R_grid = np.linspace(lo, hi, 1537)
    vals = np.array([xi_of(R) for R in R_grid])
    spline = CubicSpline(R_grid, vals, bc_type="clamped")
    return spline, spline.derivative(), lo, hi


def tube_profile(r, lam: float, eps: float):
    """phi_eps * 1_{tube of radius lam} for an infinite straight carrier, at distance r."""
    spline, _, lo, hi = _tube_profile_splines(round(lam / eps, 12))
    r = np.asarray(r, dtype=float) / eps
    out = np.empty_like(r)
    out[r <= lo] = 1.0
    out[r >= hi] = 0.0
    mid = (r > lo) & (r < hi)
    out[mid] = spline(r[mid])
    return out


def tube_profile_deriv(r, lam: float, eps: float):
    _, dspline, lo, hi = _tube_profile_splines(round(lam / eps, 12))
    r = np.asarray(r, dtype=float) / eps
    out = np.zeros_like(r)
    mid = (r > lo) & (r < hi)
    out[mid] = dspline(r[mid]) / eps
    return out


# ---------------------------------------------------------------------------
# quadrature configuration / mollifier
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class QuadratureSpec:
    abs_tol: float = 1e-9
    rel_tol: float = 1e-7
    max_subdivisions: int = 200
    mc_samples: int = 4096
    seed: int = 2024

    def __post_init__(self):
        if self.abs_tol <= 0 or self.rel_tol <= 0:
            raise ConfigError("tolerances must be positive")


@dataclass(frozen=True)
class Mollifier:
    epsilon: float

    @property
    def c(self) -> float:
        return bump_constant()

    def __call__(self, x):
        r = np.linalg.norm(np.atleast_2d(x), axis=1)
        return bump(r / self.epsilon) / self.epsilon ** 3


@lru_cache(maxsize=8)
def _gl_rule(n: int):
    nodes, wts = np.polynomial.legendre.leggauss(n)
    return nodes, wts


@lru_cache(maxsize=16)
def _ball_samples(n: int, seed: int):
    """Symmetric (antithetic) low-discrepancy samples in the unit ball.

    Returns positions (k,3), bump values, and phibar'(|u|)/|u| factors; the
    +/- pairing makes gradient sums vanish identically wherever the sampled
    indicator is constant over the ball.
    """
    half = n // 2
    eng = qmc.Sobol(d=3, scramble=True, seed=seed)
    pts = []
    while sum(len(p) for p in pts) < half:
        block = eng.random(4096) * 2.0 - 1.0
        block = block[(block ** 2).sum(axis=1) < 1.0]
        pts.append(block)
    u = np.concatenate(pts)[:half]
    u = np.concatenate([u, -u])
    s2 = (u ** 2).sum(axis=1)
    w_phi = kernels.bump_raw_s2(s2)
    w_grad = kernels.bump_raw_dr_over_r(s2)  # phibar'(r)/r, unnormalized
    return u, w_phi, w_grad


# ---------------------------------------------------------------------------
# velocity evaluator: phi_eps * (vector measure)
# ---------------------------------------------------------------------------

class VelocityEvaluator:
    """Smooth divergence-free velocity from a weighted line measure."""

    def __init__(self, measure: VectorMeasure, epsilon: float,
                 quad_spec: QuadratureSpec | None = None, gl_order: int = 32):
        if epsilon <= 0:
            raise ConfigError("epsilon must be positive")
        self.measure = measure.clipped()
        self.epsilon = float(epsilon)
        self.quad_spec = quad_spec or QuadratureSpec()
        self.gl_order = gl_order
        self._a, self._u, self._L = carrier_arrays([wc.carrier for wc in self.measure])
        self._w = np.array([wc.weight for wc in self.measure])          # (m,3)
        self._flux = np.array([float(wc.flux) for wc in self.measure])
        self._c = bump_constant()

    def _chunks(self, n):
        m = max(1, self._a.shape[0])
        step = max(64, int(3_000_000 // (m * self.gl_order)))
        for lo in range(0, n, step):
            yield lo, min(n, lo + step)

    def velocity(self, x) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=float))
        nodes, wts = _gl_rule(self.gl_order)
        out = np.empty((x.shape[0], 3))
        for lo, hi in self._chunks(x.shape[0]):
            S = kernels.line_conv(x[lo:hi], self._a, self._u, self._L,
                                  self.epsilon, nodes, wts, False)
            out[lo:hi] = self._c * S @ self._w
        return out

    def jacobian(self, x) -> np.ndarray:
        """J[n,i,j] = d u_i / d x_j."""
        x = np.atleast_2d(np.asarray(x, dtype=float))
        nodes, wts = _gl_rule(self.gl_order)
        out = np.empty((x.shape[0], 3, 3))
        for lo, hi in self._chunks(x.shape[0]):
            _, G = kernels.line_conv(x[lo:hi], self._a, self._u, self._L,
                                     self.epsilon, nodes, wts, True)
            out[lo:hi] = self._c * np.einsum("mi,nmj->nij", self._w, G)
        return out

    def divergence(self, x) -> np.ndarray:
        """Exact telescoping form: sum of flux * (phi_eps(x-a) - phi_eps(x-b)).

        For a measure that decomposes into Kirchhoff junctions the endpoint
        kernels cancel in exact arithmetic, so this returns float rounding
        noise only.
        """
        x = np.atleast_2d(np.asarray(x, dtype=float))
        eps = self.epsilon
        b = self._a + self._L[:, None] * self._u
        da = x[:, None, :] - self._a[None, :, :]
        db = x[:, None, :] - b[None, :, :]
        pa = kernels.bump_raw_s2((da ** 2).sum(axis=2) / eps ** 2)
        pb = kernels.bump_raw_s2((db ** 2).sum(axis=2) / eps ** 2)
        return self._c / eps ** 3 * ((pa - pb) * self._flux[None, :]).sum(axis=1)

    def divergence_quadrature(self, x) -> np.ndarray:
        """Independent route: trace of the kernel-derivative Jacobian."""
        J = self.jacobian(x)
        return np.trace(J, axis1=1, axis2=2)

    def plane_flux(self, z: float) -> float:
        """Integral of u_z over the horizontal plane at height z (semi-analytic).

        Horizontal carriers have zero vertical weight; vertical/slanted ones
        reduce to the plane-collapsed bump profile CDF along the carrier.
        """
        cdf = _plane_profile_cdf()
        total = 0.0
        for k in range(len(self.measure)):
            wz = self._w[k, 2]
            uz = self._u[k, 2]
            if abs(wz) < 1e-300 or abs(uz) < 1e-14:
                continue
            s_a = (z - self._a[k, 2]) / (uz * self.epsilon)
            s_b = (z - self._a[k, 2] - self._L[k] * uz) / (uz * self.epsilon)
            lo, hi = min(s_a, s_b), max(s_a, s_b)
            total += wz / abs(uz) * float(cdf(hi) - cdf(lo))
        return total


def mollify_measure(measure: VectorMeasure, epsilon: float,
                    quad_spec: QuadratureSpec | None = None) -> VelocityEvaluator:
    return VelocityEvaluator(measure, epsilon, quad_spec)


# ---------------------------------------------------------------------------
# scalar evaluator: phi_eps * 1_{lambda-tube around a skeleton}
# ---------------------------------------------------------------------------

class ScalarEvaluator:
    """sign * (phi_eps * indicator of the lambda-neighborhood of a skeleton)."""

    def __init__(self, skeleton: list[Carrier], lam: float, epsilon: float,
                 sign: int = 1, quad_spec: QuadratureSpec | None = None):
        if epsilon >= lam:
            raise ConfigError("config-error: epsilon >= lambda leaves no plateau")
        self.carriers = [c.clipped() if c.kind == "ray" else c for c in skeleton]
        self.lam = float(lam)
        self.epsilon = float(epsilon)
        self.sign = int(sign)
        self.quad_spec = quad_spec or QuadratureSpec()
        self._a, self._u, self._L = carrier_arrays(self.carriers)

    def _distances(self, x) -> np.ndarray:
        return kernels.segment_distances(x, self._a, self._u, self._L)

    def value_and_grad(self, x) -> tuple[np.ndarray, np.ndarray]:
        x = np.atleast_2d(np.asarray(x, dtype=float))
        n = x.shape[0]
        lam, eps, sign = self.lam, self.epsilon, self.sign
        vals = np.zeros(n)
        grads = np.zeros((n, 3))

        dists = self._distances(x)
        dmin = dists.min(axis=1)
        plateau = dmin <= lam - eps
        outside = dmin >= lam + eps
        vals[plateau] = sign

        trans = ~(plateau | outside)
        if not trans.any():
            return vals, grads

        idx = np.flatnonzero(trans)
        active = dists[idx] <= lam + eps
        n_active = active.sum(axis=1)
        target = np.where(active, dists[idx], np.inf).argmin(axis=1)

        # single straight carrier, kernel ball clear of its endpoints
        diff = x[idx] - self._a[target]
        t0 = np.einsum("nk,nk->n", diff, self._u[target])
        margin_ok = (t0 >= eps) & (t0 <= self._L[target] - eps)
        single = (n_active == 1) & margin_ok

        if single.any():
            ii = idx[single]
            tt = target[single]
            axis_pt = self._a[tt] + t0[single][:, None] * self._u[tt]
            radial = x[ii] - axis_pt
            r = np.linalg.norm(radial, axis=1)
            vals[ii] = sign * tube_profile(r, lam, eps)
            dv = tube_profile_deriv(r, lam, eps)
            safe = r > 1e-300
            grads[ii[safe]] = sign * (dv[safe] / r[safe])[:, None] * radial[safe]

        rest = idx[~single]
        if rest.size:
            v, g = self._qmc_eval(x[rest])
            vals[rest] = sign * v
            grads[rest] = sign * g
        return vals, grads

    def value(self, x) -> np.ndarray:
        return self.value_and_grad(x)[0]

    def _qmc_eval(self, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Low-discrepancy ball sampling of the mollified indicator.

        Deterministic (seeded Sobol), symmetrized; the tube boundary counts
        as inside.  A two-sample-count Richardson comparison is available
        via quad_spec by construction (run with mc_samples and mc_samples/2).
        """
        spec = self.quad_spec
        u, w_phi, w_grad = _ball_samples(spec.mc_samples, spec.seed)
        k = u.shape[0]
        eps = self.epsilon
        c = bump_constant()
        vol = 4.0 * math.pi / 3.0
        w_phi_sum = w_phi.sum()

        vals = np.empty(x.shape[0])
        grads = np.empty((x.shape[0], 3))
        step = max(1, int(2_000_000 // k))
        for lo in range(0, x.shape[0], step):
            hi = min(x.shape[0], lo + step)
            pos = x[lo:hi, None, :] + eps * u[None, :, :]
            flat = pos.reshape(-1, 3)
            member = (kernels.min_segment_distance(flat, self._a, self._u, self._L)
                      <= self.lam).reshape(hi - lo, k)
            vals[lo:hi] = (member * w_phi[None, :]).sum(axis=1) / w_phi_sum
            gw = member * w_grad[None, :]
            # samples live at y = x + eps*u, so grad_x phi_eps(x-y) carries -u
            grads[lo:hi] = -(c * vol / (k * eps)) * np.einsum("nk,kj->nj", gw, u)
        return vals, grads


def mollify_tube(skeleton: list[Carrier], lam: float, epsilon: float, sign: int = 1,
                 quad_spec: QuadratureSpec | None = None) -> ScalarEvaluator:
    return ScalarEvaluator(skeleton, lam, epsilon, sign, quad_spec)
