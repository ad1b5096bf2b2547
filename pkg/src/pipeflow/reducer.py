"""The axisymmetric reducer: contracts a radius-gamma pipe to radius gamma/2.

Built from the streamfunction pair Psi_s, Psi_e blended by a smooth cutoff
eta in the axial coordinate; divergence-free by construction.  The canonical
reducer is oriented along +x with the transition on 0 < x < gamma and unit
volume flux.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .mollify import line_profile, line_profile_deriv, radial_moment

__all__ = ["ReducerProfile", "psi_profiles", "cutoff_eta", "cutoff_eta_deriv",
           "reducer_velocity", "reducer_jacobian", "reducer_divergence"]


def psi_profiles(r, gamma: float):
    """(Psi_s, Psi_e): cumulative flux profiles of the wide and narrow pipes.

    Psi_s(r) = int_0^|r| r' m(r') dr' and Psi_e(r) = Psi_s(2r); both reach
    the terminal value 1/(2*pi) (total flux / 2*pi).
    """
    s = np.abs(np.asarray(r, dtype=float)) / gamma
    return radial_moment(s), radial_moment(2.0 * s)


def _B(s):
    out = np.zeros_like(s)
    pos = s > 0
    out[pos] = np.exp(-1.0 / s[pos])
    return out


def cutoff_eta(s):
    """Smooth cutoff: exactly 0 for s <= 0, exactly 1 for s >= 1.

    eta(s) = B(s)/(B(s)+B(1-s)) with B(s) = exp(-1/s); symmetric about 1/2.
    """
    s = np.asarray(s, dtype=float)
    out = np.empty_like(s)
    lo = s <= 0.0
    hi = s >= 1.0
    mid = ~(lo | hi)
    out[lo] = 0.0
    out[hi] = 1.0
    sm = s[mid]
    b1 = _B(sm)
    b2 = _B(1.0 - sm)
    out[mid] = b1 / (b1 + b2)
    return out


def cutoff_eta_deriv(s):
    """eta'(s) = B(s)B(1-s)[s^-2 + (1-s)^-2] / (B(s)+B(1-s))^2, 0 outside (0,1)."""
    s = np.asarray(s, dtype=float)
    out = np.zeros_like(s)
    mid = (s > 1e-3) & (s < 1.0 - 1e-3)
    sm = s[mid]
    b1 = _B(sm)
    b2 = _B(1.0 - sm)
    out[mid] = b1 * b2 * (sm ** -2 + (1.0 - sm) ** -2) / (b1 + b2) ** 2
    return out


def cutoff_eta_deriv2(s):
    """Second derivative of eta, for the Jacobian of the reducer field."""
    s = np.asarray(s, dtype=float)
    out = np.zeros_like(s)
    mid = (s > 1e-3) & (s < 1.0 - 1e-3)
    sm = s[mid]
    A = _B(sm)
    C = _B(1.0 - sm)
    dA = A / sm ** 2
    dC = -C / (1.0 - sm) ** 2
    P = A * C
    R = sm ** -2 + (1.0 - sm) ** -2
    S = (A + C) ** 2
    dP = dA * C + A * dC
    dR = -2.0 * sm ** -3 + 2.0 * (1.0 - sm) ** -3
    dS = 2.0 * (A + C) * (dA + dC)
    out[mid] = (dP * R + P * dR) / S - P * R * dS / S ** 2
    return out


@dataclass(frozen=True)
class ReducerProfile:
    """Tabulated radial machinery for one gamma (profiles are in mollify)."""

    gamma: float

    def m(self, rho):
        return line_profile(np.asarray(rho) / self.gamma) / self.gamma ** 2

    def m_deriv(self, rho):
        return line_profile_deriv(np.asarray(rho) / self.gamma) / self.gamma ** 3

    def psi_s(self, rho):
        return radial_moment(np.asarray(rho) / self.gamma)

    def psi_e(self, rho):
        return radial_moment(2.0 * np.asarray(rho) / self.gamma)


def _rho_split(x):
    """(rho, unit-y, unit-z) with the axis limit handled."""
    rho = np.hypot(x[:, 1], x[:, 2])
    return rho


def reducer_velocity(x, gamma: float) -> np.ndarray:
    """The canonical reducer field: matches (m(rho),0,0) for x<=0 and
    (4m(2rho),0,0) for x>=gamma; supported in rho <= gamma."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    prof = ReducerProfile(gamma)
    rho = _rho_split(x)
    eta = cutoff_eta(x[:, 0] / gamma)
    etad = cutoff_eta_deriv(x[:, 0] / gamma) / gamma
    ux = (1.0 - eta) * prof.m(rho) + 4.0 * prof.m(2.0 * rho) * eta

    # F(rho) = (Psi_s - Psi_e)/rho^2, with its finite rho -> 0 limit
    F = np.empty_like(rho)
    small = rho < 1e-9 * gamma
    rs = rho[~small]
    F[~small] = (prof.psi_s(rs) - prof.psi_e(rs)) / rs ** 2
    F[small] = -1.5 * prof.m(np.zeros(small.sum()))
    uy = x[:, 1] * etad * F
    uz = x[:, 2] * etad * F
    return np.stack([ux, uy, uz], axis=1)


def reducer_jacobian(x, gamma: float) -> np.ndarray:
    """Analytic Jacobian J[n,i,j] = d u_i / d x_j of the reducer field."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    n = x.shape[0]
    prof = ReducerProfile(gamma)
    rho = _rho_split(x)
    y, z = x[:, 1], x[:, 2]
    eta = cutoff_eta(x[:, 0] / gamma)
    etad = cutoff_eta_deriv(x[:, 0] / gamma) / gamma
    etadd = cutoff_eta_deriv2(x[:, 0] / gamma) / gamma ** 2

    m1 = prof.m(rho)
    m2 = prof.m(2.0 * rho)
    dm1 = prof.m_deriv(rho)
    dm2 = 2.0 * prof.m_deriv(2.0 * rho)

    small = rho < 1e-9 * gamma
    rs = np.where(small, 1.0, rho)
    F = (prof.psi_s(rho) - prof.psi_e(rho)) / rs ** 2
    F[small] = -1.5 * prof.m(np.zeros(1))[0] if small.any() else F[small]
    # F'(rho) = (m(rho) - 4 m(2 rho))/rho - 2F/rho ; odd-order zero at the axis
    Fp = np.where(small, 0.0, (m1 - 4.0 * m2) / rs - 2.0 * F / rs)

    J = np.zeros((n, 3, 3))
    # du_x
    J[:, 0, 0] = etad * (4.0 * m2 - m1)
    with np.errstate(invalid="ignore"):
        drho_dy = np.where(small, 0.0, y / rs)
        drho_dz = np.where(small, 0.0, z / rs)
    J[:, 0, 1] = ((1.0 - eta) * dm1 + 4.0 * eta * dm2) * drho_dy
    J[:, 0, 2] = ((1.0 - eta) * dm1 + 4.0 * eta * dm2) * drho_dz
    # du_y = y * etad * F
    J[:, 1, 0] = y * etadd * F
    J[:, 1, 1] = etad * (F + y * Fp * drho_dy)
    J[:, 1, 2] = etad * y * Fp * drho_dz
    # du_z = z * etad * F
    J[:, 2, 0] = z * etadd * F
    J[:, 2, 1] = etad * z * Fp * drho_dy
    J[:, 2, 2] = etad * (F + z * Fp * drho_dz)
    return J


def reducer_divergence(x, gamma: float) -> np.ndarray:
    """Trace of the analytic Jacobian; zero up to table interpolation error."""
    J = reducer_jacobian(x, gamma)
    return np.trace(J, axis1=1, axis2=2)
