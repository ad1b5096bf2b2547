"""Pure-numpy implementations of the hot kernels.

Mirrors the API of the compiled extension `pipeflow._kernels`; selected as a
fallback at import time by `pipeflow.kernels`.
"""

from __future__ import annotations

import numpy as np

IMPL = "numpy"


def bump_raw_s2(s2: np.ndarray) -> np.ndarray:
    """exp(1/(s^2-1)) on s^2 < 1, else 0 (unnormalized radial bump vs squared arg)."""
    s2 = np.asarray(s2, dtype=float)
    out = np.zeros_like(s2)
    inside = s2 < 1.0
    t = s2[inside] - 1.0
    out[inside] = np.exp(1.0 / t)
    return out


def bump_raw_dr_over_r(s2: np.ndarray) -> np.ndarray:
    """phibar'(s)/s = -2 exp(1/(s^2-1)) / (s^2-1)^2 on s^2 < 1, else 0."""
    s2 = np.asarray(s2, dtype=float)
    out = np.zeros_like(s2)
    inside = s2 < 1.0
    t = s2[inside] - 1.0
    out[inside] = -2.0 * np.exp(1.0 / t) / (t * t)
    return out


def segment_distances(x: np.ndarray, a: np.ndarray, u: np.ndarray,
                      L: np.ndarray) -> np.ndarray:
    """Distances from points x (n,3) to segments {a + t u, 0 <= t <= L} (m of them)."""
    diff = x[:, None, :] - a[None, :, :]
    t = np.einsum("nmk,mk->nm", diff, u)
    t = np.clip(t, 0.0, L[None, :])
    closest = a[None, :, :] + t[:, :, None] * u[None, :, :]
    return np.linalg.norm(x[:, None, :] - closest, axis=2)


def min_segment_distance(x: np.ndarray, a: np.ndarray, u: np.ndarray,
                         L: np.ndarray) -> np.ndarray:
    """Min over carriers of segment_distances, chunked to bound memory."""
    n = x.shape[0]
    out = np.empty(n)
    step = max(1, int(4_000_000 // max(1, a.shape[0])))
    for lo in range(0, n, step):
        hi = min(n, lo + step)
        out[lo:hi] = segment_distances(x[lo:hi], a, u, L).min(axis=1)
    return out


def line_conv(x: np.ndarray, a: np.ndarray, u: np.ndarray, L: np.ndarray,
              eps: float, nodes: np.ndarray, wts: np.ndarray,
              want_grad: bool):
    """Gauss-Legendre line integrals of the eps-mollifier along carriers.

    Returns S (n,m) with S = (1/eps^3) * integral of phibar(|x - y(t)|/eps) dt
    over the sub-interval of [0, L] where |x - y(t)| <= eps, and, if
    want_grad, G (n,m,3) = (1/eps^3) * integral of grad_x phibar(|x-y|/eps).
    The bump normalization constant is NOT applied here.
    """
    n, m = x.shape[0], a.shape[0]
    diff = x[:, None, :] - a[None, :, :]               # (n,m,3)
    b_lin = np.einsum("nmk,mk->nm", diff, u)           # projection onto axis
    d2 = np.einsum("nmk,nmk->nm", diff, diff) - b_lin ** 2
    np.clip(d2, 0.0, None, out=d2)
    h2 = eps * eps - d2
    active = h2 > 0.0
    half_chord = np.sqrt(np.where(active, h2, 0.0))
    t1 = np.clip(b_lin - half_chord, 0.0, L[None, :])
    t2 = np.clip(b_lin + half_chord, 0.0, L[None, :])
    mid = 0.5 * (t1 + t2)
    half = 0.5 * (t2 - t1)
    active &= half > 0.0

    S = np.zeros((n, m))
    G = np.zeros((n, m, 3)) if want_grad else None
    if not active.any():
        return (S, G) if want_grad else S

    # |x - y(t)|^2 = d2 + (t - b_lin)^2 : evaluate on GL nodes of each interval
    tk = mid[:, :, None] + half[:, :, None] * nodes[None, None, :]   # (n,m,K)
    s2 = (d2[:, :, None] + (tk - b_lin[:, :, None]) ** 2) / (eps * eps)
    vals = bump_raw_s2(s2)
    S = (vals * wts[None, None, :]).sum(axis=2) * half / eps ** 3
    S[~active] = 0.0
    if want_grad:
        g = bump_raw_dr_over_r(s2) / (eps * eps)       # phibar'(r/eps)/(r*eps) vs r
        gw = g * wts[None, None, :]
        A = (gw).sum(axis=2) * half                      # multiplies diff
        B = -(gw * tk).sum(axis=2) * half                # multiplies u
        A[~active] = 0.0
        B[~active] = 0.0
        G = (A[:, :, None] * diff + B[:, :, None] * u[None, :, :]) / eps ** 3
        return S, G
    return S
