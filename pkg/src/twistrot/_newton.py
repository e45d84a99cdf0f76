"""Batch damped Newton solver for ``F^q(z) = z + (s, p)``."""

from __future__ import annotations

import numpy as np

from .maps import LiftSpec

MAX_STEP = 0.5


def periodic_residual(L: LiftSpec, s, p, q, x, y):
    fx, fy = L.iterate(x, y, q)
    return fx - x - s, fy - y - p


def solve_periodic(L: LiftSpec, s: int, p: int, q: int, x0, y0, maxit: int = 60, tol: float = 1e-13):
    """Levenberg-Marquardt iteration from many seeds at once.

    Returns ``(x, y, residual)`` with residual the max-norm of the defect.
    The damping keeps the iteration well defined at degenerate
    (non-isolated) solutions, where plain Newton is singular.
    """
    x = np.array(x0, dtype=np.float64, copy=True).ravel()
    y = np.array(y0, dtype=np.float64, copy=True).ravel()
    mu = np.full(x.shape, 1e-12)
    fx, fy, J = L.iterate_jac(x, y, q)
    gx, gy = fx - x - s, fy - y - p
    res = np.maximum(np.abs(gx), np.abs(gy))
    active = np.isfinite(res)
    for _ in range(maxit):
        active &= (res > tol) & (mu < 1e8)
        if not np.any(active):
            break
        idx = np.nonzero(active)[0]
        a = J[idx, 0, 0] - 1.0
        b = J[idx, 0, 1]
        c = J[idx, 1, 0]
        d = J[idx, 1, 1] - 1.0
        # normal equations (A^T A + mu I) dz = -A^T g
        scale = 1.0 + a * a + b * b + c * c + d * d
        m = mu[idx] * scale
        n00 = a * a + c * c + m
        n01 = a * b + c * d
        n11 = b * b + d * d + m
        r0 = -(a * gx[idx] + c * gy[idx])
        r1 = -(b * gx[idx] + d * gy[idx])
        det = n00 * n11 - n01 * n01
        dx = (n11 * r0 - n01 * r1) / det
        dy = (-n01 * r0 + n00 * r1) / det
        norm = np.hypot(dx, dy)
        shrink = np.minimum(1.0, MAX_STEP / np.maximum(norm, 1e-300))
        tx = x[idx] + shrink * dx
        ty = y[idx] + shrink * dy
        tfx, tfy, tJ = L.iterate_jac(tx, ty, q)
        tgx, tgy = tfx - tx - s, tfy - ty - p
        tres = np.maximum(np.abs(tgx), np.abs(tgy))
        ok = np.isfinite(tres) & (tres < res[idx])
        acc = idx[ok]
        x[acc], y[acc] = tx[ok], ty[ok]
        gx[acc], gy[acc] = tgx[ok], tgy[ok]
        J[acc] = tJ[ok]
        res[acc] = tres[ok]
        mu[acc] = np.maximum(mu[acc] * 0.1, 1e-15)
        rej = idx[~ok]
        mu[rej] *= 10.0
    return x, y, res
