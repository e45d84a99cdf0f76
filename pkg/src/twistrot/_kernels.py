"""Compiled inner loops.

Maps are passed as trigonometric-polynomial tables (frequencies plus cos/sin
coefficients), so one set of compiled kernels serves every map the grammar
can express.
"""

import math

import numpy as np
from numba import njit

TWO_PI = 2.0 * math.pi


@njit(cache=True, nogil=True, inline="always")
def step(FQ, CO, PS, k, t, x, y):
    """One step of the lift; ``FQ`` holds shared frequencies, ``CO`` the
    (cos, sin) coefficients of phi1 and phi2 for each of them."""
    p1 = 0.0
    p2 = 0.0
    if FQ.shape[0]:
        xr = x - np.floor(x)
        yr = y - np.floor(y)
        for i in range(FQ.shape[0]):
            th = TWO_PI * (FQ[i, 0] * xr + FQ[i, 1] * yr)
            c = math.cos(th)
            sn = math.sin(th)
            p1 += CO[i, 0] * c + CO[i, 1] * sn
            p2 += CO[i, 2] * c + CO[i, 3] * sn
    xn = x + k * y + p1
    yn = y + p2 + t
    # fiber translation psi(x'), usually empty
    if PS.shape[0]:
        xr = xn - np.floor(xn)
        for i in range(PS.shape[0]):
            th = TWO_PI * PS[i, 0] * xr
            yn += PS[i, 2] * math.cos(th) + PS[i, 3] * math.sin(th)
    return xn, yn


@njit(cache=True, nogil=True, inline="always")
def step_jac(FQ, CO, PS, k, t, x, y):
    xr = x - np.floor(x)
    yr = y - np.floor(y)
    p1 = 0.0
    p2 = 0.0
    p1x = 0.0
    p1y = 0.0
    p2x = 0.0
    p2y = 0.0
    for i in range(FQ.shape[0]):
        th = TWO_PI * (FQ[i, 0] * xr + FQ[i, 1] * yr)
        c = math.cos(th)
        sn = math.sin(th)
        p1 += CO[i, 0] * c + CO[i, 1] * sn
        p2 += CO[i, 2] * c + CO[i, 3] * sn
        w1 = TWO_PI * (-CO[i, 0] * sn + CO[i, 1] * c)
        w2 = TWO_PI * (-CO[i, 2] * sn + CO[i, 3] * c)
        p1x += FQ[i, 0] * w1
        p1y += FQ[i, 1] * w1
        p2x += FQ[i, 0] * w2
        p2y += FQ[i, 1] * w2
    xn = x + k * y + p1
    yn = y + p2 + t
    a = 1.0 + p1x
    b = k + p1y
    c = p2x
    d = 1.0 + p2y
    xr = xn - np.floor(xn)
    psx = 0.0
    for i in range(PS.shape[0]):
        th = TWO_PI * PS[i, 0] * xr
        cp = math.cos(th)
        sp = math.sin(th)
        yn += PS[i, 2] * cp + PS[i, 3] * sp
        psx += TWO_PI * PS[i, 0] * (-PS[i, 2] * sp + PS[i, 3] * cp)
    c += psx * a
    d += psx * b
    return xn, yn, a, b, c, d


@njit(cache=True, nogil=True)
def iterate(FQ, CO, PS, k, t, xs, ys, q):
    n = xs.shape[0]
    ox = np.empty(n)
    oy = np.empty(n)
    for i in range(n):
        x = xs[i]
        y = ys[i]
        for _ in range(q):
            x, y = step(FQ, CO, PS, k, t, x, y)
        ox[i] = x
        oy[i] = y
    return ox, oy


@njit(cache=True, nogil=True)
def iterate_jac(FQ, CO, PS, k, t, xs, ys, q):
    """Points after ``q`` steps and the chain-rule product of differentials."""
    n = xs.shape[0]
    ox = np.empty(n)
    oy = np.empty(n)
    J = np.empty((n, 2, 2))
    for i in range(n):
        x = xs[i]
        y = ys[i]
        m00 = 1.0
        m01 = 0.0
        m10 = 0.0
        m11 = 1.0
        for _ in range(q):
            x, y, a, b, c, d = step_jac(FQ, CO, PS, k, t, x, y)
            n00 = a * m00 + b * m10
            n01 = a * m01 + b * m11
            n10 = c * m00 + d * m10
            n11 = c * m01 + d * m11
            m00, m01, m10, m11 = n00, n01, n10, n11
        ox[i] = x
        oy[i] = y
        J[i, 0, 0] = m00
        J[i, 0, 1] = m01
        J[i, 1, 0] = m10
        J[i, 1, 1] = m11
    return ox, oy, J


@njit(cache=True, nogil=True)
def orbit_rho(FQ, CO, PS, k, t, xs, ys, n, bound):
    """Vertical displacement rate and oscillation radius for each seed.

    The radius is ``(max - min)/n`` of the detrended cumulative displacement
    ``d_i - i*rho`` over the final half of the orbit.  Returns a status array
    that is 1 where ``|y|`` left the displacement bound.
    """
    m = xs.shape[0]
    val = np.empty(m)
    rad = np.empty(m)
    status = np.zeros(m, dtype=np.int64)
    h = n // 2
    buf = np.empty(n - h + 1)
    for i in range(m):
        x = xs[i]
        y = ys[i]
        y0 = y
        for j in range(1, n + 1):
            x, y = step(FQ, CO, PS, k, t, x, y)
            if j >= h:
                buf[j - h] = y - y0
            # keep x small; the vertical coordinate carries the displacement
            x -= np.floor(x)
        d = y - y0
        if not (abs(d) <= bound * n + 1.0):
            status[i] = 1
        rho = d / n
        lo = math.inf
        hi = -math.inf
        for j in range(n - h + 1):
            e = buf[j] - (j + h) * rho
            if e < lo:
                lo = e
            if e > hi:
                hi = e
        val[i] = rho
        rad[i] = (hi - lo) / n
    return val, rad, status
