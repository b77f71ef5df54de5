"""Adaptive Dormand-Prince 4(5) stepper for the regularized 2x2 system.

The state Y = (Y1, Y2) obeys

    Y1' = ( w(t) * Y1 + Y2 ) / p,
    Y2' = (-w(t)^2 * Y1 - w(t) * Y2 ) / p,

with w a cubic polynomial and p a constant on each piece of the supplied
grid.  Pieces never straddle coefficient breakpoints or atoms, so every
step sees smooth data; the quasi-derivative Y2 is continuous across piece
boundaries and no transfer is applied there.

The trajectory of a homogeneous linear system is scale-invariant, so the
state is renormalized to unit magnitude whenever it exceeds
``renorm_threshold``; the accumulated log-scale is recorded per node.

The kernel is JIT-compiled with numba when available and otherwise runs as
plain Python (identical numerics, slower).
"""

from __future__ import annotations

import numpy as np

try:
    from numba import njit

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - exercised only without numba
    HAVE_NUMBA = False

    def njit(*args, **kwargs):
        if len(args) == 1 and callable(args[0]):
            return args[0]

        def deco(fn):
            return fn

        return deco


STATUS_OK = 0
STATUS_STEP_FAILURE = 1
STATUS_DEGENERATE = 2

# Dormand-Prince 5(4) tableau
_A21 = 1.0 / 5.0
_A31, _A32 = 3.0 / 40.0, 9.0 / 40.0
_A41, _A42, _A43 = 44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0
_A51, _A52, _A53, _A54 = (19372.0 / 6561.0, -25360.0 / 2187.0,
                          64448.0 / 6561.0, -212.0 / 729.0)
_A61, _A62, _A63, _A64, _A65 = (9017.0 / 3168.0, -355.0 / 33.0,
                                46732.0 / 5247.0, 49.0 / 176.0,
                                -5103.0 / 18656.0)
_B1, _B3, _B4, _B5, _B6 = (35.0 / 384.0, 500.0 / 1113.0, 125.0 / 192.0,
                           -2187.0 / 6784.0, 11.0 / 84.0)
_E1, _E3, _E4, _E5, _E6, _E7 = (71.0 / 57600.0, -71.0 / 16695.0,
                                71.0 / 1920.0, -17253.0 / 339200.0,
                                22.0 / 525.0, -1.0 / 40.0)


@njit(cache=True, nogil=True)
def _grow(arr):
    out = np.empty(arr.size * 2, dtype=arr.dtype)
    out[: arr.size] = arr
    return out


@njit(cache=True, nogil=True)
def integrate_system(grid, pvals, wc, y1_init, y2_init, rtol, atol,
                     renorm_threshold, max_step):
    """Integrate over all pieces of ``grid``; returns node-wise records.

    Returns (t, y1, y2, f1, f2, logscale, n_nodes, n_accept, n_reject,
    status).  Node 0 is the initial state; every accepted step appends one
    node, and piece boundaries always coincide with nodes.
    """
    cap = 1024
    t_out = np.empty(cap)
    y1_out = np.empty(cap)
    y2_out = np.empty(cap)
    f1_out = np.empty(cap)
    f2_out = np.empty(cap)
    ls_out = np.empty(cap)

    y1 = y1_init
    y2 = y2_init
    logscale = 0.0
    n = 0
    n_accept = 0
    n_reject = 0
    status = STATUS_OK

    # initial node (derivative from the first piece's coefficients)
    p0 = pvals[0]
    t0g = grid[0]
    w0 = wc[0, 0] + t0g * (wc[0, 1] + t0g * (wc[0, 2] + t0g * wc[0, 3]))
    t_out[0] = t0g
    y1_out[0] = y1
    y2_out[0] = y2
    f1_out[0] = (w0 * y1 + y2) / p0
    f2_out[0] = (-w0 * w0 * y1 - w0 * y2) / p0
    ls_out[0] = logscale
    n = 1

    for piece in range(grid.size - 1):
        ta = grid[piece]
        tb = grid[piece + 1]
        p = pvals[piece]
        c0 = wc[piece, 0]
        c1 = wc[piece, 1]
        c2 = wc[piece, 2]
        c3 = wc[piece, 3]

        t = ta
        # first stage (FSAL restart at each piece: coefficients change)
        w = c0 + t * (c1 + t * (c2 + t * c3))
        k11 = (w * y1 + y2) / p
        k12 = (-w * w * y1 - w * y2) / p

        # initial step size from the local derivative scale
        span = tb - ta
        sc1 = atol + rtol * abs(y1)
        sc2 = atol + rtol * abs(y2)
        d0 = np.sqrt(0.5 * ((y1 / sc1) ** 2 + (y2 / sc2) ** 2))
        d1 = np.sqrt(0.5 * ((k11 / sc1) ** 2 + (k12 / sc2) ** 2))
        if d1 > 1e-30:
            h = min(span, 0.01 * d0 / d1 + 1e-3 * span)
        else:
            h = span
        if h > max_step:
            h = max_step
        if h > span:
            h = span

        while t < tb:
            if t + h >= tb:
                h = tb - t
            hmin = 1e-14 * (abs(t) + 1.0)
            # stages 2..6
            tt = t + _A21 * h
            w = c0 + tt * (c1 + tt * (c2 + tt * c3))
            u1 = y1 + h * _A21 * k11
            u2 = y2 + h * _A21 * k12
            k21 = (w * u1 + u2) / p
            k22 = (-w * w * u1 - w * u2) / p

            tt = t + 0.3 * h
            w = c0 + tt * (c1 + tt * (c2 + tt * c3))
            u1 = y1 + h * (_A31 * k11 + _A32 * k21)
            u2 = y2 + h * (_A31 * k12 + _A32 * k22)
            k31 = (w * u1 + u2) / p
            k32 = (-w * w * u1 - w * u2) / p

            tt = t + 0.8 * h
            w = c0 + tt * (c1 + tt * (c2 + tt * c3))
            u1 = y1 + h * (_A41 * k11 + _A42 * k21 + _A43 * k31)
            u2 = y2 + h * (_A41 * k12 + _A42 * k22 + _A43 * k32)
            k41 = (w * u1 + u2) / p
            k42 = (-w * w * u1 - w * u2) / p

            tt = t + (8.0 / 9.0) * h
            w = c0 + tt * (c1 + tt * (c2 + tt * c3))
            u1 = y1 + h * (_A51 * k11 + _A52 * k21 + _A53 * k31 + _A54 * k41)
            u2 = y2 + h * (_A51 * k12 + _A52 * k22 + _A53 * k32 + _A54 * k42)
            k51 = (w * u1 + u2) / p
            k52 = (-w * w * u1 - w * u2) / p

            tt = t + h
            w = c0 + tt * (c1 + tt * (c2 + tt * c3))
            u1 = y1 + h * (_A61 * k11 + _A62 * k21 + _A63 * k31 + _A64 * k41
                           + _A65 * k51)
            u2 = y2 + h * (_A61 * k12 + _A62 * k22 + _A63 * k32 + _A64 * k42
                           + _A65 * k52)
            k61 = (w * u1 + u2) / p
            k62 = (-w * w * u1 - w * u2) / p

            # 5th order solution and its derivative (stage 7, FSAL)
            v1 = y1 + h * (_B1 * k11 + _B3 * k31 + _B4 * k41 + _B5 * k51
                           + _B6 * k61)
            v2 = y2 + h * (_B1 * k12 + _B3 * k32 + _B4 * k42 + _B5 * k52
                           + _B6 * k62)
            k71 = (w * v1 + v2) / p
            k72 = (-w * w * v1 - w * v2) / p

            e1 = h * (_E1 * k11 + _E3 * k31 + _E4 * k41 + _E5 * k51
                      + _E6 * k61 + _E7 * k71)
            e2 = h * (_E1 * k12 + _E3 * k32 + _E4 * k42 + _E5 * k52
                      + _E6 * k62 + _E7 * k72)
            sc1 = atol + rtol * max(abs(y1), abs(v1))
            sc2 = atol + rtol * max(abs(y2), abs(v2))
            err = np.sqrt(0.5 * ((e1 / sc1) ** 2 + (e2 / sc2) ** 2))

            if err <= 1.0:
                t = t + h
                y1 = v1
                y2 = v2
                k11 = k71
                k12 = k72
                n_accept += 1
                if n >= t_out.size:
                    t_out = _grow(t_out)
                    y1_out = _grow(y1_out)
                    y2_out = _grow(y2_out)
                    f1_out = _grow(f1_out)
                    f2_out = _grow(f2_out)
                    ls_out = _grow(ls_out)
                t_out[n] = t
                y1_out[n] = y1
                y2_out[n] = y2
                f1_out[n] = k11
                f2_out[n] = k12
                ls_out[n] = logscale
                n += 1
                mag = max(abs(y1), abs(y2))
                if mag == 0.0:
                    status = STATUS_DEGENERATE
                    return (t_out[:n], y1_out[:n], y2_out[:n], f1_out[:n],
                            f2_out[:n], ls_out[:n], n, n_accept, n_reject,
                            status)
                if mag > renorm_threshold or mag < 1.0 / renorm_threshold:
                    # rescale the running state only; the node just written
                    # keeps its own scale (per-node logscale records it)
                    y1 /= mag
                    y2 /= mag
                    k11 /= mag
                    k12 /= mag
                    logscale += np.log(mag)
                if err > 1e-30:
                    fac = 0.9 * err ** -0.2
                else:
                    fac = 5.0
                if fac > 5.0:
                    fac = 5.0
                h = h * fac
                if h > max_step:
                    h = max_step
            else:
                n_reject += 1
                fac = 0.9 * err ** -0.2
                if fac < 0.2:
                    fac = 0.2
                if fac > 1.0:
                    fac = 1.0
                h = h * fac
                if h < hmin:
                    status = STATUS_STEP_FAILURE
                    return (t_out[:n], y1_out[:n], y2_out[:n], f1_out[:n],
                            f2_out[:n], ls_out[:n], n, n_accept, n_reject,
                            status)

    return (t_out[:n], y1_out[:n], y2_out[:n], f1_out[:n], f2_out[:n],
            ls_out[:n], n, n_accept, n_reject, status)


@njit(cache=True, nogil=True)
def sturm_negative_count(diag, off, shift, pivmin):
    """Number of eigenvalues of the symmetric tridiagonal matrix < shift.

    Plain LDL^T pivot recurrence (Sylvester): the count of negative pivots
    of A - shift*I equals the count of eigenvalues below the shift.  Pivots
    smaller in magnitude than ``pivmin`` are replaced by -pivmin, the
    standard bisection safeguard.
    """
    count = 0
    d = diag[0] - shift
    if abs(d) < pivmin:
        d = -pivmin
    if d < 0.0:
        count += 1
    for i in range(1, diag.size):
        d = diag[i] - shift - off[i - 1] * off[i - 1] / d
        if abs(d) < pivmin:
            d = -pivmin
        if d < 0.0:
            count += 1
    return count
