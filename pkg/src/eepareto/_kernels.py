"""Compiled hot loop for the two-cell dual solve.

For K = 2 the per-link dual has two coordinates (one caused-interference cap,
one transmit power cap) and the inner maximiser reduces to scalar algebra via
a rank-one matrix-inversion identity, so the whole central-cut ellipsoid loop
runs on plain floats.  A generic numpy implementation of the same algorithm
lives in :mod:`eepareto.solver` and serves as the reference path for all K.
"""
import math

try:
    from numba import njit

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    HAVE_NUMBA = False

    def njit(*args, **kwargs):
        def wrap(fn):
            return fn

        if args and callable(args[0]):
            return args[0]
        return wrap

INV_LN2 = 1.0 / math.log(2.0)


@njit(cache=True)
def ellipsoid_two_cell(
    hh,
    gg,
    ch2,
    nu,
    gamma,
    beta0,
    pc,
    pk,
    cap_own,
    lam_max,
    tol,
    max_iter,
):
    """Minimize the dual of the parametric program over (lam_it, lam_pow).

    hh = |h_kk|^2, gg = |h_kj|^2, ch2 = |h_kj^H h_kk|^2, beta0 = gamma/eta.
    Returns (lam_it, lam_pow, g_best, iterations, status) with status 1 when
    the subgradient certificate sqrt(a^T P a) <= tol fired, else 0.
    """
    # ball of radius sqrt(2)*lam_max around (lam_max, lam_max) covers the
    # dual box [0, 2*lam_max]^2
    z1 = lam_max
    z2 = lam_max
    r2 = 2.0 * lam_max * lam_max
    p11 = r2
    p12 = 0.0
    p22 = r2

    g_best = math.inf
    b1 = 0.0
    b2 = 0.0
    status = 0
    it = 0
    for it in range(max_iter):
        if z1 < 0.0 or z2 < 0.0:
            # feasibility cut along the most negative coordinate
            if z1 <= z2:
                a1 = -1.0
                a2 = 0.0
            else:
                a1 = 0.0
                a2 = -1.0
        else:
            beta = z2 + beta0
            den = beta + z1 * gg
            u = z1 / den
            q = (hh - u * ch2) / beta
            if q > 0.0:
                t = INV_LN2 - nu / q
            else:
                t = 0.0
            if t > 0.0:
                rate = math.log(1.0 + t * q / nu) * INV_LN2
                sc = t / q
                caused = sc * ch2 / (den * den)
                bh2 = (hh - ch2 * u * (2.0 - u * gg)) / (beta * beta)
                tr = sc * bh2
            else:
                t = 0.0
                rate = 0.0
                caused = 0.0
                tr = 0.0
            g_val = rate - t - gamma * pc + z2 * pk + z1 * cap_own
            if g_val < g_best:
                g_best = g_val
                b1 = z1
                b2 = z2
            a1 = cap_own - caused
            a2 = pk - tr
            aPa = (
                a1 * (p11 * a1 + p12 * a2)
                + a2 * (p12 * a1 + p22 * a2)
            )
            if aPa <= 0.0 or math.sqrt(max(aPa, 0.0)) <= tol:
                status = 1
                break
        pa1 = p11 * a1 + p12 * a2
        pa2 = p12 * a1 + p22 * a2
        aPa = a1 * pa1 + a2 * pa2
        if aPa <= 0.0:
            # ellipsoid has collapsed numerically; keep the best iterate
            status = 1 if g_best < math.inf else 0
            break
        s = math.sqrt(aPa)
        z1 -= pa1 / (3.0 * s)
        z2 -= pa2 / (3.0 * s)
        f = 4.0 / 3.0
        g = 2.0 / 3.0
        p11 = f * (p11 - g * pa1 * pa1 / aPa)
        p12 = f * (p12 - g * pa1 * pa2 / aPa)
        p22 = f * (p22 - g * pa2 * pa2 / aPa)
    return b1, b2, g_best, it + 1, status
