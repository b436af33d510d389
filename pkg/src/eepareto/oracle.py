"""Independent reference computations used to cross-check the solver.

Nothing here shares iteration machinery with :mod:`eepareto.solver`; these
routines settle disagreements and back the acceptance tests.

* a brute-force beamformer/power cloud for two-cell scenarios, reduced to
  its exact non-dominated frontier,
* a zooming grid minimizer of the parametric dual,
* a projected-gradient maximizer of the parametric primal, and
* finite-difference sensitivities of the per-link efficiency.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .model import ConfigurationError, Covariance, Scenario
from .solver import ITVector, dinkelbach_bisection, effective_noise

LN2 = math.log(2.0)
INV_LN2 = 1.0 / LN2


# ---------------------------------------------------------------------------
# brute-force achievable cloud (two links)
# ---------------------------------------------------------------------------


@dataclass
class OracleCloud:
    """Non-dominated frontier of a sampled two-link efficiency cloud.

    frontier rows are (ee_0, ee_1) sorted by ee_0 ascending with ee_1
    non-increasing, so each column is a staircase.
    """

    frontier: np.ndarray
    num_points: int

    def best_other(self, axis, floor):
        """Largest frontier value on the other axis among points whose
        ``axis`` coordinate is at least ``floor``."""
        f_this = self.frontier[:, axis]
        f_other = self.frontier[:, 1 - axis]
        if axis == 0:
            # f_this ascending, f_other non-increasing: the first point at
            # or above the floor carries the largest other-coordinate
            pos = int(np.searchsorted(f_this, floor, side="left"))
            if pos >= f_this.shape[0]:
                return -math.inf
            return float(f_other[pos])
        # axis 1: descending in the stored order
        rev_this = f_this[::-1]
        rev_other = f_other[::-1]
        pos = int(np.searchsorted(rev_this, floor, side="left"))
        if pos >= rev_this.shape[0]:
            return -math.inf
        return float(rev_other[pos])

    def max_improvement(self, point, match_slack=1e-9):
        """Largest relative gain the cloud offers in one coordinate while
        holding the other at least at the candidate's value (up to a
        relative matching slack).  Zero means the candidate is on or
        outside the sampled frontier."""
        best = 0.0
        for axis in (0, 1):
            own = float(point[axis])
            other = float(point[1 - axis])
            reachable = self.best_other(axis, own * (1.0 - match_slack))
            if reachable == -math.inf:
                continue
            if other <= 0.0:
                if reachable > 0.0:
                    return math.inf
                continue
            best = max(best, reachable / other - 1.0)
        return best

    def dominates(self, point, rel_margin):
        return self.max_improvement(point) > rel_margin


def _beam_directions(h_own, h_cross, n_angle):
    """Unit beamformers swept between the zero-leakage and matched beams."""
    nrm = float(np.linalg.norm(h_own))
    if nrm == 0.0:
        return np.zeros((0, h_own.shape[0]), dtype=complex)
    u_mrt = h_own / nrm
    dirs = []
    cn = float(np.linalg.norm(h_cross))
    if cn > 0.0:
        zf = h_own - h_cross * (np.vdot(h_cross, h_own) / (cn * cn))
        zn = float(np.linalg.norm(zf))
    else:
        zn = 0.0
    if zn > 1e-12 * nrm:
        u_zf = zf / zn
        for t in np.linspace(0.0, 1.0, n_angle):
            v = (1.0 - t) * u_zf + t * u_mrt
            vn = float(np.linalg.norm(v))
            if vn > 1e-12:
                dirs.append(v / vn)
    else:
        dirs.append(u_mrt)
    return np.array(dirs)


def _link_candidates(scenario, k, j, n_angle, n_power, power_floor):
    """Arrays (signal, leakage, consumed power) for one link's samples."""
    cap = scenario.power_caps[k]
    if math.isinf(cap) or cap <= 0.0:
        if cap <= 0.0:
            sig = np.zeros(1)
            leak = np.zeros(1)
            cons = np.full(1, scenario.circuit_power)
            return sig, leak, cons
        raise ConfigurationError(
            "the brute-force cloud needs finite positive power caps"
        )
    dirs = _beam_directions(
        scenario.channel(k, k), scenario.channel(k, j), n_angle
    )
    powers = np.geomspace(cap * power_floor, cap, n_power)
    if dirs.shape[0]:
        s_unit = np.abs(dirs @ scenario.channel(k, k).conj()) ** 2
        x_unit = np.abs(dirs @ scenario.channel(k, j).conj()) ** 2
        sig = (powers[:, None] * s_unit[None, :]).ravel()
        leak = (powers[:, None] * x_unit[None, :]).ravel()
        tx = np.repeat(powers, s_unit.shape[0])
    else:
        sig = np.zeros(0)
        leak = np.zeros(0)
        tx = np.zeros(0)
    sig = np.concatenate([sig, [0.0]])
    leak = np.concatenate([leak, [0.0]])
    tx = np.concatenate([tx, [0.0]])
    cons = tx / scenario.amp_efficiency + scenario.circuit_power
    return sig, leak, cons


def _staircase(points):
    """Exact non-dominated subset, sorted by column 0 ascending."""
    if points.shape[0] == 0:
        return points.reshape(0, 2)
    order = np.lexsort((-points[:, 1], -points[:, 0]))
    pts = points[order]
    run = np.maximum.accumulate(pts[:, 1])
    prev = np.concatenate([[-np.inf], run[:-1]])
    keep = pts[:, 1] > prev
    keep[0] = True
    return pts[keep][::-1].copy()


def brute_force_cloud(scenario, n_angle=64, n_power=64, *, power_floor=1e-6,
                      chunk=512):
    """Sample the two-link achievable efficiency region exhaustively.

    Every combination of swept beam direction and transmit power for both
    links is evaluated with the plain rate/power formulas; the exact
    non-dominated frontier of the resulting cloud is returned.
    """
    if scenario.num_links != 2:
        raise ConfigurationError(
            "the brute-force cloud is only defined for two links"
        )
    s0, x0, c0 = _link_candidates(scenario, 0, 1, n_angle, n_power,
                                  power_floor)
    s1, x1, c1 = _link_candidates(scenario, 1, 0, n_angle, n_power,
                                  power_floor)
    # order the second link's samples by the interference they cause so
    # that ee_0 is non-increasing along every row of the pair grid
    order = np.argsort(x1, kind="stable")
    s1, x1, c1 = s1[order], x1[order], c1[order]

    sigma0 = scenario.noise[0]
    sigma1 = scenario.noise[1]
    survivors = []
    n0 = s0.shape[0]
    n1 = s1.shape[0]
    for lo in range(0, n0, chunk):
        hi = min(lo + chunk, n0)
        sig = s0[lo:hi, None]
        rate0 = np.log1p(sig / (sigma0 + x1[None, :])) * INV_LN2
        with np.errstate(invalid="ignore"):
            ee0 = np.where(rate0 > 0.0, rate0 / c0[lo:hi, None], 0.0)
        rate1 = np.log1p(s1[None, :] / (sigma1 + x0[lo:hi, None])) * INV_LN2
        with np.errstate(invalid="ignore"):
            ee1 = np.where(rate1 > 0.0, rate1 / c1[None, :], 0.0)
        run = np.maximum.accumulate(ee1, axis=1)
        prev = np.concatenate(
            [np.full((hi - lo, 1), -np.inf), run[:, :-1]], axis=1
        )
        keep = ee1 > prev
        keep[:, 0] = True
        survivors.append(
            np.column_stack([ee0[keep], ee1[keep]])
        )
    cloud = np.vstack(survivors)
    frontier = _staircase(cloud)
    return OracleCloud(frontier=frontier, num_points=n0 * n1)


# ---------------------------------------------------------------------------
# dual grid minimizer
# ---------------------------------------------------------------------------


@dataclass
class DualGridResult:
    value: float
    it_multipliers: dict
    power_multiplier: float
    evaluations: int


def _dual_batch_eval(h, cross_cols, caps, power_cap, nu, gamma, eta, pc,
                     lam_grid):
    """Dual objective at a batch of multiplier points, by direct assembly.

    lam_grid has one row per point; columns follow ``caps`` order with the
    power multiplier last when the power cap is finite.
    """
    m = h.shape[0]
    npts = lam_grid.shape[0]
    n_it = len(caps)
    finite_pow = not math.isinf(power_cap)
    beta = gamma / eta + (lam_grid[:, n_it] if finite_pow else 0.0)
    b = np.broadcast_to(np.eye(m, dtype=complex), (npts, m, m)).copy()
    b *= beta[:, None, None].astype(complex) if finite_pow else beta
    for i in range(n_it):
        outer = np.outer(cross_cols[i], cross_cols[i].conj())
        b += lam_grid[:, i][:, None, None] * outer[None, :, :]
    sol = np.linalg.solve(b, np.broadcast_to(h, (npts, m))[..., None])
    q = np.maximum(np.real(sol[:, :, 0] @ h.conj()), 0.0)
    with np.errstate(divide="ignore"):
        t = np.where(q > 0.0, np.maximum(INV_LN2 - nu / q, 0.0), 0.0)
    inner = np.where(
        t > 0.0, np.log1p(t * q / nu) * INV_LN2 - t, 0.0
    )
    g = inner - gamma * pc
    for i in range(n_it):
        g = g + lam_grid[:, i] * caps[i]
    if finite_pow:
        g = g + lam_grid[:, n_it] * power_cap
    return g


def dual_grid_min(scenario, link_it, k, gamma, *, n_grid=40, n_zoom=6):
    """Minimize the parametric dual on a zooming multiplier grid.

    A deliberately independent check on the ellipsoid path: multipliers of
    infinite caps are pinned at zero, the rest are gridded over a box that
    shrinks around the running argmin.
    """
    if isinstance(link_it, ITVector):
        link_it = link_it.for_link(k)
    if not gamma > 0.0:
        raise ConfigurationError("gamma must be positive")
    h = scenario.channel(k, k)
    cross_js = [j for j in scenario.links() if j != k]
    active = [j for j in cross_js if not math.isinf(link_it.own[j])]
    cross_cols = [scenario.channel(k, j) for j in active]
    caps = [link_it.own[j] for j in active]
    power_cap = scenario.power_caps[k]
    finite_pow = not math.isinf(power_cap)
    ndim = len(active) + (1 if finite_pow else 0)
    if ndim > 3:
        raise ConfigurationError(
            "the dual grid oracle handles at most three active multipliers"
        )
    nu = effective_noise(link_it, scenario.noise[k])
    eta = scenario.amp_efficiency
    pc = scenario.circuit_power

    if ndim == 0:
        g = _dual_batch_eval(h, cross_cols, caps, power_cap, nu, gamma, eta,
                             pc, np.zeros((1, 0)))
        return DualGridResult(float(g[0]), {}, 0.0, 1)

    hi = 1e3 * (1.0 / float(np.min(scenario.noise))
                + (1.0 / pc if pc > 0.0 else 0.0))
    lows = np.zeros(ndim)
    highs = np.full(ndim, hi)
    best_val = math.inf
    best_lam = np.zeros(ndim)
    evals = 0
    for _ in range(n_zoom):
        axes = [np.linspace(lows[d], highs[d], n_grid) for d in range(ndim)]
        mesh = np.meshgrid(*axes, indexing="ij")
        grid = np.column_stack([m.ravel() for m in mesh])
        g = _dual_batch_eval(h, cross_cols, caps, power_cap, nu, gamma, eta,
                             pc, grid)
        evals += grid.shape[0]
        imin = int(np.argmin(g))
        if g[imin] < best_val:
            best_val = float(g[imin])
            best_lam = grid[imin].copy()
        spacing = (highs - lows) / (n_grid - 1)
        lows = np.maximum(grid[imin] - 2.0 * spacing, 0.0)
        highs = grid[imin] + 2.0 * spacing
    it_mult = {j: float(best_lam[i]) for i, j in enumerate(active)}
    pow_mult = float(best_lam[len(active)]) if finite_pow else 0.0
    return DualGridResult(best_val, it_mult, pow_mult, evals)


# ---------------------------------------------------------------------------
# projected gradient on the parametric primal
# ---------------------------------------------------------------------------


@dataclass
class InnerPoint:
    covariance: Covariance
    value: float
    iterations: int
    converged: bool


def _psd_clip(mat):
    """Projection onto the PSD cone, with a closed form for 2x2."""
    if mat.shape[0] == 2:
        a00 = float(mat[0, 0].real)
        a11 = float(mat[1, 1].real)
        b = complex(mat[0, 1])
        mean = 0.5 * (a00 + a11)
        dlt = 0.5 * (a11 - a00)
        rad = math.hypot(dlt, abs(b))
        lo = mean - rad
        hi = mean + rad
        if lo >= 0.0:
            return mat
        if hi <= 0.0:
            return np.zeros_like(mat)
        # keep only the positive eigenvalue hi; of the two equivalent
        # eigenvector formulas (b, hi-a00) and (hi-a11, conj(b)), use the
        # better-conditioned one (for a near-diagonal matrix the discarded
        # form is pure rounding noise)
        if hi - a00 >= hi - a11:
            v0, v1 = complex(b), complex(hi - a00)
        else:
            v0, v1 = complex(hi - a11), b.conjugate()
        nrm = abs(v0) ** 2 + abs(v1) ** 2
        if nrm <= 0.0:
            out = np.zeros_like(mat)
            idx = 0 if a00 > a11 else 1
            out[idx, idx] = hi
            return out
        v = np.array([v0, v1], dtype=complex) / math.sqrt(nrm)
        return hi * np.outer(v, v.conj())
    vals, vecs = np.linalg.eigh(mat)
    if vals[0] >= 0.0:
        return mat
    return (vecs * np.maximum(vals, 0.0)) @ vecs.conj().T


def _project_feasible(x, constraints, max_sweeps=1500, tol=1e-11):
    """Dykstra projection onto PSD/trace/interference constraints.

    constraints is a list of ("psd",), ("trace", limit) and
    ("cap", outer_matrix, frob2, limit) entries.  Sweeps run until every
    constraint's residual is below tol (relative to the iterate's size)
    and the iterate has stopped moving; feasibility alone is not enough,
    since a single alternating pass can land on a feasible point that is
    not the nearest one.
    """
    n = x.shape[0]
    corrections = [np.zeros_like(x) for _ in constraints]
    eye = np.eye(n)
    prev = x.copy()
    for _ in range(max_sweeps):
        for i, con in enumerate(constraints):
            y = x - corrections[i]
            if con[0] == "psd":
                y = 0.5 * (y + y.conj().T)
                proj = _psd_clip(y)
            elif con[0] == "trace":
                excess = float(np.real(np.trace(y))) - con[1]
                proj = y - (excess / n) * eye if excess > 0.0 else y
            else:
                _, a, fr2, limit = con
                excess = float(np.real(np.vdot(a, y))) - limit
                proj = y - (excess / fr2) * a if excess > 0.0 else y
            corrections[i] = proj - y
            x = proj
        scale = 1.0 + float(np.max(np.abs(x)))
        worst = 0.0
        for con in constraints:
            if con[0] == "psd":
                worst = max(worst, -float(np.linalg.eigvalsh(
                    0.5 * (x + x.conj().T))[0]))
            elif con[0] == "trace":
                worst = max(worst, float(np.real(np.trace(x))) - con[1])
            else:
                _, a, _, limit = con
                worst = max(worst, float(np.real(np.vdot(a, x))) - limit)
        moved = float(np.max(np.abs(x - prev)))
        prev = x
        if worst <= tol * scale and moved <= tol * scale:
            break
    return x


def _ray_optimum(u, th, cap_list, power_cap, nu, gamma, eta, pc):
    """Exact maximum of the parametric objective along one beam ray.

    cap_list holds (compressed_channel, cap) pairs with finite caps.
    Returns (value, power); a zero cap whose channel the ray still hits
    forces zero power.
    """
    un = float(np.linalg.norm(u))
    if un <= 0.0:
        return -gamma * pc, 0.0
    u = u / un
    gain = float(np.abs(np.vdot(th, u)) ** 2)
    p_max = power_cap
    for tc, cap in cap_list:
        hit = float(np.abs(np.vdot(tc, u)) ** 2)
        if cap == 0.0:
            if hit > 1e-24 * float(np.vdot(tc, tc).real):
                p_max = 0.0
        elif hit > 0.0:
            p_max = min(p_max, cap / hit)
    if gain <= 0.0 or p_max <= 0.0:
        return -gamma * pc, 0.0
    p_opt = eta / (gamma * LN2) - nu / gain
    p_star = min(max(p_opt, 0.0), p_max)
    val = math.log1p(p_star * gain / nu) * INV_LN2 \
        - gamma * (p_star / eta + pc)
    return val, p_star


def projected_gradient_inner(scenario, link_it, k, gamma, *, tol=1e-10,
                             max_iter=600):
    """Maximize the parametric objective directly over feasible covariances.

    Works in the subspace spanned by the own and cross channels (lossless
    for this objective).  An accelerated projected gradient with Dykstra
    projections finds the beam direction; the transmit power along that
    ray is then optimized in closed form, which also pins the iterate back
    onto the exact constraint surface.  The returned point is feasible, so
    the value approaches the optimum from below and complements the dual
    bound from the ellipsoid path.
    """
    if isinstance(link_it, ITVector):
        link_it = link_it.for_link(k)
    if not gamma > 0.0:
        raise ConfigurationError("gamma must be positive")
    h = scenario.channel(k, k)
    m = h.shape[0]
    nu = effective_noise(link_it, scenario.noise[k])
    eta = scenario.amp_efficiency
    pc = scenario.circuit_power
    cross_js = [j for j in scenario.links() if j != k]

    span = [h] + [scenario.channel(k, j) for j in cross_js]
    mat = np.column_stack(span)
    qmat, rmat = np.linalg.qr(mat)
    keep = np.abs(np.diag(rmat)) > 1e-12 * max(np.linalg.norm(mat), 1.0)
    basis = qmat[:, keep]
    r = basis.shape[1]
    if r == 0 or float(np.linalg.norm(h)) == 0.0:
        return InnerPoint(Covariance.zeros(m), -gamma * pc, 0, True)

    th = basis.conj().T @ h
    power_cap = float(scenario.power_caps[k])
    constraints = [("psd",)]
    if not math.isinf(power_cap):
        constraints.append(("trace", power_cap))
    cap_list = []
    for j in cross_js:
        cap = link_it.own[j]
        if math.isinf(cap):
            continue
        tc = basis.conj().T @ scenario.channel(k, j)
        cap_list.append((tc, float(cap)))
        a = np.outer(tc, tc.conj())
        fr2 = float(np.real(np.vdot(a, a)))
        if fr2 > 0.0:
            constraints.append(("cap", a, fr2, float(cap)))

    def value(xm):
        s = float(np.real(np.vdot(th, xm @ th)))
        return (
            math.log1p(max(s, 0.0) / nu) * INV_LN2
            - gamma * (float(np.real(np.trace(xm))) / eta + pc)
        )

    def gradient(xm):
        s = max(float(np.real(np.vdot(th, xm @ th))), 0.0)
        coeff = 1.0 / ((nu + s) * LN2)
        return coeff * np.outer(th, th.conj()) \
            - (gamma / eta) * np.eye(r, dtype=complex)

    def polish(xm):
        """Best exactly-feasible rank-one point suggested by an iterate."""
        sym = 0.5 * (xm + xm.conj().T)
        vals, vecs = np.linalg.eigh(sym)
        candidates = [vecs[:, -1], sym @ th, th]
        zero_tcs = [tc for tc, cap in cap_list if cap == 0.0]
        best = (-gamma * pc, 0.0, np.zeros(r, dtype=complex))
        for cand in candidates:
            for zf in (False, True) if zero_tcs else (False,):
                u = np.array(cand, dtype=complex)
                if zf:
                    for tc in zero_tcs:
                        tn = float(np.vdot(tc, tc).real)
                        if tn > 0.0:
                            u = u - tc * (np.vdot(tc, u) / tn)
                val, p_star = _ray_optimum(
                    u, th, cap_list, power_cap, nu, gamma, eta, pc
                )
                if val > best[0]:
                    un = float(np.linalg.norm(u))
                    best = (val, p_star, u / un if un > 0.0 else u)
        return best

    x = np.zeros((r, r), dtype=complex)
    y = x.copy()
    fx = value(x)
    t_acc = 1.0
    lip = float(np.vdot(th, th).real ** 2) / (nu * nu * LN2) + 1e-12
    it = 0
    stall = 0
    for it in range(max_iter):
        grad = gradient(y)
        step_ok = False
        for _ in range(60):
            cand = _project_feasible(y + grad / lip, constraints)
            diff = cand - y
            quad = float(np.real(np.vdot(diff, diff)))
            lin = float(np.real(np.vdot(grad, diff)))
            if value(cand) >= value(y) + lin - 0.5 * lip * quad - 1e-15:
                step_ok = True
                break
            lip *= 2.0
        if not step_ok:
            break
        f_new = value(cand)
        if f_new < fx:
            if t_acc == 1.0:
                # momentum is already cold, so y == x and repeating the
                # step would recompute the same regression: the iterate
                # is at the resolution of the projection
                break
            # restart the momentum from the best point
            y = x.copy()
            t_acc = 1.0
            stall += 1
            if stall > 8:
                break
            continue
        t_new = 0.5 * (1.0 + math.sqrt(1.0 + 4.0 * t_acc * t_acc))
        y = cand + ((t_acc - 1.0) / t_new) * (cand - x)
        gain = f_new - fx
        x = cand
        fx = f_new
        t_acc = t_new
        if gain <= tol:
            stall += 1
            if stall > 8:
                break
        else:
            stall = 0
    val, p_star, u = polish(x)
    if p_star > 0.0:
        w = basis @ (u * math.sqrt(p_star))
        cov = Covariance(np.outer(w, w.conj()))
    else:
        cov = Covariance.zeros(m)
    return InnerPoint(cov, val, it + 1, True)


# ---------------------------------------------------------------------------
# finite-difference sensitivities
# ---------------------------------------------------------------------------


def finite_diff_ee(scenario, it_vector, link, pair, *, rel_step=1e-5,
                   abs_step=1e-12, eps=1e-10):
    """Central-difference derivative of link ``link``'s efficiency with
    respect to one interference level."""
    base = it_vector[pair]
    step = max(rel_step * base, abs_step)
    lo = base - step
    if lo < 0.0:
        lo = 0.0
        step = base - lo
        if step <= 0.0:
            raise ConfigurationError(
                "finite differences need a positive interference level"
            )
    hi_v = it_vector.with_entries({pair: base + step})
    lo_v = it_vector.with_entries({pair: lo})
    e_hi = dinkelbach_bisection(scenario, hi_v.for_link(link), link, eps=eps)
    e_lo = dinkelbach_bisection(scenario, lo_v.for_link(link), link, eps=eps)
    return (e_hi.gamma_star - e_lo.gamma_star) / (base + step - lo)
