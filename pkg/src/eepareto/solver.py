"""Per-link energy-efficiency solver.

Each link k solves, for a fixed vector of interference-temperature levels,

    maximize   log2(1 + h_kk^H S h_kk / nu_k) / (tr(S)/eta + P_c)

over PSD covariances S subject to tr(S) <= P_k and h_kj^H S h_kj <= cap_kj
for the interference it causes at every other terminal j.  nu_k is the
terminal's noise power plus the interference levels it tolerates, so the
problem decouples across links once all levels are fixed.

The fraction is handled with the classic parametric trick: for a trial
efficiency gamma the auxiliary concave program

    F(gamma) = max  log2(1 + h^H S h / nu) - gamma (tr(S)/eta + P_c)

is solved in the dual, where the maximizing S is a closed-form rank-one
matrix, and the optimal efficiency is the root of the strictly decreasing
F.  The dual is minimized with a central-cut ellipsoid method (or scalar
bisection when only one multiplier survives) and the root is located by
plain interval bisection on gamma.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .model import Covariance, ConfigurationError, Scenario

LN2 = math.log(2.0)
INV_LN2 = 1.0 / LN2

# Flip to False to force the generic numpy ellipsoid loop everywhere.
USE_FAST_KERNEL = True

try:
    from ._kernels import HAVE_NUMBA, ellipsoid_two_cell
except ImportError:  # pragma: no cover
    HAVE_NUMBA = False
    ellipsoid_two_cell = None


class SolverError(RuntimeError):
    """Base class for solver failures."""


class ConvergenceError(SolverError):
    """Iteration budget exhausted before the requested certificate held."""

    def __init__(self, message, best_duals=None, best_value=None, iterations=0):
        super().__init__(message)
        self.best_duals = best_duals
        self.best_value = best_value
        self.iterations = iterations


class InternalSolverError(SolverError):
    """An invariant that should hold by construction was violated."""


@dataclass(frozen=True)
class ITVector:
    """Interference-temperature levels for every ordered link pair.

    entries[(k, j)] caps the interference BS k may cause at terminal j.
    A complete set of off-diagonal pairs is required; levels are >= 0 and
    may be +inf (cap absent).
    """

    entries: dict

    def __post_init__(self):
        ks = {k for k, _ in self.entries}
        js = {j for _, j in self.entries}
        idx = ks | js
        if not idx:
            raise ConfigurationError("interference vector has no entries")
        n = max(idx) + 1
        expected = {(k, j) for k in range(n) for j in range(n) if k != j}
        if set(self.entries) != expected:
            raise ConfigurationError(
                "interference vector must cover every ordered pair of "
                "%d links" % n
            )
        for pair, val in self.entries.items():
            v = float(val)
            if math.isnan(v) or v < 0.0:
                raise ConfigurationError(
                    "interference level for pair %s must be >= 0" % (pair,)
                )
        object.__setattr__(self, "entries", dict(self.entries))

    @property
    def num_links(self):
        return max(k for k, _ in self.entries) + 1

    @staticmethod
    def pairs(num_links):
        """Ordered pairs (k, j), k != j, in lexicographic order."""
        return [
            (k, j)
            for k in range(num_links)
            for j in range(num_links)
            if j != k
        ]

    @classmethod
    def uniform(cls, num_links, value):
        return cls({p: float(value) for p in cls.pairs(num_links)})

    @classmethod
    def zeros(cls, num_links):
        return cls.uniform(num_links, 0.0)

    def __getitem__(self, pair):
        return self.entries[pair]

    def with_entries(self, updates):
        """Return a copy with some pairs replaced."""
        new = dict(self.entries)
        for pair, val in updates.items():
            if pair not in new:
                raise ConfigurationError(f"unknown interference pair {pair}")
            new[pair] = float(val)
        return ITVector(new)

    def for_link(self, k):
        """Split the vector into the caps link k obeys and tolerates."""
        own = {j: v for (i, j), v in self.entries.items() if i == k}
        received = {j: v for (j, i), v in self.entries.items() if i == k}
        return LinkIT(link=k, own=own, received=received)

    def as_array(self, num_links=None):
        n = num_links or self.num_links
        return np.array([self.entries[p] for p in self.pairs(n)])


@dataclass(frozen=True)
class LinkIT:
    """One link's view of the interference levels.

    own[j] caps the interference this link causes at terminal j;
    received[j] is the level tolerated from BS j, entering the noise floor.
    """

    link: int
    own: dict
    received: dict


def effective_noise(link_it, noise_power):
    """Noise plus tolerated interference at the terminal of one link."""
    total = float(noise_power) + float(sum(link_it.received.values()))
    if not total > 0.0:
        raise ConfigurationError("effective noise must be positive")
    return total


def _check_link_view(scenario, link_it, k):
    if link_it.link != k:
        raise ConfigurationError(
            f"interference view describes link {link_it.link}, expected link {k}"
        )
    peers = {j for j in scenario.links() if j != k}
    if set(link_it.own) != peers or set(link_it.received) != peers:
        raise ConfigurationError(
            f"interference view of link {k} must cover exactly the peer links {sorted(peers)}"
        )


@dataclass(frozen=True)
class DualPoint:
    """Multipliers of one link's parametric program."""

    it: dict  # j -> multiplier of the caused-interference cap at terminal j
    power: float  # multiplier of the transmit power cap

    def __post_init__(self):
        if self.power < 0.0:
            raise ConfigurationError("power multiplier must be >= 0")
        for j, v in self.it.items():
            if v < 0.0:
                raise ConfigurationError(
                    "interference multiplier for terminal %d must be >= 0" % j
                )


@dataclass
class EllipsoidState:
    """Center and shape matrix of the search ellipsoid."""

    center: np.ndarray
    shape: np.ndarray
    iterations: int = 0

    def validate(self):
        np.linalg.cholesky(self.shape)
        if self.center.shape[0] != self.shape.shape[0]:
            raise InternalSolverError("ellipsoid center/shape mismatch")


@dataclass
class LinkSolution:
    """Solution of one link's efficiency problem at fixed levels."""

    link: int
    gamma_star: float  # optimal efficiency, bits per joule (unit bandwidth)
    covariance: Covariance
    duals: DualPoint
    f_residual: float  # |F(gamma_star)| at the returned point
    nu: float  # effective noise used
    signal: float  # h_kk^H S h_kk
    total_power: float  # tr(S)/eta + P_c
    caused: dict = field(default_factory=dict)  # j -> interference caused
    attained: bool = True  # False when the supremum is a vanishing-power limit
    inner_iterations: int = 0
    evaluations: int = 0

    @property
    def rate(self):
        return math.log1p(self.signal / self.nu) * INV_LN2


class _LinkGeometry:
    """Per-link channel quantities reused across dual evaluations."""

    def __init__(self, scenario, k):
        self.k = k
        self.h = scenario.channel(k, k)
        self.hh = float(np.real(np.vdot(self.h, self.h)))
        self.cross_js = [j for j in scenario.links() if j != k]
        if self.cross_js:
            cols = [scenario.channel(k, j) for j in self.cross_js]
            self.cross = np.column_stack(cols)
            self.gram = self.cross.conj().T @ self.cross
            self.cross_h = self.cross.conj().T @ self.h
            self.cross_norms = np.real(np.diag(self.gram)).copy()
        else:
            self.cross = None
            self.gram = None
            self.cross_h = None
            self.cross_norms = np.zeros(0)
        self.power_cap = scenario.power_caps[k]
        self.pc = scenario.circuit_power
        self.eta = scenario.amp_efficiency
        self.m = self.h.shape[0]
        self.noise_min = float(np.min(scenario.noise))


def _inner_point(geom, lam_it, lam_pow, gamma, nu):
    """Evaluate the closed-form maximizer of the weighted Lagrangian.

    lam_it is the vector of interference multipliers aligned with
    geom.cross_js.  Returns (inner_value, t, q, caused, trace) where
    inner_value = log2(1 + t q / nu) - t is the maximum of
    rate - t_penalty over the unconstrained covariance, caused is the
    per-terminal interference of the maximizer and trace its power.
    """
    beta = lam_pow + gamma / geom.eta
    if not beta > 0.0:
        raise InternalSolverError("dual evaluation needs a positive ridge")
    nc = len(geom.cross_js)
    if nc and np.any(lam_it > 0.0):
        a = np.sqrt(lam_it)
        mvec = a * geom.cross_h
        mm = beta * np.eye(nc) + (a[:, None] * geom.gram) * a[None, :]
        v = np.linalg.solve(mm, mvec)
        q = (geom.hh - float(np.real(np.vdot(mvec, v)))) / beta
        d = a * v
        resid = (geom.cross_h - geom.gram @ d) / beta
        bh2 = (
            geom.hh
            - 2.0 * float(np.real(np.vdot(geom.cross_h, d)))
            + float(np.real(np.vdot(d, geom.gram @ d)))
        ) / (beta * beta)
    else:
        q = geom.hh / beta
        resid = geom.cross_h / beta if nc else None
        bh2 = geom.hh / (beta * beta)
    caused = np.zeros(nc)
    if q <= 0.0:
        return 0.0, 0.0, max(q, 0.0), caused, 0.0
    t = INV_LN2 - nu / q
    if t <= 0.0:
        return 0.0, 0.0, q, caused, 0.0
    value = math.log1p(t * q / nu) * INV_LN2 - t
    sc = t / q
    if nc:
        caused = sc * np.abs(resid) ** 2
    trace = sc * bh2
    return value, t, q, caused, trace


def parametric_value(duals, gamma, scenario, link_it, k):
    """Dual objective of the parametric program at a given multiplier point.

    This is the full Lagrangian bound: inner maximum plus the cap terms.
    An infinite cap contributes nothing when its multiplier is zero and
    makes the bound infinite otherwise.
    """
    if isinstance(link_it, ITVector):
        link_it = link_it.for_link(k)
    geom = _LinkGeometry(scenario, k)
    nu = effective_noise(link_it, scenario.noise[k])
    lam_it = np.array([float(duals.it.get(j, 0.0)) for j in geom.cross_js])
    value, _, _, _, trace = _inner_point(geom, lam_it, duals.power, gamma, nu)
    g = value - gamma * geom.pc
    cap = geom.power_cap
    if math.isinf(cap):
        if duals.power > 0.0:
            return math.inf
    else:
        g += duals.power * cap
    for i, j in enumerate(geom.cross_js):
        cj = link_it.own[j]
        if math.isinf(cj):
            if lam_it[i] > 0.0:
                return math.inf
        else:
            g += lam_it[i] * cj
    return g


def closed_form_covariance(duals, gamma, scenario, link_it, k):
    """Rank-one maximizer of the weighted Lagrangian at a multiplier point."""
    if isinstance(link_it, ITVector):
        link_it = link_it.for_link(k)
    geom = _LinkGeometry(scenario, k)
    nu = effective_noise(link_it, scenario.noise[k])
    lam_it = np.array([float(duals.it.get(j, 0.0)) for j in geom.cross_js])
    w = _recover_direction(geom, lam_it, duals.power, gamma, nu)
    return Covariance(np.outer(w, w.conj()))


def _recover_direction(geom, lam_it, lam_pow, gamma, nu):
    """Unnormalized beamforming vector sqrt(t/q) B^{-1} h."""
    beta = lam_pow + gamma / geom.eta
    if not beta > 0.0:
        raise ConfigurationError(
            "covariance recovery needs gamma > 0 or a positive power "
            "multiplier"
        )
    b = beta * np.eye(geom.m, dtype=complex)
    for i, j in enumerate(geom.cross_js):
        if lam_it[i] > 0.0:
            col = geom.cross[:, i]
            b += lam_it[i] * np.outer(col, col.conj())
    try:
        binv_h = np.linalg.solve(b, geom.h.astype(complex))
    except np.linalg.LinAlgError as exc:
        raise ConvergenceError(
            "covariance recovery system is numerically singular; the "
            "multiplier spread exceeds float64 conditioning"
        ) from exc
    if not np.all(np.isfinite(binv_h)):
        raise ConvergenceError(
            "covariance recovery produced non-finite entries"
        )
    q = float(np.real(np.vdot(geom.h, binv_h)))
    if q <= 0.0:
        return np.zeros(geom.m, dtype=complex)
    t = INV_LN2 - nu / q
    if t <= 0.0:
        return np.zeros(geom.m, dtype=complex)
    return math.sqrt(t / q) * binv_h


def _active_dims(geom, link_it):
    """Dual coordinates that survive: finite caps only.

    Infinite caps pin their multiplier to zero (any positive value makes
    the dual bound infinite), so those coordinates are dropped.
    """
    it_dims = [
        (i, j)
        for i, j in enumerate(geom.cross_js)
        if not math.isinf(link_it.own[j])
    ]
    pow_dim = not math.isinf(geom.power_cap)
    return it_dims, pow_dim


def _assemble(geom, link_it, it_dims, pow_dim, z):
    lam_it = np.zeros(len(geom.cross_js))
    for pos, (i, _) in enumerate(it_dims):
        lam_it[i] = z[pos]
    lam_pow = z[len(it_dims)] if pow_dim else 0.0
    return lam_it, lam_pow


def _dual_g_and_subgrad(geom, link_it, it_dims, pow_dim, z, gamma, nu):
    lam_it, lam_pow = _assemble(geom, link_it, it_dims, pow_dim, z)
    value, t, q, caused, trace = _inner_point(geom, lam_it, lam_pow, gamma, nu)
    g = value - gamma * geom.pc
    sub = np.empty(len(z))
    for pos, (i, j) in enumerate(it_dims):
        cap = link_it.own[j]
        g += z[pos] * cap
        sub[pos] = cap - caused[i]
    if pow_dim:
        g += lam_pow * geom.power_cap
        sub[len(it_dims)] = geom.power_cap - trace
    return g, sub, (t, q, caused, trace)


def _ellipsoid_generic(geom, link_it, it_dims, pow_dim, gamma, nu, lam_max,
                       tol, max_iter):
    """Central-cut ellipsoid minimization of the dual over the orthant."""
    n = len(it_dims) + (1 if pow_dim else 0)
    state = EllipsoidState(
        center=np.full(n, lam_max),
        shape=np.eye(n) * (n * lam_max * lam_max),
    )
    best_g = math.inf
    best_z = state.center.copy()
    for it in range(max_iter):
        z = state.center
        i_neg = int(np.argmin(z))
        if z[i_neg] < 0.0:
            a = np.zeros(n)
            a[i_neg] = -1.0
        else:
            g, a, _ = _dual_g_and_subgrad(
                geom, link_it, it_dims, pow_dim, z, gamma, nu
            )
            if g < best_g:
                best_g = g
                best_z = z.copy()
            pa = state.shape @ a
            apa = float(a @ pa)
            if apa <= 0.0 or math.sqrt(max(apa, 0.0)) <= tol:
                state.iterations = it + 1
                return best_z, best_g, state.iterations
        pa = state.shape @ a
        apa = float(a @ pa)
        if apa <= 0.0:
            state.iterations = it + 1
            if best_g < math.inf:
                return best_z, best_g, state.iterations
            break
        s = math.sqrt(apa)
        state.center = z - pa / ((n + 1.0) * s)
        fac = n * n / (n * n - 1.0)
        state.shape = fac * (
            state.shape - (2.0 / (n + 1.0)) * np.outer(pa, pa) / apa
        )
        state.iterations = it + 1
    raise ConvergenceError(
        "ellipsoid method exhausted %d iterations" % max_iter,
        best_duals=best_z,
        best_value=best_g,
        iterations=state.iterations,
    )


def _scalar_dual_bisection(geom, link_it, it_dims, pow_dim, gamma, nu,
                           lam_max, tol, max_iter):
    """One surviving multiplier: bisection on the monotone subgradient."""

    def sub_at(x):
        g, sub, _ = _dual_g_and_subgrad(
            geom, link_it, it_dims, pow_dim, np.array([x]), gamma, nu
        )
        return g, sub[0]

    g_lo, s_lo = sub_at(0.0)
    if s_lo >= 0.0:
        return np.array([0.0]), g_lo, 1
    hi = lam_max
    g_hi, s_hi = sub_at(hi)
    grow = 0
    while s_hi < 0.0:
        hi *= 2.0
        grow += 1
        if grow > 60:
            raise InternalSolverError(
                "dual multiplier exceeded every bracket"
            )
        g_hi, s_hi = sub_at(hi)
    lo = 0.0
    best_g = min(g_lo, g_hi)
    best_x = 0.0 if g_lo <= g_hi else hi
    it = 0
    for it in range(max_iter):
        # convexity bounds the suboptimality by the bracket width times
        # the worst slope at its ends
        if (hi - lo) * max(abs(s_lo), abs(s_hi)) <= tol:
            break
        mid = 0.5 * (lo + hi)
        g_mid, s_mid = sub_at(mid)
        if g_mid < best_g:
            best_g = g_mid
            best_x = mid
        if s_mid < 0.0:
            lo, s_lo = mid, s_mid
        else:
            hi, s_hi = mid, s_mid
    return np.array([best_x]), best_g, it + 1


def _solve_dual(geom, link_it, gamma, nu, tol, max_iter, recover):
    """Minimize the dual at fixed gamma and recover a feasible covariance.

    Returns a dict with the dual value (the F(gamma) evaluation), the
    multipliers, and when recover is True a primal covariance that is
    feasible for every cap.
    """
    it_dims, pow_dim = _active_dims(geom, link_it)
    n = len(it_dims) + (1 if pow_dim else 0)
    lam_max = _lam_max_geom(geom)
    if n == 0:
        z = np.zeros(0)
        g, _, _ = _dual_g_and_subgrad(
            geom, link_it, it_dims, pow_dim, z, gamma, nu
        )
        iters = 1
    elif n == 1:
        z, g, iters = _scalar_dual_bisection(
            geom, link_it, it_dims, pow_dim, gamma, nu, lam_max, tol,
            max_iter,
        )
    elif (
        USE_FAST_KERNEL
        and HAVE_NUMBA
        and n == 2
        and pow_dim
        and len(it_dims) == 1
    ):
        i, j = it_dims[0]
        ch2 = float(np.abs(geom.cross_h[i]) ** 2)
        l1, lp, g, iters, status = ellipsoid_two_cell(
            geom.hh,
            float(geom.cross_norms[i]),
            ch2,
            nu,
            gamma,
            gamma / geom.eta,
            geom.pc,
            geom.power_cap,
            link_it.own[j],
            lam_max,
            tol,
            max_iter,
        )
        if status != 1:
            raise ConvergenceError(
                "ellipsoid method exhausted %d iterations" % max_iter,
                best_duals=np.array([l1, lp]),
                best_value=g,
                iterations=iters,
            )
        z = np.array([l1, lp])
    else:
        z, g, iters = _ellipsoid_generic(
            geom, link_it, it_dims, pow_dim, gamma, nu, lam_max, tol,
            max_iter,
        )
    lam_it, lam_pow = _assemble(geom, link_it, it_dims, pow_dim, z)
    result = {
        "f_value": g,
        "lam_it": lam_it,
        "lam_pow": lam_pow,
        "iterations": iters,
        "evaluations": iters,
    }
    if recover:
        result.update(_recover_primal(geom, link_it, lam_it, lam_pow, gamma,
                                      nu))
    return result


def _lam_max_geom(geom):
    base = 1.0 / geom.noise_min
    if geom.pc > 0.0:
        base += 1.0 / geom.pc
    return 1e3 * base


def _recover_primal(geom, link_it, lam_it, lam_pow, gamma, nu):
    """Build a cap-feasible covariance from the dual solution.

    The closed-form maximizer inherits the finite dual tolerance, leaving
    active caps met only to O(sqrt(tol)), and with a zero-level cap the
    dual never closes the gap at all.  So the beam direction is projected
    onto the null space of every zero-cap channel and the transmit power
    is then re-optimized exactly along that ray, which lands precisely on
    whichever cap binds.
    """
    w = _recover_direction(geom, lam_it, lam_pow, gamma, nu)
    zero_cols = [
        i
        for i, j in enumerate(geom.cross_js)
        if link_it.own[j] == 0.0 and geom.cross_norms[i] > 0.0
    ]
    if zero_cols and np.vdot(w, w).real > 0.0:
        basis = np.linalg.qr(geom.cross[:, zero_cols])[0]
        w = w - basis @ (basis.conj().T @ w)
    power = float(np.real(np.vdot(w, w)))
    if power > 0.0:
        u = w / math.sqrt(power)
        gain = float(np.abs(np.vdot(geom.h, u)) ** 2)
        p_max = geom.power_cap
        for i, j in enumerate(geom.cross_js):
            cap = link_it.own[j]
            if cap == 0.0 or math.isinf(cap):
                continue
            unit_hit = float(np.abs(np.vdot(geom.cross[:, i], u)) ** 2)
            if unit_hit > 0.0:
                p_max = min(p_max, cap / unit_hit)
        if gain > 0.0:
            # stationary point of log2(1 + p*gain/nu) - gamma*p/eta
            p_opt = geom.eta / (gamma * LN2) - nu / gain
            p_star = min(max(p_opt, 0.0), p_max)
        else:
            p_star = 0.0
        w = u * math.sqrt(p_star) if p_star > 0.0 else np.zeros_like(w)
    trace = float(np.real(np.vdot(w, w)))
    signal = float(np.abs(np.vdot(geom.h, w)) ** 2)
    caused = {
        j: float(np.abs(np.vdot(geom.cross[:, i], w)) ** 2)
        for i, j in enumerate(geom.cross_js)
    }
    return {
        "w": w,
        "trace": trace,
        "signal": signal,
        "caused": caused,
    }


def ellipsoid_solve(gamma, scenario, link_it, k, tol=1e-7, max_iter=4000):
    """Solve the parametric program of link k at a fixed gamma.

    Returns (DualPoint, f_value, Covariance) where f_value is the dual
    bound on F(gamma) and the covariance is feasible for every cap.
    """
    if not gamma > 0.0:
        raise ConfigurationError("gamma must be positive")
    if isinstance(link_it, ITVector):
        link_it = link_it.for_link(k)
    _check_link_view(scenario, link_it, k)
    geom = _LinkGeometry(scenario, k)
    nu = effective_noise(link_it, scenario.noise[k])
    res = _solve_dual(geom, link_it, gamma, nu, tol, max_iter, recover=True)
    duals = DualPoint(
        it={j: float(res["lam_it"][i]) for i, j in enumerate(geom.cross_js)},
        power=float(res["lam_pow"]),
    )
    cov = Covariance(np.outer(res["w"], res["w"].conj()))
    return duals, res["f_value"], cov


def parametric_primal(scenario, link_it, k, covariance, gamma):
    """rate(S) - gamma * consumed_power(S) at fixed effective noise."""
    if isinstance(link_it, ITVector):
        link_it = link_it.for_link(k)
    _check_link_view(scenario, link_it, k)
    nu = effective_noise(link_it, scenario.noise[k])
    h = scenario.channel(k, k)
    sig = covariance.quadratic(h)
    rate = math.log1p(sig / nu) * INV_LN2
    power = covariance.trace / scenario.amp_efficiency + scenario.circuit_power
    return rate - gamma * power


def dinkelbach_bisection(
    scenario,
    link_it,
    k,
    eps=1e-6,
    *,
    inner_tol=None,
    max_inner_iter=4000,
    gamma_hi=1.0,
):
    """Optimal energy efficiency of link k at fixed interference levels.

    Bisects on the efficiency parameter until the bracket is narrower than
    eps (absolute, bits per joule at unit bandwidth).  link_it may be a
    LinkIT view or a full ITVector.  gamma_hi seeds the upper bracket,
    which doubles until F goes negative.
    """
    if isinstance(link_it, ITVector):
        link_it = link_it.for_link(k)
    _check_link_view(scenario, link_it, k)
    if not eps > 0.0:
        raise ConfigurationError("eps must be positive")
    if inner_tol is None:
        inner_tol = eps / 10.0
    geom = _LinkGeometry(scenario, k)
    nu = effective_noise(link_it, scenario.noise[k])
    pc = scenario.circuit_power

    history = []
    stats = {"evals": 0, "inner": 0}

    def f_at(gamma):
        res = _solve_dual(
            geom, link_it, gamma, nu, inner_tol, max_inner_iter,
            recover=False,
        )
        stats["evals"] += 1
        stats["inner"] += res["iterations"]
        history.append((gamma, res["f_value"]))
        return res["f_value"]

    # With no idle power the consumed power vanishes as tr(S) -> 0, so
    # F(gamma) >= -gamma * 0 stays nonnegative and only approaches zero;
    # a small threshold then stands in for a sign change.
    zero_thresh = max(20.0 * inner_tol, 1e-12) if pc == 0.0 else 0.0

    gamma_a = 1e-9
    f_a = f_at(gamma_a)
    if f_a <= zero_thresh:
        return _finalize(
            scenario, geom, link_it, nu, 0.0, stats, history,
            inner_tol, max_inner_iter, attained=True, zero=True,
        )

    gamma_b = max(float(gamma_hi), 2.0 * gamma_a)
    f_b = f_at(gamma_b)
    doublings = 0
    while f_b > zero_thresh:
        gamma_a = gamma_b
        gamma_b *= 2.0
        doublings += 1
        if doublings > 200:
            raise InternalSolverError(
                "efficiency bracket failed to close; F never went negative"
            )
        f_b = f_at(gamma_b)

    while gamma_b - gamma_a > eps:
        mid = 0.5 * (gamma_a + gamma_b)
        if f_at(mid) > zero_thresh:
            gamma_a = mid
        else:
            gamma_b = mid

    gamma_star = 0.5 * (gamma_a + gamma_b)
    _check_monotone(history, inner_tol)
    attained = pc > 0.0
    return _finalize(
        scenario, geom, link_it, nu, gamma_star, stats, history,
        inner_tol, max_inner_iter, attained=attained, zero=False,
    )


def _check_monotone(history, inner_tol):
    """F is strictly decreasing in gamma; detect dual-tolerance violations."""
    pts = sorted(history)
    slack = max(200.0 * inner_tol, 1e-9)
    for (g0, f0), (g1, f1) in zip(pts, pts[1:]):
        if g1 > g0 and f1 > f0 + slack:
            raise InternalSolverError(
                "parametric value increased with gamma "
                "(F(%.6g)=%.6g, F(%.6g)=%.6g)" % (g0, f0, g1, f1)
            )


def _finalize(scenario, geom, link_it, nu, gamma_star, stats, history,
              inner_tol, max_inner_iter, attained, zero):
    m = geom.m
    if zero:
        cov = Covariance.zeros(m)
        duals = DualPoint(
            it={j: 0.0 for j in geom.cross_js}, power=0.0
        )
        caused = {j: 0.0 for j in geom.cross_js}
        f_res = abs(history[0][1]) if history else 0.0
        return LinkSolution(
            link=geom.k,
            gamma_star=0.0,
            covariance=cov,
            duals=duals,
            f_residual=f_res,
            nu=nu,
            signal=0.0,
            total_power=scenario.circuit_power,
            caused=caused,
            attained=True,
            inner_iterations=stats["inner"],
            evaluations=stats["evals"],
        )
    gamma = max(gamma_star, 1e-12)
    res = _solve_dual(
        geom, link_it, gamma, nu, inner_tol, max_inner_iter, recover=True
    )
    duals = DualPoint(
        it={j: float(res["lam_it"][i]) for i, j in enumerate(geom.cross_js)},
        power=float(res["lam_pow"]),
    )
    cov = Covariance(np.outer(res["w"], res["w"].conj()))
    total_power = res["trace"] / scenario.amp_efficiency \
        + scenario.circuit_power
    return LinkSolution(
        link=geom.k,
        gamma_star=gamma_star,
        covariance=cov,
        duals=duals,
        f_residual=abs(res["f_value"]),
        nu=nu,
        signal=res["signal"],
        total_power=total_power,
        caused=res["caused"],
        attained=attained,
        inner_iterations=stats["inner"],
        evaluations=stats["evals"],
    )
