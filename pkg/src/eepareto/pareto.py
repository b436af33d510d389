"""Boundary tracing and decentralized tuning of interference levels.

The achievable energy-efficiency region of the coordinated downlink is
parametrized by the interference-temperature levels: every vector of
levels yields one per-link solve (solver.dinkelbach_bisection) and one
efficiency point.  This module sweeps level grids and filters the
non-dominated closure, evaluates the closed-form sensitivities of each
link's efficiency to its own and to the tolerated levels, and runs the
decentralized negotiation in which neighbouring cells trade mutual
interference budget along a direction that improves both links until
the first-order trade-off matrix becomes singular.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from .model import (
    Beamformer,
    ConfigurationError,
    EEPoint,
    Scenario,
    is_pareto_dominated,
)
from .solver import (
    ConvergenceError,
    ITVector,
    LinkIT,
    LinkSolution,
    dinkelbach_bisection,
    effective_noise,
)

LN2 = math.log(2.0)

# Fraction of the unconstrained interference appetite kept below the cap
# so that every grid level stays strictly binding.
DEFAULT_TOP_SLACK = 1e-3
# Cap scale, relative to the receiver noise floor, used when a link causes
# no interference at all (vanishing-power optimum or orthogonal channels).
# Positive levels then only add worst-case noise, so the useful range is
# a vanishing neighbourhood of zero.
TINY_TOP_FRACTION = 1e-11


# ---------------------------------------------------------------------------
# Boundary sweep


@dataclass
class BoundaryTrace:
    """All swept efficiency points plus their non-dominated closure.

    points holds one (ITVector, EEPoint, [LinkSolution, ...]) triple per
    grid point, in grid iteration order.  closure is the subset whose
    efficiency points no other swept point dominates (absolute slack
    1e-9), deduplicated so that coincident points keep one representative.
    """

    points: list
    closure: list

    def point_array(self) -> np.ndarray:
        return np.array([ee.as_array() for _, ee, _ in self.points])

    def closure_array(self) -> np.ndarray:
        return np.array([ee.as_array() for _, ee, _ in self.closure])

    def verify_closure(self, tol: float = 1e-9) -> None:
        """Raise unless the closure is pairwise non-dominated."""
        arrs = [ee.as_array() for _, ee, _ in self.closure]
        for i, cand in enumerate(arrs):
            others = arrs[:i] + arrs[i + 1 :]
            if others and is_pareto_dominated(cand, others, tol=tol):
                raise ConfigurationError(
                    "closure point %d is dominated by another closure point"
                    % i
                )


def _closure_of(points, tol, dedup_tol, rel_tol=1e-6):
    """Non-dominated subset of swept points with near-duplicate merging.

    A point is dropped when another sweep point dominates it under the
    absolute slack tol, or under a per-coordinate relative slack sized
    to the solver tolerance (distinctions below it are solve noise, and
    epsilon-ties on large efficiency scales would otherwise survive as
    spurious frontier slivers), or when it coincides with an already
    kept point within dedup_tol relative.
    """
    if not points:
        return []
    arr = np.array([ee.as_array() for _, ee, _ in points])
    kept = []
    kept_arr = []
    for idx, row in enumerate(arr):
        others = np.delete(arr, idx, axis=0)
        if others.size:
            if is_pareto_dominated(row, others, tol=tol):
                continue
            scaled = rel_tol * np.abs(row)
            above = np.all(others >= row - scaled, axis=1)
            strict = np.any(others > row + scaled, axis=1)
            if bool(np.any(above & strict)):
                continue
        scale = np.maximum(np.abs(row), 1e-300)
        dup = any(
            np.all(np.abs(row - prev) <= dedup_tol * scale)
            for prev in kept_arr
        )
        if dup:
            continue
        kept.append(points[idx])
        kept_arr.append(row)
    return kept


def sweep_boundary(
    scenario: Scenario,
    grid: dict,
    eps: float = 1e-6,
    *,
    closure_tol: float = 1e-9,
    dedup_tol: float = 1e-6,
) -> BoundaryTrace:
    """Solve every combination of interference levels and keep the frontier.

    grid maps each ordered pair (k, j) to the list of levels swept for
    the cap BS k obeys at terminal j; the sweep covers the Cartesian
    product of all axes.  Levels must be >= 0 (inf removes the cap).
    Solver convergence failures propagate with the offending level
    combination attached as err.grid_point.
    """
    pairs = ITVector.pairs(scenario.num_links)
    missing = [p for p in pairs if p not in grid]
    if missing:
        raise ConfigurationError(
            "grid is missing level lists for pairs %s" % missing
        )
    axes = []
    for p in pairs:
        vals = [float(v) for v in grid[p]]
        if not vals:
            raise ConfigurationError("grid axis for pair %s is empty" % (p,))
        if any(math.isnan(v) or v < 0.0 for v in vals):
            raise ConfigurationError(
                "grid levels for pair %s must be >= 0" % (p,)
            )
        axes.append(vals)

    points = []
    for combo in itertools.product(*axes):
        itv = ITVector(dict(zip(pairs, combo)))
        sols = []
        for k in scenario.links():
            try:
                sols.append(
                    dinkelbach_bisection(scenario, itv.for_link(k), k, eps=eps)
                )
            except ConvergenceError as err:
                wrapped = ConvergenceError(
                    "link %d failed to converge at levels %s: %s"
                    % (k, dict(itv.entries), err),
                    best_duals=err.best_duals,
                    best_value=err.best_value,
                    iterations=err.iterations,
                )
                wrapped.grid_point = itv
                raise wrapped from err
        ee = EEPoint(tuple(s.gamma_star for s in sols))
        points.append((itv, ee, sols))

    closure = _closure_of(points, closure_tol, dedup_tol)
    trace = BoundaryTrace(points=points, closure=closure)
    trace.verify_closure(closure_tol)
    return trace


def _appetite_probe(scenario, k, j, pairs):
    """Levels for probing link k's own cap toward j: everything else open."""
    base = {}
    for p in pairs:
        if p[0] == k:
            base[p] = math.inf
        else:
            base[p] = 0.0
    return base


def default_it_grid(
    scenario: Scenario,
    size: int = 20,
    *,
    eps: float = 1e-6,
    probes: int | None = None,
    slack: float = DEFAULT_TOP_SLACK,
) -> dict:
    """Level grid adapted to each link's own-cap efficiency envelope.

    For every ordered pair (k, j) the axis spans [0, top] where top is
    just below the interference BS k causes at terminal j when no cap is
    imposed, so the cap stays binding at every level.  Interior levels
    sit at equal increments of link k's efficiency envelope (solved with
    nothing tolerated), probed on a square-root spacing because the
    envelope rises like sqrt(level) out of the zero-forcing corner.
    Links that cause no interference get a vanishing axis relative to
    the receiver noise: with worst-case noise accounting, positive
    levels beyond the appetite only hurt, and the useful range shrinks
    to a neighbourhood of zero.
    """
    if size < 2:
        raise ConfigurationError("grid size must be >= 2, got %d" % size)
    if probes is None:
        probes = max(3 * size, 24)
    pairs = ITVector.pairs(scenario.num_links)
    grid = {}
    for (k, j) in pairs:
        base = _appetite_probe(scenario, k, j, pairs)
        open_sol = dinkelbach_bisection(
            scenario, ITVector(base).for_link(k), k, eps=eps
        )
        appetite = float(open_sol.caused.get(j, 0.0))
        if appetite > 0.0:
            top = appetite * (1.0 - slack)
        else:
            top = float(scenario.noise[j]) * TINY_TOP_FRACTION
        xs = np.linspace(0.0, math.sqrt(top), probes) ** 2
        vals = []
        for x in xs:
            probe = dict(base)
            probe[(k, j)] = float(x)
            sol = dinkelbach_bisection(
                scenario, ITVector(probe).for_link(k), k, eps=eps
            )
            vals.append(sol.gamma_star)
        vals = np.maximum.accumulate(np.asarray(vals))
        span = float(vals[-1] - vals[0])
        if span > max(4.0 * eps, 1e-12 * abs(float(vals[-1]))):
            targets = np.linspace(vals[0], vals[-1], size)
            axis = np.interp(targets, vals, xs)
        else:
            # flat envelope (cap never binds): fall back to linear spacing
            axis = np.linspace(0.0, top, size)
        axis[0] = 0.0
        axis[-1] = top
        axis = np.maximum.accumulate(axis)
        grid[(k, j)] = [float(v) for v in axis]
    return grid


def achieved_interference(solutions) -> ITVector:
    """Levels actually caused by the returned covariances.

    Feeding these back as caps is the fixed-point property of boundary
    points: re-solving at the achieved levels reproduces the same
    efficiency point.
    """
    entries = {}
    for sol in solutions:
        for j, v in sol.caused.items():
            entries[(sol.link, j)] = max(float(v), 0.0)
    return ITVector(entries)


# ---------------------------------------------------------------------------
# Sensitivities and the pairwise trade-off matrix


def sensitivity_own(solution: LinkSolution, j: int) -> float:
    """Efficiency gain per unit relaxation of the cap toward terminal j.

    Equals the cap's multiplier scaled by the consumed power, a standard
    sensitivity result for concave-over-affine fractional programs; zero
    whenever the cap is inactive (complementary slackness) or the
    optimum transmits nothing.
    """
    lam = float(solution.duals.it.get(j, 0.0))
    if solution.total_power <= 0.0:
        return 0.0
    return lam / solution.total_power


def sensitivity_cross(
    solution: LinkSolution, scenario: Scenario, link_it, i: int
) -> float:
    """Efficiency loss per unit of interference tolerated by link i.

    Closed form from differentiating the rate through the worst-case
    noise floor: -s / (nu (nu + s) ln2 (tr(S)/eta + P_c)) with s the
    received signal power and nu the effective noise.  Always <= 0.
    """
    if isinstance(link_it, ITVector):
        link_it = link_it.for_link(i)
    if solution.link != i or link_it.link != i:
        raise ConfigurationError(
            "cross sensitivity needs the victim link's own solution and "
            "levels; got solution for link %d and levels for link %d, "
            "expected link %d" % (solution.link, link_it.link, i)
        )
    nu = effective_noise(link_it, scenario.noise[i])
    s = float(solution.signal)
    if s <= 0.0 or solution.total_power <= 0.0:
        return 0.0
    return -s / (nu * (nu + s) * LN2 * solution.total_power)


@dataclass(frozen=True)
class DirectionMatrix:
    """First-order response of two links to their mutual caps.

    a = dE_i/dG_ij, b = dE_i/dG_ji, c = dE_j/dG_ij, d = dE_j/dG_ji,
    for the ordered pair (i, j): relaxing an own cap never hurts
    (a, d >= 0) and tolerating more interference never helps
    (b, c <= 0).  The matrix is singular exactly when the two links'
    trade-off directions align, the stationarity mark of a boundary
    point.
    """

    a: float
    b: float
    c: float
    d: float

    def __post_init__(self):
        if self.a < 0.0 or self.d < 0.0:
            raise ConfigurationError(
                "own-cap sensitivities must be >= 0, got a=%g d=%g"
                % (self.a, self.d)
            )
        if self.b > 0.0 or self.c > 0.0:
            raise ConfigurationError(
                "tolerated-level sensitivities must be <= 0, got b=%g c=%g"
                % (self.b, self.c)
            )

    @property
    def det(self) -> float:
        return self.a * self.d - self.b * self.c

    def as_array(self) -> np.ndarray:
        return np.array([[self.a, self.b], [self.c, self.d]])


def _matrix_from_solutions(scenario, itv, i, j, sol_i, sol_j):
    return DirectionMatrix(
        a=sensitivity_own(sol_i, j),
        b=sensitivity_cross(sol_i, scenario, itv.for_link(i), i),
        c=sensitivity_cross(sol_j, scenario, itv.for_link(j), j),
        d=sensitivity_own(sol_j, i),
    )


def build_direction_matrix(
    scenario: Scenario, itv: ITVector, i: int, j: int, eps: float = 1e-6
) -> DirectionMatrix:
    """Solve links i and j at the given levels and assemble their matrix."""
    if i == j:
        raise ConfigurationError("direction matrix needs two distinct links")
    sol_i = dinkelbach_bisection(scenario, itv.for_link(i), i, eps=eps)
    sol_j = dinkelbach_bisection(scenario, itv.for_link(j), j, eps=eps)
    return _matrix_from_solutions(scenario, itv, i, j, sol_i, sol_j)


def direction_vector(matrix: DirectionMatrix, alpha: float) -> np.ndarray:
    """Mutual-cap update direction with first-order gain for both links.

    d = sign(det) [alpha d - b, a - alpha c]; the product D d then equals
    (alpha |det|, |det|), so both links improve to first order whenever
    the matrix is nonsingular.  A singular matrix returns the zero
    vector, which callers treat as converged.  At alpha = 0 the first
    component of D d is zero: that link is only guaranteed not to lose.
    """
    if alpha < 0.0:
        raise ConfigurationError("mixing weight must be >= 0, got %g" % alpha)
    det = matrix.det
    if det == 0.0:
        return np.zeros(2)
    sign = 1.0 if det > 0.0 else -1.0
    return sign * np.array(
        [alpha * matrix.d - matrix.b, matrix.a - alpha * matrix.c]
    )


# ---------------------------------------------------------------------------
# Decentralized negotiation


@dataclass(frozen=True)
class DistributedConfig:
    """Settings of the decentralized level negotiation.

    step is the initial trust-region radius in Watts of level movement
    per pair update (None selects 1e-3 times the local noise scale;
    0 freezes the levels).  mixing weights the two links in the update
    direction.  The run stops once every pair's |det D| falls to
    stop_threshold, or after max_rounds full passes.  init is "zf"
    (zero-forcing efficiency-optimal start) or an explicit ITVector.
    """

    step: float | None = None
    mixing: float = 1.0
    stop_threshold: float = 1e-6
    max_rounds: int = 500
    init: object = "zf"
    eps: float = 1e-6

    def __post_init__(self):
        if self.step is not None and not (self.step >= 0.0):
            raise ConfigurationError(
                "step must be >= 0 or None, got %s" % (self.step,)
            )
        if self.mixing < 0.0:
            raise ConfigurationError(
                "mixing weight must be >= 0, got %g" % self.mixing
            )
        if not (self.stop_threshold > 0.0):
            raise ConfigurationError(
                "stop threshold must be > 0, got %s" % (self.stop_threshold,)
            )
        if self.max_rounds < 0:
            raise ConfigurationError(
                "max rounds must be >= 0, got %d" % self.max_rounds
            )
        if not (isinstance(self.init, ITVector) or self.init == "zf"):
            raise ConfigurationError(
                "init must be 'zf' or an explicit ITVector"
            )


@dataclass
class DistributedRound:
    """State after one full pass over the link pairs."""

    index: int
    it: ITVector
    ee: EEPoint
    dets: dict  # (i, j), i < j -> |det D_ij|
    steps: dict  # (i, j), i < j -> trust radius in effect


@dataclass
class DistributedRun:
    """Trajectory of the negotiation with a convergence verdict."""

    rows: list
    converged: bool

    @property
    def trajectory(self) -> list:
        return [(row.it, row.ee) for row in self.rows]

    @property
    def endpoint(self) -> DistributedRound:
        return self.rows[-1]

    @property
    def rounds(self) -> int:
        return len(self.rows) - 1


def _noise_scale(scenario, itv, i, j):
    """Local level scale of a pair: the larger effective noise floor."""
    nu_i = effective_noise(itv.for_link(i), scenario.noise[i])
    nu_j = effective_noise(itv.for_link(j), scenario.noise[j])
    return max(nu_i, nu_j)


def run_distributed(
    scenario: Scenario, config: DistributedConfig
) -> DistributedRun:
    """Negotiate mutual interference levels until stationarity.

    Each round passes once over the unordered link pairs in
    lexicographic order.  A pair whose trade-off matrix is still
    nonsingular moves its two levels along direction_vector, scaled to
    a trust radius that doubles on accepted moves (capped at a quarter
    of the local noise floor), halves when the efficiency pair stops
    improving, and halves when the determinant changes sign across the
    stationary set.  Levels clamp at zero.  The run converges when
    every pair's |det D| reaches config.stop_threshold; exhausting
    max_rounds returns converged=False.
    """
    n = scenario.num_links
    if isinstance(config.init, ITVector):
        itv = config.init
        if itv.num_links != n:
            raise ConfigurationError(
                "initial levels cover %d links, scenario has %d"
                % (itv.num_links, n)
            )
    else:
        itv, _ = zf_ee_init(scenario, eps=config.eps)

    eps = config.eps
    accept_slack = 2.0 * eps
    sols = [
        dinkelbach_bisection(scenario, itv.for_link(k), k, eps=eps)
        for k in scenario.links()
    ]
    pairs = [(i, j) for i in range(n) for j in range(i + 1, n)]
    radius = {}
    last_sign = {}
    for p in pairs:
        if config.step is not None:
            radius[p] = float(config.step)
        else:
            radius[p] = 1e-3 * _noise_scale(scenario, itv, *p)
        last_sign[p] = 0.0

    def snapshot(index):
        dets = {}
        for (i, j) in pairs:
            mat = _matrix_from_solutions(scenario, itv, i, j, sols[i], sols[j])
            dets[(i, j)] = abs(mat.det)
        ee = EEPoint(tuple(s.gamma_star for s in sols))
        return DistributedRound(
            index=index, it=itv, ee=ee, dets=dets, steps=dict(radius)
        )

    rows = [snapshot(0)]
    converged = all(
        v <= config.stop_threshold for v in rows[-1].dets.values()
    )

    rnd = 0
    while not converged and rnd < config.max_rounds:
        rnd += 1
        for (i, j) in pairs:
            mat = _matrix_from_solutions(scenario, itv, i, j, sols[i], sols[j])
            det = mat.det
            sign = math.copysign(1.0, det) if det != 0.0 else 0.0
            flipped = (
                sign != 0.0
                and last_sign[(i, j)] != 0.0
                and sign != last_sign[(i, j)]
            )
            last_sign[(i, j)] = sign
            if flipped:
                # overshot the stationary set: contract and never regrow
                # on this pass, so the radius bisects onto it
                radius[(i, j)] *= 0.5
            if abs(det) <= config.stop_threshold:
                continue
            vec = direction_vector(mat, config.mixing)
            norm = float(np.max(np.abs(vec)))
            if norm == 0.0 or radius[(i, j)] == 0.0:
                continue
            unit = vec / norm
            cur_i = sols[i].gamma_star
            cur_j = sols[j].gamma_star
            delta = radius[(i, j)]
            accepted = False
            for _ in range(60):
                trial = itv.with_entries(
                    {
                        (i, j): max(0.0, itv[(i, j)] + delta * unit[0]),
                        (j, i): max(0.0, itv[(j, i)] + delta * unit[1]),
                    }
                )
                if trial.entries == itv.entries:
                    break
                try:
                    new_i = dinkelbach_bisection(
                        scenario, trial.for_link(i), i, eps=eps
                    )
                    new_j = dinkelbach_bisection(
                        scenario, trial.for_link(j), j, eps=eps
                    )
                except ConvergenceError:
                    delta *= 0.5
                    continue
                if (
                    new_i.gamma_star >= cur_i - accept_slack
                    and new_j.gamma_star >= cur_j - accept_slack
                ):
                    itv = trial
                    sols[i] = new_i
                    sols[j] = new_j
                    if flipped:
                        radius[(i, j)] = delta
                    else:
                        cap = 0.25 * _noise_scale(scenario, itv, i, j)
                        radius[(i, j)] = min(2.0 * delta, max(cap, delta))
                    accepted = True
                    break
                delta *= 0.5
            if not accepted:
                radius[(i, j)] = delta
        rows.append(snapshot(rnd))
        converged = all(
            v <= config.stop_threshold for v in rows[-1].dets.values()
        )

    return DistributedRun(rows=rows, converged=converged)


# ---------------------------------------------------------------------------
# Initial points and the zero-circuit-power corner


def _scalar_ee_power(gain, nu, p_max, pc, eta):
    """Efficiency-optimal power on a fixed direction.

    Maximizes log2(1 + p g / nu) / (p / eta + pc) over p in [0, p_max]
    by bisection on the efficiency parameter with the closed-form inner
    maximizer p(gamma) = clip(eta / (gamma ln2) - nu / g).  Returns
    (power, efficiency); pc = 0 returns the vanishing-power supremum.
    """
    if gain <= 0.0 or p_max <= 0.0:
        return 0.0, 0.0
    if pc == 0.0:
        return 0.0, eta * gain / (nu * LN2)

    def value_at(gamma):
        p = min(max(eta / (gamma * LN2) - nu / gain, 0.0), p_max)
        return math.log1p(p * gain / nu) / LN2 - gamma * (p / eta + pc), p

    hi = 1.0
    f_hi, _ = value_at(hi)
    for _ in range(200):
        if f_hi < 0.0:
            break
        hi *= 2.0
        f_hi, _ = value_at(hi)
    lo = 0.0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if mid == lo or mid == hi:
            break
        f_mid, _ = value_at(mid)
        if f_mid > 0.0:
            lo = mid
        else:
            hi = mid
    gamma = 0.5 * (lo + hi)
    _, p = value_at(gamma)
    return p, gamma


def zf_ee_init(scenario: Scenario, eps: float = 1e-6):
    """Zero-forcing directions with per-link efficiency-optimal power.

    Each BS beams into the orthogonal complement of its cross channels
    and solves a scalar efficiency problem for its power; the returned
    levels are the (numerically vanishing) residual leakages, so the
    point is self-consistent as a negotiation start.  A link whose
    direct channel lies in the span of its cross channels falls back to
    zero power.  Returns (ITVector, [Beamformer, ...]).
    """
    del eps  # the scalar problem bisects to machine precision
    n = scenario.num_links
    pairs = ITVector.pairs(n)
    entries = {p: 0.0 for p in pairs}
    beams = []
    for k in scenario.links():
        h = scenario.channel(k, k)
        cross = [scenario.channel(k, j) for j in scenario.links() if j != k]
        w = h.astype(np.complex128)
        if cross:
            # least-squares residual of h against the cross channels is
            # orthogonal to each of them under the Hermitian inner product
            A = np.array(cross).T
            coef, *_ = np.linalg.lstsq(A, h, rcond=None)
            w = h - A @ coef
        nrm = float(np.linalg.norm(w))
        if nrm <= 1e-12 * float(np.linalg.norm(h)):
            beams.append(Beamformer.zero(len(h)))
            continue
        u = w / nrm
        gain = float(np.abs(np.vdot(h, u)) ** 2)
        p, _ = _scalar_ee_power(
            gain,
            float(scenario.noise[k]),
            float(scenario.power_caps[k]),
            scenario.circuit_power,
            scenario.amp_efficiency,
        )
        beams.append(Beamformer(u * math.sqrt(p), p))
        for j in scenario.links():
            if j != k:
                leak = p * float(np.abs(np.vdot(scenario.channel(k, j), u)) ** 2)
                entries[(k, j)] = leak
    return ITVector(entries), beams


def pc_zero_point(scenario: Scenario):
    """Supremum efficiency tuple when no circuit power is drawn.

    With zero circuit power every link's efficiency is maximized in the
    vanishing-power limit, where interference disappears and the best
    direction matches the direct channel: the region becomes a box with
    the single corner (eta |h_kk|^2 / (sigma_k^2 ln2))_k.  Returns
    (EEPoint, [unit direction, ...]).  Calling this with positive
    circuit power is a usage error.
    """
    if scenario.circuit_power != 0.0:
        raise ConfigurationError(
            "the analytic corner exists only at zero circuit power, got %g"
            % scenario.circuit_power
        )
    values = []
    directions = []
    for k in scenario.links():
        h = scenario.channel(k, k)
        g = float(np.real(np.vdot(h, h)))
        values.append(
            scenario.amp_efficiency * g / (float(scenario.noise[k]) * LN2)
        )
        nrm = math.sqrt(g)
        directions.append(h / nrm if nrm > 0.0 else np.zeros_like(h))
    return EEPoint(tuple(values)), directions
