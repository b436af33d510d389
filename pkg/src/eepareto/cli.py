"""Batch command line front end.

Subcommands: sweep (boundary + closure CSVs), distributed (negotiation
trajectory CSV), special (zero-circuit-power analytic point CSV), and
verify (independent oracle cross-checks with a pass/fail report).

Exit codes: 0 success, 1 configuration error, 2 I/O error, 3 failed
verification.
"""
from __future__ import annotations

import argparse
import csv
import math
import sys

import numpy as np

from .config import RunConfig, load_config
from .model import ConfigurationError, is_pareto_dominated
from .oracle import (
    brute_force_cloud,
    dual_grid_min,
    finite_diff_ee,
    projected_gradient_inner,
)
from .pareto import (
    DistributedConfig,
    default_it_grid,
    pc_zero_point,
    run_distributed,
    sensitivity_cross,
    sensitivity_own,
    sweep_boundary,
)
from .solver import (
    ITVector,
    SolverError,
    dinkelbach_bisection,
    ellipsoid_solve,
)

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_IO = 2
EXIT_VERIFY = 3


def _fmt(value) -> str:
    """Shortest round-trip decimal text for a float (deterministic)."""
    return repr(float(value))


def _rank_residual(cov) -> float:
    vals = np.linalg.eigvalsh(cov.matrix)
    top = float(vals[-1])
    if top <= 0.0:
        return 0.0
    second = float(vals[-2]) if vals.shape[0] > 1 else 0.0
    return max(second, 0.0) / top


class _CsvSink:
    """Single-writer CSV file with a provenance comment line."""

    def __init__(self, path, provenance, header):
        try:
            self._fh = open(path, "w", encoding="utf-8", newline="")
        except OSError as exc:
            raise _IoFailure("cannot write %s: %s" % (path, exc)) from exc
        self._fh.write(provenance + "\r\n")
        self._writer = csv.writer(self._fh)
        self._writer.writerow(header)

    def row(self, cells):
        self._writer.writerow(cells)

    def close(self):
        self._fh.close()


class _IoFailure(RuntimeError):
    pass


def _provenance(cfg: RunConfig, seed: int, tolerances: dict) -> str:
    tol = " ".join(
        "%s=%s" % (key, _fmt(val) if isinstance(val, float) else val)
        for key, val in tolerances.items()
    )
    return "# config=%s seed=%d %s" % (cfg.config_hash, seed, tol)


def _sweep_header(pairs, num_links):
    cols = ["it_%d_%d" % p for p in pairs]
    cols += ["ee_%d" % k for k in range(num_links)]
    cols += ["p_%d" % k for k in range(num_links)]
    cols += ["rank_res_%d" % k for k in range(num_links)]
    cols += ["f_res_%d" % k for k in range(num_links)]
    return cols


def _sweep_row(itv, ee, sols, pairs, bandwidth):
    cells = [_fmt(itv[p]) for p in pairs]
    cells += [_fmt(v * bandwidth) for v in ee.values]
    cells += [_fmt(s.covariance.trace) for s in sols]
    cells += [_fmt(_rank_residual(s.covariance)) for s in sols]
    cells += [_fmt(s.f_residual) for s in sols]
    return cells


def cmd_sweep(cfg: RunConfig, seed: int, prefix: str) -> int:
    scenario = cfg.scenario.build(seed)
    grid = default_it_grid(scenario, cfg.sweep.grid_size, eps=cfg.sweep.eps)
    trace = sweep_boundary(scenario, grid, eps=cfg.sweep.eps)
    pairs = ITVector.pairs(scenario.num_links)
    header = _sweep_header(pairs, scenario.num_links)
    prov = _provenance(cfg, seed, {
        "eps": cfg.sweep.eps, "grid_size": str(cfg.sweep.grid_size),
    })
    bw = scenario.bandwidth
    boundary = _CsvSink(prefix + "_boundary.csv", prov, header)
    for itv, ee, sols in trace.points:
        boundary.row(_sweep_row(itv, ee, sols, pairs, bw))
    boundary.close()
    closure = _CsvSink(prefix + "_closure.csv", prov, header)
    for itv, ee, sols in trace.closure:
        closure.row(_sweep_row(itv, ee, sols, pairs, bw))
    closure.close()
    print("sweep: %d grid points, closure of %d, written to %s_boundary.csv"
          % (len(trace.points), len(trace.closure), prefix))
    return EXIT_OK


def _initial_levels(cfg: RunConfig, num_links):
    text = cfg.distributed.init
    if text == "zf":
        return "zf"
    values = [float(p) for p in text.split(",")]
    pairs = ITVector.pairs(num_links)
    if len(values) != len(pairs):
        raise ConfigurationError(
            "init lists %d levels but the scenario has %d ordered pairs"
            % (len(values), len(pairs))
        )
    return ITVector(dict(zip(pairs, values)))


def cmd_distributed(cfg: RunConfig, seed: int, prefix: str) -> int:
    scenario = cfg.scenario.build(seed)
    dist = cfg.distributed
    run_cfg = DistributedConfig(
        step=dist.delta, mixing=dist.alpha, stop_threshold=dist.tau,
        max_rounds=dist.max_rounds, init=_initial_levels(cfg, scenario.num_links),
        eps=dist.eps,
    )
    run = run_distributed(scenario, run_cfg)
    pairs = ITVector.pairs(scenario.num_links)
    duo = [
        (i, j)
        for i in range(scenario.num_links)
        for j in range(i + 1, scenario.num_links)
    ]
    header = ["round"]
    header += ["it_%d_%d" % p for p in pairs]
    header += ["ee_%d" % k for k in range(scenario.num_links)]
    header += ["det_%d_%d" % p for p in duo]
    header += ["delta_%d_%d" % p for p in duo]
    header.append("converged")
    prov = _provenance(cfg, seed, {
        "alpha": dist.alpha, "tau": dist.tau, "eps": dist.eps,
        "max_rounds": str(dist.max_rounds),
    })
    bw = scenario.bandwidth
    sink = _CsvSink(prefix + "_trajectory.csv", prov, header)
    last = len(run.rows) - 1
    for idx, row in enumerate(run.rows):
        cells = [str(row.index)]
        cells += [_fmt(row.it[p]) for p in pairs]
        cells += [_fmt(v * bw) for v in row.ee.values]
        cells += [_fmt(row.dets[p]) for p in duo]
        cells += [_fmt(row.steps[p]) for p in duo]
        cells.append(str(int(run.converged)) if idx == last else "0")
        sink.row(cells)
    sink.close()
    print("distributed: %d rounds, converged=%s, written to %s_trajectory.csv"
          % (run.rounds, run.converged, prefix))
    return EXIT_OK


def cmd_special(cfg: RunConfig, seed: int, prefix: str) -> int:
    scenario = cfg.scenario.build(seed)
    point, _directions = pc_zero_point(scenario)
    prov = _provenance(cfg, seed, {"bandwidth": scenario.bandwidth})
    sink = _CsvSink(prefix + "_special.csv", prov,
                    ["link", "ee_bits_per_joule"])
    for k, value in enumerate(point.values):
        sink.row([str(k), _fmt(value * scenario.bandwidth)])
    sink.close()
    print("special: %d analytic entries written to %s_special.csv"
          % (len(point.values), prefix))
    return EXIT_OK


# ---------------------------------------------------------------------------
# verification suite
# ---------------------------------------------------------------------------


def _check_residual(scenario, vcfg, rng, report):
    """Bisection certificate: the parametric residual at gamma_star must
    be small once the bracket is narrower than eps."""
    level = 0.2 * min(scenario.noise)
    it = ITVector.uniform(scenario.num_links, level)
    worst = 0.0
    case = None
    for k in scenario.links():
        sol = dinkelbach_bisection(scenario, it, k, eps=vcfg.eps)
        if abs(sol.f_residual) > worst:
            worst = abs(sol.f_residual)
            case = {"link": k, "level": level, "eps": vcfg.eps}
    tol = 1e-4
    report.add("bisection-residual", worst, tol, worst <= tol, case)


def _random_levels(scenario, rng):
    entries = {}
    for pair in ITVector.pairs(scenario.num_links):
        j = pair[1]
        entries[pair] = float(rng.uniform(0.05, 0.6)) * scenario.noise[j]
    return ITVector(entries)


def _check_dual_grid(scenario, vcfg, rng, report):
    worst = 0.0
    case = None
    for i in range(vcfg.instances):
        it = _random_levels(scenario, rng)
        k = i % scenario.num_links
        gamma = float(rng.uniform(0.2, 1.0))
        _, f_ell, _ = ellipsoid_solve(gamma, scenario, it, k, tol=1e-9)
        ref = dual_grid_min(scenario, it, k, gamma)
        gap = abs(f_ell - ref.value) / max(1.0, abs(ref.value))
        if gap > worst:
            worst = gap
            case = {"instance": i, "link": k, "gamma": gamma,
                    "levels": {("%d_%d" % p): it[p]
                               for p in ITVector.pairs(scenario.num_links)}}
    tol = 1e-4
    report.add("dual-grid", worst, tol, worst <= tol, case)


def _check_projected_gradient(scenario, vcfg, rng, report):
    worst = 0.0
    case = None
    for i in range(vcfg.instances):
        it = _random_levels(scenario, rng)
        k = i % scenario.num_links
        gamma = float(rng.uniform(0.2, 1.0))
        _, f_ell, _ = ellipsoid_solve(gamma, scenario, it, k, tol=1e-9)
        inner = projected_gradient_inner(scenario, it, k, gamma)
        gap = abs(f_ell - inner.value)
        if gap > worst:
            worst = gap
            case = {"instance": i, "link": k, "gamma": gamma}
    tol = 1e-6
    report.add("projected-gradient", worst, tol, worst <= tol, case)


def _check_sensitivities(scenario, vcfg, rng, report):
    worst = 0.0
    case = None
    fd_eps = 1e-11
    for i in range(vcfg.instances):
        it = _random_levels(scenario, rng)
        k = i % scenario.num_links
        others = [j for j in scenario.links() if j != k]
        # anchor the probed link's own budgets strictly inside the active
        # region (a fraction of what it would cause unconstrained), so the
        # finite-difference probe never straddles the kink where a budget
        # goes slack and the one-sided derivative formula stops applying
        free = it.with_entries({(k, j): math.inf for j in others})
        unconstrained = dinkelbach_bisection(scenario, free, k, eps=1e-8)
        anchors = {}
        for j in others:
            appetite = unconstrained.caused[j]
            if appetite > 0.0:
                anchors[(k, j)] = float(rng.uniform(0.2, 0.7)) * appetite
        it = it.with_entries(anchors)
        sol = dinkelbach_bisection(scenario, it, k, eps=fd_eps)
        own_pair = None
        for j, lam in sol.duals.it.items():
            if lam > 1e-9:
                own_pair = (k, j)
                break
        candidates = []
        if own_pair is not None:
            candidates.append(
                ("own", own_pair, sensitivity_own(sol, own_pair[1]))
            )
        others = [j for j in scenario.links() if j != k]
        cross_pair = (others[0], k)
        candidates.append(
            ("cross", cross_pair, sensitivity_cross(sol, scenario, it, k))
        )
        for kind, pair, analytic in candidates:
            fd = finite_diff_ee(scenario, it, k, pair, eps=fd_eps)
            denom = max(abs(fd), abs(analytic), 1e-12)
            gap = abs(fd - analytic) / denom
            if gap > worst:
                worst = gap
                case = {"instance": i, "link": k, "kind": kind,
                        "pair": "%d_%d" % pair}
    tol = 1e-3
    report.add("finite-difference", worst, tol, worst <= tol, case)


def _check_cloud(scenario, cfg, seed, report):
    vcfg = cfg.verify
    if scenario.num_links != 2:
        report.skip("cloud-dominance",
                    "unsupported at K>2; dual-grid and gradient checks "
                    "cover the solver")
        return
    grid = default_it_grid(scenario, vcfg.grid_size, eps=cfg.sweep.eps)
    trace = sweep_boundary(scenario, grid, eps=cfg.sweep.eps)
    cloud = brute_force_cloud(scenario, vcfg.n_angle, vcfg.n_power)
    worst = 0.0
    case = None
    for itv, ee, _ in trace.closure:
        gain = cloud.max_improvement(ee.as_array())
        if gain > worst:
            worst = gain
            case = {"levels": {("%d_%d" % p): itv[p]
                               for p in ITVector.pairs(2)},
                    "ee": list(ee.values)}
    report.add("cloud-dominance", worst, vcfg.cloud_tol,
               worst <= vcfg.cloud_tol, case)


class _Report:
    def __init__(self):
        self.lines = []
        self.failed = False

    def add(self, name, worst, tol, ok, case):
        status = "PASS" if ok else "FAIL"
        self.lines.append("%s %s: worst=%s tol=%s"
                          % (status, name, _fmt(worst), _fmt(tol)))
        if not ok:
            self.failed = True
            self.lines.append("  replay: %r" % (case,))

    def skip(self, name, why):
        self.lines.append("SKIP %s: %s" % (name, why))


def cmd_verify(cfg: RunConfig, seed: int, prefix: str) -> int:
    scenario = cfg.scenario.build(seed)
    rng = np.random.default_rng(seed)
    report = _Report()
    checks = (
        _check_residual,
        _check_dual_grid,
        _check_projected_gradient,
        _check_sensitivities,
    )
    for check in checks:
        try:
            check(scenario, cfg.verify, rng, report)
        except (SolverError, ConfigurationError) as exc:
            report.add(check.__name__.lstrip("_"), math.inf, 0.0, False,
                       {"error": str(exc)})
    try:
        _check_cloud(scenario, cfg, seed, report)
    except (SolverError, ConfigurationError) as exc:
        report.add("cloud-dominance", math.inf, 0.0, False,
                   {"error": str(exc)})

    text = "\n".join(report.lines) + "\n"
    path = prefix + "_verify.txt"
    try:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(_provenance(cfg, seed, {"eps": cfg.verify.eps}) + "\n")
            fh.write(text)
    except OSError as exc:
        raise _IoFailure("cannot write %s: %s" % (path, exc)) from exc
    sys.stdout.write(text)
    return EXIT_VERIFY if report.failed else EXIT_OK


_COMMANDS = {
    "sweep": cmd_sweep,
    "distributed": cmd_distributed,
    "special": cmd_special,
    "verify": cmd_verify,
}


def build_parser():
    parser = argparse.ArgumentParser(
        prog="eepareto",
        description="Energy-efficiency boundary batch runner",
    )
    parser.add_argument("command", choices=sorted(_COMMANDS))
    parser.add_argument("--config", required=True,
                        help="path to the INI run configuration")
    parser.add_argument("--out", default=None,
                        help="output path prefix (overrides [output])")
    parser.add_argument("--seed", type=int, default=None,
                        help="channel seed override (u64)")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config)
    except ConfigurationError as exc:
        print("config error: %s" % exc, file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print("cannot read config: %s" % exc, file=sys.stderr)
        return EXIT_IO
    seed = cfg.scenario.seed if args.seed is None else args.seed
    if seed < 0:
        print("config error: seed must be nonnegative", file=sys.stderr)
        return EXIT_CONFIG
    prefix = args.out if args.out is not None else cfg.prefix
    try:
        return _COMMANDS[args.command](cfg, seed, prefix)
    except ConfigurationError as exc:
        print("config error: %s" % exc, file=sys.stderr)
        return EXIT_CONFIG
    except _IoFailure as exc:
        print("io error: %s" % exc, file=sys.stderr)
        return EXIT_IO
    except SolverError as exc:
        print("solver failure: %s" % exc, file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
