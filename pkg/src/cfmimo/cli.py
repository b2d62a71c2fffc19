"""Experiment driver: sweeps reproducing the published figure trends, the
adversary's power-allocation comparison, CDFs of the max per-user rate, and
an oracle-agreement validation run.  Everything is emitted as tidy CSV with
the fully-resolved configuration in a header comment, so any file can be
regenerated byte-identically from its own header.

Exit codes: 0 ok, 2 config error, 3 infeasible config, 4 solver failure.
Worker count is capped by the CFMIMO_THREADS environment variable; outputs
are gathered in deterministic grid order regardless of it.
"""

from __future__ import annotations

import argparse
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import replace

import numpy as np

from . import __version__
from .config import (
    ConfigError,
    InfeasibleConfigError,
    SystemConfig,
    apply_overrides,
    config_header,
    load_config,
    validate,
)
from .estimation import PowerAllocation
from .minmax import MinMaxError, build_problem, equal_allocation, solve_minmax
from .model import draw_channels, drop_fading, rng_stream
from .rates import (
    closed_form_report,
    closed_form_terms,
    gamma_coeff,
    kappa_coeff,
    mc_rate,
    uniform_full_power_eta,
)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_INFEASIBLE = 3
EXIT_SOLVER = 4

SWEEPS = ("sweep-n", "sweep-m", "sweep-power")
EXPERIMENTS = SWEEPS + ("optimize", "cdf", "validate")
DEFAULT_GRIDS = {"sweep-n": "0,8,16,32", "sweep-m": "32,64,96,128",
                 "sweep-power": "0,1,10,100"}


def _workers() -> int:
    env = os.environ.get("CFMIMO_THREADS")
    if env:
        return max(1, int(env))
    return min(4, os.cpu_count() or 1)


def _pool_map(fn, items):
    """Deterministic parallel map: results in input order."""
    w = _workers()
    if w == 1 or len(items) <= 1:
        return [fn(i) for i in items]
    with ThreadPoolExecutor(max_workers=w) as pool:
        return list(pool.map(fn, items))


def _fmt(value) -> str:
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _write_csv(path, config, experiment, columns, rows):
    lines = [f"# config: {config_header(config)}",
             f"# experiment: {experiment} cfmimo={__version__}",
             ",".join(columns)]
    for row in rows:
        lines.append(",".join(_fmt(v) for v in row))
    text = "\n".join(lines) + "\n"
    if path == "-":
        sys.stdout.write(text)
    else:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)


def _drop_allocations(fading, config):
    gamma = gamma_coeff(fading.beta, config.tau_u, config.rho_up)
    kappa = kappa_coeff(fading.theta, config.tau_u, config.rho_up)
    eta = uniform_full_power_eta(gamma)
    zeta = equal_allocation(kappa) if config.n_adv else np.zeros_like(kappa)
    return PowerAllocation(eta=eta, zeta=zeta), gamma, kappa


def _sweep_config(kind, config, value):
    """Config for one grid point.  sweep-power uses the normalized axis
    mu_dp / rho_dp."""
    if kind == "sweep-n":
        return replace(config, n_adv=int(value))
    if kind == "sweep-m":
        return replace(config, m_aps=int(value))
    return replace(config, mu_dp=float(value) * config.rho_dp)


def _nested_fading(config, max_n, max_m, drop):
    """Fading for one drop at the largest grid sizes; sweep points slice the
    leading APs so grid levels are coupled within a drop."""
    big = validate(replace(config, n_adv=max_n, m_aps=max_m))
    return drop_fading(big, drop)


def _slice_fading(fading, config):
    m, n = config.m_aps, config.n_adv
    from .model import LargeScaleFading, Layout
    layout = Layout(ap=fading.layout.ap[:m], adv=fading.layout.adv[:n],
                    user=fading.layout.user)
    return LargeScaleFading(
        beta=fading.beta[:m], theta=fading.theta[:n],
        pl_db=fading.pl_db[:m], shadow_db=fading.shadow_db[:m],
        pl_db_adv=fading.pl_db_adv[:n], shadow_db_adv=fading.shadow_db_adv[:n],
        layout=layout)


def run_sweep(kind, config, grid, drops, trials):
    """Average closed-form and Monte Carlo sum rates over drops for every
    grid point and attack mode."""
    max_n = max((int(v) for v in grid), default=config.n_adv) if kind == "sweep-n" \
        else config.n_adv
    max_m = max((int(v) for v in grid), default=config.m_aps) if kind == "sweep-m" \
        else config.m_aps
    max_n = max(max_n, 1)

    def one_drop(drop):
        fading_full = _nested_fading(config, max_n, max_m, drop)
        out = {}
        for value in grid:
            cfg = validate(_sweep_config(kind, config, value))
            fading = _slice_fading(fading_full, cfg)
            alloc, gamma, kappa = _drop_allocations(fading, cfg)
            terms = closed_form_terms(alloc, fading, gamma, kappa, cfg)
            for attack in ("none", "psa", "data"):
                cf = closed_form_report(attack, terms, alloc, cfg)
                mc = mc_rate(attack, cfg, alloc, fading, trials=trials,
                             seed=cfg.seed + drop, workers=1)
                se = float(np.linalg.norm(mc.stderr)) * cfg.prelog()
                out[(value, attack)] = (cf.sum_rate, mc.sum_rate, se)
        return out

    per_drop = _pool_map(one_drop, list(range(drops)))
    rows = []
    for value in grid:
        for attack in ("none", "psa", "data"):
            cf = float(np.mean([d[(value, attack)][0] for d in per_drop]))
            mc = float(np.mean([d[(value, attack)][1] for d in per_drop]))
            se = float(np.mean([d[(value, attack)][2] for d in per_drop]) /
                       np.sqrt(drops))
            rows.append((value, attack, "equal", cf, mc, se))
    return ("x_value", "mode", "alloc", "rate_sum_cf", "rate_sum_mc", "stderr"), rows


def _max_user_rate(attack, zeta, fading, config, alloc, gamma, kappa) -> float:
    terms = closed_form_terms(PowerAllocation(alloc.eta, zeta), fading,
                              gamma, kappa, config)
    report = closed_form_report(attack, terms,
                                PowerAllocation(alloc.eta, zeta), config)
    return float(report.rate.max())


def run_optimize(config, modes, drops, dump_cone=None):
    """Per-drop (equal, min-max) max-user rates for the requested modes."""
    if config.n_adv < 1:
        raise InfeasibleConfigError("optimize needs n_adv >= 1")

    def one_drop(drop):
        fading = drop_fading(config, drop)
        alloc, gamma, kappa = _drop_allocations(fading, config)
        terms = closed_form_terms(alloc, fading, gamma, kappa, config)
        out = []
        for mode in modes:
            problem = build_problem(mode, terms, kappa, fading.theta, config)
            zeta_opt, trace = solve_minmax(problem)
            r_eq = _max_user_rate(mode, equal_allocation(kappa), fading,
                                  config, alloc, gamma, kappa)
            r_opt = _max_user_rate(mode, zeta_opt, fading, config,
                                   alloc, gamma, kappa)
            out.append((drop, mode, r_eq, r_opt, len(trace.iterations)))
        return out

    if dump_cone:
        fading = drop_fading(config, 0)
        alloc, gamma, kappa = _drop_allocations(fading, config)
        terms = closed_form_terms(alloc, fading, gamma, kappa, config)
        problem = build_problem(modes[0], terms, kappa, fading.theta, config)
        from .cone import write_instance
        from .minmax import assemble_soc
        nu0 = np.sqrt(equal_allocation(kappa))
        cones, bounds = assemble_soc(modes[0], problem.objective(nu0 ** 2),
                                     nu0, problem)
        write_instance(dump_cone, cones, bounds)

    rows = [r for chunk in _pool_map(one_drop, list(range(drops))) for r in chunk]
    return ("drop", "mode", "r_max_equal", "r_max_opt", "sca_iters"), rows


def run_cdf(config, drops):
    """Empirical CDF of the max per-user rate for equal vs min-max power
    under both attacks."""
    if drops < 50:
        raise ConfigError("cdf needs drops >= 50")
    if config.n_adv < 1:
        raise InfeasibleConfigError("cdf needs n_adv >= 1")

    def one_drop(drop):
        fading = drop_fading(config, drop)
        alloc, gamma, kappa = _drop_allocations(fading, config)
        terms = closed_form_terms(alloc, fading, gamma, kappa, config)
        out = {}
        for mode in ("psa", "data"):
            problem = build_problem(mode, terms, kappa, fading.theta, config)
            zeta_opt, _ = solve_minmax(problem)
            out[(mode, "equal")] = _max_user_rate(
                mode, equal_allocation(kappa), fading, config, alloc, gamma, kappa)
            out[(mode, "minmax")] = _max_user_rate(
                mode, zeta_opt, fading, config, alloc, gamma, kappa)
        return out

    per_drop = _pool_map(one_drop, list(range(drops)))
    rows = []
    for mode in ("psa", "data"):
        for alloc_name in ("equal", "minmax"):
            values = sorted(d[(mode, alloc_name)] for d in per_drop)
            for i, v in enumerate(values, start=1):
                rows.append((mode, alloc_name, v, i / drops))
    return ("mode", "alloc", "r_max", "ecdf"), rows


def run_validate(config, trials):
    """Oracle-agreement suites; returns (columns, rows, all_passed)."""
    from .model import complex_normal
    fading = drop_fading(config, 0)
    alloc, gamma, kappa = _drop_allocations(fading, config)
    terms = closed_form_terms(alloc, fading, gamma, kappa, config)
    checks = []

    # uplink estimator second moments on a subsample of links
    rng = rng_stream(config.seed, "mc", 10 ** 6)
    n_tr = min(trials, 20000)
    snr = config.tau_u * config.rho_up
    beta = fading.beta
    coeff = np.sqrt(snr) * beta / (1.0 + snr * beta)
    acc2 = np.zeros_like(beta)
    done = 0
    while done < n_tr:
        take = min(2000, n_tr - done)
        g = complex_normal(rng, (take,) + beta.shape) * np.sqrt(beta)
        gh = coeff * (np.sqrt(snr) * g + complex_normal(rng, g.shape))
        acc2 += (np.abs(gh) ** 2).sum(axis=0)
        done += take
    var_rel = np.abs(acc2 / n_tr - gamma) / gamma
    checks.append(("uplink-estimator-variance", float(var_rel.max()), 0.05))

    for attack in ("none", "psa", "data"):
        cf = closed_form_report(attack, terms, alloc, config)
        mc = mc_rate(attack, config, alloc, fading, trials=trials)
        rel = float(np.max(np.abs(cf.rate - mc.rate) / cf.rate))
        checks.append((f"closed-form-vs-mc-{attack}", rel, 0.05))

    rows = []
    all_ok = True
    for name, value, tol in checks:
        ok = value <= tol
        all_ok &= ok
        rows.append((name, value, tol, "pass" if ok else "FAIL"))
        print(f"{'PASS' if ok else 'FAIL'}  {name}: {value:.4g} (tol {tol})")
    return ("check", "value", "tolerance", "status"), rows, all_ok


def dump_realizations(path, config):
    """One full realization in long-form CSV for debugging."""
    from .estimation import effective_channels, uplink_estimate
    fading = drop_fading(config, 0)
    channels = draw_channels(fading, config, rng_stream(config.seed, "smallscale"))
    est = uplink_estimate(channels, fading, config,
                          rng_stream(config.seed, "uplink-noise"))
    alloc, _, _ = _drop_allocations(fading, config)
    eff = effective_channels(channels, est, alloc)
    rows = []
    arrays = {"beta": fading.beta, "theta": fading.theta, "g": channels.g,
              "f": channels.f, "g_hat": est.g_hat, "f_hat": est.f_hat,
              "a": eff.a, "b": eff.b}
    for name, arr in arrays.items():
        it = np.nditer(arr, flags=["multi_index"])
        for v in it:
            i, j = it.multi_index
            rows.append((name, i, j, float(np.real(v)), float(np.imag(v))))
    _write_csv(path, config, "dump-realizations",
               ("array", "i", "j", "re", "im"), rows)


def build_parser():
    parser = argparse.ArgumentParser(
        prog="cfmimo",
        description="Cell-free massive MIMO downlink attack experiments")
    parser.add_argument("experiment", choices=EXPERIMENTS)
    parser.add_argument("--config", help="key=value config file")
    parser.add_argument("--set", action="append", default=[], metavar="K=V",
                        help="override one config key")
    parser.add_argument("--seed", type=int, help="override the master seed")
    parser.add_argument("--out", default="-", help="output CSV path (- = stdout)")
    parser.add_argument("--grid", help="comma-separated sweep grid")
    parser.add_argument("--drops", type=int, help="random layouts to average")
    parser.add_argument("--trials", type=int, help="Monte Carlo trials override")
    parser.add_argument("--mode", choices=("psa", "data", "both"), default="both",
                        help="attack mode for optimize")
    parser.add_argument("--dump-realizations", metavar="PATH",
                        help="also write one channel realization as CSV")
    parser.add_argument("--dump-cone", metavar="PATH",
                        help="also write the first cone instance (optimize)")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        config = load_config(args.config) if args.config else SystemConfig()
        if args.set:
            config = apply_overrides(config, args.set)
        if args.seed is not None:
            config = validate(replace(config, seed=args.seed))
        validate(config)
        trials = args.trials if args.trials is not None else config.trials

        if args.dump_realizations:
            dump_realizations(args.dump_realizations, config)

        if args.experiment in SWEEPS:
            grid_raw = args.grid or DEFAULT_GRIDS[args.experiment]
            grid = [float(v) if args.experiment == "sweep-power" else int(v)
                    for v in grid_raw.split(",")]
            if not grid:
                raise ConfigError("empty sweep grid")
            drops = args.drops or 20
            columns, rows = run_sweep(args.experiment, config, grid, drops, trials)
        elif args.experiment == "optimize":
            modes = ("psa", "data") if args.mode == "both" else (args.mode,)
            drops = args.drops or 20
            columns, rows = run_optimize(config, modes, drops,
                                         dump_cone=args.dump_cone)
        elif args.experiment == "cdf":
            drops = args.drops or 200
            columns, rows = run_cdf(config, drops)
        else:  # validate
            columns, rows, ok = run_validate(config, trials)
            _write_csv(args.out, config, "validate", columns, rows)
            return EXIT_OK if ok else 1
        _write_csv(args.out, config, args.experiment, columns, rows)
        print(f"{args.experiment}: {len(rows)} rows "
              f"(seed {config.seed}, workers {_workers()})", file=sys.stderr)
        return EXIT_OK
    except InfeasibleConfigError as exc:
        print(f"cfmimo: infeasible config: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except ConfigError as exc:
        print(f"cfmimo: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except MinMaxError as exc:
        print(f"cfmimo: solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER


if __name__ == "__main__":
    sys.exit(main())
