"""
Command line front end: bounds | solve-k | simulate | sweep | verify.

Every command writes its JSON or CSV output plus a manifest.json into the
output directory. Exit codes: 0 ok, 1 verification failure, 2 config error,
3 unsupported regime.
"""
import argparse
import os
import sys
from dataclasses import replace
from typing import Any, Dict, List, Optional, Sequence

from bounds.bounds import (bernoulli_gap_bound, bernoulli_gap_limit, capacity_bracket, receiver_bounds,
                           rx_simple_lower_bound, rx_upper_bound_general, solve_gap_constant, transmitter_bounds)
from cli.manifest import RunManifest
from cli.settings import (bernoulli_parameter, build_sim_config, get_float, get_int, get_list, resolve_settings,
                          rx_arrivals_spec, tx_arrival_model, tx_arrivals_spec)
from cli.verify import VerificationSuite
from config.config import OUTPUT_DIR
from model.arrivals import BernoulliArrivals, parse_arrivals
from sim.simulator import SimConfig, run_simulation
from util.errors import ConfigError, DegenerateMedianError, EhSimError, UnsupportedRegimeError
from util.utils import logger, to_json, write_csv, write_frame, write_text

EXIT_OK = 0
EXIT_VERIFY_FAILED = 1
EXIT_CONFIG_ERROR = 2
EXIT_UNSUPPORTED = 3

SWEEP_COLUMNS = ['kind', 'p', 'q', 'b_max', 't_ub', 't_lb_analytic', 't_sim_mean', 't_sim_stderr',
                 'gap_bound', 'error']
SWEEP_KINDS = ('bernoulli', 'uniform')


def _emit(payload: Dict[str, Any], args: argparse.Namespace, file_name: str, manifest: RunManifest) -> str:
    """Write the JSON report, echo it, and record it in the manifest."""
    text = to_json(payload)
    file_path = os.path.join(args.out, file_name)
    write_text(file_path, text)
    manifest.add_output(file_path)
    if args.json:
        print(text)
    else:
        for key in sorted(payload):
            if not isinstance(payload[key], (dict, list)):
                print(f"{key}: {payload[key]}")
    return file_path


def cmd_bounds(args: argparse.Namespace, settings: Dict[str, str], manifest: RunManifest) -> int:
    """Every bound that applies to the configured arrivals (tx_only) or to the (p, q) pair (tx_rx)."""
    b_max = get_float(settings, 'b_max')
    if settings['mode'] == 'tx_rx':
        p = bernoulli_parameter(settings, 'p', tx_arrivals_spec(settings))
        q = bernoulli_parameter(settings, 'q', rx_arrivals_spec(settings))
        report = receiver_bounds(p, q, b_max, parse_arrivals(tx_arrivals_spec(settings)))
        payload = {'command': 'bounds', 'mode': 'tx_rx', **report.to_dict()}
    else:
        arrivals = tx_arrival_model(settings)
        report = transmitter_bounds(arrivals, b_max)
        bracket = capacity_bracket(arrivals, get_float(settings, 'c'))
        payload = {'command': 'bounds', 'mode': 'tx_only', **report.to_dict(),
                   'capacity_bracket': bracket.to_dict()}
    _emit(payload, args, 'bounds.json', manifest)
    return EXIT_OK


def cmd_solve_k(args: argparse.Namespace, settings: Dict[str, str], manifest: RunManifest) -> int:
    """Root k of the gap recursion and the resulting gap bound."""
    if not settings.get('p'):
        raise ConfigError("solve-k needs --p")
    p = get_float(settings, 'p')
    if not 0.0 < p < 1.0:
        raise ConfigError(f"p must lie in (0, 1), got {p}")
    payload = {'command': 'solve-k', 'p': p, 'k': solve_gap_constant(p), 'gap': bernoulli_gap_bound(p),
               'gap_limit': bernoulli_gap_limit(p)}
    _emit(payload, args, 'solve_k.json', manifest)
    return EXIT_OK


def cmd_simulate(args: argparse.Namespace, settings: Dict[str, str], manifest: RunManifest) -> int:
    """Run the configured simulation; optionally dump the first replication's trace."""
    cfg = build_sim_config(settings, keep_trace=args.trace is not None)
    manifest.config = cfg.to_dict()
    manifest.seed = cfg.seed
    estimate = run_simulation(cfg)
    payload = {'command': 'simulate', 'config': cfg.to_dict(), **estimate.to_dict()}
    payload['config'].pop('keep_trace')
    _emit(payload, args, 'simulate.json', manifest)
    if args.trace is not None:
        write_frame(estimate.trace, args.trace)
        manifest.add_output(args.trace)
    return EXIT_OK


def sweep_points(settings: Dict[str, str]) -> List[Dict[str, Any]]:
    """
    Grid points in lexicographic order of (kind, p, q, b_max).

    Uniform arrivals span [0, b_max] and ignore p; an empty q list means tx_only.
    """
    kinds = sorted({k.strip().lower() for k in settings.get('grid.kind', '').split(',') if k.strip()})
    unknown = [k for k in kinds if k not in SWEEP_KINDS]
    if unknown:
        raise ConfigError(f"Unknown grid kinds {unknown}; expected {SWEEP_KINDS}")
    ps = sorted(set(get_list(settings, 'grid.p')))
    qs = sorted(set(get_list(settings, 'grid.q'))) or [None]
    b_maxes = sorted(set(get_list(settings, 'grid.b_max')))

    points = []
    for kind in kinds:
        for p in (ps if kind == 'bernoulli' else [None]):
            for q in qs:
                for b_max in b_maxes:
                    points.append({'kind': kind, 'p': p, 'q': q, 'b_max': b_max})
    return points


def sweep_row(point: Dict[str, Any], base: SimConfig) -> Dict[str, Any]:
    """Analytic and simulated throughput at one grid point; failures land in the error column."""
    row = dict(point)
    kind, p, q, b_max = point['kind'], point['p'], point['q'], point['b_max']
    try:
        spec = f"bernoulli:p={p:g},e={b_max:g}" if kind == 'bernoulli' else f"uniform:0,{b_max:g}"
        arrivals = parse_arrivals(spec)
        report = transmitter_bounds(arrivals, b_max)
        if q is None:
            cfg = replace(base, mode='tx_only', arrivals=spec, b_max=b_max)
            row.update(t_ub=report.t_ub, t_lb_analytic=report.t_lb, gap_bound=report.gap_bound)
        else:
            cfg = replace(base, mode='tx_rx', receiver='simple', arrivals=spec, rx_arrivals=f"bernoulli:p={q:g},e=1",
                          b_max=b_max, rx_b_max=1.0)
            rx = BernoulliArrivals(p=q, energy=1.0)
            row['t_ub'] = rx_upper_bound_general(arrivals, rx, rate_prefactor=cfg.prefactor)
            if isinstance(arrivals, BernoulliArrivals) and p > 0:
                row['t_lb_analytic'] = rx_simple_lower_bound(p, q, b_max, rate_prefactor=cfg.prefactor)
        estimate = run_simulation(cfg)
        row.update(t_sim_mean=estimate.mean, t_sim_stderr=estimate.std_err)
    except (EhSimError, ValueError) as e:
        logger.error(f"Sweep point {point} failed: {str(e)}")
        row['error'] = f"{type(e).__name__}: {str(e)}"
    return row


def cmd_sweep(args: argparse.Namespace, settings: Dict[str, str], manifest: RunManifest) -> int:
    """One CSV row per grid point; a failing point is recorded and the sweep continues."""
    base = build_sim_config(settings)
    manifest.config = {'grid': {k: settings.get(k, '') for k in ('grid.kind', 'grid.p', 'grid.q', 'grid.b_max')},
                       'sim': base.to_dict()}
    manifest.seed = base.seed
    points = sweep_points(settings)
    logger.info(f"Sweeping {len(points)} grid points")
    rows = [sweep_row(point, base) for point in points]
    file_path = os.path.join(args.out, 'sweep.csv')
    write_csv(rows, SWEEP_COLUMNS, file_path)
    manifest.add_output(file_path)
    if args.json:
        print(to_json({'command': 'sweep', 'rows': len(rows), 'output': file_path}))
    return EXIT_OK


def cmd_verify(args: argparse.Namespace, settings: Dict[str, str], manifest: RunManifest) -> int:
    """Run every acceptance check; exit 1 if any fails."""
    suite = VerificationSuite(n_slots=get_int(settings, 'slots'), n_replications=get_int(settings, 'reps'),
                              seed=get_int(settings, 'seed'), workers=get_int(settings, 'workers'))
    suite.run()
    report = suite.report()
    manifest.config = report['config']
    manifest.seed = suite.base.seed
    _emit(report, args, 'verify.json', manifest)
    if not report['passed']:
        failed = [r.number for r in suite.results if not r.passed]
        logger.error(f"Verification failed for criteria {failed}")
        return EXIT_VERIFY_FAILED
    return EXIT_OK


COMMANDS = {
    'bounds': cmd_bounds,
    'solve-k': cmd_solve_k,
    'simulate': cmd_simulate,
    'sweep': cmd_sweep,
    'verify': cmd_verify,
}


def _add_common_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument('--config', type=str, default=None, help='Run config file (key=value lines)')
    parser.add_argument('--out', type=str, default=OUTPUT_DIR, help='Output directory')
    parser.add_argument('--json', action='store_true', help='Print the JSON report to stdout')
    parser.add_argument('--seed', type=int, default=None, help='Master seed')
    parser.add_argument('--slots', type=str, default=None, help='Slots per replication')
    parser.add_argument('--reps', type=int, default=None, help='Number of replications')
    parser.add_argument('--workers', type=int, default=None, help='Worker processes for replications')
    parser.add_argument('--mode', choices=['tx_only', 'tx_rx'], default=None)
    parser.add_argument('--policy', choices=['cfp', 'greedy', 'ctp'], default=None)
    parser.add_argument('--receiver', choices=['auto', 'simple', 'threshold'], default=None)
    parser.add_argument('--arrivals', type=str, default=None, help="e.g. 'bernoulli:p=0.5,e=10' or 'uniform:0,10'")
    parser.add_argument('--rx-arrivals', dest='rx_arrivals', type=str, default=None)
    parser.add_argument('--p', type=float, default=None, help='Transmitter Bernoulli arrival probability')
    parser.add_argument('--q', type=float, default=None, help='Receiver Bernoulli arrival probability')
    parser.add_argument('--b-max', dest='b_max', type=float, default=None)
    parser.add_argument('--rx-b-max', dest='rx_b_max', type=float, default=None)
    parser.add_argument('--c', type=float, default=None, help='Capacity bracket constant c >= 0')
    parser.add_argument('--warmup', type=int, default=None, help='Slots discarded per replication')
    parser.add_argument('--rate-prefactor', dest='rate_prefactor', choices=['auto', 'half', 'one'], default=None)
    parser.add_argument('--ctp-relatch', dest='ctp_relatch', action='store_true',
                        help='Close the CTP gate after every transmission')
    parser.add_argument('--rx-on-cost', dest='rx_on_cost', type=float, default=None)
    parser.add_argument('--rx-gamma', dest='rx_gamma', type=float, default=None)
    parser.add_argument('--trace', type=str, default=None, help='Per-slot trace CSV of the first replication')
    parser.add_argument('--grid-kind', dest='grid_kind', type=str, default=None)
    parser.add_argument('--grid-p', dest='grid_p', type=str, default=None)
    parser.add_argument('--grid-q', dest='grid_q', type=str, default=None)
    parser.add_argument('--grid-b-max', dest='grid_b_max', type=str, default=None)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog='ehsim', description='Energy harvesting fading channel bounds and simulator')
    subparsers = parser.add_subparsers(dest='command', required=True)
    for name, handler in COMMANDS.items():
        _add_common_flags(subparsers.add_parser(name, help=handler.__doc__.splitlines()[0]))
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    manifest = RunManifest(command=args.command, config={})
    try:
        settings = resolve_settings(args.config, vars(args))
        if args.command in ('bounds', 'solve-k'):
            manifest.config = dict(settings)
        code = COMMANDS[args.command](args, settings, manifest)
    except (UnsupportedRegimeError, DegenerateMedianError) as e:
        logger.error(f"Unsupported regime: {str(e)}")
        return EXIT_UNSUPPORTED
    except (ConfigError, ValueError) as e:
        logger.error(f"Configuration error: {str(e)}")
        return EXIT_CONFIG_ERROR
    except EhSimError as e:
        logger.error(f"{args.command} failed: {str(e)}")
        return EXIT_VERIFY_FAILED
    manifest.finish(os.path.join(args.out, 'manifest.json'))
    logger.info(f"{args.command} finished, outputs: {manifest.outputs}")
    return code


if __name__ == '__main__':
    sys.exit(main())
