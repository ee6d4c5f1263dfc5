"""Main execution script for Markov-functional pricing, calibration and hedging runs."""

import argparse
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np
import pandas as pd
import yaml
from dateutil.parser import isoparse

from experiments.calibration_cases import get_scenario_config as get_calibration_config
from experiments.future_smile import get_scenario_config as get_future_smile_config
from experiments.hedge_scenario import get_scenario_config as get_hedge_config
from experiments.pricing_cases import get_scenario_config as get_pricing_config
from hedging.backtest import BacktestOptions, HedgeTrade, run_strategies
from hedging.scenario import generate_synthetic_scenario, load_scenario, save_scenario
from mf.analytic import UVDDParams
from mf.calibration import (
    adjust_sigma_to_atm,
    case_model,
    compare_cases,
    estimate_mean_reversion,
    quotes_from_cube,
    simulate_rate_histories,
    synthetic_quotes,
)
from mf.errors import MappingError, MarketDataError, NoSolutionError
from mf.mapping import MfLattice, european_spec
from mf.market_data import (
    CoterminalStrip,
    build_schedule,
    load_atm_surface,
    load_curve,
    load_ratio_cube,
)
from mf.pricing import (
    BermudanTrade,
    average_future_atm_vol,
    bermudan_strike_sweep,
    bermudan_value,
    convergence_table,
    european_table,
    future_smile,
    smile_dynamics_scenario,
)
from mf.toy_tree import FIXTURE_TREES, toy_bermudan

logger = logging.getLogger(__name__)

COMMANDS = ('price', 'calibrate', 'future-smile', 'smile-dynamics', 'hedge', 'fixtures')
EXPERIMENTS = {
    'price': get_pricing_config,
    'calibrate': get_calibration_config,
    'future-smile': get_future_smile_config,
    'smile-dynamics': get_future_smile_config,
    'hedge': get_hedge_config,
    'fixtures': lambda: {'name': 'fixtures', 'strikes': [0.055, 0.045, 0.065]},
}


def parse_args(argv=None):
    parser = argparse.ArgumentParser(
        description='Price, calibrate and hedge Bermudan swaptions with a Markov-functional model'
    )
    parser.add_argument('command', choices=COMMANDS, help='Experiment to run')
    parser.add_argument('--trades', default='data/trades.yaml', help='Trade and data set file')
    parser.add_argument('--trade', help='Trade name in the trades file')
    parser.add_argument('--curve', help='Discount curve CSV (overrides the data set)')
    parser.add_argument('--atm-surface', help='ATM vol surface CSV (overrides the data set)')
    parser.add_argument('--ratio-cube', help='Smile ratio cube CSV for calibration quotes')
    parser.add_argument('--scenario-file', help='Scenario CSV for hedge runs')
    parser.add_argument('--case', type=int, nargs='+', help='Model or calibration cases')
    parser.add_argument('--mr', type=float, nargs='+', help='Mean-reversion levels')
    parser.add_argument('--steps', type=int, help='Grid steps per driver standard deviation')
    parser.add_argument('--devs', type=int, help='Grid half-width in standard deviations')
    parser.add_argument('--order', type=int, help='Maximum interpolating polynomial order')
    parser.add_argument('--seed', type=int, help='Random seed for synthetic data')
    parser.add_argument('--strategy', nargs='+', choices=['unhedged', 'delta', 'delta_vega'],
                        help='Hedge strategies')
    parser.add_argument('--parallel-bp', type=float,
                        help='Also run smile dynamics under a parallel curve shift in bp')
    parser.add_argument('--convergence', action='store_true',
                        help='Also write the grid convergence table')
    parser.add_argument('--config', help='YAML file overriding the experiment configuration')
    parser.add_argument('--out', '--output-dir', dest='output_dir', default='outputs',
                        help='Output directory for results')
    parser.add_argument('--log-level', default=os.environ.get('MFSMILE_LOG_LEVEL', 'INFO'),
                        help='Logging level (default from MFSMILE_LOG_LEVEL)')
    return parser.parse_args(argv)


def load_config(args):
    """Experiment dict, then --config keys, then explicit flags."""
    config = EXPERIMENTS[args.command]()
    if args.config:
        with open(args.config) as f:
            config.update(yaml.safe_load(f) or {})
    if args.trade:
        config['trade'] = args.trade
    if args.seed is not None:
        config['seed'] = args.seed
    if args.mr:
        config['mean_reversions'] = list(args.mr)
        config['mean_reversion'] = args.mr[0]
    return config


def load_trade(args, config):
    with open(args.trades) as f:
        book = yaml.safe_load(f)
    name = config.get('trade')
    if name not in book['trades']:
        raise MarketDataError(f"Unknown trade '{name}' in {args.trades}")
    trade = dict(book['trades'][name])
    grid = dict(trade.get('grid', {}))
    for key, flag in (('steps_per_dev', args.steps), ('deviations', args.devs),
                      ('order', args.order)):
        if flag is not None:
            grid[key] = flag
    if any(v < 1 for v in grid.values()):
        raise ValueError("Grid parameters must be positive")
    trade['grid'] = grid
    if not trade.get('exercise'):
        raise ValueError(f"Trade '{name}' has an empty exercise set")
    trade['phi'] = 1 if trade.get('payer', True) else -1
    dataset = book.get('datasets', {}).get(trade.get('dataset'))
    return trade, dataset


def load_market(args, trade, dataset):
    """Curve, surface and co-terminal strip of a trade's data set."""
    if dataset is None:
        raise MarketDataError("Trade has no market data set")
    valuation = isoparse(trade.get('valuation_date', dataset['valuation_date'])).date()
    curve_path = args.curve or dataset['curve']
    surface_path = args.atm_surface or dataset['atm_surface']
    for path in (curve_path, surface_path):
        if not os.path.exists(path):
            raise FileNotFoundError(f"Market data file not found: {path}")
    curve = load_curve(curve_path, valuation, dataset.get('interpolation', 'discount_factor'))
    surface = load_atm_surface(surface_path, dataset.get('surface_extrapolation', 'error'))
    tenor = build_schedule(valuation, isoparse(trade['start_date']).date(), trade['periods'],
                           trade['frequency_months'], trade.get('date_roll', 'modified_following'))
    return curve, surface, CoterminalStrip.from_market(curve, tenor, surface)


def cmd_price(args, config, output_dir):
    trade, dataset = load_trade(args, config)
    _, _, strip = load_market(args, trade, dataset)
    grid = trade['grid']
    cases = args.case or list(config['cases'])
    mean_reversions = config['mean_reversions']
    template = BermudanTrade(trade['strike'], tuple(trade['exercise']), trade['phi'],
                             trade['notional'])

    models, summary = {}, {}
    for case in cases:
        models[case] = case_model(config['cases'][case], strip)
        lattice = MfLattice(strip, models[case], mean_reversions[0], **grid)
        table = european_table(lattice, config['european_strike'], trade['phi'], trade['notional'])
        table.to_csv(output_dir / f"european_case{case}.csv", index=False, float_format='%.6f')
        report = lattice.validity_report()
        summary[f"case{case}"] = {
            'max_abs_diff': float(table['diff'].abs().max()),
            'clamp_count': lattice.clamp_count,
            'min_log_linearity_r2': min(row['log_linearity_r2'] for row in report['dates']),
        }
        print(f"Case {case}: European max |MF - analytic| = "
              f"{summary[f'case{case}']['max_abs_diff']:.2f}")

    rows = []
    for case in [c for c in config['bermudan_cases'] if c in models]:
        lattice = MfLattice(strip, models[case], mean_reversions[0], **grid)
        for strike in config['bermudan_strikes']:
            rows.append({'case': case, 'strike': strike,
                         'bermudan': bermudan_value(lattice, template.with_strike(strike))})
    if rows:
        table = pd.DataFrame(rows).pivot(index='case', columns='strike', values='bermudan')
        table.to_csv(output_dir / 'bermudan_table.csv', float_format='%.6f')

    sweep_models = {f"case{c}": models[c] for c in config['sweep_cases'] if c in models}
    if sweep_models:
        sweep = bermudan_strike_sweep(strip, sweep_models, template, config['sweep_strikes'],
                                      mean_reversions, grid)
        sweep.to_csv(output_dir / 'bermudan_strike_sweep.csv', index=False, float_format='%.6f')

    if args.convergence:
        conv = config['convergence']
        model = models.get(conv['case']) or case_model(config['cases'][conv['case']], strip)
        table = convergence_table(strip, model, config['european_strike'], conv['steps_range'],
                                  conv['deviations_range'], mean_reversions[0], grid['order'],
                                  [conv['expiry']])
        table.to_csv(output_dir / 'convergence.csv', float_format='%.3e')
    return summary


def _calibration_problems(args, config, strip, surface):
    offsets = config['offsets_bp']
    if args.ratio_cube:
        cube = load_ratio_cube(args.ratio_cube, 'flat')
        return [quotes_from_cube(strip, n, surface, cube, offsets)
                for n in range(1, strip.tenor.n_periods + 1)]
    smile = config['synthetic_smile']
    problems = []
    for n in range(1, strip.tenor.n_periods + 1):
        vol = float(strip.atm_vols[n - 1])
        spec = european_spec(strip, n, float(strip.forwards[n - 1]))
        params = adjust_sigma_to_atm(
            spec, vol, UVDDParams.from_omega(vol, smile['omega'], smile['m'], smile['lam']))
        problems.append(synthetic_quotes(spec.forward, spec.expiry, spec.annuity, params, offsets))
    return problems


def cmd_calibrate(args, config, output_dir):
    trade, dataset = load_trade(args, config)
    _, surface, strip = load_market(args, trade, dataset)
    problems = _calibration_problems(args, config, strip, surface)
    cases = args.case or config['cases']
    errors, report = compare_cases(problems, cases, lam=config['lam'], m_bound=config['m_bound'])
    errors.to_csv(output_dir / 'calibration_errors.csv', float_format='%.8f')
    report.to_csv(output_dir / 'calibration_report.csv', index=False, float_format='%.8f')

    mr = config['mean_reversion']
    histories = simulate_rate_histories(mr['true_value'], mr['times'], mr['days'],
                                        seed=config.get('seed', 0))
    estimate = estimate_mean_reversion(histories, mr['times'])
    for name, value in errors.mean().items():
        print(f"  {name}: average relative price error {value:.4%}")
    return {
        'average_errors': {k: float(v) for k, v in errors.mean().items()},
        'mean_reversion_true': mr['true_value'],
        'mean_reversion_estimate': estimate.mean_reversion,
        'estimator_caveats': list(estimate.caveats),
    }


def cmd_future_smile(args, config, output_dir):
    trade, dataset = load_trade(args, config)
    _, _, strip = load_market(args, trade, dataset)
    case = (args.case or [config['case']])[0]
    model = case_model(get_pricing_config()['cases'][case], strip)
    f, x_f = config['standing_date'], config['state']
    offsets = np.asarray(config['offsets_bp'], dtype=float) * 1e-4

    summary = {}
    for a in config['mean_reversions']:
        lattice = MfLattice(strip, model, a, **trade['grid'])
        frames = []
        for n in config['expiries']:
            at_forward = future_smile(lattice, n, f, x_f, [], trade['phi'])
            smile = future_smile(lattice, n, f, x_f, at_forward.forward + offsets, trade['phi'])
            frame = smile.to_frame()
            frame.insert(0, 'expiry', n)
            frame['offset_bp'] = config['offsets_bp']
            frame['forward'] = smile.forward
            frames.append(frame)
            summary.setdefault(f"mr{a:g}", {})[f"T{n}"] = average_future_atm_vol(
                lattice, n, f, config['band'])
        pd.concat(frames).to_csv(output_dir / f"future_smile_mr{a:g}.csv", index=False,
                                 float_format='%.8f')
        print(f"MR {a:g}: average future ATM vols {summary[f'mr{a:g}']}")
    return summary


def cmd_smile_dynamics(args, config, output_dir):
    trade, dataset = load_trade(args, config)
    curve, surface, strip = load_market(args, trade, dataset)
    dyn = config['dynamics']
    case = (args.case or [dyn['case']])[0]
    n = dyn['expiry']
    params = case_model(get_pricing_config()['cases'][case], strip).params[n - 1]
    strikes = float(strip.forwards[n - 1]) + np.asarray(dyn['offsets_bp'], dtype=float) * 1e-4

    moves = [('up', strip.bump_discount(n, dyn['df_bump'])),
             ('down', strip.bump_discount(n, -dyn['df_bump']))]
    if args.parallel_bp:
        # continuous zero-rate shift of the whole curve
        for label, sign in (('parallel_up', 1.0), ('parallel_down', -1.0)):
            moved = curve.bumped(sign * args.parallel_bp)
            moves.append((label, CoterminalStrip.from_market(moved, strip.tenor, surface)))

    frames, summary = [], {}
    for label, bumped in moves:
        frame = smile_dynamics_scenario(strip, bumped, params, n, strikes, trade['phi'])
        summary[label] = {'base_forward': frame.attrs['base_forward'],
                          'bumped_forward': frame.attrs['bumped_forward']}
        frame.insert(0, 'bump', label)
        frames.append(frame)
        print(f"{label}: S_{n} forward {frame.attrs['base_forward']:.4%} -> "
              f"{frame.attrs['bumped_forward']:.4%}")
    pd.concat(frames).to_csv(output_dir / 'smile_dynamics.csv', index=False, float_format='%.8f')
    return summary


def cmd_hedge(args, config, output_dir):
    trade, _ = load_trade(args, config)
    if args.scenario_file:
        scenario = load_scenario(args.scenario_file)
    else:
        scenario = generate_synthetic_scenario(config, trade['periods'])
        save_scenario(scenario, output_dir / 'scenario.csv')
    tenor = build_schedule(scenario[0].date, isoparse(trade['start_date']).date(),
                           trade['periods'], trade['frequency_months'],
                           trade.get('date_roll', 'modified_following'))
    hedge_trade = HedgeTrade(tuple(tenor.dates), trade['frequency_months'],
                             config.get('strike', trade.get('strike')),
                             tuple(trade['exercise']), trade['phi'], trade['notional'])
    grid = trade['grid']
    options = BacktestOptions(
        mode=config['mode'], liquidation=config['liquidation'], vega_roll=config['vega_roll'],
        mean_reversion=config['mean_reversion'], steps_per_dev=grid['steps_per_dev'],
        deviations=grid['deviations'], order=grid['order'],
        calibration=config.get('calibration'),
    )
    strategies = args.strategy or config['strategies']
    frame, stats = run_strategies(scenario, hedge_trade, strategies, options)
    frame.to_csv(output_dir / 'hedge_results.csv', index=False, float_format='%.8f')
    with open(output_dir / 'hedge_stats.json', 'w') as f:
        json.dump(stats, f, indent=2)
    for strategy, values in stats.items():
        print(f"  {strategy}: daily P&L stdev {values['pnl_std']:.4f}, drift {values['drift']:.4f}")
    return stats


def cmd_fixtures(args, config, output_dir):
    results = {}
    for name, make_tree in FIXTURE_TREES.items():
        tree = make_tree()
        results[name] = {f"{k:.4f}": toy_bermudan(tree, k)[0] for k in config['strikes']}
        print(f"Tree {name}: " + ", ".join(f"K={k} -> {v:.2f}" for k, v in results[name].items()))
    with open(output_dir / 'fixtures.json', 'w') as f:
        json.dump(results, f, indent=2)
    return results


HANDLERS = {
    'price': cmd_price,
    'calibrate': cmd_calibrate,
    'future-smile': cmd_future_smile,
    'smile-dynamics': cmd_smile_dynamics,
    'hedge': cmd_hedge,
    'fixtures': cmd_fixtures,
}


def main(argv=None):
    """Main entry point."""
    args = parse_args(argv)
    logging.basicConfig(level=args.log_level.upper(),
                        format='%(asctime)s - %(levelname)s - %(message)s')

    output_dir = Path(args.output_dir)
    output_dir.mkdir(parents=True, exist_ok=True)

    print(f"Running command: {args.command}")
    try:
        config = load_config(args)
        summary = HANDLERS[args.command](args, config, output_dir)
    except (NoSolutionError, MappingError) as exc:
        diagnostics = {'command': args.command, 'error': type(exc).__name__,
                       'message': str(exc), 'diagnostics': getattr(exc, 'diagnostics', {})}
        with open(output_dir / 'diagnostics.json', 'w') as f:
            json.dump(diagnostics, f, indent=2, default=str)
        print(f"Error: numerical failure ({exc}); diagnostics in {output_dir / 'diagnostics.json'}")
        return 2
    except (MarketDataError, FileNotFoundError, ValueError, KeyError) as exc:
        print(f"Error: {exc}")
        return 1

    # Print summary
    print("\n" + "="*50)
    print(f"{args.command.upper()} RESULTS")
    print("="*50)
    print(f"Outputs written to: {output_dir}")
    print("="*50)

    output_file = output_dir / f"results_{args.command.replace('-', '_')}.json"
    results = {
        'command': args.command,
        'config': config,
        'summary': summary,
    }
    with open(output_file, 'w') as f:
        json.dump(results, f, indent=2, default=str)

    print(f"\nResults saved to: {output_file}")
    return 0


if __name__ == '__main__':
    sys.exit(main())
