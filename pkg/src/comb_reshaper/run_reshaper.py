#!/usr/bin/env python3
"""Command-line entry point for the reshaping toolkit.

Subcommands:
 - run <config>        optimize and scan every scenario, write artifacts
 - validate <config>   report config diagnostics without running anything
 - oracle-check        CW split-step engine vs the analytic efficiency
 - fit-comb <shape>    project a signal shape onto the comb lines

Exit codes: 0 success, 1 config error, 2 runtime failure, 3 oracle failure.
"""
import argparse
import sys
from pathlib import Path

# Logger is set up after parsing CLI args in main()
logger = None

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_RUNTIME = 2
EXIT_ORACLE = 3


def build_parser():
    p = argparse.ArgumentParser(
        prog='comb_reshaper',
        description='Design comb-shaped pump pulses that reshape a signal temporal mode by over-conversion',
    )
    p.add_argument('--log-level', choices=['DEBUG', 'INFO', 'WARNING', 'ERROR', 'CRITICAL'], help='Set logging level')
    p.add_argument('--log-file', help='Path to log file (default: stdout only)')
    sub = p.add_subparsers(dest='command', required=True)

    run = sub.add_parser('run', help='Run all scenarios of an experiment config')
    run.add_argument('config', help='Path to the JSON experiment config')
    run.add_argument('--out', help='Output directory (overrides output_dir)')
    run.add_argument('--seed', type=int, help='Optimizer seed (overrides optimizer.seed)')
    run.add_argument('--threads', type=int, default=1, help='Worker threads for the pump-scale x delay scan')

    validate = sub.add_parser('validate', help='Check an experiment config without running it')
    validate.add_argument('config', help='Path to the JSON experiment config')

    oracle = sub.add_parser('oracle-check', help='Compare CW propagation with the analytic efficiency')
    oracle.add_argument('--points', type=int, default=50, help='Number of theta points in [0, theta-max]')
    oracle.add_argument('--theta-max', type=float, help='Largest coupling angle in rad (default 3*pi/2)')
    oracle.add_argument('--z-steps', type=int, help='Override the split-step count')
    oracle.add_argument('--phase-mismatch', type=float, default=0.0, help='Phase mismatch in rad per unit length')
    oracle.add_argument('--out', help='Write the oracle table to this CSV file')

    fit = sub.add_parser('fit-comb', help='Fit the comb lines to a signal shape')
    fit.add_argument('shape', choices=['S1', 'S2', 'Se'], help='Signal shape tag')
    fit.add_argument('--out', default='.', help='Directory for <shape>_comb.json and <shape>_fitted.csv')
    fit.add_argument('--lines', type=int, help='Number of comb lines (default 17)')
    fit.add_argument('--spacing-ghz', type=float, help='Comb line spacing in GHz (default 20)')
    fit.add_argument('--samples', type=int, help='Grid samples per comb period (default 1024)')
    return p


def check_dependencies():
    missing = []
    try:
        import numpy  # noqa: F401
    except Exception:
        missing.append('numpy')
    try:
        import scipy  # noqa: F401
    except Exception:
        missing.append('scipy')

    if missing:
        if logger:
            logger.error('Missing required Python packages: %s', ', '.join(missing))
        print('\nMissing required Python packages:')
        for pkg in missing:
            print(' -', pkg)
        print('\nInstall dependencies with:')
        print('  pip install -r requirements.txt')
        sys.exit(EXIT_RUNTIME)


def cmd_run(args):
    from comb_reshaper.config import load_config
    from comb_reshaper.errors import ConfigurationError
    from comb_reshaper.experiment import run_experiment

    try:
        config = load_config(args.config)
    except OSError as exc:
        raise ConfigurationError(f"cannot read {args.config}: {exc.strerror or exc}") from exc
    config = config.with_overrides(seed=args.seed, output_dir=args.out)
    if args.threads < 1:
        logger.error('--threads must be >= 1')
        return EXIT_CONFIG
    result = run_experiment(config, threads=args.threads)
    logger.info('Wrote %d scenario(s) to %s', result.summary['scenario_count'], result.output_dir)
    return EXIT_OK


def cmd_validate(args):
    from comb_reshaper.config import validate_config
    from comb_reshaper.errors import ConfigurationError

    try:
        diagnostics = validate_config(args.config)
    except OSError as exc:
        raise ConfigurationError(f"cannot read {args.config}: {exc.strerror or exc}") from exc
    for diagnostic in diagnostics:
        print(diagnostic)
    if diagnostics:
        return EXIT_CONFIG
    logger.info('%s is valid', args.config)
    return EXIT_OK


def cmd_oracle(args):
    from comb_reshaper import artifacts
    from comb_reshaper.experiment import ORACLE_THETA_MAX, oracle_check, oracle_rows

    theta_max = args.theta_max if args.theta_max is not None else ORACLE_THETA_MAX
    report = oracle_check(points=args.points, theta_max=theta_max, z_steps=args.z_steps,
                          phase_mismatch=args.phase_mismatch)
    if args.out:
        columns, rows = oracle_rows(report)
        artifacts.write_table(args.out, columns, rows)
    print(f"max relative deviation {report.max_deviation:.3e} (threshold {report.threshold:.0e}): "
          f"{'PASS' if report.passed else 'FAIL'}")
    return EXIT_OK if report.passed else EXIT_ORACLE


def cmd_fit_comb(args):
    from comb_reshaper import artifacts
    from comb_reshaper.metrics import mode_matching
    from comb_reshaper.waveform import (
        DEFAULT_COMB_LINES,
        DEFAULT_LINE_SPACING_GHZ,
        DEFAULT_SAMPLES,
        FrequencyComb,
        SignalShape,
        TimeGrid,
        fit_comb,
        make_signal,
        synthesize,
    )

    spacing = args.spacing_ghz or DEFAULT_LINE_SPACING_GHZ
    grid = TimeGrid.for_comb(spacing, args.samples or DEFAULT_SAMPLES)
    signal = make_signal(SignalShape(args.shape), grid)
    template = FrequencyComb.flat(args.lines or DEFAULT_COMB_LINES, signal.carrier_nm, spacing)
    comb = fit_comb(signal, template)
    fitted = synthesize(comb, grid)
    eta = mode_matching(signal, fitted)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    artifacts.write_comb(out / f'{args.shape}_comb.json', comb)
    artifacts.write_envelope(out / f'{args.shape}_fitted.csv', fitted)
    logger.info('%s projected onto %d lines: eta_mm = %.6f', args.shape, comb.count, eta)
    return EXIT_OK


COMMANDS = {
    'run': cmd_run,
    'validate': cmd_validate,
    'oracle-check': cmd_oracle,
    'fit-comb': cmd_fit_comb,
}


def main(argv=None):
    argv = argv if argv is not None else sys.argv[1:]
    parser = build_parser()
    args = parser.parse_args(argv)

    # Setup logging with CLI args
    from comb_reshaper import logging_config
    log_level = logging_config.level_from_name(args.log_level)
    global logger
    logger = logging_config.setup_logging(logging_config.PACKAGE_LOGGER, level=log_level, log_file=args.log_file)

    # Quick dependency check before importing numerical modules
    check_dependencies()

    from comb_reshaper.errors import ConfigurationError, ReshaperError

    try:
        code = COMMANDS[args.command](args)
    except ConfigurationError as exc:
        where = f' [{exc.field}]' if exc.field else ''
        logger.error('Configuration error%s: %s', where, exc)
        code = EXIT_CONFIG
    except OSError as exc:
        logger.error('Cannot access %s: %s', exc.filename or 'file', exc.strerror or exc)
        code = EXIT_RUNTIME
    except ReshaperError as exc:
        logger.error('Run failed: %s', exc)
        code = EXIT_RUNTIME
    sys.exit(code)


if __name__ == '__main__':
    main()
