"""
Main executable script
"""
import argparse
import logging
import sys
from pathlib import Path

from . import lab
from . import reporting


def arg_parser():
    def add_run_args(subparser):
        subparser.add_argument(
            '--out',
            type=str,
            help='output directory (overrides the configuration)',
        )
        subparser.add_argument(
            '--seed',
            type=int,
            help='random seed (overrides the configuration)',
        )
        subparser.add_argument(
            '--threads',
            type=int,
            help='worker cap (default: $FRACPERIM_THREADS or physical cores)',
        )

    parser = argparse.ArgumentParser(
        description='Fractional multiphase perimeter experiments.'
    )
    parser.add_argument(
        '-c',
        '--config',
        nargs='?',
        type=Path,
        help='Use configuration file',
    )
    parser.add_argument(
        '-v',
        '--verbose',
        action='store_true',
        help='log progress to stderr',
    )
    sp = parser.add_subparsers(dest='cmd')

    helps = {
        'relax': 'relax a surface tension matrix and decompose it',
        'energy': 'evaluate the fractional energy of a partition',
        'gamma-scan': 'scan (1-2s) scaled energies over s and resolution',
        'mincut-replace': 'replace a partition by its min-cut two-chamber competitor',
        'minimize': 'local search for a low energy partition',
        'wetting': 'watch a third chamber wet a triangle-violating interface',
        'gamma-bar': 'estimate the relaxed interface coefficient by restarts',
    }
    for kind in lab.KINDS:
        p = sp.add_parser(kind, help=helps[kind])
        p.set_defaults(func=main_run, kind=kind)
        add_run_args(p)

    p_verify = sp.add_parser('verify', help='re-run a recorded experiment and compare')
    p_verify.set_defaults(func=main_verify)
    p_verify.add_argument('manifest', type=Path, help='manifest.yaml of the run')
    p_verify.add_argument(
        '--against',
        type=Path,
        help='configuration to run instead of the recorded one',
    )
    p_verify.add_argument('--threads', type=int, help='worker cap for the re-run')

    return parser


def main(argv=None):
    if argv is None:
        argv = sys.argv[1:]

    parser = arg_parser()
    args = parser.parse_args(argv)
    if args.verbose:
        logging.basicConfig(level=logging.INFO,
                format='%(asctime)s %(name)s %(levelname)s %(message)s')

    try:
        main_func = args.func
    except AttributeError:
        parser.print_help(file=sys.stderr)
        return 1

    try:
        return main_func(args)
    except lab.ConfigError as err:
        print('Configuration error:', file=sys.stderr)
        for problem in err.problems:
            print('  %s' % problem, file=sys.stderr)
        return 2
    except ValueError as err:
        print('Error: %s' % err, file=sys.stderr)
        return 1


def load_config(args):
    cfg_path = args.config or lab.default_config_path()
    try:
        return lab.Configuration.from_file(cfg_path)
    except OSError as err:
        raise lab.ConfigError('error opening configuration file: %s' % err)


def main_run(args):
    cfg = load_config(args)
    config = lab.ExperimentConfig.from_configuration(
        cfg, kind=args.kind, output=args.out, seed=args.seed, threads=args.threads
    )
    print('...running %s into %s' % (config.kind, config.output))
    result = lab.run(config)
    print(result.summary)
    print(reporting.outputs_report([result.output / name for name in result.outputs]
            + [result.manifest]))
    return 0


def main_verify(args):
    if not args.manifest.exists():
        raise lab.ConfigError('manifest %s does not exist' % args.manifest)
    print('...re-running %s' % args.manifest)
    report = lab.verify(args.manifest, against=args.against, threads=args.threads)
    print(reporting.verify_report(report))
    return 0 if report.ok else 1


if __name__ == '__main__':
    sys.exit(main())
