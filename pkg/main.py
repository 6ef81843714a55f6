"""
SUSY Duality Lab - experiment runner
"""

import argparse
import logging
import sys
from typing import Dict, List, Optional, Sequence

from app.blueprints import Command, RunContext
from app.blueprints.duality import duality_bp
from app.blueprints.ensemble import ensemble_bp
from app.blueprints.greens import greens_bp
from app.blueprints.reports import build_report_pdf, summary_of
from app.blueprints.saddle import saddle_bp
from app.exceptions import ConfigError, LabError
from app.extensions import resolve_config
from app.utils.job_manager import RunManager

logger = logging.getLogger('app.main')

BLUEPRINTS = (ensemble_bp, greens_bp, duality_bp, saddle_bp)
ERROR_EXIT = 1


def registered_commands() -> Dict[str, Command]:
    commands: Dict[str, Command] = {}
    for blueprint in BLUEPRINTS:
        for name, command in blueprint.commands.items():
            if name in commands:
                raise RuntimeError(f"subcommand '{name}' registered twice")
            commands[name] = command
    return commands


def build_parser(commands: Dict[str, Command]) -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog='main.py', description="Duality verification and random-matrix estimators")
    subparsers = parser.add_subparsers(dest='op', required=True, metavar='OP')
    for name, command in commands.items():
        sub = subparsers.add_parser(name, help=command.help, description=command.help)
        sub.add_argument('--config', required=True, help="experiment config (JSON)")
        sub.add_argument('--seed', type=int, default=None, help="64-bit master seed")
        sub.add_argument('--workers', type=int, default=None, help="worker processes (0 = all cores)")
        sub.add_argument('--out', default=None, help="output directory")
        sub.add_argument('--set', action='append', default=[], metavar='KEY=VALUE',
                         help="dotted override, repeatable")
    return parser


def run(op: str, config_path: str, overrides: Sequence[str] = (), seed: Optional[int] = None,
        workers: Optional[int] = None, out: Optional[str] = None) -> int:
    """Resolve the config, execute one op in its run directory and return the exit code"""
    command = registered_commands()[op]
    try:
        config = resolve_config(config_path, overrides, op=op, seed=seed, workers=workers, output_dir=out)
        if not isinstance(config['seed'], int) or not 0 <= config['seed'] < 2 ** 64:
            raise ConfigError("seed must be an unsigned 64-bit integer", key='seed')
        level = str(config['logs']['level']).upper()
        if not isinstance(logging.getLevelName(level), int):
            raise ConfigError(f"unknown log level '{level}'", key='logs.level')
        logging.getLogger('app').setLevel(level)
        run_manager = RunManager(config['output_dir'], op, config)
        run_manager.start_run()
    except LabError as e:
        logger.error("%s: %s", op, e)
        print(f"error: {e}", file=sys.stderr)
        return ERROR_EXIT

    try:
        outcome = command.handler(RunContext(config, run_manager))
        if config['report']['pdf']:
            pdf = build_report_pdf(op, run_manager.config_hash, outcome.status, summary_of(outcome.report),
                                   outcome.checks)
            run_manager.write_bytes('report.pdf', pdf)
    except LabError as e:
        run_manager.append_log(f"ERROR: {type(e).__name__}: {e}")
        run_manager.finish_run('error')
        print(f"error: {e}", file=sys.stderr)
        return ERROR_EXIT

    code = command.exit_code(outcome.status)
    run_manager.finish_run(outcome.status)
    logger.info("%s finished: %s (exit %d) in %s", op, outcome.status, code, run_manager.run_dir)
    return code


def main(argv: Optional[List[str]] = None) -> int:
    commands = registered_commands()
    args = build_parser(commands).parse_args(argv)
    print(f"""
    ╔═══════════════════════════════════════════════════════════╗
    ║       SUSY Duality Lab - {args.op:<33}║
    ╠═══════════════════════════════════════════════════════════╣
    ║  Config: {args.config[:49]:<49}║
    ╚═══════════════════════════════════════════════════════════╝
    """)
    return run(args.op, args.config, args.set, seed=args.seed, workers=args.workers, out=args.out)


if __name__ == '__main__':
    logging.basicConfig(level=logging.INFO, format='%(asctime)s %(levelname)s %(name)s: %(message)s')
    sys.exit(main())
