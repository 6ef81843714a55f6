"""
Command groups. Each module exports a `<name>_bp` Blueprint whose commands
become subcommands of main.py.
"""

import logging
from dataclasses import dataclass, field
from functools import cached_property
from typing import Any, Callable, Dict, List

from app.core.duality import DualityReport, SignatureSpec
from app.core.ensemble import EnsembleSpec, ensemble_from_config
from app.extensions import complex_value, number
from app.utils.job_manager import RunManager
from app.utils.parallel import DEFAULT_BLOCK_SIZE
from app.utils.stats import CONSISTENT, INCONCLUSIVE, INCONSISTENT

logger = logging.getLogger(__name__)

OK = 'ok'
EXIT_CODES = {OK: 0, CONSISTENT: 0, INCONSISTENT: 2, INCONCLUSIVE: 3}
INVERTED_EXIT_CODES = {INCONSISTENT: 0, CONSISTENT: 2, INCONCLUSIVE: 3}
DUALITY_COLUMNS = ('op', 'n', 'p', 'N', 'L', 'lhs_re', 'lhs_im', 'rhs_re', 'rhs_im', 'z', 'verdict', 'seed')


@dataclass
class Outcome:
    status: str
    report: Dict[str, Any] = field(default_factory=dict)
    checks: List[Dict[str, Any]] = field(default_factory=list)


@dataclass
class Command:
    name: str
    handler: Callable[['RunContext'], Outcome]
    help: str
    inverted: bool = False

    def exit_code(self, status: str) -> int:
        table = INVERTED_EXIT_CODES if self.inverted else EXIT_CODES
        return table.get(status, 1)


class Blueprint:
    """Named group of subcommands"""

    def __init__(self, name: str):
        self.name = name
        self.commands: Dict[str, Command] = {}

    def command(self, name: str, help: str = "", inverted: bool = False):
        def register(handler):
            self.commands[name] = Command(name, handler, help or (handler.__doc__ or "").strip(), inverted)
            return handler
        return register


@dataclass
class RunContext:
    """What a command handler sees: the resolved config and its run directory"""
    config: Dict[str, Any]
    run: RunManager

    @property
    def op(self) -> str:
        return self.config['op']

    @property
    def seed(self) -> int:
        return int(self.config['seed'])

    @property
    def workers(self) -> int:
        return int(self.config['workers'])

    @property
    def num_samples(self) -> int:
        return int(self.config['mc']['num_samples'])

    @property
    def block_size(self) -> int:
        return int(self.config['mc'].get('block_size') or DEFAULT_BLOCK_SIZE)

    def section(self, name: str) -> Dict[str, Any]:
        return self.config[name]

    @cached_property
    def spec(self) -> EnsembleSpec:
        return ensemble_from_config(self.config['ensemble'])

    def signature(self) -> SignatureSpec:
        return SignatureSpec(tuple(complex_value(v) for v in self.config['duality']['z']))

    def number(self, section: str, key: str) -> float:
        return number(self.config[section][key])

    def complex(self, section: str, key: str) -> complex:
        return complex_value(self.config[section][key])


def record_duality(ctx: RunContext, report: DualityReport) -> Outcome:
    """report.json plus one duality_summary.csv row"""
    config = report.config
    z = config.get('z') or []
    n = config.get('n', len(z))
    p = config.get('p', sum(1 for v in z if v[1] > 0))
    row = (report.operation, n, p, config.get('N', ctx.spec.orbitals), config.get('sites', ctx.spec.num_sites),
           report.lhs.value.real, report.lhs.value.imag, report.rhs.value.real, report.rhs.value.imag,
           report.z_score, report.verdict, ctx.seed)
    ctx.run.write_csv('duality_summary.csv', DUALITY_COLUMNS, [row])
    payload = report.to_dict()
    ctx.run.write_report(payload)
    ctx.run.append_log(f"{report.operation}: z={report.z_score:.3f} verdict={report.verdict}")
    return Outcome(report.verdict, payload, report.checks)
