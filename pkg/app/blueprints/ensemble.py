"""
Ensemble commands: draw one Hamiltonian, validate a covariance
"""

import logging

import numpy as np

from app.blueprints import OK, Blueprint, Outcome, RunContext
from app.core.ensemble import sample, validate_covariance

logger = logging.getLogger(__name__)

ensemble_bp = Blueprint('ensemble')


@ensemble_bp.command('sample', help="Draw one Hamiltonian from the configured ensemble")
def sample_command(ctx: RunContext) -> Outcome:
    draw_index = int(ctx.section('sample')['draw_index'])
    drawn = sample(ctx.spec, ctx.seed, draw_index)
    H = drawn.matrix
    rows = [(a, b, H[a, b].real, H[a, b].imag) for a in range(H.shape[0]) for b in range(H.shape[1])]
    ctx.run.write_csv('hamiltonian.csv', ('row', 'col', 're', 'im'), rows)
    hermiticity = float(np.max(np.abs(H - np.conj(H.T))))
    report = {'spec_id': drawn.spec_id, 'seed': drawn.seed, 'draw_index': draw_index, 'dim': int(H.shape[0]),
              'hermiticity_error': hermiticity}
    ctx.run.write_report(report)
    return Outcome(OK, report)


@ensemble_bp.command('validate-cov', help="Run the covariance check list")
def validate_cov_command(ctx: RunContext) -> Outcome:
    report = validate_covariance(ctx.spec.covariance)
    checks = report.to_list()
    for entry in checks:
        ctx.run.append_log(f"{entry['check_name']}: {entry['result']} - {entry['message']}")
    payload = {'valid': report.valid, 'min_eigenvalue': report.min_eigenvalue, 'checks': checks,
               'J': ctx.spec.J, 'w': ctx.spec.w}
    ctx.run.write_report(payload)
    return Outcome(OK if report.valid else 'invalid', payload, checks)
