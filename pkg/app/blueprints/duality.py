"""
Duality commands: each runs one verify_* operation and records its report
"""

import logging

from app.blueprints import Blueprint, Outcome, RunContext, record_duality
from app.core.duality import falsify_naive, verify_bosonic_same_half, verify_fermionic, verify_fyodorov
from app.core.schafer_wegner import QDomain, saddle_lambda, shift_invariance, verify_schafer_wegner
from app.core.susy import verify_susy_g2
from app.extensions import number

logger = logging.getLogger(__name__)

duality_bp = Blueprint('duality')


def _domain(ctx: RunContext) -> QDomain:
    section = ctx.section('duality')
    lam = section['lambda']
    lam = number(lam) if lam is not None else saddle_lambda(ctx.spec.w, ctx.spec.orbitals)
    return QDomain(lam=lam, rho_nodes=int(section['r_nodes']), theta_nodes=int(section['chi_nodes']),
                   tail_log=number(section['tail_log']))


def _antithetic(ctx: RunContext) -> bool:
    return bool(ctx.section('duality')['antithetic'])


@duality_bp.command('verify-fermionic', help="<prod Det(z - H)> against the fermionic Q-integral")
def verify_fermionic_command(ctx: RunContext) -> Outcome:
    report = verify_fermionic(ctx.spec, ctx.signature(), ctx.num_samples, ctx.seed, ctx.workers,
                              _antithetic(ctx), block_size=ctx.block_size)
    return record_duality(ctx, report)


@duality_bp.command('verify-bosonic', help="Same-half bosonic formula, all Im z of one sign")
def verify_bosonic_command(ctx: RunContext) -> Outcome:
    report = verify_bosonic_same_half(ctx.spec, ctx.signature(), ctx.num_samples, ctx.seed, ctx.workers,
                                      _antithetic(ctx), block_size=ctx.block_size)
    return record_duality(ctx, report)


@duality_bp.command('falsify-naive', help="Same-half formula applied to mixed signs (expected to fail)",
                    inverted=True)
def falsify_naive_command(ctx: RunContext) -> Outcome:
    report = falsify_naive(ctx.spec, ctx.signature(), ctx.num_samples, ctx.seed, ctx.workers,
                           block_size=ctx.block_size)
    return record_duality(ctx, report)


@duality_bp.command('verify-fyodorov', help="Positive-matrix representation for mixed signatures")
def verify_fyodorov_command(ctx: RunContext) -> Outcome:
    report = verify_fyodorov(ctx.spec, ctx.signature(), ctx.num_samples, ctx.seed, ctx.workers,
                             block_size=ctx.block_size)
    return record_duality(ctx, report)


@duality_bp.command('verify-sw', help="Schafer-Wegner domain integral, p = q = 1")
def verify_sw_command(ctx: RunContext) -> Outcome:
    section = ctx.section('duality')
    report = verify_schafer_wegner(ctx.spec, ctx.signature(), ctx.num_samples, ctx.seed, _domain(ctx),
                                   ctx.workers, tolerance=number(section['tolerance']),
                                   proposal_scale=number(section['proposal_scale']),
                                   subset=int(section['subset']), lambda_check=number(section['lambda_check']),
                                   block_size=ctx.block_size)
    return record_duality(ctx, report)


@duality_bp.command('shift-invariance', help="Domain integral along the shifted family X(t)")
def shift_invariance_command(ctx: RunContext) -> Outcome:
    section = ctx.section('shift')
    grid = [number(t) for t in section['t_grid']]
    report = shift_invariance(ctx.spec, ctx.signature(), grid, ctx.seed, _domain(ctx),
                              tolerance=number(section['tolerance']))
    rows = [(p['t'], p['integral'][0], p['integral'][1], p['se'], p['delta'], p['usable'])
            for p in report.extra['scan']]
    ctx.run.write_csv('shift.csv', ('t', 'integral_re', 'integral_im', 'se', 'delta', 'usable'), rows)
    return record_duality(ctx, report)


@duality_bp.command('verify-susy-g2', help="Supersymmetric generating function, one site and one orbital")
def verify_susy_command(ctx: RunContext) -> Outcome:
    section = ctx.section('duality')
    report = verify_susy_g2(ctx.spec, ctx.signature(), ctx.num_samples, ctx.seed, _domain(ctx), ctx.workers,
                            proposal_scale=number(section['proposal_scale']), subset=int(section['subset']),
                            tolerance=number(section['tolerance']), block_size=ctx.block_size)
    return record_duality(ctx, report)
