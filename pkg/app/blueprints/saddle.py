"""
Saddle-point commands: solution families, fiber dimension, GUE determinant moments
"""

import logging

from app.blueprints import OK, Blueprint, Outcome, RunContext
from app.core.saddle import (NULL_THRESHOLD, ManifoldPoint, SaddleConfig, constant_saddle, fiber_scan,
                             gue_det_moment, manifold_point, orbit_residual, saddle_scan)
from app.extensions import number
from app.utils.check_engine import CheckEngine
from app.utils.parallel import STREAM_CHECK, make_rng
from app.utils.stats import INCONSISTENT, verdict_for

logger = logging.getLogger(__name__)

saddle_bp = Blueprint('saddle')

FAMILY_TOL = 1e-12
ORBIT_TOL = 1e-10
ORBIT_TRIALS = 100


@saddle_bp.command('saddle', help="Constant saddle, residuals on both families and the orbit property")
def saddle_command(ctx: RunContext) -> Outcome:
    config = SaddleConfig(ctx.spec.w, ctx.spec.orbitals)
    lam, report = constant_saddle(config)
    rows = saddle_scan(int(ctx.section('saddle')['points']), ctx.seed, config)
    ctx.run.write_csv('saddle_report.csv', ('branch', 'theta', 'phi', 'residual'), rows)

    worst = max(row['residual'] for row in rows)
    report.expect('family_residual', worst < FAMILY_TOL, f"max family residual {worst:.1e}",
                  f"family residual {worst:.1e} above {FAMILY_TOL:g}", residual=worst)
    rng = make_rng(ctx.seed, STREAM_CHECK, 6)
    q_bb = manifold_point(ManifoldPoint('hyperbolic_BB', 0.7, 1.1))
    q_ff = manifold_point(ManifoldPoint('sphere_FF', 0.4, 2.0))
    orbit = max(orbit_residual(q_bb, q_ff, rng) for _ in range(ORBIT_TRIALS))
    report.expect('orbit', orbit < ORBIT_TOL, f"orbit residual {orbit:.1e}",
                  f"orbit residual {orbit:.1e} above {ORBIT_TOL:g}", residual=orbit)

    checks = report.to_list()
    payload = {'lambda': lam, 'row_sums': config.row_sums, 'max_residual': worst, 'orbit_residual': orbit,
               'checks': checks}
    ctx.run.write_report(payload)
    ctx.run.append_log(f"saddle: lambda={lam:.12g} max residual {worst:.2e} orbit {orbit:.2e}")
    return Outcome(OK if report.passed else INCONSISTENT, payload, checks)


@saddle_bp.command('fiber', help="Null-space dimension of the linearized equation at random saddle points")
def fiber_command(ctx: RunContext) -> Outcome:
    config = SaddleConfig(ctx.spec.w, ctx.spec.orbitals)
    rows = fiber_scan(int(ctx.section('fiber')['points']), ctx.seed, config)
    ctx.run.write_csv('fiber.csv', ('theta_bb', 'phi_bb', 'theta_ff', 'phi_ff', 'dimension'), rows)
    checks = CheckEngine('fiber')
    off = sum(1 for row in rows if row['dimension'] != 4)
    checks.expect('dimension_four', off == 0, f"dimension 4 at all {len(rows)} points",
                  f"dimension differs from 4 at {off} of {len(rows)} points", mismatches=off)
    payload = {'points': len(rows), 'mismatches': off, 'null_threshold': NULL_THRESHOLD, 'checks': checks.to_list()}
    ctx.run.write_report(payload)
    return Outcome(OK if checks.passed else INCONSISTENT, payload, checks.to_list())


@saddle_bp.command('gue-moment', help="<Det^n(E - H)> over GUE against the n x n Q-integral")
def gue_moment_command(ctx: RunContext) -> Outcome:
    section = ctx.section('gue_moment')
    result = gue_det_moment(int(section['N']), int(section['n']), number(section['E']), ctx.num_samples,
                            ctx.seed, lam=number(section['lambda']), workers=ctx.workers,
                            block_size=ctx.block_size)
    columns = ('N', 'n', 'E', 'mc_re', 'mc_im', 'se_re', 'se_im', 'quad_re', 'quad_im', 'z',
               'saddle_re', 'saddle_im', 'ratio_re', 'ratio_im')
    row = (result.N, result.n, result.energy, result.mc.value.real, result.mc.value.imag, result.mc.se_re,
           result.mc.se_im, result.quadrature.real, result.quadrature.imag, result.z_score,
           result.saddle.real, result.saddle.imag, result.ratio.real, result.ratio.imag)
    ctx.run.write_csv('gue_moment.csv', columns, [row])
    payload = result.to_dict()
    ctx.run.write_report(payload)
    return Outcome(verdict_for(result.z_score), payload, result.checks)
