"""
Green's function commands: g1, g2, dos, lyapunov, spacings
"""

import logging

import numpy as np

from app.blueprints import OK, Blueprint, Outcome, RunContext
from app.core.greens import (dos_profile, estimate_g1, estimate_g2, estimate_g2_detratio, lyapunov_fit,
                             lyapunov_scan, spacing_stats)
from app.exceptions import ConfigError
from app.extensions import number

logger = logging.getLogger(__name__)

greens_bp = Blueprint('greens')

G2_METHODS = ('resolvent', 'cofactor', 'finite_difference')


@greens_bp.command('g1', help="One-point function <Tr Pi_i (z - H)^-1>")
def g1_command(ctx: RunContext) -> Outcome:
    section = ctx.section('g1')
    site = int(section['site'])
    z = ctx.complex('g1', 'z')
    estimate = estimate_g1(ctx.spec, site, z, ctx.num_samples, ctx.seed, ctx.workers)
    row = (site, z.real, z.imag, estimate.value.real, estimate.value.imag, estimate.se_re, estimate.se_im,
           estimate.num_samples, ctx.seed)
    ctx.run.write_csv('g1.csv', ('site', 're_z', 'im_z', 're_val', 'im_val', 'se_re', 'se_im', 'n', 'seed'), [row])
    report = {'site': site, 'z': z, 'estimate': estimate.to_dict()}
    ctx.run.write_report(report)
    return Outcome(OK, report)


@greens_bp.command('g2', help="Two-point function by resolvents or by determinant ratios")
def g2_command(ctx: RunContext) -> Outcome:
    section = ctx.section('g2')
    method = section['method']
    if method not in G2_METHODS:
        raise ConfigError(f"g2.method must be one of {G2_METHODS}", key='g2.method')
    site_i, site_j = int(section['site_i']), int(section['site_j'])
    z1, z2 = ctx.complex('g2', 'z1'), ctx.complex('g2', 'z2')
    if method == 'resolvent':
        estimate = estimate_g2(ctx.spec, site_i, site_j, z1, z2, ctx.num_samples, ctx.seed, ctx.workers)
    else:
        estimate = estimate_g2_detratio(ctx.spec, site_i, site_j, int(section['orbital_a']),
                                        int(section['orbital_b']), z1, z2, ctx.num_samples, ctx.seed,
                                        ctx.workers, method=method, fd_step=ctx.number('g2', 'fd_step'),
                                        cond_max=ctx.number('g2', 'cond_max'))
    columns = ('site_i', 'site_j', 're_z1', 'im_z1', 're_z2', 'im_z2', 're_val', 'im_val', 'se_re', 'se_im',
               'n', 'seed', 'method')
    row = (site_i, site_j, z1.real, z1.imag, z2.real, z2.imag, estimate.value.real, estimate.value.imag,
           estimate.se_re, estimate.se_im, estimate.num_samples, ctx.seed, method)
    ctx.run.write_csv('g2.csv', columns, [row])
    report = {'method': method, 'sites': [site_i, site_j], 'z1': z1, 'z2': z2, 'estimate': estimate.to_dict()}
    ctx.run.write_report(report)
    return Outcome(OK, report)


@greens_bp.command('dos', help="Density of states -Im G1(E + i eps) / pi on an energy grid")
def dos_command(ctx: RunContext) -> Outcome:
    section = ctx.section('dos')
    grid = [number(e) for e in section['energy_grid']]
    rows = dos_profile(ctx.spec, int(section['site']), grid, ctx.number('dos', 'epsilon'),
                       ctx.num_samples, ctx.seed, ctx.workers)
    ctx.run.write_csv('dos.csv', ('E', 'rho', 'se'), rows)
    report = {'site': int(section['site']), 'epsilon': ctx.number('dos', 'epsilon'),
              'profile': [list(row) for row in rows]}
    ctx.run.write_report(report)
    return Outcome(OK, report)


@greens_bp.command('lyapunov', help="Decay of |G2_0j(E + i eps, E - i eps)| with distance")
def lyapunov_command(ctx: RunContext) -> Outcome:
    section = ctx.section('lyapunov')
    energy, epsilon = ctx.number('lyapunov', 'energy'), ctx.number('lyapunov', 'epsilon')
    scan = lyapunov_scan(ctx.spec, energy, epsilon, ctx.num_samples, ctx.seed, int(section['origin']),
                         ctx.workers)
    fit_range = section['fit_range']
    fit = lyapunov_fit([(d, v) for d, v, _ in scan], tuple(fit_range) if fit_range else None)
    rows = [(d, float(np.log(v)) if v > 0 else float('nan'), fit.lam, fit.r_squared) for d, v, _ in scan]
    ctx.run.write_csv('lyapunov.csv', ('distance', 'log_abs_g2', 'fit_lambda', 'r2'), rows)
    report = {'lambda': fit.lam, 'intercept': fit.intercept, 'r2': fit.r_squared, 'fit_range': fit.fit_range,
              'scan': [list(row) for row in scan]}
    ctx.run.write_report(report)
    ctx.run.append_log(f"lyapunov fit: lambda={fit.lam:.6g} r2={fit.r_squared:.4f}")
    return Outcome(OK, report)


@greens_bp.command('spacings', help="Unfolded level-spacing histogram and KS distance to the GUE surmise")
def spacings_command(ctx: RunContext) -> Outcome:
    section = ctx.section('spacings')
    stats = spacing_stats(ctx.spec, ctx.num_samples, int(section['unfolding_window']), ctx.seed,
                          bulk_fraction=ctx.number('spacings', 'bulk_fraction'),
                          num_bins=int(section['num_bins']), s_max=ctx.number('spacings', 's_max'),
                          workers=ctx.workers)
    centers = 0.5 * (stats.bin_edges[1:] + stats.bin_edges[:-1])
    ctx.run.write_csv('spacings.csv', ('s', 'count'), zip(centers, stats.counts))
    report = {'ks_distance': stats.ks_distance, 'num_spacings': stats.num_spacings,
              'mean_spacing': stats.mean_spacing}
    ctx.run.write_report(report)
    ctx.run.append_log(f"spacings: KS distance to Wigner {stats.ks_distance:.4f} over {stats.num_spacings}")
    return Outcome(OK, report)
