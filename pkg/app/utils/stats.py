"""
Monte Carlo summaries, z-scores and verdicts
"""

from dataclasses import dataclass, asdict, field
from typing import Dict, Any

import numpy as np

CONSISTENT = 'consistent'
INCONSISTENT = 'inconsistent'
INCONCLUSIVE = 'inconclusive'

Z_CONSISTENT = 3.0
Z_INCONSISTENT = 5.0

MEDIAN_GROUPS = 32
ROUNDOFF = 1e-12


@dataclass
class GreensEstimate:
    """Complex Monte Carlo (or quadrature) estimate with componentwise standard errors"""
    value: complex
    se_re: float
    se_im: float
    num_samples: int
    seed: int = None
    median_of_means: complex = None
    tail_ratio: float = None
    extra: Dict[str, Any] = field(default_factory=dict)

    @property
    def std_error(self) -> complex:
        return complex(self.se_re, self.se_im)

    def to_dict(self) -> Dict[str, Any]:
        data = asdict(self)
        data['value'] = [self.value.real, self.value.imag]
        if self.median_of_means is not None:
            data['median_of_means'] = [self.median_of_means.real, self.median_of_means.imag]
        return data


def median_of_means(values: np.ndarray, groups: int = MEDIAN_GROUPS) -> complex:
    """Componentwise median of contiguous group means"""
    values = np.asarray(values, dtype=complex)
    groups = max(1, min(groups, values.size))
    means = np.array([chunk.mean() for chunk in np.array_split(values, groups)])
    return complex(np.median(means.real), np.median(means.imag))


def estimate_from_values(values, seed: int = None, groups: int = MEDIAN_GROUPS,
                         robust: bool = False) -> GreensEstimate:
    """
    Summarize per-sample values. With robust=True the median of means over
    `groups` groups and the tail ratio max|x| / mean|x| are attached.
    """
    values = np.asarray(values, dtype=complex).ravel()
    n = values.size
    if n == 0:
        return GreensEstimate(complex(np.nan, np.nan), np.nan, np.nan, 0, seed)
    mean = complex(values.mean())
    if n > 1:
        se_re = float(values.real.std(ddof=1) / np.sqrt(n))
        se_im = float(values.imag.std(ddof=1) / np.sqrt(n))
    else:
        se_re = se_im = float('inf')
    estimate = GreensEstimate(mean, se_re, se_im, n, seed)
    if robust:
        estimate.median_of_means = median_of_means(values, groups)
        magnitudes = np.abs(values)
        scale = magnitudes.mean()
        estimate.tail_ratio = float(magnitudes.max() / scale) if scale > 0 else 0.0
    return estimate


def exact_estimate(value: complex, error: float = 0.0) -> GreensEstimate:
    """Wrap a deterministic value; error is used for both components"""
    return GreensEstimate(complex(value), float(error), float(error), 0)


def z_score(lhs: GreensEstimate, rhs: GreensEstimate) -> float:
    """
    Max over real and imaginary parts of |lhs - rhs| / combined se. The
    combined se is floored at a relative roundoff level so that two exact
    values agreeing to machine precision score zero.
    """
    floor = ROUNDOFF * (1.0 + abs(lhs.value) + abs(rhs.value))
    scores = []
    for part, se_l, se_r in (('real', lhs.se_re, rhs.se_re), ('imag', lhs.se_im, rhs.se_im)):
        diff = abs(getattr(lhs.value, part) - getattr(rhs.value, part))
        se = max(np.hypot(se_l, se_r), floor)
        if se > 0:
            scores.append(diff / se)
        elif diff > 0:
            scores.append(float('inf'))
        else:
            scores.append(0.0)
    return float(max(scores))


def verdict_for(z: float) -> str:
    if not np.isfinite(z):
        return INCONSISTENT
    if z < Z_CONSISTENT:
        return CONSISTENT
    if z > Z_INCONSISTENT:
        return INCONSISTENT
    return INCONCLUSIVE
