"""The geometric mechanism and its (N, epsilon) accounting.

Adding two-sided geometric noise with parameter alpha to every count makes
any two observations within L1 distance N indistinguishable up to a factor
``exp(epsilon)`` with ``epsilon = N ln(1/alpha)``.
"""

import math
from dataclasses import dataclass, replace

import numpy as np

from privpf.counts import DEFAULT_CELL_BUDGET, CountMatrix, check_capacity
from privpf.distributions import two_sided_geometric_log_pmf, two_sided_geometric_sample
from privpf.exceptions import CapacityError, CoverageError, DomainError

_BUDGET_TOL = 1e-12


def alpha_from_budget(precision_n, epsilon):
    """``alpha = exp(-epsilon / N)``."""
    _check_precision(precision_n)
    if not epsilon > 0:
        raise DomainError(f"epsilon must be positive, got {epsilon}")
    return math.exp(-epsilon / precision_n)


def epsilon_from_alpha(precision_n, alpha):
    """``epsilon = N ln(1 / alpha)``."""
    _check_precision(precision_n)
    if not 0 < alpha < 1:
        raise DomainError(f"alpha must lie strictly inside (0, 1), got {alpha}")
    return -precision_n * math.log(alpha)


def _check_precision(precision_n):
    if isinstance(precision_n, bool) or int(precision_n) != precision_n or precision_n < 1:
        raise DomainError(f"precision N must be a positive integer, got {precision_n}")


def precision_from_mean(data):
    """Precision set to the rounded empirical cell mean, at least 1."""
    return max(1, int(round(data.mean())))


@dataclass(frozen=True)
class PrivacyParams:
    """Mechanism parameters with ``epsilon = N ln(1/alpha)`` enforced.

    ``granularity`` records what one observation is (a document row or a
    single cell); it has no computational effect.
    """

    precision_n: int
    epsilon: float
    alpha: float
    granularity: str = "cell"

    def __post_init__(self):
        _check_precision(self.precision_n)
        object.__setattr__(self, "precision_n", int(self.precision_n))
        expected = epsilon_from_alpha(self.precision_n, self.alpha)
        if not self.epsilon > 0 or abs(self.epsilon - expected) > _BUDGET_TOL * max(1.0, expected):
            raise DomainError(
                f"epsilon={self.epsilon} inconsistent with N={self.precision_n}, "
                f"alpha={self.alpha} (expected {expected})")

    @classmethod
    def from_budget(cls, precision_n, epsilon, granularity="cell"):
        return cls(precision_n, float(epsilon), alpha_from_budget(precision_n, epsilon), granularity)

    @classmethod
    def from_alpha(cls, precision_n, alpha, granularity="cell"):
        return cls(precision_n, epsilon_from_alpha(precision_n, alpha), float(alpha), granularity)


@dataclass
class PrivatizedMatrix:
    """Dense signed-integer privatized counts plus the parameters used."""

    values: np.ndarray
    params: PrivacyParams
    truncated: bool = False
    seed: int = None

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.int64)
        if self.values.ndim != 2:
            raise DomainError("privatized values must be a 2-d array")
        if self.truncated and np.any(self.values < 0):
            raise DomainError("a truncated matrix cannot hold negative values")

    @property
    def shape(self):
        return self.values.shape


def privatize(data, params, rng, max_cells=DEFAULT_CELL_BUDGET, seed=None):
    """Add independent ``2Geo(alpha)`` noise to every cell, zeros included."""
    if not isinstance(data, CountMatrix):
        data = CountMatrix.from_dense(data)
    check_capacity(data.n_rows, data.n_cols, max_cells)
    dense = data.to_dense(max_cells=None)
    noise = two_sided_geometric_sample(params.alpha, rng, size=dense.shape)
    return PrivatizedMatrix(dense + noise, params, truncated=False, seed=seed)


def truncate(data):
    """Clip negative privatized counts to zero (the naive baseline's input)."""
    return replace(data, values=np.maximum(data.values, 0), truncated=True)


def _outside_mass(alpha, lo_gap, hi_gap):
    """P(tau < -lo_gap) + P(tau > hi_gap) for tau ~ 2Geo(alpha)."""
    def upper(k):  # P(tau >= k)
        if k <= 0:
            return 1.0
        return alpha**k / (1.0 + alpha)
    return upper(lo_gap + 1) + upper(hi_gap + 1)


def verify_privacy_ratio(params, value_bound, output_window=None, coverage=1e-9,
                         max_cells=10**7):
    """Largest log-likelihood ratio between neighbouring scalar inputs.

    Enumerates every pair ``y, y'`` in ``[0, value_bound]`` with
    ``|y - y'| <= N`` and every output ``t`` in ``output_window``
    (inclusive ``(lo, hi)``), returning ``max |log P(t|y) - log P(t|y')|``.
    The window must hold at least ``1 - coverage`` of the output mass for
    every input; by default one is chosen that does.
    """
    alpha, n = params.alpha, params.precision_n
    if value_bound < 1:
        raise DomainError("value_bound must be a positive integer")
    if output_window is None:
        pad = max(1, math.ceil(math.log(coverage / 2) / math.log(alpha))) + n
        output_window = (-pad, value_bound + pad)
    lo, hi = output_window
    if (hi - lo + 1) * (value_bound + 1) > max_cells:
        raise CapacityError(
            f"enumeration over {hi - lo + 1} outputs x {value_bound + 1} inputs exceeds "
            f"{max_cells} cells; alpha this close to 1 needs an analytic bound")
    worst = max(_outside_mass(alpha, 0 - lo, hi - 0),
                _outside_mass(alpha, value_bound - lo, hi - value_bound))
    if worst > coverage:
        raise CoverageError(
            f"window [{lo}, {hi}] leaves {worst:.3g} of the output mass uncovered (> {coverage})")

    ys = np.arange(value_bound + 1)
    t = np.arange(lo, hi + 1)
    logp = two_sided_geometric_log_pmf(t[None, :] - ys[:, None], alpha)
    best = 0.0
    for shift in range(1, min(n, value_bound) + 1):
        diff = np.abs(logp[shift:] - logp[:-shift])
        best = max(best, float(diff.max()))
    return best
