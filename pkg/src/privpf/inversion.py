"""Per-entry Gibbs steps that impute true counts from privatized ones.

Each privatized count is modelled as

    y ~ Pois(mu),  g_plus ~ Pois(lambda_plus),  g_minus ~ Pois(lambda_minus),
    lambda_* ~ Exp(mean = alpha / (1 - alpha)),
    y_tilde = (y + g_plus) - g_minus = y_tilde_plus - g_minus,

which reproduces additive two-sided geometric noise once the exponential
rates are integrated out.  A sweep draws the minimum of ``y_tilde_plus`` and
``g_minus`` from a Bessel distribution, recovers both counts from the
observed difference, thins ``y_tilde_plus`` into ``y`` and ``g_plus``, and
refreshes the auxiliary rates by gamma conjugacy.

All functions are vectorized over entries and never see the true data.
"""

from dataclasses import dataclass

import numpy as np

from privpf.distributions import bessel_sample, exponential_sample
from privpf.exceptions import DomainError


def noise_rate(alpha):
    """Rate of the exponential prior on the auxiliary Poisson rates.

    The prior mean is ``alpha / (1 - alpha)``, so the rate is
    ``(1 - alpha) / alpha``; the marginal of each Poisson count is then
    geometric with ratio ``alpha``.
    """
    if not 0 < alpha < 1:
        raise DomainError(f"alpha must lie strictly inside (0, 1), got {alpha}")
    return (1.0 - alpha) / alpha


@dataclass
class EntryAuxState:
    """Auxiliary variables for a batch of entries (all arrays, same shape)."""

    lambda_plus: np.ndarray
    lambda_minus: np.ndarray
    g_minus: np.ndarray
    g_plus: np.ndarray
    y_true: np.ndarray
    y_tilde_plus: np.ndarray

    def check(self, y_tilde):
        """Raise if the count identities do not hold exactly."""
        y_tilde = np.asarray(y_tilde)
        ok = (
            np.array_equal(self.y_tilde_plus - self.g_minus, y_tilde)
            and np.array_equal(self.y_true + self.g_plus, self.y_tilde_plus)
            and np.all(self.y_true >= 0) and np.all(self.g_plus >= 0) and np.all(self.g_minus >= 0)
        )
        if not ok:
            raise AssertionError("auxiliary state violates the count identities")

    def copy(self):
        return EntryAuxState(*(np.array(getattr(self, f)) for f in self.__dataclass_fields__))


def sample_bessel_min(y_tilde, mu, lambda_plus, lambda_minus, rng):
    """``m ~ Bes(|y_tilde|, 2 sqrt((lambda_plus + mu) lambda_minus))``."""
    scale = 2.0 * np.sqrt((np.asarray(lambda_plus) + mu) * lambda_minus)
    return bessel_sample(np.abs(y_tilde), scale, rng)


def split_observation(y_tilde, m):
    """Recover ``(y_tilde_plus, g_minus)`` from their difference and minimum."""
    y_tilde = np.asarray(y_tilde)
    m = np.asarray(m)
    nonpos = y_tilde <= 0
    y_tilde_plus = np.where(nonpos, m, m + y_tilde)
    g_minus = np.where(nonpos, m - y_tilde, m)
    return y_tilde_plus, g_minus


def thin_true_count(y_tilde_plus, mu, lambda_plus, rng):
    """``y ~ Binom(y_tilde_plus, mu / (mu + lambda_plus))``; returns ``(y, g_plus)``."""
    y_tilde_plus = np.asarray(y_tilde_plus)
    total = mu + np.asarray(lambda_plus)
    with np.errstate(invalid="ignore", divide="ignore"):
        p = np.where(total > 0, mu / total, 1.0)
    if np.any((total <= 0) & (y_tilde_plus > 0)):
        raise DomainError("positive y_tilde_plus with zero mu + lambda_plus")
    y = rng.binomial(y_tilde_plus, np.clip(p, 0.0, 1.0))
    return y, y_tilde_plus - y


def resample_lambdas(g_plus, g_minus, alpha, rng):
    """``lambda_* ~ Gamma(1 + g_*, rate = (1 - alpha)/alpha + 1)`` independently."""
    rate = noise_rate(alpha) + 1.0
    lam_plus = rng.gamma(1.0 + np.asarray(g_plus), 1.0 / rate)
    lam_minus = rng.gamma(1.0 + np.asarray(g_minus), 1.0 / rate)
    return lam_plus, lam_minus


def entry_gibbs_sweep(y_tilde, mu, state, alpha, rng):
    """One sweep: Bessel minimum, split, binomial thinning, rate refresh."""
    m = sample_bessel_min(y_tilde, mu, state.lambda_plus, state.lambda_minus, rng)
    y_tilde_plus, g_minus = split_observation(y_tilde, m)
    y, g_plus = thin_true_count(y_tilde_plus, mu, state.lambda_plus, rng)
    lam_plus, lam_minus = resample_lambdas(g_plus, g_minus, alpha, rng)
    return EntryAuxState(lam_plus, lam_minus, g_minus, g_plus, y, y_tilde_plus)


def init_aux_state(y_tilde, mu, alpha, rng):
    """Rates from their exponential prior, then one sweep to fill the counts."""
    y_tilde = np.asarray(y_tilde)
    rate = noise_rate(alpha)
    lam_plus = exponential_sample(rate, rng, size=y_tilde.shape)
    lam_minus = exponential_sample(rate, rng, size=y_tilde.shape)
    zeros = np.zeros(y_tilde.shape, dtype=np.int64)
    seed_state = EntryAuxState(lam_plus, lam_minus, zeros, zeros, zeros, zeros)
    return entry_gibbs_sweep(y_tilde, mu, seed_state, alpha, rng)
