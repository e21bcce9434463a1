"""MCMC driver for private, naive and non-private Poisson factorization.

``proposed`` alternates the per-entry noise-inversion sweep with the model's
allocation and factor updates; ``naive`` clips the privatized counts at zero
and fits them as if they were true counts; ``non_private`` fits the true
counts.
"""

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy import special

from privpf.counts import CountMatrix
from privpf.distributions import skellam_log_pmf
from privpf.exceptions import ConfigurationError, NumericalFailureError
from privpf.inversion import entry_gibbs_sweep, init_aux_state, noise_rate
from privpf.models import make_model
from privpf.privacy import PrivatizedMatrix, truncate

log = logging.getLogger(__name__)

MODES = ("proposed", "naive", "non_private")


@dataclass(frozen=True)
class Schedule:
    total_iters: int
    burn_in: int
    thin: int = 1
    mode: str = "proposed"

    def __post_init__(self):
        if self.mode not in MODES:
            raise ConfigurationError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.total_iters < 1 or self.thin < 1 or self.burn_in < 0:
            raise ConfigurationError("total_iters and thin must be >= 1, burn_in >= 0")
        if self.burn_in >= self.total_iters:
            raise ConfigurationError("burn_in must be smaller than total_iters")

    @property
    def n_saved(self):
        return (self.total_iters - self.burn_in) // self.thin

    def is_saved(self, iteration):
        """Whether 1-based ``iteration`` is kept."""
        return iteration > self.burn_in and (iteration - self.burn_in) % self.thin == 0


@dataclass
class SampleTrace:
    """Saved factor samples, their posterior-mean rates and the log-joint trace."""

    model_config: dict
    schedule: Schedule
    samples: dict
    posterior_mean_rates: np.ndarray
    log_joint: np.ndarray
    seed: int = None
    extra: dict = field(default_factory=dict)

    @property
    def n_samples(self):
        return next(iter(self.samples.values())).shape[0]

    def model(self):
        cfg = dict(self.model_config)
        name = cfg.pop("model")
        return make_model(name, cfg.pop("n_components"), **cfg)

    def states(self):
        model = self.model()
        for s in range(self.n_samples):
            yield model.state_from_arrays({k: v[s] for k, v in self.samples.items()})

    def sample_rates(self, s):
        model = self.model()
        return model.rates(model.state_from_arrays({k: v[s] for k, v in self.samples.items()}))


def posterior_mean_rates(trace):
    """Average of the per-sample rate matrices, recomputed from stored factors."""
    if trace.n_samples == 0:
        raise ConfigurationError("trace holds no samples")
    model = trace.model()
    total = None
    for state in trace.states():
        mu = model.rates(state)
        total = mu if total is None else total + mu
    return total / trace.n_samples


def _resolve_data(data, mode, max_cells):
    """Return (initial counts, privatized values or None, alpha or None)."""
    if mode == "non_private":
        if not isinstance(data, CountMatrix):
            raise ConfigurationError("non_private mode needs the true CountMatrix")
        return data.to_dense(max_cells=max_cells), None, None
    if not isinstance(data, PrivatizedMatrix):
        raise ConfigurationError(f"{mode} mode needs a PrivatizedMatrix")
    if mode == "naive":
        return truncate(data).values, None, None
    if data.truncated:
        raise ConfigurationError("proposed mode needs untruncated privatized data")
    return None, data.values, data.params.alpha


def _poisson_loglik(y, mu):
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(y > 0, y * np.log(mu), 0.0) - mu - special.gammaln(y + 1.0)
    return float(terms.sum())


def _check_finite(state, iteration):
    for name, arr in state.arrays().items():
        if not np.all(np.isfinite(arr)):
            raise NumericalFailureError(
                f"non-finite value in factor {name!r} at iteration {iteration}", iteration)


def run(data, model, schedule, rng, mask=None, seed=None, max_cells=None):
    """Run one chain and return its :class:`SampleTrace`.

    ``mask`` (a :class:`~privpf.models.MaskSpec`) hides cells from every
    imputation, allocation and update step; their rates are still part of
    the returned posterior mean.
    """
    mode = schedule.mode
    counts, y_tilde_full, alpha = _resolve_data(data, mode, max_cells)
    shape = data.shape
    if mask is not None and mask.shape != tuple(shape):
        raise ConfigurationError(f"mask shape {mask.shape} does not match data {shape}")
    observed = np.ones(shape, dtype=bool) if mask is None else mask.observed
    obs = np.nonzero(observed)

    state = model.sample_prior(shape, rng)
    aux = None
    if mode == "proposed":
        y_tilde = y_tilde_full[obs]
        counts = np.zeros(shape, dtype=np.int64)
        aux = init_aux_state(y_tilde, model.rates(state)[obs], alpha, rng)
        counts[obs] = aux.y_true
        prior_rate = noise_rate(alpha)

    samples = {name: np.empty((schedule.n_saved,) + arr.shape)
               for name, arr in state.arrays().items()}
    mu_sum = np.zeros(shape)
    log_joint = np.empty(schedule.total_iters)
    saved = 0
    for it in range(1, schedule.total_iters + 1):
        if mode == "proposed":
            aux = entry_gibbs_sweep(y_tilde, model.rates(state)[obs], aux, alpha, rng)
            counts[obs] = aux.y_true
        allocation = model.allocate(state, counts, rng, mask)
        state = model.update(state, allocation, rng, mask)
        _check_finite(state, it)

        mu = model.rates(state)
        lj = model.log_prior(state) + _poisson_loglik(counts[obs], mu[obs])
        if mode == "proposed":
            lj += (2 * y_tilde.size * np.log(prior_rate)
                   - prior_rate * (aux.lambda_plus.sum() + aux.lambda_minus.sum())
                   + skellam_log_pmf(y_tilde - aux.y_true, aux.lambda_plus, aux.lambda_minus).sum())
        log_joint[it - 1] = lj

        if schedule.is_saved(it):
            for name, arr in state.arrays().items():
                samples[name][saved] = arr
            mu_sum += mu
            saved += 1
        if it % 500 == 0:
            log.debug("%s iteration %d/%d log-joint %.3f", mode, it, schedule.total_iters, lj)

    return SampleTrace(model.config(), schedule, samples, mu_sum / max(saved, 1), log_joint,
                       seed=seed)
