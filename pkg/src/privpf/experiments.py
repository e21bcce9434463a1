"""Synthetic-experiment harnesses: network reconstruction, held-out links, topics.

Each harness draws ground truth, privatizes it, fits the requested modes and
returns flat records ``dict(seed=..., epsilon=..., mode=..., mae=...)`` that
``summarize`` reduces to per-condition medians.
"""

import logging
from collections import defaultdict
from dataclasses import dataclass

import numpy as np

from privpf.evaluation import heldout_mask_top_senders, mae, topic_quality
from privpf.exceptions import ConfigurationError
from privpf.mcmc import Schedule, run
from privpf.models import GammaPoissonTopicModel, MixedMembershipBlockModel
from privpf.privacy import PrivacyParams, precision_from_mean, privatize

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class NetworkRegime:
    """Generation settings for sparse block-structured count networks.

    Draws are repeated until the network has mean count at least
    ``min_mean`` and at least ``min_zero_fraction`` zero cells, so that the
    precision ``N = round(mean)`` is defined and the matrix is sparse.
    """

    n_actors: int = 20
    n_communities: int = 5
    a0: float = 0.1
    b0: float = 0.2
    min_mean: float = 1.0
    min_zero_fraction: float = 0.6
    max_draws: int = 1000


def generate_network(regime, rng):
    """Return ``(state, counts, n_draws)`` for one accepted network."""
    model = MixedMembershipBlockModel(regime.n_communities, regime.a0, regime.b0)
    shape = (regime.n_actors, regime.n_actors)
    for draw in range(1, regime.max_draws + 1):
        state, counts = model.generate(shape, rng)
        zero_fraction = 1.0 - counts.nnz / (shape[0] * shape[1])
        if counts.mean() >= regime.min_mean and zero_fraction >= regime.min_zero_fraction:
            return state, counts, draw
    raise ConfigurationError(
        f"no network met the regime constraints in {regime.max_draws} draws")


def _fit(data, model, mode, schedule, seed, mask=None):
    sched = Schedule(schedule.total_iters, schedule.burn_in, schedule.thin, mode)
    return run(data, model, sched, np.random.default_rng(seed), mask=mask, seed=seed)


def network_experiment(epsilons, seeds, schedule, regime=NetworkRegime(),
                       fit_a0=0.1, fit_b0=1.0, modes=("proposed", "naive"), top_k=None):
    """Reconstruction (or, with ``top_k``, held-out) MAE on synthetic networks.

    For each seed one network is drawn and privatized once per budget with
    ``N`` set to its rounded empirical mean.  With ``top_k`` the cells of the
    ``top_k`` largest senders and recipients are hidden from every fit and
    the MAE is scored on them only.
    """
    records = []
    for seed in seeds:
        ss = np.random.SeedSequence(seed)
        gen_ss, priv_ss, fit_ss = ss.spawn(3)
        state, truth, n_draws = generate_network(regime, np.random.default_rng(gen_ss))
        n = precision_from_mean(truth)
        mask = heldout_mask_top_senders(truth, top_k) if top_k else None
        model = MixedMembershipBlockModel(regime.n_communities, fit_a0, fit_b0)
        priv_rng = np.random.default_rng(priv_ss)
        fit_seeds = fit_ss.generate_state(len(epsilons) * len(modes))
        for e, eps in enumerate(epsilons):
            params = PrivacyParams.from_budget(n, eps)
            noisy = privatize(truth, params, priv_rng, seed=seed)
            for m, mode in enumerate(modes):
                data = truth if mode == "non_private" else noisy
                fit_seed = int(fit_seeds[e * len(modes) + m])
                trace = _fit(data, model, mode, schedule, fit_seed, mask)
                records.append(dict(seed=seed, epsilon=eps, precision_n=n, alpha=params.alpha,
                                    mode=mode, mae=mae(trace.posterior_mean_rates, truth, mask),
                                    generation_draws=n_draws))
                log.info("seed %s eps %s %s: MAE %.4f", seed, eps, mode, records[-1]["mae"])
    return records


@dataclass(frozen=True)
class CorpusRegime:
    """Synthetic document-term corpus drawn from the topic model itself."""

    n_docs: int = 200
    n_words: int = 300
    n_topics: int = 10
    a0: float = 0.1
    b0: float = 0.3


def topic_experiment(budget_ratios, seeds, schedule, regime=CorpusRegime(), fit_a0=0.1,
                     fit_b0=1.0, modes=("proposed", "naive", "non_private"), n_top=10,
                     precision_n=1):
    """Reconstruction MAE and topic quality on a synthetic corpus.

    ``budget_ratios`` are values of epsilon / N; the mechanism depends on
    them only through ``alpha = exp(-epsilon / N)``.  The non-private fit does
    not depend on the budget and is run once per seed.
    """
    records = []
    gen_model = GammaPoissonTopicModel(regime.n_topics, regime.a0, regime.b0)
    fit_model = GammaPoissonTopicModel(regime.n_topics, fit_a0, fit_b0)
    shape = (regime.n_docs, regime.n_words)
    for seed in seeds:
        gen_ss, priv_ss, fit_ss = np.random.SeedSequence(seed).spawn(3)
        _, truth = gen_model.generate(shape, np.random.default_rng(gen_ss))
        priv_rng = np.random.default_rng(priv_ss)
        fit_seeds = iter(fit_ss.generate_state(len(budget_ratios) * len(modes) + 1))
        baseline = None
        for ratio in budget_ratios:
            params = PrivacyParams.from_budget(precision_n, ratio * precision_n, "document")
            noisy = privatize(truth, params, priv_rng, seed=seed)
            for mode in modes:
                if mode == "non_private":
                    if baseline is None:
                        trace = _fit(truth, fit_model, mode, schedule, int(next(fit_seeds)))
                        baseline = _topic_scores(trace, truth, n_top)
                    scores = baseline
                else:
                    trace = _fit(noisy, fit_model, mode, schedule, int(next(fit_seeds)))
                    scores = _topic_scores(trace, truth, n_top)
                records.append(dict(seed=seed, budget_ratio=ratio, alpha=params.alpha, mode=mode,
                                    **scores))
                log.info("seed %s eps/N %s %s: MAE %.4f", seed, ratio, mode, scores["mae"])
    return records


def _topic_scores(trace, truth, n_top):
    quality = topic_quality(trace, truth, n_top)
    return dict(mae=mae(trace.posterior_mean_rates, truth), npmi=quality["npmi"][1],
                coherence=quality["coherence"][1])


def summarize(records, by, metric="mae"):
    """Median of ``metric`` per combination of the ``by`` keys."""
    groups = defaultdict(list)
    for rec in records:
        groups[tuple(rec[k] for k in by)].append(rec[metric])
    return {key: float(np.median(vals)) for key, vals in groups.items()}
