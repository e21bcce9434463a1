"""Acceptance checks, one test per criterion, each printing a PASS/FAIL line.

The summary lines are repeated at the end of the pytest run.  Runtimes on a
single core: criteria 1-4 take seconds, 5-6 about a minute each, the
network experiments (7 and 10) several minutes each and the topic
experiment (8) about a quarter of an hour.
"""

import math
import time

import numpy as np
import pytest
from scipy import integrate, special, stats

from privpf import distributions as D
from privpf.diagnostics import geweke_test, pp_slope
from privpf.experiments import (CorpusRegime, NetworkRegime, network_experiment, summarize,
                                topic_experiment)
from privpf.inversion import entry_gibbs_sweep, init_aux_state
from privpf.mcmc import Schedule, run
from privpf.models import GammaPoissonTopicModel, MixedMembershipBlockModel
from privpf.privacy import PrivacyParams, privatize, verify_privacy_ratio

import oracles

ALPHAS = (0.25, 0.5, math.exp(-1))
NETWORK_EPSILONS = (2.5, 1.0, 0.75)
NETWORK_SEEDS = range(1, 6)
NETWORK_SCHEDULE = Schedule(8500, 1000, 25)
# hold out the same share of actors as the 50-of-161 email network: 6 of 20
HELDOUT_TOP_K = round(20 * 50 / 161)


def _timed(report, criterion, limit_s, start, passed, detail):
    elapsed = time.perf_counter() - start
    ok = passed and elapsed < limit_s
    report(criterion, ok, f"{detail} [{elapsed:.0f}s, limit {limit_s}s]")
    return ok


# --- 1. distribution correctness ---------------------------------------------

def _skellam_log_oracle(tau, lp, lm, m_max=400):
    m = np.arange(m_max + 1)
    if tau >= 0:
        terms = stats.poisson.logpmf(m + tau, lp) + stats.poisson.logpmf(m, lm)
    else:
        terms = stats.poisson.logpmf(m, lp) + stats.poisson.logpmf(m - tau, lm)
    return float(special.logsumexp(terms))


def _bessel_log_oracle(v, a, m_max):
    m = np.arange(m_max + 1, dtype=float)
    logw = (2 * m + v) * math.log(a / 2) - special.gammaln(m + 1) - special.gammaln(m + v + 1)
    return logw - special.logsumexp(logw)


def _gof_battery():
    rng = np.random.default_rng(20240601)
    n = 100_000
    results = {}

    def discrete(name, draws, support, log_pmf):
        results[name] = oracles.chi_square_gof(draws, support, np.exp(log_pmf))

    for alpha in (0.25, 0.5):
        s = np.arange(-25, 26)
        discrete(f"2geo({alpha})", D.two_sided_geometric_sample(alpha, rng, n), s,
                 D.two_sided_geometric_log_pmf(s, alpha))
    for lp, lm in ((1.5, 0.8), (10.0, 12.0)):
        s = np.arange(-40, 41)
        discrete(f"skellam({lp},{lm})", D.skellam_sample(lp, lm, rng, n), s,
                 D.skellam_log_pmf(s, lp, lm))
    for v, a in ((3, 4.0), (0, 0.5), (2, 19.0), (0, 20.0), (5, 45.0), (1, 300.0)):
        mode = D.bessel_mode(v, a)
        s = np.arange(max(0, mode - 150), mode + 150)
        discrete(f"bessel({v},{a})", D.bessel_sample(v, a, rng, n), s, D.bessel_log_pmf(s, v, a))
    s = np.arange(40)
    discrete("poisson(3.2)", D.poisson_sample(3.2, rng, n), s, D.poisson_log_pmf(s, 3.2))
    s = np.arange(13)
    discrete("binomial(12,0.35)", D.binomial_sample(12, 0.35, rng, n), s,
             D.binomial_log_pmf(s, 12, 0.35))
    results["gamma(2.5,1.7)"] = stats.kstest(D.gamma_sample(2.5, 1.7, rng, n),
                                             stats.gamma(2.5, scale=1 / 1.7).cdf).pvalue
    results["exponential(0.6)"] = stats.kstest(D.exponential_sample(0.6, rng, n),
                                               stats.expon(scale=1 / 0.6).cdf).pvalue
    p = np.array([0.1, 0.2, 0.3, 0.4])
    counts = D.multinomial_sample(np.full(n // 5, 5), np.tile(p, (n // 5, 1)), rng).sum(axis=0)
    results["multinomial"] = stats.chisquare(counts, n * p).pvalue
    return results


def test_criterion_1_distributions(report):
    start = time.perf_counter()
    worst = {}
    tau = np.arange(-30, 31)
    worst["2geo"] = max(
        abs(D.two_sided_geometric_log_pmf(t, a) - math.log(oracles.two_sided_geometric_pmf(t, a)))
        for a in (0.1, 0.25, 0.5, math.exp(-1), 0.9) for t in tau)
    rates = (0.1, 1.0, 5.0, 20.0)
    worst["skellam"] = max(abs(D.skellam_log_pmf(t, lp, lm) - _skellam_log_oracle(t, lp, lm))
                           for lp in rates for lm in rates for t in range(-20, 21))
    errs = []
    for v in (0, 1, 3, 10):
        for a in (0.5, 2.0, 10.0, 40.0, 150.0):
            m_max = D.bessel_mode(v, a) + 400
            ref = _bessel_log_oracle(v, a, m_max)
            ours = D.bessel_log_pmf(np.arange(m_max + 1), v, a)
            keep = ref > -600
            errs.append(np.max(np.abs(ours[keep] - ref[keep])))
    worst["bessel"] = max(errs)
    pmf_ok = all(w < 1e-8 for w in worst.values())

    pvalues = _gof_battery()
    gof_ok = all(p > 0.01 for p in pvalues.values())
    lowest = min(pvalues, key=pvalues.get)
    detail = (f"max |log-PMF error| " + ", ".join(f"{k} {v:.1e}" for k, v in worst.items())
              + f" (tol 1e-8); {len(pvalues)} GOF tests, min p = {pvalues[lowest]:.3f} ({lowest})")
    assert _timed(report, 1, 60, start, pmf_ok and gof_ok, detail)


# --- 2. exponential mixture of Skellams is two-sided geometric ---------------

def _mixture_gauss_laguerre(tau, alpha, n_nodes):
    # lambda ~ Exp(rate r), r = (1 - alpha)/alpha; substitute x = (r + 1) lambda
    r = (1 - alpha) / alpha
    x, w = special.roots_laguerre(n_nodes)
    lam = x / (r + 1)
    with np.errstate(divide="ignore"):
        lw = np.log(w)
    logs = (lw[:, None] + lw[None, :] + lam[:, None] + lam[None, :]
            + D.skellam_log_pmf(tau, lam[:, None], lam[None, :]))
    return r * r / (r + 1) ** 2 * float(np.exp(logs).sum())


def test_criterion_2_exponential_skellam_mixture(report):
    start = time.perf_counter()
    worst = 0.0
    for alpha in ALPHAS:
        for tau in range(-10, 11):
            target = math.exp(D.two_sided_geometric_log_pmf(tau, alpha))
            worst = max(worst, abs(_mixture_gauss_laguerre(tau, alpha, 200) - target))
    # independent adaptive cubature at a few points
    adaptive = 0.0
    for alpha, tau in ((0.5, 0), (0.25, -4), (math.exp(-1), 7)):
        r = (1 - alpha) / alpha
        f = lambda lm, lp: math.exp(D.skellam_log_pmf(tau, lp, lm) - r * (lp + lm)) * r * r
        val, _ = integrate.dblquad(f, 0, np.inf, 0, np.inf, epsabs=1e-12, epsrel=1e-12)
        adaptive = max(adaptive, abs(val - math.exp(D.two_sided_geometric_log_pmf(tau, alpha))))
    ok = worst < 1e-8 and adaptive < 1e-8
    assert _timed(report, 2, 60, start, ok,
                  f"max |mixture - 2Geo| = {worst:.1e} (Gauss-Laguerre, 63 points), "
                  f"{adaptive:.1e} (adaptive, 3 points); tol 1e-8")


# --- 3. min given difference is Bessel ---------------------------------------

def test_criterion_3_min_given_difference(report):
    start = time.perf_counter()
    worst, worst_alt = 0.0, 0.0
    grid = (0.5, 1.0, 2.0)
    for l1 in grid:
        for l2 in grid:
            for tau in range(-5, 6):
                cond = oracles.min_given_difference(l1, l2, tau, grid=40)
                m = np.arange(cond.size)
                ours = np.exp(D.bessel_log_pmf(m, abs(tau), 2 * math.sqrt(l1 * l2)))
                alt = np.exp(D.bessel_log_pmf(m, abs(tau), 2 * math.sqrt(2 * l1 * l2)))
                worst = max(worst, 0.5 * np.abs(cond - ours).sum())
                worst_alt = max(worst_alt, 0.5 * np.abs(cond - alt).sum())
    ok = worst < 1e-8
    assert _timed(report, 3, 60, start, ok,
                  f"max TV = {worst:.1e} with scale 2*sqrt(l1*l2) (tol 1e-8); "
                  f"scale 2*sqrt(2*l1*l2) would give TV {worst_alt:.2f}")


# --- 4. privacy accounting ---------------------------------------------------

def test_criterion_4_privacy_ratio(report):
    start = time.perf_counter()
    slack = []
    for n in (1, 2, 3):
        for alpha in ALPHAS:
            params = PrivacyParams.from_alpha(n, alpha)
            slack.append(verify_privacy_ratio(params, 20) - params.epsilon)
    ok = max(slack) <= 1e-9
    assert _timed(report, 4, 60, start, ok,
                  f"max (log-ratio - N ln(1/alpha)) = {max(slack):.1e} over 9 (N, alpha) pairs")


# --- 5. stationarity of the per-entry sweep ----------------------------------

STATIONARY_POINTS = [(2, 1.5, 0.5), (-3, 0.5, 0.5), (0, 1.0, 0.25), (5, 3.0, math.exp(-1)),
                     (-1, 2.0, 0.8), (4, 0.3, 0.1), (-6, 4.0, 0.6)]


def test_criterion_5_sweep_stationarity(report):
    # 2000 independent chains x 500 post-burn-in sweeps = 10^6 sweeps per point
    start = time.perf_counter()
    rng = np.random.default_rng(5)
    tvs = []
    for y_tilde, mu, alpha in STATIONARY_POINTS:
        yt = np.full(2000, y_tilde)
        state = init_aux_state(yt, mu, alpha, rng)
        hist = np.zeros(61, dtype=np.int64)
        for it in range(600):
            state = entry_gibbs_sweep(yt, mu, state, alpha, rng)
            if it >= 100:
                hist += np.bincount(np.minimum(state.y_true, 60), minlength=61)
        emp = hist / hist.sum()
        tvs.append(0.5 * np.abs(emp - oracles.entry_posterior(y_tilde, mu, alpha)).sum())
    ok = max(tvs) < 0.01
    assert _timed(report, 5, 300, start, ok,
                  f"TV per point {', '.join(f'{t:.4f}' for t in tvs)} (tol 0.01, "
                  f"{len(tvs)} points)")


# --- 6. Geweke joint-distribution test ---------------------------------------

def test_criterion_6_geweke(report):
    start = time.perf_counter()
    slopes = {}
    for label, model, shape in (("topic", GammaPoissonTopicModel(2, 2.0, 2.0), (3, 4)),
                                ("mmsb", MixedMembershipBlockModel(2, 2.0, 2.0), (4, 4))):
        result = geweke_test(model, shape, 10_000, np.random.default_rng(6))
        for name, (fwd, succ) in result.items():
            slopes[f"{label}:{name}"] = pp_slope(fwd, succ)
    ok = all(0.9 <= s <= 1.1 for s in slopes.values())
    lo, hi = min(slopes.values()), max(slopes.values())
    assert _timed(report, 6, 600, start, ok,
                  f"PP slopes in [{lo:.3f}, {hi:.3f}] over {len(slopes)} statistics "
                  f"(band [0.9, 1.1], 10^4 rounds)")


# --- 7 and 10. synthetic networks ---------------------------------------------

def _network_verdict(records):
    med = summarize(records, ("epsilon", "mode"))
    gaps = [med[(e, "naive")] - med[(e, "proposed")] for e in NETWORK_EPSILONS]
    table = "; ".join(f"eps {e}: proposed {med[(e, 'proposed')]:.3f} vs naive "
                      f"{med[(e, 'naive')]:.3f}" for e in NETWORK_EPSILONS)
    return gaps, table


def test_criterion_7_network_reconstruction(report):
    start = time.perf_counter()
    records = network_experiment(NETWORK_EPSILONS, NETWORK_SEEDS, NETWORK_SCHEDULE)
    gaps, table = _network_verdict(records)
    lower = all(g > 0 for g in gaps)
    widening = all(a < b for a, b in zip(gaps, gaps[1:]))
    assert _timed(report, 7, 1800, start, lower and widening,
                  f"median MAE {table}; gap {', '.join(f'{g:.3f}' for g in gaps)} "
                  f"(must be > 0 and increasing)")


def test_criterion_10_heldout_links(report):
    start = time.perf_counter()
    records = network_experiment(NETWORK_EPSILONS, NETWORK_SEEDS, NETWORK_SCHEDULE,
                                 top_k=HELDOUT_TOP_K)
    gaps, table = _network_verdict(records)
    ok = all(g >= 0 for g in gaps)
    assert _timed(report, 10, 1800, start, ok,
                  f"median held-out MAE (top-{HELDOUT_TOP_K} mask) {table}")


# --- 8. topic-model analog ------------------------------------------------------

TOPIC_RATIOS = (3.0, 2.0, 1.0)


def test_criterion_8_topic_model(report):
    start = time.perf_counter()
    records = topic_experiment(TOPIC_RATIOS, range(1, 6), Schedule(400, 200, 5))
    mae_med = summarize(records, ("budget_ratio", "mode"))
    coh_med = summarize(records, ("budget_ratio", "mode"), metric="coherence")
    ok = all(mae_med[(r, "proposed")] <= mae_med[(r, "naive")] for r in TOPIC_RATIOS)
    table = "; ".join(f"eps/N {r:g}: proposed {mae_med[(r, 'proposed')]:.3f} vs naive "
                      f"{mae_med[(r, 'naive')]:.3f}" for r in TOPIC_RATIOS)
    beats = [r for r in TOPIC_RATIOS
             if coh_med[(r, "proposed")] > coh_med[(r, "non_private")]]
    coh = (f"coherence (reported, not gated): non-private {coh_med[(3.0, 'non_private')]:.1f}, "
           + ", ".join(f"proposed@{r:g} {coh_med[(r, 'proposed')]:.1f}" for r in TOPIC_RATIOS)
           + f"; proposed above non-private at eps/N {beats if beats else 'none'}")
    assert _timed(report, 8, 1800, start, ok, f"median MAE {table}. {coh}")


# --- 9. zero-noise limit ----------------------------------------------------------

def test_criterion_9_zero_noise_limit(report):
    # Independent short chains from prior initialization; at alpha = 1e-6 the
    # proposed chain's state after T sweeps should have the same distribution
    # as the non-private chain's on the same data.
    start = time.perf_counter()
    model = MixedMembershipBlockModel(2, 1.0, 1.0)
    rng = np.random.default_rng(9)
    _, truth = model.generate((8, 8), rng)
    noisy = privatize(truth, PrivacyParams.from_alpha(1, 1e-6), rng)
    identical = bool(np.array_equal(noisy.values, truth.to_dense()))
    stats_by_mode = {}
    for mode, data in (("proposed", noisy), ("non_private", truth)):
        seeds = np.random.SeedSequence(90 if mode == "proposed" else 91).spawn(300)
        vals = []
        for ss in seeds:
            trace = run(data, model, Schedule(60, 59, 1, mode), np.random.default_rng(ss))
            vals.append(trace.posterior_mean_rates.sum())
        stats_by_mode[mode] = np.array(vals)
    p = stats.ks_2samp(stats_by_mode["proposed"], stats_by_mode["non_private"]).pvalue
    ok = p > 0.01
    assert _timed(report, 9, 300, start, ok,
                  f"KS two-sample p = {p:.3f} on total rate over 300 chains per mode "
                  f"(privatized data identical to truth: {identical})")
