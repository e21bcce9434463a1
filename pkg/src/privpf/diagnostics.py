"""Joint-distribution ("getting it right") tests for the samplers.

A marginal-conditional simulator draws parameters from the prior and data
given the parameters.  A successive-conditional simulator alternates one
posterior update with a fresh draw of data given the current parameters.
If every conditional is correct, both simulators target the same joint, so
any scalar statistic of the parameters has the same distribution under both.
"""

import numpy as np

from privpf.inversion import entry_gibbs_sweep, noise_rate, EntryAuxState


def pp_slope(a, b):
    """Least-squares slope of the P-P plot of sample ``b`` against sample ``a``.

    Both empirical CDFs are evaluated on the pooled sample; identical
    distributions give a slope near one.
    """
    a = np.sort(np.asarray(a, dtype=float))
    b = np.sort(np.asarray(b, dtype=float))
    grid = np.concatenate([a, b])
    fa = np.searchsorted(a, grid, side="right") / a.size
    fb = np.searchsorted(b, grid, side="right") / b.size
    fa_c = fa - fa.mean()
    return float(fa_c @ (fb - fb.mean()) / (fa_c @ fa_c))


def default_statistics(model):
    first, second = model.factor_names

    def rate_total(state):
        return float(model.rates(state).sum())

    return {
        f"{first}[0,0]": lambda s: float(getattr(s, first)[0, 0]),
        f"{second}[0,0]": lambda s: float(getattr(s, second)[0, 0]),
        f"mean {first}": lambda s: float(getattr(s, first).mean()),
        "total rate": rate_total,
    }


def geweke_test(model, shape, n_rounds, rng, statistics=None, alpha=None):
    """Run both simulators and return ``{name: (forward, successive)}``.

    With ``alpha`` set, the successive simulator also carries the
    privatization latents: data are privatized counts, and each round runs
    the noise-inversion sweep before the factor update.
    """
    statistics = statistics or default_statistics(model)
    forward = {k: np.empty(n_rounds) for k in statistics}
    successive = {k: np.empty(n_rounds) for k in statistics}

    for t in range(n_rounds):
        state = model.sample_prior(shape, rng)
        for k, f in statistics.items():
            forward[k][t] = f(state)

    state = model.sample_prior(shape, rng)
    if alpha is not None:
        rate = noise_rate(alpha)
        y = rng.poisson(model.rates(state))
        lam_p = rng.exponential(1.0 / rate, size=shape)
        lam_m = rng.exponential(1.0 / rate, size=shape)
    for t in range(n_rounds):
        mu = model.rates(state)
        if alpha is None:
            y = rng.poisson(mu)
        else:
            # y and the noise rates are latent here; draw the privatized data
            # given them, then invert the noise given the model rates.
            g_p = rng.poisson(lam_p)
            g_m = rng.poisson(lam_m)
            y_tilde = y + g_p - g_m
            aux = EntryAuxState(lam_p.ravel(), lam_m.ravel(), g_m.ravel(), g_p.ravel(),
                                y.ravel(), (y + g_p).ravel())
            aux = entry_gibbs_sweep(y_tilde.ravel(), mu.ravel(), aux, alpha, rng)
            y = aux.y_true.reshape(shape)
            lam_p = aux.lambda_plus.reshape(shape)
            lam_m = aux.lambda_minus.reshape(shape)
        allocation = model.allocate(state, y, rng)
        state = model.update(state, allocation, rng)
        for k, f in statistics.items():
            successive[k][t] = f(state)
    return {k: (forward[k], successive[k]) for k in statistics}
