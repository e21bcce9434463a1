"""Log-PMFs and samplers for the distributions used by the private sampler.

Everything here is vectorized over numpy arrays and takes an explicit
``numpy.random.Generator``; nothing keeps global state.

The non-standard members are

* the two-sided geometric distribution ``2Geo(alpha)``, with PMF
  ``(1 - alpha) / (1 + alpha) * alpha**|tau|`` on the integers;
* the Skellam distribution, the law of the difference of two independent
  Poisson variables;
* the Bessel distribution ``Bes(v, a)`` on ``{0, 1, ...}`` with PMF
  ``(a/2)**(2m + v) / (I_v(a) m! (m + v)!)``.  It is the law of the smaller
  of two independent Poisson variables ``Pois(l1)``, ``Pois(l2)`` given
  that their difference is ``v`` in absolute value, with ``a = 2 sqrt(l1 l2)``.

Gamma variables are parameterized by shape and *rate* throughout.
"""

from dataclasses import dataclass

import numpy as np
from scipy import special, stats

from privpf.exceptions import DomainError

__all__ = [
    "log_bessel_i",
    "two_sided_geometric_log_pmf",
    "two_sided_geometric_sample",
    "skellam_log_pmf",
    "skellam_sample",
    "bessel_log_pmf",
    "bessel_sample",
    "bessel_mode",
    "poisson_log_pmf",
    "poisson_sample",
    "gamma_log_pdf",
    "gamma_sample",
    "exponential_log_pdf",
    "exponential_sample",
    "binomial_log_pmf",
    "binomial_sample",
    "multinomial_log_pmf",
    "multinomial_sample",
    "TwoSidedGeometric",
    "Skellam",
    "Bessel",
]

# Scale at which the Bessel sampler switches from inverse-CDF to rejection.
BESSEL_REJECTION_SCALE = 20.0

# ive() results below this are too close to underflow to trust in log-space.
_IVE_FLOOR = 1e-280


def _as_float(x):
    return np.asarray(x, dtype=float)


def _check_alpha(alpha):
    alpha = _as_float(alpha)
    if np.any(~((alpha > 0) & (alpha < 1))):
        raise DomainError(f"alpha must lie strictly inside (0, 1), got {alpha}")
    return alpha


def _check_nonnegative(name, x):
    x = _as_float(x)
    if np.any(~(x >= 0)):
        raise DomainError(f"{name} must be nonnegative, got {x}")
    return x


def _check_positive(name, x):
    x = _as_float(x)
    if np.any(~(x > 0)):
        raise DomainError(f"{name} must be positive, got {x}")
    return x


def _scalarize(x):
    x = np.asarray(x)
    return x[()] if x.ndim == 0 else x


# ---------------------------------------------------------------------------
# modified Bessel function of the first kind
# ---------------------------------------------------------------------------


def _log_bessel_i_series(v, x):
    """log I_v(x) from the ascending series, summed in log-space.

    The series terms are unimodal in m; the sum is taken over a window around
    the largest term wide enough that the dropped tails are below 1e-40
    relative.
    """
    half_log = np.log(x / 2.0)
    mode = int(np.floor((np.sqrt(x * x + v * v) - v) / 2.0))
    width = int(60 + 25 * np.sqrt(mode + 1.0))
    m = np.arange(max(0, mode - width), mode + width + 1, dtype=float)
    terms = (2.0 * m + v) * half_log - special.gammaln(m + 1.0) - special.gammaln(m + v + 1.0)
    return float(special.logsumexp(terms))


def log_bessel_i(order, x):
    """Natural log of the modified Bessel function of the first kind.

    Uses the exponentially scaled ``scipy.special.ive`` where its result is
    comfortably representable and falls back to the log-space ascending
    series where it underflows (large order relative to ``x``).
    """
    v, x = np.broadcast_arrays(_as_float(order), _as_float(x))
    if np.any(v < 0):
        raise DomainError("Bessel order must be nonnegative")
    if np.any(~(x >= 0)):
        raise DomainError("Bessel argument must be nonnegative")
    out = np.empty(v.shape)
    with np.errstate(all="ignore"):
        scaled = special.ive(v, x)
    good = np.isfinite(scaled) & (scaled > _IVE_FLOOR) & (x > 0)
    out[good] = np.log(scaled[good]) + x[good]
    zero = x == 0
    out[zero] = np.where(v[zero] == 0, 0.0, -np.inf)
    flat = out.reshape(-1)
    for i in np.flatnonzero(~good & ~zero):
        flat[i] = _log_bessel_i_series(v.flat[i], x.flat[i])
    return _scalarize(out)


# ---------------------------------------------------------------------------
# two-sided geometric
# ---------------------------------------------------------------------------


def two_sided_geometric_log_pmf(tau, alpha):
    alpha = _check_alpha(alpha)
    tau = np.asarray(tau)
    out = np.log1p(-alpha) - np.log1p(alpha) + np.abs(tau) * np.log(alpha)
    return _scalarize(out)


def two_sided_geometric_sample(alpha, rng, size=None):
    """Draw ``2Geo(alpha)`` noise as the difference of two i.i.d. geometrics.

    Each geometric counts failures before the first success with success
    probability ``1 - alpha``, so its PMF is ``(1 - alpha) alpha**k``.
    """
    alpha = _check_alpha(alpha)
    p = 1.0 - alpha
    return rng.geometric(p, size=size) - rng.geometric(p, size=size)


# ---------------------------------------------------------------------------
# Skellam
# ---------------------------------------------------------------------------


def skellam_log_pmf(tau, rate_plus, rate_minus):
    """Log-PMF of ``tau = g_plus - g_minus`` with ``g_* ~ Pois(rate_*)``.

    One-sided cases reduce exactly to a (reflected) Poisson log-PMF, and two
    zero rates give a point mass at zero.
    """
    lp = _check_nonnegative("rate_plus", rate_plus)
    lm = _check_nonnegative("rate_minus", rate_minus)
    tau, lp, lm = np.broadcast_arrays(np.asarray(tau), lp, lm)
    out = np.empty(tau.shape)

    both = (lp > 0) & (lm > 0)
    if np.any(both):
        t, a, b = tau[both], lp[both], lm[both]
        out[both] = (
            -(a + b)
            + 0.5 * t * (np.log(a) - np.log(b))
            + log_bessel_i(np.abs(t), 2.0 * np.sqrt(a * b))
        )
    only_plus = (lp > 0) & (lm == 0)
    out[only_plus] = stats.poisson.logpmf(tau[only_plus], lp[only_plus])
    only_minus = (lp == 0) & (lm > 0)
    out[only_minus] = stats.poisson.logpmf(-tau[only_minus], lm[only_minus])
    neither = (lp == 0) & (lm == 0)
    out[neither] = np.where(tau[neither] == 0, 0.0, -np.inf)
    return _scalarize(out)


def skellam_sample(rate_plus, rate_minus, rng, size=None):
    lp = _check_nonnegative("rate_plus", rate_plus)
    lm = _check_nonnegative("rate_minus", rate_minus)
    return rng.poisson(lp, size=size) - rng.poisson(lm, size=size)


# ---------------------------------------------------------------------------
# Bessel
# ---------------------------------------------------------------------------


def _bessel_log_unnormalized(m, v, a):
    return (2.0 * m + v) * np.log(a / 2.0) - special.gammaln(m + 1.0) - special.gammaln(m + v + 1.0)


def bessel_mode(order, scale):
    """Mode of ``Bes(order, scale)``: ``floor((sqrt(a^2 + v^2) - v) / 2)``."""
    v = _as_float(order)
    a = _as_float(scale)
    return _scalarize(np.floor((np.sqrt(a * a + v * v) - v) / 2.0).astype(np.int64))


def bessel_log_pmf(m, order, scale):
    v = _check_nonnegative("order", order)
    a = _check_nonnegative("scale", scale)
    m, v, a = np.broadcast_arrays(np.asarray(m), v, a)
    out = np.full(m.shape, -np.inf)
    pos = (a > 0) & (m >= 0)
    if np.any(pos):
        mm, vv, aa = m[pos].astype(float), v[pos], a[pos]
        out[pos] = _bessel_log_unnormalized(mm, vv, aa) - log_bessel_i(vv, aa)
    out[(a == 0) & (m == 0)] = 0.0
    return _scalarize(out)


def _bessel_inverse_cdf(v, a, rng):
    """Sequential inverse-CDF search from m = 0; used for small scales."""
    n = v.size
    out = np.zeros(n, dtype=np.int64)
    u = rng.random(n)
    log_half = np.log(a / 2.0)
    p = np.exp(v * log_half - special.gammaln(v + 1.0) - log_bessel_i(v, a))
    cdf = p.copy()
    idx = np.flatnonzero(u > cdf)
    p, cdf, u, vv, ratio_num = p[idx], cdf[idx], u[idx], v[idx], np.exp(2.0 * log_half[idx])
    mode = bessel_mode(vv, a[idx])
    stalled = []
    k = 0
    while idx.size:
        k += 1
        p = p * ratio_num / (k * (k + vv))
        cdf = cdf + p
        done = u <= cdf
        out[idx[done]] = k
        # Past the mode with negligible mass left: u fell in the rounding gap
        # between the float CDF and 1. Resample those exactly by rejection.
        stuck = ~done & (k > mode) & (p < 1e-18)
        if np.any(stuck):
            stalled.append(idx[stuck])
        keep = ~done & ~stuck
        idx, p, cdf, u, vv, ratio_num, mode = (
            idx[keep], p[keep], cdf[keep], u[keep], vv[keep], ratio_num[keep], mode[keep])
    if stalled:
        rest = np.concatenate(stalled)
        out[rest] = _bessel_rejection(v[rest], a[rest], rng)
    return out


def _bessel_rejection(v, a, rng):
    """Exact rejection sampler for the (log-concave) Bessel distribution.

    The envelope is flat over a window of roughly one standard deviation on
    each side of the mode and geometric beyond it, with the geometric ratio
    taken from the PMF ratio at the window edge.  Log-concavity makes this a
    valid upper bound, and the expected number of trials stays bounded as the
    scale grows.
    """
    n = v.size
    out = np.zeros(n, dtype=np.int64)
    mode = bessel_mode(v, a).astype(float)
    var = 1.0 / (1.0 / (mode + 1.0) + 1.0 / (mode + v + 1.0))
    t = np.maximum(2.0, np.ceil(np.sqrt(var)))
    right = mode + t
    left = mode - t

    def logq(m, sel):
        return _bessel_log_unnormalized(m, v[sel], a[sel])

    allsel = np.arange(n)
    top = np.maximum.reduce([
        logq(np.maximum(mode - 1.0, 0.0), allsel), logq(mode, allsel), logq(mode + 1.0, allsel)])
    log_qr = logq(right, allsel)
    log_rho = logq(right + 1.0, allsel) - log_qr
    has_left = left >= 1.0
    left_c = np.where(has_left, left, 1.0)
    log_ql = logq(left_c, allsel)
    log_kappa = logq(left_c - 1.0, allsel) - log_ql
    lo = np.where(has_left, left + 1.0, 0.0)
    width = right - lo
    w_center = width
    w_right = np.exp(log_qr - top) / -np.expm1(log_rho)
    w_left = np.where(has_left, np.exp(log_ql - top) / -np.expm1(log_kappa), 0.0)
    total = w_center + w_right + w_left

    pending = np.arange(n)
    while pending.size:
        k = pending.size
        pick = rng.random(k) * total[pending]
        cand = np.empty(k)
        log_env = np.empty(k)

        in_c = pick < w_center[pending]
        in_r = ~in_c & (pick < w_center[pending] + w_right[pending])
        in_l = ~in_c & ~in_r

        s = pending[in_c]
        cand[in_c] = lo[s] + np.floor(rng.random(s.size) * width[s])
        log_env[in_c] = top[s]

        s = pending[in_r]
        steps = rng.geometric(-np.expm1(log_rho[s])) - 1
        cand[in_r] = right[s] + steps
        log_env[in_r] = log_qr[s] + steps * log_rho[s]

        s = pending[in_l]
        steps = rng.geometric(-np.expm1(log_kappa[s])) - 1
        cand[in_l] = left_c[s] - steps
        log_env[in_l] = log_ql[s] + steps * log_kappa[s]

        ok = cand >= 0
        log_target = np.full(k, -np.inf)
        log_target[ok] = logq(cand[ok], pending[ok])
        accept = np.log(rng.random(k)) <= log_target - log_env
        out[pending[accept]] = cand[accept].astype(np.int64)
        pending = pending[~accept]
    return out


def bessel_sample(order, scale, rng, size=None):
    """Exact draws from ``Bes(order, scale)``.

    Scales below ``BESSEL_REJECTION_SCALE`` use inverse-CDF search; larger
    scales use rejection sampling with bounded expected cost.  ``scale == 0``
    is a point mass at zero.
    """
    v = _check_nonnegative("order", order)
    a = _check_nonnegative("scale", scale)
    if size is None:
        shape = np.broadcast(v, a).shape
    else:
        shape = (size,) if np.isscalar(size) else tuple(size)
    v = np.broadcast_to(v, shape).ravel().astype(float)
    a = np.broadcast_to(a, shape).ravel().astype(float)
    out = np.zeros(v.size, dtype=np.int64)
    small = (a > 0) & (a < BESSEL_REJECTION_SCALE)
    if np.any(small):
        out[small] = _bessel_inverse_cdf(v[small], a[small], rng)
    large = a >= BESSEL_REJECTION_SCALE
    if np.any(large):
        out[large] = _bessel_rejection(v[large], a[large], rng)
    return _scalarize(out.reshape(shape))


# ---------------------------------------------------------------------------
# standard distributions
# ---------------------------------------------------------------------------


def poisson_log_pmf(k, rate):
    rate = _check_nonnegative("rate", rate)
    return _scalarize(stats.poisson.logpmf(k, rate))


def poisson_sample(rate, rng, size=None):
    return rng.poisson(_check_nonnegative("rate", rate), size=size)


def gamma_log_pdf(x, shape, rate):
    shape = _check_positive("shape", shape)
    rate = _check_positive("rate", rate)
    return _scalarize(stats.gamma.logpdf(x, shape, scale=1.0 / rate))


def gamma_sample(shape, rate, rng, size=None):
    shape = _check_positive("shape", shape)
    rate = _check_positive("rate", rate)
    return rng.gamma(shape, 1.0 / rate, size=size)


def exponential_log_pdf(x, rate):
    rate = _check_positive("rate", rate)
    return _scalarize(stats.expon.logpdf(x, scale=1.0 / rate))


def exponential_sample(rate, rng, size=None):
    rate = _check_positive("rate", rate)
    return rng.exponential(1.0 / rate, size=size)


def _check_probability(p):
    p = _as_float(p)
    if np.any(~((p >= 0) & (p <= 1))):
        raise DomainError(f"probabilities must lie in [0, 1], got {p}")
    return p


def binomial_log_pmf(k, n, p):
    p = _check_probability(p)
    return _scalarize(stats.binom.logpmf(k, n, p))


def binomial_sample(n, p, rng, size=None):
    n = np.asarray(n)
    if np.any(n < 0):
        raise DomainError("binomial trial count must be nonnegative")
    return rng.binomial(n, _check_probability(p), size=size)


def multinomial_log_pmf(x, p):
    p = _check_probability(p)
    x = np.asarray(x)
    return _scalarize(stats.multinomial.logpmf(x, x.sum(axis=-1), p))


def multinomial_sample(n, weights, rng):
    """Vectorized multinomial draws.

    ``weights`` has shape ``(..., K)`` and need only be proportional to the
    category probabilities; ``n`` broadcasts against ``weights[..., 0]``.
    Every returned row sums to its ``n`` exactly.
    """
    w = _as_float(weights)
    if np.any(~(w >= 0)):
        raise DomainError("multinomial weights must be nonnegative")
    n = np.broadcast_to(np.asarray(n, dtype=np.int64), w.shape[:-1])
    if np.any(n < 0):
        raise DomainError("multinomial totals must be nonnegative")
    total = w.sum(axis=-1, keepdims=True)
    if np.any((total[..., 0] <= 0) & (n > 0)):
        raise DomainError("positive count assigned to an all-zero weight vector")
    with np.errstate(invalid="ignore", divide="ignore"):
        p = np.where(total > 0, w / total, 1.0 / w.shape[-1])
    if w.shape[-1] == 1 or n.size == 0:
        return np.broadcast_to(n[..., None], w.shape).astype(np.int64)
    return rng.multinomial(n, p)


# ---------------------------------------------------------------------------
# frozen parameter objects
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class TwoSidedGeometric:
    alpha: float

    def __post_init__(self):
        _check_alpha(self.alpha)

    def log_pmf(self, tau):
        return two_sided_geometric_log_pmf(tau, self.alpha)

    def sample(self, rng, size=None):
        return two_sided_geometric_sample(self.alpha, rng, size)


@dataclass(frozen=True)
class Skellam:
    rate_plus: float
    rate_minus: float

    def __post_init__(self):
        _check_nonnegative("rate_plus", self.rate_plus)
        _check_nonnegative("rate_minus", self.rate_minus)

    def log_pmf(self, tau):
        return skellam_log_pmf(tau, self.rate_plus, self.rate_minus)

    def sample(self, rng, size=None):
        return skellam_sample(self.rate_plus, self.rate_minus, rng, size)


@dataclass(frozen=True)
class Bessel:
    order: int
    scale: float

    def __post_init__(self):
        if int(self.order) != self.order or self.order < 0:
            raise DomainError(f"Bessel order must be a nonnegative integer, got {self.order}")
        _check_nonnegative("scale", self.scale)

    def log_pmf(self, m):
        return bessel_log_pmf(m, self.order, self.scale)

    def sample(self, rng, size=None):
        return bessel_sample(self.order, self.scale, rng, size)
