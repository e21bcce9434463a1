"""Gamma-Poisson factorization models: a topic model and a mixed-membership
stochastic block model.

Both share the same interface so the sampler can treat them alike:

* ``sample_prior(shape, rng)`` draws factors from their gamma priors;
* ``rates(state)`` gives the full Poisson rate matrix;
* ``allocate(state, counts, rng, mask)`` splits every observed count over the
  latent components in proportion to their share of the rate;
* ``update(state, allocation, rng, mask)`` redraws the factors from their
  conditionally conjugate gamma posteriors;
* ``generate(shape, rng)`` draws true factors and a count matrix from them.

Gamma distributions are shape-rate throughout.
"""

from dataclasses import dataclass

import numpy as np
from scipy import special

from privpf.counts import CountMatrix
from privpf.distributions import multinomial_sample
from privpf.exceptions import DomainError, ImpossibleStateError

_TINY = np.finfo(float).tiny


def _gamma(shape, rate, rng):
    # Tiny shapes can underflow to exactly 0; keep factors strictly positive.
    return np.maximum(rng.gamma(shape, 1.0 / rate), _TINY)


def _gamma_logpdf(x, shape, rate):
    return shape * np.log(rate) - special.gammaln(shape) + (shape - 1.0) * np.log(x) - rate * x


@dataclass
class MaskSpec:
    """Held-out cells, as a boolean matrix (True = held out)."""

    held_out: np.ndarray

    def __post_init__(self):
        self.held_out = np.asarray(self.held_out, dtype=bool)
        if self.held_out.ndim != 2:
            raise DomainError("mask must be 2-d")

    @classmethod
    def empty(cls, shape):
        return cls(np.zeros(shape, dtype=bool))

    @classmethod
    def from_cells(cls, shape, rows, cols):
        held = np.zeros(shape, dtype=bool)
        held[np.asarray(rows, dtype=np.int64), np.asarray(cols, dtype=np.int64)] = True
        return cls(held)

    @property
    def shape(self):
        return self.held_out.shape

    @property
    def observed(self):
        return ~self.held_out

    def cells(self):
        """Held-out ``(rows, cols)`` index arrays, row-major."""
        return np.nonzero(self.held_out)

    def __len__(self):
        return int(self.held_out.sum())


@dataclass
class Allocation:
    """Latent sub-counts for the nonzero observed cells.

    ``subcounts[n]`` holds the split of the count at ``(rows[n], cols[n])``;
    its trailing shape is ``(K,)`` for the topic model and ``(C, C)`` for the
    block model.
    """

    rows: np.ndarray
    cols: np.ndarray
    subcounts: np.ndarray
    shape: tuple

    def totals(self):
        return self.subcounts.reshape(self.subcounts.shape[0], -1).sum(axis=1)


def _observed_weights(shape, mask):
    if mask is None:
        return np.ones(shape)
    if mask.shape != tuple(shape):
        raise DomainError(f"mask shape {mask.shape} does not match data shape {shape}")
    return mask.observed.astype(float)


def _scatter_rows(index, values, n):
    """``out[index[j]] += values[j]`` for 2-d ``values``; unbuffered, like ``np.add.at``."""
    k = values.shape[1]
    flat = (index[:, None] * k + np.arange(k)).ravel()
    return np.bincount(flat, weights=values.ravel(), minlength=n * k).reshape(n, k)


def _nonzero_cells(counts, weights):
    counts = np.asarray(counts)
    if np.any(counts < 0):
        raise DomainError("counts must be nonnegative")
    return np.nonzero((counts > 0) & (weights > 0))


@dataclass
class GapTopicState:
    theta: np.ndarray  # D x K document-topic
    phi: np.ndarray    # K x V topic-word

    def arrays(self):
        return {"theta": self.theta, "phi": self.phi}


@dataclass
class MmsbState:
    theta: np.ndarray  # V x C actor-community
    pi: np.ndarray     # C x C community interaction

    def arrays(self):
        return {"theta": self.theta, "pi": self.pi}


class GammaPoissonTopicModel:
    """``y_dv ~ Pois(sum_k theta_dk phi_kv)`` with i.i.d. Gamma(a0, b0) factors."""

    name = "topic"
    factor_names = ("theta", "phi")

    def __init__(self, n_topics, a0=0.1, b0=1.0):
        if n_topics < 1 or a0 <= 0 or b0 <= 0:
            raise DomainError("need n_topics >= 1 and positive a0, b0")
        self.n_topics = int(n_topics)
        self.a0 = float(a0)
        self.b0 = float(b0)

    def config(self):
        return {"model": self.name, "n_components": self.n_topics, "a0": self.a0, "b0": self.b0}

    def state_from_arrays(self, arrays):
        return GapTopicState(np.asarray(arrays["theta"], float), np.asarray(arrays["phi"], float))

    def sample_prior(self, shape, rng):
        n_docs, n_words = shape
        k = self.n_topics
        return GapTopicState(_gamma(self.a0, self.b0 * np.ones((n_docs, k)), rng),
                             _gamma(self.a0, self.b0 * np.ones((k, n_words)), rng))

    def rates(self, state):
        return state.theta @ state.phi

    def rate(self, state, d, v):
        return float(state.theta[d] @ state.phi[:, v])

    def allocate(self, state, counts, rng, mask=None):
        counts = np.asarray(counts)
        weights = _observed_weights(counts.shape, mask)
        r, c = _nonzero_cells(counts, weights)
        comp = state.theta[r] * state.phi[:, c].T
        if np.any((comp.sum(axis=1) <= 0)):
            raise ImpossibleStateError("positive count in a cell with zero rate")
        sub = multinomial_sample(counts[r, c], comp, rng)
        return Allocation(r, c, sub, counts.shape)

    def update(self, state, allocation, rng, mask=None):
        n_docs, n_words = allocation.shape
        k = self.n_topics
        weights = _observed_weights(allocation.shape, mask)
        doc_topic = _scatter_rows(allocation.rows, allocation.subcounts, n_docs)
        topic_word = _scatter_rows(allocation.cols, allocation.subcounts, n_words).T

        theta = _gamma(self.a0 + doc_topic, self.b0 + weights @ state.phi.T, rng)
        phi = _gamma(self.a0 + topic_word, self.b0 + theta.T @ weights, rng)
        return GapTopicState(theta, phi)

    def log_prior(self, state):
        return float(_gamma_logpdf(state.theta, self.a0, self.b0).sum()
                     + _gamma_logpdf(state.phi, self.a0, self.b0).sum())

    def generate(self, shape, rng):
        state = self.sample_prior(shape, rng)
        return state, CountMatrix.from_dense(rng.poisson(self.rates(state)))


class MixedMembershipBlockModel:
    """``y_ij ~ Pois(sum_cd theta_ic theta_jd pi_cd)`` with Gamma(a0, b0) factors.

    With ``include_diagonal=False`` self-interactions are treated as
    unobserved.  When they are included, the self-interaction cell makes an
    actor's conditional non-conjugate (it is quadratic in that actor's
    memberships), so the actor's update is a Metropolis-Hastings step whose
    proposal is the gamma obtained by charging the diagonal cell's rate
    ``theta_i' Pi theta_i`` linearly as ``sum_c theta_ic h_c`` with
    ``h_c = sum_d theta_id (pi_cd + pi_dc) / 2`` at the current value.  Off the
    diagonal the update is exact Gibbs.
    """

    name = "mmsb"
    factor_names = ("theta", "pi")

    def __init__(self, n_communities, a0=0.1, b0=1.0, include_diagonal=True):
        if n_communities < 1 or a0 <= 0 or b0 <= 0:
            raise DomainError("need n_communities >= 1 and positive a0, b0")
        self.n_communities = int(n_communities)
        self.a0 = float(a0)
        self.b0 = float(b0)
        self.include_diagonal = bool(include_diagonal)
        self.mh_proposals = 0
        self.mh_accepts = 0

    def config(self):
        return {"model": self.name, "n_components": self.n_communities, "a0": self.a0,
                "b0": self.b0, "include_diagonal": self.include_diagonal}

    def state_from_arrays(self, arrays):
        return MmsbState(np.asarray(arrays["theta"], float), np.asarray(arrays["pi"], float))

    def _weights(self, shape, mask):
        if shape[0] != shape[1]:
            raise DomainError("block model needs a square matrix")
        w = _observed_weights(shape, mask)
        if not self.include_diagonal:
            w = w.copy()
            np.fill_diagonal(w, 0.0)
        return w

    def sample_prior(self, shape, rng):
        n_actors = shape[0]
        c = self.n_communities
        return MmsbState(_gamma(self.a0, self.b0 * np.ones((n_actors, c)), rng),
                         _gamma(self.a0, self.b0 * np.ones((c, c)), rng))

    def rates(self, state):
        return state.theta @ state.pi @ state.theta.T

    def rate(self, state, i, j):
        return float(state.theta[i] @ state.pi @ state.theta[j])

    def allocate(self, state, counts, rng, mask=None):
        counts = np.asarray(counts)
        weights = self._weights(counts.shape, mask)
        r, c = _nonzero_cells(counts, weights)
        c2 = self.n_communities
        comp = state.theta[r, :, None] * state.theta[c, None, :] * state.pi[None]
        comp = comp.reshape(r.size, c2 * c2)
        if np.any(comp.sum(axis=1) <= 0):
            raise ImpossibleStateError("positive count in a cell with zero rate")
        sub = multinomial_sample(counts[r, c], comp, rng).reshape(r.size, c2, c2)
        return Allocation(r, c, sub, counts.shape)

    def update(self, state, allocation, rng, mask=None):
        n_actors = allocation.shape[0]
        c2 = self.n_communities
        weights = self._weights(allocation.shape, mask)
        w_diag = np.diag(weights).copy()
        pi = state.pi
        sym = 0.5 * (pi + pi.T)

        r, c, sub = allocation.rows, allocation.cols, allocation.subcounts
        # sender-side plus receiver-side sub-counts per actor and community
        counts_i = (_scatter_rows(r, sub.sum(axis=2), n_actors)
                    + _scatter_rows(c, sub.sum(axis=1), n_actors))
        shape_i = self.a0 + counts_i
        # Unit-rate gamma draws and MH uniforms for every actor, drawn up front.
        unit = rng.standard_gamma(shape_i)
        log_u = np.log(rng.random(n_actors))

        theta = state.theta.copy()
        send = theta @ pi.T  # send[j, c] = sum_d theta_jd pi_cd
        recv = theta @ pi    # recv[j, c] = sum_d theta_jd pi_dc
        for i in range(n_actors):
            w_ii = weights[i, i]
            lin = (self.b0 + weights[i] @ send - w_ii * send[i]
                   + weights[:, i] @ recv - w_ii * recv[i])
            if w_diag[i] == 0:
                new = np.maximum(unit[i] / lin, _TINY)
            else:
                new = self._mh_actor(theta[i], unit[i], shape_i[i], lin, w_ii, pi, sym, log_u[i])
            theta[i] = new
            send[i] = pi @ new
            recv[i] = new @ pi

        pair_counts = sub.sum(axis=0) if sub.size else np.zeros((c2, c2))
        new_pi = _gamma(self.a0 + pair_counts, self.b0 + theta.T @ weights @ theta, rng)
        return MmsbState(theta, new_pi)

    def _mh_actor(self, current, unit, shape, lin, w_ii, pi, sym, log_u):
        """Independence-style MH step for one actor with a self-interaction cell.

        The ``(shape - 1) log theta`` terms of target and proposal cancel in
        the acceptance ratio, as do the gamma normalizers.
        """
        rate_fwd = lin + w_ii * (sym @ current)
        cand = np.maximum(unit / rate_fwd, _TINY)
        rate_bwd = lin + w_ii * (sym @ cand)
        log_ratio = (-lin @ (cand - current)
                     - w_ii * (cand @ pi @ cand - current @ pi @ current)
                     + shape @ (np.log(rate_bwd) - np.log(rate_fwd))
                     - rate_bwd @ current + rate_fwd @ cand)
        self.mh_proposals += 1
        if log_u < log_ratio:
            self.mh_accepts += 1
            return cand
        return current

    def log_prior(self, state):
        return float(_gamma_logpdf(state.theta, self.a0, self.b0).sum()
                     + _gamma_logpdf(state.pi, self.a0, self.b0).sum())

    def generate(self, shape, rng):
        if np.isscalar(shape):
            shape = (shape, shape)
        state = self.sample_prior(shape, rng)
        return state, CountMatrix.from_dense(rng.poisson(self.rates(state)))


def make_model(name, n_components, a0=0.1, b0=1.0, **kwargs):
    if name == "topic":
        return GammaPoissonTopicModel(n_components, a0, b0)
    if name == "mmsb":
        return MixedMembershipBlockModel(n_components, a0, b0, **kwargs)
    raise DomainError(f"unknown model {name!r}; expected 'topic' or 'mmsb'")
