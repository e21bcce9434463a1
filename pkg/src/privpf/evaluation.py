"""Reconstruction and topic-quality metrics."""

import itertools
import logging
from dataclasses import dataclass

import numpy as np
from scipy import sparse

from privpf.counts import CountMatrix
from privpf.exceptions import DomainError
from privpf.models import MaskSpec

log = logging.getLogger(__name__)


def _dense(y):
    return y.to_dense() if isinstance(y, CountMatrix) else np.asarray(y)


def _cell_index(cells, shape):
    if cells is None:
        return np.unravel_index(np.arange(shape[0] * shape[1]), shape)
    if isinstance(cells, MaskSpec):
        return cells.cells()
    rows, cols = cells
    return np.asarray(rows, dtype=np.int64), np.asarray(cols, dtype=np.int64)


def mae(mu_hat, y_true, cells=None):
    """Mean absolute error of estimated rates against true counts.

    ``cells`` is ``None`` (every cell), a ``(rows, cols)`` pair, or a
    :class:`MaskSpec` whose held-out cells are scored.
    """
    mu_hat = np.asarray(mu_hat, dtype=float)
    y = _dense(y_true)
    if mu_hat.shape != y.shape:
        raise DomainError(f"shape mismatch: {mu_hat.shape} vs {y.shape}")
    rows, cols = _cell_index(cells, y.shape)
    if rows.size == 0:
        raise DomainError("MAE over an empty cell set")
    if np.any((rows < 0) | (rows >= y.shape[0]) | (cols < 0) | (cols >= y.shape[1])):
        raise DomainError("cell index out of bounds")
    return float(np.mean(np.abs(mu_hat[rows, cols] - y[rows, cols])))


def heldout_mask_top_senders(counts, top_k):
    """Hold out every cell whose sender is among the ``top_k`` largest row
    sums or whose recipient is among the ``top_k`` largest column sums.

    Ties in the sums go to the lower index.
    """
    y = _dense(counts)
    if top_k < 0 or top_k > min(y.shape):
        raise DomainError(f"top_k must lie in [0, {min(y.shape)}]")
    held = np.zeros(y.shape, dtype=bool)
    if top_k:
        senders = np.argsort(-y.sum(axis=1), kind="stable")[:top_k]
        recipients = np.argsort(-y.sum(axis=0), kind="stable")[:top_k]
        held[senders, :] = True
        held[:, recipients] = True
    return MaskSpec(held)


@dataclass
class TopicTopWords:
    """Indices of the highest-weight words per topic, in descending weight."""

    indices: np.ndarray  # K x n_top

    @classmethod
    def from_phi(cls, phi, n_top=10):
        phi = np.asarray(phi, dtype=float)
        if phi.shape[1] < n_top:
            raise DomainError(f"vocabulary of {phi.shape[1]} words is smaller than n_top={n_top}")
        # stable sort on -phi: among equal weights the lower index comes first
        return cls(np.argsort(-phi, axis=1, kind="stable")[:, :n_top])


class _DocumentFrequencies:
    """Document (co-)occurrence counts over a reference count matrix."""

    def __init__(self, reference):
        if isinstance(reference, CountMatrix):
            ref = reference.sorted()
            present = sparse.csc_matrix(
                (np.ones(ref.counts.size), (ref.rows, ref.cols)), shape=ref.shape)
        else:
            present = sparse.csc_matrix((np.asarray(reference) > 0).astype(float))
        self.present = present
        self.n_docs = present.shape[0]
        self.df = np.asarray(present.sum(axis=0)).ravel()

    def co_occurrence(self, words):
        cols = self.present[:, words]
        return (cols.T @ cols).toarray()


def _npmi_pairs(co, df, n_docs):
    """NPMI for every pair in a topic's word list (upper triangle)."""
    values = []
    for i, j in itertools.combinations(range(len(df)), 2):
        if df[i] == 0 or df[j] == 0:
            # no reference evidence for one of the words
            values.append(-1.0)
            continue
        p_joint = (co[i, j] + 1.0) / (n_docs + 1.0)
        if p_joint >= 1.0:
            values.append(1.0)
            continue
        pmi = np.log(p_joint) - np.log(df[i] / n_docs) - np.log(df[j] / n_docs)
        values.append(float(np.clip(pmi / -np.log(p_joint), -1.0, 1.0)))
    return np.array(values)


def npmi(top_words, reference):
    """Per-topic mean NPMI of the top-word pairs and their average over topics.

    Probabilities are document-level: ``p(v) = D(v) / D`` and the joint uses
    add-one smoothing, ``p(v, w) = (D(v, w) + 1) / (D + 1)``.  Pairs with a
    word that never occurs in the reference score -1.
    """
    freqs = reference if isinstance(reference, _DocumentFrequencies) else _DocumentFrequencies(reference)
    per_topic = []
    for words in top_words.indices:
        co = freqs.co_occurrence(words)
        per_topic.append(_npmi_pairs(co, freqs.df[words], freqs.n_docs).mean())
    per_topic = np.array(per_topic)
    return per_topic, float(per_topic.mean())


def coherence(top_words, reference):
    """Per-topic coherence and its mean over topics.

    For words ordered by descending weight, sums
    ``log((D(v_m, v_l) + 1) / D(v_l))`` over all ``l < m``.  Terms whose
    conditioning word has zero document frequency are skipped.
    """
    freqs = reference if isinstance(reference, _DocumentFrequencies) else _DocumentFrequencies(reference)
    per_topic = []
    for words in top_words.indices:
        co = freqs.co_occurrence(words)
        df = freqs.df[words]
        total = 0.0
        for m in range(1, len(words)):
            for l in range(m):
                if df[l] == 0:
                    log.warning("word %d has zero document frequency; coherence term skipped",
                                words[l])
                    continue
                total += np.log((co[m, l] + 1.0) / df[l])
        per_topic.append(total)
    per_topic = np.array(per_topic)
    return per_topic, float(per_topic.mean())


def topic_quality(trace, reference, n_top=10):
    """NPMI and coherence of every saved topic sample, averaged over samples.

    Returns ``{"npmi": (per_topic, mean), "coherence": (per_topic, mean)}``.
    """
    freqs = _DocumentFrequencies(reference)
    phis = trace.samples["phi"]
    npmi_rows, coh_rows = [], []
    for phi in phis:
        top = TopicTopWords.from_phi(phi, n_top)
        npmi_rows.append(npmi(top, freqs)[0])
        coh_rows.append(coherence(top, freqs)[0])
    npmi_topic = np.mean(npmi_rows, axis=0)
    coh_topic = np.mean(coh_rows, axis=0)
    return {"npmi": (npmi_topic, float(npmi_topic.mean())),
            "coherence": (coh_topic, float(coh_topic.mean()))}


def block_structure_table(matrices):
    """Long-format ``(name, row, col, value)`` records for heatmap plotting."""
    records = []
    for name, mat in matrices.items():
        mat = _dense(mat)
        for (i, j), value in np.ndenumerate(mat):
            records.append((name, i, j, float(value)))
    return records
