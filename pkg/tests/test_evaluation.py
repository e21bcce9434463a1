import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from privpf.counts import CountMatrix
from privpf.evaluation import (TopicTopWords, block_structure_table, coherence,
                               heldout_mask_top_senders, mae, npmi, topic_quality)
from privpf.exceptions import DomainError
from privpf.mcmc import SampleTrace, Schedule
from privpf.models import GammaPoissonTopicModel, MaskSpec

import oracles


def test_mae_examples():
    y = np.array([[1, 0], [3, 2]])
    assert mae(y.astype(float), CountMatrix.from_dense(y)) == 0.0
    assert mae(y + 1.0, y) == 1.0
    with pytest.raises(DomainError):
        mae(y, y, ([], []))
    with pytest.raises(DomainError):
        mae(y, y, ([2], [0]))


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10**6))
def test_mae_matches_loop(seed):
    rng = np.random.default_rng(seed)
    y = rng.poisson(2.0, size=(5, 7))
    mu = rng.gamma(2.0, 1.0, size=(5, 7))
    held = rng.random((5, 7)) < 0.4
    held[0, 0] = True
    cells = list(zip(*np.nonzero(held)))
    assert mae(mu, y, MaskSpec(held)) == pytest.approx(oracles.mae_loop(mu, y, cells), abs=1e-12)
    every = [(i, j) for i in range(5) for j in range(7)]
    assert mae(mu, y) == pytest.approx(oracles.mae_loop(mu, y, every), abs=1e-12)


def test_heldout_mask_examples():
    y = np.arange(25).reshape(5, 5)
    assert len(heldout_mask_top_senders(y, 5)) == 25
    assert len(heldout_mask_top_senders(y, 0)) == 0
    mask = heldout_mask_top_senders(y, 1)
    # largest row sum is row 4, largest column sum is column 4
    expected = np.zeros((5, 5), dtype=bool)
    expected[4, :] = True
    expected[:, 4] = True
    assert len(mask) == 9 and np.array_equal(mask.held_out, expected)
    with pytest.raises(DomainError):
        heldout_mask_top_senders(y, 6)


def test_top_words_ties_and_scaling():
    phi = np.array([[1.0, 3.0, 3.0, 0.5] + [0.1] * 8])
    top = TopicTopWords.from_phi(phi, n_top=10)
    assert list(top.indices[0][:4]) == [1, 2, 0, 3]
    assert list(top.indices[0][4:]) == [4, 5, 6, 7, 8, 9]
    assert len(set(top.indices[0])) == 10
    assert np.array_equal(TopicTopWords.from_phi(7.5 * phi).indices, top.indices)
    with pytest.raises(DomainError):
        TopicTopWords.from_phi(np.ones((2, 5)), n_top=10)


# docs: d0 {a, b}, d1 {a}, d2 {b, c}, d3 {c}
CORPUS = np.array([[1, 2, 0], [4, 0, 0], [0, 1, 1], [0, 0, 3]])


def test_npmi_hand_enumeration():
    top = TopicTopWords(np.array([[0, 1, 2]]))
    per_topic, mean = npmi(top, CountMatrix.from_dense(CORPUS))

    def one(joint_docs, dv, dw, n=4):
        pj = (joint_docs + 1) / (n + 1)
        return math.log(pj / ((dv / n) * (dw / n))) / -math.log(pj)

    expected = (one(1, 2, 2) + one(0, 2, 2) + one(1, 2, 2)) / 3
    assert per_topic[0] == pytest.approx(expected, abs=1e-12) and mean == per_topic[0]


def test_npmi_limits():
    n = 10_000
    half = np.zeros((n, 2), dtype=int)
    half[: n // 2] = 1
    per, _ = npmi(TopicTopWords(np.array([[0, 1]])), half)
    assert per[0] == pytest.approx(1.0, abs=1e-3)

    indep = np.zeros((n, 2), dtype=int)
    indep[: n // 2, 0] = 1
    indep[::2, 1] = 1
    per, _ = npmi(TopicTopWords(np.array([[0, 1]])), indep)
    assert abs(per[0]) < 1e-3


def test_npmi_unseen_word_is_finite():
    ref = np.array([[1, 0, 1], [1, 0, 0]])
    per, mean = npmi(TopicTopWords(np.array([[0, 1, 2]])), ref)
    assert np.all(np.isfinite(per)) and -1.0 <= mean <= 1.0


def test_coherence_hand_enumeration_and_limits():
    per, mean = coherence(TopicTopWords(np.array([[0, 1, 2]])), CORPUS)
    assert per[0] == pytest.approx(math.log(0.5), abs=1e-12)

    d = 7
    together = np.ones((d, 3), dtype=int)
    per, _ = coherence(TopicTopWords(np.array([[0, 1, 2]])), together)
    assert per[0] == pytest.approx(3 * math.log((d + 1) / d), abs=1e-12)

    apart = np.eye(3, dtype=int).repeat(2, axis=0)  # each word in its own 2 docs
    per, _ = coherence(TopicTopWords(np.array([[0, 1, 2]])), apart)
    assert per[0] == pytest.approx(3 * math.log(1 / 2), abs=1e-12)


def test_coherence_skips_unseen_conditioning_word(caplog):
    ref = np.array([[0, 1], [0, 1]])
    per, _ = coherence(TopicTopWords(np.array([[0, 1]])), ref)
    assert per[0] == 0.0
    assert "zero document frequency" in caplog.text


def test_topic_quality_averages_over_samples():
    phi_a = np.array([[5.0, 4.0, 0.1], [0.1, 0.2, 3.0]])
    phi_b = np.array([[0.1, 4.0, 5.0], [3.0, 0.2, 0.1]])
    theta = np.ones((2, 4, 2))
    trace = SampleTrace(GammaPoissonTopicModel(2).config(), Schedule(3, 1),
                        {"theta": theta, "phi": np.stack([phi_a, phi_b])}, None, None)
    q = topic_quality(trace, CORPUS, n_top=2)
    per_a, _ = npmi(TopicTopWords.from_phi(phi_a, 2), CORPUS)
    per_b, _ = npmi(TopicTopWords.from_phi(phi_b, 2), CORPUS)
    assert np.allclose(q["npmi"][0], (per_a + per_b) / 2)


def test_block_structure_table():
    rows = block_structure_table({"truth": np.array([[1, 2]]), "fit": np.array([[0.5, 0.0]])})
    assert ("truth", 0, 1, 2.0) in rows and len(rows) == 4
