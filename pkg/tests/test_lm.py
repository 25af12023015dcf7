import math
import random

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.special import logsumexp
from sklearn.base import clone

from relconstrain.lm import NGramLM, load_lm, save_lm, train_ngram
from relconstrain.text import build_vocab

from conftest import random_ngram_lm


@pytest.fixture
def two_sentence_lm():
    # |V| = 6: BOS, EOS, UNK, a, b, c
    return NGramLM(order=2, smoothing_k=1.0).fit([["a", "b"], ["a", "c"]])


def test_add_one_arithmetic(two_sentence_lm):
    lm = two_sentence_lm
    a, b = lm.vocab.id_of("a"), lm.vocab.id_of("b")
    assert len(lm.vocab) == 6
    assert lm.prob(b, [a]) == pytest.approx(0.25, abs=1e-12)
    assert lm.next_token_logprobs([a])[b] == pytest.approx(math.log(0.25), abs=1e-12)


def test_mle_limit():
    lm = NGramLM(order=2, smoothing_k=1e-12).fit([["a", "b"]])
    a, b = lm.vocab.id_of("a"), lm.vocab.id_of("b")
    assert lm.prob(b, [a]) == pytest.approx(1.0, abs=1e-9)


def test_unseen_context_is_uniform(two_sentence_lm):
    lm = two_sentence_lm
    probs = np.exp(lm.next_token_logprobs([lm.vocab.unk]))
    np.testing.assert_allclose(probs, 1 / len(lm.vocab), rtol=0, atol=1e-15)


def test_errors():
    with pytest.raises(ValueError):
        NGramLM(order=0).fit([["a"]])
    with pytest.raises(ValueError, match="empty corpus"):
        NGramLM().fit([])
    with pytest.raises(ValueError):
        NGramLM(smoothing_k=0).fit([["a"]])
    lm = NGramLM(order=2).fit([["a"]])
    with pytest.raises(ValueError, match="token out of vocabulary"):
        lm.next_token_logprobs([42])


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10_000), st.integers(1, 4), st.lists(st.integers(0, 7), max_size=8))
def test_normalization(seed, order, prefix_words):
    lm = random_ngram_lm(random.Random(seed), 5, order)
    prefix = [3 + (w % 5) for w in prefix_words]
    assert abs(logsumexp(lm.next_token_logprobs(prefix))) <= 1e-9


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10_000), st.integers(1, 4), st.lists(st.integers(3, 7), min_size=4, max_size=9))
def test_markov_property(seed, order, prefix):
    lm = random_ngram_lm(random.Random(seed), 5, order)
    tail = prefix[len(prefix) - (order - 1):] if order > 1 else []
    np.testing.assert_array_equal(lm.next_token_logprobs(prefix), lm.next_token_logprobs(tail))


def test_monotone_smoothing():
    corpus = [["a", "b", "a"], ["b", "b", "c"], ["a"]]
    uniform = None
    for ctx in ([], ["a"], ["b"], ["c"]):
        prev = None
        for k in (0.01, 0.1, 1.0, 10.0, 100.0):
            lm = NGramLM(order=2, smoothing_k=k).fit(corpus)
            probs = np.exp(lm.next_token_logprobs(lm.vocab.encode(ctx)))
            uniform = 1 / len(lm.vocab)
            dist = np.abs(probs - uniform)
            if prev is not None:
                assert np.all(dist <= prev + 1e-15)
            prev = dist


def test_train_ngram_on_ids():
    vocab = build_vocab([["a", "b", "c"]])
    lm = train_ngram([[3, 4], [3, 5]], 2, 1.0, vocab)
    assert lm.prob(4, [3]) == pytest.approx(0.25)
    with pytest.raises(ValueError, match="token out of vocabulary"):
        train_ngram([[99]], 2, 1.0, vocab)


@pytest.mark.parametrize("order", [1, 2, 3])
def test_save_load_roundtrip_bitwise(tmp_path, order):
    lm = NGramLM(order=order, smoothing_k=0.37).fit([["a", "b"], ["a", "c", "b"], []])
    path = tmp_path / "lm.txt"
    save_lm(lm, path)
    loaded = load_lm(path)
    assert loaded.vocab == lm.vocab
    for prefix in [[], [3], [4, 5], [5, 3, 4]]:
        assert lm.next_token_logprobs(prefix).tobytes() == loaded.next_token_logprobs(prefix).tobytes()


def test_file_header(tmp_path, two_sentence_lm):
    path = tmp_path / "lm.txt"
    save_lm(two_sentence_lm, path)
    lines = path.read_text().splitlines()
    assert lines[0] == "RELCONSTRAIN-LM v1"
    assert lines[1] == "order=2" and lines[2] == "k=1.0"
    assert "V 3 a" in lines
    assert "C 3 | 4 1" in lines


def test_truncated_file(tmp_path, two_sentence_lm):
    path = tmp_path / "lm.txt"
    save_lm(two_sentence_lm, path)
    text = path.read_text()
    path.write_text(text[: len(text) // 2])
    with pytest.raises(ValueError, match="malformed LM file"):
        load_lm(path)


def test_wrong_version(tmp_path, two_sentence_lm):
    path = tmp_path / "lm.txt"
    save_lm(two_sentence_lm, path)
    path.write_text(path.read_text().replace("RELCONSTRAIN-LM v1", "RELCONSTRAIN-LM v2"))
    with pytest.raises(ValueError, match="unsupported version"):
        load_lm(path)


def test_garbage_file(tmp_path):
    path = tmp_path / "lm.txt"
    path.write_text("hello\n")
    with pytest.raises(ValueError, match="malformed LM file"):
        load_lm(path)


def test_estimator_params():
    lm = NGramLM(order=4, smoothing_k=0.5)
    assert lm.get_params() == {"order": 4, "smoothing_k": 0.5}
    copy = clone(lm.set_params(order=2))
    assert copy.get_params()["order"] == 2
    assert not hasattr(copy, "vocab_")
