#!/usr/bin/env python3
"""
Tests for scaling-eval

Runs standalone (python tests.py) or under pytest. Checks that need a real
natural-language corpus of at least a million tokens read it from
SCALING_TEST_CORPUS and are skipped when it is not set.
"""

import sys
import os
import json
import math
import itertools
import tempfile
from functools import lru_cache

sys.path.insert(0, os.path.dirname(os.path.abspath(__file__)))

import numpy as np
from nltk import Nonterminal
from nltk.grammar import PCFG, ProbabilisticProduction, is_nonterminal

from analysis.pipeline import COLUMNS, pipeline_rows, run_pipeline
from analysis.powerlaw import PointSet, fit_power_law, read_points, write_points
from analysis.report import (
    analysis_document, dumps, failure_exit_code, read_reference, sha256_file, upload_outputs, write_json,
    write_report_dir,
)
from analysis.scaling import (
    NO, POSITIVE, WEAK, AcfSeries, acf, ebeling, full_report, heaps, lrc_analyze, lrc_verdict,
    rare_word_intervals, taylor, window_variance, zipf,
)
from config import AnalysisConfig, RunConfig
from corpus.gcs_storage import ReportStorage, read_gcs_bytes, split_gs_path
from corpus.textio import (
    UNK, TokenStream, Vocabulary, preprocess, read_corpus, read_token_file, sample_chunks,
    shuffle_ngram, split_stream, to_char_stream, tokenize, write_token_file,
)
from corpus.treebank import parse_treebank, read_treebank
from errors import (
    DegenerateFitError, DomainError, InputFormatError, InsufficientDataError, InvariantViolation,
    ParameterError, VocabularyError, exit_code_for,
)
from models.ngram import (
    SMOOTHING_SCHEMES, NGramModel, build_tables, gt_discounts, kn_discount, lambda_grid, ngram_train,
    perplexity,
)
from models.pcfg import (
    CkyParser, GrammarSampler, binarize, check_normalized, generate_corpus, induce_grammar,
    nll_length_profile, read_grammar, sample_sentence, viterbi_nll, write_grammar,
)
from models.processes import (
    PitmanYorParams, SimonParams, UniformStream, pitman_yor_branch_probabilities, pitman_yor_generate,
    simon_generate,
)
from scaling_eval import main as cli_main

DATA_DIR = os.path.join(os.path.dirname(os.path.abspath(__file__)), "data")
TOY_TREEBANK = os.path.join(DATA_DIR, "toy_treebank.mrg")
SAMPLE_TEXT = os.path.join(DATA_DIR, "sample.txt")


def zipf_stream(n_tokens: int, n_types: int, seed: int) -> TokenStream:
    """I.i.d. tokens with p(rank r) proportional to 1/r"""
    rng = np.random.default_rng(seed)
    weights = 1.0 / np.arange(1, n_types + 1)
    tokens = rng.choice(n_types, size=n_tokens, p=weights / weights.sum())
    vocab = Vocabulary(tuple(f"w{i:05d}" for i in range(n_types)), np.bincount(tokens, minlength=n_types))
    return TokenStream(tokens, vocab)


def test_tokenize():
    """Tokenization and the rendered token file contract"""
    print("Testing tokenizer...")

    stream = tokenize(b"a b a")
    assert stream.tokens.tolist() == [0, 1, 0], "ids should follow first-seen order"
    assert len(stream.vocab) == 2 and len(stream) == 3

    empty = tokenize(b"")
    assert len(empty) == 0 and len(empty.vocab) == 0, "empty input gives an empty stream"

    assert len(tokenize("x  y\n z")) == 3, "any whitespace run separates tokens"

    try:
        tokenize(b"ab\xffcd")
        assert False, "invalid UTF-8 should raise"
    except InputFormatError as e:
        assert e.offset == 2, "error should carry the byte offset"

    stream = tokenize("the cat\n sat  on the\tmat")
    again = tokenize(stream.render())
    assert again.tokens.tolist() == stream.tokens.tolist(), "render then tokenize is the identity"
    assert stream.render() == "the cat sat on the mat\n", "single spaces and one trailing newline"

    with tempfile.TemporaryDirectory() as tmp:
        path = os.path.join(tmp, "tokens.txt")
        write_token_file(stream, path)
        with open(path, "rb") as f:
            assert f.read() == b"the cat sat on the mat\n"
        assert read_token_file(path).surfaces() == stream.surfaces()

        model_vocab = tokenize("the cat <unk>").vocab
        mapped = read_token_file(path, vocab=model_vocab)
        assert mapped.surfaces() == ["the", "cat", UNK, UNK, "the", UNK], "unknown words map to <unk>"
        try:
            read_token_file(path, vocab=tokenize("the cat").vocab)
            assert False, "no <unk> in the target vocabulary should raise"
        except VocabularyError:
            pass

        try:
            read_corpus(os.path.join(tmp, "missing.txt"))
            assert False, "missing file should raise"
        except InputFormatError as e:
            assert e.path.endswith("missing.txt"), "error should carry the path"

    print("✅ Tokenizer tests passed")
    return True


def test_preprocess():
    """Rare-word and number replacement"""
    print("Testing preprocessing...")

    stream = tokenize("a a b")
    assert preprocess(stream, min_freq=2).surfaces() == ["a", "a", UNK]
    assert preprocess(stream).surfaces() == stream.surfaces(), "no-op threshold keeps the stream"

    numbers = preprocess(tokenize("cost 3.5 million"), replace_numbers=True)
    assert numbers.surfaces() == ["cost", "N", "million"]

    mixed = tokenize("1,000 .5 a1 3 x x 12.0 y")
    once = preprocess(mixed, min_freq=2, replace_numbers=True)
    assert once.surfaces() == ["N", "N", UNK, "N", "x", "x", "N", UNK]
    twice = preprocess(once, min_freq=2, replace_numbers=True)
    assert twice.surfaces() == once.surfaces(), "preprocessing is idempotent"
    assert len(once) == len(mixed), "length never changes"

    try:
        preprocess(stream, min_freq=0)
        assert False, "min_freq below 1 should raise"
    except ValueError:
        pass

    print("✅ Preprocessing tests passed")
    return True


def test_shuffle_ngram():
    """Chunk shuffling keeps chunks intact and the multiset of tokens"""
    print("Testing n-gram shuffling...")

    letters = tokenize("A B C D E F G H I")
    seed = next(s for s in range(10_000) if np.random.default_rng(s).permutation(3).tolist() == [1, 2, 0])
    assert shuffle_ngram(letters, 3, seed).surfaces() == list("DEFGHIABC"), "chunk order follows the permutation"

    for s in range(5):
        assert shuffle_ngram(letters, 9, s).surfaces() == letters.surfaces(), "one chunk means no change"

    ten = tokenize("a b c d e f g h i j")
    for n in (1, 2, 3, 4):
        shuffled = shuffle_ngram(ten, n, 11)
        assert sorted(shuffled.surfaces()) == sorted(ten.surfaces()), "multiset is preserved"
        assert shuffled.surfaces() == shuffle_ngram(ten, n, 11).surfaces(), "deterministic under seed"

    chunks = [" ".join(shuffle_ngram(ten, 3, s).surfaces()) for s in range(20)]
    for c in chunks:
        for group in ("a b c", "d e f", "g h i"):
            assert group in c, "full chunks keep their inner order"

    try:
        shuffle_ngram(tokenize(""), 2, 0)
        assert False, "empty stream should raise"
    except InsufficientDataError:
        pass

    print("✅ Shuffling tests passed")
    return True


def test_char_stream_and_chunks():
    """Character join, head/tail split and chunk sampling"""
    print("Testing character streams and chunks...")

    assert to_char_stream(tokenize("ab c")).text() == "ab c"
    assert len(to_char_stream(tokenize("ab c"))) == 4
    assert to_char_stream(tokenize("xyz")).text() == "xyz"
    assert len(to_char_stream(tokenize("<unk> N"))) == 7

    stream = tokenize(" ".join(str(i) for i in range(100)))
    head, tail = split_stream(stream, 0.1)
    assert len(head) == 90 and len(tail) == 10
    assert tail.surfaces()[0] == "90" and head.vocab is stream.vocab

    chunks = sample_chunks(stream, 5, 30, seed=4)
    assert len(chunks) == 30 and all(len(c) == 5 for c in chunks)
    for chunk in chunks:
        start = int(chunk[0])
        assert chunk == [str(start + i) for i in range(5)], "chunks are consecutive runs"
    assert chunks == sample_chunks(stream, 5, 30, seed=4)

    print("✅ Character stream tests passed")
    return True


def test_power_law_fit():
    """Least squares in log-log space"""
    print("Testing power-law fitter...")

    z = np.logspace(0, 4, 60)
    for exponent, coefficient in ((-1.25, 3.5), (0.5, 0.01), (1.0, 1.0), (2.3, 40.0)):
        fit = fit_power_law(PointSet(z, coefficient * z ** exponent))
        assert abs(fit.exponent - exponent) <= 1e-9, f"exponent {fit.exponent} != {exponent}"
        assert abs(fit.coefficient - coefficient) <= 1e-9 * coefficient
        assert fit.rms_error <= 1e-9, "noiseless data fits exactly"
        assert fit.n_points == 60

    try:
        fit_power_law(PointSet([1, 2, 3, 4], [1, 2, 0, 4]))
        assert False, "zero ordinate should raise"
    except DomainError as e:
        assert e.index == 2, "first offending index is reported"

    try:
        fit_power_law(PointSet([5, 5, 5], [1, 2, 3]))
        assert False, "one distinct abscissa should raise"
    except DegenerateFitError:
        pass

    noisy = PointSet([1, 2, 4, 8], [1.0, 2.2, 3.8, 8.4])
    fit = fit_power_law(noisy)
    residual = np.log(noisy.y) - np.log(fit.predict(noisy.z))
    assert abs(fit.rms_error - math.sqrt(np.mean(residual ** 2))) <= 1e-12

    with tempfile.TemporaryDirectory() as tmp:
        path = write_points(noisy, os.path.join(tmp, "points.tsv"), header="test")
        back = read_points(path)
        assert back.pairs() == noisy.pairs(), "point files read back exactly"

        with open(os.path.join(tmp, "bad.tsv"), "w") as f:
            f.write("1\t2\t3\n")
        try:
            read_points(os.path.join(tmp, "bad.tsv"))
            assert False, "three columns should raise"
        except InputFormatError:
            pass

    print("✅ Power-law fitter tests passed")
    return True


def test_zipf_and_heaps():
    """Rank-frequency ordering and vocabulary growth"""
    print("Testing Zipf and Heaps analyses...")

    stream = tokenize("a b a c a b")
    unigrams = zipf(stream)
    assert unigrams.keys[:, 0].tolist() == [0, 1, 2] and unigrams.frequencies.tolist() == [3, 2, 1]

    bigrams = zipf(stream, 2)
    assert bigrams.keys.tolist() == [[0, 1], [1, 0], [0, 2], [2, 0]], "ties keep first-occurrence order"
    assert bigrams.frequencies.tolist() == [2, 1, 1, 1]

    distinct = tokenize(" ".join(f"t{i}" for i in range(100)))
    curve = heaps(distinct)
    assert abs(curve.exponent - 1.0) <= 1e-12, "all-new tokens give beta = 1"
    assert curve.v[-1] == 100

    repeated = heaps(tokenize("a " * 50))
    assert repeated.v.tolist() == [1] * len(repeated.v), "one type at every prefix"
    assert abs(repeated.exponent) <= 1e-12, "constant vocabulary gives beta = 0"

    try:
        heaps(tokenize("a b c"))
        assert False, "three tokens are too few"
    except InsufficientDataError:
        pass

    print("✅ Zipf and Heaps tests passed")
    return True


def test_fluctuation_analyses():
    """Ebeling variance sums and Taylor's mean/deviation pairs"""
    print("Testing fluctuation analyses...")

    rng = np.random.default_rng(3)
    codes = rng.integers(0, 7, size=5000)
    for window in (1, 3, 10, 64, 500):
        k = codes.size // window
        matrix = np.stack([np.bincount(codes[i * window:(i + 1) * window], minlength=7) for i in range(k)])
        direct = float(np.var(matrix, axis=0).sum())
        assert abs(window_variance(codes, 7, window) - direct) <= 1e-9 * max(direct, 1.0)

    periodic = np.tile([0, 1], 500)
    assert window_variance(periodic, 2, 2) == 0.0, "periodic text has exactly zero variance"
    assert window_variance(periodic, 2, 10) == 0.0

    letters = np.array(list("abcdefgh"))
    iid = TokenStream.from_surfaces(letters[rng.integers(0, 8, size=200_000)].tolist())
    curve = ebeling(to_char_stream(iid))
    assert abs(curve.exponent - 1.0) <= 0.1, f"i.i.d. letters should give eta near 1, got {curve.exponent}"

    stream = tokenize("a b a a b b a a")
    scatter = taylor(stream, 2)
    assert scatter.n_segments == 4
    assert scatter.mu.tolist() == [1.25, 0.75]
    assert np.allclose(scatter.sigma, [math.sqrt(11) / 4, math.sqrt(11) / 4])
    assert abs(scatter.exponent) <= 1e-12

    # every segment of 12 holds a m times, b 2m times and c the rest; mean m is 2
    segments = []
    for m in (1, 3, 1, 3, 2, 2):
        segments += ["a"] * m + ["b"] * (2 * m) + ["c"] * (12 - 3 * m)
    proportional = taylor(TokenStream.from_surfaces(segments), 12)
    spread = math.sqrt(4 / 6)
    assert np.allclose(proportional.mu, [2.0, 4.0, 6.0])
    assert np.allclose(proportional.sigma, [spread, 2 * spread, 3 * spread])
    assert abs(proportional.exponent - 1.0) <= 1e-9, "proportional co-occurrence gives zeta = 1"

    try:
        taylor(stream, 1)
        assert False, "segment length 1 should raise"
    except ParameterError:
        pass
    try:
        taylor(stream, 5)
        assert False, "one segment is too few"
    except InsufficientDataError:
        pass
    try:
        taylor(tokenize("a b a b"), 2)
        assert False, "identical segments cannot be fitted"
    except DegenerateFitError:
        pass

    print("✅ Fluctuation analysis tests passed")
    return True


def test_long_range_correlation():
    """Rare-word intervals, autocorrelation and the sign-based verdicts"""
    print("Testing long-range correlation...")

    stream = tokenize("x x b x x c x x b x x c x x x x")
    assert rare_word_intervals(stream, 4).tolist() == [3, 3, 3]
    assert rare_word_intervals(stream, 8).tolist() == [6], "Q=8 selects only the later-seen rare word"

    rng = np.random.default_rng(5)
    series = rng.normal(size=1000).cumsum()
    c = acf(series, 40)
    mean, size = series.mean(), series.size
    variance = sum((v - mean) ** 2 for v in series) / size
    for s in (1, 2, 17, 40):
        direct = sum((series[i] - mean) * (series[i + s] - mean) for i in range(size - s)) / (size - s) / variance
        assert abs(c[s - 1] - direct) <= 1e-9

    alternating = np.tile([1.0, -1.0], 50)
    assert abs(acf(alternating, 5)[0] + 1.0) <= 1e-12, "alternating series has c(1) = -1"

    positive = np.full(100, 0.2)
    assert lrc_verdict(positive) == POSITIVE
    one = positive.copy()
    one[40] = -0.1
    assert lrc_verdict(one) == WEAK
    two = positive.copy()
    two[[2, 7]] = -0.1
    assert lrc_verdict(two) == NO
    late = positive.copy()
    late[[20, 60]] = -0.1
    assert lrc_verdict(late) == POSITIVE, "negatives beyond lag 10 do not make it No"

    decaying = np.array([0.5, 0.4, -0.05, 0.3, 0.0, 0.2, 0.1, -0.2, 0.05])
    weak = AcfSeries(q=4, intervals=np.arange(5), c=decaying, verdict=WEAK, fit=None, fit_max_lag=7)
    kept = weak.points()
    assert kept.z.tolist() == [1, 2, 4, 6, 7], "only lags up to fit_max_lag with c(s) > 0"
    assert np.all(kept.y > 0)

    try:
        acf(np.ones(50), 3)
        assert False, "constant series should raise"
    except DegenerateFitError:
        pass

    print("✅ Long-range correlation tests passed")
    return True


def test_iid_surrogate():
    """A million i.i.d. Zipfian tokens look like shuffled text"""
    print("Testing i.i.d. surrogate (1e6 tokens)...")

    stream = zipf_stream(1_000_000, 20_000, seed=2024)
    report = full_report(stream, AnalysisConfig())
    zeta = report.taylor.exponent
    eta = report.ebeling.exponent
    assert abs(zeta - 0.50) <= 0.02, f"Taylor exponent {zeta}"
    assert abs(eta - 1.00) <= 0.03, f"Ebeling exponent {eta}"
    assert report.lrc.verdict == NO, f"LRC verdict {report.lrc.verdict}"
    assert report.q1_verdicts["taylor"] == "No" and report.q1_verdicts["zipf"] == "Yes"

    print("✅ I.i.d. surrogate tests passed")
    return True


def test_urn_processes():
    """Simon and Pitman-Yor generators"""
    print("Testing Simon and Pitman-Yor processes...")

    for bad in (0.0, 1.0, 1.5):
        try:
            SimonParams(bad)
            assert False, f"Simon a={bad} should raise"
        except ValueError:
            pass
    for a, b in ((1.0, 1.0), (-0.1, 1.0), (0.5, -1.0)):
        try:
            PitmanYorParams(a, b)
            assert False, f"Pitman-Yor ({a}, {b}) should raise"
        except ValueError:
            pass

    existing, new = pitman_yor_branch_probabilities([3, 1], 0.5, 1.0)
    assert np.allclose(existing, [0.5, 0.1]) and abs(new - 0.4) <= 1e-12
    assert abs(existing.sum() + new - 1.0) <= 1e-12

    for generate, params in ((simon_generate, SimonParams(0.3, 8)), (pitman_yor_generate, PitmanYorParams(0.6, 2.0, 8))):
        stream = generate(params, 5000)
        assert len(stream) == 5000
        assert stream.tokens.tolist() == generate(params, 5000).tokens.tolist(), "deterministic under seed"
        _, first = np.unique(stream.tokens, return_index=True)
        assert np.all(np.diff(first) > 0), "new words get consecutive ids"
        assert stream.surfaces()[0] == "0"

    simon = simon_generate(SimonParams(0.1, 1), 1_000_000)
    types = int(np.count_nonzero(simon.counts()))
    expected = 1 + 0.1 * (1_000_000 - 1)
    assert abs(types - expected) <= 3 * math.sqrt(999_999 * 0.1 * 0.9), f"vocabulary {types}"
    scatter = taylor(simon, 5620)
    assert abs(scatter.exponent - 0.50) <= 0.02, f"Simon Taylor exponent {scatter.exponent}"
    series = lrc_analyze(simon, 16, 100, 100)
    assert np.all(series.c[:100] > 0), "Simon intervals stay positively correlated"

    py = pitman_yor_generate(PitmanYorParams(0.8, 1.0, 3), 1_000_000)
    curve = heaps(py)
    assert abs(curve.exponent - 0.78) <= 0.05, f"Pitman-Yor Heaps exponent {curve.exponent}"

    # the first 100 steps replayed from the same uniforms
    a, b, seed = 0.5, 2.0, 17
    uniforms = UniformStream(np.random.default_rng(seed))
    ids, counts = [0], [1]
    for t in range(1, 100):
        existing, new = pitman_yor_branch_probabilities(counts, a, b)
        assert abs(existing.sum() + new - 1.0) <= 1e-12, f"branch probabilities at step {t}"
        if uniforms.next() * (t + b) < a * len(counts) + b:
            ids.append(len(counts))
            counts.append(1)
            continue
        while True:
            word = ids[int(uniforms.next() * t)]
            if uniforms.next() * counts[word] < counts[word] - a:
                break
        ids.append(word)
        counts[word] += 1
    trace = pitman_yor_generate(PitmanYorParams(a, b, seed), 100)
    assert trace.tokens.tolist() == ids, "generator follows the stated branch rule"

    assert len(set(simon_generate(SimonParams(1e-9, 4), 1000).tokens.tolist())) == 1, "a near 0 repeats word 0"

    print("✅ Urn process tests passed")
    return True


def test_perplexity_oracle():
    """Perplexity on hand-computable corpora"""
    print("Testing perplexity...")

    stream = tokenize("a b a b")
    model = ngram_train(stream, order=2, smoothing="mle")
    result = perplexity(model, stream)
    assert abs(result.value - 2 ** 0.25) <= 1e-9, f"got {result.value}"

    uniform = ngram_train(tokenize("a b c d"), order=1, smoothing="mle")
    assert abs(perplexity(uniform, tokenize("d c b a a")).value - 4.0) <= 1e-9, "uniform model gives V"

    zero = perplexity(model, tokenize("b b"))
    assert zero.infinite and zero.to_dict()["value"] is None, "zero probability gives infinite perplexity"

    try:
        perplexity(model, tokenize("a z"))
        assert False, "out-of-vocabulary word without <unk> should raise"
    except VocabularyError:
        pass

    with_unk = ngram_train(preprocess(tokenize("a b a b c a b d a"), min_freq=2), order=2, smoothing="kn")
    scored = perplexity(with_unk, tokenize("a b zebra a"))
    assert scored.n_oov == 1 and scored.oov_handling == "unk" and not scored.infinite

    compact = tokenize("a b a b a")
    tables = build_tables(compact.tokens, len(compact.vocab), 2)
    mixed = NGramModel(compact.vocab, tables, "interp", lambdas=[0.5, 0.5])
    assert abs(mixed.prob([0], 1) - 0.7) <= 1e-12, "0.5 * q(b|a) + 0.5 * q(b) = 0.5 + 0.2"

    # interpolated Kneser-Ney bigram written out from raw counts
    words = "the cat sat on the mat the dog sat on the cat a dog ran to the mat and a cat ran".split()
    kn = ngram_train(TokenStream.from_surfaces(words), order=2, smoothing="kn")
    surfaces = sorted(set(words))
    bigrams = {}
    for v, w in zip(words, words[1:]):
        bigrams[(v, w)] = bigrams.get((v, w), 0) + 1
    continuation = {w: sum(1 for (_, x) in bigrams if x == w) for w in surfaces}

    def discount(values):
        n1 = sum(1 for c in values if c == 1)
        n2 = sum(1 for c in values if c == 2)
        return n1 / (n1 + 2 * n2) if n1 + 2 * n2 else 0.5

    d1, d2 = discount(continuation.values()), discount(bigrams.values())
    total = sum(continuation.values())
    types_seen = sum(1 for c in continuation.values() if c > 0)
    unigram = {
        w: max(continuation[w] - d1, 0) / total + d1 * types_seen / total / len(surfaces) for w in surfaces
    }
    for v in surfaces:
        followers = {w: c for (x, w), c in bigrams.items() if x == v}
        mass = sum(followers.values())
        for w in surfaces:
            if mass:
                expected = max(followers.get(w, 0) - d2, 0) / mass + d2 * len(followers) / mass * unigram[w]
            else:
                expected = unigram[w]
            got = kn.prob([kn.vocab.id_of(v)], kn.vocab.id_of(w))
            assert abs(got - expected) <= 1e-9, f"KN q({w}|{v}) = {got}, expected {expected}"
    for w in surfaces:
        assert abs(kn.prob([], kn.vocab.id_of(w)) - unigram[w]) <= 1e-9, f"KN unigram {w}"

    print("✅ Perplexity tests passed")
    return True


def test_smoothing_normalization():
    """Every scheme gives proper distributions, and vectorized scoring matches them"""
    print("Testing smoothing normalization...")

    stream = zipf_stream(4000, 60, seed=9)
    rng = np.random.default_rng(17)
    for smoothing in SMOOTHING_SCHEMES:
        model = ngram_train(stream, order=3, smoothing=smoothing)
        for _ in range(1000):
            context = rng.integers(0, model.width, size=int(rng.integers(0, 3))).tolist()
            distribution = model.distribution(context)
            assert abs(distribution.sum() - 1.0) <= 1e-9, f"{smoothing} context {context} sums to {distribution.sum()}"
            assert np.all(distribution >= 0.0)

        encoded, _ = model.encode(stream)
        tokens = encoded.tokens[:300]
        log_q, _ = model.log_probs(tokens)
        for i in range(tokens.size):
            expected = model.prob(tokens[max(0, i - 2):i].tolist(), tokens[i])
            assert abs(math.exp(log_q[i]) - expected) <= 1e-9, f"{smoothing} position {i}"

    assert kn_discount(np.array([1, 1, 2])) == 0.5
    assert kn_discount(np.array([1, 2, 2])) == 0.2
    assert kn_discount(np.array([3, 4])) == 0.5, "undefined discount falls back to 0.5"

    ratios = gt_discounts(np.array([1, 1, 1, 1, 1, 2, 2, 2, 3, 3, 4, 5, 6, 7, 9]), threshold=5)
    assert ratios[0] == 1.0 and np.all((ratios > 0) & (ratios <= 1))

    # N1=10, N2=4, N3=3, N6=2
    counts = np.array([1] * 10 + [2] * 4 + [3] * 3 + [6] * 2)
    ratios = gt_discounts(counts, threshold=5)
    assert abs(ratios[1] * 1 - 2 * 4 / 10) <= 1e-12, "r*(1) = 2 N2 / N1 = 0.8"
    assert abs(ratios[2] - 0.75) <= 1e-12, "r*(2) = 2.25 exceeds 2; absolute discount"
    assert abs(ratios[3] - 2.5 / 3) <= 1e-12, "N4 = 0 gives r*(3) = 0; absolute discount"
    assert abs(ratios[4] - 3.5 / 4) <= 1e-12 and abs(ratios[5] - 4.5 / 5) <= 1e-12

    grid = lambda_grid(3)
    assert grid.shape == (231, 3) and np.allclose(grid.sum(axis=1), 1.0)

    print("✅ Smoothing normalization tests passed")
    return True


def test_model_persistence_and_sampling():
    """Model files and seeded generation"""
    print("Testing n-gram persistence and generation...")

    stream = zipf_stream(3000, 40, seed=21)
    with tempfile.TemporaryDirectory() as tmp:
        for smoothing in SMOOTHING_SCHEMES:
            model = ngram_train(stream, order=3, smoothing=smoothing)
            path = model.save(os.path.join(tmp, f"{smoothing}.json"))
            loaded = NGramModel.load(path)
            assert loaded.to_dict() == model.to_dict(), f"{smoothing} model reloads identically"
            for context in ([], [0], [3, 1], [5, 5]):
                assert np.array_equal(loaded.distribution(context), model.distribution(context))

            sample = model.generate(500, seed=7)
            assert len(sample) == 500
            assert sample.tokens.tolist() == model.generate(500, seed=7).tokens.tolist()
            assert sample.vocab is model.vocab

        with open(os.path.join(tmp, "bad.json"), "w") as f:
            json.dump({"format": "something-else"}, f)
        try:
            NGramModel.load(os.path.join(tmp, "bad.json"))
            assert False, "foreign file should raise"
        except InputFormatError:
            pass

    try:
        ngram_train(tokenize("a a a"), order=2)
        assert False, "one word type is too few"
    except InsufficientDataError:
        pass

    print("✅ N-gram persistence tests passed")
    return True


def test_treebank_reader():
    """Bracketed trees with PTB normalization"""
    print("Testing treebank reader...")

    treebank = parse_treebank("( (S (NP-SBJ (DT the) (NN cat)) (VP (VBD sat) (NP (-NONE- *T*-1)))) )")
    tree = treebank.trees[0]
    assert tree.label() == "S" and tree[0].label() == "NP", "wrapper and function tags are removed"
    assert tree.leaves() == ["the", "cat", "sat"], "empty elements are deleted"
    assert len(tree[1]) == 1, "the emptied NP disappears"

    toy = read_treebank(TOY_TREEBANK)
    assert len(toy) == 10
    assert toy.sentences()[0] == ["the", "cat", "sat", "on", "the", "mat", "."]

    try:
        parse_treebank("(S (A a) (B b)")
        assert False, "unbalanced brackets should raise"
    except InputFormatError as e:
        assert e.tree_index == 0
    try:
        parse_treebank("(S (A a))\n(S (A a) b)")
        assert False, "a node mixing words and subtrees should raise"
    except InputFormatError as e:
        assert e.tree_index == 1, "error names the offending tree"

    print("✅ Treebank reader tests passed")
    return True


def test_grammar_induction():
    """Relative-frequency induction and grammar files"""
    print("Testing grammar induction...")

    single = induce_grammar(parse_treebank("(S (A a) (B b))"))
    assert all(p.prob() == 1.0 for p in single.productions())
    assert single.start() == Nonterminal("S")

    counted = induce_grammar(parse_treebank("(S (A a) (B b))\n(S (A a) (B b))\n(S (A a))"))
    s_rules = {tuple(str(x) for x in p.rhs()): p.prob() for p in counted.productions(lhs=Nonterminal("S"))}
    assert abs(s_rules[("A", "B")] - 2 / 3) <= 1e-12 and abs(s_rules[("A",)] - 1 / 3) <= 1e-12

    mixed_roots = induce_grammar(parse_treebank("(S (A a))\n(FRAG (A a))"))
    assert mixed_roots.start() == Nonterminal("ROOT"), "differing roots get a super-root"

    toy = induce_grammar(read_treebank(TOY_TREEBANK))
    check_normalized(toy)
    check_normalized(binarize(toy))

    with tempfile.TemporaryDirectory() as tmp:
        path = write_grammar(toy, os.path.join(tmp, "grammar.tsv"))
        back = read_grammar(path)
        assert back.start() == toy.start()
        assert sorted(map(str, back.productions())) == sorted(map(str, toy.productions()))
        assert sorted(p.prob() for p in back.productions()) == sorted(p.prob() for p in toy.productions())
        punctuation = [p for p in back.productions() if p.lhs() == Nonterminal(",")]
        assert punctuation and punctuation[0].rhs() == (",",), "terminal ',' stays distinct from the tag ','"

    try:
        induce_grammar(parse_treebank(""))
        assert False, "empty treebank should raise"
    except InsufficientDataError:
        pass

    print("✅ Grammar induction tests passed")
    return True


def test_binarize_and_viterbi():
    """CNF conversion and the CKY examples"""
    print("Testing binarization and CKY...")

    grammar = PCFG.fromstring("""
        S -> A B C [0.4] | A [0.6]
        A -> 'a' [1.0]
        B -> 'b' [1.0]
        C -> 'c' [1.0]
    """)
    binary = binarize(grammar)
    rules = {(str(p.lhs()), tuple(str(s) for s in p.rhs())): p.prob() for p in binary.productions()}
    assert rules[("S", ("A", "S|B.C"))] == 0.4
    assert rules[("S|B.C", ("B", "C"))] == 1.0
    assert rules[("S", ("A",))] == 0.6

    already = PCFG.fromstring("S -> A B [1.0]\nA -> 'a' [1.0]\nB -> 'b' [1.0]")
    assert sorted(map(str, binarize(already).productions())) == sorted(map(str, already.productions()))

    assert viterbi_nll(PCFG.fromstring("S -> 'a' [1.0]"), ["a"]) == 0.0
    doubling = PCFG.fromstring("S -> S S [0.5] | 'a' [0.5]")
    assert abs(viterbi_nll(doubling, ["a", "a"]) - math.log(8)) <= 1e-12

    parser = CkyParser(doubling)
    previous = 0.0
    for n in range(1, 12):
        score = parser.nll(["a"] * n)
        assert score >= previous, "appending a token never lowers the NLL"
        previous = score

    assert viterbi_nll(PCFG.fromstring("S -> A B [1.0]\nA -> 'a' [1.0]\nB -> 'b' [1.0]"), ["b", "a"]) is None
    try:
        viterbi_nll(doubling, ["a", "z"])
        assert False, "unknown word without <unk> should raise"
    except VocabularyError:
        pass
    try:
        CkyParser(grammar)
        assert False, "non-CNF grammar should be rejected"
    except InvariantViolation:
        pass
    try:
        parser.nll(["a"] * 51)
        assert False, "sentence over the cap should raise"
    except ValueError:
        pass

    print("✅ Binarization and CKY tests passed")
    return True


def _random_grammar(rng: np.random.Generator) -> PCFG:
    S, A, B = Nonterminal("S"), Nonterminal("A"), Nonterminal("B")
    pools = {
        S: [[A, B], [S, S], [B, A], [A], [B], [A, "b", B], [A, B, A], ["a"]],
        A: [["a"], [A, B], ["a", "b"], [B, A, B]],
        B: [["b"], [B, A], ["a"]],
    }
    productions = []
    for lhs, pool in pools.items():
        size = int(rng.integers(1, 4))
        chosen = [pool[0]] if lhs is not S else []
        for index in rng.permutation(len(pool)):
            if len(chosen) >= size:
                break
            if pool[index] not in chosen:
                chosen.append(pool[index])
        weights = rng.dirichlet(np.ones(len(chosen)))
        weights = weights / weights.sum()
        productions += [ProbabilisticProduction(lhs, rhs, prob=float(w)) for rhs, w in zip(chosen, weights)]
    return PCFG(S, productions)


def _exhaustive_best(grammar: PCFG):
    """Maximum parse probability by trying every split of every production"""

    @lru_cache(maxsize=None)
    def best(symbol, words) -> float:
        result = 0.0
        for production in grammar.productions(lhs=symbol):
            rhs = production.rhs()
            if len(rhs) > len(words):
                continue
            for cuts in itertools.combinations(range(1, len(words)), len(rhs) - 1):
                bounds = (0,) + cuts + (len(words),)
                p = production.prob()
                for item, lo, hi in zip(rhs, bounds, bounds[1:]):
                    piece = words[lo:hi]
                    p *= best(item, piece) if is_nonterminal(item) else float(piece == (item,))
                    if p == 0.0:
                        break
                result = max(result, p)
        return result

    return best


def test_cky_matches_exhaustive_parsing():
    """CKY on the binarized grammar equals brute-force search on the original"""
    print("Testing CKY against exhaustive parsing...")

    rng = np.random.default_rng(12)
    sentences = [words for n in range(1, 7) for words in itertools.product("ab", repeat=n)]
    for _ in range(20):
        grammar = _random_grammar(rng)
        assert len(grammar.productions()) <= 10
        binary = binarize(grammar)
        parser = CkyParser(binary)
        original = _exhaustive_best(grammar)
        binarized = _exhaustive_best(binary)
        for words in sentences:
            probability = original(grammar.start(), words)
            score = parser.nll(list(words))
            assert abs(binarized(grammar.start(), words) - probability) <= 1e-12, "binarization keeps probabilities"
            if probability == 0.0:
                assert score is None, f"{words} should be unparseable"
            else:
                assert score is not None and abs(score + math.log(probability)) <= 1e-9, f"{words}: {score}"

    print("✅ CKY oracle tests passed")
    return True


def test_grammar_sampling():
    """Top-down sampling frequencies, depth cap and consistency with scoring"""
    print("Testing grammar sampling...")

    assert sample_sentence(PCFG.fromstring("S -> 'a' [1.0]"), seed=3).tokens == ("a",)

    choice = GrammarSampler(PCFG.fromstring("S -> 'a' [0.7] | 'b' [0.3]"))
    trials = 100_000
    hits = sum(sample_sentence(choice, seed).tokens == ("a",) for seed in range(trials))
    assert abs(hits / trials - 0.7) <= 3 * math.sqrt(0.21 / trials), f"frequency {hits / trials}"

    explosive = PCFG.fromstring("S -> S S [0.95] | 'a' [0.05]")
    exceeded = [sample_sentence(explosive, seed, max_depth=20).depth_exceeded for seed in range(20)]
    assert sum(exceeded) >= 10, "supercritical grammar hits the depth cap"

    try:
        generate_corpus(PCFG.fromstring("S -> S S [1.0]"), 10, seed=0)
        assert False, "a grammar that never terminates should raise"
    except InsufficientDataError:
        pass

    toy = induce_grammar(read_treebank(TOY_TREEBANK))
    parser = CkyParser(binarize(toy))
    sampler = GrammarSampler(toy)
    for seed in range(200):
        sampled = sample_sentence(sampler, seed)
        if sampled.depth_exceeded or len(sampled.tokens) > 50:
            continue
        score = parser.nll(list(sampled.tokens))
        assert score is not None and score <= -sampled.log_prob + 1e-9, "best parse beats the sampled derivation"

    corpus = generate_corpus(toy, 300, seed=5)
    assert len(corpus) == 300
    assert corpus.surfaces() == generate_corpus(toy, 300, seed=5).surfaces()

    print("✅ Grammar sampling tests passed")
    return True


def test_nll_length_profile():
    """Per-length NLL statistics"""
    print("Testing NLL-by-length profile...")

    doubling = PCFG.fromstring("S -> S S [0.5] | 'a' [0.5]")
    profile = nll_length_profile(doubling, [["a"], ["a", "a"], ["a"]])
    assert [row.length for row in profile.rows] == [1, 2]
    first, second = profile.rows
    assert first.count == 2 and abs(first.mean - math.log(2)) <= 1e-12
    assert second.count == 1 and abs(second.mean - math.log(8)) <= 1e-12
    assert first.minimum <= first.mean <= first.maximum
    assert profile.correlation is not None and abs(profile.correlation - 1.0) <= 1e-9

    pair = PCFG.fromstring("S -> A B [1.0]\nA -> 'a' [1.0]\nB -> 'b' [1.0]")
    counted = nll_length_profile(pair, [["a", "b"], ["b", "a"], ["a", "zebra"], ["a"] * 60])
    assert counted.n_unparseable == 1 and counted.n_unknown == 1 and counted.n_skipped == 1
    assert len(counted.rows) == 1 and counted.correlation is None

    toy = induce_grammar(read_treebank(TOY_TREEBANK))
    sampler = GrammarSampler(toy)
    sentences = []
    seed = 0
    while len(sentences) < 1000:
        sampled = sample_sentence(sampler, seed)
        seed += 1
        if not sampled.depth_exceeded:
            sentences.append(list(sampled.tokens))
    sampled_profile = nll_length_profile(toy, sentences)
    assert sampled_profile.correlation >= 0.9, f"correlation {sampled_profile.correlation}"

    with_unk = induce_grammar(read_treebank(TOY_TREEBANK), unk_hapax=True)
    assert viterbi_nll(with_unk, ["the", "zebra", "sat", "."]) is not None, "unknown words parse through <unk>"
    try:
        viterbi_nll(toy, ["the", "zebra", "sat", "."])
        assert False, "unknown word without <unk> should raise"
    except VocabularyError:
        pass

    print("✅ NLL profile tests passed")
    return True


def test_report_output():
    """Report documents, point files and exit status"""
    print("Testing report output...")

    stream = read_corpus(SAMPLE_TEXT)
    config = RunConfig(subcommand="analyze", input=SAMPLE_TEXT)
    config.analysis.taylor_l = 20
    config.analysis.lrc_q = 4
    config.analysis.acf_max_lag = 20
    report = full_report(stream, config.analysis)
    first = dumps(analysis_document(config, report, stream))
    second = dumps(analysis_document(config, full_report(stream, config.analysis), stream))
    assert first == second, "identical runs give identical bytes"
    assert failure_exit_code(report) == 0
    document = json.loads(first)
    assert document["tool"]["name"] == "scaling-eval" and document["config"]["analysis"]["taylor_l"] == 20

    with tempfile.TemporaryDirectory() as tmp:
        written = write_report_dir(analysis_document(config, report, stream), report, tmp, "tsv")
        names = {os.path.basename(p) for p in written}
        assert {"report.json", "report.tsv", "zipf.tsv", "zipf.gp", "heaps.tsv"} <= names
        assert read_points(os.path.join(tmp, "heaps.tsv")).pairs() == report.heaps.points().pairs()
        with open(os.path.join(tmp, "report.tsv")) as f:
            assert f.readline().rstrip("\n").split("\t") == ["property", "exponent", "rms_error", "q1", "q2_delta"]

        reference = read_reference(os.path.join(tmp, "report.json"))
        assert reference["heaps"] == report.heaps.exponent
        compared = full_report(stream, config.analysis, reference=reference)
        assert compared.q2_deltas["heaps"] == 0.0

    empty = full_report(tokenize(""), AnalysisConfig())
    assert failure_exit_code(empty) == 2, "no data maps to the insufficient-data status"
    assert empty.to_dict()["properties"]["zipf"]["error"] == "insufficient-data"

    misconfigured = full_report(
        zipf_stream(3000, 40, seed=21),
        AnalysisConfig(taylor_l=1, lrc_q=1, heaps_samples_per_decade=0, acf_max_lag=50, fit_max_lag=20),
    )
    for name in ("taylor", "lrc", "heaps"):
        assert misconfigured.errors[name]["error"] == "invalid-parameter", f"{name} records the bad parameter"
    assert misconfigured.zipf is not None and misconfigured.ebeling is not None, "other properties still run"
    assert failure_exit_code(misconfigured) == 0, "partial results still count as success"
    assert exit_code_for("invalid-parameter") == 2

    print("✅ Report output tests passed")
    return True


class FakeBlob:
    def __init__(self, store, name):
        self.store, self.name = store, name

    def upload_from_string(self, data, content_type=None):
        self.store[self.name] = data.encode("utf-8") if isinstance(data, str) else data

    def upload_from_filename(self, path, content_type=None):
        with open(path, "rb") as f:
            self.store[self.name] = f.read()

    def exists(self):
        return self.name in self.store

    def download_as_bytes(self):
        return self.store[self.name]


class FakeBucket:
    def __init__(self, store):
        self.store = store

    def blob(self, name):
        return FakeBlob(self.store, name)


class FakeClient:
    def __init__(self, buckets=()):
        self.store = {}
        self.buckets = set(buckets)
        self.created = []

    def bucket(self, name):
        return FakeBucket(self.store)

    def lookup_bucket(self, name):
        return FakeBucket(self.store) if name in self.buckets else None

    def create_bucket(self, name, location=None):
        self.buckets.add(name)
        self.created.append((name, location))
        return FakeBucket(self.store)


def test_gcs_storage():
    """Report upload and gs:// corpus reads against an in-memory client"""
    print("Testing GCS storage...")

    assert split_gs_path("gs://bucket/a/b.txt") == ("bucket", "a/b.txt")
    try:
        split_gs_path("gs://bucket")
        assert False, "object name is required"
    except ValueError:
        pass

    client = FakeClient()
    storage = ReportStorage(bucket_name="reports", location="europe-west1", client=client)
    assert client.created == [("reports", "europe-west1")], "a missing bucket is created in the given location"
    ReportStorage(bucket_name="reports", client=client)
    assert len(client.created) == 1, "an existing bucket is reused"
    with tempfile.TemporaryDirectory() as tmp:
        write_json({"b": 1, "a": 2}, os.path.join(tmp, "report.json"))
        os.makedirs(os.path.join(tmp, "points"))
        write_points(PointSet([1, 2], [3, 4]), os.path.join(tmp, "points", "heaps.tsv"))
        uploaded = upload_outputs(tmp, "runs/one", storage=storage)
    assert sorted(uploaded) == ["gs://reports/runs/one/points/heaps.tsv", "gs://reports/runs/one/report.json"]
    assert json.loads(client.store["runs/one/report.json"]) == {"a": 2, "b": 1}

    client.store["corpus/text.txt"] = b"a b a"
    assert read_gcs_bytes("gs://reports/corpus/text.txt", client=client) == b"a b a"
    reader = FakeClient()
    reader.store["corpus/text.txt"] = b"x"
    assert read_gcs_bytes("gs://reports/corpus/text.txt", client=reader) == b"x"
    assert reader.created == [], "reading never creates a bucket"
    try:
        read_gcs_bytes("gs://reports/corpus/missing.txt", client=client)
        assert False, "missing object should raise"
    except InputFormatError:
        pass

    class Broken:
        def upload_directory(self, *args):
            raise RuntimeError("no network")

    assert upload_outputs("/nonexistent", "x", storage=Broken()) == [], "failed upload falls back to local files"

    print("✅ GCS storage tests passed")
    return True


def test_configuration():
    """Environment overrides and their validation"""
    print("Testing configuration...")

    saved = os.environ.get("SCALING_TAYLOR_L")
    try:
        os.environ["SCALING_TAYLOR_L"] = "100"
        assert AnalysisConfig.from_env().taylor_l == 100
        os.environ["SCALING_TAYLOR_L"] = "many"
        try:
            AnalysisConfig.from_env()
            assert False, "malformed integer should raise"
        except RuntimeError as e:
            assert "SCALING_TAYLOR_L" in str(e)
    finally:
        if saved is None:
            os.environ.pop("SCALING_TAYLOR_L", None)
        else:
            os.environ["SCALING_TAYLOR_L"] = saved

    defaults = RunConfig().to_dict()
    assert defaults["analysis"]["taylor_l"] == 5620 and defaults["analysis"]["lrc_q"] == 16
    assert defaults["model"]["smoothing"] == "kn"

    print("✅ Configuration tests passed")
    return True


def test_cli():
    """Subcommands end to end"""
    print("Testing command line...")

    with tempfile.TemporaryDirectory() as tmp:
        out_a, out_b = os.path.join(tmp, "a"), os.path.join(tmp, "b")
        args = ["--input", SAMPLE_TEXT, "--taylor-l", "20", "--lrc-q", "4", "--seed", "1"]
        assert cli_main(["analyze", *args, "--output", out_a]) == 0
        assert cli_main(["analyze", *args, "--output", out_b]) == 0
        with open(os.path.join(out_a, "report.json"), "rb") as f1, open(os.path.join(out_b, "report.json"), "rb") as f2:
            assert f1.read() == f2.read(), "reruns are byte-identical"

        empty = os.path.join(tmp, "empty.txt")
        open(empty, "w").close()
        assert cli_main(["analyze", "--input", empty, "--output", os.path.join(tmp, "e")]) == 2
        assert cli_main(["analyze", "--input", os.path.join(tmp, "none.txt")]) == 3

        shuffled = os.path.join(tmp, "shuffled.txt")
        assert cli_main(["shuffle", "--input", SAMPLE_TEXT, "--output", shuffled, "-n", "5", "--seed", "2"]) == 0
        assert sorted(read_corpus(shuffled).surfaces()) == sorted(read_corpus(SAMPLE_TEXT).surfaces())

        model = os.path.join(tmp, "kn3.json")
        assert cli_main(["train", "--input", SAMPLE_TEXT, "--output", model, "--order", "3", "--smoothing", "kn"]) == 0
        scored = os.path.join(tmp, "score.json")
        assert cli_main(["score", "--model", model, "--input", SAMPLE_TEXT, "--output", scored]) == 0
        with open(scored) as f:
            document = json.load(f)
        assert document["perplexity"]["value"] > 1.0
        assert document["inputs"]["model"]["sha256"] == sha256_file(model), "the scored model is hashed"
        assert cli_main(["score", "--model", model, "--input", TOY_TREEBANK]) == 3, "unknown words without <unk>"

        generated = os.path.join(tmp, "simon.txt")
        assert cli_main(["generate", "--source", "simon", "--length", "1000", "--seed", "4", "--output", generated]) == 0
        assert len(read_corpus(generated)) == 1000
        assert cli_main(["generate", "--source", "simon", "--length", "10", "--output", generated]) == 2, "seed is required"
        assert cli_main(["generate", "--model", model, "--length", "200", "--seed", "4", "--output", generated]) == 0

        pcfg_out = os.path.join(tmp, "pcfg")
        assert cli_main(["pcfg", "--treebank", TOY_TREEBANK, "--input", SAMPLE_TEXT, "--unk-hapax",
                         "--chunk-lengths", "3,5", "--chunks-per-length", "5", "--output", pcfg_out]) == 0
        for name in ("grammar.tsv", "profile_treebank.tsv", "profile_input.tsv", "pcfg.json"):
            assert os.path.exists(os.path.join(pcfg_out, name)), f"{name} missing"
        with open(os.path.join(pcfg_out, "pcfg.json")) as f:
            document = json.load(f)
        assert document["config"]["unk_hapax"] is True
        assert document["config"]["chunk_lengths"] == [3, 5] and document["config"]["chunks_per_length"] == 5
        assert document["input"]["sha256"] == sha256_file(SAMPLE_TEXT), "the evaluated text is hashed"
        assert document["inputs"]["treebank"]["sha256"] == sha256_file(TOY_TREEBANK)

        plain = os.path.join(tmp, "plain")
        assert cli_main(["analyze", *args, "--no-ebeling", "--output", plain]) == 0
        with open(os.path.join(plain, "report.json")) as f:
            assert json.load(f)["config"]["include_ebeling"] is False
        assert cli_main(["generate", "--source", "pcfg", "--grammar", os.path.join(pcfg_out, "grammar.tsv"),
                         "--length", "100", "--seed", "1", "--output", generated]) == 0

    print("✅ Command line tests passed")
    return True


def test_pipeline():
    """The evaluation table on a tiny corpus"""
    print("Testing evaluation pipeline...")

    assert len(pipeline_rows(False)) == 14 and len(pipeline_rows(True)) == 15

    with tempfile.TemporaryDirectory() as tmp:
        corpus = os.path.join(tmp, "corpus.txt")
        with open(SAMPLE_TEXT) as f:
            text = f.read()
        with open(corpus, "w") as f:
            f.write(text * 3)

        tables = []
        for workers in ("1", "3"):
            out = os.path.join(tmp, f"run{workers}")
            code = cli_main(["pipeline", "--input", corpus, "--treebank", TOY_TREEBANK, "--length", "1000",
                             "--taylor-l", "50", "--lrc-q", "4", "--seed", "10", "--workers", workers, "--output", out])
            assert code == 0
            with open(os.path.join(out, "summary.tsv")) as f:
                tables.append(f.read())
            with open(os.path.join(out, "summary.json")) as f:
                summary = json.load(f)["summary"]
        assert tables[0] == tables[1], "results do not depend on the worker count"

        lines = tables[0].splitlines()
        assert lines[0].split("\t") == list(COLUMNS), "column set is stable"
        assert len(lines) == 16
        assert summary["warnings"], "tiny corpus is flagged"
        rows = {row["source"]: row for row in summary["rows"]}
        assert rows["original"]["perplexity"] is None and rows["Kneser-Ney 3-gram"]["perplexity"] is not None
        assert rows["Simon"]["ebeling"] is None, "Ebeling does not apply to integer surfaces"
        assert [row["seed"] for row in summary["rows"]] == list(range(10, 25)), "row seed = base + index"

    print("✅ Pipeline tests passed")
    return True


def test_http_service():
    """Flask endpoints"""
    print("Testing HTTP service...")

    from main import app
    client = app.test_client()

    assert client.get("/health").status_code == 200
    assert client.get("/nowhere").status_code == 404

    with open(SAMPLE_TEXT) as f:
        text = f.read()
    response = client.post("/api/analyze", json={"text": text, "taylor_l": 20, "lrc_q": 4})
    assert response.status_code == 200
    assert response.get_json()["analysis"]["n_tokens"] == len(tokenize(text))

    assert client.post("/api/analyze", json={"words": "x"}).status_code == 400
    response = client.post("/api/shuffle", json={"text": "", "n": 2, "seed": 1})
    assert response.status_code == 422 and response.get_json()["error"] == "insufficient-data"

    response = client.post("/api/shuffle", json={"text": "a b c d", "n": 4, "seed": 1})
    assert response.get_json()["text"] == "a b c d\n"

    response = client.post("/api/generate", json={"process": "pitman-yor", "length": 500, "seed": 2})
    assert response.status_code == 200 and response.get_json()["n_tokens"] == 500
    assert client.post("/api/generate", json={"process": "markov"}).status_code == 400

    print("✅ HTTP service tests passed")
    return True


def _test_corpus():
    path = os.getenv("SCALING_TEST_CORPUS")
    if not path:
        print("⏭️  SCALING_TEST_CORPUS not set - skipping")
        return None
    return read_corpus(path)


def test_shuffles_destroy_long_memory():
    """Natural text keeps clustering, its shuffles do not"""
    print("Testing shuffled corpus behavior...")

    stream = _test_corpus()
    if stream is None:
        return True
    original = full_report(stream, AnalysisConfig())
    assert original.taylor.exponent >= 0.53 and original.lrc.verdict != NO
    for n in (1, 2, 5, 10):
        shuffled = shuffle_ngram(stream, n, seed=n)
        assert abs(taylor(shuffled).exponent - 0.50) <= 0.02, f"{n}-gram shuffle Taylor exponent"
        assert lrc_analyze(shuffled).verdict == NO, f"{n}-gram shuffle LRC verdict"

    print("✅ Shuffled corpus tests passed")
    return True


def test_ngram_text_is_memoryless():
    """Text sampled from n-gram models lacks long memory"""
    print("Testing n-gram generated text...")

    stream = _test_corpus()
    if stream is None:
        return True
    for smoothing, order in (("kn", 3), ("katz", 5)):
        generated = ngram_train(stream, order, smoothing).generate(1_000_000, seed=order)
        assert abs(taylor(generated).exponent - 0.50) <= 0.02, f"{smoothing}-{order} Taylor exponent"
        assert lrc_analyze(generated).verdict == NO, f"{smoothing}-{order} LRC verdict"

    print("✅ N-gram generated text tests passed")
    return True


def test_smoothing_quality_ordering():
    """Kneser-Ney beats Katz and interpolation on held-out text"""
    print("Testing smoothing quality ordering...")

    stream = _test_corpus()
    if stream is None:
        return True
    train, held_out = split_stream(stream, 0.1)
    scores = {s: perplexity(ngram_train(train, 3, s), held_out).value for s in ("kn", "katz", "interp")}
    assert scores["kn"] < scores["katz"] and scores["kn"] < scores["interp"], f"perplexities {scores}"

    print("✅ Smoothing ordering tests passed")
    return True


def run_all_tests():
    """Run all tests"""
    print("\n" + "=" * 70)
    print("Running scaling-eval Tests")
    print("=" * 70 + "\n")

    tests = [
        ("Tokenizer", test_tokenize),
        ("Preprocessing", test_preprocess),
        ("Shuffling", test_shuffle_ngram),
        ("Character streams", test_char_stream_and_chunks),
        ("Power-law fitter", test_power_law_fit),
        ("Zipf and Heaps", test_zipf_and_heaps),
        ("Fluctuation analyses", test_fluctuation_analyses),
        ("Long-range correlation", test_long_range_correlation),
        ("I.i.d. surrogate", test_iid_surrogate),
        ("Urn processes", test_urn_processes),
        ("Perplexity", test_perplexity_oracle),
        ("Smoothing normalization", test_smoothing_normalization),
        ("N-gram persistence", test_model_persistence_and_sampling),
        ("Treebank reader", test_treebank_reader),
        ("Grammar induction", test_grammar_induction),
        ("Binarization and CKY", test_binarize_and_viterbi),
        ("CKY oracle", test_cky_matches_exhaustive_parsing),
        ("Grammar sampling", test_grammar_sampling),
        ("NLL profile", test_nll_length_profile),
        ("Report output", test_report_output),
        ("GCS storage", test_gcs_storage),
        ("Configuration", test_configuration),
        ("Command line", test_cli),
        ("Pipeline", test_pipeline),
        ("HTTP service", test_http_service),
        ("Shuffled corpus", test_shuffles_destroy_long_memory),
        ("N-gram generated text", test_ngram_text_is_memoryless),
        ("Smoothing ordering", test_smoothing_quality_ordering),
    ]

    passed = 0
    failed = 0

    for name, test_func in tests:
        try:
            if test_func():
                passed += 1
        except Exception as e:
            print(f"❌ {name} tests failed: {e}")
            import traceback
            traceback.print_exc()
            failed += 1
        print()

    print("=" * 70)
    print(f"Test Results: {passed} passed, {failed} failed")
    print("=" * 70)

    return failed == 0


if __name__ == "__main__":
    success = run_all_tests()
    sys.exit(0 if success else 1)
