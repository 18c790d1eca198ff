"""
Scaling analyses

The five statistical laws measured on a token stream: Zipf (rank-frequency),
Heaps (vocabulary growth), Ebeling (character fluctuation), Taylor (word
mean/deviation across segments) and long-range correlation of rare-word
return intervals. full_report runs them all and records failures per section.
"""

import logging
from dataclasses import dataclass, field, replace
from typing import Dict, List, Mapping, Optional, Union

import numpy as np

from analysis.powerlaw import PointSet, PowerLawFit, fit_power_law, try_fit
from config import AnalysisConfig
from corpus.textio import CharStream, TokenStream, to_char_stream
from errors import DegenerateFitError, InsufficientDataError, ParameterError, ScalingEvalError, error_section

logger = logging.getLogger(__name__)

PROPERTIES = ("zipf", "heaps", "ebeling", "taylor", "lrc")
BLANK = "-"

POSITIVE = "Positive"
WEAK = "Weak"
NO = "No"

# Q1 thresholds; i.i.d. text sits at eta = 1.0 and zeta = 0.5
EBELING_IID_MARGIN = 1.03
TAYLOR_IID_MARGIN = 0.52


def log_spaced(low: int, high: int, per_decade: int) -> np.ndarray:
    """Distinct integers from low to high (both included), per_decade per factor of ten"""
    if per_decade < 1:
        raise ParameterError(f"samples per decade must be >= 1, got {per_decade}")
    if high < low:
        raise ParameterError(f"empty range [{low}, {high}]")
    first = int(np.ceil(np.log10(low) * per_decade))
    last = int(np.floor(np.log10(high) * per_decade))
    grid = np.round(10.0 ** (np.arange(first, last + 1) / per_decade)).astype(np.int64)
    grid = np.concatenate(([low], grid, [high]))
    return np.unique(grid[(grid >= low) & (grid <= high)])


@dataclass(frozen=True, eq=False)
class RankFrequency:
    """Items (words or adjacent word pairs) by descending frequency"""

    order: int
    keys: np.ndarray
    frequencies: np.ndarray

    @property
    def ranks(self) -> np.ndarray:
        return np.arange(1, self.frequencies.size + 1)

    def points(self) -> PointSet:
        return PointSet(self.ranks, self.frequencies)

    def labels(self, stream: TokenStream, limit: Optional[int] = None) -> List[str]:
        table = stream.vocab.id_to_surface
        rows = self.keys[:limit] if limit else self.keys
        return [" ".join(table[i] for i in row) for row in rows.tolist()]

    def to_dict(self, stream: Optional[TokenStream] = None, top: int = 10) -> Dict:
        result = {
            "order": self.order,
            "n_items": int(self.frequencies.size),
            "total": int(self.frequencies.sum()),
            "distinct_frequencies": int(np.unique(self.frequencies).size),
        }
        if stream is not None:
            result["top"] = [
                {"rank": r, "item": label, "frequency": int(f)}
                for r, label, f in zip(range(1, top + 1), self.labels(stream, top), self.frequencies[:top].tolist())
            ]
        return result


@dataclass(frozen=True, eq=False)
class HeapsCurve:
    n: np.ndarray
    v: np.ndarray
    fit: PowerLawFit

    @property
    def exponent(self) -> float:
        return self.fit.exponent

    def points(self) -> PointSet:
        return PointSet(self.n, self.v)

    def to_dict(self) -> Dict:
        return {"fit": self.fit.to_dict(), "n_samples": int(self.n.size), "vocabulary": int(self.v[-1])}


@dataclass(frozen=True, eq=False)
class FluctuationCurve:
    lengths: np.ndarray
    m: np.ndarray
    fit: PowerLawFit

    @property
    def exponent(self) -> float:
        return self.fit.exponent

    def points(self) -> PointSet:
        return PointSet(self.lengths, self.m)

    def to_dict(self) -> Dict:
        return {
            "fit": self.fit.to_dict(),
            "min_l": int(self.lengths[0]),
            "max_l": int(self.lengths[-1]),
            "n_lengths": int(self.lengths.size),
        }


@dataclass(frozen=True, eq=False)
class TaylorScatter:
    segment_len: int
    n_segments: int
    word_ids: np.ndarray
    mu: np.ndarray
    sigma: np.ndarray
    fit: PowerLawFit

    @property
    def exponent(self) -> float:
        return self.fit.exponent

    def points(self) -> PointSet:
        return PointSet(self.mu, self.sigma)

    def to_dict(self) -> Dict:
        return {
            "fit": self.fit.to_dict(),
            "segment_len": self.segment_len,
            "n_segments": self.n_segments,
            "n_words": int(self.word_ids.size),
        }


@dataclass(frozen=True, eq=False)
class AcfSeries:
    q: int
    intervals: np.ndarray
    c: np.ndarray
    verdict: str
    fit: Optional[PowerLawFit]
    fit_max_lag: int

    @property
    def lags(self) -> np.ndarray:
        return np.arange(1, self.c.size + 1)

    @property
    def exponent(self) -> Optional[float]:
        """xi, the decay rate of c(s)"""
        return None if self.fit is None else -self.fit.exponent

    def points(self) -> PointSet:
        """The lags the exponent is fitted on: s <= fit_max_lag with c(s) > 0"""
        window = self.c[:self.fit_max_lag]
        return PointSet(self.lags[:window.size], window).positive()

    def to_dict(self) -> Dict:
        return {
            "q": self.q,
            "verdict": self.verdict,
            "exponent": self.exponent,
            "fit": None if self.fit is None else self.fit.to_dict(),
            "fit_max_lag": self.fit_max_lag,
            "max_lag": int(self.c.size),
            "n_intervals": int(self.intervals.size),
            "negative_lags": (np.flatnonzero(self.c[:self.fit_max_lag] < 0) + 1).tolist(),
        }


def _ranked(keys: np.ndarray, first: np.ndarray, counts: np.ndarray):
    order = np.lexsort((first, -counts))
    return keys[order], counts[order]


def zipf(stream: TokenStream, order: int = 1) -> RankFrequency:
    """
    Rank-frequency distribution of words (order 1) or overlapping word pairs (order 2)

    Ties in frequency keep first-occurrence order.
    """
    if order not in (1, 2):
        raise ParameterError(f"order must be 1 or 2, got {order}")
    tokens = stream.tokens
    if tokens.size < order:
        raise InsufficientDataError(f"stream of {tokens.size} tokens has no {order}-grams")
    if order == 1:
        values, first, counts = np.unique(tokens, return_index=True, return_counts=True)
        keys = values.reshape(-1, 1)
    else:
        width = max(len(stream.vocab), 1)
        pairs = tokens[:-1] * width + tokens[1:]
        values, first, counts = np.unique(pairs, return_index=True, return_counts=True)
        keys = np.stack([values // width, values % width], axis=1)
    keys, counts = _ranked(keys, first, counts)
    return RankFrequency(order, keys, counts)


def zipf_slope(rank_frequency: RankFrequency) -> Optional[PowerLawFit]:
    """Least-squares slope of log f on log r, for information"""
    return try_fit(rank_frequency.points())


def heaps(stream: TokenStream, samples_per_decade: int = 10) -> HeapsCurve:
    """Vocabulary size v(n) of every prefix length n on a log grid, fit v ~ n^beta"""
    total = len(stream)
    if total < 10:
        raise InsufficientDataError(f"Heaps analysis needs at least 10 tokens, got {total}")
    _, first = np.unique(stream.tokens, return_index=True)
    is_new = np.zeros(total, dtype=np.int64)
    is_new[first] = 1
    vocabulary = np.cumsum(is_new)
    n = log_spaced(1, total, samples_per_decade)
    v = vocabulary[n - 1]
    return HeapsCurve(n, v, fit_power_law(PointSet(n, v)))


def window_variance(codes: np.ndarray, n_symbols: int, window: int) -> float:
    """
    Summed population variance of per-window symbol counts

    The sequence is cut into floor(len / window) non-overlapping windows; the
    remainder is dropped. Computed with integer sums so periodic text yields
    exactly zero.
    """
    k = codes.size // window
    if k < 1:
        raise InsufficientDataError(f"no complete window of length {window}")
    used = codes[:k * window]
    cell = (np.arange(used.size, dtype=np.int64) // window) * n_symbols + used
    cells, cell_counts = np.unique(cell, return_counts=True)
    symbol = cells % n_symbols
    sum_sq = np.bincount(symbol, weights=cell_counts.astype(np.float64) ** 2, minlength=n_symbols)
    sum_sq = np.rint(sum_sq).astype(np.int64)
    totals = np.bincount(used, minlength=n_symbols).astype(np.int64)
    numerator = int(k * sum_sq.sum() - (totals * totals).sum())
    return numerator / float(k * k)


def ebeling(chars: CharStream, min_l: int = 10, max_l: Optional[int] = None,
            samples_per_decade: int = 10) -> FluctuationCurve:
    """
    Character fluctuation m(l) = sum over characters of the window-count variance

    Args:
        chars: Character stream
        min_l: Smallest window length
        max_l: Largest window length; defaults to length / 100
        samples_per_decade: Density of the logarithmic l grid

    Returns:
        FluctuationCurve over the lengths with m(l) > 0, fit m ~ l^eta
    """
    length = len(chars)
    if max_l is None:
        max_l = length // 100
    if min_l < 1:
        raise ParameterError(f"min_l must be >= 1, got {min_l}")
    if max_l < min_l or length < 10 * max_l:
        raise InsufficientDataError(
            f"{length} characters are too few for windows up to {max_l} (need >= 10 windows of length >= {min_l})"
        )
    codes = np.searchsorted(chars.alphabet, chars.chars).astype(np.int64)
    lengths = log_spaced(min_l, max_l, samples_per_decade)
    m = np.array([window_variance(codes, chars.alphabet.size, int(l)) for l in lengths])

    keep = m > 0
    if keep.sum() < 2:
        raise DegenerateFitError(f"only {int(keep.sum())} window lengths have nonzero fluctuation")
    if not keep.all():
        logger.debug(f"Ebeling: dropped {int((~keep).sum())} zero-variance window lengths")
    lengths, m = lengths[keep], m[keep]
    return FluctuationCurve(lengths, m, fit_power_law(PointSet(lengths, m)))


def taylor(stream: TokenStream, segment_len: int = 5620) -> TaylorScatter:
    """
    Per-word mean and standard deviation of counts over fixed-length segments

    The stream is cut into floor(N / l) segments (remainder discarded). Words
    with zero deviation are left out of the fit.
    """
    if segment_len < 2:
        raise ParameterError(f"segment length must be >= 2, got {segment_len}")
    k = len(stream) // segment_len
    if k < 2:
        raise InsufficientDataError(
            f"{len(stream)} tokens give {k} segment(s) of length {segment_len}; need at least 2"
        )
    width = len(stream.vocab)
    used = stream.tokens[:k * segment_len]
    cell = (np.arange(used.size, dtype=np.int64) // segment_len) * width + used
    cells, cell_counts = np.unique(cell, return_counts=True)
    word = cells % width
    s1 = np.bincount(word, weights=cell_counts.astype(np.float64), minlength=width)
    s2 = np.bincount(word, weights=cell_counts.astype(np.float64) ** 2, minlength=width)
    s1 = np.rint(s1).astype(np.int64)
    s2 = np.rint(s2).astype(np.int64)

    variance_numerator = k * s2 - s1 * s1
    keep = np.flatnonzero((s1 > 0) & (variance_numerator > 0))
    if keep.size == 0:
        raise DegenerateFitError("every word has zero deviation across segments")
    mu = s1[keep] / float(k)
    sigma = np.sqrt(variance_numerator[keep].astype(np.float64)) / k
    fit = fit_power_law(PointSet(mu, sigma))
    return TaylorScatter(segment_len, k, keep, mu, sigma, fit)


def rare_word_intervals(stream: TokenStream, q: int = 16) -> np.ndarray:
    """
    Return intervals between occurrences of the rarest words

    Word types are taken from the least frequent upwards (equal frequencies:
    the later first occurrence first) until their total count reaches N / q;
    a type is never split. The result holds the gaps between successive
    positions of any selected type.
    """
    if q < 2:
        raise ParameterError(f"Q must be >= 2, got {q}")
    total = len(stream)
    if total < q:
        raise InsufficientDataError(f"{total} tokens are fewer than Q={q}")
    types, first, counts = np.unique(stream.tokens, return_index=True, return_counts=True)
    order = np.lexsort((-first, counts))
    covered = np.cumsum(counts[order]) * q >= total
    n_selected = int(np.argmax(covered)) + 1

    selected = np.zeros(len(stream.vocab), dtype=bool)
    selected[types[order[:n_selected]]] = True
    positions = np.flatnonzero(selected[stream.tokens])
    if positions.size < 2:
        raise InsufficientDataError(f"only {positions.size} rare-word occurrence(s) selected")
    return np.diff(positions)


def acf(series, max_lag: int) -> np.ndarray:
    """
    Autocorrelation c(s) for s = 1..max_lag around the global mean and variance

    Returns:
        Array whose element s-1 is c(s)
    """
    x = np.asarray(series, dtype=np.float64)
    if max_lag < 1:
        raise ParameterError(f"max_lag must be >= 1, got {max_lag}")
    if x.size <= max_lag + 1:
        raise InsufficientDataError(f"series of length {x.size} is too short for lag {max_lag}")
    deviation = x - x.mean()
    variance = float(np.mean(deviation * deviation))
    if variance <= 0.0:
        raise DegenerateFitError("series has zero variance")
    size = x.size
    c = np.empty(max_lag)
    for s in range(1, max_lag + 1):
        c[s - 1] = np.dot(deviation[:size - s], deviation[s:]) / (size - s) / variance
    return c


def lrc_verdict(c: np.ndarray) -> str:
    """No: 2+ negatives among c(1..10); Weak: exactly one negative among c(1..100); else Positive"""
    c = np.asarray(c)
    if int((c[:10] < 0).sum()) >= 2:
        return NO
    if int((c[:100] < 0).sum()) == 1:
        return WEAK
    return POSITIVE


def lrc_analyze(stream: TokenStream, q: int = 16, fit_max_lag: int = 100,
                max_lag: int = 1000) -> AcfSeries:
    """
    Long-range correlation of rare-word return intervals

    Positive and Weak series are fitted as c(s) ~ s^-xi over the positive
    values with s <= fit_max_lag.
    """
    intervals = rare_word_intervals(stream, q)
    max_lag = min(max_lag, intervals.size - 2)
    if max_lag < 1:
        raise InsufficientDataError(f"{intervals.size} intervals are too few for an autocorrelation")
    c = acf(intervals, max_lag)
    verdict = lrc_verdict(c)

    series = AcfSeries(q, intervals, c, verdict, None, fit_max_lag)
    if verdict == NO:
        return series
    return replace(series, fit=try_fit(series.points()))


def q1_verdict(prop: str, result) -> str:
    """Does the law hold qualitatively"""
    if result is None:
        return BLANK
    if prop == "zipf":
        rank_frequency, slope = result
        distinct = np.unique(rank_frequency.frequencies).size
        return "Yes" if slope is not None and slope.exponent < 0 and distinct >= 2 else "No"
    if prop == "heaps":
        return "Yes" if 0.0 < result.exponent < 1.0 else "No"
    if prop == "ebeling":
        return "Yes" if result.exponent > EBELING_IID_MARGIN else "No"
    if prop == "taylor":
        return "Yes" if result.exponent > TAYLOR_IID_MARGIN else "No"
    if prop == "lrc":
        return result.verdict
    raise ValueError(f"unknown property {prop}")


@dataclass
class ScalingReport:
    """Results of the five analyses on one stream"""

    n_tokens: int
    n_types: int
    zipf: Optional[RankFrequency] = None
    zipf_bigram: Optional[RankFrequency] = None
    zipf_fit: Optional[PowerLawFit] = None
    heaps: Optional[HeapsCurve] = None
    ebeling: Optional[FluctuationCurve] = None
    taylor: Optional[TaylorScatter] = None
    lrc: Optional[AcfSeries] = None
    errors: Dict[str, Dict[str, str]] = field(default_factory=dict)
    skipped: List[str] = field(default_factory=list)
    q1_verdicts: Dict[str, str] = field(default_factory=dict)
    q2_deltas: Dict[str, Optional[float]] = field(default_factory=dict)

    def exponents(self) -> Dict[str, Optional[float]]:
        return {
            "zipf": None if self.zipf_fit is None else -self.zipf_fit.exponent,
            "heaps": None if self.heaps is None else self.heaps.exponent,
            "ebeling": None if self.ebeling is None else self.ebeling.exponent,
            "taylor": None if self.taylor is None else self.taylor.exponent,
            "lrc": None if self.lrc is None else self.lrc.exponent,
        }

    def rms_errors(self) -> Dict[str, Optional[float]]:
        fits = {
            "zipf": self.zipf_fit,
            "heaps": self.heaps.fit if self.heaps else None,
            "ebeling": self.ebeling.fit if self.ebeling else None,
            "taylor": self.taylor.fit if self.taylor else None,
            "lrc": self.lrc.fit if self.lrc else None,
        }
        return {name: None if fit is None else fit.rms_error for name, fit in fits.items()}

    def point_sets(self) -> Dict[str, PointSet]:
        """Every measured point set, keyed by the file stem it is written under"""
        sets = {}
        if self.zipf is not None:
            sets["zipf"] = self.zipf.points()
        if self.zipf_bigram is not None:
            sets["zipf_bigram"] = self.zipf_bigram.points()
        for name in ("heaps", "ebeling", "taylor", "lrc"):
            result = getattr(self, name)
            if result is not None:
                sets[name] = result.points()
        return sets

    def to_dict(self, stream: Optional[TokenStream] = None) -> Dict:
        sections = {}
        if self.zipf is not None:
            sections["zipf"] = {
                "unigram": self.zipf.to_dict(stream),
                "bigram": None if self.zipf_bigram is None else self.zipf_bigram.to_dict(stream),
                "fit": None if self.zipf_fit is None else self.zipf_fit.to_dict(),
            }
        for name in ("heaps", "ebeling", "taylor", "lrc"):
            result = getattr(self, name)
            if result is not None:
                sections[name] = result.to_dict()
        for name, error in self.errors.items():
            if name == "zipf_bigram" and "zipf" in sections:
                sections["zipf"]["bigram"] = error
            else:
                sections[name] = error
        for name in self.skipped:
            sections[name] = None
        return {
            "n_tokens": self.n_tokens,
            "n_types": self.n_types,
            "properties": sections,
            "exponents": self.exponents(),
            "q1_verdicts": self.q1_verdicts,
            "q2_deltas": self.q2_deltas,
        }


ReferenceLike = Union[ScalingReport, Mapping[str, Optional[float]]]


def reference_exponents(reference: Optional[ReferenceLike]) -> Optional[Dict[str, Optional[float]]]:
    if reference is None:
        return None
    if isinstance(reference, ScalingReport):
        return reference.exponents()
    return {name: reference.get(name) for name in PROPERTIES}


def _run(report: ScalingReport, name: str, analysis):
    try:
        return analysis()
    except (ScalingEvalError, ValueError) as e:
        logger.warning(f"{name} analysis failed: {e}")
        report.errors[name] = error_section(e)
        return None


def full_report(stream: TokenStream, config: Optional[AnalysisConfig] = None,
                reference: Optional[ReferenceLike] = None,
                include_ebeling: bool = True) -> ScalingReport:
    """
    Run all five analyses

    Args:
        stream: Analyzed text
        config: Analysis parameters (defaults when None)
        reference: Report or exponent mapping of the training data, for Q2 deltas
        include_ebeling: False for streams whose surfaces have no meaningful characters

    Returns:
        ScalingReport; sections that failed carry an error entry instead of a result
    """
    config = config or AnalysisConfig()
    report = ScalingReport(n_tokens=len(stream), n_types=int(np.count_nonzero(stream.counts())))

    report.zipf = _run(report, "zipf", lambda: zipf(stream, 1))
    if report.zipf is not None:
        report.zipf_bigram = _run(report, "zipf_bigram", lambda: zipf(stream, 2))
        report.zipf_fit = zipf_slope(report.zipf)
    report.heaps = _run(report, "heaps", lambda: heaps(stream, config.heaps_samples_per_decade))
    if include_ebeling:
        report.ebeling = _run(report, "ebeling", lambda: ebeling(
            to_char_stream(stream), config.ebeling_min_l, config.ebeling_max_l,
            config.ebeling_samples_per_decade))
    else:
        report.skipped.append("ebeling")
    report.taylor = _run(report, "taylor", lambda: taylor(stream, config.taylor_l))
    report.lrc = _run(report, "lrc", lambda: lrc_analyze(
        stream, config.lrc_q, config.fit_max_lag, config.acf_max_lag))

    report.q1_verdicts = {
        "zipf": q1_verdict("zipf", None if report.zipf is None else (report.zipf, report.zipf_fit)),
        "heaps": q1_verdict("heaps", report.heaps),
        "ebeling": q1_verdict("ebeling", report.ebeling),
        "taylor": q1_verdict("taylor", report.taylor),
        "lrc": q1_verdict("lrc", report.lrc),
    }

    reference = reference_exponents(reference)
    if reference is not None:
        own = report.exponents()
        report.q2_deltas = {
            name: None if own[name] is None or reference.get(name) is None else own[name] - reference[name]
            for name in PROPERTIES
        }
    logger.info(
        f"Analyzed {report.n_tokens} tokens: "
        + ", ".join(f"{name}={value:.3f}" for name, value in report.exponents().items() if value is not None)
    )
    return report
