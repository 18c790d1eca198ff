"""
N-gram language models

Counts for every order up to n are kept in sorted tables; an order-k entry is
keyed by (id of its (k-1)-gram prefix) * V + last token, so the continuations
of one context are a contiguous slice. Four estimators share the tables:
maximum likelihood, linear interpolation, Katz backoff and interpolated
Kneser-Ney. Text is a single continuous stream; no sentence boundaries.
"""

import itertools
import json
import logging
import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from config import TOOL_NAME, TOOL_VERSION
from corpus.textio import UNK, TokenStream, Vocabulary, remap
from errors import InputFormatError, InsufficientDataError, InvariantViolation
from models.processes import UniformStream

logger = logging.getLogger(__name__)

MODEL_FORMAT = f"{TOOL_NAME}/ngram"
MODEL_VERSION = 1

SMOOTHING_SCHEMES = ("mle", "interp", "katz", "kn")

LAMBDA_STEP = 0.05
# grid points evaluated per matrix product
LAMBDA_BATCH = 64
KATZ_MAX_REJECTIONS = 1000
KATZ_DEGENERATE_MASS = 1e-12


def _lookup(keys: np.ndarray, query) -> np.ndarray:
    """Index of each query key in the sorted key array, or -1"""
    query = np.asarray(query, dtype=np.int64)
    if keys.size == 0:
        return np.full(query.shape, -1, dtype=np.int64)
    index = np.searchsorted(keys, query)
    clipped = np.minimum(index, keys.size - 1)
    found = (keys[clipped] == query) & (query >= 0)
    return np.where(found, clipped, -1)


@dataclass(eq=False)
class NGramTable:
    """All n-grams of one order"""

    keys: np.ndarray
    counts: np.ndarray
    n_parents: int
    width: int
    suffix: Optional[np.ndarray] = None
    parent: np.ndarray = field(init=False, repr=False)
    token: np.ndarray = field(init=False, repr=False)
    starts: np.ndarray = field(init=False, repr=False)
    totals: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        self.keys = np.asarray(self.keys, dtype=np.int64)
        self.counts = np.asarray(self.counts, dtype=np.int64)
        if self.keys.shape != self.counts.shape:
            raise InvariantViolation("n-gram keys and counts differ in length")
        if self.keys.size > 1 and np.any(np.diff(self.keys) <= 0):
            raise InvariantViolation("n-gram keys must be strictly increasing")
        self.parent = self.keys // self.width
        self.token = self.keys % self.width
        self.starts = np.searchsorted(self.keys, np.arange(self.n_parents + 1, dtype=np.int64) * self.width)
        self.totals = np.bincount(self.parent, weights=self.counts, minlength=self.n_parents)

    def __len__(self) -> int:
        return int(self.keys.size)

    def find(self, parent: int, token: int) -> int:
        if parent < 0:
            return -1
        return int(_lookup(self.keys, parent * self.width + token))


def build_tables(tokens: np.ndarray, width: int, order: int) -> List[NGramTable]:
    """
    Count every k-gram of the stream for k = 1..order

    Args:
        tokens: Token ids, each < width
        width: Vocabulary size V
        order: Highest order n

    Returns:
        One NGramTable per order, suffix links filled in
    """
    tokens = np.asarray(tokens, dtype=np.int64)
    keys, ids, counts = np.unique(tokens, return_inverse=True, return_counts=True)
    tables = [NGramTable(keys, counts, 1, width)]
    ids = ids.reshape(-1)
    for k in range(1, order):
        if tokens.size <= k:
            tables.append(NGramTable(np.zeros(0), np.zeros(0), len(tables[-1]), width))
            ids = np.zeros(0, dtype=np.int64)
            continue
        raw = ids[:tokens.size - k] * width + tokens[k:]
        keys, ids, counts = np.unique(raw, return_inverse=True, return_counts=True)
        ids = ids.reshape(-1)
        tables.append(NGramTable(keys, counts, len(tables[-1]), width))
    link_suffixes(tables)
    return tables


def link_suffixes(tables: List[NGramTable]):
    """suffix[e] = id of the entry's last k-1 tokens in the order k-1 table"""
    width = tables[0].width
    for k in range(1, len(tables)):
        table = tables[k]
        if k == 1:
            table.suffix = _lookup(tables[0].keys, table.token)
        else:
            upper = tables[k - 1].suffix[table.parent]
            table.suffix = _lookup(tables[k - 1].keys, np.where(upper >= 0, upper * width + table.token, -1))
        if np.any(table.suffix < 0):
            raise InvariantViolation(f"order {k + 1} n-gram without its lower-order suffix")


def chain_ids(tables: List[NGramTable], tokens: np.ndarray) -> List[np.ndarray]:
    """
    Table ids of the k-gram ending at every position

    Returns:
        List indexed by k-1; element i is the id of tokens[i-k+1:i+1] in the
        order k table, -1 if unseen or if i < k-1
    """
    tokens = np.asarray(tokens, dtype=np.int64)
    width = tables[0].width
    ending = [_lookup(tables[0].keys, tokens)]
    for k in range(1, len(tables)):
        previous = ending[-1]
        query = np.full(tokens.size, -1, dtype=np.int64)
        if tokens.size > 1:
            query[1:] = np.where(previous[:-1] >= 0, previous[:-1] * width + tokens[1:], -1)
        ending.append(_lookup(tables[k].keys, query))
    return ending


def _context_ids(ending: List[np.ndarray], k: int) -> np.ndarray:
    """Ids of the (k-1)-gram contexts preceding every position, for the order k table"""
    size = ending[0].size
    if k == 1:
        return np.zeros(size, dtype=np.int64)
    context = np.full(size, -1, dtype=np.int64)
    context[1:] = ending[k - 2][:-1]
    return context


def _positional_orders(size: int, order: int) -> np.ndarray:
    """The first positions only have a shorter history"""
    return np.minimum(np.arange(size) + 1, order)


def gt_discounts(counts: np.ndarray, threshold: int = 5) -> np.ndarray:
    """
    Katz / Good-Turing discount ratios d_r = r* / r

    r* = (r+1) N_{r+1} / N_r for 1 <= r <= K; counts above K are not
    discounted. Where r* is not strictly between 0 and r (N_{r+1} = 0, or
    a count-of-counts curve that rises) the ratio is (r - 0.5) / r.

    Returns:
        Array indexed by r = 0..K (index 0 unused, set to 1)
    """
    counts = np.asarray(counts, dtype=np.int64)
    n_r = np.bincount(counts[counts > 0], minlength=threshold + 2).astype(np.float64)
    ratios = np.ones(threshold + 1)
    for r in range(1, threshold + 1):
        discounted = (r + 1) * n_r[r + 1] / n_r[r] if n_r[r] > 0 else 0.0
        if 0.0 < discounted < r:
            ratios[r] = discounted / r
        else:
            logger.debug(f"Good-Turing r*={discounted:.4f} unusable at r={r}; absolute discount 0.5")
            ratios[r] = (r - 0.5) / r
    return ratios


def kn_discount(values: np.ndarray) -> float:
    """D = n1 / (n1 + 2 n2) over the counts of one order; 0.5 when undefined"""
    values = np.asarray(values)
    n1 = int(np.count_nonzero(values == 1))
    n2 = int(np.count_nonzero(values == 2))
    if n1 + 2 * n2 == 0:
        return 0.5
    return n1 / (n1 + 2 * n2)


def lambda_grid(order: int, step: float = LAMBDA_STEP) -> np.ndarray:
    """Every weight vector on the simplex with coordinates in multiples of step"""
    units = int(round(1.0 / step))
    rows = []
    for bars in itertools.combinations(range(units + order - 1), order - 1):
        edges = (-1,) + bars + (units + order - 1,)
        rows.append([edges[i + 1] - edges[i] - 1 for i in range(order)])
    return np.array(rows, dtype=np.float64) / units


def _mle_columns(tables: List[NGramTable], ending: List[np.ndarray], orders: np.ndarray):
    """
    Per-order maximum-likelihood probability of the token at every position

    Returns:
        (probabilities, seen) of shape (positions, n); seen marks orders
        whose context occurred, columns beyond a position's order are unset
    """
    size = orders.size
    n = len(tables)
    probabilities = np.zeros((size, n))
    seen = np.zeros((size, n), dtype=bool)
    for k in range(1, n + 1):
        table = tables[k - 1]
        context = _context_ids(ending, k)
        usable = (orders >= k) & (context >= 0)
        totals = np.zeros(size)
        totals[usable] = table.totals[context[usable]]
        usable &= totals > 0
        full = ending[k - 1]
        hit = usable & (full >= 0)
        probabilities[hit, k - 1] = table.counts[full[hit]] / totals[hit]
        seen[:, k - 1] = usable
    return probabilities, seen


def _interpolate(probabilities: np.ndarray, seen: np.ndarray, weights: np.ndarray) -> np.ndarray:
    """Mixture over the orders with a seen context; highest seen order when their weight is zero"""
    numerator = probabilities @ weights.T
    denominator = seen.astype(np.float64) @ weights.T
    highest = seen.shape[1] - 1 - np.argmax(seen[:, ::-1], axis=1)
    fallback = probabilities[np.arange(probabilities.shape[0]), highest]
    if numerator.ndim == 2:
        fallback = fallback[:, None]
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(denominator > 0, numerator / np.where(denominator > 0, denominator, 1.0), fallback)


def estimate_lambdas(stream_tokens: np.ndarray, width: int, order: int,
                     held_out_fraction: float) -> np.ndarray:
    """
    Interpolation weights maximizing held-out log-likelihood

    Counts come from the head of the stream and the tail is scored with them;
    tail tokens that never occur in the head are left out.
    """
    if order == 1:
        return np.ones(1)
    cut = len(stream_tokens) - int(round(len(stream_tokens) * held_out_fraction))
    uniform = np.full(order, 1.0 / order)
    if cut < order or cut >= len(stream_tokens):
        logger.warning("No usable held-out split for interpolation weights; using equal weights")
        return uniform

    head = build_tables(stream_tokens[:cut], width, order)
    ending = chain_ids(head, stream_tokens)
    orders = _positional_orders(len(stream_tokens), order)
    probabilities, seen = _mle_columns(head, ending, orders)
    scored = np.arange(len(stream_tokens)) >= cut
    scored &= ending[0] >= 0
    probabilities, seen = probabilities[scored], seen[scored]
    if probabilities.shape[0] == 0:
        logger.warning("Held-out tail has no tokens seen in the head; using equal weights")
        return uniform

    grid = lambda_grid(order)
    best, best_score = uniform, -math.inf
    for start in range(0, grid.shape[0], LAMBDA_BATCH):
        batch = grid[start:start + LAMBDA_BATCH]
        mixed = _interpolate(probabilities, seen, batch)
        with np.errstate(divide="ignore"):
            scores = np.log(mixed).sum(axis=0)
        index = int(np.argmax(scores))
        if scores[index] > best_score:
            best, best_score = batch[index], float(scores[index])
    logger.info(f"Interpolation weights {best.tolist()} (held-out log-likelihood {best_score:.2f})")
    return best


@dataclass(frozen=True)
class PerplexityResult:
    """exp of the negative mean natural-log probability"""

    value: float
    n_tokens: int
    oov_handling: str
    n_oov: int = 0
    n_zero: int = 0
    n_uniform_fallback: int = 0

    @property
    def infinite(self) -> bool:
        return math.isinf(self.value)

    def to_dict(self) -> Dict:
        return {
            "value": None if self.infinite else self.value,
            "infinite": self.infinite,
            "n_tokens": self.n_tokens,
            "oov_handling": self.oov_handling,
            "n_oov": self.n_oov,
            "n_zero_probability": self.n_zero,
            "n_uniform_fallback": self.n_uniform_fallback,
        }


class NGramModel:
    """Immutable n-gram model over a compact vocabulary"""

    def __init__(self, vocab: Vocabulary, tables: List[NGramTable], smoothing: str,
                 lambdas: Optional[Sequence[float]] = None,
                 discounts: Optional[Sequence[float]] = None,
                 katz_threshold: int = 5):
        if smoothing not in SMOOTHING_SCHEMES:
            raise ValueError(f"unknown smoothing '{smoothing}', expected one of {SMOOTHING_SCHEMES}")
        self.vocab = vocab
        self.tables = tables
        self.order = len(tables)
        self.width = len(vocab)
        self.smoothing = smoothing
        self.katz_threshold = katz_threshold
        self.lambdas = None if lambdas is None else np.asarray(lambdas, dtype=np.float64)
        self.discounts = None if discounts is None else [float(d) for d in discounts]
        self._prepare()

    def _prepare(self):
        if self.smoothing == "interp":
            if self.lambdas is None or self.lambdas.shape != (self.order,):
                raise InvariantViolation(f"interpolation needs {self.order} weights")
        if self.smoothing in ("mle", "interp"):
            self._weights = [t.counts.astype(np.float64) for t in self.tables]
        elif self.smoothing == "kn":
            self._prepare_kneser_ney()
        else:
            self._prepare_katz()
        self._prefix = [np.concatenate(([0.0], np.cumsum(w))) for w in self._weights]

    def _prepare_kneser_ney(self):
        # highest order counts tokens, lower orders count distinct left extensions
        self._kn_counts = []
        for k in range(1, self.order + 1):
            if k == self.order:
                values = self.tables[k - 1].counts.astype(np.float64)
            else:
                values = np.bincount(self.tables[k].suffix, minlength=len(self.tables[k - 1])).astype(np.float64)
            self._kn_counts.append(values)
        if self.discounts is None:
            self.discounts = [kn_discount(values) for values in self._kn_counts]
        self._kn_mass = []
        self._kn_backoff = []
        self._weights = []
        for k, values in enumerate(self._kn_counts, start=1):
            table = self.tables[k - 1]
            discount = self.discounts[k - 1]
            mass = np.bincount(table.parent, weights=values, minlength=table.n_parents)
            distinct = np.bincount(table.parent, weights=(values > 0).astype(np.float64), minlength=table.n_parents)
            with np.errstate(divide="ignore", invalid="ignore"):
                backoff = np.where(mass > 0, discount * distinct / np.where(mass > 0, mass, 1.0), 1.0)
            self._kn_mass.append(mass)
            self._kn_backoff.append(backoff)
            self._weights.append(np.maximum(values - discount, 0.0))

    def _prepare_katz(self):
        self._katz_ratios = []
        self._katz_prob = []
        self._katz_alpha = []
        unigram = self.tables[0]
        self._katz_prob.append(unigram.counts / unigram.totals[0])
        self._katz_alpha.append(np.zeros(1))
        self._katz_ratios.append(np.ones(self.katz_threshold + 1))
        for k in range(2, self.order + 1):
            table = self.tables[k - 1]
            ratios = gt_discounts(table.counts, self.katz_threshold)
            factor = np.ones(len(table))
            small = table.counts <= self.katz_threshold
            factor[small] = ratios[table.counts[small]]
            with np.errstate(divide="ignore", invalid="ignore"):
                mle = table.counts / table.totals[table.parent]
            discounted = factor * mle
            kept = 1.0 - np.bincount(table.parent, weights=discounted, minlength=table.n_parents)
            lower = 1.0 - np.bincount(table.parent, weights=self._katz_prob[k - 2][table.suffix],
                                      minlength=table.n_parents)
            degenerate = lower <= KATZ_DEGENERATE_MASS
            # contexts followed by every word keep their maximum-likelihood estimate
            probability = np.where(degenerate[table.parent], mle, discounted)
            with np.errstate(divide="ignore", invalid="ignore"):
                alpha = np.where(degenerate | (table.totals <= 0), 0.0,
                                 np.maximum(kept, 0.0) / np.where(degenerate, 1.0, lower))
            self._katz_ratios.append(ratios)
            self._katz_prob.append(probability)
            self._katz_alpha.append(alpha)
        self._weights = [p.astype(np.float64) for p in self._katz_prob]

    # ---- context handling ----

    def _context_chain(self, context: Sequence[int]) -> List[int]:
        """chain[j] = id of the last j context tokens in the order j table (chain[0] = 0)"""
        chain = [0]
        for j in range(1, len(context) + 1):
            gram_id = 0
            parent = 0
            for position, token in enumerate(context[len(context) - j:]):
                gram_id = self.tables[position].find(parent, int(token))
                if gram_id < 0:
                    break
                parent = gram_id
            chain.append(gram_id)
        return chain

    def _seen(self, k: int, context_id: int) -> bool:
        if context_id < 0:
            return False
        if self.smoothing == "kn":
            return self._kn_mass[k - 1][context_id] > 0
        return self.tables[k - 1].totals[context_id] > 0

    def _usable_context(self, context: Sequence[int]) -> List[int]:
        context = [int(t) for t in context][max(0, len(context) - (self.order - 1)):]
        for token in context:
            if not 0 <= token < self.width:
                raise InvariantViolation(f"token id {token} outside the model vocabulary")
        return context

    def is_fallback(self, context: Sequence[int]) -> bool:
        """True when maximum likelihood has no data for this context and answers uniformly"""
        context = self._usable_context(context)
        chain = self._context_chain(context)
        return self.smoothing == "mle" and not self._seen(len(context) + 1, chain[len(context)])

    def distribution(self, context: Sequence[int]) -> np.ndarray:
        """
        Next-token distribution over the whole vocabulary

        Args:
            context: Preceding token ids; only the last n-1 are used and a
                shorter context uses the correspondingly lower order

        Returns:
            Probabilities indexed by token id, summing to 1
        """
        context = self._usable_context(context)
        chain = self._context_chain(context)
        top = len(context) + 1

        if self.smoothing == "mle":
            if not self._seen(top, chain[top - 1]):
                return np.full(self.width, 1.0 / self.width)
            return self._slice_distribution(top, chain[top - 1], self.tables[top - 1].counts)

        if self.smoothing == "interp":
            total = np.zeros(self.width)
            weight = 0.0
            highest = None
            for k in range(1, top + 1):
                if self._seen(k, chain[k - 1]):
                    highest = k
                    total += self.lambdas[k - 1] * self._slice_distribution(k, chain[k - 1], self.tables[k - 1].counts)
                    weight += self.lambdas[k - 1]
            if weight > 0:
                return total / weight
            return self._slice_distribution(highest, chain[highest - 1], self.tables[highest - 1].counts)

        if self.smoothing == "kn":
            distribution = np.full(self.width, 1.0 / self.width)
            for k in range(1, top + 1):
                context_id = chain[k - 1]
                if not self._seen(k, context_id):
                    continue
                table = self.tables[k - 1]
                lo, hi = table.starts[context_id], table.starts[context_id + 1]
                distribution = distribution * self._kn_backoff[k - 1][context_id]
                distribution[table.token[lo:hi]] += self._weights[k - 1][lo:hi] / self._kn_mass[k - 1][context_id]
            return distribution

        return self._katz_distribution_at(top, chain)

    def _slice_distribution(self, k: int, context_id: int, values: np.ndarray) -> np.ndarray:
        table = self.tables[k - 1]
        lo, hi = table.starts[context_id], table.starts[context_id + 1]
        distribution = np.zeros(self.width)
        distribution[table.token[lo:hi]] = values[lo:hi] / table.totals[context_id]
        return distribution

    def prob(self, context: Sequence[int], token: int) -> float:
        """q(token | context)"""
        return float(self.distribution(context)[int(token)])

    # ---- scoring ----

    def log_probs(self, tokens: np.ndarray) -> Tuple[np.ndarray, int]:
        """
        Natural-log probability of every token given its history in the stream

        Returns:
            (log probabilities, number of positions answered by the uniform fallback)
        """
        tokens = np.asarray(tokens, dtype=np.int64)
        ending = chain_ids(self.tables, tokens)
        orders = _positional_orders(tokens.size, self.order)
        fallbacks = 0

        if self.smoothing == "mle":
            probabilities, seen = _mle_columns(self.tables, ending, orders)
            rows = np.arange(tokens.size)
            q = probabilities[rows, orders - 1]
            unseen = ~seen[rows, orders - 1]
            q[unseen] = 1.0 / self.width
            fallbacks = int(unseen.sum())
        elif self.smoothing == "interp":
            probabilities, seen = _mle_columns(self.tables, ending, orders)
            q = _interpolate(probabilities, seen, self.lambdas)
        elif self.smoothing == "kn":
            q = np.full(tokens.size, 1.0 / self.width)
            for k in range(1, self.order + 1):
                context = _context_ids(ending, k)
                active = orders >= k
                active[active] = context[active] >= 0
                active[active] = self._kn_mass[k - 1][context[active]] > 0
                full = ending[k - 1]
                weight = np.zeros(tokens.size)
                hit = active & (full >= 0)
                weight[hit] = self._weights[k - 1][full[hit]]
                rows = np.flatnonzero(active)
                q[rows] = (weight[rows] / self._kn_mass[k - 1][context[rows]]
                           + self._kn_backoff[k - 1][context[rows]] * q[rows])
        else:
            q = np.zeros(tokens.size)
            known = ending[0] >= 0
            q[known] = self._katz_prob[0][ending[0][known]]
            for k in range(2, self.order + 1):
                context = _context_ids(ending, k)
                active = orders >= k
                active[active] = context[active] >= 0
                active[active] = self.tables[k - 1].totals[context[active]] > 0
                full = ending[k - 1]
                hit = active & (full >= 0)
                q[hit] = self._katz_prob[k - 1][full[hit]]
                miss = active & (full < 0)
                q[miss] = self._katz_alpha[k - 1][context[miss]] * q[miss]

        with np.errstate(divide="ignore"):
            return np.log(q), fallbacks

    def encode(self, stream: TokenStream) -> Tuple[TokenStream, int]:
        """Map a stream onto the model vocabulary; returns (stream, number of OOV tokens)"""
        if stream.vocab is self.vocab:
            return stream, 0
        encoded = remap(stream, self.vocab, UNK)
        unknown = self.vocab.id_of(UNK)
        n_oov = 0
        if unknown is not None:
            own_unknown = stream.vocab.id_of(UNK)
            was_unknown = stream.tokens == own_unknown if own_unknown is not None else False
            n_oov = int(np.count_nonzero((encoded.tokens == unknown) & ~np.asarray(was_unknown)))
        return encoded, n_oov

    # ---- sampling ----

    def _draw(self, k: int, context_id: int, u: float) -> int:
        table = self.tables[k - 1]
        prefix = self._prefix[k - 1]
        lo, hi = int(table.starts[context_id]), int(table.starts[context_id + 1])
        target = prefix[lo] + u * (prefix[hi] - prefix[lo])
        index = int(np.searchsorted(prefix, target, side="right")) - 1
        index = min(max(index, lo), hi - 1)
        while index > lo and self._weights[k - 1][index] <= 0:
            index -= 1
        return int(table.token[index])

    def _sample(self, top: int, chain: List[int], uniforms: UniformStream) -> int:
        if self.smoothing == "mle":
            for k in range(top, 0, -1):
                if self._seen(k, chain[k - 1]):
                    return self._draw(k, chain[k - 1], uniforms.next())

        if self.smoothing == "interp":
            seen = [k for k in range(1, top + 1) if self._seen(k, chain[k - 1])]
            chosen = seen[-1]
            total = sum(self.lambdas[k - 1] for k in seen)
            if total > 0:
                target = uniforms.next() * total
                running = 0.0
                for k in seen:
                    running += self.lambdas[k - 1]
                    if self.lambdas[k - 1] > 0 and target < running:
                        chosen = k
                        break
            return self._draw(chosen, chain[chosen - 1], uniforms.next())

        if self.smoothing == "kn":
            for k in range(top, 0, -1):
                context_id = chain[k - 1]
                if not self._seen(k, context_id):
                    continue
                if uniforms.next() >= self._kn_backoff[k - 1][context_id]:
                    return self._draw(k, context_id, uniforms.next())
            return min(int(uniforms.next() * self.width), self.width - 1)

        return self._sample_katz(top, chain, uniforms)

    def _sample_katz(self, k: int, chain: List[int], uniforms: UniformStream) -> int:
        # chain[j] covers the last j tokens, so lower orders read the same chain
        if k == 1:
            return self._draw(1, 0, uniforms.next())
        context_id = chain[k - 1]
        if not self._seen(k, context_id):
            return self._sample_katz(k - 1, chain, uniforms)
        table = self.tables[k - 1]
        lo, hi = int(table.starts[context_id]), int(table.starts[context_id + 1])
        kept = self._prefix[k - 1][hi] - self._prefix[k - 1][lo]
        if uniforms.next() < kept:
            return self._draw(k, context_id, uniforms.next())
        for _ in range(KATZ_MAX_REJECTIONS):
            token = self._sample_katz(k - 1, chain, uniforms)
            if table.find(context_id, token) < 0:
                return token
        weights = self._katz_backoff_weights(k, chain)
        index = int(np.searchsorted(np.cumsum(weights), uniforms.next() * weights.sum(), side="right"))
        return min(index, self.width - 1)

    def _katz_backoff_weights(self, k: int, chain: List[int]) -> np.ndarray:
        context_id = chain[k - 1]
        table = self.tables[k - 1]
        lower = self._katz_distribution_at(k - 1, chain)
        lo, hi = table.starts[context_id], table.starts[context_id + 1]
        lower[table.token[lo:hi]] = 0.0
        return lower

    def _katz_distribution_at(self, top: int, chain: List[int]) -> np.ndarray:
        distribution = np.zeros(self.width)
        distribution[self.tables[0].token] = self._katz_prob[0]
        for k in range(2, top + 1):
            context_id = chain[k - 1]
            if not self._seen(k, context_id):
                continue
            table = self.tables[k - 1]
            lo, hi = table.starts[context_id], table.starts[context_id + 1]
            distribution = distribution * self._katz_alpha[k - 1][context_id]
            distribution[table.token[lo:hi]] = self._katz_prob[k - 1][lo:hi]
        return distribution

    def generate(self, length: int, seed: int) -> TokenStream:
        """
        Sample a continuous stream

        The first n-1 tokens come from progressively higher orders (unigram,
        then bigram, ...), every later token from the full order.
        """
        if length < 1:
            raise ValueError(f"length must be >= 1, got {length}")
        uniforms = UniformStream(np.random.default_rng(seed))
        output = np.empty(length, dtype=np.int64)
        # ending[j]: id of the j-gram ending at the previous token (ending[0] = empty context)
        ending = [0] + [-1] * (self.order - 1)
        for t in range(length):
            top = min(self.order, t + 1)
            token = self._sample(top, ending, uniforms)
            output[t] = token
            updated = [0]
            for j in range(1, self.order):
                parent = ending[j - 1]
                updated.append(self.tables[j - 1].find(parent, token) if parent >= 0 else -1)
            ending = updated
        logger.info(f"Generated {length} tokens from {self.order}-gram {self.smoothing} model (seed {seed})")
        return TokenStream(output, self.vocab)

    # ---- persistence ----

    def parameters(self) -> Dict:
        return {
            "lambdas": None if self.lambdas is None else self.lambdas.tolist(),
            "discounts": self.discounts if self.smoothing == "kn" else None,
            "katz_threshold": self.katz_threshold,
        }

    def to_dict(self) -> Dict:
        return {
            "format": MODEL_FORMAT,
            "version": MODEL_VERSION,
            "tool_version": TOOL_VERSION,
            "order": self.order,
            "smoothing": self.smoothing,
            "parameters": self.parameters(),
            "vocabulary": list(self.vocab.id_to_surface),
            "tables": [{"keys": t.keys.tolist(), "counts": t.counts.tolist()} for t in self.tables],
        }

    @classmethod
    def from_dict(cls, data: Dict) -> "NGramModel":
        if data.get("format") != MODEL_FORMAT:
            raise InputFormatError(f"not an n-gram model file (format {data.get('format')!r})")
        if data.get("version") != MODEL_VERSION:
            raise InputFormatError(f"unsupported model version {data.get('version')!r}")
        surfaces = tuple(data["vocabulary"])
        width = len(surfaces)
        tables = []
        for entry in data["tables"]:
            n_parents = 1 if not tables else len(tables[-1])
            tables.append(NGramTable(np.array(entry["keys"], dtype=np.int64),
                                     np.array(entry["counts"], dtype=np.int64), n_parents, width))
        link_suffixes(tables)
        frequency = np.zeros(width, dtype=np.int64)
        frequency[tables[0].token] = tables[0].counts
        parameters = data.get("parameters", {})
        return cls(Vocabulary(surfaces, frequency), tables, data["smoothing"],
                   lambdas=parameters.get("lambdas"), discounts=parameters.get("discounts"),
                   katz_threshold=parameters.get("katz_threshold", 5))

    def save(self, path: str) -> str:
        with open(path, "w", encoding="utf-8") as f:
            json.dump(self.to_dict(), f, ensure_ascii=False, sort_keys=True)
        logger.info(f"Saved {self.order}-gram {self.smoothing} model to {path}")
        return path

    @classmethod
    def load(cls, path: str) -> "NGramModel":
        try:
            with open(path, "r", encoding="utf-8") as f:
                data = json.load(f)
        except OSError as e:
            raise InputFormatError(f"cannot read model: {e.strerror}", path=path)
        except json.JSONDecodeError as e:
            raise InputFormatError(f"model file is not JSON: {e.msg}", path=path, offset=e.pos)
        try:
            return cls.from_dict(data)
        except (KeyError, TypeError) as e:
            raise InputFormatError(f"model file is missing {e}", path=path)


def ngram_train(stream: TokenStream, order: int = 3, smoothing: str = "kn",
                held_out_fraction: float = 0.1, katz_threshold: int = 5) -> NGramModel:
    """
    Count and smooth an n-gram model

    Args:
        stream: Training stream
        order: n >= 1
        smoothing: One of mle, interp, katz, kn
        held_out_fraction: Tail fraction used to estimate interpolation weights
        katz_threshold: Counts up to this value are Good-Turing discounted

    Returns:
        NGramModel over the types occurring in the stream
    """
    if order < 1:
        raise ValueError(f"order must be >= 1, got {order}")
    if smoothing not in SMOOTHING_SCHEMES:
        raise ValueError(f"unknown smoothing '{smoothing}', expected one of {SMOOTHING_SCHEMES}")
    if len(stream) < order:
        raise InsufficientDataError(f"{len(stream)} tokens are too few for a {order}-gram model")

    compact = TokenStream.from_surfaces(stream.surfaces())
    width = len(compact.vocab)
    if width < 2:
        raise InsufficientDataError(f"need at least 2 word types, got {width}")

    lambdas = None
    if smoothing == "interp":
        lambdas = estimate_lambdas(compact.tokens, width, order, held_out_fraction)
    tables = build_tables(compact.tokens, width, order)
    model = NGramModel(compact.vocab, tables, smoothing, lambdas=lambdas, katz_threshold=katz_threshold)
    logger.info(
        f"Trained {order}-gram {smoothing} model: {len(compact)} tokens, {width} types, "
        f"{sum(len(t) for t in tables)} n-grams"
    )
    return model


def perplexity(model: NGramModel, stream: TokenStream) -> PerplexityResult:
    """
    exp(-(1/N) sum ln q(x_i | history))

    Unknown words are scored as <unk> when the model has it; a zero
    probability makes the result infinite rather than failing.
    """
    if len(stream) < 1:
        raise InsufficientDataError("cannot score an empty stream")
    encoded, n_oov = model.encode(stream)
    log_q, fallbacks = model.log_probs(encoded.tokens)
    zeros = int(np.count_nonzero(np.isneginf(log_q)))
    value = math.inf if zeros else float(np.exp(-np.mean(log_q)))
    handling = "unk" if model.vocab.id_of(UNK) is not None else "error"
    if zeros:
        logger.warning(f"{zeros} token(s) have zero probability; perplexity is infinite")
    return PerplexityResult(value, len(stream), handling, n_oov=n_oov, n_zero=zeros,
                            n_uniform_fallback=fallbacks)
