"""
Probabilistic context-free grammars

Grammar induction from a treebank (relative frequencies through nltk),
right-factored binarization, CKY Viterbi scoring in log space with a
precomputed unary closure, top-down sampling and the NLL-by-length profile.
Nonterminals are nltk Nonterminal objects and terminals are plain strings.
"""

import json
import logging
import math
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np
from nltk import Nonterminal, Tree, induce_pcfg
from nltk.grammar import PCFG, ProbabilisticProduction, Production, is_nonterminal
from scipy import stats

from corpus.textio import UNK, TokenStream
from corpus.treebank import Treebank, check_tree
from errors import InputFormatError, InsufficientDataError, InvariantViolation, VocabularyError
from models.processes import UniformStream

logger = logging.getLogger(__name__)

SUPER_ROOT = "ROOT"
FACTOR_SEPARATOR = "|"
PRETERMINAL_PREFIX = "T|"
NORMALIZATION_TOLERANCE = 1e-9
MAX_SAMPLE_NODES = 100_000
MAX_CONSECUTIVE_FAILURES = 1000
# uniforms drawn per refill when one seed yields one sentence
SENTENCE_BLOCK = 256


def _unk_hapax(trees: Sequence[Tree]) -> List[Tree]:
    frequency = Counter(word for tree in trees for word in tree.leaves())
    rewritten = []
    for tree in trees:
        copy = tree.copy(deep=True)
        for position in copy.treepositions("leaves"):
            if frequency[copy[position]] == 1:
                copy[position] = UNK
        rewritten.append(copy)
    return rewritten


def induce_grammar(treebank: Treebank, unk_hapax: bool = False) -> PCFG:
    """
    Relative-frequency PCFG of a treebank

    Args:
        treebank: Nonempty treebank
        unk_hapax: Replace words seen once with <unk> so unknown words can be parsed

    Returns:
        nltk PCFG whose start is the common root label, or a fresh ROOT over
        all observed root labels
    """
    if len(treebank) == 0:
        raise InsufficientDataError("cannot induce a grammar from an empty treebank")
    trees = list(treebank.trees)
    for index, tree in enumerate(trees):
        if not isinstance(tree, Tree):
            raise InputFormatError("not a tree", tree_index=index)
        check_tree(tree, index)
    if unk_hapax:
        trees = _unk_hapax(trees)

    productions = [production for tree in trees for production in tree.productions()]
    labels = {}
    for tree in trees:
        labels.setdefault(tree.label(), None)
    if len(labels) == 1:
        start = Nonterminal(next(iter(labels)))
    else:
        name = SUPER_ROOT
        existing = {p.lhs().symbol() for p in productions}
        while name in existing:
            name += "'"
        start = Nonterminal(name)
        productions += [Production(start, [Nonterminal(tree.label())]) for tree in trees]

    grammar = induce_pcfg(start, productions)
    logger.info(
        f"Induced grammar from {len(trees)} trees: {len(grammar.productions())} productions, "
        f"start {start.symbol()}"
    )
    return grammar


def check_normalized(grammar: PCFG, tolerance: float = NORMALIZATION_TOLERANCE):
    totals = defaultdict(float)
    for production in grammar.productions():
        if not production.prob() > 0.0:
            raise InvariantViolation(f"non-positive probability in {production}")
        totals[production.lhs()] += production.prob()
    for lhs, total in totals.items():
        if abs(total - 1.0) > tolerance:
            raise InvariantViolation(f"productions of {lhs} sum to {total!r}")


def terminals(grammar: PCFG) -> set:
    return {symbol for p in grammar.productions() for symbol in p.rhs() if not is_nonterminal(symbol)}


def is_cnf(grammar: PCFG) -> bool:
    """Binary rules over nonterminals, single-terminal lexical rules and nonterminal unaries"""
    for production in grammar.productions():
        rhs = production.rhs()
        if len(rhs) == 2 and all(is_nonterminal(s) for s in rhs):
            continue
        if len(rhs) == 1:
            continue
        return False
    return True


def binarize(grammar: PCFG) -> PCFG:
    """
    Right-factored binarization

    A -> B C D (p) becomes A -> B A|C.D (p) and A|C.D -> C D (1); a terminal
    inside a longer right-hand side gets its own preterminal T|word. Unary
    rules are kept; the parser closes over them.
    """
    existing = {p.lhs() for p in grammar.productions()}
    rules: Dict[Tuple, float] = {}
    order: List[Tuple] = []

    def add(lhs, rhs, prob):
        key = (lhs, tuple(rhs))
        if key in rules:
            if lhs in existing:
                rules[key] += prob
            return
        rules[key] = prob
        order.append(key)

    def fresh(name: str) -> Nonterminal:
        symbol = Nonterminal(name)
        if symbol in existing:
            raise InvariantViolation(f"binarization symbol {name} clashes with a grammar nonterminal")
        return symbol

    for production in grammar.productions():
        lhs, rhs, prob = production.lhs(), list(production.rhs()), production.prob()
        if len(rhs) <= 1:
            add(lhs, rhs, prob)
            continue
        symbols = []
        for symbol in rhs:
            if is_nonterminal(symbol):
                symbols.append(symbol)
            else:
                preterminal = fresh(PRETERMINAL_PREFIX + symbol)
                add(preterminal, [symbol], 1.0)
                symbols.append(preterminal)
        head = lhs
        while len(symbols) > 2:
            rest = symbols[1:]
            factored = fresh(lhs.symbol() + FACTOR_SEPARATOR + ".".join(s.symbol() for s in rest))
            add(head, [symbols[0], factored], prob)
            head, prob, symbols = factored, 1.0, rest
        add(head, symbols, prob)

    productions = [ProbabilisticProduction(lhs, list(rhs), prob=rules[(lhs, rhs)]) for lhs, rhs in order]
    binary = PCFG(grammar.start(), productions)
    logger.debug(f"Binarized {len(grammar.productions())} -> {len(productions)} productions")
    return binary


def unary_closure(edges: Dict[Tuple[int, int], float], nodes: Sequence[int]) -> np.ndarray:
    """
    Best log-probability of A =>* B through unary rules (0 on the diagonal)

    Args:
        edges: (A, B) -> log P(A -> B)
        nodes: Symbol indices taking part in unary rules

    Returns:
        Matrix over `nodes` in the given order
    """
    position = {node: i for i, node in enumerate(nodes)}
    closure = np.full((len(nodes), len(nodes)), -np.inf)
    np.fill_diagonal(closure, 0.0)
    for (a, b), log_p in edges.items():
        closure[position[a], position[b]] = max(closure[position[a], position[b]], log_p)
    for k in range(len(nodes)):
        closure = np.maximum(closure, closure[:, k:k + 1] + closure[k:k + 1, :])
    return closure


class CkyParser:
    """Viterbi CKY over a binarized grammar"""

    def __init__(self, grammar: PCFG, sentence_cap: int = 50):
        if not is_cnf(grammar):
            raise InvariantViolation("CKY needs a binarized grammar; call binarize first")
        self.grammar = grammar
        self.sentence_cap = sentence_cap
        symbols = sorted({p.lhs() for p in grammar.productions()} |
                         {s for p in grammar.productions() for s in p.rhs() if is_nonterminal(s)},
                         key=lambda s: s.symbol())
        self.symbols = symbols
        self.index = {symbol: i for i, symbol in enumerate(symbols)}
        self.start = self.index.get(grammar.start())

        lexicon: Dict[str, List[Tuple[int, float]]] = defaultdict(list)
        binary = []
        unary: Dict[Tuple[int, int], float] = {}
        for production in grammar.productions():
            lhs = self.index[production.lhs()]
            rhs = production.rhs()
            log_p = math.log(production.prob())
            if len(rhs) == 1 and not is_nonterminal(rhs[0]):
                lexicon[rhs[0]].append((lhs, log_p))
            elif len(rhs) == 1:
                key = (lhs, self.index[rhs[0]])
                unary[key] = max(unary.get(key, -math.inf), log_p)
            else:
                binary.append((lhs, self.index[rhs[0]], self.index[rhs[1]], log_p))

        self.lexicon = {
            word: (np.array([a for a, _ in entries], dtype=np.int64), np.array([lp for _, lp in entries]))
            for word, entries in lexicon.items()
        }
        rules = np.array(binary, dtype=np.float64).reshape(-1, 4)
        self.binary_lhs = rules[:, 0].astype(np.int64)
        self.binary_left = rules[:, 1].astype(np.int64)
        self.binary_right = rules[:, 2].astype(np.int64)
        self.binary_log_p = rules[:, 3]
        self.unary_nodes = np.array(sorted({a for a, _ in unary} | {b for _, b in unary}), dtype=np.int64)
        self.closure = unary_closure(unary, self.unary_nodes.tolist())

    def _close(self, cell: np.ndarray) -> np.ndarray:
        if self.unary_nodes.size:
            below = cell[self.unary_nodes]
            cell[self.unary_nodes] = np.max(self.closure + below[None, :], axis=1)
        return cell

    def _word(self, token: str) -> str:
        if token in self.lexicon:
            return token
        if UNK in self.lexicon:
            return UNK
        raise VocabularyError(f"word {token!r} is not a terminal of the grammar and it has no {UNK}")

    def nll(self, sentence: Sequence[str]) -> Optional[float]:
        """
        Negative log-likelihood (nats) of the best parse

        Returns:
            -ln P(best parse), or None when no parse exists
        """
        n = len(sentence)
        if n < 1:
            raise ValueError("cannot parse an empty sentence")
        if n > self.sentence_cap:
            raise ValueError(f"sentence of {n} tokens exceeds the cap of {self.sentence_cap}")
        words = [self._word(token) for token in sentence]
        if self.start is None:
            return None

        size = len(self.symbols)
        chart: Dict[Tuple[int, int], np.ndarray] = {}
        for i, word in enumerate(words):
            cell = np.full(size, -np.inf)
            lhs, log_p = self.lexicon[word]
            np.maximum.at(cell, lhs, log_p)
            chart[i, i + 1] = self._close(cell)

        for span in range(2, n + 1):
            for i in range(0, n - span + 1):
                j = i + span
                left = np.stack([chart[i, k] for k in range(i + 1, j)])
                right = np.stack([chart[k, j] for k in range(i + 1, j)])
                cell = np.full(size, -np.inf)
                if self.binary_lhs.size:
                    candidates = np.max(left[:, self.binary_left] + right[:, self.binary_right], axis=0)
                    candidates = candidates + self.binary_log_p
                    np.maximum.at(cell, self.binary_lhs, candidates)
                chart[i, j] = self._close(cell)

        best = chart[0, n][self.start]
        if not np.isfinite(best):
            return None
        return float(-best)


def viterbi_nll(grammar: Union[PCFG, CkyParser], sentence: Sequence[str],
                sentence_cap: int = 50) -> Optional[float]:
    """Best-parse NLL in nats; None marks an unparseable sentence"""
    if isinstance(grammar, CkyParser):
        return grammar.nll(sentence)
    parser = CkyParser(grammar if is_cnf(grammar) else binarize(grammar), sentence_cap)
    return parser.nll(sentence)


@dataclass(frozen=True)
class SampledSentence:
    tokens: Tuple[str, ...]
    log_prob: float
    depth_exceeded: bool = False


class GrammarSampler:
    """Top-down leftmost expansion by production probabilities"""

    def __init__(self, grammar: PCFG):
        self.start = grammar.start()
        self.choices: Dict[Nonterminal, Tuple[List[Tuple], List[float], List[float]]] = {}
        for lhs in {p.lhs() for p in grammar.productions()}:
            productions = grammar.productions(lhs=lhs)
            cumulative = np.cumsum([p.prob() for p in productions]).tolist()
            self.choices[lhs] = ([p.rhs() for p in productions], cumulative,
                                 [math.log(p.prob()) for p in productions])

    def sample(self, uniforms: UniformStream, max_depth: int = 100) -> SampledSentence:
        tokens: List[str] = []
        log_prob = 0.0
        stack = [(self.start, 0)]
        expanded = 0
        while stack:
            symbol, depth = stack.pop()
            if not is_nonterminal(symbol):
                tokens.append(symbol)
                continue
            expanded += 1
            if depth > max_depth or expanded > MAX_SAMPLE_NODES:
                return SampledSentence(tuple(tokens), log_prob, depth_exceeded=True)
            rhs_options, cumulative, log_probs = self.choices[symbol]
            target = uniforms.next() * cumulative[-1]
            choice = min(int(np.searchsorted(cumulative, target, side="right")), len(rhs_options) - 1)
            log_prob += log_probs[choice]
            for child in reversed(rhs_options[choice]):
                stack.append((child, depth + 1))
        return SampledSentence(tuple(tokens), log_prob)


def sample_sentence(grammar: Union[PCFG, GrammarSampler], seed: int, max_depth: int = 100) -> SampledSentence:
    """One sentence; a derivation deeper than max_depth comes back flagged, not raised"""
    sampler = grammar if isinstance(grammar, GrammarSampler) else GrammarSampler(grammar)
    return sampler.sample(UniformStream(np.random.default_rng(seed), block=SENTENCE_BLOCK), max_depth)


def generate_corpus(grammar: PCFG, length: int, seed: int, max_depth: int = 100) -> TokenStream:
    """Concatenate sampled sentences until `length` tokens; depth-exceeded draws are resampled"""
    if length < 1:
        raise ValueError(f"length must be >= 1, got {length}")
    sampler = GrammarSampler(grammar)
    uniforms = UniformStream(np.random.default_rng(seed))
    tokens: List[str] = []
    failures = 0
    sentences = 0
    while len(tokens) < length:
        sampled = sampler.sample(uniforms, max_depth)
        if sampled.depth_exceeded or not sampled.tokens:
            failures += 1
            if failures >= MAX_CONSECUTIVE_FAILURES:
                raise InsufficientDataError(
                    f"{failures} consecutive samples exceeded depth {max_depth}; the grammar does not terminate"
                )
            continue
        failures = 0
        sentences += 1
        tokens.extend(sampled.tokens)
    logger.info(f"Generated {length} tokens from {sentences} PCFG sentences (seed {seed})")
    return TokenStream.from_surfaces(tokens[:length])


@dataclass(frozen=True)
class ProfileRow:
    length: int
    mean: float
    minimum: float
    maximum: float
    count: int


@dataclass
class NllProfile:
    """NLL statistics per item length"""

    rows: List[ProfileRow] = field(default_factory=list)
    n_unparseable: int = 0
    n_skipped: int = 0
    n_unknown: int = 0
    correlation: Optional[float] = None

    def to_dict(self) -> Dict:
        return {
            "unit": "nats",
            "rows": [row.__dict__ for row in self.rows],
            "n_unparseable": self.n_unparseable,
            "n_skipped_over_cap": self.n_skipped,
            "n_unknown_word": self.n_unknown,
            "length_correlation": self.correlation,
        }


def nll_length_profile(grammar: Union[PCFG, CkyParser], items: Iterable[Sequence[str]],
                       sentence_cap: int = 50) -> NllProfile:
    """
    Mean / min / max best-parse NLL for every item length

    Items longer than the cap are skipped, items without a parse are counted
    apart; the Pearson correlation of (length, mean NLL) is attached when
    at least two lengths are present.
    """
    parser = grammar if isinstance(grammar, CkyParser) else CkyParser(binarize(grammar), sentence_cap)
    by_length: Dict[int, List[float]] = defaultdict(list)
    profile = NllProfile()
    for item in items:
        if len(item) == 0:
            continue
        if len(item) > parser.sentence_cap:
            profile.n_skipped += 1
            continue
        try:
            score = parser.nll(item)
        except VocabularyError:
            profile.n_unknown += 1
            continue
        if score is None:
            profile.n_unparseable += 1
            continue
        by_length[len(item)].append(score)

    for length in sorted(by_length):
        scores = np.array(by_length[length])
        profile.rows.append(ProfileRow(length, float(scores.mean()), float(scores.min()),
                                       float(scores.max()), int(scores.size)))
    if len(profile.rows) >= 2:
        lengths = [row.length for row in profile.rows]
        means = [row.mean for row in profile.rows]
        if np.ptp(means) > 0:
            profile.correlation = float(stats.pearsonr(lengths, means)[0])
    return profile


def write_profile(profile: NllProfile, path: str, label: str = "") -> str:
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write(f"# NLL by length (nats){' - ' + label if label else ''}\n")
        f.write("# length\tmean\tmin\tmax\tcount\n")
        for row in profile.rows:
            f.write(f"{row.length}\t{row.mean!r}\t{row.minimum!r}\t{row.maximum!r}\t{row.count}\n")
    return path


def _format_symbol(symbol) -> str:
    return symbol.symbol() if is_nonterminal(symbol) else json.dumps(symbol, ensure_ascii=False)


def write_grammar(grammar: PCFG, path: str) -> str:
    """lhs<TAB>rhs<TAB>probability per production; terminals are JSON-quoted"""
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write(f"# start\t{grammar.start().symbol()}\n")
        for production in grammar.productions():
            rhs = " ".join(_format_symbol(s) for s in production.rhs())
            f.write(f"{production.lhs().symbol()}\t{rhs}\t{production.prob()!r}\n")
    return path


def read_grammar(path: str) -> PCFG:
    start = None
    productions = []
    try:
        with open(path, "r", encoding="utf-8") as f:
            for line_number, line in enumerate(f, start=1):
                line = line.rstrip("\n")
                if not line.strip():
                    continue
                if line.startswith("#"):
                    fields = line[1:].strip().split("\t")
                    if len(fields) == 2 and fields[0].strip() == "start":
                        start = Nonterminal(fields[1].strip())
                    continue
                fields = line.split("\t")
                if len(fields) != 3:
                    raise InputFormatError(f"line {line_number}: expected 3 tab-separated fields", path=path)
                rhs = []
                for token in fields[1].split():
                    rhs.append(json.loads(token) if token.startswith('"') else Nonterminal(token))
                try:
                    prob = float(fields[2])
                except ValueError:
                    raise InputFormatError(f"line {line_number}: bad probability {fields[2]!r}", path=path)
                productions.append(ProbabilisticProduction(Nonterminal(fields[0]), rhs, prob=prob))
    except OSError as e:
        raise InputFormatError(f"cannot read grammar: {e.strerror}", path=path)
    except json.JSONDecodeError as e:
        raise InputFormatError(f"bad terminal: {e.msg}", path=path)
    if not productions:
        raise InputFormatError("grammar has no productions", path=path)
    try:
        return PCFG(start or productions[0].lhs(), productions)
    except ValueError as e:
        raise InputFormatError(f"invalid grammar: {e}", path=path)


def grammar_summary(grammar: PCFG) -> Dict:
    productions = grammar.productions()
    return {
        "start": grammar.start().symbol(),
        "n_productions": len(productions),
        "n_nonterminals": len({p.lhs() for p in productions}),
        "n_terminals": len(terminals(grammar)),
    }
