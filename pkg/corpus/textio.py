"""
Text I/O

Tokenization, vocabulary construction, preprocessing (rare words and numbers),
n-gram chunk shuffling and token -> character conversion. All types are
immutable once built.
"""

import logging
import re
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Optional, Tuple, Union

import numpy as np

from config import DEFAULT_NUMBER_PATTERN
from errors import InputFormatError, InsufficientDataError, InvariantViolation, VocabularyError

logger = logging.getLogger(__name__)

UNK = "<unk>"
NUMBER = "N"
RESERVED = (UNK, NUMBER)


def _frozen(array: np.ndarray) -> np.ndarray:
    array.setflags(write=False)
    return array


@dataclass(frozen=True, eq=False)
class Vocabulary:
    """Dense id <-> surface map with per-id corpus frequencies"""

    id_to_surface: Tuple[str, ...]
    frequency: np.ndarray
    surface_to_id: Dict[str, int] = field(init=False, repr=False)

    def __post_init__(self):
        surfaces = tuple(self.id_to_surface)
        lookup = {surface: i for i, surface in enumerate(surfaces)}
        if len(lookup) != len(surfaces):
            raise InvariantViolation("vocabulary surfaces must be unique")
        frequency = np.array(self.frequency, dtype=np.int64)
        if frequency.shape != (len(surfaces),):
            raise InvariantViolation(
                f"frequency table has {frequency.size} entries for {len(surfaces)} surfaces"
            )
        object.__setattr__(self, "id_to_surface", surfaces)
        object.__setattr__(self, "frequency", _frozen(frequency))
        object.__setattr__(self, "surface_to_id", lookup)

    def __len__(self) -> int:
        return len(self.id_to_surface)

    def __contains__(self, surface: str) -> bool:
        return surface in self.surface_to_id

    def id_of(self, surface: str) -> Optional[int]:
        return self.surface_to_id.get(surface)

    def surface(self, token_id: int) -> str:
        return self.id_to_surface[token_id]


@dataclass(frozen=True, eq=False)
class TokenStream:
    """Sequence of vocabulary ids; the universal corpus representation"""

    tokens: np.ndarray
    vocab: Vocabulary

    def __post_init__(self):
        tokens = np.array(self.tokens, dtype=np.int64).reshape(-1)
        if tokens.size and (tokens.min() < 0 or tokens.max() >= len(self.vocab)):
            raise InvariantViolation("token id outside the vocabulary")
        object.__setattr__(self, "tokens", _frozen(tokens))

    def __len__(self) -> int:
        return int(self.tokens.size)

    @classmethod
    def from_surfaces(cls, surfaces: Iterable[str]) -> "TokenStream":
        """Build a stream and its vocabulary with first-seen id order"""
        lookup: Dict[str, int] = {}
        ids = [lookup.setdefault(surface, len(lookup)) for surface in surfaces]
        tokens = np.array(ids, dtype=np.int64)
        frequency = np.bincount(tokens, minlength=len(lookup)) if ids else np.zeros(0, dtype=np.int64)
        return cls(tokens, Vocabulary(tuple(lookup), frequency))

    def surfaces(self) -> List[str]:
        table = self.vocab.id_to_surface
        return [table[i] for i in self.tokens.tolist()]

    def render(self) -> str:
        """Single-space separated tokens with one trailing newline"""
        return " ".join(self.surfaces()) + "\n"

    def slice(self, start: int, stop: Optional[int] = None) -> "TokenStream":
        return TokenStream(self.tokens[start:stop], self.vocab)

    def counts(self) -> np.ndarray:
        return np.bincount(self.tokens, minlength=len(self.vocab))


@dataclass(frozen=True, eq=False)
class CharStream:
    """Character codes of a rendered text"""

    chars: np.ndarray
    alphabet: np.ndarray = field(init=False)

    def __post_init__(self):
        chars = np.array(self.chars, dtype=np.uint32).reshape(-1)
        object.__setattr__(self, "chars", _frozen(chars))
        object.__setattr__(self, "alphabet", _frozen(np.unique(chars)))

    def __len__(self) -> int:
        return int(self.chars.size)

    @classmethod
    def from_text(cls, text: str) -> "CharStream":
        codes = np.frombuffer(text.encode("utf-32-le"), dtype="<u4")
        return cls(codes)

    def text(self) -> str:
        return self.chars.astype("<u4").tobytes().decode("utf-32-le")


def tokenize(raw_text: Union[bytes, str], encoding: str = "utf-8") -> TokenStream:
    """
    Split text into maximal runs of non-whitespace

    Args:
        raw_text: Raw bytes (decoded strictly) or an already decoded string
        encoding: Byte encoding of raw_text

    Returns:
        TokenStream whose vocabulary follows first-seen order
    """
    if isinstance(raw_text, bytes):
        try:
            text = raw_text.decode(encoding)
        except UnicodeDecodeError as e:
            raise InputFormatError(f"input is not valid {encoding}: {e.reason}", offset=e.start)
    else:
        text = raw_text
    return TokenStream.from_surfaces(text.split())


def read_corpus(path: str, encoding: str = "utf-8") -> TokenStream:
    """Read and tokenize a local file or a gs://bucket/blob object"""
    if path.startswith("gs://"):
        from corpus.gcs_storage import read_gcs_bytes
        raw = read_gcs_bytes(path)
    else:
        try:
            with open(path, "rb") as f:
                raw = f.read()
        except OSError as e:
            raise InputFormatError(f"cannot read corpus: {e.strerror}", path=path)
    try:
        stream = tokenize(raw, encoding)
    except InputFormatError as e:
        raise InputFormatError(f"input is not valid {encoding}", path=path, offset=e.offset)
    logger.info(f"Read {len(stream)} tokens ({len(stream.vocab)} types) from {path}")
    return stream


def read_token_file(path: str, vocab: Optional[Vocabulary] = None,
                    unknown: str = UNK) -> TokenStream:
    """
    Read a whitespace-separated token file

    Args:
        path: Local path or gs:// object
        vocab: When given, surfaces are mapped onto this vocabulary; words it
            does not know become `unknown` (if the vocabulary has it)
        unknown: Surface used for out-of-vocabulary words

    Returns:
        TokenStream over vocab, or over a fresh first-seen vocabulary
    """
    stream = read_corpus(path)
    if vocab is None:
        return stream
    return remap(stream, vocab, unknown)


def remap(stream: TokenStream, vocab: Vocabulary, unknown: str = UNK) -> TokenStream:
    """Express a stream in another vocabulary"""
    fallback = vocab.id_of(unknown)
    table = np.zeros(len(stream.vocab), dtype=np.int64)
    # only ids that occur; unused vocabulary entries need no mapping
    for i in np.unique(stream.tokens).tolist():
        surface = stream.vocab.surface(i)
        target = vocab.id_of(surface)
        if target is None:
            if fallback is None:
                raise VocabularyError(f"token {surface!r} is not in the model vocabulary and it has no {unknown}")
            target = fallback
        table[i] = target
    return TokenStream(table[stream.tokens], vocab)


def write_token_file(stream: TokenStream, path: str) -> str:
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write(stream.render())
    return path


def is_number(surface: str, pattern: str = DEFAULT_NUMBER_PATTERN) -> bool:
    return re.fullmatch(pattern, surface) is not None


def preprocess(stream: TokenStream, min_freq: int = 1, replace_numbers: bool = False,
               number_pattern: str = DEFAULT_NUMBER_PATTERN) -> TokenStream:
    """
    Replace numbers with N and rare words with <unk>

    Numbers are replaced first; the frequency threshold is then applied to the
    resulting surfaces, with the reserved surfaces exempt, so that a second run
    with the same parameters changes nothing.

    Args:
        stream: Input stream
        min_freq: Surfaces occurring fewer times than this become <unk>
        replace_numbers: Replace tokens matching number_pattern with N
        number_pattern: Full-match regular expression for numbers

    Returns:
        Stream of the same length over a fresh vocabulary
    """
    if min_freq < 1:
        raise ValueError(f"min_freq must be >= 1, got {min_freq}")

    mapped = list(stream.vocab.id_to_surface)
    if replace_numbers:
        matcher = re.compile(number_pattern)
        mapped = [NUMBER if matcher.fullmatch(s) else s for s in mapped]

    counts = stream.counts()
    merged: Dict[str, int] = {}
    for surface, count in zip(mapped, counts.tolist()):
        merged[surface] = merged.get(surface, 0) + count
    if min_freq > 1:
        mapped = [s if s in RESERVED or merged[s] >= min_freq else UNK for s in mapped]

    table = np.array(mapped, dtype=object)
    result = TokenStream.from_surfaces(table[stream.tokens].tolist())
    logger.debug(f"Preprocessed vocabulary {len(stream.vocab)} -> {len(result.vocab)} types")
    return result


def shuffle_ngram(stream: TokenStream, n: int, seed: int) -> TokenStream:
    """
    Shuffle consecutive n-token chunks

    The text is cut into chunks of exactly n tokens (a final partial chunk is
    its own chunk), the chunks are permuted with
    default_rng(seed).permutation and their inner order is kept.
    """
    if n < 1:
        raise ValueError(f"chunk size must be >= 1, got {n}")
    total = len(stream)
    if total == 0:
        raise InsufficientDataError("cannot shuffle an empty stream")

    n_chunks = -(-total // n)
    lengths = np.full(n_chunks, n, dtype=np.int64)
    lengths[-1] = total - n * (n_chunks - 1)

    perm = np.random.default_rng(seed).permutation(n_chunks)
    out_lengths = lengths[perm]
    out_starts = np.cumsum(out_lengths) - out_lengths
    index = np.repeat(perm * n - out_starts, out_lengths) + np.arange(total)
    return TokenStream(stream.tokens[index], stream.vocab)


def to_char_stream(stream: TokenStream, separator: str = " ") -> CharStream:
    """Concatenate token surfaces joined by one separator"""
    if len(stream) == 0:
        raise InsufficientDataError("cannot build characters from an empty stream")
    return CharStream.from_text(separator.join(stream.surfaces()))


def split_stream(stream: TokenStream, fraction: float) -> Tuple[TokenStream, TokenStream]:
    """Head/tail split; the tail holds round(fraction * N) tokens"""
    if not 0.0 <= fraction < 1.0:
        raise ValueError(f"fraction must be in [0, 1), got {fraction}")
    tail = int(round(len(stream) * fraction))
    cut = len(stream) - tail
    return stream.slice(0, cut), stream.slice(cut)


def sample_chunks(stream: TokenStream, length: int, count: int, seed: int) -> List[List[str]]:
    """Randomly extract `count` runs of `length` consecutive tokens"""
    if length < 1:
        raise ValueError(f"chunk length must be >= 1, got {length}")
    if len(stream) < length:
        raise InsufficientDataError(f"stream of {len(stream)} tokens has no chunk of length {length}")
    starts = np.random.default_rng(seed).integers(0, len(stream) - length + 1, size=count)
    table = stream.vocab.id_to_surface
    return [[table[i] for i in stream.tokens[s:s + length].tolist()] for s in starts.tolist()]
