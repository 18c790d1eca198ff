"""
Urn processes

Simon and Pitman-Yor word generators. Words are integer ids rendered as
their decimal string; id 0 is the first word and every new word gets the
next unused id.
"""

import logging
from dataclasses import dataclass
from typing import Tuple

import numpy as np

from corpus.textio import TokenStream, Vocabulary

logger = logging.getLogger(__name__)

_BLOCK = 1 << 16


@dataclass(frozen=True)
class SimonParams:
    a: float = 0.1
    seed: int = 0

    def __post_init__(self):
        if not 0.0 < self.a < 1.0:
            raise ValueError(f"Simon a must be in (0, 1), got {self.a}")


@dataclass(frozen=True)
class PitmanYorParams:
    a: float = 0.8
    b: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if not 0.0 <= self.a < 1.0:
            raise ValueError(f"Pitman-Yor discount must be in [0, 1), got {self.a}")
        if self.b < 0.0:
            raise ValueError(f"Pitman-Yor strength must be >= 0, got {self.b}")


class UniformStream:
    """Uniform [0, 1) draws served from blocks of one Generator"""

    def __init__(self, rng: np.random.Generator, block: int = _BLOCK):
        self.rng = rng
        self.block = block
        self.buffer = rng.random(block).tolist()
        self.position = 0

    def next(self) -> float:
        if self.position == len(self.buffer):
            self.buffer = self.rng.random(self.block).tolist()
            self.position = 0
        value = self.buffer[self.position]
        self.position += 1
        return value


def ids_to_stream(ids, n_types: int) -> TokenStream:
    tokens = np.asarray(ids, dtype=np.int64)
    frequency = np.bincount(tokens, minlength=n_types)
    vocab = Vocabulary(tuple(str(i) for i in range(n_types)), frequency)
    return TokenStream(tokens, vocab)


def simon_generate(params: SimonParams, length: int) -> TokenStream:
    """
    Simon process

    Starts from word 0; each later step adds a new word with probability a and
    otherwise repeats the word at a uniformly chosen earlier position.
    """
    if length < 1:
        raise ValueError(f"length must be >= 1, got {length}")
    rng = np.random.default_rng(params.seed)
    is_new = (rng.random(length - 1) < params.a).tolist()
    picks = rng.random(length - 1).tolist()

    ids = [0] * length
    n_types = 1
    for t in range(1, length):
        if is_new[t - 1]:
            ids[t] = n_types
            n_types += 1
        else:
            ids[t] = ids[int(picks[t - 1] * t)]
    logger.info(f"Simon process (a={params.a}): {length} tokens, {n_types} types")
    return ids_to_stream(ids, n_types)


def pitman_yor_branch_probabilities(counts, a: float, b: float) -> Tuple[np.ndarray, float]:
    """
    Next-word distribution given the current type counts

    Returns:
        (probability of each existing type, probability of a new type)
    """
    counts = np.asarray(counts, dtype=np.float64)
    t = float(counts.sum())
    k = counts.size
    if t + b == 0.0:
        return np.zeros(k), 1.0
    return (counts - a) / (t + b), (a * k + b) / (t + b)


def pitman_yor_generate(params: PitmanYorParams, length: int) -> TokenStream:
    """
    Pitman-Yor process

    After t tokens over K types, a new type appears with probability
    (aK + b) / (t + b) and existing type k with probability (n_k - a) / (t + b).
    The existing type is drawn by picking a uniform earlier position (probability
    n_k / t) and accepting it with probability (n_k - a) / n_k.
    """
    if length < 1:
        raise ValueError(f"length must be >= 1, got {length}")
    a, b = params.a, params.b
    uniforms = UniformStream(np.random.default_rng(params.seed))

    ids = [0] * length
    counts = [1]
    for t in range(1, length):
        n_types = len(counts)
        if uniforms.next() * (t + b) < a * n_types + b:
            ids[t] = n_types
            counts.append(1)
            continue
        while True:
            word = ids[int(uniforms.next() * t)]
            n_k = counts[word]
            if uniforms.next() * n_k < n_k - a:
                break
        ids[t] = word
        counts[word] += 1
    logger.info(f"Pitman-Yor process (a={a}, b={b}): {length} tokens, {len(counts)} types")
    return ids_to_stream(ids, len(counts))
