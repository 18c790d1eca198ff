"""
Treebank reader

Reads Penn-style bracketed trees (one or more per file) into nltk Trees and
applies the usual PTB normalization: function tags and indices are dropped
from labels, -NONE- empty elements are deleted, and the unlabeled outer
wrapper "( (S ...) )" is removed.
"""

import logging
from dataclasses import dataclass
from typing import Iterator, List, Optional, Tuple

from nltk import Tree

from errors import InputFormatError

logger = logging.getLogger(__name__)

EMPTY_ELEMENT = "-NONE-"


@dataclass(frozen=True)
class Treebank:
    """A list of parse trees with terminal leaves"""

    trees: Tuple[Tree, ...]

    def __len__(self) -> int:
        return len(self.trees)

    def sentences(self) -> List[List[str]]:
        return [tree.leaves() for tree in self.trees]


def normalize_label(label: str) -> str:
    """NP-SBJ-1 -> NP, NP=2 -> NP; labels such as -LRB- and -NONE- stay"""
    if label.startswith("-") and label.endswith("-") and len(label) > 1:
        return label
    for separator in ("-", "="):
        head = label.split(separator, 1)[0]
        if head:
            label = head
    return label


def _strip(tree: Tree) -> Optional[Tree]:
    if tree.label() == EMPTY_ELEMENT:
        return None
    children = []
    for child in tree:
        if isinstance(child, Tree):
            child = _strip(child)
            if child is None:
                continue
        children.append(child)
    if not children:
        return None
    return Tree(normalize_label(tree.label()), children)


def _split_brackets(text: str) -> Iterator[Tuple[int, str]]:
    """Yield (index, text) for every balanced top-level bracket group"""
    depth = 0
    start = None
    index = 0
    for position, char in enumerate(text):
        if char == "(":
            if depth == 0:
                start = position
            depth += 1
        elif char == ")":
            depth -= 1
            if depth < 0:
                raise InputFormatError("unbalanced ')'", tree_index=index, offset=position)
            if depth == 0:
                yield index, text[start:position + 1]
                index += 1
        elif depth == 0 and not char.isspace():
            raise InputFormatError(f"text outside brackets: {char!r}", tree_index=index, offset=position)
    if depth != 0:
        raise InputFormatError("unbalanced '('", tree_index=index)


def check_tree(tree: Tree, index: int):
    """Raise InputFormatError unless every preterminal holds exactly one word"""
    for node in tree.subtrees():
        kinds = {isinstance(child, Tree) for child in node}
        if kinds == {True, False}:
            raise InputFormatError(f"node {node.label()} mixes words and subtrees", tree_index=index)
        if False in kinds and len(node) != 1:
            raise InputFormatError(f"preterminal {node.label()} has {len(node)} words", tree_index=index)
        if not node.label():
            raise InputFormatError("unlabeled node", tree_index=index)


def parse_treebank(text: str) -> Treebank:
    """
    Parse bracketed S-expressions

    Args:
        text: One or more bracketed trees

    Returns:
        Normalized Treebank
    """
    trees = []
    for index, chunk in _split_brackets(text):
        try:
            tree = Tree.fromstring(chunk)
        except ValueError as e:
            raise InputFormatError(f"malformed tree: {e}", tree_index=index)
        if not isinstance(tree, Tree) or len(tree) == 0:
            raise InputFormatError("tree has no children", tree_index=index)
        if tree.label() == "" and len(tree) == 1 and isinstance(tree[0], Tree):
            tree = tree[0]
        tree = _strip(tree)
        if tree is None:
            logger.debug(f"Tree {index} consisted only of empty elements; skipped")
            continue
        check_tree(tree, index)
        trees.append(tree)
    return Treebank(tuple(trees))


def read_treebank(path: str, encoding: str = "utf-8") -> Treebank:
    try:
        with open(path, "r", encoding=encoding) as f:
            text = f.read()
    except OSError as e:
        raise InputFormatError(f"cannot read treebank: {e.strerror}", path=path)
    except UnicodeDecodeError as e:
        raise InputFormatError(f"treebank is not valid {encoding}", path=path, offset=e.start)
    try:
        treebank = parse_treebank(text)
    except InputFormatError as e:
        e.path = path
        e.args = (f"{e.args[0]} (path={path})",)
        raise
    logger.info(f"Read {len(treebank)} trees from {path}")
    return treebank
