"""BNF grammar parsing and codon-driven genotype-to-phenotype mapping.

A grammar file is UTF-8 text with rules of the form

    <name> ::= alternative | alternative | ...

Alternatives may continue over several lines; a rule ends at the next
``::=`` definition.  Lines whose first non-blank character is ``#`` are
comments.  Inside an alternative, ``<name>`` tokens are nonterminals and
everything else is split into terminal tokens on whitespace; single or
double quotes protect terminals that contain spaces, angle brackets, or
``|``.  Rule order is semantic: the mapper selects production ``codon mod
rule_count``, so permuting alternatives changes the derivation language.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path


class GrammarError(ValueError):
    """Malformed grammar source; ``line`` is 1-based."""

    def __init__(self, message: str, line: int):
        super().__init__(f"line {line}: {message}")
        self.line = line


class DuplicateDefinition(GrammarError):
    pass


class EmptyProduction(GrammarError):
    pass


class UndefinedNonterminal(GrammarError):
    pass


@dataclass(frozen=True)
class Symbol:
    """One token on the right-hand side of a production."""

    text: str
    is_terminal: bool

    def __repr__(self):
        return self.text if self.is_terminal else f"<{self.text}>"


Production = tuple[Symbol, ...]


@dataclass(frozen=True)
class Grammar:
    """A context-free grammar with order-sensitive production lists.

    ``rules`` maps each nonterminal name to its productions in source
    order.  ``start`` is the left-hand side of the first rule in the file.
    """

    nonterminals: frozenset[str]
    terminals: frozenset[str]
    rules: dict[str, list[Production]]
    start: str
    name: str = ""

    _min_depth: dict[str, float] = field(default_factory=dict, repr=False, compare=False)
    _tables: object = field(default=None, repr=False, compare=False)

    def min_completion_depth(self, nonterminal: str) -> float:
        """Smallest achievable derivation-tree depth rooted at ``nonterminal``.

        Depth counts nodes on the longest root-to-leaf path, so a
        nonterminal that expands directly to one terminal has depth 2.
        ``math.inf`` means no terminal-only expansion exists.
        """
        if not self._min_depth:
            self._min_depth.update(_compute_min_depths(self))
        return self._min_depth[nonterminal]

    def production_min_extra(self, production: Production) -> float:
        """Levels a production adds below the node that chooses it."""
        if not self._min_depth:
            self._min_depth.update(_compute_min_depths(self))
        return max(
            (1 if sym.is_terminal else self._min_depth[sym.text] for sym in production),
            default=0,
        )

    def tables(self):
        """Flattened integer tables consumed by the derivation kernels."""
        if self._tables is None:
            from ._core import build_grammar_tables

            object.__setattr__(self, "_tables", build_grammar_tables(self))
        return self._tables


@dataclass(frozen=True)
class Node:
    """One derivation-tree node.

    Nonterminal nodes record which production was chosen and the codon
    that chose it; terminal nodes are leaves.
    """

    symbol: Symbol
    children: tuple["Node", ...] = ()
    production_index: int | None = None
    codon: int | None = None


@dataclass(frozen=True)
class DerivationTree:
    """A complete leftmost derivation of a genome under a grammar."""

    root: Node
    depth: int
    used_codons: int

    def consumed_codons(self) -> list[int]:
        """Codons in derivation order; equals the effective genome prefix."""
        out: list[int] = []
        stack = [self.root]
        while stack:
            node = stack.pop()
            if node.codon is not None:
                out.append(node.codon)
            stack.extend(reversed(node.children))
        return out


@dataclass(frozen=True)
class Invalid:
    """Failed mapping outcome: a value, not an exception.

    ``reason`` is ``"codons_exhausted"`` or ``"max_depth"``.
    """

    reason: str


def parse_grammar(text: str, name: str = "") -> Grammar:
    """Parse BNF source into a :class:`Grammar`.

    Raises :class:`DuplicateDefinition`, :class:`EmptyProduction`, or
    :class:`UndefinedNonterminal`, each carrying the offending line number.
    """
    # One rule = (lhs, lhs_line, [(alt_text, alt_line), ...]); alternatives
    # accumulate until the next "::=" line.
    rule_sources: list[tuple[str, int, list[tuple[str, int]]]] = []
    current: list[tuple[str, int]] | None = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        stripped = raw.strip()
        if not stripped or stripped.startswith("#"):
            continue
        if "::=" in raw:
            lhs_text, _, rhs = raw.partition("::=")
            lhs_text = lhs_text.strip()
            if not (lhs_text.startswith("<") and lhs_text.endswith(">") and len(lhs_text) > 2):
                raise GrammarError(f"left-hand side {lhs_text!r} is not a <nonterminal>", lineno)
            lhs = lhs_text[1:-1]
            if any(existing == lhs for existing, _, _ in rule_sources):
                raise DuplicateDefinition(f"nonterminal <{lhs}> defined twice", lineno)
            current = [(rhs, lineno)]
            rule_sources.append((lhs, lineno, current))
        else:
            if current is None:
                raise GrammarError(f"text before first rule: {stripped!r}", lineno)
            current.append((raw, lineno))

    if not rule_sources:
        raise GrammarError("grammar defines no rules", 1)

    defined = {lhs for lhs, _, _ in rule_sources}
    rules: dict[str, list[Production]] = {}
    terminals: set[str] = set()
    for lhs, lhs_line, pieces in rule_sources:
        productions: list[Production] = []
        for alt_text, alt_line in _split_alternatives(pieces):
            symbols = _tokenize_production(alt_text, alt_line)
            if not symbols:
                raise EmptyProduction(f"empty alternative for <{lhs}>", alt_line)
            for sym in symbols:
                if sym.is_terminal:
                    terminals.add(sym.text)
                elif sym.text not in defined:
                    raise UndefinedNonterminal(f"<{sym.text}> is used but never defined", alt_line)
            productions.append(tuple(symbols))
        if not productions:
            raise EmptyProduction(f"<{lhs}> has no productions", lhs_line)
        rules[lhs] = productions

    overlap = defined & terminals
    if overlap:
        # a quoted terminal spelled like "<x>" could collide with a rule name
        raise GrammarError(f"symbols both terminal and nonterminal: {sorted(overlap)}", 1)

    return Grammar(
        nonterminals=frozenset(defined),
        terminals=frozenset(terminals),
        rules=rules,
        start=rule_sources[0][0],
        name=name,
    )


def load_grammar(path: str | Path) -> Grammar:
    path = Path(path)
    return parse_grammar(path.read_text(encoding="utf-8"), name=path.stem)


def _split_alternatives(pieces: list[tuple[str, int]]):
    """Split rule text on '|' outside quotes, tracking each alternative's line."""
    alternatives: list[tuple[str, int]] = []
    buffer: list[str] = []
    buffer_line = pieces[0][1]
    for text, lineno in pieces:
        if not buffer:
            buffer_line = lineno
        i = 0
        while i < len(text):
            ch = text[i]
            if ch in "'\"":
                end = text.find(ch, i + 1)
                if end < 0:
                    raise GrammarError("unterminated quote", lineno)
                buffer.append(text[i : end + 1])
                i = end + 1
            elif ch == "|":
                alternatives.append(("".join(buffer), buffer_line))
                buffer = []
                buffer_line = lineno
                i += 1
            else:
                buffer.append(ch)
                i += 1
        buffer.append(" ")  # line break separates tokens
    alternatives.append(("".join(buffer), buffer_line))
    return alternatives


def _tokenize_production(text: str, lineno: int) -> list[Symbol]:
    symbols: list[Symbol] = []
    literal: list[str] = []

    def flush():
        if literal:
            symbols.append(Symbol("".join(literal), is_terminal=True))
            literal.clear()

    i = 0
    while i < len(text):
        ch = text[i]
        if ch.isspace():
            flush()
            i += 1
        elif ch in "'\"":
            flush()
            end = text.find(ch, i + 1)
            if end < 0:
                raise GrammarError("unterminated quote", lineno)
            symbols.append(Symbol(text[i + 1 : end], is_terminal=True))
            i = end + 1
        elif ch == "<":
            flush()
            end = text.find(">", i + 1)
            if end < 0:
                raise GrammarError("unterminated nonterminal reference", lineno)
            name = text[i + 1 : end].strip()
            if not name:
                raise GrammarError("empty nonterminal reference <>", lineno)
            symbols.append(Symbol(name, is_terminal=False))
            i = end + 1
        else:
            literal.append(ch)
            i += 1
    flush()
    return symbols


def _compute_min_depths(grammar: Grammar) -> dict[str, float]:
    """Fixpoint of the minimum completion depth of every nonterminal."""
    depth: dict[str, float] = {nt: math.inf for nt in grammar.nonterminals}
    changed = True
    while changed:
        changed = False
        for nt, productions in grammar.rules.items():
            best = math.inf
            for production in productions:
                extra = max(
                    (1 if s.is_terminal else depth[s.text] for s in production),
                    default=0,
                )
                best = min(best, 1 + extra)
            if best < depth[nt]:
                depth[nt] = best
                changed = True
    return depth


def derive(grammar: Grammar, genome, max_depth: int) -> DerivationTree | Invalid:
    """Map a codon sequence to a derivation tree by leftmost expansion.

    Every nonterminal expansion consumes exactly one codon, even when the
    nonterminal has a single production; the codon selects production
    ``codon mod rule_count``.  The outcome is :class:`Invalid` when the
    genome runs out before the sentential form is all-terminal, or when any
    node would sit deeper than ``max_depth`` (no genome wrapping).
    """
    if len(genome) == 0:
        raise ValueError("genome must be non-empty")
    if max_depth < 1:
        raise ValueError("max_depth must be >= 1")

    codons = iter(genome)

    def expand(symbol: Symbol, depth: int) -> Node | Invalid:
        if symbol.is_terminal:
            return Node(symbol)
        try:
            codon = next(codons)
        except StopIteration:
            return Invalid("codons_exhausted")
        codon = int(codon)
        productions = grammar.rules[symbol.text]
        choice = codon % len(productions)
        production = productions[choice]
        if production and depth + 1 > max_depth:
            return Invalid("max_depth")
        children = []
        for child_symbol in production:
            child = expand(child_symbol, depth + 1)
            if isinstance(child, Invalid):
                return child
            children.append(child)
        return Node(symbol, tuple(children), production_index=choice, codon=codon)

    root = expand(Symbol(grammar.start, is_terminal=False), 1)
    if isinstance(root, Invalid):
        return root
    used = _count_expansions(root)
    return DerivationTree(root=root, depth=_tree_depth(root), used_codons=used)


def serialize(tree: DerivationTree) -> str:
    """Concatenate terminal leaves left to right into the phenotype string."""
    parts: list[str] = []
    stack = [tree.root]
    while stack:
        node = stack.pop()
        if node.symbol.is_terminal:
            parts.append(node.symbol.text)
        else:
            stack.extend(reversed(node.children))
    return "".join(parts)


def _tree_depth(root: Node) -> int:
    depth = 0
    stack = [(root, 1)]
    while stack:
        node, d = stack.pop()
        depth = max(depth, d)
        for child in node.children:
            stack.append((child, d + 1))
    return depth


def _count_expansions(root: Node) -> int:
    count = 0
    stack = [root]
    while stack:
        node = stack.pop()
        if node.codon is not None:
            count += 1
        stack.extend(node.children)
    return count


def derive_text(grammar: Grammar, genome, max_depth: int) -> tuple[str | None, int]:
    """Fast path: phenotype text and used-codon count without tree objects.

    Returns ``(None, 0)`` for invalid mappings.  Semantically identical to
    ``serialize(derive(...))``; backed by the compiled kernel when built.
    """
    from ._core import derive_flat

    tables = grammar.tables()
    status, used, leaves = derive_flat(tables, genome, max_depth)
    if status != 0:
        return None, 0
    return "".join(tables.terminal_text[i] for i in leaves), used
