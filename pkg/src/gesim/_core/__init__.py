"""Hot numeric kernels with a compiled core and a pure-numpy fallback.

The compiled extension (``gesim._core._native``, built from Cython) and
``gesim._core._pure`` implement the same four kernels:

    derive_flat(tables, genome, max_depth)  -> (status, used, leaf_ids)
    eval_program(ops, args, consts, features, max_stack) -> (values, flags)
    pearson_r(x, y)                         -> float (nan when degenerate)
    average_ranks(x)                        -> float64 array, ties averaged

The native module is preferred at import time; set ``GESIM_PURE=1`` to
force the fallback.  Callers pass numpy arrays of the documented dtypes
(genomes/ops/args int64/int32, values float64, features C-contiguous).
Both backends share the opcode table and limits below; the extension
mirrors them and the kernel parity tests guard against drift.
"""

from __future__ import annotations

import os
from typing import NamedTuple

import numpy as np

# Postfix opcodes; _native.pyx hardcodes the same numbering.
OP_CONST = 0
OP_FEATURE = 1
OP_ADD = 2
OP_SUB = 3
OP_MUL = 4
OP_PDIV = 5
OP_PSQRT = 6
OP_PLOG = 7
OP_SIN = 8
OP_TANH = 9
OP_EXP = 10

PDIV_EPS = 1e-9  # |denominator| at or below this yields 1.0
EXP_ARG_LIMIT = 700.0  # larger arguments saturate and poison finite_flag

# eval_program flag bits
FLAG_EXP_SATURATED = 1
FLAG_NONFINITE = 2

# derive_flat status codes
DERIVE_OK = 0
DERIVE_EXHAUSTED = 1
DERIVE_TOO_DEEP = 2

if os.environ.get("GESIM_PURE", "") not in ("", "0"):
    from . import _pure as _impl

    BACKEND = "pure"
else:
    try:
        from . import _native as _impl  # type: ignore[attr-defined]

        BACKEND = "native"
    except ImportError:
        from . import _pure as _impl

        BACKEND = "pure"

derive_flat = _impl.derive_flat
eval_program = _impl.eval_program
pearson_r = _impl.pearson_r
average_ranks = _impl.average_ranks


class GrammarTables(NamedTuple):
    """Grammar flattened into integer arrays for the derivation kernel.

    Production ``j`` of nonterminal ``i`` spans
    ``symbols[sym_offsets[p] : sym_offsets[p + 1]]`` with
    ``p = prod_offsets[i] + j``; symbol codes are ``terminal_id >= 0`` or
    ``-(nonterminal_id + 1)``.
    """

    start: int
    prod_offsets: np.ndarray
    sym_offsets: np.ndarray
    symbols: np.ndarray
    terminal_text: list[str]
    nonterminal_names: list[str]
    max_production_len: int


def build_grammar_tables(grammar) -> GrammarTables:
    nt_names = sorted(grammar.nonterminals)
    nt_ids = {name: i for i, name in enumerate(nt_names)}
    term_text: list[str] = []
    term_ids: dict[str, int] = {}

    prod_offsets = [0]
    sym_offsets = [0]
    symbols: list[int] = []
    for name in nt_names:
        for production in grammar.rules[name]:
            for sym in production:
                if sym.is_terminal:
                    if sym.text not in term_ids:
                        term_ids[sym.text] = len(term_text)
                        term_text.append(sym.text)
                    symbols.append(term_ids[sym.text])
                else:
                    symbols.append(-(nt_ids[sym.text] + 1))
            sym_offsets.append(len(symbols))
        prod_offsets.append(len(sym_offsets) - 1)

    sym_off = np.asarray(sym_offsets, dtype=np.int32)
    return GrammarTables(
        start=nt_ids[grammar.start],
        prod_offsets=np.asarray(prod_offsets, dtype=np.int32),
        sym_offsets=sym_off,
        symbols=np.asarray(symbols, dtype=np.int32),
        terminal_text=term_text,
        nonterminal_names=nt_names,
        max_production_len=int(np.diff(sym_off).max()) if len(sym_off) > 1 else 0,
    )
