"""Pure-numpy twins of the compiled kernels.

Same contracts as ``gesim._core._native``; used when the extension is not
built or when ``GESIM_PURE=1``.  Kept vectorized so the fallback stays
usable for full experiment batches, just slower.
"""

from __future__ import annotations

import numpy as np

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

PDIV_EPS = 1e-9
EXP_ARG_LIMIT = 700.0

_EMPTY_LEAVES = np.empty(0, dtype=np.int32)


def derive_flat(tables, genome, max_depth):
    """Leftmost codon-driven expansion over flattened grammar tables.

    Returns ``(status, used_codons, leaf_terminal_ids)`` with status 0 on
    success, 1 when the genome is exhausted, 2 when the tree would exceed
    ``max_depth``.
    """
    prod_offsets = tables.prod_offsets
    sym_offsets = tables.sym_offsets
    symbols = tables.symbols

    stack_sym = [-(tables.start + 1)]
    stack_depth = [1]
    leaves: list[int] = []
    used = 0
    n_codons = len(genome)
    while stack_sym:
        sym = stack_sym.pop()
        depth = stack_depth.pop()
        if sym >= 0:
            leaves.append(sym)
            continue
        if used >= n_codons:
            return 1, 0, _EMPTY_LEAVES
        codon = genome[used]
        used += 1
        nt = -sym - 1
        first = prod_offsets[nt]
        count = prod_offsets[nt + 1] - first
        prod = first + int(codon) % int(count)
        lo = sym_offsets[prod]
        hi = sym_offsets[prod + 1]
        if hi > lo and depth + 1 > max_depth:
            return 2, 0, _EMPTY_LEAVES
        for i in range(hi - 1, lo - 1, -1):
            stack_sym.append(int(symbols[i]))
            stack_depth.append(depth + 1)
    return 0, used, np.asarray(leaves, dtype=np.int32)


def eval_program(ops, args, consts, features, max_stack):
    """Run a postfix expression program column-wise over a feature matrix.

    Returns ``(values, flags)``; flag bit 1 marks exp saturation, bit 2 a
    non-finite value in the output.
    """
    n_rows = features.shape[0]
    stack: list[np.ndarray] = []
    saturated = False
    with np.errstate(all="ignore"):
        for op, arg in zip(ops, args):
            if op == OP_CONST:
                stack.append(np.full(n_rows, consts[arg]))
            elif op == OP_FEATURE:
                stack.append(features[:, arg])
            elif op == OP_ADD:
                right = stack.pop()
                stack[-1] = stack[-1] + right
            elif op == OP_SUB:
                right = stack.pop()
                stack[-1] = stack[-1] - right
            elif op == OP_MUL:
                right = stack.pop()
                stack[-1] = stack[-1] * right
            elif op == OP_PDIV:
                right = stack.pop()
                left = stack[-1]
                stack[-1] = np.where(np.abs(right) <= PDIV_EPS, 1.0, left / right)
            elif op == OP_PSQRT:
                stack[-1] = np.sqrt(np.abs(stack[-1]))
            elif op == OP_PLOG:
                stack[-1] = np.log1p(np.abs(stack[-1]))
            elif op == OP_SIN:
                stack[-1] = np.sin(stack[-1])
            elif op == OP_TANH:
                stack[-1] = np.tanh(stack[-1])
            elif op == OP_EXP:
                top = stack[-1]
                if np.any(top > EXP_ARG_LIMIT):
                    saturated = True
                    top = np.minimum(top, EXP_ARG_LIMIT)
                stack[-1] = np.exp(top)
            else:
                raise ValueError(f"unknown opcode {op}")
    out = stack.pop()
    if out.base is not None:
        out = out.copy()
    flags = 0
    if saturated:
        flags |= 1
    if not np.isfinite(out).all():
        flags |= 2
    return out, flags


def pearson_r(x, y):
    """Product-moment correlation; nan for degenerate input.

    Degenerate means a non-finite value or an exactly constant vector
    (constant predictions are bitwise constant, so an exact min==max test
    is the robust zero-variance check at these scales).
    """
    if not (np.isfinite(x).all() and np.isfinite(y).all()):
        return float("nan")
    if x.min() == x.max() or y.min() == y.max():
        return float("nan")
    dx = x - x.mean()
    dy = y - y.mean()
    sxx = float(dx @ dx)
    syy = float(dy @ dy)
    sxy = float(dx @ dy)
    denom = sxx * syy
    if denom <= 0.0:
        return float("nan")
    r = sxy / denom**0.5
    return min(1.0, max(-1.0, r))


def average_ranks(x):
    """1-based fractional ranks; tied values share the average rank."""
    n = x.shape[0]
    order = np.argsort(x, kind="stable")
    ordered = x[order]
    boundary = np.empty(n, dtype=bool)
    boundary[0] = True
    np.not_equal(ordered[1:], ordered[:-1], out=boundary[1:])
    group = np.cumsum(boundary) - 1
    first = np.flatnonzero(boundary)
    counts = np.diff(np.append(first, n))
    group_rank = first + 0.5 * (counts - 1) + 1.0
    ranks = np.empty(n)
    ranks[order] = group_rank[group]
    return ranks
