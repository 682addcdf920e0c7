# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled kernels: derivation, program evaluation, correlation, ranking.

Contracts mirror gesim._core._pure; opcode numbers, PDIV_EPS and
EXP_ARG_LIMIT must stay in sync with gesim._core.__init__.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport exp, fabs, isfinite, log1p, sin, sqrt, tanh

cnp.import_array()

cdef enum:
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

cdef double PDIV_EPS = 1e-9
cdef double EXP_ARG_LIMIT = 700.0

_EMPTY_LEAVES = np.empty(0, dtype=np.int32)


def derive_flat(tables, const cnp.int64_t[:] genome, int max_depth):
    cdef const cnp.int32_t[:] prod_offsets = tables.prod_offsets
    cdef const cnp.int32_t[:] sym_offsets = tables.sym_offsets
    cdef const cnp.int32_t[:] symbols = tables.symbols
    cdef int start = tables.start
    cdef int max_len = tables.max_production_len

    cdef Py_ssize_t n_codons = genome.shape[0]
    # each expansion pops one symbol and pushes at most max_len
    cdef Py_ssize_t bound = 2 + n_codons * (max_len if max_len > 0 else 1)
    stack_arr = np.empty(bound, dtype=np.int32)
    depth_arr = np.empty(bound, dtype=np.int32)
    leaves_arr = np.empty(bound, dtype=np.int32)
    cdef cnp.int32_t[:] stack_sym = stack_arr
    cdef cnp.int32_t[:] stack_depth = depth_arr
    cdef cnp.int32_t[:] leaves = leaves_arr

    cdef Py_ssize_t top = 0, n_leaves = 0, used = 0
    cdef int sym, depth, nt, count, choice
    cdef cnp.int64_t codon
    cdef Py_ssize_t lo, hi, i

    stack_sym[0] = -(start + 1)
    stack_depth[0] = 1
    top = 1
    while top > 0:
        top -= 1
        sym = stack_sym[top]
        depth = stack_depth[top]
        if sym >= 0:
            leaves[n_leaves] = sym
            n_leaves += 1
            continue
        if used >= n_codons:
            return 1, 0, _EMPTY_LEAVES
        codon = genome[used]
        used += 1
        nt = -sym - 1
        count = prod_offsets[nt + 1] - prod_offsets[nt]
        choice = <int> (codon % count)
        if choice < 0:
            choice += count
        lo = sym_offsets[prod_offsets[nt] + choice]
        hi = sym_offsets[prod_offsets[nt] + choice + 1]
        if hi > lo and depth + 1 > max_depth:
            return 2, 0, _EMPTY_LEAVES
        i = hi - 1
        while i >= lo:
            stack_sym[top] = symbols[i]
            stack_depth[top] = depth + 1
            top += 1
            i -= 1
    return 0, used, leaves_arr[:n_leaves].copy()


def eval_program(const cnp.int32_t[:] ops, const cnp.int32_t[:] args,
                 const double[:] consts, const double[:, ::1] features,
                 int max_stack):
    cdef Py_ssize_t n_rows = features.shape[0]
    cdef Py_ssize_t n_ops = ops.shape[0]
    out_arr = np.empty(n_rows, dtype=np.float64)
    stack_arr = np.empty((max_stack, n_rows), dtype=np.float64)
    cdef double[:] out = out_arr
    cdef double[:, ::1] stack = stack_arr

    cdef Py_ssize_t k, i, top = 0
    cdef int op, arg
    cdef double value, left, right
    cdef bint saturated = False, nonfinite = False

    for k in range(n_ops):
        op = ops[k]
        arg = args[k]
        if op == OP_CONST:
            value = consts[arg]
            for i in range(n_rows):
                stack[top, i] = value
            top += 1
        elif op == OP_FEATURE:
            for i in range(n_rows):
                stack[top, i] = features[i, arg]
            top += 1
        elif op == OP_ADD:
            top -= 1
            for i in range(n_rows):
                stack[top - 1, i] = stack[top - 1, i] + stack[top, i]
        elif op == OP_SUB:
            top -= 1
            for i in range(n_rows):
                stack[top - 1, i] = stack[top - 1, i] - stack[top, i]
        elif op == OP_MUL:
            top -= 1
            for i in range(n_rows):
                stack[top - 1, i] = stack[top - 1, i] * stack[top, i]
        elif op == OP_PDIV:
            top -= 1
            for i in range(n_rows):
                right = stack[top, i]
                if fabs(right) <= PDIV_EPS:
                    stack[top - 1, i] = 1.0
                else:
                    stack[top - 1, i] = stack[top - 1, i] / right
        elif op == OP_PSQRT:
            for i in range(n_rows):
                stack[top - 1, i] = sqrt(fabs(stack[top - 1, i]))
        elif op == OP_PLOG:
            for i in range(n_rows):
                stack[top - 1, i] = log1p(fabs(stack[top - 1, i]))
        elif op == OP_SIN:
            for i in range(n_rows):
                stack[top - 1, i] = sin(stack[top - 1, i])
        elif op == OP_TANH:
            for i in range(n_rows):
                stack[top - 1, i] = tanh(stack[top - 1, i])
        elif op == OP_EXP:
            for i in range(n_rows):
                value = stack[top - 1, i]
                if value > EXP_ARG_LIMIT:
                    saturated = True
                    value = EXP_ARG_LIMIT
                stack[top - 1, i] = exp(value)
        else:
            raise ValueError(f"unknown opcode {op}")

    for i in range(n_rows):
        out[i] = stack[0, i]
        if not isfinite(out[i]):
            nonfinite = True
    cdef int flags = 0
    if saturated:
        flags |= 1
    if nonfinite:
        flags |= 2
    return out_arr, flags


def pearson_r(const double[:] x, const double[:] y):
    cdef Py_ssize_t n = x.shape[0]
    cdef Py_ssize_t i
    cdef double xmin, xmax, ymin, ymax, sx = 0.0, sy = 0.0
    cdef double mx, my, dx, dy, sxx = 0.0, syy = 0.0, sxy = 0.0, denom, r

    if n == 0:
        return float("nan")
    xmin = xmax = x[0]
    ymin = ymax = y[0]
    for i in range(n):
        if not (isfinite(x[i]) and isfinite(y[i])):
            return float("nan")
        if x[i] < xmin: xmin = x[i]
        if x[i] > xmax: xmax = x[i]
        if y[i] < ymin: ymin = y[i]
        if y[i] > ymax: ymax = y[i]
        sx += x[i]
        sy += y[i]
    if xmin == xmax or ymin == ymax:
        return float("nan")
    mx = sx / n
    my = sy / n
    for i in range(n):
        dx = x[i] - mx
        dy = y[i] - my
        sxx += dx * dx
        syy += dy * dy
        sxy += dx * dy
    denom = sxx * syy
    if denom <= 0.0:
        return float("nan")
    r = sxy / sqrt(denom)
    if r > 1.0:
        r = 1.0
    elif r < -1.0:
        r = -1.0
    return r


def average_ranks(const double[:] x):
    cdef Py_ssize_t n = x.shape[0]
    order_arr = np.argsort(np.asarray(x), kind="stable")
    ranks_arr = np.empty(n, dtype=np.float64)
    cdef const cnp.intp_t[:] order = order_arr
    cdef double[:] ranks = ranks_arr
    cdef Py_ssize_t i = 0, j
    cdef double avg
    while i < n:
        j = i
        while j + 1 < n and x[order[j + 1]] == x[order[i]]:
            j += 1
        avg = 0.5 * (i + j) + 1.0
        while i <= j:
            ranks[order[i]] = avg
            i += 1
    return ranks_arr
