"""JIT-compiled dynamic programs for exponential LPP.

Arrays are 0-based here; the public API in :mod:`uppertail.lpp` converts to
the 1-based lattice convention.
"""
from __future__ import annotations

import numpy as np
from numba import njit


@njit(cache=True)
def passage_value(X):
    """T from the top-left to the bottom-right corner, O(cols) memory."""
    rows, cols = X.shape
    buf = np.empty(cols)
    acc = 0.0
    for j in range(cols):
        acc += X[0, j]
        buf[j] = acc
    for i in range(1, rows):
        buf[0] += X[i, 0]
        for j in range(1, cols):
            left = buf[j - 1]
            up = buf[j]
            buf[j] = X[i, j] + (left if left > up else up)
    return buf[cols - 1]


@njit(cache=True)
def forward_table(X):
    rows, cols = X.shape
    F = np.empty((rows, cols))
    F[0, 0] = X[0, 0]
    for j in range(1, cols):
        F[0, j] = F[0, j - 1] + X[0, j]
    for i in range(1, rows):
        F[i, 0] = F[i - 1, 0] + X[i, 0]
        for j in range(1, cols):
            a = F[i - 1, j]
            b = F[i, j - 1]
            F[i, j] = X[i, j] + (a if a > b else b)
    return F


@njit(cache=True)
def backward_table(X):
    """G[i, j] = passage time from (i, j) to the bottom-right corner."""
    rows, cols = X.shape
    G = np.empty((rows, cols))
    G[rows - 1, cols - 1] = X[rows - 1, cols - 1]
    for j in range(cols - 2, -1, -1):
        G[rows - 1, j] = G[rows - 1, j + 1] + X[rows - 1, j]
    for i in range(rows - 2, -1, -1):
        G[i, cols - 1] = G[i + 1, cols - 1] + X[i, cols - 1]
        for j in range(cols - 2, -1, -1):
            a = G[i + 1, j]
            b = G[i, j + 1]
            G[i, j] = X[i, j] + (a if a > b else b)
    return G


@njit(cache=True)
def backtrack(F):
    """Geodesic from a forward table.

    At each step move to the predecessor with the larger cumulative value;
    an exact tie goes to the column predecessor (second coordinate decreases).
    """
    rows, cols = F.shape
    n = rows + cols - 1
    pi = np.empty(n, dtype=np.int64)
    pj = np.empty(n, dtype=np.int64)
    i = rows - 1
    j = cols - 1
    k = n - 1
    pi[k] = i
    pj[k] = j
    while k > 0:
        if i == 0:
            j -= 1
        elif j == 0:
            i -= 1
        elif F[i, j - 1] >= F[i - 1, j]:
            j -= 1
        else:
            i -= 1
        k -= 1
        pi[k] = i
        pj[k] = j
    return pi, pj


@njit(cache=True)
def _max_fluct(F):
    rows, cols = F.shape
    i = rows - 1
    j = cols - 1
    best = abs(i - j)
    while i > 0 or j > 0:
        if i == 0:
            j -= 1
        elif j == 0:
            i -= 1
        elif F[i, j - 1] >= F[i - 1, j]:
            j -= 1
        else:
            i -= 1
        d = abs(i - j)
        if d > best:
            best = d
    return best


@njit(cache=True)
def batch_passage(E, scale, lr_coef, lr_const, threshold, want_geo):
    """Passage statistics for a block of trials.

    ``E`` holds Exp(1) draws of shape (B, rows, cols); the weight at a vertex
    is ``E * scale``.  The log likelihood ratio of the trial is
    ``sum(-lr_coef * X + lr_const)`` over vertices.  When ``want_geo`` is set
    the geodesic's maximal transversal fluctuation is computed for trials
    whose passage time reaches ``threshold`` (others get -1).
    """
    B, rows, cols = E.shape
    T = np.empty(B)
    last = np.empty(B)
    logL = np.empty(B)
    dmax = np.full(B, -1, dtype=np.int64)
    buf = np.empty(cols)
    X = np.empty((rows, cols))
    for b in range(B):
        ll = 0.0
        for i in range(rows):
            for j in range(cols):
                x = E[b, i, j] * scale[i, j]
                X[i, j] = x
                ll += lr_const[i, j] - lr_coef[i, j] * x
        acc = 0.0
        for j in range(cols):
            acc += X[0, j]
            buf[j] = acc
        for i in range(1, rows):
            buf[0] += X[i, 0]
            for j in range(1, cols):
                left = buf[j - 1]
                up = buf[j]
                buf[j] = X[i, j] + (left if left > up else up)
        T[b] = buf[cols - 1]
        last[b] = X[rows - 1, cols - 1]
        logL[b] = ll
        if want_geo and T[b] >= threshold:
            dmax[b] = _max_fluct(forward_table(X))
    return T, last, logL, dmax
