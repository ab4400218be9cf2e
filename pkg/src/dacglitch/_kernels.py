"""Compiled inner loops.

All kernels work on a *value table* ``T`` of length ``2^L`` (``T[m]`` is the
codeword decoded from mask ``m``, which is also the toggled weight of an xor
pattern ``m``) plus a grouping of masks by value: ``order[starts[x]:starts[x+1]]``
lists the masks decoding to ``x``.  Masks outside the code range are left out of
the grouping.
"""

import numba as nb
import numpy as np

BIG = np.int64(1) << 62


@nb.njit(cache=True)
def value_table(weights):
    L = weights.shape[0]
    T = np.zeros(1 << L, dtype=np.int64)
    for m in range(1, 1 << L):
        low = m & -m
        i = 0
        while (low >> i) != 1:
            i += 1
        T[m] = T[m ^ low] + weights[i]
    return T


@nb.njit(cache=True)
def group_masks(T, n_codes):
    """Counting sort of masks by decoded value; ascending mask order inside a group."""
    counts = np.zeros(n_codes + 1, dtype=np.int64)
    for m in range(T.shape[0]):
        v = T[m]
        if v < n_codes:
            counts[v + 1] += 1
    starts = np.cumsum(counts)
    fill = starts[:-1].copy()
    order = np.empty(starts[-1], dtype=np.int64)
    for m in range(T.shape[0]):
        v = T[m]
        if v < n_codes:
            order[fill[v]] = m
            fill[v] += 1
    return order, starts


@nb.njit(cache=True)
def min_sq_to_groups(T, order, starts, w):
    """Row of min squared toggled weight from mask ``w`` to every codeword's set."""
    n = starts.shape[0] - 1
    out = np.empty(n, dtype=np.int64)
    for y in range(n):
        best = BIG
        for j in range(starts[y], starts[y + 1]):
            d = T[w ^ order[j]]
            if d < best:
                best = d
        out[y] = best * best
    return out


@nb.njit(cache=True)
def overcomplete_sum(T, order, starts, wprob, P):
    """sum_W p(W) sum_y P(dec W, y) min_{V in R(y)} T[W^V]^2."""
    n = starts.shape[0] - 1
    total = 0.0
    for k in range(order.shape[0]):
        w = order[k]
        pw = wprob[w]
        if pw == 0.0:
            continue
        x = T[w]
        acc = 0.0
        for y in range(n):
            pxy = P[x, y]
            if pxy == 0.0:
                continue
            best = BIG
            for j in range(starts[y], starts[y + 1]):
                d = T[w ^ order[j]]
                if d < best:
                    best = d
            acc += pxy * best * best
        total += pw * acc
    return total


@nb.njit(cache=True)
def uniform_rep_objective(T, order, starts):
    """Mean best-next squared error: uniform P(x, y), uniform choice over R(x)."""
    n = starts.shape[0] - 1
    total = 0.0
    for x in range(n):
        cnt = starts[x + 1] - starts[x]
        sx = 0
        for k in range(starts[x], starts[x + 1]):
            w = order[k]
            for y in range(n):
                best = BIG
                for j in range(starts[y], starts[y + 1]):
                    d = T[w ^ order[j]]
                    if d < best:
                        best = d
                sx += best * best
        total += sx / cnt
    return total / (n * n)


@nb.njit(cache=True)
def sampled_terms(T, order, starts, xs, us, ys):
    """Per-sample min squared error for triples (x, u -> W in R(x), y)."""
    out = np.empty(xs.shape[0], dtype=np.float64)
    for i in range(xs.shape[0]):
        x = xs[i]
        cnt = starts[x + 1] - starts[x]
        w = order[starts[x] + int(us[i] * cnt)]
        y = ys[i]
        best = BIG
        for j in range(starts[y], starts[y + 1]):
            d = T[w ^ order[j]]
            if d < best:
                best = d
        out[i] = best * best
    return out


@nb.njit(cache=True)
def covers_all(T, n_codes):
    seen = np.zeros(n_codes, dtype=np.bool_)
    for m in range(T.shape[0]):
        if T[m] < n_codes:
            seen[T[m]] = True
    for x in range(n_codes):
        if not seen[x]:
            return False
    return True


@nb.njit(cache=True)
def viterbi(T, order, starts, seq, initial):
    """Minimum sum of squared toggled weights over all representation paths.

    States of a stage are the group members in the given (canonical) order;
    strict comparisons keep the earliest state on ties.  ``initial < 0`` leaves
    stage 0 free.
    """
    n = seq.shape[0]
    offs = np.zeros(n + 1, dtype=np.int64)
    for m in range(n):
        x = seq[m]
        cnt = starts[x + 1] - starts[x]
        if m == 0 and initial >= 0:
            cnt = 1
        offs[m + 1] = offs[m] + cnt
    back = np.zeros(offs[n], dtype=np.int32)
    states = np.empty(offs[n], dtype=np.int64)
    cost = np.zeros(offs[1], dtype=np.int64)
    if initial >= 0:
        states[0] = initial
    else:
        x = seq[0]
        for k in range(offs[1]):
            states[k] = order[starts[x] + k]
    for m in range(1, n):
        y = seq[m]
        base = starts[y]
        cnt = offs[m + 1] - offs[m]
        prev0 = offs[m - 1]
        nprev = offs[m] - prev0
        new = np.empty(cnt, dtype=np.int64)
        for j in range(cnt):
            v = order[base + j]
            states[offs[m] + j] = v
            best = BIG
            bi = 0
            for i in range(nprev):
                d = T[states[prev0 + i] ^ v]
                c = cost[i] + d * d
                if c < best:
                    best = c
                    bi = i
            new[j] = best
            back[offs[m] + j] = bi
        cost = new
    j = 0
    best = cost[0]
    for k in range(1, cost.shape[0]):
        if cost[k] < best:
            best = cost[k]
            j = k
    path = np.empty(n, dtype=np.int64)
    counts = np.empty(n, dtype=np.int64)
    for m in range(n - 1, -1, -1):
        path[m] = states[offs[m] + j]
        counts[m] = offs[m + 1] - offs[m]
        j = back[offs[m] + j]
    return path, best, counts


@nb.njit(cache=True)
def greedy(T, order, starts, seq, first):
    n = seq.shape[0]
    path = np.empty(n, dtype=np.int64)
    path[0] = first
    total = 0
    for m in range(1, n):
        y = seq[m]
        prev = path[m - 1]
        best = BIG
        pick = -1
        for j in range(starts[y], starts[y + 1]):
            d = T[prev ^ order[j]]
            if d < best:
                best = d
                pick = order[j]
        path[m] = pick
        total += best * best
    return path, total


@nb.njit(cache=True)
def greedy_lut(T, order, starts, n_codes):
    n_masks = T.shape[0]
    lut = np.full((n_masks, n_codes), -1, dtype=np.int64)
    for p in range(n_masks):
        if T[p] >= n_codes:
            continue
        for y in range(n_codes):
            best = BIG
            pick = -1
            for j in range(starts[y], starts[y + 1]):
                d = T[p ^ order[j]]
                if d < best:
                    best = d
                    pick = order[j]
            lut[p, y] = pick
    return lut


@nb.njit(cache=True)
def lut_replay(lut, seq, first):
    n = seq.shape[0]
    path = np.empty(n, dtype=np.int64)
    path[0] = first
    for m in range(1, n):
        path[m] = lut[path[m - 1], seq[m]]
    return path


@nb.njit(cache=True)
def coordinate_descent(T, order, starts, table, S, sweep, tol):
    """In-place sweeps of W(x) <- argmin_W sum_y S[x, y] T[W ^ W(y)]^2.

    ``S`` is the symmetrized transition matrix with a zero diagonal, so each
    update lowers the table objective by exactly the improvement found here.
    Returns the per-update improvements and the number of sweeps.
    """
    n = starts.shape[0] - 1
    gains = np.empty(0, dtype=np.float64)
    buf = np.empty(64, dtype=np.float64)
    nbuf = 0
    sweeps = 0
    while True:
        sweeps += 1
        changed = False
        for k in range(n):
            x = sweep[k]
            cur = table[x]
            cur_cost = 0.0
            for y in range(n):
                s = S[x, y]
                if s != 0.0:
                    d = T[cur ^ table[y]]
                    cur_cost += s * d * d
            best = cur_cost
            pick = cur
            for j in range(starts[x], starts[x + 1]):
                w = order[j]
                if w == cur:
                    continue
                c = 0.0
                for y in range(n):
                    s = S[x, y]
                    if s != 0.0:
                        d = T[w ^ table[y]]
                        c += s * d * d
                if c < best - tol * (1.0 + best):
                    best = c
                    pick = w
            if pick != cur:
                table[x] = pick
                changed = True
                if nbuf == buf.shape[0]:
                    grown = np.empty(2 * nbuf, dtype=np.float64)
                    grown[:nbuf] = buf
                    buf = grown
                buf[nbuf] = cur_cost - best
                nbuf += 1
        if not changed:
            break
    gains = buf[:nbuf].copy()
    return gains, sweeps
