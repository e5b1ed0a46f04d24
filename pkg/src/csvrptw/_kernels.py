"""Compiled inner loops of the pricing search and the RCSP completion table.

Everything here works on plain arrays; :mod:`csvrptw.pricing` owns the
public API, argument checking and the cross-checks of the results.
"""

from __future__ import annotations

import numpy as np
from numba import njit

INF = np.inf

# penalty kinds
PEN_QUADRATIC = 0
PEN_LINEAR = 1
PEN_TABLE = 2


@njit(cache=True)
def penalty(u, kind, scale, tu, tv, slope):
    if u <= 0.0:
        return 0.0
    if kind == PEN_QUADRATIC:
        return scale * u * u
    if kind == PEN_LINEAR:
        return scale * u
    n = tu.shape[0]
    if u >= tu[n - 1]:
        return scale * (tv[n - 1] + (u - tu[n - 1]) * slope)
    k = np.searchsorted(tu, u, side="right") - 1
    return scale * (tv[k] + (tv[k + 1] - tv[k]) * (u - tu[k]) / (tu[k + 1] - tu[k]))


@njit(cache=True)
def rcsp_table(cost, gamma, ready, due, demand, Q, mint, allowed, dt, G, tight, kind, scale, tu, tv, slope):
    """Best and second-best relaxed completion values ``T1[g, i, q]``.

    Row ``g`` assumes departure from ``i`` no earlier than ``g * dt``. The
    verbatim variant looks successors up in the same row and charges
    ``pi(g*dt - l_j)``; the tight variant charges the lateness of the earliest
    possible arrival and looks up the row of the earliest possible departure
    from ``j``. Rows are filled from the latest departure time down so that
    every lookup refers to a finished row or a smaller capacity.
    """
    n1 = cost.shape[0]
    T1 = np.empty((G, n1, Q + 1))
    T2 = np.empty((G, n1, Q + 1))
    NX = np.zeros((G, n1, Q + 1), dtype=np.int64)
    # arc data independent of the capacity sweep
    succ = np.zeros((n1, n1), dtype=np.int64)
    n_succ = np.zeros(n1, dtype=np.int64)
    for i in range(1, n1):
        for j in range(1, n1):
            if j != i and allowed[i, j]:
                succ[i, n_succ[i]] = j
                n_succ[i] += 1
    step = np.empty((n1, n1))
    gj_row = np.empty((n1, n1), dtype=np.int64)
    for g in range(G - 1, -1, -1):
        delta = g * dt
        for i in range(1, n1):
            for k in range(n_succ[i]):
                j = succ[i, k]
                if tight:
                    gj = g + int(mint[i, j] / dt)
                    ge = int(ready[j] / dt)
                    if ge > gj:
                        gj = ge
                    if gj > G - 1:
                        gj = G - 1
                    pen = penalty(delta + mint[i, j] - due[j], kind, scale, tu, tv, slope)
                else:
                    gj = g
                    pen = penalty(delta - due[j], kind, scale, tu, tv, slope)
                gj_row[i, j] = gj
                step[i, j] = cost[i, j] - gamma[j] + pen
        for i in range(n1):
            for q in range(Q + 1):
                T1[g, i, q] = INF
                T2[g, i, q] = INF
        for q in range(Q + 1):
            T1[g, 0, q] = 0.0
        for i in range(1, n1):
            T1[g, i, 0] = cost[i, 0]
        for q in range(1, Q + 1):
            for i in range(1, n1):
                b1 = T1[g, i, q - 1]
                b2 = T2[g, i, q - 1]
                nx = NX[g, i, q - 1]
                for k in range(n_succ[i]):
                    j = succ[i, k]
                    if demand[j] > q:
                        continue
                    gj = gj_row[i, j]
                    qq = q - demand[j]
                    if NX[gj, j, qq] != i:
                        rest = T1[gj, j, qq]
                    else:
                        rest = T2[gj, j, qq]
                    v = step[i, j] + rest
                    if v < b1:
                        b2 = b1
                        b1 = v
                        nx = j
                    elif v < b2:
                        b2 = v
                T1[g, i, q] = b1
                T2[g, i, q] = b2
                NX[g, i, q] = nx
    return T1


@njit(cache=True)
def knapsack_value(i, tau, room, visited, gamma, due, demand, lb, kind, scale, tu, tv, slope):
    """Greedy fractional knapsack over unvisited customers; returns the (nonnegative) value."""
    n1 = gamma.shape[0]
    vals = np.zeros(n1)
    ratio = np.full(n1, -INF)
    total = 0.0
    for j in range(1, n1):
        if (visited >> j) & 1:
            continue
        v = gamma[j] - penalty(tau + lb[i, j] - due[j], kind, scale, tu, tv, slope)
        if v <= 0.0:
            continue
        if demand[j] <= 0:
            total += v
            continue
        vals[j] = v
        ratio[j] = v / demand[j]
    if room <= 0:
        return total
    order = np.argsort(-ratio, kind="mergesort")
    left = room
    for k in range(n1):
        j = order[k]
        if ratio[j] == -INF:
            break
        w = demand[j]
        if w <= left:
            total += vals[j]
            left -= w
        else:
            total += vals[j] * left / w
            break
    return total


@njit(cache=True)
def _heap_push(hkey, hidx, size, key, idx):
    k = size
    hkey[k] = key
    hidx[k] = idx
    while k > 0:
        parent = (k - 1) >> 1
        if hkey[parent] < hkey[k] or (hkey[parent] == hkey[k] and hidx[parent] < hidx[k]):
            break
        hkey[parent], hkey[k] = hkey[k], hkey[parent]
        hidx[parent], hidx[k] = hidx[k], hidx[parent]
        k = parent


@njit(cache=True)
def _heap_pop(hkey, hidx, size):
    key = hkey[0]
    idx = hidx[0]
    size -= 1
    hkey[0] = hkey[size]
    hidx[0] = hidx[size]
    k = 0
    while True:
        a = 2 * k + 1
        if a >= size:
            break
        b = a + 1
        c = a
        if b < size and (hkey[b] < hkey[a] or (hkey[b] == hkey[a] and hidx[b] < hidx[a])):
            c = b
        if hkey[k] < hkey[c] or (hkey[k] == hkey[c] and hidx[k] < hidx[c]):
            break
        hkey[c], hkey[k] = hkey[k], hkey[c]
        hidx[c], hidx[k] = hidx[k], hidx[c]
        k = c
    return key, idx


@njit(cache=True)
def _grow_f(a, n):
    b = np.empty(n, dtype=a.dtype)
    b[: a.shape[0]] = a
    return b


@njit(cache=True)
def _grow_2d(a, n):
    b = np.empty((n, a.shape[1]), dtype=a.dtype)
    b[: a.shape[0]] = a
    return b


@njit(cache=True)
def label_search(cost, times, weights, ready, due, demand, Q, gamma, mu, allowed,
                 kind, scale, tu, tv, slope, T1, dt, use_rcsp, use_ks, lb,
                 label_cap, max_routes, threshold, stop_after):
    """Best-first elementary labeling with RCSP and knapsack pruning.

    Returns ``(paths, lengths, redcosts, stats, exhausted)``; ``stats`` counts
    labels created, expanded, pruned by the RCSP bound, pruned by the
    knapsack bound, and routes recorded.
    """
    n1 = cost.shape[0]
    S = times.shape[0]
    G = T1.shape[0]
    cap = 4096
    node = np.empty(cap, dtype=np.int64)
    parent = np.empty(cap, dtype=np.int64)
    cbar = np.empty(cap)
    load = np.empty(cap, dtype=np.int64)
    tau = np.empty(cap)
    visited = np.empty(cap, dtype=np.int64)
    slot = np.empty(cap, dtype=np.int64)
    pool = np.empty((cap, S))
    free = np.empty(cap, dtype=np.int64)
    n_free = 0
    n_slots = 0
    hkey = np.empty(cap)
    hidx = np.empty(cap, dtype=np.int64)
    hsize = 0
    n_lab = 0

    fidx = np.empty(max_routes, dtype=np.int64)
    fcost = np.empty(max_routes)
    n_found = 0
    stats = np.zeros(5, dtype=np.int64)
    exhausted = False
    a = np.empty(S)

    # expansion candidates: the depot pseudo-label is index -1
    stack_parent = -1
    done = False
    while not done:
        if stack_parent == -1:
            i = 0
            c0 = -mu
            q0 = 0
            vis0 = 0
            done_first = True
        else:
            i = node[stack_parent]
            c0 = cbar[stack_parent]
            q0 = load[stack_parent]
            vis0 = visited[stack_parent]
            done_first = False
        for j in range(1, n1):
            if (vis0 >> j) & 1 or not allowed[i, j] or q0 + demand[j] > Q:
                continue
            pen = 0.0
            for w in range(S):
                if done_first:
                    a[w] = times[w, 0, j]
                else:
                    a[w] = pool[slot[stack_parent], w] + times[w, i, j]
                pen += weights[w] * penalty(a[w] - due[j], kind, scale, tu, tv, slope)
            c_new = c0 - cost[i, 0] + cost[i, j] + cost[j, 0] + pen - gamma[j]
            q_new = q0 + demand[j]
            t_new = INF
            for w in range(S):
                s = a[w] if a[w] > ready[j] else ready[j]
                a[w] = s
                if s < t_new:
                    t_new = s
            stats[0] += 1

            cutoff = threshold
            if n_found == max_routes:
                worst = fcost[0]
                for k in range(1, n_found):
                    if fcost[k] > worst:
                        worst = fcost[k]
                if worst < cutoff:
                    cutoff = worst

            # allocate the label (needed both for routes and for expansion)
            if n_lab == node.shape[0]:
                m = 2 * node.shape[0]
                node = _grow_f(node, m)
                parent = _grow_f(parent, m)
                cbar = _grow_f(cbar, m)
                load = _grow_f(load, m)
                tau = _grow_f(tau, m)
                visited = _grow_f(visited, m)
                slot = _grow_f(slot, m)
            lab = n_lab
            n_lab += 1
            node[lab] = j
            parent[lab] = stack_parent
            cbar[lab] = c_new
            load[lab] = q_new
            tau[lab] = t_new
            visited[lab] = vis0 | (1 << j)
            slot[lab] = -1

            if allowed[j, 0] and c_new < cutoff:
                if n_found < max_routes:
                    fidx[n_found] = lab
                    fcost[n_found] = c_new
                    n_found += 1
                else:
                    wk = 0
                    for k in range(1, n_found):
                        if fcost[k] > fcost[wk]:
                            wk = k
                    fidx[wk] = lab
                    fcost[wk] = c_new
                stats[4] += 1
                if n_found == max_routes:
                    worst = fcost[0]
                    for k in range(1, n_found):
                        if fcost[k] > worst:
                            worst = fcost[k]
                    if worst < cutoff:
                        cutoff = worst

            room = Q - q_new
            key = -INF  # without a bound nothing may be discarded
            if use_rcsp:
                g = int(t_new / dt)
                if g > G - 1:
                    g = G - 1
                bnd = T1[g, j, room] - cost[j, 0]
                key = c_new + bnd
                if key >= cutoff:
                    stats[2] += 1
                    continue
            if use_ks:
                val = knapsack_value(j, t_new, room, vis0 | (1 << j), gamma, due, demand, lb,
                                     kind, scale, tu, tv, slope)
                if c_new - val >= cutoff:
                    stats[3] += 1
                    continue
                if not use_rcsp:
                    key = c_new - val

            # keep for expansion
            if n_free > 0:
                n_free -= 1
                sl = free[n_free]
            else:
                if n_slots == pool.shape[0]:
                    pool = _grow_2d(pool, 2 * pool.shape[0])
                    free = _grow_f(free, 2 * free.shape[0])
                sl = n_slots
                n_slots += 1
            for w in range(S):
                pool[sl, w] = a[w]
            slot[lab] = sl
            if hsize == hkey.shape[0]:
                hkey = _grow_f(hkey, 2 * hkey.shape[0])
                hidx = _grow_f(hidx, 2 * hidx.shape[0])
            _heap_push(hkey, hidx, hsize, key, lab)
            hsize += 1
            if hsize > label_cap:
                exhausted = True
                break
        if exhausted:
            break
        if stack_parent >= 0:
            free[n_free] = slot[stack_parent]
            n_free += 1
            slot[stack_parent] = -1
        if stop_after > 0 and n_found >= stop_after:
            break
        # next label to expand
        stack_parent = -2
        while hsize > 0:
            key, lab = _heap_pop(hkey, hidx, hsize)
            hsize -= 1
            cutoff = threshold
            if n_found == max_routes:
                worst = fcost[0]
                for k in range(1, n_found):
                    if fcost[k] > worst:
                        worst = fcost[k]
                if worst < cutoff:
                    cutoff = worst
            if key >= cutoff:
                free[n_free] = slot[lab]
                n_free += 1
                slot[lab] = -1
                continue
            stack_parent = lab
            stats[1] += 1
            break
        if stack_parent == -2:
            done = True

    paths = np.full((n_found, n1), -1, dtype=np.int64)
    lengths = np.zeros(n_found, dtype=np.int64)
    red = np.empty(n_found)
    for k in range(n_found):
        lab = fidx[k]
        red[k] = fcost[k]
        m = 0
        while lab >= 0:
            m += 1
            lab = parent[lab]
        lengths[k] = m
        lab = fidx[k]
        pos = m - 1
        while lab >= 0:
            paths[k, pos] = node[lab]
            pos -= 1
            lab = parent[lab]
    return paths, lengths, red, stats, exhausted
