"""Numba cores for the two simulation engines.

Both kernels consume pre-drawn random buffers and hand control back to the
caller when a buffer runs out, so that every random number of a run comes
from one numpy Generator: runs are bit-for-bit reproducible given the seed
and independent of chunking.

State shared with the Python wrappers lives in small arrays:

    istate[0]  events generated so far (clock rings / transitions)
    istate[1]  effective events so far
    istate[2]  number of unfrozen edges (0 < zeta < F), Harris only
    istate[3]  total Gillespie edge weight W = sum of (F - zeta) over
               edges with 1 <= zeta <= F-1 (total rate is W / F)
    fstate[0]  current time
    fstate[1]  end time (valid once status != NEED_MORE)

Status codes returned by the kernels:
"""

from __future__ import annotations

import numpy as np
from numba import njit

NEED_MORE = 0
ABSORBED = 1
HORIZON = 2
CAPPED = 3


@njit(cache=True)
def _fenwick_build(weights):
    n = weights.shape[0]
    tree = np.zeros(n + 1, dtype=np.int64)
    for i in range(n):
        j = i + 1
        while j <= n:
            tree[j] += weights[i]
            j += j & (-j)
    return tree


@njit(cache=True)
def _fenwick_add(tree, i, delta):
    j = i + 1
    n = tree.shape[0] - 1
    while j <= n:
        tree[j] += delta
        j += j & (-j)


@njit(cache=True)
def _fenwick_find(tree, msb, v):
    """Largest index set such that prefix sum <= v; returns that 0-based
    position, i.e. the first edge whose cumulative weight exceeds v."""
    idx = 0
    n = tree.shape[0] - 1
    k = msb
    while k > 0:
        nxt = idx + k
        if nxt <= n and tree[nxt] <= v:
            v -= tree[nxt]
            idx = nxt
        k >>= 1
    return idx


@njit(cache=True)
def harris_chunk(cfg, zeta, ring, L, F, horizon, event_cap,
                 exp_buf, own_buf, dir_buf, mark_buf,
                 log_on, log_t, log_src, log_dst, log_feat,
                 log_mark, log_act, log_eff,
                 istate, fstate):
    """Advance the Harris percolation-structure construction through one
    buffer of randomness.

    Every (vertex, feature) cell carries a rate-1 Poisson clock, realised
    here as one merged stream of total rate L*F with the owner cell drawn
    uniformly. A ring of cell (x, i) draws an arrow x -> y = x +- 1 with a
    uniform mark u; the arrow is active iff the edge u joins holds
    0 < zeta and u < 1/zeta - 1/F, and an active arrow copies feature i of
    x onto y (a no-op unless they disagreed: effective). On the interval,
    draws whose target falls off an end are skipped unlogged.
    """
    t = fstate[0]
    events = istate[0]
    n_eff = istate[1]
    n_unfrozen = istate[2]
    inv_F = 1.0 / F
    rate_total = float(L * F)
    n = exp_buf.shape[0]
    n_logged = 0
    status = NEED_MORE
    consumed = n

    for k in range(n):
        tt = t + exp_buf[k] / rate_total
        if tt > horizon:
            fstate[1] = horizon
            status = HORIZON
            consumed = k + 1
            break
        t = tt
        cell = own_buf[k]
        x = cell // F
        i = cell - x * F
        if dir_buf[k] < 0.5:
            y = x + 1
        else:
            y = x - 1
        if ring:
            if y < 0:
                y += L
            elif y >= L:
                y -= L
            edge = x if y == (x + 1) % L else y
        else:
            if y < 0 or y >= L:
                events += 1
                if events >= event_cap:
                    fstate[1] = t
                    status = CAPPED
                    consumed = k + 1
                    break
                continue
            edge = x if y > x else y

        z = zeta[edge]
        u = mark_buf[k]
        active = (z != 0) and (u < 1.0 / z - inv_F)
        eff = active and (cfg[x, i] != cfg[y, i])

        if log_on:
            log_t[n_logged] = t
            log_src[n_logged] = x
            log_dst[n_logged] = y
            log_feat[n_logged] = i
            log_mark[n_logged] = u
            log_act[n_logged] = 1 if active else 0
            log_eff[n_logged] = 1 if eff else 0
            n_logged += 1
        events += 1

        if eff:
            old = cfg[y, i]
            cfg[y, i] = cfg[x, i]
            new = cfg[y, i]
            # source edge loses the disagreement; it was unfrozen (active
            # implies 0 < z < F) and may become inert.
            zeta[edge] = z - 1
            if z - 1 == 0:
                n_unfrozen -= 1
            # the edge on the far side of y gains or keeps its level-i state
            y2 = y + (y - x)
            has_far = True
            if ring:
                if y2 < 0:
                    y2 += L
                elif y2 >= L:
                    y2 -= L
                edge2 = y if y2 == (y + 1) % L else y2
            else:
                if y2 < 0 or y2 >= L:
                    has_far = False
                    edge2 = 0
                else:
                    edge2 = y if y2 > y else y2
            if has_far:
                was = old != cfg[y2, i]
                now = new != cfg[y2, i]
                if was != now:
                    z2 = zeta[edge2]
                    z2n = z2 + 1 if now else z2 - 1
                    zeta[edge2] = z2n
                    was_un = 0 < z2 < F
                    now_un = 0 < z2n < F
                    if now_un and not was_un:
                        n_unfrozen += 1
                    elif was_un and not now_un:
                        n_unfrozen -= 1
            n_eff += 1
            if n_unfrozen == 0:
                fstate[1] = t
                status = ABSORBED
                consumed = k + 1
                break

        if events >= event_cap:
            fstate[1] = t
            status = CAPPED
            consumed = k + 1
            break

    fstate[0] = t
    istate[0] = events
    istate[1] = n_eff
    istate[2] = n_unfrozen
    return consumed, n_logged, status


@njit(cache=True)
def gillespie_chunk(cfg, zeta, tree, msb, ring, L, F, horizon, event_cap,
                    exp_buf, uedge_buf, ufeat_buf, udir_buf,
                    log_on, log_t, log_src, log_dst, log_feat,
                    log_mark, log_act, log_eff,
                    istate, fstate):
    """Advance the direct (Gillespie) engine through one buffer of randomness.

    Only effective transitions are sampled: an edge with zeta = j in
    1..F-1 fires at rate 1 - j/F; within the chosen edge a disagreeing
    feature is picked uniformly and a copy direction with probability 1/2.
    Edge selection uses integer weights F - j in a Fenwick tree so each
    event costs O(log E). All logged arrows are active and effective; the
    mark column records the edge-selection uniform to keep the record
    shape identical to the Harris engine.
    """
    t = fstate[0]
    events = istate[0]
    n_eff = istate[1]
    W = istate[3]
    n = exp_buf.shape[0]
    n_logged = 0
    status = NEED_MORE
    consumed = n

    for k in range(n):
        if W == 0:
            fstate[1] = t
            status = ABSORBED
            consumed = k
            break
        tt = t + exp_buf[k] * F / W
        if tt > horizon:
            fstate[1] = horizon
            status = HORIZON
            consumed = k + 1
            break
        t = tt

        v = uedge_buf[k] * W
        if v >= W:
            v = W * (1.0 - 2.3e-16)
        edge = _fenwick_find(tree, msb, v)
        a = edge
        b = edge + 1
        if ring and b >= L:
            b -= L
        z = zeta[edge]

        m = int(ufeat_buf[k] * z)
        if m >= z:
            m = z - 1
        i = -1
        cnt = 0
        for j in range(F):
            if cfg[a, j] != cfg[b, j]:
                if cnt == m:
                    i = j
                    break
                cnt += 1

        if udir_buf[k] < 0.5:
            src = a
            dst = b
        else:
            src = b
            dst = a

        if log_on:
            log_t[n_logged] = t
            log_src[n_logged] = src
            log_dst[n_logged] = dst
            log_feat[n_logged] = i
            log_mark[n_logged] = uedge_buf[k]
            log_act[n_logged] = 1
            log_eff[n_logged] = 1
            n_logged += 1
        events += 1
        n_eff += 1

        old = cfg[dst, i]
        cfg[dst, i] = cfg[src, i]
        new = cfg[dst, i]

        w_old = F - z
        zn = z - 1
        w_new = F - zn if zn > 0 else 0
        zeta[edge] = zn
        if w_new != w_old:
            _fenwick_add(tree, edge, w_new - w_old)
            W += w_new - w_old

        y2 = dst + (dst - src)
        has_far = True
        if ring:
            if y2 < 0:
                y2 += L
            elif y2 >= L:
                y2 -= L
            edge2 = dst if y2 == (dst + 1) % L else y2
        else:
            if y2 < 0 or y2 >= L:
                has_far = False
                edge2 = 0
            else:
                edge2 = dst if y2 > dst else y2
        if has_far:
            was = old != cfg[y2, i]
            now = new != cfg[y2, i]
            if was != now:
                z2 = zeta[edge2]
                z2n = z2 + 1 if now else z2 - 1
                zeta[edge2] = z2n
                w2_old = F - z2 if 0 < z2 < F else 0
                w2_new = F - z2n if 0 < z2n < F else 0
                if w2_new != w2_old:
                    _fenwick_add(tree, edge2, w2_new - w2_old)
                    W += w2_new - w2_old

        if W == 0:
            fstate[1] = t
            status = ABSORBED
            consumed = k + 1
            break
        if events >= event_cap:
            fstate[1] = t
            status = CAPPED
            consumed = k + 1
            break

    fstate[0] = t
    istate[0] = events
    istate[1] = n_eff
    istate[3] = W
    return consumed, n_logged, status
