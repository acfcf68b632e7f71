"""Compiled whole-scenario engine.

The same frame loop as :func:`twdm_sched.runner.run_scenario`, merge
included, written over flat arrays so numba can compile it. It exists
for the parameter sweeps; the object-level engine in ``merging`` stays
the readable reference, and the test suite checks that the two produce
identical grants and statistics.
"""
from __future__ import annotations

import numpy as np
from numba import njit

from .core import ScenarioConfig
from .traffic import (
    InfeasibleLoadError,
    _ALLOC_INDEX_BITS,
    _MASK64,
    _VNO_BITS,
    build_flow_population,
    burst_bounds,
    stream_key,
    timeline_geometry,
    vbmap_arrays,
    vno_payload_targets,
)

# audit counters
V_CHANNEL, V_XCVR, V_NEGATIVE, V_DUPLICATE, V_CONSERVATION = range(5)
VIOLATION_NAMES = (
    "channel exclusivity violated",
    "transceiver feasibility violated",
    "negative delay",
    "allocation granted twice",
    "conservation violated",
)

# result counters
S_BREACHES, S_FRAMES, S_RETUNES, S_GRANTS, S_DELAYED, S_ERROR_FRAME, S_ERROR_VNO, S_MAX_BACKLOG = range(8)


@njit(cache=True)
def _less(a, b, grp, rank, prio, tm, bits, aid):
    if grp[a] != grp[b]:
        return grp[a] < grp[b]
    if rank[a] != rank[b]:
        return rank[a] < rank[b]
    if prio[a] != prio[b]:
        return prio[a] < prio[b]
    if tm[a] != tm[b]:
        return tm[a] < tm[b]
    if bits[a] != bits[b]:
        return bits[a] < bits[b]
    return aid[a] < aid[b]


@njit(cache=True)
def _push(heap, size, item, grp, rank, prio, tm, bits, aid):
    pos = size
    heap[pos] = item
    while pos > 0:
        parent = (pos - 1) >> 1
        if _less(heap[pos], heap[parent], grp, rank, prio, tm, bits, aid):
            heap[pos], heap[parent] = heap[parent], heap[pos]
            pos = parent
        else:
            break
    return size + 1


@njit(cache=True)
def _pop(heap, size, grp, rank, prio, tm, bits, aid):
    top = heap[0]
    size -= 1
    heap[0] = heap[size]
    pos = 0
    while True:
        left = 2 * pos + 1
        if left >= size:
            break
        child = left
        if left + 1 < size and _less(heap[left + 1], heap[left], grp, rank, prio, tm, bits, aid):
            child = left + 1
        if _less(heap[child], heap[pos], grp, rank, prio, tm, bits, aid):
            heap[pos], heap[child] = heap[child], heap[pos]
            pos = child
        else:
            break
    return top, size


@njit(cache=True)
def _colliding(req, dur_g, n_channels):
    """Flags allocations whose requested interval meets an over-subscribed stretch."""
    n = len(req)
    ev = np.empty(2 * n, np.int64)
    for i in range(n):
        ev[2 * i] = (req[i] + dur_g[i]) * 2  # ends first at equal times
        ev[2 * i + 1] = req[i] * 2 + 1
    ev.sort()
    seg_s = np.empty(n + 1, np.int64)
    seg_e = np.empty(n + 1, np.int64)
    ns = 0
    ne = 0
    active = 0
    for v in ev:
        t = v >> 1
        if v & 1:
            active += 1
            if active == n_channels + 1:
                seg_s[ns] = t
                ns += 1
        else:
            active -= 1
            if active == n_channels:
                seg_e[ne] = t
                ne += 1
    out = np.zeros(n, np.bool_)
    if ns == 0:
        return out
    seg_s = seg_s[:ns]
    for i in range(n):
        k = np.searchsorted(seg_s, req[i] + dur_g[i]) - 1
        if k >= 0 and seg_e[k] > req[i]:
            out[i] = True
    return out


@njit(cache=True)
def _pick(onu, req_at, chan_free, recv_free, x_free, x_cur, xcvrs_per_onu, tuning):
    """(start, transceiver, channel, tuned) the five-step assignment would use."""
    xb = onu * xcvrs_per_onu
    xi = xb
    for x in range(xb + 1, xb + xcvrs_per_onu):
        if x_free[x] < x_free[xi]:
            xi = x
    cur = x_cur[xi]
    best = -1
    best_at = 0
    for c in range(len(chan_free)):
        at = chan_free[c]
        if recv_free[c] > at:
            at = recv_free[c]
        if at < req_at:
            at = req_at
        if best < 0 or at < best_at or (at == best_at and c == cur):
            best = c
            best_at = at
    tuned = cur >= 0 and cur != best
    ready_at = x_free[xi] + tuning if tuned else x_free[xi]
    start = best_at if best_at > ready_at else ready_at
    return start, xi, best, tuned


@njit(cache=True)
def _grow(a, size):
    out = np.empty(max(size, 2 * len(a)), a.dtype)
    out[: len(a)] = a
    return out


@njit(cache=True)
def _key_less(g1, r1, p1, t1, b1, a1, g2, r2, p2, t2, b2, a2):
    if g1 != g2:
        return g1 < g2
    if r1 != r2:
        return r1 < r2
    if p1 != p2:
        return p1 < p2
    if t1 != t2:
        return t1 < t2
    if b1 != b2:
        return b1 < b2
    return a1 < a2


@njit(cache=True)
def simulate(
    seed, num_frames, targets, lo, hi, ref_rate, lanes, channel_rate, guard, frame,
    tuning, n_channels, xcvrs_per_onu, n_onus_total, horizon, warmup, window, tumbling,
    literal_sort, vno_off, weights, onu_local, n_onus_vno, flow_onu, flow_sla,
    cls_target, cls_num, cls_den, cls_thr, cls_stat, n_classes, audit, fault, stratified,
):
    num_vnos = len(targets)
    n_flows = len(flow_onu)
    n_sla = 0
    for j in range(n_flows):
        if flow_sla[j] >= 0:
            n_sla += 1
    sla_idx = np.full(n_flows, -1, np.int64)
    sla_flow_cls = np.empty(n_sla, np.int64)
    k = 0
    for j in range(n_flows):
        if flow_sla[j] >= 0:
            sla_idx[j] = k
            sla_flow_cls[k] = flow_sla[j]
            k += 1
    ring_d = np.zeros((n_sla, window), np.int64)
    ring_t = np.zeros((n_sla, window), np.int64)
    ring_f = np.full((n_sla, window), -1, np.int64)
    rate = np.zeros(n_sla, np.float64)
    margin = np.empty(n_sla, np.float64)
    for s in range(n_sla):
        margin[s] = cls_thr[sla_flow_cls[s]]

    chan_free = np.zeros(n_channels, np.int64)
    recv_free = np.zeros(n_channels, np.int64)
    n_x = n_onus_total * xcvrs_per_onu
    x_free = np.zeros(n_x, np.int64)
    x_cur = np.full(n_x, -1, np.int64)

    # Allocations carried over from earlier frames live in doubly linked
    # lists, one per SLA flow plus one (the last) for best effort. Each list
    # is in priority order and that order never changes between frames, so
    # only the list heads are compared against the frame's heap.
    n_lists = n_sla + 1
    be_list = n_sla
    l_head = np.full(n_lists, -1, np.int64)
    l_tail = np.full(n_lists, -1, np.int64)
    l_count = np.zeros(n_lists, np.int64)
    l_maxreq = np.full(n_lists, -(1 << 62), np.int64)  # upper bound, absolute
    l_cursor = np.full(n_lists, -1, np.int64)
    active = np.empty(n_lists, np.int64)
    p_aid = np.empty(256, np.int64)
    p_req = np.empty(256, np.int64)
    p_bits = np.empty(256, np.int64)
    p_dur = np.empty(256, np.int64)
    p_flow = np.empty(256, np.int64)
    p_origin = np.empty(256, np.int64)
    p_next = np.empty(256, np.int64)
    p_prev = np.empty(256, np.int64)
    p_used = 0
    p_free = -1
    carried = 0

    stats = np.zeros(8, np.int64)
    violations = np.zeros(5, np.int64)
    series = np.zeros(num_frames, np.int64)
    d_val = np.empty(4096, np.int64)
    d_cls = np.empty(4096, np.int64)
    nd = 0

    # audit state in absolute time
    a_chan_end = np.full(n_channels, -(1 << 62), np.int64)
    a_x_end = np.full(n_x, -(1 << 62), np.int64)
    a_x_chan = np.full(n_x, -1, np.int64)

    for f in range(num_frames):
        off = f * frame
        if f > 0:
            for c in range(n_channels):
                chan_free[c] -= frame
                recv_free[c] -= frame
            for x in range(n_x):
                x_free[x] -= frame

        # new allocations, vno by vno, ids ascending
        g_starts = []
        g_sizes = []
        g_flows = []
        n_new = 0
        for v in range(num_vnos):
            w = weights[vno_off[v]:vno_off[v + 1]]
            ol = onu_local[vno_off[v]:vno_off[v + 1]]
            st, sz, fl, status = vbmap_arrays(
                stream_key(seed, v, f), targets[v], lo, hi, ref_rate, lanes,
                channel_rate, guard, frame, w, ol, n_onus_vno[v], stratified,
            )
            if status != 0:
                stats[S_ERROR_FRAME] = f
                stats[S_ERROR_VNO] = v
                return stats, violations, series, d_val[:0], d_cls[:0], -1
            g_starts.append(st)
            g_sizes.append(sz)
            g_flows.append(fl + vno_off[v])
            n_new += len(st)

        u_aid = np.empty(n_new, np.int64)
        u_req = np.empty(n_new, np.int64)
        u_bits = np.empty(n_new, np.int64)
        u_flow = np.empty(n_new, np.int64)
        p = 0
        for v in range(num_vnos):
            base = ((f << _VNO_BITS) | v) << _ALLOC_INDEX_BITS
            st = g_starts[v]
            for q in range(len(st)):
                u_aid[p] = base | q
                u_req[p] = st[q]
                u_bits[p] = g_sizes[v][q]
                u_flow[p] = g_flows[v][q]
                p += 1
        u_dur_g = np.empty(n_new, np.int64)
        for q in range(n_new):
            u_dur_g[q] = -(-u_bits[q] * 1000000000 // channel_rate) + guard
        u_coll = _colliding(u_req, u_dur_g, n_channels)
        order = np.argsort(u_req, kind="mergesort")

        # this frame's allocations in (requested start, id) order, with keys
        n = n_new
        aid = u_aid[order]
        req = u_req[order]
        bits = u_bits[order]
        flow = u_flow[order]
        coll = u_coll[order]
        dur = u_dur_g[order] - guard
        grp = np.zeros(n, np.int64)
        rank = np.zeros(n, np.int64)
        prio = np.zeros(n, np.float64)
        tm = np.empty(n, np.int64)
        kbits = np.zeros(n, np.int64)
        for i in range(n):
            if coll[i]:
                grp[i] = 1
                kbits[i] = bits[i]
                s = sla_idx[flow[i]]
                if s < 0:
                    rank[i] = 1
                    tm[i] = horizon
                else:
                    prio[i] = rate[s] if literal_sort else margin[s]
                    tm[i] = req[i] + cls_target[sla_flow_cls[s]]
            else:
                tm[i] = req[i]

        n_active = 0
        for L in range(n_lists):
            if l_count[L] > 0:
                active[n_active] = L
                n_active += 1
        carried_before = carried

        heap = np.empty(n, np.int64)
        hsize = 0
        blocked = np.empty(n, np.int64)
        granted = np.zeros(n, np.bool_)
        cap_g = n + carried + 1
        gr_aid = np.empty(cap_g, np.int64)
        gr_req = np.empty(cap_g, np.int64)
        gr_start = np.empty(cap_g, np.int64)
        gr_dur = np.empty(cap_g, np.int64)
        gr_chan = np.empty(cap_g, np.int64)
        gr_x = np.empty(cap_g, np.int64)
        ng = 0
        frame_retunes = 0
        i = 0
        t = 0
        have_t = False
        while i < n or hsize > 0 or carried > 0:
            free_now = 1 << 62
            for c in range(n_channels):
                at = chan_free[c] if chan_free[c] > recv_free[c] else recv_free[c]
                if at < free_now:
                    free_now = at
            if not have_t or t < free_now:
                t = free_now
                have_t = True
            if hsize == 0:
                # nothing queued: is a carried allocation requested by now?
                ready = False
                nxt = req[i] if i < n else 1 << 62
                for a in range(n_active):
                    L = active[a]
                    if l_count[L] == 0:
                        continue
                    if t >= l_maxreq[L] - off:
                        ready = True
                        break
                    q = l_head[L]
                    while q >= 0:
                        r = p_req[q] - off
                        if r <= t:
                            ready = True
                            break
                        if r < nxt:
                            nxt = r
                        q = p_next[q]
                    if ready:
                        break
                if not ready and nxt > t:
                    t = nxt
            if t >= frame:
                break
            j = i
            while j < n and req[j] <= t:
                j += 1
            for q in range(i, j):
                hsize = _push(heap, hsize, q, grp, rank, prio, tm, kbits, aid)
            i = j

            # serve the best-ranked allocation able to start at t; the heap
            # and the carried lists are merged by key
            for a in range(n_active):
                l_cursor[active[a]] = l_head[active[a]]
            nbk = 0
            chosen = -1
            chosen_list = -1
            c_x = 0
            c_ch = 0
            c_start = 0
            c_tuned = False
            lowest_blocked = 1 << 62
            while True:
                src = -2
                kg = 0
                kr = 0
                kp = 0.0
                kt = 0
                kb = 0
                ka = 0
                if hsize > 0:
                    h = heap[0]
                    src = -1
                    kg = grp[h]
                    kr = rank[h]
                    kp = prio[h]
                    kt = tm[h]
                    kb = kbits[h]
                    ka = aid[h]
                for a in range(n_active):
                    L = active[a]
                    q = l_cursor[L]
                    while q >= 0 and p_req[q] - off > t:
                        q = p_next[q]
                    l_cursor[L] = q
                    if q < 0:
                        continue
                    if L == be_list:
                        qr = 1
                        qp = 0.0
                        qt = horizon - (f - p_origin[q]) * frame
                    else:
                        qr = 0
                        qp = rate[L] if literal_sort else margin[L]
                        qt = p_req[q] - off + cls_target[sla_flow_cls[L]]
                    if src == -2 or _key_less(1, qr, qp, qt, p_bits[q], p_aid[q], kg, kr, kp, kt, kb, ka):
                        src = L
                        kg = 1
                        kr = qr
                        kp = qp
                        kt = qt
                        kb = p_bits[q]
                        ka = p_aid[q]
                if src == -2:
                    break
                if src == -1:
                    item, hsize = _pop(heap, hsize, grp, rank, prio, tm, kbits, aid)
                    start, xi, ch, tuned = _pick(
                        flow_onu[flow[item]], req[item], chan_free, recv_free, x_free, x_cur,
                        xcvrs_per_onu, tuning,
                    )
                    if start <= t:
                        chosen = item
                    else:
                        blocked[nbk] = item
                        nbk += 1
                else:
                    q = l_cursor[src]
                    start, xi, ch, tuned = _pick(
                        flow_onu[p_flow[q]], p_req[q] - off, chan_free, recv_free, x_free, x_cur,
                        xcvrs_per_onu, tuning,
                    )
                    if start <= t:
                        chosen = q
                        chosen_list = src
                    else:
                        l_cursor[src] = p_next[q]
                if chosen >= 0:
                    c_x = xi
                    c_ch = ch
                    c_start = start
                    c_tuned = tuned
                    break
                if start < lowest_blocked:
                    lowest_blocked = start
            for q in range(nbk):
                hsize = _push(heap, hsize, blocked[q], grp, rank, prio, tm, kbits, aid)
            if chosen < 0:
                # nothing can start yet: wait for a transceiver or the next request
                nxt = req[i] if i < n else 1 << 62
                for a in range(n_active):
                    L = active[a]
                    if l_count[L] == 0 or t >= l_maxreq[L] - off:
                        continue
                    q = l_head[L]
                    while q >= 0:
                        r = p_req[q] - off
                        if r > t and r < nxt:
                            nxt = r
                        q = p_next[q]
                t = lowest_blocked if lowest_blocked < nxt else nxt
                continue

            if chosen_list >= 0:
                q = chosen
                g_aid = p_aid[q]
                g_req = p_req[q] - off
                g_dur = p_dur[q]
                g_flow = p_flow[q]
                # unlink and recycle the slot
                pv = p_prev[q]
                nx = p_next[q]
                if pv >= 0:
                    p_next[pv] = nx
                else:
                    l_head[chosen_list] = nx
                if nx >= 0:
                    p_prev[nx] = pv
                else:
                    l_tail[chosen_list] = pv
                l_count[chosen_list] -= 1
                carried -= 1
                p_next[q] = p_free
                p_prev[q] = -2  # marks a recycled slot
                p_free = q
            else:
                g_aid = aid[chosen]
                g_req = req[chosen]
                g_dur = dur[chosen]
                g_flow = flow[chosen]
                if granted[chosen]:
                    violations[V_DUPLICATE] += 1
                granted[chosen] = True
            free_at = c_start + g_dur + guard
            if fault and ng > 0:
                # deliberately broken booking for the verifier's self-test
                free_at = c_start
            chan_free[c_ch] = free_at
            recv_free[c_ch] = free_at
            x_free[c_x] = free_at
            x_cur[c_x] = c_ch
            gr_aid[ng] = g_aid
            gr_req[ng] = g_req
            gr_start[ng] = c_start
            gr_dur[ng] = g_dur
            gr_chan[ng] = c_ch
            gr_x[ng] = c_x
            ng += 1
            frame_retunes += c_tuned
            delay = c_start - g_req
            s = sla_idx[g_flow]
            if s >= 0:
                slot = f % window
                if ring_f[s, slot] != f:
                    ring_f[s, slot] = f
                    ring_d[s, slot] = 0
                    ring_t[s, slot] = 0
                ring_t[s, slot] += 1
                cls = sla_flow_cls[s]
                if delay > cls_target[cls]:
                    ring_d[s, slot] += 1
                if f >= warmup:
                    if nd == len(d_val):
                        d_val = _grow(d_val, nd + 1)
                        d_cls = _grow(d_cls, nd + 1)
                    d_val[nd] = delay
                    d_cls[nd] = cls_stat[cls]
                    nd += 1
                    if delay > cls_target[cls]:
                        stats[S_DELAYED] += 1

        # carry the rest over: each list stays in key order because this
        # frame's allocations follow every older one of the same flow
        left = np.empty(n, np.int64)
        n_left = 0
        for q in range(n):
            if not granted[q]:
                left[n_left] = q
                n_left += 1
        if n_left:
            left = left[:n_left]
            left = left[np.argsort(aid[left], kind="mergesort")]
            left = left[np.argsort(bits[left], kind="mergesort")]
            sla_left = left[np.argsort(req[left], kind="mergesort")]
            if p_used + n_left > len(p_aid):
                size = p_used + n_left
                p_aid = _grow(p_aid, size)
                p_req = _grow(p_req, size)
                p_bits = _grow(p_bits, size)
                p_dur = _grow(p_dur, size)
                p_flow = _grow(p_flow, size)
                p_origin = _grow(p_origin, size)
                p_next = _grow(p_next, size)
                p_prev = _grow(p_prev, size)
            for phase in range(2):
                seq = sla_left if phase == 0 else left
                for q in seq:
                    s = sla_idx[flow[q]]
                    if (phase == 0) != (s >= 0):
                        continue
                    L = s if s >= 0 else be_list
                    if p_free >= 0:
                        slot = p_free
                        p_free = p_next[slot]
                    else:
                        slot = p_used
                        p_used += 1
                    p_aid[slot] = aid[q]
                    p_req[slot] = req[q] + off
                    p_bits[slot] = bits[q]
                    p_dur[slot] = dur[q]
                    p_flow[slot] = flow[q]
                    p_origin[slot] = f
                    p_next[slot] = -1
                    p_prev[slot] = l_tail[L]
                    if l_tail[L] >= 0:
                        p_next[l_tail[L]] = slot
                    else:
                        l_head[L] = slot
                    l_tail[L] = slot
                    l_count[L] += 1
                    if req[q] + off > l_maxreq[L]:
                        l_maxreq[L] = req[q] + off
                    carried += 1
        if carried > stats[S_MAX_BACKLOG]:
            stats[S_MAX_BACKLOG] = carried

        if audit:
            if ng + carried != n + carried_before:
                violations[V_CONSERVATION] += 1
            by_id = np.argsort(gr_aid[:ng], kind="mergesort")
            by_start = by_id[np.argsort(gr_start[by_id], kind="mergesort")]
            for g in by_start:
                if gr_start[g] - gr_req[g] < 0:
                    violations[V_NEGATIVE] += 1
                st = off + gr_start[g]
                en = st + gr_dur[g] + guard
                c = gr_chan[g]
                if st < a_chan_end[c]:
                    violations[V_CHANNEL] += 1
                if en > a_chan_end[c]:
                    a_chan_end[c] = en
                x = gr_x[g]
                need = a_x_end[x]
                if a_x_chan[x] >= 0 and a_x_chan[x] != c:
                    need += tuning
                if st < need:
                    violations[V_XCVR] += 1
                a_x_end[x] = en
                a_x_chan[x] = c

        # close the frame: windowed rates and breaches
        if tumbling:
            wlo = f - f % window
        else:
            wlo = f - window + 1
        breached = 0
        for s in range(n_sla):
            d = 0
            tt = 0
            for slot in range(window):
                fr = ring_f[s, slot]
                if wlo <= fr and fr <= f:
                    d += ring_d[s, slot]
                    tt += ring_t[s, slot]
            rate[s] = d / tt if tt else 0.0
            cls = sla_flow_cls[s]
            margin[s] = cls_thr[cls] - rate[s]
            if d * cls_den[cls] > cls_num[cls] * tt:
                breached += 1
        series[f] = breached
        if f >= warmup:
            stats[S_FRAMES] += 1
            stats[S_BREACHES] += breached
            stats[S_RETUNES] += frame_retunes
            stats[S_GRANTS] += ng
    return stats, violations, series, d_val[:nd], d_cls[:nd], n_sla


def kernel_inputs(config: ScenarioConfig, fault: bool = False, audit: bool = True) -> tuple:
    """Flatten a scenario into the argument tuple of :func:`simulate`."""
    flows = build_flow_population(config)
    classes = {sla: k for k, sla in enumerate(config.sla_classes)}
    vno_off = [0]
    weights, onu_local, n_onus_vno, flow_onu, flow_sla = [], [], [], [], []
    for vno in range(config.num_vnos):
        own = [fl for fl in flows if fl.vno_id == vno]
        onus = sorted({fl.onu_id for fl in own})
        local = {o: k for k, o in enumerate(onus)}
        for fl in own:
            weights.append(fl.weight)
            onu_local.append(local[fl.onu_id])
            flow_onu.append(fl.onu_id)
            flow_sla.append(-1 if fl.sla is None else config.sla_classes.index(fl.sla))
        n_onus_vno.append(max(1, len(onus)))
        vno_off.append(len(weights))
    thr = [c.threshold_fraction for c in config.sla_classes]
    ref_rate, lanes = timeline_geometry(config)
    lo, hi = burst_bounds(config)
    i64 = lambda xs: np.array(xs, dtype=np.int64)  # noqa: E731
    return (
        np.uint64(config.seed & _MASK64), config.num_frames, i64(vno_payload_targets(config)),
        lo, hi, ref_rate, lanes, config.channel_rate, config.guard_time, config.frame_duration,
        config.tuning_time, config.num_channels, config.transceivers_per_onu,
        config.num_vnos * config.onus_per_vno, config.frame_horizon, config.warmup,
        config.window_frames, config.window_mode == "tumbling",
        config.sort_mode == "literal-rate-ascending",
        i64(vno_off), np.array(weights, dtype=np.float64), i64(onu_local), i64(n_onus_vno),
        i64(flow_onu), i64(flow_sla),
        i64([c.latency_target for c in config.sla_classes]),
        i64([f.numerator for f in thr]), i64([f.denominator for f in thr]),
        np.array([f.numerator / f.denominator for f in thr], dtype=np.float64),
        i64([classes[c] for c in config.sla_classes]), len(config.sla_classes),
        audit, fault, config.placement == "stratified",
    )


def run_compiled(config: ScenarioConfig, *, audit: bool = True, fault: bool = False):
    """Run one scenario through the compiled engine.

    Returns ``(stats, violations, series, delays, delay_classes, sla_flows)``
    as numpy arrays; :func:`twdm_sched.runner.run_scenario` turns them into
    a :class:`~twdm_sched.runner.ScenarioResult`.
    """
    out = simulate(*kernel_inputs(config, fault=fault, audit=audit))
    stats, _, _, _, _, n_sla = out
    if n_sla < 0:
        raise InfeasibleLoadError(
            f"load exceeds capacity of VNO {stats[S_ERROR_VNO]}'s virtual timeline "
            f"in frame {stats[S_ERROR_FRAME]}"
        )
    return out
