"""Compiled event loop; same rules and tie-breaking as `reference_sim`."""

import math

import numpy as np
from numba import njit

STATIC, TOFEC, GREEDY = 0, 1, 2
OK, ABORTED = 0, 1


@njit(cache=True)
def _index(thresholds, length, q_bar):
    # thresholds[0] is inf; count thresholds (excluding the trailing 0) above q_bar
    j = 0
    for i in range(length - 1):
        if q_bar < thresholds[i]:
            j += 1
    return j


@njit(cache=True)
def run_kernel(
    arrivals, cls_idx, task_u, L,
    kind, static_n, static_k, alpha,
    zeta, zeta_len, kappa, kappa_len, n_max, k_max, r_max,
    shift_tab, tail_tab, use_trace, bvals, boff, blen,
    max_backlog,
):
    N = arrivals.shape[0]
    n_arr = np.zeros(N, np.int64)
    k_arr = np.zeros(N, np.int64)
    q_arr = np.zeros(N, np.int64)
    l_arr = np.zeros(N, np.int64)
    t_admit = np.full(N, np.nan)
    t_done = np.full(N, np.nan)
    usage = np.zeros(N)
    done_cnt = np.zeros(N, np.int64)

    th_busy = np.zeros(L, np.bool_)
    th_req = np.full(L, -1, np.int64)
    th_start = np.zeros(L)
    th_finish = np.zeros(L)
    th_seq = np.zeros(L, np.int64)
    th_delay = np.zeros(L)

    seq = 0
    head = 0          # next request to admit
    n_in = 0          # arrivals processed so far
    arr_seq = 0
    if N > 0:
        arr_seq = seq
        seq += 1
    tq_req = -1
    tq_left = 0
    tq_next = 0
    q_bar = 0.0
    status = OK

    while True:
        # earliest busy thread by (finish, seq)
        th = -1
        for i in range(L):
            if th_busy[i]:
                if th < 0 or th_finish[i] < th_finish[th] or (
                    th_finish[i] == th_finish[th] and th_seq[i] < th_seq[th]
                ):
                    th = i
        has_arr = n_in < N
        if th < 0 and not has_arr:
            break
        take_arrival = False
        if has_arr:
            if th < 0:
                take_arrival = True
            else:
                ta = arrivals[n_in]
                tf = th_finish[th]
                take_arrival = ta < tf or (ta == tf and arr_seq < th_seq[th])

        if take_arrival:
            r = n_in
            now = arrivals[r]
            c = cls_idx[r]
            q = r - head
            idle = 0
            for i in range(L):
                if not th_busy[i]:
                    idle += 1
            if kind == STATIC:
                n = static_n[c]
                k = static_k[c]
            elif kind == GREEDY:
                if idle == 0:
                    n = 1
                    k = 1
                else:
                    k = min(k_max[c], idle)
                    n = min(int(math.floor(r_max[c] * k + 1e-9)), idle)
                    n = max(n, k)
            else:
                q_bar = alpha * q + (1.0 - alpha) * q_bar
                k = min(_index(kappa[c], kappa_len[c], q_bar), k_max[c])
                n = min(_index(zeta[c], zeta_len[c], q_bar), n_max[c])
                n = min(int(math.floor(r_max[c] * k + 1e-9)), n)
                n = max(n, k)
            n_arr[r] = n
            k_arr[r] = k
            q_arr[r] = q
            l_arr[r] = idle
            n_in += 1
            if n_in < N:
                arr_seq = seq
                seq += 1
        else:
            now = th_finish[th]
            r = th_req[th]
            usage[r] += th_delay[th]
            done_cnt[r] += 1
            th_busy[th] = False
            th_req[th] = -1
            if done_cnt[r] == k_arr[r]:
                t_done[r] = now
                for i in range(L):
                    if th_busy[i] and th_req[i] == r:
                        usage[r] += now - th_start[i]
                        th_busy[i] = False
                        th_req[i] = -1
                if tq_req == r:
                    tq_left = 0

        # work-conserving dispatch
        while True:
            idle_th = -1
            for i in range(L):
                if not th_busy[i]:
                    idle_th = i
                    break
            if idle_th < 0:
                break
            if tq_left > 0:
                r = tq_req
                c = cls_idx[r]
                k = k_arr[r]
                u = task_u[r, tq_next]
                if use_trace:
                    m = blen[c, k]
                    j = int(u * m)
                    if j > m - 1:
                        j = m - 1
                    d = bvals[boff[c, k] + j]
                else:
                    d = shift_tab[c, k] + tail_tab[c, k] * -math.log1p(-u)
                if not math.isfinite(d):
                    status = -1
                    return (n_arr, k_arr, q_arr, l_arr, t_admit, t_done, usage, n_in, status)
                th_busy[idle_th] = True
                th_req[idle_th] = r
                th_start[idle_th] = now
                th_finish[idle_th] = now + d
                th_delay[idle_th] = d
                th_seq[idle_th] = seq
                seq += 1
                tq_next += 1
                tq_left -= 1
            elif head < n_in:
                t_admit[head] = now
                tq_req = head
                tq_left = n_arr[head]
                tq_next = 0
                head += 1
            else:
                break

        if n_in - head > max_backlog:
            status = ABORTED
            break

    return (n_arr, k_arr, q_arr, l_arr, t_admit, t_done, usage, n_in, status)
