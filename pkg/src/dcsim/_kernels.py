"""Compiled inner loops. Row-wise kernels take 2-D float arrays with one
history window per row; callers in detection/selection/placement wrap them."""

import numpy as np
from numba import njit

THR, MAD, IQR, LR, LRR = 0, 1, 2, 3, 4
RANK_RTOL = 1e-10
LEVERAGE_TOL = 1e-9


@njit(cache=True)
def _median_sorted(s, lo, hi):
    n = hi - lo
    mid = lo + n // 2
    if n % 2:
        return s[mid]
    return 0.5 * (s[mid - 1] + s[mid])


@njit(cache=True)
def mad_rows(x):
    m, n = x.shape
    out = np.empty(m)
    dev = np.empty(n)
    for r in range(m):
        s = np.sort(x[r])
        med = _median_sorted(s, 0, n)
        for i in range(n):
            dev[i] = abs(x[r, i] - med)
        out[r] = _median_sorted(np.sort(dev), 0, n)
    return out


@njit(cache=True)
def iqr_rows(x):
    m, n = x.shape
    half = n // 2
    out = np.empty(m)
    for r in range(m):
        s = np.sort(x[r])
        out[r] = _median_sorted(s, n - half, n) - _median_sorted(s, 0, half)
    return out


@njit(cache=True)
def tricube(n):
    w = np.empty(n)
    for i in range(1, n + 1):
        d = (n - i) / n
        w[i - 1] = (1.0 - d * d * d) ** 3
    return w


@njit(cache=True)
def wls_line(y, w):
    """Weighted LS line over x = 1..n: (intercept, slope, ok)."""
    n = y.shape[0]
    sw = 0.0
    sx = 0.0
    sy = 0.0
    for i in range(n):
        sw += w[i]
        sx += w[i] * (i + 1)
        sy += w[i] * y[i]
    if sw <= 0.0:
        return 0.0, 0.0, False
    xm = sx / sw
    ym = sy / sw
    sxx = 0.0
    sxy = 0.0
    for i in range(n):
        dx = (i + 1) - xm
        sxx += w[i] * dx * dx
        sxy += w[i] * dx * (y[i] - ym)
    if sxx <= 1e-12 * sw:
        return ym, 0.0, False
    b = sxy / sxx
    return ym - b * xm, b, True


@njit(cache=True)
def loess_rows(x, robust_iterations):
    """One-step-ahead tricube-weighted linear prediction per row, with
    optional bisquare robustness passes."""
    m, n = x.shape
    w = tricube(n)
    out = np.empty(m)
    resid = np.empty(n)
    rw = np.empty(n)
    for r in range(m):
        y = x[r]
        a0, b0, _ = wls_line(y, w)
        a, b = a0, b0
        for _ in range(robust_iterations):
            for i in range(n):
                resid[i] = abs(y[i] - (a + b * (i + 1)))
            scale = 6.0 * _median_sorted(np.sort(resid), 0, n)
            if scale <= 0.0:
                break
            for i in range(n):
                z = resid[i] / scale
                rw[i] = w[i] * (1.0 - z * z) ** 2 if z < 1.0 else 0.0
            a2, b2, ok = wls_line(y, rw)
            if not ok:
                a, b = a0, b0
                break
            a, b = a2, b2
        out[r] = max(0.0, a + b * (n + 1))
    return out


@njit(cache=True)
def overloaded_rows(kind, param, x):
    """Overload decision for rows holding a full detector window."""
    m, n = x.shape
    out = np.empty(m, dtype=np.bool_)
    if kind == THR:
        for r in range(m):
            out[r] = x[r, n - 1] > param
        return out
    if kind == MAD or kind == IQR:
        stat = mad_rows(x) if kind == MAD else iqr_rows(x)
        for r in range(m):
            thr = min(1.0, max(0.0, 1.0 - param * stat[r]))
            out[r] = x[r, n - 1] > thr
        return out
    pred = loess_rows(x, 2 if kind == LRR else 0)
    for r in range(m):
        out[r] = param * pred[r] >= 1.0
    return out


@njit(cache=True)
def multiple_r2(h, variance_floor):
    """R^2 of each row regressed (OLS with intercept) on the other rows.

    With the centered rows factored as U S V', a row of leverage below 1
    lies in the span of the others (R^2 = 1); otherwise its squared
    distance from that span is 1 / sum_l (U[j, l] / s_l)^2.
    """
    k, n = h.shape
    z = np.empty((k, n))
    sst = np.empty(k)
    for j in range(k):
        z[j] = h[j] - h[j].mean()
        sst[j] = (z[j] * z[j]).sum()
    out = np.zeros(k)
    u, s, _ = np.linalg.svd(z, full_matrices=False)
    rank = 0
    for l in range(s.shape[0]):
        if s[l] > RANK_RTOL * s[0]:
            rank += 1
    for j in range(k):
        if sst[j] <= variance_floor:
            continue
        lev = 0.0
        inv = 0.0
        for l in range(rank):
            lev += u[j, l] * u[j, l]
            inv += (u[j, l] / s[l]) ** 2
        if lev < 1.0 - LEVERAGE_TOL:
            out[j] = 1.0
        else:
            out[j] = max(0.0, 1.0 - (1.0 / inv) / sst[j])
    return out


@njit(cache=True)
def pabfd(order, vm_demand, vm_ram, vm_host, demand, ram_used, active, blocked,
          mips, ram_cap, idle_w, max_w, full_power, headroom, allow_wake, tie_tol):
    """Best-fit-decreasing by least power increase.

    ``demand``, ``ram_used`` and ``active`` are updated in place (callers
    pass copies). Returns the destination per entry of ``order`` (-1 when
    unplaced) and whether that destination had to be woken.
    """
    n_hosts = mips.shape[0]
    dest = np.full(order.shape[0], -1, dtype=np.int64)
    woke = np.zeros(order.shape[0], dtype=np.bool_)
    slope = 0.0 if full_power else max_w - idle_w
    dps = np.empty(n_hosts)
    for k in range(order.shape[0]):
        vm = order[k]
        vd = vm_demand[vm]
        vr = vm_ram[vm]
        src = vm_host[vm]
        best_dp = np.inf
        first_asleep = -1
        for h in range(n_hosts):
            dps[h] = np.inf
            if blocked[h] or h == src:
                continue
            if ram_used[h] + vr > ram_cap[h] or (demand[h] + vd) / mips[h] > headroom:
                continue
            if not active[h]:
                if first_asleep < 0:
                    first_asleep = h
                continue
            before = min(1.0, max(0.0, demand[h] / mips[h]))
            after = min(1.0, (demand[h] + vd) / mips[h])
            dps[h] = slope * (after - before)
            best_dp = min(best_dp, dps[h])
        best = -1
        if best_dp < np.inf:
            for h in range(n_hosts):
                if dps[h] <= best_dp + tie_tol:
                    best = h
                    break
        if best < 0 and allow_wake and first_asleep >= 0:
            best = first_asleep
            active[best] = True
            woke[k] = True
        if best >= 0:
            dest[k] = best
            demand[best] += vd
            ram_used[best] += vr
    return dest, woke
