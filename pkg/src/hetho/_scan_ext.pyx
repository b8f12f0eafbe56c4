# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
# distutils: language = c++
"""Compiled handover scan; processes UEs one after another."""
import numpy as np
cimport numpy as cnp
from libc.math cimport log, sqrt, exp, INFINITY
from libcpp.vector cimport vector
from libcpp.algorithm cimport sort

from .scan import ScanInput, ScanOutput, build_grid

cnp.import_array()

BACKEND = "compiled"
GRID_CELL = 250.0


cdef inline double _score(double lw, double ha, double d2) noexcept nogil:
    if d2 == 0.0:
        return INFINITY
    return lw - ha * log(d2)


cdef void _refresh(
    double x, double y, int s, double D,
    const double[::1] bx, const double[::1] by, const int[::1] bt,
    const double[::1] logw, const double[::1] alpha,
    double gx0, double gy0, double cell, long gsize,
    const long long[::1] gstart, const int[::1] gitems,
    double* rad2, vector[int]& cand,
) noexcept nogil:
    cdef int N = logw.shape[0]
    cdef int st = bt[s]
    cdef double ds = sqrt((bx[s] - x) * (bx[s] - x) + (by[s] - y) * (by[s] - y))
    cdef double rmax = 0.0, r
    cdef int n
    for n in range(N):
        r = exp((logw[n] - logw[st] + alpha[st] * log(ds + D)) / alpha[n]) + D
        rad2[n] = r * r
        if r > rmax:
            rmax = r
    cdef long i0 = <long>((x - rmax - gx0) / cell)
    cdef long i1 = <long>((x + rmax - gx0) / cell)
    cdef long j0 = <long>((y - rmax - gy0) / cell)
    cdef long j1 = <long>((y + rmax - gy0) / cell)
    if i0 < 0: i0 = 0
    if j0 < 0: j0 = 0
    if i1 > gsize - 1: i1 = gsize - 1
    if j1 > gsize - 1: j1 = gsize - 1
    cand.clear()
    cdef long ii, jj, q, key
    cdef int b
    cdef double dx, dy
    for jj in range(j0, j1 + 1):
        for ii in range(i0, i1 + 1):
            key = jj * gsize + ii
            for q in range(gstart[key], gstart[key + 1]):
                b = gitems[q]
                dx = bx[b] - x
                dy = by[b] - y
                if dx * dx + dy * dy <= rad2[bt[b]]:
                    cand.push_back(b)
    sort(cand.begin(), cand.end())


def scan(inp):
    grid = build_grid(inp.bs_x, inp.bs_y, max(inp.boundary_radius, float(np.max(np.hypot(inp.bs_x, inp.bs_y), initial=0.0))), GRID_CELL)
    cdef const double[::1] bx = inp.bs_x
    cdef const double[::1] by = inp.bs_y
    cdef const int[::1] bt = inp.bs_tier
    cdef const double[::1] logw = inp.tier_logw
    cdef const double[::1] alpha = inp.tier_alpha
    cdef const double[::1] ux = inp.ue_x
    cdef const double[::1] uy = inp.ue_y
    cdef const int[::1] serv0 = inp.serving
    cdef const long long[::1] leg_ptr = inp.leg_ptr
    cdef const long long[::1] leg_steps = inp.leg_steps
    cdef const double[::1] leg_cos = inp.leg_cos
    cdef const double[::1] leg_sin = inp.leg_sin
    cdef const double[::1] leg_speed = inp.leg_speed
    cdef const long long[::1] gstart = grid.start
    cdef const int[::1] gitems = grid.items
    cdef double gx0 = grid.x0, gy0 = grid.y0, cell = grid.cell
    cdef long gsize = grid.size

    cdef int U = ux.shape[0]
    cdef int N = logw.shape[0]
    cdef long long n_steps = inp.n_steps
    cdef double dt = inp.dt, D = inp.refresh_distance
    cdef double Rb = inp.boundary_radius
    cdef double Rb2 = Rb * Rb
    cdef double rc2 = inp.count_radius * inp.count_radius
    cdef double rr2 = inp.residence_radius * inp.residence_radius
    cdef double cutoff = inp.residence_cutoff

    counts_np = np.zeros((N, N), dtype=np.int64)
    cdef long long[:, ::1] counts = counts_np
    fx_np = np.empty(U)
    fy_np = np.empty(U)
    fs_np = np.empty(U, dtype=np.int32)
    cdef double[::1] fx = fx_np, fy = fy_np
    cdef int[::1] fs = fs_np
    halfa_np = 0.5 * np.asarray(inp.tier_alpha)
    cdef const double[::1] halfa = halfa_np
    rad2_np = np.empty(N)
    cdef double[::1] rad2 = rad2_np

    cdef vector[int] cand
    cdef vector[int] res_tier
    cdef vector[double] res_time
    cdef long long in_steps = 0

    cdef int u, s, best, j, b, ntier
    cdef long long k, leg, rem, last_step
    cdef bint last_ok
    cdef double x, y, c, sn, sp, path, ds, px, py, ddx, ddy, a, bq, cc, t, hx, hy, nx, ny, dot, left
    cdef double r2, sc, best_sc

    with nogil:
        for u in range(U):
            x = ux[u]
            y = uy[u]
            s = serv0[u]
            leg = leg_ptr[u] - 1
            rem = 0
            c = 0.0
            sn = 0.0
            sp = 0.0
            path = INFINITY
            last_step = -1
            last_ok = False
            for k in range(1, n_steps + 1):
                if rem == 0:
                    leg += 1
                    c = leg_cos[leg]
                    sn = leg_sin[leg]
                    sp = leg_speed[leg]
                    rem = leg_steps[leg]
                rem -= 1

                ds = sp * dt
                if path + ds > D:
                    path = 0.0
                    _refresh(x, y, s, D, bx, by, bt, logw, alpha, gx0, gy0, cell, gsize,
                             gstart, gitems, &rad2[0], cand)

                px = x
                py = y
                x += sp * c * dt
                y += sp * sn * dt
                if x * x + y * y > Rb2:
                    ddx = x - px
                    ddy = y - py
                    a = ddx * ddx + ddy * ddy
                    bq = px * ddx + py * ddy
                    cc = px * px + py * py - Rb2
                    t = (-bq + sqrt(bq * bq - a * cc)) / a
                    hx = px + t * ddx
                    hy = py + t * ddy
                    nx = hx / Rb
                    ny = hy / Rb
                    dot = c * nx + sn * ny
                    c = c - 2.0 * dot * nx
                    sn = sn - 2.0 * dot * ny
                    left = (1.0 - t) * sp * dt
                    x = hx + left * c
                    y = hy + left * sn
                path += ds

                r2 = x * x + y * y
                if r2 <= rc2:
                    in_steps += 1

                best = -1
                best_sc = -INFINITY
                for j in range(<int>cand.size()):
                    b = cand[j]
                    ddx = bx[b] - x
                    ddy = by[b] - y
                    ntier = bt[b]
                    sc = _score(logw[ntier], halfa[ntier], ddx * ddx + ddy * ddy)
                    if best < 0 or sc > best_sc:
                        best = b
                        best_sc = sc

                if best != s:
                    if r2 <= rc2:
                        counts[bt[s], bt[best]] += 1
                    if last_ok:
                        res_tier.push_back(bt[s])
                        res_time.push_back((k - last_step) * dt)
                    last_step = k
                    last_ok = (r2 <= rr2) and (k * dt <= cutoff)
                    s = best
            fx[u] = x
            fy[u] = y
            fs[u] = s

    n_res = res_time.size()
    rt_np = np.empty(n_res, dtype=np.int32)
    rv_np = np.empty(n_res)
    cdef int[::1] rt = rt_np
    cdef double[::1] rv = rv_np
    cdef size_t q
    for q in range(n_res):
        rt[q] = res_tier[q]
        rv[q] = res_time[q]
    return ScanOutput(
        counts=counts_np,
        in_region_steps=int(in_steps),
        residence_tier=rt_np,
        residence_time=rv_np,
        final_x=fx_np,
        final_y=fy_np,
        final_serving=fs_np,
    )
