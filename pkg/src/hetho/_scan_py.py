"""NumPy implementation of the handover scan, vectorized over UEs.

Functionally identical to the compiled kernel: same motion arithmetic,
same candidate rule, same tie-breaking.  Candidate lists are refreshed with
a k-d tree instead of the compiled kernel's cell grid; both return supersets
of every station that can win before the next refresh.
"""
from __future__ import annotations

import numpy as np
from scipy.spatial import cKDTree

from .scan import ScanInput, ScanOutput

BACKEND = "python"


def _candidate_radii(logw, alpha, s_tier, d_s, D):
    # (w_n / w_s)^(1/alpha_n) (d_s + D)^(alpha_s / alpha_n) + D, per tier n
    num = logw[None, :] - logw[s_tier][:, None] + alpha[s_tier][:, None] * np.log(d_s + D)[:, None]
    return np.exp(num / alpha[None, :]) + D


def scan(inp: ScanInput) -> ScanOutput:
    U = inp.ue_x.shape[0]
    N = inp.tier_logw.shape[0]
    bx, by, bt = inp.bs_x, inp.bs_y, inp.bs_tier
    logw, alpha = inp.tier_logw, inp.tier_alpha
    halfa = 0.5 * alpha
    dt, D = inp.dt, inp.refresh_distance
    Rb2 = inp.boundary_radius * inp.boundary_radius
    rc2 = inp.count_radius * inp.count_radius
    rr2 = inp.residence_radius * inp.residence_radius

    counts = np.zeros((N, N), dtype=np.int64)
    in_steps = 0
    res_tier: list[np.ndarray] = []
    res_time: list[np.ndarray] = []

    trees = []
    offsets = []
    for n in range(N):
        idx = np.flatnonzero(bt == n)
        offsets.append(idx)
        trees.append(cKDTree(np.column_stack([bx[idx], by[idx]])) if idx.size else None)

    x = inp.ue_x.copy()
    y = inp.ue_y.copy()
    s = inp.serving.astype(np.int64).copy()
    c = np.zeros(U)
    sn = np.zeros(U)
    sp = np.zeros(U)
    leg = inp.leg_ptr[:-1].astype(np.int64) - 1
    rem = np.zeros(U, dtype=np.int64)
    path = np.full(U, np.inf)
    last_step = np.full(U, -1, dtype=np.int64)
    last_ok = np.zeros(U, dtype=bool)
    cand = np.full((U, 1), -1, dtype=np.int64)
    rows = np.arange(U)

    for k in range(1, inp.n_steps + 1):
        fresh = rem == 0
        if fresh.any():
            leg[fresh] += 1
            li = leg[fresh]
            c[fresh] = inp.leg_cos[li]
            sn[fresh] = inp.leg_sin[li]
            sp[fresh] = inp.leg_speed[li]
            rem[fresh] = inp.leg_steps[li]
        rem -= 1

        ds = sp * dt
        need = np.flatnonzero(path + ds > D)
        if need.size:
            path[need] = 0.0
            px, py = x[need], y[need]
            si = s[need]
            d_s = np.sqrt((bx[si] - px) ** 2 + (by[si] - py) ** 2)
            radii = _candidate_radii(logw, alpha, bt[si], d_s, D)
            pts = np.column_stack([px, py])
            found = [[] for _ in range(need.size)]
            for n in range(N):
                if trees[n] is None:
                    continue
                hits = trees[n].query_ball_point(pts, radii[:, n])
                for i, h in enumerate(hits):
                    found[i].extend(offsets[n][h].tolist())
            width = max(len(f) for f in found)
            if width > cand.shape[1]:
                cand = np.concatenate(
                    [cand, np.full((U, width - cand.shape[1]), -1, dtype=np.int64)], axis=1
                )
            cand[need] = -1
            for i, f in enumerate(found):
                f.sort()
                cand[need[i], : len(f)] = f

        px, py = x.copy(), y.copy()
        x += sp * c * dt
        y += sp * sn * dt
        out = np.flatnonzero(x * x + y * y > Rb2)
        if out.size:
            dx, dy = x[out] - px[out], y[out] - py[out]
            a = dx * dx + dy * dy
            b = px[out] * dx + py[out] * dy
            cc = px[out] * px[out] + py[out] * py[out] - Rb2
            t = (-b + np.sqrt(b * b - a * cc)) / a
            hx = px[out] + t * dx
            hy = py[out] + t * dy
            Rb = inp.boundary_radius
            nx, ny = hx / Rb, hy / Rb
            dot = c[out] * nx + sn[out] * ny
            c[out] = c[out] - 2.0 * dot * nx
            sn[out] = sn[out] - 2.0 * dot * ny
            left = (1.0 - t) * sp[out] * dt
            x[out] = hx + left * c[out]
            y[out] = hy + left * sn[out]
        path += ds

        r2 = x * x + y * y
        inside = r2 <= rc2
        in_steps += int(np.count_nonzero(inside))

        valid = cand >= 0
        ci = np.where(valid, cand, 0)
        ddx = bx[ci] - x[:, None]
        ddy = by[ci] - y[:, None]
        tiers = bt[ci]
        with np.errstate(divide="ignore"):
            score = logw[tiers] - halfa[tiers] * np.log(ddx * ddx + ddy * ddy)
        score[~valid] = -np.inf
        best = cand[rows, np.argmax(score, axis=1)]

        changed = np.flatnonzero(best != s)
        if changed.size:
            old_t = bt[s[changed]]
            new_t = bt[best[changed]]
            hit = inside[changed]
            np.add.at(counts, (old_t[hit], new_t[hit]), 1)
            done = changed[last_ok[changed]]
            if done.size:
                res_tier.append(old_t[last_ok[changed]].astype(np.int32))
                res_time.append((k - last_step[done]) * dt)
            last_step[changed] = k
            last_ok[changed] = (r2[changed] <= rr2) & (k * dt <= inp.residence_cutoff)
            s[changed] = best[changed]

    return ScanOutput(
        counts=counts,
        in_region_steps=in_steps,
        residence_tier=np.concatenate(res_tier) if res_tier else np.zeros(0, dtype=np.int32),
        residence_time=np.concatenate(res_time) if res_time else np.zeros(0),
        final_x=x,
        final_y=y,
        final_serving=s.astype(np.int32),
    )
