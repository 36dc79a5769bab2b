"""Numba kernels for the hybrid lattice/finite-difference backward induction.

Layout conventions: value slabs are ``u[v_node, x_node, b_slice, z_point]``
with z contiguous, plus a separate zero-account slab ``u0[v_node, x_node,
b_slice]``.  All kernels write disjoint output slots per (v, x) pair, so
results are bit-identical for any thread count.
"""

from __future__ import annotations

import math

import numpy as np
from numba import njit, prange


@njit(cache=True, inline="always")
def _read_shifted(src, b, m, f, mp):
    """src[b, :] evaluated at fractional index m + f.

    Four-point (cubic Lagrange) interior interpolation: linear reads bias
    the branch expectation upward by O(h^2) per step on convex surfaces,
    which accumulates over the time loop.  Falls back to linear in the
    first/last cell and to linear extrapolation beyond the edges.
    """
    t = m + f
    if t <= 0.0:
        return src[b, 0] + t * (src[b, 1] - src[b, 0])
    if t >= mp - 1:
        return src[b, mp - 1] + (t - (mp - 1)) * (src[b, mp - 1] - src[b, mp - 2])
    q = int(t)
    w = t - q
    if q < 1 or q > mp - 3:
        return (1.0 - w) * src[b, q] + w * src[b, q + 1]
    wm = w - 1.0
    wp = w + 1.0
    w2 = w - 2.0
    return (-w * wm * w2 / 6.0 * src[b, q - 1]
            + wp * wm * w2 / 2.0 * src[b, q]
            - wp * w * w2 / 2.0 * src[b, q + 1]
            + wp * w * wm / 6.0 * src[b, q + 2])


@njit(cache=True, parallel=True)
def step_level(u_next, u0_next, v_lo, v_pr, x_lo, x_pr, shift, sqv,
               cv, rate, difc, h, dt, theta, pe_limit, out_u, out_u0):
    """One backward step: branch-mix the next level, then solve the 1D PDE.

    For target pair (i, j) the next-level values are mixed over the product
    of the two lattices' transitions; the x-branch contribution is read at a
    z-argument shifted by sqv[i] * shift[j, l] (the rate-factor innovation
    scaled by the fund/rate coupling).  The mixed slab is then advanced by a
    theta-scheme step of u_t + mu u_z + D u_zz - r u = 0 with coefficients
    frozen at the pair: mu = cv[i] + rate[j], D = difc[i], r = rate[j].

    When the cell Peclet number |mu| h / D exceeds pe_limit the drift is
    applied along characteristics instead (mu dt is folded into the branch
    read's z-shift and the matrix keeps only diffusion and reaction):
    one-sided differencing at vanishing diffusion dissipates O(|mu| h) per
    unit time, which the accessible v = 0 region turns into a grid bias.
    """
    nv, nx, nb, mp = out_u.shape
    nxn = u_next.shape[1]
    for i in prange(nv):
        # mix the variance branches once per i, reused across all j
        vm = np.empty((nxn, nb, mp))
        vm0 = np.empty((nxn, nb))
        p0, p1, p2 = v_pr[i, 0], v_pr[i, 1], v_pr[i, 2]
        k = v_lo[i]
        for jj in range(nxn):
            for b in range(nb):
                for m in range(mp):
                    vm[jj, b, m] = (p0 * u_next[k, jj, b, m]
                                    + p1 * u_next[k + 1, jj, b, m]
                                    + p2 * u_next[k + 2, jj, b, m])
                vm0[jj, b] = (p0 * u0_next[k, jj, b]
                              + p1 * u0_next[k + 1, jj, b]
                              + p2 * u0_next[k + 2, jj, b])
        mixed = np.empty((nb, mp))
        mix0 = np.empty(nb)
        dia = np.empty(mp)
        cp = np.empty(mp)
        rhs = np.empty(mp)
        for j in range(nx):
            # frozen coefficients of L = mu d_z + D d_zz - r for this pair
            mu = cv[i] + rate[j]
            D = difc[i]
            r = rate[j]
            advect_by_shift = abs(mu) * h > pe_limit * D
            drift_off = mu * dt if advect_by_shift else 0.0

            for b in range(nb):
                mix0[b] = 0.0
                for m in range(mp):
                    mixed[b, m] = 0.0
            for l in range(3):
                s = sqv[i] * shift[j, l] + drift_off
                f = s / h
                p = x_pr[j, l]
                src = vm[x_lo[j] + l]
                # hoist the interpolation coefficients: the shift is constant
                # across the slab, so the four-point weights are too
                ff = int(math.floor(f))
                w = f - ff
                wm = w - 1.0
                wp = w + 1.0
                w2 = w - 2.0
                am1 = p * (-w * wm * w2 / 6.0)
                a0 = p * (wp * wm * w2 / 2.0)
                a1 = p * (-wp * w * w2 / 2.0)
                a2 = p * (wp * w * wm / 6.0)
                m_lo = max(0, 1 - ff)
                m_hi = min(mp - 1, mp - 3 - ff)  # inclusive cubic range
                for b in range(nb):
                    mix0[b] += p * vm0[x_lo[j] + l, b]
                    for m in range(0, min(m_lo, mp)):
                        mixed[b, m] += p * _read_shifted(src, b, m, f, mp)
                    for m in range(m_lo, m_hi + 1):
                        q = m + ff
                        mixed[b, m] += (am1 * src[b, q - 1] + a0 * src[b, q]
                                        + a1 * src[b, q + 1] + a2 * src[b, q + 2])
                    for m in range(max(m_hi + 1, 0), mp):
                        mixed[b, m] += p * _read_shifted(src, b, m, f, mp)

            if advect_by_shift:
                # drift already applied along characteristics
                lo_i = D / (h * h)
                di_i = -2.0 * D / (h * h) - r
                up_i = D / (h * h)
                di_l = -r
                up_l = 0.0
                lo_r = 0.0
                di_r = -r
            else:
                lo_i = D / (h * h) - mu / (2.0 * h)
                di_i = -2.0 * D / (h * h) - r
                up_i = D / (h * h) + mu / (2.0 * h)
                # boundary rows: zero second derivative, one-sided drift
                di_l = -mu / h - r
                up_l = mu / h
                lo_r = -mu / h
                di_r = mu / h - r

            a_lo = -theta * dt * lo_i
            a_di = 1.0 - theta * dt * di_i
            a_up = -theta * dt * up_i
            a_dil = 1.0 - theta * dt * di_l
            a_upl = -theta * dt * up_l
            a_lor = -theta * dt * lo_r
            a_dir = 1.0 - theta * dt * di_r
            c1 = (1.0 - theta) * dt
            b_lo = c1 * lo_i
            b_di = 1.0 + c1 * di_i
            b_up = c1 * up_i
            b_dil = 1.0 + c1 * di_l
            b_upl = c1 * up_l
            b_lor = c1 * lo_r
            b_dir = 1.0 + c1 * di_r

            # Thomas factorization shared across the b rows
            dia[0] = a_dil
            cp[0] = a_upl / dia[0]
            for m in range(1, mp - 1):
                dia[m] = a_di - a_lo * cp[m - 1]
                cp[m] = a_up / dia[m]
            dia[mp - 1] = a_dir - a_lor * cp[mp - 2]

            disc0 = (1.0 - c1 * r) / (1.0 + theta * dt * r)
            for b in range(nb):
                rhs[0] = b_dil * mixed[b, 0] + b_upl * mixed[b, 1]
                for m in range(1, mp - 1):
                    rhs[m] = (b_lo * mixed[b, m - 1] + b_di * mixed[b, m]
                              + b_up * mixed[b, m + 1])
                rhs[mp - 1] = b_lor * mixed[b, mp - 2] + b_dir * mixed[b, mp - 1]
                rhs[0] = rhs[0] / dia[0]
                for m in range(1, mp - 1):
                    rhs[m] = (rhs[m] - a_lo * rhs[m - 1]) / dia[m]
                rhs[mp - 1] = (rhs[mp - 1] - a_lor * rhs[mp - 2]) / dia[mp - 1]
                for m in range(mp - 2, -1, -1):
                    rhs[m] = rhs[m] - cp[m] * rhs[m + 1]
                for m in range(mp):
                    out_u[i, j, b, m] = rhs[m]
                out_u0[i, j, b] = mix0[b] * disc0


@njit(cache=True, parallel=True)
def anniversary_apply(u_plus, u0_plus, a_vals, a_floor, cand_w, cand_cash,
                      cand_b1, cand_b2, cand_bw, cand_start, b_grid,
                      death_w, one_minus_kappa, out_u, out_u0):
    """Withdrawal operator at one anniversary.

    For every state (v, x, B, z) the value is the best over the candidate
    withdrawals of continuation-plus-cash, plus the death-benefit term for
    deaths during the elapsed year.  Candidates for base-benefit slice b
    live in cand_*[cand_start[b]:cand_start[b+1]], sorted ascending so that
    ties resolve to the smallest withdrawal.  Continuation values at the
    post-withdrawal state are read by linear interpolation in z (via the
    account-to-z map per variance node) and in B; accounts at or below the
    bottom of the z-grid blend linearly into the zero-account slab.
    """
    nv, nx, nb, mp = out_u.shape
    ncand = cand_w.size
    for i in prange(nv):
        # read coordinates depend on (candidate, z) but not on the rate node,
        # so resolve the account-to-z map once per variance row
        tload = np.empty((ncand, mp), dtype=np.int64)
        wload = np.empty((ncand, mp))
        for c in range(ncand):
            w = cand_w[c]
            for m in range(mp):
                ap = a_vals[i, m] - w
                if ap <= 0.0:
                    tload[c, m] = -1  # exhausted account: zero-account slab
                elif ap <= a_floor[i, 0]:
                    tload[c, m] = -2  # below the grid: blend toward A = 0
                    wload[c, m] = ap / a_floor[i, 0]
                else:
                    zq = (math.log(ap) - a_floor[i, 1]) * a_floor[i, 2]
                    t = int(zq)
                    if t >= mp - 1:
                        t = mp - 2
                    tload[c, m] = t
                    wload[c, m] = zq - t
        best = np.empty(mp)
        for j in range(nx):
            for b in range(nb):
                c0 = cand_start[b]
                c1 = cand_start[b + 1]
                best0 = -1.0e300
                for m in range(mp):
                    best[m] = -1.0e300
                for c in range(c0, c1):
                    cash = cand_cash[c]
                    bw = cand_bw[c]
                    ba = cand_b1[c]
                    bb = cand_b2[c]
                    cont0 = ((1.0 - bw) * u0_plus[i, j, ba]
                             + bw * u0_plus[i, j, bb])
                    v0c = cont0 + cash
                    if v0c > best0:
                        best0 = v0c
                    for m in range(mp):
                        t = tload[c, m]
                        if t == -1:
                            cont = cont0
                        elif t == -2:
                            edge = ((1.0 - bw) * u_plus[i, j, ba, 0]
                                    + bw * u_plus[i, j, bb, 0])
                            cont = cont0 + (edge - cont0) * wload[c, m]
                        else:
                            wz = wload[c, m]
                            cont = ((1.0 - bw) * ((1.0 - wz) * u_plus[i, j, ba, t]
                                                  + wz * u_plus[i, j, ba, t + 1])
                                    + bw * ((1.0 - wz) * u_plus[i, j, bb, t]
                                            + wz * u_plus[i, j, bb, t + 1]))
                        val = cont + cash
                        if val > best[m]:
                            best[m] = val
                dbk = death_w * one_minus_kappa * b_grid[b]
                for m in range(mp):
                    db = a_vals[i, m]
                    if dbk > death_w * db:
                        out_u[i, j, b, m] = best[m] + dbk
                    else:
                        out_u[i, j, b, m] = best[m] + death_w * db
                out_u0[i, j, b] = best0 + dbk


@njit(cache=True, parallel=True)
def terminal_surface(a_vals, b_grid, survivor, one_minus_kappa, out_u, out_u0):
    """R(T)-weighted final payoff max(A, (1-kappa) B) on the slab grid."""
    nv, nxx, nb, mp = out_u.shape
    for i in prange(nv):
        for j in range(nxx):
            for b in range(nb):
                floor_b = one_minus_kappa * b_grid[b]
                out_u0[i, j, b] = survivor * floor_b
                for m in range(mp):
                    a = a_vals[i, m]
                    out_u[i, j, b, m] = survivor * (a if a > floor_b else floor_b)
