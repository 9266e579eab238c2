"""Compiled integration kernels for the built-in models.

One monolithic numba kernel advances the full coupled system (main,
tangent, replica ensembles plus the parameter update) with the model
selected by an integer code, so a single disk-cached compilation covers
every built-in.  The kernel mirrors ``integrator.step`` operation for
operation and consumes identical noise addresses, so the two backends
agree to floating-point tolerance; bitwise reproducibility holds within
each backend separately.

The scalar Philox/Box-Muller pair here must stay in lockstep with the
vectorized implementation in ``rng``; both are pinned by the same
known-answer tests.
"""

from __future__ import annotations

import math
import warnings

import numpy as np

from .backend import BackendError, njit

# Model codes; the registry in `experiments` assigns them.
K_OU = 0
K_OU_TWO_PARAM = 2
K_CUBIC = 3
K_OU_DRIFT_VOL = 4
K_CUBIC_DRIFT_VOL = 5
K_MULTI_INDEP = 6
K_MULTI_CORR = 7
K_MEAN_FIELD = 8
K_PATH_DEP = 9
K_AUTOCOV = 10

_INTERACTION_CODES = {"none": 0, "ensemble_mean": 1, "running_mean": 2}

_INV53 = 2.0 ** -53
_TWO_PI = 2.0 * math.pi


@njit(cache=True, nogil=True)
def _philox_normals(step, particle, tag, block, key0, key1):
    """Two standard normals from one Philox4x32-10 block."""
    c0 = np.uint64(step)
    c1 = np.uint64(particle)
    c2 = np.uint64(tag)
    c3 = np.uint64(block)
    k0 = np.uint64(key0)
    k1 = np.uint64(key1)
    m0 = np.uint64(0xD2511F53)
    m1 = np.uint64(0xCD9E8D57)
    w0 = np.uint64(0x9E3779B9)
    w1 = np.uint64(0xBB67AE85)
    mask = np.uint64(0xFFFFFFFF)
    sh32 = np.uint64(32)
    for _ in range(10):
        p0 = m0 * c0
        p1 = m1 * c2
        hi0 = p0 >> sh32
        lo0 = p0 & mask
        hi1 = p1 >> sh32
        lo1 = p1 & mask
        c0 = hi1 ^ c1 ^ k0
        c1 = lo1
        c2 = hi0 ^ c3 ^ k1
        c3 = lo0
        k0 = (k0 + w0) & mask
        k1 = (k1 + w1) & mask
    a = (c0 << sh32) | c1
    b = (c2 << sh32) | c3
    u1 = (np.float64(a >> np.uint64(11)) + 0.5) * _INV53
    u2 = (np.float64(b >> np.uint64(11)) + 0.5) * _INV53
    r = math.sqrt(-2.0 * math.log(u1))
    return r * math.cos(_TWO_PI * u2), r * math.sin(_TWO_PI * u2)


@njit(cache=True, nogil=True)
def _fill_noise(dw, tag, step, n, dim, sqdt, key0, key1):
    """Brownian increments for one step, matching NoiseSource.normals."""
    n_blocks = (dim + 1) // 2
    for i in range(n):
        for blk in range(n_blocks):
            z0, z1 = _philox_normals(step, i, tag, blk, key0, key1)
            c = 2 * blk
            dw[i, c] = z0 * sqdt
            if c + 1 < dim:
                dw[i, c + 1] = z1 * sqdt


@njit(cache=True, nogil=True)
def _run_kernel(code, interaction, consts,
                n, d, l, w, n_steps, dt,
                theta, x, xt, xr,
                rm_x, rm_xt, rm_xr,
                key0, key1,
                sched_a, sched_b, sched_gamma,
                freeze, warmup_steps, hold_ready,
                kinds, targets, lag_of, caps,
                ring_x, ring_xt, ring_xr,
                record_ks, rec_theta, rec_gn, rec_jh,
                wstart, grad_sum, div_threshold):
    n_stats = kinds.shape[0]
    sqdt = math.sqrt(dt)
    pair = np.zeros(l)
    grad = np.zeros(l)
    th_old = np.zeros(l)
    mean_x = np.zeros(d)
    mean_xr = np.zeros(d)
    mean_xt = np.zeros((d, l))
    hmat = np.zeros((d, d))
    x2 = np.zeros((n, d))
    xt2 = np.zeros((n, d, l))
    xr2 = np.zeros((n, d))
    dw = np.zeros((n, w))
    dwr = np.zeros((n, w))
    mean_count = 1
    ri = 0
    n_rows = record_ks.shape[0]
    max_moment4 = 0.0
    warming_steps = 0

    for k in range(n_steps + 1):
        # Observables from the pre-step state (delay lines read, not written).
        for c in range(l):
            grad[c] = 0.0
        warm = False
        jh = 0.0
        for s in range(n_stats):
            kind = kinds[s]
            if kind == 2:
                rs = lag_of[s]
                cap = caps[rs]
                if k < cap:
                    warm = True
                    continue
                slot = k % cap
                acc = 0.0
                for i in range(n):
                    tmp = 0.0
                    for q in range(d):
                        tmp += ring_xr[rs, slot, i, q] * xr[i, q]
                    acc += tmp
                resid = acc / n - targets[s]
                for c in range(l):
                    accp = 0.0
                    for i in range(n):
                        for q in range(d):
                            accp += (ring_xt[rs, slot, i, q, c] * x[i, q]
                                     + xt[i, q, c] * ring_x[rs, slot, i, q])
                    pair[c] = accp / n
            else:
                acc = 0.0
                if kind == 0:
                    for i in range(n):
                        for q in range(d):
                            acc += xr[i, q]
                else:
                    for i in range(n):
                        for q in range(d):
                            acc += xr[i, q] * xr[i, q]
                resid = acc / n - targets[s]
                for c in range(l):
                    accp = 0.0
                    if kind == 0:
                        for i in range(n):
                            for q in range(d):
                                accp += xt[i, q, c]
                    else:
                        for i in range(n):
                            for q in range(d):
                                accp += xt[i, q, c] * 2.0 * x[i, q]
                    pair[c] = accp / n
            for c in range(l):
                grad[c] += 2.0 * resid * pair[c]
            jh += resid * resid
        if warm:
            jh = np.nan

        # Rows are written now (theta still pre-update) but only counted
        # once the step survives the divergence check, as the reference
        # loop appends after a successful step.
        row_now = ri < n_rows and k == record_ks[ri]
        if row_now:
            for c in range(l):
                rec_theta[ri, c] = theta[c]
            gn = 0.0
            for c in range(l):
                gn += grad[c] * grad[c]
            rec_gn[ri] = math.sqrt(gn)
            rec_jh[ri] = jh

        if k == n_steps:
            if row_now:
                ri += 1
            break

        accm = 0.0
        for i in range(n):
            s2 = 0.0
            for q in range(d):
                s2 += x[i, q] * x[i, q]
            accm += s2 * s2
        m4 = accm / n

        # Feed the delay lines with the pre-step snapshots.
        for s in range(n_stats):
            if kinds[s] == 2:
                rs = lag_of[s]
                cap = caps[rs]
                slot = k % cap
                for i in range(n):
                    for q in range(d):
                        ring_x[rs, slot, i, q] = x[i, q]
                        ring_xr[rs, slot, i, q] = xr[i, q]
                        for c in range(l):
                            ring_xt[rs, slot, i, q, c] = xt[i, q, c]

        for c in range(l):
            th_old[c] = theta[c]
        if (not freeze) and k >= warmup_steps and not (hold_ready and warm):
            t_now = k * dt
            alpha = sched_a / (1.0 + t_now / sched_b) ** sched_gamma
            for c in range(l):
                theta[c] = th_old[c] - alpha * dt * grad[c]

        if interaction == 1:
            for q in range(d):
                mean_x[q] = 0.0
                mean_xr[q] = 0.0
                for c in range(l):
                    mean_xt[q, c] = 0.0
            for i in range(n):
                for q in range(d):
                    mean_x[q] += x[i, q]
                    mean_xr[q] += xr[i, q]
                    for c in range(l):
                        mean_xt[q, c] += xt[i, q, c]
            for q in range(d):
                mean_x[q] /= n
                mean_xr[q] /= n
                for c in range(l):
                    mean_xt[q, c] /= n

        if code == K_MULTI_CORR:
            lam = consts[0]
            for qa in range(d):
                for qb in range(d):
                    hmat[qa, qb] = th_old[d + qa] * th_old[d + qb]
                hmat[qa, qa] += lam

        _fill_noise(dw, 0, k, n, w, sqdt, key0, key1)
        _fill_noise(dwr, 1, k, n, w, sqdt, key0, key1)

        if code == K_OU:
            for i in range(n):
                xi = x[i, 0]
                x2[i, 0] = xi + (th_old[0] - xi) * dt + dw[i, 0]
                xt2[i, 0, 0] = xt[i, 0, 0] + (1.0 - xt[i, 0, 0]) * dt
                rr = xr[i, 0]
                xr2[i, 0] = rr + (th_old[0] - rr) * dt + dwr[i, 0]
        elif code == K_OU_TWO_PARAM:
            for i in range(n):
                xi = x[i, 0]
                x2[i, 0] = xi + (th_old[0] - th_old[1] * xi) * dt + dw[i, 0]
                xt2[i, 0, 0] = xt[i, 0, 0] + (1.0 - th_old[1] * xt[i, 0, 0]) * dt
                xt2[i, 0, 1] = xt[i, 0, 1] + (-xi - th_old[1] * xt[i, 0, 1]) * dt
                rr = xr[i, 0]
                xr2[i, 0] = rr + (th_old[0] - th_old[1] * rr) * dt + dwr[i, 0]
        elif code == K_CUBIC:
            for i in range(n):
                xi = x[i, 0]
                x2[i, 0] = xi + (th_old[0] - xi - xi * xi * xi) * dt + dw[i, 0]
                jx = -1.0 - 3.0 * xi * xi
                xt2[i, 0, 0] = xt[i, 0, 0] + (jx * xt[i, 0, 0] + 1.0) * dt
                rr = xr[i, 0]
                xr2[i, 0] = rr + (th_old[0] - rr - rr * rr * rr) * dt + dwr[i, 0]
        elif code == K_OU_DRIFT_VOL:
            for i in range(n):
                xi = x[i, 0]
                x2[i, 0] = xi + (th_old[0] - xi) * dt + th_old[1] * dw[i, 0]
                xt2[i, 0, 0] = xt[i, 0, 0] + (1.0 - xt[i, 0, 0]) * dt
                xt2[i, 0, 1] = xt[i, 0, 1] + (0.0 - xt[i, 0, 1]) * dt + dw[i, 0]
                rr = xr[i, 0]
                xr2[i, 0] = rr + (th_old[0] - rr) * dt + th_old[1] * dwr[i, 0]
        elif code == K_CUBIC_DRIFT_VOL:
            for i in range(n):
                xi = x[i, 0]
                x2[i, 0] = xi + (th_old[0] - xi * xi * xi) * dt + th_old[1] * xi * dw[i, 0]
                jx = -3.0 * xi * xi
                xt2[i, 0, 0] = (xt[i, 0, 0] + (jx * xt[i, 0, 0] + 1.0) * dt
                                + th_old[1] * xt[i, 0, 0] * dw[i, 0])
                xt2[i, 0, 1] = (xt[i, 0, 1] + jx * xt[i, 0, 1] * dt
                                + (xi + th_old[1] * xt[i, 0, 1]) * dw[i, 0])
                rr = xr[i, 0]
                xr2[i, 0] = rr + (th_old[0] - rr * rr * rr) * dt + th_old[1] * rr * dwr[i, 0]
        elif code == K_MULTI_INDEP:
            for i in range(n):
                for q in range(d):
                    xi = x[i, q]
                    rate_q = th_old[d + q]
                    x2[i, q] = xi + (th_old[q] - rate_q * xi) * dt + dw[i, q]
                    xr2[i, q] = xr[i, q] + (th_old[q] - rate_q * xr[i, q]) * dt + dwr[i, q]
                    for c in range(l):
                        src = 0.0
                        if c == q:
                            src = 1.0
                        elif c == d + q:
                            src = -xi
                        xt2[i, q, c] = xt[i, q, c] + (src - rate_q * xt[i, q, c]) * dt
        elif code == K_MULTI_CORR:
            for i in range(n):
                bx = 0.0
                for p in range(d):
                    bx += th_old[d + p] * x[i, p]
                for q in range(d):
                    hx = 0.0
                    hxr = 0.0
                    for p in range(d):
                        hx += hmat[q, p] * x[i, p]
                        hxr += hmat[q, p] * xr[i, p]
                    x2[i, q] = x[i, q] + (th_old[q] - hx) * dt + dw[i, q]
                    xr2[i, q] = xr[i, q] + (th_old[q] - hxr) * dt + dwr[i, q]
                    for c in range(l):
                        hxt = 0.0
                        for p in range(d):
                            hxt += hmat[q, p] * xt[i, p, c]
                        src = 0.0
                        if c == q:
                            src = 1.0
                        elif c >= d:
                            j = c - d
                            if q == j:
                                src -= bx
                            src -= th_old[d + q] * x[i, j]
                        xt2[i, q, c] = xt[i, q, c] + (src - hxt) * dt
        elif code == K_MEAN_FIELD:
            kap = consts[0]
            m = mean_x[0]
            mt = mean_xt[0, 0]
            mr = mean_xr[0]
            for i in range(n):
                xi = x[i, 0]
                mu = th_old[0] - ((1.0 - kap) * xi + kap * m) - xi * xi * xi
                x2[i, 0] = xi + mu * dt + dw[i, 0]
                jx = -(1.0 - kap) - 3.0 * xi * xi
                xt2[i, 0, 0] = xt[i, 0, 0] + (jx * xt[i, 0, 0] + 1.0 - kap * mt) * dt
                rr = xr[i, 0]
                mur = th_old[0] - ((1.0 - kap) * rr + kap * mr) - rr * rr * rr
                xr2[i, 0] = rr + mur * dt + dwr[i, 0]
        elif code == K_PATH_DEP:
            kap = consts[0]
            for i in range(n):
                xi = x[i, 0]
                mu = th_old[0] - xi - kap * rm_x[i, 0]
                x2[i, 0] = xi + mu * dt + dw[i, 0]
                xt2[i, 0, 0] = (xt[i, 0, 0]
                                + (-xt[i, 0, 0] + 1.0 - kap * rm_xt[i, 0, 0]) * dt)
                rr = xr[i, 0]
                xr2[i, 0] = rr + (th_old[0] - rr - kap * rm_xr[i, 0]) * dt + dwr[i, 0]
        else:  # K_AUTOCOV
            for i in range(n):
                xi = x[i, 0]
                x2[i, 0] = xi + (th_old[0] - th_old[1] * xi) * dt + th_old[2] * dw[i, 0]
                xt2[i, 0, 0] = xt[i, 0, 0] + (1.0 - th_old[1] * xt[i, 0, 0]) * dt
                xt2[i, 0, 1] = xt[i, 0, 1] + (-xi - th_old[1] * xt[i, 0, 1]) * dt
                xt2[i, 0, 2] = xt[i, 0, 2] + (0.0 - th_old[1] * xt[i, 0, 2]) * dt + dw[i, 0]
                rr = xr[i, 0]
                xr2[i, 0] = rr + (th_old[0] - th_old[1] * rr) * dt + th_old[2] * dwr[i, 0]

        for i in range(n):
            for q in range(d):
                x[i, q] = x2[i, q]
                xr[i, q] = xr2[i, q]
                for c in range(l):
                    xt[i, q, c] = xt2[i, q, c]

        if interaction == 2:
            mean_count += 1
            for i in range(n):
                for q in range(d):
                    rm_x[i, q] += (x[i, q] - rm_x[i, q]) / mean_count
                    rm_xr[i, q] += (xr[i, q] - rm_xr[i, q]) / mean_count
                    for c in range(l):
                        rm_xt[i, q, c] += (xt[i, q, c] - rm_xt[i, q, c]) / mean_count

        worst = 0
        max_abs = 0.0
        for i in range(n):
            mi = 0.0
            for q in range(d):
                v = abs(x[i, q])
                vr = abs(xr[i, q])
                if vr > v:
                    v = vr
                for c in range(l):
                    vt = abs(xt[i, q, c])
                    if vt > v:
                        v = vt
                if v != v:
                    v = np.inf
                if v > mi:
                    mi = v
            if mi > max_abs:
                max_abs = mi
                worst = i
        for c in range(l):
            va = abs(theta[c])
            if va != va:
                va = np.inf
            if va > max_abs:
                max_abs = va
        if (not math.isfinite(max_abs)) or max_abs > div_threshold:
            return 1, k + 1, worst, max_abs, ri, max_moment4, warming_steps

        # The step survived; commit its row and windowed accumulators.
        if row_now:
            ri += 1
        if k >= wstart:
            for c in range(l):
                grad_sum[c] += grad[c]
        if warm:
            warming_steps += 1
        if m4 > max_moment4:
            max_moment4 = m4

    return 0, -1, -1, 0.0, ri, max_moment4, warming_steps


@njit(cache=True, nogil=True)
def _path_kernel(code, consts, theta, n_steps, dt, key0, key1, tag, particle, traj):
    """Single frozen-theta Euler path for the non-interacting built-ins.

    traj is (n_steps + 1, d) with row 0 holding the initial state; draws
    use the same (tag, step, particle, block) addresses as the coupled
    kernel's main ensemble.
    """
    d = traj.shape[1]
    sqdt = math.sqrt(dt)
    x = np.empty(d)
    x2 = np.empty(d)
    dw = np.empty(d)
    for q in range(d):
        x[q] = traj[0, q]
    hmat = np.zeros((d, d))
    if code == K_MULTI_CORR:
        lam = consts[0]
        for qa in range(d):
            for qb in range(d):
                hmat[qa, qb] = theta[d + qa] * theta[d + qb]
            hmat[qa, qa] += lam
    n_blocks = (d + 1) // 2
    for k in range(n_steps):
        for blk in range(n_blocks):
            z0, z1 = _philox_normals(k, particle, tag, blk, key0, key1)
            c = 2 * blk
            dw[c] = z0 * sqdt
            if c + 1 < d:
                dw[c + 1] = z1 * sqdt
        if code == K_OU:
            x[0] = x[0] + (theta[0] - x[0]) * dt + dw[0]
        elif code == K_OU_TWO_PARAM:
            x[0] = x[0] + (theta[0] - theta[1] * x[0]) * dt + dw[0]
        elif code == K_CUBIC:
            xi = x[0]
            x[0] = xi + (theta[0] - xi - xi * xi * xi) * dt + dw[0]
        elif code == K_OU_DRIFT_VOL:
            x[0] = x[0] + (theta[0] - x[0]) * dt + theta[1] * dw[0]
        elif code == K_CUBIC_DRIFT_VOL:
            xi = x[0]
            x[0] = xi + (theta[0] - xi * xi * xi) * dt + theta[1] * xi * dw[0]
        elif code == K_MULTI_INDEP:
            for q in range(d):
                x[q] = x[q] + (theta[q] - theta[d + q] * x[q]) * dt + dw[q]
        elif code == K_MULTI_CORR:
            for q in range(d):
                hx = 0.0
                for p in range(d):
                    hx += hmat[q, p] * x[p]
                x2[q] = x[q] + (theta[q] - hx) * dt + dw[q]
            for q in range(d):
                x[q] = x2[q]
        elif code == K_AUTOCOV:
            x[0] = x[0] + (theta[0] - theta[1] * x[0]) * dt + theta[2] * dw[0]
        else:
            return 1
        for q in range(d):
            traj[k + 1, q] = x[q]
    return 0


def run_compiled(model, objective, config):
    """Numba-backed equivalent of integrator.run for built-in models."""
    from .integrator import (
        GRAD_WINDOW_FRAC,
        IntegrationDivergedError,
        RunRecord,
        init_state,
    )
    from .objective import pack_stats
    from .rng import split_seed

    if model.kernel_code is None:
        raise BackendError(
            f"model {model.name!r} has no compiled kernel; use the numpy backend"
        )

    n_steps = config.n_steps
    n, d, l, w = config.n_particles, model.state_dim, model.param_dim, model.noise_dim
    state = init_state(model, objective, config)

    kinds, targets, lags = pack_stats(objective, config.dt)
    lag_of = np.full(kinds.shape[0], -1, dtype=np.int64)
    caps_list = []
    for j in objective.lagged_indices():
        lag_of[j] = len(caps_list)
        caps_list.append(int(lags[j]))
    n_rings = max(len(caps_list), 1)
    cap_max = max(caps_list) if caps_list else 1
    caps = np.array(caps_list if caps_list else [1], dtype=np.int64)
    ring_x = np.zeros((n_rings, cap_max, n, d))
    ring_xt = np.zeros((n_rings, cap_max, n, d, l))
    ring_xr = np.zeros((n_rings, cap_max, n, d))

    record_ks = np.array(
        list(range(0, n_steps, config.record_every)) + [n_steps], dtype=np.int64
    )
    n_rows = record_ks.shape[0]
    rec_theta = np.zeros((n_rows, l))
    rec_gn = np.zeros(n_rows)
    rec_jh = np.zeros(n_rows)
    grad_sum = np.zeros(l)

    key0, key1 = split_seed(config.seed)
    wstart = int(math.floor((1.0 - GRAD_WINDOW_FRAC) * n_steps))
    consts = np.asarray(model.kernel_consts, dtype=np.float64)
    if consts.size == 0:
        consts = np.zeros(1)
    interaction = _INTERACTION_CODES[model.interaction]

    zeros2 = np.zeros((1, 1))
    zeros3 = np.zeros((1, 1, 1))
    rm_x = state.run_mean_x if state.run_mean_x is not None else zeros2
    rm_xt = state.run_mean_tan if state.run_mean_tan is not None else zeros3
    rm_xr = state.run_mean_rep if state.run_mean_rep is not None else zeros2

    status, div_at, worst, max_abs, rows_done, max_moment4, warming_steps = _run_kernel(
        int(model.kernel_code), interaction, consts,
        n, d, l, w, n_steps, config.dt,
        state.theta, state.x, state.x_tan, state.x_rep,
        rm_x, rm_xt, rm_xr,
        key0, key1,
        config.schedule.a, config.schedule.b, config.schedule.gamma,
        bool(config.freeze_theta), int(config.warmup_steps),
        bool(config.hold_until_ready),
        kinds, targets, lag_of, caps,
        ring_x, ring_xt, ring_xr,
        record_ks, rec_theta, rec_gn, rec_jh,
        wstart, grad_sum, config.divergence_threshold,
    )

    if status != 0:
        # Only completed steps contributed to the windowed average.
        grad_count = max(int(div_at) - 1 - wstart, 0)
    else:
        grad_count = n_steps - wstart
    diagnostics = {
        "max_moment4": float(max_moment4),
        "moment_warning": bool(max_moment4 > config.moment_ceiling),
        "warming_steps": int(warming_steps),
    }

    def _build(rows, extra=None):
        diag = dict(diagnostics)
        if extra:
            diag.update(extra)
        return RunRecord(
            model_name=model.name,
            times=record_ks[:rows].astype(np.float64) * config.dt,
            thetas=rec_theta[:rows].copy(),
            grad_norms=rec_gn[:rows].copy(),
            j_hats=rec_jh[:rows].copy(),
            theta_final=state.theta.copy(),
            grad_time_avg=grad_sum / max(grad_count, 1),
            n_steps=n_steps,
            dt=config.dt,
            seed=config.seed,
            backend="numba",
            diagnostics=diag,
        )

    if status != 0:
        err = IntegrationDivergedError(
            int(div_at), int(div_at) * config.dt, float(max_abs), particle=int(worst)
        )
        err.record = _build(rows_done, {"diverged": True, "diverged_step": int(div_at)})
        raise err

    if diagnostics["moment_warning"]:
        warnings.warn(
            f"fourth-moment diagnostic {max_moment4:.3g} exceeded ceiling "
            f"{config.moment_ceiling:.3g} (model {model.name!r})",
            RuntimeWarning,
        )
    return _build(rows_done)
