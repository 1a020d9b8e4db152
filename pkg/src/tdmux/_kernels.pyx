# Compiled simulation kernels: analytic per-frame recursion, trace sampling
# and the literal step-by-step forward-Euler integrator.  Mirrors the
# signatures (and arithmetic) of _kernels_py so the import-time backend
# choice is transparent to callers.

import numpy as np

cimport numpy as cnp
from libc.math cimport exp, llround

cnp.import_array()

BACKEND = "cython"


def frame_pass(targets, long n_channels, double dt, double gate_on,
               double cond_on, double cond_off, double tau_dac, double tau_c,
               double tau_d, double kappa, double dac_v0, cap_v0):
    cdef double[::1] tg = np.ascontiguousarray(targets, dtype=np.float64)
    cdef Py_ssize_t nf = tg.shape[0]

    dac_d0_a = np.empty(nf)
    cap_cs_a = np.empty(nf)
    coef_a_a = np.empty(nf)
    coef_b_a = np.empty(nf)
    cap_ce_a = np.empty(nf)
    cap_jmp_a = np.empty(nf)
    cdef double[::1] dac_d0 = dac_d0_a
    cdef double[::1] cap_cs = cap_cs_a
    cdef double[::1] coef_a = coef_a_a
    cdef double[::1] coef_b = coef_b_a
    cdef double[::1] cap_ce = cap_ce_a
    cdef double[::1] cap_jmp = cap_jmp_a

    caps_a = np.array(cap_v0, dtype=np.float64).copy()
    cdef double[::1] caps = caps_a
    cdef double dac = dac_v0
    cdef double width = cond_off - cond_on
    cdef bint degenerate = tau_c == tau_dac
    cdef double decay_to_gate = exp(-gate_on / tau_d)
    cdef double decay_rise = exp(-(cond_on - gate_on) / tau_d)
    cdef double decay_tail = exp(-(dt - cond_off) / tau_d)
    cdef double dac_at_gate = exp(-gate_on / tau_dac)
    cdef double dac_at_cond = exp(-cond_on / tau_dac)
    cdef double dac_at_end = exp(-dt / tau_dac)
    cdef double cond_dac_decay = exp(-width / tau_dac)
    cdef double cond_cap_decay = exp(-width / tau_c)
    cdef double frame_decay = exp(-dt / tau_d)

    cdef Py_ssize_t j, c, i
    cdef double t, d0, v, d_cs, a, b, ce
    for j in range(nf):
        c = j % n_channels
        t = tg[j]
        d0 = dac - t
        dac_d0[j] = d0

        v = caps[c] * decay_to_gate
        if kappa > 0.0:
            v = v + kappa * ((t + d0 * dac_at_gate) - v)
        cap_jmp[j] = v
        v = v * decay_rise
        cap_cs[j] = v

        d_cs = d0 * dac_at_cond
        if degenerate:
            a = d_cs
            b = v - t
            ce = t + (b + a * width / tau_c) * cond_cap_decay
        else:
            a = d_cs * tau_dac / (tau_dac - tau_c)
            b = v - t - a
            ce = t + a * cond_dac_decay + b * cond_cap_decay
        coef_a[j] = a
        coef_b[j] = b
        cap_ce[j] = ce

        for i in range(n_channels):
            caps[i] *= frame_decay
        caps[c] = ce * decay_tail
        dac = t + d0 * dac_at_end

    return dac_d0_a, cap_cs_a, coef_a_a, coef_b_a, cap_ce_a, cap_jmp_a


def eval_channel(t_grid, seg_t0, seg_kind, seg_v0, seg_t, seg_a, seg_b,
                 double tau_d, double tau_dac, double tau_c, bint degenerate):
    cdef double[::1] tk = np.ascontiguousarray(t_grid, dtype=np.float64)
    cdef double[::1] t0 = np.ascontiguousarray(seg_t0, dtype=np.float64)
    cdef long[::1] kd = np.ascontiguousarray(seg_kind, dtype=np.int64)
    cdef double[::1] v0 = np.ascontiguousarray(seg_v0, dtype=np.float64)
    cdef double[::1] st = np.ascontiguousarray(seg_t, dtype=np.float64)
    cdef double[::1] sa = np.ascontiguousarray(seg_a, dtype=np.float64)
    cdef double[::1] sb = np.ascontiguousarray(seg_b, dtype=np.float64)
    cdef Py_ssize_t n = tk.shape[0], nseg = t0.shape[0]

    out_a = np.empty(n)
    cdef double[::1] out = out_a
    cdef Py_ssize_t k, p = 0
    cdef double t, s
    for k in range(n):
        t = tk[k]
        while p + 1 < nseg and t0[p + 1] <= t:
            p += 1
        s = t - t0[p]
        if kd[p] == 1:
            if degenerate:
                out[k] = st[p] + (sb[p] + sa[p] * s / tau_c) * exp(-s / tau_c)
            else:
                out[k] = st[p] + sa[p] * exp(-s / tau_dac) + sb[p] * exp(-s / tau_c)
        else:
            out[k] = v0[p] * exp(-s / tau_d)
    return out_a


def eval_dac(t_grid, double dt, targets, dac_d0, double tau_dac):
    cdef double[::1] tk = np.ascontiguousarray(t_grid, dtype=np.float64)
    cdef double[::1] tg = np.ascontiguousarray(targets, dtype=np.float64)
    cdef double[::1] d0 = np.ascontiguousarray(dac_d0, dtype=np.float64)
    cdef Py_ssize_t n = tk.shape[0], nf = tg.shape[0]

    out_a = np.empty(n)
    cdef double[::1] out = out_a
    cdef Py_ssize_t k, j
    cdef double t
    for k in range(n):
        t = tk[k]
        j = <Py_ssize_t>(t / dt)
        if j > nf - 1:
            j = nf - 1
        out[k] = tg[j] + d0[j] * exp(-(t - j * dt) / tau_dac)
    return out_a


def euler_run(targets, long n_channels, double dt, double gate_on,
              double cond_on, double cond_off, double tau_dac, double tau_c,
              double tau_d, double kappa, double dac_v0, cap_v0,
              double step_s, long record_stride, long n_ticks):
    cdef double[::1] tg = np.ascontiguousarray(targets, dtype=np.float64)
    cdef Py_ssize_t nf = tg.shape[0]
    cdef double h = step_s

    caps_out_a = np.empty((n_channels, n_ticks))
    dac_out_a = np.empty(n_ticks)
    cdef double[:, ::1] caps_out = caps_out_a
    cdef double[::1] dac_out = dac_out_a
    caps_a = np.array(cap_v0, dtype=np.float64).copy()
    cdef double[::1] caps = caps_a

    cdef double dac = dac_v0
    cdef double fc = h / tau_c
    cdef double fdac = h / tau_dac
    cdef double fd = 1.0 - h / tau_d
    cdef long long total = llround(nf * dt / h)
    cdef long long next_record = 0
    cdef long long m, m0, m1, mg, mc, mf
    cdef Py_ssize_t j, c, i, k
    cdef double t

    for j in range(nf):
        c = j % n_channels
        t = tg[j]
        m0 = llround(j * dt / h)
        m1 = llround((j + 1) * dt / h)
        mg = llround((j * dt + gate_on) / h)
        mc = llround((j * dt + cond_on) / h)
        mf = llround((j * dt + cond_off) / h)
        if mg < m0: mg = m0
        if mg > m1: mg = m1
        if mc < mg: mc = mg
        if mc > m1: mc = m1
        if mf < mc: mf = mc
        if mf > m1: mf = m1

        for m in range(m0, m1):
            if m == mg and kappa > 0.0:
                caps[c] = caps[c] + kappa * (dac - caps[c])
            if m == next_record:
                k = <Py_ssize_t>(m // record_stride)
                if k < n_ticks:
                    for i in range(n_channels):
                        caps_out[i, k] = caps[i]
                    dac_out[k] = dac
                next_record += record_stride
            if mc <= m < mf:
                caps[c] = caps[c] + fc * (dac - caps[c])
            else:
                caps[c] = caps[c] * fd
            for i in range(n_channels):
                if i != c:
                    caps[i] = caps[i] * fd
            dac = dac + fdac * (t - dac)

    if (<long long>(n_ticks - 1)) * record_stride == total:
        for i in range(n_channels):
            caps_out[i, n_ticks - 1] = caps[i]
        dac_out[n_ticks - 1] = dac
    return caps_out_a, dac_out_a
