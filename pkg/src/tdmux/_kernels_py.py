"""Pure-Python (numpy) simulation kernels.

Fallback used when the compiled extension is unavailable (TDMUX_PURE_PYTHON=1
or no built ``tdmux._kernels``).  Functions here are drop-in equivalents of
the Cython kernels; the analytic ones evaluate the same closed forms and the
Euler one evaluates the closed form of the identical forward-Euler recurrence
(geometric powers instead of step-by-step multiplication), so results agree
with the compiled path to rounding error.
"""

from __future__ import annotations

import math

import numpy as np

BACKEND = "python"


def frame_pass(targets, n_channels, dt, gate_on, cond_on, cond_off,
               tau_dac, tau_c, tau_d, kappa, dac_v0, cap_v0):
    """Sequential per-frame state recursion of the analytic engine.

    For every frame j (active channel j mod n) this tracks the DAC node and
    the active capacitor through: decay to gate-on, coupling jump, decay to
    conduction start, two-exponential conduction, decay to frame end.

    Returns per-frame arrays
      dac_d0  DAC deviation from the frame target at frame start
      cap_cs  active capacitor voltage at conduction start
      coef_a, coef_b  conduction solution coefficients (see eval_channel)
      cap_ce  active capacitor voltage at conduction end
      cap_jmp active capacitor voltage right after the gate-on jump
    """
    targets = np.asarray(targets, dtype=float)
    nf = len(targets)
    dac_d0 = np.empty(nf)
    cap_cs = np.empty(nf)
    coef_a = np.empty(nf)
    coef_b = np.empty(nf)
    cap_ce = np.empty(nf)
    cap_jmp = np.empty(nf)

    caps = np.asarray(cap_v0, dtype=float).copy()
    dac = float(dac_v0)
    width = cond_off - cond_on
    degenerate = tau_c == tau_dac
    decay_to_gate = math.exp(-gate_on / tau_d)
    decay_rise = math.exp(-(cond_on - gate_on) / tau_d)
    decay_tail = math.exp(-(dt - cond_off) / tau_d)
    dac_at_gate = math.exp(-gate_on / tau_dac)
    dac_at_cond = math.exp(-cond_on / tau_dac)
    dac_at_end = math.exp(-dt / tau_dac)
    cond_dac_decay = math.exp(-width / tau_dac)
    cond_cap_decay = math.exp(-width / tau_c)
    frame_decay = math.exp(-dt / tau_d)

    for j in range(nf):
        c = j % n_channels
        t = targets[j]
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

        # decay every channel across the whole frame, then overwrite the
        # active one with its post-conduction tail
        caps *= frame_decay
        caps[c] = ce * decay_tail
        dac = t + d0 * dac_at_end

    return dac_d0, cap_cs, coef_a, coef_b, cap_ce, cap_jmp


def eval_channel(t_grid, seg_t0, seg_kind, seg_v0, seg_t, seg_a, seg_b,
                 tau_d, tau_dac, tau_c, degenerate):
    """Sample one channel's piecewise-exponential solution onto a grid.

    seg_kind 0: hold decay seg_v0 * exp(-s/tau_d)
    seg_kind 1: conduction seg_t + A*exp(-s/tau_dac) + B*exp(-s/tau_c),
                or (B + A*s/tau_c)*exp(-s/tau_c) shifted by seg_t when the
                two constants coincide; s is time since segment start.
    """
    idx = np.searchsorted(seg_t0, t_grid, side="right") - 1
    s = t_grid - seg_t0[idx]
    kind = seg_kind[idx]
    hold = seg_v0[idx] * np.exp(-s / tau_d)
    if degenerate:
        cond = seg_t[idx] + (seg_b[idx] + seg_a[idx] * s / tau_c) * np.exp(-s / tau_c)
    else:
        cond = seg_t[idx] + seg_a[idx] * np.exp(-s / tau_dac) + seg_b[idx] * np.exp(-s / tau_c)
    return np.where(kind == 1, cond, hold)


def eval_dac(t_grid, dt, targets, dac_d0, tau_dac):
    """Sample the DAC node (per-frame exponential settling) onto a grid."""
    idx = np.minimum((t_grid / dt).astype(np.int64), len(targets) - 1)
    s = t_grid - idx * dt
    return targets[idx] + dac_d0[idx] * np.exp(-s / tau_dac)


def _pow_ticks(base, offsets):
    return np.power(base, offsets.astype(float))


def euler_run(targets, n_channels, dt, gate_on, cond_on, cond_off,
              tau_dac, tau_c, tau_d, kappa, dac_v0, cap_v0,
              step_s, record_stride, n_ticks):
    """Forward-Euler integration of the demux chain, sampled onto a grid.

    Evaluates the exact iterates of the explicit-Euler recurrence
        cap   <- cap + h*(dac - cap)/tau_c      (while conducting)
        cap   <- cap * (1 - h/tau_d)            (while holding)
        dac   <- dac + h*(target - dac)/tau_dac
    in closed form per regime segment (geometric series), which matches the
    step-by-step compiled loop to rounding error.  Regime boundaries are
    quantized to the nearest step.
    """
    targets = np.asarray(targets, dtype=float)
    nf = len(targets)
    h = step_s
    a = 1.0 - h / tau_c       # conduction survival per step
    r = 1.0 - h / tau_dac     # DAC deviation survival per step
    d = 1.0 - h / tau_d       # hold survival per step
    degenerate = a == r

    caps_out = np.empty((n_channels, n_ticks))
    dac_out = np.empty(n_ticks)
    caps = np.asarray(cap_v0, dtype=float).copy()
    dac = float(dac_v0)

    frame_start = np.rint(np.arange(nf + 1) * dt / h).astype(np.int64)
    gate_steps = np.rint((np.arange(nf) * dt + gate_on) / h).astype(np.int64)
    con_steps = np.rint((np.arange(nf) * dt + cond_on) / h).astype(np.int64)
    coff_steps = np.rint((np.arange(nf) * dt + cond_off) / h).astype(np.int64)
    total_steps = frame_start[nf]

    def ticks_in(m_lo, m_hi):
        """Global tick indices whose step falls in [m_lo, m_hi)."""
        k_lo = -(-m_lo // record_stride)
        k_hi = min((m_hi - 1) // record_stride, n_ticks - 1)
        return np.arange(k_lo, k_hi + 1, dtype=np.int64)

    def hold_channel(i, m_lo, m_hi):
        nonlocal caps
        k = ticks_in(m_lo, m_hi)
        if len(k):
            caps_out[i, k] = caps[i] * _pow_ticks(d, k * record_stride - m_lo)
        caps[i] = caps[i] * d ** float(m_hi - m_lo)

    for j in range(nf):
        c = j % n_channels
        t = targets[j]
        m0, m1 = int(frame_start[j]), int(frame_start[j + 1])
        mg = min(max(int(gate_steps[j]), m0), m1)
        mc = min(max(int(con_steps[j]), mg), m1)
        mf = min(max(int(coff_steps[j]), mc), m1)
        d0 = dac - t

        # DAC node across the whole frame
        k = ticks_in(m0, m1)
        if len(k):
            dac_out[k] = t + d0 * _pow_ticks(r, k * record_stride - m0)

        # inactive channels decay across the whole frame
        for i in range(n_channels):
            if i != c:
                hold_channel(i, m0, m1)

        # active channel: decay, jump, decay, conduct, decay
        hold_channel(c, m0, mg)
        if kappa > 0.0:
            dac_at_gate = t + d0 * r ** float(mg - m0)
            caps[c] = caps[c] + kappa * (dac_at_gate - caps[c])
        hold_channel(c, mg, mc)

        if mf > mc:
            v0 = caps[c]
            d_cs = d0 * r ** float(mc - m0)
            k = ticks_in(mc, mf)
            off = k * record_stride - mc
            if degenerate:
                g = (1.0 - a) * d_cs / a
                if len(k):
                    caps_out[c, k] = t + (v0 - t) * _pow_ticks(a, off) \
                        + g * off * _pow_ticks(a, off)
                n = float(mf - mc)
                caps[c] = t + (v0 - t) * a ** n + g * n * a ** n
            else:
                g = (1.0 - a) * d_cs / (r - a)
                if len(k):
                    caps_out[c, k] = t + g * _pow_ticks(r, off) \
                        + (v0 - t - g) * _pow_ticks(a, off)
                n = float(mf - mc)
                caps[c] = t + g * r ** n + (v0 - t - g) * a ** n
        hold_channel(c, mf, m1)

        dac = t + d0 * r ** float(m1 - m0)

    # final grid point exactly at the end of the program
    if (n_ticks - 1) * record_stride == total_steps:
        caps_out[:, n_ticks - 1] = caps
        dac_out[n_ticks - 1] = dac
    return caps_out, dac_out
