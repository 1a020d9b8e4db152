"""Measurement pipeline for simulated or bench-captured traces.

Covers the characterization steps used on the multiplexed outputs:
exponential-discharge fitting, settling-time measurement, Butterworth
low-pass pre-filtering, coherent sine-amplitude estimation, hold-droop and
inter-channel crosstalk quantification.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.signal import sosfilt

from .errors import (
    CutoffAboveNyquistError,
    GridMismatchError,
    InsufficientSpanError,
    NoDecayDetectedError,
    NonPositiveSamplesError,
    NoStepDetectedError,
    TooFewSamplesError,
    TooShortForFrequencyError,
    ZeroAggressorAmplitudeError,
)

# legacy scope probe divider: 50 ohm input behind a 270 ohm series resistor
DIVIDER_50_320 = 50.0 / (270.0 + 50.0)


@dataclass(frozen=True)
class FilterSpec:
    order: int = 5
    cutoff_hz: float = 70e3
    sample_rate_hz: float = 1e7


@dataclass(frozen=True)
class Biquad:
    b0: float
    b1: float
    b2: float
    a1: float
    a2: float


@dataclass(frozen=True)
class FirstOrder:
    b0: float
    b1: float
    a1: float


@dataclass(frozen=True)
class FilterStages:
    """Factored IIR low-pass: biquad cascade plus one first-order section
    when the order is odd."""

    biquads: tuple
    first_order: Optional[FirstOrder]
    spec: FilterSpec

    def as_sos(self) -> np.ndarray:
        rows = [[q.b0, q.b1, q.b2, 1.0, q.a1, q.a2] for q in self.biquads]
        if self.first_order is not None:
            f = self.first_order
            rows.append([f.b0, f.b1, 0.0, 1.0, f.a1, 0.0])
        return np.asarray(rows, dtype=float)

    def response(self, freq_hz) -> np.ndarray:
        """Complex frequency response at the given frequencies."""
        w = 2.0 * np.pi * np.asarray(freq_hz, dtype=float) / self.spec.sample_rate_hz
        z1 = np.exp(-1j * w)
        h = np.ones_like(z1, dtype=complex)
        for row in self.as_sos():
            b0, b1, b2, _, a1, a2 = row
            h *= (b0 + b1 * z1 + b2 * z1 ** 2) / (1.0 + a1 * z1 + a2 * z1 ** 2)
        return h


def design_lowpass(spec: FilterSpec) -> FilterStages:
    """Butterworth low-pass via the bilinear transform.

    Analog prototype poles sit equally spaced on the left half of the
    circle of radius one (cutoff-normalized); the cutoff is prewarped so
    the digital -3 dB point lands exactly on ``cutoff_hz``.  DC gain is 1.
    """
    if spec.order < 1:
        raise ValueError(f"order must be >= 1, got {spec.order}")
    if not 0.0 < spec.cutoff_hz < spec.sample_rate_hz / 2.0:
        raise CutoffAboveNyquistError(
            f"cutoff {spec.cutoff_hz} Hz must lie in (0, {spec.sample_rate_hz / 2} Hz)"
        )
    g = math.tan(math.pi * spec.cutoff_hz / spec.sample_rate_hz)

    biquads = []
    n = spec.order
    for k in range(1, n // 2 + 1):
        # conjugate pole pair s^2 + alpha*s + 1 with alpha = 2 sin(phi_k)
        alpha = 2.0 * math.sin(math.pi * (2 * k - 1) / (2 * n))
        den = 1.0 + alpha * g + g * g
        biquads.append(
            Biquad(
                b0=g * g / den,
                b1=2.0 * g * g / den,
                b2=g * g / den,
                a1=2.0 * (g * g - 1.0) / den,
                a2=(1.0 - alpha * g + g * g) / den,
            )
        )
    first = None
    if n % 2 == 1:
        den = 1.0 + g
        first = FirstOrder(b0=g / den, b1=g / den, a1=(g - 1.0) / den)
    return FilterStages(tuple(biquads), first, spec)


def apply_filter(stages: FilterStages, trace: np.ndarray, sample_rate_hz: Optional[float] = None) -> np.ndarray:
    """Causal single-pass filtering with zero initial state.

    ``sample_rate_hz``, when given, must match the rate the stages were
    designed for.
    """
    if sample_rate_hz is not None and not math.isclose(
        sample_rate_hz, stages.spec.sample_rate_hz, rel_tol=1e-9
    ):
        raise GridMismatchError(
            f"trace rate {sample_rate_hz} Hz != filter design rate "
            f"{stages.spec.sample_rate_hz} Hz"
        )
    return sosfilt(stages.as_sos(), np.asarray(trace, dtype=float))


def fit_exponential_decay(time_s, volts, baseline_v: float = 0.0):
    """Fit v0 * exp(-t/tau) to a decay segment.

    Linear regression on ln(v) weighted by v^2, which approximates the
    unweighted nonlinear least-squares solution without iteration.
    Returns (v0, tau_s, residual_rms_v).
    """
    t = np.asarray(time_s, dtype=float)
    v = np.asarray(volts, dtype=float) - baseline_v
    if v.size < 8:
        raise TooFewSamplesError(f"need >= 8 samples, got {v.size}")
    if np.any(v <= 0.0):
        raise NonPositiveSamplesError(
            f"{int(np.sum(v <= 0))} samples non-positive after baseline removal"
        )
    if np.ptp(v) <= 1e-12 * abs(v[0]):
        raise NonPositiveSamplesError(
            "segment is constant; nothing left to fit after baseline removal"
        )
    w = v * v
    y = np.log(v)
    sw = w.sum()
    tm = (w * t).sum() / sw
    ym = (w * y).sum() / sw
    slope = (w * (t - tm) * (y - ym)).sum() / (w * (t - tm) ** 2).sum()
    if slope >= 0.0:
        raise NoDecayDetectedError(f"segment does not decay (log-slope {slope:.3g} >= 0)")
    tau = -1.0 / slope
    v0 = math.exp(ym - slope * tm)
    residual = float(np.sqrt(np.mean((v - v0 * np.exp(-t / tau)) ** 2)))
    return v0, tau, residual


def measure_settling_time(time_s, volts, tolerance_frac: float) -> float:
    """Time from step onset to the last sample outside the final-value band.

    Onset is the last sample still inside the band around the initial
    value; using the *last* exit from the final band makes the measure
    robust to ringing.
    """
    if not 0.0 < tolerance_frac < 1.0:
        raise ValueError("tolerance_frac must lie in (0, 1)")
    t = np.asarray(time_s, dtype=float)
    v = np.asarray(volts, dtype=float)
    if v.size < 2:
        raise NoStepDetectedError("trace too short")
    v0 = v[0]
    v1 = v[-1]
    step = v1 - v0
    scale = max(abs(v0), abs(v1))
    if abs(step) <= 1e-9 * max(scale, 1e-30):
        raise NoStepDetectedError("no step between first and last sample")
    band = tolerance_frac * abs(step)

    outside_initial = np.abs(v - v0) > band
    if not outside_initial.any():
        raise NoStepDetectedError("signal never leaves the initial value band")
    onset_idx = max(int(np.argmax(outside_initial)) - 1, 0)

    outside_final = np.abs(v - v1) > band
    if not outside_final.any():
        return 0.0
    last_out = int(np.where(outside_final)[0][-1])
    return float(max(t[last_out] - t[onset_idx], 0.0))


def estimate_sine_amplitude(time_s, volts, freq_hz: float) -> float:
    """Coherent 3-parameter (in-phase, quadrature, offset) amplitude fit."""
    t = np.asarray(time_s, dtype=float)
    v = np.asarray(volts, dtype=float)
    span = t[-1] - t[0]
    if span * freq_hz < 3.0 * (1.0 - 1e-9):
        raise TooShortForFrequencyError(
            f"trace spans {span * freq_hz:.3g} periods of {freq_hz} Hz, need >= 3"
        )
    w = 2.0 * math.pi * freq_hz
    c = np.cos(w * t)
    s = np.sin(w * t)
    design = np.column_stack([c, s, np.ones_like(t)])
    coef, *_ = np.linalg.lstsq(design, v, rcond=None)
    return float(math.hypot(coef[0], coef[1]))


def crosstalk_db(victim_v, aggressor_v, aggressor_freq_hz: float, spec: FilterSpec,
                 time_s=None, skip_s: float = 0.0) -> float:
    """20*log10 of victim/aggressor amplitude ratio at the aggressor tone.

    Both traces are low-pass filtered with ``spec`` first; more negative
    means less crosstalk.  ``skip_s`` drops the head of both filtered
    traces before fitting (filter warm-up; affects both sides equally).
    """
    victim_v = np.asarray(victim_v, dtype=float)
    aggressor_v = np.asarray(aggressor_v, dtype=float)
    if victim_v.shape != aggressor_v.shape:
        raise GridMismatchError("victim and aggressor traces must share one grid")
    if time_s is None:
        time_s = np.arange(len(victim_v)) / spec.sample_rate_hz
    time_s = np.asarray(time_s, dtype=float)
    stages = design_lowpass(spec)
    i = int(np.searchsorted(time_s, time_s[0] + skip_s, side="left"))
    a_victim = estimate_sine_amplitude(
        time_s[i:], apply_filter(stages, victim_v)[i:], aggressor_freq_hz
    )
    a_aggr = estimate_sine_amplitude(
        time_s[i:], apply_filter(stages, aggressor_v)[i:], aggressor_freq_hz
    )
    if a_aggr <= 0.0:
        raise ZeroAggressorAmplitudeError("aggressor amplitude is zero after filtering")
    return 20.0 * math.log10(a_victim / a_aggr)


def droop_fraction(time_s, volts, recharge_period_s: float) -> float:
    """Mean (peak - trough)/peak over complete hold intervals.

    The segment must already be in steady state and span at least two
    recharge periods; peaks are the per-period maxima and each trough is
    the minimum before the next peak.
    """
    t = np.asarray(time_s, dtype=float)
    v = np.asarray(volts, dtype=float)
    span = t[-1] - t[0]
    periods = int(math.floor(span / recharge_period_s + 1e-9))
    if periods < 2:
        raise InsufficientSpanError(
            f"segment spans {span / recharge_period_s:.2f} recharge periods, need >= 2"
        )
    peak_idx = []
    for m in range(periods):
        lo = np.searchsorted(t, t[0] + m * recharge_period_s, side="left")
        hi = np.searchsorted(t, t[0] + (m + 1) * recharge_period_s, side="left")
        if hi <= lo:
            continue
        peak_idx.append(lo + int(np.argmax(v[lo:hi])))
    droops = []
    for a, b in zip(peak_idx[:-1], peak_idx[1:]):
        peak = v[a]
        trough = v[a:b + 1].min()
        if peak != 0.0:
            droops.append((peak - trough) / peak)
    if not droops:
        raise InsufficientSpanError("no complete hold interval found")
    return float(np.mean(droops))


# --- report ----------------------------------------------------------------

@dataclass
class ChannelReport:
    channel: int
    discharge_fit: Optional[dict] = None   # {v0, tau_s, residual_rms_v}
    settling_time_s: Optional[float] = None
    droop_fraction: Optional[float] = None
    sine_fit: Optional[dict] = None        # {amplitude_v, frequency_hz}


@dataclass
class AnalysisReport:
    """Aggregated results; ``crosstalk_db[victim][aggressor]`` is None for
    pairs that were not measured and 0.0 on the diagonal by convention."""

    scenario: str = ""
    divider_scale: float = 1.0
    channels: list = field(default_factory=list)
    crosstalk_db: Optional[list] = None

    def channel(self, index: int) -> ChannelReport:
        while len(self.channels) <= index:
            self.channels.append(ChannelReport(channel=len(self.channels)))
        return self.channels[index]

    def ensure_crosstalk(self, n: int) -> None:
        if self.crosstalk_db is None:
            self.crosstalk_db = [[0.0 if i == j else None for j in range(n)] for i in range(n)]

    def to_json_dict(self) -> dict:
        out = {
            "scenario": self.scenario,
            "divider_scale": self.divider_scale,
            "channels": [],
        }
        for ch in self.channels:
            entry = {"channel": ch.channel}
            if ch.discharge_fit is not None:
                entry["discharge_fit"] = ch.discharge_fit
            if ch.settling_time_s is not None:
                entry["settling_time_s"] = ch.settling_time_s
            if ch.droop_fraction is not None:
                entry["droop_fraction"] = ch.droop_fraction
            if ch.sine_fit is not None:
                entry["sine_fit"] = ch.sine_fit
            out["channels"].append(entry)
        if self.crosstalk_db is not None:
            # dB values are rounded only here, matching bench-report precision
            out["crosstalk_db"] = [
                [None if x is None else round(x, 1) for x in row]
                for row in self.crosstalk_db
            ]
        return out

    def to_json(self, indent: int = 2) -> str:
        return json.dumps(self.to_json_dict(), indent=indent)

    def crosstalk_table(self, aggressor: int) -> str:
        """Aligned victim-vs-aggressor table in the bench-report style."""
        lines = [f"Crosstalk relative to Channel {aggressor}", "Channel    Crosstalk [dB]"]
        for i, row in enumerate(self.crosstalk_db or []):
            if i == aggressor or row[aggressor] is None:
                continue
            lines.append(f"Channel {i}  {row[aggressor]:14.1f}")
        return "\n".join(lines)
