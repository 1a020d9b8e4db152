"""Waveform-to-DAC-stream compiler for time-division multiplexed control.

A single high-speed DAC serves ``num_channels`` electrodes in round-robin
order.  Each DAC sample slot ("frame") outputs the code for one channel,
waits for the DAC to settle, then gates that channel's switch so its hold
capacitor charges to the new value.  This module checks that the timing
budget of a hardware profile closes and compiles per-channel target
waveforms into the frame stream plus gate schedule.
"""

from __future__ import annotations

import hashlib
import math
import struct
from dataclasses import dataclass, field
from typing import Iterator, Sequence, Union

import numpy as np

from .errors import (
    MissingChannelTargetError,
    NonPositiveRateError,
    TargetOutOfRangeError,
    UpdateRateExceedsDacRateError,
    ValidationFailedError,
    VoltageOutOfRangeError,
)

# Snap near-integer rate ratios before flooring so that N = A/(A/N) survives
# float division for any integer N up to ~1e7.
_RATIO_EPS = 1e-9


@dataclass
class HardwareProfile:
    """Electrical parameters of one DAC + demux control unit.

    Values may violate the physical invariants at construction time;
    ``validate()`` reports every problem instead of raising, so a CLI can
    print them all at once.
    """

    dac_rate_hz: float
    dac_bits: int
    dac_vmin: float
    dac_vmax: float
    dac_settling_s: float
    switch_rise_s: float
    switch_fall_s: float
    switch_on_res_ohm: float
    hold_cap_f: float
    amp_input_res_ohm: float
    amp_gain: float
    num_channels: int
    charge_settle_multiplier: float = 5.0
    coupling_kappa: float = 0.0

    def lsb_v(self) -> float:
        return (self.dac_vmax - self.dac_vmin) / (2 ** self.dac_bits - 1)

    def fingerprint(self) -> str:
        """Stable short hash of all profile fields."""
        items = sorted(self.__dict__.items())
        blob = ";".join(f"{k}={v!r}" for k, v in items).encode()
        return hashlib.sha256(blob).hexdigest()[:12]


@dataclass
class Constant:
    """Fixed electrode voltage (post-gain volts)."""

    level: float

    def sample(self, t: np.ndarray) -> np.ndarray:
        return np.full_like(t, self.level, dtype=float)


@dataclass
class Sine:
    """Sinusoidal electrode voltage (post-gain volts)."""

    amplitude: float
    frequency_hz: float
    phase_rad: float = 0.0
    offset: float = 0.0

    def sample(self, t: np.ndarray) -> np.ndarray:
        return self.offset + self.amplitude * np.sin(
            2.0 * math.pi * self.frequency_hz * t + self.phase_rad
        )


@dataclass
class SampleList:
    """Explicit per-visit samples; one value is consumed per channel visit."""

    update_rate_hz: float
    samples: Sequence[float]


Waveform = Union[Constant, Sine, SampleList]


@dataclass
class ChannelTarget:
    channel_id: int
    waveform: Waveform


@dataclass(frozen=True)
class TimingBudget:
    """Per-channel timing arithmetic derived from a profile.

    ``margin_s`` < 0 means the settle + charge budget does not fit in one
    DAC sample slot; ``validate()`` reports the same condition as a
    TimingInfeasible violation.
    """

    dt_s: float                  # slot per channel, 1/A
    tau_c_s: float               # charging RC constant, C*R_sw
    dt_c_s: float                # rise + k*tau_c + fall
    max_rate_hz: float           # 1/(settle + charge)
    margin_s: float              # dt - (settle + charge)
    recharge_period_s: float     # N/A, interval between visits
    tau_d_s: float               # discharge constant, C*R_amp
    predicted_droop_frac: float  # 1 - exp(-recharge/tau_d)


@dataclass(frozen=True)
class Violation:
    """One machine-readable validation finding."""

    code: str
    message: str
    detail: dict = field(default_factory=dict)

    def __str__(self) -> str:
        return f"{self.code}: {self.message}"


def multiplexing_factor(dac_rate_hz: float, channel_update_rate_hz: float) -> int:
    """Number of channels one DAC can serve at the given per-channel rate."""
    if dac_rate_hz <= 0 or channel_update_rate_hz <= 0:
        raise NonPositiveRateError(
            f"rates must be positive, got dac={dac_rate_hz}, update={channel_update_rate_hz}"
        )
    if channel_update_rate_hz > dac_rate_hz:
        raise UpdateRateExceedsDacRateError(
            f"update rate {channel_update_rate_hz} Hz exceeds DAC rate {dac_rate_hz} Hz"
        )
    return int(math.floor(dac_rate_hz / channel_update_rate_hz + _RATIO_EPS))


def timing_budget(profile: HardwareProfile) -> TimingBudget:
    """Evaluate the charge/discharge timing arithmetic for a profile."""
    dt = 1.0 / profile.dac_rate_hz
    tau_c = profile.hold_cap_f * profile.switch_on_res_ohm
    dt_c = (
        profile.switch_rise_s
        + profile.charge_settle_multiplier * tau_c
        + profile.switch_fall_s
    )
    busy = profile.dac_settling_s + dt_c
    recharge = profile.num_channels * dt
    tau_d = profile.hold_cap_f * profile.amp_input_res_ohm
    return TimingBudget(
        dt_s=dt,
        tau_c_s=tau_c,
        dt_c_s=dt_c,
        max_rate_hz=1.0 / busy,
        margin_s=dt - busy,
        recharge_period_s=recharge,
        tau_d_s=tau_d,
        predicted_droop_frac=1.0 - math.exp(-recharge / tau_d),
    )


def validate(profile: HardwareProfile) -> list[Violation]:
    """Check profile invariants and timing feasibility.

    Returns an empty list when the profile is usable.  Never raises.
    """
    violations: list[Violation] = []

    def invariant(ok: bool, message: str, **detail) -> None:
        if not ok:
            violations.append(Violation("InvariantViolation", message, detail))

    positive_fields = (
        "dac_rate_hz",
        "dac_settling_s",
        "switch_rise_s",
        "switch_fall_s",
        "switch_on_res_ohm",
        "hold_cap_f",
        "amp_input_res_ohm",
        "amp_gain",
        "charge_settle_multiplier",
    )
    for name in positive_fields:
        value = getattr(profile, name)
        invariant(value > 0, f"{name} must be > 0, got {value}", field=name, value=value)
    invariant(
        profile.dac_vmax > profile.dac_vmin,
        f"dac_vmax must exceed dac_vmin, got [{profile.dac_vmin}, {profile.dac_vmax}]",
        vmin=profile.dac_vmin,
        vmax=profile.dac_vmax,
    )
    invariant(
        8 <= profile.dac_bits <= 20,
        f"dac_bits must lie in [8, 20], got {profile.dac_bits}",
        field="dac_bits",
        value=profile.dac_bits,
    )
    invariant(
        profile.num_channels >= 1,
        f"num_channels must be >= 1, got {profile.num_channels}",
        field="num_channels",
        value=profile.num_channels,
    )
    invariant(
        0.0 <= profile.coupling_kappa < 1.0,
        f"coupling_kappa must lie in [0, 1), got {profile.coupling_kappa}",
        field="coupling_kappa",
        value=profile.coupling_kappa,
    )

    if violations:
        return violations

    budget = timing_budget(profile)
    if budget.margin_s < 0:
        required = profile.dac_settling_s + budget.dt_c_s
        violations.append(
            Violation(
                "TimingInfeasible",
                f"settle+charge needs {required:.4g} s but the slot is {budget.dt_s:.4g} s",
                {"required_s": required, "available_s": budget.dt_s},
            )
        )
    return violations


def quantize(voltage: float, profile: HardwareProfile) -> int:
    """Map a DAC-referred voltage onto the nearest code.

    Uniform mid-tread grid over [vmin, vmax]; ties round away from zero
    (the scaled value is nonnegative, so half-up is away from zero).
    """
    if voltage < profile.dac_vmin or voltage > profile.dac_vmax:
        raise VoltageOutOfRangeError(
            f"{voltage} V outside DAC range [{profile.dac_vmin}, {profile.dac_vmax}] V"
        )
    scaled = (voltage - profile.dac_vmin) / profile.lsb_v()
    return int(math.floor(scaled + 0.5))


def dequantize(dac_code: int, profile: HardwareProfile) -> float:
    """Voltage at the centre of a code's quantization bin."""
    top = 2 ** profile.dac_bits - 1
    if dac_code < 0 or dac_code > top:
        raise VoltageOutOfRangeError(f"code {dac_code} outside [0, {top}]")
    return profile.dac_vmin + dac_code * profile.lsb_v()


@dataclass(frozen=True)
class Frame:
    """One DAC sample slot: code, owning channel and gate window offsets."""

    dac_code: int
    channel: int
    gate_on_offset_s: float
    gate_off_offset_s: float


class MuxProgram:
    """Compiled frame stream: codes plus the switch gating schedule.

    Frames are stored as arrays; ``frame(j)`` and iteration provide the
    record view.  The gate window is identical for every frame (the
    compiler always opens at the settling time and closes at the slot
    boundary).
    """

    def __init__(
        self,
        profile: HardwareProfile,
        codes: np.ndarray,
        channels: np.ndarray,
        gate_on_offset_s: float,
        gate_off_offset_s: float,
    ):
        self.profile = profile
        self.codes = np.asarray(codes, dtype=np.int64)
        self.channels = np.asarray(channels, dtype=np.int64)
        self.gate_on_offset_s = float(gate_on_offset_s)
        self.gate_off_offset_s = float(gate_off_offset_s)
        self.frame_period_s = 1.0 / profile.dac_rate_hz
        self.total_duration_s = len(self.codes) * self.frame_period_s

    def __len__(self) -> int:
        return len(self.codes)

    def frame(self, j: int) -> Frame:
        return Frame(
            int(self.codes[j]),
            int(self.channels[j]),
            self.gate_on_offset_s,
            self.gate_off_offset_s,
        )

    def __iter__(self) -> Iterator[Frame]:
        for j in range(len(self)):
            yield self.frame(j)

    def target_voltages(self) -> np.ndarray:
        """Per-frame DAC-node target voltages (dequantized codes)."""
        return self.profile.dac_vmin + self.codes * self.profile.lsb_v()

    def fingerprint(self) -> str:
        h = hashlib.sha256()
        h.update(self.profile.fingerprint().encode())
        h.update(self.codes.tobytes())
        h.update(self.channels.tobytes())
        h.update(struct.pack("<dd", self.gate_on_offset_s, self.gate_off_offset_s))
        return h.hexdigest()[:12]

    def to_csv(self, path) -> None:
        """Write frame_index,time_s,channel,dac_code,gate_on_s,gate_off_s."""
        with open(path, "w", newline="") as fh:
            fh.write(f"# profile_hash={self.profile.fingerprint()}\n")
            fh.write(f"# program_hash={self.fingerprint()}\n")
            fh.write("frame_index,time_s,channel,dac_code,gate_on_s,gate_off_s\n")
            dt = self.frame_period_s
            for j in range(len(self)):
                fh.write(
                    f"{j},{j * dt:.9e},{self.channels[j]},{self.codes[j]},"
                    f"{self.gate_on_offset_s:.9e},{self.gate_off_offset_s:.9e}\n"
                )

    def to_binary(self, path) -> None:
        """Pack codes as little-endian uint16, left-justified below 16 bits."""
        shift = max(0, 16 - self.profile.dac_bits)
        packed = (self.codes << shift).astype("<u2")
        with open(path, "wb") as fh:
            fh.write(packed.tobytes())


def _evaluate_target(
    target: ChannelTarget, times: np.ndarray, visit_index: np.ndarray, profile: HardwareProfile
) -> np.ndarray:
    wf = target.waveform
    if isinstance(wf, (Constant, Sine)):
        return wf.sample(times)
    if isinstance(wf, SampleList):
        expected = profile.dac_rate_hz / profile.num_channels
        if not math.isclose(wf.update_rate_hz, expected, rel_tol=1e-9):
            raise TargetOutOfRangeError(
                f"channel {target.channel_id}: sample list update rate "
                f"{wf.update_rate_hz} Hz != dac_rate/num_channels = {expected} Hz"
            )
        samples = np.asarray(wf.samples, dtype=float)
        if visit_index.size and visit_index.max() >= len(samples):
            raise TargetOutOfRangeError(
                f"channel {target.channel_id}: needs {visit_index.max() + 1} samples, "
                f"got {len(samples)}"
            )
        return samples[visit_index]
    raise TypeError(f"unknown waveform type {type(wf)!r}")


def compile(
    targets: Sequence[ChannelTarget],
    profile: HardwareProfile,
    duration_s: float,
) -> MuxProgram:
    """Compile per-channel targets into a round-robin DAC frame stream.

    Targets are electrode (post-gain) voltages; each frame carries the
    quantized DAC-referred value of its channel's target evaluated at the
    frame start (zero-order hold per visit).  ``duration_s`` must be a
    positive whole number of recharge periods so every channel receives
    the same number of visits.

    Raises ValidationFailedError, MissingChannelTargetError or
    TargetOutOfRangeError.
    """
    violations = validate(profile)
    if violations:
        raise ValidationFailedError(violations)

    n = profile.num_channels
    by_channel = {}
    for t in targets:
        if t.channel_id in by_channel:
            raise MissingChannelTargetError(f"duplicate target for channel {t.channel_id}")
        by_channel[t.channel_id] = t
    missing = [c for c in range(n) if c not in by_channel]
    extra = [c for c in by_channel if not 0 <= c < n]
    if missing or extra:
        raise MissingChannelTargetError(
            f"need exactly one target per channel 0..{n - 1}; "
            f"missing {missing}, out of range {extra}"
        )

    dt = 1.0 / profile.dac_rate_hz
    recharge = n * dt
    cycles = duration_s / recharge
    if duration_s <= 0 or abs(cycles - round(cycles)) > 1e-9 * max(1.0, abs(cycles)):
        raise ValidationFailedError(
            [
                Violation(
                    "DurationNotMultipleOfRecharge",
                    f"duration {duration_s} s is not a positive multiple of "
                    f"the recharge period {recharge:.4g} s",
                    {"duration_s": duration_s, "recharge_period_s": recharge},
                )
            ]
        )
    num_frames = int(round(duration_s * profile.dac_rate_hz))

    frame_idx = np.arange(num_frames, dtype=np.int64)
    channels = frame_idx % n
    times = frame_idx * dt
    visit_index = frame_idx // n

    levels = np.empty(num_frames, dtype=float)
    for c in range(n):
        mask = channels == c
        levels[mask] = _evaluate_target(by_channel[c], times[mask], visit_index[mask], profile)

    dac_v = levels / profile.amp_gain
    bad = (dac_v < profile.dac_vmin) | (dac_v > profile.dac_vmax)
    if np.any(bad):
        j = int(np.argmax(bad))
        raise TargetOutOfRangeError(
            f"channel {channels[j]} target {levels[j]:.6g} V (DAC {dac_v[j]:.6g} V) at "
            f"t={times[j]:.4g} s falls outside the DAC range "
            f"[{profile.dac_vmin}, {profile.dac_vmax}] V after gain division"
        )

    codes = np.floor((dac_v - profile.dac_vmin) / profile.lsb_v() + 0.5).astype(np.int64)
    return MuxProgram(
        profile,
        codes,
        channels,
        gate_on_offset_s=profile.dac_settling_s,
        gate_off_offset_s=dt,
    )
