"""Analog-chain simulator for compiled multiplexing programs.

Models the demultiplexing path per frame: the DAC node settles
exponentially toward the frame's code, the active channel's hold capacitor
charges through the switch on-resistance while the gate conducts, and every
capacitor discharges through the amplifier input impedance otherwise.  All
segments are piecewise exponentials evaluated in closed form, then sampled
onto the output grid, so traces are independent of the grid spacing.

A deliberately dumb forward-Euler integrator of the same circuit is
provided as a cross-check oracle for the analytic engine.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from ._backend import kernels
from .compiler import HardwareProfile, MuxProgram
from .errors import (
    LengthMismatchError,
    MalformedProgramError,
    StepTooCoarseError,
    TraceFormatError,
)


@dataclass
class SimConfig:
    """Simulation knobs; all physics lives in the hardware profile."""

    output_sample_period_s: float = 1e-9
    settle_tolerance: float = 1e-3
    record_dac_node: bool = False
    initial_cap_voltages: Optional[Sequence[float]] = None

    def check(self) -> None:
        if self.output_sample_period_s <= 0:
            raise ValueError("output_sample_period_s must be > 0")
        if not 0.0 < self.settle_tolerance < 1.0:
            raise ValueError("settle_tolerance must lie in (0, 1)")


@dataclass
class Trace:
    """Sampled voltages on a uniform time grid.

    ``cap_v`` holds pre-gain capacitor voltages, one row per channel;
    ``output_v`` applies the output-stage gain.  ``dac_v`` is present only
    when the simulation recorded the DAC node.
    """

    time_s: np.ndarray
    cap_v: np.ndarray
    amp_gain: float
    dac_v: Optional[np.ndarray] = None
    profile_hash: str = ""
    program_hash: str = ""
    meta: dict = field(default_factory=dict)

    @property
    def num_channels(self) -> int:
        return self.cap_v.shape[0]

    @property
    def sample_period_s(self) -> float:
        return float(self.time_s[1] - self.time_s[0])

    @property
    def output_v(self) -> np.ndarray:
        return self.amp_gain * self.cap_v

    def channel_output(self, channel: int) -> np.ndarray:
        return self.amp_gain * self.cap_v[channel]

    def to_csv(self, path) -> None:
        """Write ``time_s,dac_v,ch0_v,...`` (output voltages, 10 sig digits)."""
        cols = [self.time_s]
        header = "time_s"
        if self.dac_v is not None:
            cols.append(self.dac_v)
            header += ",dac_v"
        out = self.output_v
        for c in range(self.num_channels):
            cols.append(out[c])
            header += f",ch{c}_v"
        with open(path, "w", newline="") as fh:
            if self.profile_hash:
                fh.write(f"# profile_hash={self.profile_hash}\n")
            if self.program_hash:
                fh.write(f"# program_hash={self.program_hash}\n")
            fh.write(header + "\n")
            for row in zip(*cols):
                fh.write(",".join(f"{v:.9e}" for v in row) + "\n")


def load_trace_csv(path) -> Trace:
    """Read a trace CSV (simulator format or externally measured data).

    Loaded channel columns are treated as already-at-the-electrode voltages
    (gain 1), which is what the analysis operations expect.
    """
    profile_hash = ""
    program_hash = ""
    header = None
    rows = []
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            if line.startswith("#"):
                body = line.lstrip("# ")
                if body.startswith("profile_hash="):
                    profile_hash = body.split("=", 1)[1]
                elif body.startswith("program_hash="):
                    program_hash = body.split("=", 1)[1]
                continue
            if header is None:
                header = [h.strip() for h in line.split(",")]
                continue
            rows.append([float(x) for x in line.split(",")])
    if header is None or not rows:
        raise TraceFormatError(f"{path}: no header or no samples")
    if header[0] != "time_s":
        raise TraceFormatError(f"{path}: first column must be time_s, got {header[0]!r}")
    data = np.asarray(rows, dtype=float)
    if data.shape[1] != len(header):
        raise TraceFormatError(f"{path}: ragged rows")
    time_s = data[:, 0]
    if len(time_s) >= 3:
        spacing = np.diff(time_s)
        if spacing.min() <= 0 or spacing.ptp() > 1e-6 * spacing.mean():
            raise TraceFormatError(f"{path}: time grid must be uniform and increasing")
    col = 1
    dac_v = None
    if col < len(header) and header[col] == "dac_v":
        dac_v = data[:, col]
        col += 1
    chans = []
    for i, name in enumerate(header[col:]):
        if name != f"ch{i}_v":
            raise TraceFormatError(f"{path}: unexpected column {name!r}")
        chans.append(data[:, col + i])
    if not chans:
        raise TraceFormatError(f"{path}: no channel columns")
    return Trace(
        time_s=time_s,
        cap_v=np.vstack(chans),
        amp_gain=1.0,
        dac_v=dac_v,
        profile_hash=profile_hash,
        program_hash=program_hash,
    )


def _tau_dac(profile: HardwareProfile, config: SimConfig) -> float:
    # first-order settling that lands within settle_tolerance at exactly
    # the profile's settling time
    return profile.dac_settling_s / math.log(1.0 / config.settle_tolerance)


def _program_geometry(program: MuxProgram):
    profile = program.profile
    n = profile.num_channels
    dt = program.frame_period_s
    gate_on = program.gate_on_offset_s
    gate_off = program.gate_off_offset_s
    cond_on = gate_on + profile.switch_rise_s
    cond_off = gate_off - profile.switch_fall_s
    if len(program) == 0:
        raise MalformedProgramError("program has no frames")
    if not (0.0 <= gate_on and cond_on <= cond_off <= dt):
        raise MalformedProgramError(
            f"gate window [{gate_on:.4g}, {gate_off:.4g}] with rise/fall does not fit "
            f"inside the {dt:.4g} s frame"
        )
    expected = np.arange(len(program), dtype=np.int64) % n
    if not np.array_equal(program.channels, expected):
        raise MalformedProgramError("frames must visit channels round-robin starting at 0")
    top = 2 ** profile.dac_bits - 1
    if program.codes.min() < 0 or program.codes.max() > top:
        raise MalformedProgramError(f"dac codes outside [0, {top}]")
    return n, dt, cond_on, cond_off


def _initial_caps(profile: HardwareProfile, config: SimConfig) -> np.ndarray:
    if config.initial_cap_voltages is None:
        return np.zeros(profile.num_channels)
    caps = np.asarray(config.initial_cap_voltages, dtype=float)
    if caps.shape != (profile.num_channels,):
        raise LengthMismatchError(
            f"initial_cap_voltages has length {caps.size}, profile has "
            f"{profile.num_channels} channels"
        )
    return caps.copy()


def _grid(duration_s: float, period_s: float) -> np.ndarray:
    n = int(math.floor(duration_s / period_s + 1e-9)) + 1
    return np.arange(n) * period_s


def simulate(program: MuxProgram, config: SimConfig = SimConfig()) -> Trace:
    """Evaluate the analytic piecewise-exponential response of a program.

    Within each frame the DAC node settles toward the frame's dequantized
    code; the active capacitor tracks the moving DAC node while the gate
    conducts and otherwise discharges toward 0 V.  A nonzero profile
    ``coupling_kappa`` adds a charge-injection jump at each gate-on
    instant.  The returned trace samples the exact solution; changing the
    grid spacing never changes the underlying waveforms.
    """
    config.check()
    profile = program.profile
    n, dt, cond_on, cond_off = _program_geometry(program)
    caps0 = _initial_caps(profile, config)
    targets = program.target_voltages()
    tau_dac = _tau_dac(profile, config)
    tau_c = profile.hold_cap_f * profile.switch_on_res_ohm
    tau_d = profile.hold_cap_f * profile.amp_input_res_ohm
    kappa = profile.coupling_kappa
    gate_on = program.gate_on_offset_s

    dac_d0, cap_cs, coef_a, coef_b, cap_ce, cap_jmp = kernels.frame_pass(
        targets, n, dt, gate_on, cond_on, cond_off,
        tau_dac, tau_c, tau_d, kappa, float(targets[0]), caps0,
    )

    t_grid = _grid(program.total_duration_s, config.output_sample_period_s)
    degenerate = tau_c == tau_dac
    cap_v = np.empty((n, len(t_grid)))
    for c in range(n):
        visits = np.arange(c, len(program), n, dtype=np.int64)
        nv = len(visits)
        # segments: initial hold, then per visit (post-jump hold, conduction,
        # post-conduction hold)
        seg_t0 = np.empty(3 * nv + 1)
        seg_kind = np.zeros(3 * nv + 1, dtype=np.int64)
        seg_v0 = np.zeros(3 * nv + 1)
        seg_t = np.zeros(3 * nv + 1)
        seg_a = np.zeros(3 * nv + 1)
        seg_b = np.zeros(3 * nv + 1)
        starts = visits * dt
        seg_t0[0] = 0.0
        seg_v0[0] = caps0[c]
        seg_t0[1::3] = starts + gate_on
        seg_v0[1::3] = cap_jmp[visits]
        seg_t0[2::3] = starts + cond_on
        seg_kind[2::3] = 1
        seg_t[2::3] = targets[visits]
        seg_a[2::3] = coef_a[visits]
        seg_b[2::3] = coef_b[visits]
        seg_t0[3::3] = starts + cond_off
        seg_v0[3::3] = cap_ce[visits]
        cap_v[c] = kernels.eval_channel(
            t_grid, seg_t0, seg_kind, seg_v0, seg_t, seg_a, seg_b,
            tau_d, tau_dac, tau_c, degenerate,
        )

    dac_v = None
    if config.record_dac_node:
        dac_v = kernels.eval_dac(t_grid, dt, targets, dac_d0, tau_dac)

    return Trace(
        time_s=t_grid,
        cap_v=cap_v,
        amp_gain=profile.amp_gain,
        dac_v=dac_v,
        profile_hash=profile.fingerprint(),
        program_hash=program.fingerprint(),
        meta={"engine": "analytic", "backend": kernels.BACKEND},
    )


def simulate_discharge(
    profile: HardwareProfile,
    initial_v: float,
    duration_s: float,
    config: SimConfig = SimConfig(),
) -> Trace:
    """Single-channel open-switch discharge: initial_v * exp(-t/tau_d).

    ``initial_v`` is the capacitor (pre-gain) voltage.  Regenerates the
    released-switch discharge experiment synthetically.
    """
    if duration_s <= 0:
        raise ValueError("duration_s must be > 0")
    config.check()
    tau_d = profile.hold_cap_f * profile.amp_input_res_ohm
    t_grid = _grid(duration_s, config.output_sample_period_s)
    cap_v = initial_v * np.exp(-t_grid / tau_d)[np.newaxis, :]
    return Trace(
        time_s=t_grid,
        cap_v=cap_v,
        amp_gain=profile.amp_gain,
        profile_hash=profile.fingerprint(),
        meta={"engine": "discharge", "tau_d_s": tau_d},
    )


def euler_oracle(
    program: MuxProgram,
    config: SimConfig = SimConfig(),
    step_s: float = 1e-12,
) -> Trace:
    """Fixed-step forward-Euler integration of the same circuit ODEs.

    Exists solely to validate the analytic engine; regime boundaries are
    quantized to the nearest step, so keep profile times commensurate with
    ``step_s`` when tight agreement matters.
    """
    config.check()
    profile = program.profile
    n, dt, cond_on, cond_off = _program_geometry(program)
    tau_c = profile.hold_cap_f * profile.switch_on_res_ohm
    if step_s > tau_c / 10.0:
        raise StepTooCoarseError(
            f"step {step_s:.3g} s too coarse for tau_c={tau_c:.3g} s (need <= tau_c/10)"
        )
    caps0 = _initial_caps(profile, config)
    targets = program.target_voltages()
    tau_dac = _tau_dac(profile, config)
    tau_d = profile.hold_cap_f * profile.amp_input_res_ohm

    t_grid = _grid(program.total_duration_s, config.output_sample_period_s)
    stride = int(round(config.output_sample_period_s / step_s))
    if stride < 1:
        raise StepTooCoarseError("output_sample_period_s must be >= step_s")

    caps, dac = kernels.euler_run(
        targets, n, dt, program.gate_on_offset_s, cond_on, cond_off,
        tau_dac, tau_c, tau_d, profile.coupling_kappa,
        float(targets[0]), caps0, step_s, stride, len(t_grid),
    )
    return Trace(
        time_s=t_grid,
        cap_v=caps,
        amp_gain=profile.amp_gain,
        dac_v=dac if config.record_dac_node else None,
        profile_hash=profile.fingerprint(),
        program_hash=program.fingerprint(),
        meta={"engine": "euler", "step_s": step_s, "backend": kernels.BACKEND},
    )
