"""Configuration files: one JSON document drives compile, simulate,
analyze and estimate for a named scenario.

Key names match the dataclass fields of the core modules (SI units
throughout).  See README.md for the full schema reference.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Optional

import numpy as np

from . import analysis as ana
from . import compiler as comp
from . import estimator as est
from . import simulator as sim
from .errors import ConfigError, TdmuxError

PROFILE_FIELDS = {f.name for f in fields(comp.HardwareProfile)}
PLATFORM_FIELDS = {f.name for f in fields(est.PlatformSpec)}
ANALYSIS_KINDS = ("droop", "discharge_fit", "crosstalk", "settling", "sine_fit")


@dataclass
class Scenario:
    name: str
    mode: str = "mux"  # "mux" | "discharge"
    profile: Optional[comp.HardwareProfile] = None
    targets: list = field(default_factory=list)
    duration_s: float = 0.0
    initial_v: float = 0.0
    sim_config: sim.SimConfig = field(default_factory=sim.SimConfig)
    noise_stddev_v: float = 0.0
    seed: Optional[int] = None
    analyses: list = field(default_factory=list)
    expected: list = field(default_factory=list)
    platform: Optional[est.PlatformSpec] = None
    num_electrodes: Optional[int] = None
    sweep: Optional[dict] = None

    def sine_frequency(self, channel: int) -> float:
        for t in self.targets:
            if t.channel_id == channel and isinstance(t.waveform, comp.Sine):
                return t.waveform.frequency_hz
        raise ConfigError(f"channel {channel} has no sine target to take a frequency from")


def _waveform_from_dict(d: dict) -> comp.Waveform:
    kind = d.get("kind")
    try:
        if kind == "constant":
            return comp.Constant(level=float(d["level"]))
        if kind == "sine":
            return comp.Sine(
                amplitude=float(d["amplitude"]),
                frequency_hz=float(d["frequency_hz"]),
                phase_rad=float(d.get("phase_rad", 0.0)),
                offset=float(d.get("offset", 0.0)),
            )
        if kind == "samples":
            return comp.SampleList(
                update_rate_hz=float(d["update_rate_hz"]),
                samples=[float(x) for x in d["samples"]],
            )
    except KeyError as e:
        raise ConfigError(f"waveform {kind!r} is missing key {e}") from None
    raise ConfigError(f"unknown waveform kind {kind!r} (expected constant|sine|samples)")


def _targets_from_list(entries: list, num_channels: int) -> list[comp.ChannelTarget]:
    default_wf = None
    explicit = {}
    for entry in entries:
        ch = entry.get("channel")
        wf = _waveform_from_dict(entry.get("waveform", {}))
        if ch == "all":
            default_wf = wf
        else:
            explicit[int(ch)] = wf
    targets = []
    for c in range(num_channels):
        if c in explicit:
            targets.append(comp.ChannelTarget(c, explicit[c]))
        elif default_wf is not None:
            targets.append(comp.ChannelTarget(c, default_wf))
    missing = num_channels - len(targets)
    if missing:
        raise ConfigError(f"{missing} channels have no target and no \"all\" default")
    return targets


def _check_analyses(sc: Scenario) -> None:
    for a in sc.analyses:
        kind = a.get("kind")
        if kind not in ANALYSIS_KINDS:
            raise ConfigError(f"unknown analysis kind {kind!r} (expected {ANALYSIS_KINDS})")
        if kind == "crosstalk":
            aggressor = a.get("aggressor")
            if aggressor is None:
                raise ConfigError("crosstalk analysis needs an \"aggressor\" channel")
            if "frequency_hz" not in a:
                sines = [
                    t.channel_id for t in sc.targets if isinstance(t.waveform, comp.Sine)
                ]
                if sines != [int(aggressor)]:
                    raise ConfigError(
                        "crosstalk needs exactly one sine target (the aggressor); "
                        f"sine channels are {sines}, aggressor is {aggressor}"
                    )
        if kind in ("droop", "discharge_fit") and "channel" not in a:
            raise ConfigError(f"{kind} analysis needs a \"channel\"")


def load_config(path) -> Scenario:
    path = Path(path)
    try:
        raw = json.loads(path.read_text())
    except OSError as e:
        raise ConfigError(f"cannot read {path}: {e}") from None
    except json.JSONDecodeError as e:
        raise ConfigError(f"{path}: invalid JSON: {e}") from None
    return scenario_from_dict(raw, name=path.stem)


def scenario_from_dict(raw: dict, name: str = "") -> Scenario:
    if not isinstance(raw, dict):
        raise ConfigError("config root must be a JSON object")
    sc = Scenario(name=raw.get("name", name), mode=raw.get("mode", "mux"))
    if sc.mode not in ("mux", "discharge"):
        raise ConfigError(f"unknown mode {sc.mode!r} (expected mux|discharge)")

    if "profile" in raw:
        p = raw["profile"]
        unknown = set(p) - PROFILE_FIELDS
        if unknown:
            raise ConfigError(f"unknown profile keys: {sorted(unknown)}")
        missing = PROFILE_FIELDS - set(p) - {"charge_settle_multiplier", "coupling_kappa"}
        if missing:
            raise ConfigError(f"profile is missing keys: {sorted(missing)}")
        kwargs = dict(p)
        kwargs["dac_bits"] = int(kwargs["dac_bits"])
        kwargs["num_channels"] = int(kwargs["num_channels"])
        sc.profile = comp.HardwareProfile(**kwargs)

    if sc.profile is not None and "targets" in raw:
        sc.targets = _targets_from_list(raw["targets"], sc.profile.num_channels)

    sc.duration_s = float(raw.get("duration_s", 0.0))
    sc.initial_v = float(raw.get("initial_v", 0.0))

    s = raw.get("sim", {})
    sc.sim_config = sim.SimConfig(
        output_sample_period_s=float(s.get("output_sample_period_s", 1e-9)),
        settle_tolerance=float(s.get("settle_tolerance", 1e-3)),
        record_dac_node=bool(s.get("record_dac_node", False)),
        initial_cap_voltages=s.get("initial_cap_voltages"),
    )
    sc.noise_stddev_v = float(s.get("noise_stddev_v", 0.0))
    sc.seed = s.get("seed")
    if sc.noise_stddev_v > 0 and sc.seed is None:
        raise ConfigError("sim.noise_stddev_v > 0 requires an explicit sim.seed")

    sc.analyses = list(raw.get("analyses", []))
    sc.expected = list(raw.get("expected", []))
    if sc.profile is not None:
        _check_analyses(sc)

    if "platform" in raw:
        p = raw["platform"]
        unknown = set(p) - PLATFORM_FIELDS
        if unknown:
            raise ConfigError(f"unknown platform keys: {sorted(unknown)}")
        sc.platform = est.PlatformSpec(**{k: int(v) for k, v in p.items()})
    if "num_electrodes" in raw:
        sc.num_electrodes = int(raw["num_electrodes"])
    sc.sweep = raw.get("sweep")
    return sc


def compile_scenario(sc: Scenario) -> comp.MuxProgram:
    if sc.profile is None:
        raise ConfigError(f"scenario {sc.name!r} has no hardware profile")
    if sc.mode != "mux":
        raise ConfigError(f"scenario {sc.name!r} is not a mux scenario")
    return comp.compile(sc.targets, sc.profile, sc.duration_s)


def simulate_scenario(sc: Scenario, seed: Optional[int] = None) -> sim.Trace:
    """Compile and simulate (or run the discharge experiment)."""
    if sc.profile is None:
        raise ConfigError(f"scenario {sc.name!r} has no hardware profile")
    if sc.mode == "discharge":
        trace = sim.simulate_discharge(
            sc.profile, sc.initial_v, sc.duration_s, sc.sim_config
        )
    else:
        trace = sim.simulate(compile_scenario(sc), sc.sim_config)
    if sc.noise_stddev_v > 0:
        rng = np.random.default_rng(seed if seed is not None else sc.seed)
        noise = rng.normal(0.0, sc.noise_stddev_v, size=trace.cap_v.shape)
        trace.cap_v = trace.cap_v + noise / trace.amp_gain
    return trace


def _slice_after(trace: sim.Trace, skip_s: float):
    i = int(np.searchsorted(trace.time_s, trace.time_s[0] + skip_s, side="left"))
    return trace.time_s[i:], i


def analyze_trace(trace: sim.Trace, sc: Scenario,
                  divider_scale: float = 1.0) -> ana.AnalysisReport:
    """Run the scenario's requested analyses over a trace."""
    report = ana.AnalysisReport(scenario=sc.name, divider_scale=divider_scale)
    rate = 1.0 / trace.sample_period_s
    scale = divider_scale

    for a in sc.analyses:
        kind = a["kind"]
        if kind == "droop":
            c = int(a["channel"])
            recharge = a.get("recharge_period_s")
            if recharge is None:
                recharge = comp.timing_budget(sc.profile).recharge_period_s
            skip = int(a.get("skip_periods", 2)) * recharge
            t, i = _slice_after(trace, skip)
            report.channel(c).droop_fraction = ana.droop_fraction(
                t, scale * trace.channel_output(c)[i:], recharge
            )
        elif kind == "discharge_fit":
            c = int(a["channel"])
            v0, tau, resid = ana.fit_exponential_decay(
                trace.time_s,
                scale * trace.channel_output(c),
                baseline_v=float(a.get("baseline_v", 0.0)),
            )
            report.channel(c).discharge_fit = {
                "v0": v0, "tau_s": tau, "residual_rms_v": resid,
            }
        elif kind == "settling":
            signal = a.get("signal", "dac")
            if signal == "dac":
                if trace.dac_v is None:
                    raise ConfigError("settling on the DAC node needs record_dac_node")
                v = trace.dac_v
                c = 0
            else:
                c = int(signal)
                v = trace.channel_output(c)
            report.channel(c).settling_time_s = ana.measure_settling_time(
                trace.time_s, v, float(a.get("tolerance_frac", 1e-3))
            )
        elif kind == "sine_fit":
            spec = _filter_spec(a.get("filter"), rate)
            stages = ana.design_lowpass(spec)
            skip = float(a.get("skip_s", 0.0))
            for t in sc.targets:
                if not isinstance(t.waveform, comp.Sine):
                    continue
                filtered = ana.apply_filter(stages, scale * trace.channel_output(t.channel_id))
                tt, i = _slice_after(trace, skip)
                amp = ana.estimate_sine_amplitude(tt, filtered[i:], t.waveform.frequency_hz)
                report.channel(t.channel_id).sine_fit = {
                    "amplitude_v": amp,
                    "frequency_hz": t.waveform.frequency_hz,
                }
        elif kind == "crosstalk":
            aggressor = int(a["aggressor"])
            freq = float(a.get("frequency_hz", 0.0)) or sc.sine_frequency(aggressor)
            spec = _filter_spec(a.get("filter"), rate)
            skip = float(a.get("skip_s", 0.0))
            report.ensure_crosstalk(trace.num_channels)
            for victim in range(trace.num_channels):
                if victim == aggressor:
                    continue
                report.crosstalk_db[victim][aggressor] = ana.crosstalk_db(
                    scale * trace.channel_output(victim),
                    scale * trace.channel_output(aggressor),
                    freq, spec, time_s=trace.time_s, skip_s=skip,
                )
    return report


def _filter_spec(d: Optional[dict], sample_rate_hz: float) -> ana.FilterSpec:
    d = d or {}
    return ana.FilterSpec(
        order=int(d.get("order", 5)),
        cutoff_hz=float(d.get("cutoff_hz", 70e3)),
        sample_rate_hz=float(d.get("sample_rate_hz", sample_rate_hz)),
    )


# --- expected-value checking (demo) ----------------------------------------

@dataclass
class CheckResult:
    label: str
    expected: str
    actual: str
    ok: bool


def _metric_value(metric: str, entry: dict, results: dict):
    report: Optional[ana.AnalysisReport] = results.get("report")
    budget: Optional[comp.TimingBudget] = results.get("budget")
    plan: Optional[est.ResourcePlan] = results.get("plan")
    profile: Optional[comp.HardwareProfile] = results.get("profile")

    if metric in ("tau_c_s", "dt_c_s", "max_rate_hz", "predicted_droop_frac",
                  "recharge_period_s", "tau_d_s", "margin_s", "dt_s"):
        return getattr(budget, metric)
    if metric == "multiplexing_factor":
        return comp.multiplexing_factor(profile.dac_rate_hz, float(entry["update_rate_hz"]))
    if metric == "droop_fraction":
        return report.channel(int(entry["channel"])).droop_fraction
    if metric == "discharge_tau_s":
        return report.channel(int(entry["channel"])).discharge_fit["tau_s"]
    if metric == "settling_time_s":
        return report.channel(int(entry.get("channel", 0))).settling_time_s
    if metric == "sine_amplitude":
        return report.channel(int(entry["channel"])).sine_fit["amplitude_v"]
    if metric == "crosstalk_max_db":
        a = int(entry["aggressor"])
        vals = [row[a] for i, row in enumerate(report.crosstalk_db) if i != a]
        return max(v for v in vals if v is not None)
    if metric == "crosstalk_worst_victim":
        a = int(entry["aggressor"])
        vals = {
            i: row[a]
            for i, row in enumerate(report.crosstalk_db)
            if i != a and row[a] is not None
        }
        return max(vals, key=vals.get)
    if plan is not None and hasattr(plan, metric):
        return getattr(plan, metric)
    raise ConfigError(f"unknown expected metric {metric!r}")


def check_expected(sc: Scenario, results: dict) -> list[CheckResult]:
    checks = []
    for entry in sc.expected:
        metric = entry["metric"]
        label = metric
        if "channel" in entry:
            label += f"[ch{entry['channel']}]"
        try:
            actual = _metric_value(metric, entry, results)
        except (TdmuxError, AttributeError, KeyError, TypeError) as e:
            checks.append(CheckResult(label, "computable", f"error: {e}", False))
            continue
        if "equals" in entry:
            want = entry["equals"]
            ok = actual == want
            checks.append(CheckResult(label, f"= {want}", f"{actual}", ok))
        elif "max" in entry:
            want = float(entry["max"])
            ok = actual <= want
            checks.append(CheckResult(label, f"<= {want:g}", f"{actual:.6g}", ok))
        else:
            want = float(entry["value"])
            if "atol" in entry:
                tol = float(entry["atol"])
                ok = abs(actual - want) <= tol
                exp = f"{want:g} ± {tol:g}"
            else:
                rtol = float(entry.get("rtol", 1e-6))
                ok = math.isclose(actual, want, rel_tol=rtol)
                exp = f"{want:g} ± {rtol:g} rel"
            checks.append(CheckResult(label, exp, f"{actual:.6g}", ok))
    return checks
