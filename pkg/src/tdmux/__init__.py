"""Time-division multiplexed electrode control: compiler, simulator,
analysis and resource planning for a shared high-speed DAC driving many
sample-and-hold output channels."""

from ._backend import backend_name
from .compiler import (
    ChannelTarget,
    Constant,
    Frame,
    HardwareProfile,
    MuxProgram,
    SampleList,
    Sine,
    TimingBudget,
    Violation,
    compile,
    dequantize,
    multiplexing_factor,
    quantize,
    timing_budget,
    validate,
)
from .simulator import SimConfig, Trace, euler_oracle, load_trace_csv, simulate, simulate_discharge

__version__ = "0.1.0"

__all__ = [
    "ChannelTarget",
    "Constant",
    "Frame",
    "HardwareProfile",
    "MuxProgram",
    "SampleList",
    "SimConfig",
    "Sine",
    "TimingBudget",
    "Trace",
    "Violation",
    "backend_name",
    "compile",
    "dequantize",
    "euler_oracle",
    "load_trace_csv",
    "multiplexing_factor",
    "quantize",
    "simulate",
    "simulate_discharge",
    "timing_budget",
    "validate",
]
