"""FPGA I/O budgeting and system-level DAC/FPGA counts.

Each DAC + decoder module consumes a fixed number of FPGA I/O ports (data
lines, one clock line, and ceil(log2 N) decoder select lines); everything
else follows from integer arithmetic on the port budget.  Inter-unit
synchronization travels over the FPGA transceivers and consumes no I/O
ports.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, fields

from .errors import InfeasiblePlatformError, UnknownParameterError


@dataclass(frozen=True)
class PlatformSpec:
    fpga_io_ports: int = 200
    dac_data_lines: int = 16
    dac_clock_lines: int = 1
    electrodes_per_qubit: int = 10
    multiplexing_factor: int = 100


@dataclass(frozen=True)
class ResourcePlan:
    num_electrodes: int
    platform: PlatformSpec
    decoder_lines: int
    io_per_module: int
    modules_per_fpga: int
    electrodes_per_fpga: int
    num_fpgas: int
    num_dacs: int
    num_dacs_minimal: int
    num_qubits_supported: int

    def to_json_dict(self) -> dict:
        return {
            "num_electrodes": self.num_electrodes,
            "platform": {f.name: getattr(self.platform, f.name) for f in fields(PlatformSpec)},
            "decoder_lines": self.decoder_lines,
            "io_per_module": self.io_per_module,
            "modules_per_fpga": self.modules_per_fpga,
            "electrodes_per_fpga": self.electrodes_per_fpga,
            "num_fpgas": self.num_fpgas,
            "num_dacs": self.num_dacs,
            "num_dacs_minimal": self.num_dacs_minimal,
            "num_qubits_supported": self.num_qubits_supported,
            "sync_links_use_io": False,
        }

    def to_text(self, minimal_dacs: bool = False) -> str:
        n = self.platform.multiplexing_factor
        dacs = self.num_dacs_minimal if minimal_dacs else self.num_dacs
        dac_note = "minimal" if minimal_dacs else "fully-populated FPGAs"
        lines = [
            f"electrodes            {self.num_electrodes}",
            f"multiplexing factor   {n}",
            f"decoder lines         {self.decoder_lines}",
            f"I/O per module        {self.io_per_module}",
            f"modules per FPGA      {self.modules_per_fpga}",
            f"electrodes per FPGA   {self.electrodes_per_fpga}",
            f"FPGAs                 {self.num_fpgas}",
            f"high-speed DACs       {dacs}  ({dac_note})",
            f"qubits supported      {self.num_qubits_supported}",
            "sync links             via transceivers (no I/O ports)",
        ]
        return "\n".join(lines)


def decoder_lines(multiplexing_factor: int) -> int:
    """Select lines needed to address N channels: smallest b with 2^b >= N."""
    if multiplexing_factor < 1:
        raise ValueError("multiplexing factor must be >= 1")
    return max(0, (multiplexing_factor - 1).bit_length())


def plan_resources(num_electrodes: int, platform: PlatformSpec = PlatformSpec()) -> ResourcePlan:
    """Size a control system for the given electrode count.

    ``num_dacs`` follows the fully-populated convention (every counted FPGA
    carries its full complement of modules); ``num_dacs_minimal`` is the
    bare ceil(electrodes / N) alternative.
    """
    if num_electrodes < 1:
        raise ValueError("num_electrodes must be >= 1")
    n = platform.multiplexing_factor
    dec = decoder_lines(n)
    io_per_module = platform.dac_data_lines + platform.dac_clock_lines + dec
    modules = platform.fpga_io_ports // io_per_module
    if modules < 1:
        raise InfeasiblePlatformError(
            f"a module needs {io_per_module} I/O ports but the FPGA has only "
            f"{platform.fpga_io_ports}"
        )
    per_fpga = modules * n
    num_fpgas = -(-num_electrodes // per_fpga)
    return ResourcePlan(
        num_electrodes=num_electrodes,
        platform=platform,
        decoder_lines=dec,
        io_per_module=io_per_module,
        modules_per_fpga=modules,
        electrodes_per_fpga=per_fpga,
        num_fpgas=num_fpgas,
        num_dacs=num_fpgas * modules,
        num_dacs_minimal=-(-num_electrodes // n),
        num_qubits_supported=num_electrodes // platform.electrodes_per_qubit,
    )


def sweep(parameter_name: str, values, num_electrodes: int,
          platform: PlatformSpec = PlatformSpec()) -> list[ResourcePlan]:
    """One plan per parameter value, in the given order."""
    names = {f.name for f in fields(PlatformSpec)}
    if parameter_name not in names:
        raise UnknownParameterError(
            f"{parameter_name!r} is not a platform field (expected one of {sorted(names)})"
        )
    plans = []
    for value in values:
        spec = PlatformSpec(**{**platform.__dict__, parameter_name: value})
        plans.append(plan_resources(num_electrodes, spec))
    return plans


def sweep_table(parameter_name: str, plans: list[ResourcePlan]) -> str:
    """Plot-ready aligned columns for a sweep result."""
    header = (
        f"{parameter_name:>20}  {'decoder':>7}  {'io/mod':>6}  {'mod/fpga':>8}  "
        f"{'elec/fpga':>9}  {'fpgas':>5}  {'dacs':>5}"
    )
    rows = [header]
    for p in plans:
        value = getattr(p.platform, parameter_name)
        rows.append(
            f"{value:>20}  {p.decoder_lines:>7}  {p.io_per_module:>6}  "
            f"{p.modules_per_fpga:>8}  {p.electrodes_per_fpga:>9}  "
            f"{p.num_fpgas:>5}  {p.num_dacs:>5}"
        )
    return "\n".join(rows)
