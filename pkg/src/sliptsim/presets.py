"""Bundled device presets and measured calibration targets.

Seven fabricated configurations exist: the 1 mm (S) and 1.5 mm (M) cells
with 2 and 4 segments, and the 2.08 mm (L) cell with 2, 4 and 6 segments.
Per-segment junction areas exceed (circle area)/n because interconnect
junction regions lie outside the circular active area; the illumination
model still splits the circle into equal sectors.

The same constants ship as ``data/presets.json``; loading that file must
reproduce these values byte-for-byte.
"""

from __future__ import annotations

import json
from importlib import resources

from .link import ReceiverChain, TransmitterModel
from .ofdm import OfdmConfig
from .ppc import DiodeParams, IlluminationProfile, SegmentGeometry, SegmentedDevice

__all__ = [
    "PRESET_NAMES",
    "CELL_DIAMETER_MM",
    "JUNCTION_AREA_MM2",
    "MEASURED_BANDWIDTH_HZ",
    "MEASURED_PMP_W",
    "MEASURED_IMP_ISC",
    "MEASURED_DATA_RATE_BPS",
    "MEASURED_PCE",
    "preset_geometry",
    "device_preset",
    "default_modem",
    "default_transmitter",
    "default_beam",
    "default_receiver",
    "bundled_preset_dict",
    "load_preset_file",
]

CELL_DIAMETER_MM = {"S": 1.0, "M": 1.5, "L": 2.08}

# per-segment junction area, mm^2
JUNCTION_AREA_MM2 = {
    "S2": 0.48, "S4": 0.25,
    "M2": 1.11, "M4": 0.49,
    "L2": 1.92, "L4": 0.93, "L6": 0.62,
}

PRESET_NAMES = tuple(JUNCTION_AREA_MM2)

# measured communication bandwidth (SNR > 0 dB extent), Hz
MEASURED_BANDWIDTH_HZ = {
    "S2": 0.88e9, "S4": 0.94e9,
    "M2": 0.62e9, "M4": 0.93e9,
    "L2": 0.49e9, "L4": 0.66e9, "L6": 0.96e9,
}

# measured harvested power at the maximum power point, W
MEASURED_PMP_W = {
    "S2": 0.49e-3, "S4": 0.39e-3,
    "M2": 0.89e-3, "M4": 0.59e-3,
    "L2": 0.89e-3, "L4": 0.67e-3, "L6": 0.23e-3,
}

# measured MPP-current to short-circuit-current ratio
MEASURED_IMP_ISC = {
    "S2": 0.962, "S4": 0.850,
    "M2": 0.995, "M4": 0.901,
    "L2": 0.972, "L4": 0.895, "L6": 0.661,
}

# recorded data rate at the 4.7e-3 BER threshold, bits/s
MEASURED_DATA_RATE_BPS = {
    "S2": 2.44e9, "S4": 3.29e9,
    "M2": 1.23e9, "M4": 2.56e9,
    "L2": 0.761e9, "L4": 1.59e9, "L6": 3.8e9,
}

# reported power conversion efficiency (against the 2.3 mW emitted power)
MEASURED_PCE = {
    "S2": 0.221, "S4": 0.198,
    "M2": 0.387, "M4": 0.283,
    "L2": 0.397, "L4": 0.325, "L6": 0.151,
}


def _split_name(name: str) -> tuple[str, int]:
    name = name.upper()
    if name not in JUNCTION_AREA_MM2:
        raise KeyError(
            f"unknown preset {name!r}; available: {', '.join(PRESET_NAMES)}"
        )
    return name[0], int(name[1:])


def preset_geometry(name: str) -> SegmentGeometry:
    size, n = _split_name(name)
    return SegmentGeometry(
        cell_diameter_mm=CELL_DIAMETER_MM[size],
        n_segments=n,
        junction_area_mm2=JUNCTION_AREA_MM2[name.upper()],
    )


def device_preset(name: str, diode: DiodeParams | None = None) -> SegmentedDevice:
    """Segmented device for one of the fabricated configurations."""
    return SegmentedDevice(
        geometry=preset_geometry(name),
        diode=diode if diode is not None else DiodeParams(),
        device_id=name.upper(),
    )


def default_modem() -> OfdmConfig:
    """Modem constants of the experimental system."""
    return OfdmConfig()


def default_transmitter() -> TransmitterModel:
    """VCSEL at its documented bias and drive settings."""
    return TransmitterModel()


def default_beam(
    responsivity_a_w: float = 0.42,
    beam_radius_mm: float = 0.8,
    total_power_w: float = 2.3e-3,
    center_mm: tuple[float, float] = (0.0, 0.0),
) -> IlluminationProfile:
    """Focused spot at the receiver plane; values are calibration defaults."""
    return IlluminationProfile(
        total_power_w=total_power_w,
        beam_radius_mm=beam_radius_mm,
        center_mm=center_mm,
        responsivity_a_w=responsivity_a_w,
    )


def default_receiver(
    name: str,
    diode: DiodeParams | None = None,
    beam: IlluminationProfile | None = None,
    **chain_kwargs,
) -> ReceiverChain:
    """Receiver chain around one preset with default read-out values."""
    return ReceiverChain(
        device=device_preset(name, diode),
        beam=beam if beam is not None else default_beam(),
        **chain_kwargs,
    )


def bundled_preset_dict() -> dict:
    """The documented constants as one serializable mapping."""
    return {
        "schema_version": 1,
        "cell_diameter_mm": dict(CELL_DIAMETER_MM),
        "junction_area_mm2": dict(JUNCTION_AREA_MM2),
        "measured_bandwidth_hz": dict(MEASURED_BANDWIDTH_HZ),
        "measured_pmp_w": dict(MEASURED_PMP_W),
        "measured_imp_isc": dict(MEASURED_IMP_ISC),
        "measured_data_rate_bps": dict(MEASURED_DATA_RATE_BPS),
        "measured_pce": dict(MEASURED_PCE),
        "transmitter": {
            "bias_voltage_v": 1.78,
            "bias_current_a": 6e-3,
            "drive_vpp": 1.0,
            "emitted_power_w": 2.3e-3,
            "wavelength_nm": 847.0,
        },
        "modem": {
            "fft_size": 1024,
            "data_subcarriers": 511,
            "cp_length": 5,
            "clip_sigma": 3.2,
            "max_qam_order": 1024,
        },
        "receiver": {"load_resistance_ohm": 950.0},
    }


def load_preset_file(path=None) -> dict:
    """Load a preset file (the bundled one when no path is given)."""
    if path is None:
        ref = resources.files("sliptsim").joinpath("data/presets.json")
        return json.loads(ref.read_text())
    with open(path, encoding="utf-8") as fh:
        return json.load(fh)
