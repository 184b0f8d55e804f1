"""Time-domain simulation of a pulsed balanced photodetector.

Each laser pulse deposits a voltage pulse whose integrated area encodes one
quadrature sample, scaled by ``sqrt(2) * eta * e * G * |alpha_LO|``.  On top
of the quantum signal the model adds white electronic noise (calibrated by
its per-pulse integrated-area variance), a slowly drifting baseline, and a
deterministic common-mode leakage line at the repetition rate whose size is
set by the configured common-mode rejection ratio.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass, field, replace

import numpy as np

from .states import StateModel
from . import tomography

__all__ = [
    "DriftModel",
    "DetectorConfig",
    "TraceBuffer",
    "GroundTruth",
    "photons_per_pulse",
    "area_scale",
    "generate_trace",
    "single_diode_trace",
    "electronic_only_trace",
    "write_trace_csv",
    "write_trace_binary",
    "read_trace_binary",
]

ELEMENTARY_CHARGE = 1.602176634e-19
PLANCK = 6.62607015e-34
SPEED_OF_LIGHT = 2.99792458e8

TRACE_MAGIC = b"PQTRACE1"

DEFAULT_SNR_DB = 14.5

PULSE_SHAPES = ("rectangular", "gaussian", "half_cosine")


@dataclass(frozen=True)
class DriftModel:
    """Baseline drift: a linear ramp plus an optional per-pulse random walk.

    Both parameters are expressed in quadrature units (the ramp per second,
    the walk increment per pulse).
    """

    linear_rate: float = 3.95e-5
    random_walk_sigma: float = 0.0

    def __post_init__(self):
        if self.random_walk_sigma < 0:
            raise ValueError("random_walk_sigma must be nonnegative")


@dataclass(frozen=True)
class DetectorConfig:
    """Physical and electronic parameters of the simulated detector."""

    f_rep: float = 80e6
    wavelength: float = 830e-9
    p_lo: float = 5e-3
    eta_pd: float = 0.90
    gain: float = 36e3
    fwhm_pulse: float = 5.5e-9
    sample_rate: float = 2e9
    elec_noise_area_var: float | None = None
    cmrr_db: float = 63.0
    pulse_shape: str = "rectangular"
    drift: DriftModel = field(default_factory=DriftModel)
    elementary_charge: float = ELEMENTARY_CHARGE
    planck: float = PLANCK
    c: float = SPEED_OF_LIGHT

    def __post_init__(self):
        for name in ("f_rep", "wavelength", "p_lo", "gain", "fwhm_pulse", "sample_rate"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be strictly positive")
        if not 0.0 <= self.eta_pd <= 1.0:
            raise ValueError("eta_pd must lie in [0, 1]")
        if self.pulse_shape not in PULSE_SHAPES:
            raise ValueError(f"pulse_shape must be one of {PULSE_SHAPES}")
        ratio = self.sample_rate / self.f_rep
        if abs(ratio - round(ratio)) > 1e-9 or round(ratio) < 8:
            raise ValueError("sample_rate must be an integer multiple (>= 8) of f_rep")
        if self.elec_noise_area_var is None:
            # default sets the integrated-pulse SNR at the configured LO power
            var = 0.5 * area_scale(self) ** 2 * 10 ** (-DEFAULT_SNR_DB / 10)
            object.__setattr__(self, "elec_noise_area_var", var)
        elif self.elec_noise_area_var < 0:
            raise ValueError("elec_noise_area_var must be nonnegative")

    @property
    def samples_per_period(self) -> int:
        return int(round(self.sample_rate / self.f_rep))

    def with_power(self, p_lo: float) -> "DetectorConfig":
        """Copy with a different LO power, electronic noise held fixed."""
        return replace(self, p_lo=p_lo)


@dataclass(frozen=True)
class TraceBuffer:
    """Uniformly sampled detector output voltage record."""

    sample_rate: float
    t0: float
    samples: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.samples, dtype=float)
        if not np.all(np.isfinite(arr)):
            raise ValueError("trace contains non-finite samples")
        arr.setflags(write=False)
        object.__setattr__(self, "samples", arr)

    def times(self) -> np.ndarray:
        return self.t0 + np.arange(self.samples.size) / self.sample_rate


@dataclass(frozen=True)
class GroundTruth:
    """Per-pulse truth behind a simulated trace: quadratures and residual areas."""

    quadratures: np.ndarray
    baseline_areas: np.ndarray


def photons_per_pulse(
    p_lo: float,
    wavelength: float,
    f_rep: float,
    planck: float = PLANCK,
    c: float = SPEED_OF_LIGHT,
) -> float:
    """Mean LO photon number per pulse, ``(P/f_rep) / (h c / lambda)``."""
    if p_lo <= 0 or wavelength <= 0 or f_rep <= 0:
        raise ValueError("power, wavelength and repetition rate must be positive")
    return (p_lo / f_rep) / (planck * c / wavelength)


def area_scale(config: DetectorConfig) -> float:
    """Pulse area per quadrature unit: ``sqrt(2) eta e G sqrt(N_LO)`` in V*s."""
    n_lo = photons_per_pulse(
        config.p_lo, config.wavelength, config.f_rep, config.planck, config.c
    )
    return (
        math.sqrt(2.0)
        * config.eta_pd
        * config.elementary_charge
        * config.gain
        * math.sqrt(n_lo)
    )


def leakage_area(config: DetectorConfig) -> float:
    """Constant per-pulse area of the unsubtracted common-mode component.

    Sized so that the repetition-rate spectral line sits ``cmrr_db`` below
    the corresponding line of a blocked-diode trace.
    """
    return single_diode_pulse_area(config) * 10 ** (-config.cmrr_db / 20.0)


def single_diode_pulse_area(config: DetectorConfig) -> float:
    """Area of one photocurrent pulse with only one diode illuminated."""
    n_lo = photons_per_pulse(
        config.p_lo, config.wavelength, config.f_rep, config.planck, config.c
    )
    return config.eta_pd * config.elementary_charge * config.gain * (n_lo / 2.0)


def _noise_sigma(config: DetectorConfig) -> float:
    # per-sample std making the window trapezoid variance equal the target
    n_w = config.samples_per_period
    dt = 1.0 / config.sample_rate
    return math.sqrt(config.elec_noise_area_var / (dt * dt * (n_w - 1.5)))


def _pulse_shape(config: DetectorConfig) -> np.ndarray:
    """Unit-area pulse samples over one period window, peak at index spp//2.

    Normalized so the trapezoidal integral over the window is exactly one;
    any tail of the analytic shape beyond the window is folded into the
    normalization.
    """
    n_w = config.samples_per_period
    dt = 1.0 / config.sample_rate
    offs = (np.arange(n_w) - n_w // 2) * dt
    if config.pulse_shape == "gaussian":
        sigma = config.fwhm_pulse / (2.0 * math.sqrt(2.0 * math.log(2.0)))
        v = np.exp(-0.5 * (offs / sigma) ** 2)
    elif config.pulse_shape == "rectangular":
        v = (np.abs(offs) <= config.fwhm_pulse / 2.0 + 1e-15).astype(float)
    else:  # half_cosine: support 1.5x FWHM
        width = 1.5 * config.fwhm_pulse
        v = np.where(
            np.abs(offs) <= width / 2.0, np.cos(np.pi * offs / width), 0.0
        )
    norm = np.trapezoid(v, dx=dt)
    if norm <= 0:
        raise ValueError("pulse shape has nonpositive area on the sample grid")
    return v / norm


def _seeded_rng(seed: int, stream: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence([seed, stream])))


def _assemble_trace(config: DetectorConfig, areas: np.ndarray, seed: int) -> TraceBuffer:
    n_pulses = areas.size
    spp = config.samples_per_period
    dt = 1.0 / config.sample_rate
    shape = _pulse_shape(config)
    samples = (areas[:, None] * shape[None, :]).reshape(n_pulses * spp)
    if config.elec_noise_area_var > 0:
        rng = _seeded_rng(seed, 2)
        samples = samples + rng.normal(0.0, _noise_sigma(config), samples.size)
    return TraceBuffer(sample_rate=config.sample_rate, t0=-(spp // 2) * dt, samples=samples)


def generate_trace(
    config: DetectorConfig,
    state: StateModel,
    phases,
    n_pulses: int,
    seed: int,
    cutoff: int = 10,
) -> tuple[TraceBuffer, GroundTruth]:
    """Simulate a balanced-output voltage trace for ``n_pulses`` pulses.

    Pulse k is centred at ``t_k = k / f_rep``; the trace starts half a
    period earlier so every pulse window is complete.  Identical arguments
    produce bit-identical traces.
    """
    if n_pulses < 1:
        raise ValueError("n_pulses must be at least 1")
    phases = np.atleast_1d(np.asarray(phases, dtype=float))
    if phases.size not in (1, n_pulses):
        raise ValueError("phase schedule must have length 1 or n_pulses")

    batch = tomography.sample_quadratures(
        state, phases, n_pulses, _child_seed(seed, 0), cutoff=cutoff
    )
    x = batch.values

    t_k = np.arange(n_pulses) / config.f_rep
    baseline = config.drift.linear_rate * t_k
    if config.drift.random_walk_sigma > 0:
        rng_walk = _seeded_rng(seed, 1)
        baseline = baseline + np.cumsum(
            rng_walk.normal(0.0, config.drift.random_walk_sigma, n_pulses)
        )

    scale = area_scale(config)
    leak = leakage_area(config)
    areas = scale * (x + baseline) + leak
    trace = _assemble_trace(config, areas, seed)
    truth = GroundTruth(quadratures=x, baseline_areas=scale * baseline + leak)
    return trace, truth


def single_diode_trace(config: DetectorConfig, n_pulses: int, seed: int) -> TraceBuffer:
    """Unsubtracted single-diode trace: equal pulses carrying half the LO power."""
    if n_pulses < 1:
        raise ValueError("n_pulses must be at least 1")
    areas = np.full(n_pulses, single_diode_pulse_area(config))
    return _assemble_trace(config, areas, seed)


def electronic_only_trace(config: DetectorConfig, n_pulses: int, seed: int) -> TraceBuffer:
    """Dark trace spanning ``n_pulses`` periods: electronic noise only."""
    if n_pulses < 1:
        raise ValueError("n_pulses must be at least 1")
    return _assemble_trace(config, np.zeros(n_pulses), seed)


def _child_seed(seed: int, stream: int) -> int:
    return int(np.random.SeedSequence([seed, stream]).generate_state(1)[0])


def write_trace_csv(trace: TraceBuffer, path) -> None:
    """Write ``time_s,voltage_v`` rows, one per sample."""
    times = trace.times()
    with open(path, "w", newline="\n") as fh:
        fh.write("time_s,voltage_v\n")
        for t, v in zip(times, trace.samples):
            fh.write(f"{repr(float(t))},{repr(float(v))}\n")


def write_trace_binary(trace: TraceBuffer, path) -> None:
    """Raw little-endian export: 24-byte header then float64 samples.

    Header layout: magic ``PQTRACE1``, sample rate as float64, sample count
    as uint64.
    """
    samples = np.ascontiguousarray(trace.samples, dtype="<f8")
    header = TRACE_MAGIC + struct.pack("<d", trace.sample_rate) + struct.pack(
        "<Q", samples.size
    )
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(samples.tobytes())


def read_trace_binary(path) -> TraceBuffer:
    """Read a trace written by :func:`write_trace_binary` (t0 defaults to 0)."""
    with open(path, "rb") as fh:
        header = fh.read(24)
        if len(header) != 24 or header[:8] != TRACE_MAGIC:
            raise ValueError("not a trace binary file")
        (rate,) = struct.unpack("<d", header[8:16])
        (count,) = struct.unpack("<Q", header[16:24])
        data = np.frombuffer(fh.read(count * 8), dtype="<f8")
        if data.size != count:
            raise ValueError("trace binary file is truncated")
    return TraceBuffer(sample_rate=rate, t0=0.0, samples=data)
