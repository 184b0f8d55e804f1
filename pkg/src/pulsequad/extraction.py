"""Pulse segmentation, area integration and vacuum calibration.

Raw detector traces are reduced to one area per pulse window, and vacuum
statistics (zero mean, variance 1/2) fix the affine map from areas to
dimensionless quadratures.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "CalibrationScale",
    "QuadratureBatch",
    "segment_pulses",
    "integrate_pulse",
    "pulse_areas",
    "calibrate_vacuum",
    "apply_calibration",
    "write_batch_csv",
]

VACUUM_VARIANCE = 0.5


@dataclass(frozen=True)
class CalibrationScale:
    """Affine calibration mapping pulse areas to quadratures.

    ``scale`` estimates the area produced by one quadrature unit and
    ``offset`` the residual baseline area common to every pulse.
    """

    scale: float
    offset: float
    n_cal: int
    created_at: float = 0.0

    def __post_init__(self):
        if not self.scale > 0:
            raise ValueError("calibration scale must be positive")
        if self.n_cal < 2:
            raise ValueError("calibration needs at least two pulses")


@dataclass(frozen=True)
class QuadratureBatch:
    """Calibrated quadrature samples with optional phases and timestamps."""

    values: np.ndarray
    phases: np.ndarray | None = None
    timestamps: np.ndarray | None = None

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=float)
        if not np.all(np.isfinite(vals)):
            raise ValueError("quadrature values must be finite")
        object.__setattr__(self, "values", vals)
        for name in ("phases", "timestamps"):
            arr = getattr(self, name)
            if arr is None:
                continue
            arr = np.asarray(arr, dtype=float)
            if arr.shape != vals.shape:
                raise ValueError(f"{name} length does not match values")
            if not np.all(np.isfinite(arr)):
                raise ValueError(f"{name} must be finite")
            object.__setattr__(self, name, arr)

    def __len__(self) -> int:
        return self.values.size


def segment_pulses(trace, f_rep: float, t_first: float, tau_p: float) -> np.ndarray:
    """Per-pulse sample windows of duration ``tau_p`` centred on pulse peaks.

    Pulse k peaks at ``t_first + k / f_rep``.  Returns an integer array of
    shape (n_windows, 2) holding half-open ``[start, stop)`` sample ranges;
    windows that would stick out of the trace are dropped.
    """
    if tau_p <= 0 or f_rep <= 0:
        raise ValueError("f_rep and tau_p must be positive")
    period = 1.0 / f_rep
    if tau_p > period * (1 + 1e-12):
        raise ValueError("window duration exceeds the pulse period")
    fs = trace.sample_rate
    n_w = int(round(tau_p * fs))
    if n_w < 2:
        raise ValueError("window must span at least two samples")
    n = len(trace.samples)
    spp = fs * period
    c0 = (t_first - trace.t0) * fs
    k_lo = int(np.floor(-c0 / spp)) - 1
    k_hi = int(np.ceil((n - c0) / spp)) + 1
    k = np.arange(k_lo, k_hi)
    centers = np.round(c0 + k * spp).astype(np.int64)
    starts = centers - n_w // 2
    ok = (starts >= 0) & (starts + n_w <= n)
    starts = starts[ok]
    return np.stack([starts, starts + n_w], axis=1)


def integrate_pulse(window, sample_rate: float) -> float:
    """Trapezoidal integral of one voltage window, in V*s."""
    w = np.asarray(window, dtype=float)
    if w.size < 2:
        raise ValueError("window must contain at least two samples")
    return float(np.trapezoid(w, dx=1.0 / sample_rate))


def pulse_areas(trace, windows: np.ndarray) -> np.ndarray:
    """Trapezoidal areas of every window of a trace (equal window lengths)."""
    windows = np.asarray(windows, dtype=np.int64)
    if windows.size == 0:
        return np.zeros(0)
    n_w = int(windows[0, 1] - windows[0, 0])
    if np.any(windows[:, 1] - windows[:, 0] != n_w):
        raise ValueError("windows must share a common length")
    dt = 1.0 / trace.sample_rate
    weights = np.full(n_w, dt)
    weights[0] = weights[-1] = 0.5 * dt
    idx = windows[:, 0][:, None] + np.arange(n_w)[None, :]
    return np.asarray(trace.samples)[idx] @ weights


def calibrate_vacuum(areas, created_at: float = 0.0) -> CalibrationScale:
    """Fix scale and offset from vacuum pulse areas via sample moments.

    The offset is the sample mean; the scale maps the sample variance to
    the vacuum quadrature variance 1/2.
    """
    a = np.asarray(areas, dtype=float)
    if a.size < 2:
        raise ValueError("calibration needs at least two pulse areas")
    var = float(np.var(a, ddof=1))
    mean = float(np.mean(a))
    if var <= (1e-9 * abs(mean)) ** 2:
        raise ValueError("vacuum areas have zero variance; cannot calibrate")
    return CalibrationScale(
        scale=float(np.sqrt(var / VACUUM_VARIANCE)),
        offset=mean,
        n_cal=int(a.size),
        created_at=created_at,
    )


def apply_calibration(
    areas, cal: CalibrationScale, phases=None, timestamps=None
) -> QuadratureBatch:
    """Convert pulse areas to dimensionless quadratures, ``(a - offset)/scale``."""
    a = np.asarray(areas, dtype=float)
    return QuadratureBatch(
        values=(a - cal.offset) / cal.scale, phases=phases, timestamps=timestamps
    )


def write_batch_csv(batch: QuadratureBatch, path) -> None:
    """Write a batch as ``timestamp_s,phase_rad,quadrature`` rows."""
    with open(path, "w", newline="\n") as fh:
        fh.write("timestamp_s,phase_rad,quadrature\n")
        n = len(batch)
        ts = batch.timestamps
        ph = batch.phases
        for i in range(n):
            t = repr(float(ts[i])) if ts is not None else ""
            p = repr(float(ph[i])) if ph is not None else ""
            fh.write(f"{t},{p},{repr(float(batch.values[i]))}\n")
