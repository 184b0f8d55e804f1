"""Detector figures of merit: noise scaling, SNR, correlations, spectra,
common-mode rejection, Allan stability and the time-bandwidth product.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .extraction import QuadratureBatch

__all__ = [
    "NoiseCurve",
    "AllanCurve",
    "SpectrumEstimate",
    "DetectorReport",
    "variance_vs_power",
    "snr_and_efficiency",
    "overall_efficiency",
    "correlation_coefficient",
    "allan_deviation",
    "find_stability_interval",
    "averaged_allan",
    "noise_spectrum",
    "bandwidth_minus3db",
    "cmrr_db",
    "time_bandwidth_product",
    "write_noise_curve_csv",
    "write_allan_csv",
    "write_spectrum_csv",
    "write_cc_csv",
]


@dataclass(frozen=True)
class NoiseCurve:
    """Integrated-pulse noise variance versus LO power with its linear fit."""

    points: np.ndarray  # (n, 2) rows of (power W, area variance (V*s)^2)
    fit_slope: float
    fit_intercept: float
    r_squared: float


@dataclass(frozen=True)
class AllanCurve:
    """Allan deviation versus averaging interval.

    ``deviation_std`` is populated by :func:`averaged_allan` with the
    pointwise sample standard deviation across records.
    """

    taus: np.ndarray
    deviations: np.ndarray
    n_pairs: np.ndarray
    deviation_std: np.ndarray | None = None

    def __post_init__(self):
        taus = np.asarray(self.taus, dtype=float)
        if taus.size and np.any(np.diff(taus) <= 0):
            raise ValueError("taus must be strictly increasing")
        if np.any(np.asarray(self.deviations) < 0):
            raise ValueError("deviations must be nonnegative")
        if np.any(np.asarray(self.n_pairs) < 1):
            raise ValueError("every point needs at least one adjacent pair")


@dataclass(frozen=True)
class SpectrumEstimate:
    """One-sided averaged-periodogram power spectral density."""

    freqs: np.ndarray
    psd: np.ndarray
    resolution_hz: float


@dataclass(frozen=True)
class DetectorReport:
    """Aggregated detector figures of merit.

    ``cc`` holds ``(m, value, std)`` triples; ``tbp`` must equal
    ``bandwidth_hz * stability_interval_s``.
    """

    snr_db: float | None
    eta_en: float
    eta_pd: float
    eta_bhd: float
    bandwidth_hz: float
    cc: tuple
    cmrr_db: float
    stability_interval_s: float
    tbp: float

    def __post_init__(self):
        for name in ("eta_en", "eta_pd", "eta_bhd"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1]")
        target = self.bandwidth_hz * self.stability_interval_s
        if not np.isclose(self.tbp, target, rtol=1e-12):
            raise ValueError("tbp must equal bandwidth_hz * stability_interval_s")

    def to_json_dict(self) -> dict:
        return {
            "snr_db": self.snr_db,
            "eta_en": self.eta_en,
            "eta_pd": self.eta_pd,
            "eta_bhd": self.eta_bhd,
            "bandwidth_hz": self.bandwidth_hz,
            "cc": [{"m": int(m), "cc": v, "std": s} for m, v, s in self.cc],
            "cmrr_db": self.cmrr_db,
            "stability_interval_s": self.stability_interval_s,
            "tbp": self.tbp,
        }


def variance_vs_power(points) -> NoiseCurve:
    """Ordinary least-squares line through (LO power, area variance) points.

    The intercept estimates the LO-independent electronic-noise variance.
    """
    pts = np.asarray(points, dtype=float)
    if pts.ndim != 2 or pts.shape[1] != 2 or np.unique(pts[:, 0]).size < 3:
        raise ValueError("need variance samples at three or more distinct powers")
    slope, intercept = np.polyfit(pts[:, 0], pts[:, 1], 1)
    resid = pts[:, 1] - (slope * pts[:, 0] + intercept)
    ss_tot = np.sum((pts[:, 1] - pts[:, 1].mean()) ** 2)
    r2 = 1.0 if ss_tot == 0 else 1.0 - float(np.sum(resid**2) / ss_tot)
    return NoiseCurve(
        points=pts, fit_slope=float(slope), fit_intercept=float(intercept), r_squared=r2
    )


def snr_and_efficiency(var_total: float, var_elec: float) -> tuple[float, float]:
    """SNR in dB and the equivalent efficiency of the electronic noise.

    ``snr_db = 10 log10(var_total / var_elec)`` and
    ``eta_en = 1 - var_elec / var_total``.
    """
    if not var_total > var_elec > 0:
        raise ValueError("need var_total > var_elec > 0")
    ratio = var_total / var_elec
    return 10.0 * np.log10(ratio), 1.0 - 1.0 / ratio


def overall_efficiency(eta_en: float, eta_pd: float) -> float:
    """Overall detector efficiency, the product of its two factors."""
    for name, val in (("eta_en", eta_en), ("eta_pd", eta_pd)):
        if not 0.0 <= val <= 1.0:
            raise ValueError(f"{name} must lie in [0, 1]")
    return eta_en * eta_pd


def correlation_coefficient(batch: QuadratureBatch, m: int) -> tuple[float, float]:
    """Pearson correlation between samples ``m`` pulses apart.

    Returns ``(cc, 1/sqrt(N - m))``.  ``m = 0`` is the exact
    self-correlation, 1.
    """
    x = batch.values
    n = x.size
    if not 0 <= m < n:
        raise ValueError("lag must satisfy 0 <= m < len(batch)")
    if m == 0:
        return 1.0, 1.0 / np.sqrt(n)
    a = x[: n - m]
    b = x[m:]
    ca = a - a.mean()
    cb = b - b.mean()
    denom = np.sqrt(np.sum(ca**2) * np.sum(cb**2))
    if denom == 0:
        raise ValueError("degenerate batch: zero variance")
    cc = float(np.dot(ca, cb) / denom)
    return min(max(cc, -1.0), 1.0), 1.0 / np.sqrt(n - m)


def allan_deviation(batch: QuadratureBatch, f_rep: float, taus) -> AllanCurve:
    """Allan deviation of a uniformly sampled quadrature series.

    For each averaging interval the series is cut into consecutive blocks
    of ``floor(f_rep * tau)`` samples and the RMS difference of adjacent
    block means, scaled by ``1/sqrt(2)``, is returned.
    """
    x = batch.values
    taus = np.asarray(taus, dtype=float)
    devs = np.empty(taus.size)
    pairs = np.empty(taus.size, dtype=int)
    for i, tau in enumerate(taus):
        product = f_rep * tau
        n_block = int(np.floor(product))
        if product - n_block > 1.0 - 1e-6:  # absorb float dust just below an integer
            n_block += 1
        if n_block < 1:
            raise ValueError(f"tau {tau} is shorter than one sample")
        n_whole = x.size // n_block
        if n_whole < 2:
            raise ValueError(f"tau {tau} leaves fewer than two blocks")
        means = x[: n_whole * n_block].reshape(n_whole, n_block).mean(axis=1)
        diffs = np.diff(means)
        devs[i] = np.sqrt(0.5 * np.mean(diffs**2))
        pairs[i] = diffs.size
    return AllanCurve(taus=taus, deviations=devs, n_pairs=pairs)


def find_stability_interval(curve: AllanCurve) -> float:
    """Averaging interval at the global Allan minimum (ties go to larger tau)."""
    if curve.taus.size < 3:
        raise ValueError("need at least three Allan points")
    best = np.flatnonzero(curve.deviations == curve.deviations.min())[-1]
    return float(curve.taus[best])


def averaged_allan(curves) -> AllanCurve:
    """Pointwise mean of several Allan curves with its statistical error.

    ``deviation_std`` is the standard error of the mean at each tau
    (sample standard deviation across curves, n-1 normalized, divided by
    sqrt of the number of curves).
    """
    curves = list(curves)
    if not curves:
        raise ValueError("need at least one curve")
    taus = curves[0].taus
    for c in curves[1:]:
        if c.taus.shape != taus.shape or np.any(c.taus != taus):
            raise ValueError("curves must share an identical tau grid")
    devs = np.stack([c.deviations for c in curves])
    if len(curves) > 1:
        std = devs.std(axis=0, ddof=1) / np.sqrt(len(curves))
    else:
        std = np.zeros(taus.size)
    return AllanCurve(
        taus=taus,
        deviations=devs.mean(axis=0),
        n_pairs=np.sum([c.n_pairs for c in curves], axis=0),
        deviation_std=std,
    )


def noise_spectrum(trace, segment_len: int) -> SpectrumEstimate:
    """One-sided PSD averaged over non-overlapping rectangular segments.

    Normalized so the integral of the PSD over frequency matches the
    time-domain variance (the trace mean is removed first).
    """
    n = len(trace.samples)
    if segment_len < 2 or segment_len & (segment_len - 1):
        raise ValueError("segment_len must be a power of two")
    if segment_len > n:
        raise ValueError("trace is shorter than one segment")
    fs = trace.sample_rate
    n_seg = n // segment_len
    x = np.asarray(trace.samples, dtype=float)
    x = x[: n_seg * segment_len] - x.mean()
    segs = x.reshape(n_seg, segment_len)
    spec = np.fft.rfft(segs, axis=1)
    psd = np.mean(np.abs(spec) ** 2, axis=0) / (fs * segment_len)
    psd[1:-1] *= 2.0  # fold negative frequencies; DC and Nyquist stay single
    freqs = np.fft.rfftfreq(segment_len, 1.0 / fs)
    return SpectrumEstimate(freqs=freqs, psd=psd, resolution_hz=fs / segment_len)


def _require_common_grid(a: SpectrumEstimate, b: SpectrumEstimate):
    if a.freqs.shape != b.freqs.shape or np.any(a.freqs != b.freqs):
        raise ValueError("spectra must share a common frequency grid")


def bandwidth_minus3db(shot: SpectrumEstimate, elec: SpectrumEstimate) -> float:
    """Frequency where the electronic-noise-subtracted shot PSD drops 3 dB.

    The reference plateau is the mean over the lowest decade of bins above
    DC; the crossing is linearly interpolated between bins.
    """
    _require_common_grid(shot, elec)
    sub = shot.psd - elec.psd
    f = shot.freqs
    f1 = f[1]
    plateau_idx = np.flatnonzero((f > 0) & (f <= 10.0 * f1))
    plateau = float(np.mean(sub[plateau_idx]))
    threshold = plateau * 10 ** (-0.3)
    below = np.flatnonzero(sub[1:] < threshold) + 1
    if below.size == 0 or below[0] == 1:
        raise ValueError("no -3 dB crossing found within the grid")
    k = below[0]
    frac = (threshold - sub[k - 1]) / (sub[k] - sub[k - 1])
    return float(f[k - 1] + frac * (f[k] - f[k - 1]))


def cmrr_db(balanced: SpectrumEstimate, blocked: SpectrumEstimate, f_rep: float) -> float:
    """Common-mode rejection: blocked/balanced PSD ratio at the repetition rate."""
    _require_common_grid(balanced, blocked)
    if not balanced.freqs[0] <= f_rep <= balanced.freqs[-1]:
        raise ValueError("repetition rate lies outside the spectrum grid")
    k = int(np.argmin(np.abs(balanced.freqs - f_rep)))
    return float(10.0 * np.log10(blocked.psd[k] / balanced.psd[k]))


def time_bandwidth_product(bandwidth_hz: float, stability_interval_s: float) -> float:
    """Number of resolvable samples per calibration interval, ``df * dt``."""
    if bandwidth_hz <= 0 or stability_interval_s <= 0:
        raise ValueError("bandwidth and stability interval must be positive")
    return bandwidth_hz * stability_interval_s


def _write_rows(path, header: str, columns) -> None:
    with open(path, "w", newline="\n") as fh:
        fh.write(header + "\n")
        for row in zip(*columns):
            fh.write(",".join(repr(float(v)) for v in row) + "\n")


def write_noise_curve_csv(curve: NoiseCurve, path) -> None:
    _write_rows(path, "power_w,variance", (curve.points[:, 0], curve.points[:, 1]))


def write_allan_csv(curve: AllanCurve, path) -> None:
    _write_rows(path, "tau_s,allan_dev", (curve.taus, curve.deviations))


def write_spectrum_csv(spectrum: SpectrumEstimate, path) -> None:
    _write_rows(path, "freq_hz,psd", (spectrum.freqs, spectrum.psd))


def write_cc_csv(cc_rows, path) -> None:
    with open(path, "w", newline="\n") as fh:
        fh.write("m,cc,std\n")
        for m, v, s in cc_rows:
            fh.write(f"{int(m)},{repr(float(v))},{repr(float(s))}\n")


def report_to_json(report: DetectorReport) -> str:
    return json.dumps(report.to_json_dict(), indent=2) + "\n"
