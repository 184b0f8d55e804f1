"""Config-driven command line front end.

``pulsequad <characterize|tomography|trace-export> --config FILE`` runs a
full experiment from a single JSON document and writes plot-ready CSV/JSON
artifacts.  Runs are byte-reproducible for a fixed config and seed; every
output file is written atomically (temp file + rename).

Exit codes: 0 success, 2 configuration error, 3 runtime failure.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
from dataclasses import dataclass, field, replace

import numpy as np

from . import __version__
from .characterization import (
    DetectorReport,
    allan_deviation,
    averaged_allan,
    bandwidth_minus3db,
    cmrr_db,
    correlation_coefficient,
    find_stability_interval,
    noise_spectrum,
    overall_efficiency,
    report_to_json,
    snr_and_efficiency,
    time_bandwidth_product,
    variance_vs_power,
    write_allan_csv,
    write_cc_csv,
    write_noise_curve_csv,
    write_spectrum_csv,
)
from .detector import (
    DetectorConfig,
    DriftModel,
    electronic_only_trace,
    generate_trace,
    single_diode_trace,
    write_trace_binary,
    write_trace_csv,
)
from .extraction import (
    QuadratureBatch,
    apply_calibration,
    calibrate_vacuum,
    pulse_areas,
    segment_pulses,
    write_batch_csv,
)
from .states import (
    StateModel,
    coherent_amplitudes,
    fidelity_pure,
    photon_statistics,
    wigner,
)
from .tomography import (
    mle_reconstruct,
    sample_quadratures,
    write_density_matrix_csv,
    write_photon_statistics_csv,
    write_wigner_csv,
)

__all__ = [
    "ConfigError",
    "ExperimentConfig",
    "PhaseSchedule",
    "TomographyOptions",
    "load_config",
    "run_characterize",
    "run_tomography",
    "run_trace_export",
    "main",
]

RUN_KINDS = ("characterize", "tomography", "trace-export")

DEFAULT_N_PULSES = {"characterize": 40_000, "tomography": 10_000, "trace-export": 100}

# characterization protocol constants
POWER_FRACTIONS = (0.2, 0.4, 0.6, 0.8, 1.0)
CC_RECORDS = 20
CC_PULSES = 2000
CC_MAX_LAG = 9
ALLAN_RECORDS = 10
ALLAN_DURATION_S = 80.0
ALLAN_BLOCK_S = 1e-3
SEGMENT_LEN_BAND = 2**10
SEGMENT_LEN_LINE = 2**15
SPECTRUM_PULSES = 20_972  # 16 full 2**15-sample segments at 25 samples per pulse

WIGNER_HALFSPAN = 5.0
WIGNER_POINTS = 101


class ConfigError(ValueError):
    """Invalid or unusable experiment configuration."""


@dataclass(frozen=True)
class TomographyOptions:
    cutoff: int = 10
    bin_width: float = 0.1
    tol: float = 1e-9
    max_iter: int = 2000
    eta: float = 1.0

    def __post_init__(self):
        if self.cutoff < 2:
            raise ConfigError("tomography cutoff must be at least 2")
        if self.bin_width <= 0 or self.tol <= 0 or self.max_iter < 1:
            raise ConfigError("bin_width, tol and max_iter must be positive")
        if not 0.0 < self.eta <= 1.0:
            raise ConfigError("tomography eta must lie in (0, 1]")


@dataclass(frozen=True)
class PhaseSchedule:
    """LO phase per pulse: a constant, an explicit list, a stepped sweep
    covering ``[start, start + span)``, or uniform random phases."""

    kind: str = "constant"
    value: float = 0.0
    values: tuple = ()
    count: int = 7
    start: float = 0.0
    span: float = math.pi

    def __post_init__(self):
        if self.kind not in ("constant", "list", "sweep", "random"):
            raise ConfigError(f"unknown phase schedule kind {self.kind!r}")
        if self.kind == "list" and not self.values:
            raise ConfigError("phase list must not be empty")
        if self.kind == "sweep" and self.count < 1:
            raise ConfigError("sweep count must be at least 1")

    def realize(self, n: int, rng: np.random.Generator) -> np.ndarray:
        if self.kind == "constant":
            return np.full(n, self.value)
        if self.kind == "random":
            return rng.uniform(0.0, 2.0 * math.pi, n)
        if self.kind == "sweep":
            vals = self.start + self.span * np.arange(self.count) / self.count
        else:
            vals = np.asarray(self.values, dtype=float)
        if vals.size == n:
            return vals.copy()
        # contiguous blocks per phase setting, remainder spread over the first ones
        counts = np.full(vals.size, n // vals.size)
        counts[: n % vals.size] += 1
        if counts.min() < 1:
            raise ConfigError("more phase settings than pulses")
        return np.repeat(vals, counts)


@dataclass(frozen=True)
class ExperimentConfig:
    run: str
    detector: DetectorConfig = field(default_factory=DetectorConfig)
    state: StateModel = field(default_factory=StateModel.vacuum)
    phases: PhaseSchedule = field(default_factory=PhaseSchedule)
    n_pulses: int = 0
    seed: int = 0
    out_dir: str = "."
    tomography: TomographyOptions = field(default_factory=TomographyOptions)

    def __post_init__(self):
        if self.run not in RUN_KINDS:
            raise ConfigError(f"run must be one of {RUN_KINDS}")
        if self.n_pulses < 1:
            raise ConfigError("n_pulses must be at least 1")


def _check_keys(section: dict, allowed: set, where: str) -> None:
    unknown = set(section) - allowed
    if unknown:
        raise ConfigError(f"unknown key(s) in {where}: {', '.join(sorted(unknown))}")


def _parse_detector(section: dict) -> DetectorConfig:
    _check_keys(
        section,
        {
            "f_rep",
            "wavelength",
            "p_lo",
            "eta_pd",
            "gain",
            "fwhm_pulse",
            "sample_rate",
            "elec_noise_area_var",
            "cmrr_db",
            "pulse_shape",
            "drift",
        },
        "detector",
    )
    kwargs = dict(section)
    drift = kwargs.pop("drift", None)
    if drift is not None:
        _check_keys(drift, {"linear_rate", "random_walk_sigma"}, "detector.drift")
        kwargs["drift"] = DriftModel(**drift)
    try:
        return DetectorConfig(**kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid detector config: {exc}") from exc


def _parse_state(section: dict, where: str = "state") -> StateModel:
    _check_keys(section, {"kind", "alpha", "n", "weights", "components", "efficiency"}, where)
    kind = section.get("kind", "vacuum")
    eff = float(section.get("efficiency", 1.0))
    try:
        if kind == "vacuum":
            return StateModel.vacuum(efficiency=eff)
        if kind == "coherent":
            alpha = section.get("alpha", 0.0)
            if isinstance(alpha, (list, tuple)):
                alpha = complex(alpha[0], alpha[1])
            return StateModel.coherent(alpha, efficiency=eff)
        if kind == "fock":
            return StateModel.fock(int(section.get("n", 0)), efficiency=eff)
        if kind == "mixture":
            comps = tuple(
                _parse_state(c, f"{where}.components[{i}]")
                for i, c in enumerate(section.get("components", ()))
            )
            return StateModel.mixture(section.get("weights", ()), comps, efficiency=eff)
    except (TypeError, ValueError, IndexError) as exc:
        raise ConfigError(f"invalid {where}: {exc}") from exc
    raise ConfigError(f"unknown state kind {kind!r}")


def _parse_phases(section: dict) -> PhaseSchedule:
    _check_keys(section, {"kind", "value", "values", "count", "start", "span"}, "phases")
    kwargs = dict(section)
    if "values" in kwargs:
        kwargs["values"] = tuple(float(v) for v in kwargs["values"])
    try:
        return PhaseSchedule(**kwargs)
    except TypeError as exc:
        raise ConfigError(f"invalid phases config: {exc}") from exc


def load_config(
    path,
    run: str | None = None,
    seed_override: int | None = None,
    out_override: str | None = None,
) -> ExperimentConfig:
    """Parse and validate a JSON experiment config; unknown keys are errors."""
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config file: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from exc
    if not isinstance(doc, dict):
        raise ConfigError("config must be a JSON object")
    _check_keys(
        doc,
        {"run", "seed", "out_dir", "n_pulses", "detector", "state", "phases", "tomography"},
        "config",
    )
    cfg_run = doc.get("run", run)
    if cfg_run is None:
        raise ConfigError("config has no 'run' and no subcommand was given")
    if run is not None and cfg_run != run:
        raise ConfigError(f"config run {cfg_run!r} does not match subcommand {run!r}")
    seed = seed_override if seed_override is not None else int(doc.get("seed", 0))
    out_dir = out_override if out_override is not None else doc.get("out_dir", ".")
    n_pulses = int(doc.get("n_pulses", DEFAULT_N_PULSES.get(cfg_run, 100)))
    try:
        tomo = TomographyOptions(**doc.get("tomography", {}))
    except TypeError as exc:
        raise ConfigError(f"invalid tomography options: {exc}") from exc
    _check_keys(
        doc.get("tomography", {}),
        {"cutoff", "bin_width", "tol", "max_iter", "eta"},
        "tomography",
    )
    return ExperimentConfig(
        run=cfg_run,
        detector=_parse_detector(doc.get("detector", {})),
        state=_parse_state(doc.get("state", {"kind": "vacuum"})),
        phases=_parse_phases(doc.get("phases", {"kind": "constant"})),
        n_pulses=n_pulses,
        seed=seed,
        out_dir=str(out_dir),
        tomography=tomo,
    )


def _child_seed(seed: int, stream: int) -> int:
    return int(np.random.SeedSequence([seed, stream]).generate_state(1)[0])


def _rng(seed: int, stream: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence([seed, stream])))


def _atomic(path, write_fn) -> None:
    tmp = f"{path}.tmp"
    write_fn(tmp)
    os.replace(tmp, path)


def _atomic_text(path, text: str) -> None:
    def write(p):
        with open(p, "w", newline="\n") as fh:
            fh.write(text)

    _atomic(path, write)


def _prepare_out_dir(config: ExperimentConfig) -> str:
    out = config.out_dir
    try:
        os.makedirs(out, exist_ok=True)
        probe = os.path.join(out, ".write-probe")
        with open(probe, "w") as fh:
            fh.write("")
        os.remove(probe)
    except OSError as exc:
        raise ConfigError(f"output directory is not writable: {exc}") from exc
    return out


def _record_areas(trace, f_rep: float) -> np.ndarray:
    windows = segment_pulses(trace, f_rep, 0.0, 1.0 / f_rep)
    return pulse_areas(trace, windows)


def _thinned_vacuum_blocks(det: DetectorConfig, seed: int) -> QuadratureBatch:
    """Block means of a long vacuum record, drawn from the exact Gaussian
    law of block averages instead of synthesizing every pulse.

    A random-walk drift component is approximated by its value at block
    centres; the linear ramp and shot-noise statistics are exact.
    """
    n_per_block = int(round(det.f_rep * ALLAN_BLOCK_S))
    n_blocks = int(round(ALLAN_DURATION_S / ALLAN_BLOCK_S))
    rng = _rng(seed, 0)
    centers = (np.arange(n_blocks) * n_per_block + (n_per_block - 1) / 2.0) / det.f_rep
    means = det.drift.linear_rate * centers + rng.normal(
        0.0, math.sqrt(0.5 / n_per_block), n_blocks
    )
    if det.drift.random_walk_sigma > 0:
        step = det.drift.random_walk_sigma * math.sqrt(n_per_block)
        means = means + np.cumsum(rng.normal(0.0, step, n_blocks))
    return QuadratureBatch(values=means)


def _allan_tau_grid() -> np.ndarray:
    max_m = int(ALLAN_DURATION_S / ALLAN_BLOCK_S) // 2
    exps = np.arange(0.0, math.log10(max_m) + 1e-9, 0.05)  # 20 points per decade
    m = np.unique(np.round(10.0**exps).astype(int))
    m = m[(m >= 1) & (m <= max_m)]
    return m * ALLAN_BLOCK_S


def run_characterize(config: ExperimentConfig) -> DetectorReport:
    """Full characterization battery; writes report.json and curve CSVs."""
    out = _prepare_out_dir(config)
    det = config.detector
    seed = config.seed
    vacuum = StateModel.vacuum()

    points = []
    for i, frac in enumerate(POWER_FRACTIONS):
        cfg_i = det.with_power(det.p_lo * frac)
        trace, _ = generate_trace(
            cfg_i, vacuum, [0.0], config.n_pulses, _child_seed(seed, i)
        )
        areas = _record_areas(trace, det.f_rep)
        points.append((cfg_i.p_lo, float(np.var(areas, ddof=1))))
    curve = variance_vs_power(points)

    elec_trace = electronic_only_trace(det, config.n_pulses, _child_seed(seed, 10))
    var_elec = float(np.var(_record_areas(elec_trace, det.f_rep), ddof=1))
    var_total = points[-1][1]
    if var_elec > 0.0:
        snr_db, eta_en = snr_and_efficiency(var_total, var_elec)
    else:
        snr_db, eta_en = None, 1.0  # noiseless electronics
    eta_bhd = overall_efficiency(eta_en, det.eta_pd)

    # bandwidth is read off the smooth shot-noise rolloff: measure it on a
    # leakage-free vacuum trace so the repetition-rate spur cannot lift the
    # -3 dB crossing
    det_clean = replace(det, cmrr_db=math.inf)
    shot_trace, _ = generate_trace(
        det_clean, vacuum, [0.0], SPECTRUM_PULSES, _child_seed(seed, 20)
    )
    elec_long = electronic_only_trace(det, SPECTRUM_PULSES, _child_seed(seed, 21))
    blocked = single_diode_trace(det, SPECTRUM_PULSES, _child_seed(seed, 22))
    balanced, _ = generate_trace(det, vacuum, [0.0], SPECTRUM_PULSES, _child_seed(seed, 23))
    shot_band = noise_spectrum(shot_trace, SEGMENT_LEN_BAND)
    elec_band = noise_spectrum(elec_long, SEGMENT_LEN_BAND)
    bandwidth = bandwidth_minus3db(shot_band, elec_band)
    balanced_line = noise_spectrum(balanced, SEGMENT_LEN_LINE)
    blocked_line = noise_spectrum(blocked, SEGMENT_LEN_LINE)
    rejection = cmrr_db(balanced_line, blocked_line, det.f_rep)

    cc_values = np.empty((CC_RECORDS, CC_MAX_LAG + 1))
    for r in range(CC_RECORDS):
        trace, _ = generate_trace(det, vacuum, [0.0], CC_PULSES, _child_seed(seed, 30 + r))
        areas = _record_areas(trace, det.f_rep)
        batch = apply_calibration(areas, calibrate_vacuum(areas, created_at=trace.t0))
        for m in range(CC_MAX_LAG + 1):
            cc_values[r, m] = correlation_coefficient(batch, m)[0]
    cc_rows = tuple(
        (m, float(cc_values[:, m].mean()), float(cc_values[:, m].std(ddof=1)))
        for m in range(CC_MAX_LAG + 1)
    )

    taus = _allan_tau_grid()
    curves = [
        allan_deviation(
            _thinned_vacuum_blocks(det, _child_seed(seed, 50 + r)), 1.0 / ALLAN_BLOCK_S, taus
        )
        for r in range(ALLAN_RECORDS)
    ]
    mean_curve = averaged_allan(curves)
    stability = find_stability_interval(mean_curve)
    tbp = time_bandwidth_product(bandwidth, stability)

    report = DetectorReport(
        snr_db=snr_db,
        eta_en=eta_en,
        eta_pd=det.eta_pd,
        eta_bhd=eta_bhd,
        bandwidth_hz=bandwidth,
        cc=cc_rows,
        cmrr_db=rejection,
        stability_interval_s=stability,
        tbp=tbp,
    )
    _atomic_text(os.path.join(out, "report.json"), report_to_json(report))
    _atomic(os.path.join(out, "noise_curve.csv"), lambda p: write_noise_curve_csv(curve, p))
    _atomic(os.path.join(out, "allan.csv"), lambda p: write_allan_csv(mean_curve, p))
    _atomic(os.path.join(out, "spectrum.csv"), lambda p: write_spectrum_csv(shot_band, p))
    _atomic(os.path.join(out, "cc.csv"), lambda p: write_cc_csv(cc_rows, p))
    return report


def _pure_target_vector(state: StateModel, cutoff: int) -> np.ndarray | None:
    if state.kind == "mixture" or state.efficiency < 1.0:
        return None
    vec = np.zeros(cutoff, dtype=complex)
    if state.kind == "vacuum":
        vec[0] = 1.0
    elif state.kind == "fock":
        if state.n >= cutoff:
            return None
        vec[state.n] = 1.0
    else:
        vec = coherent_amplitudes(state.alpha, cutoff)
    return vec


def run_tomography(config: ExperimentConfig) -> dict:
    """Sample the configured state, reconstruct it, and write state artifacts.

    The tomography ``eta`` plays both of its physical roles: the sampled
    data include detection loss at ``eta``, and the reconstruction POVM
    corrects for it, so the returned state estimates the signal before the
    detector.
    """
    out = _prepare_out_dir(config)
    opts = config.tomography
    n = config.n_pulses
    phases = config.phases.realize(n, _rng(config.seed, 0))
    sampled_state = replace(
        config.state, efficiency=config.state.efficiency * opts.eta
    )
    batch = sample_quadratures(
        sampled_state, phases, n, _child_seed(config.seed, 1), cutoff=opts.cutoff
    )
    batch = QuadratureBatch(
        values=batch.values,
        phases=batch.phases,
        timestamps=np.arange(n) / config.detector.f_rep,
    )
    result = mle_reconstruct(
        batch,
        opts.cutoff,
        eta=opts.eta,
        bin_width=opts.bin_width,
        tol=opts.tol,
        max_iter=opts.max_iter,
    )
    rho = result.rho
    axis = np.linspace(-WIGNER_HALFSPAN, WIGNER_HALFSPAN, WIGNER_POINTS)
    grid = wigner(rho, axis, axis)
    stats = photon_statistics(rho)
    target = _pure_target_vector(config.state, opts.cutoff)
    fidelity = None if target is None else fidelity_pure(rho, target)
    w00 = float(wigner(rho, [0.0], [0.0]).values[0, 0])
    summary = {
        "fidelity": fidelity,
        "w00": w00,
        "iterations": int(result.iterations),
        "converged": bool(result.converged),
        "final_log_likelihood": float(result.history[-1]),
    }
    _atomic(os.path.join(out, "rho.csv"), lambda p: write_density_matrix_csv(rho, p))
    _atomic(os.path.join(out, "wigner.csv"), lambda p: write_wigner_csv(grid, p))
    _atomic(
        os.path.join(out, "photon_stats.csv"),
        lambda p: write_photon_statistics_csv(stats, p),
    )
    _atomic(os.path.join(out, "samples.csv"), lambda p: write_batch_csv(batch, p))
    _atomic_text(os.path.join(out, "summary.json"), json.dumps(summary, indent=2) + "\n")
    return summary


def run_trace_export(config: ExperimentConfig) -> None:
    """Simulate one trace and export it as CSV and raw binary."""
    out = _prepare_out_dir(config)
    phases = config.phases.realize(config.n_pulses, _rng(config.seed, 0))
    trace, _ = generate_trace(
        config.detector,
        config.state,
        phases,
        config.n_pulses,
        _child_seed(config.seed, 1),
    )
    _atomic(os.path.join(out, "trace.csv"), lambda p: write_trace_csv(trace, p))
    _atomic(os.path.join(out, "trace.bin"), lambda p: write_trace_binary(trace, p))


_RUNNERS = {
    "characterize": run_characterize,
    "tomography": run_tomography,
    "trace-export": run_trace_export,
}


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="pulsequad",
        description="Pulsed balanced homodyne detector simulator and analysis pipelines",
    )
    parser.add_argument(
        "--version", action="version", version=f"pulsequad {__version__}"
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name in RUN_KINDS:
        p = sub.add_parser(name, help=f"run a {name} experiment")
        p.add_argument("--config", required=True, help="JSON experiment config")
        p.add_argument("--seed", type=int, default=None, help="override config seed")
        p.add_argument("--out", default=None, help="override config output directory")
    args = parser.parse_args(argv)

    try:
        config = load_config(
            args.config, run=args.command, seed_override=args.seed, out_override=args.out
        )
        runner = _RUNNERS[config.run]
    except ConfigError as exc:
        print(f"pulsequad: config error: {exc}", file=sys.stderr)
        return 2
    try:
        runner(config)
    except ConfigError as exc:
        print(f"pulsequad: config error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001 - report and set exit status
        print(f"pulsequad: error: {exc}", file=sys.stderr)
        return 3
    return 0


if __name__ == "__main__":
    sys.exit(main())
