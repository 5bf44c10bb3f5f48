"""Experiment drivers behind the CLI subcommands.

Each driver returns an in-memory result; ``write_*`` helpers turn results
into CSV/JSON files. Monte Carlo points use the seed ``base_seed + index``
where ``index`` counts points in the order they appear in the output, so a
dataset does not depend on how it is computed.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Sequence

from .analysis import FringeFit, chsh_from_correlations, correlation_from_counts, fit_fringe
from .config import ExperimentConfig
from .detection import (
    CollectionGeometry,
    CountRecord,
    SourceRates,
    expected_rates,
    pair_rate,
    simulate_counts,
    visibility_model,
)
from .interferometer import LockResult, simulate_lock, write_lock_csv
from .phasematching import solve_degenerate_temperature, temperature_grid, tuning_curve
from .state import AnalyzerSetting, BiphotonState, apply_distinguishability, build_output_state, chsh_S


def _fmt(x: Any) -> str:
    if x is None:
        return ""
    if isinstance(x, bool):
        return "1" if x else "0"
    if isinstance(x, float):
        return format(x, ".12g")
    return str(x)


def header_comment(cfg: ExperimentConfig, seed: int, command: str) -> str:
    return f"config_sha256={cfg.hash} seed={seed} command={command}"


def write_csv(path: Path, columns: Sequence[str], rows: Sequence[dict], comment: str) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        fh.write(f"# {comment}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for row in rows:
            w.writerow([_fmt(row.get(c)) for c in columns])


def _json_safe(obj):
    if isinstance(obj, float) and not math.isfinite(obj):
        return None
    if isinstance(obj, dict):
        return {k: _json_safe(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_json_safe(v) for v in obj]
    return obj


def write_json(path: Path, payload: dict, cfg: ExperimentConfig, seed: int, command: str) -> None:
    body = {"config_sha256": cfg.hash, "seed": seed, "command": command, **payload}
    path.write_text(json.dumps(_json_safe(body), indent=2, sort_keys=True) + "\n", encoding="utf-8")


def make_state(cfg: ExperimentConfig, V: float, phase: float | None = None) -> BiphotonState:
    return apply_distinguishability(build_output_state(cfg.target_phase if phase is None else phase), V)


def _resolve_visibility(cfg: ExperimentConfig, geom: CollectionGeometry, override) -> tuple[float, bool]:
    if override is not None:
        return float(override), False
    lookup = visibility_model(geom, cfg.visibility_table)
    return lookup.value, lookup.extrapolated


@dataclass
class ScanPoint:
    theta2_deg: float
    coinc_analytic: float
    coinc_mc: float | None = None
    err: float | None = None
    record: CountRecord | None = None


@dataclass
class Scan:
    points: list[ScanPoint]
    fit_analytic: FringeFit
    fit_mc: FringeFit | None
    pairs_simulated: float


def fringe_scan_points(
    src: SourceRates,
    state: BiphotonState,
    theta1: float,
    theta2_deg: Sequence[float],
    geom: CollectionGeometry,
    duration: float,
    seed0: int,
    analytic_only: bool = False,
) -> Scan:
    """Coincidence rate versus analyzer-2 angle, analytic and (optionally) simulated."""
    points = []
    for idx, t2d in enumerate(theta2_deg):
        s = AnalyzerSetting(theta1, math.radians(t2d))
        p = ScanPoint(float(t2d), expected_rates(src, state, s, geom).Rc)
        if not analytic_only:
            rec = simulate_counts(src, state, s, geom, duration, seed0 + idx)
            p.record = rec
            p.coinc_mc = rec.corrected_coincidences / duration
            p.err = math.sqrt(max(rec.raw_coincidences, 1)) / duration
        points.append(p)
    th = [math.radians(p.theta2_deg) for p in points]
    fit_a = fit_fringe(th, [p.coinc_analytic for p in points])
    fit_m = None
    if not analytic_only:
        fit_m = fit_fringe(th, [p.coinc_mc for p in points], [p.err for p in points])
    simulated = 0.0 if analytic_only else pair_rate(src, geom) * duration * len(points)
    return Scan(points, fit_a, fit_m, simulated)


@dataclass
class FringeScanResult:
    theta1_deg: float
    V: float
    scan: Scan
    seed: int

    def summary(self) -> dict:
        fa, fm = self.scan.fit_analytic, self.scan.fit_mc
        return {
            "theta1_deg": self.theta1_deg,
            "distinguishability_V": self.V,
            "visibility_analytic": fa.visibility,
            "visibility_mc": None if fm is None else fm.visibility,
            "visibility_mc_err": None if fm is None else fm.visibility_err,
            "fringe_max_theta2_deg_analytic": math.degrees(fa.maximum_theta2()),
            "pairs_simulated": self.scan.pairs_simulated,
        }


def fringe_scan(
    cfg: ExperimentConfig, theta1_deg: float | None = None, seed: int | None = None, analytic_only: bool = False
) -> FringeScanResult:
    sec = cfg.section("fringe_scan")
    seed = cfg.seed if seed is None else seed
    theta1_deg = float(sec["theta1_deg"] if theta1_deg is None else theta1_deg)
    geom = cfg.geometry(sec["iris_diameter_mm"], sec["filter"])
    src = cfg.source_at(sec["pump_power_mW"])
    V, _ = _resolve_visibility(cfg, geom, sec.get("visibility"))
    scan = fringe_scan_points(
        src, make_state(cfg, V), math.radians(theta1_deg), sec["theta2_deg"], geom, float(sec["duration_s"]), seed, analytic_only
    )
    return FringeScanResult(theta1_deg, V, scan, seed)


def write_fringe_scan(res: FringeScanResult, cfg: ExperimentConfig, out: Path) -> list[Path]:
    comment = header_comment(cfg, res.seed, "fringe-scan")
    rows = [vars(p) for p in res.scan.points]
    csv_path, json_path = out / "fringe_scan.csv", out / "fringe_scan.json"
    write_csv(csv_path, ["theta2_deg", "coinc_analytic", "coinc_mc", "err"], rows, comment)
    write_json(json_path, res.summary(), cfg, res.seed, "fringe-scan")
    return [csv_path, json_path]


@dataclass
class IrisSweepResult:
    rows: list[dict]
    seed: int


def iris_sweep(cfg: ExperimentConfig, seed: int | None = None, analytic_only: bool = False) -> IrisSweepResult:
    """45-degree visibility and pair flux versus iris diameter for each filter."""
    sec = cfg.section("iris_sweep")
    seed = cfg.seed if seed is None else seed
    theta2 = sec["theta2_deg"]
    duration = float(sec["duration_s"])
    src = cfg.source
    rows = []
    next_seed = seed
    for d in sec["diameters_mm"]:
        for filt in sec["filters"]:
            geom = cfg.geometry(d, filt)
            lookup = visibility_model(geom, cfg.visibility_table)
            state = make_state(cfg, lookup.value)
            scan = fringe_scan_points(src, state, math.pi / 4, theta2, geom, duration, next_seed, analytic_only)
            next_seed += len(theta2)
            fit = scan.fit_analytic if analytic_only else scan.fit_mc
            flux = expected_rates(src, state, AnalyzerSetting(0.0, math.pi / 2), geom).Rc / src.pump_power_mw
            rows.append(
                {
                    "d_mm": float(d),
                    "filter": filt,
                    "vis_model": lookup.value,
                    "vis": fit.visibility,
                    "vis_err": fit.visibility_err,
                    "pairs_per_s_per_mW": flux,
                    "extrapolated": lookup.extrapolated,
                }
            )
    return IrisSweepResult(rows, seed)


def write_iris_sweep(res: IrisSweepResult, cfg: ExperimentConfig, out: Path) -> list[Path]:
    path = out / "iris_sweep.csv"
    cols = ["d_mm", "filter", "vis", "pairs_per_s_per_mW", "vis_model", "vis_err", "extrapolated"]
    write_csv(path, cols, res.rows, header_comment(cfg, res.seed, "iris-sweep"))
    return [path]


@dataclass
class TuningSweepResult:
    rows: list[dict]
    degeneracy_C: float
    seed: int
    pairs_per_s_per_mW: float
    all_converged: bool = field(init=False)

    def __post_init__(self):
        self.all_converged = all(r["converged"] for r in self.rows)


def tuning_sweep(cfg: ExperimentConfig, seed: int | None = None, analytic_only: bool = False) -> TuningSweepResult:
    """Signal/idler wavelengths and 45-degree visibility across oven temperature.

    Raises NoPhaseMatchError when the degeneracy temperature cannot be found.
    """
    sec = cfg.section("tuning_sweep")
    seed = cfg.seed if seed is None else seed
    T_deg = solve_degenerate_temperature(cfg.crystal, cfg.sellmeier)
    temps = temperature_grid(float(sec["T_start_C"]), float(sec["T_stop_C"]), float(sec["T_step_C"]))
    points = tuning_curve(cfg.crystal, cfg.sellmeier, temps)
    geom = cfg.geometry(sec["iris_diameter_mm"], sec["filter"])
    V = visibility_model(geom, cfg.visibility_table).value
    state = make_state(cfg, V)
    theta2 = sec["theta2_deg"]
    rows = []
    for idx, p in enumerate(points):
        scan = fringe_scan_points(
            cfg.source, state, math.pi / 4, theta2, geom, float(sec["duration_s"]), seed + idx * len(theta2), analytic_only
        )
        fit = scan.fit_analytic if analytic_only else scan.fit_mc
        rows.append(
            {
                "T_C": p.temperature,
                "lambda_s_nm": p.lambda_s,
                "lambda_i_nm": p.lambda_i,
                "vis": fit.visibility,
                "vis_err": fit.visibility_err,
                "converged": p.converged,
                "residual_mismatch_rad_per_m": p.residual_mismatch,
            }
        )
    flux = expected_rates(cfg.source, state, AnalyzerSetting(0.0, math.pi / 2), geom).Rc / cfg.source.pump_power_mw
    return TuningSweepResult(rows, T_deg, seed, flux)


def write_tuning_sweep(res: TuningSweepResult, cfg: ExperimentConfig, out: Path) -> list[Path]:
    path = out / "tuning_sweep.csv"
    cols = ["T_C", "lambda_s_nm", "lambda_i_nm", "vis", "vis_err", "converged", "residual_mismatch_rad_per_m"]
    write_csv(path, cols, res.rows, header_comment(cfg, res.seed, "tuning-sweep"))
    json_path = out / "tuning_sweep.json"
    write_json(
        json_path,
        {
            "degeneracy_temperature_C": res.degeneracy_C,
            "all_converged": res.all_converged,
            "pairs_per_s_per_mW": res.pairs_per_s_per_mW,
        },
        cfg,
        res.seed,
        "tuning-sweep",
    )
    return [path, json_path]


@dataclass
class BellResult:
    angles_deg: tuple[float, float, float, float]
    V: float
    S_analytic: float
    duration: float
    seed: int
    records: list[tuple[float, float, CountRecord]] = field(default_factory=list)
    correlations: list[float] = field(default_factory=list)
    correlation_errs: list[float] = field(default_factory=list)
    S: float | None = None
    S_err: float | None = None
    pairs_simulated: float = 0.0

    @property
    def sigma_above_classical(self) -> float | None:
        if self.S is None or not self.S_err:
            return None
        return (self.S - 2.0) / self.S_err

    def summary(self) -> dict:
        S = self.S_analytic if self.S is None else self.S
        return {
            "angles_deg": list(self.angles_deg),
            "distinguishability_V": self.V,
            "S_analytic": self.S_analytic,
            "S": self.S,
            "S_err": self.S_err,
            "sigma_above_classical": self.sigma_above_classical,
            "violates_classical_bound": S > 2.0,
            "correlations_E": self.correlations,
            "correlation_errs": self.correlation_errs,
            "duration_s_per_setting": self.duration,
            "pairs_simulated": self.pairs_simulated,
        }


def bell_test(
    cfg: ExperimentConfig,
    seed: int | None = None,
    analytic_only: bool = False,
    duration: float | None = None,
    visibility: float | None = None,
) -> BellResult:
    """CHSH test from 16 accidental-corrected coincidence measurements."""
    sec = cfg.section("bell_test")
    seed = cfg.seed if seed is None else seed
    duration = float(sec["duration_s"] if duration is None else duration)
    angles_deg = tuple(float(x) for x in sec["angles_deg"])
    if len(angles_deg) != 4:
        raise ValueError("bell_test.angles_deg needs four angles: a, a', b, b'")
    a, ap, b, bp = (math.radians(x) for x in angles_deg)
    geom = cfg.collection
    V, _ = _resolve_visibility(cfg, geom, visibility if visibility is not None else sec.get("visibility"))
    state = make_state(cfg, V)
    res = BellResult(angles_deg, V, chsh_S(state, a, ap, b, bp), duration, seed)
    if analytic_only:
        return res

    half = math.pi / 2
    idx = 0
    for x, y in ((a, b), (a, bp), (ap, b), (ap, bp)):
        recs = []
        for alpha, beta in ((x, y), (x, y + half), (x + half, y), (x + half, y + half)):
            rec = simulate_counts(cfg.source, state, AnalyzerSetting(alpha, beta), geom, duration, seed + idx)
            res.records.append((math.degrees(alpha), math.degrees(beta), rec))
            recs.append(rec)
            idx += 1
        E, err = correlation_from_counts(
            *(r.corrected_coincidences for r in recs), variances=[max(r.raw_coincidences, 1) for r in recs]
        )
        res.correlations.append(E)
        res.correlation_errs.append(err)
    res.S, res.S_err = chsh_from_correlations(res.correlations, res.correlation_errs)
    res.pairs_simulated = pair_rate(cfg.source, geom) * duration * 16
    return res


def write_bell_test(res: BellResult, cfg: ExperimentConfig, out: Path) -> list[Path]:
    json_path = out / "bell_test.json"
    write_json(json_path, res.summary(), cfg, res.seed, "bell-test")
    paths = [json_path]
    if res.records:
        csv_path = out / "bell_counts.csv"
        cols = ["alpha_deg", "beta_deg", "duration_s", "singles1", "singles2", "raw_coinc", "accidental_est", "corrected_coinc", "seed"]
        rows = [{"alpha_deg": al, "beta_deg": be, **rec.to_row()} for al, be, rec in res.records]
        write_csv(csv_path, cols, rows, header_comment(cfg, res.seed, "bell-test"))
        paths.append(csv_path)
    return paths


def lock_sim(cfg: ExperimentConfig, seed: int | None = None, duration: float | None = None) -> tuple[LockResult, int]:
    seed = cfg.seed if seed is None else seed
    result = simulate_lock(
        cfg.lock_geometry,
        cfg.lock_noise,
        cfg.lock_controller,
        cfg.lock_duration if duration is None else duration,
        seed,
        target_phi=cfg.target_phase,
        pump_wavelength_nm=cfg.crystal.pump_wavelength_nm,
    )
    return result, seed


def write_lock_sim(result: LockResult, seed: int, cfg: ExperimentConfig, out: Path) -> list[Path]:
    csv_path, json_path = out / "lock_sim.csv", out / "lock_sim.json"
    write_lock_csv(result, csv_path, header_comment(cfg, seed, "lock-sim"))
    summary = result.summary()
    summary["residual_threshold_rad"] = cfg.lock_threshold
    summary["below_threshold"] = result.residual_rms < cfg.lock_threshold
    write_json(json_path, summary, cfg, seed, "lock-sim")
    return [csv_path, json_path]
