"""Photon-counting layer: rates, coincidence gate, accidentals and collection model.

Rates are per second, the coincidence window ``tau`` is in seconds. A
coincidence is scored when one detection from each arm falls within the
gate, i.e. |t1 - t2| < tau/2, and every detection is used at most once.
Detector dead time is not modeled.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Mapping, NamedTuple, Sequence

import numpy as np

from .errors import InvalidArgumentError
from .state import AnalyzerSetting, BiphotonState, PolarizationKet, coincidence_probability, singles_probability

DEFAULT_WINDOW_S = 39.4e-9


@dataclass(frozen=True)
class SourceRates:
    pair_rate_per_mw: float = 745_900.0
    pump_power_mw: float = 1.0
    eta1: float = 0.1794
    eta2: float = 0.1794
    dark1: float = 100.0
    dark2: float = 100.0
    window: float = DEFAULT_WINDOW_S

    def __post_init__(self):
        for name in ("pair_rate_per_mw", "pump_power_mw", "dark1", "dark2"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v >= 0):
                raise InvalidArgumentError(f"{name} must be a nonnegative rate, got {v}")
        for name in ("eta1", "eta2"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise InvalidArgumentError(f"{name} must lie in [0, 1], got {v}")
        if not self.window > 0:
            raise InvalidArgumentError("coincidence window must be positive")


@dataclass(frozen=True)
class CollectionGeometry:
    """Iris and filter in front of the detectors.

    The collected pair flux scales with iris area up to ``saturation_diameter_mm``
    and is normalized to 1 at ``calibration_diameter_mm``.
    """

    iris_diameter_mm: float = 4.0
    filter_bandwidth_nm: float | None = 3.0
    solid_angle_sr_at_1mm: float = 3.5e-5
    calibration_diameter_mm: float = 4.0
    saturation_diameter_mm: float = 5.0

    def __post_init__(self):
        if not self.iris_diameter_mm > 0:
            raise InvalidArgumentError(f"iris diameter must be positive, got {self.iris_diameter_mm}")
        if self.calibration_diameter_mm <= 0 or self.saturation_diameter_mm <= 0:
            raise InvalidArgumentError("calibration and saturation diameters must be positive")

    @property
    def filter_key(self) -> str:
        return "none" if self.filter_bandwidth_nm is None else f"{self.filter_bandwidth_nm:g}nm"

    def solid_angle_sr(self) -> float:
        return self.solid_angle_sr_at_1mm * self.iris_diameter_mm**2


@dataclass(frozen=True)
class CountRecord:
    duration: float
    singles1: int
    singles2: int
    raw_coincidences: int
    accidental_estimate: float = 0.0
    corrected_coincidences: float | None = None
    seed: int | None = None
    clamped: bool = False

    def __post_init__(self):
        if min(self.singles1, self.singles2, self.raw_coincidences) < 0:
            raise InvalidArgumentError("counts must be nonnegative")
        if self.raw_coincidences > min(self.singles1, self.singles2):
            raise InvalidArgumentError("coincidences exceed singles")
        if self.corrected_coincidences is None:
            object.__setattr__(self, "corrected_coincidences", float(self.raw_coincidences) - self.accidental_estimate)

    def rates(self) -> tuple[float, float, float]:
        d = self.duration
        return self.singles1 / d, self.singles2 / d, self.corrected_coincidences / d

    def to_row(self) -> dict:
        return {
            "duration_s": self.duration,
            "singles1": self.singles1,
            "singles2": self.singles2,
            "raw_coinc": self.raw_coincidences,
            "accidental_est": self.accidental_estimate,
            "corrected_coinc": self.corrected_coincidences,
            "seed": self.seed,
        }

    @classmethod
    def from_row(cls, row: Mapping) -> "CountRecord":
        seed = row.get("seed")
        return cls(
            duration=float(row["duration_s"]),
            singles1=int(row["singles1"]),
            singles2=int(row["singles2"]),
            raw_coincidences=int(row["raw_coinc"]),
            accidental_estimate=float(row["accidental_est"]),
            corrected_coincidences=float(row["corrected_coinc"]),
            seed=None if seed in (None, "") else int(seed),
        )


COUNT_RECORD_FIELDS = ("duration_s", "singles1", "singles2", "raw_coinc", "accidental_est", "corrected_coinc", "seed")


def write_count_records_csv(records: Sequence[CountRecord], path: str | Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.DictWriter(fh, fieldnames=COUNT_RECORD_FIELDS, lineterminator="\n")
        w.writeheader()
        for r in records:
            w.writerow(r.to_row())


def read_count_records_csv(path: str | Path) -> list[CountRecord]:
    with open(path, newline="", encoding="utf-8") as fh:
        return [CountRecord.from_row(row) for row in csv.DictReader(fh)]


def count_records_to_json(records: Sequence[CountRecord]) -> str:
    return json.dumps([r.to_row() for r in records], sort_keys=True)


def accidental_rate(R1: float, R2: float, tau: float) -> float:
    """Uncorrelated overlap rate R1 * R2 * tau."""
    if min(R1, R2, tau) < 0:
        raise InvalidArgumentError("rates and window must be nonnegative")
    return R1 * R2 * tau


def correct_accidentals(rec: CountRecord, tau: float, clamp: bool = False) -> CountRecord:
    """Subtract singles1 * singles2 * tau / duration from the raw coincidences.

    With ``clamp`` a negative result is set to zero and flagged.
    """
    if not rec.duration > 0:
        raise InvalidArgumentError(f"duration must be positive, got {rec.duration}")
    acc = rec.singles1 * rec.singles2 * tau / rec.duration
    corrected = rec.raw_coincidences - acc
    clamped = clamp and corrected < 0
    return replace(rec, accidental_estimate=acc, corrected_coincidences=0.0 if clamped else corrected, clamped=clamped)


def flux_scale(geom: CollectionGeometry) -> float:
    """Collected-pair fraction relative to the calibration iris, min(d, d_sat)^2 / d_cal^2."""
    d = min(geom.iris_diameter_mm, geom.saturation_diameter_mm)
    d_cal = min(geom.calibration_diameter_mm, geom.saturation_diameter_mm)
    return (d / d_cal) ** 2


def pair_rate(src: SourceRates, geom: CollectionGeometry) -> float:
    return src.pair_rate_per_mw * src.pump_power_mw * flux_scale(geom)


class ExpectedRates(NamedTuple):
    R1: float
    R2: float
    Rc: float


def expected_rates(
    src: SourceRates, state: BiphotonState | PolarizationKet, s: AnalyzerSetting, geom: CollectionGeometry
) -> ExpectedRates:
    """Mean singles rates and true (accidental-free) coincidence rate."""
    rp = pair_rate(src, geom)
    R1 = rp * src.eta1 * singles_probability(state, s.theta1, 1) + src.dark1
    R2 = rp * src.eta2 * singles_probability(state, s.theta2, 2) + src.dark2
    Rc = rp * src.eta1 * src.eta2 * coincidence_probability(state, s)
    return ExpectedRates(R1, R2, Rc)


def expected_raw_coincidence_rate(rates: ExpectedRates, tau: float) -> float:
    """True coincidences plus first-order accidentals between the unpaired parts of each stream."""
    return rates.Rc + (rates.R1 - rates.Rc) * (rates.R2 - rates.Rc) * tau


def _poisson_times(rng: np.random.Generator, rate: float, duration: float) -> np.ndarray:
    """Event times of a homogeneous Poisson process from exponential inter-arrivals."""
    if rate <= 0:
        return np.empty(0)
    mean = rate * duration
    chunk = int(mean + 6 * math.sqrt(mean) + 16)
    times = np.cumsum(rng.exponential(1.0 / rate, size=chunk))
    while times[-1] < duration:
        more = np.cumsum(rng.exponential(1.0 / rate, size=chunk)) + times[-1]
        times = np.concatenate([times, more])
    return times[: np.searchsorted(times, duration, side="left")]


def _greedy_pairs(t1: np.ndarray, t2: np.ndarray, half: float) -> int:
    i = j = n = 0
    n1, n2 = len(t1), len(t2)
    while i < n1 and j < n2:
        d = t1[i] - t2[j]
        if -half < d < half:
            n += 1
            i += 1
            j += 1
        elif d < 0:
            i += 1
        else:
            j += 1
    return n


def count_coincidences(t1: np.ndarray, t2: np.ndarray, tau: float) -> int:
    """Single-window AND gate on two sorted timestamp arrays.

    Events are merged and split wherever consecutive timestamps are at least
    tau/2 apart, since no coincidence can span such a gap. Isolated pairs
    are scored directly and the rare larger clusters go through the earliest-
    first two-pointer match.
    """
    half = tau / 2
    t1 = np.asarray(t1, dtype=float)
    t2 = np.asarray(t2, dtype=float)
    if t1.size == 0 or t2.size == 0:
        return 0
    times = np.concatenate([t1, t2])
    arm = np.concatenate([np.zeros(t1.size, dtype=np.int8), np.ones(t2.size, dtype=np.int8)])
    order = np.argsort(times, kind="stable")
    times, arm = times[order], arm[order]
    cluster = np.concatenate([[0], np.cumsum(np.diff(times) >= half)])
    sizes = np.bincount(cluster)
    starts = np.concatenate([[0], np.cumsum(sizes)[:-1]])

    pairs = starts[sizes == 2]
    count = int(np.count_nonzero(arm[pairs] != arm[pairs + 1]))
    for st, sz in zip(starts[sizes > 2], sizes[sizes > 2]):
        ts, ar = times[st : st + sz], arm[st : st + sz]
        count += _greedy_pairs(ts[ar == 0], ts[ar == 1], half)
    return count


def simulate_counts(
    src: SourceRates,
    state: BiphotonState | PolarizationKet,
    s: AnalyzerSetting,
    geom: CollectionGeometry,
    duration: float,
    seed: int,
) -> CountRecord:
    """Event-level realization of one counting interval, accidentals already corrected.

    Pairs are emitted as a Poisson process; each pair's joint analyzer outcome
    is drawn from the state's four outcome probabilities, each transmitted
    photon is detected with its arm efficiency, and independent dark-count
    streams are added before the coincidence gate.
    """
    if not duration > 0:
        raise InvalidArgumentError("duration must be positive")
    rng = np.random.default_rng(seed)
    a, b = s.theta1, s.theta2
    ap, bp = a + math.pi / 2, b + math.pi / 2
    probs = np.array(
        [
            coincidence_probability(state, AnalyzerSetting(a, b)),
            coincidence_probability(state, AnalyzerSetting(a, bp)),
            coincidence_probability(state, AnalyzerSetting(ap, b)),
            coincidence_probability(state, AnalyzerSetting(ap, bp)),
        ]
    )
    probs = np.clip(probs, 0.0, None)
    cum = np.cumsum(probs / probs.sum())
    cum[-1] = 1.0

    pairs = _poisson_times(rng, pair_rate(src, geom), duration)
    outcome = np.searchsorted(cum, rng.random(pairs.size), side="right")
    pass1 = (outcome == 0) | (outcome == 1)
    pass2 = (outcome == 0) | (outcome == 2)
    det1 = pass1 & (rng.random(pairs.size) < src.eta1)
    det2 = pass2 & (rng.random(pairs.size) < src.eta2)

    dark1 = _poisson_times(rng, src.dark1, duration)
    dark2 = _poisson_times(rng, src.dark2, duration)
    t1 = np.sort(np.concatenate([pairs[det1], dark1]), kind="stable")
    t2 = np.sort(np.concatenate([pairs[det2], dark2]), kind="stable")

    rec = CountRecord(
        duration=duration,
        singles1=int(t1.size),
        singles2=int(t2.size),
        raw_coincidences=count_coincidences(t1, t2, src.window),
        seed=seed,
    )
    return correct_accidentals(rec, src.window)


class VisibilityLookup(NamedTuple):
    value: float
    extrapolated: bool


@dataclass(frozen=True)
class VisibilityTable:
    """Measured-style 45-degree visibility versus iris diameter, one curve per filter key."""

    curves: dict[str, tuple[tuple[float, ...], tuple[float, ...]]] = field(default_factory=dict)

    @classmethod
    def from_dict(cls, raw: Mapping) -> "VisibilityTable":
        curves = {}
        for key, curve in raw.items():
            d = tuple(float(x) for x in curve["diameters_mm"])
            v = tuple(float(x) for x in curve["visibility"])
            if len(d) != len(v) or len(d) == 0:
                raise InvalidArgumentError(f"visibility table {key!r}: mismatched or empty columns")
            if any(b <= a for a, b in zip(d, d[1:])):
                raise InvalidArgumentError(f"visibility table {key!r}: diameters must increase")
            if any(not 0.0 <= x <= 1.0 for x in v):
                raise InvalidArgumentError(f"visibility table {key!r}: values outside [0, 1]")
            curves[key] = (d, v)
        return cls(curves)

    def to_dict(self) -> dict:
        return {k: {"diameters_mm": list(d), "visibility": list(v)} for k, (d, v) in self.curves.items()}


DEFAULT_VISIBILITY_TABLE = VisibilityTable.from_dict(
    {
        "3nm": {"diameters_mm": [1.0, 2.0, 3.0, 4.0, 5.0], "visibility": [0.91, 0.91, 0.905, 0.90, 0.895]},
        "none": {"diameters_mm": [1.0, 2.0, 3.0, 4.0, 5.0], "visibility": [0.86, 0.86, 0.855, 0.85, 0.845]},
    }
)


def visibility_model(geom: CollectionGeometry, table: VisibilityTable = DEFAULT_VISIBILITY_TABLE) -> VisibilityLookup:
    """Distinguishability parameter V for ``geom``, linearly interpolated in diameter.

    Diameters outside the table clamp to the nearest end and are flagged.
    """
    key = geom.filter_key
    if key not in table.curves:
        raise InvalidArgumentError(f"no visibility curve for filter {key!r}; have {sorted(table.curves)}")
    d, v = table.curves[key]
    x = geom.iris_diameter_mm
    outside = x < d[0] or x > d[-1]
    return VisibilityLookup(float(np.interp(x, d, v)), outside)
