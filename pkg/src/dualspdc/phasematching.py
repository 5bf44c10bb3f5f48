"""KTP dispersion and collinear type-II quasi-phase matching.

Polarization convention: the pump and the signal are polarized along the
crystal Y axis (horizontal, "H"), the idler along Z (vertical, "V").
Wavelengths are vacuum wavelengths in nm at the API surface, temperatures
are oven set points in degrees C, and mismatches are in rad/m.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Callable, Sequence

from .errors import InvalidArgumentError, NoPhaseMatchError, SellmeierRangeError

DEFAULT_SELLMEIER_FILE = "ktp_kato2002.json"

ROOT_TOL = 1e-4  # |dk| * L, rad
MAX_ITER = 200
DEGENERACY_BRACKET_C = (10.0, 60.0)
SIGNAL_HALF_SPAN_NM = 40.0

AXES = ("Y", "Z")


@dataclass(frozen=True)
class AxisDispersion:
    A: float
    terms: tuple[tuple[float, float], ...]
    D: float
    dn_dT: tuple[float, ...]

    def n_room(self, lam_um: float) -> float:
        l2 = lam_um * lam_um
        n2 = self.A + sum(b / (l2 - c) for b, c in self.terms) - self.D * l2
        return math.sqrt(n2)

    def thermo_optic(self, lam_um: float) -> float:
        return sum(a / lam_um**m for m, a in enumerate(self.dn_dT))


@dataclass(frozen=True)
class SellmeierSet:
    axes: dict[str, AxisDispersion]
    reference_temperature: float
    wavelength_window_um: tuple[float, float]
    temperature_window_C: tuple[float, float]
    provenance: str
    source: str = ""


@dataclass(frozen=True)
class CrystalSpec:
    length_mm: float = 10.0
    grating_period_um: float = 9.0
    pump_wavelength_nm: float = 398.5
    temperature_offset_C: float = 0.0

    def __post_init__(self):
        for name in ("length_mm", "grating_period_um", "pump_wavelength_nm"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v > 0):
                raise InvalidArgumentError(f"{name} must be positive, got {v}")
        if not math.isfinite(self.temperature_offset_C):
            raise InvalidArgumentError("temperature_offset_C must be finite")

    @property
    def length_m(self) -> float:
        return self.length_mm * 1e-3


@dataclass(frozen=True)
class TuningPoint:
    temperature: float
    lambda_s: float
    lambda_i: float
    residual_mismatch: float
    converged: bool = True


def _parse_axis(name: str, raw: dict) -> AxisDispersion:
    try:
        sm = raw["sellmeier"]
        return AxisDispersion(
            A=float(sm["A"]),
            terms=tuple((float(b), float(c)) for b, c in sm.get("terms", [])),
            D=float(sm.get("D", 0.0)),
            dn_dT=tuple(float(a) for a in raw["dn_dT_inverse_powers"]),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise InvalidArgumentError(f"axis {name}: malformed coefficients ({exc})") from exc


def parse_sellmeier(data: dict, source: str = "") -> SellmeierSet:
    validity = data.get("validity")
    if not isinstance(validity, dict) or "wavelength_um" not in validity or "temperature_C" not in validity:
        raise InvalidArgumentError(f"{source or 'coefficient data'}: missing validity window")
    lam_lo, lam_hi = (float(x) for x in validity["wavelength_um"])
    t_lo, t_hi = (float(x) for x in validity["temperature_C"])
    if not (lam_lo < lam_hi and t_lo < t_hi):
        raise InvalidArgumentError(f"{source or 'coefficient data'}: empty validity window")
    axes = {name: _parse_axis(name, raw) for name, raw in data.get("axes", {}).items()}
    missing = [a for a in AXES if a not in axes]
    if missing:
        raise InvalidArgumentError(f"{source or 'coefficient data'}: missing axes {missing}")
    return SellmeierSet(
        axes=axes,
        reference_temperature=float(data.get("reference_temperature_C", 20.0)),
        wavelength_window_um=(lam_lo, lam_hi),
        temperature_window_C=(t_lo, t_hi),
        provenance=str(data.get("provenance", "")),
        source=source,
    )


def load_sellmeier(path: str | Path | None = None) -> SellmeierSet:
    """Load a coefficient file; ``None`` loads the packaged default set."""
    if path is None:
        text = resources.files("dualspdc.data").joinpath(DEFAULT_SELLMEIER_FILE).read_text(encoding="utf-8")
        return parse_sellmeier(json.loads(text), source=DEFAULT_SELLMEIER_FILE)
    path = Path(path)
    return parse_sellmeier(json.loads(path.read_text(encoding="utf-8")), source=str(path))


def refractive_index(s: SellmeierSet, axis: str, lambda_nm: float, T: float) -> float:
    """Index along ``axis`` at vacuum wavelength ``lambda_nm`` and crystal temperature ``T``."""
    if axis not in s.axes:
        raise InvalidArgumentError(f"unknown axis {axis!r}")
    lam_um = lambda_nm * 1e-3
    lo, hi = s.wavelength_window_um
    if not lam_um >= lo:
        raise SellmeierRangeError(f"wavelength {lambda_nm} nm below lower validity bound {lo * 1e3:g} nm")
    if not lam_um <= hi:
        raise SellmeierRangeError(f"wavelength {lambda_nm} nm above upper validity bound {hi * 1e3:g} nm")
    tlo, thi = s.temperature_window_C
    if not T >= tlo:
        raise SellmeierRangeError(f"temperature {T} C below lower validity bound {tlo:g} C")
    if not T <= thi:
        raise SellmeierRangeError(f"temperature {T} C above upper validity bound {thi:g} C")
    disp = s.axes[axis]
    return disp.n_room(lam_um) + (T - s.reference_temperature) * disp.thermo_optic(lam_um)


def conjugate_wavelength(lambda_p: float, lambda_s: float) -> float:
    """Idler wavelength fixed by energy conservation, 1/lp = 1/ls + 1/li."""
    if not (math.isfinite(lambda_p) and math.isfinite(lambda_s)) or lambda_p <= 0:
        raise InvalidArgumentError("wavelengths must be finite and positive")
    if lambda_s <= lambda_p:
        raise InvalidArgumentError(f"signal {lambda_s} nm must be longer than pump {lambda_p} nm")
    return 1.0 / (1.0 / lambda_p - 1.0 / lambda_s)


def _three_wave_mismatch(c: CrystalSpec, s: SellmeierSet, lam_high: float, lam_y: float, lam_z: float, T: float) -> float:
    """2 pi [n_y(lh)/lh - n_y(ly)/ly - n_z(lz)/lz - 1/Lambda] in rad/m, all lambdas in nm."""
    T_eff = T + c.temperature_offset_C
    k = (
        refractive_index(s, "Y", lam_high, T_eff) / lam_high
        - refractive_index(s, "Y", lam_y, T_eff) / lam_y
        - refractive_index(s, "Z", lam_z, T_eff) / lam_z
    )
    return 2 * math.pi * (k * 1e9 - 1.0 / (c.grating_period_um * 1e-6))


def qpm_mismatch(c: CrystalSpec, s: SellmeierSet, lambda_s: float, T: float) -> float:
    """Collinear type-II QPM mismatch for a Y signal at ``lambda_s`` and its conjugate Z idler."""
    lambda_i = conjugate_wavelength(c.pump_wavelength_nm, lambda_s)
    return _three_wave_mismatch(c, s, c.pump_wavelength_nm, lambda_s, lambda_i, T)


def shg_mismatch(c: CrystalSpec, s: SellmeierSet, lambda_fund: float, T: float) -> float:
    """Type-II second-harmonic mismatch: a Y and a Z photon at ``lambda_fund`` make one Y photon at half."""
    return _three_wave_mismatch(c, s, lambda_fund / 2, lambda_fund, lambda_fund, T)


def _bisect(f: Callable[[float], float], lo: float, hi: float, accept: Callable[[float], bool]):
    """Return (x, f(x), converged). Raises NoPhaseMatchError without a sign change."""
    flo, fhi = f(lo), f(hi)
    if accept(flo):
        return lo, flo, True
    if accept(fhi):
        return hi, fhi, True
    if (flo > 0) == (fhi > 0):
        raise NoPhaseMatchError(f"mismatch keeps one sign on [{lo}, {hi}]: {flo:.4g}, {fhi:.4g} rad/m")
    mid, fmid = lo, flo
    for _ in range(MAX_ITER):
        mid = 0.5 * (lo + hi)
        fmid = f(mid)
        if accept(fmid):
            return mid, fmid, True
        if (fmid > 0) == (flo > 0):
            lo, flo = mid, fmid
        else:
            hi = mid
    return mid, fmid, False


def _root_ok(c: CrystalSpec) -> Callable[[float], bool]:
    return lambda dk: abs(dk) * c.length_m < ROOT_TOL


def solve_degenerate_temperature(
    c: CrystalSpec, s: SellmeierSet, bracket: tuple[float, float] = DEGENERACY_BRACKET_C
) -> float:
    """Oven temperature at which lambda_s = lambda_i = 2 lambda_p is phase matched."""
    lam = 2 * c.pump_wavelength_nm
    T, _, ok = _bisect(lambda T: qpm_mismatch(c, s, lam, T), bracket[0], bracket[1], _root_ok(c))
    if not ok:
        raise NoPhaseMatchError(f"degeneracy solve did not converge in {MAX_ITER} iterations")
    return T


def calibrate_temperature_offset(c: CrystalSpec, s: SellmeierSet, target_C: float = 32.0) -> float:
    """Offset that moves the computed degeneracy onto ``target_C``.

    The raw root is searched over the whole temperature window of the
    coefficient set with no offset applied.
    """
    raw = CrystalSpec(c.length_mm, c.grating_period_um, c.pump_wavelength_nm, 0.0)
    T_raw = solve_degenerate_temperature(raw, s, s.temperature_window_C)
    return T_raw - target_C


def tuning_point(c: CrystalSpec, s: SellmeierSet, T: float) -> TuningPoint:
    centre = 2 * c.pump_wavelength_nm
    try:
        lam_s, dk, ok = _bisect(
            lambda ls: qpm_mismatch(c, s, ls, T),
            centre - SIGNAL_HALF_SPAN_NM,
            centre + SIGNAL_HALF_SPAN_NM,
            _root_ok(c),
        )
    except NoPhaseMatchError:
        return TuningPoint(T, math.nan, math.nan, math.nan, converged=False)
    return TuningPoint(T, lam_s, conjugate_wavelength(c.pump_wavelength_nm, lam_s), dk, converged=ok)


def temperature_grid(T_start: float, T_stop: float, step: float) -> list[float]:
    """Inclusive grid ``T_start + i*step``, rounded so sub-ranges reproduce the same values."""
    if step <= 0 or T_stop < T_start:
        raise InvalidArgumentError("need step > 0 and T_stop >= T_start")
    n = int(math.floor((T_stop - T_start) / step + 1e-9)) + 1
    return [round(T_start + i * step, 9) for i in range(n)]


def tuning_curve(
    c: CrystalSpec, s: SellmeierSet, T_range: Sequence[float], step: float | None = None
) -> list[TuningPoint]:
    """Signal/idler wavelengths across temperatures.

    ``T_range`` is either an explicit list of temperatures (``step=None``) or
    a ``(start, stop)`` pair expanded with ``step``. Points that fail to
    converge are returned with ``converged=False``.
    """
    temps = list(T_range) if step is None else temperature_grid(T_range[0], T_range[1], step)
    return [tuning_point(c, s, T) for T in temps]


def energy_conservation_error(lambda_p: float, p: TuningPoint) -> float:
    return abs(1 / p.lambda_s + 1 / p.lambda_i - 1 / lambda_p) * lambda_p
