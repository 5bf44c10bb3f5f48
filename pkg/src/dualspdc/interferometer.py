"""Pump Mach-Zehnder phase bookkeeping and side-lock simulation.

The pump interferometer runs from the 50-50 beam splitter to the PBS. Its
phase equals the output-state phase up to a fixed offset (half-wave plate
plus any dispersive plate), so holding the pump fringe on its slope holds
the two-photon state phase.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .errors import InvalidArgumentError

TWO_PI = 2 * math.pi


def wrap_phase(x):
    """Reduce to [0, 2 pi)."""
    return np.mod(x, TWO_PI) if isinstance(x, np.ndarray) else math.fmod(math.fmod(x, TWO_PI) + TWO_PI, TWO_PI)


def phase_difference(a, b):
    """Signed circular difference a - b in (-pi, pi]."""
    return np.angle(np.exp(1j * (np.asarray(a) - np.asarray(b))))


@dataclass(frozen=True)
class PathGeometry:
    """Arm lengths in meters and fixed phase offsets in radians.

    ``L_A``/``L_B`` run from the 50-50 splitter to the crystal, ``Lp_A``/``Lp_B``
    from the crystal to the PBS. ``hwp_offset`` is the wave-plate phase at
    each downconverted frequency, taken as broadband (the same at signal and
    idler).
    """

    L_A: float
    L_B: float
    Lp_A: float
    Lp_B: float
    hwp_offset: float = math.pi
    plate_offset: float = 0.0

    def __post_init__(self):
        for name in ("L_A", "L_B", "Lp_A", "Lp_B"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v > 0):
                raise InvalidArgumentError(f"{name} must be positive and finite, got {v}")


def output_phase(g: PathGeometry, k_p: float, k_s: float, k_i: float) -> float:
    """Relative phase of the |V1 H2> term, reduced to [0, 2 pi)."""
    if min(k_p, k_s, k_i) <= 0:
        raise InvalidArgumentError("wavevectors must be positive")
    phi = (
        k_p * (g.L_B - g.L_A)
        + (k_s + k_i) * (g.Lp_B - g.Lp_A)
        - 2 * g.hwp_offset
        + g.plate_offset
    )
    return wrap_phase(phi)


def pump_mz_phase(g: PathGeometry, k_p: float) -> float:
    """Phase difference of the pump between the two interferometer arms."""
    return wrap_phase(k_p * ((g.L_B - g.L_A) + (g.Lp_B - g.Lp_A)))


def state_offset(g: PathGeometry) -> float:
    """Fixed offset between the pump fringe phase and the output-state phase."""
    return wrap_phase(g.plate_offset - 2 * g.hwp_offset)


def pump_fringe_signal(phi_p, fringe_visibility: float, power: float, tap: float):
    """Photodiode signal tap * P/2 * (1 + v cos phi_p)."""
    return tap * power / 2 * (1 + fringe_visibility * np.cos(phi_p))


@dataclass(frozen=True)
class LockState:
    """Controller state for a proportional side lock on a falling fringe slope.

    ``slope`` is |dI/dphi| at the lock point in detector units per radian and
    ``k_pump`` converts actuator path length into pump phase.
    """

    actuator_position: float
    setpoint: float
    gain: float
    noise_rms: float
    phase_estimate: float
    slope: float
    k_pump: float
    lock_phase: float = math.pi / 2
    travel: tuple[float, float] = (-10e-6, 10e-6)
    saturated: bool = False
    t: float = 0.0

    def __post_init__(self):
        lo, hi = self.travel
        if not lo <= self.actuator_position <= hi:
            raise InvalidArgumentError("actuator position outside travel range")
        if self.slope <= 0 or self.k_pump <= 0:
            raise InvalidArgumentError("slope and k_pump must be positive")


def side_lock_step(s: LockState, measured_signal: float, dt: float) -> LockState:
    """One proportional update of the actuator from the fringe error."""
    if not dt > 0:
        raise InvalidArgumentError("dt must be positive")
    error = s.setpoint - measured_signal
    # falling slope: positive error means the phase sits past the lock point
    deviation = error / s.slope
    move = -s.gain * deviation / s.k_pump
    lo, hi = s.travel
    target = s.actuator_position + move
    clamped = min(max(target, lo), hi)
    return replace(
        s,
        actuator_position=clamped,
        phase_estimate=s.lock_phase + deviation,
        saturated=clamped != target,
        t=s.t + dt,
    )


@dataclass(frozen=True)
class NoiseModel:
    step_rms: float = 0.01  # rad per sample, Gaussian random walk
    drift_per_s: float = 0.0  # rad/s, deterministic


@dataclass(frozen=True)
class ControllerParams:
    gain: float = 0.3
    sample_rate_hz: float = 10_000.0
    fringe_visibility: float = 0.9
    pump_power_mw: float = 1.0
    tap: float = 0.2
    travel_m: float = 10e-6
    setpoint: float | None = None  # None: signal at the half-maximum point
    failure_threshold_rad: float = math.pi / 2
    failure_fraction: float = 0.1


@dataclass
class LockResult:
    t: np.ndarray
    phi_p: np.ndarray
    phi: np.ndarray
    signal: np.ndarray
    target_phi: float
    plate_offset: float
    actuator_start: float
    residual_rms: float
    lock_failure: bool
    saturated_steps: int

    def summary(self) -> dict:
        return {
            "target_phi_rad": self.target_phi,
            "plate_offset_rad": self.plate_offset,
            "actuator_start_m": self.actuator_start,
            "residual_rms_rad": self.residual_rms,
            "lock_failure": self.lock_failure,
            "saturated_steps": self.saturated_steps,
            "samples": int(self.t.size),
        }


def simulate_lock(
    g: PathGeometry,
    noise: NoiseModel,
    controller: ControllerParams,
    duration: float,
    seed: int,
    target_phi: float = math.pi,
    pump_wavelength_nm: float = 398.5,
) -> LockResult:
    """Run the discrete-time side lock and record the pump and state phases.

    The dispersive plate is set so that the state phase equals ``target_phi``
    when the pump fringe sits at its half-maximum point, and the actuator
    starts pre-positioned on that point. Phase noise is a Gaussian random
    walk added to the pump interferometer each sample.
    """
    if not duration > 0:
        raise InvalidArgumentError("duration must be positive")
    dt = 1.0 / controller.sample_rate_hz
    n = int(round(duration * controller.sample_rate_hz))
    k_p = TWO_PI / (pump_wavelength_nm * 1e-9)
    lock_phase = math.pi / 2
    v, P, tap = controller.fringe_visibility, controller.pump_power_mw, controller.tap

    plate = wrap_phase(target_phi - lock_phase + 2 * g.hwp_offset)
    g = replace(g, plate_offset=plate)
    x0 = wrap_phase(lock_phase - pump_mz_phase(g, k_p)) / k_p
    if x0 > controller.travel_m:
        x0 -= TWO_PI / k_p

    setpoint = controller.setpoint
    if setpoint is None:
        setpoint = float(pump_fringe_signal(lock_phase, v, P, tap))
    slope = tap * P / 2 * v * math.sin(lock_phase)
    state = LockState(
        actuator_position=x0,
        setpoint=setpoint,
        gain=controller.gain,
        noise_rms=noise.step_rms,
        phase_estimate=lock_phase,
        slope=slope,
        k_pump=k_p,
        travel=(-controller.travel_m, controller.travel_m),
    )

    rng = np.random.default_rng(seed)
    kicks = rng.normal(0.0, noise.step_rms, size=n) if noise.step_rms > 0 else np.zeros(n)
    kicks = kicks + noise.drift_per_s * dt

    dev = np.empty(n)
    signal = np.empty(n)
    walk = 0.0
    saturated = 0
    for i in range(n):
        # deviation of the pump phase from the lock point
        d = walk + k_p * (state.actuator_position - x0)
        dev[i] = d
        signal[i] = pump_fringe_signal(lock_phase + d, v, P, tap)
        state = side_lock_step(state, signal[i], dt)
        saturated += state.saturated
        walk += kicks[i]

    t = np.arange(n) * dt
    phi = wrap_phase(target_phi + dev)
    err = phase_difference(phi, target_phi)
    residual = float(np.sqrt(np.mean(err**2))) if n else 0.0
    failure = bool(n and np.mean(np.abs(err) > controller.failure_threshold_rad) > controller.failure_fraction)
    return LockResult(
        t=t,
        phi_p=wrap_phase(lock_phase + dev),
        phi=phi,
        signal=signal,
        target_phi=target_phi,
        plate_offset=plate,
        actuator_start=x0,
        residual_rms=residual,
        lock_failure=failure,
        saturated_steps=int(saturated),
    )


def write_lock_csv(result: LockResult, path: str | Path, header_comment: str | None = None) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        if header_comment:
            fh.write(f"# {header_comment}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t_s", "phi_p_rad", "phi_rad", "signal"])
        for row in zip(result.t, result.phi_p, result.phi, result.signal):
            w.writerow([f"{x:.10g}" for x in row])
