"""Two-photon polarization states and analyzer statistics.

All vectors and density matrices use the fixed two-port basis ordering

    index 0: H1 H2
    index 1: H1 V2
    index 2: V1 H2
    index 3: V1 V2

where 1 and 2 label the two output ports of the polarizing beam splitter.
Single-photon polarization vectors are ordered (H, V), so the two-port
operators are plain Kronecker products ``np.kron(op_port1, op_port2)``.

Analyzers are ideal linear polarizers described only by the angle of their
transmission axis measured from horizontal. Angles are radians throughout
this module; conversion from degrees happens at the CLI boundary.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable

import numpy as np

from .errors import InvalidArgumentError, UndefinedCorrelationError, UndefinedVisibilityError

HH, HV, VH, VV = 0, 1, 2, 3

NORM_TOL = 1e-12
HERMITIAN_TOL = 1e-12
TRACE_TOL = 1e-12
PSD_TOL = 1e-10

CANONICAL_CHSH_ANGLES = (0.0, math.pi / 4, math.pi / 8, 3 * math.pi / 8)


def _require_finite(name: str, value: float) -> float:
    value = float(value)
    if not math.isfinite(value):
        raise InvalidArgumentError(f"{name} must be finite, got {value!r}")
    return value


@dataclass(frozen=True, eq=False)
class PolarizationKet:
    """Pure two-photon polarization state over (H1H2, H1V2, V1H2, V1V2)."""

    amplitudes: np.ndarray

    def __post_init__(self):
        amps = np.asarray(self.amplitudes, dtype=complex).reshape(-1)
        if amps.shape != (4,):
            raise InvalidArgumentError(f"expected 4 amplitudes, got shape {amps.shape}")
        norm2 = float(np.vdot(amps, amps).real)
        if abs(norm2 - 1.0) > NORM_TOL:
            raise InvalidArgumentError(f"ket not normalized: |psi|^2 = {norm2!r}")
        amps.setflags(write=False)
        object.__setattr__(self, "amplitudes", amps)

    def projector(self) -> np.ndarray:
        return np.outer(self.amplitudes, self.amplitudes.conj())

    def with_global_phase(self, alpha: float) -> "PolarizationKet":
        return PolarizationKet(self.amplitudes * np.exp(1j * alpha))


@dataclass(frozen=True, eq=False)
class DualPathKet:
    """Pair amplitude shared between crystal arms A and B, basis (H_A V_A, H_B V_B).

    Signal and idler frequencies are not part of the vector; the signal is
    always the H photon and the idler the V photon.
    """

    amplitudes: np.ndarray
    pump_phase: float

    def __post_init__(self):
        amps = np.asarray(self.amplitudes, dtype=complex).reshape(-1)
        if amps.shape != (2,):
            raise InvalidArgumentError(f"expected 2 amplitudes, got shape {amps.shape}")
        norm2 = float(np.vdot(amps, amps).real)
        if abs(norm2 - 1.0) > NORM_TOL:
            raise InvalidArgumentError(f"ket not normalized: |psi|^2 = {norm2!r}")
        amps.setflags(write=False)
        object.__setattr__(self, "amplitudes", amps)


@dataclass(frozen=True, eq=False)
class BiphotonState:
    """Density matrix over the two-port polarization basis.

    Construction validates Hermiticity, unit trace and positivity.
    """

    rho: np.ndarray

    def __post_init__(self):
        rho = np.array(self.rho, dtype=complex)
        if rho.shape != (4, 4):
            raise InvalidArgumentError(f"density matrix must be 4x4, got {rho.shape}")
        if not np.all(np.isfinite(rho)):
            raise InvalidArgumentError("density matrix has non-finite entries")
        if np.max(np.abs(rho - rho.conj().T)) > HERMITIAN_TOL:
            raise InvalidArgumentError("density matrix is not Hermitian")
        tr = np.trace(rho)
        if abs(tr - 1.0) > TRACE_TOL:
            raise InvalidArgumentError(f"density matrix trace is {tr!r}, expected 1")
        evals = np.linalg.eigvalsh(rho)
        if evals.min() < -PSD_TOL:
            raise InvalidArgumentError(f"density matrix has negative eigenvalue {evals.min():.3e}")
        rho.setflags(write=False)
        object.__setattr__(self, "rho", rho)

    @classmethod
    def pure(cls, ket: PolarizationKet) -> "BiphotonState":
        return cls(ket.projector())

    def eigenvalues(self) -> np.ndarray:
        return np.linalg.eigvalsh(self.rho)


@dataclass(frozen=True)
class AnalyzerSetting:
    """Transmission-axis angles of the two analyzers, stored modulo pi."""

    theta1: float
    theta2: float

    def __post_init__(self):
        t1 = _require_finite("theta1", self.theta1) % math.pi
        t2 = _require_finite("theta2", self.theta2) % math.pi
        object.__setattr__(self, "theta1", t1)
        object.__setattr__(self, "theta2", t2)

    @classmethod
    def from_degrees(cls, theta1_deg: float, theta2_deg: float) -> "AnalyzerSetting":
        return cls(math.radians(theta1_deg), math.radians(theta2_deg))


def build_dual_path_state(phi_p: float) -> DualPathKet:
    """Equal superposition of a pair born in arm A or in arm B with pump phase ``phi_p``."""
    phi_p = _require_finite("phi_p", phi_p)
    s = 1 / math.sqrt(2)
    return DualPathKet(np.array([s, s * np.exp(1j * phi_p)]), phi_p)


def build_output_state(phi: float) -> PolarizationKet:
    """State after the PBS: (|H1 V2> + e^{i phi} |V1 H2>)/sqrt(2).

    ``phi = 0`` gives the triplet, ``phi = pi`` the singlet.
    """
    phi = _require_finite("phi", phi)
    s = 1 / math.sqrt(2)
    amps = np.zeros(4, dtype=complex)
    amps[HV] = s
    amps[VH] = s * np.exp(1j * phi)
    return PolarizationKet(amps)


def dual_path_to_output(ket: DualPathKet, output_phase_extra: float = 0.0) -> PolarizationKet:
    """Route the two crystal arms onto the PBS ports.

    Arm A keeps H_s V_i and exits as |H1 V2>; the half-wave plate in arm B
    turns its pair into |V1 H2>. ``output_phase_extra`` is the signal+idler
    path phase accumulated after the crystals, added to the pump phase.
    """
    amps = np.zeros(4, dtype=complex)
    amps[HV] = ket.amplitudes[0]
    amps[VH] = ket.amplitudes[1] * np.exp(1j * _require_finite("output_phase_extra", output_phase_extra))
    return PolarizationKet(amps)


def singlet() -> PolarizationKet:
    return build_output_state(math.pi)


def triplet() -> PolarizationKet:
    return build_output_state(0.0)


def _dephased_hv_vh() -> np.ndarray:
    rho = np.zeros((4, 4), dtype=complex)
    rho[HV, HV] = rho[VH, VH] = 0.5
    return rho


def apply_distinguishability(ket: PolarizationKet, V: float) -> BiphotonState:
    """Mix ``ket`` with the fully dephased HV/VH state.

    rho = V |ket><ket| + (1 - V) (|H1V2><H1V2| + |V1H2><V1H2|) / 2

    Only the coherence between the two pair terms is lost, so HV-basis
    fringes keep unit visibility while diagonal-basis fringes drop to V.
    """
    V = _require_finite("V", V)
    if not 0.0 <= V <= 1.0:
        raise InvalidArgumentError(f"V must lie in [0, 1], got {V}")
    if V == 1.0:
        return BiphotonState.pure(ket)
    return BiphotonState(V * ket.projector() + (1.0 - V) * _dephased_hv_vh())


def phase_averaged_state(phases: Iterable[float], V: float) -> BiphotonState:
    """Ensemble average of ``apply_distinguishability(build_output_state(phi), V)`` over ``phases``.

    Used to carry residual lock jitter into the detected statistics.
    """
    V = _require_finite("V", V)
    if not 0.0 <= V <= 1.0:
        raise InvalidArgumentError(f"V must lie in [0, 1], got {V}")
    phases = np.asarray(list(phases), dtype=float)
    if phases.size == 0:
        raise InvalidArgumentError("need at least one phase sample")
    coherence = np.mean(np.exp(1j * phases))
    rho = _dephased_hv_vh()
    rho[HV, VH] = 0.5 * V * np.conj(coherence)
    rho[VH, HV] = 0.5 * V * coherence
    return BiphotonState(rho)


def polarizer_projector(theta: float) -> np.ndarray:
    """Projector onto linear polarization at ``theta`` from horizontal, (H, V) basis."""
    c, s = math.cos(theta), math.sin(theta)
    return np.array([[c * c, c * s], [c * s, s * s]], dtype=complex)


def _state_rho(state: BiphotonState | PolarizationKet) -> np.ndarray:
    if isinstance(state, PolarizationKet):
        return state.projector()
    return state.rho


def coincidence_probability(state: BiphotonState | PolarizationKet, s: AnalyzerSetting) -> float:
    """Probability that both photons pass their analyzers, Tr[rho (P(t1) x P(t2))]."""
    op = np.kron(polarizer_projector(s.theta1), polarizer_projector(s.theta2))
    return float(np.trace(_state_rho(state) @ op).real)


def singles_probability(state: BiphotonState | PolarizationKet, theta: float, port: int) -> float:
    """Probability that the photon at ``port`` (1 or 2) passes an analyzer at ``theta``."""
    proj = polarizer_projector(theta)
    eye = np.eye(2)
    if port == 1:
        op = np.kron(proj, eye)
    elif port == 2:
        op = np.kron(eye, proj)
    else:
        raise InvalidArgumentError(f"port must be 1 or 2, got {port}")
    return float(np.trace(_state_rho(state) @ op).real)


def _conditional_port2(state: BiphotonState | PolarizationKet, theta1: float) -> np.ndarray:
    """Unnormalized port-2 operator M with P(theta1, theta2) = v(theta2)^T M v(theta2)."""
    rho = _state_rho(state).reshape(2, 2, 2, 2)
    p1 = polarizer_projector(theta1)
    # Tr_1[rho (P1 x I)]
    return np.einsum("iajb,ji->ab", rho, p1)


def fringe_parameters(state: BiphotonState | PolarizationKet, theta1: float) -> tuple[float, float, float]:
    """Return (mean, cos-amplitude, sin-amplitude) of P(theta1, theta2) in 2*theta2.

    P(theta2) = mean + a_cos cos(2 theta2) + a_sin sin(2 theta2).
    """
    m = _conditional_port2(state, theta1)
    mean = 0.5 * (m[0, 0] + m[1, 1]).real
    a_cos = 0.5 * (m[0, 0] - m[1, 1]).real
    a_sin = m[0, 1].real
    return float(mean), float(a_cos), float(a_sin)


def fringe_visibility(state: BiphotonState | PolarizationKet, theta1: float) -> float:
    """Coincidence fringe visibility over theta2 at fixed ``theta1``, in closed form."""
    mean, a_cos, a_sin = fringe_parameters(state, _require_finite("theta1", theta1))
    if mean <= 0.0:
        raise UndefinedVisibilityError(f"no coincidences at theta1={theta1}: P_max + P_min = 0")
    return min(1.0, math.hypot(a_cos, a_sin) / mean)


def correlation_E(state: BiphotonState | PolarizationKet, a: float, b: float) -> float:
    """Normalized polarization correlation for analyzer angles ``a`` (port 1) and ``b`` (port 2)."""
    a = _require_finite("a", a)
    b = _require_finite("b", b)
    ap, bp = a + math.pi / 2, b + math.pi / 2
    pp = coincidence_probability(state, AnalyzerSetting(a, b))
    mm = coincidence_probability(state, AnalyzerSetting(ap, bp))
    pm = coincidence_probability(state, AnalyzerSetting(a, bp))
    mp = coincidence_probability(state, AnalyzerSetting(ap, b))
    total = pp + mm + pm + mp
    if total <= 0.0:
        raise UndefinedCorrelationError(f"all four probabilities vanish at a={a}, b={b}")
    return (pp + mm - pm - mp) / total


def chsh_S(state: BiphotonState | PolarizationKet, a: float, a_prime: float, b: float, b_prime: float) -> float:
    """S = |E(a,b) - E(a,b')| + |E(a',b) + E(a',b')|."""
    return abs(correlation_E(state, a, b) - correlation_E(state, a, b_prime)) + abs(
        correlation_E(state, a_prime, b) + correlation_E(state, a_prime, b_prime)
    )
