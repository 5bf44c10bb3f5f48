"""Acceptance checks, one test per stated criterion part, at the stated tolerances.

A per-criterion PASS/FAIL summary is printed at the end of the pytest run.
"""

import json
import math

import numpy as np
import pytest

from dualspdc import experiments as ex
from dualspdc.cli import main
from dualspdc.config import load_config
from dualspdc.detection import (
    CollectionGeometry,
    SourceRates,
    accidental_rate,
    expected_rates,
    simulate_counts,
)
from dualspdc.interferometer import PathGeometry, output_phase, phase_difference, simulate_lock
from dualspdc.phasematching import energy_conservation_error, solve_degenerate_temperature, tuning_curve
from dualspdc.state import (
    CANONICAL_CHSH_ANGLES,
    AnalyzerSetting,
    BiphotonState,
    apply_distinguishability,
    build_output_state,
    chsh_S,
    coincidence_probability,
    phase_averaged_state,
    singlet,
)

criterion = pytest.mark.criterion


def _fringe(theta1_deg, analytic_only=False):
    cfg = load_config(overrides={"fringe_scan": {"visibility": 0.85}})
    return ex.fringe_scan(cfg, theta1_deg=theta1_deg, analytic_only=analytic_only)


# 1. fringe visibilities


@criterion(1, "theta1=0: analytic fitted visibility 1.00 +/- 0.01")
def test_c1_zero_degree_analytic():
    assert abs(_fringe(0.0, analytic_only=True).scan.fit_analytic.visibility - 1.0) <= 0.01


@criterion(1, "theta1=0: MC fitted visibility within 3 sigma of 1.00 at >=1e5 pairs")
def test_c1_zero_degree_mc():
    scan = _fringe(0.0).scan
    assert scan.pairs_simulated >= 1e5
    assert abs(scan.fit_mc.visibility - 1.0) <= 3 * scan.fit_mc.visibility_err


@criterion(1, "theta1=45: analytic fitted visibility 0.85 +/- 0.01")
def test_c1_45_degree_analytic():
    assert abs(_fringe(45.0, analytic_only=True).scan.fit_analytic.visibility - 0.85) <= 0.01


# 2. Bell test


@criterion(2, "pure singlet analytic S = 2 sqrt 2 within 1e-9")
def test_c2_singlet_analytic():
    assert abs(chsh_S(singlet(), *CANONICAL_CHSH_ANGLES) - 2 * math.sqrt(2)) <= 1e-9


@criterion(2, "V=0.919 analytic S = 2.599 +/- 0.01")
def test_c2_v0919_analytic():
    S = chsh_S(apply_distinguishability(singlet(), 0.919), *CANONICAL_CHSH_ANGLES)
    assert abs(S - 2.599) <= 0.01, f"S = {S:.4f}"


@criterion(2, "V=0.919 MC (>=1e6 pairs, accidentals corrected) within 3 sigma of 2.599")
def test_c2_v0919_mc():
    res = ex.bell_test(load_config(), duration=1.0, visibility=0.919)
    assert res.pairs_simulated >= 1e6
    assert abs(res.S - 2.599) <= 3 * res.S_err, f"S = {res.S:.4f} +/- {res.S_err:.4f}"


# 3. accidentals


@criterion(3, "uncorrelated 67000/s streams over 100 s: accidentals within 4 sigma of R1 R2 tau")
def test_c3_accidentals():
    src = SourceRates(pair_rate_per_mw=0.0, dark1=67000.0, dark2=67000.0, window=39.4e-9)
    T = 100.0
    rec = simulate_counts(src, singlet(), AnalyzerSetting(0, 0), CollectionGeometry(), T, seed=20030401)
    expected = accidental_rate(67000, 67000, 39.4e-9)
    assert expected == pytest.approx(176.9, abs=0.05)
    assert abs(rec.raw_coincidences - expected * T) <= 4 * math.sqrt(expected * T)


# 4. tuning curve


@pytest.fixture(scope="module")
def tuning():
    cfg = load_config()
    return cfg, tuning_curve(cfg.crystal, cfg.sellmeier, (20.0, 50.0), 1.0)


@criterion(4, "degeneracy temperature 32.0 +/- 0.5 C")
def test_c4_degeneracy():
    cfg = load_config()
    assert abs(solve_degenerate_temperature(cfg.crystal, cfg.sellmeier) - 32.0) <= 0.5


@criterion(4, "20-50 C sweep spans >= 2 nm in lambda_s")
def test_c4_span(tuning):
    _, pts = tuning
    ls = [p.lambda_s for p in pts]
    assert max(ls) - min(ls) >= 2.0


@criterion(4, "energy conservation 1e-9 relative and |dk| L < 1e-4 on every point")
def test_c4_points(tuning):
    cfg, pts = tuning
    for p in pts:
        assert p.converged
        assert energy_conservation_error(cfg.crystal.pump_wavelength_nm, p) < 1e-9
        assert abs(p.residual_mismatch) * cfg.crystal.length_m < 1e-4


# 5. phase invariance


@criterion(5, "output phase invariant under signal/idler split, 1000 random geometries, 1e-12")
def test_c5_phase_invariance():
    rng = np.random.default_rng(5)
    k_p = 2 * math.pi / 398.5e-9
    for _ in range(1000):
        la, lb, lpa, lpb = rng.uniform(0.05, 1.0, size=4)
        hwp, plate = rng.uniform(0, 2 * math.pi, size=2)
        g = PathGeometry(la, lb, lpa, lpb, hwp_offset=hwp, plate_offset=plate)
        ref = output_phase(g, k_p, k_p / 2, k_p / 2)
        ks = rng.uniform(0.05, 0.95) * k_p
        assert abs(phase_difference(output_phase(g, k_p, ks, k_p - ks), ref)) <= 1e-12


# 6. singlet/triplet switching

V6 = 0.9
S45 = AnalyzerSetting(math.pi / 4, math.pi / 4)


@criterion(6, "analytic: target 0 gives the maximum P(45,45), target pi gives (1-V)/4")
def test_c6_analytic():
    p_trip = coincidence_probability(apply_distinguishability(build_output_state(0.0), V6), S45)
    p_sing = coincidence_probability(apply_distinguishability(build_output_state(math.pi), V6), S45)
    grid = [coincidence_probability(apply_distinguishability(build_output_state(x), V6), S45) for x in np.linspace(0, 2 * math.pi, 721)]
    assert abs(p_sing - (1 - V6) / 4) <= 1e-12
    assert abs(p_trip - max(grid)) <= 1e-12
    assert abs(p_trip - (V6 / 2 + (1 - V6) / 4)) <= 1e-12


@criterion(6, "end to end: simulate_lock then simulate_counts matches within 3 sigma")
def test_c6_end_to_end():
    cfg = load_config()
    src = SourceRates(pump_power_mw=0.5)
    geom = cfg.collection
    T = 2.0
    counts = {}
    for target, ideal in ((0.0, V6 / 2 + (1 - V6) / 4), (math.pi, (1 - V6) / 4)):
        lock = simulate_lock(cfg.lock_geometry, cfg.lock_noise, cfg.lock_controller, 0.2, seed=7, target_phi=target)
        assert not lock.lock_failure
        state = phase_averaged_state(lock.phi, V6)
        rec = simulate_counts(src, state, S45, geom, T, seed=8)
        ideal_rate = expected_rates(src, apply_distinguishability(build_output_state(target), V6), S45, geom).Rc
        assert ideal_rate == pytest.approx(src.pair_rate_per_mw * 0.5 * src.eta1 * src.eta2 * ideal)
        assert abs(rec.corrected_coincidences - ideal_rate * T) <= 3 * math.sqrt(max(rec.raw_coincidences, 1))
        counts[target] = rec.corrected_coincidences
    assert counts[0.0] > 5 * counts[math.pi]


# 7. property suites


@criterion(7, "density-matrix invariants and quadruple normalization on random states")
def test_c7_state_properties():
    rng = np.random.default_rng(77)
    h = math.pi / 2
    for _ in range(200):
        A = rng.normal(size=(4, 4)) + 1j * rng.normal(size=(4, 4))
        rho = A @ A.conj().T
        state = BiphotonState(rho / np.trace(rho).real)
        assert np.max(np.abs(state.rho - state.rho.conj().T)) < 1e-12
        assert abs(np.trace(state.rho) - 1) < 1e-12
        assert state.eigenvalues().min() >= -1e-10
        t1, t2 = rng.uniform(-math.pi, math.pi, size=2)
        total = sum(coincidence_probability(state, AnalyzerSetting(t1 + x, t2 + y)) for x in (0, h) for y in (0, h))
        assert abs(total - 1) < 1e-10


@criterion(7, "MC vs analytic within 4 sigma (singles and coincidences, >=1e6 pairs)")
def test_c7_mc_vs_analytic():
    state = apply_distinguishability(singlet(), 0.9)
    src, geom, T = SourceRates(), CollectionGeometry(), 1.5
    s = AnalyzerSetting(math.pi / 4, 3 * math.pi / 4)
    r = expected_rates(src, state, s, geom)
    raw = r.Rc + (r.R1 - r.Rc) * (r.R2 - r.Rc) * src.window
    rec = simulate_counts(src, state, s, geom, T, seed=99)
    assert abs(rec.singles1 - r.R1 * T) < 4 * math.sqrt(r.R1 * T)
    assert abs(rec.singles2 - r.R2 * T) < 4 * math.sqrt(r.R2 * T)
    assert abs(rec.raw_coincidences - raw * T) < 4 * math.sqrt(raw * T)


@criterion(7, "every CLI command byte-deterministic under a fixed seed")
def test_c7_cli_determinism(tmp_path, capsys):
    cfg = tmp_path / "fast.json"
    cfg.write_text(
        json.dumps(
            {
                "fringe_scan": {"duration_s": 0.1},
                "iris_sweep": {"diameters_mm": [2.0, 4.0], "duration_s": 0.05},
                "tuning_sweep": {"T_step_C": 15.0, "duration_s": 0.05},
                "bell_test": {"duration_s": 0.05},
                "lock": {"duration_s": 0.05},
            }
        )
    )
    for command in ("fringe-scan", "iris-sweep", "tuning-sweep", "bell-test", "lock-sim"):
        outs = []
        for run in ("a", "b"):
            out = tmp_path / command / run
            assert main([command, "--config", str(cfg), "--out", str(out), "--seed", "11"]) == 0
            outs.append({p.name: p.read_bytes() for p in sorted(out.iterdir())})
        assert outs[0] and outs[0] == outs[1], command
    capsys.readouterr()
